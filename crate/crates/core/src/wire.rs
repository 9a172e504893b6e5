//! JSON message schemas shared by the provider, cache server and client.
//!
//! Tags travel as lowercase hex; keys and ciphertexts as unpadded base64url.
//! Field order in each struct is the canonical encoding order. Unknown fields
//! are ignored on decode.

use std::fmt;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::crypto::{Ciphertext, ContentKey, Tag};
use crate::error::{Error, Result};

pub const PATH_KEYS: &str = "/v1/keys";
pub const PATH_CONTENT_REQUEST: &str = "/v1/content-request";
pub const PATH_CACHE_REQUEST: &str = "/v1/cache-request";
pub const PATH_ADVANCE: &str = "/v1/admin/advance";
pub const PATH_CONTENT: &str = "/v1/content";
pub const PATH_STATS: &str = "/v1/stats";
pub const PATH_RESET_STATS: &str = "/v1/admin/reset-stats";

pub fn b64_encode(bytes: &[u8]) -> String {
    URL_SAFE_NO_PAD.encode(bytes)
}

pub fn b64_decode(s: &str) -> Result<Vec<u8>> {
    URL_SAFE_NO_PAD
        .decode(s)
        .map_err(|e| Error::Validation(format!("base64url: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    NotFound,
    NoEntry,
    /// Never sent by a server; the client aborts before any request.
    Revoked,
    StalePeriod,
    UpstreamError,
    Validation,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::NotFound => "NOT_FOUND",
            ErrorCode::NoEntry => "NO_ENTRY",
            ErrorCode::Revoked => "REVOKED",
            ErrorCode::StalePeriod => "STALE_PERIOD",
            ErrorCode::UpstreamError => "UPSTREAM_ERROR",
            ErrorCode::Validation => "VALIDATION",
        }
    }

    pub fn http_status(self) -> u16 {
        match self {
            ErrorCode::NotFound | ErrorCode::NoEntry => 404,
            ErrorCode::Validation | ErrorCode::Revoked => 400,
            ErrorCode::StalePeriod => 409,
            ErrorCode::UpstreamError => 502,
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Error body: `{"error": "<CODE>", "message": "..."}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireError {
    #[serde(rename = "error")]
    pub code: ErrorCode,
    #[serde(default)]
    pub message: String,
}

impl WireError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Validation, message)
    }
}

impl fmt::Display for WireError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for WireError {}

/// Post-parse range checks for a decoded message.
pub trait Validate {
    fn validate(&self) -> Result<(), WireError> {
        Ok(())
    }
}

fn check_node(node: u64) -> Result<(), WireError> {
    if node == 0 {
        return Err(WireError::validation("node ids start at 1"));
    }
    Ok(())
}

fn check_period(t: u64) -> Result<(), WireError> {
    if t == 0 {
        return Err(WireError::validation("time periods start at 1"));
    }
    Ok(())
}

/// `POST /v1/keys` body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeysRequest {
    pub user_id: String,
    pub t: u64,
}

impl Validate for KeysRequest {
    fn validate(&self) -> Result<(), WireError> {
        check_period(self.t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyEntry {
    pub node: u64,
    #[serde(with = "b64_key")]
    pub key: ContentKey,
}

/// Path keys for one access period, leaf first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeysReply {
    pub m: u32,
    pub t: u64,
    pub keys: Vec<KeyEntry>,
}

impl Validate for KeysReply {
    fn validate(&self) -> Result<(), WireError> {
        check_period(self.t)?;
        self.keys.iter().try_for_each(|e| check_node(e.node))
    }
}

/// `POST /v1/content-request` body. Deliberately carries no user identity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentRequest {
    pub c_name: String,
    pub node: u64,
}

impl Validate for ContentRequest {
    fn validate(&self) -> Result<(), WireError> {
        check_node(self.node)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagReply {
    pub tag: Tag,
}

impl Validate for TagReply {}

/// Tag-only request, used both client→cache (`/v1/content`) and
/// cache→provider (`/v1/cache-request`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagRequest {
    pub tag: Tag,
}

impl Validate for TagRequest {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CiphertextReply {
    #[serde(with = "b64_ct")]
    pub ciphertext: Ciphertext,
}

impl Validate for CiphertextReply {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentReply {
    #[serde(with = "b64_ct")]
    pub ciphertext: Ciphertext,
    pub hit: bool,
}

impl Validate for ContentReply {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReply {
    pub hits: u64,
    pub misses: u64,
    pub hit_ratio: f64,
    pub upstream_bytes: u64,
}

impl Validate for StatsReply {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdvanceRequest {
    pub t: u64,
}

impl Validate for AdvanceRequest {
    fn validate(&self) -> Result<(), WireError> {
        check_period(self.t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdvanceReply {
    pub t_curr: u64,
}

impl Validate for AdvanceReply {
    fn validate(&self) -> Result<(), WireError> {
        check_period(self.t_curr)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Empty {}

impl Validate for Empty {}

/// Compact canonical JSON.
pub fn encode<T: Serialize>(msg: &T) -> Vec<u8> {
    serde_json::to_vec(msg).expect("wire messages always serialize")
}

pub fn decode<T: DeserializeOwned + Validate>(bytes: &[u8]) -> Result<T, WireError> {
    let msg: T = serde_json::from_slice(bytes).map_err(|e| WireError::validation(e.to_string()))?;
    msg.validate()?;
    Ok(msg)
}

mod b64_key {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::crypto::ContentKey;

    pub fn serialize<S: Serializer>(k: &ContentKey, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::b64_encode(k.as_bytes()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ContentKey, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = super::b64_decode(&s).map_err(serde::de::Error::custom)?;
        ContentKey::from_slice(&bytes).map_err(serde::de::Error::custom)
    }
}

mod b64_ct {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::crypto::Ciphertext;

    pub fn serialize<S: Serializer>(c: &Ciphertext, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::b64_encode(c.as_bytes()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Ciphertext, D::Error> {
        let s = String::deserialize(d)?;
        super::b64_decode(&s)
            .map(Ciphertext::from_vec)
            .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_tag_is_validation() {
        let body = format!(r#"{{"tag":"{}"}}"#, "ab".repeat(31));
        let err = decode::<TagRequest>(body.as_bytes()).unwrap_err();
        assert_eq!(err.code, ErrorCode::Validation);
    }

    #[test]
    fn node_zero_is_validation() {
        let err = decode::<ContentRequest>(br#"{"c_name":"a","node":0}"#).unwrap_err();
        assert_eq!(err.code, ErrorCode::Validation);
    }

    #[test]
    fn wrong_types_are_validation() {
        let err = decode::<ContentRequest>(br#"{"c_name":"a","node":"1"}"#).unwrap_err();
        assert_eq!(err.code, ErrorCode::Validation);
        let err = decode::<ContentRequest>(b"not json").unwrap_err();
        assert_eq!(err.code, ErrorCode::Validation);
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let msg: ContentRequest = decode(br#"{"c_name":"a","node":3,"future":true}"#).unwrap();
        assert_eq!(msg.node, 3);
    }

    #[test]
    fn uppercase_hex_tag_decodes_but_encodes_lowercase() {
        let upper = "AB".repeat(32);
        let msg: TagRequest = decode(format!(r#"{{"tag":"{upper}"}}"#).as_bytes()).unwrap();
        assert_eq!(encode(&msg), format!(r#"{{"tag":"{}"}}"#, "ab".repeat(32)).into_bytes());
    }

    #[test]
    fn error_body_shape() {
        let e = WireError::new(ErrorCode::NoEntry, "node 1 not in cover");
        assert_eq!(
            String::from_utf8(encode(&e)).unwrap(),
            r#"{"error":"NO_ENTRY","message":"node 1 not in cover"}"#
        );
        let bare: WireError = decode_error(br#"{"error":"NOT_FOUND"}"#).unwrap();
        assert_eq!(bare.code, ErrorCode::NotFound);
    }

    fn decode_error(b: &[u8]) -> serde_json::Result<WireError> {
        serde_json::from_slice(b)
    }
}
