//! Node keys, content tags and AES-256-GCM content encryption.
//!
//! A tag is `HMAC-SHA256(k_hmac, content || node)` with the node id encoded
//! as 8 big-endian bytes. The leading bytes of the tag double as the GCM
//! nonce, so neither side ever transmits a nonce.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use aes_gcm::aead::generic_array::typenum::{U12, U16};
use aes_gcm::aead::generic_array::GenericArray;
use aes_gcm::aead::{Aead, KeyInit};
use aes_gcm::aes::Aes256;
use aes_gcm::AesGcm;
use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::error::{Error, Result};
use crate::tree::{NodeId, TreeParams};
use crate::wire::{b64_decode, b64_encode};

pub const KEY_LEN: usize = 32;
pub const TAG_LEN: usize = 32;
/// Bytes the AEAD appends to every ciphertext.
pub const AEAD_OVERHEAD: usize = 16;

type Aes256Gcm128 = AesGcm<Aes256, U16>;
type Aes256Gcm96 = AesGcm<Aes256, U12>;

/// Symmetric key attached to one tree node.
#[derive(Clone, PartialEq, Eq)]
pub struct ContentKey([u8; KEY_LEN]);

impl ContentKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        Self(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let arr: [u8; KEY_LEN] = bytes.try_into().map_err(|_| {
            Error::Validation(format!("content key must be {KEY_LEN} bytes, got {}", bytes.len()))
        })?;
        Ok(Self(arr))
    }

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut k = [0u8; KEY_LEN];
        rng.fill_bytes(&mut k);
        Self(k)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for ContentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ContentKey(..)")
    }
}

/// Provider-held HMAC key used for tag derivation.
#[derive(Clone, PartialEq, Eq)]
pub struct MacKey([u8; KEY_LEN]);

impl MacKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        Self(bytes)
    }

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut k = [0u8; KEY_LEN];
        rng.fill_bytes(&mut k);
        Self(k)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for MacKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MacKey(..)")
    }
}

/// Content address: 32 pseudorandom bytes, rendered as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag([u8; TAG_LEN]);

impl Tag {
    pub fn from_bytes(bytes: [u8; TAG_LEN]) -> Self {
        Self(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let arr: [u8; TAG_LEN] = bytes.try_into().map_err(|_| {
            Error::Validation(format!("tag must be {TAG_LEN} bytes, got {}", bytes.len()))
        })?;
        Ok(Self(arr))
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s).map_err(|e| Error::Validation(format!("tag hex: {e}")))?;
        Self::from_slice(&bytes)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn as_bytes(&self) -> &[u8; TAG_LEN] {
        &self.0
    }

    pub fn nonce(&self, mode: NonceMode) -> &[u8] {
        &self.0[..mode.bytes()]
    }
}

impl fmt::Debug for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tag({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Tag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Tag::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// AEAD output: encrypted content followed by the 16-byte GCM tag.
///
/// Backed by an `Arc` so the cache and provider can hand out copies freely.
#[derive(Clone, PartialEq, Eq)]
pub struct Ciphertext(Arc<[u8]>);

impl Ciphertext {
    pub fn from_vec(bytes: Vec<u8>) -> Self {
        Self(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ciphertext({} bytes)", self.0.len())
    }
}

/// How many leading tag bytes form the GCM nonce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum NonceMode {
    /// Upper-order 128 bits of the tag, processed through GHASH by GCM.
    #[default]
    Bits128,
    /// First 96 bits, for backends limited to the standard nonce size.
    Bits96,
}

impl NonceMode {
    /// Nonce length in bytes.
    pub fn bytes(self) -> usize {
        match self {
            NonceMode::Bits128 => 16,
            NonceMode::Bits96 => 12,
        }
    }

    pub fn bits(self) -> u32 {
        self.bytes() as u32 * 8
    }
}

impl TryFrom<u32> for NonceMode {
    type Error = Error;

    fn try_from(bits: u32) -> Result<Self> {
        match bits {
            128 => Ok(NonceMode::Bits128),
            96 => Ok(NonceMode::Bits96),
            other => Err(Error::Validation(format!("nonce_bits must be 96 or 128, got {other}"))),
        }
    }
}

impl From<NonceMode> for u32 {
    fn from(m: NonceMode) -> u32 {
        m.bits()
    }
}

/// Authenticated cipher used for content. Swappable so other suites can
/// stand in for AES-256-GCM.
pub trait ContentCipher: Send + Sync {
    fn seal(&self, key: &ContentKey, tag: &Tag, plaintext: &[u8]) -> Ciphertext;
    fn open(&self, key: &ContentKey, tag: &Tag, ct: &Ciphertext) -> Result<Vec<u8>>;
    fn overhead(&self) -> usize;
}

/// AES-256-GCM with the nonce taken from the tag.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AesGcmCipher {
    pub nonce_mode: NonceMode,
}

impl AesGcmCipher {
    pub fn new(nonce_mode: NonceMode) -> Self {
        Self { nonce_mode }
    }
}

impl ContentCipher for AesGcmCipher {
    fn seal(&self, key: &ContentKey, tag: &Tag, plaintext: &[u8]) -> Ciphertext {
        let nonce = tag.nonce(self.nonce_mode);
        let out = match self.nonce_mode {
            NonceMode::Bits128 => Aes256Gcm128::new(GenericArray::from_slice(key.as_bytes()))
                .encrypt(GenericArray::from_slice(nonce), plaintext),
            NonceMode::Bits96 => Aes256Gcm96::new(GenericArray::from_slice(key.as_bytes()))
                .encrypt(GenericArray::from_slice(nonce), plaintext),
        };
        // Only fails for plaintexts beyond GCM's 64 GiB limit.
        Ciphertext::from_vec(out.expect("AES-GCM plaintext length limit exceeded"))
    }

    fn open(&self, key: &ContentKey, tag: &Tag, ct: &Ciphertext) -> Result<Vec<u8>> {
        let nonce = tag.nonce(self.nonce_mode);
        let out = match self.nonce_mode {
            NonceMode::Bits128 => Aes256Gcm128::new(GenericArray::from_slice(key.as_bytes()))
                .decrypt(GenericArray::from_slice(nonce), ct.as_bytes()),
            NonceMode::Bits96 => Aes256Gcm96::new(GenericArray::from_slice(key.as_bytes()))
                .decrypt(GenericArray::from_slice(nonce), ct.as_bytes()),
        };
        out.map_err(|_| Error::Decrypt)
    }

    fn overhead(&self) -> usize {
        AEAD_OVERHEAD
    }
}

/// One independent random key per tree node.
#[derive(Clone, PartialEq, Eq)]
pub struct NodeKeySet {
    params: TreeParams,
    keys: Vec<ContentKey>,
}

impl fmt::Debug for NodeKeySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NodeKeySet")
            .field("m", &self.params.m())
            .field("keys", &self.keys.len())
            .finish()
    }
}

impl NodeKeySet {
    pub fn params(&self) -> TreeParams {
        self.params
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn get(&self, node: NodeId) -> Option<&ContentKey> {
        let idx = usize::try_from(node.get()).ok()?.checked_sub(1)?;
        self.keys.get(idx)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &ContentKey)> {
        self.params.nodes().zip(self.keys.iter())
    }

    pub fn to_file(&self) -> KeyFile {
        KeyFile {
            m: self.params.m(),
            keys: self
                .iter()
                .map(|(n, k)| (n.get(), b64_encode(k.as_bytes())))
                .collect(),
        }
    }

    pub fn from_file(file: &KeyFile) -> Result<Self> {
        let params = TreeParams::new(file.m)?;
        if file.keys.len() as u64 != params.node_count() {
            return Err(Error::Validation(format!(
                "key file for m={} must hold {} keys, found {}",
                file.m,
                params.node_count(),
                file.keys.len()
            )));
        }
        let mut keys = Vec::with_capacity(file.keys.len());
        for node in params.nodes() {
            let encoded = file.keys.get(&node.get()).ok_or_else(|| {
                Error::Validation(format!("key file is missing node {node}"))
            })?;
            keys.push(ContentKey::from_slice(&b64_decode(encoded)?)?);
        }
        Ok(Self { params, keys })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: KeyFile = serde_json::from_slice(&std::fs::read(path)?)?;
        Self::from_file(&file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(&self.to_file())?)?;
        Ok(())
    }
}

/// On-disk form of a [`NodeKeySet`]: `{"m": int, "keys": {"<node>": b64}}`.
///
/// Keys are written in numeric node order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyFile {
    pub m: u32,
    #[serde(with = "node_map")]
    pub keys: BTreeMap<u64, String>,
}

mod node_map {
    use std::collections::BTreeMap;

    use serde::de::Error as _;
    use serde::ser::SerializeMap;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<u64, String>, s: S) -> Result<S::Ok, S::Error> {
        let mut out = s.serialize_map(Some(map.len()))?;
        for (k, v) in map {
            out.serialize_entry(&k.to_string(), v)?;
        }
        out.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<u64, String>, D::Error> {
        let raw = BTreeMap::<String, String>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| {
                k.parse::<u64>()
                    .map(|n| (n, v))
                    .map_err(|_| D::Error::custom(format!("node id {k:?} is not an integer")))
            })
            .collect()
    }
}

/// On-disk form of the provider's MAC key: `{"mac_key": b64}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacKeyFile {
    pub mac_key: String,
}

impl MacKey {
    pub fn to_file(&self) -> MacKeyFile {
        MacKeyFile {
            mac_key: b64_encode(&self.0),
        }
    }

    pub fn from_file(file: &MacKeyFile) -> Result<Self> {
        let bytes = b64_decode(&file.mac_key)?;
        let arr: [u8; KEY_LEN] = bytes.as_slice().try_into().map_err(|_| {
            Error::Validation(format!("MAC key must be {KEY_LEN} bytes, got {}", bytes.len()))
        })?;
        Ok(Self(arr))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(&serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(&self.to_file())?)?;
        Ok(())
    }
}

/// Draws a fresh key for every node `1..=2^(m+1)-1`.
pub fn keygen<R: RngCore + CryptoRng>(params: TreeParams, rng: &mut R) -> NodeKeySet {
    let keys = params.nodes().map(|_| ContentKey::random(rng)).collect();
    NodeKeySet { params, keys }
}

/// `HMAC-SHA256(mac_key, content || be64(node))`.
pub fn derive_tag(mac_key: &MacKey, content: &[u8], node: NodeId) -> Result<Tag> {
    if content.is_empty() {
        return Err(Error::Validation("cannot tag empty content".into()));
    }
    let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(mac_key.as_bytes())
        .expect("HMAC accepts any key length");
    mac.update(content);
    mac.update(&node.get().to_be_bytes());
    Ok(Tag(mac.finalize().into_bytes().into()))
}

/// Leading bytes of a raw tag used as the GCM nonce.
pub fn nonce_from_tag(tag: &[u8], mode: NonceMode) -> Result<Vec<u8>> {
    Ok(Tag::from_slice(tag)?.nonce(mode).to_vec())
}

/// AES-256-GCM encryption with a 128-bit tag-derived nonce.
pub fn encrypt(key: &ContentKey, tag: &Tag, content: &[u8]) -> Ciphertext {
    AesGcmCipher::default().seal(key, tag, content)
}

pub fn decrypt(key: &ContentKey, tag: &Tag, ct: &Ciphertext) -> Result<Vec<u8>> {
    AesGcmCipher::default().open(key, tag, ct)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;

    // Reference values computed with Python's hmac/hashlib and
    // cryptography.AESGCM over the same inputs.
    const TAG_ABC_NODE1: &str = "01b3214dae84ff8a70d45b5924f9c46a9f177818e82014b3dad91a1b331da0f5";
    const TAG_ABC_NODE2: &str = "3586f4f04ef33b69e92d94a9cd6c133ac4e7bc776a0ca532e13d7202e210e6c9";
    const CT_ABC_128: &str = "c7860b9fed679c11d9ce153b65a03b03384ccc";
    const CT_ABC_96: &str = "29f7d1e8a34292709bc053c53134879ebcbe38";

    fn node(v: u64) -> NodeId {
        TreeParams::new(8).unwrap().node(v).unwrap()
    }

    #[test]
    fn tag_matches_reference_hmac() {
        let k = MacKey::from_bytes([0; 32]);
        assert_eq!(derive_tag(&k, b"abc", node(1)).unwrap().to_hex(), TAG_ABC_NODE1);
        assert_eq!(derive_tag(&k, b"abc", node(2)).unwrap().to_hex(), TAG_ABC_NODE2);
        assert_eq!(
            derive_tag(&k, b"abc", node(1)).unwrap(),
            derive_tag(&k, b"abc", node(1)).unwrap()
        );
    }

    #[test]
    fn empty_content_is_rejected() {
        let k = MacKey::from_bytes([0; 32]);
        assert!(matches!(derive_tag(&k, b"", node(1)), Err(Error::Validation(_))));
    }

    #[test]
    fn ciphertext_matches_reference_gcm() {
        let tag = Tag::from_hex(TAG_ABC_NODE1).unwrap();
        let key = ContentKey::from_bytes([0x11; 32]);
        let ct = AesGcmCipher::new(NonceMode::Bits128).seal(&key, &tag, b"abc");
        assert_eq!(hex::encode(ct.as_bytes()), CT_ABC_128);
        let ct96 = AesGcmCipher::new(NonceMode::Bits96).seal(&key, &tag, b"abc");
        assert_eq!(hex::encode(ct96.as_bytes()), CT_ABC_96);
        assert_eq!(ct.len(), 3 + AEAD_OVERHEAD);
    }

    #[test]
    fn nonce_is_tag_prefix() {
        let raw: Vec<u8> = (0u8..32).collect();
        assert_eq!(nonce_from_tag(&raw, NonceMode::Bits128).unwrap(), (0u8..16).collect::<Vec<_>>());
        assert_eq!(nonce_from_tag(&raw, NonceMode::Bits96).unwrap(), (0u8..12).collect::<Vec<_>>());
        assert!(nonce_from_tag(&raw[..31], NonceMode::Bits128).is_err());
    }

    #[test]
    fn wrong_key_or_tamper_fails() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let keys = keygen(TreeParams::new(3).unwrap(), &mut rng);
        let mac = MacKey::random(&mut rng);
        let t1 = derive_tag(&mac, b"episode", node(1)).unwrap();
        let t3 = derive_tag(&mac, b"episode", node(3)).unwrap();
        let k1 = keys.get(node(1)).unwrap();
        let k3 = keys.get(node(3)).unwrap();
        let c1 = encrypt(k1, &t1, b"episode");
        let c3 = encrypt(k3, &t3, b"episode");
        assert_ne!(c1, c3);
        assert_eq!(decrypt(k1, &t1, &c1).unwrap(), b"episode");
        assert!(matches!(decrypt(k3, &t1, &c1), Err(Error::Decrypt)));
        assert!(matches!(decrypt(k1, &t3, &c1), Err(Error::Decrypt)));
        let mut bytes = c1.as_bytes().to_vec();
        bytes[0] ^= 1;
        assert!(matches!(decrypt(k1, &t1, &Ciphertext::from_vec(bytes)), Err(Error::Decrypt)));
    }

    #[test]
    fn keygen_sizes_and_independence() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert_eq!(keygen(TreeParams::new(1).unwrap(), &mut rng).len(), 3);
        let a = keygen(TreeParams::new(4).unwrap(), &mut rng);
        let b = keygen(TreeParams::new(4).unwrap(), &mut rng);
        assert_eq!(a.len(), 31);
        for ((_, ka), (_, kb)) in a.iter().zip(b.iter()) {
            assert_ne!(ka, kb);
        }
    }

    #[test]
    fn key_file_round_trip_and_validation() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let keys = keygen(TreeParams::new(2).unwrap(), &mut rng);
        let json = serde_json::to_string(&keys.to_file()).unwrap();
        assert!(json.starts_with(r#"{"m":2,"keys":{"1":"#));
        let back: KeyFile = serde_json::from_str(&json).unwrap();
        assert_eq!(NodeKeySet::from_file(&back).unwrap(), keys);

        let mut missing = keys.to_file();
        missing.keys.remove(&7);
        assert!(NodeKeySet::from_file(&missing).is_err());
    }
}
