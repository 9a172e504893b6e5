//! Daemon configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::crypto::NonceMode;
use crate::error::Result;

/// Service provider config:
/// `{"m", "nonce_bits", "listen", "key_file", "catalog_file"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub m: u32,
    #[serde(rename = "nonce_bits", default)]
    pub nonce_mode: NonceMode,
    pub listen: String,
    pub key_file: PathBuf,
    pub catalog_file: PathBuf,
    /// Defaults to [`mac_key_path_for`] of `key_file`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mac_key_file: Option<PathBuf>,
}

impl ProviderConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn mac_key_path(&self) -> PathBuf {
        self.mac_key_file
            .clone()
            .unwrap_or_else(|| mac_key_path_for(&self.key_file))
    }
}

/// Cache server config: `{"capacity_entries", "upstream", "listen"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub capacity_entries: usize,
    pub upstream: String,
    pub listen: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub byte_budget: Option<u64>,
}

impl CacheConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

/// `keys.json` → `keys.mac.json`.
pub fn mac_key_path_for(key_file: &Path) -> PathBuf {
    let stem = key_file
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "keys".into());
    key_file.with_file_name(format!("{stem}.mac.json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn provider_config_parses() {
        let cfg: ProviderConfig = serde_json::from_str(
            r#"{"m":4,"nonce_bits":96,"listen":"127.0.0.1:0","key_file":"/k/keys.json","catalog_file":"c.json"}"#,
        )
        .unwrap();
        assert_eq!(cfg.nonce_mode, NonceMode::Bits96);
        assert_eq!(cfg.mac_key_path(), PathBuf::from("/k/keys.mac.json"));
        assert!(serde_json::from_str::<ProviderConfig>(
            r#"{"m":4,"nonce_bits":64,"listen":"x","key_file":"k","catalog_file":"c"}"#
        )
        .is_err());
    }
}
