//! Content catalogs: JSON lists of named contents, either inline
//! (`content_b64`) or synthesized from a size and seed (`size_bytes`).

use std::path::Path;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::provider::Provider;
use crate::wire::{b64_decode, b64_encode};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub c_name: String,
    #[serde(flatten)]
    pub body: CatalogBody,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CatalogBody {
    Inline {
        content_b64: String,
    },
    Synthetic {
        size_bytes: usize,
        #[serde(default)]
        seed: u64,
    },
}

impl CatalogEntry {
    pub fn bytes(&self) -> Result<Vec<u8>> {
        match &self.body {
            CatalogBody::Inline { content_b64 } => b64_decode(content_b64),
            CatalogBody::Synthetic { size_bytes, seed } => {
                Ok(synthesize_content(*seed, &self.c_name, *size_bytes))
            }
        }
    }
}

/// Deterministic pseudorandom bytes for `(seed, c_name)`.
pub fn synthesize_content(seed: u64, c_name: &str, size: usize) -> Vec<u8> {
    let digest = Sha256::new()
        .chain_update(b"chronocache/content")
        .chain_update(seed.to_be_bytes())
        .chain_update(c_name.as_bytes())
        .finalize();
    let mut rng = ChaCha20Rng::from_seed(digest.into());
    let mut out = vec![0u8; size];
    rng.fill_bytes(&mut out);
    out
}

/// Name of the `index`-th synthetic content.
pub fn content_name(index: usize) -> String {
    format!("content-{index:05}")
}

/// `n` synthetic contents of `size` bytes each.
pub fn generate(n: usize, size: usize, seed: u64, inline: bool) -> Vec<CatalogEntry> {
    (0..n)
        .map(|i| {
            let c_name = content_name(i);
            let body = if inline {
                CatalogBody::Inline {
                    content_b64: b64_encode(&synthesize_content(seed, &c_name, size)),
                }
            } else {
                CatalogBody::Synthetic {
                    size_bytes: size,
                    seed,
                }
            };
            CatalogEntry { c_name, body }
        })
        .collect()
}

pub fn load(path: &Path) -> Result<Vec<CatalogEntry>> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

pub fn save(entries: &[CatalogEntry], path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(entries)?)?;
    Ok(())
}

/// Registers every entry with the provider (no encryption happens yet).
pub fn register_all(provider: &Provider, entries: &[CatalogEntry]) -> Result<()> {
    for e in entries {
        let bytes: Arc<[u8]> = e.bytes()?.into();
        if bytes.is_empty() {
            return Err(Error::Validation(format!("catalog entry {:?} is empty", e.c_name)));
        }
        provider.add_content(e.c_name.clone(), bytes)?;
    }
    Ok(())
}
