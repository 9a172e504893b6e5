//! Time-based access control for cached, encrypted content.
//!
//! A service provider encrypts each content once per node of a binary time
//! tree. Users hold the node keys along the path from their subscription
//! leaf to the root; at period `t_curr` only nodes in the complete-subtree
//! cover of the revoked prefix `[1, t_curr - 1]` are served, so a user whose
//! period has expired holds no usable key. Cache servers store ciphertexts
//! by opaque tag and never learn who is asking.
//!
//! Module map:
//!
//! - [`tree`]: heap-numbered time tree, paths, covers, eligibility.
//! - [`crypto`]: node keys, HMAC tags, AES-256-GCM with tag-derived nonces.
//! - [`provider`]: the service provider and its content table.
//! - [`cache`]: LRU cache server with single-flight misses.
//! - [`client`]: key rings and the two-round fetch protocol.
//! - [`wire`] and [`net`]: JSON messages and the HTTP transport.
//! - [`sim`]: Zipf workload simulator and hit-ratio metrics.
//!
//! The `examples/` directory has one runnable program per capability.

pub mod cache;
pub mod catalog;
pub mod client;
pub mod config;
pub mod crypto;
pub mod error;
pub mod net;
pub mod provider;
pub mod sim;
pub mod tree;
pub mod wire;

pub use error::{Error, Result};
