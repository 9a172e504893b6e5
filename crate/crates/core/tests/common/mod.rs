#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use chronocache::client::{CacheApi, ProviderApi};
use chronocache::crypto::{keygen, Ciphertext, MacKey, NonceMode, Tag};
use chronocache::provider::Provider;
use chronocache::tree::{NodeId, TimePeriod, TreeParams};
use chronocache::wire::KeysReply;
use chronocache::Result;

pub fn provider(m: u32, seed: u64) -> Arc<Provider> {
    provider_with(m, seed, NonceMode::Bits128)
}

pub fn provider_with(m: u32, seed: u64, mode: NonceMode) -> Arc<Provider> {
    let params = TreeParams::new(m).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let keys = keygen(params, &mut rng);
    let mac = MacKey::random(&mut rng);
    Arc::new(Provider::new(keys, mac, mode))
}

/// Counts every message sent through it.
pub struct Counting<T> {
    pub inner: T,
    pub calls: AtomicUsize,
}

impl<T> Counting<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn bump(&self) {
        self.calls.fetch_add(1, Ordering::SeqCst);
    }
}

impl<T: ProviderApi> ProviderApi for Counting<T> {
    fn send_key(&self, user_id: &str, t: TimePeriod) -> Result<KeysReply> {
        self.bump();
        self.inner.send_key(user_id, t)
    }

    fn content_request(&self, c_name: &str, node: NodeId) -> Result<Tag> {
        self.bump();
        self.inner.content_request(c_name, node)
    }

    fn current_period(&self) -> Result<TimePeriod> {
        self.bump();
        self.inner.current_period()
    }
}

impl<T: CacheApi> CacheApi for Counting<T> {
    fn fetch(&self, tag: &Tag) -> Result<(Ciphertext, bool)> {
        self.bump();
        self.inner.fetch(tag)
    }
}

/// Leaf span of heap node `n` in a tree with `t_max = 2^m` leaves, computed
/// from bit arithmetic alone.
pub fn span(m: u32, n: u64) -> (u64, u64) {
    let depth = 63 - n.leading_zeros();
    let height = m - depth;
    let first = (n << height) - (1u64 << m) + 1;
    (first, first + (1u64 << height) - 1)
}

/// Maximal subtrees whose leaves are all unrevoked.
pub fn brute_cover(m: u32, revoked: impl Fn(u64) -> bool) -> Vec<u64> {
    let all_clear = |n: u64| {
        let (a, b) = span(m, n);
        (a..=b).all(|t| !revoked(t))
    };
    (1..(1u64 << (m + 1)))
        .filter(|&n| all_clear(n) && (n == 1 || !all_clear(n / 2)))
        .collect()
}
