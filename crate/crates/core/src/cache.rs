//! Tag-addressed ciphertext cache with LRU eviction.
//!
//! The cache only ever holds tags and AEAD ciphertexts. Misses are filled
//! from an [`Upstream`] provider; concurrent misses on the same tag share a
//! single upstream fetch.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};

use lru::LruCache;
use serde::{Deserialize, Serialize};

use crate::crypto::{Ciphertext, Tag};
use crate::error::{Error, Result};
use crate::provider::Provider;
use crate::wire::WireError;

/// Source of ciphertexts for cache misses (the CacheRequest exchange).
pub trait Upstream: Send + Sync {
    fn cache_request(&self, tag: &Tag) -> Result<Ciphertext>;
}

impl Upstream for Provider {
    fn cache_request(&self, tag: &Tag) -> Result<Ciphertext> {
        self.handle_cache_request(tag)
    }
}

impl<U: Upstream + ?Sized> Upstream for Arc<U> {
    fn cache_request(&self, tag: &Tag) -> Result<Ciphertext> {
        (**self).cache_request(tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheLimits {
    /// Maximum number of stored entries.
    pub capacity_entries: usize,
    /// Optional cap on the summed ciphertext bytes. Off by default.
    #[serde(default)]
    pub byte_budget: Option<u64>,
}

impl CacheLimits {
    pub fn entries(capacity_entries: usize) -> Self {
        Self {
            capacity_entries,
            byte_budget: None,
        }
    }
}

/// LRU map from tag to ciphertext.
pub struct CacheTbl {
    entries: LruCache<Tag, Ciphertext>,
    limits: CacheLimits,
    bytes: u64,
}

impl CacheTbl {
    pub fn new(limits: CacheLimits) -> Result<Self> {
        if limits.capacity_entries == 0 {
            return Err(Error::Validation("cache capacity must be positive".into()));
        }
        if limits.byte_budget == Some(0) {
            return Err(Error::Validation("byte budget must be positive".into()));
        }
        Ok(Self {
            entries: LruCache::unbounded(),
            limits,
            bytes: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn bytes(&self) -> u64 {
        self.bytes
    }

    pub fn limits(&self) -> CacheLimits {
        self.limits
    }

    /// Looks up `tag`, marking it most recently used on a hit.
    pub fn get(&mut self, tag: &Tag) -> Option<Ciphertext> {
        self.entries.get(tag).cloned()
    }

    pub fn contains(&self, tag: &Tag) -> bool {
        self.entries.contains(tag)
    }

    /// Inserts as most recently used, evicting from the LRU end until the
    /// limits hold. Returns the evicted tags, oldest first.
    pub fn insert(&mut self, tag: Tag, ct: Ciphertext) -> Vec<Tag> {
        let size = ct.len() as u64;
        if let Some(old) = self.entries.put(tag, ct) {
            self.bytes -= old.len() as u64;
        }
        self.bytes += size;
        let mut evicted = Vec::new();
        while self.over_limit() {
            // A single entry larger than the byte budget is still kept.
            if self.entries.len() == 1 {
                break;
            }
            let (victim, vct) = self.entries.pop_lru().expect("non-empty");
            self.bytes -= vct.len() as u64;
            evicted.push(victim);
        }
        evicted
    }

    /// Tags from least to most recently used.
    pub fn recency(&self) -> Vec<Tag> {
        self.entries.iter().rev().map(|(t, _)| *t).collect()
    }

    fn over_limit(&self) -> bool {
        self.entries.len() > self.limits.capacity_entries
            || self.limits.byte_budget.is_some_and(|b| self.bytes > b)
    }
}

#[derive(Debug, Default)]
struct Counters {
    hits: AtomicU64,
    misses: AtomicU64,
    upstream_bytes: AtomicU64,
    downstream_bytes: AtomicU64,
}

/// Point-in-time copy of the cache counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsSnapshot {
    pub hits: u64,
    pub misses: u64,
    pub upstream_bytes: u64,
    pub downstream_bytes: u64,
}

impl StatsSnapshot {
    pub fn requests(&self) -> u64 {
        self.hits + self.misses
    }

    pub fn hit_ratio(&self) -> f64 {
        self.hits as f64 / self.requests().max(1) as f64
    }
}

#[derive(Default)]
struct Flight {
    result: Mutex<Option<std::result::Result<Ciphertext, WireError>>>,
    done: Condvar,
}

impl Flight {
    fn finish(&self, r: std::result::Result<Ciphertext, WireError>) {
        *self.result.lock().unwrap() = Some(r);
        self.done.notify_all();
    }

    fn wait(&self) -> std::result::Result<Ciphertext, WireError> {
        let mut guard = self.result.lock().unwrap();
        while guard.is_none() {
            guard = self.done.wait(guard).unwrap();
        }
        guard.clone().expect("set")
    }
}

/// Cache server: a [`CacheTbl`] plus upstream fetch and counters.
pub struct CacheServer<U> {
    table: Mutex<CacheTbl>,
    inflight: Mutex<HashMap<Tag, Arc<Flight>>>,
    counters: Counters,
    upstream: U,
}

impl<U: Upstream> CacheServer<U> {
    pub fn new(limits: CacheLimits, upstream: U) -> Result<Self> {
        Ok(Self {
            table: Mutex::new(CacheTbl::new(limits)?),
            inflight: Mutex::new(HashMap::new()),
            counters: Counters::default(),
            upstream,
        })
    }

    pub fn upstream(&self) -> &U {
        &self.upstream
    }

    /// Serves `tag`, returning the ciphertext and whether it was a hit.
    ///
    /// A request that joins another request's in-progress fetch reports
    /// `hit = false` but adds nothing to `upstream_bytes`.
    pub fn send_content(&self, tag: &Tag) -> Result<(Ciphertext, bool)> {
        if let Some(ct) = self.table.lock().unwrap().get(tag) {
            return Ok(self.served(ct, true));
        }

        let (flight, leader) = {
            let mut inflight = self.inflight.lock().unwrap();
            match inflight.get(tag) {
                Some(f) => (Arc::clone(f), false),
                None => {
                    let f = Arc::new(Flight::default());
                    inflight.insert(*tag, Arc::clone(&f));
                    (f, true)
                }
            }
        };

        if !leader {
            return match flight.wait() {
                Ok(ct) => Ok(self.served(ct, false)),
                Err(e) => Err(e.into()),
            };
        }

        // Another leader may have filled the entry between our lookup and
        // registering this flight.
        let cached = self.table.lock().unwrap().get(tag);
        let outcome = match cached {
            Some(ct) => Ok((ct, true)),
            None => self.upstream.cache_request(tag).map(|ct| {
                self.counters
                    .upstream_bytes
                    .fetch_add(ct.len() as u64, Ordering::Relaxed);
                self.table.lock().unwrap().insert(*tag, ct.clone());
                (ct, false)
            }),
        };
        flight.finish(
            outcome
                .as_ref()
                .map(|(ct, _)| ct.clone())
                .map_err(WireError::from),
        );
        self.inflight.lock().unwrap().remove(tag);

        let (ct, hit) = outcome.map_err(|e| match e {
            Error::Io(io) => Error::Upstream(io.to_string()),
            other => other,
        })?;
        Ok(self.served(ct, hit))
    }

    pub fn stats(&self) -> StatsSnapshot {
        StatsSnapshot {
            hits: self.counters.hits.load(Ordering::Relaxed),
            misses: self.counters.misses.load(Ordering::Relaxed),
            upstream_bytes: self.counters.upstream_bytes.load(Ordering::Relaxed),
            downstream_bytes: self.counters.downstream_bytes.load(Ordering::Relaxed),
        }
    }

    /// Zeroes the counters; cached entries are untouched.
    pub fn reset_stats(&self) {
        self.counters.hits.store(0, Ordering::Relaxed);
        self.counters.misses.store(0, Ordering::Relaxed);
        self.counters.upstream_bytes.store(0, Ordering::Relaxed);
        self.counters.downstream_bytes.store(0, Ordering::Relaxed);
    }

    pub fn with_table<R>(&self, f: impl FnOnce(&CacheTbl) -> R) -> R {
        f(&self.table.lock().unwrap())
    }

    fn served(&self, ct: Ciphertext, hit: bool) -> (Ciphertext, bool) {
        let counter = if hit {
            &self.counters.hits
        } else {
            &self.counters.misses
        };
        counter.fetch_add(1, Ordering::Relaxed);
        self.counters
            .downstream_bytes
            .fetch_add(ct.len() as u64, Ordering::Relaxed);
        (ct, hit)
    }
}

#[cfg(test)]
mod tests {
    use std::collections::VecDeque;
    use std::sync::atomic::AtomicUsize;

    use proptest::prelude::*;

    use super::*;

    /// Upstream that knows every tag whose first byte is non-zero.
    #[derive(Default)]
    struct FakeOrigin {
        calls: AtomicUsize,
        delay_ms: u64,
    }

    impl Upstream for FakeOrigin {
        fn cache_request(&self, tag: &Tag) -> Result<Ciphertext> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if self.delay_ms > 0 {
                std::thread::sleep(std::time::Duration::from_millis(self.delay_ms));
            }
            if tag.as_bytes()[0] == 0 {
                return Err(Error::NotFound(format!("unknown tag {tag}")));
            }
            Ok(Ciphertext::from_vec(vec![tag.as_bytes()[0]; 64]))
        }
    }

    fn tag(b: u8) -> Tag {
        Tag::from_bytes([b; 32])
    }

    fn server(cap: usize) -> CacheServer<FakeOrigin> {
        CacheServer::new(CacheLimits::entries(cap), FakeOrigin::default()).unwrap()
    }

    #[test]
    fn miss_then_hit() {
        let cs = server(4);
        assert!(!cs.send_content(&tag(1)).unwrap().1);
        assert!(cs.send_content(&tag(1)).unwrap().1);
        assert_eq!(cs.upstream().calls.load(Ordering::SeqCst), 1);
        assert_eq!(cs.stats().upstream_bytes, 64);
    }

    #[test]
    fn lru_victim() {
        let cs = server(2);
        for b in [1, 2, 3] {
            cs.send_content(&tag(b)).unwrap();
        }
        assert!(!cs.send_content(&tag(1)).unwrap().1);
        // 2 was evicted when 1 came back; 3 survives.
        assert_eq!(cs.with_table(|t| t.recency()), vec![tag(3), tag(1)]);
    }

    #[test]
    fn not_found_is_not_cached() {
        let cs = server(2);
        assert!(matches!(cs.send_content(&tag(0)), Err(Error::NotFound(_))));
        assert!(cs.with_table(|t| t.is_empty()));
        assert_eq!(cs.stats(), StatsSnapshot::default());
    }

    #[test]
    fn stats_ratio_and_reset() {
        let cs = server(4);
        cs.send_content(&tag(1)).unwrap();
        for _ in 0..3 {
            cs.send_content(&tag(1)).unwrap();
        }
        let s = cs.stats();
        assert_eq!((s.hits, s.misses), (3, 1));
        assert_eq!(s.hit_ratio(), 0.75);
        cs.reset_stats();
        assert_eq!(cs.stats(), StatsSnapshot::default());
        assert_eq!(cs.with_table(|t| t.len()), 1);
    }

    #[test]
    fn zero_capacity_rejected() {
        assert!(CacheTbl::new(CacheLimits::entries(0)).is_err());
    }

    #[test]
    fn byte_budget_evicts_by_size() {
        let mut t = CacheTbl::new(CacheLimits {
            capacity_entries: 100,
            byte_budget: Some(250),
        })
        .unwrap();
        for b in 1..=3 {
            t.insert(tag(b), Ciphertext::from_vec(vec![0; 100]));
        }
        assert_eq!(t.recency(), vec![tag(2), tag(3)]);
        assert_eq!(t.bytes(), 200);
    }

    #[test]
    fn single_flight_collapses_concurrent_misses() {
        let cs = Arc::new(
            CacheServer::new(
                CacheLimits::entries(8),
                FakeOrigin {
                    delay_ms: 50,
                    ..Default::default()
                },
            )
            .unwrap(),
        );
        std::thread::scope(|s| {
            for _ in 0..8 {
                let cs = Arc::clone(&cs);
                s.spawn(move || cs.send_content(&tag(9)).unwrap());
            }
        });
        assert_eq!(cs.upstream().calls.load(Ordering::SeqCst), 1);
        assert_eq!(cs.stats().upstream_bytes, 64);
        assert_eq!(cs.stats().requests(), 8);
    }

    /// Reference LRU: a deque with the most recent tag at the back.
    fn reference_hits(trace: &[u8], cap: usize) -> Vec<bool> {
        let mut q: VecDeque<u8> = VecDeque::new();
        trace
            .iter()
            .map(|&x| {
                let hit = if let Some(pos) = q.iter().position(|&y| y == x) {
                    q.remove(pos);
                    true
                } else {
                    if q.len() == cap {
                        q.pop_front();
                    }
                    false
                };
                q.push_back(x);
                hit
            })
            .collect()
    }

    proptest! {
        #[test]
        fn matches_reference_lru(trace in prop::collection::vec(1u8..24, 0..300), cap in 1usize..10) {
            let cs = server(cap);
            let got: Vec<bool> = trace.iter().map(|&b| cs.send_content(&tag(b)).unwrap().1).collect();
            prop_assert_eq!(got, reference_hits(&trace, cap));
            prop_assert!(cs.with_table(|t| t.len()) <= cap);
        }

        #[test]
        fn lru_stack_property(trace in prop::collection::vec(1u8..32, 0..300), c1 in 1usize..12, extra in 0usize..12) {
            let small = server(c1);
            let large = server(c1 + extra);
            for &b in &trace {
                let hs = small.send_content(&tag(b)).unwrap().1;
                let hl = large.send_content(&tag(b)).unwrap().1;
                prop_assert!(!hs || hl, "hit in small cache but miss in larger one");
            }
        }
    }
}
