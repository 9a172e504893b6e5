//! Cache server behaviour in isolation: misses fill from upstream, hits are
//! served locally, the least recently used entry is evicted first, and
//! unknown tags are never cached.
//!
//! `cargo run --example lru_cache`

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use chronocache::cache::{CacheLimits, CacheServer};
use chronocache::crypto::{keygen, MacKey, NonceMode, Tag};
use chronocache::provider::Provider;
use chronocache::tree::TreeParams;

fn main() -> chronocache::Result<()> {
    let params = TreeParams::new(2)?;
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let sp = Arc::new(Provider::new(keygen(params, &mut rng), MacKey::random(&mut rng), NonceMode::Bits128));
    let root = params.root();
    let mut tags = Vec::new();
    for name in ["a", "b", "c"] {
        sp.add_content(name, name.repeat(100).into_bytes())?;
        tags.push(sp.handle_content_request(name, root)?);
    }

    let cs = CacheServer::new(CacheLimits::entries(2), Arc::clone(&sp))?;
    let show = |label: &str| {
        let order: Vec<String> = cs.with_table(|t| t.recency().iter().map(|g| g.to_hex()[..8].to_string()).collect());
        println!("{label:<24} lru->mru {order:?}");
    };
    for (i, tag) in [0, 1, 0, 2, 1].into_iter().map(|i| (i, &tags[i])) {
        let (_, hit) = cs.send_content(tag)?;
        show(&format!("get {} ({})", ["a", "b", "c"][i], if hit { "hit" } else { "miss" }));
    }

    let bogus = Tag::from_bytes([0xee; 32]);
    println!("unknown tag -> {}", cs.send_content(&bogus).unwrap_err());
    show("after unknown tag");

    let s = cs.stats();
    println!("hits={} misses={} hit_ratio={:.2} upstream_bytes={}", s.hits, s.misses, s.hit_ratio(), s.upstream_bytes);
    Ok(())
}
