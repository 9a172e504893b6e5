//! In-process provider, cache server and two users. One user's access ends
//! at t2; after the provider advances to t3 that user is refused locally
//! while the other keeps reading from the cache.
//!
//! `cargo run --example access_control`

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use chronocache::cache::{CacheLimits, CacheServer};
use chronocache::client::{Client, KeyRing};
use chronocache::crypto::{keygen, MacKey, NonceMode};
use chronocache::provider::Provider;
use chronocache::tree::TreeParams;
use chronocache::Error;

fn main() -> chronocache::Result<()> {
    let params = TreeParams::new(3)?;
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let sp = Arc::new(Provider::new(keygen(params, &mut rng), MacKey::random(&mut rng), NonceMode::Bits128));
    sp.add_content("song", b"la la la".to_vec())?;
    let cs = CacheServer::new(CacheLimits::entries(16), Arc::clone(&sp))?;
    let client = Client::new(Arc::clone(&sp), &cs, NonceMode::Bits128);

    let alice = KeyRing::obtain(&*sp, "alice", params.period(2)?)?;
    let bob = KeyRing::obtain(&*sp, "bob", params.period(7)?)?;

    for t in 1..=3 {
        let t = sp.advance_period(params.period(t)?)?;
        println!("{t}: cover {:?}", sp.current_cover().ids());
        for (name, ring) in [("alice", &alice), ("bob", &bob)] {
            match client.fetch(ring, "song", t) {
                Ok(f) => println!(
                    "  {name} (until {}): node {} hit={} -> {:?}",
                    ring.t_user,
                    f.node,
                    f.hit,
                    String::from_utf8_lossy(&f.plaintext)
                ),
                Err(e @ Error::Revoked { .. }) => println!("  {name}: {e}"),
                Err(e) => return Err(e),
            }
        }
    }
    let s = cs.stats();
    println!("cache: {} hits, {} misses, {} bytes from upstream", s.hits, s.misses, s.upstream_bytes);
    Ok(())
}
