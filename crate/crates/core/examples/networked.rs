//! Provider and cache server on local HTTP ports, driven by a client that
//! only speaks JSON over HTTP. Prints each exchange.
//!
//! `cargo run --example networked`

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use chronocache::cache::{CacheLimits, CacheServer};
use chronocache::client::{Client, KeyRing};
use chronocache::crypto::{keygen, MacKey, NonceMode};
use chronocache::net::{self, HttpCache, HttpProvider};
use chronocache::provider::Provider;
use chronocache::tree::TreeParams;

fn main() -> chronocache::Result<()> {
    let params = TreeParams::new(4)?;
    let mut rng = ChaCha20Rng::seed_from_u64(42);
    let sp = Provider::new(keygen(params, &mut rng), MacKey::random(&mut rng), NonceMode::Bits128);
    sp.add_content("news", b"extra, extra".to_vec())?;
    let sp_server = net::spawn_server(net::provider_router(Arc::new(sp)), "127.0.0.1:0")?;
    let sp_addr = sp_server.addr().to_string();

    let cs = CacheServer::new(CacheLimits::entries(64), HttpProvider::new(&sp_addr))?;
    let cs_server = net::spawn_server(net::cache_router(Arc::new(cs)), "127.0.0.1:0")?;
    println!("provider on {sp_addr}, cache on {}", cs_server.addr());

    let client = Client::new(
        HttpProvider::new(&sp_addr),
        HttpCache::new(&cs_server.addr().to_string()),
        NonceMode::Bits128,
    );
    let ring = KeyRing::obtain(&client.provider, "reader", params.period(12)?)?;
    println!("keys for {}: nodes {:?}", ring.t_user, ring.keys.keys().map(|n| n.get()).collect::<Vec<_>>());

    for t in [1, 2, 9, 12, 13] {
        let t = client.provider.advance(params.period(t)?)?;
        for _ in 0..2 {
            match client.fetch(&ring, "news", t) {
                Ok(f) => println!("{t}: node {:>2} hit={:<5} tag {}", f.node, f.hit, &f.tag.to_hex()[..16]),
                Err(e) => println!("{t}: {e}"),
            }
        }
    }
    let stats = client.cache.stats()?;
    println!("cache stats: {}", serde_json::to_string(&stats).unwrap_or_default());

    cs_server.shutdown();
    sp_server.shutdown();
    Ok(())
}
