mod common;

use std::sync::Arc;

use chronocache::cache::{CacheLimits, CacheServer};
use chronocache::client::{Client, KeyRing};
use chronocache::crypto::NonceMode;
use chronocache::Error;
use common::Counting;

#[test]
fn succeeds_iff_period_not_expired() {
    for mode in [NonceMode::Bits128, NonceMode::Bits96] {
        let sp = common::provider_with(4, 21, mode);
        let params = sp.params();
        sp.add_content("film", b"opening credits".to_vec()).unwrap();
        let cs = CacheServer::new(CacheLimits::entries(8), Arc::clone(&sp)).unwrap();
        let rings: Vec<KeyRing> = params
            .periods()
            .map(|t| KeyRing::obtain(&*sp, &format!("user{t}"), t).unwrap())
            .collect();
        for t_curr in params.periods() {
            sp.advance_period(t_curr).unwrap();
            for ring in &rings {
                let client = Client::new(Counting::new(&sp), Counting::new(&cs), mode);
                let result = client.request_content(ring, "film", t_curr);
                let sent = client.provider.calls() + client.cache.calls();
                if ring.t_user >= t_curr {
                    assert_eq!(result.unwrap(), b"opening credits");
                    assert_eq!(sent, 2);
                } else {
                    assert!(matches!(result, Err(Error::Revoked { .. })));
                    assert_eq!(sent, 0, "revoked user {} sent messages", ring.t_user);
                }
            }
        }
    }
}
