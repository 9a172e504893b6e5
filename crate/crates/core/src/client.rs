//! User agent: a ring of path keys plus the ContentRequest → SendContent →
//! ObtainContent flow against a provider and a cache server.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::cache::{CacheServer, Upstream};
use crate::crypto::{AesGcmCipher, Ciphertext, ContentCipher, ContentKey, NonceMode, Tag};
use crate::error::{Error, Result};
use crate::provider::Provider;
use crate::tree::{self, NodeId, TimePeriod, TreeParams};
use crate::wire::{KeyEntry, KeysReply};

/// Provider operations a client needs.
pub trait ProviderApi {
    fn send_key(&self, user_id: &str, t: TimePeriod) -> Result<KeysReply>;
    fn content_request(&self, c_name: &str, node: NodeId) -> Result<Tag>;
    /// The provider's current period, used to recover from a stale `t_curr`.
    fn current_period(&self) -> Result<TimePeriod>;
}

/// Cache-server operation a client needs.
pub trait CacheApi {
    /// Returns the ciphertext for `tag` and whether the cache already held it.
    fn fetch(&self, tag: &Tag) -> Result<(Ciphertext, bool)>;
}

impl ProviderApi for Provider {
    fn send_key(&self, user_id: &str, t: TimePeriod) -> Result<KeysReply> {
        let keys = Provider::send_key(self, user_id, t)?;
        Ok(KeysReply {
            m: self.params().m(),
            t: t.get(),
            keys: keys
                .into_iter()
                .map(|(n, key)| KeyEntry { node: n.get(), key })
                .collect(),
        })
    }

    fn content_request(&self, c_name: &str, node: NodeId) -> Result<Tag> {
        self.handle_content_request(c_name, node)
    }

    fn current_period(&self) -> Result<TimePeriod> {
        Ok(self.t_curr())
    }
}

impl<P: ProviderApi + ?Sized> ProviderApi for Arc<P> {
    fn send_key(&self, user_id: &str, t: TimePeriod) -> Result<KeysReply> {
        (**self).send_key(user_id, t)
    }

    fn content_request(&self, c_name: &str, node: NodeId) -> Result<Tag> {
        (**self).content_request(c_name, node)
    }

    fn current_period(&self) -> Result<TimePeriod> {
        (**self).current_period()
    }
}

impl<P: ProviderApi + ?Sized> ProviderApi for &P {
    fn send_key(&self, user_id: &str, t: TimePeriod) -> Result<KeysReply> {
        (**self).send_key(user_id, t)
    }

    fn content_request(&self, c_name: &str, node: NodeId) -> Result<Tag> {
        (**self).content_request(c_name, node)
    }

    fn current_period(&self) -> Result<TimePeriod> {
        (**self).current_period()
    }
}

impl<U: Upstream> CacheApi for CacheServer<U> {
    fn fetch(&self, tag: &Tag) -> Result<(Ciphertext, bool)> {
        self.send_content(tag)
    }
}

impl<C: CacheApi + ?Sized> CacheApi for Arc<C> {
    fn fetch(&self, tag: &Tag) -> Result<(Ciphertext, bool)> {
        (**self).fetch(tag)
    }
}

impl<C: CacheApi + ?Sized> CacheApi for &C {
    fn fetch(&self, tag: &Tag) -> Result<(Ciphertext, bool)> {
        (**self).fetch(tag)
    }
}

/// A user's path keys and the access period they were issued for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyRing {
    pub params: TreeParams,
    pub t_user: TimePeriod,
    pub keys: BTreeMap<NodeId, ContentKey>,
}

impl KeyRing {
    /// Builds a ring from a key-distribution reply and checks it.
    pub fn from_reply(reply: &KeysReply) -> Result<Self> {
        let params = TreeParams::new(reply.m)?;
        let t_user = params.period(reply.t)?;
        let mut keys = BTreeMap::new();
        for KeyEntry { node, key } in &reply.keys {
            keys.insert(params.node(*node)?, key.clone());
        }
        let ring = Self { params, t_user, keys };
        if !verify_ring(&ring) {
            return Err(Error::Validation(format!(
                "key reply for {t_user} does not cover exactly its root path"
            )));
        }
        Ok(ring)
    }

    /// Requests path keys for `t_user` from the provider.
    pub fn obtain<P: ProviderApi + ?Sized>(sp: &P, user_id: &str, t_user: TimePeriod) -> Result<Self> {
        Self::from_reply(&sp.send_key(user_id, t_user)?)
    }

    pub fn to_reply(&self) -> KeysReply {
        let path = tree::path(self.params, self.t_user).unwrap_or_default();
        KeysReply {
            m: self.params.m(),
            t: self.t_user.get(),
            keys: path
                .into_iter()
                .filter_map(|n| self.keys.get(&n).map(|k| KeyEntry { node: n.get(), key: k.clone() }))
                .collect(),
        }
    }

    pub fn key(&self, node: NodeId) -> Option<&ContentKey> {
        self.keys.get(&node)
    }
}

/// True iff the ring holds exactly the keys on `path(t_user)`.
pub fn verify_ring(ring: &KeyRing) -> bool {
    let Ok(path) = tree::path(ring.params, ring.t_user) else {
        return false;
    };
    ring.keys.len() == path.len() && path.iter().all(|n| ring.keys.contains_key(n))
}

/// Result of a successful fetch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fetched {
    pub plaintext: Vec<u8>,
    pub node: NodeId,
    pub tag: Tag,
    pub hit: bool,
    /// Period the content was finally obtained under.
    pub t_curr: TimePeriod,
}

/// A client bound to one provider/cache pair and one cipher configuration.
pub struct Client<P, C> {
    pub provider: P,
    pub cache: C,
    cipher: Box<dyn ContentCipher>,
}

impl<P: ProviderApi, C: CacheApi> Client<P, C> {
    pub fn new(provider: P, cache: C, nonce_mode: NonceMode) -> Self {
        Self {
            provider,
            cache,
            cipher: Box::new(AesGcmCipher::new(nonce_mode)),
        }
    }

    pub fn with_cipher(provider: P, cache: C, cipher: Box<dyn ContentCipher>) -> Self {
        Self {
            provider,
            cache,
            cipher,
        }
    }

    pub fn request_content(&self, ring: &KeyRing, c_name: &str, t_curr: TimePeriod) -> Result<Vec<u8>> {
        self.fetch(ring, c_name, t_curr).map(|f| f.plaintext)
    }

    /// Full request flow.
    ///
    /// Aborts with `Revoked` before sending anything when `t_user < t_curr`.
    /// If the provider answers `NoEntry` and reports a different period than
    /// the one we assumed, the request is retried once under the provider's
    /// period; a second `NoEntry` becomes `StalePeriod`.
    pub fn fetch(&self, ring: &KeyRing, c_name: &str, t_curr: TimePeriod) -> Result<Fetched> {
        if !verify_ring(ring) {
            return Err(Error::Validation("malformed key ring".into()));
        }
        match self.attempt(ring, c_name, t_curr) {
            Err(Error::NoEntry(msg)) => {
                let sp_period = self.provider.current_period()?;
                if sp_period == t_curr {
                    return Err(Error::NoEntry(msg));
                }
                match self.attempt(ring, c_name, sp_period) {
                    Err(Error::NoEntry(msg)) => Err(Error::StalePeriod(msg)),
                    other => other,
                }
            }
            other => other,
        }
    }

    fn attempt(&self, ring: &KeyRing, c_name: &str, t_curr: TimePeriod) -> Result<Fetched> {
        let node = tree::eligible_node(ring.params, ring.t_user, t_curr)?.ok_or(Error::Revoked {
            t_user: ring.t_user.get(),
            t_curr: t_curr.get(),
        })?;
        let tag = self.provider.content_request(c_name, node)?;
        let (ct, hit) = self.cache.fetch(&tag)?;
        let key = ring.key(node).expect("verified ring holds every path key");
        let plaintext = self.cipher.open(key, &tag, &ct)?;
        Ok(Fetched {
            plaintext,
            node,
            tag,
            hit,
            t_curr,
        })
    }
}

/// One-shot convenience wrapper around [`Client::request_content`] with the
/// default 128-bit nonce mode.
pub fn request_content<P: ProviderApi, C: CacheApi>(
    ring: &KeyRing,
    c_name: &str,
    t_curr: TimePeriod,
    sp: P,
    cs: C,
) -> Result<Vec<u8>> {
    Client::new(sp, cs, NonceMode::default()).request_content(ring, c_name, t_curr)
}
