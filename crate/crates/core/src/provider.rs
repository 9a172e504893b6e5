//! Service provider: holds the catalog and node keys, hands out path keys,
//! and lazily encrypts content under whichever cover node a user asks for.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::{Arc, RwLock};

use tracing::debug;

use crate::crypto::{
    derive_tag, AesGcmCipher, Ciphertext, ContentCipher, ContentKey, MacKey, NodeKeySet, NonceMode,
    Tag,
};
use crate::error::{Error, Result};
use crate::tree::{self, CoverSet, NodeId, TimePeriod, TreeParams};

/// A cataloged content and the ciphertexts materialized for it so far.
#[derive(Debug, Clone)]
pub struct ContentRecord {
    pub c_name: String,
    pub content: Arc<[u8]>,
    pub entries: BTreeMap<NodeId, (Tag, Ciphertext)>,
}

/// Provider-side content table with a reverse index from tag to entry.
#[derive(Debug, Default)]
pub struct ConTbl {
    by_name: HashMap<String, ContentRecord>,
    by_tag: HashMap<Tag, (String, NodeId)>,
}

impl ConTbl {
    pub fn get(&self, c_name: &str) -> Option<&ContentRecord> {
        self.by_name.get(c_name)
    }

    pub fn lookup_tag(&self, tag: &Tag) -> Option<(&str, NodeId)> {
        self.by_tag.get(tag).map(|(n, node)| (n.as_str(), *node))
    }

    pub fn contents(&self) -> impl Iterator<Item = &ContentRecord> {
        self.by_name.values()
    }

    pub fn content_count(&self) -> usize {
        self.by_name.len()
    }

    /// Number of materialized (tag, ciphertext) entries across all contents.
    pub fn entry_count(&self) -> usize {
        self.by_tag.len()
    }

    fn register(&mut self, c_name: String, content: Arc<[u8]>) -> Result<()> {
        if content.is_empty() {
            return Err(Error::Validation(format!("content {c_name:?} is empty")));
        }
        if self.by_name.contains_key(&c_name) {
            return Err(Error::Validation(format!("duplicate content name {c_name:?}")));
        }
        self.by_name.insert(
            c_name.clone(),
            ContentRecord {
                c_name,
                content,
                entries: BTreeMap::new(),
            },
        );
        Ok(())
    }

    /// Inserts unless an entry for `(c_name, node)` already exists; returns the
    /// canonical tag either way.
    fn insert(&mut self, c_name: &str, node: NodeId, tag: Tag, ct: Ciphertext) -> Tag {
        let record = self.by_name.get_mut(c_name).expect("content registered");
        let (tag, _) = record.entries.entry(node).or_insert_with(|| {
            self.by_tag.insert(tag, (c_name.to_owned(), node));
            (tag, ct)
        });
        *tag
    }

    fn check_bijection(&self) -> Result<(), String> {
        let forward: usize = self.by_name.values().map(|r| r.entries.len()).sum();
        if forward != self.by_tag.len() {
            return Err(format!(
                "{forward} entries by name but {} by tag",
                self.by_tag.len()
            ));
        }
        for (tag, (name, node)) in &self.by_tag {
            let entry = self
                .by_name
                .get(name)
                .and_then(|r| r.entries.get(node))
                .ok_or_else(|| format!("tag {tag} points at missing entry {name}/{node}"))?;
            if entry.0 != *tag {
                return Err(format!("tag mismatch for {name}/{node}"));
            }
        }
        Ok(())
    }
}

struct State {
    contbl: ConTbl,
    t_curr: TimePeriod,
    cover: CoverSet,
}

/// Provider state machine. All methods take `&self`; share it behind an `Arc`.
pub struct Provider {
    params: TreeParams,
    keyset: NodeKeySet,
    mac_key: MacKey,
    cipher: Arc<dyn ContentCipher>,
    state: RwLock<State>,
}

impl std::fmt::Debug for Provider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let st = self.state.read().unwrap();
        f.debug_struct("Provider")
            .field("m", &self.params.m())
            .field("t_curr", &st.t_curr)
            .field("contents", &st.contbl.content_count())
            .field("entries", &st.contbl.entry_count())
            .finish()
    }
}

impl Provider {
    /// Starts at period 1 with an empty catalog.
    pub fn new(keyset: NodeKeySet, mac_key: MacKey, nonce_mode: NonceMode) -> Self {
        Self::with_cipher(keyset, mac_key, Arc::new(AesGcmCipher::new(nonce_mode)))
    }

    pub fn with_cipher(keyset: NodeKeySet, mac_key: MacKey, cipher: Arc<dyn ContentCipher>) -> Self {
        let params = keyset.params();
        let t1 = params.period(1).expect("period 1 always exists");
        Self {
            params,
            keyset,
            mac_key,
            cipher,
            state: RwLock::new(State {
                contbl: ConTbl::default(),
                t_curr: t1,
                cover: tree::cover_at(params, t1).expect("valid period"),
            }),
        }
    }

    pub fn params(&self) -> TreeParams {
        self.params
    }

    pub fn cipher(&self) -> Arc<dyn ContentCipher> {
        Arc::clone(&self.cipher)
    }

    pub fn t_curr(&self) -> TimePeriod {
        self.state.read().unwrap().t_curr
    }

    pub fn current_cover(&self) -> CoverSet {
        self.state.read().unwrap().cover.clone()
    }

    /// Registers a content without encrypting it; entries are created on demand.
    pub fn add_content(&self, c_name: impl Into<String>, content: impl Into<Arc<[u8]>>) -> Result<()> {
        self.state
            .write()
            .unwrap()
            .contbl
            .register(c_name.into(), content.into())
    }

    /// Path keys for period `t`, leaf first.
    pub fn send_key(&self, user_id: &str, t: TimePeriod) -> Result<Vec<(NodeId, ContentKey)>> {
        let path = tree::path(self.params, t)?;
        debug!(user_id, t = t.get(), "issuing path keys");
        Ok(path
            .into_iter()
            .map(|n| (n, self.keyset.get(n).expect("keyset covers every node").clone()))
            .collect())
    }

    /// Registers each content and eagerly encrypts it under every node of
    /// the cover in force during its period.
    pub fn gen_table<I, S, B>(&self, contents: I) -> Result<()>
    where
        I: IntoIterator<Item = (S, B, TimePeriod)>,
        S: Into<String>,
        B: Into<Arc<[u8]>>,
    {
        let batch: Vec<(String, Arc<[u8]>, TimePeriod)> = contents
            .into_iter()
            .map(|(n, b, t)| (n.into(), b.into(), t))
            .collect();

        // Validate the whole batch before touching the table.
        {
            let st = self.state.read().unwrap();
            let mut seen = HashSet::new();
            for (name, content, t) in &batch {
                self.params.period(t.get())?;
                if content.is_empty() {
                    return Err(Error::Validation(format!("content {name:?} is empty")));
                }
                if !seen.insert(name.as_str()) || st.contbl.get(name).is_some() {
                    return Err(Error::Validation(format!("duplicate content name {name:?}")));
                }
            }
        }

        let mut prepared = Vec::with_capacity(batch.len());
        for (name, content, t) in batch {
            let cover = tree::cover_at(self.params, t)?;
            let entries: Vec<_> = cover
                .iter()
                .map(|node| self.seal(&content, node).map(|(tag, ct)| (node, tag, ct)))
                .collect::<Result<_>>()?;
            prepared.push((name, content, entries));
        }

        let mut st = self.state.write().unwrap();
        for (name, content, entries) in prepared {
            st.contbl.register(name.clone(), content)?;
            for (node, tag, ct) in entries {
                st.contbl.insert(&name, node, tag, ct);
            }
        }
        Ok(())
    }

    /// Returns the tag for `(c_name, node)`, creating the entry if needed.
    ///
    /// `node` must belong to the provider's current cover; otherwise the
    /// request is answered with `NoEntry` whether or not a stale entry exists.
    pub fn handle_content_request(&self, c_name: &str, node: NodeId) -> Result<Tag> {
        if !tree::in_tree(self.params, node) {
            return Err(Error::Validation(format!(
                "node {node} outside [1, {}]",
                self.params.node_count()
            )));
        }
        let content = {
            let st = self.state.read().unwrap();
            let record = st
                .contbl
                .get(c_name)
                .ok_or_else(|| Error::NotFound(format!("unknown content {c_name:?}")))?;
            if !st.cover.contains(node) {
                return Err(no_entry(c_name, node, st.t_curr));
            }
            if let Some((tag, _)) = record.entries.get(&node) {
                return Ok(*tag);
            }
            Arc::clone(&record.content)
        };

        // Encrypt outside the lock; concurrent duplicates collapse on insert.
        let (tag, ct) = self.seal(&content, node)?;
        let mut st = self.state.write().unwrap();
        if !st.cover.contains(node) {
            return Err(no_entry(c_name, node, st.t_curr));
        }
        Ok(st.contbl.insert(c_name, node, tag, ct))
    }

    pub fn handle_cache_request(&self, tag: &Tag) -> Result<Ciphertext> {
        let st = self.state.read().unwrap();
        let (name, node) = st
            .contbl
            .lookup_tag(tag)
            .ok_or_else(|| Error::NotFound(format!("unknown tag {tag}")))?;
        Ok(st.contbl.get(name).expect("index consistent").entries[&node].1.clone())
    }

    /// Moves the provider to period `t_new`. Existing entries are kept.
    pub fn advance_period(&self, t_new: TimePeriod) -> Result<TimePeriod> {
        let t_new = self.params.period(t_new.get())?;
        let mut st = self.state.write().unwrap();
        if t_new < st.t_curr {
            return Err(Error::Validation(format!(
                "cannot move back from {} to {t_new}",
                st.t_curr
            )));
        }
        if t_new != st.t_curr {
            st.cover = tree::cover_at(self.params, t_new)?;
            st.t_curr = t_new;
        }
        Ok(t_new)
    }

    /// Read access to the content table.
    pub fn with_contbl<R>(&self, f: impl FnOnce(&ConTbl) -> R) -> R {
        f(&self.state.read().unwrap().contbl)
    }

    /// Checks the tag index against the name index and that every stored
    /// ciphertext opens to its content under its node key.
    pub fn audit(&self) -> Result<(), String> {
        let st = self.state.read().unwrap();
        st.contbl.check_bijection()?;
        for record in st.contbl.contents() {
            for (node, (tag, ct)) in &record.entries {
                let expected = derive_tag(&self.mac_key, &record.content, *node)
                    .map_err(|e| e.to_string())?;
                if expected != *tag {
                    return Err(format!("{}/{node}: tag does not match content", record.c_name));
                }
                let key = self.keyset.get(*node).expect("node key");
                match self.cipher.open(key, tag, ct) {
                    Ok(pt) if *pt == *record.content => {}
                    _ => return Err(format!("{}/{node}: ciphertext does not open", record.c_name)),
                }
            }
        }
        Ok(())
    }

    fn seal(&self, content: &[u8], node: NodeId) -> Result<(Tag, Ciphertext)> {
        let tag = derive_tag(&self.mac_key, content, node)?;
        let key = self.keyset.get(node).expect("keyset covers every node");
        Ok((tag, self.cipher.seal(key, &tag, content)))
    }
}

fn no_entry(c_name: &str, node: NodeId, t_curr: TimePeriod) -> Error {
    Error::NoEntry(format!("node {node} is not in the cover for {t_curr} (content {c_name:?})"))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::crypto::{decrypt, keygen};

    fn provider(m: u32) -> Provider {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let params = TreeParams::new(m).unwrap();
        Provider::new(keygen(params, &mut rng), MacKey::random(&mut rng), NonceMode::Bits128)
    }

    fn node(p: &Provider, v: u64) -> NodeId {
        p.params().node(v).unwrap()
    }

    fn period(p: &Provider, v: u64) -> TimePeriod {
        p.params().period(v).unwrap()
    }

    #[test]
    fn send_key_returns_path() {
        let p = provider(3);
        let keys = p.send_key("u2", period(&p, 2)).unwrap();
        let nodes: Vec<u64> = keys.iter().map(|(n, _)| n.get()).collect();
        assert_eq!(nodes, vec![9, 4, 2, 1]);
        assert_eq!(keys, p.send_key("u3", period(&p, 2)).unwrap());

        let small = provider(1);
        let nodes: Vec<u64> = small
            .send_key("u", period(&small, 2))
            .unwrap()
            .iter()
            .map(|(n, _)| n.get())
            .collect();
        assert_eq!(nodes, vec![3, 1]);
        let p4 = provider(4);
        assert_eq!(p4.send_key("u", period(&p4, 11)).unwrap().len(), 5);
    }

    #[test]
    fn gen_table_uses_cover_nodes() {
        let p = provider(3);
        p.gen_table([
            ("ep1", b"episode one".to_vec(), period(&p, 1)),
            ("ep2", b"episode two".to_vec(), period(&p, 2)),
            ("ep4", b"episode four".to_vec(), period(&p, 4)),
        ])
        .unwrap();
        let nodes = |name: &str| -> Vec<u64> {
            p.with_contbl(|t| t.get(name).unwrap().entries.keys().map(|n| n.get()).collect())
        };
        assert_eq!(nodes("ep1"), vec![1]);
        assert_eq!(nodes("ep2"), vec![3, 5, 9]);
        assert_eq!(nodes("ep4"), vec![3, 11]);
        p.audit().unwrap();
    }

    #[test]
    fn gen_table_rejects_duplicates() {
        let p = provider(3);
        let err = p
            .gen_table([("a", vec![1u8], period(&p, 1)), ("a", vec![2u8], period(&p, 1))])
            .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert_eq!(p.with_contbl(|t| t.content_count()), 0);
        p.add_content("b", vec![1u8]).unwrap();
        assert!(p.gen_table([("b", vec![3u8], period(&p, 1))]).is_err());
    }

    #[test]
    fn content_request_follows_current_cover() {
        let p = provider(3);
        p.add_content("ep", b"episode".to_vec()).unwrap();
        p.advance_period(period(&p, 2)).unwrap();

        let tag = p.handle_content_request("ep", node(&p, 9)).unwrap();
        let ct = p.handle_cache_request(&tag).unwrap();
        let keys = p.send_key("u2", period(&p, 2)).unwrap();
        let k9 = &keys[0].1;
        assert_eq!(decrypt(k9, &tag, &ct).unwrap(), b"episode");

        assert!(matches!(p.handle_content_request("ep", node(&p, 1)), Err(Error::NoEntry(_))));
        assert!(matches!(p.handle_content_request("nope", node(&p, 9)), Err(Error::NotFound(_))));
        assert!(matches!(
            p.handle_cache_request(&Tag::from_bytes([7; 32])),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn memoized_entries_are_stable() {
        let p = provider(3);
        p.add_content("ep", b"episode".to_vec()).unwrap();
        let t1 = p.handle_content_request("ep", node(&p, 1)).unwrap();
        let t2 = p.handle_content_request("ep", node(&p, 1)).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(
            p.handle_cache_request(&t1).unwrap(),
            p.handle_cache_request(&t1).unwrap()
        );
        assert_eq!(p.with_contbl(|t| t.entry_count()), 1);
    }

    #[test]
    fn advance_is_monotone() {
        let p = provider(3);
        assert_eq!(p.current_cover().ids(), vec![1]);
        p.advance_period(period(&p, 2)).unwrap();
        assert_eq!(p.current_cover().ids(), vec![3, 5, 9]);
        p.advance_period(period(&p, 2)).unwrap();
        assert!(matches!(p.advance_period(period(&p, 1)), Err(Error::Validation(_))));
        assert_eq!(p.t_curr().get(), 2);
    }

    #[test]
    fn entries_survive_advance() {
        let p = provider(3);
        p.add_content("ep", b"episode".to_vec()).unwrap();
        p.advance_period(period(&p, 2)).unwrap();
        let tag3 = p.handle_content_request("ep", node(&p, 3)).unwrap();
        p.advance_period(period(&p, 4)).unwrap();
        // Node 3 is still in the cover at t4 and the entry is reused.
        assert_eq!(p.handle_content_request("ep", node(&p, 3)).unwrap(), tag3);
        assert!(p.handle_cache_request(&tag3).is_ok());
    }

    #[test]
    fn concurrent_lazy_creation_yields_one_entry() {
        let p = Arc::new(provider(4));
        p.add_content("hot", vec![42u8; 4096]).unwrap();
        let tags: Vec<Tag> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8)
                .map(|_| {
                    let p = Arc::clone(&p);
                    s.spawn(move || p.handle_content_request("hot", p.params().root()).unwrap())
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert!(tags.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(p.with_contbl(|t| t.entry_count()), 1);
        p.audit().unwrap();
    }
}
