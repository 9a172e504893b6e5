//! Binary time tree with heap-style node numbering.
//!
//! The tree has `2^m` leaves, one per time period. The root is node 1, the
//! children of `x` are `2x` and `2x + 1`, and period `t` lives at leaf
//! `2^m + t - 1`. Revoking the expired periods `[1, r]` and covering the rest
//! with disjoint complete subtrees gives the set of node keys a content is
//! encrypted under during period `r + 1`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported depth exponent. Node ids must fit comfortably in `u64`.
pub const MAX_DEPTH: u32 = 32;

/// Shape of the time tree: depth exponent `m` and `t_max = 2^m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct TreeParams {
    m: u32,
}

impl TreeParams {
    pub fn new(m: u32) -> Result<Self> {
        if m == 0 || m > MAX_DEPTH {
            return Err(Error::Range(format!(
                "tree depth m={m} outside [1, {MAX_DEPTH}]"
            )));
        }
        Ok(Self { m })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    /// Maximum time period, `2^m`.
    pub fn t_max(&self) -> u64 {
        1u64 << self.m
    }

    /// Total number of nodes, `2^(m+1) - 1`.
    pub fn node_count(&self) -> u64 {
        (1u64 << (self.m + 1)) - 1
    }

    pub fn root(&self) -> NodeId {
        NodeId(1)
    }

    pub fn node(&self, value: u64) -> Result<NodeId> {
        if value == 0 || value > self.node_count() {
            return Err(Error::Range(format!(
                "node id {value} outside [1, {}]",
                self.node_count()
            )));
        }
        Ok(NodeId(value))
    }

    pub fn period(&self, value: u64) -> Result<TimePeriod> {
        if value == 0 || value > self.t_max() {
            return Err(Error::Range(format!(
                "time period {value} outside [1, {}]",
                self.t_max()
            )));
        }
        Ok(TimePeriod(value))
    }

    /// Iterates every node id of the tree in ascending order.
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (1..=self.node_count()).map(NodeId)
    }

    pub fn periods(&self) -> impl Iterator<Item = TimePeriod> {
        (1..=self.t_max()).map(TimePeriod)
    }

    pub fn leaf(&self, t: TimePeriod) -> NodeId {
        NodeId(self.t_max() + t.0 - 1)
    }

    pub fn is_leaf(&self, node: NodeId) -> bool {
        node.0 >= self.t_max()
    }

    /// Time period of a leaf node, `None` for interior nodes.
    pub fn period_of_leaf(&self, node: NodeId) -> Option<TimePeriod> {
        self.is_leaf(node).then(|| TimePeriod(node.0 - self.t_max() + 1))
    }

    /// Inclusive range of periods whose leaves sit below `node`.
    pub fn leaf_span(&self, node: NodeId) -> (TimePeriod, TimePeriod) {
        let level = 63 - node.0.leading_zeros();
        let height = self.m - level;
        let first_leaf = node.0 << height;
        let last_leaf = first_leaf + (1u64 << height) - 1;
        (
            TimePeriod(first_leaf - self.t_max() + 1),
            TimePeriod(last_leaf - self.t_max() + 1),
        )
    }

    fn contains(&self, node: NodeId) -> bool {
        node.0 >= 1 && node.0 <= self.node_count()
    }
}

impl TryFrom<u32> for TreeParams {
    type Error = Error;

    fn try_from(m: u32) -> Result<Self> {
        Self::new(m)
    }
}

impl From<TreeParams> for u32 {
    fn from(p: TreeParams) -> u32 {
        p.m
    }
}

/// Heap-numbered node identifier. Only meaningful relative to a [`TreeParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(u64);

impl NodeId {
    /// Any positive id. Membership in a particular tree is checked by the
    /// functions that take a [`TreeParams`].
    pub fn new(value: u64) -> Result<Self> {
        if value == 0 {
            return Err(Error::Range("node ids start at 1".into()));
        }
        Ok(Self(value))
    }

    pub fn get(self) -> u64 {
        self.0
    }

    pub fn parent(self) -> Option<NodeId> {
        (self.0 > 1).then_some(NodeId(self.0 / 2))
    }

    pub fn left(self) -> NodeId {
        NodeId(self.0 * 2)
    }

    pub fn right(self) -> NodeId {
        NodeId(self.0 * 2 + 1)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A time period in `[1, t_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimePeriod(u64);

impl TimePeriod {
    /// Any positive period; the upper bound depends on the tree.
    pub fn new(value: u64) -> Result<Self> {
        if value == 0 {
            return Err(Error::Range("time periods start at 1".into()));
        }
        Ok(Self(value))
    }

    pub fn get(self) -> u64 {
        self.0
    }
}

impl fmt::Display for TimePeriod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// Set of node ids whose subtrees are disjoint and together span every
/// non-revoked leaf.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoverSet {
    nodes: BTreeSet<NodeId>,
}

impl CoverSet {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.nodes.contains(&node)
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().copied()
    }

    /// Node ids as plain integers, ascending.
    pub fn ids(&self) -> Vec<u64> {
        self.nodes.iter().map(|n| n.0).collect()
    }
}

impl<'a> IntoIterator for &'a CoverSet {
    type Item = &'a NodeId;
    type IntoIter = std::collections::btree_set::Iter<'a, NodeId>;

    fn into_iter(self) -> Self::IntoIter {
        self.nodes.iter()
    }
}

/// Nodes from the leaf of `t` up to the root, leaf first. Always `m + 1` long.
pub fn path(params: TreeParams, t: TimePeriod) -> Result<Vec<NodeId>> {
    let t = params.period(t.0)?;
    let mut node = params.leaf(t);
    let mut out = Vec::with_capacity(params.m as usize + 1);
    loop {
        out.push(node);
        match node.parent() {
            Some(p) => node = p,
            None => break,
        }
    }
    Ok(out)
}

/// Complete-subtree cover for an arbitrary set of revoked periods.
///
/// `X` is the union of the revoked leaves' root paths; every child of a node
/// in `X` that is itself outside `X` goes into the cover. With nothing
/// revoked the cover is the root alone.
pub fn cover_for_revoked(params: TreeParams, revoked: &BTreeSet<TimePeriod>) -> Result<CoverSet> {
    if revoked.is_empty() {
        return Ok(CoverSet {
            nodes: BTreeSet::from([params.root()]),
        });
    }
    let mut steiner = BTreeSet::new();
    for &t in revoked {
        steiner.extend(path(params, t)?);
    }
    let mut nodes = BTreeSet::new();
    for &x in &steiner {
        if params.is_leaf(x) {
            continue;
        }
        for child in [x.left(), x.right()] {
            if !steiner.contains(&child) {
                nodes.insert(child);
            }
        }
    }
    Ok(CoverSet { nodes })
}

/// Cover after revoking the prefix of periods `[1, revoked_prefix]`.
///
/// `revoked_prefix = 0` yields the root; `revoked_prefix = t_max` yields the
/// empty cover (every period expired).
pub fn comp_subtree(params: TreeParams, revoked_prefix: u64) -> Result<CoverSet> {
    if revoked_prefix > params.t_max() {
        return Err(Error::Range(format!(
            "revoked prefix {revoked_prefix} outside [0, {}]",
            params.t_max()
        )));
    }
    let revoked = (1..=revoked_prefix).map(TimePeriod).collect();
    cover_for_revoked(params, &revoked)
}

/// Cover in force during `t_curr`, i.e. with `[1, t_curr - 1]` revoked.
pub fn cover_at(params: TreeParams, t_curr: TimePeriod) -> Result<CoverSet> {
    let t_curr = params.period(t_curr.0)?;
    comp_subtree(params, t_curr.0 - 1)
}

/// The node a holder of `t_user`'s path keys decrypts with during `t_curr`,
/// or `None` once `t_user` has expired.
pub fn eligible_node(
    params: TreeParams,
    t_user: TimePeriod,
    t_curr: TimePeriod,
) -> Result<Option<NodeId>> {
    let t_user = params.period(t_user.0)?;
    let cover = cover_at(params, t_curr)?;
    let mut hits = path(params, t_user)?.into_iter().filter(|n| cover.contains(*n));
    let found = hits.next();
    assert!(
        hits.next().is_none(),
        "prefix cover met path({t_user}) more than once"
    );
    debug_assert_eq!(found.is_some(), t_user >= t_curr);
    Ok(found)
}

/// True when `node` is a valid id for `params`. Convenience for callers
/// holding an untrusted `NodeId`.
pub fn in_tree(params: TreeParams, node: NodeId) -> bool {
    params.contains(node)
}
