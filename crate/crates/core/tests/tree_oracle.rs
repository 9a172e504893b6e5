mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use chronocache::tree::{self, TimePeriod, TreeParams};
use common::{brute_cover, span};

#[test]
fn prefix_cover_matches_brute_force_for_small_trees() {
    for m in 1..=6u32 {
        let params = TreeParams::new(m).unwrap();
        for r in 0..=params.t_max() {
            let got = tree::comp_subtree(params, r).unwrap().ids();
            assert_eq!(got, brute_cover(m, |t| t <= r), "m={m} r={r}");
            if r < params.t_max() {
                assert_eq!(got.len() as u32, (params.t_max() - r).count_ones(), "m={m} r={r}");
            }
            if r >= 1 && r < params.t_max() {
                assert!(got.len() as u32 <= m, "m={m} r={r}");
            }
        }
    }
}

#[test]
fn cover_is_disjoint_and_exact() {
    for m in 1..=6u32 {
        let params = TreeParams::new(m).unwrap();
        for r in 0..params.t_max() {
            let mut leaves = BTreeSet::new();
            for n in tree::comp_subtree(params, r).unwrap().ids() {
                let (a, b) = span(m, n);
                for t in a..=b {
                    assert!(leaves.insert(t), "leaf {t} covered twice (m={m} r={r})");
                }
            }
            assert_eq!(leaves, (r + 1..=params.t_max()).collect::<BTreeSet<_>>());
        }
    }
}

#[test]
fn eligible_node_is_path_cover_intersection() {
    for m in 1..=5u32 {
        let params = TreeParams::new(m).unwrap();
        for u in params.periods() {
            let path: BTreeSet<u64> = tree::path(params, u).unwrap().iter().map(|n| n.get()).collect();
            for c in params.periods() {
                let cover: BTreeSet<u64> = tree::cover_at(params, c).unwrap().ids().into_iter().collect();
                let meet: Vec<u64> = path.intersection(&cover).copied().collect();
                let got = tree::eligible_node(params, u, c).unwrap().map(|n| n.get());
                if u < c {
                    assert!(meet.is_empty());
                    assert_eq!(got, None);
                } else {
                    assert_eq!(meet.len(), 1, "m={m} u={u} c={c}");
                    assert_eq!(got, Some(meet[0]));
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn general_revocation_matches_brute_force(m in 1u32..=6, bits in any::<u64>()) {
        let params = TreeParams::new(m).unwrap();
        let revoked: BTreeSet<TimePeriod> = params
            .periods()
            .filter(|t| bits >> (t.get() - 1) & 1 == 1)
            .collect();
        let got = tree::cover_for_revoked(params, &revoked).unwrap().ids();
        let want = brute_cover(m, |t| revoked.iter().any(|r| r.get() == t));
        prop_assert_eq!(got, want);
    }

    #[test]
    fn path_runs_leaf_to_root(m in 1u32..=20, raw in any::<u64>()) {
        let params = TreeParams::new(m).unwrap();
        let t = params.period(raw % params.t_max() + 1).unwrap();
        let p = tree::path(params, t).unwrap();
        prop_assert_eq!(p.len() as u32, m + 1);
        prop_assert_eq!(p[0], params.leaf(t));
        prop_assert_eq!(p[m as usize], params.root());
        for w in p.windows(2) {
            prop_assert_eq!(w[0].parent(), Some(w[1]));
        }
    }
}
