use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use chronocache::crypto::NonceMode;
use chronocache::sim::{assign_users, run_experiment, to_csv, Experiment, SimConfig, SimMode, Zipf};
use chronocache::tree::{self, TreeParams};

fn config(seed: u64, capacities: Vec<usize>) -> SimConfig {
    SimConfig {
        m: 3,
        n_users: 64,
        n_contents: 200,
        requests_per_user_per_period: 8,
        capacities,
        zipf_s: 1.5,
        zipf_v: 2.0,
        content_size_bytes: 16,
        seed,
        mode: SimMode::InProcess,
        nonce_mode: NonceMode::Bits128,
    }
}

#[test]
fn zipf_top_ranks_within_three_sigma() {
    let (s, v, n) = (3.0, 3000.0, 65_535usize);
    let z = Zipf::new(s, v, n).unwrap();
    // Exact masses from an independent normalization.
    let norm: f64 = (0..n).map(|k| (v + k as f64).powf(-s)).sum();
    let draws = 1_000_000usize;
    let mut counts = [0usize; 10];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..draws {
        let k = z.sample(&mut rng);
        if k < 10 {
            counts[k] += 1;
        }
    }
    for (k, &c) in counts.iter().enumerate() {
        let p = (v + k as f64).powf(-s) / norm;
        assert!((z.pmf(k) - p).abs() < 1e-15);
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        assert!((c as f64 - draws as f64 * p).abs() <= 3.0 * sigma, "rank {k}: {c} vs {}", draws as f64 * p);
    }
    // Frozen value of the exact mass at rank 0.
    assert!((z.pmf(0) - 0.000_667_723_497_273_066_5).abs() < 1e-15);
}

#[test]
fn reference_assignment_is_128_per_leaf() {
    let users = assign_users(&SimConfig::reference()).unwrap();
    let mut per_leaf = BTreeMap::new();
    for t in users {
        *per_leaf.entry(t.get()).or_insert(0) += 1;
    }
    assert_eq!(per_leaf.len(), 16);
    assert!(per_leaf.values().all(|&n| n == 128));
}

#[test]
fn networked_mode_matches_in_process() {
    let mut cfg = config(5, vec![16, 64]);
    cfg.n_users = 16;
    cfg.requests_per_user_per_period = 4;
    let local = run_experiment(&cfg).unwrap();
    cfg.mode = SimMode::Networked;
    let remote = run_experiment(&cfg).unwrap();
    assert_eq!(to_csv(&local), to_csv(&remote));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn run_invariants(seed in any::<u64>()) {
        let cfg = config(seed, vec![8, 32, 128]);
        let params = TreeParams::new(cfg.m).unwrap();
        let exp = Experiment::new(cfg.clone()).unwrap();
        let mut violations = Vec::new();
        let rows = exp.run(|d| {
            if d.revoked_successes != 0 {
                violations.push(format!("revoked success at {}", d.row.period));
            }
            let cover = d.row.cover_size;
            if d.nodes_per_content.values().any(|nodes| nodes.len() > cover) {
                violations.push(format!("more tags than cover nodes at {}", d.row.period));
            }
            let bound = (cover * d.nodes_per_content.len()) as u64;
            if d.row.duplicated_entries > bound {
                violations.push(format!("duplication bound broken at {}", d.row.period));
            }
        }).unwrap();
        prop_assert!(violations.is_empty(), "{:?}", violations);
        prop_assert_eq!(rows.len(), 8 * 3);
        for chunk in rows.chunks(3) {
            let cover = tree::comp_subtree(params, chunk[0].period - 1).unwrap().len();
            for r in chunk {
                prop_assert_eq!(r.cover_size, cover);
                let expected = r.hits as f64 / (r.requests - r.revoked_attempts).max(1) as f64;
                prop_assert_eq!(r.hit_ratio, expected);
            }
            prop_assert!(chunk[0].hit_ratio <= chunk[1].hit_ratio);
            prop_assert!(chunk[1].hit_ratio <= chunk[2].hit_ratio);
        }
        prop_assert_eq!(to_csv(&rows), to_csv(&run_experiment(&cfg).unwrap()));
    }
}
