//! Runs the reference workload (16 periods, 2048 users, 65,535 contents,
//! Zipf s=3 v=3000, capacities 4096/8192/16384) and prints the CSV.
//!
//! `cargo run --release --example reference_simulation [seed] > metrics.csv`

use std::time::Instant;

use chronocache::sim::{no_cache_upstream_bytes, to_csv, Experiment, SimConfig};

fn main() -> chronocache::Result<()> {
    let mut config = SimConfig::reference();
    if let Some(seed) = std::env::args().nth(1) {
        config.seed = seed
            .parse()
            .map_err(|_| chronocache::Error::Validation(format!("bad seed {seed:?}")))?;
    }
    eprintln!("seed={}", config.seed);

    let started = Instant::now();
    let exp = Experiment::new(config.clone())?;
    let rows = exp.run(|d| {
        eprintln!(
            "capacity={:>5} period={:>2} hit_ratio={:.4} cover={} revoked={}",
            d.row.capacity, d.row.period, d.row.hit_ratio, d.row.cover_size, d.row.revoked_attempts
        )
    })?;
    print!("{}", to_csv(&rows));

    let first = config.capacities[0];
    let at_first: Vec<_> = rows.iter().filter(|r| r.capacity == first).cloned().collect();
    let upstream: u64 = at_first.iter().map(|r| r.upstream_bytes).sum();
    let baseline = no_cache_upstream_bytes(&config, &at_first);
    eprintln!(
        "capacity {first}: upstream {upstream} B vs {baseline} B without a cache ({:.1}% reduction)",
        100.0 * (1.0 - upstream as f64 / baseline as f64)
    );
    eprintln!("elapsed {:.1?}", started.elapsed());
    Ok(())
}
