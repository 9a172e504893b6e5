//! Walks the m=3 toy tree: per-period covers, each user's path, and which
//! node (if any) a user may decrypt under at each period.
//!
//! `cargo run --example time_tree`

use chronocache::tree::{self, TreeParams};

fn main() -> chronocache::Result<()> {
    let params = TreeParams::new(3)?;
    println!("m={} t_max={} nodes={}", params.m(), params.t_max(), params.node_count());

    println!("\ncover in force at each period (revoked prefix [1, t-1]):");
    for t in params.periods() {
        println!("  {t}: {:?}", tree::cover_at(params, t)?.ids());
    }

    println!("\nroot paths:");
    for t in params.periods() {
        let ids: Vec<u64> = tree::path(params, t)?.iter().map(|n| n.get()).collect();
        println!("  {t}: {ids:?}");
    }

    println!("\neligible node (rows: t_user, columns: t_curr; '-' = revoked):");
    print!("      ");
    for c in params.periods() {
        print!("{:>4}", c.to_string());
    }
    println!();
    for u in params.periods() {
        print!("  {:<4}", u.to_string());
        for c in params.periods() {
            match tree::eligible_node(params, u, c)? {
                Some(n) => print!("{:>4}", n.get()),
                None => print!("{:>4}", "-"),
            }
        }
        println!();
    }
    Ok(())
}
