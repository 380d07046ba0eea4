//! Runs the probe batteries at full resolution and prints each claim.

use std::time::Instant;

use srnf_lab::verify::{Scorecard, convex_scorecard, gauss_scorecard, invariance_scorecard, sphere_scorecard};

type Battery = fn(usize, u64) -> srnf_lab::Result<Scorecard>;

fn main() -> srnf_lab::Result<()> {
    let n = 129;
    let start = Instant::now();
    let batteries: [(&str, Battery); 4] = [
        ("invariance", |n, seed| invariance_scorecard(n, seed, 20)),
        ("gauss", gauss_scorecard),
        ("sphere", sphere_scorecard),
        ("convex", convex_scorecard),
    ];
    for (name, run) in batteries {
        let card = run(n, 7)?;
        println!("[{name}] {:.1?}", start.elapsed());
        for c in &card.claims {
            let mark = if c.passed { "ok  " } else { "FAIL" };
            println!("  {mark} {}: {:.3e} (tol {:.1e}) {}", c.name, c.value, c.tolerance, c.detail);
        }
    }
    Ok(())
}
