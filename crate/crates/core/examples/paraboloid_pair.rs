//! Paraboloids with equal `a b` share their SRNF over the same square.

use srnf_lab::counterexamples::gen_paraboloid;
use srnf_lab::geom::Rect;
use srnf_lab::metric::{certify_noncongruent, distance_report};

fn main() -> srnf_lab::Result<()> {
    let rect = Rect { u0: -1.0, u1: 1.0, v0: -1.0, v1: 1.0 };
    for ((a1, b1), (a2, b2)) in [((1.0, 4.0), (2.0, 2.0)), ((0.5, -2.0), (-1.0, 1.0)), ((3.0, 1.0), (1.0, 3.0))] {
        let f1 = gen_paraboloid(a1, b1, rect, 129, 129)?;
        let f2 = gen_paraboloid(a2, b2, rect, 129, 129)?;
        let d = distance_report(&f1, &f2)?;
        let c = certify_noncongruent(&f1, &f2, None)?;
        println!(
            "({a1}, {b1}) vs ({a2}, {b2}): distance {:.2e}, max deviation {:.2e}, fit residual {:.3e}, congruent {}",
            d.distance, d.max_deviation, c.rms_residual, c.congruent
        );
    }
    Ok(())
}
