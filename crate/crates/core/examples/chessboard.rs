//! Builds the two-piece chessboard pair and prints its certificates.

use std::time::Instant;

use srnf_lab::counterexamples::{gen_chessboard, max_normal_angle, ChessboardSpec};
use srnf_lab::metric::{certify_noncongruent, distance_report};

fn main() -> srnf_lab::Result<()> {
    let start = Instant::now();
    let cb = gen_chessboard(&ChessboardSpec::default())?;
    println!("built in {:.1?}: {} samples", start.elapsed(), cb.id.sample_count());
    println!("flat place mesh: {} nodes, legs {:?}", cb.domain.mesh.nodes.len(), cb.moser.plan.legs);
    let c = &cb.moser.certificate;
    println!(
        "moser: max |det J - 1| = {:.2e} (tube flows alone {:.2e}), collar deviation {:.2e}",
        c.max_detj_dev, c.initial_max_detj_dev, c.collar_dev
    );
    let r = distance_report(&cb.id, &cb.f)?;
    println!("distance {:.3e}, field norm {:.3e}", r.distance, r.field_norms[0]);
    println!("max normal angle {:.2e} rad", max_normal_angle(&cb.id, &cb.f)?);
    let a = certify_noncongruent(&cb.id, &cb.f, None)?;
    println!(
        "alignment residual {:.3e} vs threshold {:.3e}: congruent = {}",
        a.rms_residual, a.threshold, a.congruent
    );
    println!("total {:.1?}", start.elapsed());
    Ok(())
}
