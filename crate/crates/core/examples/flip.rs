//! Closed surface whose cap is turned over by an area-preserving twist.

use std::time::Instant;

use srnf_lab::counterexamples::{gen_flip, max_normal_angle, FlipSpec, TwistProfile};
use srnf_lab::curvature::gauss_bonnet_check;
use srnf_lab::metric::{certify_noncongruent, distance_report};

fn main() -> srnf_lab::Result<()> {
    let start = Instant::now();
    let spec = FlipSpec::default();
    let (id, f) = gen_flip(&spec, &TwistProfile::standard(spec.twist_margin))?;
    println!("built in {:.1?}: {} samples", start.elapsed(), id.sample_count());
    let d = distance_report(&id, &f)?;
    println!("distance {:.3e}, relative {:.3e}", d.distance, d.distance / d.field_norms[0]);
    println!("max normal angle {:.2e} rad", max_normal_angle(&id, &f)?);
    println!("gauss-bonnet error {:.2e}", (gauss_bonnet_check(&f)? - 4.0 * std::f64::consts::PI).abs());
    let a = certify_noncongruent(&id, &f, None)?;
    println!("fit residual {:.3e} vs {:.3e}: congruent {}", a.rms_residual, a.threshold, a.congruent);
    Ok(())
}
