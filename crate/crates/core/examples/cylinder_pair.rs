//! Two cylinder patches with the same SRNF that are not rigidly related.

use srnf_lab::counterexamples::gen_cylinder_pair;
use srnf_lab::metric::{certify_noncongruent, distance_report};

fn main() -> srnf_lab::Result<()> {
    let (f1, f2) = gen_cylinder_pair(2.0, 129, 129)?;
    let d = distance_report(&f1, &f2)?;
    println!("srnf distance {:.3e} (field norm {:.3})", d.distance, d.field_norms[0]);
    let a = certify_noncongruent(&f1, &f2, None)?;
    println!("best rigid fit residual {:.3} vs threshold {:.3e}", a.rms_residual, a.threshold);
    println!("congruent: {}", a.congruent);
    Ok(())
}
