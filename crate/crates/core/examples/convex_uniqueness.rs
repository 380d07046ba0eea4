//! Convex surfaces are pinned down by their SRNF up to translation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use srnf_lab::curvature::convex_uniqueness_probe;
use srnf_lab::geom::Vec3;
use srnf_lab::shapes::{self, ConvexBlob};

fn main() -> srnf_lab::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let blob = ConvexBlob::random(&mut rng, 6).surface(65).sample()?;
    let shifted = blob.translated(&Vec3::new(1.0, 2.0, -0.5));
    let other = shapes::ellipsoid(65, [1.0, 0.9, 1.1]).sample_like(&blob)?;
    for (name, g) in [("translate", &shifted), ("ellipsoid", &other)] {
        let r = convex_uniqueness_probe(&blob, g, 1e-8)?;
        println!(
            "{name:10} distance {:.3e}  residual {:?}  curvature witness {:?}  passed {}",
            r.distance, r.residual, r.curvature_witness, r.passed
        );
    }
    Ok(())
}
