//! Probe batteries with pass/fail scorecards.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::counterexamples::{gen_flip, FlipSpec, TwistProfile};
use crate::curvature::{
    convex_uniqueness_probe, gauss_bonnet_check, gauss_map_area_factor, gaussian_curvature,
    sphere_rigidity_battery, sphere_rigidity_probe,
};
use crate::error::Result;
use crate::geom::{srnf, ParametricSurface, RigidMotion, SurfaceImmersion, Vec3};
use crate::metric::{field_distance, l2_norm, reparam_act, rotate_field, srnf_distance, Reparametrization};
use crate::shapes::{self, ConvexBlob};

#[derive(Clone, Debug, Serialize)]
pub struct Claim {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    /// `value <= tolerance` or `value > tolerance` for a pass.
    pub sense: Sense,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    AtMost,
    Above,
}

impl Claim {
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64, detail: impl Into<String>) -> Claim {
        Claim {
            name: name.into(),
            passed: value <= tolerance,
            value,
            tolerance,
            sense: Sense::AtMost,
            detail: detail.into(),
        }
    }

    pub fn above(name: impl Into<String>, value: f64, tolerance: f64, detail: impl Into<String>) -> Claim {
        Claim {
            name: name.into(),
            passed: value > tolerance,
            value,
            tolerance,
            sense: Sense::Above,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Scorecard {
    pub claims: Vec<Claim>,
}

impl Scorecard {
    pub fn passed(&self) -> bool {
        self.claims.iter().all(|c| c.passed)
    }

    pub fn extend(&mut self, other: Scorecard) {
        self.claims.extend(other.claims);
    }
}

/// One seeded `(A, phi, t)` triple of the invariance battery.
#[derive(Clone, Debug, Serialize)]
pub struct InvarianceCase {
    pub index: usize,
    pub distance: f64,
    pub moved_distance: f64,
    /// `|d - d'| / d`.
    pub invariance: f64,
    /// `||A q o phi sqrt(b) - q(A f o phi + t)|| / ||q||`.
    pub equivariance: f64,
}

fn invariance_pair(n: usize) -> (ParametricSurface, ParametricSurface) {
    (
        shapes::ellipsoid(n, [1.0, 0.8, 1.3]),
        shapes::bumped_sphere(n, Vec3::new(0.2, 0.4, -0.9), 0.15, 0.6),
    )
}

/// Distance invariance and SRNF equivariance under seeded random rotations,
/// bump reparametrizations and translations, on two smooth closed surfaces
/// sampled on `n x n` cubed-sphere patches.
pub fn invariance_battery(n: usize, seed: u64, count: usize) -> Result<Vec<InvarianceCase>> {
    let (s1, s2) = invariance_pair(n);
    let f1 = s1.sample()?;
    let f2 = s2.sample_like(&f1)?;
    let q1 = srnf(&f1)?;
    let d = srnf_distance(&f1, &f2)?;
    let layouts: Vec<_> = f1.patches.iter().map(|p| p.layout()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|index| {
            let motion = RigidMotion::random(&mut rng, 2.0);
            let eps = rng.gen_range(0.02..0.06);
            let phi = Reparametrization::random_bump(&mut rng, &layouts, eps)?;
            let maps = phi.as_self_maps();
            let apply = move |p: Vec3| motion.apply(&p);
            let g1 = s1.reparametrize(&maps).map_ambient(apply).sample_like(&f1)?;
            let g2 = s2.reparametrize(&maps).map_ambient(apply).sample_like(&f1)?;
            let moved = srnf_distance(&g1, &g2)?;
            let acted = reparam_act(&rotate_field(&q1, &motion.rotation)?, &phi)?;
            let direct = srnf(&g1)?;
            Ok(InvarianceCase {
                index,
                distance: d,
                moved_distance: moved,
                invariance: (d - moved).abs() / d,
                equivariance: field_distance(&acted, &direct)? / l2_norm(&q1),
            })
        })
        .collect()
}

pub fn invariance_scorecard(n: usize, seed: u64, count: usize) -> Result<Scorecard> {
    let cases = invariance_battery(n, seed, count)?;
    let inv = cases.iter().map(|c| c.invariance).fold(0.0, f64::max);
    let eqv = cases.iter().map(|c| c.equivariance).fold(0.0, f64::max);
    Ok(Scorecard {
        claims: vec![
            Claim::at_most(
                "distance invariance",
                inv,
                1e-6,
                format!("{count} triples, seed {seed}, max |d - d'| / d"),
            ),
            Claim::at_most(
                "srnf equivariance",
                eqv,
                1e-6,
                format!("{count} triples, seed {seed}, max residual / field norm"),
            ),
        ],
    })
}

/// Largest `|G - |K||` over the samples of `f`, with `G` the Gauss map area factor.
pub fn gauss_factor_deviation(f: &SurfaceImmersion) -> Result<f64> {
    let g = gauss_map_area_factor(f)?;
    let k = gaussian_curvature(f)?;
    Ok(g.iter()
        .flatten()
        .zip(k.k_values())
        .map(|(g, k)| (g - k.abs()).abs())
        .fold(0.0, f64::max))
}

/// Gauss map factor against `|K|` on analytic surfaces at resolution `n`, and
/// Gauss-Bonnet on closed genus-0 surfaces.
pub fn gauss_scorecard(n: usize, seed: u64) -> Result<Scorecard> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut analytic: Vec<(String, ParametricSurface)> = vec![
        ("sphere".into(), shapes::cubed_sphere(n)),
        ("ellipsoid 1:0.8:1.3".into(), shapes::ellipsoid(n, [1.0, 0.8, 1.3])),
        ("cylinder".into(), shapes::unit_cylinder(n, n)),
        (
            "paraboloid (1, 4)".into(),
            shapes::paraboloid(1.0, 4.0, crate::geom::Rect::new(-1.0, 1.0, -1.0, 1.0), n, n),
        ),
    ];
    for _ in 0..3 {
        let (a, b, c) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        analytic.push((format!("graph z = {a:.3} x^2 + {b:.3} y^2 + {c:.3} xy"), shapes::quadric_graph(n, a, b, c)));
    }
    let mut card = Scorecard::default();
    for (name, s) in analytic {
        let dev = gauss_factor_deviation(&s.sample()?)?;
        card.claims.push(Claim::at_most(format!("gauss factor = |K|: {name}"), dev, 1e-4, format!("{n}x{n} per patch")));
    }
    let blob = ConvexBlob::random(&mut rng, 3);
    let mut closed: Vec<(String, SurfaceImmersion)> = vec![
        ("sphere".into(), shapes::cubed_sphere(n).sample()?),
        ("ellipsoid 1:1:1.2".into(), shapes::ellipsoid(n, [1.0, 1.0, 1.2]).sample()?),
        ("convex blob".into(), blob.surface(n).sample()?),
        ("perturbed sphere".into(), shapes::perturbed_sphere(&mut rng, n, 0.15)?.sample()?),
    ];
    closed.push(("flip surface".into(), gen_flip(&FlipSpec::default(), &TwistProfile::standard(0.15))?.0));
    for (name, f) in closed {
        let total = gauss_bonnet_check(&f)?;
        card.claims.push(Claim::at_most(
            format!("Gauss-Bonnet: {name}"),
            (total - 4.0 * PI).abs(),
            1e-2,
            format!("total curvature {total:.8}"),
        ));
    }
    Ok(card)
}

/// Sphere rigidity: the ellipsoid is far, a translate is recognised, and a
/// battery of perturbed spheres stays above its resolution noise.
pub fn sphere_scorecard(n: usize, seed: u64) -> Result<Scorecard> {
    let sphere = shapes::cubed_sphere(n).sample()?;
    let ellipsoid = shapes::ellipsoid(n, [1.0, 1.0, 1.2]).sample_like(&sphere)?;
    let far = sphere_rigidity_probe(&sphere, &ellipsoid, 1e-6)?;
    let t = Vec3::new(0.3, -1.2, 2.5);
    let moved = shapes::cubed_sphere(n).map_ambient(move |p| p + t).sample_like(&sphere)?;
    let near = sphere_rigidity_probe(&sphere, &moved, 1e-8)?;
    let mut card = Scorecard {
        claims: vec![
            Claim::above("sphere vs ellipsoid 1:1:1.2 distance", far.distance, 0.05, ""),
            Claim::at_most("sphere vs translate distance", near.distance, 1e-10, ""),
            Claim::at_most(
                "sphere vs translate residual",
                near.translate_residual.unwrap_or(f64::INFINITY),
                1e-10,
                "max |f(x) - x - t|",
            ),
        ],
    };
    for e in sphere_rigidity_battery(n, seed)? {
        card.claims.push(Claim::above(
            format!("rigidity battery: {}", e.name),
            e.distance,
            10.0 * e.noise,
            "distance vs ten times resolution noise",
        ));
    }
    Ok(card)
}

/// Convex uniqueness: a translated blob is recognised as a translate and the
/// sphere/ellipsoid pair yields a nonzero curvature witness.
pub fn convex_scorecard(n: usize, seed: u64) -> Result<Scorecard> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blob = ConvexBlob::random(&mut rng, 3).surface(n);
    let f1 = blob.sample()?;
    let t = Vec3::new(-0.7, 0.25, 1.1);
    let f2 = blob.map_ambient(move |p| p + t).sample_like(&f1)?;
    let same = convex_uniqueness_probe(&f1, &f2, 1e-8)?;
    let sphere = shapes::cubed_sphere(n).sample()?;
    let ellipsoid = shapes::ellipsoid(n, [1.0, 1.0, 1.2]).sample_like(&sphere)?;
    let diff = convex_uniqueness_probe(&sphere, &ellipsoid, 1e-8)?;
    Ok(Scorecard {
        claims: vec![
            Claim::at_most(
                "translated blob residual / diagonal",
                same.residual.unwrap_or(f64::INFINITY) / same.diagonal,
                1e-10,
                format!("distance {:.3e}", same.distance),
            ),
            Claim::above(
                "sphere vs ellipsoid curvature witness",
                diff.curvature_witness.unwrap_or(0.0),
                0.0,
                format!("distance {:.3e}", diff.distance),
            ),
        ],
    })
}

/// Recomputes the field of `f` and compares it with a stored field.
pub fn fixture_scorecard(f: &SurfaceImmersion, stored: &crate::geom::SrnfField) -> Result<Scorecard> {
    let q = srnf(f)?;
    let dev = field_distance(&q, stored)? / l2_norm(stored).max(f64::MIN_POSITIVE);
    Ok(Scorecard {
        claims: vec![Claim::at_most("fixture field consistency", dev, 1e-12, "relative L2 deviation")],
    })
}

/// Signed enclosed volume `(1/3) int f . n dA`, positive for an outward normal.
pub fn enclosed_volume(f: &SurfaceImmersion) -> Result<f64> {
    let q = srnf(f)?;
    let mut total = 0.0;
    for (patch, qp) in f.patches.iter().zip(&q.patches) {
        for ((p, v), w) in patch.positions().iter().zip(&qp.values).zip(&qp.measure) {
            // |q|^2 times the measure is the area element, n = q / |q|
            total += p.dot(v) * v.norm() * w;
        }
    }
    Ok(total / 3.0)
}

/// Closed surfaces must enclose positive volume under their orientation.
pub fn orientation_scorecard(f: &SurfaceImmersion) -> Result<Scorecard> {
    if !f.is_closed() {
        return Ok(Scorecard::default());
    }
    let v = enclosed_volume(f)?;
    Ok(Scorecard {
        claims: vec![Claim::above("outward orientation", v, 0.0, "signed enclosed volume")],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariance_small() {
        let card = invariance_scorecard(33, 5, 2).unwrap();
        // coarse grids carry interpolation error above the 129 tolerance
        assert!(card.claims.iter().all(|c| c.value < 1e-3), "{card:?}");
    }

    #[test]
    fn convex_card_passes() {
        let card = convex_scorecard(33, 3).unwrap();
        assert!(card.passed(), "{card:?}");
    }

    #[test]
    fn flipped_sphere_is_flagged() {
        let f = shapes::cubed_sphere(17).sample().unwrap();
        let v = enclosed_volume(&f).unwrap();
        assert!((v - 4.0 * PI / 3.0).abs() < 1e-4, "{v}");
        assert!(orientation_scorecard(&f).unwrap().passed());
        let mut g = f.clone();
        g.orientation = g.orientation.flipped();
        assert!(!orientation_scorecard(&g).unwrap().passed());
    }

    #[test]
    fn claim_senses() {
        assert!(Claim::at_most("a", 1.0, 1.0, "").passed);
        assert!(!Claim::above("b", 1.0, 1.0, "").passed);
    }
}
