use std::f64::consts::{PI, TAU};

use nalgebra::Matrix3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use srnf_lab::counterexamples::{twist_map, TwistProfile};
use srnf_lab::geom::{area_factor, srnf, RigidMotion, SurfaceImmersion, Vec3};
use srnf_lab::io::{read_surface, write_surface};
use srnf_lab::metric::{field_distance, kabsch, l2_norm, rotate_field, srnf_distance, NearestIndex};
use srnf_lab::shapes;

const N: usize = 17;

fn ellipsoid(axes: [f64; 3]) -> SurfaceImmersion {
    shapes::ellipsoid(N, axes).sample().unwrap()
}

fn like(reference: &SurfaceImmersion, axes: [f64; 3]) -> SurfaceImmersion {
    shapes::ellipsoid(N, axes).sample_like(reference).unwrap()
}

fn axes() -> impl Strategy<Value = [f64; 3]> {
    [0.5..2.0f64, 0.5..2.0f64, 0.5..2.0f64]
}

fn motion() -> impl Strategy<Value = RigidMotion> {
    any::<u64>().prop_map(|seed| RigidMotion::random(&mut ChaCha8Rng::seed_from_u64(seed), 3.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn squared_field_is_area_factor(a in axes()) {
        let f = like(&ellipsoid([1.0, 1.0, 1.0]), a);
        let q = srnf(&f).unwrap();
        for (pi, p) in q.patches.iter().enumerate() {
            for (k, v) in p.values.iter().enumerate().step_by(7) {
                let af = area_factor(&f, pi, k / N, k % N).unwrap();
                prop_assert!((v.norm_squared() - af).abs() <= 1e-12 * af);
            }
        }
    }

    #[test]
    fn sphere_area_from_field(r in 0.2..5.0f64) {
        let f = shapes::cubed_sphere(N).map_ambient(move |p| p * r).sample().unwrap();
        let q = srnf(&f).unwrap();
        let area = l2_norm(&q).powi(2);
        prop_assert!((area - 4.0 * PI * r * r).abs() <= 1e-5 * area, "{area}");
    }

    #[test]
    fn distance_is_a_pseudometric(a in axes(), b in axes(), c in axes()) {
        let reference = ellipsoid([1.0, 1.0, 1.0]);
        let (fa, fb, fc) = (like(&reference, a), like(&reference, b), like(&reference, c));
        let ab = srnf_distance(&fa, &fb).unwrap();
        let ba = srnf_distance(&fb, &fa).unwrap();
        let ac = srnf_distance(&fa, &fc).unwrap();
        let bc = srnf_distance(&fb, &fc).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!(ac <= ab + bc + 1e-12);
        prop_assert_eq!(srnf_distance(&fa, &fa).unwrap(), 0.0);
    }

    #[test]
    fn translation_leaves_field_unchanged(a in axes(), t in [-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64]) {
        let f = ellipsoid(a);
        let g = f.translated(&Vec3::new(t[0], t[1], t[2]));
        let d = field_distance(&srnf(&f).unwrap(), &srnf(&g).unwrap()).unwrap();
        // positions are shifted before differencing, so only rounding survives
        prop_assert!(d <= 1e-9 * l2_norm(&srnf(&f).unwrap()), "{d}");
    }

    #[test]
    fn scaling_scales_field(a in axes(), s in 0.2..5.0f64) {
        let f = ellipsoid(a);
        let g = f.map_affine(&(Matrix3::identity() * s), &Vec3::zeros());
        let q = srnf(&f).unwrap();
        let scaled = q.map_values(|v| v * s);
        let d = field_distance(&scaled, &srnf(&g).unwrap()).unwrap();
        prop_assert!(d <= 1e-12 * s * l2_norm(&q), "{d}");
    }

    #[test]
    fn rotation_is_equivariant_and_isometric(a in axes(), b in axes(), m in motion()) {
        let f1 = ellipsoid(a);
        let f2 = like(&f1, b);
        let (q1, q2) = (srnf(&f1).unwrap(), srnf(&f2).unwrap());
        let r1 = rotate_field(&q1, &m.rotation).unwrap();
        let r2 = rotate_field(&q2, &m.rotation).unwrap();
        let norm = l2_norm(&q1);
        prop_assert!((l2_norm(&r1) - norm).abs() <= 1e-12 * norm);
        let d = field_distance(&q1, &q2).unwrap();
        prop_assert!((field_distance(&r1, &r2).unwrap() - d).abs() <= 1e-12 * norm);
        let moved = srnf(&m.apply_surface(&f1)).unwrap();
        prop_assert!(field_distance(&r1, &moved).unwrap() <= 1e-9 * norm);
    }

    #[test]
    fn orientation_flip_negates_field(a in axes()) {
        let f = ellipsoid(a);
        let mut g = f.clone();
        g.orientation = g.orientation.flipped();
        let q = srnf(&f).unwrap();
        let neg = q.map_values(|v| -v);
        prop_assert_eq!(field_distance(&neg, &srnf(&g).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn twist_preserves_area(rho in 1.0..2.0f64, angle in 0.0..TAU) {
        let twist = TwistProfile::standard(0.15);
        let x = [rho * angle.cos(), rho * angle.sin()];
        let h = 1e-6;
        let f = |dx: f64, dy: f64| twist_map(&twist, [x[0] + dx, x[1] + dy]);
        let (xp, xm, yp, ym) = (f(h, 0.0), f(-h, 0.0), f(0.0, h), f(0.0, -h));
        let det = ((xp[0] - xm[0]) * (yp[1] - ym[1]) - (yp[0] - ym[0]) * (xp[1] - xm[1])) / (4.0 * h * h);
        prop_assert!((det - 1.0).abs() < 1e-7, "{det}");
        let y = twist_map(&twist, x);
        prop_assert!((y[0].hypot(y[1]) - rho).abs() < 1e-14);
    }

    #[test]
    fn nearest_matches_brute_force(
        pts in prop::collection::vec([-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64], 1..200),
        q in [-1.5..1.5f64, -1.5..1.5f64, -1.5..1.5f64],
    ) {
        let pts: Vec<Vec3> = pts.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect();
        let q = Vec3::new(q[0], q[1], q[2]);
        let k = NearestIndex::new(&pts).nearest(&q);
        let best = pts.iter().map(|p| (p - q).norm()).fold(f64::INFINITY, f64::min);
        prop_assert_eq!((pts[k] - q).norm(), best);
    }

    #[test]
    fn kabsch_recovers_rigid_motion(m in motion(), a in axes()) {
        let f = ellipsoid(a);
        let src: Vec<Vec3> = f.all_positions().copied().collect();
        let dst: Vec<Vec3> = src.iter().map(|p| m.apply(p)).collect();
        let fit = kabsch(&src, &dst);
        let err = src.iter().zip(&dst).map(|(p, q)| (fit.apply(p) - q).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-10, "{err}");
        prop_assert!((fit.rotation.determinant() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn container_round_trip_is_exact(a in axes()) {
        let f = ellipsoid(a);
        let dir = tempfile::tempdir().unwrap();
        let files = write_surface(dir.path(), "e", &f).unwrap();
        let g = read_surface(&files[0]).unwrap();
        prop_assert!(g.all_positions().eq(f.all_positions()));
        prop_assert_eq!(field_distance(&srnf(&f).unwrap(), &srnf(&g).unwrap()).unwrap(), 0.0);
    }
}
