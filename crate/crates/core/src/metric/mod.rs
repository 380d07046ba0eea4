//! The L² structure on SRNF fields, the induced pseudometric, and the two
//! group actions (rotations of space, reparametrizations of the domain).

mod align;
mod interp;
mod nearest;

pub use align::{certify_noncongruent, kabsch, AlignmentReport, DEFAULT_THRESHOLD_RATIO, MIN_SAMPLES_PER_PATCH};
pub use interp::{cubic_weights, Bicubic};
pub use nearest::NearestIndex;

use std::sync::Arc;

use nalgebra::Matrix3;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{
    check_rotation, check_same_layout, srnf, FieldPatch, Layout, ParamSelfMap, Rect, SrnfField,
    SurfaceImmersion,
};

/// Relative tolerance on quadrature weights for two fields to count as sharing a domain.
const MEASURE_RTOL: f64 = 1e-12;

/// Checks that two fields live on the same grids with the same quadrature.
pub fn check_compatible(a: &SrnfField, b: &SrnfField) -> Result<()> {
    if a.patches.len() != b.patches.len() {
        return Err(Error::GridMismatch(format!(
            "{} patches vs {}",
            a.patches.len(),
            b.patches.len()
        )));
    }
    for (k, (p, q)) in a.patches.iter().zip(&b.patches).enumerate() {
        if p.layout != q.layout || p.values.len() != q.values.len() {
            return Err(Error::GridMismatch(format!(
                "patch {k}: {:?} vs {:?}",
                p.layout, q.layout
            )));
        }
        let scale = p.measure.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        let worst = p
            .measure
            .iter()
            .zip(&q.measure)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        if worst > MEASURE_RTOL * scale {
            return Err(Error::GridMismatch(format!(
                "patch {k}: quadrature weights differ by {worst:e}"
            )));
        }
    }
    Ok(())
}

/// `sum_x w(x) <q1(x), q2(x)>` over all patches, accumulated in sample order.
pub fn l2_inner(q1: &SrnfField, q2: &SrnfField) -> Result<f64> {
    check_compatible(q1, q2)?;
    Ok(q1
        .patches
        .iter()
        .zip(&q2.patches)
        .map(|(a, b)| {
            a.values
                .iter()
                .zip(&b.values)
                .zip(&a.measure)
                .map(|((x, y), w)| w * x.dot(y))
                .sum::<f64>()
        })
        .sum())
}

pub fn l2_norm(q: &SrnfField) -> f64 {
    q.patches
        .iter()
        .map(|p| {
            p.values
                .iter()
                .zip(&p.measure)
                .map(|(x, w)| w * x.norm_squared())
                .sum::<f64>()
        })
        .sum::<f64>()
        .sqrt()
}

/// `|q1 - q2|` in L².
pub fn field_distance(q1: &SrnfField, q2: &SrnfField) -> Result<f64> {
    Ok(l2_norm(&q1.sub(q2)?))
}

/// `d(f1, f2) = |srnf(f1) - srnf(f2)|`.
pub fn srnf_distance(f1: &SurfaceImmersion, f2: &SurfaceImmersion) -> Result<f64> {
    check_same_layout(f1, f2)?;
    field_distance(&srnf(f1)?, &srnf(f2)?)
}

/// Distance together with the samplewise maximum deviation and both norms.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DistanceReport {
    pub distance: f64,
    pub max_deviation: f64,
    pub field_norms: [f64; 2],
}

pub fn distance_report(f1: &SurfaceImmersion, f2: &SurfaceImmersion) -> Result<DistanceReport> {
    check_same_layout(f1, f2)?;
    let q1 = srnf(f1)?;
    let q2 = srnf(f2)?;
    let diff = q1.sub(&q2)?;
    Ok(DistanceReport {
        distance: l2_norm(&diff),
        max_deviation: diff.max_abs(),
        field_norms: [l2_norm(&q1), l2_norm(&q2)],
    })
}

/// `(A q)(x) = A q(x)` for a proper rotation `A`.
pub fn rotate_field(q: &SrnfField, a: &Matrix3<f64>) -> Result<SrnfField> {
    check_rotation(a)?;
    Ok(q.map_values(|v| a * v))
}

/// A per-patch orientation-preserving self-map of the parameter domain.
/// Mesh patches only admit the identity.
#[derive(Clone, Default)]
pub struct Reparametrization {
    maps: Vec<Option<Arc<dyn ParamSelfMap>>>,
}

impl std::fmt::Debug for Reparametrization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kinds: Vec<&str> = self
            .maps
            .iter()
            .map(|m| if m.is_some() { "map" } else { "identity" })
            .collect();
        f.debug_struct("Reparametrization").field("maps", &kinds).finish()
    }
}

/// A reparametrization evaluated on one patch's grid.
#[derive(Clone, Debug)]
pub struct SampledReparam {
    pub points: Vec<(f64, f64)>,
    /// Jacobian determinant of the self-map at each sample.
    pub area_factor_b: Vec<f64>,
}

impl Reparametrization {
    pub fn identity(patches: usize) -> Self {
        Reparametrization {
            maps: vec![None; patches],
        }
    }

    pub fn from_maps(maps: Vec<Option<Arc<dyn ParamSelfMap>>>) -> Self {
        Reparametrization { maps }
    }

    pub fn maps(&self) -> &[Option<Arc<dyn ParamSelfMap>>] {
        &self.maps
    }

    /// Maps usable by [`crate::geom::ParametricSurface::reparametrize`], with
    /// identities filled in.
    pub fn as_self_maps(&self) -> Vec<Arc<dyn ParamSelfMap>> {
        self.maps
            .iter()
            .map(|m| match m {
                Some(m) => m.clone(),
                None => Arc::new(|u: f64, v: f64| (u, v)) as Arc<dyn ParamSelfMap>,
            })
            .collect()
    }

    /// A random bump diffeomorphism on every grid patch: the identity plus
    /// `eps * (sin(pi s) sin(pi t))^2` times a random direction, in normalized
    /// coordinates `(s, t)` of the rectangle. It fixes the boundary to first order.
    pub fn random_bump<R: Rng>(rng: &mut R, layouts: &[Layout], eps: f64) -> Result<Self> {
        // keeps the Jacobian determinant positive: |d/ds (sin^2 sin^2)| <= pi
        if !(eps.abs() < 0.25) {
            return Err(Error::InvalidParam(format!("bump amplitude {eps} too large")));
        }
        let maps = layouts
            .iter()
            .map(|l| match *l {
                Layout::Grid { rect, .. } => {
                    let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    let amp = eps * rng.gen_range(0.5..1.0);
                    Some(bump_map(rect, amp * ang.cos(), amp * ang.sin()))
                }
                Layout::Mesh { .. } => None,
            })
            .collect();
        Ok(Reparametrization { maps })
    }

    /// Evaluates the map and its Jacobian determinant on a grid patch.
    pub fn sample(&self, patch: usize, rect: Rect, nu: usize, nv: usize) -> Result<SampledReparam> {
        let map = self
            .maps
            .get(patch)
            .ok_or_else(|| Error::InvalidParam(format!("no map for patch {patch}")))?;
        let hu = (rect.u1 - rect.u0) / (nu - 1) as f64;
        let hv = (rect.v1 - rect.v0) / (nv - 1) as f64;
        let mut points = Vec::with_capacity(nu * nv);
        let mut b = Vec::with_capacity(nu * nv);
        for i in 0..nu {
            for j in 0..nv {
                let (u, v) = (rect.u0 + i as f64 * hu, rect.v0 + j as f64 * hv);
                match map {
                    None => {
                        points.push((u, v));
                        b.push(1.0);
                    }
                    Some(m) => {
                        points.push(m.eval(u, v));
                        let det = jacobian_det(m.as_ref(), u, v, rect);
                        if !(det > 0.0) {
                            return Err(Error::InvalidParam(format!(
                                "reparametrization of patch {patch} has Jacobian {det} at ({u}, {v})"
                            )));
                        }
                        b.push(det);
                    }
                }
            }
        }
        Ok(SampledReparam {
            points,
            area_factor_b: b,
        })
    }
}

fn bump_map(rect: Rect, dx: f64, dy: f64) -> Arc<dyn ParamSelfMap> {
    let (wu, wv) = (rect.u1 - rect.u0, rect.v1 - rect.v0);
    Arc::new(move |u: f64, v: f64| {
        let s = (u - rect.u0) / wu;
        let t = (v - rect.v0) / wv;
        let g = ((std::f64::consts::PI * s).sin() * (std::f64::consts::PI * t).sin()).powi(2);
        (u + wu * dx * g, v + wv * dy * g)
    })
}

/// Jacobian determinant by five-point differences (fourth order).
pub fn jacobian_det(m: &dyn ParamSelfMap, u: f64, v: f64, rect: Rect) -> f64 {
    let hu = 1e-3 * (rect.u1 - rect.u0);
    let hv = 1e-3 * (rect.v1 - rect.v0);
    let d = |f: &dyn Fn(f64) -> (f64, f64), h: f64| {
        let (a1, b1) = f(h);
        let (a2, b2) = f(-h);
        let (a3, b3) = f(2.0 * h);
        let (a4, b4) = f(-2.0 * h);
        (
            (8.0 * (a1 - a2) - (a3 - a4)) / (12.0 * h),
            (8.0 * (b1 - b2) - (b3 - b4)) / (12.0 * h),
        )
    };
    let (xu, yu) = d(&|h| m.eval(u + h, v), hu);
    let (xv, yv) = d(&|h| m.eval(u, v + h), hv);
    xu * yv - xv * yu
}

/// `(q * phi)(x) = sqrt(b(x)) q(phi(x))` with `q(phi(x))` interpolated bicubically.
///
/// `b` is the area factor of `phi` for the domain metric: the Jacobian
/// determinant times the ratio of metric densities at `phi(x)` and `x`.
pub fn reparam_act(q: &SrnfField, phi: &Reparametrization) -> Result<SrnfField> {
    if phi.maps.len() != q.patches.len() {
        return Err(Error::GridMismatch(format!(
            "{} self-maps for {} patches",
            phi.maps.len(),
            q.patches.len()
        )));
    }
    let patches = q
        .patches
        .iter()
        .enumerate()
        .map(|(k, p)| act_patch(k, p, phi))
        .collect::<Result<Vec<_>>>()?;
    Ok(SrnfField { patches })
}

fn act_patch(k: usize, p: &FieldPatch, phi: &Reparametrization) -> Result<FieldPatch> {
    let Layout::Grid { rect, nu, nv } = p.layout else {
        if phi.maps[k].is_some() {
            return Err(Error::Unsupported("reparametrization of a mesh patch".into()));
        }
        return Ok(p.clone());
    };
    if phi.maps[k].is_none() {
        return Ok(p.clone());
    }
    let s = phi.sample(k, rect, nu, nv)?;
    let qi = Bicubic::new(rect, nu, nv, &p.values);
    let di = Bicubic::new(rect, nu, nv, &p.density);
    let tol = 1e-9 * (rect.u1 - rect.u0).max(rect.v1 - rect.v0);
    let mut values = Vec::with_capacity(p.values.len());
    for (x, (&(u, v), det)) in s.points.iter().zip(&s.area_factor_b).enumerate() {
        let excess = rect.excess(u, v);
        if excess > tol {
            return Err(Error::OutOfDomain { patch: k, excess });
        }
        let sigma = di.eval(u, v);
        if !(sigma > 0.0) {
            return Err(Error::DegenerateInterpolation { min: sigma });
        }
        let b = det * sigma / p.density[x];
        values.push(qi.eval(u, v) * b.sqrt());
    }
    Ok(FieldPatch {
        values,
        ..p.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{ParamPatch, Patch, Vec3};
    use crate::shapes;
    use rand::SeedableRng;

    fn constant_field(v: Vec3) -> SrnfField {
        let rect = Rect::new(0.0, 1.0, 0.0, 2.0);
        let p = ParamPatch::from_samples(rect, 5, 7, vec![Vec3::zeros(); 35]).unwrap();
        let patch = Patch::Grid(p);
        SrnfField {
            patches: vec![FieldPatch {
                layout: patch.layout(),
                measure: patch.measure(),
                density: vec![1.0; 35],
                values: vec![v; 35],
            }],
        }
    }

    #[test]
    fn inner_product_basics() {
        let a = constant_field(Vec3::z());
        let b = constant_field(Vec3::y());
        assert_eq!(l2_inner(&a, &b).unwrap(), 0.0);
        assert!((l2_inner(&a, &a).unwrap() - 2.0).abs() < 1e-14);
        let neg = a.map_values(|v| -v);
        assert_eq!(l2_inner(&a, &neg).unwrap(), -l2_inner(&a, &a).unwrap());
    }

    #[test]
    fn sphere_area_from_srnf() {
        let q = srnf(&shapes::cubed_sphere(33).sample().unwrap()).unwrap();
        let area = l2_inner(&q, &q).unwrap();
        assert!((area - 4.0 * std::f64::consts::PI).abs() < 1e-5, "{area}");
    }

    #[test]
    fn sphere_vs_double_sphere_distance() {
        // q_Id = x and q_{2 Id} = 2x, so d^2 = (2 - 1)^2 * 4 pi
        let s = shapes::cubed_sphere(33);
        let f1 = s.sample().unwrap();
        let f2 = s.map_ambient(|p| 2.0 * p).sample_like(&f1).unwrap();
        let d = srnf_distance(&f1, &f2).unwrap();
        assert!((d - (4.0 * std::f64::consts::PI).sqrt()).abs() < 1e-6, "{d}");
    }

    #[test]
    fn mismatched_grids_rejected() {
        let a = srnf(&shapes::cubed_sphere(9).sample().unwrap()).unwrap();
        let b = srnf(&shapes::cubed_sphere(11).sample().unwrap()).unwrap();
        assert!(matches!(l2_inner(&a, &b), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn rotation_by_pi_about_z() {
        let q = constant_field(Vec3::x());
        let r = Matrix3::from_diagonal(&Vec3::new(-1.0, -1.0, 1.0));
        let out = rotate_field(&q, &r).unwrap();
        assert!(out.patches[0].values.iter().all(|v| (v + Vec3::x()).norm() < 1e-15));
        assert!(rotate_field(&q, &Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0))).is_err());
    }

    #[test]
    fn identity_reparam_is_noop() {
        let f = shapes::cubed_sphere(9).sample().unwrap();
        let q = srnf(&f).unwrap();
        let out = reparam_act(&q, &Reparametrization::identity(6)).unwrap();
        assert_eq!(q.max_deviation(&out).unwrap(), 0.0);
    }

    #[test]
    fn quarter_turn_of_square_domain_permutes_samples() {
        let g = shapes::quadric_graph(17, 0.3, -0.2, 0.1);
        let f = g.sample_flat().unwrap();
        let q = srnf(&f).unwrap();
        let phi = Reparametrization::from_maps(vec![Some(Arc::new(|u: f64, v: f64| (-v, u)))]);
        let out = reparam_act(&q, &phi).unwrap();
        for i in 0..17 {
            for j in 0..17 {
                // phi(u_i, v_j) = (-v_j, u_i) is sample (16 - j, i)
                let want = q.patches[0].values[(16 - j) * 17 + i];
                assert!((out.patches[0].values[i * 17 + j] - want).norm() < 1e-9);
            }
        }
        assert!((l2_norm(&out) - l2_norm(&q)).abs() < 1e-8 * l2_norm(&q));
    }

    #[test]
    fn out_of_domain_detected() {
        let f = shapes::quadric_graph(9, 1.0, 1.0, 0.0).sample_flat().unwrap();
        let q = srnf(&f).unwrap();
        let phi = Reparametrization::from_maps(vec![Some(Arc::new(|u: f64, v: f64| (u + 0.1, v)))]);
        assert!(matches!(reparam_act(&q, &phi), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn equivariance_on_sphere_bump() {
        let s = shapes::ellipsoid(65, [1.0, 0.8, 1.3]);
        let f = s.sample().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let layouts: Vec<_> = f.patches.iter().map(|p| p.layout()).collect();
        let phi = Reparametrization::random_bump(&mut rng, &layouts, 0.05).unwrap();
        let acted = reparam_act(&srnf(&f).unwrap(), &phi).unwrap();
        let direct = srnf(&s.reparametrize(&phi.as_self_maps()).sample_like(&f).unwrap()).unwrap();
        let rel = field_distance(&acted, &direct).unwrap() / l2_norm(&direct);
        assert!(rel < 1e-6, "{rel:e}");
    }
}
