//! Second-order quantities: Gaussian and mean curvature, the area factor of
//! the Gauss map, total curvature, and probes for the rigidity of the sphere
//! and of convex surfaces under the SRNF map.

use rand::SeedableRng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{stencil, Jet, Patch, SurfaceImmersion, Vec3};
use crate::metric::{srnf_distance, NearestIndex};

/// Curvatures of one patch, per sample.
#[derive(Clone, Debug, Default)]
pub struct CurvaturePatch {
    pub k: Vec<f64>,
    pub h: Vec<f64>,
    /// Larger and smaller principal curvature.
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    /// Area element of the immersion (quadrature weight times `|f_u x f_v|`).
    pub area: Vec<f64>,
    pub shape_operator_ok: Vec<bool>,
}

#[derive(Clone, Debug, Default)]
pub struct CurvatureField {
    pub patches: Vec<CurvaturePatch>,
}

impl CurvatureField {
    pub fn k_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.patches.iter().flat_map(|p| p.k.iter().copied())
    }
}

struct Local {
    k: f64,
    h: f64,
    cross: f64,
    ok: bool,
}

fn local_curvature(jet: &Jet, sign: f64) -> Local {
    let c = jet.du.cross(&jet.dv) * sign;
    let cn = c.norm();
    if cn == 0.0 {
        return Local {
            k: f64::NAN,
            h: f64::NAN,
            cross: 0.0,
            ok: false,
        };
    }
    let n = c / cn;
    let (e, f, g) = (jet.du.dot(&jet.du), jet.du.dot(&jet.dv), jet.dv.dot(&jet.dv));
    let (l, m, nn) = (jet.duu.dot(&n), jet.duv.dot(&n), jet.dvv.dot(&n));
    let det1 = e * g - f * f;
    let k = (l * nn - m * m) / det1;
    let h = (e * nn - 2.0 * f * m + g * l) / (2.0 * det1);
    Local {
        k,
        h,
        cross: cn,
        ok: k.is_finite() && h.is_finite(),
    }
}

fn principal(h: f64, k: f64) -> (f64, f64) {
    let d = (h * h - k).max(0.0).sqrt();
    (h + d, h - d)
}

/// Gaussian curvature `det II / det I`, mean curvature and principal
/// curvatures at every sample. Mesh patches must be planar.
pub fn gaussian_curvature(f: &SurfaceImmersion) -> Result<CurvatureField> {
    let sign = f.orientation.sign();
    let mut patches = Vec::with_capacity(f.patches.len());
    for (pi, p) in f.patches.iter().enumerate() {
        let mut out = CurvaturePatch::default();
        match p {
            Patch::Grid(g) => {
                let weights = g.weights();
                for i in 0..g.nu() {
                    for j in 0..g.nv() {
                        let loc = local_curvature(&g.jet(i, j), sign);
                        if loc.cross == 0.0 {
                            return Err(Error::DegenerateImmersion {
                                patch: pi,
                                i,
                                j,
                                cross: 0.0,
                            });
                        }
                        let (k1, k2) = principal(loc.h, loc.k);
                        out.k.push(loc.k);
                        out.h.push(loc.h);
                        out.k1.push(k1);
                        out.k2.push(k2);
                        out.area.push(weights[g.idx(i, j)] * loc.cross);
                        out.shape_operator_ok.push(loc.ok);
                    }
                }
            }
            Patch::Mesh(m) => {
                if !m.image_is_planar(1e-12 * f.diagonal()) {
                    return Err(Error::Unsupported(
                        "curvature of a non-planar mesh patch".into(),
                    ));
                }
                let n = m.nodes().len();
                out.k = vec![0.0; n];
                out.h = vec![0.0; n];
                out.k1 = vec![0.0; n];
                out.k2 = vec![0.0; n];
                out.shape_operator_ok = vec![true; n];
                out.area = m
                    .weights()
                    .iter()
                    .zip(m.tangents())
                    .map(|(w, t)| w * t[0].cross(&t[1]).norm())
                    .collect();
            }
        }
        patches.push(out);
    }
    Ok(CurvatureField { patches })
}

/// Area factor of the Gauss map relative to the immersion's own area, from
/// the derivative of the normal `n_u = P(c_u) / |c|` with `c = f_u x f_v`.
pub fn gauss_map_area_factor(f: &SurfaceImmersion) -> Result<Vec<Vec<f64>>> {
    f.patches
        .iter()
        .enumerate()
        .map(|(pi, p)| match p {
            Patch::Grid(g) => (0..g.len())
                .map(|k| {
                    let jt = g.jet(k / g.nv(), k % g.nv());
                    normal_jet_factor(&jt).ok_or(Error::DegenerateImmersion {
                        patch: pi,
                        i: k / g.nv(),
                        j: k % g.nv(),
                        cross: 0.0,
                    })
                })
                .collect(),
            Patch::Mesh(m) => {
                if m.image_is_planar(1e-12 * f.diagonal()) {
                    Ok(vec![0.0; m.nodes().len()])
                } else {
                    Err(Error::Unsupported("Gauss map of a non-planar mesh patch".into()))
                }
            }
        })
        .collect()
}

fn normal_jet_factor(jt: &Jet) -> Option<f64> {
    let c = jt.du.cross(&jt.dv);
    let cn = c.norm();
    if cn == 0.0 {
        return None;
    }
    let n = c / cn;
    let proj = |w: Vec3| (w - n * w.dot(&n)) / cn;
    let nu = proj(jt.duu.cross(&jt.dv) + jt.du.cross(&jt.duv));
    let nv = proj(jt.duv.cross(&jt.dv) + jt.du.cross(&jt.dvv));
    Some(nu.cross(&nv).norm() / cn)
}

/// Gauss map area factor by second-order grid differences of the sampled
/// unit normals, independent of recorded jets.
pub fn gauss_map_area_factor_fd(f: &SurfaceImmersion) -> Result<Vec<Vec<f64>>> {
    let normals = crate::geom::normals(f)?;
    f.patches
        .iter()
        .zip(&normals)
        .map(|(p, n)| match p {
            Patch::Grid(g) => {
                let (hu, hv) = (g.hu(), g.hv());
                Ok((0..g.len())
                    .map(|k| {
                        let (i, j) = (k / g.nv(), k % g.nv());
                        let nu = stencil::d1(g.nu(), i, hu, |m| n[g.idx(m, j)]);
                        let nv = stencil::d1(g.nv(), j, hv, |m| n[g.idx(i, m)]);
                        let (du, dv) = g.fd_tangents(i, j);
                        nu.cross(&nv).norm() / du.cross(&dv).norm()
                    })
                    .collect())
            }
            Patch::Mesh(m) => Ok(vec![0.0; m.nodes().len()]),
        })
        .collect()
}

/// Total curvature `int K dA` of a closed surface.
pub fn gauss_bonnet_check(f: &SurfaceImmersion) -> Result<f64> {
    if !f.is_closed() {
        return Err(Error::NotClosed("some patch edge is not part of a seam".into()));
    }
    let c = gaussian_curvature(f)?;
    Ok(c
        .patches
        .iter()
        .map(|p| p.k.iter().zip(&p.area).map(|(k, a)| k * a).sum::<f64>())
        .sum())
}

/// Largest gap between area-weighted quantiles (deciles 1 to 9) of the
/// principal curvatures of two surfaces. Invariant under rigid motions and
/// reparametrizations, so a gap above the discretization floor shows that the
/// surfaces are not related by either.
pub fn principal_curvature_gap(f1: &SurfaceImmersion, f2: &SurfaceImmersion) -> Result<f64> {
    let c1 = gaussian_curvature(f1)?;
    let c2 = gaussian_curvature(f2)?;
    let mut gap = 0.0f64;
    for pick in [0, 1] {
        let q1 = weighted_deciles(&c1, pick);
        let q2 = weighted_deciles(&c2, pick);
        for (a, b) in q1.iter().zip(&q2) {
            gap = gap.max((a - b).abs());
        }
    }
    Ok(gap)
}

fn weighted_deciles(c: &CurvatureField, pick: usize) -> Vec<f64> {
    let mut vals: Vec<(f64, f64)> = c
        .patches
        .iter()
        .flat_map(|p| {
            let v = if pick == 0 { &p.k1 } else { &p.k2 };
            v.iter().copied().zip(p.area.iter().copied())
        })
        .collect();
    vals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = vals.iter().map(|v| v.1).sum();
    let mut out = Vec::with_capacity(9);
    let mut acc = 0.0;
    let mut it = vals.iter();
    let mut cur = (f64::NAN, 0.0);
    for d in 1..=9 {
        let target = total * d as f64 / 10.0;
        while acc < target {
            match it.next() {
                Some(v) => {
                    cur = *v;
                    acc += v.1;
                }
                None => break,
            }
        }
        out.push(cur.0);
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct RigidityReport {
    pub distance: f64,
    pub floor: f64,
    /// Set when the distance is within the floor: the mean displacement and
    /// the largest deviation from it.
    pub translation: Option<[f64; 3]>,
    pub translate_residual: Option<f64>,
    /// True when the probe is consistent with rigidity: either the distance
    /// exceeds the floor or `f` is a translate of the sphere.
    pub consistent: bool,
}

/// Compares `f` against the round sphere `sphere` sampled on the same grid.
pub fn sphere_rigidity_probe(
    sphere: &SurfaceImmersion,
    f: &SurfaceImmersion,
    floor: f64,
) -> Result<RigidityReport> {
    let distance = srnf_distance(sphere, f)?;
    if distance > floor {
        return Ok(RigidityReport {
            distance,
            floor,
            translation: None,
            translate_residual: None,
            consistent: true,
        });
    }
    let (t, residual) = translate_fit(f, sphere);
    Ok(RigidityReport {
        distance,
        floor,
        translation: Some([t.x, t.y, t.z]),
        translate_residual: Some(residual),
        consistent: residual <= 1e-10 * sphere.diagonal().max(1.0),
    })
}

/// Mean displacement `t` from `b` to `a` and `max |a(x) - b(x) - t|`.
pub fn translate_fit(a: &SurfaceImmersion, b: &SurfaceImmersion) -> (Vec3, f64) {
    let n = a.sample_count() as f64;
    let t = a
        .all_positions()
        .zip(b.all_positions())
        .map(|(p, q)| p - q)
        .sum::<Vec3>()
        / n;
    let residual = a
        .all_positions()
        .zip(b.all_positions())
        .map(|(p, q)| (p - q - t).norm())
        .fold(0.0, f64::max);
    (t, residual)
}

/// One entry of the sphere rigidity battery.
#[derive(Clone, Debug, Serialize)]
pub struct BatteryEntry {
    pub name: String,
    pub distance: f64,
    /// Change of the distance between two resolutions.
    pub noise: f64,
    pub passed: bool,
}

/// Distances from the round sphere to an ellipsoid, bumped spheres and
/// seeded random perturbations (rescaled to area `4 pi`). Each must exceed ten
/// times its own resolution noise.
pub fn sphere_rigidity_battery(n: usize, seed: u64) -> Result<Vec<BatteryEntry>> {
    use crate::shapes;
    let coarse = (n / 2) | 1;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut cases: Vec<(String, crate::geom::ParametricSurface)> = vec![
        ("ellipsoid 1:1:1.2".into(), shapes::ellipsoid(n, [1.0, 1.0, 1.2])),
        (
            "bumped sphere".into(),
            shapes::bumped_sphere(n, Vec3::new(0.3, -0.5, 0.8), 0.1, 0.5),
        ),
    ];
    for k in 0..3 {
        cases.push((
            format!("perturbed sphere #{k}"),
            shapes::perturbed_sphere(&mut rng, n, 0.15)?,
        ));
    }
    cases
        .into_iter()
        .map(|(name, s)| {
            let d = |m: usize| -> Result<f64> {
                let sphere = shapes::cubed_sphere(m).sample()?;
                let other = s.clone().with_resolution(m).sample_like(&sphere)?;
                srnf_distance(&sphere, &other)
            };
            let fine = d(n)?;
            let noise = (fine - d(coarse)?).abs();
            Ok(BatteryEntry {
                name,
                distance: fine,
                noise,
                passed: fine > 10.0 * noise,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvexReport {
    pub distance: f64,
    pub tolerance: f64,
    pub translation: Option<[f64; 3]>,
    /// `max |f1 - f2 - t|` when the distance is within tolerance.
    pub residual: Option<f64>,
    /// `max |K1(x) - K2(y)|` with `y` the sample of `f2` whose normal is
    /// nearest to that of `x`, when the distance exceeds tolerance.
    pub curvature_witness: Option<f64>,
    pub diagonal: f64,
    pub passed: bool,
}

fn check_convex(f: &SurfaceImmersion, c: &CurvatureField) -> Result<()> {
    let diag = f.diagonal();
    let floor = 1e-8 / (diag * diag);
    let min_k = c.k_values().fold(f64::INFINITY, f64::min);
    if !(min_k > floor) {
        return Err(Error::NotConvex(format!("minimum Gaussian curvature {min_k:e}")));
    }
    // with K > 0 the Gauss map is a local diffeomorphism; total curvature 4 pi
    // makes it degree one, hence injective on a closed surface
    let total: f64 = c
        .patches
        .iter()
        .map(|p| p.k.iter().zip(&p.area).map(|(k, a)| k * a).sum::<f64>())
        .sum();
    let four_pi = 4.0 * std::f64::consts::PI;
    if (total - four_pi).abs() > 1e-2 * four_pi {
        return Err(Error::NotConvex(format!(
            "total curvature {total} differs from 4 pi"
        )));
    }
    Ok(())
}

/// If the SRNF distance is within `tolerance`, checks that `f1` and `f2`
/// differ by a translation; otherwise reports a curvature witness.
pub fn convex_uniqueness_probe(
    f1: &SurfaceImmersion,
    f2: &SurfaceImmersion,
    tolerance: f64,
) -> Result<ConvexReport> {
    if !(f1.is_closed() && f2.is_closed()) {
        return Err(Error::NotClosed("convex probe needs closed surfaces".into()));
    }
    let c1 = gaussian_curvature(f1)?;
    let c2 = gaussian_curvature(f2)?;
    check_convex(f1, &c1)?;
    check_convex(f2, &c2)?;
    let distance = srnf_distance(f1, f2)?;
    let diagonal = f1.diagonal();
    if distance <= tolerance {
        let (t, residual) = translate_fit(f1, f2);
        return Ok(ConvexReport {
            distance,
            tolerance,
            translation: Some([t.x, t.y, t.z]),
            residual: Some(residual),
            curvature_witness: None,
            diagonal,
            passed: residual <= 1e-6 * diagonal,
        });
    }
    let n1: Vec<Vec3> = crate::geom::normals(f1)?.into_iter().flatten().collect();
    let n2: Vec<Vec3> = crate::geom::normals(f2)?.into_iter().flatten().collect();
    let k1: Vec<f64> = c1.k_values().collect();
    let k2: Vec<f64> = c2.k_values().collect();
    let index = NearestIndex::new(&n2);
    let witness = n1
        .iter()
        .zip(&k1)
        .map(|(n, k)| {
            let m = index.nearest(n);
            (k - k2[m]).abs()
        })
        .fold(0.0, f64::max);
    Ok(ConvexReport {
        distance,
        tolerance,
        translation: None,
        residual: None,
        curvature_witness: Some(witness),
        diagonal,
        passed: witness > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use std::f64::consts::PI;

    fn max_dev(a: &[Vec<f64>], b: impl Fn(usize, usize) -> f64) -> f64 {
        let mut m = 0.0f64;
        for (p, v) in a.iter().enumerate() {
            for (k, x) in v.iter().enumerate() {
                m = m.max((x - b(p, k)).abs());
            }
        }
        m
    }

    #[test]
    fn unit_sphere_curvature_is_one() {
        let f = shapes::cubed_sphere(33).sample().unwrap();
        let c = gaussian_curvature(&f).unwrap();
        assert!(c.k_values().all(|k| (k - 1.0).abs() < 1e-6));
        assert!(c.patches.iter().flat_map(|p| &p.h).all(|h| (h + 1.0).abs() < 1e-6));
        let g = gauss_map_area_factor(&f).unwrap();
        assert!(max_dev(&g, |_, _| 1.0) < 1e-6);
        let total = gauss_bonnet_check(&f).unwrap();
        assert!((total - 4.0 * PI).abs() < 1e-4, "{total}");
    }

    #[test]
    fn cylinder_is_flat() {
        let f = shapes::unit_cylinder(33, 9).sample().unwrap();
        let c = gaussian_curvature(&f).unwrap();
        assert!(c.k_values().all(|k| k.abs() < 1e-8));
        let g = gauss_map_area_factor(&f).unwrap();
        assert!(max_dev(&g, |_, _| 0.0) < 1e-8);
        assert!(matches!(gauss_bonnet_check(&f), Err(Error::NotClosed(_))));
    }

    #[test]
    fn paraboloid_apex_curvature() {
        // z = a X^2 + b Y^2 has K = 4ab at the apex whatever the parametrization
        for (a, b) in [(1.0, 4.0), (2.0, 2.0), (0.5, 3.0)] {
            let f = shapes::paraboloid(a, b, crate::geom::Rect::new(-1.0, 1.0, -1.0, 1.0), 21, 21)
                .sample_flat()
                .unwrap();
            let c = gaussian_curvature(&f).unwrap();
            let k = c.patches[0].k[10 * 21 + 10];
            assert!((k - 4.0 * a * b).abs() < 1e-6, "{k}");
        }
    }

    #[test]
    fn fd_gauss_factor_converges_to_jet_value() {
        let err = |n: usize| {
            let f = shapes::quadric_graph(n, 0.4, -0.3, 0.2).sample_flat().unwrap();
            let a = gauss_map_area_factor(&f).unwrap();
            let b = gauss_map_area_factor_fd(&f.without_jets()).unwrap();
            let mut m = 0.0f64;
            for (x, y) in a[0].iter().zip(&b[0]) {
                m = m.max((x - y).abs());
            }
            m
        };
        let (e1, e2) = (err(33), err(65));
        assert!(e1 / e2 > 3.0 && e1 / e2 < 5.0, "{e1} {e2}");
    }

    #[test]
    fn translated_sphere_is_rigid() {
        let s = shapes::cubed_sphere(17).sample().unwrap();
        let t = s.translated(&Vec3::new(1.0, -2.0, 0.5));
        let r = sphere_rigidity_probe(&s, &t, 1e-10).unwrap();
        assert!(r.distance <= 1e-10);
        assert!(r.consistent && r.translate_residual.unwrap() <= 1e-10);
    }

    #[test]
    fn cylinders_differ_in_principal_curvatures() {
        let a = shapes::unit_cylinder(65, 17);
        let f1 = a.sample().unwrap();
        let f2 = a.map_ambient(|p| Vec3::new(2.0 * p.x, 2.0 * p.y, p.z / 2.0)).sample_like(&f1).unwrap();
        let gap = principal_curvature_gap(&f1, &f2).unwrap();
        assert!((gap - 0.5).abs() < 1e-6, "{gap}");
        assert!(principal_curvature_gap(&f1, &f1).unwrap() == 0.0);
    }

    #[test]
    fn nonconvex_rejected() {
        let f = shapes::bumped_sphere(17, Vec3::z(), -0.6, 0.3).sample().unwrap();
        assert!(matches!(
            convex_uniqueness_probe(&f, &f, 1e-10),
            Err(Error::NotConvex(_))
        ));
    }
}
