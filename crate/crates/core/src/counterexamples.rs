//! Pairs of non-congruent immersions with equal square root normal fields.
//!
//! * cylinder: the unit cylinder and its image under `(x, y, z) -> (r x, r y, z / r)`;
//! * paraboloid: graphs `z = a X^2 + b Y^2` with equal `a b`;
//! * chessboard: a closed surface whose flat place carries caps that are
//!   translated to new positions, the flat part following an area-preserving
//!   rearrangement;
//! * flip: an annulus twisted by a half turn near its inner circle, with the
//!   inner cap inverted through the origin.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{
    EdgeKey, EdgeRef, EdgeTag, MeshPatch, ParametricPatch, ParametricSurface, Patch,
    Rect, Seam, Side, SurfaceImmersion, Vec3,
};
use crate::moser::{self, Circle, FlatPlace, HoledDiscDomain, MoserOptions, MoserOutput, MovePlan};
use crate::shapes::{self, smoothstep, CapProfile, TableBase, SEAM_TOL};

/// Unit cylinder and `L o Id` with `L(x, y, z) = (r x, r y, z / r)`, sampled on
/// the same angle x height grid with the metric of the first.
pub fn gen_cylinder_pair(r: f64, nu: usize, nv: usize) -> Result<(SurfaceImmersion, SurfaceImmersion)> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParam(format!("cylinder scale must be positive, got {r}")));
    }
    let base = shapes::unit_cylinder(nu, nv);
    let id = base.sample()?;
    let stretched = base
        .map_ambient(move |p| Vec3::new(r * p.x, r * p.y, p.z / r))
        .sample_like(&id)?;
    Ok((id, stretched))
}

/// Samples `B(x, y) = (x/a, y/b, x^2/a + y^2/b)` over `rect` with the flat
/// parameter metric.
pub fn gen_paraboloid(a: f64, b: f64, rect: Rect, nu: usize, nv: usize) -> Result<SurfaceImmersion> {
    if !(a * b != 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParam(format!("paraboloid needs a b != 0, got a = {a}, b = {b}")));
    }
    if !(rect.u1 > rect.u0 && rect.v1 > rect.v0) {
        return Err(Error::InvalidParam("empty parameter box".into()));
    }
    shapes::paraboloid(a, b, rect, nu, nv).sample_flat()
}

/// Largest angle between corresponding unit normals of two immersions on the
/// same layout.
pub fn max_normal_angle(f1: &SurfaceImmersion, f2: &SurfaceImmersion) -> Result<f64> {
    let n1 = crate::geom::normals(f1)?;
    let n2 = crate::geom::normals(f2)?;
    crate::geom::check_same_layout(f1, f2)?;
    Ok(n1
        .iter()
        .flatten()
        .zip(n2.iter().flatten())
        .map(|(a, b)| a.cross(b).norm().atan2(a.dot(b)))
        .fold(0.0, f64::max))
}

/// Tags every seam between mesh loops and grid edges: a grid edge joins a loop
/// when each of its samples lies on a loop sample.
fn attach_mesh(grid: SurfaceImmersion, mesh: MeshPatch, tol: f64) -> Result<SurfaceImmersion> {
    let mut patches = grid.patches;
    let mut seams = grid.seams;
    let mut next = seams.iter().map(|s| s.id + 1).max().unwrap_or(0);
    let mesh_index = patches.len();
    let mut loop_tags = vec![EdgeTag::Free; mesh.loops().len()];
    for (l, lp) in mesh.loops().iter().enumerate() {
        let ring: Vec<Vec3> = lp.iter().map(|&k| mesh.positions()[k]).collect();
        for (pi, patch) in patches.iter_mut().enumerate() {
            let Patch::Grid(g) = patch else { continue };
            let mut edges = g.edges();
            for side in Side::ALL {
                if edges[side.index()] != EdgeTag::Free {
                    continue;
                }
                let on_ring = g
                    .edge_indices(side)
                    .iter()
                    .all(|&k| ring.iter().any(|r| (g.positions()[k] - r).norm() <= tol));
                if on_ring {
                    seams.push(Seam {
                        id: next,
                        a: EdgeRef {
                            patch: mesh_index,
                            edge: EdgeKey::Loop(l),
                        },
                        b: EdgeRef {
                            patch: pi,
                            edge: EdgeKey::Side(side),
                        },
                    });
                    edges[side.index()] = EdgeTag::Seam(next);
                    loop_tags[l] = EdgeTag::Seam(next);
                    next += 1;
                }
            }
            *g = g.clone().with_edges(edges);
        }
    }
    patches.push(Patch::Mesh(mesh.with_loop_tags(loop_tags)?));
    SurfaceImmersion::new(patches, grid.orientation, seams)
}

/// Copies seams and edge tags of `reference` onto `f` (same layout).
fn with_topology_of(f: SurfaceImmersion, reference: &SurfaceImmersion) -> Result<SurfaceImmersion> {
    crate::geom::check_same_layout(&f, reference)?;
    let patches = f
        .patches
        .into_iter()
        .zip(&reference.patches)
        .map(|(p, r)| match (p, r) {
            (Patch::Grid(g), Patch::Grid(rg)) => Ok(Patch::Grid(g.with_edges(rg.edges()))),
            (Patch::Mesh(m), Patch::Mesh(rm)) => Ok(Patch::Mesh(m.with_loop_tags(rm.loop_tags().to_vec())?)),
            _ => Err(Error::GridMismatch("patch kinds differ".into())),
        })
        .collect::<Result<Vec<_>>>()?;
    SurfaceImmersion::new(patches, reference.orientation, reference.seams.clone())
}

fn translate_patch(p: &ParametricPatch, t: Vec3) -> ParametricPatch {
    let inner = p.map.clone();
    ParametricPatch {
        map: Arc::new(move |u: f64, v: f64| inner.eval(u, v) + t),
        ..p.clone()
    }
}

/// One hole of the flat place with the cap that closes it and its move.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscSpec {
    pub center: [f64; 2],
    pub radius: f64,
    #[serde(default)]
    pub cap: CapProfile,
    #[serde(default)]
    pub translation: [f64; 2],
}

/// Everything needed to build a chessboard pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChessboardSpec {
    pub outer: Circle,
    pub discs: Vec<DiscSpec>,
    /// Width of the pinned band around each circle.
    pub collar_width: f64,
    /// Interior mesh spacing of the flat place.
    pub mesh_spacing: f64,
    /// O-grid resolution of each cap; the hole boundary gets `4 (n - 1)` samples.
    pub cap_resolution: usize,
    /// Radial samples of the cap petals.
    pub cap_radial: usize,
    /// Samples along the profile of the table base.
    pub table_samples: usize,
    pub moser: MoserOptions,
    /// Explicit centre waypoints per disc; when empty, routes are planned.
    pub waypoints: Vec<(usize, Vec<[f64; 2]>)>,
}

impl Default for ChessboardSpec {
    fn default() -> Self {
        ChessboardSpec {
            outer: Circle::new([0.0, 0.0], 1.0),
            discs: vec![
                DiscSpec {
                    center: [-0.45, 0.2],
                    radius: 0.15,
                    cap: CapProfile {
                        height: 0.3,
                        tilt: 0.2,
                    },
                    translation: [0.35, 0.25],
                },
                DiscSpec {
                    center: [0.4, -0.25],
                    radius: 0.15,
                    cap: CapProfile {
                        height: 0.2,
                        tilt: -0.3,
                    },
                    translation: [-0.3, -0.2],
                },
            ],
            collar_width: 0.025,
            mesh_spacing: 0.025,
            cap_resolution: 65,
            cap_radial: 65,
            table_samples: 129,
            moser: MoserOptions::default(),
            waypoints: Vec::new(),
        }
    }
}

impl ChessboardSpec {
    pub fn flat_place(&self) -> FlatPlace {
        FlatPlace {
            outer: self.outer,
            inner: self.discs.iter().map(|d| Circle::new(d.center, d.radius)).collect(),
        }
    }

    pub fn translations(&self) -> Vec<[f64; 2]> {
        self.discs.iter().map(|d| d.translation).collect()
    }

    /// Outer-circle sample count: the first multiple of 8 at least `2 pi R / h`.
    pub fn outer_samples(&self) -> usize {
        let n = TAU * self.outer.radius / self.mesh_spacing;
        8 * ((n / 8.0).ceil() as usize).max(2)
    }
}

/// A chessboard pair with the data that produced it.
#[derive(Clone, Debug)]
pub struct Chessboard {
    pub spec: ChessboardSpec,
    pub domain: HoledDiscDomain,
    pub moser: MoserOutput,
    /// Identity on the assembled closed surface.
    pub id: SurfaceImmersion,
    /// Identity on the base, translations on the caps, the area-preserving
    /// rearrangement on the flat place.
    pub f: SurfaceImmersion,
    /// Index of the flat-place patch.
    pub flat_patch: usize,
}

/// Builds the closed chessboard surface and the rearranged immersion.
pub fn gen_chessboard(spec: &ChessboardSpec) -> Result<Chessboard> {
    let flat = spec.flat_place();
    flat.validate()?;
    if spec.cap_resolution < 3 || spec.cap_radial < 2 || spec.table_samples < 3 {
        return Err(Error::InvalidParam("chessboard resolutions too small".into()));
    }
    for d in &spec.discs {
        if d.cap.height.abs() * (1.0 + d.cap.tilt.abs()) >= d.radius.max(spec.outer.radius) {
            return Err(Error::InvalidParam("cap taller than the flat place is wide".into()));
        }
    }
    let m = spec.outer_samples();
    let sampling = moser::ogrid_sampling(m, &vec![spec.cap_resolution; spec.discs.len()]);
    let domain = HoledDiscDomain::generate(flat.clone(), &sampling, spec.mesh_spacing, spec.collar_width)
        .map_err(|e| e.at_stage("flat place mesh"))?;
    let plan = if spec.waypoints.is_empty() {
        moser::route(&domain, &spec.translations(), &spec.moser)?
    } else {
        let plan = MovePlan::from_waypoints(&flat, &spec.waypoints)?;
        let got = plan.translations(spec.discs.len());
        let want = spec.translations();
        if got.iter().zip(&want).any(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]) > 1e-12) {
            return Err(Error::InvalidParam("waypoints do not end at the translated centres".into()));
        }
        plan
    };
    let out = moser::flat_place_diffeo(&domain, &plan, &spec.moser)?;

    let c = spec.outer.center;
    let table_offset = Vec3::new(c[0], c[1], 0.0);
    let mut grid_patches = Vec::new();
    let mut cap_ranges = Vec::new();
    for d in &spec.discs {
        let start = grid_patches.len();
        grid_patches.extend(shapes::cap_patches(d.center, d.radius, d.cap, spec.cap_resolution, spec.cap_radial));
        cap_ranges.push(start..grid_patches.len());
    }
    let table = TableBase::for_radius(spec.outer.radius);
    grid_patches.extend(
        table
            .patches(spec.table_samples, m)
            .iter()
            .map(|p| translate_patch(p, table_offset)),
    );
    let grid = ParametricSurface::new(grid_patches, Vec::new()).detect_seams(SEAM_TOL);
    let mut moved = grid.clone();
    for (range, d) in cap_ranges.iter().zip(&spec.discs) {
        let t = Vec3::new(d.translation[0], d.translation[1], 0.0);
        for k in range.clone() {
            moved.patches[k] = translate_patch(&grid.patches[k], t);
        }
    }

    let mesh = &domain.mesh;
    let id_mesh = MeshPatch::new(
        mesh.nodes.clone(),
        mesh.triangles.clone(),
        mesh.nodes.iter().map(|p| Vec3::new(p[0], p[1], 0.0)).collect(),
        vec![[Vec3::x(), Vec3::y()]; mesh.nodes.len()],
        mesh.loops.clone(),
    )?;
    let f_mesh = MeshPatch::new(
        mesh.nodes.clone(),
        mesh.triangles.clone(),
        out.map.images.iter().map(|y| Vec3::new(y.x, y.y, 0.0)).collect(),
        out.map
            .jacobians
            .iter()
            .map(|j| [Vec3::new(j[(0, 0)], j[(1, 0)], 0.0), Vec3::new(j[(0, 1)], j[(1, 1)], 0.0)])
            .collect(),
        mesh.loops.clone(),
    )?;
    let tol = SEAM_TOL * spec.outer.radius.max(1.0);
    let id_grid = grid.sample()?;
    let id = attach_mesh(id_grid.clone(), id_mesh, tol)?;
    if !id.is_closed() {
        return Err(Error::NotClosed("chessboard assembly has free edges".into()));
    }
    id.validate()?;
    let f_grid = moved.sample_flat()?.with_metric_of(&id_grid)?;
    let mut f_patches = f_grid.patches;
    f_patches.push(Patch::Mesh(f_mesh));
    let f = with_topology_of(SurfaceImmersion::new(f_patches, id.orientation, Vec::new())?, &id)?;
    let flat_patch = id.patches.len() - 1;
    Ok(Chessboard {
        spec: spec.clone(),
        domain,
        moser: out,
        id,
        f,
        flat_patch,
    })
}

/// Rotation angle of the circle of radius `rho` in the flip twist.
#[derive(Clone)]
pub struct TwistProfile(pub Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl std::fmt::Debug for TwistProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("TwistProfile(..)")
    }
}

impl TwistProfile {
    /// `pi` on `[1, 1 + margin]`, 0 on `[2 - margin, 2]`, a smooth step between.
    pub fn standard(margin: f64) -> TwistProfile {
        TwistProfile(Arc::new(move |rho: f64| {
            PI * (1.0 - smoothstep((rho - 1.0 - margin) / (1.0 - 2.0 * margin)))
        }))
    }

    pub fn zero() -> TwistProfile {
        TwistProfile(Arc::new(|_| 0.0))
    }

    pub fn eval(&self, rho: f64) -> f64 {
        (self.0)(rho)
    }

    /// Checks the end values and that the profile is flat at both ends.
    pub fn validate(&self, inner: f64) -> Result<()> {
        let tol = 1e-10;
        let d = 1e-3;
        let checks = [
            (self.eval(1.0) - inner, "value at the inner circle"),
            (self.eval(2.0), "value at the outer circle"),
            (self.eval(1.0 + d) - self.eval(1.0), "variation near the inner circle"),
            (self.eval(2.0 - d) - self.eval(2.0), "variation near the outer circle"),
        ];
        for (err, what) in checks {
            if !(err.abs() <= tol) {
                return Err(Error::ProfileInvalid(format!("{what} off by {err:e}")));
            }
        }
        Ok(())
    }
}

/// The twist `x -> R(theta(|x|)) x` of the plane and its Jacobian.
pub fn twist_map(theta: &TwistProfile, x: [f64; 2]) -> [f64; 2] {
    let rho = x[0].hypot(x[1]);
    let (s, c) = theta.eval(rho).sin_cos();
    [c * x[0] - s * x[1], s * x[0] + c * x[1]]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlipSpec {
    /// Cap over the inner disc of radius 1.
    pub cap: CapProfile,
    /// O-grid resolution of the cap; the annulus gets `4 (n - 1)` angles.
    pub cap_resolution: usize,
    pub cap_radial: usize,
    pub annulus_radial: usize,
    pub table_samples: usize,
    /// Width of the constant ends of the standard twist.
    pub twist_margin: f64,
    /// Invert the cap through the origin; off gives the identity branch.
    pub invert_cap: bool,
}

impl Default for FlipSpec {
    fn default() -> Self {
        FlipSpec {
            cap: CapProfile {
                height: 0.3,
                tilt: 0.4,
            },
            cap_resolution: 65,
            cap_radial: 65,
            annulus_radial: 65,
            table_samples: 129,
            twist_margin: 0.15,
            invert_cap: true,
        }
    }
}

/// Identity and flip on the closed surface built from the annulus
/// `1 <= |x| <= 2`, a cap over the unit disc and a base below the outer circle.
pub fn gen_flip(spec: &FlipSpec, twist: &TwistProfile) -> Result<(SurfaceImmersion, SurfaceImmersion)> {
    twist.validate(if spec.invert_cap { PI } else { 0.0 })?;
    let n = spec.cap_resolution;
    if n < 3 || spec.cap_radial < 2 || spec.annulus_radial < 2 {
        return Err(Error::InvalidParam("flip resolutions too small".into()));
    }
    let m = 4 * (n - 1);
    if !m.is_multiple_of(8) {
        return Err(Error::InvalidParam("cap resolution must be odd".into()));
    }
    let annulus = shapes::polar_annulus(1.0, 2.0, spec.annulus_radial, m);
    let mut patches = vec![annulus.clone()];
    let caps = shapes::cap_patches([0.0, 0.0], 1.0, spec.cap, n, spec.cap_radial);
    let cap_range = 1..1 + caps.len();
    patches.extend(caps);
    patches.extend(TableBase::for_radius(2.0).patches(spec.table_samples, m));
    let id_surface = ParametricSurface::new(patches, Vec::new()).detect_seams(SEAM_TOL);

    let mut flipped = id_surface.clone();
    let tw = twist.clone();
    flipped.patches[0] = ParametricPatch {
        map: Arc::new(move |rho: f64, t: f64| {
            let a = t + tw.eval(rho);
            Vec3::new(rho * a.cos(), rho * a.sin(), 0.0)
        }),
        ..id_surface.patches[0].clone()
    };
    if spec.invert_cap {
        for k in cap_range {
            let inner = id_surface.patches[k].map.clone();
            flipped.patches[k] = ParametricPatch {
                map: Arc::new(move |u: f64, v: f64| -inner.eval(u, v)),
                ..id_surface.patches[k].clone()
            };
        }
    }
    let id = id_surface.sample()?;
    if !id.is_closed() {
        return Err(Error::NotClosed("flip assembly has free edges".into()));
    }
    id.validate()?;
    let f = flipped.sample_like(&id)?;
    Ok((id, f))
}

/// Grid patch count check used by callers that need per-patch certificates.
pub fn min_patch_samples(f: &SurfaceImmersion) -> usize {
    f.patches.iter().map(Patch::len).min().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::srnf;
    use crate::metric::{distance_report, srnf_distance};

    #[test]
    fn cylinder_pair_has_equal_fields() {
        let (a, b) = gen_cylinder_pair(2.0, 33, 17).unwrap();
        let r = distance_report(&a, &b).unwrap();
        assert!(r.distance <= 1e-10 * r.field_norms[0], "{r:?}");
        let f = crate::geom::area_factors(&b).unwrap();
        assert!(f.iter().flatten().all(|v| (v - 1.0).abs() < 1e-10));
        assert!(matches!(gen_cylinder_pair(0.0, 9, 9), Err(Error::InvalidParam(_))));
        let (c, d) = gen_cylinder_pair(1.0, 9, 9).unwrap();
        assert_eq!(c.patches[0].positions(), d.patches[0].positions());
    }

    #[test]
    fn paraboloids_with_equal_product_agree() {
        let rect = Rect::new(-1.0, 1.0, -1.0, 1.0);
        let a = gen_paraboloid(1.0, 4.0, rect, 33, 33).unwrap();
        let b = gen_paraboloid(2.0, 2.0, rect, 33, 33).unwrap();
        let qa = srnf(&a).unwrap();
        assert!(qa.max_deviation(&srnf(&b).unwrap()).unwrap() <= 1e-10);
        assert!(matches!(gen_paraboloid(0.0, 1.0, rect, 9, 9), Err(Error::InvalidParam(_))));
        // cross product (-2x, -2y, 1) / (a b) at (1, 0) for a = b = 1
        let p = gen_paraboloid(1.0, 1.0, Rect::new(0.0, 1.0, 0.0, 1.0), 9, 9).unwrap();
        let g = p.patches[0].as_grid().unwrap();
        let (du, dv) = g.tangents(8, 0);
        assert!((du.cross(&dv) - Vec3::new(-2.0, 0.0, 1.0)).norm() < 1e-9);
    }

    #[test]
    fn twist_is_area_preserving() {
        let tw = TwistProfile::standard(0.15);
        tw.validate(PI).unwrap();
        let h = 1e-6;
        for k in 0..50 {
            let rho = 1.0 + k as f64 / 49.0;
            let a = 0.37 * k as f64;
            let x = [rho * a.cos(), rho * a.sin()];
            let d = |i: usize| {
                let mut p = x;
                let mut q = x;
                p[i] += h;
                q[i] -= h;
                let (fp, fq) = (twist_map(&tw, p), twist_map(&tw, q));
                [(fp[0] - fq[0]) / (2.0 * h), (fp[1] - fq[1]) / (2.0 * h)]
            };
            let (c0, c1) = (d(0), d(1));
            assert!((c0[0] * c1[1] - c0[1] * c1[0] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn bad_twist_rejected() {
        let spec = FlipSpec::default();
        let wrong = TwistProfile(Arc::new(|rho: f64| PI * (2.0 - rho)));
        assert!(matches!(gen_flip(&spec, &wrong), Err(Error::ProfileInvalid(_))));
    }

    #[test]
    fn flip_pair_closes_and_agrees() {
        let spec = FlipSpec {
            cap_resolution: 33,
            cap_radial: 17,
            annulus_radial: 17,
            table_samples: 65,
            ..FlipSpec::default()
        };
        let (id, f) = gen_flip(&spec, &TwistProfile::standard(0.15)).unwrap();
        assert!(id.is_closed());
        f.validate().unwrap();
        let q = srnf(&id).unwrap();
        let d = srnf_distance(&id, &f).unwrap();
        assert!(d <= 1e-6 * crate::metric::l2_norm(&q), "{d}");
        let gb = crate::curvature::gauss_bonnet_check(&id).unwrap();
        assert!((gb - 4.0 * PI).abs() < 0.05, "{gb}");
    }

    #[test]
    fn flip_identity_branch() {
        let spec = FlipSpec {
            cap_resolution: 9,
            cap_radial: 5,
            annulus_radial: 9,
            table_samples: 9,
            invert_cap: false,
            ..FlipSpec::default()
        };
        let (id, f) = gen_flip(&spec, &TwistProfile::zero()).unwrap();
        for (a, b) in id.all_positions().zip(f.all_positions()) {
            assert_eq!(a, b);
        }
    }

    fn small_spec() -> ChessboardSpec {
        ChessboardSpec {
            discs: vec![DiscSpec {
                center: [-0.2, 0.0],
                radius: 0.2,
                cap: CapProfile::default(),
                translation: [0.3, 0.0],
            }],
            mesh_spacing: 0.06,
            cap_resolution: 17,
            cap_radial: 9,
            table_samples: 17,
            ..ChessboardSpec::default()
        }
    }

    #[test]
    fn chessboard_single_disc() {
        let cb = gen_chessboard(&small_spec()).unwrap();
        assert!(cb.id.is_closed());
        cb.f.validate().unwrap();
        let q = srnf(&cb.id).unwrap();
        let d = srnf_distance(&cb.id, &cb.f).unwrap();
        assert!(d <= 1e-3 * crate::metric::l2_norm(&q));
        assert!(max_normal_angle(&cb.id, &cb.f).unwrap() <= 1e-6);
        assert!(cb.moser.certificate.max_detj_dev <= 1e-4);
    }

    #[test]
    fn chessboard_without_moves_is_identity() {
        let mut spec = small_spec();
        spec.discs[0].translation = [0.0, 0.0];
        let cb = gen_chessboard(&spec).unwrap();
        for (a, b) in cb.id.all_positions().zip(cb.f.all_positions()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn chessboard_overlap_rejected() {
        let mut spec = small_spec();
        spec.discs[0].translation = [1.0, 0.0];
        let err = gen_chessboard(&spec);
        assert!(matches!(err, Err(Error::Overlap(_))), "{err:?}");
    }
}
