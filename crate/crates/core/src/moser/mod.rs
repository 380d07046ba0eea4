//! Area-preserving rearrangement of the holes of a flat place.
//!
//! The construction has two stages. Cut-off tube flows carry each hole to its
//! target, giving a diffeomorphism `F` that is a translation near every moved
//! hole and the identity near the fixed circles. Moser's argument then
//! corrects `F` to an area-preserving map: with `rho_1 = det DF` and
//! `rho_t = 1 + t (rho_1 - 1)`, solve `Laplace u = rho_1 - 1` with Neumann data,
//! flow the field `eta_t = -grad u / rho_t` for unit time to get `f_1`, and
//! return `F o f_1`, whose Jacobian determinant is one.

pub mod fem;
pub mod mesh;
pub mod tube;

pub use fem::Potential;
pub use mesh::{Circle, CircleSampling, FlatPlace, Locator, TriMesh};
pub use tube::{Tube, TubeKind, V2};

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type M2 = Matrix2<f64>;

/// A meshed flat place with pinned collars around its boundary circles.
#[derive(Clone, Debug)]
pub struct HoledDiscDomain {
    pub flat: FlatPlace,
    pub mesh: TriMesh,
    /// Maps are pinned within this distance of each circle; the Moser field
    /// ramps up between one and two collar widths.
    pub collar_width: f64,
}

impl HoledDiscDomain {
    pub fn new(flat: FlatPlace, mesh: TriMesh, collar_width: f64) -> Result<Self> {
        flat.validate()?;
        if !(collar_width > 0.0) || flat.clearance() <= 4.0 * collar_width {
            return Err(Error::Overlap(format!(
                "collars of width {collar_width} need clearance above {}, have {}",
                4.0 * collar_width,
                flat.clearance()
            )));
        }
        Ok(HoledDiscDomain {
            flat,
            mesh,
            collar_width,
        })
    }

    /// Meshes `flat` with interior spacing `h` and the given boundary sampling.
    pub fn generate(
        flat: FlatPlace,
        sampling: &[CircleSampling],
        h: f64,
        collar_width: f64,
    ) -> Result<Self> {
        let mesh = TriMesh::generate(&flat, sampling, h)?;
        HoledDiscDomain::new(flat, mesh, collar_width)
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.flat.outer.radius
    }

    /// Smooth cut-off: 0 within one collar width of a circle, 1 beyond two,
    /// with its gradient.
    pub fn collar_cutoff(&self, x: &V2) -> (f64, V2) {
        let w = self.collar_width;
        let mut best = (f64::INFINITY, V2::zeros());
        for (k, c) in self.flat.circles().enumerate() {
            let rel = V2::new(x.x - c.center[0], x.y - c.center[1]);
            let r = rel.norm();
            let (d, grad) = if k == 0 {
                (c.radius - r, -rel / r.max(1e-300))
            } else {
                (r - c.radius, rel / r.max(1e-300))
            };
            if d < best.0 {
                best = (d, grad);
            }
        }
        let s = (best.0 - w) / w;
        let [v, d1, _] = tube::smoothstep_jet(s);
        (v, best.1 * (d1 / w))
    }

    /// Index of the circle whose collar contains `x` (0 = outer).
    pub fn collar_of(&self, x: [f64; 2]) -> Option<usize> {
        let (d, k) = self.flat.boundary_distance(x);
        (d <= self.collar_width).then_some(k)
    }

    /// Distance by which `x` lies outside the domain.
    pub fn outside_distance(&self, x: [f64; 2]) -> f64 {
        let mut e = (self.flat.outer.dist_to_center(x) - self.flat.outer.radius).max(0.0);
        for c in &self.flat.inner {
            e = e.max(c.radius - c.dist_to_center(x));
        }
        e
    }
}

/// Nodal values of an area density `rho dx dy`.
#[derive(Clone, Debug)]
pub struct DensityField {
    pub values: Vec<f64>,
    pub total: f64,
}

impl DensityField {
    pub fn new(mesh: &TriMesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.nodes.len() {
            return Err(Error::InvalidParam("density needs one value per node".into()));
        }
        if let Some(k) = values.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::NonPositiveJacobian {
                node: k,
                det: values[k],
            });
        }
        let total = fem::integrate(mesh, &values);
        Ok(DensityField { values, total })
    }

    pub fn uniform(mesh: &TriMesh) -> Self {
        DensityField::new(mesh, vec![1.0; mesh.nodes.len()]).expect("ones are positive")
    }
}

/// A map of the flat place sampled at mesh nodes, with its Jacobian.
#[derive(Clone, Debug)]
pub struct PlanarMap {
    pub images: Vec<V2>,
    pub jacobians: Vec<M2>,
}

impl PlanarMap {
    pub fn identity(mesh: &TriMesh) -> PlanarMap {
        PlanarMap {
            images: mesh.nodes.iter().map(|p| V2::new(p[0], p[1])).collect(),
            jacobians: vec![M2::identity(); mesh.nodes.len()],
        }
    }

    pub fn det_j(&self) -> Vec<f64> {
        self.jacobians.iter().map(|j| j.determinant()).collect()
    }

    pub fn max_det_deviation(&self) -> f64 {
        self.det_j().iter().map(|d| (d - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Jacobian determinant of the piecewise-linear interpolant on each
    /// triangle of the deformed mesh.
    pub fn triangle_dets(&self, mesh: &TriMesh) -> Vec<f64> {
        mesh.triangles
            .iter()
            .map(|tri| {
                let [a, b, c] = tri.map(|k| self.images[k]);
                let [p, q, r] = tri.map(|k| V2::new(mesh.nodes[k][0], mesh.nodes[k][1]));
                (b - a).perp(&(c - a)) / (q - p).perp(&(r - p))
            })
            .collect()
    }
}

/// One leg of a disc's route: the hole moves by `shift` along a straight tube.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub disc: usize,
    pub shift: [f64; 2],
}

/// Ordered legs realizing a rearrangement; several legs may move one disc.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MovePlan {
    pub legs: Vec<Leg>,
}

impl MovePlan {
    /// Legs through explicit waypoints (absolute centres) per disc, in order.
    pub fn from_waypoints(flat: &FlatPlace, routes: &[(usize, Vec<[f64; 2]>)]) -> Result<MovePlan> {
        let mut centers: Vec<[f64; 2]> = flat.inner.iter().map(|c| c.center).collect();
        let mut legs = Vec::new();
        for (disc, pts) in routes {
            let c = centers
                .get_mut(*disc)
                .ok_or_else(|| Error::InvalidParam(format!("no disc {disc}")))?;
            for p in pts {
                legs.push(Leg {
                    disc: *disc,
                    shift: [p[0] - c[0], p[1] - c[1]],
                });
                *c = *p;
            }
        }
        Ok(MovePlan { legs })
    }

    /// Total translation of each disc.
    pub fn translations(&self, discs: usize) -> Vec<[f64; 2]> {
        let mut t = vec![[0.0; 2]; discs];
        for l in &self.legs {
            t[l.disc][0] += l.shift[0];
            t[l.disc][1] += l.shift[1];
        }
        t
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MoserOptions {
    pub tube_kind: TubeKind,
    /// Normalized tube distance of the plateau edge.
    pub plateau: f64,
    /// RK4 steps per tube flow.
    pub tube_steps: usize,
    /// RK4 steps for the Moser flow over `t in [0, 1]`.
    pub moser_steps: usize,
    /// Largest relative mass defect `|int rho_1 - int rho_0| / int rho_0`
    /// absorbed by rescaling `rho_1`. Defects of this size come from
    /// quadrature; larger ones are reported as incompatible data.
    pub mass_tolerance: f64,
}

impl Default for MoserOptions {
    fn default() -> Self {
        MoserOptions {
            tube_kind: TubeKind::Hamiltonian,
            plateau: 0.7,
            tube_steps: 128,
            moser_steps: 64,
            mass_tolerance: 1e-6,
        }
    }
}

/// The time-one maps of a sequence of tubes, composed in order.
#[derive(Clone, Debug)]
pub struct TubeFlows {
    pub tubes: Vec<Tube>,
    pub steps: usize,
}

impl TubeFlows {
    pub fn eval(&self, x: V2) -> (V2, M2) {
        self.tubes
            .iter()
            .fold((x, M2::identity()), |(x, j), t| t.flow(x, j, self.steps))
    }
}

fn check_targets(domain: &HoledDiscDomain, translations: &[[f64; 2]]) -> Result<FlatPlace> {
    if translations.len() != domain.flat.inner.len() {
        return Err(Error::InvalidParam(format!(
            "{} translations for {} discs",
            translations.len(),
            domain.flat.inner.len()
        )));
    }
    let target = FlatPlace {
        outer: domain.flat.outer,
        inner: domain
            .flat
            .inner
            .iter()
            .zip(translations)
            .map(|(c, t)| c.translated(*t))
            .collect(),
    };
    let gap = target.clearance();
    if gap <= 4.0 * domain.collar_width {
        return Err(Error::Overlap(format!(
            "target discs have clearance {gap}, collars need {}",
            4.0 * domain.collar_width
        )));
    }
    Ok(target)
}

/// Builds the tube for one leg and checks that its support avoids the outer
/// collar band and every other disc with its band.
fn leg_tube(
    domain: &HoledDiscDomain,
    centers: &[[f64; 2]],
    disc: usize,
    shift: V2,
    opts: &MoserOptions,
) -> std::result::Result<Tube, String> {
    let band = 2.0 * domain.collar_width;
    let c = domain.flat.inner[disc];
    let start = V2::new(centers[disc][0], centers[disc][1]);
    let tube = Tube::for_disc(start, shift, c.radius + band, opts.plateau, opts.tube_kind);
    let o = domain.flat.outer;
    let outline = tube.outline(720);
    let o_c = V2::new(o.center[0], o.center[1]);
    if let Some(p) = outline.iter().find(|p| (*p - o_c).norm() > o.radius - band) {
        return Err(format!("tube leaves the outer disc near ({:.3}, {:.3})", p.x, p.y));
    }
    for (j, (cj, other)) in centers.iter().zip(&domain.flat.inner).enumerate() {
        if j == disc {
            continue;
        }
        let q = V2::new(cj[0], cj[1]);
        let reach = other.radius + band;
        if tube.distance(&q) < 1.0 || outline.iter().any(|p| (p - q).norm() < reach) {
            return Err(format!("tube meets disc {j}"));
        }
    }
    Ok(tube)
}

/// Plans straight moves, falling back to two-leg axis-aligned detours, and
/// orders discs greedily so every tube is clear when its disc moves.
pub fn route(domain: &HoledDiscDomain, translations: &[[f64; 2]], opts: &MoserOptions) -> Result<MovePlan> {
    check_targets(domain, translations)?;
    let mut centers: Vec<[f64; 2]> = domain.flat.inner.iter().map(|c| c.center).collect();
    let mut pending: Vec<usize> = (0..translations.len())
        .filter(|&k| translations[k] != [0.0, 0.0])
        .collect();
    let mut legs = Vec::new();
    while !pending.is_empty() {
        let mut progressed = false;
        let mut last_reason = String::new();
        for idx in 0..pending.len() {
            let d = pending[idx];
            let t = translations[d];
            let options: [Vec<[f64; 2]>; 3] = [
                vec![t],
                vec![[t[0], 0.0], [0.0, t[1]]],
                vec![[0.0, t[1]], [t[0], 0.0]],
            ];
            for candidate in options {
                let mut trial = centers.clone();
                let mut ok = true;
                for s in candidate.iter().filter(|s| **s != [0.0, 0.0]) {
                    match leg_tube(domain, &trial, d, V2::new(s[0], s[1]), opts) {
                        Ok(_) => {
                            trial[d][0] += s[0];
                            trial[d][1] += s[1];
                        }
                        Err(e) => {
                            last_reason = e;
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    legs.extend(
                        candidate
                            .iter()
                            .filter(|s| **s != [0.0, 0.0])
                            .map(|s| Leg { disc: d, shift: *s }),
                    );
                    centers = trial;
                    pending.remove(idx);
                    progressed = true;
                    break;
                }
            }
            if progressed {
                break;
            }
        }
        if !progressed {
            return Err(Error::RoutingFailed {
                disc: pending[0],
                reason: format!("{last_reason}; supply explicit waypoints"),
            });
        }
    }
    Ok(MovePlan { legs })
}

/// The tube-flow diffeomorphism `F` realizing `plan`, evaluated at the nodes.
pub fn initial_rearrangement_diffeo(
    domain: &HoledDiscDomain,
    plan: &MovePlan,
    opts: &MoserOptions,
) -> Result<(TubeFlows, PlanarMap)> {
    check_targets(domain, &plan.translations(domain.flat.inner.len()))?;
    let mut centers: Vec<[f64; 2]> = domain.flat.inner.iter().map(|c| c.center).collect();
    let mut tubes = Vec::with_capacity(plan.legs.len());
    for leg in &plan.legs {
        if leg.disc >= centers.len() {
            return Err(Error::InvalidParam(format!("no disc {}", leg.disc)));
        }
        let shift = V2::new(leg.shift[0], leg.shift[1]);
        if shift == V2::zeros() {
            continue;
        }
        let tube = leg_tube(domain, &centers, leg.disc, shift, opts)
            .map_err(|reason| Error::RoutingFailed {
                disc: leg.disc,
                reason,
            })?;
        tubes.push(tube);
        centers[leg.disc][0] += leg.shift[0];
        centers[leg.disc][1] += leg.shift[1];
    }
    let flows = TubeFlows {
        tubes,
        steps: opts.tube_steps,
    };
    let (images, jacobians): (Vec<V2>, Vec<M2>) = domain
        .mesh
        .nodes
        .par_iter()
        .map(|p| flows.eval(V2::new(p[0], p[1])))
        .unzip();
    let map = PlanarMap { images, jacobians };
    if let Some((k, d)) = map
        .det_j()
        .iter()
        .enumerate()
        .find(|(_, d)| !(**d > 0.0))
    {
        return Err(Error::NonPositiveJacobian { node: k, det: *d });
    }
    Ok((flows, map))
}

/// `rho(F(x)) det DF(x)` at the nodes.
pub fn pullback_density(mesh: &TriMesh, f: &PlanarMap, rho: impl Fn(V2) -> f64) -> Result<DensityField> {
    let values = f
        .images
        .iter()
        .zip(&f.jacobians)
        .enumerate()
        .map(|(k, (y, j))| {
            let d = j.determinant();
            if !(d > 0.0) {
                return Err(Error::NonPositiveJacobian { node: k, det: d });
            }
            Ok(rho(*y) * d)
        })
        .collect::<Result<Vec<_>>>()?;
    DensityField::new(mesh, values)
}

/// Neumann potential with `Laplace u = rho_1 - rho_0`; the solvability
/// tolerance is relative to the total mass of `rho_0`.
pub fn solve_potential(mesh: &TriMesh, rho0: &DensityField, rho1: &DensityField) -> Result<Potential> {
    let g: Vec<f64> = rho1.values.iter().zip(&rho0.values).map(|(a, b)| a - b).collect();
    fem::solve_neumann(mesh, &g, rho0.total.abs())
}

/// A time-dependent velocity field on the flat place.
pub trait VelocityField: Sync {
    fn velocity(&self, t: f64, x: &V2) -> Result<(V2, M2)>;
}

/// `eta_t = -chi grad u / rho_t`, with `grad u` the recovered nodal gradient
/// and `chi` the collar cut-off, interpolated linearly on the mesh.
pub struct TransportField<'a> {
    domain: &'a HoledDiscDomain,
    locator: Locator<'a>,
    grad: Vec<V2>,
    rho0: Vec<f64>,
    rho1: Vec<f64>,
    tri_dgrad: Vec<M2>,
    tri_drho0: Vec<V2>,
    tri_drho1: Vec<V2>,
    /// Nodes where the cut-off gradient is above `1e-14` of its maximum.
    pub support: Vec<bool>,
    /// Largest `|grad u|` at nodes where the cut-off is below one: the part
    /// of the exact Moser field that the collar pinning removes.
    pub collar_residual: f64,
}

impl<'a> TransportField<'a> {
    pub fn new(
        domain: &'a HoledDiscDomain,
        u: &[f64],
        rho0: &DensityField,
        rho1: &DensityField,
    ) -> Result<Self> {
        let mesh = &domain.mesh;
        // rho_t is affine in t, so positivity at t = 0 and t = 1 suffices
        let min = rho0
            .values
            .iter()
            .chain(&rho1.values)
            .fold(f64::INFINITY, |m, v| m.min(*v));
        if !(min > 0.0) {
            return Err(Error::DegenerateInterpolation { min });
        }
        let grad: Vec<V2> = fem::recovered_gradient(mesh, u)
            .iter()
            .map(|g| V2::new(g[0], g[1]))
            .collect();
        let mut tri_dgrad = Vec::with_capacity(mesh.triangles.len());
        let mut tri_drho0 = Vec::with_capacity(mesh.triangles.len());
        let mut tri_drho1 = Vec::with_capacity(mesh.triangles.len());
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let (h, _) = fem::hat_gradients(mesh, t);
            let mut dg = M2::zeros();
            let mut d0 = V2::zeros();
            let mut d1 = V2::zeros();
            for a in 0..3 {
                let ha = V2::new(h[a][0], h[a][1]);
                dg += grad[tri[a]] * ha.transpose();
                d0 += ha * rho0.values[tri[a]];
                d1 += ha * rho1.values[tri[a]];
            }
            tri_dgrad.push(dg);
            tri_drho0.push(d0);
            tri_drho1.push(d1);
        }
        let gmax = grad.iter().map(|g| g.norm()).fold(0.0, f64::max);
        let mut collar_residual = 0.0f64;
        let mut support = Vec::with_capacity(grad.len());
        for (p, g) in mesh.nodes.iter().zip(&grad) {
            let (chi, _) = domain.collar_cutoff(&V2::new(p[0], p[1]));
            if chi < 1.0 {
                collar_residual = collar_residual.max((1.0 - chi) * g.norm());
            }
            support.push(chi * g.norm() > 1e-14 * gmax);
        }
        Ok(TransportField {
            domain,
            locator: Locator::new(mesh),
            grad,
            rho0: rho0.values.clone(),
            rho1: rho1.values.clone(),
            tri_dgrad,
            tri_drho0,
            tri_drho1,
            support,
            collar_residual,
        })
    }
}

impl VelocityField for TransportField<'_> {
    fn velocity(&self, t: f64, x: &V2) -> Result<(V2, M2)> {
        let (chi, dchi) = self.domain.collar_cutoff(x);
        if chi == 0.0 {
            return Ok((V2::zeros(), M2::zeros()));
        }
        let loc = self.locator.locate([x.x, x.y]);
        if loc.excess > 1e-6 {
            return Err(Error::StepUnstable {
                node: usize::MAX,
                excess: loc.excess,
            });
        }
        let tri = self.domain.mesh.triangles[loc.triangle];
        let mut g = V2::zeros();
        let (mut r0, mut r1) = (0.0, 0.0);
        for (&k, &w) in tri.iter().zip(&loc.bary) {
            g += self.grad[k] * w;
            r0 += self.rho0[k] * w;
            r1 += self.rho1[k] * w;
        }
        let rho = r0 + t * (r1 - r0);
        let drho = self.tri_drho0[loc.triangle] * (1.0 - t) + self.tri_drho1[loc.triangle] * t;
        let eta = -g * (chi / rho);
        // d(eta)_ab = -(dchi_b g_a + chi dg_ab) / rho + chi g_a drho_b / rho^2
        let jac = -(g * dchi.transpose() + self.tri_dgrad[loc.triangle] * chi) / rho
            + g * drho.transpose() * (chi / (rho * rho));
        Ok((eta, jac))
    }
}

/// Time-one map of `field` from every node by fixed-step RK4, carrying the
/// Jacobian through the variational equation.
pub fn integrate_flow(domain: &HoledDiscDomain, field: &dyn VelocityField, steps: usize) -> Result<PlanarMap> {
    let points: Vec<V2> = domain.mesh.nodes.iter().map(|p| V2::new(p[0], p[1])).collect();
    let (images, jacobians) = integrate_points(domain, field, steps, &points)?.into_iter().unzip();
    Ok(PlanarMap { images, jacobians })
}

/// Time-one map of `field` and its Jacobian at arbitrary points of the domain.
/// Errors name the index of the offending point.
pub fn integrate_points(
    domain: &HoledDiscDomain,
    field: &dyn VelocityField,
    steps: usize,
    points: &[V2],
) -> Result<Vec<(V2, M2)>> {
    let dt = 1.0 / steps as f64;
    points
        .par_iter()
        .enumerate()
        .map(|(node, p)| {
            let mut x = *p;
            let mut j = M2::identity();
            let tag = |e: Error| match e {
                Error::StepUnstable { excess, .. } => Error::StepUnstable { node, excess },
                other => other,
            };
            for s in 0..steps {
                let t = s as f64 * dt;
                let (k1, a1) = field.velocity(t, &x).map_err(tag)?;
                let (k2, a2) = field.velocity(t + 0.5 * dt, &(x + k1 * (0.5 * dt))).map_err(tag)?;
                let (k3, a3) = field.velocity(t + 0.5 * dt, &(x + k2 * (0.5 * dt))).map_err(tag)?;
                let (k4, a4) = field.velocity(t + dt, &(x + k3 * dt)).map_err(tag)?;
                let j1 = a1 * j;
                let j2 = a2 * (j + j1 * (0.5 * dt));
                let j3 = a3 * (j + j2 * (0.5 * dt));
                let j4 = a4 * (j + j3 * dt);
                x += (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);
                j += (j1 + (j2 + j3) * 2.0 + j4) * (dt / 6.0);
                let excess = domain.outside_distance([x.x, x.y]);
                if excess > 1e-6 {
                    return Err(Error::StepUnstable { node, excess });
                }
            }
            Ok((x, j))
        })
        .collect()
}

/// End-to-end check of a produced map.
#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    /// `max |det D f - 1|` over nodes.
    pub max_detj_dev: f64,
    /// The same for the tube-flow map alone.
    pub initial_max_detj_dev: f64,
    /// `max |f(x) - pinned(x)|` over collar nodes.
    pub collar_dev: f64,
    pub diameter: f64,
    /// Relative weak residual of the potential solve.
    pub potential_residual: f64,
    /// Largest potential gradient removed by the collar cut-off.
    pub transport_collar_residual: f64,
    /// Factor applied to `rho_1` to match the mass of `rho_0`.
    pub mass_factor: f64,
    /// `int rho_1 - int rho_0` before normalization.
    pub mass_defect: f64,
    pub stages: Vec<String>,
}

impl Certificate {
    pub fn passes(&self, det_tol: f64, collar_tol_ratio: f64) -> bool {
        self.max_detj_dev <= det_tol && self.collar_dev <= collar_tol_ratio * self.diameter
    }
}

#[derive(Clone, Debug)]
pub struct MoserOutput {
    pub plan: MovePlan,
    pub flows: TubeFlows,
    pub initial: PlanarMap,
    pub correction: PlanarMap,
    pub map: PlanarMap,
    pub potential: Potential,
    pub rho1: DensityField,
    pub certificate: Certificate,
    pub opts: MoserOptions,
}

impl MoserOutput {
    /// The corrected map and its Jacobian at arbitrary points of `domain`,
    /// which must be the domain the output was computed on.
    pub fn eval_points(&self, domain: &HoledDiscDomain, points: &[V2]) -> Result<Vec<(V2, M2)>> {
        let rho0 = DensityField::uniform(&domain.mesh);
        let field = TransportField::new(domain, &self.potential.u, &rho0, &self.rho1)?;
        let moved = integrate_points(domain, &field, self.opts.moser_steps, points)?;
        Ok(moved
            .par_iter()
            .map(|(y, j1)| {
                let (z, jf) = self.flows.eval(*y);
                (z, jf * j1)
            })
            .collect())
    }

    /// Central-difference Jacobian determinants of the corrected map at
    /// `points`, evaluating the map afresh at offsets `step`.
    pub fn fd_det(&self, domain: &HoledDiscDomain, points: &[V2], step: f64) -> Result<Vec<f64>> {
        let offsets = [V2::new(step, 0.0), V2::new(-step, 0.0), V2::new(0.0, step), V2::new(0.0, -step)];
        let probes: Vec<V2> = points.iter().flat_map(|p| offsets.map(|o| p + o)).collect();
        let images = self.eval_points(domain, &probes)?;
        Ok(images
            .chunks(4)
            .map(|c| {
                let du = (c[0].0 - c[1].0) / (2.0 * step);
                let dv = (c[2].0 - c[3].0) / (2.0 * step);
                du.perp(&dv)
            })
            .collect())
    }

    /// Richardson extrapolation of [`fd_det`](Self::fd_det) from steps `step`
    /// and `step / 2`, accurate to O(step^4). Needed where the tube flows shear
    /// strongly and the plain O(step^2) error is large.
    pub fn fd_det_extrapolated(&self, domain: &HoledDiscDomain, points: &[V2], step: f64) -> Result<Vec<f64>> {
        let coarse = self.fd_det(domain, points, step)?;
        let fine = self.fd_det(domain, points, 0.5 * step)?;
        Ok(coarse.iter().zip(&fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect())
    }
}

/// Largest deviation of `map` from its pinned values on collar nodes: the
/// translation of the hole for inner collars, the identity for the outer one.
pub fn collar_deviation(domain: &HoledDiscDomain, translations: &[[f64; 2]], map: &PlanarMap) -> f64 {
    domain
        .mesh
        .nodes
        .iter()
        .zip(&map.images)
        .filter_map(|(p, y)| {
            domain.collar_of(*p).map(|k| {
                let t = if k == 0 { [0.0, 0.0] } else { translations[k - 1] };
                (y - V2::new(p[0] + t[0], p[1] + t[1])).norm()
            })
        })
        .fold(0.0, f64::max)
}

/// Area-preserving diffeomorphism of the flat place that translates each hole
/// by its entry of the plan and is the identity near the outer circle.
pub fn flat_place_diffeo(domain: &HoledDiscDomain, plan: &MovePlan, opts: &MoserOptions) -> Result<MoserOutput> {
    let mut stages = Vec::new();
    let (flows, initial) =
        initial_rearrangement_diffeo(domain, plan, opts).map_err(|e| e.at_stage("tube flows"))?;
    stages.push("tube flows".to_string());
    let mesh = &domain.mesh;
    let rho0 = DensityField::uniform(mesh);
    let mut rho1 = pullback_density(mesh, &initial, |_| 1.0).map_err(|e| e.at_stage("pullback"))?;
    stages.push("pullback".to_string());
    let mass_defect = rho1.total - rho0.total;
    let tolerance = opts.mass_tolerance * rho0.total.abs();
    if !(mass_defect.abs() <= tolerance) {
        return Err(Error::IncompatibleData {
            integral: mass_defect,
            tolerance,
        }
        .at_stage("pullback"));
    }
    let mass_factor = rho0.total / rho1.total;
    rho1 = DensityField::new(mesh, rho1.values.iter().map(|v| v * mass_factor).collect())?;
    let potential = solve_potential(mesh, &rho0, &rho1).map_err(|e| e.at_stage("potential"))?;
    stages.push("potential".to_string());
    let field = TransportField::new(domain, &potential.u, &rho0, &rho1)
        .map_err(|e| e.at_stage("transport field"))?;
    stages.push("transport field".to_string());
    let correction =
        integrate_flow(domain, &field, opts.moser_steps).map_err(|e| e.at_stage("moser flow"))?;
    stages.push("moser flow".to_string());
    let (images, jacobians): (Vec<V2>, Vec<M2>) = correction
        .images
        .par_iter()
        .zip(&correction.jacobians)
        .map(|(y, j1)| {
            let (z, jf) = flows.eval(*y);
            (z, jf * j1)
        })
        .unzip();
    let map = PlanarMap { images, jacobians };
    stages.push("composition".to_string());
    let translations = plan.translations(domain.flat.inner.len());
    let certificate = Certificate {
        max_detj_dev: map.max_det_deviation(),
        initial_max_detj_dev: initial.max_det_deviation(),
        collar_dev: collar_deviation(domain, &translations, &map),
        diameter: domain.diameter(),
        potential_residual: potential.relative_residual,
        transport_collar_residual: field.collar_residual,
        mass_factor,
        mass_defect,
        stages,
    };
    Ok(MoserOutput {
        plan: plan.clone(),
        flows,
        initial,
        correction,
        map,
        potential,
        rho1,
        certificate,
        opts: *opts,
    })
}

/// Disc sampling used by the flat place: `4 (n - 1)` nodes starting at
/// `-pi/4` on inner circles, matching O-grid caps of resolution `n`.
pub fn ogrid_sampling(outer_count: usize, inner: &[usize]) -> Vec<CircleSampling> {
    std::iter::once(CircleSampling {
        count: outer_count,
        offset: 0.0,
    })
    .chain(inner.iter().map(|&n| CircleSampling {
        count: 4 * (n - 1),
        offset: -std::f64::consts::FRAC_PI_4,
    }))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_disc_domain(h: f64) -> HoledDiscDomain {
        let flat = FlatPlace {
            outer: Circle::new([0.0, 0.0], 1.0),
            inner: vec![Circle::new([-0.45, 0.2], 0.15), Circle::new([0.4, -0.25], 0.15)],
        };
        let n_out = 8 * ((std::f64::consts::TAU / h) / 8.0).round() as usize;
        HoledDiscDomain::generate(flat, &ogrid_sampling(n_out, &[33, 33]), h, 0.025).unwrap()
    }

    #[test]
    fn zero_moves_give_identity() {
        let d = two_disc_domain(0.06);
        let plan = route(&d, &[[0.0, 0.0], [0.0, 0.0]], &MoserOptions::default()).unwrap();
        assert!(plan.legs.is_empty());
        let out = flat_place_diffeo(&d, &plan, &MoserOptions::default()).unwrap();
        for (p, y) in d.mesh.nodes.iter().zip(&out.map.images) {
            assert!((y - V2::new(p[0], p[1])).norm() < 1e-12);
        }
        assert!(out.certificate.max_detj_dev < 1e-12);
    }

    #[test]
    fn single_move_is_area_preserving_and_pinned() {
        let d = two_disc_domain(0.05);
        let t = [[0.3, 0.1], [0.0, 0.0]];
        let opts = MoserOptions::default();
        let plan = route(&d, &t, &opts).unwrap();
        let out = flat_place_diffeo(&d, &plan, &opts).unwrap();
        let c = &out.certificate;
        assert!(c.max_detj_dev <= 1e-4, "{c:?}");
        assert!(c.collar_dev <= 1e-6 * c.diameter, "{c:?}");
        // the moved disc's collar is translated exactly
        for (p, y) in d.mesh.nodes.iter().zip(&out.initial.images) {
            if d.collar_of(*p) == Some(1) {
                assert!((y - V2::new(p[0] + 0.3, p[1] + 0.1)).norm() < 1e-10);
            }
        }
        // fresh central differences of the composed map at interior nodes
        let probes: Vec<V2> = d
            .mesh
            .nodes
            .iter()
            .filter(|p| d.flat.boundary_distance(**p).0 > 0.01)
            .step_by(7)
            .map(|p| V2::new(p[0], p[1]))
            .collect();
        let exact = out.eval_points(&d, &probes).unwrap();
        // the map shears strongly in the tube bands, so the stencil must be
        // short: the truncation error scales like step^2 |D^3 f|
        let fd = out.fd_det(&d, &probes, 1e-6).unwrap();
        for (f, (_, j)) in fd.iter().zip(&exact) {
            assert!((f - j.determinant()).abs() < 1e-5, "{f} {}", j.determinant());
            assert!((f - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn overlapping_targets_rejected() {
        let d = two_disc_domain(0.08);
        let t = [[0.8, -0.4], [0.0, 0.0]];
        assert!(matches!(
            route(&d, &t, &MoserOptions::default()),
            Err(Error::Overlap(_))
        ));
    }

    #[test]
    fn blocked_route_reports_failure() {
        let flat = FlatPlace {
            outer: Circle::new([0.0, 0.0], 1.0),
            inner: vec![Circle::new([-0.5, 0.0], 0.2), Circle::new([0.5, 0.0], 0.2)],
        };
        let d = HoledDiscDomain::generate(flat, &ogrid_sampling(128, &[17, 17]), 0.08, 0.02).unwrap();
        // a swap cannot be routed through the narrow disc
        let err = route(&d, &[[1.0, 0.0], [-1.0, 0.0]], &MoserOptions::default());
        assert!(matches!(err, Err(Error::RoutingFailed { .. }) | Err(Error::Overlap(_))));
    }

    struct Rotation(f64);

    impl VelocityField for Rotation {
        fn velocity(&self, _t: f64, x: &V2) -> Result<(V2, M2)> {
            Ok((V2::new(-x.y, x.x) * self.0, M2::new(0.0, -self.0, self.0, 0.0)))
        }
    }

    #[test]
    fn rigid_rotation_benchmark() {
        let flat = FlatPlace {
            outer: Circle::new([0.0, 0.0], 2.0),
            inner: vec![Circle::new([0.0, 0.0], 1.0)],
        };
        let d = HoledDiscDomain::generate(flat, &ogrid_sampling(128, &[17]), 0.1, 0.05).unwrap();
        let omega = 0.7;
        let map = integrate_flow(&d, &Rotation(omega), 256).unwrap();
        let (c, s) = (omega.cos(), omega.sin());
        for (p, y) in d.mesh.nodes.iter().zip(&map.images) {
            let want = V2::new(c * p[0] - s * p[1], s * p[0] + c * p[1]);
            assert!((y - want).norm() < 1e-10);
        }
    }

    #[test]
    fn pullback_conserves_mass() {
        let d = two_disc_domain(0.05);
        let opts = MoserOptions::default();
        let plan = route(&d, &[[0.3, 0.1], [0.0, 0.0]], &opts).unwrap();
        let (_, f) = initial_rearrangement_diffeo(&d, &plan, &opts).unwrap();
        let rho = pullback_density(&d.mesh, &f, |_| 1.0).unwrap();
        let base = DensityField::uniform(&d.mesh);
        assert!(((rho.total - base.total) / base.total).abs() < 1e-8);
    }
}
