//! Sampled immersed surfaces and their square root normal field.
//!
//! A surface is a list of patches over a shared domain. Grid patches sample a
//! rectangle of parameters on a regular tensor grid; mesh patches carry
//! scattered planar reference nodes together with the differential of the
//! immersion at each node. The domain's Riemannian area is the parameter area
//! times a per-sample density, which for the shipped examples is the area
//! density of the reference immersion.

mod jet;
mod param;
pub mod stencil;

pub use jet::{numeric_jet, Jet, PatchMap, JET_STEP};
pub use param::{ParamSelfMap, ParametricPatch, ParametricSurface};

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Samples whose cross product falls below this multiple of diag^2 are degenerate.
pub const DEGENERACY_RATIO: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub u0: f64,
    pub u1: f64,
    pub v0: f64,
    pub v1: f64,
}

impl Rect {
    pub fn new(u0: f64, u1: f64, v0: f64, v1: f64) -> Rect {
        Rect { u0, u1, v0, v1 }
    }

    pub fn area(&self) -> f64 {
        (self.u1 - self.u0) * (self.v1 - self.v0)
    }

    /// Distance by which `(u, v)` lies outside the rectangle (0 if inside).
    pub fn excess(&self, u: f64, v: f64) -> f64 {
        let du = (self.u0 - u).max(u - self.u1).max(0.0);
        let dv = (self.v0 - v).max(v - self.v1).max(0.0);
        du.max(dv)
    }
}

/// The four edges of a parameter rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    U0,
    U1,
    V0,
    V1,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::U0, Side::U1, Side::V0, Side::V1];

    pub fn index(self) -> usize {
        match self {
            Side::U0 => 0,
            Side::U1 => 1,
            Side::V0 => 2,
            Side::V1 => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeTag {
    #[default]
    Free,
    Seam(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKey {
    Side(Side),
    /// Boundary loop of a mesh patch.
    Loop(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRef {
    pub patch: usize,
    pub edge: EdgeKey,
}

/// Identification of two patch edges. Every sample of the shorter edge must
/// coincide with a sample of the longer one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seam {
    pub id: u32,
    pub a: EdgeRef,
    pub b: EdgeRef,
}

impl Seam {
    pub fn sides(id: u32, pa: usize, sa: Side, pb: usize, sb: Side) -> Seam {
        Seam {
            id,
            a: EdgeRef {
                patch: pa,
                edge: EdgeKey::Side(sa),
            },
            b: EdgeRef {
                patch: pb,
                edge: EdgeKey::Side(sb),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    #[default]
    Positive,
    Negative,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Positive => 1.0,
            Orientation::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Orientation {
        match self {
            Orientation::Positive => Orientation::Negative,
            Orientation::Negative => Orientation::Positive,
        }
    }
}

/// A rectangular parameter domain sampled on an `nu x nv` grid.
///
/// Storage is row-major with `v` fastest: sample `(i, j)` lives at `i * nv + j`.
#[derive(Clone, Debug)]
pub struct ParamPatch {
    rect: Rect,
    nu: usize,
    nv: usize,
    positions: Vec<Vec3>,
    weights: Vec<f64>,
    density: Vec<f64>,
    jets: Option<Vec<Jet>>,
    edges: [EdgeTag; 4],
}

impl ParamPatch {
    /// Builds a patch from positions only. Derivatives come from grid stencils,
    /// the quadrature is composite Simpson and the domain metric is flat.
    pub fn from_samples(rect: Rect, nu: usize, nv: usize, positions: Vec<Vec3>) -> Result<Self> {
        if nu < 3 || nv < 3 {
            return Err(Error::InvalidPatch(format!(
                "need at least 3x3 samples, got {nu}x{nv}"
            )));
        }
        if !(rect.u1 > rect.u0 && rect.v1 > rect.v0) {
            return Err(Error::InvalidPatch(format!("empty parameter rectangle {rect:?}")));
        }
        if positions.len() != nu * nv {
            return Err(Error::InvalidPatch(format!(
                "expected {} positions, got {}",
                nu * nv,
                positions.len()
            )));
        }
        if positions.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidPatch("non-finite position".into()));
        }
        let hu = (rect.u1 - rect.u0) / (nu - 1) as f64;
        let hv = (rect.v1 - rect.v0) / (nv - 1) as f64;
        Ok(ParamPatch {
            rect,
            nu,
            nv,
            positions,
            weights: stencil::tensor_weights(nu, hu, nv, hv),
            density: vec![1.0; nu * nv],
            jets: None,
            edges: [EdgeTag::Free; 4],
        })
    }

    /// Samples a closed-form map, recording high-order derivative jets.
    pub fn sample(rect: Rect, nu: usize, nv: usize, map: &dyn PatchMap) -> Result<Self> {
        let hu = (rect.u1 - rect.u0) / (nu.max(2) - 1) as f64;
        let hv = (rect.v1 - rect.v0) / (nv.max(2) - 1) as f64;
        let samples: Vec<(Vec3, Jet)> = (0..nu * nv)
            .into_par_iter()
            .map(|k| {
                let u = rect.u0 + (k / nv) as f64 * hu;
                let v = rect.v0 + (k % nv) as f64 * hv;
                (map.eval(u, v), map.jet(u, v, 1.0))
            })
            .collect();
        let (positions, jets): (Vec<_>, Vec<_>) = samples.into_iter().unzip();
        ParamPatch::from_samples(rect, nu, nv, positions)?.with_jets(jets)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.nu * self.nv {
            return Err(Error::InvalidPatch("weight count mismatch".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidPatch("weights must be strictly positive".into()));
        }
        let total: f64 = weights.iter().sum();
        let area = self.rect.area();
        if ((total - area) / area).abs() > 1e-12 {
            return Err(Error::InvalidPatch(format!(
                "weights sum to {total}, parameter area is {area}"
            )));
        }
        self.weights = weights;
        Ok(self)
    }

    /// Riemannian area density of the domain metric per unit parameter area.
    pub fn with_density(mut self, density: Vec<f64>) -> Result<Self> {
        if density.len() != self.nu * self.nv {
            return Err(Error::InvalidPatch("density count mismatch".into()));
        }
        if density.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidPatch("density must be strictly positive".into()));
        }
        self.density = density;
        Ok(self)
    }

    pub fn with_jets(mut self, jets: Vec<Jet>) -> Result<Self> {
        if jets.len() != self.nu * self.nv {
            return Err(Error::InvalidPatch("jet count mismatch".into()));
        }
        self.jets = Some(jets);
        Ok(self)
    }

    pub fn without_jets(mut self) -> Self {
        self.jets = None;
        self
    }

    pub fn with_edges(mut self, edges: [EdgeTag; 4]) -> Self {
        self.edges = edges;
        self
    }

    pub fn rect(&self) -> Rect {
        self.rect
    }
    pub fn nu(&self) -> usize {
        self.nu
    }
    pub fn nv(&self) -> usize {
        self.nv
    }
    pub fn len(&self) -> usize {
        self.nu * self.nv
    }
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
    pub fn hu(&self) -> f64 {
        (self.rect.u1 - self.rect.u0) / (self.nu - 1) as f64
    }
    pub fn hv(&self) -> f64 {
        (self.rect.v1 - self.rect.v0) / (self.nv - 1) as f64
    }
    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn density(&self) -> &[f64] {
        &self.density
    }
    pub fn jets(&self) -> Option<&[Jet]> {
        self.jets.as_deref()
    }
    pub fn edges(&self) -> [EdgeTag; 4] {
        self.edges
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.nv + j
    }

    #[inline]
    pub fn position(&self, i: usize, j: usize) -> Vec3 {
        self.positions[self.idx(i, j)]
    }

    pub fn param(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.rect.u0 + i as f64 * self.hu(),
            self.rect.v0 + j as f64 * self.hv(),
        )
    }

    /// Sample indices along one edge, in increasing parameter order.
    pub fn edge_indices(&self, side: Side) -> Vec<usize> {
        match side {
            Side::U0 => (0..self.nv).map(|j| self.idx(0, j)).collect(),
            Side::U1 => (0..self.nv).map(|j| self.idx(self.nu - 1, j)).collect(),
            Side::V0 => (0..self.nu).map(|i| self.idx(i, 0)).collect(),
            Side::V1 => (0..self.nu).map(|i| self.idx(i, self.nv - 1)).collect(),
        }
    }

    /// First partials at a sample: the recorded jet if present, else
    /// second-order grid differences.
    pub fn tangents(&self, i: usize, j: usize) -> (Vec3, Vec3) {
        if let Some(jets) = &self.jets {
            let jt = &jets[self.idx(i, j)];
            return (jt.du, jt.dv);
        }
        self.fd_tangents(i, j)
    }

    pub fn fd_tangents(&self, i: usize, j: usize) -> (Vec3, Vec3) {
        let du = stencil::d1(self.nu, i, self.hu(), |k| self.position(k, j));
        let dv = stencil::d1(self.nv, j, self.hv(), |k| self.position(i, k));
        (du, dv)
    }

    /// Full second-order jet at a sample.
    pub fn jet(&self, i: usize, j: usize) -> Jet {
        if let Some(jets) = &self.jets {
            return jets[self.idx(i, j)];
        }
        self.fd_jet(i, j)
    }

    pub fn fd_jet(&self, i: usize, j: usize) -> Jet {
        let (hu, hv) = (self.hu(), self.hv());
        let (du, dv) = self.fd_tangents(i, j);
        let duu = stencil::d2(self.nu, i, hu, |k| self.position(k, j));
        let dvv = stencil::d2(self.nv, j, hv, |k| self.position(i, k));
        let duv = stencil::d1(self.nv, j, hv, |k| {
            stencil::d1(self.nu, i, hu, |m| self.position(m, k))
        });
        Jet {
            du,
            dv,
            duu,
            duv,
            dvv,
        }
    }

    fn map_positions(&self, m: &Matrix3<f64>, t: &Vec3) -> ParamPatch {
        let mut out = self.clone();
        out.positions.iter_mut().for_each(|p| *p = m * *p + t);
        if let Some(jets) = &mut out.jets {
            jets.iter_mut().for_each(|jt| *jt = jt.linear_map(m));
        }
        out
    }
}

/// Planar reference nodes with the immersion's differential at each node.
///
/// Used for the flat place, whose domain is a disc with holes and whose maps
/// are only known at the nodes of an unstructured triangulation.
#[derive(Clone, Debug)]
pub struct MeshPatch {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    positions: Vec<Vec3>,
    tangents: Vec<[Vec3; 2]>,
    weights: Vec<f64>,
    loops: Vec<Vec<usize>>,
    loop_tags: Vec<EdgeTag>,
}

impl MeshPatch {
    pub fn new(
        nodes: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        positions: Vec<Vec3>,
        tangents: Vec<[Vec3; 2]>,
        loops: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let n = nodes.len();
        if positions.len() != n || tangents.len() != n {
            return Err(Error::InvalidPatch("mesh patch array lengths differ".into()));
        }
        let mut weights = vec![0.0; n];
        for t in &triangles {
            if t.iter().any(|&k| k >= n) {
                return Err(Error::InvalidPatch("triangle references missing node".into()));
            }
            let [a, b, c] = t.map(|k| nodes[k]);
            let area = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]));
            if area <= 0.0 {
                return Err(Error::InvalidPatch("mesh triangle with non-positive area".into()));
            }
            for &k in t {
                weights[k] += area / 3.0;
            }
        }
        if weights.iter().any(|w| *w <= 0.0) {
            return Err(Error::InvalidPatch("mesh node not covered by a triangle".into()));
        }
        let loop_tags = vec![EdgeTag::Free; loops.len()];
        Ok(MeshPatch {
            nodes,
            triangles,
            positions,
            tangents,
            weights,
            loops,
            loop_tags,
        })
    }

    pub fn with_loop_tags(mut self, tags: Vec<EdgeTag>) -> Result<Self> {
        if tags.len() != self.loops.len() {
            return Err(Error::InvalidPatch("loop tag count mismatch".into()));
        }
        self.loop_tags = tags;
        Ok(self)
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }
    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }
    pub fn tangents(&self) -> &[[Vec3; 2]] {
        &self.tangents
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn loops(&self) -> &[Vec<usize>] {
        &self.loops
    }
    pub fn loop_tags(&self) -> &[EdgeTag] {
        &self.loop_tags
    }

    /// True when every image position lies in one plane, within `tol`.
    pub fn image_is_planar(&self, tol: f64) -> bool {
        let Some(k) = (0..self.tangents.len())
            .find(|&k| self.tangents[k][0].cross(&self.tangents[k][1]).norm() > 0.0)
        else {
            return false;
        };
        let n = self.tangents[k][0].cross(&self.tangents[k][1]).normalize();
        let p0 = self.positions[k];
        self.positions.iter().all(|p| (p - p0).dot(&n).abs() <= tol)
    }

    fn map_positions(&self, m: &Matrix3<f64>, t: &Vec3) -> MeshPatch {
        let mut out = self.clone();
        out.positions.iter_mut().for_each(|p| *p = m * *p + t);
        out.tangents
            .iter_mut()
            .for_each(|t| *t = [m * t[0], m * t[1]]);
        out
    }
}

#[derive(Clone, Debug)]
pub enum Patch {
    Grid(ParamPatch),
    Mesh(MeshPatch),
}

impl Patch {
    pub fn len(&self) -> usize {
        match self {
            Patch::Grid(p) => p.len(),
            Patch::Mesh(m) => m.nodes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn positions(&self) -> &[Vec3] {
        match self {
            Patch::Grid(p) => &p.positions,
            Patch::Mesh(m) => &m.positions,
        }
    }

    /// First partials at flat sample index `k`.
    pub fn tangents_at(&self, k: usize) -> (Vec3, Vec3) {
        match self {
            Patch::Grid(p) => p.tangents(k / p.nv, k % p.nv),
            Patch::Mesh(m) => (m.tangents[k][0], m.tangents[k][1]),
        }
    }

    pub fn density_at(&self, k: usize) -> f64 {
        match self {
            Patch::Grid(p) => p.density[k],
            Patch::Mesh(_) => 1.0,
        }
    }

    /// Quadrature weights for the domain's Riemannian area.
    pub fn measure(&self) -> Vec<f64> {
        match self {
            Patch::Grid(p) => p
                .weights
                .iter()
                .zip(&p.density)
                .map(|(w, d)| w * d)
                .collect(),
            Patch::Mesh(m) => m.weights.clone(),
        }
    }

    pub fn layout(&self) -> Layout {
        match self {
            Patch::Grid(p) => Layout::Grid {
                rect: p.rect,
                nu: p.nu,
                nv: p.nv,
            },
            Patch::Mesh(m) => Layout::Mesh {
                nodes: m.nodes.len(),
            },
        }
    }

    pub fn as_grid(&self) -> Option<&ParamPatch> {
        match self {
            Patch::Grid(p) => Some(p),
            Patch::Mesh(_) => None,
        }
    }

    pub fn as_mesh(&self) -> Option<&MeshPatch> {
        match self {
            Patch::Mesh(m) => Some(m),
            Patch::Grid(_) => None,
        }
    }

    fn edge_indices(&self, edge: EdgeKey) -> Option<Vec<usize>> {
        match (self, edge) {
            (Patch::Grid(p), EdgeKey::Side(s)) => Some(p.edge_indices(s)),
            (Patch::Mesh(m), EdgeKey::Loop(l)) => m.loops.get(l).cloned(),
            _ => None,
        }
    }

    fn edge_tag(&self, edge: EdgeKey) -> Option<EdgeTag> {
        match (self, edge) {
            (Patch::Grid(p), EdgeKey::Side(s)) => Some(p.edges[s.index()]),
            (Patch::Mesh(m), EdgeKey::Loop(l)) => m.loop_tags.get(l).copied(),
            _ => None,
        }
    }
}

/// Sampling layout of a patch; two fields are comparable only when their
/// layouts and quadrature agree.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    Grid { rect: Rect, nu: usize, nv: usize },
    Mesh { nodes: usize },
}

/// An immersion of a patch-decomposed domain into 3-space.
#[derive(Clone, Debug)]
pub struct SurfaceImmersion {
    pub patches: Vec<Patch>,
    pub orientation: Orientation,
    pub seams: Vec<Seam>,
}

impl SurfaceImmersion {
    pub fn new(patches: Vec<Patch>, orientation: Orientation, seams: Vec<Seam>) -> Result<Self> {
        let s = SurfaceImmersion {
            patches,
            orientation,
            seams,
        };
        for seam in &s.seams {
            for r in [seam.a, seam.b] {
                let patch = s.patches.get(r.patch).ok_or_else(|| {
                    Error::InvalidPatch(format!("seam {} names missing patch {}", seam.id, r.patch))
                })?;
                if patch.edge_indices(r.edge).is_none() {
                    return Err(Error::InvalidPatch(format!(
                        "seam {} names edge {:?} that patch {} does not have",
                        seam.id, r.edge, r.patch
                    )));
                }
            }
        }
        Ok(s)
    }

    pub fn single(patch: ParamPatch) -> SurfaceImmersion {
        SurfaceImmersion {
            patches: vec![Patch::Grid(patch)],
            orientation: Orientation::Positive,
            seams: Vec::new(),
        }
    }

    pub fn sample_count(&self) -> usize {
        self.patches.iter().map(Patch::len).sum()
    }

    pub fn all_positions(&self) -> impl Iterator<Item = &Vec3> {
        self.patches.iter().flat_map(|p| p.positions().iter())
    }

    pub fn bbox(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in self.all_positions() {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    pub fn diagonal(&self) -> f64 {
        let (lo, hi) = self.bbox();
        (hi - lo).norm()
    }

    /// Grid patches and mesh loops all take part in seams.
    pub fn is_closed(&self) -> bool {
        self.patches.iter().all(|p| match p {
            Patch::Grid(g) => g.edges.iter().all(|e| matches!(e, EdgeTag::Seam(_))),
            Patch::Mesh(m) => m.loop_tags.iter().all(|e| matches!(e, EdgeTag::Seam(_))),
        })
    }

    /// Largest distance from a seam sample to the nearest sample of the
    /// identified edge, per seam.
    pub fn seam_deviations(&self) -> Vec<(u32, f64)> {
        self.seams
            .iter()
            .map(|seam| {
                let pa = &self.patches[seam.a.patch];
                let pb = &self.patches[seam.b.patch];
                let ia = pa.edge_indices(seam.a.edge).unwrap_or_default();
                let ib = pb.edge_indices(seam.b.edge).unwrap_or_default();
                let (short, sp, long, lp) = if ia.len() <= ib.len() {
                    (ia, pa, ib, pb)
                } else {
                    (ib, pb, ia, pa)
                };
                let dev = short
                    .iter()
                    .map(|&k| {
                        let x = sp.positions()[k];
                        long.iter()
                            .map(|&m| (lp.positions()[m] - x).norm())
                            .fold(f64::INFINITY, f64::min)
                    })
                    .fold(0.0, f64::max);
                (seam.id, dev)
            })
            .collect()
    }

    /// Checks seam closure (within 1e-9 of the bounding-box diagonal) and
    /// that every tagged edge is accounted for by a seam.
    pub fn validate(&self) -> Result<()> {
        let tol = 1e-9 * self.diagonal();
        for (id, dev) in self.seam_deviations() {
            if dev > tol {
                return Err(Error::SeamMismatch {
                    seam: id,
                    deviation: dev,
                    tolerance: tol,
                });
            }
        }
        for seam in &self.seams {
            for r in [seam.a, seam.b] {
                if self.patches[r.patch].edge_tag(r.edge) == Some(EdgeTag::Free) {
                    return Err(Error::InvalidPatch(format!(
                        "edge {:?} of patch {} is in seam {} but tagged free",
                        r.edge, r.patch, seam.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Applies `x -> m x + t` to every sample and derivative.
    pub fn map_affine(&self, m: &Matrix3<f64>, t: &Vec3) -> SurfaceImmersion {
        let patches = self
            .patches
            .iter()
            .map(|p| match p {
                Patch::Grid(g) => Patch::Grid(g.map_positions(m, t)),
                Patch::Mesh(mp) => Patch::Mesh(mp.map_positions(m, t)),
            })
            .collect();
        SurfaceImmersion {
            patches,
            orientation: self.orientation,
            seams: self.seams.clone(),
        }
    }

    pub fn translated(&self, t: &Vec3) -> SurfaceImmersion {
        self.map_affine(&Matrix3::identity(), t)
    }

    /// Drops recorded jets so derivatives come from grid stencils.
    pub fn without_jets(&self) -> SurfaceImmersion {
        let patches = self
            .patches
            .iter()
            .map(|p| match p {
                Patch::Grid(g) => Patch::Grid(g.clone().without_jets()),
                Patch::Mesh(m) => Patch::Mesh(m.clone()),
            })
            .collect();
        SurfaceImmersion {
            patches,
            orientation: self.orientation,
            seams: self.seams.clone(),
        }
    }

    /// Replaces the domain metric with that of `reference` (same layout).
    pub fn with_metric_of(&self, reference: &SurfaceImmersion) -> Result<SurfaceImmersion> {
        check_same_layout(self, reference)?;
        let mut out = self.clone();
        for (p, r) in out.patches.iter_mut().zip(&reference.patches) {
            if let (Patch::Grid(g), Patch::Grid(rg)) = (p, r) {
                g.density = rg.density.clone();
                g.weights = rg.weights.clone();
            }
        }
        Ok(out)
    }
}

pub fn check_same_layout(a: &SurfaceImmersion, b: &SurfaceImmersion) -> Result<()> {
    if a.patches.len() != b.patches.len() {
        return Err(Error::GridMismatch(format!(
            "{} patches vs {}",
            a.patches.len(),
            b.patches.len()
        )));
    }
    for (k, (p, q)) in a.patches.iter().zip(&b.patches).enumerate() {
        if p.layout() != q.layout() {
            return Err(Error::GridMismatch(format!(
                "patch {k}: {:?} vs {:?}",
                p.layout(),
                q.layout()
            )));
        }
    }
    Ok(())
}

/// A rotation in SO(3) followed by a translation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidMotion {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl RigidMotion {
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        check_rotation(&rotation)?;
        Ok(RigidMotion {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        RigidMotion {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Haar-uniform rotation and a translation with entries in `[-scale, scale]`.
    pub fn random<R: Rng>(rng: &mut R, scale: f64) -> Self {
        // uniform unit quaternion (Shoemake)
        let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
        let tau = std::f64::consts::TAU;
        let q = nalgebra::Quaternion::new(
            (1.0 - u1).sqrt() * (tau * u2).sin(),
            (1.0 - u1).sqrt() * (tau * u2).cos(),
            u1.sqrt() * (tau * u3).sin(),
            u1.sqrt() * (tau * u3).cos(),
        );
        let rotation = *nalgebra::UnitQuaternion::from_quaternion(q)
            .to_rotation_matrix()
            .matrix();
        let translation = Vec3::new(
            rng.gen_range(-scale..=scale),
            rng.gen_range(-scale..=scale),
            rng.gen_range(-scale..=scale),
        );
        RigidMotion {
            rotation,
            translation,
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_surface(&self, f: &SurfaceImmersion) -> SurfaceImmersion {
        f.map_affine(&self.rotation, &self.translation)
    }
}

pub fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    let orth = (r.transpose() * r - Matrix3::identity()).abs().max();
    let det = r.determinant();
    if orth > 1e-12 || (det - 1.0).abs() > 1e-12 {
        return Err(Error::NotARotation(format!(
            "|R^T R - I| = {orth:e}, det = {det}"
        )));
    }
    Ok(())
}

/// Pointwise first-order quantities at one sample.
#[derive(Clone, Copy, Debug)]
pub struct SampleFrame {
    pub area_factor: f64,
    pub normal: Vec3,
    pub q: Vec3,
}

fn frame_from_tangents(du: Vec3, dv: Vec3, density: f64, sign: f64, floor: f64) -> Option<SampleFrame> {
    let cross = du.cross(&dv) * sign;
    let c = cross.norm();
    if !(c >= floor) || c == 0.0 {
        return None;
    }
    Some(SampleFrame {
        area_factor: c / density,
        normal: cross / c,
        q: cross / (c * density).sqrt(),
    })
}

fn degeneracy_floor(f: &SurfaceImmersion) -> f64 {
    let d = f.diagonal();
    DEGENERACY_RATIO * d * d
}

fn sample_frame(f: &SurfaceImmersion, patch: usize, i: usize, j: usize, floor: f64) -> Result<SampleFrame> {
    let p = f
        .patches
        .get(patch)
        .ok_or_else(|| Error::InvalidParam(format!("no patch {patch}")))?;
    let k = match p {
        Patch::Grid(g) => {
            if i >= g.nu || j >= g.nv {
                return Err(Error::InvalidParam(format!("sample ({i}, {j}) out of range")));
            }
            g.idx(i, j)
        }
        Patch::Mesh(m) => {
            if i >= m.nodes.len() || j != 0 {
                return Err(Error::InvalidParam(format!("mesh node ({i}, {j}) out of range")));
            }
            i
        }
    };
    let (du, dv) = p.tangents_at(k);
    frame_from_tangents(du, dv, p.density_at(k), f.orientation.sign(), floor).ok_or(
        Error::DegenerateImmersion {
            patch,
            i,
            j,
            cross: du.cross(&dv).norm(),
        },
    )
}

/// Local area multiplication factor `|f_u x f_v|` relative to the domain
/// metric. Mesh samples are addressed as `(node, 0)`.
pub fn area_factor(f: &SurfaceImmersion, patch: usize, i: usize, j: usize) -> Result<f64> {
    Ok(sample_frame(f, patch, i, j, degeneracy_floor(f))?.area_factor)
}

/// Oriented unit normal at a sample.
pub fn unit_normal(f: &SurfaceImmersion, patch: usize, i: usize, j: usize) -> Result<Vec3> {
    Ok(sample_frame(f, patch, i, j, degeneracy_floor(f))?.normal)
}

/// Per-patch samples of a 3-vector field over a shared quadrature.
#[derive(Clone, Debug)]
pub struct FieldPatch {
    pub layout: Layout,
    /// Riemannian quadrature weights (parameter weights times density).
    pub measure: Vec<f64>,
    /// Domain area density, needed to transport the field under reparametrization.
    pub density: Vec<f64>,
    pub values: Vec<Vec3>,
}

/// The square root normal field `q = sqrt(a) n` sampled over a surface's domain.
#[derive(Clone, Debug)]
pub struct SrnfField {
    pub patches: Vec<FieldPatch>,
}

impl SrnfField {
    pub fn max_abs(&self) -> f64 {
        self.patches
            .iter()
            .flat_map(|p| p.values.iter())
            .map(|q| q.norm())
            .fold(0.0, f64::max)
    }

    pub fn map_values(&self, g: impl Fn(&Vec3) -> Vec3) -> SrnfField {
        SrnfField {
            patches: self
                .patches
                .iter()
                .map(|p| FieldPatch {
                    values: p.values.iter().map(&g).collect(),
                    ..p.clone()
                })
                .collect(),
        }
    }

    /// `self - other`, requiring identical layouts.
    pub fn sub(&self, other: &SrnfField) -> Result<SrnfField> {
        crate::metric::check_compatible(self, other)?;
        Ok(SrnfField {
            patches: self
                .patches
                .iter()
                .zip(&other.patches)
                .map(|(a, b)| FieldPatch {
                    values: a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect(),
                    ..a.clone()
                })
                .collect(),
        })
    }

    /// Largest samplewise deviation `max |q1 - q2|`.
    pub fn max_deviation(&self, other: &SrnfField) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }
}

/// Computes the square root normal field of `f`.
pub fn srnf(f: &SurfaceImmersion) -> Result<SrnfField> {
    let floor = degeneracy_floor(f);
    let sign = f.orientation.sign();
    let patches = f
        .patches
        .par_iter()
        .enumerate()
        .map(|(pi, p)| {
            let measure = p.measure();
            let density: Vec<f64> = (0..p.len()).map(|k| p.density_at(k)).collect();
            let values = (0..p.len())
                .map(|k| {
                    let (du, dv) = p.tangents_at(k);
                    frame_from_tangents(du, dv, density[k], sign, floor)
                        .map(|fr| fr.q)
                        .ok_or_else(|| {
                            let (i, j) = match p {
                                Patch::Grid(g) => (k / g.nv, k % g.nv),
                                Patch::Mesh(_) => (k, 0),
                            };
                            Error::DegenerateImmersion {
                                patch: pi,
                                i,
                                j,
                                cross: du.cross(&dv).norm(),
                            }
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(FieldPatch {
                layout: p.layout(),
                measure,
                density,
                values,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SrnfField { patches })
}

/// Per-sample area factors of all patches.
pub fn area_factors(f: &SurfaceImmersion) -> Result<Vec<Vec<f64>>> {
    let q = srnf(f)?;
    Ok(q.patches
        .iter()
        .map(|p| p.values.iter().map(|v| v.norm_squared()).collect())
        .collect())
}

/// Oriented unit normals of all patches.
pub fn normals(f: &SurfaceImmersion) -> Result<Vec<Vec<Vec3>>> {
    let q = srnf(f)?;
    Ok(q.patches
        .iter()
        .map(|p| p.values.iter().map(|v| v.normalize()).collect())
        .collect())
}

/// `max |srnf(f + t) - srnf(f)|` over all samples.
pub fn translate_invariance_check(f: &SurfaceImmersion, t: &Vec3) -> Result<f64> {
    let q0 = srnf(f)?;
    let q1 = srnf(&f.translated(t))?;
    q0.max_deviation(&q1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paraboloid_patch(a: f64, b: f64, n: usize, with_jets: bool) -> ParamPatch {
        let rect = Rect::new(-1.0, 1.0, -1.0, 1.0);
        let map = move |x: f64, y: f64| Vec3::new(x / a, y / b, x * x / a + y * y / b);
        let p = ParamPatch::sample(rect, n, n, &map).unwrap();
        if with_jets {
            p
        } else {
            p.without_jets()
        }
    }

    #[test]
    fn paraboloid_area_factor_at_one_zero() {
        // (1,0) is sample (n-1, (n-1)/2) on [-1,1]^2
        for jets in [true, false] {
            let f = SurfaceImmersion::single(paraboloid_patch(1.0, 1.0, 9, jets));
            let a = area_factor(&f, 0, 8, 4).unwrap();
            assert!((a - 5f64.sqrt()).abs() < 1e-12, "{a}");
            let n0 = unit_normal(&f, 0, 4, 4).unwrap();
            assert!((n0 - Vec3::z()).norm() < 1e-13);
        }
    }

    #[test]
    fn paraboloid_srnf_matches_printed_cross_product() {
        let f = SurfaceImmersion::single(paraboloid_patch(1.0, 1.0, 9, false));
        let q = srnf(&f).unwrap();
        let expected = Vec3::new(-2.0, 0.0, 1.0) / 5f64.powf(0.25);
        let g = f.patches[0].as_grid().unwrap();
        let got = q.patches[0].values[g.idx(8, 4)];
        assert!((got - expected).norm() < 1e-12);
    }

    #[test]
    fn flat_patch_normal_is_up() {
        let rect = Rect::new(0.0, 1.0, 0.0, 1.0);
        let p = ParamPatch::sample(rect, 5, 5, &|u: f64, v: f64| Vec3::new(u, v, 0.0)).unwrap();
        let f = SurfaceImmersion::single(p);
        for i in 0..5 {
            assert!((unit_normal(&f, 0, i, 2).unwrap() - Vec3::z()).norm() < 1e-14);
        }
    }

    #[test]
    fn degenerate_patch_is_rejected() {
        let rect = Rect::new(0.0, 1.0, 0.0, 1.0);
        let p = ParamPatch::sample(rect, 5, 5, &|u: f64, _v: f64| Vec3::new(u, 0.0, 0.0)).unwrap();
        let f = SurfaceImmersion::single(p);
        assert!(matches!(srnf(&f), Err(Error::DegenerateImmersion { .. })));
        assert!(matches!(
            area_factor(&f, 0, 2, 2),
            Err(Error::DegenerateImmersion { .. })
        ));
    }

    #[test]
    fn small_grids_and_bad_weights_rejected() {
        let rect = Rect::new(0.0, 1.0, 0.0, 1.0);
        assert!(ParamPatch::from_samples(rect, 2, 5, vec![Vec3::zeros(); 10]).is_err());
        let p = ParamPatch::from_samples(rect, 3, 3, vec![Vec3::zeros(); 9]).unwrap();
        assert!(p.clone().with_weights(vec![0.1; 9]).is_err());
        assert!(p.with_weights(vec![1.0 / 9.0; 9]).is_ok());
    }

    #[test]
    fn squared_srnf_is_area_factor() {
        let f = SurfaceImmersion::single(paraboloid_patch(0.7, -1.3, 11, false));
        let q = srnf(&f).unwrap();
        for i in 0..11 {
            for j in 0..11 {
                let a = area_factor(&f, 0, i, j).unwrap();
                let q2 = q.patches[0].values[i * 11 + j].norm_squared();
                assert!(((q2 - a) / a).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn translation_leaves_srnf_unchanged() {
        let f = SurfaceImmersion::single(paraboloid_patch(1.0, 2.0, 9, false));
        assert_eq!(translate_invariance_check(&f, &Vec3::zeros()).unwrap(), 0.0);
        let dev = translate_invariance_check(&f, &Vec3::new(0.0, 0.0, 10.0)).unwrap();
        assert!(dev <= 1e-12 * srnf(&f).unwrap().max_abs(), "{dev}");
    }

    #[test]
    fn rotation_check() {
        assert!(check_rotation(&Matrix3::identity()).is_ok());
        assert!(check_rotation(&Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0))).is_err());
        assert!(check_rotation(&(Matrix3::identity() * 1.01)).is_err());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let m = RigidMotion::random(&mut rng, 1.0);
            assert!(check_rotation(&m.rotation).is_ok());
        }
    }

    use rand::SeedableRng;
}
