//! Closed-form surfaces: patch maps that can be composed on either side and
//! sampled into a [`SurfaceImmersion`].

use std::sync::Arc;

use super::{
    EdgeTag, Orientation, Patch, PatchMap, ParamPatch, Rect, Seam, SurfaceImmersion, Vec3,
};
use crate::error::Result;

/// A self-map of a parameter rectangle.
pub trait ParamSelfMap: Send + Sync {
    fn eval(&self, u: f64, v: f64) -> (f64, f64);
}

impl<F> ParamSelfMap for F
where
    F: Fn(f64, f64) -> (f64, f64) + Send + Sync,
{
    fn eval(&self, u: f64, v: f64) -> (f64, f64) {
        self(u, v)
    }
}

#[derive(Clone)]
pub struct ParametricPatch {
    pub rect: Rect,
    pub nu: usize,
    pub nv: usize,
    pub map: Arc<dyn PatchMap>,
    pub edges: [EdgeTag; 4],
}

impl std::fmt::Debug for ParametricPatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParametricPatch")
            .field("rect", &self.rect)
            .field("nu", &self.nu)
            .field("nv", &self.nv)
            .field("edges", &self.edges)
            .finish_non_exhaustive()
    }
}

impl ParametricPatch {
    pub fn new(rect: Rect, nu: usize, nv: usize, map: impl PatchMap + 'static) -> Self {
        ParametricPatch {
            rect,
            nu,
            nv,
            map: Arc::new(map),
            edges: [EdgeTag::Free; 4],
        }
    }

    pub fn with_edges(mut self, edges: [EdgeTag; 4]) -> Self {
        self.edges = edges;
        self
    }

    pub fn sample(&self) -> Result<ParamPatch> {
        Ok(ParamPatch::sample(self.rect, self.nu, self.nv, self.map.as_ref())?.with_edges(self.edges))
    }
}

/// A patch-decomposed surface given by closed-form maps.
#[derive(Clone, Debug)]
pub struct ParametricSurface {
    pub patches: Vec<ParametricPatch>,
    pub seams: Vec<Seam>,
    pub orientation: Orientation,
}

impl ParametricSurface {
    pub fn new(patches: Vec<ParametricPatch>, seams: Vec<Seam>) -> Self {
        ParametricSurface {
            patches,
            seams,
            orientation: Orientation::Positive,
        }
    }

    /// Samples with the induced metric of this surface as the domain metric.
    pub fn sample(&self) -> Result<SurfaceImmersion> {
        let patches = self
            .patches
            .iter()
            .map(|pp| {
                let p = pp.sample()?;
                let density = (0..p.len())
                    .map(|k| {
                        let (du, dv) = p.tangents(k / p.nv(), k % p.nv());
                        du.cross(&dv).norm()
                    })
                    .collect();
                Ok(Patch::Grid(p.with_density(density)?))
            })
            .collect::<Result<Vec<_>>>()?;
        SurfaceImmersion::new(patches, self.orientation, self.seams.clone())
    }

    /// Samples with the flat parameter metric.
    pub fn sample_flat(&self) -> Result<SurfaceImmersion> {
        let patches = self
            .patches
            .iter()
            .map(|pp| Ok(Patch::Grid(pp.sample()?)))
            .collect::<Result<Vec<_>>>()?;
        SurfaceImmersion::new(patches, self.orientation, self.seams.clone())
    }

    /// Samples on the grids of `reference`, adopting its domain metric.
    pub fn sample_like(&self, reference: &SurfaceImmersion) -> Result<SurfaceImmersion> {
        self.sample_flat()?.with_metric_of(reference)
    }

    /// Sets every patch to an `n x n` grid.
    pub fn with_resolution(mut self, n: usize) -> Self {
        for p in &mut self.patches {
            p.nu = n;
            p.nv = n;
        }
        self
    }

    /// Left composition with a map of 3-space.
    pub fn map_ambient<G>(&self, g: G) -> ParametricSurface
    where
        G: Fn(Vec3) -> Vec3 + Send + Sync + Clone + 'static,
    {
        let patches = self
            .patches
            .iter()
            .map(|p| {
                let inner = p.map.clone();
                let g = g.clone();
                ParametricPatch {
                    map: Arc::new(move |u: f64, v: f64| g(inner.eval(u, v))),
                    ..p.clone()
                }
            })
            .collect();
        ParametricSurface {
            patches,
            seams: self.seams.clone(),
            orientation: self.orientation,
        }
    }

    /// Right composition with per-patch self-maps of the parameter rectangles.
    pub fn reparametrize(&self, phis: &[Arc<dyn ParamSelfMap>]) -> ParametricSurface {
        assert_eq!(phis.len(), self.patches.len(), "one self-map per patch");
        let patches = self
            .patches
            .iter()
            .zip(phis)
            .map(|(p, phi)| {
                let inner = p.map.clone();
                let phi = phi.clone();
                ParametricPatch {
                    map: Arc::new(move |u: f64, v: f64| {
                        let (a, b) = phi.eval(u, v);
                        inner.eval(a, b)
                    }),
                    ..p.clone()
                }
            })
            .collect();
        ParametricSurface {
            patches,
            seams: self.seams.clone(),
            orientation: self.orientation,
        }
    }
}

impl ParametricSurface {
    /// Finds coincident patch edges by evaluating the maps at edge samples,
    /// tagging them as seams. Existing seams are replaced.
    pub fn detect_seams(mut self, tol: f64) -> Self {
        use super::Side;
        let edge_points = |p: &ParametricPatch, side: Side| -> Vec<Vec3> {
            let (n, fixed_u, fixed) = match side {
                Side::U0 => (p.nv, true, p.rect.u0),
                Side::U1 => (p.nv, true, p.rect.u1),
                Side::V0 => (p.nu, false, p.rect.v0),
                Side::V1 => (p.nu, false, p.rect.v1),
            };
            (0..n)
                .map(|k| {
                    let s = k as f64 / (n - 1) as f64;
                    if fixed_u {
                        p.map.eval(fixed, p.rect.v0 + s * (p.rect.v1 - p.rect.v0))
                    } else {
                        p.map.eval(p.rect.u0 + s * (p.rect.u1 - p.rect.u0), fixed)
                    }
                })
                .collect()
        };
        let mut edges = Vec::new();
        for (pi, p) in self.patches.iter().enumerate() {
            for side in Side::ALL {
                edges.push((pi, side, edge_points(p, side)));
            }
        }
        let contained = |a: &[Vec3], b: &[Vec3]| {
            a.iter()
                .all(|x| b.iter().any(|y| (x - y).norm() <= tol))
        };
        let mut seams = Vec::new();
        let mut tags = vec![[EdgeTag::Free; 4]; self.patches.len()];
        let mut next = 0u32;
        for a in 0..edges.len() {
            for b in a + 1..edges.len() {
                let (pa, sa, ea) = &edges[a];
                let (pb, sb, eb) = &edges[b];
                let (short, long) = if ea.len() <= eb.len() { (ea, eb) } else { (eb, ea) };
                if contained(short, long) {
                    seams.push(Seam::sides(next, *pa, *sa, *pb, *sb));
                    tags[*pa][sa.index()] = EdgeTag::Seam(next);
                    tags[*pb][sb.index()] = EdgeTag::Seam(next);
                    next += 1;
                }
            }
        }
        for (p, t) in self.patches.iter_mut().zip(tags) {
            p.edges = t;
        }
        self.seams = seams;
        self
    }
}
