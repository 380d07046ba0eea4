//! Planar discs with holes and their boundary-fitted triangulations.

use std::f64::consts::{PI, TAU};

use delaunator::{triangulate, Point};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Circle {
    pub fn new(center: [f64; 2], radius: f64) -> Circle {
        Circle { center, radius }
    }

    pub fn point(&self, angle: f64) -> [f64; 2] {
        [
            self.center[0] + self.radius * angle.cos(),
            self.center[1] + self.radius * angle.sin(),
        ]
    }

    pub fn dist_to_center(&self, p: [f64; 2]) -> f64 {
        (p[0] - self.center[0]).hypot(p[1] - self.center[1])
    }

    pub fn translated(&self, t: [f64; 2]) -> Circle {
        Circle::new([self.center[0] + t[0], self.center[1] + t[1]], self.radius)
    }
}

/// A closed disc with disjoint open discs removed, in the plane `z = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatPlace {
    pub outer: Circle,
    pub inner: Vec<Circle>,
}

impl FlatPlace {
    /// Smallest gap between any two boundary circles.
    pub fn clearance(&self) -> f64 {
        let mut gap = f64::INFINITY;
        for (i, a) in self.inner.iter().enumerate() {
            gap = gap.min(self.outer.radius - self.outer.dist_to_center(a.center) - a.radius);
            for b in &self.inner[i + 1..] {
                gap = gap.min(a.dist_to_center(b.center) - a.radius - b.radius);
            }
        }
        gap
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.outer.radius > 0.0) || self.inner.iter().any(|c| !(c.radius > 0.0)) {
            return Err(Error::InvalidParam("circle radii must be positive".into()));
        }
        let gap = self.clearance();
        if !(gap > 0.0) {
            return Err(Error::Overlap(format!("boundary circles have clearance {gap}")));
        }
        Ok(())
    }

    /// True when `p` lies in the closed domain.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.outer.dist_to_center(p) <= self.outer.radius
            && self.inner.iter().all(|c| c.dist_to_center(p) >= c.radius)
    }

    /// Distance from `p` to the nearest boundary circle, with its index
    /// (0 for the outer circle, `k + 1` for inner circle `k`).
    pub fn boundary_distance(&self, p: [f64; 2]) -> (f64, usize) {
        let mut best = ((self.outer.radius - self.outer.dist_to_center(p)).abs(), 0);
        for (k, c) in self.inner.iter().enumerate() {
            let d = (c.dist_to_center(p) - c.radius).abs();
            if d < best.0 {
                best = (d, k + 1);
            }
        }
        best
    }

    pub fn circles(&self) -> impl Iterator<Item = &Circle> {
        std::iter::once(&self.outer).chain(self.inner.iter())
    }

    /// Area of the domain.
    pub fn area(&self) -> f64 {
        PI * (self.outer.radius.powi(2) - self.inner.iter().map(|c| c.radius.powi(2)).sum::<f64>())
    }
}

/// How boundary circle `k` is sampled: `count` nodes at angles
/// `offset + 2 pi j / count`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleSampling {
    pub count: usize,
    pub offset: f64,
}

/// A counter-clockwise triangulation whose boundary nodes lie on circles.
#[derive(Clone, Debug)]
pub struct TriMesh {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Boundary loops in angular order, one per circle (outer first).
    pub loops: Vec<Vec<usize>>,
    /// Circle index of each boundary node.
    pub circle_of: Vec<Option<usize>>,
    /// Nodes below this index (boundary and graded rings) are never moved.
    pub fixed_nodes: usize,
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

impl TriMesh {
    /// Triangulates `domain` with interior spacing `h`. Boundary nodes follow
    /// `sampling` (one entry per circle, outer first); rings of graded nodes
    /// bridge fine boundary sampling to the interior spacing.
    pub fn generate(domain: &FlatPlace, sampling: &[CircleSampling], h: f64) -> Result<TriMesh> {
        domain.validate()?;
        if sampling.len() != domain.inner.len() + 1 {
            return Err(Error::InvalidMesh("one sampling per boundary circle".into()));
        }
        if !(h > 0.0) {
            return Err(Error::InvalidMesh(format!("spacing {h} must be positive")));
        }
        let mut nodes: Vec<[f64; 2]> = Vec::new();
        let mut circle_of = Vec::new();
        let mut loops = Vec::new();
        // distance from each circle beyond which the lattice may place nodes
        let mut keep_out = Vec::new();
        for (k, (circle, s)) in domain.circles().zip(sampling).enumerate() {
            if s.count < 8 {
                return Err(Error::InvalidMesh(format!("circle {k} needs at least 8 nodes")));
            }
            let mut lp = Vec::with_capacity(s.count);
            for j in 0..s.count {
                lp.push(nodes.len());
                nodes.push(circle.point(s.offset + TAU * j as f64 / s.count as f64));
                circle_of.push(Some(k));
            }
            loops.push(lp);
            // graded rings into the domain
            let inward = if k == 0 { -1.0 } else { 1.0 };
            let (mut r, mut m, mut off) = (circle.radius, s.count, s.offset);
            loop {
                let sp = TAU * r / m as f64;
                let (next_m, dr) = if 2.0 * sp <= 1.1 * h && m % 2 == 0 && m >= 16 {
                    (m / 2, sp)
                } else if sp < 0.75 * h {
                    (m, 0.866 * sp)
                } else {
                    break;
                };
                let nr = r + inward * dr;
                if nr <= 0.0 {
                    break;
                }
                off += PI / m as f64;
                r = nr;
                m = next_m;
                let ring = Circle::new(circle.center, r);
                for j in 0..m {
                    nodes.push(ring.point(off + TAU * j as f64 / m as f64));
                    circle_of.push(None);
                }
            }
            keep_out.push((r - circle.radius).abs() + 0.7 * h);
        }
        let lattice_start = nodes.len();
        // triangular lattice in the interior
        let o = domain.outer;
        let dy = h * 3f64.sqrt() / 2.0;
        let rows = (o.radius / dy).ceil() as i64 + 1;
        let cols = (o.radius / h).ceil() as i64 + 1;
        for a in -rows..=rows {
            for b in -cols..=cols {
                let x = o.center[0] + (b as f64 + 0.5 * (a.rem_euclid(2)) as f64) * h;
                let y = o.center[1] + a as f64 * dy;
                let p = [x, y];
                let ok_outer = o.radius - o.dist_to_center(p) >= keep_out[0];
                let ok_inner = domain
                    .inner
                    .iter()
                    .zip(&keep_out[1..])
                    .all(|(c, ko)| c.dist_to_center(p) - c.radius >= *ko);
                if ok_outer && ok_inner {
                    nodes.push(p);
                    circle_of.push(None);
                }
            }
        }
        let fixed_nodes = lattice_start;
        let mut mesh = TriMesh {
            nodes,
            triangles: Vec::new(),
            loops,
            circle_of,
            fixed_nodes,
        };
        mesh.retriangulate(domain)?;
        for _ in 0..3 {
            mesh.smooth();
            mesh.retriangulate(domain)?;
        }
        mesh.check_quality(15.0)?;
        Ok(mesh)
    }

    fn retriangulate(&mut self, domain: &FlatPlace) -> Result<()> {
        let pts: Vec<Point> = self.nodes.iter().map(|p| Point { x: p[0], y: p[1] }).collect();
        let t = triangulate(&pts);
        let mut tris = Vec::with_capacity(t.triangles.len() / 3);
        for c in t.triangles.chunks_exact(3) {
            let mut tri = [c[0], c[1], c[2]];
            let [a, b, d] = tri.map(|k| self.nodes[k]);
            let area = signed_area(a, b, d);
            if area == 0.0 {
                continue;
            }
            if area < 0.0 {
                tri.swap(1, 2);
            }
            let cen = [(a[0] + b[0] + d[0]) / 3.0, (a[1] + b[1] + d[1]) / 3.0];
            if domain.contains(cen) {
                tris.push(tri);
            }
        }
        self.triangles = tris;
        self.check_conforming()
    }

    fn check_conforming(&self) -> Result<()> {
        use std::collections::HashSet;
        let mut edges = HashSet::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        for (li, lp) in self.loops.iter().enumerate() {
            for k in 0..lp.len() {
                let (a, b) = (lp[k], lp[(k + 1) % lp.len()]);
                if !edges.contains(&(a.min(b), a.max(b))) {
                    return Err(Error::InvalidMesh(format!(
                        "boundary edge {k} of circle {li} missing from triangulation"
                    )));
                }
            }
        }
        let mut used = vec![false; self.nodes.len()];
        self.triangles.iter().flatten().for_each(|&k| used[k] = true);
        if let Some(k) = used.iter().position(|u| !u) {
            return Err(Error::InvalidMesh(format!("node {k} is not in any triangle")));
        }
        Ok(())
    }

    fn smooth(&mut self) {
        let first_free = self.fixed_nodes;
        let n = self.nodes.len();
        let mut sum = vec![[0.0, 0.0]; n];
        let mut cnt = vec![0usize; n];
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                for (x, y) in [(a, b), (b, a)] {
                    sum[x][0] += self.nodes[y][0];
                    sum[x][1] += self.nodes[y][1];
                    cnt[x] += 1;
                }
            }
        }
        for k in first_free..n {
            if cnt[k] > 0 {
                let c = cnt[k] as f64;
                self.nodes[k] = [
                    0.5 * self.nodes[k][0] + 0.5 * sum[k][0] / c,
                    0.5 * self.nodes[k][1] + 0.5 * sum[k][1] / c,
                ];
            }
        }
    }
}

impl TriMesh {
    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|k| self.nodes[k]);
        signed_area(a, b, c)
    }

    /// Lumped (one third of adjacent triangle areas) node weights.
    pub fn lumped_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.nodes.len()];
        for (ti, t) in self.triangles.iter().enumerate() {
            let a = self.area(ti) / 3.0;
            t.iter().for_each(|&k| w[k] += a);
        }
        w
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        let mut worst = 180.0f64;
        for t in &self.triangles {
            let p = t.map(|k| self.nodes[k]);
            for k in 0..3 {
                let (a, b, c) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
                worst = worst.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        worst
    }

    pub fn check_quality(&self, min_angle: f64) -> Result<()> {
        if let Some(t) = (0..self.triangles.len()).find(|&t| self.area(t) <= 0.0) {
            return Err(Error::InvalidMesh(format!("triangle {t} has non-positive area")));
        }
        let worst = self.min_angle_deg();
        if worst < min_angle {
            return Err(Error::InvalidMesh(format!(
                "smallest angle {worst:.2} deg is below {min_angle} deg"
            )));
        }
        Ok(())
    }

    /// Longest edge length.
    pub fn max_edge(&self) -> f64 {
        let mut m = 0.0f64;
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (self.nodes[t[k]], self.nodes[t[(k + 1) % 3]]);
                m = m.max((a[0] - b[0]).hypot(a[1] - b[1]));
            }
        }
        m
    }

    /// Splits every triangle into four, placing new boundary nodes on the
    /// boundary circles.
    pub fn refine(&self, domain: &FlatPlace) -> TriMesh {
        use std::collections::HashMap;
        let circles: Vec<Circle> = domain.circles().copied().collect();
        let mut nodes = self.nodes.clone();
        let mut circle_of = self.circle_of.clone();
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, nodes: &mut Vec<[f64; 2]>, circle_of: &mut Vec<Option<usize>>| {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                let (pa, pb) = (nodes[a], nodes[b]);
                let mut p = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
                let on = match (circle_of[a], circle_of[b]) {
                    (Some(x), Some(y)) if x == y => Some(x),
                    _ => None,
                };
                if let Some(c) = on {
                    let ci = circles[c];
                    let ang = (p[1] - ci.center[1]).atan2(p[0] - ci.center[0]);
                    p = ci.point(ang);
                }
                nodes.push(p);
                circle_of.push(on);
                nodes.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for t in &self.triangles {
            let [a, b, c] = *t;
            let ab = midpoint(a, b, &mut nodes, &mut circle_of);
            let bc = midpoint(b, c, &mut nodes, &mut circle_of);
            let ca = midpoint(c, a, &mut nodes, &mut circle_of);
            triangles.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        let loops = self
            .loops
            .iter()
            .map(|lp| {
                let mut out = Vec::with_capacity(2 * lp.len());
                for k in 0..lp.len() {
                    let (a, b) = (lp[k], lp[(k + 1) % lp.len()]);
                    out.push(a);
                    out.push(midpoint(a, b, &mut nodes, &mut circle_of));
                }
                out
            })
            .collect();
        let fixed_nodes = nodes.len();
        TriMesh {
            nodes,
            triangles,
            loops,
            circle_of,
            fixed_nodes,
        }
    }
}

/// Point location by a uniform bucket grid over triangle bounding boxes.
pub struct Locator<'a> {
    mesh: &'a TriMesh,
    origin: [f64; 2],
    cell: f64,
    dims: [usize; 2],
    buckets: Vec<Vec<u32>>,
}

/// Triangle index and barycentric coordinates of a located point.
#[derive(Clone, Copy, Debug)]
pub struct Location {
    pub triangle: usize,
    pub bary: [f64; 3],
    /// Distance outside the mesh (0 when inside).
    pub excess: f64,
}

impl<'a> Locator<'a> {
    pub fn new(mesh: &'a TriMesh) -> Locator<'a> {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &mesh.nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let cell = 1.5 * mesh.max_edge().max(1e-12);
        let dims = [
            ((hi[0] - lo[0]) / cell).ceil() as usize + 1,
            ((hi[1] - lo[1]) / cell).ceil() as usize + 1,
        ];
        let mut buckets = vec![Vec::new(); dims[0] * dims[1]];
        for (ti, t) in mesh.triangles.iter().enumerate() {
            let p = t.map(|k| mesh.nodes[k]);
            let bx0 = ((p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min) - lo[0]) / cell) as usize;
            let bx1 = ((p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max) - lo[0]) / cell) as usize;
            let by0 = ((p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min) - lo[1]) / cell) as usize;
            let by1 = ((p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max) - lo[1]) / cell) as usize;
            for bx in bx0..=bx1.min(dims[0] - 1) {
                for by in by0..=by1.min(dims[1] - 1) {
                    buckets[bx * dims[1] + by].push(ti as u32);
                }
            }
        }
        Locator {
            mesh,
            origin: lo,
            cell,
            dims,
            buckets,
        }
    }

    fn bary(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.mesh.triangles[t].map(|k| self.mesh.nodes[k]);
        let area = signed_area(a, b, c);
        [
            signed_area(p, b, c) / area,
            signed_area(a, p, c) / area,
            signed_area(a, b, p) / area,
        ]
    }

    /// Locates `p`; points outside the mesh are attributed to the nearest
    /// candidate triangle, with clamped barycentric coordinates and the
    /// distance outside recorded in `excess`.
    pub fn locate(&self, p: [f64; 2]) -> Location {
        let bx = (((p[0] - self.origin[0]) / self.cell).max(0.0) as usize).min(self.dims[0] - 1);
        let by = (((p[1] - self.origin[1]) / self.cell).max(0.0) as usize).min(self.dims[1] - 1);
        let mut best: Option<(f64, usize)> = None;
        for ring in 0..3usize {
            let x0 = bx.saturating_sub(ring);
            let x1 = (bx + ring).min(self.dims[0] - 1);
            let y0 = by.saturating_sub(ring);
            let y1 = (by + ring).min(self.dims[1] - 1);
            for x in x0..=x1 {
                for y in y0..=y1 {
                    if ring > 0 && x > x0 && x < x1 && y > y0 && y < y1 {
                        continue;
                    }
                    for &t in &self.buckets[x * self.dims[1] + y] {
                        let t = t as usize;
                        let l = self.bary(t, p);
                        let worst = l.iter().fold(f64::INFINITY, |m, v| m.min(*v));
                        if worst >= -1e-14 {
                            return Location {
                                triangle: t,
                                bary: l,
                                excess: 0.0,
                            };
                        }
                        let d = self.outside_distance(t, p);
                        if best.is_none_or(|(bd, _)| d < bd) {
                            best = Some((d, t));
                        }
                    }
                }
            }
            if best.is_some() && ring >= 1 {
                break;
            }
        }
        let (excess, t) = best.unwrap_or((f64::INFINITY, 0));
        let l = self.bary(t, p);
        let clamped = l.map(|v| v.max(0.0));
        let s: f64 = clamped.iter().sum();
        Location {
            triangle: t,
            bary: clamped.map(|v| v / s),
            excess,
        }
    }

    fn outside_distance(&self, t: usize, p: [f64; 2]) -> f64 {
        let q = self.mesh.triangles[t].map(|k| self.mesh.nodes[k]);
        let mut d = f64::INFINITY;
        for k in 0..3 {
            let (a, b) = (q[k], q[(k + 1) % 3]);
            let ab = [b[0] - a[0], b[1] - a[1]];
            let ap = [p[0] - a[0], p[1] - a[1]];
            let s = ((ap[0] * ab[0] + ap[1] * ab[1]) / (ab[0] * ab[0] + ab[1] * ab[1])).clamp(0.0, 1.0);
            let c = [a[0] + s * ab[0], a[1] + s * ab[1]];
            d = d.min((p[0] - c[0]).hypot(p[1] - c[1]));
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_hole_place() -> FlatPlace {
        FlatPlace {
            outer: Circle::new([0.0, 0.0], 1.0),
            inner: vec![Circle::new([-0.4, 0.1], 0.15), Circle::new([0.35, -0.2], 0.15)],
        }
    }

    fn sampling(counts: &[usize]) -> Vec<CircleSampling> {
        counts
            .iter()
            .enumerate()
            .map(|(k, &count)| CircleSampling {
                count,
                offset: if k == 0 { 0.0 } else { -PI / 4.0 },
            })
            .collect()
    }

    #[test]
    fn mesh_of_holed_disc_is_valid() {
        let fp = two_hole_place();
        let m = TriMesh::generate(&fp, &sampling(&[256, 256, 256]), 0.04).unwrap();
        assert!(m.min_angle_deg() >= 15.0);
        // polygonal area is slightly below the disc-with-holes area
        let rel = (m.total_area() - fp.area()).abs() / fp.area();
        assert!(rel < 1e-3, "{rel}");
        for (k, lp) in m.loops.iter().enumerate() {
            let c = fp.circles().nth(k).unwrap();
            for &n in lp {
                assert!((c.dist_to_center(m.nodes[n]) - c.radius).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn overlapping_holes_rejected() {
        let fp = FlatPlace {
            outer: Circle::new([0.0, 0.0], 1.0),
            inner: vec![Circle::new([0.0, 0.0], 0.3), Circle::new([0.4, 0.0], 0.2)],
        };
        assert!(matches!(fp.validate(), Err(Error::Overlap(_))));
    }

    #[test]
    fn refinement_quarters_triangles_and_keeps_boundary_on_circles() {
        let fp = FlatPlace {
            outer: Circle::new([0.0, 0.0], 2.0),
            inner: vec![Circle::new([0.0, 0.0], 1.0)],
        };
        let m = TriMesh::generate(&fp, &sampling(&[64, 32]), 0.2).unwrap();
        let r = m.refine(&fp);
        assert_eq!(r.triangles.len(), 4 * m.triangles.len());
        for (k, lp) in r.loops.iter().enumerate() {
            let c = fp.circles().nth(k).unwrap();
            assert_eq!(lp.len(), 2 * m.loops[k].len());
            for &n in lp {
                assert!((c.dist_to_center(r.nodes[n]) - c.radius).abs() < 1e-14);
            }
        }
        assert!(r.check_quality(10.0).is_ok());
    }

    #[test]
    fn locator_finds_containing_triangle() {
        let fp = two_hole_place();
        let m = TriMesh::generate(&fp, &sampling(&[128, 64, 64]), 0.06).unwrap();
        let loc = Locator::new(&m);
        for (t, tri) in m.triangles.iter().enumerate().step_by(17) {
            let c = tri.map(|k| m.nodes[k]);
            let p = [(c[0][0] + c[1][0] + c[2][0]) / 3.0, (c[0][1] + c[1][1] + c[2][1]) / 3.0];
            let l = loc.locate(p);
            assert_eq!(l.triangle, t);
            assert_eq!(l.excess, 0.0);
        }
        let far = loc.locate([1.1, 0.0]);
        assert!((far.excess - 0.1).abs() < 0.01);
    }
}
