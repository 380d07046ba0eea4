//! Closed-form test surfaces: cubed sphere, ellipsoids, convex blobs, graph
//! patches, cylinders, O-grid discs and the rounded table base that closes a
//! flat place from below.

use std::f64::consts::{FRAC_PI_4, PI, TAU};
use std::sync::Arc;

use nalgebra::Matrix3;
use rand::Rng;

use crate::geom::{ParametricPatch, ParametricSurface, PatchMap, Rect, Vec3};

/// Tolerance used when detecting seams of closed-form surfaces.
pub const SEAM_TOL: f64 = 1e-10;

/// Unit sphere as six equi-angular cube-face patches, each `n x n`.
pub fn cubed_sphere(n: usize) -> ParametricSurface {
    let x = Vec3::x();
    let y = Vec3::y();
    let z = Vec3::z();
    // (a, b, e) with a x b = e so that every face is outward oriented
    let faces = [
        (x, y, z),
        (y, x, -z),
        (y, z, x),
        (z, y, -x),
        (z, x, y),
        (x, z, -y),
    ];
    let rect = Rect::new(-FRAC_PI_4, FRAC_PI_4, -FRAC_PI_4, FRAC_PI_4);
    let patches = faces
        .iter()
        .map(|&(a, b, e)| {
            ParametricPatch::new(rect, n, n, move |al: f64, be: f64| {
                (e + a * al.tan() + b * be.tan()).normalize()
            })
        })
        .collect();
    ParametricSurface::new(patches, Vec::new()).detect_seams(SEAM_TOL)
}

/// Image of the unit sphere under `diag(a, b, c)`.
pub fn ellipsoid(n: usize, axes: [f64; 3]) -> ParametricSurface {
    let m = Matrix3::from_diagonal(&Vec3::new(axes[0], axes[1], axes[2]));
    cubed_sphere(n).map_ambient(move |p| m * p)
}

/// Convex body whose support function is `r |y| + sum_k sqrt(y^T A_k y)`,
/// parametrized by its inverse Gauss map over the cubed sphere.
#[derive(Clone, Debug)]
pub struct ConvexBlob {
    pub radius: f64,
    pub shapes: Vec<Matrix3<f64>>,
}

impl ConvexBlob {
    /// Random symmetric positive definite summands with eigenvalues in
    /// `[0.05, 0.4]^2` (the support function takes square roots).
    pub fn random<R: Rng>(rng: &mut R, count: usize) -> ConvexBlob {
        let shapes = (0..count)
            .map(|_| {
                let q = crate::geom::RigidMotion::random(rng, 0.0).rotation;
                let d = Vec3::from_fn(|_, _| rng.gen_range(0.05f64..0.4).powi(2));
                q * Matrix3::from_diagonal(&d) * q.transpose()
            })
            .collect();
        ConvexBlob {
            radius: 0.6,
            shapes,
        }
    }

    /// Point with outward normal `nu` (unit).
    pub fn point(&self, nu: &Vec3) -> Vec3 {
        let mut x = nu * self.radius;
        for a in &self.shapes {
            let an = a * nu;
            x += an / nu.dot(&an).sqrt();
        }
        x
    }

    pub fn surface(&self, n: usize) -> ParametricSurface {
        let blob = self.clone();
        cubed_sphere(n).map_ambient(move |p| blob.point(&p))
    }
}

/// Graph patch `z = a x^2 + b y^2 + c x y` over `[-1, 1]^2`.
pub fn quadric_graph(n: usize, a: f64, b: f64, c: f64) -> ParametricSurface {
    let rect = Rect::new(-1.0, 1.0, -1.0, 1.0);
    ParametricSurface::new(
        vec![ParametricPatch::new(rect, n, n, move |x: f64, y: f64| {
            Vec3::new(x, y, a * x * x + b * y * y + c * x * y)
        })],
        Vec::new(),
    )
}

/// The parametrization `B(x, y) = (x/a, y/b, x^2/a + y^2/b)` of `z = a X^2 + b Y^2`.
pub fn paraboloid(a: f64, b: f64, rect: Rect, nu: usize, nv: usize) -> ParametricSurface {
    ParametricSurface::new(
        vec![ParametricPatch::new(rect, nu, nv, move |x: f64, y: f64| {
            Vec3::new(x / a, y / b, x * x / a + y * y / b)
        })],
        Vec::new(),
    )
}

/// Unit cylinder `x^2 + y^2 = 1, 0 <= z <= 1` parametrized by angle x height.
pub fn unit_cylinder(nu: usize, nv: usize) -> ParametricSurface {
    let rect = Rect::new(0.0, TAU, 0.0, 1.0);
    ParametricSurface::new(
        vec![ParametricPatch::new(rect, nu, nv, |t: f64, z: f64| {
            Vec3::new(t.cos(), t.sin(), z)
        })],
        Vec::new(),
    )
    .detect_seams(SEAM_TOL)
}

/// Planar maps of an O-grid disc: a core square and four blended petals.
///
/// The boundary circle is sampled at angles `-pi/4 + 2 pi k / (4 (n - 1))`.
pub type PlaneMap = Arc<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync>;

/// Every map is positively oriented in the plane.
pub fn ogrid_disc(
    center: [f64; 2],
    radius: f64,
    n: usize,
    n_radial: usize,
) -> Vec<(Rect, usize, usize, PlaneMap)> {
    let s = 0.45 * radius;
    let mut out: Vec<(Rect, usize, usize, PlaneMap)> = Vec::with_capacity(5);
    out.push((
        Rect::new(-1.0, 1.0, -1.0, 1.0),
        n,
        n,
        Arc::new(move |u: f64, v: f64| [center[0] + s * u, center[1] + s * v]),
    ));
    for k in 0..4 {
        let rot = k as f64 * PI / 2.0;
        let (cr, sr) = (rot.cos(), rot.sin());
        out.push((
            Rect::new(0.0, 1.0, -1.0, 1.0),
            n_radial,
            n,
            Arc::new(move |lam: f64, t: f64| {
                let a = FRAC_PI_4 * t;
                let px = (1.0 - lam) * s + lam * radius * a.cos();
                let py = (1.0 - lam) * s * t + lam * radius * a.sin();
                [center[0] + cr * px - sr * py, center[1] + sr * px + cr * py]
            }),
        ));
    }
    out
}

/// `exp(-1/(1 - r^2))` normalized to 1 at `r = 0`, zero for `r >= 1`.
pub fn bump(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r * r)).exp()
    }
}

fn flat_exp(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

/// Smooth step from 0 (x <= 0) to 1 (x >= 1) with all derivatives vanishing
/// at both ends.
pub fn smoothstep(x: f64) -> f64 {
    let a = flat_exp(x);
    let b = flat_exp(1.0 - x);
    if a + b == 0.0 {
        return if x <= 0.0 { 0.0 } else { 1.0 };
    }
    a / (a + b)
}

/// Height profile of a chess-piece cap over a disc.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CapProfile {
    /// Peak height.
    pub height: f64,
    /// Linear tilt across the disc, in units of the radius; zero gives a
    /// surface of revolution.
    #[serde(default)]
    pub tilt: f64,
}

impl Default for CapProfile {
    fn default() -> Self {
        CapProfile {
            height: 0.3,
            tilt: 0.0,
        }
    }
}

impl CapProfile {
    /// Height at offset `(dx, dy)` from the centre of a disc of radius `r`.
    pub fn height_at(&self, dx: f64, dy: f64, r: f64) -> f64 {
        let rho = (dx * dx + dy * dy).sqrt() / r;
        self.height * bump(rho) * (1.0 + self.tilt * dx / r)
    }
}

/// Bump cap over a disc as five O-grid patches (outward normal up).
pub fn cap_patches(center: [f64; 2], radius: f64, profile: CapProfile, n: usize, n_radial: usize) -> Vec<ParametricPatch> {
    ogrid_disc(center, radius, n, n_radial)
        .into_iter()
        .map(|(rect, nu, nv, m)| {
            ParametricPatch::new(rect, nu, nv, move |u: f64, v: f64| {
                let [x, y] = m(u, v);
                Vec3::new(x, y, profile.height_at(x - center[0], y - center[1], radius))
            })
        })
        .collect()
}

/// Polar annulus `r0 <= rho <= r1` in the plane `z = 0`, sampled at angles `2 pi j / m`.
pub fn polar_annulus(r0: f64, r1: f64, n_radial: usize, m: usize) -> ParametricPatch {
    ParametricPatch::new(
        Rect::new(r0, r1, 0.0, TAU),
        n_radial,
        m + 1,
        |rho: f64, t: f64| Vec3::new(rho * t.cos(), rho * t.sin(), 0.0),
    )
}

const RIM_PANELS: usize = 48;

/// Rounded base closing a flat place from below. It continues the plane
/// outward from the outer circle, turns through a half turn along a rim and
/// returns underneath to a flat bottom disc.
#[derive(Clone, Copy, Debug)]
pub struct TableBase {
    pub outer_radius: f64,
    pub ledge: f64,
    pub rim_length: f64,
    pub bottom_radius: f64,
    /// Rim displacement at each panel boundary.
    rim_table: [[f64; 2]; RIM_PANELS + 1],
}

impl TableBase {
    pub fn new(outer_radius: f64, ledge: f64, rim_length: f64, bottom_radius: f64) -> TableBase {
        let mut base = TableBase {
            outer_radius,
            ledge,
            rim_length,
            bottom_radius,
            rim_table: [[0.0; 2]; RIM_PANELS + 1],
        };
        let h = rim_length / RIM_PANELS as f64;
        for k in 0..RIM_PANELS {
            let a = ledge + k as f64 * h;
            let [dx, dz] = base.rim_panel(a, a + h);
            let prev = base.rim_table[k];
            base.rim_table[k + 1] = [prev[0] + dx, prev[1] + dz];
        }
        base
    }

    pub fn for_radius(r0: f64) -> TableBase {
        TableBase::new(r0, 0.1 * r0, 0.5 * r0, 0.5 * r0)
    }

    fn turning(&self, s: f64) -> f64 {
        -PI * smoothstep((s - self.ledge) / self.rim_length)
    }

    /// Profile point `(rho, z)` at arc length `s` from the outer circle.
    pub fn profile(&self, s: f64) -> [f64; 2] {
        let (s1, l) = (self.ledge, self.rim_length);
        if s <= s1 {
            return [self.outer_radius + s, 0.0];
        }
        let upto = s.min(s1 + l);
        let [dx, dz] = self.integrate_rim(upto);
        let mut p = [self.outer_radius + s1 + dx, dz];
        if s > s1 + l {
            p[0] -= s - s1 - l;
        }
        p
    }

    /// Rim displacement from `ledge` to `b`: whole panels from the table, the
    /// last partial panel by quadrature.
    fn integrate_rim(&self, b: f64) -> [f64; 2] {
        let h = self.rim_length / RIM_PANELS as f64;
        let k = (((b - self.ledge) / h).floor().max(0.0) as usize).min(RIM_PANELS);
        let a = self.ledge + k as f64 * h;
        let [x, z] = self.rim_table[k];
        if b <= a {
            return [x, z];
        }
        let [dx, dz] = self.rim_panel(a, b);
        [x + dx, z + dz]
    }

    /// 8-point Gauss-Legendre integral of the unit tangent over `[a, b]`.
    fn rim_panel(&self, a: f64, b: f64) -> [f64; 2] {
        const X: [f64; 4] = [
            0.183_434_642_495_649_8,
            0.525_532_409_916_329,
            0.796_666_477_413_626_7,
            0.960_289_856_497_536_3,
        ];
        const W: [f64; 4] = [
            0.362_683_783_378_362,
            0.313_706_645_877_887_3,
            0.222_381_034_453_374_5,
            0.101_228_536_290_376_3,
        ];
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        let mut acc = [0.0, 0.0];
        for (x, w) in X.iter().zip(W) {
            for s in [mid - half * x, mid + half * x] {
                let al = self.turning(s);
                acc[0] += half * w * al.cos();
                acc[1] += half * w * al.sin();
            }
        }
        acc
    }

    /// Total arc length of the side profile.
    pub fn side_length(&self) -> f64 {
        let end = self.profile(self.ledge + self.rim_length);
        self.ledge + self.rim_length + (end[0] - self.bottom_radius)
    }

    /// Depth of the flat bottom below the plane.
    pub fn depth(&self) -> f64 {
        -self.profile(self.ledge + self.rim_length)[1]
    }

    /// Side patch `(s, theta)` plus the five bottom-disc patches (normal down).
    /// `m` must be divisible by 8 so the bottom O-grid meets the side exactly.
    pub fn patches(&self, n_side: usize, m: usize) -> Vec<ParametricPatch> {
        assert!(m.is_multiple_of(8), "angular sample count must be divisible by 8");
        let base = *self;
        let mut out = vec![ParametricPatch::new(
            Rect::new(0.0, self.side_length(), 0.0, TAU),
            n_side,
            m + 1,
            move |s: f64, t: f64| {
                let [rho, z] = base.profile(s);
                Vec3::new(rho * t.cos(), rho * t.sin(), z)
            },
        )];
        let depth = self.depth();
        let n_disc = m / 4 + 1;
        let n_radial = (n_side / 2).max(5) | 1;
        for (rect, nu, nv, map) in ogrid_disc([0.0, 0.0], self.bottom_radius, n_disc, n_radial) {
            out.push(ParametricPatch::new(rect, nu, nv, move |u: f64, v: f64| {
                let [x, y] = map(u, v);
                Vec3::new(x, -y, -depth)
            }));
        }
        out
    }
}

/// Sphere with a Gaussian bump of relative amplitude `amp` around direction `dir`.
pub fn bumped_sphere(n: usize, dir: Vec3, amp: f64, width: f64) -> ParametricSurface {
    let d = dir.normalize();
    cubed_sphere(n).map_ambient(move |p| p * (1.0 + amp * (-(p - d).norm_squared() / (width * width)).exp()))
}

/// Random smooth radial perturbation of the sphere by cubic polynomials,
/// rescaled so the total area stays `4 pi`.
pub fn perturbed_sphere<R: Rng>(rng: &mut R, n: usize, amp: f64) -> crate::error::Result<ParametricSurface> {
    let c: Vec<f64> = (0..19).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let radial = move |p: &Vec3| {
        let (x, y, z) = (p.x, p.y, p.z);
        let monomials = [
            x, y, z, x * y, y * z, z * x, x * x - y * y, 2.0 * z * z - x * x - y * y,
            x * x * x, y * y * y, z * z * z, x * y * z, x * x * y, y * y * z, z * z * x,
            x * y * y, y * z * z, z * x * x, x * x * z,
        ];
        1.0 + amp * monomials.iter().zip(&c).map(|(m, k)| m * k).sum::<f64>() / 4.0
    };
    let raw = cubed_sphere(n).map_ambient(move |p| p * radial(&p));
    let area = total_area(&raw)?;
    let scale = (4.0 * PI / area).sqrt();
    Ok(raw.map_ambient(move |p| p * scale))
}

/// Surface area by quadrature of the sampled area element.
pub fn total_area(s: &ParametricSurface) -> crate::error::Result<f64> {
    let f = s.sample_flat()?;
    let q = crate::geom::srnf(&f)?;
    crate::metric::l2_inner(&q, &q)
}

/// `PatchMap` wrapper used where a boxed trait object is required.
pub fn arc_map(m: impl PatchMap + 'static) -> Arc<dyn PatchMap> {
    Arc::new(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_profile_has_unit_speed() {
        let t = TableBase::for_radius(2.0);
        let h = 1e-5;
        let total = t.side_length();
        for k in 1..400 {
            let s = total * k as f64 / 400.0;
            let [a, b] = [t.profile(s - h), t.profile(s + h)];
            let speed = (b[0] - a[0]).hypot(b[1] - a[1]) / (2.0 * h);
            assert!((speed - 1.0).abs() < 1e-8, "{s} {speed}");
        }
        let end = t.profile(total);
        assert!((end[0] - t.bottom_radius).abs() < 1e-14);
    }

    #[test]
    fn table_rim_matches_direct_quadrature() {
        let t = TableBase::for_radius(1.0);
        // a half turn with a symmetric turning profile ends straight below its start
        let [x, z] = t.integrate_rim(t.ledge + t.rim_length);
        assert!(x.abs() < 1e-12, "{x}");
        assert!(z < 0.0 && z > -t.rim_length);
        for s in [0.13, 0.2718, 0.31, 0.5999] {
            let fine = (0..2000).fold([0.0, 0.0], |acc, k| {
                let a = t.ledge + (s - t.ledge) * k as f64 / 2000.0;
                let b = t.ledge + (s - t.ledge) * (k + 1) as f64 / 2000.0;
                let [dx, dz] = t.rim_panel(a, b);
                [acc[0] + dx, acc[1] + dz]
            });
            let got = t.integrate_rim(s);
            assert!((got[0] - fine[0]).abs() < 1e-13 && (got[1] - fine[1]).abs() < 1e-13, "{s}");
        }
    }
}
