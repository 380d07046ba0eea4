//! Cut-off constant vector fields along straight tubes.
//!
//! A tube carries a disc along a segment: on its plateau the field equals the
//! segment vector, so the time-one flow translates everything there, and it
//! vanishes outside a rounded rectangle around the segment. The Hamiltonian
//! variant is the symplectic gradient of `chi(D) |c| t`, with `t` the signed
//! distance across the segment, and is divergence free.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

pub type V2 = Vector2<f64>;

/// Exponent of the super-ellipse tube distance.
const P: i32 = 6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TubeKind {
    /// Divergence-free field from a cut-off Hamiltonian.
    #[default]
    Hamiltonian,
    /// `chi(D) c`, which is not area preserving in the transition band.
    CutoffConstant,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tube {
    pub start: V2,
    pub shift: V2,
    /// Half width of the support.
    pub half_width: f64,
    /// Normalized tube distance below which the field is constant.
    pub plateau: f64,
    pub kind: TubeKind,
    mid: V2,
    e: V2,
    en: V2,
    half_len: f64,
}

fn flat_exp(x: f64) -> [f64; 3] {
    if x <= 0.0 {
        return [0.0; 3];
    }
    let e = (-1.0 / x).exp();
    let x2 = x * x;
    [e, e / x2, e * (1.0 / (x2 * x2) - 2.0 / (x2 * x))]
}

/// Smooth step and its first two derivatives.
pub fn smoothstep_jet(x: f64) -> [f64; 3] {
    if x <= 0.0 {
        return [0.0; 3];
    }
    if x >= 1.0 {
        return [1.0, 0.0, 0.0];
    }
    let [a, a1, a2] = flat_exp(x);
    let [b, b1, b2] = flat_exp(1.0 - x);
    // d/dx b(1 - x) = -b', second derivative +b''
    let (b1, b2) = (-b1, b2);
    let s = a + b;
    let n = a1 * b - a * b1;
    let n1 = a2 * b - a * b2;
    [a / s, n / (s * s), n1 / (s * s) - 2.0 * n * (a1 + b1) / (s * s * s)]
}

impl Tube {
    /// Tube moving a disc of radius `reach` (disc plus collar) from `start` by
    /// `shift`, with plateau level `plateau` in `(0, 1)`. The half width is the
    /// smallest that keeps the swept disc inside the plateau.
    pub fn for_disc(start: V2, shift: V2, reach: f64, plateau: f64, kind: TubeKind) -> Tube {
        let l2 = 0.5 * shift.norm();
        let corner = |w: f64| {
            let a = (l2 + reach) / (l2 + w);
            let b = reach / w;
            (a.powi(P) + b.powi(P)).powf(1.0 / P as f64)
        };
        let (mut lo, mut hi) = (reach, 100.0 * reach);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if corner(mid) > plateau {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Tube::new(start, shift, hi, plateau, kind)
    }

    pub fn new(start: V2, shift: V2, half_width: f64, plateau: f64, kind: TubeKind) -> Tube {
        let len = shift.norm();
        let e = if len > 0.0 { shift / len } else { V2::x() };
        Tube {
            start,
            shift,
            half_width,
            plateau,
            kind,
            mid: start + 0.5 * shift,
            e,
            en: V2::new(-e.y, e.x),
            half_len: 0.5 * len + half_width,
        }
    }

    fn local(&self, x: &V2) -> (f64, f64) {
        let d = x - self.mid;
        (d.dot(&self.e), d.dot(&self.en))
    }

    /// Normalized tube distance: below `plateau` on the plateau, 1 on the
    /// support boundary.
    pub fn distance(&self, x: &V2) -> f64 {
        let (s, t) = self.local(x);
        let (a, b) = (s / self.half_len, t / self.half_width);
        (a.powi(P) + b.powi(P)).powf(1.0 / P as f64)
    }

    /// Points on the support boundary, for clearance checks.
    pub fn outline(&self, count: usize) -> Vec<V2> {
        (0..count)
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / count as f64;
                let (c, s) = (th.cos(), th.sin());
                let r = (c.powi(P) + s.powi(P)).powf(-1.0 / P as f64);
                self.mid + self.e * (r * c * self.half_len) + self.en * (r * s * self.half_width)
            })
            .collect()
    }

    /// Cut-off `chi(D)` and its first two derivatives in `D`.
    fn cutoff(&self, d: f64) -> [f64; 3] {
        let w = 1.0 - self.plateau;
        let [s, s1, s2] = smoothstep_jet((d - self.plateau) / w);
        [1.0 - s, -s1 / w, -s2 / (w * w)]
    }

    /// Velocity and its Jacobian at `x`.
    pub fn velocity(&self, x: &V2) -> (V2, Matrix2<f64>) {
        let (s, t) = self.local(x);
        let (a, b) = (self.half_len, self.half_width);
        let (sn, tn) = (s / a, t / b);
        let d = (sn.powi(P) + tn.powi(P)).powf(1.0 / P as f64);
        if d >= 1.0 {
            return (V2::zeros(), Matrix2::zeros());
        }
        if d <= self.plateau {
            return (self.shift, Matrix2::zeros());
        }
        let [chi, c1, c2] = self.cutoff(d);
        let p = P as f64;
        let dp = d.powi(1 - P);
        // derivatives of D in normalized coordinates
        let ds = sn.powi(P - 1) * dp;
        let dt = tn.powi(P - 1) * dp;
        let d2 = d.powi(1 - 2 * P);
        let dss = (p - 1.0) * (sn.powi(P - 2) * dp - sn.powi(2 * P - 2) * d2);
        let dtt = (p - 1.0) * (tn.powi(P - 2) * dp - tn.powi(2 * P - 2) * d2);
        let dst = -(p - 1.0) * sn.powi(P - 1) * tn.powi(P - 1) * d2;
        // physical derivatives of D
        let (gs, gt) = (ds / a, dt / b);
        let (hss, hst, htt) = (dss / (a * a), dst / (a * b), dtt / (b * b));
        let q = Matrix2::from_columns(&[self.e, self.en]);
        let c = self.shift.norm();
        match self.kind {
            TubeKind::Hamiltonian => {
                // F = t chi(D); v = |c| (F_t e - F_s en)
                let fs = t * c1 * gs;
                let ft = chi + t * c1 * gt;
                let fss = t * (c2 * gs * gs + c1 * hss);
                let fst = c1 * gs + t * (c2 * gs * gt + c1 * hst);
                let ftt = 2.0 * c1 * gt + t * (c2 * gt * gt + c1 * htt);
                let v = (self.e * ft - self.en * fs) * c;
                let m = Matrix2::new(fst, ftt, -fss, -fst) * c;
                (v, q * m * q.transpose())
            }
            TubeKind::CutoffConstant => {
                let grad = q * V2::new(c1 * gs, c1 * gt);
                (self.shift * chi, self.shift * grad.transpose())
            }
        }
    }

    /// Time-one flow from `x` with `steps` RK4 steps, carrying the Jacobian.
    pub fn flow(&self, x: V2, jac: Matrix2<f64>, steps: usize) -> (V2, Matrix2<f64>) {
        if self.shift == V2::zeros() {
            return (x, jac);
        }
        let dt = 1.0 / steps as f64;
        let (mut x, mut j) = (x, jac);
        for _ in 0..steps {
            let (k1, a1) = self.velocity(&x);
            let (k2, a2) = self.velocity(&(x + k1 * (0.5 * dt)));
            let (k3, a3) = self.velocity(&(x + k2 * (0.5 * dt)));
            let (k4, a4) = self.velocity(&(x + k3 * dt));
            let j1 = a1 * j;
            let j2 = a2 * (j + j1 * (0.5 * dt));
            let j3 = a3 * (j + j2 * (0.5 * dt));
            let j4 = a4 * (j + j3 * dt);
            x += (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);
            j += (j1 + (j2 + j3) * 2.0 + j4) * (dt / 6.0);
        }
        (x, j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tube(kind: TubeKind) -> Tube {
        Tube::for_disc(V2::new(-0.4, 0.1), V2::new(0.5, 0.2), 0.2, 0.7, kind)
    }

    #[test]
    fn smoothstep_derivatives_match_differences() {
        for x in [0.1, 0.3, 0.5, 0.77, 0.95] {
            let h = 1e-5;
            let [_, d1, d2] = smoothstep_jet(x);
            let fd1 = (smoothstep_jet(x + h)[0] - smoothstep_jet(x - h)[0]) / (2.0 * h);
            let fd2 = (smoothstep_jet(x + h)[1] - smoothstep_jet(x - h)[1]) / (2.0 * h);
            assert!((d1 - fd1).abs() < 1e-8 && (d2 - fd2).abs() < 1e-6, "{x}");
        }
    }

    #[test]
    fn jacobian_matches_differences_and_is_trace_free() {
        let t = tube(TubeKind::Hamiltonian);
        let h = 1e-6;
        let mut hits = 0;
        for k in 0..400 {
            let x = V2::new(-0.9 + 0.0045 * k as f64, 0.35 - 0.002 * k as f64);
            let d = t.distance(&x);
            if !(d > t.plateau && d < 1.0) {
                continue;
            }
            hits += 1;
            let (_, jac) = t.velocity(&x);
            assert!(jac.trace().abs() < 1e-9 * (1.0 + jac.norm()));
            for c in 0..2 {
                let mut dx = V2::zeros();
                dx[c] = h;
                let fd = (t.velocity(&(x + dx)).0 - t.velocity(&(x - dx)).0) / (2.0 * h);
                assert!((fd - jac.column(c)).norm() < 1e-5 * (1.0 + jac.norm()));
            }
        }
        assert!(hits > 20);
    }

    #[test]
    fn plateau_points_are_translated_exactly() {
        let t = tube(TubeKind::Hamiltonian);
        for x in [t.start, t.start + V2::new(0.2, 0.0), t.start + V2::new(0.0, -0.2)] {
            let (y, j) = t.flow(x, Matrix2::identity(), 64);
            assert!((y - x - t.shift).norm() < 1e-14);
            assert!((j - Matrix2::identity()).norm() < 1e-14);
        }
        let far = V2::new(0.0, -0.9);
        assert_eq!(t.flow(far, Matrix2::identity(), 64).0, far);
    }

    #[test]
    fn hamiltonian_flow_preserves_area() {
        let t = tube(TubeKind::Hamiltonian);
        let defect = |steps| {
            (0..200)
                .map(|k| {
                    let x = V2::new(-0.8 + 0.007 * k as f64, -0.25 + 0.003 * k as f64);
                    let (_, j) = t.flow(x, Matrix2::identity(), steps);
                    (j.determinant() - 1.0).abs()
                })
                .fold(0.0f64, f64::max)
        };
        let (coarse, fine) = (defect(128), defect(256));
        assert!(coarse < 1e-4, "{coarse:e}");
        assert!(coarse / fine > 8.0, "{coarse:e} {fine:e}");
    }
}
