//! Bicubic Lagrange interpolation on regular grids.

use std::ops::{Add, Mul};

use crate::geom::Rect;

/// Stencil start and cubic Lagrange weights for coordinate `x` on a grid of
/// `n` nodes starting at `x0` with spacing `h`. Stencils shift inward near edges.
pub fn cubic_weights(n: usize, x0: f64, h: f64, x: f64) -> (usize, [f64; 4]) {
    let t = (x - x0) / h;
    let cell = (t.floor() as isize).clamp(0, n as isize - 2);
    let start = (cell - 1).clamp(0, n as isize - 4) as usize;
    let s = t - start as f64;
    let mut w = [0.0; 4];
    for (k, wk) in w.iter_mut().enumerate() {
        let mut acc = 1.0;
        for m in 0..4 {
            if m != k {
                acc *= (s - m as f64) / (k as f64 - m as f64);
            }
        }
        *wk = acc;
    }
    (start, w)
}

/// Interpolant over row-major (v fastest) samples.
pub struct Bicubic<'a, T> {
    rect: Rect,
    nu: usize,
    nv: usize,
    values: &'a [T],
}

impl<'a, T> Bicubic<'a, T>
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    pub fn new(rect: Rect, nu: usize, nv: usize, values: &'a [T]) -> Self {
        assert!(nu >= 4 && nv >= 4, "bicubic interpolation needs 4x4 samples");
        assert_eq!(values.len(), nu * nv);
        Bicubic {
            rect,
            nu,
            nv,
            values,
        }
    }

    pub fn eval(&self, u: f64, v: f64) -> T {
        let hu = (self.rect.u1 - self.rect.u0) / (self.nu - 1) as f64;
        let hv = (self.rect.v1 - self.rect.v0) / (self.nv - 1) as f64;
        let (iu, wu) = cubic_weights(self.nu, self.rect.u0, hu, u);
        let (iv, wv) = cubic_weights(self.nv, self.rect.v0, hv, v);
        let mut acc: Option<T> = None;
        for (a, wa) in wu.iter().enumerate() {
            for (b, wb) in wv.iter().enumerate() {
                let term = self.values[(iu + a) * self.nv + iv + b] * (wa * wb);
                acc = Some(match acc {
                    None => term,
                    Some(x) => x + term,
                });
            }
        }
        acc.expect("stencil is nonempty")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_bicubic_polynomials() {
        let rect = Rect::new(-1.0, 2.0, 0.0, 1.0);
        let (nu, nv) = (7, 6);
        let f = |u: f64, v: f64| u * u * u - 2.0 * u * v * v + v * v * v * u + 1.0;
        let mut vals = Vec::new();
        for i in 0..nu {
            for j in 0..nv {
                let u = -1.0 + 3.0 * i as f64 / 6.0;
                let v = j as f64 / 5.0;
                vals.push(f(u, v));
            }
        }
        let b = Bicubic::new(rect, nu, nv, &vals);
        for &(u, v) in &[(-1.0, 0.0), (0.3, 0.77), (2.0, 1.0), (1.99, 0.01)] {
            assert!((b.eval(u, v) - f(u, v)).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_sum_to_one() {
        for x in [0.0, 0.1, 0.55, 0.999, 1.0] {
            let (_, w) = cubic_weights(11, 0.0, 0.1, x);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }
}
