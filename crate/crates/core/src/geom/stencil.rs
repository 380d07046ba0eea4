//! Grid finite differences and tensor-product quadrature weights.

/// 1D quadrature weights on `n` equispaced nodes with spacing `h`.
///
/// Composite Simpson for odd `n`; for even `n >= 4` the last three intervals
/// use the 3/8 rule. `n == 2` falls back to the trapezoid rule.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    assert!(n >= 2, "quadrature needs at least two nodes");
    let mut w = vec![0.0; n];
    if n == 2 {
        w[0] = 0.5 * h;
        w[1] = 0.5 * h;
        return w;
    }
    let simpson_end = if n % 2 == 1 { n - 1 } else { n - 4 };
    let mut k = 0;
    while k < simpson_end {
        w[k] += h / 3.0;
        w[k + 1] += 4.0 * h / 3.0;
        w[k + 2] += h / 3.0;
        k += 2;
    }
    if n.is_multiple_of(2) {
        let s = n - 4;
        let c = 3.0 * h / 8.0;
        w[s] += c;
        w[s + 1] += 3.0 * c;
        w[s + 2] += 3.0 * c;
        w[s + 3] += c;
    }
    w
}

/// Tensor-product weights, row-major with the second index fastest.
pub fn tensor_weights(nu: usize, hu: f64, nv: usize, hv: f64) -> Vec<f64> {
    let wu = simpson_weights(nu, hu);
    let wv = simpson_weights(nv, hv);
    let mut w = Vec::with_capacity(nu * nv);
    for a in &wu {
        for b in &wv {
            w.push(a * b);
        }
    }
    w
}

/// Second-order first derivative at index `k` of a line of `n` samples.
/// Central in the interior, one-sided three-point at the ends.
#[inline]
pub fn d1<T>(n: usize, k: usize, h: f64, at: impl Fn(usize) -> T) -> T
where
    T: std::ops::Sub<Output = T> + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    if k == 0 {
        (at(0) * -3.0 + at(1) * 4.0 - at(2)) * (0.5 / h)
    } else if k == n - 1 {
        (at(n - 1) * 3.0 - at(n - 2) * 4.0 + at(n - 3)) * (0.5 / h)
    } else {
        (at(k + 1) - at(k - 1)) * (0.5 / h)
    }
}

/// Second-order second derivative; the one-sided ends use four points.
#[inline]
pub fn d2<T>(n: usize, k: usize, h: f64, at: impl Fn(usize) -> T) -> T
where
    T: std::ops::Sub<Output = T> + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let s = 1.0 / (h * h);
    if k == 0 {
        (at(0) * 2.0 - at(1) * 5.0 + at(2) * 4.0 - at(3)) * s
    } else if k == n - 1 {
        (at(n - 1) * 2.0 - at(n - 2) * 5.0 + at(n - 3) * 4.0 - at(n - 4)) * s
    } else {
        (at(k + 1) - at(k) * 2.0 + at(k - 1)) * s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_integrate_cubics_exactly() {
        for n in [3usize, 5, 9, 4, 6, 10] {
            let h = 2.0 / (n - 1) as f64;
            let w = simpson_weights(n, h);
            let integral: f64 = (0..n)
                .map(|k| {
                    let x = -1.0 + k as f64 * h;
                    w[k] * (x * x * x + 2.0 * x * x - x + 1.0)
                })
                .sum();
            assert!((integral - (4.0 / 3.0 + 2.0)).abs() < 1e-13, "n={n}: {integral}");
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn stencils_exact_on_quadratics() {
        let n = 7;
        let h = 0.25;
        let f = |k: usize| {
            let x = k as f64 * h;
            3.0 * x * x - x + 2.0
        };
        for k in 0..n {
            let x = k as f64 * h;
            assert!((d1(n, k, h, f) - (6.0 * x - 1.0)).abs() < 1e-12);
            assert!((d2(n, k, h, f) - 6.0).abs() < 1e-10);
        }
    }
}
