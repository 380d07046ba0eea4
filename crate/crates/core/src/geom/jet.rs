//! Pointwise derivative jets of closed-form patch maps.

use super::Vec3;

/// First and second partial derivatives of a patch map at one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub du: Vec3,
    pub dv: Vec3,
    pub duu: Vec3,
    pub duv: Vec3,
    pub dvv: Vec3,
}

impl Jet {
    pub fn linear_map(&self, m: &nalgebra::Matrix3<f64>) -> Jet {
        Jet {
            du: m * self.du,
            dv: m * self.dv,
            duu: m * self.duu,
            duv: m * self.duv,
            dvv: m * self.dvv,
        }
    }
}

/// A closed-form map from a rectangle of parameters into 3-space.
///
/// The default `jet` uses fourth-order central differences with a small step
/// relative to `scale`; implementors with analytic derivatives may override it.
pub trait PatchMap: Send + Sync {
    fn eval(&self, u: f64, v: f64) -> Vec3;

    fn jet(&self, u: f64, v: f64, scale: f64) -> Jet {
        numeric_jet(|a, b| self.eval(a, b), u, v, scale)
    }
}

impl<F> PatchMap for F
where
    F: Fn(f64, f64) -> Vec3 + Send + Sync,
{
    fn eval(&self, u: f64, v: f64) -> Vec3 {
        self(u, v)
    }
}

/// Relative step for the jet stencils. Balances the O(step^4) truncation of the
/// five-point formulas against roundoff amplified by step^-2.
pub const JET_STEP: f64 = 2e-3;

pub fn numeric_jet(f: impl Fn(f64, f64) -> Vec3, u: f64, v: f64, scale: f64) -> Jet {
    let h = JET_STEP * scale;
    let fu = |s: f64| f(u + s * h, v);
    let fv = |s: f64| f(u, v + s * h);
    let f0 = f(u, v);

    let (um2, um1, up1, up2) = (fu(-2.0), fu(-1.0), fu(1.0), fu(2.0));
    let (vm2, vm1, vp1, vp2) = (fv(-2.0), fv(-1.0), fv(1.0), fv(2.0));

    let du = (8.0 * (up1 - um1) - (up2 - um2)) / (12.0 * h);
    let dv = (8.0 * (vp1 - vm1) - (vp2 - vm2)) / (12.0 * h);
    let duu = (-up2 + 16.0 * up1 - 30.0 * f0 + 16.0 * um1 - um2) / (12.0 * h * h);
    let dvv = (-vp2 + 16.0 * vp1 - 30.0 * f0 + 16.0 * vm1 - vm2) / (12.0 * h * h);

    // Richardson combination of two cross stencils
    let cross = |s: f64| {
        (f(u + s * h, v + s * h) - f(u + s * h, v - s * h) - f(u - s * h, v + s * h)
            + f(u - s * h, v - s * h))
            / (4.0 * s * s * h * h)
    };
    let duv = (4.0 * cross(1.0) - cross(2.0)) / 3.0;

    Jet {
        du,
        dv,
        duu,
        duv,
        dvv,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_jet_matches_closed_form() {
        let f = |u: f64, v: f64| Vec3::new(u.sin() * v.cos(), u * v * v, (u + 2.0 * v).exp());
        let (u, v) = (0.3, -0.7);
        let j = numeric_jet(f, u, v, 1.0);
        let e = (u + 2.0 * v).exp();
        let du = Vec3::new(u.cos() * v.cos(), v * v, e);
        let dv = Vec3::new(-u.sin() * v.sin(), 2.0 * u * v, 2.0 * e);
        let duu = Vec3::new(-u.sin() * v.cos(), 0.0, e);
        let duv = Vec3::new(-u.cos() * v.sin(), 2.0 * v, 2.0 * e);
        let dvv = Vec3::new(-u.sin() * v.cos(), 2.0 * u, 4.0 * e);
        assert!((j.du - du).norm() < 1e-11);
        assert!((j.dv - dv).norm() < 1e-11);
        assert!((j.duu - duu).norm() < 1e-9);
        assert!((j.duv - duv).norm() < 1e-9);
        assert!((j.dvv - dvv).norm() < 1e-9);
    }
}
