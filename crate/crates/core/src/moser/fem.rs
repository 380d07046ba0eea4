//! Linear finite elements on a triangle mesh: the Neumann Poisson solve and
//! gradient recovery.

use rayon::prelude::*;

use super::mesh::TriMesh;
use crate::error::{Error, Result};

/// Compressed sparse rows.
#[derive(Clone, Debug)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Csr {
        t.sort_unstable_by_key(|a| (a.0, a.1));
        let mut indptr = vec![0; n + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut data: Vec<f64> = Vec::with_capacity(t.len());
        let mut last = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *data.last_mut().expect("entry exists") += v;
            } else {
                indices.push(j);
                data.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        Csr {
            n,
            indptr,
            indices,
            data,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .into_par_iter()
            .map(|i| {
                (self.indptr[i]..self.indptr[i + 1])
                    .map(|k| self.data[k] * x[self.indices[k]])
                    .sum()
            })
            .collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.indptr[i]..self.indptr[i + 1])
                    .find(|&k| self.indices[k] == i)
                    .map_or(0.0, |k| self.data[k])
            })
            .collect()
    }
}

/// Gradients of the three hat functions on a triangle, and its area.
pub fn hat_gradients(mesh: &TriMesh, t: usize) -> ([[f64; 2]; 3], f64) {
    let [a, b, c] = mesh.triangles[t].map(|k| mesh.nodes[k]);
    let area = mesh.area(t);
    let g = |p: [f64; 2], q: [f64; 2]| [(p[1] - q[1]) / (2.0 * area), (q[0] - p[0]) / (2.0 * area)];
    ([g(b, c), g(c, a), g(a, b)], area)
}

/// Stiffness `K_ij = int grad phi_i . grad phi_j`.
pub fn stiffness(mesh: &TriMesh) -> Csr {
    let mut t = Vec::with_capacity(9 * mesh.triangles.len());
    for (ti, tri) in mesh.triangles.iter().enumerate() {
        let (g, area) = hat_gradients(mesh, ti);
        for a in 0..3 {
            for b in 0..3 {
                t.push((tri[a], tri[b], area * (g[a][0] * g[b][0] + g[a][1] * g[b][1])));
            }
        }
    }
    Csr::from_triplets(mesh.nodes.len(), t)
}

/// Consistent mass `M_ij = int phi_i phi_j`.
pub fn mass(mesh: &TriMesh) -> Csr {
    let mut t = Vec::with_capacity(9 * mesh.triangles.len());
    for (ti, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.area(ti);
        for a in 0..3 {
            for b in 0..3 {
                let v = if a == b { area / 6.0 } else { area / 12.0 };
                t.push((tri[a], tri[b], v));
            }
        }
    }
    Csr::from_triplets(mesh.nodes.len(), t)
}

/// Integral of the P1 interpolant of nodal values.
pub fn integrate(mesh: &TriMesh, f: &[f64]) -> f64 {
    mesh.triangles
        .iter()
        .enumerate()
        .map(|(ti, t)| mesh.area(ti) * (f[t[0]] + f[t[1]] + f[t[2]]) / 3.0)
        .sum()
}

/// Preconditioned conjugate gradients on the mean-zero subspace.
fn pcg_mean_zero(a: &Csr, b: &[f64], rtol: f64, max_iter: usize) -> (Vec<f64>, f64, usize) {
    let n = b.len();
    let project = |v: &mut [f64]| {
        let m = v.iter().sum::<f64>() / n as f64;
        v.iter_mut().for_each(|x| *x -= m);
    };
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let diag: Vec<f64> = a.diagonal().iter().map(|d| if *d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    project(&mut r);
    let bnorm = dot(&r, &r).sqrt();
    if bnorm == 0.0 {
        return (x, 0.0, 0);
    }
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r * d).collect();
    project(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    for it in 0..max_iter {
        let ap = a.matvec(&p);
        let alpha = rz / dot(&p, &ap);
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
        r.iter_mut().zip(&ap).for_each(|(r, q)| *r -= alpha * q);
        project(&mut r);
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= rtol {
            return (x, rel, it + 1);
        }
        z = r.iter().zip(&diag).map(|(r, d)| r * d).collect();
        project(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    (x, rel, max_iter)
}

/// Result of the Neumann solve.
#[derive(Clone, Debug)]
pub struct Potential {
    pub u: Vec<f64>,
    pub iterations: usize,
    /// `|K u + M g| / |M g|` after projecting out constants.
    pub relative_residual: f64,
}

/// Solves `Laplace u = g` with zero Neumann data by linear elements, so that
/// `psi = (-u_y, u_x)` satisfies `d psi = g dx dy`. `scale` sets the
/// solvability tolerance: `|int g| <= 1e-8 scale`. The returned `u` has zero mean.
pub fn solve_neumann(mesh: &TriMesh, g: &[f64], scale: f64) -> Result<Potential> {
    let integral = integrate(mesh, g);
    let tolerance = 1e-8 * scale;
    if integral.abs() > tolerance {
        return Err(Error::IncompatibleData {
            integral,
            tolerance,
        });
    }
    let k = stiffness(mesh);
    let m = mass(mesh);
    let b: Vec<f64> = m.matvec(g).iter().map(|v| -v).collect();
    let (mut u, rel, iterations) = pcg_mean_zero(&k, &b, 1e-12, 20 * mesh.nodes.len().max(100));
    if rel > 1e-10 {
        return Err(Error::SolverFailure {
            residual: rel,
            iterations,
        });
    }
    let w = mesh.lumped_weights();
    let mean = u.iter().zip(&w).map(|(u, w)| u * w).sum::<f64>() / w.iter().sum::<f64>();
    u.iter_mut().for_each(|x| *x -= mean);
    let relative_residual = weak_residual(&k, &m, &u, g);
    Ok(Potential {
        u,
        iterations,
        relative_residual,
    })
}

/// `|K u + M g| / |M g|` with constants projected out: how well `d psi`
/// reproduces `g` in the weak sense.
pub fn weak_residual(k: &Csr, m: &Csr, u: &[f64], g: &[f64]) -> f64 {
    let mut mg = m.matvec(g);
    let n = mg.len() as f64;
    let mean = mg.iter().sum::<f64>() / n;
    mg.iter_mut().for_each(|x| *x -= mean);
    let ku = k.matvec(u);
    let num: f64 = ku.iter().zip(&mg).map(|(a, b)| (a + b).powi(2)).sum::<f64>().sqrt();
    let den: f64 = mg.iter().map(|x| x * x).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Constant gradient of the P1 interpolant on each triangle.
pub fn triangle_gradients(mesh: &TriMesh, u: &[f64]) -> Vec<[f64; 2]> {
    (0..mesh.triangles.len())
        .map(|t| {
            let (g, _) = hat_gradients(mesh, t);
            let tri = mesh.triangles[t];
            let mut out = [0.0; 2];
            for a in 0..3 {
                out[0] += u[tri[a]] * g[a][0];
                out[1] += u[tri[a]] * g[a][1];
            }
            out
        })
        .collect()
}

/// Area-weighted average of adjacent triangle gradients at each node.
pub fn recovered_gradient(mesh: &TriMesh, u: &[f64]) -> Vec<[f64; 2]> {
    let tg = triangle_gradients(mesh, u);
    let mut acc = vec![[0.0; 2]; mesh.nodes.len()];
    let mut w = vec![0.0; mesh.nodes.len()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let a = mesh.area(t);
        for &k in tri {
            acc[k][0] += a * tg[t][0];
            acc[k][1] += a * tg[t][1];
            w[k] += a;
        }
    }
    acc.iter()
        .zip(&w)
        .map(|(g, w)| [g[0] / w, g[1] / w])
        .collect()
}
