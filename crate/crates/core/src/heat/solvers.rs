//! Linear solvers for `W + σA` and for the flat Laplacian.

use rustfft::num_complex::Complex64;

use super::operator::MetricLaplacian;
use crate::error::{KpzError, Result};
use crate::lattice::Geometry;
use crate::spectral::LatticeFft;

/// Eigenvalue of the unit-conductance graph Laplacian at FFT bin
/// `(jx, jy)`: `Σ 2(1 - cos θ_i)` with `θ = 2πj/n`.
pub(crate) fn unit_laplacian_eigenvalues(geometry: Geometry, n: usize) -> Vec<f64> {
    let axis: Vec<f64> = (0..n)
        .map(|j| 2.0 * (1.0 - (2.0 * std::f64::consts::PI * j as f64 / n as f64).cos()))
        .collect();
    match geometry {
        Geometry::Boundary => axis,
        Geometry::Bulk => (0..n * n).map(|c| axis[c % n] + axis[c / n]).collect(),
    }
}

/// Solves `(W + σA) z = b` for a fixed shift, by a direct method in 1d and
/// Jacobi-preconditioned conjugate gradients in 2d.
pub(crate) enum ShiftedSolver<'a> {
    Cyclic(CyclicTridiagonal),
    Pcg {
        op: &'a MetricLaplacian,
        sigma: f64,
        inv_diag: Vec<f64>,
        tol: f64,
        max_iter: usize,
    },
}

impl<'a> ShiftedSolver<'a> {
    pub fn new(op: &'a MetricLaplacian, sigma: f64, tol: f64) -> Self {
        let w = op.masses();
        match op.lattice().geometry() {
            Geometry::Boundary => {
                let c = op.conductance_x();
                let n = w.len();
                let diag: Vec<f64> = (0..n).map(|i| w[i] + sigma * (c[i] + c[(i + n - 1) % n])).collect();
                let off: Vec<f64> = c.iter().map(|&ci| -sigma * ci).collect();
                ShiftedSolver::Cyclic(CyclicTridiagonal::new(&diag, &off))
            }
            Geometry::Bulk => ShiftedSolver::Pcg {
                op,
                sigma,
                inv_diag: (0..w.len()).map(|i| 1.0 / (w[i] + sigma * op.degree(i))).collect(),
                tol,
                max_iter: 20 * w.len().max(100),
            },
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            ShiftedSolver::Cyclic(t) => Ok(t.solve(b)),
            ShiftedSolver::Pcg {
                op,
                sigma,
                inv_diag,
                tol,
                max_iter,
            } => pcg(op, *sigma, inv_diag, b, *tol, *max_iter),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn pcg(
    op: &MetricLaplacian,
    sigma: f64,
    inv_diag: &[f64],
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let m = b.len();
    let w = op.masses();
    let apply = |u: &[f64], y: &mut [f64]| {
        op.apply_a(u, y);
        for i in 0..m {
            y[i] = w[i] * u[i] + sigma * y[i];
        }
    };
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; m];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; m];
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..m {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rnorm = dot(&r, &r).sqrt();
        if rnorm <= tol * bnorm {
            return Ok(x);
        }
        for i in 0..m {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..m {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(KpzError::NonConvergence {
        what: "conjugate gradients",
        iterations: max_iter,
        residual: dot(&r, &r).sqrt() / bnorm,
    })
}

/// Factorised symmetric cyclic tridiagonal matrix with diagonal `d` and
/// `M[i][i+1] = M[i+1][i] = e[i]` (indices mod n), solved by
/// Sherman–Morrison around a Thomas factorisation.
pub(crate) struct CyclicTridiagonal {
    sub: Vec<f64>,
    /// Thomas forward-sweep coefficients of the corner-free split matrix.
    cprime: Vec<f64>,
    denom: Vec<f64>,
    gamma: f64,
    beta: f64,
    z: Vec<f64>,
}

impl CyclicTridiagonal {
    pub fn new(d: &[f64], e: &[f64]) -> Self {
        let n = d.len();
        let sub: Vec<f64> = (0..n).map(|i| if i == 0 { 0.0 } else { e[i - 1] }).collect();
        let sup: Vec<f64> = (0..n).map(|i| if i + 1 == n { 0.0 } else { e[i] }).collect();
        let alpha = e[n - 1]; // M[n-1][0]
        let beta = e[n - 1]; // M[0][n-1]
        let gamma = -d[0];
        let mut bb = d.to_vec();
        bb[0] = d[0] - gamma;
        bb[n - 1] = d[n - 1] - alpha * beta / gamma;
        let mut cprime = vec![0.0; n];
        let mut denom = vec![0.0; n];
        denom[0] = bb[0];
        cprime[0] = sup[0] / denom[0];
        for i in 1..n {
            denom[i] = bb[i] - sub[i] * cprime[i - 1];
            cprime[i] = sup[i] / denom[i];
        }
        let mut t = Self {
            sub,
            cprime,
            denom,
            gamma,
            beta,
            z: Vec::new(),
        };
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = alpha;
        t.z = t.thomas(&u);
        t
    }

    fn thomas(&self, r: &[f64]) -> Vec<f64> {
        let n = r.len();
        let mut x = vec![0.0; n];
        x[0] = r[0] / self.denom[0];
        for i in 1..n {
            x[i] = (r[i] - self.sub[i] * x[i - 1]) / self.denom[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.cprime[i] * x[i + 1];
        }
        x
    }

    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        let n = r.len();
        let mut x = self.thomas(r);
        let z = &self.z;
        let fact = (x[0] + self.beta * x[n - 1] / self.gamma) / (1.0 + z[0] + self.beta * z[n - 1] / self.gamma);
        for i in 0..n {
            x[i] -= fact * z[i];
        }
        x
    }
}

/// Solves `A x = b` for `Σ b = 0`, returning the solution with `Σ x = 0`.
pub(crate) fn solve_laplacian(op: &MetricLaplacian, b: &[f64]) -> Vec<f64> {
    match op.lattice().geometry() {
        Geometry::Bulk => solve_unit_laplacian_fft(op, b),
        Geometry::Boundary => solve_chain(op.conductance_x(), b),
    }
}

fn solve_unit_laplacian_fft(op: &MetricLaplacian, b: &[f64]) -> Vec<f64> {
    let lat = op.lattice();
    let fft = LatticeFft::new(lat);
    let eig = unit_laplacian_eigenvalues(lat.geometry(), lat.n());
    let mut buf: Vec<Complex64> = b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.forward(&mut buf);
    buf[0] = Complex64::new(0.0, 0.0);
    for (c, &l) in buf.iter_mut().zip(&eig).skip(1) {
        *c /= l;
    }
    fft.inverse(&mut buf);
    let norm = 1.0 / b.len() as f64;
    buf.iter().map(|c| c.re * norm).collect()
}

/// Periodic chain with bond conductances `c[i]` between `i` and `i+1`.
fn solve_chain(c: &[f64], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    // Flux F_i = c_i (x_i - x_{i+1}) obeys F_i - F_{i-1} = b_i; the free
    // constant makes the potential drops sum to zero around the ring.
    let mut partial = vec![0.0; n];
    let mut acc = 0.0;
    for i in 0..n {
        acc += b[i];
        partial[i] = acc;
    }
    let resist: f64 = c.iter().map(|c| 1.0 / c).sum();
    let f0 = -partial.iter().zip(c).map(|(p, c)| p / c).sum::<f64>() / resist;
    let mut x = vec![0.0; n];
    for i in 0..n - 1 {
        x[i + 1] = x[i] - (f0 + partial[i]) / c[i];
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    x
}
