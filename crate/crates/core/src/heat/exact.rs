//! Deterministic heat propagation `e^{tL} f`.
//!
//! Flat operators are diagonalised by the FFT. Otherwise we work with the
//! symmetric form `S = W^{-1/2} A W^{-1/2}` (so `e^{tL} = W^{-1/2} e^{-tS}
//! W^{1/2}`) and run Lanczos on the shift-invert operator `(I + σS)⁻¹`,
//! whose spectrum lies in `(0, 1]` regardless of how stiff `S` is. The null
//! vector `W^{1/2}` is deflated exactly, so mass is conserved to rounding.

use nalgebra::{DMatrix, SymmetricEigen};
use rustfft::num_complex::Complex64;

use super::operator::{HeatState, MetricLaplacian};
use super::solvers::{unit_laplacian_eigenvalues, ShiftedSolver};
use crate::error::{KpzError, Result};
use crate::lattice::Geometry;
use crate::spectral::LatticeFft;

/// Size limits and tolerances of the Krylov path. Flat operators have no
/// size limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactConfig {
    pub max_bulk_n: usize,
    pub max_boundary_n: usize,
    /// Relative accuracy of the Krylov approximation.
    pub tolerance: f64,
    pub max_krylov: usize,
    /// Largest ratio of times sharing one shift.
    pub group_ratio: f64,
}

impl Default for ExactConfig {
    fn default() -> Self {
        Self {
            max_bulk_n: 128,
            max_boundary_n: 1 << 16,
            tolerance: 1e-11,
            max_krylov: 300,
            group_ratio: 16.0,
        }
    }
}

impl ExactConfig {
    fn check_size(&self, op: &MetricLaplacian) -> Result<()> {
        let lat = op.lattice();
        let limit = match lat.geometry() {
            Geometry::Bulk => self.max_bulk_n * self.max_bulk_n,
            Geometry::Boundary => self.max_boundary_n,
        };
        if lat.cells() > limit {
            return Err(KpzError::BackendSizeExceeded {
                cells: lat.cells(),
                limit,
            });
        }
        Ok(())
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(KpzError::invalid("t", format!("times must be positive and finite, got {t}")));
    }
    Ok(())
}

/// Heat kernel density `p_t(z0, ·)` w.r.t. `W`, started from `δ_{z0}/W_{z0}`.
pub fn evolve_exact(op: &MetricLaplacian, z0: usize, t: f64) -> Result<HeatState> {
    let mut out = evolve_exact_times(op, z0, &[t], &ExactConfig::default())?;
    Ok(out.pop().expect("one time"))
}

/// [`evolve_exact`] at several times, sharing Krylov work.
pub fn evolve_exact_times(op: &MetricLaplacian, z0: usize, times: &[f64], config: &ExactConfig) -> Result<Vec<HeatState>> {
    let m = op.lattice().cells();
    if z0 >= m {
        return Err(KpzError::invalid("z0", format!("cell {z0} outside {m} cells")));
    }
    let mut f = vec![0.0; m];
    f[z0] = 1.0 / op.masses()[z0];
    let dens = propagate(op, &f, times, config)?;
    Ok(dens
        .into_iter()
        .zip(times)
        .map(|(density, &time)| HeatState { density, time })
        .collect())
}

/// `e^{tL} f` for each `t` in `times`.
pub fn propagate(op: &MetricLaplacian, f: &[f64], times: &[f64], config: &ExactConfig) -> Result<Vec<Vec<f64>>> {
    check_times(times)?;
    if f.len() != op.lattice().cells() {
        return Err(KpzError::MismatchedLattice(format!(
            "{} values for {} cells",
            f.len(),
            op.lattice().cells()
        )));
    }
    if op.is_flat() {
        Ok(propagate_flat(op, f, times))
    } else {
        config.check_size(op)?;
        propagate_krylov(op, f, times, config)
    }
}

fn propagate_flat(op: &MetricLaplacian, f: &[f64], times: &[f64]) -> Vec<Vec<f64>> {
    let lat = op.lattice();
    let rate = op.conductance_x()[0] / op.masses()[0];
    let eig = unit_laplacian_eigenvalues(lat.geometry(), lat.n());
    let fft = LatticeFft::new(lat);
    let mut hat: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.forward(&mut hat);
    let norm = 1.0 / f.len() as f64;
    times
        .iter()
        .map(|&t| {
            let mut buf: Vec<Complex64> = hat.iter().zip(&eig).map(|(c, &l)| c * (-t * rate * l).exp()).collect();
            fft.inverse(&mut buf);
            buf.iter().map(|c| c.re * norm).collect()
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += alpha * x;
    }
}

fn propagate_krylov(op: &MetricLaplacian, f: &[f64], times: &[f64], config: &ExactConfig) -> Result<Vec<Vec<f64>>> {
    let sqrt_w: Vec<f64> = op.masses().iter().map(|w| w.sqrt()).collect();
    let total: f64 = op.masses().iter().sum();
    let u0: Vec<f64> = sqrt_w.iter().map(|s| s / total.sqrt()).collect();

    let mut v: Vec<f64> = f.iter().zip(&sqrt_w).map(|(f, s)| f * s).collect();
    let alpha0 = dot(&u0, &v);
    axpy(-alpha0, &u0, &mut v);

    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&i, &j| times[i].total_cmp(&times[j]));
    let mut out = vec![Vec::new(); times.len()];
    let mut start = 0;
    while start < order.len() {
        let t0 = times[order[start]];
        let mut end = start + 1;
        while end < order.len() && times[order[end]] <= t0 * config.group_ratio {
            end += 1;
        }
        let group: Vec<f64> = order[start..end].iter().map(|&i| times[i]).collect();
        let sigma = (group[0] * group[group.len() - 1]).sqrt() / 10.0;
        let parts = lanczos_exp(op, &sqrt_w, &u0, &v, sigma, &group, config)?;
        for (&i, mut y) in order[start..end].iter().zip(parts) {
            axpy(alpha0, &u0, &mut y);
            for (y, s) in y.iter_mut().zip(&sqrt_w) {
                *y /= s;
            }
            out[i] = y;
        }
        start = end;
    }
    Ok(out)
}

/// `e^{-tS} v` for `v ⟂ u0`, via Lanczos on `(I + σS)⁻¹`.
fn lanczos_exp(
    op: &MetricLaplacian,
    sqrt_w: &[f64],
    u0: &[f64],
    v: &[f64],
    sigma: f64,
    times: &[f64],
    config: &ExactConfig,
) -> Result<Vec<Vec<f64>>> {
    let m = v.len();
    let beta0 = dot(v, v).sqrt();
    if beta0 == 0.0 {
        return Ok(vec![vec![0.0; m]; times.len()]);
    }
    let solver = ShiftedSolver::new(op, sigma, 1e-14);
    let apply_t = |x: &[f64]| -> Result<Vec<f64>> {
        let rhs: Vec<f64> = x.iter().zip(sqrt_w).map(|(x, s)| x * s).collect();
        let z = solver.solve(&rhs)?;
        Ok(z.iter().zip(sqrt_w).map(|(z, s)| z * s).collect())
    };

    let mut basis: Vec<Vec<f64>> = vec![v.iter().map(|x| x / beta0).collect()];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut previous: Option<Vec<Vec<f64>>> = None;
    let max_m = config.max_krylov.min(m.saturating_sub(1)).max(1);
    let mut last_change = f64::INFINITY;

    loop {
        let j = alphas.len();
        let mut w = apply_t(&basis[j])?;
        let a = dot(&basis[j], &w);
        alphas.push(a);
        // Full reorthogonalisation (twice) against the basis and the null vector.
        for _ in 0..2 {
            let c0 = dot(u0, &w);
            axpy(-c0, u0, &mut w);
            for q in &basis {
                let c = dot(q, &w);
                axpy(-c, q, &mut w);
            }
        }
        let b = dot(&w, &w).sqrt();
        let size = alphas.len();
        let breakdown = b <= 1e-14 * alphas.iter().fold(0.0f64, |acc, a| acc.max(a.abs()));

        let coeffs = krylov_coefficients(&alphas, &betas, sigma, times, beta0);
        if let Some(prev) = &previous {
            last_change = coeffs
                .iter()
                .zip(prev)
                .map(|(c, p)| {
                    let diff: f64 = c
                        .iter()
                        .enumerate()
                        .map(|(k, ck)| (ck - p.get(k).copied().unwrap_or(0.0)).powi(2))
                        .sum();
                    diff.sqrt()
                })
                .fold(0.0, f64::max);
        }
        if breakdown || last_change <= config.tolerance * beta0 {
            return Ok(coeffs
                .iter()
                .map(|c| {
                    let mut y = vec![0.0; m];
                    for (ck, q) in c.iter().zip(&basis) {
                        axpy(*ck, q, &mut y);
                    }
                    y
                })
                .collect());
        }
        if size >= max_m {
            return Err(KpzError::NonConvergence {
                what: "shift-invert Lanczos",
                iterations: size,
                residual: last_change / beta0,
            });
        }
        previous = Some(coeffs);
        betas.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
}

/// Coefficients of `e^{-tS} v` in the Lanczos basis, for each time.
fn krylov_coefficients(alphas: &[f64], betas: &[f64], sigma: f64, times: &[f64], beta0: f64) -> Vec<Vec<f64>> {
    let k = alphas.len();
    let mut h = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        h[(i, i)] = alphas[i];
        if i + 1 < k {
            h[(i, i + 1)] = betas[i];
            h[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(h);
    let lambdas: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&theta| {
            if theta <= 0.0 {
                f64::INFINITY
            } else {
                ((1.0 / theta - 1.0) / sigma).max(0.0)
            }
        })
        .collect();
    times
        .iter()
        .map(|&t| {
            (0..k)
                .map(|row| {
                    (0..k)
                        .map(|e| {
                            let q = &eig.eigenvectors;
                            q[(row, e)] * (-t * lambdas[e]).exp() * q[(0, e)]
                        })
                        .sum::<f64>()
                        * beta0
                })
                .collect()
        })
        .collect()
}
