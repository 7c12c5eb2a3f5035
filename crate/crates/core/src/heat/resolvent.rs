//! Powers of the Green operator `(-L)^{-s}` on mean-zero densities.

use super::operator::MetricLaplacian;
use super::solvers::solve_laplacian;
use crate::error::{KpzError, Result};

/// `G_s(·, z0) = (-L)^{-s} (δ_{z0}/W_{z0} - 1/ΣW)`, normalised to zero
/// `W`-mean. For `s = 1` this is the Green function of the metric; since
/// `(-L)⁻¹ = A⁻¹W`, every power costs one flat Laplacian solve.
pub fn resolvent_power(op: &MetricLaplacian, z0: usize, s: u32) -> Result<Vec<f64>> {
    if !(1..=3).contains(&s) {
        return Err(KpzError::invalid("s", format!("resolvent power must be 1, 2 or 3, got {s}")));
    }
    let w = op.masses();
    let m = w.len();
    if z0 >= m {
        return Err(KpzError::invalid("z0", format!("cell {z0} outside {m} cells")));
    }
    let total: f64 = w.iter().sum();
    let mut rhs: Vec<f64> = w.iter().map(|wi| -wi / total).collect();
    rhs[z0] += 1.0;
    let mut x = Vec::new();
    for _ in 0..s {
        x = solve_laplacian(op, &rhs);
        let mean = x.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / total;
        x.iter_mut().for_each(|v| *v -= mean);
        rhs = x.iter().zip(w).map(|(x, w)| x * w).collect();
    }
    Ok(x)
}
