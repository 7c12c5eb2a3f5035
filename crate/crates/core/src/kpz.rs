//! Closed-form KPZ relations.
//!
//! `x = Δ + (γ²/4) Δ (Δ - 1)` links the Euclidean exponent `x` of a fractal
//! to its quantum exponent `Δ`; the same map holds on the boundary for
//! `(x̃, Δ̃)`. The replica computation predicts the short-distance exponent of
//! `⟨e^{γ(1-Δ)φ(z)} ⟨z|(-Δ^φ)^{-s}|z₀⟩⟩`, whose first Mellin singularity `s_c`
//! must equal `Δ` (bulk) or `Δ̃/2` (boundary) for consistency.

use serde::{Deserialize, Serialize};

use crate::error::{KpzError, Result};
use crate::lattice::Geometry;

/// Coupling together with the optional central charge it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpzContext {
    pub gamma: f64,
    pub c: Option<f64>,
    pub regime: Geometry,
}

impl KpzContext {
    pub fn new(gamma: f64, regime: Geometry) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self {
            gamma,
            c: None,
            regime,
        })
    }

    pub fn from_central_charge(c: f64, regime: Geometry) -> Result<Self> {
        let gamma = gamma_from_c(c)?;
        check_gamma(gamma)?;
        Ok(Self {
            gamma,
            c: Some(c),
            regime,
        })
    }

    pub fn delta(&self, x: f64) -> Result<f64> {
        inverse_kpz(x, self.gamma)
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..2.0).contains(&gamma) {
        return Err(KpzError::invalid("gamma", format!("{gamma} outside [0, 2)")));
    }
    Ok(())
}

/// `γ(c) = √((25-c)/6) - √((1-c)/6)`.
pub fn gamma_from_c(c: f64) -> Result<f64> {
    if !(c <= 1.0) {
        return Err(KpzError::invalid("c", format!("{c} > 1 gives a complex coupling")));
    }
    Ok(((25.0 - c) / 6.0).sqrt() - ((1.0 - c) / 6.0).sqrt())
}

/// `x = Δ + (γ²/4) Δ (Δ - 1)`.
pub fn forward_kpz(delta: f64, gamma: f64) -> f64 {
    delta + 0.25 * gamma * gamma * delta * (delta - 1.0)
}

/// The root of `(γ²/4)Δ² + (1 - γ²/4)Δ - x = 0` with `Δ(x=0) = 0`.
pub fn inverse_kpz(x: f64, gamma: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(KpzError::invalid("x", format!("{x} < 0")));
    }
    let g2 = gamma * gamma;
    let b = 1.0 - 0.25 * g2;
    let disc = b * b + g2 * x;
    if disc < 0.0 {
        return Err(KpzError::ComplexRoots {
            what: "inverse KPZ",
            discriminant: disc,
        });
    }
    // Rationalised form: exact at γ = 0 and free of cancellation.
    let denom = b + disc.sqrt();
    if denom <= 0.0 {
        return Err(KpzError::invalid("gamma", format!("{gamma} leaves no regular root")));
    }
    Ok(2.0 * x / denom)
}

/// Short-distance exponent of the replica correlator at (possibly
/// non-integer) `s`.
pub fn replica_exponent(s: f64, delta_trial: f64, gamma: f64, regime: Geometry) -> f64 {
    let g2 = gamma * gamma;
    match regime {
        Geometry::Bulk => 2.0 * s - 2.0 + 0.5 * g2 * (s - 1.0) * (2.0 * delta_trial - s),
        Geometry::Boundary => 2.0 * s - 1.0 + 0.5 * g2 * (2.0 * s - 1.0) * (delta_trial - s),
    }
}

/// Coefficients `(a, b, c)` of `a s² - b s + c = 0` for the singularity.
fn singularity_quadratic(x: f64, delta: f64, gamma: f64, regime: Geometry) -> (f64, f64, f64) {
    let g2 = gamma * gamma;
    let b = 2.0 + 0.5 * g2 * (2.0 * delta + 1.0);
    match regime {
        // 2x - 2 = 2s - 2 + (γ²/2)(s - 1)(2Δ - s)
        Geometry::Bulk => (0.5 * g2, b, g2 * delta + 2.0 * x),
        // x̃ - 1 = 2s - 1 + (γ²/2)(2s - 1)(Δ̃ - s)
        Geometry::Boundary => (g2, b, x + 0.5 * g2 * delta),
    }
}

/// First Mellin singularity `s_c` for a trial exponent; the root that
/// tends to `x` (bulk) or `x̃/2` (boundary) as `γ → 0`.
pub fn predicted_singularity(x: f64, delta_trial: f64, gamma: f64, regime: Geometry) -> Result<f64> {
    let (a, b, c) = singularity_quadratic(x, delta_trial, gamma, regime);
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Err(KpzError::ComplexRoots {
            what: "singularity location",
            discriminant: disc,
        });
    }
    Ok(2.0 * c / (b + disc.sqrt()))
}

pub const FIXED_POINT_TOLERANCE: f64 = 1e-12;
pub const FIXED_POINT_MAX_ITERATIONS: usize = 1000;

/// Iterate `Δ ← s_c(x, Δ)` (bulk) or `Δ̃ ← 2 s_c(x̃, Δ̃)` (boundary) from `x`.
pub fn fixed_point(x: f64, gamma: f64, regime: Geometry) -> Result<f64> {
    let factor = match regime {
        Geometry::Bulk => 1.0,
        Geometry::Boundary => 2.0,
    };
    let mut delta = x;
    let mut step = f64::INFINITY;
    for _ in 0..FIXED_POINT_MAX_ITERATIONS {
        let next = factor * predicted_singularity(x, delta, gamma, regime)?;
        step = (next - delta).abs();
        delta = next;
        if step < FIXED_POINT_TOLERANCE {
            return Ok(delta);
        }
    }
    Err(KpzError::NonConvergence {
        what: "KPZ fixed point",
        iterations: FIXED_POINT_MAX_ITERATIONS,
        residual: step,
    })
}

/// Exponent of `⟨e^{q₁γφ(z)} e^{q₂γφ(w)}⟩ ∝ |z - w|^{…}`.
pub fn wick_pair_exponent(q1: f64, q2: f64, gamma: f64, regime: Geometry) -> f64 {
    let coeff = match regime {
        Geometry::Bulk => 1.0,
        Geometry::Boundary => 2.0,
    };
    -coeff * gamma * gamma * q1 * q2
}

/// Replica exponent rebuilt by power counting at integer `s` (bulk) or
/// half-integer `s` (boundary): all pairwise Wick exponents of the charge
/// configuration plus the flat propagator power.
pub fn power_counting_exponent(s: f64, delta_trial: f64, gamma: f64, regime: Geometry) -> Result<f64> {
    let (charges, flat) = match regime {
        Geometry::Bulk => {
            if s < 1.0 || s.fract() != 0.0 {
                return Err(KpzError::invalid("s", format!("{s} is not a positive integer")));
            }
            let mut q = vec![1.0 - delta_trial];
            q.extend(std::iter::repeat_n(1.0, s as usize - 1));
            (q, 2.0 * s - 2.0)
        }
        Geometry::Boundary => {
            if s < 0.5 || (2.0 * s).fract() != 0.0 {
                return Err(KpzError::invalid("s", format!("{s} is not a positive half-integer")));
            }
            let mut q = vec![0.5 * (1.0 - delta_trial)];
            q.extend(std::iter::repeat_n(0.5, (2.0 * s) as usize - 1));
            (q, 2.0 * s - 1.0)
        }
    };
    let mut total = flat;
    for i in 0..charges.len() {
        for j in i + 1..charges.len() {
            total += wick_pair_exponent(charges[i], charges[j], gamma, regime);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    const X_CANTOR: f64 = 0.369_070_246_428_542_9;
    const G83: f64 = 1.632_993_161_855_452;

    /// Bisection on `f(s) = lhs(s) - rhs(s)` over `[lo, hi]`.
    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        assert!(f(lo) * f(hi) <= 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn central_charges() {
        assert!((gamma_from_c(1.0).unwrap() - 2.0).abs() < 1e-15);
        assert!((gamma_from_c(-2.0).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!((gamma_from_c(0.0).unwrap() - (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(gamma_from_c(1.5).is_err());
        let ctx = KpzContext::from_central_charge(0.0, Geometry::Bulk).unwrap();
        assert!((ctx.gamma - G83).abs() < 1e-12);
        assert!(KpzContext::from_central_charge(1.0, Geometry::Bulk).is_err());
    }

    #[test]
    fn forward_examples() {
        for g in [0.0, 0.7, 1.9] {
            assert_eq!(forward_kpz(0.0, g), 0.0);
            assert!((forward_kpz(1.0, g) - 1.0).abs() < 1e-15);
        }
        assert!((forward_kpz(0.5, G83) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(forward_kpz(0.3, 0.0), 0.3);
    }

    #[test]
    fn inverse_examples() {
        assert!((inverse_kpz(1.0 / 3.0, G83).unwrap() - 0.5).abs() < 1e-12);
        let d = inverse_kpz(X_CANTOR, 1.0).unwrap();
        assert!((d - 0.43036).abs() < 1e-5, "{d}");
        assert_eq!(inverse_kpz(0.25, 0.0).unwrap(), 0.25);
        assert!(inverse_kpz(-0.1, 1.0).is_err());
    }

    #[test]
    fn replica_examples() {
        assert_eq!(replica_exponent(1.0, 0.3, 1.2, Geometry::Bulk), 0.0);
        assert_eq!(replica_exponent(0.5, 0.3, 1.2, Geometry::Boundary), 0.0);
        assert!((replica_exponent(2.0, 0.5, G83, Geometry::Bulk) - 2.0 / 3.0).abs() < 1e-12);
        assert!((replica_exponent(2.0, 2.0, 1.0, Geometry::Bulk) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn singularity_matches_bisection() {
        let (x, d, g) = (X_CANTOR, 0.3, 1.0);
        let sc = predicted_singularity(x, d, g, Geometry::Bulk).unwrap();
        let f = |s: f64| 2.0 * x - 2.0 - (2.0 * s - 2.0 + 0.5 * g * g * (s - 1.0) * (2.0 * d - s));
        let oracle = bisect(f, 0.0, 1.0);
        assert!((sc - oracle).abs() < 1e-10, "{sc} vs {oracle}");
        let fb = |s: f64| x - 1.0 - (2.0 * s - 1.0 + 0.5 * g * g * (2.0 * s - 1.0) * (d - s));
        let scb = predicted_singularity(x, d, g, Geometry::Boundary).unwrap();
        assert!((scb - bisect(fb, 0.0, 0.5)).abs() < 1e-10);
    }

    #[test]
    fn singularity_classical_limit_and_fixed_point() {
        assert!((predicted_singularity(0.3, 0.7, 0.0, Geometry::Bulk).unwrap() - 0.3).abs() < 1e-15);
        assert!((predicted_singularity(0.3, 0.7, 0.0, Geometry::Boundary).unwrap() - 0.15).abs() < 1e-15);
        for g in [0.5, 1.0, 1.5, G83] {
            let d = inverse_kpz(X_CANTOR, g).unwrap();
            let sb = predicted_singularity(X_CANTOR, d, g, Geometry::Bulk).unwrap();
            assert!((sb - d).abs() < 1e-10);
            let sd = predicted_singularity(X_CANTOR, d, g, Geometry::Boundary).unwrap();
            assert!((sd - d / 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn fixed_point_iteration() {
        assert_eq!(fixed_point(0.2, 0.0, Geometry::Bulk).unwrap(), 0.2);
        for regime in [Geometry::Bulk, Geometry::Boundary] {
            let d = fixed_point(X_CANTOR, 1.0, regime).unwrap();
            assert!((d - inverse_kpz(X_CANTOR, 1.0).unwrap()).abs() < 1e-10);
            assert!((d - 0.43036).abs() < 1e-5);
        }
    }

    #[test]
    fn wick_pairs() {
        let (g, d) = (1.3, 0.4);
        assert!((wick_pair_exponent(1.0 - d, 1.0, g, Geometry::Bulk) + g * g * (1.0 - d)).abs() < 1e-15);
        assert_eq!(wick_pair_exponent(1.0, 1.0, g, Geometry::Bulk), -g * g);
        assert_eq!(wick_pair_exponent(1.0, 1.0, g, Geometry::Boundary), -2.0 * g * g);
        assert_eq!(wick_pair_exponent(0.3, 0.9, 0.0, Geometry::Bulk), 0.0);
    }

    #[test]
    fn power_counting_reproduces_replica_exponent() {
        for g in [0.0, 0.5, 1.0, G83] {
            for d in [0.0, 0.25, 0.5, 0.9] {
                for s in [2.0, 3.0] {
                    let pc = power_counting_exponent(s, d, g, Geometry::Bulk).unwrap();
                    assert!((pc - replica_exponent(s, d, g, Geometry::Bulk)).abs() < 1e-12);
                }
                for s in [0.5, 1.0, 1.5, 2.0] {
                    let pc = power_counting_exponent(s, d, g, Geometry::Boundary).unwrap();
                    assert!((pc - replica_exponent(s, d, g, Geometry::Boundary)).abs() < 1e-12);
                }
            }
        }
        assert!(power_counting_exponent(1.5, 0.2, 1.0, Geometry::Bulk).is_err());
    }
}
