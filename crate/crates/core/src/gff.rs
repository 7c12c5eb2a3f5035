//! Log-correlated Gaussian free fields on periodic lattices.
//!
//! The bulk field has covariance `(1/L²) Σ_{k≠0} (2π/|k|²) e^{ik·(z-z')}`,
//! which behaves like `-log|z-z'| + const` for `a ≪ |z-z'| ≪ L`. The
//! boundary field has covariance `(1/L) Σ_{k≠0} (2π/|k|) e^{ik(u-u')}`,
//! i.e. `-2 log|u-u'| + const` (a per-mode variance of `2·2π/(L|k|)` once
//! the `±k` pair is folded into one real mode).
//!
//! Samples are drawn by filtering white noise through the square root of the
//! spectrum, so the zero mode is absent and the field is deterministic in
//! its seed.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{KpzError, Result};
use crate::grid_io;
use crate::lattice::{Geometry, Lattice};
use crate::spectral::{for_each_mode, lattice_dispersion, LatticeFft};

/// How `|k|²` is evaluated in the sampling spectrum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dispersion {
    /// Exact lattice momenta with the continuum `|k|²`.
    #[default]
    Continuum,
    /// Nearest-neighbour lattice dispersion `(4/a²) Σ sin²(k_i a/2)`.
    Lattice,
}

/// One realisation of the field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub lattice: Lattice,
    pub values: Vec<f64>,
    pub seed: u64,
}

impl FieldSample {
    pub fn geometry(&self) -> Geometry {
        self.lattice.geometry()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Write the field as a flat binary grid (see [`crate::grid_io`]).
    pub fn dump(&self, path: &Path) -> Result<()> {
        grid_io::write_grid(path, &self.lattice, self.seed, [0.0, 0.0], &self.values)
    }
}

/// Spectral density `S(k)` of the field at a nonzero wave vector.
fn spectral_density(geometry: Geometry, dispersion: Dispersion, kx: f64, ky: f64, a: f64) -> f64 {
    let k2 = match dispersion {
        Dispersion::Continuum => kx * kx + ky * ky,
        Dispersion::Lattice => lattice_dispersion(kx, ky, a),
    };
    let two_pi = 2.0 * std::f64::consts::PI;
    match geometry {
        Geometry::Bulk => two_pi / k2,
        Geometry::Boundary => two_pi / k2.sqrt(),
    }
}

/// Reusable sampler holding the FFT plan and spectral filter for a lattice.
#[derive(Clone)]
pub struct GffSampler {
    lattice: Lattice,
    fft: LatticeFft,
    /// `sqrt(S(k) / cell volume)` per Fourier bin, zero at `k = 0`.
    filter: Vec<f64>,
}

impl GffSampler {
    pub fn new(lattice: Lattice, dispersion: Dispersion) -> Self {
        let mut filter = vec![0.0; lattice.cells()];
        let a = lattice.spacing();
        let vol = lattice.cell_volume();
        for_each_mode(&lattice, |cell, kx, ky| {
            if cell != 0 {
                let s = spectral_density(lattice.geometry(), dispersion, kx, ky, a);
                filter[cell] = (s / vol).sqrt();
            }
        });
        Self {
            fft: LatticeFft::new(&lattice),
            lattice,
            filter,
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    /// Exact per-cell variance of the samples (the mode sum of the filter).
    pub fn variance(&self) -> f64 {
        self.filter.iter().map(|h| h * h).sum::<f64>() / self.filter.len() as f64
    }

    /// Exact covariance `⟨φ(0) φ(z)⟩` for every cell `z`.
    pub fn covariance(&self) -> Vec<f64> {
        let mut buf: Vec<Complex64> = self
            .filter
            .iter()
            .map(|h| Complex64::new(h * h, 0.0))
            .collect();
        self.fft.inverse(&mut buf);
        let norm = 1.0 / buf.len() as f64;
        buf.iter().map(|c| c.re * norm).collect()
    }

    pub fn sample(&self, seed: u64) -> FieldSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut buf: Vec<Complex64> = (0..self.lattice.cells())
            .map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0))
            .collect();
        self.fft.forward(&mut buf);
        for (c, h) in buf.iter_mut().zip(&self.filter) {
            *c *= *h;
        }
        self.fft.inverse(&mut buf);
        let norm = 1.0 / buf.len() as f64;
        let mut values: Vec<f64> = buf.iter().map(|c| c.re * norm).collect();
        // The zero mode is filtered out; remove the rounding residue as well.
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        for v in &mut values {
            *v -= mean;
        }
        FieldSample {
            lattice: self.lattice,
            values,
            seed,
        }
    }
}

fn require(lattice: &Lattice, geometry: Geometry) -> Result<()> {
    if lattice.geometry() == geometry {
        Ok(())
    } else {
        Err(KpzError::IncompatibleLattice(format!(
            "expected a {} lattice",
            geometry.as_str()
        )))
    }
}

/// Sample the bulk field on a torus (continuum dispersion).
pub fn sample_bulk_gff(lattice: &Lattice, seed: u64) -> Result<FieldSample> {
    require(lattice, Geometry::Bulk)?;
    Ok(GffSampler::new(*lattice, Dispersion::Continuum).sample(seed))
}

/// Sample the boundary field on a periodic interval (continuum dispersion).
pub fn sample_boundary_gff(lattice: &Lattice, seed: u64) -> Result<FieldSample> {
    require(lattice, Geometry::Boundary)?;
    Ok(GffSampler::new(*lattice, Dispersion::Continuum).sample(seed))
}

/// Exact per-cell variance `G(z, z)` of the sampled field.
pub fn coincident_variance(lattice: &Lattice, dispersion: Dispersion) -> f64 {
    let a = lattice.spacing();
    let mut sum = 0.0;
    for_each_mode(lattice, |cell, kx, ky| {
        if cell != 0 {
            sum += spectral_density(lattice.geometry(), dispersion, kx, ky, a);
        }
    });
    sum / lattice.volume()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_mean_and_deterministic() {
        for lat in [Lattice::torus(32, 0.5).unwrap(), Lattice::boundary(64, 1.0).unwrap()] {
            let s = GffSampler::new(lat, Dispersion::Continuum);
            let a = s.sample(11);
            let b = s.sample(11);
            assert_eq!(a, b);
            assert!(a.mean().abs() < 1e-14);
            assert!(a.values.iter().all(|v| v.is_finite()));
            assert_ne!(a.values, s.sample(12).values);
        }
    }

    #[test]
    fn wrong_geometry_is_rejected() {
        let lat = Lattice::boundary(16, 1.0).unwrap();
        assert!(sample_bulk_gff(&lat, 0).is_err());
        assert!(sample_boundary_gff(&lat, 0).is_ok());
    }

    #[test]
    fn n8_variance_matches_enumeration() {
        // 63 nonzero modes k = 2π(m1, m2)/L, m_i in -3..=4.
        let a = 0.7;
        let lat = Lattice::torus(8, a).unwrap();
        let l = 8.0 * a;
        let mut sum = 0.0;
        let mut modes = 0;
        for m1 in -3i32..=4 {
            for m2 in -3i32..=4 {
                if m1 == 0 && m2 == 0 {
                    continue;
                }
                let kx = 2.0 * std::f64::consts::PI * m1 as f64 / l;
                let ky = 2.0 * std::f64::consts::PI * m2 as f64 / l;
                sum += 2.0 * std::f64::consts::PI / (kx * kx + ky * ky);
                modes += 1;
            }
        }
        assert_eq!(modes, 63);
        let expect = sum / (l * l);
        let got = coincident_variance(&lat, Dispersion::Continuum);
        assert!((got - expect).abs() < 1e-13 * expect, "{got} vs {expect}");
        let sampler = GffSampler::new(lat, Dispersion::Continuum);
        assert!((sampler.variance() - expect).abs() < 1e-13 * expect);
        assert!((sampler.covariance()[0] - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn variance_grows_by_log2_per_doubling() {
        let v = |n| coincident_variance(&Lattice::torus(n, 1.0).unwrap(), Dispersion::Continuum);
        let d = v(512) - v(256);
        assert!((d - std::f64::consts::LN_2).abs() < 0.01, "{d}");
        let vb = |n| coincident_variance(&Lattice::boundary(n, 1.0).unwrap(), Dispersion::Continuum);
        let db = vb(8192) - vb(4096);
        assert!((db - 2.0 * std::f64::consts::LN_2).abs() < 0.01, "{db}");
    }

    #[test]
    fn lattice_dispersion_has_smaller_variance_than_nothing() {
        let lat = Lattice::torus(64, 1.0).unwrap();
        let c = coincident_variance(&lat, Dispersion::Continuum);
        let d = coincident_variance(&lat, Dispersion::Lattice);
        // sin(x) < x, so the lattice spectrum is larger at every mode.
        assert!(d > c);
    }

    #[test]
    fn dump_roundtrip() {
        let lat = Lattice::torus(8, 0.25).unwrap();
        let f = sample_bulk_gff(&lat, u64::MAX - 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        f.dump(&p).unwrap();
        let back = grid_io::read_grid(&p).unwrap();
        assert_eq!(back.lattice, lat);
        assert_eq!(back.seed, f.seed);
        assert_eq!(back.values, f.values);
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 8 * (8 + 64));
    }
}
