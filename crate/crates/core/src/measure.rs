//! Wick-ordered exponential measures `:e^{qγφ}:`.
//!
//! Per cell, `w_i = cellvol · exp(qγ φ_i - (qγ)² G/2)` with `G` the exact
//! coincident variance of the field, so `E[w_i] = cellvol`. With `q = 1`
//! (bulk) or `q = 1/2` (boundary) this is the quantum area or length; with
//! `q = 1 - Δ` or `(1 - Δ̃)/2` and a fractal mask it is the quantum measure
//! of the fractal.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{KpzError, Result};
use crate::fractal::FractalMask;
use crate::gff::FieldSample;
use crate::kpz::check_gamma;
use crate::lattice::{Geometry, Lattice};
use crate::spectral::LatticeFft;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChaosParameters {
    pub gamma: f64,
    /// Multiplier of `γ` in the exponent.
    pub q: f64,
    /// Coincident variance of the field used for Wick ordering.
    pub variance: f64,
}

impl ChaosParameters {
    pub fn new(gamma: f64, q: f64, variance: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(KpzError::invalid("variance", format!("{variance} is not >= 0")));
        }
        if !q.is_finite() {
            return Err(KpzError::invalid("q", "not finite"));
        }
        Ok(Self { gamma, q, variance })
    }

    /// Quantum area (`q = 1`) or quantum length (`q = 1/2`).
    pub fn metric(gamma: f64, geometry: Geometry, variance: f64) -> Result<Self> {
        Self::new(gamma, metric_q(geometry), variance)
    }

    /// Fractal measure with trial exponent `Δ`: `q = 1 - Δ` or `(1 - Δ̃)/2`.
    pub fn fractal(gamma: f64, delta_trial: f64, geometry: Geometry, variance: f64) -> Result<Self> {
        Self::new(gamma, fractal_q(delta_trial, geometry), variance)
    }

    /// `qγ`.
    pub fn charge(&self) -> f64 {
        self.q * self.gamma
    }
}

pub fn metric_q(geometry: Geometry) -> f64 {
    match geometry {
        Geometry::Bulk => 1.0,
        Geometry::Boundary => 0.5,
    }
}

pub fn fractal_q(delta_trial: f64, geometry: Geometry) -> f64 {
    metric_q(geometry) * (1.0 - delta_trial)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumMeasure {
    pub lattice: Lattice,
    pub weights: Vec<f64>,
    pub params: ChaosParameters,
}

impl QuantumMeasure {
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// The classical measure `cellvol` per cell.
    pub fn classical(lattice: &Lattice) -> Self {
        Self {
            lattice: *lattice,
            weights: vec![lattice.cell_volume(); lattice.cells()],
            params: ChaosParameters {
                gamma: 0.0,
                q: 1.0,
                variance: 0.0,
            },
        }
    }
}

pub fn build_measure(field: &FieldSample, params: &ChaosParameters) -> Result<QuantumMeasure> {
    check_gamma(params.gamma)?;
    let lattice = field.lattice;
    let vol = lattice.cell_volume();
    let weights = if params.gamma == 0.0 {
        vec![vol; lattice.cells()]
    } else {
        let c = params.charge();
        let shift = 0.5 * c * c * params.variance;
        field
            .values
            .iter()
            .map(|&phi| vol * (c * phi - shift).exp())
            .collect::<Vec<_>>()
    };
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(KpzError::invalid("field", format!("produced weight {w}")));
    }
    Ok(QuantumMeasure {
        lattice,
        weights,
        params: *params,
    })
}

/// Keep the mask cells, rescaled by the mask's natural per-cell density.
pub fn restrict_to_mask(measure: &QuantumMeasure, mask: &FractalMask) -> Result<QuantumMeasure> {
    measure.lattice.ensure_same(mask.lattice())?;
    if mask.is_empty() {
        return Err(KpzError::EmptyMask);
    }
    let density = mask.cell_density();
    let weights = measure
        .weights
        .iter()
        .enumerate()
        .map(|(i, &w)| if mask.contains(i) { w * density } else { 0.0 })
        .collect();
    Ok(QuantumMeasure {
        lattice: measure.lattice,
        weights,
        params: measure.params,
    })
}

/// Dyadic pyramid of box masses and mask occupancy over a (shifted) lattice.
struct Pyramid {
    geometry: Geometry,
    /// `mass[j]` holds boxes of side `2^j`, row-major on a `n/2^j` grid.
    mass: Vec<Vec<f64>>,
    hit: Vec<Vec<bool>>,
}

impl Pyramid {
    fn new(measure: &QuantumMeasure, mask: &FractalMask, offset: (usize, usize)) -> Self {
        let lat = measure.lattice;
        let n = lat.n();
        let (ox, oy) = offset;
        let base_cell = |c: usize| lat.shifted(c, ox as i64, oy as i64);
        let mut mass: Vec<Vec<f64>> = vec![(0..lat.cells()).map(|c| measure.weights[base_cell(c)]).collect()];
        let mut hit: Vec<Vec<bool>> = vec![(0..lat.cells()).map(|c| mask.contains(base_cell(c))).collect()];
        let mut m = n;
        while m > 1 {
            let h = m / 2;
            let (pm, ph) = (mass.last().unwrap(), hit.last().unwrap());
            let (nm, nh): (Vec<f64>, Vec<bool>) = match lat.geometry() {
                Geometry::Boundary => (0..h)
                    .map(|i| (pm[2 * i] + pm[2 * i + 1], ph[2 * i] || ph[2 * i + 1]))
                    .unzip(),
                Geometry::Bulk => (0..h * h)
                    .map(|c| {
                        let (x, y) = (c % h, c / h);
                        let k = [
                            2 * y * m + 2 * x,
                            2 * y * m + 2 * x + 1,
                            (2 * y + 1) * m + 2 * x,
                            (2 * y + 1) * m + 2 * x + 1,
                        ];
                        (k.iter().map(|&i| pm[i]).sum::<f64>(), k.iter().any(|&i| ph[i]))
                    })
                    .unzip(),
            };
            mass.push(nm);
            hit.push(nh);
            m = h;
        }
        Self {
            geometry: lat.geometry(),
            mass,
            hit,
        }
    }

    /// Leaves meeting the mask. Unsplittable cells heavier than `delta`
    /// are an error when `clamped` is `None`, otherwise counted as one leaf
    /// each and tallied in `clamped`.
    fn count(&self, level: usize, index: usize, delta: f64, clamped: &mut Option<usize>) -> Result<usize> {
        if !self.hit[level][index] {
            return Ok(0);
        }
        if self.mass[level][index] <= delta {
            return Ok(1);
        }
        if level == 0 {
            return match clamped {
                Some(c) => {
                    *c += 1;
                    Ok(1)
                }
                None => Err(KpzError::InsufficientRange(format!(
                    "a single cell carries mass {} > delta = {delta}",
                    self.mass[0][index]
                ))),
            };
        }
        let side = self.mass.len() - 1 - level; // log2 of grid width at `level`
        let child_w = 1usize << (side + 1);
        let mut total = 0;
        match self.geometry {
            Geometry::Boundary => {
                for k in 0..2 {
                    total += self.count(level - 1, 2 * index + k, delta, clamped)?;
                }
            }
            Geometry::Bulk => {
                let w = 1usize << side;
                let (x, y) = (index % w, index / w);
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    total += self.count(level - 1, (2 * y + dy) * child_w + 2 * x + dx, delta, clamped)?;
                }
            }
        }
        Ok(total)
    }
}

/// Number of leaves of the adaptive dyadic decomposition (boxes split until
/// their quantum mass is at most `delta`) that meet the mask.
pub fn quantum_box_counting(measure: &QuantumMeasure, mask: &FractalMask, delta: f64) -> Result<usize> {
    quantum_box_counting_shifted(measure, mask, delta, (0, 0))
}

/// As [`quantum_box_counting`] with the dyadic grid translated by `offset`
/// cells.
pub fn quantum_box_counting_shifted(
    measure: &QuantumMeasure,
    mask: &FractalMask,
    delta: f64,
    offset: (usize, usize),
) -> Result<usize> {
    let pyramid = box_pyramid(measure, mask, delta, offset)?;
    pyramid.count(pyramid.mass.len() - 1, 0, delta, &mut None)
}

/// As [`quantum_box_counting_shifted`], but a single cell heavier than
/// `delta` counts as one leaf instead of failing. Returns the count and the
/// number of such cells.
pub fn quantum_box_counting_clamped(
    measure: &QuantumMeasure,
    mask: &FractalMask,
    delta: f64,
    offset: (usize, usize),
) -> Result<(usize, usize)> {
    let pyramid = box_pyramid(measure, mask, delta, offset)?;
    let mut clamped = Some(0);
    let count = pyramid.count(pyramid.mass.len() - 1, 0, delta, &mut clamped)?;
    Ok((count, clamped.unwrap_or(0)))
}

fn box_pyramid(measure: &QuantumMeasure, mask: &FractalMask, delta: f64, offset: (usize, usize)) -> Result<Pyramid> {
    measure.lattice.ensure_same(mask.lattice())?;
    if mask.is_empty() {
        return Err(KpzError::EmptyMask);
    }
    let total = measure.total_mass();
    if !(delta > 0.0 && delta < total) {
        return Err(KpzError::invalid("delta", format!("{delta} outside (0, {total})")));
    }
    Ok(Pyramid::new(measure, mask, offset))
}

/// Translation-averaged cross-correlation `C(v) = (1/N) Σ_z a(z) b(z + v)`.
pub fn cross_correlation(lattice: &Lattice, a: &[f64], b: &[f64]) -> Vec<f64> {
    let fft = LatticeFft::new(lattice);
    let mut fa: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut fb: Vec<Complex64> = b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.forward(&mut fa);
    fft.forward(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x = x.conj() * y;
    }
    fft.inverse(&mut fa);
    let norm = 1.0 / (a.len() as f64 * a.len() as f64);
    fa.iter().map(|c| c.re * norm).collect()
}

/// Average of `values` over cells at minimum-image distance in
/// `[r - 0.5, r + 0.5)` from the origin, for each integer `r` in `radii`.
pub fn radial_profile(lattice: &Lattice, values: &[f64], radii: &[usize]) -> Vec<f64> {
    let mut sums = vec![0.0; radii.len()];
    let mut counts = vec![0usize; radii.len()];
    for (c, &v) in values.iter().enumerate() {
        let d = lattice.cell_distance(0, c);
        let r = (d + 0.5).floor() as usize;
        if let Ok(k) = radii.binary_search(&r) {
            sums[k] += v;
            counts[k] += 1;
        }
    }
    sums.iter().zip(&counts).map(|(s, &c)| s / c.max(1) as f64).collect()
}

/// Ensemble accumulator of normalised pair correlations
/// `E[w₁(z) w₂(0)] / (E[w₁] E[w₂])` as a function of `|z|`.
#[derive(Debug, Clone)]
pub struct PairCorrelation {
    lattice: Lattice,
    radii: Vec<usize>,
    members: Vec<Vec<f64>>,
}

impl PairCorrelation {
    pub fn new(lattice: Lattice, radii: Vec<usize>) -> Self {
        Self {
            lattice,
            radii,
            members: Vec::new(),
        }
    }

    pub fn add(&mut self, a: &QuantumMeasure, b: &QuantumMeasure) -> Result<()> {
        self.lattice.ensure_same(&a.lattice)?;
        self.lattice.ensure_same(&b.lattice)?;
        let vol = self.lattice.cell_volume();
        let corr = cross_correlation(&self.lattice, &a.weights, &b.weights);
        let profile = radial_profile(&self.lattice, &corr, &self.radii);
        self.members.push(profile.into_iter().map(|v| v / (vol * vol)).collect());
        Ok(())
    }

    pub fn radii(&self) -> &[usize] {
        &self.radii
    }

    pub fn members(&self) -> &[Vec<f64>] {
        &self.members
    }

    /// Ensemble mean and standard error per radius.
    pub fn mean(&self) -> (Vec<f64>, Vec<f64>) {
        let k = self.members.len() as f64;
        let m = self.radii.len();
        let mean: Vec<f64> = (0..m)
            .map(|i| self.members.iter().map(|p| p[i]).sum::<f64>() / k)
            .collect();
        let err = (0..m)
            .map(|i| {
                let var = self.members.iter().map(|p| (p[i] - mean[i]).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
                (var / k).sqrt()
            })
            .collect();
        (mean, err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractal::{cantor_dust_scaled, full_domain, CantorPattern};
    use crate::gff::{coincident_variance, sample_bulk_gff, Dispersion};

    #[test]
    fn classical_limit_is_uniform() {
        let lat = Lattice::torus(16, 0.5).unwrap();
        let f = sample_bulk_gff(&lat, 3).unwrap();
        let m = build_measure(&f, &ChaosParameters::new(0.0, 1.0, 1.0).unwrap()).unwrap();
        assert!(m.weights.iter().all(|&w| w == 0.25));
        let b = Lattice::boundary(16, 0.5).unwrap();
        let fb = crate::gff::sample_boundary_gff(&b, 3).unwrap();
        let mb = build_measure(&fb, &ChaosParameters::metric(0.0, Geometry::Boundary, 1.0).unwrap()).unwrap();
        assert!(mb.weights.iter().all(|&w| w == 0.5));
    }

    #[test]
    fn rejects_supercritical_gamma() {
        assert!(ChaosParameters::new(2.0, 1.0, 1.0).is_err());
        assert!(ChaosParameters::new(-0.1, 1.0, 1.0).is_err());
        assert!(ChaosParameters::new(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn full_mask_is_identity() {
        let lat = Lattice::torus(16, 1.0).unwrap();
        let f = sample_bulk_gff(&lat, 9).unwrap();
        let v = coincident_variance(&lat, Dispersion::Continuum);
        let m = build_measure(&f, &ChaosParameters::metric(1.0, Geometry::Bulk, v).unwrap()).unwrap();
        let r = restrict_to_mask(&m, &full_domain(&lat)).unwrap();
        assert_eq!(r.weights, m.weights);
    }

    #[test]
    fn mask_mass_independent_of_generation() {
        let lat = Lattice::torus(128, 0.25).unwrap();
        let m = QuantumMeasure::classical(&lat);
        let p = CantorPattern::middle_thirds();
        let masses: Vec<f64> = [(2, 9), (3, 3), (4, 1)]
            .iter()
            .map(|&(g, s)| restrict_to_mask(&m, &cantor_dust_scaled(&lat, &p, g, s).unwrap()).unwrap().total_mass())
            .collect();
        for w in masses.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-12 * w[0], "{masses:?}");
        }
        let d: f64 = 81.0 * 0.25;
        assert!((masses[0] - d.powf(2.0 * 2f64.ln() / 3f64.ln())).abs() < 1e-10 * masses[0]);
    }

    #[test]
    fn classical_box_counting_is_dyadic() {
        let lat = Lattice::torus(32, 1.0).unwrap();
        let m = QuantumMeasure::classical(&lat);
        let full = full_domain(&lat);
        // Leaves of side 4 have mass 16.
        assert_eq!(quantum_box_counting(&m, &full, 16.0).unwrap(), 64);
        assert_eq!(quantum_box_counting(&m, &full, 20.0).unwrap(), 64);
        assert!(quantum_box_counting(&m, &full, 0.5).is_err());
        let dust = cantor_dust_scaled(&lat, &CantorPattern::middle_thirds(), 3, 1).unwrap();
        assert_eq!(quantum_box_counting(&m, &dust, 1.0).unwrap(), dust.len());
        // Cells 0, 2, 6, 8, 18, .. per axis: side-2 boxes never merge two of them.
        assert_eq!(quantum_box_counting(&m, &dust, 4.0).unwrap(), dust.len());
        assert_eq!(quantum_box_counting(&m, &dust, 16.0).unwrap(), 36);
    }

    #[test]
    fn cross_correlation_of_delta() {
        let lat = Lattice::torus(8, 1.0).unwrap();
        let mut a = vec![0.0; 64];
        a[lat.index(1, 1)] = 1.0;
        let mut b = vec![0.0; 64];
        b[lat.index(3, 2)] = 1.0;
        let c = cross_correlation(&lat, &a, &b);
        for (v, x) in c.iter().enumerate() {
            let expect = if v == lat.index(2, 1) { 1.0 / 64.0 } else { 0.0 };
            assert!((x - expect).abs() < 1e-15);
        }
    }
}
