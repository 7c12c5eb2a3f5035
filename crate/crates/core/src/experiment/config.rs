use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{KpzError, Result};
use crate::fractal::{self, CantorPattern, FractalMask};
use crate::gff::Dispersion;
use crate::heat::BoundaryConvention;
use crate::kpz::check_gamma;
use crate::lattice::{Geometry, Lattice};
use crate::scaling::FitOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    BulkKpz,
    BoundaryKpz,
    Correlator,
    ClassicalLimit,
    SpectralDim,
    BoxCount,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::BulkKpz => "bulk-kpz",
            Self::BoundaryKpz => "boundary-kpz",
            Self::Correlator => "correlator",
            Self::ClassicalLimit => "classical-limit",
            Self::SpectralDim => "spectral-dim",
            Self::BoxCount => "box-count",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    Exact,
    Mc,
}

/// How per-sample curves are combined. `Annealed` normalises each sample's
/// curve by its fractal mass before averaging; it is a comparison mode only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Averaging {
    #[default]
    Quenched,
    Annealed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FractalKind {
    CantorDust,
    SierpinskiCarpet,
    BoundaryCantor,
    /// Every cell, `x = 0`.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FractalConfig {
    pub kind: FractalKind,
    #[serde(default = "default_base")]
    pub base: usize,
    #[serde(default = "default_keep")]
    pub keep: Vec<usize>,
    /// Defaults to the deepest generation whose block fits in half the lattice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generations: Option<u32>,
    /// Cells per smallest square; defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<usize>,
}

fn default_base() -> usize {
    3
}

fn default_keep() -> Vec<usize> {
    vec![0, 2]
}

impl FractalConfig {
    pub fn middle_thirds(kind: FractalKind) -> Self {
        Self {
            kind,
            base: 3,
            keep: default_keep(),
            generations: None,
            scale: None,
        }
    }

    pub fn geometry(&self) -> Geometry {
        match self.kind {
            FractalKind::BoundaryCantor => Geometry::Boundary,
            _ => Geometry::Bulk,
        }
    }

    fn base(&self) -> usize {
        match self.kind {
            FractalKind::SierpinskiCarpet => 3,
            _ => self.base,
        }
    }

    /// Builds the mask. The block of side `base^g · scale` is kept within
    /// `n/2` so periodic images stay at least one block apart.
    pub fn build(&self, lattice: &Lattice) -> Result<FractalMask> {
        if self.kind == FractalKind::Full {
            return Ok(fractal::full_domain(lattice));
        }
        let base = self.base();
        let scale = self.scale.unwrap_or(1);
        if scale == 0 {
            return Err(KpzError::invalid("fractal.scale", "must be >= 1"));
        }
        let generations = match self.generations {
            Some(g) => g,
            None => {
                let mut g = 0u32;
                while (base as u64).pow(g + 1) * scale as u64 <= lattice.n() as u64 / 2 {
                    g += 1;
                }
                if g == 0 {
                    return Err(KpzError::IncompatibleLattice(format!(
                        "no generation of base {base} at scale {scale} fits in n/2 = {}",
                        lattice.n() / 2
                    )));
                }
                g
            }
        };
        match self.kind {
            FractalKind::CantorDust => {
                let p = CantorPattern::new(base, self.keep.clone())?;
                fractal::cantor_dust_scaled(lattice, &p, generations, scale)
            }
            FractalKind::BoundaryCantor => {
                let p = CantorPattern::new(base, self.keep.clone())?;
                fractal::boundary_cantor_scaled(lattice, &p, generations, scale)
            }
            FractalKind::SierpinskiCarpet => fractal::sierpinski_carpet_scaled(lattice, generations, scale),
            FractalKind::Full => unreachable!(),
        }
    }
}

/// Geometric time grid: `t_lo = lo · a²`, `√t_hi = hi · L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    #[serde(default = "default_lo")]
    pub lo: f64,
    #[serde(default = "default_hi")]
    pub hi: f64,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
}

fn default_lo() -> f64 {
    4.0
}

fn default_hi() -> f64 {
    0.125
}

fn default_ratio() -> f64 {
    2f64.powf(0.25)
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self {
            lo: default_lo(),
            hi: default_hi(),
            ratio: default_ratio(),
        }
    }
}

impl TimeGrid {
    pub fn times(&self, lattice: &Lattice) -> Result<Vec<f64>> {
        let a = lattice.spacing();
        let l = lattice.side();
        crate::scaling::geometric_times(self.lo * a * a, (self.hi * l).powi(2), self.ratio)
    }
}

/// Geometric radii of the correlator, in physical units: from `lo` cells to
/// `hi · L`. `ratio` is the step in `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialGrid {
    #[serde(default = "default_radius_lo")]
    pub lo: f64,
    #[serde(default = "default_hi")]
    pub hi: f64,
    #[serde(default = "default_radius_ratio")]
    pub ratio: f64,
}

fn default_radius_lo() -> f64 {
    4.0
}

fn default_radius_ratio() -> f64 {
    2f64.powf(0.25)
}

impl Default for RadialGrid {
    fn default() -> Self {
        Self {
            lo: default_radius_lo(),
            hi: default_hi(),
            ratio: default_radius_ratio(),
        }
    }
}

impl RadialGrid {
    pub fn radii(&self, lattice: &Lattice) -> Result<Vec<f64>> {
        crate::scaling::geometric_times(self.lo * lattice.spacing(), self.hi * lattice.side(), self.ratio)
    }
}

/// Fit settings; `window` fixes the fit range instead of searching for a plateau.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<(f64, f64)>,
    #[serde(default = "default_plateau_tolerance")]
    pub plateau_tolerance: f64,
    #[serde(default = "default_min_points")]
    pub min_points: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_resamples: usize,
}

fn default_plateau_tolerance() -> f64 {
    FitOptions::default().plateau_tolerance
}

fn default_min_points() -> usize {
    FitOptions::default().min_points
}

fn default_bootstrap() -> usize {
    FitOptions::default().bootstrap_resamples
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            window: None,
            plateau_tolerance: default_plateau_tolerance(),
            min_points: default_min_points(),
            bootstrap_resamples: default_bootstrap(),
        }
    }
}

impl FitConfig {
    pub fn options(&self, seed: u64) -> FitOptions {
        FitOptions {
            plateau_tolerance: self.plateau_tolerance,
            min_points: self.min_points,
            bootstrap_resamples: self.bootstrap_resamples,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub n: usize,
    pub gamma: f64,
    pub fractal: FractalConfig,
    pub samples: usize,
    /// Probe points per sample; 0 means every mask cell.
    #[serde(default = "default_centers")]
    pub centers: usize,
    #[serde(default)]
    pub time: TimeGrid,
    /// Radii of the correlator experiment.
    #[serde(default)]
    pub radii: RadialGrid,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default = "default_walkers")]
    pub walkers: usize,
    /// Defaults to `inverse_kpz(x, γ)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_trial: Option<f64>,
    /// Power `s` of the correlator experiment.
    #[serde(default = "default_power")]
    pub power: u32,
    #[serde(default)]
    pub convention: BoundaryConvention,
    #[serde(default)]
    pub averaging: Averaging,
    #[serde(default)]
    pub dispersion: Dispersion,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub skip_classical_gate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_centers() -> usize {
    32
}

fn default_walkers() -> usize {
    100_000
}

fn default_power() -> u32 {
    2
}

impl ExperimentConfig {
    /// Defaults for `kind` with the middle-thirds fractal of matching geometry.
    pub fn new(kind: ExperimentKind, n: usize, gamma: f64, samples: usize) -> Self {
        let fractal = match kind {
            ExperimentKind::BoundaryKpz => FractalConfig::middle_thirds(FractalKind::BoundaryCantor),
            ExperimentKind::SpectralDim | ExperimentKind::Correlator => FractalConfig::middle_thirds(FractalKind::Full),
            _ => FractalConfig::middle_thirds(FractalKind::CantorDust),
        };
        Self {
            experiment: kind,
            n,
            gamma,
            fractal,
            samples,
            centers: default_centers(),
            time: TimeGrid::default(),
            radii: RadialGrid::default(),
            seed: 0,
            backend: Backend::Exact,
            walkers: default_walkers(),
            delta_trial: None,
            power: default_power(),
            convention: BoundaryConvention::default(),
            averaging: Averaging::Quenched,
            dispersion: Dispersion::default(),
            fit: FitConfig::default(),
            skip_classical_gate: false,
            threads: None,
            output: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| KpzError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| KpzError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Geometry of the simulation. Box counting and the classical and
    /// spectral runs follow the fractal; the correlator is bulk unless its
    /// fractal is a boundary set.
    pub fn geometry(&self) -> Geometry {
        match self.experiment {
            ExperimentKind::BulkKpz => Geometry::Bulk,
            ExperimentKind::BoundaryKpz => Geometry::Boundary,
            _ => self.fractal.geometry(),
        }
    }

    /// Unit-side lattice with `n` cells per axis.
    pub fn lattice(&self) -> Result<Lattice> {
        Lattice::new(self.geometry(), self.n, 1.0 / self.n as f64)
    }

    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        let lattice = self.lattice()?;
        if self.fractal.geometry() != self.geometry() && self.fractal.kind != FractalKind::Full {
            return Err(KpzError::invalid(
                "fractal.kind",
                format!("{:?} does not live on a {} lattice", self.fractal.kind, self.geometry().as_str()),
            ));
        }
        self.fractal.build(&lattice)?;
        if self.seed > i64::MAX as u64 {
            return Err(KpzError::invalid("seed", "must fit a signed 64-bit TOML integer"));
        }
        if self.samples == 0 {
            return Err(KpzError::invalid("samples", "must be >= 1"));
        }
        if self.backend == Backend::Mc && self.walkers == 0 {
            return Err(KpzError::invalid("walkers", "must be >= 1 for the mc backend"));
        }
        if self.backend == Backend::Mc && self.centers == 0 {
            return Err(KpzError::invalid("centers", "the mc backend needs an explicit count"));
        }
        if !(self.time.lo > 0.0 && self.time.hi > 0.0 && self.time.ratio > 1.0) {
            return Err(KpzError::invalid("time", "need lo > 0, hi > 0, ratio > 1"));
        }
        self.time.times(&lattice)?;
        if self.experiment == ExperimentKind::Correlator {
            self.radii.radii(&lattice)?;
        }
        if self.experiment == ExperimentKind::ClassicalLimit && self.gamma != 0.0 {
            return Err(KpzError::invalid("gamma", "the classical-limit experiment runs at gamma = 0"));
        }
        if let Some(d) = self.delta_trial {
            if !(d.is_finite() && (-1e-12..2.0 + 1e-12).contains(&d)) {
                return Err(KpzError::invalid("delta_trial", format!("{d} outside [0, 2]")));
            }
        }
        if self.experiment == ExperimentKind::Correlator {
            if !(2..=3).contains(&self.power) {
                return Err(KpzError::invalid("power", format!("s = {} not in {{2, 3}}", self.power)));
            }
            if self.backend == Backend::Mc {
                return Err(KpzError::invalid("backend", "the correlator needs the exact backend"));
            }
        }
        if let Some((lo, hi)) = self.fit.window {
            if !(lo > 0.0 && hi > lo) {
                return Err(KpzError::invalid("fit.window", "need 0 < lo < hi"));
            }
        }
        if self.threads == Some(0) {
            return Err(KpzError::invalid("threads", "must be >= 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_toml() {
        let mut c = ExperimentConfig::new(ExperimentKind::BulkKpz, 128, 1.0, 8);
        c.delta_trial = Some(0.1 + 0.2);
        c.fit.window = Some((1e-3, 0.0123456789012345));
        c.time.ratio = 2f64.sqrt();
        c.output = Some("out/run".into());
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let c = ExperimentConfig::from_toml(
            r#"
experiment = "boundary-kpz"
n = 1024
gamma = 1.0
samples = 4
[fractal]
kind = "boundary-cantor"
"#,
        )
        .unwrap();
        assert_eq!(c.centers, 32);
        assert_eq!(c.fractal.keep, vec![0, 2]);
        assert_eq!(c.time, TimeGrid::default());
        let mask = c.fractal.build(&c.lattice().unwrap()).unwrap();
        // 3^6 = 729 > 512, so generation 5.
        assert_eq!(mask.generation(), 5);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = ExperimentConfig::new(ExperimentKind::BulkKpz, 64, 1.0, 2);
        let mut c = base.clone();
        c.n = 100;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.fractal = FractalConfig::middle_thirds(FractalKind::BoundaryCantor);
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.experiment = ExperimentKind::Correlator;
        c.power = 4;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.gamma = 2.5;
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::from_toml("experiment = \"bulk-kpz\"\nbogus = 1").is_err());
    }
}
