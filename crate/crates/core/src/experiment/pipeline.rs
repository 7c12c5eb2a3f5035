use std::time::Instant;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use super::config::{Averaging, Backend, ExperimentConfig, ExperimentKind, FractalKind};
use super::report::{CorrectedExponent, ExperimentReport, GateResult, RunMetrics, Singularity};
use crate::error::{KpzError, Result, StageExt};
use crate::fractal::FractalMask;
use crate::gff::{FieldSample, GffSampler};
use crate::heat::{self, ExactConfig};
use crate::kpz;
use crate::lattice::{Geometry, Lattice};
use crate::measure::{self, ChaosParameters, QuantumMeasure};
use crate::scaling::{self, ScalingEstimate, ScalingSeries};
use crate::seed::{derive, SampleSeeds};

/// Box-counting grid: one quantum size `(s·a)^d` per dyadic box side `s`
/// from `4·scale` to `D/2` (block side `D`), averaged over this many random
/// grid offsets. Finer grids see the flat counts as a staircase.
const BOX_OFFSETS: usize = 16;

/// Samples used by the γ = 0 gate run (the flat runs only differ in their
/// probe centers).
const GATE_SAMPLES: usize = 8;

/// `κ` in `D(r) = (r²/8π)(log(L/r) + κ)` for `(-Δ)^{-2}` on the unit square
/// torus: `κ = 1 - log(2π η(i)²)` with `η(i) = Γ(1/4) / (2π^{3/4})`.
pub fn torus_log_constant() -> f64 {
    const GAMMA_QUARTER: f64 = 3.625_609_908_221_908;
    let pi = std::f64::consts::PI;
    let eta = GAMMA_QUARTER / (2.0 * pi.powf(0.75));
    1.0 - (2.0 * pi * eta * eta).ln()
}

/// Runs the configured experiment, preceded by the γ = 0 gate when `γ > 0`.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| KpzError::invalid("threads", e.to_string()))?
            .install(|| run_in_pool(config)),
        None => run_in_pool(config),
    }
}

fn run_in_pool(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let gate = if config.gamma > 0.0 && !config.skip_classical_gate {
        let mut classical = config.clone();
        classical.gamma = 0.0;
        classical.samples = config.samples.min(GATE_SAMPLES);
        // The flat operator is diagonalised exactly at any size.
        classical.backend = Backend::Exact;
        let report = measure(&classical).stage("classical gate")?;
        match classical_check(&report) {
            Some(g) if !g.passed => {
                return Err(KpzError::ClassicalGate {
                    measured: g.measured,
                    target: g.target,
                    tolerance: g.tolerance,
                })
            }
            other => other,
        }
    } else {
        None
    };
    let mut report = measure(config)?;
    report.classical_gate = if config.gamma == 0.0 { classical_check(&report) } else { gate };
    Ok(report)
}

/// The quantity the γ = 0 run must reproduce, if the experiment has one.
pub fn classical_check(report: &ExperimentReport) -> Option<GateResult> {
    let geometry = report.geometry;
    let c = &report.config;
    let (measured, target, tolerance) = match c.experiment {
        ExperimentKind::BulkKpz | ExperimentKind::BoundaryKpz | ExperimentKind::ClassicalLimit => match geometry {
            Geometry::Bulk => (report.exponent, report.x_exact, 0.05),
            Geometry::Boundary => (report.exponent, report.x_exact / 2.0, 0.02),
        },
        ExperimentKind::BoxCount => (report.delta_measured?, report.x_exact, 0.05),
        ExperimentKind::SpectralDim => (report.exponent, geometry.dimension() as f64 / 2.0, 0.02),
        ExperimentKind::Correlator => (report.corrected_exponent.as_ref()?.exponent, 2.0, 0.05),
    };
    Some(GateResult {
        measured,
        target,
        tolerance,
        passed: (measured - target).abs() <= tolerance,
    })
}

/// Everything a sample needs, shared read-only across the pool.
struct Setup {
    lattice: Lattice,
    mask: FractalMask,
    sampler: GffSampler,
    variance: f64,
    x_exact: f64,
    delta_trial: f64,
    times: Vec<f64>,
}

impl Setup {
    fn new(config: &ExperimentConfig) -> Result<Self> {
        let lattice = config.lattice()?;
        let mask = config.fractal.build(&lattice).stage("fractal")?;
        let sampler = GffSampler::new(lattice, config.dispersion);
        let variance = sampler.variance();
        let x_exact = mask.x_exact();
        let delta_trial = match config.delta_trial {
            Some(d) => d,
            None => kpz::inverse_kpz(x_exact, config.gamma)?,
        };
        let times = match config.experiment {
            ExperimentKind::Correlator => config.radii.radii(&lattice)?,
            ExperimentKind::BoxCount => box_sizes(&lattice, &mask)?,
            _ => config.time.times(&lattice)?,
        };
        Ok(Self {
            lattice,
            mask,
            sampler,
            variance,
            x_exact,
            delta_trial,
            times,
        })
    }

    fn field(&self, seeds: &SampleSeeds) -> FieldSample {
        self.sampler.sample(seeds.field())
    }

    fn metric(&self, field: &FieldSample, gamma: f64) -> Result<QuantumMeasure> {
        let params = ChaosParameters::metric(gamma, self.lattice.geometry(), self.variance)?;
        measure::build_measure(field, &params).stage("metric measure")
    }
}

/// Per-sample output: the curve and, for box counting, the clamped fraction.
struct SampleResult {
    curve: Vec<f64>,
    clamped: f64,
}

/// Runs the configured experiment once, without the gate.
pub fn measure(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    let setup = Setup::new(config)?;
    let results: Vec<SampleResult> = (0..config.samples)
        .into_par_iter()
        .map(|i| {
            let seeds = SampleSeeds::new(config.seed, i as u64);
            match config.experiment {
                ExperimentKind::BulkKpz | ExperimentKind::BoundaryKpz | ExperimentKind::ClassicalLimit => {
                    heat_kernel_sample(config, &setup, &seeds)
                }
                ExperimentKind::SpectralDim => return_density_sample(config, &setup, &seeds),
                ExperimentKind::Correlator => correlator_sample(config, &setup, &seeds),
                ExperimentKind::BoxCount => box_count_sample(config, &setup, &seeds),
            }
        })
        .collect::<Result<_>>()?;
    let elapsed = start.elapsed().as_secs_f64();
    let clamped = results.iter().map(|r| r.clamped).sum::<f64>() / results.len() as f64;
    let members: Vec<Vec<f64>> = results.into_iter().map(|r| r.curve).collect();
    if let Some((k, _)) = mean_curve(&members).iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(KpzError::InsufficientRange(format!(
            "ensemble mean is not positive at grid point {:e}",
            setup.times[k]
        )));
    }
    let series = ScalingSeries::from_members(setup.times.clone(), members).stage("series")?;
    let options = config.fit.options(derive(config.seed, u64::MAX));
    let window = config.fit.window.or(match config.experiment {
        // Counts and correlators have no plateau structure worth searching.
        ExperimentKind::BoxCount | ExperimentKind::Correlator => Some((series.times[0], series.times[series.len() - 1])),
        _ => None,
    });
    let fit = scaling::fit_power_law(&series, window, &options).stage("fit")?;
    let local_slopes = scaling::local_slopes(&series)?;
    let mut report = assemble(config, &setup, series, fit, local_slopes)?;
    if config.experiment == ExperimentKind::BoxCount {
        report.clamped_fraction = Some(clamped);
    }
    if config.experiment == ExperimentKind::Correlator && config.power == 2 && setup.lattice.geometry() == Geometry::Bulk {
        report.corrected_exponent = Some(log_corrected_exponent(&report.series, &setup.lattice, window, &options)?);
    }
    report.metrics = RunMetrics {
        wall_seconds: elapsed,
        samples: config.samples,
        samples_per_second: config.samples as f64 / elapsed.max(1e-9),
        threads: rayon::current_num_threads(),
    };
    Ok(report)
}

fn mean_curve(members: &[Vec<f64>]) -> Vec<f64> {
    let k = members.len() as f64;
    let mut mean = vec![0.0; members[0].len()];
    for m in members {
        for (acc, v) in mean.iter_mut().zip(m) {
            *acc += v / k;
        }
    }
    mean
}

fn assemble(
    config: &ExperimentConfig,
    setup: &Setup,
    series: ScalingSeries,
    fit: ScalingEstimate,
    local_slopes: Vec<(f64, f64)>,
) -> Result<ExperimentReport> {
    let geometry = setup.lattice.geometry();
    let gamma = config.gamma;
    let x = setup.x_exact;
    let delta_predicted = kpz::inverse_kpz(x, gamma)?;
    let boundary = geometry == Geometry::Boundary;
    let (exponent, exponent_target, delta_measured, delta_stderr, observable) = match config.experiment {
        ExperimentKind::BulkKpz | ExperimentKind::BoundaryKpz | ExperimentKind::ClassicalLimit => {
            let k = if boundary { 2.0 } else { 1.0 };
            (
                fit.exponent,
                delta_predicted / k,
                Some(k * fit.exponent),
                Some(k * fit.stderr),
                "heat-kernel-mass",
            )
        }
        ExperimentKind::SpectralDim => (
            fit.exponent,
            geometry.dimension() as f64 / 2.0,
            None,
            None,
            "return-density",
        ),
        ExperimentKind::Correlator => (
            -fit.exponent,
            kpz::replica_exponent(config.power as f64, setup.delta_trial, gamma, geometry),
            None,
            None,
            "correlator-difference",
        ),
        ExperimentKind::BoxCount => (
            fit.exponent,
            1.0 - delta_predicted,
            Some(1.0 - fit.exponent),
            Some(fit.stderr),
            "box-count",
        ),
    };
    let mellin_threshold = if observable == "heat-kernel-mass" {
        let grid: Vec<f64> = (1..40).map(|k| k as f64 * 0.05).collect();
        scaling::mellin_transform(&series, &grid).ok().map(|m| m.threshold)
    } else {
        None
    };
    let singularity = Singularity {
        predicted: kpz::predicted_singularity(x, setup.delta_trial, gamma, geometry).ok(),
        fixed_point: kpz::fixed_point(x, gamma, geometry).ok(),
        mellin_threshold,
    };
    Ok(ExperimentReport {
        config: config.clone(),
        geometry,
        convention: match geometry {
            Geometry::Bulk => "bulk".to_string(),
            Geometry::Boundary => config.convention.as_str().to_string(),
        },
        observable: observable.to_string(),
        x_exact: x,
        q: match config.experiment {
            ExperimentKind::SpectralDim | ExperimentKind::BoxCount => measure::metric_q(geometry),
            _ => measure::fractal_q(setup.delta_trial, geometry),
        },
        delta_trial: setup.delta_trial,
        delta_predicted,
        delta_measured,
        delta_stderr,
        exponent,
        exponent_stderr: fit.stderr,
        exponent_target,
        corrected_exponent: None,
        fit,
        singularity,
        clamped_fraction: None,
        classical_gate: None,
        series,
        local_slopes,
        metrics: RunMetrics::default(),
    })
}

/// Growth exponent of `D(r) / (log(L/r) + κ)`, which removes the
/// logarithm of the `s = 2` propagator on the torus.
fn log_corrected_exponent(
    series: &ScalingSeries,
    lattice: &Lattice,
    window: Option<(f64, f64)>,
    options: &scaling::FitOptions,
) -> Result<CorrectedExponent> {
    let kappa = torus_log_constant();
    let l = lattice.side();
    let factor: Vec<f64> = series.times.iter().map(|r| (l / r).ln() + kappa).collect();
    let scale = |v: &[f64]| -> Vec<f64> { v.iter().zip(&factor).map(|(v, f)| v / f).collect() };
    let mut corrected = ScalingSeries::new(
        series.times.clone(),
        scale(&series.values),
        scale(&series.errors),
        series.samples,
    )?;
    corrected.members = series.members.iter().map(|m| scale(m)).collect();
    let fit = scaling::fit_power_law(&corrected, window, options)?;
    Ok(CorrectedExponent {
        exponent: -fit.exponent,
        stderr: fit.stderr,
        log_constant: kappa,
    })
}

/// `k` distinct cells drawn uniformly from `cells`, or all of them for `k = 0`.
fn uniform_centers(cells: &[usize], k: usize, seed: u64) -> Vec<usize> {
    if k == 0 || k >= cells.len() {
        return cells.to_vec();
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, cells.len(), k)
        .into_iter()
        .map(|i| cells[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// `k` cells drawn with probability proportional to `weights`.
fn weighted_centers(weights: &[f64], k: usize, seed: u64) -> Result<Vec<usize>> {
    let dist = WeightedIndex::new(weights).map_err(|e| KpzError::invalid("metric", e.to_string()))?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    Ok((0..k.max(1)).map(|_| dist.sample(&mut rng)).collect())
}

/// `B(t) = mean over centers z0 of ∫ dμ_X(z) K(z, z0; t)`, evaluated
/// through the adjoint `[e^{tL} (μ_X / W)](z0)`.
fn heat_kernel_sample(config: &ExperimentConfig, setup: &Setup, seeds: &SampleSeeds) -> Result<SampleResult> {
    let gamma = config.gamma;
    let field = setup.field(seeds);
    let metric = setup.metric(&field, gamma)?;
    let params = ChaosParameters::fractal(gamma, setup.delta_trial, setup.lattice.geometry(), setup.variance)?;
    let fractal = measure::build_measure(&field, &params)
        .and_then(|m| measure::restrict_to_mask(&m, &setup.mask))
        .stage("fractal measure")?;
    let op = heat::build_operator_with(&metric, config.convention).stage("operator")?;
    let observable: Vec<f64> = fractal.weights.iter().zip(op.masses()).map(|(m, w)| m / w).collect();
    let centers = uniform_centers(setup.mask.cells(), config.centers, seeds.centers());
    let mut curve = vec![0.0; setup.times.len()];
    match config.backend {
        Backend::Exact => {
            let evolved = heat::propagate(&op, &observable, &setup.times, &ExactConfig::default()).stage("propagate")?;
            for (b, u) in curve.iter_mut().zip(&evolved) {
                *b = centers.iter().map(|&z| u[z]).sum::<f64>() / centers.len() as f64;
            }
        }
        Backend::Mc => {
            for (c, &z0) in centers.iter().enumerate() {
                let est = heat::mc_expectation(
                    &op,
                    z0,
                    &setup.times,
                    &observable,
                    config.walkers,
                    derive(seeds.walkers(), c as u64),
                )
                .stage("walkers")?;
                for (b, (mean, _)) in curve.iter_mut().zip(&est) {
                    *b += mean / centers.len() as f64;
                }
            }
        }
    }
    if config.averaging == Averaging::Annealed {
        let mass = fractal.total_mass();
        curve.iter_mut().for_each(|b| *b /= mass);
    }
    Ok(SampleResult { curve, clamped: 0.0 })
}

/// Return density `K(z0, z0; t)` averaged over centers drawn from the
/// quantum measure, i.e. `Tr e^{tL} / Σ W`.
fn return_density_sample(config: &ExperimentConfig, setup: &Setup, seeds: &SampleSeeds) -> Result<SampleResult> {
    let field = setup.field(seeds);
    let metric = setup.metric(&field, config.gamma)?;
    let op = heat::build_operator_with(&metric, config.convention).stage("operator")?;
    let centers = weighted_centers(op.masses(), config.centers, seeds.centers())?;
    let m = op.lattice().cells();
    let mut curve = vec![0.0; setup.times.len()];
    for (c, &z0) in centers.iter().enumerate() {
        let mut f = vec![0.0; m];
        f[z0] = 1.0 / op.masses()[z0];
        let values: Vec<f64> = match config.backend {
            Backend::Exact => heat::propagate(&op, &f, &setup.times, &ExactConfig::default())
                .stage("propagate")?
                .iter()
                .map(|u| u[z0])
                .collect(),
            Backend::Mc => heat::mc_expectation(
                &op,
                z0,
                &setup.times,
                &f,
                config.walkers,
                derive(seeds.walkers(), c as u64),
            )
            .stage("walkers")?
            .iter()
            .map(|(mean, _)| *mean)
            .collect(),
        };
        for (b, v) in curve.iter_mut().zip(values) {
            *b += v / centers.len() as f64;
        }
    }
    Ok(SampleResult { curve, clamped: 0.0 })
}

/// Signed minimum-image offsets of all cells, grouped into the shells
/// `r_k ρ^{-1/2} ≤ |v| < r_k ρ^{1/2}` around each radius.
fn shells(lattice: &Lattice, radii_cells: &[f64], ratio: f64) -> Result<Vec<Vec<(i64, i64)>>> {
    let half = ratio.sqrt();
    let n = lattice.n() as i64;
    let signed = |u: usize| if u as i64 > n / 2 { u as i64 - n } else { u as i64 };
    let mut out = vec![Vec::new(); radii_cells.len()];
    for c in 0..lattice.cells() {
        let (x, y) = lattice.coords(c);
        let (dx, dy) = (signed(x), signed(y));
        let d = ((dx * dx + dy * dy) as f64).sqrt();
        if let Some(k) = radii_cells.iter().position(|&r| d >= r / half && d < r * half) {
            out[k].push((dx, dy));
        }
    }
    if let Some(k) = out.iter().position(|s| s.is_empty()) {
        return Err(KpzError::InsufficientRange(format!(
            "no cells at radius {} cells; use a coarser radial ratio or a larger lo",
            radii_cells[k]
        )));
    }
    Ok(out)
}

/// `D(r) = C(0) - C(r)` with `C(r)` the shell average of
/// `:e^{qγφ(z)}: ⟨z|(-L)^{-s}|z0⟩` at `|z - z0| = r`.
fn correlator_sample(config: &ExperimentConfig, setup: &Setup, seeds: &SampleSeeds) -> Result<SampleResult> {
    let lat = &setup.lattice;
    let field = setup.field(seeds);
    let metric = setup.metric(&field, config.gamma)?;
    let params = ChaosParameters::fractal(config.gamma, setup.delta_trial, lat.geometry(), setup.variance)?;
    let weight = measure::build_measure(&field, &params).stage("insertion measure")?;
    let density: Vec<f64> = weight.weights.iter().map(|w| w / lat.cell_volume()).collect();
    let op = heat::build_operator(&metric).stage("operator")?;
    let radii_cells: Vec<f64> = setup.times.iter().map(|r| r / lat.spacing()).collect();
    let shells = shells(lat, &radii_cells, config.radii.ratio)?;
    let centers = uniform_centers(setup.mask.cells(), config.centers, seeds.centers());
    let mut curve = vec![0.0; setup.times.len()];
    for &z0 in &centers {
        let g = heat::resolvent_power(&op, z0, config.power).stage("resolvent")?;
        let c0 = density[z0] * g[z0];
        for (d, shell) in curve.iter_mut().zip(&shells) {
            let c: f64 = shell
                .iter()
                .map(|&(dx, dy)| {
                    let z = lat.shifted(z0, dx, dy);
                    density[z] * g[z]
                })
                .sum::<f64>()
                / shell.len() as f64;
            *d += (c0 - c) / centers.len() as f64;
        }
    }
    Ok(SampleResult { curve, clamped: 0.0 })
}

fn box_sizes(lattice: &Lattice, mask: &FractalMask) -> Result<Vec<f64>> {
    let a = lattice.spacing();
    let d = lattice.geometry().dimension() as i32;
    let block = (mask.base() as f64).powi(mask.generation() as i32) * mask.scale() as f64;
    let lo = 4.0 * mask.scale() as f64 * a;
    let hi = block * a / 2.0;
    scaling::geometric_times(lo.powi(d), hi.powi(d), 2f64.powi(d))
}

/// Number of quantum boxes of size `δ` covering the fractal, averaged
/// over random grid offsets.
fn box_count_sample(config: &ExperimentConfig, setup: &Setup, seeds: &SampleSeeds) -> Result<SampleResult> {
    if config.fractal.kind == FractalKind::Full {
        return Err(KpzError::invalid("fractal.kind", "box counting needs a proper fractal"));
    }
    let field = setup.field(seeds);
    let metric = setup.metric(&field, config.gamma)?;
    let n = setup.lattice.n() as u64;
    let boundary = setup.lattice.geometry() == Geometry::Boundary;
    let offsets: Vec<(usize, usize)> = (0..BOX_OFFSETS as u64)
        .map(|k| {
            let h = derive(seeds.centers(), k);
            let y = if boundary { 0 } else { ((h >> 32) % n) as usize };
            ((h % n) as usize, y)
        })
        .collect();
    let mut curve = Vec::with_capacity(setup.times.len());
    let (mut clamped, mut total) = (0usize, 0usize);
    for &delta in &setup.times {
        let mut sum = 0usize;
        for &o in &offsets {
            let (count, heavy) = measure::quantum_box_counting_clamped(&metric, &setup.mask, delta, o).stage("box counting")?;
            sum += count;
            clamped += heavy;
            total += count;
        }
        curve.push(sum as f64 / offsets.len() as f64);
    }
    Ok(SampleResult {
        curve,
        clamped: clamped as f64 / total.max(1) as f64,
    })
}
