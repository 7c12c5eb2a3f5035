//! Acceptance suite: one test per criterion, each writing a one-line
//! verdict to stderr (uncaptured, so it shows for passing tests too).

use std::io::Write;

use kpz_core::experiment::{self, Backend, ExperimentConfig, ExperimentKind, ExperimentReport, FractalConfig, FractalKind};
use kpz_core::gff::{Dispersion, GffSampler};
use kpz_core::heat::{self, ExactConfig};
use kpz_core::kpz::{fixed_point, forward_kpz, inverse_kpz, predicted_singularity, replica_exponent, wick_pair_exponent};
use kpz_core::lattice::{Geometry, Lattice};
use kpz_core::measure::{self, ChaosParameters, QuantumMeasure};
use kpz_core::scaling::fit_line;
use kpz_core::seed::derive;

fn verdict(criterion: u32, pass: bool, detail: &str) {
    let line = format!(
        "criterion {criterion:>2}: {} {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    std::io::stderr().write_all(line.as_bytes()).unwrap();
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

fn uniform(seed: u64, i: u64) -> f64 {
    (derive(seed, i) >> 11) as f64 / (1u64 << 53) as f64
}

fn run(config: &ExperimentConfig) -> ExperimentReport {
    experiment::run(config).unwrap_or_else(|e| panic!("{} failed: {e}", config.experiment.as_str()))
}

fn config(kind: ExperimentKind, n: usize, gamma: f64, samples: usize, fractal: FractalKind) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(kind, n, gamma, samples);
    c.fractal = FractalConfig::middle_thirds(fractal);
    c.seed = 20_240_601;
    c
}

#[test]
fn criterion_01_analytic_layer() {
    let mut worst_round_trip = 0.0f64;
    for i in 0..1000 {
        let x = uniform(1, 2 * i);
        let gamma = 1.99 * uniform(1, 2 * i + 1);
        let back = forward_kpz(inverse_kpz(x, gamma).unwrap(), gamma);
        worst_round_trip = worst_round_trip.max((back - x).abs());
    }
    let mut worst_fixed = 0.0f64;
    for &gamma in &[0.0, 0.5, 1.0, 1.5, (8.0f64 / 3.0).sqrt()] {
        for &x in &[0.1, 0.36907024642854258, 0.7] {
            let delta = inverse_kpz(x, gamma).unwrap();
            for (regime, factor) in [(Geometry::Bulk, 1.0), (Geometry::Boundary, 2.0)] {
                let s_c = predicted_singularity(x, delta, gamma, regime).unwrap();
                worst_fixed = worst_fixed.max((factor * s_c - delta).abs());
                worst_fixed = worst_fixed.max((fixed_point(x, gamma, regime).unwrap() - delta).abs());
            }
        }
    }
    // Charges {1 - Δ, 1, ..., 1} (s - 1 unit charges), all pairs contracted.
    let mut worst_counting = 0.0f64;
    for &s in &[2usize, 3] {
        for &(delta, gamma) in &[(0.5, (8.0f64 / 3.0).sqrt()), (0.3, 1.0), (2.0, 1.0), (0.43, 0.7)] {
            let mut charges = vec![1.0 - delta];
            charges.extend(std::iter::repeat(1.0).take(s - 1));
            let mut sum = 2.0 * s as f64 - 2.0;
            for i in 0..charges.len() {
                for j in i + 1..charges.len() {
                    sum += wick_pair_exponent(charges[i], charges[j], gamma, Geometry::Bulk);
                }
            }
            let expected = replica_exponent(s as f64, delta, gamma, Geometry::Bulk);
            worst_counting = worst_counting.max((sum - expected).abs());
        }
    }
    let pass = worst_round_trip <= 1e-12 && worst_fixed <= 1e-10 && worst_counting <= 1e-12;
    verdict(
        1,
        pass,
        &format!(
            "round trip {worst_round_trip:.1e} (<= 1e-12), fixed point {worst_fixed:.1e} (<= 1e-10), power counting {worst_counting:.1e}"
        ),
    );
    assert!(pass);
}

/// Slope of the translation-averaged empirical covariance against `log r`
/// over log-spaced radii from 2 cells to `n/8`.
fn covariance_slope(lattice: Lattice, samples: u64) -> f64 {
    let sampler = GffSampler::new(lattice, Dispersion::Continuum);
    let n = lattice.n();
    let mut radii: Vec<usize> = (0..)
        .map(|k| (2.0 * 2f64.powf(k as f64 / 2.0)).round() as usize)
        .take_while(|&r| r <= n / 8)
        .collect();
    radii.dedup();
    let mut profile = vec![0.0; radii.len()];
    for s in 0..samples {
        let field = sampler.sample(derive(77, s));
        let corr = measure::cross_correlation(&lattice, &field.values, &field.values);
        let p = measure::radial_profile(&lattice, &corr, &radii);
        for (acc, v) in profile.iter_mut().zip(p) {
            *acc += v / samples as f64;
        }
    }
    let xs: Vec<f64> = radii.iter().map(|&r| (r as f64 * lattice.spacing()).ln()).collect();
    fit_line(&xs, &profile, None).slope
}

#[test]
fn criterion_02_field_normalization() {
    let bulk = covariance_slope(Lattice::torus(256, 1.0 / 256.0).unwrap(), 200);
    let boundary = covariance_slope(Lattice::boundary(4096, 1.0 / 4096.0).unwrap(), 500);
    let pass = within(bulk, -1.0, 0.05) && within(boundary, -2.0, 0.1);
    verdict(
        2,
        pass,
        &format!("bulk slope {bulk:.4} (-1.00 ± 0.05), boundary slope {boundary:.4} (-2.0 ± 0.1)"),
    );
    assert!(pass);
}

/// 99% quantile of χ² with `k` degrees of freedom (Wilson–Hilferty).
fn chi2_quantile_99(k: f64) -> f64 {
    let z = 2.326_347_874_040_841;
    let h = 2.0 / (9.0 * k);
    k * (1.0 - h + z * h.sqrt()).powi(3)
}

#[test]
fn criterion_03_classical_heat_kernel() {
    let mut ok = true;
    let mut parts = Vec::new();

    for (geometry, n, target) in [(Geometry::Bulk, 128, 1.0), (Geometry::Boundary, 4096, 0.5)] {
        let fractal = match geometry {
            Geometry::Bulk => FractalKind::Full,
            Geometry::Boundary => FractalKind::BoundaryCantor,
        };
        let mut c = config(ExperimentKind::SpectralDim, n, 0.0, 2, fractal);
        c.centers = 8;
        let r = run(&c);
        ok &= within(r.exponent, target, 0.02);
        parts.push(format!("{} return exponent {:.4} ({target} ± 0.02)", geometry.as_str(), r.exponent));
    }

    // K(z0, z0; 1) against 1/4π; images are O(e^{-L²/4}) at L = 12.8.
    let lat = Lattice::torus(256, 0.05).unwrap();
    let op = heat::build_operator(&QuantumMeasure::classical(&lat)).unwrap();
    let k = heat::evolve_exact(&op, 0, 1.0).unwrap().density[0];
    let rel = (k * 4.0 * std::f64::consts::PI - 1.0).abs();
    ok &= rel < 1e-3;
    parts.push(format!("K(z0,z0;1)·4π - 1 = {rel:.1e} (< 1e-3)"));

    // Walker histogram against the exact kernel: Pearson χ² at 1%.
    let lat = Lattice::torus(16, 1.0 / 16.0).unwrap();
    let op = heat::build_operator(&QuantumMeasure::classical(&lat)).unwrap();
    let t = 8.0 * lat.spacing().powi(2);
    let walkers = 200_000;
    let exact = heat::evolve_exact(&op, 0, t).unwrap();
    let mc = heat::evolve_mc(&op, 0, t, walkers, 5).unwrap();
    let w = op.masses();
    let (mut chi2, mut bins, mut worst_sigma) = (0.0, 0usize, 0.0f64);
    for i in 0..lat.cells() {
        let p = exact.density[i] * w[i];
        let expected = p * walkers as f64;
        if expected >= 5.0 {
            let observed = mc.density[i] * w[i] * walkers as f64;
            chi2 += (observed - expected).powi(2) / expected;
            bins += 1;
            let sigma = (expected * (1.0 - p)).sqrt();
            worst_sigma = worst_sigma.max((observed - expected).abs() / sigma);
        }
    }
    let limit = chi2_quantile_99((bins - 1) as f64);
    ok &= chi2 < limit;
    parts.push(format!("mc χ² {chi2:.1} on {} dof (< {limit:.1}), max |z| {worst_sigma:.2}", bins - 1));

    // Fractal heat-kernel mass from both backends, each time within 3σ.
    let lat = Lattice::torus(32, 1.0 / 32.0).unwrap();
    let mask = FractalConfig::middle_thirds(FractalKind::CantorDust).build(&lat).unwrap();
    let flat = QuantumMeasure::classical(&lat);
    let params = ChaosParameters::fractal(0.0, mask.x_exact(), Geometry::Bulk, 0.0).unwrap();
    let fractal = measure::restrict_to_mask(&measure::build_measure(&GffSampler::new(lat, Dispersion::Continuum).sample(1), &params).unwrap(), &mask).unwrap();
    let op = heat::build_operator(&flat).unwrap();
    let obs: Vec<f64> = fractal.weights.iter().zip(op.masses()).map(|(m, w)| m / w).collect();
    let times = [4.0 / 1024.0, 16.0 / 1024.0, 64.0 / 1024.0];
    let z0 = mask.cells()[0];
    let exact = heat::propagate(&op, &obs, &times, &ExactConfig::default()).unwrap();
    let mc = heat::mc_expectation(&op, z0, &times, &obs, 100_000, 9).unwrap();
    let worst = exact
        .iter()
        .zip(&mc)
        .map(|(u, (m, se))| (u[z0] - m).abs() / se)
        .fold(0.0, f64::max);
    ok &= worst < 3.0;
    parts.push(format!("B(t) mc vs exact max {worst:.2}σ (< 3)"));

    verdict(3, ok, &parts.join("; "));
    assert!(ok);
}

#[test]
fn criterion_04_classical_fractal_scaling() {
    let dust = run(&config(ExperimentKind::ClassicalLimit, 256, 0.0, 4, FractalKind::CantorDust));
    let carpet = run(&config(ExperimentKind::ClassicalLimit, 256, 0.0, 4, FractalKind::SierpinskiCarpet));
    let boundary = run(&config(ExperimentKind::ClassicalLimit, 8192, 0.0, 4, FractalKind::BoundaryCantor));
    let pass = within(dust.exponent, 0.369, 0.05)
        && within(carpet.exponent, 0.054, 0.05)
        && within(boundary.exponent, 0.1845, 0.02);
    verdict(
        4,
        pass,
        &format!(
            "dust {:.4} (0.369 ± 0.05), carpet {:.4} (0.054 ± 0.05), boundary Cantor {:.4} (0.1845 ± 0.02)",
            dust.exponent, carpet.exponent, boundary.exponent
        ),
    );
    assert!(pass);
}

#[test]
#[ignore = "needs ~7e12 walker jumps (about 190 core-hours at the measured 1e7 jumps/s); run with --ignored on a many-core machine"]
fn criterion_05_bulk_kpz_mc() {
    let mut c = config(ExperimentKind::BulkKpz, 512, 1.0, 128, FractalKind::CantorDust);
    c.backend = Backend::Mc;
    c.centers = 32;
    c.walkers = 100_000;
    let r = run(&c);
    let delta = r.delta_measured.unwrap();
    let pass = within(delta, 0.430, 0.10);
    verdict(
        5,
        pass,
        &format!("Δ = {delta:.4} ± {:.4} (0.430 ± 0.10)", r.delta_stderr.unwrap()),
    );
    assert!(pass);
}

#[test]
fn criterion_06_boundary_kpz() {
    let r = run(&config(ExperimentKind::BoundaryKpz, 8192, 1.0, 256, FractalKind::BoundaryCantor));
    let delta = r.delta_measured.unwrap();
    let pass = within(delta, 0.430, 0.10);
    verdict(
        6,
        pass,
        &format!("Δ̃ = {delta:.4} ± {:.4} (0.430 ± 0.10)", r.delta_stderr.unwrap()),
    );
    assert!(pass);
}

#[test]
fn criterion_07_replica_exponent() {
    let mut c = config(ExperimentKind::Correlator, 128, (8.0f64 / 3.0).sqrt(), 200, FractalKind::Full);
    c.delta_trial = Some(0.5);
    c.power = 2;
    c.centers = 256;
    // The γ = 0 control below is the gate, reported on its own line.
    c.skip_classical_gate = true;
    let quantum = run(&c);
    let mut flat = c.clone();
    flat.gamma = 0.0;
    flat.samples = 2;
    let control = run(&flat);
    let corrected = control.corrected_exponent.unwrap();
    let pass = within(quantum.exponent, 2.0 / 3.0, 0.10) && within(corrected.exponent, 2.0, 0.05);
    verdict(
        7,
        pass,
        &format!(
            "γ²=8/3 exponent {:.4} ± {:.4} (0.67 ± 0.10); γ=0 exponent {:.4} raw, {:.4} after log(L/r)+κ (2.0 ± 0.05)",
            quantum.exponent, quantum.exponent_stderr, control.exponent, corrected.exponent
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_spectral_dimension() {
    let mut bulk = config(ExperimentKind::SpectralDim, 64, 1.0, 16, FractalKind::Full);
    bulk.centers = 8;
    let bulk = run(&bulk);
    let mut boundary = config(ExperimentKind::SpectralDim, 4096, 1.0, 32, FractalKind::BoundaryCantor);
    boundary.centers = 8;
    let boundary = run(&boundary);
    let pass = within(bulk.exponent, 1.0, 0.1) && within(boundary.exponent, 0.5, 0.05);
    verdict(
        8,
        pass,
        &format!(
            "bulk {:.4} ± {:.4} (1.0 ± 0.1), boundary {:.4} ± {:.4} (0.5 ± 0.05)",
            bulk.exponent, bulk.exponent_stderr, boundary.exponent, boundary.exponent_stderr
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_box_counting_consistency() {
    // Same lattice, fractal, γ and seeds for both estimators.
    let heat = run(&config(ExperimentKind::BoundaryKpz, 8192, 1.0, 64, FractalKind::BoundaryCantor));
    let boxes = run(&config(ExperimentKind::BoxCount, 8192, 1.0, 64, FractalKind::BoundaryCantor));
    let (a, sa) = (heat.delta_measured.unwrap(), heat.delta_stderr.unwrap());
    let (b, sb) = (boxes.delta_measured.unwrap(), boxes.delta_stderr.unwrap());
    let combined = (sa * sa + sb * sb).sqrt();
    let pass = (a - b).abs() <= 2.0 * combined;
    verdict(
        9,
        pass,
        &format!(
            "boundary Cantor γ=1: heat kernel Δ̃ {a:.4} ± {sa:.4}, box counting Δ̃ {b:.4} ± {sb:.4}, |diff| {:.4} (<= 2σ = {:.4})",
            (a - b).abs(),
            2.0 * combined
        ),
    );
    assert!(pass);
}

fn emitted(config: &ExperimentConfig) -> Vec<Vec<u8>> {
    let dir = tempfile::tempdir().unwrap();
    let report = run(config);
    let paths = experiment::emit_report(&report, dir.path()).unwrap();
    paths
        .iter()
        .filter(|p| !p.ends_with(experiment::METRICS_FILE))
        .map(|p| std::fs::read(p).unwrap())
        .collect()
}

#[test]
fn criterion_10_determinism() {
    let mut exact = config(ExperimentKind::BulkKpz, 32, 1.0, 4, FractalKind::CantorDust);
    exact.threads = Some(1);
    exact.skip_classical_gate = true;
    // Too small a lattice for a plateau; fit the whole grid.
    let times = exact.time.times(&exact.lattice().unwrap()).unwrap();
    exact.fit.window = Some((times[0], times[times.len() - 1]));
    let mut mc = exact.clone();
    mc.backend = Backend::Mc;
    mc.walkers = 2000;
    mc.centers = 4;
    let mut boxes = config(ExperimentKind::BoxCount, 1024, 1.0, 2, FractalKind::BoundaryCantor);
    boxes.threads = Some(1);
    let mut all_equal = true;
    for c in [exact, mc, boxes] {
        let first = emitted(&c);
        all_equal &= first == emitted(&c);
        // The summary echoes the thread count; the data files must not
        // depend on it.
        let mut other = c.clone();
        other.threads = Some(3);
        let wide = emitted(&other);
        all_equal &= first[0] == wide[0] && first[2] == wide[2];
    }
    verdict(
        10,
        all_equal,
        "series, summary and local-slope files byte-identical across reruns; data files identical across thread counts",
    );
    assert!(all_equal);
}
