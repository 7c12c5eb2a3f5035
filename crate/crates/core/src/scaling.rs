//! Power-law exponents from ensemble-averaged decay curves.
//!
//! Curves live on a geometric time grid. The primary estimator is a weighted
//! least-squares fit of `log B` against `log t` over a scaling plateau,
//! chosen automatically from the local slopes unless a window is given.
//! Errors come from a bootstrap over ensemble members. A numerical Mellin
//! transform serves as a cross-check of the fitted exponent.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KpzError, Result};
use crate::seed::derive;

/// Geometric grid `t_k = t_lo · ratio^k` for all `t_k ≤ t_hi`.
pub fn geometric_times(t_lo: f64, t_hi: f64, ratio: f64) -> Result<Vec<f64>> {
    if !(t_lo > 0.0 && t_hi > t_lo && ratio > 1.0) {
        return Err(KpzError::invalid(
            "time grid",
            format!("need 0 < t_lo < t_hi and ratio > 1, got {t_lo}, {t_hi}, {ratio}"),
        ));
    }
    let steps = ((t_hi / t_lo).ln() / ratio.ln() + 1e-9).floor() as i32;
    Ok((0..=steps).map(|k| t_lo * ratio.powi(k)).collect())
}

/// Ensemble-averaged curve `B̄(t)` on a geometric grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub samples: usize,
    /// Per-member curves, kept for the bootstrap.
    #[serde(skip)]
    pub members: Vec<Vec<f64>>,
}

impl ScalingSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>, errors: Vec<f64>, samples: usize) -> Result<Self> {
        let s = Self {
            times,
            values,
            errors,
            samples,
            members: Vec::new(),
        };
        s.validate()?;
        Ok(s)
    }

    /// Mean and standard error over ensemble members.
    pub fn from_members(times: Vec<f64>, members: Vec<Vec<f64>>) -> Result<Self> {
        if members.is_empty() {
            return Err(KpzError::invalid("members", "empty ensemble"));
        }
        if members.iter().any(|m| m.len() != times.len()) {
            return Err(KpzError::invalid("members", "curve length differs from time grid"));
        }
        let (values, errors) = mean_and_stderr(&members, times.len());
        let mut s = Self::new(times, values, errors, members.len())?;
        s.members = members;
        Ok(s)
    }

    /// Exact curve without statistical error.
    pub fn exact(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let errors = vec![0.0; values.len()];
        Self::new(times, values, errors, 1)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let m = self.times.len();
        if self.values.len() != m || self.errors.len() != m {
            return Err(KpzError::invalid("series", "column lengths differ"));
        }
        if m >= 2 {
            let ratio = self.times[1] / self.times[0];
            for w in self.times.windows(2) {
                if !(w[1] > w[0]) {
                    return Err(KpzError::invalid("series", "times not strictly increasing"));
                }
                if ((w[1] / w[0]) / ratio - 1.0).abs() > 1e-12 {
                    return Err(KpzError::invalid("series", "time grid is not geometric"));
                }
            }
        }
        if let Some(v) = self.values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(KpzError::invalid("series", format!("non-positive value {v}")));
        }
        Ok(())
    }
}

fn mean_and_stderr(members: &[Vec<f64>], len: usize) -> (Vec<f64>, Vec<f64>) {
    let k = members.len() as f64;
    let mut mean = vec![0.0; len];
    for m in members {
        for (acc, v) in mean.iter_mut().zip(m) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= k);
    let mut err = vec![0.0; len];
    if members.len() > 1 {
        for m in members {
            for ((acc, v), mu) in err.iter_mut().zip(m).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        err.iter_mut().for_each(|v| *v = (*v / (k - 1.0) / k).sqrt());
    }
    (mean, err)
}

/// A fitted decay exponent `-d log B / d log t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingEstimate {
    pub exponent: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub r2: f64,
    pub points: usize,
}

/// Knobs of [`fit_power_law`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Maximum spread of local slopes inside an automatic window.
    pub plateau_tolerance: f64,
    pub min_points: usize,
    pub bootstrap_resamples: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            plateau_tolerance: 0.05,
            min_points: 5,
            bootstrap_resamples: 200,
            seed: 0,
        }
    }
}

/// Straight-line fit `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r2: f64,
}

/// Weighted least squares; `weights = None` means unit weights.
pub fn fit_line(xs: &[f64], ys: &[f64], weights: Option<&[f64]>) -> LineFit {
    let n = xs.len();
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let sw: f64 = (0..n).map(w).sum();
    let mx = (0..n).map(|i| w(i) * xs[i]).sum::<f64>() / sw;
    let my = (0..n).map(|i| w(i) * ys[i]).sum::<f64>() / sw;
    let sxx: f64 = (0..n).map(|i| w(i) * (xs[i] - mx).powi(2)).sum();
    let sxy: f64 = (0..n).map(|i| w(i) * (xs[i] - mx) * (ys[i] - my)).sum();
    let syy: f64 = (0..n).map(|i| w(i) * (ys[i] - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = (0..n)
        .map(|i| w(i) * (ys[i] - intercept - slope * xs[i]).powi(2))
        .sum();
    // Residual scatter sets the scale so the error is meaningful for any
    // normalisation of the weights.
    let dof = n.saturating_sub(2).max(1) as f64;
    let slope_stderr = (rss / dof / sxx).sqrt();
    let r2 = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    LineFit {
        slope,
        intercept,
        slope_stderr,
        r2,
    }
}

/// Centered differences of `log B` against `log t` (one-sided at the ends).
pub fn local_slopes(series: &ScalingSeries) -> Result<Vec<(f64, f64)>> {
    let m = series.len();
    if m < 3 {
        return Err(KpzError::InsufficientRange(format!(
            "{m} points, local slopes need 3"
        )));
    }
    let lt: Vec<f64> = series.times.iter().map(|t| t.ln()).collect();
    let lb: Vec<f64> = series.values.iter().map(|b| b.ln()).collect();
    Ok((0..m)
        .map(|i| {
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(m - 1));
            (series.times[i], (lb[hi] - lb[lo]) / (lt[hi] - lt[lo]))
        })
        .collect())
}

/// Longest run of points whose local slopes spread by less than `tol`.
fn plateau(slopes: &[(f64, f64)], tol: f64, min_points: usize) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..slopes.len() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for j in i..slopes.len() {
            lo = lo.min(slopes[j].1);
            hi = hi.max(slopes[j].1);
            if hi - lo >= tol {
                break;
            }
            let len = j - i + 1;
            let better = match best {
                None => true,
                Some((bi, bj, spread)) => {
                    let blen = bj - bi + 1;
                    len > blen || (len == blen && hi - lo < spread)
                }
            };
            if len >= min_points && better {
                best = Some((i, j, hi - lo));
            }
        }
    }
    best.map(|(i, j, _)| (i, j))
}

fn window_indices(series: &ScalingSeries, window: (f64, f64)) -> (usize, usize) {
    let tol = 1e-12 * window.1.abs();
    let lo = series
        .times
        .iter()
        .position(|&t| t >= window.0 - tol)
        .unwrap_or(series.len());
    let hi = series
        .times
        .iter()
        .rposition(|&t| t <= window.1 + tol)
        .unwrap_or(0);
    (lo, hi)
}

fn fit_range(times: &[f64], values: &[f64], errors: &[f64], i: usize, j: usize) -> LineFit {
    let xs: Vec<f64> = times[i..=j].iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = values[i..=j].iter().map(|v| v.ln()).collect();
    let rel: Vec<f64> = (i..=j).map(|k| errors[k] / values[k]).collect();
    if rel.iter().all(|&r| r > 0.0) {
        let w: Vec<f64> = rel.iter().map(|r| 1.0 / (r * r)).collect();
        fit_line(&xs, &ys, Some(&w))
    } else {
        fit_line(&xs, &ys, None)
    }
}

/// Fit `B ∝ t^{-exponent}` over `window` or over an automatic plateau.
pub fn fit_power_law(
    series: &ScalingSeries,
    window: Option<(f64, f64)>,
    options: &FitOptions,
) -> Result<ScalingEstimate> {
    let (i, j) = match window {
        Some(w) => {
            let (i, j) = window_indices(series, w);
            if j < i || j - i + 1 < options.min_points {
                return Err(KpzError::InsufficientRange(format!(
                    "window [{:e}, {:e}] holds fewer than {} points",
                    w.0, w.1, options.min_points
                )));
            }
            (i, j)
        }
        None => {
            let slopes = local_slopes(series)?;
            plateau(&slopes, options.plateau_tolerance, options.min_points)
                .ok_or(KpzError::NoPlateau { slopes })?
        }
    };
    let fit = fit_range(&series.times, &series.values, &series.errors, i, j);
    let stderr = if series.members.len() > 1 && options.bootstrap_resamples > 1 {
        bootstrap_stderr(series, i, j, options)
    } else {
        fit.slope_stderr
    };
    Ok(ScalingEstimate {
        exponent: -fit.slope,
        stderr: stderr.max(1e-15),
        window: (series.times[i], series.times[j]),
        r2: fit.r2,
        points: j - i + 1,
    })
}

fn bootstrap_stderr(series: &ScalingSeries, i: usize, j: usize, options: &FitOptions) -> f64 {
    let k = series.members.len();
    let len = series.len();
    let estimates: Vec<f64> = (0..options.bootstrap_resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(derive(options.seed, r as u64));
            let resampled: Vec<Vec<f64>> = (0..k)
                .map(|_| series.members[rng.random_range(0..k)].clone())
                .collect();
            let (mean, err) = mean_and_stderr(&resampled, len);
            if mean[i..=j].iter().any(|v| !(*v > 0.0)) {
                return f64::NAN;
            }
            -fit_range(&series.times, &mean, &err, i, j).slope
        })
        .collect();
    let good: Vec<f64> = estimates.into_iter().filter(|e| e.is_finite()).collect();
    let n = good.len() as f64;
    let mu = good.iter().sum::<f64>() / n;
    (good.iter().map(|e| (e - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// `M(s) = ∫ t^{s-1} B(t) dt` at one `s`, or `None` where the small-time
/// tail makes the integral diverge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MellinPoint {
    pub s: f64,
    pub value: Option<f64>,
}

impl MellinPoint {
    pub fn diverges(&self) -> bool {
        self.value.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MellinTransform {
    pub points: Vec<MellinPoint>,
    /// Exponent of the small-time tail; the integral diverges for `s` at or
    /// below it.
    pub threshold: f64,
}

/// Number of leading points used to extrapolate the small-time tail.
pub const MELLIN_TAIL_POINTS: usize = 5;

/// Trapezoidal Mellin transform over the measured range, with the region
/// `t < t_1` covered by the power law fitted to the first points.
pub fn mellin_transform(series: &ScalingSeries, s_grid: &[f64]) -> Result<MellinTransform> {
    let m = series.len();
    if m < MELLIN_TAIL_POINTS || series.times[m - 1] / series.times[0] < 1e3 {
        return Err(KpzError::InsufficientRange(
            "Mellin transform needs at least three decades of time".into(),
        ));
    }
    if let Some(s) = s_grid.iter().find(|s| !(**s > 0.0 && **s < 2.0)) {
        return Err(KpzError::invalid("s", format!("{s} outside (0, 2)")));
    }
    let tail = fit_range(
        &series.times,
        &series.values,
        &series.errors,
        0,
        MELLIN_TAIL_POINTS - 1,
    );
    let threshold = -tail.slope;
    let t = &series.times;
    let b = &series.values;
    let points = s_grid
        .iter()
        .map(|&s| {
            if s <= threshold {
                return MellinPoint { s, value: None };
            }
            let f = |k: usize| t[k].powf(s - 1.0) * b[k];
            let body: f64 = (1..m).map(|k| 0.5 * (f(k - 1) + f(k)) * (t[k] - t[k - 1])).sum();
            let head = tail.intercept.exp() * t[0].powf(s - threshold) / (s - threshold);
            MellinPoint {
                s,
                value: Some(head + body),
            }
        })
        .collect();
    Ok(MellinTransform { points, threshold })
}

/// Metadata carried in the header line of a series CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub gamma: f64,
    pub q: f64,
    pub x_exact: f64,
    pub n: usize,
    pub seed: u64,
}

/// Fixed-width float rendering with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write `# gamma=.. q=.. x_exact=.. n=.. seed=..` followed by
/// `t,mean,stderr,samples` rows.
pub fn write_series_csv(path: &Path, series: &ScalingSeries, meta: &SeriesMeta) -> Result<()> {
    let io = |e| KpzError::io(path, e);
    let mut file = std::fs::File::create(path).map_err(io)?;
    writeln!(
        file,
        "# gamma={} q={} x_exact={} n={} seed={}",
        fmt_f64(meta.gamma),
        fmt_f64(meta.q),
        fmt_f64(meta.x_exact),
        meta.n,
        meta.seed
    )
    .map_err(io)?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| KpzError::Parse(format!("{}: {e}", path.display()));
    w.write_record(["t", "mean", "stderr", "samples"]).map_err(csv_err)?;
    for k in 0..series.len() {
        w.write_record([
            fmt_f64(series.times[k]),
            fmt_f64(series.values[k]),
            fmt_f64(series.errors[k]),
            series.samples.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io)
}

pub fn read_series_csv(path: &Path) -> Result<(ScalingSeries, SeriesMeta)> {
    let bad = |what: &str| KpzError::Parse(format!("{}: {what}", path.display()));
    let file = std::fs::File::open(path).map_err(|e| KpzError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut header = String::new();
    reader.read_line(&mut header).map_err(|e| KpzError::io(path, e))?;
    let header = header.trim().strip_prefix('#').ok_or_else(|| bad("missing header"))?;
    let mut fields = std::collections::HashMap::new();
    for kv in header.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| bad("malformed header"))?;
        fields.insert(k, v);
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(&format!("missing {k}")));
    let float = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| bad(k)) };
    let meta = SeriesMeta {
        gamma: float("gamma")?,
        q: float("q")?,
        x_exact: float("x_exact")?,
        n: get("n")?.parse().map_err(|_| bad("n"))?,
        seed: get("seed")?.parse().map_err(|_| bad("seed"))?,
    };
    let mut rdr = csv::Reader::from_reader(reader);
    let (mut t, mut mean, mut err) = (Vec::new(), Vec::new(), Vec::new());
    let mut samples = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(&e.to_string()))?;
        let col = |i: usize| -> Result<f64> {
            rec.get(i).ok_or_else(|| bad("short row"))?.parse().map_err(|_| bad("bad float"))
        };
        t.push(col(0)?);
        mean.push(col(1)?);
        err.push(col(2)?);
        samples = rec.get(3).ok_or_else(|| bad("short row"))?.parse().map_err(|_| bad("samples"))?;
    }
    Ok((ScalingSeries::new(t, mean, err, samples)?, meta))
}
