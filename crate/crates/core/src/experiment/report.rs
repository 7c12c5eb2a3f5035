use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use super::config::ExperimentConfig;
use crate::error::{KpzError, Result};
use crate::lattice::Geometry;
use crate::scaling::{fmt_f64, write_series_csv, ScalingEstimate, ScalingSeries, SeriesMeta};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    pub measured: f64,
    pub target: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Exponent after dividing out `log(L/r) + κ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectedExponent {
    pub exponent: f64,
    pub stderr: f64,
    pub log_constant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Singularity {
    /// `s_c` solving the singularity condition at the trial exponent.
    pub predicted: Option<f64>,
    pub fixed_point: Option<f64>,
    /// Small-time tail exponent of the numerical Mellin transform, when the
    /// series spans enough decades.
    pub mellin_threshold: Option<f64>,
}

/// Timing only; written to its own file so the summary stays byte-stable.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub wall_seconds: f64,
    pub samples: usize,
    pub samples_per_second: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub geometry: Geometry,
    /// `bulk`, or the boundary operator convention.
    pub convention: String,
    pub observable: String,
    pub x_exact: f64,
    /// Charge multiplier of the fractal (or insertion) measure.
    pub q: f64,
    pub delta_trial: f64,
    pub delta_predicted: f64,
    pub delta_measured: Option<f64>,
    pub delta_stderr: Option<f64>,
    /// Fitted exponent of the observable, with its prediction.
    pub exponent: f64,
    pub exponent_stderr: f64,
    pub exponent_target: f64,
    pub corrected_exponent: Option<CorrectedExponent>,
    pub fit: ScalingEstimate,
    pub singularity: Singularity,
    /// Fraction of counted boxes that were single cells heavier than `δ`.
    pub clamped_fraction: Option<f64>,
    pub classical_gate: Option<GateResult>,
    pub series: ScalingSeries,
    pub local_slopes: Vec<(f64, f64)>,
    #[serde(skip)]
    pub metrics: RunMetrics,
}

pub const SERIES_FILE: &str = "series.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SLOPES_FILE: &str = "local_slopes.csv";
pub const METRICS_FILE: &str = "metrics.json";

/// Pretty JSON with every float written to 17 significant digits.
struct FullPrecision<'a>(PrettyFormatter<'a>);

impl Formatter for FullPrecision<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("report serialises");
    buf.push(b'\n');
    String::from_utf8(buf).expect("JSON is UTF-8")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| KpzError::io(path, e))
}

/// Writes the series CSV, the JSON summary, the local-slope CSV and the
/// timing sidecar into `dir`, returning their paths in that order.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| KpzError::io(dir, e))?;
    let paths: Vec<PathBuf> = [SERIES_FILE, SUMMARY_FILE, SLOPES_FILE, METRICS_FILE]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    let meta = SeriesMeta {
        gamma: report.config.gamma,
        q: report.q,
        x_exact: report.x_exact,
        n: report.config.n,
        seed: report.config.seed,
    };
    write_series_csv(&paths[0], &report.series, &meta)?;
    write_file(&paths[1], &to_json(report))?;
    let mut slopes = String::from("t,slope\n");
    for (t, s) in &report.local_slopes {
        slopes.push_str(&format!("{},{}\n", fmt_f64(*t), fmt_f64(*s)));
    }
    write_file(&paths[2], &slopes)?;
    write_file(&paths[3], &to_json(&report.metrics))?;
    Ok(paths)
}

pub fn read_summary(path: &Path) -> Result<ExperimentReport> {
    let text = std::fs::read_to_string(path).map_err(|e| KpzError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| KpzError::Parse(format!("{}: {e}", path.display())))
}
