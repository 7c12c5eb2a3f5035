use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kpz_core::experiment::{self, Backend, ExperimentConfig, ExperimentKind};
use kpz_core::KpzError;

/// Lattice experiments on heat-kernel KPZ scaling in 2d quantum gravity.
#[derive(Parser)]
#[command(name = "kpz", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Heat-kernel mass of a bulk fractal in the random metric.
    BulkKpz(Overrides),
    /// Heat-kernel mass of a boundary fractal.
    BoundaryKpz(Overrides),
    /// Insertion-weighted resolvent power against distance.
    Correlator(Overrides),
    /// The fractal heat-kernel run at gamma = 0.
    ClassicalLimit(Overrides),
    /// Return density of the random-metric heat kernel.
    SpectralDim(Overrides),
    /// Quantum box counting of a fractal.
    BoxCount(Overrides),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Exact,
    Mc,
}

#[derive(Args)]
struct Overrides {
    /// TOML file mirroring the experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long)]
    walkers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    delta_trial: Option<f64>,
    #[arg(long)]
    skip_classical_gate: bool,
}

const CONFIG_ERROR: u8 = 2;
const NUMERICAL_ERROR: u8 = 3;

fn default_config(kind: ExperimentKind) -> ExperimentConfig {
    match kind {
        ExperimentKind::BoundaryKpz => ExperimentConfig::new(kind, 8192, 1.0, 256),
        ExperimentKind::ClassicalLimit => ExperimentConfig::new(kind, 256, 0.0, 8),
        _ => ExperimentConfig::new(kind, 128, 1.0, 32),
    }
}

fn build_config(kind: ExperimentKind, o: &Overrides) -> Result<ExperimentConfig, KpzError> {
    let mut c = match &o.config {
        Some(path) => {
            let c = ExperimentConfig::load(path)?;
            if c.experiment != kind {
                return Err(KpzError::Parse(format!(
                    "{} describes a {} experiment, not {}",
                    path.display(),
                    c.experiment.as_str(),
                    kind.as_str()
                )));
            }
            c
        }
        None => default_config(kind),
    };
    if let Some(v) = o.seed {
        c.seed = v;
    }
    if let Some(v) = o.gamma {
        c.gamma = v;
    }
    if let Some(v) = o.n {
        c.n = v;
    }
    if let Some(v) = o.samples {
        c.samples = v;
    }
    if let Some(v) = o.backend {
        c.backend = match v {
            BackendArg::Exact => Backend::Exact,
            BackendArg::Mc => Backend::Mc,
        };
    }
    if let Some(v) = o.walkers {
        c.walkers = v;
    }
    if let Some(v) = &o.out {
        c.output = Some(v.clone());
    }
    if let Some(v) = o.threads {
        c.threads = Some(v);
    }
    if let Some(v) = o.delta_trial {
        c.delta_trial = Some(v);
    }
    c.skip_classical_gate |= o.skip_classical_gate;
    c.validate()?;
    Ok(c)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, overrides) = match &cli.command {
        Command::BulkKpz(o) => (ExperimentKind::BulkKpz, o),
        Command::BoundaryKpz(o) => (ExperimentKind::BoundaryKpz, o),
        Command::Correlator(o) => (ExperimentKind::Correlator, o),
        Command::ClassicalLimit(o) => (ExperimentKind::ClassicalLimit, o),
        Command::SpectralDim(o) => (ExperimentKind::SpectralDim, o),
        Command::BoxCount(o) => (ExperimentKind::BoxCount, o),
    };
    let config = match build_config(kind, overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("kpz: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    let out = config
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(kind.as_str()));
    let result = experiment::run(&config).and_then(|r| experiment::emit_report(&r, &out).map(|_| r));
    match result {
        Ok(r) => {
            print!("{}: exponent {:.4} ± {:.4} (target {:.4})", kind.as_str(), r.exponent, r.exponent_stderr, r.exponent_target);
            if let Some(d) = r.delta_measured {
                print!(", delta {:.4} ± {:.4} (predicted {:.4})", d, r.delta_stderr.unwrap_or(0.0), r.delta_predicted);
            }
            if let Some(c) = r.corrected_exponent {
                print!(", log-corrected exponent {:.4} ± {:.4}", c.exponent, c.stderr);
            }
            println!();
            println!("wrote {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("kpz: {e}");
            if e.is_numerical() {
                ExitCode::from(NUMERICAL_ERROR)
            } else {
                ExitCode::from(CONFIG_ERROR)
            }
        }
    }
}
