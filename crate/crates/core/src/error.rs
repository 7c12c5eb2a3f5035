use std::path::PathBuf;

/// Errors raised by the simulation layers.
#[derive(Debug, thiserror::Error)]
pub enum KpzError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("incompatible lattice: {0}")]
    IncompatibleLattice(String),

    #[error("lattices do not match: {0}")]
    MismatchedLattice(String),

    #[error("fractal mask is empty")]
    EmptyMask,

    #[error("lattice of {cells} cells exceeds the exact backend limit of {limit}")]
    BackendSizeExceeded { cells: usize, limit: usize },

    #[error("no scaling plateau found (local slopes: {slopes:?})")]
    NoPlateau { slopes: Vec<(f64, f64)> },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("quadratic for {what} has complex roots (discriminant {discriminant:e})")]
    ComplexRoots {
        what: &'static str,
        discriminant: f64,
    },

    #[error("classical gate failed: measured {measured} against {target} ± {tolerance}")]
    ClassicalGate { measured: f64, target: f64, tolerance: f64 },

    #[error("insufficient range: {0}")]
    InsufficientRange(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<KpzError>,
    },
}

impl KpzError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Self::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Tag an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Self::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through stage tags.
    pub fn root(&self) -> &KpzError {
        match self {
            Self::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Self::NoPlateau { .. }
                | Self::NonConvergence { .. }
                | Self::ComplexRoots { .. }
                | Self::InsufficientRange(_)
                | Self::ClassicalGate { .. }
        )
    }
}

pub type Result<T, E = KpzError> = std::result::Result<T, E>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
