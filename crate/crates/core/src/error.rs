use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("raw volume {path}: expected {expected} bytes, found {actual}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid layout descriptor {0:?}")]
    Layout(String),

    #[error("phantom surfaces out of order at column (x={x}, y={y}): {detail}")]
    PhantomOrdering { x: usize, y: usize, detail: String },

    #[error("invalid phantom spec: {0}")]
    Phantom(String),

    #[error("z extent {nz} is not divisible by {factor}")]
    NotDivisible { nz: usize, factor: usize },

    #[error("surface at level {0} cannot be refined further")]
    FinestLevel(u8),

    #[error("lattice mismatch: {0}")]
    LatticeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "infeasible constraints: surface {surface} at column (x={x}, y={y}) emptied by {constraint}"
    )]
    Infeasible {
        surface: usize,
        x: usize,
        y: usize,
        constraint: String,
    },

    #[error("cost {value} cannot be quantized into 32 bits at scale {scale}")]
    CostOutOfRange { value: f64, scale: f64 },

    #[error("thin plate spline system is singular: {0}")]
    SingularSpline(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("surface csv: {0}")]
    Csv(String),

    #[error("statistics: {0}")]
    Statistics(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error once stage tags are peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
