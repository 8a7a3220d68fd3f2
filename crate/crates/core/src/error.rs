use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = FusionError> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("unknown level `{label}` in column `{column}` at row {row}")]
    UnknownLevel {
        label: String,
        column: String,
        row: usize,
    },

    #[error("response value `{value}` at row {row} is not a real number")]
    BadResponse { value: String, row: usize },

    #[error("level `{level}` of covariate `{covariate}` is never observed")]
    UnobservedLevel { covariate: String, level: String },

    #[error("design matrix is rank deficient (rank {rank} < {cols} columns)")]
    RankDeficient { rank: usize, cols: usize },

    #[error("fused design is rank deficient; offending clusters: {0}")]
    FusedRankDeficient(String),

    #[error("singular structure: fusion graph of covariate `{0}` is disconnected")]
    SingularStructure(String),

    #[error("indicator state does not match the fusion pattern")]
    PatternMismatch,

    #[error("uniformity holds only for restricted patterns")]
    UniformityRequiresRestricted,

    #[error("enumeration infeasible: {0} indicators (limit 20)")]
    EnumerationInfeasible(usize),

    #[error("degenerate residuals: error variance full conditional is improper")]
    DegenerateResiduals,

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error("sweep {sweep}: {source}")]
    Sweep {
        sweep: usize,
        #[source]
        source: Box<FusionError>,
    },

    #[error("provenance check failed: {0}")]
    Provenance(String),

    #[error("posterior propriety conditions not met: {0}")]
    Propriety(String),

    #[error("malformed draws file: {0}")]
    DrawsFormat(String),
}

impl FusionError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FusionError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        use FusionError::*;
        match self {
            Config(_) | PatternMismatch | UniformityRequiresRestricted | SingularStructure(_)
            | EnumerationInfeasible(_) | Propriety(_) => ErrorClass::Config,
            Io { .. } | Csv(_) | Json(_) | MissingColumn(_) | UnknownLevel { .. }
            | BadResponse { .. } | UnobservedLevel { .. } | RankDeficient { .. }
            | FusedRankDeficient(_) | Provenance(_) | DrawsFormat(_) => ErrorClass::Data,
            DegenerateResiduals | Factorization(_) => ErrorClass::Numerical,
            Sweep { source, .. } => source.class(),
        }
    }
}
