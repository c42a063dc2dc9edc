use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("validation error{}: {msg}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Validation { row: Option<usize>, msg: String },

    #[error("duplicate key (unit_id={unit_id}, year={period}, sex={sex})")]
    DuplicateKey { unit_id: String, period: i32, sex: String },

    #[error("no both-sexes match for {} (unit_id, year) pair(s): {}", .0.len(), format_keys(.0))]
    MissingKeys(Vec<(String, i32)>),

    #[error("c5q0 is required by Model 1 but missing for unit_id={unit_id}, year={period}")]
    MissingC5q0 { unit_id: String, period: i32 },

    #[error("group {unit_id} has {n} observations; fitting needs more than p = {p}")]
    GroupTooSmall { unit_id: String, n: usize, p: usize },

    #[error("design cross-product is numerically singular (reciprocal condition {rcond:e})")]
    RankDeficient { rcond: f64 },

    #[error("Cholesky factorization failed after jitter retry")]
    Factorization,

    #[error("iteration {iteration}: {source}")]
    Chain {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("spec mismatch: {0}")]
    SpecMismatch(String),

    #[error("no draws to summarize")]
    EmptyTrace,

    #[error("quadrature did not converge at grid point {at}: {msg}")]
    Quadrature { at: f64, msg: String },

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_keys(keys: &[(String, i32)]) -> String {
    keys.iter()
        .map(|(u, y)| format!("({u}, {y})"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation {
            row: None,
            msg: msg.into(),
        }
    }

    pub(crate) fn at_row(row: usize, msg: impl Into<String>) -> Self {
        Error::Validation {
            row: Some(row),
            msg: msg.into(),
        }
    }

    /// Process exit code: 2 validation, 3 numerical failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::Validation { .. }
            | Error::DuplicateKey { .. }
            | Error::MissingKeys(_)
            | Error::MissingC5q0 { .. }
            | Error::GroupTooSmall { .. }
            | Error::DimensionMismatch { .. }
            | Error::SpecMismatch(_) => 2,
            Error::Domain(_)
            | Error::RankDeficient { .. }
            | Error::Factorization
            | Error::EmptyTrace
            | Error::Quadrature { .. } => 3,
            Error::Chain { source, .. } => source.exit_code(),
            Error::MissingArtifact(_) | Error::Io(_) | Error::Json(_) => 4,
            Error::Csv(e) => match e.kind() {
                csv::ErrorKind::Io(_) => 4,
                _ => 2,
            },
        }
    }
}
