use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    /// A malformed input record; `row` counts data rows from 1.
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Every failed check, never a partial list.
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("Cox model has no events to fit")]
    NoEvents,

    #[error("Cox fit did not converge after {iterations} iterations (max |score| = {gradient_norm:e})")]
    CoxNonConvergence { iterations: usize, gradient_norm: f64 },

    #[error("covariance numerically degenerate (largest jitter {jitter:e} failed)")]
    DegenerateCovariance { jitter: f64 },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at(self, stage: &'static str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Whether the failure is caused by user input rather than a numerical
    /// or internal problem.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::MissingColumn(_)
            | Error::Row { .. }
            | Error::InvalidData(_)
            | Error::Config(_)
            | Error::Validation(_)
            | Error::Csv(_) => true,
            Error::Stage { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
