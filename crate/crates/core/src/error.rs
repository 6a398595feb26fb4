use thiserror::Error;

pub type Result<T, E = MedError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MedError {
    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("degenerate response: {0}")]
    DegenerateResponse(String),

    #[error("logistic fit did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("coefficient magnitude exceeded {limit} during logistic fit; separation suspected")]
    SeparationSuspected { limit: f64 },

    #[error("fitted probability within {tol} of the boundary")]
    ProbabilityBoundary { tol: f64 },

    #[error("degenerate resampling: replicate {replicate} failed {attempts} redraws ({last})")]
    DegenerateResampling {
        replicate: usize,
        attempts: usize,
        last: String,
    },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("non-numeric cell {value:?} at row {row}, column `{column}`")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("empty file")]
    EmptyFile,

    #[error("no lambda in the grid produced uniform double-bootstrap p-values")]
    GridExhausted,

    #[error("io: {0}")]
    Io(String),
}

impl MedError {
    /// Errors raised by a single fit that justify redrawing a bootstrap replicate.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            MedError::SingularDesign(_)
                | MedError::DegenerateResponse(_)
                | MedError::NonConvergence { .. }
                | MedError::SeparationSuspected { .. }
                | MedError::ProbabilityBoundary { .. }
        )
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            MedError::DegenerateResampling { .. } => 4,
            e if e.is_numerical() => 3,
            MedError::GridExhausted => 3,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for MedError {
    fn from(e: std::io::Error) -> Self {
        MedError::Io(e.to_string())
    }
}

impl From<csv::Error> for MedError {
    fn from(e: csv::Error) -> Self {
        MedError::InvalidData(e.to_string())
    }
}
