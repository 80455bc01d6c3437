use hfprec_core::Error as CoreError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),

    #[error("{0}")]
    Usage(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Core(#[from] CoreError),
}

/// Machine-readable form written to stderr on failure.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: &'static str,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    /// 2 input, 3 numeric failure, 4 non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Usage(_) | CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) => 2,
            CliError::Core(e) => match e {
                CoreError::InvalidParameter(_) | CoreError::InvalidInput(_) => 2,
                CoreError::NonConvergence { .. } => 4,
                CoreError::NumericFailure(_)
                | CoreError::NotPositiveSemidefinite(_)
                | CoreError::DegenerateVariance { .. }
                | CoreError::DegenerateGrid(_)
                | CoreError::DesignDegeneracy(_) => 3,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Input(_) => "input",
            CliError::Usage(_) => "usage",
            CliError::Io(_) => "io",
            CliError::Csv(_) => "csv",
            CliError::Json(_) => "json",
            CliError::Core(e) => match e {
                CoreError::InvalidParameter(_) => "invalid_parameter",
                CoreError::InvalidInput(_) => "invalid_input",
                CoreError::NumericFailure(_) => "numeric_failure",
                CoreError::NonConvergence { .. } => "non_convergence",
                CoreError::NotPositiveSemidefinite(_) => "not_psd",
                CoreError::DegenerateVariance { .. } => "degenerate_variance",
                CoreError::DegenerateGrid(_) => "degenerate_grid",
                CoreError::DesignDegeneracy(_) => "design_degeneracy",
            },
        }
    }

    pub fn report(&self) -> ErrorReport {
        ErrorReport {
            error: self.kind(),
            message: self.to_string(),
            exit_code: self.exit_code(),
        }
    }
}
