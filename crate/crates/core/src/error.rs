use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// The solver ran out of iterations. The best iterate is attached so
    /// callers that can live with an approximate answer still get one.
    #[error("no convergence after {iters} iterations (kkt residual {kkt_residual:.3e})")]
    NonConvergence {
        iters: usize,
        kkt_residual: f64,
        solution: Box<crate::glasso::GlassoSolution>,
    },

    #[error("matrix is not positive semidefinite: {0}")]
    NotPositiveSemidefinite(String),

    #[error("degenerate variance estimate {variance:.3e} for entry ({i}, {j})")]
    DegenerateVariance { i: usize, j: usize, variance: f64 },

    #[error("degenerate lambda grid: {0}")]
    DegenerateGrid(String),

    #[error("degenerate simulation design: {0}")]
    DesignDegeneracy(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::NumericFailure(msg.into())
    }
}
