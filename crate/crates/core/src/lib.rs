//! Weighted graphical Lasso for high-frequency data: realized covariance,
//! factor-adjusted precision estimation, de-biased inference and a Monte
//! Carlo laboratory.

pub mod debias;
pub mod error;
pub mod factor;
pub mod glasso;
pub mod matcore;
pub mod normal;
pub mod quadcov;
pub mod simlab;
pub mod tuning;

pub use debias::{
    AvarContext, CiEntry, DebiasedEstimate, InferenceReport, SupStatistic,
};
pub use error::{Error, Result};
pub use factor::FactorFit;
pub use glasso::{GlassoSolution, SolveOptions};
pub use matcore::{SparsityStats, SymMatrix};
pub use quadcov::{IncrementSet, PathPanel};
pub use simlab::{DesignConfig, McConfig, McMetrics, Method, ResidualKind, SimTruth};
pub use tuning::{BicTrace, GridOptions, LambdaGrid, LambdaMaxScale, Penalty};
