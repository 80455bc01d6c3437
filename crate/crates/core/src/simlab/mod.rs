//! Monte Carlo laboratory: Heston factors, sparse residual designs, panel
//! synthesis and the replication runner.

pub mod designs;
pub mod heston;
pub mod runner;

pub use designs::{
    chung_lu_graph, chung_lu_weights, default_w_max, design1_residual_cov, design2_from_edges,
    design2_residual_cov, edge_probability, gen_loadings, graph_precision, ResidualDesign,
};
pub use heston::{simulate_heston_factors, FactorPath, HestonParams};
pub use runner::{
    coverage_of, fit_factor_glasso, mc_run, median, replication_draw, simulate_panel, synthesize_panel, CoverageRecord,
    CoverageSummary, DesignConfig, FactorGlassoFit, McConfig, McMetrics, Method, MethodMetrics, MethodOutcome,
    MethodSummary, RepOutcome, ResidualKind, SimDraw, SimTruth,
};
