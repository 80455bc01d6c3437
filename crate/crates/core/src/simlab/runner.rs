//! Panel synthesis and the Monte Carlo replication runner.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::designs::{
    design1_residual_cov, design2_residual_cov, gen_loadings, ResidualDesign, DEFAULT_LOADING_RANGES,
};
use super::heston::{simulate_heston_factors, FactorPath, HestonParams};
use crate::debias::{build_avar_context, debias_solution, standard_errors};
use crate::error::{Error, Result};
use crate::factor::{self, clip_to_psd, woodbury_precision, FactorFit};
use crate::glasso::{GlassoSolution, SolveOptions};
use crate::matcore::{inverse_or_pinv, operator_norm, spectral_norm_sym, sparsity_stats, SparsityStats, SymMatrix};
use crate::normal::normal_quantile;
use crate::quadcov::{realized_cov, PathPanel};
use crate::tuning::{lambda_grid, select, GridOptions, Penalty};

/// Condition number above which the realized covariance is inverted with the
/// Moore–Penrose inverse.
pub const RC_MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResidualKind {
    /// Ten equicorrelated blocks.
    Design1,
    /// Chung–Lu graph precision.
    Design2 {
        alpha: f64,
        /// Read `I + D − A` as the covariance rather than the precision.
        #[serde(default)]
        literal_covariance: bool,
    },
}

impl ResidualKind {
    pub fn design2() -> Self {
        ResidualKind::Design2 {
            alpha: 2.5,
            literal_covariance: false,
        }
    }

    fn draw<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Result<ResidualDesign> {
        match *self {
            ResidualKind::Design1 => design1_residual_cov(d, rng),
            ResidualKind::Design2 {
                alpha,
                literal_covariance,
            } => design2_residual_cov(d, alpha, literal_covariance, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    pub residual: ResidualKind,
    pub heston: HestonParams,
    /// Euler steps per observation interval.
    pub substeps: usize,
    /// One uniform range per factor.
    pub loading_ranges: Vec<(f64, f64)>,
}

impl DesignConfig {
    pub fn new(residual: ResidualKind) -> Self {
        Self {
            residual,
            heston: HestonParams::default(),
            substeps: 10,
            loading_ranges: DEFAULT_LOADING_RANGES.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.heston.validate()?;
        if self.loading_ranges.len() != self.heston.r() {
            return Err(Error::param("need one loading range per factor"));
        }
        if self.substeps == 0 {
            return Err(Error::param("substeps must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimTruth {
    pub beta: DMatrix<f64>,
    pub sigma_z_true: SymMatrix,
    pub theta_z_true: SymMatrix,
    pub support_true: SparsityStats,
    /// Fine-grid realized quadratic variation of the factors.
    pub sigma_x_true: SymMatrix,
    /// `βΣ_Xβᵀ + Σ_Z`
    pub sigma_y_true: SymMatrix,
}

impl SimTruth {
    /// `Σ_Y⁻¹` through the Woodbury identity.
    pub fn precision_y(&self) -> Result<SymMatrix> {
        woodbury_precision(&self.theta_z_true, &self.beta, &self.sigma_x_true)
    }
}

#[derive(Debug, Clone)]
pub struct SimDraw {
    pub panel_y: PathPanel,
    pub panel_x: PathPanel,
    pub truth: SimTruth,
}

/// `Y = βX + Z` on the observation grid, with `ΔZ_h = L g_h/√n`.
pub fn synthesize_panel<R: Rng + ?Sized>(
    beta: &DMatrix<f64>,
    residual: &ResidualDesign,
    factors: &FactorPath,
    rng: &mut R,
) -> Result<(PathPanel, SimTruth)> {
    let d = residual.sigma_z.dim();
    let x = factors.panel.values();
    let n = factors.panel.n();
    if beta.nrows() != d || beta.ncols() != x.ncols() {
        return Err(Error::param("loading matrix does not match the design"));
    }
    let scale = 1.0 / (n as f64).sqrt();
    let mut z = DMatrix::zeros(n + 1, d);
    let mut g = vec![0.0; d];
    for h in 1..=n {
        for gi in g.iter_mut() {
            *gi = StandardNormal.sample(rng);
        }
        for i in 0..d {
            let mut acc = 0.0;
            for (k, gk) in g.iter().enumerate().take(i + 1) {
                acc += residual.chol[(i, k)] * gk;
            }
            z[(h, i)] = z[(h - 1, i)] + acc * scale;
        }
    }
    let y = x * beta.transpose() + z;
    let sigma_y_true = SymMatrix::symmetrize(beta * factors.fine_qv.as_matrix() * beta.transpose())
        .add(&residual.sigma_z);
    let truth = SimTruth {
        beta: beta.clone(),
        sigma_z_true: residual.sigma_z.clone(),
        theta_z_true: residual.theta_z.clone(),
        support_true: residual.support.clone(),
        sigma_x_true: factors.fine_qv.clone(),
        sigma_y_true,
    };
    Ok((PathPanel::new(y)?, truth))
}

/// One draw of the full design: residual structure, loadings, factor path and
/// asset panel, in that order from `rng`.
pub fn simulate_panel<R: Rng + ?Sized>(design: &DesignConfig, d: usize, n: usize, rng: &mut R) -> Result<SimDraw> {
    design.validate()?;
    if n == 0 {
        return Err(Error::param("n must be positive"));
    }
    let residual = design.residual.draw(d, rng)?;
    let beta = gen_loadings(d, &design.loading_ranges, rng)?;
    let factors = simulate_heston_factors(&design.heston, n, design.substeps, rng)?;
    let (panel_y, truth) = synthesize_panel(&beta, &residual, &factors, rng)?;
    Ok(SimDraw {
        panel_y,
        panel_x: factors.panel,
        truth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "rc")]
    Rc,
    #[serde(rename = "glasso")]
    Glasso,
    #[serde(rename = "wglasso")]
    WGlasso,
    #[serde(rename = "f-glasso")]
    FGlasso,
    #[serde(rename = "f-wglasso")]
    FWGlasso,
    /// Factor model with the residual covariance thresholded on the true
    /// support.
    #[serde(rename = "f-thr")]
    FThr,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Rc,
        Method::Glasso,
        Method::WGlasso,
        Method::FGlasso,
        Method::FWGlasso,
        Method::FThr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Rc => "rc",
            Method::Glasso => "glasso",
            Method::WGlasso => "wglasso",
            Method::FGlasso => "f-glasso",
            Method::FWGlasso => "f-wglasso",
            Method::FThr => "f-thr",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::param(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub design: DesignConfig,
    pub d: usize,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub grid: GridOptions,
    pub tol: f64,
    pub max_outer_iters: usize,
    /// Confidence levels for the f-wglasso coverage study; empty disables it.
    pub coverage_levels: Vec<f64>,
}

impl McConfig {
    pub fn new(design: DesignConfig, d: usize, n: usize, reps: usize, seed: u64) -> Self {
        Self {
            design,
            d,
            n,
            reps,
            seed,
            methods: Method::ALL.to_vec(),
            grid: GridOptions::default(),
            tol: SolveOptions::default().tol,
            max_outer_iters: SolveOptions::default().max_outer_iters,
            coverage_levels: vec![0.95, 0.99],
        }
    }

    fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.tol,
            max_outer_iters: self.max_outer_iters,
            ..SolveOptions::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        if self.reps == 0 {
            return Err(Error::param("reps must be at least 1"));
        }
        if self.d < 2 || self.n == 0 {
            return Err(Error::param("need d >= 2 and n >= 1"));
        }
        if self.coverage_levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return Err(Error::param("coverage levels must lie in (0, 1)"));
        }
        self.solve_options().validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    /// `⦀Σ̂_Y⁻¹ − Σ_Y⁻¹⦀_∞`
    pub prec_err_inf: f64,
    /// `⦀Σ̂_Y⁻¹ − Σ_Y⁻¹⦀_2`
    pub prec_err_2: f64,
    /// `‖Σ̂_Y − Σ_Y‖_max`
    pub cov_err_max: f64,
    /// `⦀Θ̂_Z − Θ_Z⦀_2` for the factor graphical Lasso methods.
    pub theta_z_err_2: Option<f64>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub metrics: Option<MethodMetrics>,
    pub error: Option<String>,
}

/// Fractions of covered entries `i ≤ j` of `Θ_Z`, split by whether the true
/// entry is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageRecord {
    pub level: f64,
    pub zero: Option<f64>,
    pub nonzero: Option<f64>,
    pub n_zero: usize,
    pub n_nonzero: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub rep: usize,
    pub methods: Vec<MethodOutcome>,
    pub coverage: Vec<CoverageRecord>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub successes: usize,
    pub failures: usize,
    pub mean_prec_err_inf: f64,
    pub mean_prec_err_2: f64,
    pub mean_cov_err_max: f64,
    pub median_prec_err_inf: f64,
    pub median_prec_err_2: f64,
    pub median_cov_err_max: f64,
    pub mean_theta_z_err_2: Option<f64>,
    pub median_theta_z_err_2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub level: f64,
    /// Mean over replications of the per-replication covered fraction.
    pub mean_zero: Option<f64>,
    pub mean_nonzero: Option<f64>,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McMetrics {
    pub config: McConfig,
    pub replications: Vec<RepOutcome>,
    pub methods: Vec<MethodSummary>,
    pub coverage: Vec<CoverageSummary>,
}

/// Selected factor graphical Lasso fit.
#[derive(Debug, Clone)]
pub struct FactorGlassoFit {
    pub fit: FactorFit,
    pub sigma_z_psd: SymMatrix,
    pub solution: GlassoSolution,
}

/// Factor fit, then BIC-selected graphical Lasso on the clipped residual
/// covariance.
pub fn fit_factor_glasso(
    panel_y: &PathPanel,
    panel_x: &PathPanel,
    grid: &GridOptions,
    opts: &SolveOptions,
    penalty: Penalty,
) -> Result<FactorGlassoFit> {
    let fit = factor::fit(panel_y, panel_x)?;
    let sigma_z_psd = clip_to_psd(&fit.sigma_z)?;
    let g = lambda_grid(&sigma_z_psd, fit.n, grid)?;
    let (_, solution) = select(&sigma_z_psd, fit.n, &g, opts, penalty)?;
    Ok(FactorGlassoFit {
        fit,
        sigma_z_psd,
        solution,
    })
}

struct Estimate {
    sigma_y: SymMatrix,
    precision_y: SymMatrix,
    theta_z: Option<SymMatrix>,
    lambda: Option<f64>,
}

fn estimate(
    method: Method,
    draw: &SimDraw,
    sigma_y_hat: &SymMatrix,
    factor_fit: &Result<FactorFit>,
    cfg: &McConfig,
    cache: &mut Option<FactorGlassoFit>,
) -> Result<Estimate> {
    let opts = cfg.solve_options();
    let n = draw.panel_y.n();
    let plain = |penalty| -> Result<Estimate> {
        let g = lambda_grid(sigma_y_hat, n, &cfg.grid)?;
        let (_, sol) = select(sigma_y_hat, n, &g, &opts, penalty)?;
        Ok(Estimate {
            sigma_y: sol.w.clone(),
            precision_y: sol.theta.clone(),
            theta_z: None,
            lambda: Some(sol.lambda),
        })
    };
    let fitted = || -> Result<&FactorFit> { factor_fit.as_ref().map_err(|e| Error::numeric(e.to_string())) };
    let with_factors = |penalty, cache: &mut Option<FactorGlassoFit>| -> Result<Estimate> {
        let fit = fitted()?;
        let sigma_z_psd = clip_to_psd(&fit.sigma_z)?;
        let g = lambda_grid(&sigma_z_psd, n, &cfg.grid)?;
        let (_, sol) = select(&sigma_z_psd, n, &g, &opts, penalty)?;
        let est = Estimate {
            sigma_y: factor::assemble_sigma_y(fit, &sol)?,
            precision_y: factor::precision_of_sigma_y(fit, &sol)?,
            theta_z: Some(sol.theta.clone()),
            lambda: Some(sol.lambda),
        };
        if penalty == Penalty::Weighted {
            *cache = Some(FactorGlassoFit {
                fit: fit.clone(),
                sigma_z_psd,
                solution: sol,
            });
        }
        Ok(est)
    };
    match method {
        Method::Rc => {
            let (inv, _) = inverse_or_pinv(sigma_y_hat.as_matrix(), RC_MAX_CONDITION)?;
            Ok(Estimate {
                sigma_y: sigma_y_hat.clone(),
                precision_y: SymMatrix::symmetrize(inv),
                theta_z: None,
                lambda: None,
            })
        }
        Method::Glasso => plain(Penalty::Unweighted),
        Method::WGlasso => plain(Penalty::Weighted),
        Method::FGlasso => with_factors(Penalty::Unweighted, cache),
        Method::FWGlasso => with_factors(Penalty::Weighted, cache),
        Method::FThr => {
            let fit = fitted()?;
            let mask = sparsity_stats(&draw.truth.sigma_z_true, 0.0);
            let d = fit.d();
            let masked = SymMatrix::from_fn(d, |i, j| {
                if i == j || mask.contains(i, j) {
                    fit.sigma_z[(i, j)]
                } else {
                    0.0
                }
            });
            let sigma_y = fit.systematic_cov().add(&masked);
            let (inv, _) = inverse_or_pinv(sigma_y.as_matrix(), RC_MAX_CONDITION)?;
            Ok(Estimate {
                sigma_y,
                precision_y: SymMatrix::symmetrize(inv),
                theta_z: None,
                lambda: None,
            })
        }
    }
}

/// Entrywise coverage of the de-biased f-wglasso estimate over `i ≤ j`.
pub fn coverage_of(
    draw: &SimDraw,
    fg: &FactorGlassoFit,
    levels: &[f64],
) -> Result<Vec<CoverageRecord>> {
    let d = fg.fit.d();
    let est = debias_solution(&fg.solution, &fg.sigma_z_psd)?;
    let ctx = build_avar_context(
        &draw.panel_y,
        Some((&draw.panel_x, &fg.fit.beta_hat)),
        &fg.solution.theta,
    )?;
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|j| (0..=j).map(move |i| (i, j))).collect();
    let ses = standard_errors(&ctx, &pairs)?;
    let truth = &draw.truth.theta_z_true;
    Ok(levels
        .iter()
        .map(|&level| {
            let z = normal_quantile(0.5 * (1.0 + level));
            let (mut cz, mut nz, mut cn, mut nn) = (0usize, 0usize, 0usize, 0usize);
            for (&(i, j), &se) in pairs.iter().zip(&ses) {
                let covered = (est.t_matrix[(i, j)] - truth[(i, j)]).abs() <= z * se;
                if truth[(i, j)] == 0.0 {
                    nz += 1;
                    cz += covered as usize;
                } else {
                    nn += 1;
                    cn += covered as usize;
                }
            }
            let frac = |c: usize, t: usize| (t > 0).then(|| c as f64 / t as f64);
            CoverageRecord {
                level,
                zero: frac(cz, nz),
                nonzero: frac(cn, nn),
                n_zero: nz,
                n_nonzero: nn,
            }
        })
        .collect())
}

/// The simulated panels and truth of replication `rep`, exactly as
/// `mc_run` sees them.
pub fn replication_draw(cfg: &McConfig, rep: usize) -> Result<SimDraw> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(rep as u64);
    simulate_panel(&cfg.design, cfg.d, cfg.n, &mut rng)
}

fn run_replication(cfg: &McConfig, rep: usize) -> RepOutcome {
    let draw = match replication_draw(cfg, rep) {
        Ok(d) => d,
        Err(e) => {
            return RepOutcome {
                rep,
                methods: Vec::new(),
                coverage: Vec::new(),
                error: Some(e.to_string()),
            }
        }
    };
    let sigma_y_hat = realized_cov(&draw.panel_y);
    let factor_fit = factor::fit(&draw.panel_y, &draw.panel_x);
    let truth_prec = draw.truth.precision_y();
    let mut cache = None;
    let mut methods = Vec::with_capacity(cfg.methods.len());
    for &m in &cfg.methods {
        let res = truth_prec.as_ref().map_err(|e| Error::numeric(e.to_string())).and_then(|tp| {
            let est = estimate(m, &draw, &sigma_y_hat, &factor_fit, cfg, &mut cache)?;
            let diff = est.precision_y.sub(tp);
            let theta_z_err_2 = match &est.theta_z {
                Some(t) => Some(spectral_norm_sym(&t.sub(&draw.truth.theta_z_true))?),
                None => None,
            };
            Ok(MethodMetrics {
                prec_err_inf: operator_norm(diff.as_matrix(), f64::INFINITY)?,
                prec_err_2: spectral_norm_sym(&diff)?,
                cov_err_max: (est.sigma_y.as_matrix() - draw.truth.sigma_y_true.as_matrix()).amax(),
                theta_z_err_2,
                lambda: est.lambda,
            })
        });
        methods.push(match res {
            Ok(metrics) => MethodOutcome {
                method: m,
                metrics: Some(metrics),
                error: None,
            },
            Err(e) => MethodOutcome {
                method: m,
                metrics: None,
                error: Some(e.to_string()),
            },
        });
    }

    let mut error = None;
    let mut coverage = Vec::new();
    if !cfg.coverage_levels.is_empty() {
        let fg = match cache {
            Some(fg) => Ok(fg),
            None => fit_factor_glasso(&draw.panel_y, &draw.panel_x, &cfg.grid, &cfg.solve_options(), Penalty::Weighted),
        };
        match fg.and_then(|fg| coverage_of(&draw, &fg, &cfg.coverage_levels)) {
            Ok(c) => coverage = c,
            Err(e) => error = Some(format!("coverage: {e}")),
        }
    }
    RepOutcome {
        rep,
        methods,
        coverage,
        error,
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

/// Runs `reps` independent replications in parallel. Replication `k` draws
/// from ChaCha stream `k` of `seed`, so the output depends only on the
/// configuration.
pub fn mc_run(cfg: &McConfig) -> Result<McMetrics> {
    cfg.validate()?;
    let replications: Vec<RepOutcome> = (0..cfg.reps).into_par_iter().map(|k| run_replication(cfg, k)).collect();

    let methods = cfg
        .methods
        .iter()
        .map(|&m| {
            let ok: Vec<MethodMetrics> = replications
                .iter()
                .filter_map(|r| r.methods.iter().find(|o| o.method == m).and_then(|o| o.metrics))
                .collect();
            let col = |f: fn(&MethodMetrics) -> f64| ok.iter().map(f).collect::<Vec<_>>();
            let tz: Vec<f64> = ok.iter().filter_map(|x| x.theta_z_err_2).collect();
            MethodSummary {
                method: m,
                successes: ok.len(),
                failures: cfg.reps - ok.len(),
                mean_prec_err_inf: mean(&col(|x| x.prec_err_inf)),
                mean_prec_err_2: mean(&col(|x| x.prec_err_2)),
                mean_cov_err_max: mean(&col(|x| x.cov_err_max)),
                median_prec_err_inf: median(&col(|x| x.prec_err_inf)),
                median_prec_err_2: median(&col(|x| x.prec_err_2)),
                median_cov_err_max: median(&col(|x| x.cov_err_max)),
                mean_theta_z_err_2: (!tz.is_empty()).then(|| mean(&tz)),
                median_theta_z_err_2: (!tz.is_empty()).then(|| median(&tz)),
            }
        })
        .collect();

    let coverage = cfg
        .coverage_levels
        .iter()
        .enumerate()
        .map(|(idx, &level)| {
            let recs: Vec<&CoverageRecord> = replications.iter().filter_map(|r| r.coverage.get(idx)).collect();
            let zero: Vec<f64> = recs.iter().filter_map(|c| c.zero).collect();
            let nonzero: Vec<f64> = recs.iter().filter_map(|c| c.nonzero).collect();
            CoverageSummary {
                level,
                mean_zero: (!zero.is_empty()).then(|| mean(&zero)),
                mean_nonzero: (!nonzero.is_empty()).then(|| mean(&nonzero)),
                reps: recs.len(),
            }
        })
        .collect();

    Ok(McMetrics {
        config: cfg.clone(),
        replications,
        methods,
        coverage,
    })
}
