use std::fs;
use std::path::Path;
use std::time::Instant;

use hfprec_core::debias::{build_avar_context, debias_solution, entrywise_ci, simultaneous_report};
use hfprec_core::factor::{self, clip_to_psd};
use hfprec_core::glasso::{solve_unweighted, solve_weighted};
use hfprec_core::quadcov::realized_cov;
use hfprec_core::simlab::{mc_run, replication_draw};
use hfprec_core::tuning::{bic, lambda_grid, select};
use hfprec_core::{
    DesignConfig, FactorFit, GlassoSolution, LambdaGrid, McConfig, McMetrics, PathPanel, Penalty, ResidualKind,
    SolveOptions, SymMatrix,
};
use serde::Serialize;

use crate::config::{parse_pairs, BenchConfig, EstimateConfig, InferConfig, SimulateConfig};
use crate::error::CliError;
use crate::io::{emit_matrix, emit_panel, emit_triplets, fmt_f64, ingest_panel, write_json, PanelFormat};

/// One point of the penalty path.
#[derive(Debug, Clone, Serialize)]
pub struct BicRow {
    pub lambda: f64,
    pub bic: Option<f64>,
    /// Nonzeros of the estimate with `i ≤ j`, diagonal included.
    pub nonzero_upper_count: usize,
    pub iters: Option<usize>,
    pub kkt_residual: Option<f64>,
    pub error: Option<String>,
}

/// Everything `estimate` and `infer` need from one estimation run.
pub struct Estimation {
    pub panel_y: PathPanel,
    pub factors: Option<(PathPanel, FactorFit)>,
    /// The matrix the graphical Lasso is fitted to: Σ̂_Z (PSD-clipped) or Σ̂_Y.
    pub sigma_hat: SymMatrix,
    pub grid: Option<LambdaGrid>,
    pub path: Vec<BicRow>,
    pub selected_index: usize,
    pub solution: GlassoSolution,
}

impl Estimation {
    pub fn n(&self) -> usize {
        self.panel_y.n()
    }

    pub fn d(&self) -> usize {
        self.panel_y.dim()
    }

    pub fn sigma_y(&self) -> Result<SymMatrix, CliError> {
        Ok(match &self.factors {
            Some((_, fit)) => factor::assemble_sigma_y(fit, &self.solution)?,
            None => self.solution.w.clone(),
        })
    }

    pub fn precision_y(&self) -> Result<SymMatrix, CliError> {
        Ok(match &self.factors {
            Some((_, fit)) => factor::precision_of_sigma_y(fit, &self.solution)?,
            None => self.solution.theta.clone(),
        })
    }
}

fn panel_format(cfg: &EstimateConfig) -> PanelFormat {
    if cfg.returns {
        PanelFormat::Returns
    } else {
        PanelFormat::Levels
    }
}

pub fn estimate_from_config(cfg: &EstimateConfig) -> Result<Estimation, CliError> {
    cfg.validate()?;
    let format = panel_format(cfg);
    let panel_y = ingest_panel(cfg.y.as_deref().expect("validated"), format)?;
    let factors = match &cfg.x {
        Some(p) => {
            let panel_x = ingest_panel(p, format)?;
            let fit = factor::fit(&panel_y, &panel_x)?;
            Some((panel_x, fit))
        }
        None => None,
    };
    let sigma_hat = match &factors {
        Some((_, fit)) => clip_to_psd(&fit.sigma_z)?,
        None => realized_cov(&panel_y),
    };
    let n = panel_y.n();
    let penalty: Penalty = cfg.penalty.into();
    let opts = SolveOptions {
        tol: cfg.tol,
        max_outer_iters: cfg.max_iter,
        ..SolveOptions::default()
    };

    if let Some(lambda) = cfg.lambda {
        let solution = match penalty {
            Penalty::Weighted => solve_weighted(&sigma_hat, lambda, &opts)?,
            Penalty::Unweighted => solve_unweighted(&sigma_hat, lambda, &opts)?,
        };
        let row = BicRow {
            lambda,
            bic: Some(bic(&solution.theta, &sigma_hat, n)?),
            nonzero_upper_count: solution.off_diagonal_nonzeros() + solution.theta.dim(),
            iters: Some(solution.iters),
            kkt_residual: Some(solution.kkt_residual),
            error: None,
        };
        return Ok(Estimation {
            panel_y,
            factors,
            sigma_hat,
            grid: None,
            path: vec![row],
            selected_index: 0,
            solution,
        });
    }

    let grid = lambda_grid(&sigma_hat, n, &cfg.grid())?;
    let (trace, solution) = select(&sigma_hat, n, &grid, &opts, penalty)?;
    let path = trace
        .records
        .iter()
        .map(|r| BicRow {
            lambda: r.lambda,
            bic: r.bic_value,
            nonzero_upper_count: r.nonzero_upper_count,
            iters: r.solution.as_ref().map(|s| s.iters),
            kkt_residual: r.solution.as_ref().map(|s| s.kkt_residual),
            error: r.error.clone(),
        })
        .collect();
    Ok(Estimation {
        panel_y,
        factors,
        sigma_hat,
        grid: Some(grid),
        path,
        selected_index: trace.argmin,
        solution,
    })
}

#[derive(Serialize)]
struct BicReport<'a> {
    config: &'a EstimateConfig,
    n: usize,
    d: usize,
    r: Option<usize>,
    grid: Option<&'a LambdaGrid>,
    path: &'a [BicRow],
    selected_index: usize,
    selected_lambda: f64,
}

#[derive(Serialize)]
struct ConfigEcho<'a, T: Serialize> {
    command: &'a str,
    config: &'a T,
}

pub fn estimate(cfg: &EstimateConfig, out: &Path) -> Result<(), CliError> {
    let est = estimate_from_config(cfg)?;
    fs::create_dir_all(out)?;
    write_json(&out.join("run_config.json"), &ConfigEcho { command: "estimate", config: cfg })?;
    emit_matrix(&out.join("theta_z.csv"), est.solution.theta.as_matrix())?;
    emit_triplets(&out.join("theta_z_triplets.csv"), &est.solution.theta)?;
    emit_matrix(&out.join("sigma_y.csv"), est.sigma_y()?.as_matrix())?;
    emit_matrix(&out.join("precision_y.csv"), est.precision_y()?.as_matrix())?;
    if let Some((_, fit)) = &est.factors {
        emit_matrix(&out.join("beta.csv"), &fit.beta_hat)?;
    }
    write_json(
        &out.join("bic.json"),
        &BicReport {
            config: cfg,
            n: est.n(),
            d: est.d(),
            r: est.factors.as_ref().map(|(_, f)| f.r()),
            grid: est.grid.as_ref(),
            path: &est.path,
            selected_index: est.selected_index,
            selected_lambda: est.solution.lambda,
        },
    )?;
    Ok(())
}

/// A confidence interval row; indices are 1-based.
#[derive(Debug, Clone, Serialize)]
pub struct InferenceRow {
    pub i: usize,
    pub j: usize,
    pub point: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub band_low: Option<f64>,
    pub band_high: Option<f64>,
}

#[derive(Serialize)]
struct InferenceOutput<'a> {
    config: &'a InferConfig,
    n: usize,
    d: usize,
    lambda: f64,
    level: f64,
    simultaneous_quantile: Option<f64>,
    num_multiplier_draws: usize,
    entries: &'a [InferenceRow],
}

pub fn infer(cfg: &InferConfig, out: &Path) -> Result<(), CliError> {
    cfg.validate()?;
    let est = estimate_from_config(&cfg.estimate)?;
    let d = est.d();
    let pairs = match &cfg.pairs {
        Some(s) => parse_pairs(s, d)?,
        None => (0..d).flat_map(|j| (0..=j).map(move |i| (i, j))).collect(),
    };
    let debiased = debias_solution(&est.solution, &est.sigma_hat)?;
    let ctx = build_avar_context(
        &est.panel_y,
        est.factors.as_ref().map(|(x, fit)| (x, &fit.beta_hat)),
        &est.solution.theta,
    )?;
    let report = if cfg.draws > 0 {
        simultaneous_report(&debiased, &ctx, &pairs, cfg.level, cfg.draws, cfg.seed)?
    } else {
        entrywise_ci(&debiased, &ctx, &pairs, cfg.level)?
    };
    let rows: Vec<InferenceRow> = report
        .entries
        .iter()
        .map(|e| {
            let band = report.simultaneous_quantile.map(|q| (e.point - q * e.se, e.point + q * e.se));
            InferenceRow {
                i: e.i + 1,
                j: e.j + 1,
                point: e.point,
                se: e.se,
                ci_low: e.ci_low,
                ci_high: e.ci_high,
                band_low: band.map(|b| b.0),
                band_high: band.map(|b| b.1),
            }
        })
        .collect();

    fs::create_dir_all(out)?;
    write_json(&out.join("run_config.json"), &ConfigEcho { command: "infer", config: cfg })?;
    write_json(
        &out.join("inference.json"),
        &InferenceOutput {
            config: cfg,
            n: est.n(),
            d,
            lambda: est.solution.lambda,
            level: report.level,
            simultaneous_quantile: report.simultaneous_quantile,
            num_multiplier_draws: report.num_multiplier_draws,
            entries: &rows,
        },
    )?;
    let mut w = csv::Writer::from_path(out.join("inference.csv"))?;
    w.write_record(["i", "j", "point", "se", "ci_low", "ci_high", "band_low", "band_high"])?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in &rows {
        w.write_record([
            r.i.to_string(),
            r.j.to_string(),
            fmt_f64(r.point),
            fmt_f64(r.se),
            fmt_f64(r.ci_low),
            fmt_f64(r.ci_high),
            opt(r.band_low),
            opt(r.band_high),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn mc_config(cfg: &SimulateConfig) -> Result<McConfig, CliError> {
    cfg.validate()?;
    let residual = match cfg.design {
        1 => ResidualKind::Design1,
        _ => ResidualKind::Design2 {
            alpha: cfg.alpha,
            literal_covariance: cfg.literal_covariance,
        },
    };
    let mut design = DesignConfig::new(residual);
    design.substeps = cfg.substeps;
    let mut mc = McConfig::new(design, cfg.d, cfg.n, cfg.reps, cfg.seed);
    mc.methods.clone_from(&cfg.methods);
    mc.coverage_levels.clone_from(&cfg.levels);
    mc.grid.m = cfg.m;
    mc.grid.epsilon = cfg.epsilon;
    mc.grid.scale = cfg.lambda_scale.into();
    mc.tol = cfg.tol;
    mc.max_outer_iters = cfg.max_iter;
    mc.validate()?;
    Ok(mc)
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a SimulateConfig,
    resolved: &'a McConfig,
    methods: &'a [hfprec_core::simlab::MethodSummary],
    coverage: &'a [hfprec_core::simlab::CoverageSummary],
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn write_replications(path: &Path, m: &McMetrics) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "rep",
        "method",
        "prec_err_inf",
        "prec_err_2",
        "cov_err_max",
        "theta_z_err_2",
        "lambda",
        "error",
    ])?;
    for rep in &m.replications {
        if let Some(e) = &rep.error {
            w.write_record([rep.rep.to_string(), String::new(), String::new(), String::new(), String::new(), String::new(), String::new(), e.clone()])?;
        }
        for o in &rep.methods {
            let mm = o.metrics;
            w.write_record([
                rep.rep.to_string(),
                o.method.to_string(),
                opt_f64(mm.map(|x| x.prec_err_inf)),
                opt_f64(mm.map(|x| x.prec_err_2)),
                opt_f64(mm.map(|x| x.cov_err_max)),
                opt_f64(mm.and_then(|x| x.theta_z_err_2)),
                opt_f64(mm.and_then(|x| x.lambda)),
                o.error.clone().unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_coverage(path: &Path, m: &McMetrics) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rep", "level", "zero", "nonzero", "n_zero", "n_nonzero"])?;
    for rep in &m.replications {
        for c in &rep.coverage {
            w.write_record([
                rep.rep.to_string(),
                fmt_f64(c.level),
                opt_f64(c.zero),
                opt_f64(c.nonzero),
                c.n_zero.to_string(),
                c.n_nonzero.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn simulate(cfg: &SimulateConfig, out: &Path) -> Result<(), CliError> {
    let mc = mc_config(cfg)?;
    let metrics = mc_run(&mc)?;
    fs::create_dir_all(out)?;
    write_json(&out.join("run_config.json"), &ConfigEcho { command: "simulate", config: cfg })?;
    write_json(
        &out.join("summary.json"),
        &Summary {
            config: cfg,
            resolved: &mc,
            methods: &metrics.methods,
            coverage: &metrics.coverage,
        },
    )?;
    write_replications(&out.join("replications.csv"), &metrics)?;
    write_coverage(&out.join("coverage.csv"), &metrics)?;
    if cfg.emit_panels {
        let draw = replication_draw(&mc, 0)?;
        emit_panel(&out.join("panel_y_rep0.csv"), &draw.panel_y)?;
        emit_panel(&out.join("panel_x_rep0.csv"), &draw.panel_x)?;
        emit_matrix(&out.join("theta_z_true_rep0.csv"), draw.truth.theta_z_true.as_matrix())?;
        emit_matrix(&out.join("beta_true_rep0.csv"), &draw.truth.beta)?;
    }
    Ok(())
}

/// Timing of one dimension; times in milliseconds, minimum over repeats.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub d: usize,
    pub n: usize,
    pub lambda: f64,
    pub iters: usize,
    pub solve_ms: f64,
    pub path_ms: f64,
}

pub fn bench(cfg: &BenchConfig, out: Option<&Path>) -> Result<Vec<BenchRow>, CliError> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &d in &cfg.dims {
        let mc = McConfig::new(DesignConfig::new(ResidualKind::Design1), d, cfg.n, 1, cfg.seed);
        mc.validate()?;
        let draw = replication_draw(&mc, 0)?;
        let fit = factor::fit(&draw.panel_y, &draw.panel_x)?;
        let sigma = clip_to_psd(&fit.sigma_z)?;
        let grid = lambda_grid(&sigma, cfg.n, &mc.grid)?;
        let lambda = grid.values[grid.values.len() / 2];
        let opts = SolveOptions::default();
        let (mut solve_ms, mut path_ms, mut iters) = (f64::INFINITY, f64::INFINITY, 0);
        for _ in 0..cfg.repeats {
            let t = Instant::now();
            let sol = solve_weighted(&sigma, lambda, &opts)?;
            solve_ms = solve_ms.min(t.elapsed().as_secs_f64() * 1e3);
            iters = sol.iters;
            let t = Instant::now();
            select(&sigma, cfg.n, &grid, &opts, Penalty::Weighted)?;
            path_ms = path_ms.min(t.elapsed().as_secs_f64() * 1e3);
        }
        rows.push(BenchRow {
            d,
            n: cfg.n,
            lambda,
            iters,
            solve_ms,
            path_ms,
        });
    }
    if let Some(out) = out {
        fs::create_dir_all(out)?;
        write_json(&out.join("run_config.json"), &ConfigEcho { command: "bench", config: cfg })?;
        let mut w = csv::Writer::from_path(out.join("bench.csv"))?;
        w.write_record(["d", "n", "lambda", "iters", "solve_ms", "path_ms"])?;
        for r in &rows {
            w.write_record([
                r.d.to_string(),
                r.n.to_string(),
                fmt_f64(r.lambda),
                r.iters.to_string(),
                format!("{:.3}", r.solve_ms),
                format!("{:.3}", r.path_ms),
            ])?;
        }
        w.flush()?;
    }
    Ok(rows)
}
