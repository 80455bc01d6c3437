//! Penalty selection: logarithmic λ grid and BIC grid search with warm
//! starts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glasso::{self, GlassoSolution, SolveOptions};
use crate::matcore::{log_det_spd, SymMatrix};

/// Where `λ_max` is read off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum LambdaMaxScale {
    /// Largest off-diagonal modulus of the covariance estimate.
    #[default]
    Covariance,
    /// Largest off-diagonal modulus of the implied correlation matrix; the
    /// exact all-zero threshold of the weighted problem.
    Correlation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    /// Strictly increasing.
    pub values: Vec<f64>,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub epsilon: f64,
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    pub m: usize,
    /// `None` means `√(log d / n)`.
    pub epsilon: Option<f64>,
    pub scale: LambdaMaxScale,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            m: 10,
            epsilon: None,
            scale: LambdaMaxScale::Covariance,
        }
    }
}

/// `√(log d / n)`
pub fn default_epsilon(d: usize, n: usize) -> f64 {
    ((d as f64).ln() / n as f64).sqrt()
}

/// `λ_i = exp(log λ_min + (i−1)/(m−1)·log(λ_max/λ_min))` with
/// `λ_min = ε·λ_max`; the endpoints are stored exactly.
pub fn lambda_grid(sigma_z_hat: &SymMatrix, n: usize, opts: &GridOptions) -> Result<LambdaGrid> {
    if opts.m < 2 {
        return Err(Error::param(format!("grid needs m >= 2 points, got {}", opts.m)));
    }
    if n == 0 {
        return Err(Error::param("n must be positive"));
    }
    let d = sigma_z_hat.dim();
    let epsilon = opts.epsilon.unwrap_or_else(|| default_epsilon(d, n));
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::param(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let lambda_max = match opts.scale {
        LambdaMaxScale::Covariance => sigma_z_hat.max_abs_off_diagonal(),
        LambdaMaxScale::Correlation => {
            let w = glasso::diagonal_weights(sigma_z_hat)?;
            glasso::correlation_from_covariance(sigma_z_hat, &w).max_abs_off_diagonal()
        }
    };
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(Error::DegenerateGrid(
            "all off-diagonal entries are zero; no penalty grid can be formed".into(),
        ));
    }
    Ok(grid_from_endpoints(lambda_max, epsilon, opts.m))
}

/// The grid for a given `λ_max`, `ε` and `m`.
pub fn grid_from_endpoints(lambda_max: f64, epsilon: f64, m: usize) -> LambdaGrid {
    let lambda_min = epsilon * lambda_max;
    let log_min = lambda_min.ln();
    let log_ratio = (lambda_max / lambda_min).ln();
    let mut values: Vec<f64> = (0..m)
        .map(|k| (log_min + k as f64 / (m - 1) as f64 * log_ratio).exp())
        .collect();
    values[0] = lambda_min;
    values[m - 1] = lambda_max;
    LambdaGrid {
        values,
        lambda_max,
        lambda_min,
        epsilon,
        m,
    }
}

/// `n{tr(ΘΣ̂) − log det Θ} + log(n)·#{i ≤ j : Θ_ij ≠ 0}`.
pub fn bic(theta: &SymMatrix, sigma_z_hat: &SymMatrix, n: usize) -> Result<f64> {
    if theta.dim() != sigma_z_hat.dim() {
        return Err(Error::param("bic: dimension mismatch"));
    }
    let (fit, count) = bic_parts(theta, sigma_z_hat)?;
    let nf = n as f64;
    Ok(nf * fit + nf.ln() * count as f64)
}

fn bic_parts(theta: &SymMatrix, sigma: &SymMatrix) -> Result<(f64, usize)> {
    let trace = theta.as_matrix().component_mul(sigma.as_matrix()).sum();
    let logdet = log_det_spd(theta)
        .map_err(|_| Error::numeric("BIC requires a positive definite precision estimate"))?;
    let d = theta.dim();
    let mut count = 0;
    for j in 0..d {
        for i in 0..=j {
            if theta[(i, j)] != 0.0 {
                count += 1;
            }
        }
    }
    Ok((trace - logdet, count))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Penalty {
    /// Penalty weights `√(Σ̂_ii Σ̂_jj)`.
    #[default]
    Weighted,
    Unweighted,
}

#[derive(Debug, Clone)]
pub struct BicRecord {
    pub lambda: f64,
    /// `None` when the solver failed at this λ.
    pub bic_value: Option<f64>,
    pub nonzero_upper_count: usize,
    pub solution: Option<GlassoSolution>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct BicTrace {
    /// In grid order (increasing λ).
    pub records: Vec<BicRecord>,
    pub argmin: usize,
}

impl BicTrace {
    pub fn selected(&self) -> &BicRecord {
        &self.records[self.argmin]
    }
}

/// Solves along the grid from the largest λ downwards, each point warm
/// started from its predecessor, and returns the BIC minimizer. Ties go to
/// the larger λ. Points where the solver fails are recorded and skipped; if
/// all fail, the error at the largest λ is returned.
pub fn select(
    sigma_z_hat: &SymMatrix,
    n: usize,
    grid: &LambdaGrid,
    opts: &SolveOptions,
    penalty: Penalty,
) -> Result<(BicTrace, GlassoSolution)> {
    if grid.values.is_empty() {
        return Err(Error::param("empty penalty grid"));
    }
    if grid.values.windows(2).any(|w| w[0] >= w[1]) || grid.values[0] <= 0.0 {
        return Err(Error::param("grid must be positive and strictly increasing"));
    }
    let mut records: Vec<Option<BicRecord>> = vec![None; grid.values.len()];
    let mut warm = opts.warm_start.clone();
    let mut first_error: Option<Error> = None;
    for (idx, &lambda) in grid.values.iter().enumerate().rev() {
        let o = opts.with_warm_start(warm.clone());
        let res = match penalty {
            Penalty::Weighted => glasso::solve_weighted(sigma_z_hat, lambda, &o),
            Penalty::Unweighted => glasso::solve_unweighted(sigma_z_hat, lambda, &o),
        };
        let rec = match res.and_then(|sol| bic(&sol.theta, sigma_z_hat, n).map(|b| (sol, b))) {
            Ok((sol, b)) => {
                warm = Some(sol.clone());
                BicRecord {
                    lambda,
                    bic_value: Some(b),
                    nonzero_upper_count: sol.off_diagonal_nonzeros() + sol.theta.dim(),
                    solution: Some(sol),
                    error: None,
                }
            }
            Err(e) => {
                let rec = BicRecord {
                    lambda,
                    bic_value: None,
                    nonzero_upper_count: 0,
                    solution: None,
                    error: Some(e.to_string()),
                };
                first_error.get_or_insert(e);
                rec
            }
        };
        records[idx] = Some(rec);
    }
    let records: Vec<BicRecord> = records.into_iter().map(|r| r.expect("every grid point visited")).collect();
    let mut argmin: Option<usize> = None;
    for (idx, rec) in records.iter().enumerate().rev() {
        if let Some(b) = rec.bic_value {
            // strict comparison while scanning downwards keeps the larger λ on ties
            if argmin.is_none_or(|a| b < records[a].bic_value.expect("argmin has a value")) {
                argmin = Some(idx);
            }
        }
    }
    // every point failed: report the failure at the largest λ
    let argmin = match argmin {
        Some(a) => a,
        None => return Err(first_error.expect("a failed point recorded its error")),
    };
    let sol = records[argmin].solution.clone().expect("selected point has a solution");
    Ok((BicTrace { records, argmin }, sol))
}
