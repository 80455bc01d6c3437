//! Weighted graphical Lasso.
//!
//! The weighted estimator penalizes `|Θ_ij|` by `λ·V̂_i·V̂_j` with
//! `V̂ = diag(Σ̂)^{1/2}`. It is computed by solving the ordinary graphical
//! Lasso on the correlation matrix `R̂ = V̂⁻¹Σ̂V̂⁻¹` and rescaling,
//! `Θ̂ = V̂⁻¹K̂V̂⁻¹`. The diagonal is never penalized.
//!
//! The solver is block coordinate descent over the columns of the covariance
//! iterate `W`, each column being a Lasso problem solved by coordinate
//! descent. Convergence is declared only once the KKT residual of the
//! assembled precision matrix is below the tolerance.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matcore::{eigen_range, log_det_spd, spd_inverse, SymMatrix};

/// Tolerance on `|R_ii − 1|` and on negative eigenvalues of a correlation input.
pub const CORRELATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub max_outer_iters: usize,
    /// KKT tolerance on the correlation scale.
    pub tol: f64,
    pub warm_start: Option<GlassoSolution>,
    /// Always false; present so the choice is explicit in configs.
    pub penalize_diagonal: bool,
    /// Record the penalized objective after every sweep (costs one
    /// factorization per sweep).
    pub record_objective: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_outer_iters: 1000,
            tol: 1e-6,
            warm_start: None,
            penalize_diagonal: false,
            record_objective: false,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::param("solver tolerance must be positive"));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::param("max_outer_iters must be at least 1"));
        }
        if self.penalize_diagonal {
            return Err(Error::param("penalizing the diagonal is not supported"));
        }
        Ok(())
    }

    pub fn with_warm_start(&self, warm: Option<GlassoSolution>) -> Self {
        Self {
            warm_start: warm,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlassoSolution {
    /// Precision estimate (positive definite).
    pub theta: SymMatrix,
    /// Inverse of `theta`.
    pub w: SymMatrix,
    pub lambda: f64,
    /// Penalty weights; `V̂` for the weighted problem, ones otherwise.
    pub weights: Vec<f64>,
    pub iters: usize,
    /// Maximal KKT violation, measured on the scale the problem was solved on
    /// (the correlation scale for the weighted estimator).
    pub kkt_residual: f64,
    pub converged: bool,
    /// Penalized objective after each sweep, when requested.
    pub objective_trace: Vec<f64>,
}

impl GlassoSolution {
    /// Number of nonzero entries with `i < j`.
    pub fn off_diagonal_nonzeros(&self) -> usize {
        let d = self.theta.dim();
        let mut c = 0;
        for j in 0..d {
            for i in 0..j {
                if self.theta[(i, j)] != 0.0 {
                    c += 1;
                }
            }
        }
        c
    }
}

#[inline]
fn soft_threshold(x: f64, t: f64) -> f64 {
    // |x| == t maps to zero
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Penalized Gaussian negative log-likelihood
/// `tr(ΘS) − log det Θ + Σ_{i≠j} P_ij |Θ_ij|`.
pub fn penalized_objective(theta: &SymMatrix, s: &SymMatrix, penalty: &DMatrix<f64>) -> Result<f64> {
    let d = theta.dim();
    let fit = (theta.as_matrix().component_mul(s.as_matrix())).sum();
    let mut pen = 0.0;
    for j in 0..d {
        for i in 0..d {
            if i != j {
                pen += penalty[(i, j)] * theta[(i, j)].abs();
            }
        }
    }
    Ok(fit - log_det_spd(theta)? + pen)
}

fn kkt_with_inverse(theta: &SymMatrix, w: &SymMatrix, s: &SymMatrix, penalty: &DMatrix<f64>) -> f64 {
    let d = theta.dim();
    let mut worst = 0.0f64;
    for j in 0..d {
        for i in 0..d {
            let g = s[(i, j)] - w[(i, j)];
            let v = if i == j {
                g.abs()
            } else if theta[(i, j)] != 0.0 {
                (g + penalty[(i, j)] * theta[(i, j)].signum()).abs()
            } else {
                (g.abs() - penalty[(i, j)]).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    worst
}

/// Maximal violation of the optimality conditions
/// `Σ̂ − Θ̂⁻¹ + λ·V̂ẐV̂ = 0`, `‖Ẑ‖_∞ ≤ 1`, `Ẑ_ii = 0`,
/// `Ẑ_ij = sign(Θ̂_ij)` on the support.
pub fn kkt_residual(theta: &SymMatrix, sigma_hat: &SymMatrix, lambda: f64, weights: &[f64]) -> Result<f64> {
    let d = theta.dim();
    if sigma_hat.dim() != d || weights.len() != d {
        return Err(Error::param("kkt_residual: dimension mismatch"));
    }
    let w = spd_inverse(theta)?;
    let penalty = DMatrix::from_fn(d, d, |i, j| lambda * weights[i] * weights[j]);
    Ok(kkt_with_inverse(theta, &w, sigma_hat, &penalty))
}

fn off_diagonal_penalty(d: usize, lambda: f64, weights: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| if i == j { 0.0 } else { lambda * weights[i] * weights[j] })
}

struct CoreOutput {
    theta: SymMatrix,
    w: SymMatrix,
    iters: usize,
    kkt: f64,
    converged: bool,
    objective_trace: Vec<f64>,
}

/// Builds the precision matrix implied by the covariance iterate and the
/// column regression coefficients.
fn assemble_theta(w: &DMatrix<f64>, beta: &DMatrix<f64>) -> Option<SymMatrix> {
    let d = w.nrows();
    let mut theta = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut schur = w[(j, j)];
        for k in 0..d {
            if k != j {
                schur -= w[(k, j)] * beta[(k, j)];
            }
        }
        if !(schur > 0.0) || !schur.is_finite() {
            return None;
        }
        let tjj = 1.0 / schur;
        theta[(j, j)] = tjj;
        for k in 0..d {
            if k != j {
                theta[(k, j)] = -beta[(k, j)] * tjj;
            }
        }
    }
    Some(SymMatrix::symmetrize(theta))
}

/// Block coordinate descent for `min tr(ΘS) − log det Θ + Σ_{i≠j} P_ij|Θ_ij|`.
fn solve_core(
    s: &SymMatrix,
    penalty: &DMatrix<f64>,
    opts: &SolveOptions,
    warm: Option<(&SymMatrix, &SymMatrix)>,
) -> CoreOutput {
    let d = s.dim();
    let sm = s.as_matrix();
    let mut w = sm.clone();
    let mut beta = DMatrix::<f64>::zeros(d, d);
    if let Some((theta0, w0)) = warm {
        w.copy_from(w0.as_matrix());
        for j in 0..d {
            w[(j, j)] = sm[(j, j)];
            let tjj = theta0[(j, j)];
            for k in 0..d {
                if k != j {
                    beta[(k, j)] = -theta0[(k, j)] / tjj;
                }
            }
        }
    }

    let mut off_scale = 0.0;
    for j in 0..d {
        for i in 0..d {
            if i != j {
                off_scale += sm[(i, j)].abs();
            }
        }
    }
    off_scale /= (d * (d - 1)).max(1) as f64;

    let inner_tol = (opts.tol * 1e-4).min(1e-10);
    let max_inner = 10_000;
    let mut wb = vec![0.0; d];
    let mut objective_trace = Vec::new();
    let mut last: Option<(SymMatrix, SymMatrix, f64)> = None;

    for sweep in 1..=opts.max_outer_iters {
        let mut change = 0.0;
        for j in 0..d {
            // wb = W11·β for the current column
            for k in 0..d {
                wb[k] = 0.0;
            }
            for l in 0..d {
                let bl = beta[(l, j)];
                if l == j || bl == 0.0 {
                    continue;
                }
                for k in 0..d {
                    wb[k] += w[(k, l)] * bl;
                }
            }
            for _ in 0..max_inner {
                let mut max_delta = 0.0f64;
                for k in 0..d {
                    if k == j {
                        continue;
                    }
                    let wkk = w[(k, k)];
                    let old = beta[(k, j)];
                    let x = sm[(k, j)] - (wb[k] - wkk * old);
                    let new = soft_threshold(x, penalty[(k, j)]) / wkk;
                    let delta = new - old;
                    if delta != 0.0 {
                        beta[(k, j)] = new;
                        for l in 0..d {
                            wb[l] += w[(l, k)] * delta;
                        }
                        max_delta = max_delta.max(delta.abs() * wkk.sqrt());
                    }
                }
                if max_delta <= inner_tol {
                    break;
                }
            }
            for k in 0..d {
                if k != j {
                    change += (w[(k, j)] - wb[k]).abs();
                    w[(k, j)] = wb[k];
                    w[(j, k)] = wb[k];
                }
            }
        }
        change /= (d * (d - 1)).max(1) as f64;

        let cheap_ok = change <= opts.tol * off_scale;
        if cheap_ok || opts.record_objective || sweep == opts.max_outer_iters {
            if let Some(theta) = assemble_theta(&w, &beta) {
                if let Ok(w_exact) = spd_inverse(&theta) {
                    if opts.record_objective {
                        if let Ok(obj) = penalized_objective(&theta, s, penalty) {
                            objective_trace.push(obj);
                        }
                    }
                    let kkt = kkt_with_inverse(&theta, &w_exact, s, penalty);
                    if cheap_ok && kkt <= opts.tol {
                        return CoreOutput {
                            theta,
                            w: w_exact,
                            iters: sweep,
                            kkt,
                            converged: true,
                            objective_trace,
                        };
                    }
                    last = Some((theta, w_exact, kkt));
                }
            }
        }
    }

    let (theta, w_exact, kkt) = last.unwrap_or_else(|| {
        // Fall back to the diagonal solution, which is always well defined.
        let diag: Vec<f64> = (0..d).map(|i| 1.0 / sm[(i, i)]).collect();
        let theta = SymMatrix::from_diagonal(&diag);
        let w = SymMatrix::from_diagonal(&s.diagonal());
        let kkt = kkt_with_inverse(&theta, &w, s, penalty);
        (theta, w, kkt)
    });
    CoreOutput {
        theta,
        w: w_exact,
        iters: opts.max_outer_iters,
        kkt,
        converged: kkt <= opts.tol,
        objective_trace,
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::param(format!("lambda must be positive and finite, got {lambda}")));
    }
    Ok(())
}

fn finish(core: CoreOutput, lambda: f64, weights: Vec<f64>) -> Result<GlassoSolution> {
    let sol = GlassoSolution {
        theta: core.theta,
        w: core.w,
        lambda,
        weights,
        iters: core.iters,
        kkt_residual: core.kkt,
        converged: core.converged,
        objective_trace: core.objective_trace,
    };
    if sol.converged {
        Ok(sol)
    } else {
        Err(Error::NonConvergence {
            iters: sol.iters,
            kkt_residual: sol.kkt_residual,
            solution: Box::new(sol),
        })
    }
}

/// Graphical Lasso on a correlation matrix with off-diagonal penalty `λ`.
pub fn solve_correlation(r: &SymMatrix, lambda: f64, opts: &SolveOptions) -> Result<GlassoSolution> {
    opts.validate()?;
    check_lambda(lambda)?;
    let d = r.dim();
    if d < 2 {
        return Err(Error::param("dimension must be at least 2"));
    }
    for i in 0..d {
        if (r[(i, i)] - 1.0).abs() > CORRELATION_TOL {
            return Err(Error::input(format!(
                "correlation matrix has diagonal entry {} at index {i}",
                r[(i, i)]
            )));
        }
    }
    let (lo, _) = eigen_range(r)?;
    if lo < -CORRELATION_TOL {
        return Err(Error::input(format!(
            "correlation matrix is not positive semidefinite (min eigenvalue {lo:.3e})"
        )));
    }
    let penalty = off_diagonal_penalty(d, lambda, &vec![1.0; d]);
    let warm = opts.warm_start.as_ref().map(|s| (&s.theta, &s.w));
    let core = solve_core(r, &penalty, opts, warm);
    finish(core, lambda, vec![1.0; d])
}

/// Square roots of the diagonal of `sigma_hat`, rejecting nonpositive entries.
pub fn diagonal_weights(sigma_hat: &SymMatrix) -> Result<Vec<f64>> {
    sigma_hat
        .diagonal()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v > 0.0 && v.is_finite() {
                Ok(v.sqrt())
            } else {
                Err(Error::input(format!("diagonal entry {i} is not positive ({v})")))
            }
        })
        .collect()
}

/// Correlation matrix `V̂⁻¹Σ̂V̂⁻¹` with an exactly unit diagonal.
pub fn correlation_from_covariance(sigma_hat: &SymMatrix, weights: &[f64]) -> SymMatrix {
    let d = sigma_hat.dim();
    SymMatrix::from_fn(d, |i, j| {
        if i == j {
            1.0
        } else {
            sigma_hat[(i, j)] / (weights[i] * weights[j])
        }
    })
}

/// Weighted graphical Lasso on a covariance estimate.
pub fn solve_weighted(sigma_hat: &SymMatrix, lambda: f64, opts: &SolveOptions) -> Result<GlassoSolution> {
    check_lambda(lambda)?;
    let v = diagonal_weights(sigma_hat)?;
    let inv_v: Vec<f64> = v.iter().map(|x| 1.0 / x).collect();
    let r = correlation_from_covariance(sigma_hat, &v);

    // Warm starts come in on the covariance scale.
    let corr_opts = opts.with_warm_start(opts.warm_start.as_ref().map(|ws| GlassoSolution {
        theta: ws.theta.scale_diag(&v),
        w: ws.w.scale_diag(&inv_v),
        weights: vec![1.0; v.len()],
        ..ws.clone()
    }));

    let to_cov = |k: GlassoSolution| GlassoSolution {
        theta: k.theta.scale_diag(&inv_v),
        w: k.w.scale_diag(&v),
        weights: v.clone(),
        ..k
    };
    match solve_correlation(&r, lambda, &corr_opts) {
        Ok(k) => Ok(to_cov(k)),
        Err(Error::NonConvergence { iters, kkt_residual, solution }) => Err(Error::NonConvergence {
            iters,
            kkt_residual,
            solution: Box::new(to_cov(*solution)),
        }),
        Err(e) => Err(e),
    }
}

/// Graphical Lasso with a uniform off-diagonal penalty on the covariance
/// scale (no weighting).
pub fn solve_unweighted(sigma_hat: &SymMatrix, lambda: f64, opts: &SolveOptions) -> Result<GlassoSolution> {
    opts.validate()?;
    check_lambda(lambda)?;
    let d = sigma_hat.dim();
    if d < 2 {
        return Err(Error::param("dimension must be at least 2"));
    }
    diagonal_weights(sigma_hat)?;
    let (lo, _) = eigen_range(sigma_hat)?;
    if lo < -CORRELATION_TOL * sigma_hat.trace() {
        return Err(Error::input(format!(
            "covariance matrix is not positive semidefinite (min eigenvalue {lo:.3e})"
        )));
    }
    let ones = vec![1.0; d];
    let penalty = off_diagonal_penalty(d, lambda, &ones);
    let warm = opts.warm_start.as_ref().map(|s| (&s.theta, &s.w));
    let core = solve_core(sigma_hat, &penalty, opts, warm);
    finish(core, lambda, ones)
}
