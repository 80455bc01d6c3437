//! De-biased precision estimates and feasible entrywise / simultaneous
//! inference.
//!
//! The de-biased estimator is `T = Θ̂ − Γ` with `Γ = Θ̂Σ̂Θ̂ − Θ̂`, i.e.
//! `T = 2Θ̂ − Θ̂Σ̂Θ̂`.
//!
//! Its asymptotic covariance `V̂ = (Θ̂⊗Θ̂)Ĉ(Θ̂⊗Θ̂)` is `d² × d²` and is never
//! formed. With residual increments `ẑ_h = ΔY_h − β̂ΔX_h` and `u_h = Θ̂ẑ_h`,
//! `(Θ̂⊗Θ̂)χ̂_h = vec(u_h u_hᵀ)`, so each entry of `V̂` is an `O(n)` sum over
//! products `p_h = u_h^i u_h^j`.
//!
//! `Ĉ` also has the Gram form `Σ_m g_m g_mᵀ` with
//! `g_1 = √(n/2)χ̂_1`, `g_{h+1} = √(n/2)(χ̂_{h+1} − χ̂_h)`, `g_{n+1} = −√(n/2)χ̂_n`,
//! which gives multiplier draws `√(n/2) Σ_h p_h (ξ_h − ξ_{h+1})` whose
//! conditional covariance is exactly `V̂`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glasso::GlassoSolution;
use crate::matcore::SymMatrix;
use crate::normal::normal_quantile;
use crate::quadcov::{increments, PathPanel};

#[derive(Debug, Clone)]
pub struct DebiasedEstimate {
    pub t_matrix: SymMatrix,
    pub gamma: SymMatrix,
    pub source_lambda: Option<f64>,
}

/// `Γ = Θ̂Σ̂Θ̂ − Θ̂`, symmetrized.
pub fn gamma_correction(theta_hat: &SymMatrix, sigma_hat: &SymMatrix) -> Result<SymMatrix> {
    if theta_hat.dim() != sigma_hat.dim() {
        return Err(Error::param("gamma_correction: dimension mismatch"));
    }
    let t = theta_hat.as_matrix();
    Ok(SymMatrix::symmetrize(t * sigma_hat.as_matrix() * t - t))
}

pub fn debiased(theta_hat: &SymMatrix, sigma_hat: &SymMatrix) -> Result<DebiasedEstimate> {
    let gamma = gamma_correction(theta_hat, sigma_hat)?;
    Ok(DebiasedEstimate {
        t_matrix: theta_hat.sub(&gamma),
        gamma,
        source_lambda: None,
    })
}

/// De-biases a graphical Lasso solution against the covariance estimate it
/// was computed from.
pub fn debias_solution(sol: &GlassoSolution, sigma_hat: &SymMatrix) -> Result<DebiasedEstimate> {
    let mut est = debiased(&sol.theta, sigma_hat)?;
    est.source_lambda = Some(sol.lambda);
    Ok(est)
}

/// Images `u_h = Θ̂ẑ_h` of the residual increments, one row per interval.
#[derive(Debug, Clone)]
pub struct AvarContext {
    u: DMatrix<f64>,
}

impl AvarContext {
    pub fn from_u(u: DMatrix<f64>) -> Result<Self> {
        if u.nrows() == 0 {
            return Err(Error::param("need at least one increment"));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite residual increment"));
        }
        Ok(Self { u })
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn d(&self) -> usize {
        self.u.ncols()
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    fn products(&self, i: usize, j: usize) -> Vec<f64> {
        (0..self.n()).map(|h| self.u[(h, i)] * self.u[(h, j)]).collect()
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.d() {
            return Err(Error::param(format!("index {i} out of range for dimension {}", self.d())));
        }
        Ok(())
    }
}

/// `ẑ_h = ΔY_h − β̂ΔX_h`; without factors `ẑ_h = ΔY_h`. Each `ẑ_h` is mapped
/// through `theta_z`.
pub fn build_avar_context(
    panel_y: &PathPanel,
    factors: Option<(&PathPanel, &DMatrix<f64>)>,
    theta_z: &SymMatrix,
) -> Result<AvarContext> {
    let d = panel_y.dim();
    if theta_z.dim() != d {
        return Err(Error::param("precision matrix dimension does not match the panel"));
    }
    let mut z = increments(panel_y).as_matrix().clone();
    if let Some((panel_x, beta_hat)) = factors {
        if panel_x.n() != panel_y.n() {
            return Err(Error::param("factor and asset panels have different grids"));
        }
        if beta_hat.nrows() != d || beta_hat.ncols() != panel_x.dim() {
            return Err(Error::param("loading matrix has the wrong shape"));
        }
        let dx = increments(panel_x);
        z -= dx.as_matrix() * beta_hat.transpose();
    }
    AvarContext::from_u(z * theta_z.as_matrix())
}

fn avar_from_products(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let nf = n as f64;
    let mut diag = 0.0;
    for h in 0..n {
        diag += a[h] * b[h];
    }
    let mut cross = 0.0;
    for h in 0..n.saturating_sub(1) {
        cross += a[h] * b[h + 1] + a[h + 1] * b[h];
    }
    nf * diag - 0.5 * nf * cross
}

pub type EntryPair = ((usize, usize), (usize, usize));

/// Entries `V̂_{(i,j),(k,l)}` of the asymptotic covariance of the de-biased
/// estimator.
pub fn avar_entries(ctx: &AvarContext, pairs: &[EntryPair]) -> Result<Vec<f64>> {
    for &((i, j), (k, l)) in pairs {
        for idx in [i, j, k, l] {
            ctx.check_index(idx)?;
        }
    }
    Ok(pairs
        .par_iter()
        .map(|&((i, j), (k, l))| {
            let a = ctx.products(i, j);
            let b = if (i, j) == (k, l) { a.clone() } else { ctx.products(k, l) };
            avar_from_products(&a, &b)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiEntry {
    pub i: usize,
    pub j: usize,
    pub point: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
}

impl CiEntry {
    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub entries: Vec<CiEntry>,
    pub level: f64,
    pub simultaneous_quantile: Option<f64>,
    pub num_multiplier_draws: usize,
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::param(format!("level must lie in (0, 1), got {level}")));
    }
    Ok(())
}

/// Standard errors `√(V̂_{(i,j),(i,j)}/n)` for the requested entries.
pub fn standard_errors(ctx: &AvarContext, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
    let quads: Vec<EntryPair> = pairs.iter().map(|&p| (p, p)).collect();
    let vars = avar_entries(ctx, &quads)?;
    let n = ctx.n() as f64;
    pairs
        .iter()
        .zip(vars)
        .map(|(&(i, j), v)| {
            if v > 0.0 && v.is_finite() {
                Ok((v / n).sqrt())
            } else {
                Err(Error::DegenerateVariance { i, j, variance: v })
            }
        })
        .collect()
}

/// Two-sided normal confidence intervals `T_ij ± z_{(1+level)/2}·se_ij`.
pub fn entrywise_ci(
    est: &DebiasedEstimate,
    ctx: &AvarContext,
    pairs: &[(usize, usize)],
    level: f64,
) -> Result<InferenceReport> {
    check_level(level)?;
    if est.t_matrix.dim() != ctx.d() {
        return Err(Error::param("estimate and context dimensions differ"));
    }
    let z = normal_quantile(0.5 * (1.0 + level));
    let ses = standard_errors(ctx, pairs)?;
    let entries = pairs
        .iter()
        .zip(ses)
        .map(|(&(i, j), se)| {
            let point = est.t_matrix[(i, j)];
            CiEntry {
                i,
                j,
                point,
                se,
                ci_low: point - z * se,
                ci_high: point + z * se,
                level,
            }
        })
        .collect();
    Ok(InferenceReport {
        entries,
        level,
        simultaneous_quantile: None,
        num_multiplier_draws: 0,
    })
}

/// Statistic whose quantile is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SupStatistic {
    /// `max_k W_k`: one-sided.
    #[default]
    Max,
    /// `max_k |W_k|`: two-sided simultaneous bands.
    AbsMax,
}

/// Level-quantile of the maximum of the Studentized Gaussian multiplier
/// process over `pairs`. Draw `b` uses its own ChaCha stream, so results do
/// not depend on the thread count.
pub fn multiplier_sup_quantile(
    ctx: &AvarContext,
    pairs: &[(usize, usize)],
    level: f64,
    num_draws: usize,
    seed: u64,
    statistic: SupStatistic,
) -> Result<f64> {
    check_level(level)?;
    if num_draws < 100 {
        return Err(Error::param("at least 100 multiplier draws are required"));
    }
    if pairs.is_empty() {
        return Err(Error::param("no entries requested"));
    }
    let n = ctx.n();
    let ses = standard_errors(ctx, pairs)?;
    // Columns scaled so each coordinate has unit conditional variance.
    let scale = (0.5 * n as f64).sqrt();
    let cols: Vec<Vec<f64>> = pairs
        .iter()
        .zip(&ses)
        .map(|(&(i, j), se)| {
            let sd = se * (n as f64).sqrt();
            ctx.products(i, j).into_iter().map(|p| p * scale / sd).collect()
        })
        .collect();

    let mut maxima: Vec<f64> = (0..num_draws as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let xi: Vec<f64> = (0..=n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let diff: Vec<f64> = (0..n).map(|h| xi[h] - xi[h + 1]).collect();
            cols.iter()
                .map(|c| {
                    let w: f64 = c.iter().zip(&diff).map(|(p, e)| p * e).sum();
                    match statistic {
                        SupStatistic::Max => w,
                        SupStatistic::AbsMax => w.abs(),
                    }
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    maxima.sort_by(|a, b| a.total_cmp(b));
    let idx = ((level * num_draws as f64).ceil() as usize).clamp(1, num_draws) - 1;
    Ok(maxima[idx])
}

/// Entrywise intervals plus the simulated simultaneous quantile for
/// two-sided bands `T_ij ± q·se_ij`.
pub fn simultaneous_report(
    est: &DebiasedEstimate,
    ctx: &AvarContext,
    pairs: &[(usize, usize)],
    level: f64,
    num_draws: usize,
    seed: u64,
) -> Result<InferenceReport> {
    let mut report = entrywise_ci(est, ctx, pairs, level)?;
    let q = multiplier_sup_quantile(ctx, pairs, level, num_draws, seed, SupStatistic::AbsMax)?;
    report.simultaneous_quantile = Some(q);
    report.num_multiplier_draws = num_draws;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::spd_inverse;
    use nalgebra::dmatrix;

    #[test]
    fn gamma_examples() {
        let s = SymMatrix::from_matrix(dmatrix![2.0, 0.4; 0.4, 1.0], 0.0).unwrap();
        let g = gamma_correction(&spd_inverse(&s).unwrap(), &s).unwrap();
        assert!(g.as_matrix().amax() < 1e-14);

        let i2 = SymMatrix::identity(2);
        assert_eq!(gamma_correction(&i2, &i2).unwrap().as_matrix().amax(), 0.0);

        let s = SymMatrix::from_matrix(dmatrix![1.0, 0.3; 0.3, 1.0], 0.0).unwrap();
        let g = gamma_correction(&i2, &s).unwrap();
        assert!((g.as_matrix() - dmatrix![0.0, 0.3; 0.3, 0.0]).amax() < 1e-15);
    }

    #[test]
    fn debiased_examples() {
        let s = SymMatrix::from_matrix(dmatrix![2.0, 0.4; 0.4, 1.0], 0.0).unwrap();
        let theta = spd_inverse(&s).unwrap();
        let est = debiased(&theta, &s).unwrap();
        assert!((est.t_matrix.as_matrix() - theta.as_matrix()).amax() < 1e-14);

        let i3 = SymMatrix::identity(3);
        let est = debiased(&i3, &i3).unwrap();
        assert_eq!(est.t_matrix, i3);
        assert_eq!(est.source_lambda, None);
    }

    #[test]
    fn single_increment_avar() {
        let ctx = AvarContext::from_u(dmatrix![0.5, -2.0, 1.5]).unwrap();
        let v = avar_entries(&ctx, &[((0, 1), (2, 2)), ((1, 1), (1, 1))]).unwrap();
        assert!((v[0] - 0.5 * -2.0 * 1.5 * 1.5).abs() < 1e-15);
        assert!((v[1] - 16.0).abs() < 1e-15);
    }

    #[test]
    fn constant_increments_telescope() {
        let n = 7;
        let u = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 0.3 } else { -1.1 });
        let ctx = AvarContext::from_u(u).unwrap();
        let v = avar_entries(&ctx, &[((0, 1), (0, 1))]).unwrap()[0];
        // n·n·p² − (n/2)·2(n−1)·p² = n·p²
        let p: f64 = 0.3 * -1.1;
        assert!((v - n as f64 * p * p).abs() < 1e-12);
    }

    #[test]
    fn avar_symmetries() {
        let u = dmatrix![0.1, 0.4, -0.3; 0.2, -0.1, 0.5; -0.6, 0.3, 0.2; 0.05, 0.7, -0.2];
        let ctx = AvarContext::from_u(u).unwrap();
        let base = avar_entries(&ctx, &[((0, 1), (2, 1))]).unwrap()[0];
        for q in [((1, 0), (2, 1)), ((0, 1), (1, 2)), ((2, 1), (0, 1)), ((1, 2), (1, 0))] {
            let v = avar_entries(&ctx, &[q]).unwrap()[0];
            assert!((v - base).abs() < 1e-15);
        }
        assert!(avar_entries(&ctx, &[((0, 3), (0, 0))]).is_err());
    }

    #[test]
    fn ci_arithmetic() {
        assert!((normal_quantile(0.975) - 1.959_964).abs() < 1e-6);
        // one increment with u = (√n·0.5·..): choose se = 0.5 exactly
        // V = n·p² with constant products p, se = √(V/n) = |p|
        let u = DMatrix::from_fn(4, 2, |_, j| if j == 0 { 1.0 } else { 0.5 });
        let ctx = AvarContext::from_u(u).unwrap();
        let mut t = SymMatrix::identity(2);
        t.set(0, 1, 1.0);
        let est = DebiasedEstimate {
            t_matrix: t.clone(),
            gamma: SymMatrix::zeros(2),
            source_lambda: None,
        };
        let rep = entrywise_ci(&est, &ctx, &[(0, 1)], 0.95).unwrap();
        let e = &rep.entries[0];
        assert!((e.se - 0.5).abs() < 1e-15);
        assert!((e.ci_low - 0.020_018).abs() < 1e-6);
        assert!((e.ci_high - 1.979_982).abs() < 1e-6);
        assert!(e.covers(1.0));
        assert!(entrywise_ci(&est, &ctx, &[(0, 1)], 1.0).is_err());
    }

    #[test]
    fn zero_variance_is_reported() {
        let u = DMatrix::from_fn(3, 2, |_, j| if j == 0 { 1.0 } else { 0.0 });
        let ctx = AvarContext::from_u(u).unwrap();
        let est = debiased(&SymMatrix::identity(2), &SymMatrix::identity(2)).unwrap();
        let err = entrywise_ci(&est, &ctx, &[(0, 1)], 0.9).unwrap_err();
        assert!(matches!(err, Error::DegenerateVariance { i: 0, j: 1, .. }));
    }
}
