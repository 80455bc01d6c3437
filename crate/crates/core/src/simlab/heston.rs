//! Heston factor paths with leverage, simulated by an Euler scheme with full
//! truncation of the variance.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::SymMatrix;
use crate::quadcov::{realized_cov_of_increments, PathPanel};

/// Per-factor parameters of
/// `dX = μ dt + √v dW`, `dv = κ(θ − v) dt + η√v dB`, `d⟨W, B⟩ = ρ dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HestonParams {
    pub kappa: Vec<f64>,
    pub theta: Vec<f64>,
    pub eta: Vec<f64>,
    pub rho: Vec<f64>,
    pub mu: Vec<f64>,
    /// Fixed initial variances; drawn from the stationary gamma law when
    /// absent.
    #[serde(default)]
    pub v0: Option<Vec<f64>>,
}

impl Default for HestonParams {
    fn default() -> Self {
        Self {
            kappa: vec![3.0, 4.0, 5.0],
            theta: vec![0.09, 0.04, 0.06],
            eta: vec![0.3, 0.4, 0.3],
            rho: vec![-0.6, -0.4, -0.25],
            mu: vec![0.05, 0.03, 0.02],
            v0: None,
        }
    }
}

impl HestonParams {
    pub fn r(&self) -> usize {
        self.kappa.len()
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.r();
        if r == 0 {
            return Err(Error::param("at least one factor is required"));
        }
        let lens = [self.theta.len(), self.eta.len(), self.rho.len(), self.mu.len()];
        if lens.iter().any(|&l| l != r) || self.v0.as_ref().is_some_and(|v| v.len() != r) {
            return Err(Error::param("Heston parameter vectors differ in length"));
        }
        for j in 0..r {
            if !(self.kappa[j] > 0.0 && self.theta[j] > 0.0 && self.eta[j] >= 0.0) {
                return Err(Error::param(format!("factor {j}: kappa and theta must be positive, eta nonnegative")));
            }
            if self.rho[j].abs() >= 1.0 || !self.mu[j].is_finite() {
                return Err(Error::param(format!("factor {j}: need |rho| < 1 and finite mu")));
            }
        }
        if let Some(v0) = &self.v0 {
            if v0.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::param("initial variances must be nonnegative"));
            }
        }
        Ok(())
    }

    /// `2κθ ≥ η²` for every factor.
    pub fn feller_holds(&self) -> Vec<bool> {
        (0..self.r())
            .map(|j| 2.0 * self.kappa[j] * self.theta[j] >= self.eta[j] * self.eta[j])
            .collect()
    }

    fn draw_v0<R: Rng + ?Sized>(&self, j: usize, rng: &mut R) -> Result<f64> {
        if let Some(v0) = &self.v0 {
            return Ok(v0[j]);
        }
        let (k, th, eta) = (self.kappa[j], self.theta[j], self.eta[j]);
        if eta == 0.0 {
            return Ok(th);
        }
        let shape = 2.0 * k * th / (eta * eta);
        let scale = eta * eta / (2.0 * k);
        let g = Gamma::new(shape, scale).map_err(|e| Error::param(format!("gamma law: {e}")))?;
        Ok(g.sample(rng))
    }
}

#[derive(Debug, Clone)]
pub struct FactorPath {
    /// Observations on the coarse grid `h/n`, starting at zero.
    pub panel: PathPanel,
    /// Realized covariance over the fine Euler grid, the proxy for `[X, X]₁`.
    pub fine_qv: SymMatrix,
    /// `∫₀¹ v_t dt` per factor, left-point rule on the fine grid.
    pub integrated_variance: Vec<f64>,
}

/// Simulates `n` observation intervals on `[0, 1]`, each split into
/// `substeps` Euler steps.
pub fn simulate_heston_factors<R: Rng + ?Sized>(
    params: &HestonParams,
    n: usize,
    substeps: usize,
    rng: &mut R,
) -> Result<FactorPath> {
    params.validate()?;
    if n == 0 || substeps == 0 {
        return Err(Error::param("n and substeps must be positive"));
    }
    let r = params.r();
    let steps = n * substeps;
    let dt = 1.0 / steps as f64;
    let sdt = dt.sqrt();

    let mut v: Vec<f64> = (0..r).map(|j| params.draw_v0(j, rng)).collect::<Result<_>>()?;
    let mut levels = DMatrix::zeros(n + 1, r);
    let mut fine = DMatrix::zeros(steps, r);
    let mut x = vec![0.0; r];
    let mut iv = vec![0.0; r];
    for step in 0..steps {
        for j in 0..r {
            let zv: f64 = StandardNormal.sample(rng);
            let zp: f64 = StandardNormal.sample(rng);
            let rho = params.rho[j];
            let zx = rho * zv + (1.0 - rho * rho).sqrt() * zp;
            let vp = v[j].max(0.0);
            let dx = params.mu[j] * dt + vp.sqrt() * sdt * zx;
            x[j] += dx;
            fine[(step, j)] = dx;
            iv[j] += vp * dt;
            v[j] += params.kappa[j] * (params.theta[j] - vp) * dt + params.eta[j] * vp.sqrt() * sdt * zv;
        }
        if (step + 1) % substeps == 0 {
            let h = (step + 1) / substeps;
            for j in 0..r {
                levels[(h, j)] = x[j];
            }
        }
    }
    Ok(FactorPath {
        panel: PathPanel::new(levels)?,
        fine_qv: realized_cov_of_increments(&fine),
        integrated_variance: iv,
    })
}
