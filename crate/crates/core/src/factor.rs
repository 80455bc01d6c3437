//! Known-factor adjustment.
//!
//! With observed factors `X` and `Y = βX + Z`, the loadings are estimated by
//! `β̂ = Σ̂_YX Σ̂_X^†`, the residual covariance by `Σ̂_Z = Σ̂_Y − β̂Σ̂_Xβ̂ᵀ`, and
//! the residual precision by the weighted graphical Lasso on `Σ̂_Z`. The
//! covariance estimate of `Y` is `β̂Σ̂_Xβ̂ᵀ + Θ̂_Z⁻¹`; its inverse is formed
//! with `r × r` solves only.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::glasso::{solve_unweighted, solve_weighted, GlassoSolution, SolveOptions};
use crate::matcore::{condition_number, pinv, symmetric_eigen, SymMatrix};
use crate::quadcov::{realized_cov, realized_crosscov, PathPanel};

/// Above this condition number `Σ̂_X` is treated as singular.
pub const MAX_FACTOR_CONDITION: f64 = 1e12;
/// Relative singular-value cutoff of the pseudo-inverse fallback.
pub const PINV_REL_TOL: f64 = 1e-12;
/// Negative eigenvalues of `Σ̂_Z` down to `−PSD_REL_TOL·trace` are clipped.
pub const PSD_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct FactorFit {
    pub sigma_y: SymMatrix,
    pub sigma_x: SymMatrix,
    /// `d × r`
    pub sigma_yx: DMatrix<f64>,
    /// `d × r`
    pub beta_hat: DMatrix<f64>,
    pub sigma_z: SymMatrix,
    pub sigma_x_invertible: bool,
    pub condition_sigma_x: f64,
    pub n: usize,
}

impl FactorFit {
    pub fn d(&self) -> usize {
        self.sigma_y.dim()
    }

    pub fn r(&self) -> usize {
        self.sigma_x.dim()
    }

    /// `β̂Σ̂_Xβ̂ᵀ`
    pub fn systematic_cov(&self) -> SymMatrix {
        SymMatrix::symmetrize(&self.beta_hat * self.sigma_x.as_matrix() * self.beta_hat.transpose())
    }
}

/// Realized-covariance factor fit from level panels sharing the same grid.
pub fn fit(panel_y: &PathPanel, panel_x: &PathPanel) -> Result<FactorFit> {
    let sigma_yx = realized_crosscov(panel_y, panel_x)?;
    let sigma_y = realized_cov(panel_y);
    let sigma_x = realized_cov(panel_x);
    fit_from_moments(sigma_y, sigma_x, sigma_yx, panel_y.n())
}

/// Factor fit from arbitrary covariation estimates.
pub fn fit_from_moments(
    sigma_y: SymMatrix,
    sigma_x: SymMatrix,
    sigma_yx: DMatrix<f64>,
    n: usize,
) -> Result<FactorFit> {
    let (d, r) = (sigma_y.dim(), sigma_x.dim());
    if sigma_yx.nrows() != d || sigma_yx.ncols() != r {
        return Err(Error::param(format!(
            "cross-covariation is {}x{}, expected {d}x{r}",
            sigma_yx.nrows(),
            sigma_yx.ncols()
        )));
    }
    let condition_sigma_x = condition_number(sigma_x.as_matrix())?;
    let mut sigma_x_invertible = false;
    let mut beta_hat = None;
    if condition_sigma_x <= MAX_FACTOR_CONDITION {
        // β̂ᵀ = Σ̂_X⁻¹ Σ̂_XY
        if let Some(bt) = sigma_x.as_matrix().clone().lu().solve(&sigma_yx.transpose()) {
            beta_hat = Some(bt.transpose());
            sigma_x_invertible = true;
        }
    }
    let beta_hat = match beta_hat {
        Some(b) => b,
        None => &sigma_yx * pinv(sigma_x.as_matrix(), PINV_REL_TOL)?,
    };
    let systematic = &beta_hat * sigma_x.as_matrix() * beta_hat.transpose();
    let sigma_z = SymMatrix::symmetrize(sigma_y.as_matrix() - systematic);
    Ok(FactorFit {
        sigma_y,
        sigma_x,
        sigma_yx,
        beta_hat,
        sigma_z,
        sigma_x_invertible,
        condition_sigma_x,
        n,
    })
}

/// Checks that `sigma` is positive semidefinite up to `PSD_REL_TOL·trace`
/// and clips small negative eigenvalues to zero.
pub fn clip_to_psd(sigma: &SymMatrix) -> Result<SymMatrix> {
    for (i, v) in sigma.diagonal().into_iter().enumerate() {
        if v < 0.0 {
            return Err(Error::NotPositiveSemidefinite(format!(
                "diagonal entry {i} is negative ({v:.6e})"
            )));
        }
    }
    let eig = symmetric_eigen(sigma)?;
    let lo = eig.eigenvalues.min();
    let floor = -PSD_REL_TOL * sigma.trace();
    if lo < floor {
        return Err(Error::NotPositiveSemidefinite(format!(
            "minimum eigenvalue {lo:.6e} is below {floor:.6e}"
        )));
    }
    if lo >= 0.0 {
        return Ok(sigma.clone());
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let m = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    Ok(SymMatrix::symmetrize(m))
}

/// Residual precision via the weighted graphical Lasso on `Σ̂_Z`.
pub fn residual_precision(fit: &FactorFit, lambda: f64, opts: &SolveOptions) -> Result<GlassoSolution> {
    solve_weighted(&clip_to_psd(&fit.sigma_z)?, lambda, opts)
}

/// Residual precision via the unweighted graphical Lasso on `Σ̂_Z`.
pub fn residual_precision_unweighted(
    fit: &FactorFit,
    lambda: f64,
    opts: &SolveOptions,
) -> Result<GlassoSolution> {
    solve_unweighted(&clip_to_psd(&fit.sigma_z)?, lambda, opts)
}

/// `β̂Σ̂_Xβ̂ᵀ + Θ̂_Z⁻¹`
pub fn assemble_sigma_y(fit: &FactorFit, theta_z: &GlassoSolution) -> Result<SymMatrix> {
    if theta_z.w.dim() != fit.d() {
        return Err(Error::param("residual precision has the wrong dimension"));
    }
    Ok(fit.systematic_cov().add(&theta_z.w))
}

/// Inverse of [`assemble_sigma_y`] by the Woodbury identity, written as
/// `Θ − Θβ̂Σ̂_X(I + β̂ᵀΘβ̂Σ̂_X)⁻¹β̂ᵀΘ`. This agrees with
/// `Θ − Θβ̂(Σ̂_X⁻¹ + β̂ᵀΘβ̂)⁻¹β̂ᵀΘ` whenever `Σ̂_X` is invertible and stays exact
/// when it is not.
pub fn precision_of_sigma_y(fit: &FactorFit, theta_z: &GlassoSolution) -> Result<SymMatrix> {
    woodbury_precision(&theta_z.theta, &fit.beta_hat, &fit.sigma_x)
}

/// `(Θ⁻¹ + BCBᵀ)⁻¹` for a precision `Θ`, loadings `B` (`d × r`) and PSD `C`.
pub fn woodbury_precision(theta: &SymMatrix, b: &DMatrix<f64>, c: &SymMatrix) -> Result<SymMatrix> {
    let d = theta.dim();
    let r = c.dim();
    if b.nrows() != d || b.ncols() != r {
        return Err(Error::param("woodbury: loading matrix has the wrong shape"));
    }
    let tb = theta.as_matrix() * b; // d × r
    let inner = DMatrix::identity(r, r) + b.transpose() * &tb * c.as_matrix();
    let inner_inv = inner
        .try_inverse()
        .ok_or_else(|| Error::numeric("woodbury inner r x r matrix is singular"))?;
    let correction = &tb * c.as_matrix() * inner_inv * tb.transpose();
    Ok(SymMatrix::symmetrize(theta.as_matrix() - correction))
}
