//! Factor loadings and sparse residual designs.
//!
//! Design 1 is block diagonal with ten equicorrelated blocks. Design 2 reads
//! `I + D − A` of a Chung–Lu graph as the residual precision.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matcore::{sparsity_stats, spd_inverse, SparsityStats, SymMatrix};

pub const DESIGN1_BLOCKS: usize = 10;
pub const DESIGN1_CORRELATION: f64 = 0.25;
pub const DESIGN1_VARIANCE_RANGE: (f64, f64) = (0.2, 0.5);
pub const DEFAULT_LOADING_RANGES: [(f64, f64); 3] = [(0.25, 2.25), (-0.5, 0.5), (-0.5, 0.5)];

/// `d × r` loadings with column `k` i.i.d. uniform on `ranges[k]`.
pub fn gen_loadings<R: Rng + ?Sized>(d: usize, ranges: &[(f64, f64)], rng: &mut R) -> Result<DMatrix<f64>> {
    if ranges.iter().any(|&(lo, hi)| !(lo <= hi && lo.is_finite() && hi.is_finite())) {
        return Err(Error::param("loading ranges must be finite with lo <= hi"));
    }
    // filled row by row so that the draw order does not depend on storage
    let mut b = DMatrix::zeros(d, ranges.len());
    for i in 0..d {
        for (k, &(lo, hi)) in ranges.iter().enumerate() {
            b[(i, k)] = rng.random_range(lo..=hi);
        }
    }
    Ok(b)
}

/// A residual covariance together with its precision and the off-diagonal
/// support of the precision.
#[derive(Debug, Clone)]
pub struct ResidualDesign {
    pub sigma_z: SymMatrix,
    pub theta_z: SymMatrix,
    pub support: SparsityStats,
    /// Lower Cholesky factor of `sigma_z`.
    pub chol: DMatrix<f64>,
}

impl ResidualDesign {
    /// Completes a design from its covariance and precision.
    pub fn new(sigma_z: SymMatrix, theta_z: SymMatrix) -> Result<Self> {
        let chol = sigma_z
            .as_matrix()
            .clone()
            .cholesky()
            .ok_or_else(|| Error::DesignDegeneracy("residual covariance has no Cholesky factor".into()))?
            .l();
        let support = sparsity_stats(&theta_z, 0.0);
        Ok(Self {
            sigma_z,
            theta_z,
            support,
            chol,
        })
    }
}

/// Block-diagonal `Q` with `d/10`-sized blocks, variances `U[0.2, 0.5]` and
/// within-block correlation 0.25. The precision is inverted block by block in
/// closed form, so entries outside the blocks are exact zeros.
pub fn design1_residual_cov<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<ResidualDesign> {
    if d == 0 || d % DESIGN1_BLOCKS != 0 {
        return Err(Error::param(format!("design 1 needs d divisible by {DESIGN1_BLOCKS}, got {d}")));
    }
    let (lo, hi) = DESIGN1_VARIANCE_RANGE;
    let q: Vec<f64> = (0..d).map(|_| rng.random_range(lo..=hi)).collect();
    let b = d / DESIGN1_BLOCKS;
    let c = DESIGN1_CORRELATION;
    let a = 1.0 - c;
    // (aI + cJ)⁻¹ = (I − c/(a + bc)·J)/a
    let inv_diag = (1.0 - c / (a + b as f64 * c)) / a;
    let inv_off = -c / (a * (a + b as f64 * c));
    let mut sigma = SymMatrix::zeros(d);
    let mut theta = SymMatrix::zeros(d);
    for i in 0..d {
        for j in (i / b) * b..=i {
            let s = (q[i] * q[j]).sqrt();
            if i == j {
                sigma.set(i, i, q[i]);
                theta.set(i, i, inv_diag / q[i]);
            } else {
                sigma.set(i, j, c * s);
                theta.set(i, j, inv_off / s);
            }
        }
    }
    ResidualDesign::new(sigma, theta)
}

/// `w_i = c((i + i₀ − 1)/d)^{−1/(α−1)}` for `i = 1..d`, with
/// `c = (α−2)/(α−1)` and `i₀ = d(c/w_max)^{α−1}` so that `w_1 = w_max`.
pub fn chung_lu_weights(d: usize, alpha: f64, w_max: f64) -> Result<Vec<f64>> {
    if !(alpha > 2.0) || !(w_max > 0.0) || d == 0 {
        return Err(Error::param("Chung-Lu weights need alpha > 2, w_max > 0 and d >= 1"));
    }
    let c = (alpha - 2.0) / (alpha - 1.0);
    let df = d as f64;
    let i0 = df * (c / w_max).powf(alpha - 1.0);
    Ok((1..=d)
        .map(|i| c * ((i as f64 + i0 - 1.0) / df).powf(-1.0 / (alpha - 1.0)))
        .collect())
}

/// `⌊d^0.45⌋`
pub fn default_w_max(d: usize) -> f64 {
    (d as f64).powf(0.45).floor()
}

/// `min(1, w_i w_j / Σ_k w_k)`
pub fn edge_probability(weights: &[f64], i: usize, j: usize) -> f64 {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    (weights[i] * weights[j] / total).min(1.0)
}

/// Independent Bernoulli edges `i < j`.
pub fn chung_lu_graph<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Vec<(usize, usize)> {
    let d = weights.len();
    let total: f64 = weights.iter().sum();
    let mut edges = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            let p = if total > 0.0 { (weights[i] * weights[j] / total).min(1.0) } else { 0.0 };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// `I + D − A` for an undirected edge list.
pub fn graph_precision(d: usize, edges: &[(usize, usize)]) -> Result<SymMatrix> {
    let mut m = SymMatrix::identity(d);
    for &(i, j) in edges {
        if i == j || i >= d || j >= d {
            return Err(Error::param(format!("invalid edge ({i}, {j})")));
        }
        if m[(i, j)] != 0.0 {
            return Err(Error::param(format!("duplicate edge ({i}, {j})")));
        }
        m.set(i, j, -1.0);
        m.set(i, i, m[(i, i)] + 1.0);
        m.set(j, j, m[(j, j)] + 1.0);
    }
    Ok(m)
}

/// Design 2 from a fixed edge list. With `literal_covariance` the matrix
/// `I + D − A` is used as the covariance instead of the precision.
pub fn design2_from_edges(d: usize, edges: &[(usize, usize)], literal_covariance: bool) -> Result<ResidualDesign> {
    let m = graph_precision(d, edges)?;
    let inv = spd_inverse(&m).map_err(|_| Error::DesignDegeneracy("graph matrix is not invertible".into()))?;
    if literal_covariance {
        ResidualDesign::new(m, inv)
    } else {
        ResidualDesign::new(inv, m)
    }
}

pub fn design2_residual_cov<R: Rng + ?Sized>(
    d: usize,
    alpha: f64,
    literal_covariance: bool,
    rng: &mut R,
) -> Result<ResidualDesign> {
    if d < 2 {
        return Err(Error::param("design 2 needs d >= 2"));
    }
    let w = chung_lu_weights(d, alpha, default_w_max(d))?;
    let edges = chung_lu_graph(&w, rng);
    design2_from_edges(d, &edges, literal_covariance)
}
