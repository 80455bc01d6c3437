//! Realized covariation of equidistantly observed paths.
//!
//! A [`PathPanel`] stores levels `Y_{h/n}` for `h = 0..=n`. The realized
//! covariance is `Σ_h ΔY_h ΔY_hᵀ` with `ΔY_h = Y_{h/n} − Y_{(h−1)/n}`.
//! Sums are accumulated per entry with Neumaier compensation over fixed
//! chunks of increments; chunks are reduced in index order so the result does
//! not depend on the number of worker threads.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matcore::SymMatrix;

/// Number of increments summed per parallel chunk.
pub const CHUNK_LEN: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct PathPanel {
    values: DMatrix<f64>,
}

impl PathPanel {
    /// `values` has one row per observation time (`n + 1` rows) and one
    /// column per component.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::input(format!(
                "a path panel needs at least two observations, got {}",
                values.nrows()
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::input("a path panel needs at least one component"));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let row = pos % values.nrows();
            return Err(Error::input(format!("non-finite value at observation {row}")));
        }
        Ok(Self { values })
    }

    /// Builds levels from returns by cumulation, starting at `initial`
    /// (zeros when `None`).
    pub fn from_returns(returns: &DMatrix<f64>, initial: Option<&[f64]>) -> Result<Self> {
        let dim = returns.ncols();
        let mut values = DMatrix::zeros(returns.nrows() + 1, dim);
        if let Some(init) = initial {
            if init.len() != dim {
                return Err(Error::param("initial level has the wrong length"));
            }
            for (j, &v) in init.iter().enumerate() {
                values[(0, j)] = v;
            }
        }
        for h in 0..returns.nrows() {
            for j in 0..dim {
                values[(h + 1, j)] = values[(h, j)] + returns[(h, j)];
            }
        }
        Self::new(values)
    }

    /// Number of increments.
    pub fn n(&self) -> usize {
        self.values.nrows() - 1
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.values * c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncrementSet {
    increments: DMatrix<f64>,
}

impl IncrementSet {
    pub fn n(&self) -> usize {
        self.increments.nrows()
    }

    pub fn dim(&self) -> usize {
        self.increments.ncols()
    }

    /// Row `h − 1` holds `ΔX_h`.
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.increments
    }

    /// Cumulates the increments from `initial`.
    pub fn reconstruct(&self, initial: &[f64]) -> Result<PathPanel> {
        PathPanel::from_returns(&self.increments, Some(initial))
    }
}

pub fn increments(panel: &PathPanel) -> IncrementSet {
    let v = panel.values();
    let n = panel.n();
    let increments = DMatrix::from_fn(n, panel.dim(), |h, j| v[(h + 1, j)] - v[(h, j)]);
    IncrementSet { increments }
}

#[derive(Clone, Copy, Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated `Σ_h a_h b_hᵀ` over the rows of `a` and `b`. When `symmetric`
/// is set only the lower triangle is accumulated and mirrored.
fn outer_product_sum(a: &DMatrix<f64>, b: &DMatrix<f64>, symmetric: bool) -> DMatrix<f64> {
    let (n, p, q) = (a.nrows(), a.ncols(), b.ncols());
    let chunk_sum = |start: usize| -> Vec<Neumaier> {
        let end = (start + CHUNK_LEN).min(n);
        let mut acc = vec![Neumaier::default(); p * q];
        for h in start..end {
            for j in 0..q {
                let bj = b[(h, j)];
                if bj == 0.0 {
                    continue;
                }
                let lo = if symmetric { j } else { 0 };
                for i in lo..p {
                    acc[j * p + i].add(a[(h, i)] * bj);
                }
            }
        }
        acc
    };
    let starts: Vec<usize> = (0..n).step_by(CHUNK_LEN).collect();
    let partials: Vec<Vec<Neumaier>> = if starts.len() > 1 {
        starts.par_iter().map(|&s| chunk_sum(s)).collect()
    } else {
        starts.iter().map(|&s| chunk_sum(s)).collect()
    };
    let mut total = vec![Neumaier::default(); p * q];
    for part in &partials {
        for (t, c) in total.iter_mut().zip(part) {
            t.add(c.sum);
            t.add(c.comp);
        }
    }
    let mut out = DMatrix::from_fn(p, q, |i, j| total[j * p + i].value());
    if symmetric {
        for j in 0..q {
            for i in (j + 1)..p {
                out[(j, i)] = out[(i, j)];
            }
        }
    }
    out
}

/// Realized covariance `Σ_h ΔY_h ΔY_hᵀ`.
pub fn realized_cov(panel: &PathPanel) -> SymMatrix {
    let inc = increments(panel);
    realized_cov_of_increments(inc.as_matrix())
}

/// Realized covariance from a matrix of increments (one row per interval).
pub fn realized_cov_of_increments(inc: &DMatrix<f64>) -> SymMatrix {
    SymMatrix::symmetrize(outer_product_sum(inc, inc, true))
}

/// Realized cross-covariation `Σ_h ΔA_h ΔB_hᵀ`, a `dimA × dimB` matrix.
pub fn realized_crosscov(panel_a: &PathPanel, panel_b: &PathPanel) -> Result<DMatrix<f64>> {
    if panel_a.n() != panel_b.n() {
        return Err(Error::param(format!(
            "panels have different numbers of increments ({} vs {})",
            panel_a.n(),
            panel_b.n()
        )));
    }
    let a = increments(panel_a);
    let b = increments(panel_b);
    Ok(outer_product_sum(a.as_matrix(), b.as_matrix(), false))
}
