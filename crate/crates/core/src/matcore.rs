//! Dense symmetric-matrix primitives: norms, sparsity functionals, extreme
//! eigenvalues and a few factorizations shared by the estimators.

use std::collections::BTreeSet;
use std::ops::Index;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EIGEN_MAX_ITERS: usize = 10_000;

/// Dense symmetric matrix. Symmetry is exact: every setter writes both
/// triangles, and construction from a general matrix averages them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    inner: DMatrix<f64>,
}

impl SymMatrix {
    /// Wraps `m` after checking that it is square, finite and symmetric to
    /// within `tol` (absolute, entrywise). The stored matrix is `(m + mᵀ)/2`.
    pub fn from_matrix(m: DMatrix<f64>, tol: f64) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::param(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::param("matrix dimension must be positive"));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("matrix has non-finite entries"));
        }
        let asym = (&m - m.transpose()).amax();
        if asym > tol {
            return Err(Error::input(format!(
                "matrix is not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        Ok(Self::symmetrize(m))
    }

    /// Averages `m` with its transpose. Panics if `m` is not square.
    pub fn symmetrize(m: DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "symmetrize needs a square matrix");
        let t = m.transpose();
        Self {
            inner: (m + t) * 0.5,
        }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut inner = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            for i in j..dim {
                let v = f(i, j);
                inner[(i, j)] = v;
                inner[(j, i)] = v;
            }
        }
        Self { inner }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            inner: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            inner: DMatrix::zeros(dim, dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut inner = DMatrix::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            inner[(i, i)] = v;
        }
        Self { inner }
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.inner[(i, j)] = v;
        self.inner[(j, i)] = v;
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.inner[(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        self.inner.trace()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            inner: &self.inner * c,
        }
    }

    /// `D·A·D` for the diagonal matrix `D = diag(d)`.
    pub fn scale_diag(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.dim());
        Self::from_fn(self.dim(), |i, j| d[i] * self.inner[(i, j)] * d[j])
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        Self {
            inner: &self.inner + &other.inner,
        }
    }

    pub fn sub(&self, other: &SymMatrix) -> Self {
        Self {
            inner: &self.inner - &other.inner,
        }
    }

    /// Largest absolute off-diagonal entry.
    pub fn max_abs_off_diagonal(&self) -> f64 {
        let d = self.dim();
        let mut m = 0.0f64;
        for j in 0..d {
            for i in (j + 1)..d {
                m = m.max(self.inner[(i, j)].abs());
            }
        }
        m
    }
}

impl Index<(usize, usize)> for SymMatrix {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.inner[idx]
    }
}

/// Off-diagonal support of a symmetric matrix and the two sparsity
/// functionals derived from it: the number of nonzero off-diagonal entries
/// (counting both triangles) and the maximal vertex degree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityStats {
    pub support: BTreeSet<(usize, usize)>,
    pub s: usize,
    pub max_degree: usize,
}

impl SparsityStats {
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.support.contains(&(i, j))
    }
}

/// Entrywise ℓ_w norm; `w = f64::INFINITY` gives the max-modulus norm.
pub fn elementwise_norm(a: &DMatrix<f64>, w: f64) -> Result<f64> {
    if w.is_nan() || w < 1.0 {
        return Err(Error::param(format!("elementwise norm needs w >= 1, got {w}")));
    }
    if w.is_infinite() {
        return Ok(a.amax());
    }
    if w == 1.0 {
        return Ok(a.iter().map(|v| v.abs()).sum());
    }
    if w == 2.0 {
        return Ok(a.norm());
    }
    Ok(a.iter().map(|v| v.abs().powf(w)).sum::<f64>().powf(1.0 / w))
}

/// ℓ_w operator norm for w ∈ {1, 2, ∞}: maximal column sum, largest
/// singular value, maximal row sum.
pub fn operator_norm(a: &DMatrix<f64>, w: f64) -> Result<f64> {
    if w == 1.0 {
        Ok(a
            .column_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max))
    } else if w == f64::INFINITY {
        Ok(a
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max))
    } else if w == 2.0 {
        if a.is_empty() {
            return Ok(0.0);
        }
        Ok(singular_values(a)?[0])
    } else {
        Err(Error::param(format!(
            "operator norm is only supported for w in {{1, 2, inf}}, got {w}"
        )))
    }
}

/// Spectral norm of a symmetric matrix via its extreme eigenvalues.
pub fn spectral_norm_sym(a: &SymMatrix) -> Result<f64> {
    let (lo, hi) = eigen_range(a)?;
    Ok(hi.max(-lo))
}

/// Sparsity pattern of the off-diagonal part; entries with `|A_ij| <= zero_tol`
/// are treated as zero.
pub fn sparsity_stats(a: &SymMatrix, zero_tol: f64) -> SparsityStats {
    let d = a.dim();
    let mut support = BTreeSet::new();
    let mut max_degree = 0;
    for j in 0..d {
        let mut degree = 0;
        for i in 0..d {
            if i != j && a[(i, j)].abs() > zero_tol {
                support.insert((i, j));
                degree += 1;
            }
        }
        max_degree = max_degree.max(degree);
    }
    SparsityStats {
        s: support.len(),
        support,
        max_degree,
    }
}

pub fn symmetric_eigen(a: &SymMatrix) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(a.as_matrix().clone(), f64::EPSILON, EIGEN_MAX_ITERS)
        .ok_or_else(|| Error::numeric("symmetric eigensolver did not converge"))
}

/// Smallest and largest eigenvalue.
pub fn eigen_range(a: &SymMatrix) -> Result<(f64, f64)> {
    let eig = symmetric_eigen(a)?;
    let ev = &eig.eigenvalues;
    Ok((ev.min(), ev.max()))
}

/// Computes `B·X·Aᵀ`, whose vectorization is `(A ⊗ B)·vec(X)`.
pub fn kron_apply(a: &DMatrix<f64>, b: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if b.ncols() != x.nrows() || x.ncols() != a.ncols() {
        return Err(Error::param(format!(
            "kron_apply: incompatible shapes A {}x{}, B {}x{}, X {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(b * x * a.transpose())
}

/// Inverse of a symmetric positive definite matrix through its Cholesky factor.
pub fn spd_inverse(a: &SymMatrix) -> Result<SymMatrix> {
    let chol = a
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numeric("matrix is not positive definite"))?;
    Ok(SymMatrix::symmetrize(chol.inverse()))
}

/// `log det A` for a symmetric positive definite `A`.
pub fn log_det_spd(a: &SymMatrix) -> Result<f64> {
    let chol = a
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numeric("log-determinant of a matrix that is not positive definite"))?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// Eigen-decomposition of `[[0, A], [Aᵀ, 0]]`, whose eigenvalues are
/// `±σ_i(A)` padded with zeros; an eigenvector for `σ > 0` is `[u; v]/√2`.
/// Used in place of an SVD: nalgebra's bidiagonal SVD returns wrong factors
/// on some rank-deficient inputs, its symmetric eigensolver does not.
fn augmented_eigen(a: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let (m, n) = a.shape();
    let mut h = DMatrix::zeros(m + n, m + n);
    h.view_mut((0, m), (m, n)).copy_from(a);
    h.view_mut((m, 0), (n, m)).copy_from(&a.transpose());
    SymmetricEigen::try_new(h, f64::EPSILON, EIGEN_MAX_ITERS)
        .ok_or_else(|| Error::numeric("singular value computation did not converge"))
}

/// Singular values in decreasing order, `min(m, n)` of them.
pub fn singular_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let mut ev: Vec<f64> = augmented_eigen(a)?.eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev.truncate(a.nrows().min(a.ncols()));
    Ok(ev.into_iter().map(|v| v.max(0.0)).collect())
}

/// Moore–Penrose pseudo-inverse with singular values below `rel_tol·σ_max`
/// truncated.
pub fn pinv(a: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let (m, n) = a.shape();
    let mut out = DMatrix::zeros(n, m);
    if a.is_empty() {
        return Ok(out);
    }
    let eig = augmented_eigen(a)?;
    let smax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let cutoff = rel_tol * smax;
    for (k, &s) in eig.eigenvalues.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            let w = eig.eigenvectors.column(k);
            // v uᵀ / σ with u = √2·w_top, v = √2·w_bottom
            out += w.rows(m, n) * w.rows(0, m).transpose() * (2.0 / s);
        }
    }
    Ok(out)
}

/// Ratio of largest to smallest singular value (infinite when singular).
pub fn condition_number(a: &DMatrix<f64>) -> Result<f64> {
    let sv = singular_values(a)?;
    let smin = sv.last().copied().unwrap_or(0.0);
    Ok(if smin > 0.0 { sv[0] / smin } else { f64::INFINITY })
}

/// Inverse when the matrix is comfortably nonsingular, pseudo-inverse
/// otherwise. Returns the matrix and whether the plain inverse was used.
pub fn inverse_or_pinv(a: &DMatrix<f64>, max_condition: f64) -> Result<(DMatrix<f64>, bool)> {
    let cond = condition_number(a)?;
    if cond <= max_condition {
        if let Some(inv) = a.clone().try_inverse() {
            return Ok((inv, true));
        }
    }
    Ok((pinv(a, 1e-12)?, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn elementwise_norm_examples() {
        let z = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(elementwise_norm(&z, 2.0).unwrap(), 0.0);
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert_eq!(elementwise_norm(&i3, 1.0).unwrap(), 3.0);
        let a = dmatrix![1.0, -2.0; 3.0, -4.0];
        assert_eq!(elementwise_norm(&a, f64::INFINITY).unwrap(), 4.0);
        assert!((elementwise_norm(&a, 3.0).unwrap() - 100f64.powf(1.0 / 3.0)).abs() < 1e-12);
        assert!(matches!(elementwise_norm(&a, 0.5), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn operator_norm_examples() {
        let i4 = DMatrix::<f64>::identity(4, 4);
        for w in [1.0, 2.0, f64::INFINITY] {
            assert!((operator_norm(&i4, w).unwrap() - 1.0).abs() < 1e-14);
        }
        let a = dmatrix![0.0, 2.0; 0.0, 0.0];
        assert_eq!(operator_norm(&a, 1.0).unwrap(), 2.0);
        assert_eq!(operator_norm(&a, f64::INFINITY).unwrap(), 2.0);
        let s = dmatrix![2.0, 1.0; 1.0, 2.0];
        assert!((operator_norm(&s, 2.0).unwrap() - 3.0).abs() < 1e-12);
        assert!(operator_norm(&s, 3.0).is_err());
    }

    #[test]
    fn sparsity_examples() {
        let diag = SymMatrix::from_diagonal(&[1.0, 2.0, 3.0]);
        let st = sparsity_stats(&diag, 0.0);
        assert_eq!((st.s, st.max_degree), (0, 0));

        let mut one = SymMatrix::identity(3);
        one.set(0, 1, 0.5);
        let st = sparsity_stats(&one, 0.0);
        assert_eq!((st.s, st.max_degree), (2, 1));
        assert!(st.contains(0, 1) && st.contains(1, 0));

        let dense = SymMatrix::from_fn(4, |_, _| 1.0);
        let st = sparsity_stats(&dense, 0.0);
        assert_eq!((st.s, st.max_degree), (12, 3));

        let st = sparsity_stats(&one, 0.5);
        assert_eq!(st.s, 0);
    }

    #[test]
    fn eigen_range_examples() {
        let (lo, hi) = eigen_range(&SymMatrix::identity(5)).unwrap();
        assert!((lo - 1.0).abs() < 1e-14 && (hi - 1.0).abs() < 1e-14);
        let (lo, hi) = eigen_range(&SymMatrix::from_diagonal(&[0.5, 2.0])).unwrap();
        assert!((lo - 0.5).abs() < 1e-14 && (hi - 2.0).abs() < 1e-14);
        let s = SymMatrix::from_matrix(dmatrix![2.0, 1.0; 1.0, 2.0], 0.0).unwrap();
        let (lo, hi) = eigen_range(&s).unwrap();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 3.0).abs() < 1e-12);
    }

    #[test]
    fn kron_apply_identities() {
        let x = dmatrix![1.0, 2.0, 3.0; 4.0, 5.0, 6.0; 7.0, 8.0, 10.0];
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert_eq!(kron_apply(&i3, &i3, &x).unwrap(), x);
        let a = dmatrix![1.0, 0.5, 0.0; -1.0, 2.0, 1.0; 0.0, 0.3, 1.0];
        let b = dmatrix![2.0, 0.0, 1.0; 1.0, 1.0, 0.0; 0.0, -1.0, 3.0];
        let got = kron_apply(&a, &b, &i3).unwrap();
        assert!((got - &b * a.transpose()).amax() < 1e-14);
        assert!(kron_apply(&a, &b, &DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn rejects_asymmetric_input() {
        let m = dmatrix![1.0, 0.2; 0.1, 1.0];
        assert!(SymMatrix::from_matrix(m.clone(), 1e-3).is_err());
        let s = SymMatrix::from_matrix(m, 0.2).unwrap();
        assert_eq!(s.get(0, 1), s.get(1, 0));
    }

    #[test]
    fn pinv_of_rank_deficient() {
        let v = dmatrix![1.0; 2.0; 2.0];
        let a = &v * v.transpose();
        let p = pinv(&a, 1e-12).unwrap();
        // A⁺ = v vᵀ / |v|⁴ for a rank-one PSD matrix
        let expected = &a / 81.0;
        assert!((&p - &expected).amax() < 1e-12, "{p} vs {expected}");
        let (_, used_inverse) = inverse_or_pinv(&a, 1e12).unwrap();
        assert!(!used_inverse);
    }

    #[test]
    fn log_det_and_inverse() {
        let s = SymMatrix::from_matrix(dmatrix![4.0, 2.0; 2.0, 3.0], 0.0).unwrap();
        assert!((log_det_spd(&s).unwrap() - 8f64.ln()).abs() < 1e-12);
        let inv = spd_inverse(&s).unwrap();
        let prod = s.as_matrix() * inv.as_matrix();
        assert!((prod - DMatrix::identity(2, 2)).amax() < 1e-12);
    }
}
