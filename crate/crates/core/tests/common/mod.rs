//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use hfprec_core::SymMatrix;

pub fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Well-conditioned random SPD matrix: Wishart-like plus a ridge.
pub fn random_spd<R: Rng>(d: usize, rng: &mut R) -> SymMatrix {
    let a = gaussian_matrix(d, d + 3, rng);
    SymMatrix::symmetrize(&a * a.transpose() / (d + 3) as f64 + DMatrix::identity(d, d) * 0.2)
}

pub fn to_correlation(s: &SymMatrix) -> SymMatrix {
    let d = s.dim();
    SymMatrix::from_fn(d, |i, j| {
        if i == j {
            1.0
        } else {
            s[(i, j)] / (s[(i, i)] * s[(j, j)]).sqrt()
        }
    })
}

/// Triple loop `A·B`, deliberately avoiding the library's product kernels.
pub fn matmul_loops(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), b.ncols());
    for i in 0..a.nrows() {
        for j in 0..b.ncols() {
            let mut s = 0.0;
            for k in 0..a.ncols() {
                s += a[(i, k)] * b[(k, j)];
            }
            out[(i, j)] = s;
        }
    }
    out
}

/// Gauss–Jordan inverse with partial pivoting.
pub fn gauss_jordan_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = DMatrix::identity(n, n);
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[(x, c)].abs().total_cmp(&m[(y, c)].abs())).unwrap();
        m.swap_rows(c, p);
        inv.swap_rows(c, p);
        let piv = m[(c, c)];
        assert!(piv.abs() > 1e-300, "singular matrix in oracle inverse");
        for j in 0..n {
            m[(c, j)] /= piv;
            inv[(c, j)] /= piv;
        }
        for r in 0..n {
            if r != c {
                let f = m[(r, c)];
                if f != 0.0 {
                    for j in 0..n {
                        m[(r, j)] -= f * m[(c, j)];
                        inv[(r, j)] -= f * inv[(c, j)];
                    }
                }
            }
        }
    }
    inv
}

/// Explicit Kronecker product `A ⊗ B`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, q) = (b.nrows(), b.ncols());
    DMatrix::from_fn(a.nrows() * p, a.ncols() * q, |r, c| a[(r / p, c / q)] * b[(r % p, c % q)])
}

/// Column-major vectorization.
pub fn vec_of(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(m.len(), 1, m.as_slice())
}

fn log_det_chol(m: &DMatrix<f64>) -> Option<f64> {
    let c = m.clone().cholesky()?;
    Some(2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

fn smooth_objective(theta: &DMatrix<f64>, r: &DMatrix<f64>) -> Option<f64> {
    Some(theta.component_mul(r).sum() - log_det_chol(theta)?)
}

/// Proximal gradient with backtracking for
/// `min −log det Θ + tr(RΘ) + λ Σ_{i≠j} |Θ_ij|`.
/// Returns the iterate and the number of iterations used.
pub fn proximal_gradient_glasso(r: &SymMatrix, lambda: f64, max_iters: usize, tol: f64) -> (DMatrix<f64>, usize) {
    let d = r.dim();
    let rm = r.as_matrix();
    let mut theta = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 / rm[(i, i)] } else { 0.0 });
    let mut step: f64 = 1.0;
    for it in 0..max_iters {
        let inv = theta.clone().cholesky().expect("iterate stays positive definite").inverse();
        let grad = rm - &inv;
        let f0 = smooth_objective(&theta, rm).unwrap();
        let next = loop {
            let mut cand = &theta - &grad * step;
            for i in 0..d {
                for j in 0..d {
                    if i != j {
                        let v = cand[(i, j)];
                        cand[(i, j)] = v.signum() * (v.abs() - step * lambda).max(0.0);
                    }
                }
            }
            cand = (&cand + cand.transpose()) * 0.5;
            if let Some(f1) = smooth_objective(&cand, rm) {
                let diff = &cand - &theta;
                let quad = f0 + grad.component_mul(&diff).sum() + diff.norm_squared() / (2.0 * step);
                if f1 <= quad + 1e-15 * f0.abs() {
                    break cand;
                }
            }
            step *= 0.5;
            assert!(step > 1e-20, "step size collapsed");
        };
        let change = (&next - &theta).amax();
        theta = next;
        if change <= tol {
            return (theta, it + 1);
        }
    }
    (theta, max_iters)
}
