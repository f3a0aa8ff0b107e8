//! Dense linear-algebra kernels shared by every filter construction.
//!
//! Everything here is a pure function of its inputs and operates on
//! [`Matrix`] (a heap-allocated `f64` matrix). Decompositions come from
//! `nalgebra`; this module adds the tolerance policy, ordering conventions
//! and error reporting the rest of the crate relies on.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use thiserror::Error;

/// Dense real matrix used throughout the crate.
pub type Matrix = DMatrix<f64>;

/// Relative symmetry tolerance for inputs declared symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Positive-definiteness threshold relative to the largest eigenvalue.
pub const PD_REL_TOL: f64 = 1e-12;

/// Default numerical-rank threshold relative to the largest singular value.
pub const RANK_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not symmetric (max |A - A^T| = {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("rank {rank} out of bounds [1, {max}]")]
    RankOutOfBounds { rank: usize, max: usize },

    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Orthogonal projector onto an eigen-subspace together with its basis.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSubspace {
    /// Symmetric idempotent projector `basis * basis^T`.
    pub projector: Matrix,
    /// Orthonormal eigenvectors spanning the subspace, one per column.
    pub basis: Matrix,
    /// Eigenvalues belonging to `basis`, ascending.
    pub eigenvalues_selected: Vec<f64>,
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted ascending.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub eigenvalues: Vec<f64>,
    /// Column `i` is the eigenvector of `eigenvalues[i]`.
    pub eigenvectors: Matrix,
}

impl SortedEigen {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Subspace of the `r` algebraically smallest eigenvalues.
    pub fn smallest(&self, r: usize) -> Result<EigenSubspace> {
        let n = self.dim();
        if r == 0 || r > n {
            return Err(LinalgError::RankOutOfBounds { rank: r, max: n });
        }
        let basis = self.eigenvectors.columns(0, r).into_owned();
        Ok(EigenSubspace {
            projector: &basis * basis.transpose(),
            basis,
            eigenvalues_selected: self.eigenvalues[..r].to_vec(),
        })
    }

    /// Subspace of the `r` largest eigenvalues (eigenvalues still reported ascending).
    pub fn largest(&self, r: usize) -> Result<EigenSubspace> {
        let n = self.dim();
        if r == 0 || r > n {
            return Err(LinalgError::RankOutOfBounds { rank: r, max: n });
        }
        let basis = self.eigenvectors.columns(n - r, r).into_owned();
        Ok(EigenSubspace {
            projector: &basis * basis.transpose(),
            basis,
            eigenvalues_selected: self.eigenvalues[n - r..].to_vec(),
        })
    }
}

pub fn ensure_finite(a: &Matrix) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite)
    }
}

fn ensure_square(a: &Matrix) -> Result<()> {
    if a.is_square() {
        Ok(())
    } else {
        Err(LinalgError::NotSquare { rows: a.nrows(), cols: a.ncols() })
    }
}

/// Largest absolute entry of `A - A^T`.
pub fn asymmetry(a: &Matrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Checks symmetry relative to the largest entry and returns `(A + A^T) / 2`.
pub fn symmetrize_checked(a: &Matrix) -> Result<Matrix> {
    ensure_square(a)?;
    ensure_finite(a)?;
    let scale = a.amax().max(1.0);
    let asym = asymmetry(a);
    if asym > SYMMETRY_TOL * scale {
        return Err(LinalgError::NotSymmetric { asymmetry: asym });
    }
    Ok(symmetrize(a))
}

pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

/// Symmetric eigendecomposition, eigenvalues ascending.
///
/// Ties keep the solver's column order after a stable sort, so the result is
/// deterministic for a given input.
pub fn sorted_eigen(a: &Matrix) -> Result<SortedEigen> {
    let sym = symmetrize_checked(a)?;
    let n = sym.nrows();
    if n == 0 {
        return Ok(SortedEigen { eigenvalues: Vec::new(), eigenvectors: Matrix::zeros(0, 0) });
    }
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = Matrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SortedEigen { eigenvalues, eigenvectors })
}

fn pd_eigen(a: &Matrix) -> Result<SortedEigen> {
    let eig = sorted_eigen(a)?;
    let (Some(&min), Some(&max)) = (eig.eigenvalues.first(), eig.eigenvalues.last()) else {
        return Ok(eig);
    };
    if max <= 0.0 || min <= PD_REL_TOL * max {
        return Err(LinalgError::NotPositiveDefinite { min_eigenvalue: min });
    }
    Ok(eig)
}

/// Errors unless `a` is symmetric positive definite under the crate tolerance.
pub fn check_spd(a: &Matrix) -> Result<()> {
    pd_eigen(a).map(|_| ())
}

fn spectral_function(eig: &SortedEigen, f: impl Fn(f64) -> f64) -> Matrix {
    let v = &eig.eigenvectors;
    let d = DVector::from_iterator(eig.dim(), eig.eigenvalues.iter().map(|&x| f(x)));
    let scaled = Matrix::from_fn(v.nrows(), v.ncols(), |r, c| v[(r, c)] * d[c]);
    symmetrize(&(scaled * v.transpose()))
}

/// The unique symmetric positive definite `B` with `B * B = A^{-1}`.
pub fn inv_sqrt_pd(a: &Matrix) -> Result<Matrix> {
    let eig = pd_eigen(a)?;
    Ok(spectral_function(&eig, |x| 1.0 / x.sqrt()))
}

/// Inverse of a symmetric positive definite matrix through its eigendecomposition.
pub fn inv_pd(a: &Matrix) -> Result<Matrix> {
    let eig = pd_eigen(a)?;
    Ok(spectral_function(&eig, |x| 1.0 / x))
}

fn svd_threshold(sv: &[f64], rows: usize, cols: usize) -> f64 {
    let smax = sv.iter().copied().fold(0.0, f64::max);
    smax * (rows.max(cols) as f64) * f64::EPSILON
}

/// Thin SVD with singular values in non-increasing order.
///
/// `u` is `m x q`, `vt` is `q x n` with `q = min(m, n)`. Columns of `u` (rows
/// of `vt`) paired with exactly zero singular values may be zero.
struct ThinSvd {
    u: Matrix,
    s: Vec<f64>,
    vt: Matrix,
}

impl ThinSvd {
    fn new(a: &Matrix) -> ThinSvd {
        let svd = SVD::new(a.clone(), true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let s: Vec<f64> = svd.singular_values.iter().copied().collect();
        let mut recon = u.clone();
        for (j, &sj) in s.iter().enumerate() {
            recon.column_mut(j).scale_mut(sj);
        }
        let err = (recon * &vt - a).norm();
        let tol = 1e3 * f64::EPSILON * a.norm() * (a.nrows().max(a.ncols()) as f64);
        // nalgebra occasionally returns inconsistent factors for inputs with
        // exactly zero singular values.
        let out = if err.is_finite() && err <= tol { ThinSvd { u, s, vt } } else { jacobi_svd(a) };
        out.sorted()
    }

    fn sorted(self) -> ThinSvd {
        let mut idx: Vec<usize> = (0..self.s.len()).collect();
        idx.sort_by(|&i, &j| self.s[j].total_cmp(&self.s[i]));
        if idx.iter().enumerate().all(|(k, &i)| k == i) {
            return self;
        }
        let u = Matrix::from_columns(&idx.iter().map(|&i| self.u.column(i).into_owned()).collect::<Vec<_>>());
        let vt = Matrix::from_rows(&idx.iter().map(|&i| self.vt.row(i).into_owned()).collect::<Vec<_>>());
        let s = idx.iter().map(|&i| self.s[i]).collect();
        ThinSvd { u, s, vt }
    }
}

/// One-sided Jacobi SVD.
fn jacobi_svd(a: &Matrix) -> ThinSvd {
    if a.nrows() < a.ncols() {
        let t = jacobi_svd(&a.transpose());
        return ThinSvd { u: t.vt.transpose(), s: t.s, vt: t.u.transpose() };
    }
    let n = a.ncols();
    let mut w = a.clone();
    let mut v = Matrix::identity(n, n);
    for _ in 0..100 {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let alpha = w.column(i).norm_squared();
                let beta = w.column(j).norm_squared();
                let gamma = w.column(i).dot(&w.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                for m in [&mut w, &mut v] {
                    for r in 0..m.nrows() {
                        let (x, y) = (m[(r, i)], m[(r, j)]);
                        m[(r, i)] = c * x - sn * y;
                        m[(r, j)] = sn * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let s: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    for (j, &sj) in s.iter().enumerate() {
        if sj > 0.0 {
            w.column_mut(j).unscale_mut(sj);
        }
    }
    ThinSvd { u: w, s, vt: v.transpose() }
}

/// Moore-Penrose pseudoinverse.
///
/// Singular values below `max(rows, cols) * eps * sigma_1` are treated as zero.
pub fn pinv(a: &Matrix) -> Matrix {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Matrix::zeros(n, m);
    }
    let svd = ThinSvd::new(a);
    let thresh = svd_threshold(&svd.s, m, n);
    let mut out = Matrix::zeros(n, m);
    for (i, &s) in svd.s.iter().enumerate() {
        if s > thresh && s > 0.0 {
            out += (svd.vt.row(i).transpose() / s) * svd.u.column(i).transpose();
        }
    }
    out
}

/// Orthogonal projector onto `range(A)`, or onto its orthogonal complement
/// when `complement` is set. An empty or zero `A` has an empty range.
pub fn proj_range(a: &Matrix, complement: bool) -> Matrix {
    let m = a.nrows();
    let range = range_basis(a, RANK_REL_TOL);
    let p = &range * range.transpose();
    if complement {
        Matrix::identity(m, m) - p
    } else {
        p
    }
}

/// Orthonormal basis of `range(A)` (left singular vectors above the rank threshold).
pub fn range_basis(a: &Matrix, rel_tol: f64) -> Matrix {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Matrix::zeros(m, 0);
    }
    let svd = ThinSvd::new(a);
    let rank = count_above(&svd.s, rel_tol);
    svd.u.columns(0, rank).into_owned()
}

fn count_above(sv: &[f64], rel_tol: f64) -> usize {
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Singular values in non-increasing order.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    ThinSvd::new(a).s
}

/// Best rank-`r` approximation in Frobenius norm from the leading `r` singular triplets.
pub fn truncated_svd(a: &Matrix, r: usize) -> Result<Matrix> {
    let (m, n) = a.shape();
    let max = m.min(n);
    if r == 0 || r > max {
        return Err(LinalgError::RankOutOfBounds { rank: r, max });
    }
    let svd = ThinSvd::new(a);
    let mut out = Matrix::zeros(m, n);
    for i in 0..r {
        out += (svd.u.column(i) * svd.s[i]) * svd.vt.row(i);
    }
    Ok(out)
}

/// Eigen-subspace of the `r` smallest eigenvalues of the symmetric `K`.
pub fn smallest_eig_subspace(k: &Matrix, r: usize) -> Result<EigenSubspace> {
    let eig = sorted_eigen(k)?;
    eig.smallest(r)
}

/// Number of singular values strictly above `tol * sigma_1`.
pub fn rank_check(a: &Matrix, tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    count_above(&ThinSvd::new(a).s, tol)
}

/// 2-norm condition number `sigma_1 / sigma_min`; infinite for rank-deficient input.
pub fn condition_number(a: &Matrix) -> f64 {
    let sv = singular_values(a);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Horizontal concatenation `[A B]`.
pub fn hstack(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.nrows(), b.nrows(), "hstack row mismatch");
    let mut out = Matrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

pub fn frobenius(a: &Matrix) -> f64 {
    a.norm()
}
