//! Multivariate autoregressive sources and partial directed coherence.
//!
//! A model of order `P` evolves as `x_t = sum_p A_p x_{t-p} + e_t` with
//! Gaussian innovations `e_t ~ N(0, Sigma)`. PDC is the column-normalized
//! magnitude of `A(f) = I - sum_p A_p exp(-i 2 pi f p)`.

use nalgebra::Cholesky;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Matrix};
use crate::model::{SignalRole, SourceSignal};
use crate::random;

pub const DEFAULT_ORDER: usize = 6;
pub const DEFAULT_MASK_FRACTION: f64 = 0.8;
pub const DEFAULT_N_FREQS: usize = 64;
/// Spectral radius generated models are scaled below.
pub const TARGET_RADIUS: f64 = 0.95;
pub const MAX_STABILIZATION_ATTEMPTS: usize = 100;
/// Relative rounding slack on the target radius after a rescale.
const RADIUS_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MvarError {
    #[error("invalid MVAR model: {0}")]
    InvalidModel(String),

    #[error("MVAR model is unstable (companion spectral radius {radius})")]
    Unstable { radius: f64 },

    #[error("could not stabilize MVAR coefficients after {0} rescaling attempts")]
    StabilizationFailed(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("need more than {needed} samples to fit, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("lagged regression is ill-conditioned")]
    IllConditionedRegression,

    #[error("transfer matrix column {column} vanishes at frequency {freq}")]
    ZeroColumn { column: usize, freq: f64 },

    #[error("PDC spectra have different shapes")]
    ShapeMismatch,
}

pub type Result<T> = std::result::Result<T, MvarError>;

#[derive(Debug, Clone, PartialEq)]
pub struct MvarModel {
    coeffs: Vec<Matrix>,
    innovation_cov: Matrix,
    mask: Matrix,
}

impl MvarModel {
    /// Validates shapes, the 0/1 mask (unit diagonal, masked coefficients
    /// exactly zero), the innovation covariance and stability.
    pub fn new(coeffs: Vec<Matrix>, innovation_cov: Matrix, mask: Matrix) -> Result<Self> {
        let order = coeffs.len();
        if order == 0 {
            return Err(MvarError::InvalidModel("order must be at least 1".into()));
        }
        let l = coeffs[0].nrows();
        if l == 0 || coeffs.iter().any(|a| a.shape() != (l, l)) {
            return Err(MvarError::InvalidModel("coefficient matrices must be l x l".into()));
        }
        if innovation_cov.shape() != (l, l) || mask.shape() != (l, l) {
            return Err(MvarError::InvalidModel("innovation covariance and mask must be l x l".into()));
        }
        if mask.iter().any(|&v| v != 0.0 && v != 1.0) || (0..l).any(|i| mask[(i, i)] != 1.0) {
            return Err(MvarError::InvalidModel("mask must be binary with unit diagonal".into()));
        }
        for a in &coeffs {
            linalg::ensure_finite(a).map_err(|_| MvarError::InvalidModel("non-finite coefficient".into()))?;
            if a.iter().zip(mask.iter()).any(|(&c, &m)| m == 0.0 && c != 0.0) {
                return Err(MvarError::InvalidModel("masked coefficient is non-zero".into()));
            }
        }
        linalg::check_spd(&innovation_cov)
            .map_err(|_| MvarError::InvalidModel("innovation covariance must be positive definite".into()))?;
        let model = Self { coeffs, innovation_cov, mask };
        let radius = model.spectral_radius();
        if radius.is_nan() || radius >= 1.0 {
            return Err(MvarError::Unstable { radius });
        }
        Ok(model)
    }

    /// Model with identity innovation covariance and an all-ones mask.
    pub fn from_coeffs(coeffs: Vec<Matrix>) -> Result<Self> {
        let l = coeffs.first().map_or(0, |a| a.nrows());
        Self::new(coeffs, Matrix::identity(l, l), Matrix::from_element(l, l, 1.0))
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn dim(&self) -> usize {
        self.innovation_cov.nrows()
    }

    pub fn coeffs(&self) -> &[Matrix] {
        &self.coeffs
    }

    pub fn innovation_cov(&self) -> &Matrix {
        &self.innovation_cov
    }

    pub fn mask(&self) -> &Matrix {
        &self.mask
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.coeffs)
    }
}

/// Block companion matrix `[A_1 .. A_P; I 0]`.
pub fn companion(coeffs: &[Matrix]) -> Matrix {
    let p = coeffs.len();
    let l = coeffs.first().map_or(0, |a| a.nrows());
    let n = l * p;
    let mut c = Matrix::zeros(n, n);
    for (i, a) in coeffs.iter().enumerate() {
        c.view_mut((0, i * l), (l, l)).copy_from(a);
    }
    for i in l..n {
        c[(i, i - l)] = 1.0;
    }
    c
}

pub fn spectral_radius(coeffs: &[Matrix]) -> f64 {
    let c = companion(coeffs);
    if c.is_empty() {
        return 0.0;
    }
    c.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Random masked stable model with identity innovation covariance.
///
/// Coefficients are drawn from `N(0, (0.5 / sqrt(l * order))^2)`, multiplied
/// by a mask with exactly `round(fraction * l * (l - 1))` zero off-diagonal
/// entries. While the companion spectral radius `rho` is at or above 0.95,
/// lag `p` is rescaled by `(0.95 / rho)^p`, which shrinks every root by
/// `0.95 / rho`.
pub fn generate_mvar(l: usize, order: usize, offdiag_zero_fraction: f64, seed: u64) -> Result<MvarModel> {
    if l == 0 || order == 0 {
        return Err(MvarError::InvalidParameter("l and order must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&offdiag_zero_fraction) {
        return Err(MvarError::InvalidParameter(format!("mask fraction {offdiag_zero_fraction} not in [0, 1]")));
    }
    let mut rng = random::rng(seed);
    let mut offdiag: Vec<(usize, usize)> =
        (0..l).flat_map(|i| (0..l).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    offdiag.shuffle(&mut rng);
    let zeros = (offdiag_zero_fraction * offdiag.len() as f64).round() as usize;
    let mut mask = Matrix::from_element(l, l, 1.0);
    for &(i, j) in &offdiag[..zeros] {
        mask[(i, j)] = 0.0;
    }

    let std = 0.5 / ((l * order) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let mut coeffs: Vec<Matrix> = (0..order)
        .map(|_| Matrix::from_fn(l, l, |_, _| normal.sample(&mut rng)).component_mul(&mask))
        .collect();

    for _ in 0..MAX_STABILIZATION_ATTEMPTS {
        let rho = spectral_radius(&coeffs);
        if rho < TARGET_RADIUS * (1.0 + RADIUS_SLACK) {
            return MvarModel::new(coeffs, Matrix::identity(l, l), mask);
        }
        // A_p -> c^p A_p maps every companion eigenvalue z to c z.
        let c = TARGET_RADIUS / rho;
        for (p, a) in coeffs.iter_mut().enumerate() {
            *a *= c.powi(p as i32 + 1);
        }
    }
    Err(MvarError::StabilizationFailed(MAX_STABILIZATION_ATTEMPTS))
}

/// Simulates `trials` independent realizations of `samples` steps each.
///
/// Trial `i` draws from stream `i` of `seed`; the first `10 * order` steps
/// of every trial are discarded as burn-in.
pub fn simulate_mvar(model: &MvarModel, samples: usize, trials: usize, seed: u64) -> Result<Vec<SourceSignal>> {
    if samples == 0 {
        return Err(MvarError::InvalidParameter("need at least one sample per trial".into()));
    }
    let chol = Cholesky::new(model.innovation_cov.clone())
        .ok_or_else(|| MvarError::InvalidModel("innovation covariance is not positive definite".into()))?;
    let lower = chol.l();
    let (l, order) = (model.dim(), model.order());
    let burn = 10 * order;
    let total = burn + samples;

    let out = (0..trials)
        .map(|trial| {
            let mut rng = random::stream(seed, trial as u64);
            let mut x = Matrix::zeros(l, total);
            for t in 0..total {
                let z = nalgebra::DVector::from_fn(l, |_, _| rng.sample::<f64, _>(StandardNormal));
                let mut xt = &lower * z;
                for (p, a) in model.coeffs.iter().enumerate() {
                    if t > p {
                        xt.gemv(1.0, a, &x.column(t - p - 1), 1.0);
                    }
                }
                x.set_column(t, &xt);
            }
            SourceSignal::new(x.columns(burn, samples).into_owned(), SignalRole::Activity)
        })
        .collect();
    Ok(out)
}

/// Interfering activity correlated with `sa`: row `j` is the negated SA row
/// `j mod l` plus white Gaussian noise with that row's sample variance.
pub fn derive_interference(sa: &SourceSignal, k: usize, seed: u64) -> Result<SourceSignal> {
    derive_interference_scaled(sa, k, 1.0, seed)
}

/// [`derive_interference`] with the noise standard deviation multiplied by `noise_scale`.
pub fn derive_interference_scaled(sa: &SourceSignal, k: usize, noise_scale: f64, seed: u64) -> Result<SourceSignal> {
    let (l, t) = sa.samples.shape();
    if k == 0 || l == 0 {
        return Err(MvarError::InvalidParameter("need k >= 1 and a non-empty source signal".into()));
    }
    let mut rng = random::rng(seed);
    let std: Vec<f64> = (0..l).map(|i| row_variance(&sa.samples, i).sqrt() * noise_scale).collect();
    let samples = Matrix::from_fn(k, t, |j, c| {
        let src = j % l;
        let noise: f64 = rng.sample(StandardNormal);
        -sa.samples[(src, c)] + std[src] * noise
    });
    Ok(SourceSignal::new(samples, SignalRole::Interference))
}

fn row_variance(x: &Matrix, row: usize) -> f64 {
    let t = x.ncols();
    if t < 2 {
        return 0.0;
    }
    let r = x.row(row);
    let mean = r.mean();
    r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t as f64 - 1.0)
}

/// Least-squares MVAR fit of one `channels x time` record.
pub fn fit_mvar(x: &Matrix, order: usize) -> Result<MvarModel> {
    fit_mvar_trials(std::slice::from_ref(x), order)
}

/// Least-squares MVAR fit pooling the lagged regressions of several trials.
///
/// Regressions never straddle trial boundaries. The innovation covariance
/// is the residual covariance. The fitted model carries an all-ones mask.
pub fn fit_mvar_trials(trials: &[Matrix], order: usize) -> Result<MvarModel> {
    if order == 0 {
        return Err(MvarError::InvalidParameter("order must be at least 1".into()));
    }
    let l = trials.first().map_or(0, |x| x.nrows());
    if l == 0 || trials.iter().any(|x| x.nrows() != l) {
        return Err(MvarError::InvalidParameter("trials must share a non-zero channel count".into()));
    }
    let total: usize = trials.iter().map(|x| x.ncols()).sum();
    let needed = 10 * order * l;
    if total <= needed || trials.iter().any(|x| x.ncols() <= order) {
        return Err(MvarError::InsufficientSamples { needed, got: total });
    }
    if trials.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
        return Err(MvarError::IllConditionedRegression);
    }

    let lp = l * order;
    let rows: usize = trials.iter().map(|x| x.ncols() - order).sum();
    let mut z = Matrix::zeros(lp, rows);
    let mut y = Matrix::zeros(l, rows);
    let mut col = 0;
    for x in trials {
        for t in order..x.ncols() {
            y.set_column(col, &x.column(t));
            for p in 0..order {
                z.view_mut((p * l, col), (l, 1)).copy_from(&x.column(t - p - 1));
            }
            col += 1;
        }
    }

    let szz = linalg::symmetrize(&(&z * z.transpose()));
    let eig = linalg::sorted_eigen(&szz).map_err(|_| MvarError::IllConditionedRegression)?;
    let (lo, hi) = (eig.eigenvalues[0], eig.eigenvalues[lp - 1]);
    if hi.is_nan() || hi <= 0.0 || lo <= 1e-12 * hi {
        return Err(MvarError::IllConditionedRegression);
    }
    let chol = Cholesky::new(szz).ok_or(MvarError::IllConditionedRegression)?;
    // B = Y Z^T (Z Z^T)^{-1}, solved as (Z Z^T) B^T = Z Y^T.
    let b = chol.solve(&(&z * y.transpose())).transpose();
    let resid = &y - &b * &z;
    let dof = (rows - lp).max(1) as f64;
    let innovation_cov = linalg::symmetrize(&(&resid * resid.transpose() / dof));

    let coeffs = (0..order).map(|p| b.columns(p * l, l).into_owned()).collect();
    MvarModel::new(coeffs, innovation_cov, Matrix::from_element(l, l, 1.0))
}

/// PDC values indexed `(i, j, f)`: influence of source `j` on source `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdcSpectrum {
    dim: usize,
    freqs: Vec<f64>,
    values: Vec<f64>,
}

impl PdcSpectrum {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Normalized frequencies in `[0, 0.5]`.
    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn get(&self, i: usize, j: usize, f: usize) -> f64 {
        self.values[(i * self.dim + j) * self.freqs.len() + f]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Rows `i,j,f,value` with a header; `f` is the normalized frequency.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,f,value\n");
        for i in 0..self.dim {
            for j in 0..self.dim {
                for (fi, f) in self.freqs.iter().enumerate() {
                    out.push_str(&format!("{i},{j},{f},{}\n", self.get(i, j, fi)));
                }
            }
        }
        out
    }
}

/// Partial directed coherence on `n_freqs` uniform points of `[0, 0.5]`.
pub fn pdc(model: &MvarModel, n_freqs: usize) -> Result<PdcSpectrum> {
    if n_freqs < 2 {
        return Err(MvarError::InvalidParameter("need at least 2 frequencies".into()));
    }
    let l = model.dim();
    let freqs: Vec<f64> = (0..n_freqs).map(|k| 0.5 * k as f64 / (n_freqs - 1) as f64).collect();
    let mut values = vec![0.0; l * l * n_freqs];
    let mut abar = vec![Complex64::new(0.0, 0.0); l * l];
    for (fi, &f) in freqs.iter().enumerate() {
        for i in 0..l {
            for j in 0..l {
                abar[i * l + j] = Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0);
            }
        }
        for (p, a) in model.coeffs.iter().enumerate() {
            let phase = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f * (p + 1) as f64);
            for i in 0..l {
                for j in 0..l {
                    abar[i * l + j] -= phase * a[(i, j)];
                }
            }
        }
        for j in 0..l {
            let norm = (0..l).map(|k| abar[k * l + j].norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(MvarError::ZeroColumn { column: j, freq: f });
            }
            for i in 0..l {
                values[(i * l + j) * n_freqs + fi] = abar[i * l + j].norm() / norm;
            }
        }
    }
    Ok(PdcSpectrum { dim: l, freqs, values })
}

/// Euclidean distance over all `(i, j, f)` entries.
pub fn pdc_error(truth: &PdcSpectrum, est: &PdcSpectrum) -> Result<f64> {
    if truth.dim != est.dim || truth.freqs.len() != est.freqs.len() {
        return Err(MvarError::ShapeMismatch);
    }
    Ok(truth.values.iter().zip(&est.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
}

/// JSON interchange form; matrices are lists of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MvarRecord {
    pub order: usize,
    pub coeffs: Vec<Vec<Vec<f64>>>,
    pub innovation_cov: Vec<Vec<f64>>,
    pub mask: Vec<Vec<u8>>,
}

fn rows(a: &Matrix) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let n = rows.len();
    let c = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != c) {
        return Err(MvarError::InvalidModel("ragged matrix".into()));
    }
    Ok(Matrix::from_fn(n, c, |i, j| rows[i][j]))
}

impl From<&MvarModel> for MvarRecord {
    fn from(m: &MvarModel) -> Self {
        Self {
            order: m.order(),
            coeffs: m.coeffs.iter().map(rows).collect(),
            innovation_cov: rows(&m.innovation_cov),
            mask: m.mask.row_iter().map(|r| r.iter().map(|&v| v as u8).collect()).collect(),
        }
    }
}

impl TryFrom<MvarRecord> for MvarModel {
    type Error = MvarError;

    fn try_from(rec: MvarRecord) -> Result<Self> {
        if rec.coeffs.len() != rec.order {
            return Err(MvarError::InvalidModel("order does not match coefficient count".into()));
        }
        let coeffs = rec.coeffs.iter().map(|c| from_rows(c)).collect::<Result<Vec<_>>>()?;
        let mask_rows: Vec<Vec<f64>> = rec.mask.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        MvarModel::new(coeffs, from_rows(&rec.innovation_cov)?, from_rows(&mask_rows)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_covariance;

    #[test]
    fn scalar_ar1_is_stable() {
        let m = MvarModel::from_coeffs(vec![Matrix::from_element(1, 1, 0.5)]).unwrap();
        assert!((m.spectral_radius() - 0.5).abs() < 1e-12);
        let bad = MvarModel::from_coeffs(vec![Matrix::from_element(1, 1, 1.2)]);
        assert!(matches!(bad, Err(MvarError::Unstable { .. })));
    }

    #[test]
    fn model_validation() {
        let mut mask = Matrix::from_element(2, 2, 1.0);
        mask[(0, 1)] = 0.0;
        let a = Matrix::from_row_slice(2, 2, &[0.1, 0.2, 0.0, 0.1]);
        assert!(MvarModel::new(vec![a], Matrix::identity(2, 2), mask.clone()).is_err());
        mask[(0, 0)] = 0.0;
        assert!(MvarModel::new(vec![Matrix::zeros(2, 2)], Matrix::identity(2, 2), mask).is_err());
        assert!(MvarModel::from_coeffs(vec![]).is_err());
    }

    #[test]
    fn generated_mask_and_stability() {
        let m = generate_mvar(13, 6, 0.8, 17).unwrap();
        assert!(m.spectral_radius() < 1.0);
        let zeros = m.mask().iter().filter(|&&v| v == 0.0).count();
        assert_eq!(zeros, 125);
        for a in m.coeffs() {
            for (c, mk) in a.iter().zip(m.mask().iter()) {
                if *mk == 0.0 {
                    assert_eq!(*c, 0.0);
                }
            }
        }
        let independent = generate_mvar(5, 3, 1.0, 3).unwrap();
        for a in independent.coeffs() {
            for i in 0..5 {
                for j in 0..5 {
                    if i != j {
                        assert_eq!(a[(i, j)], 0.0);
                    }
                }
            }
        }
        assert!(generate_mvar(3, 2, 1.5, 0).is_err());
    }

    #[test]
    fn white_output_for_zero_coefficients() {
        let cov = Matrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, 1.5]);
        let m = MvarModel::new(vec![Matrix::zeros(3, 3)], cov.clone(), Matrix::from_element(3, 3, 1.0)).unwrap();
        let x = simulate_mvar(&m, 100_000, 1, 5).unwrap();
        assert!((sample_covariance(&x[0].samples).unwrap() - cov).norm() < 0.05);
    }

    #[test]
    fn ar1_variance() {
        let m = MvarModel::from_coeffs(vec![Matrix::from_element(1, 1, 0.9)]).unwrap();
        let x = simulate_mvar(&m, 100_000, 1, 6).unwrap();
        let var = sample_covariance(&x[0].samples).unwrap()[(0, 0)];
        assert!((var - 1.0 / 0.19).abs() < 0.3, "{var}");
    }

    #[test]
    fn simulation_is_deterministic_with_independent_trials() {
        let m = generate_mvar(3, 2, 0.5, 7).unwrap();
        let a = simulate_mvar(&m, 200, 3, 11).unwrap();
        let b = simulate_mvar(&m, 200, 3, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].samples, a[1].samples);
        assert_eq!(a[0].samples.shape(), (3, 200));
    }

    #[test]
    fn interference_derivation() {
        let m = generate_mvar(3, 2, 0.5, 8).unwrap();
        let sa = simulate_mvar(&m, 100_000, 1, 9).unwrap().remove(0);
        let exact = derive_interference_scaled(&sa, 5, 0.0, 1).unwrap();
        for j in 0..5 {
            assert_eq!(exact.samples.row(j), -sa.samples.row(j % 3));
        }
        let inn = derive_interference(&sa, 3, 2).unwrap();
        assert_eq!(inn.role, SignalRole::Interference);
        for j in 0..3 {
            let noise = inn.samples.row(j) + sa.samples.row(j);
            let noise_var = row_variance(&Matrix::from_rows(&[noise.clone_owned()]), 0);
            let sa_var = row_variance(&sa.samples, j);
            assert!((noise_var / sa_var - 1.0).abs() < 0.05);
            let corr = correlation(&inn.samples, j, &sa.samples, j);
            assert!((corr + 1.0 / 2f64.sqrt()).abs() < 0.03, "{corr}");
        }
    }

    fn correlation(a: &Matrix, i: usize, b: &Matrix, j: usize) -> f64 {
        let x = a.row(i);
        let y = b.row(j);
        let (mx, my) = (x.mean(), y.mean());
        let cov: f64 = x.iter().zip(y.iter()).map(|(p, q)| (p - mx) * (q - my)).sum();
        let vx: f64 = x.iter().map(|p| (p - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|q| (q - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    }

    #[test]
    fn fit_recovers_generator() {
        let m = generate_mvar(4, 3, 0.5, 10).unwrap();
        let x = simulate_mvar(&m, 100_000, 1, 12).unwrap();
        let fit = fit_mvar(&x[0].samples, 3).unwrap();
        let err: f64 = m.coeffs().iter().zip(fit.coeffs()).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt();
        assert!(err < 0.05, "{err}");
        assert!((fit.innovation_cov() - Matrix::identity(4, 4)).norm() < 0.05);
    }

    #[test]
    fn fit_on_white_noise_is_near_zero() {
        let mut rng = random::rng(13);
        let x = random::gaussian_matrix(3, 100_000, &mut rng);
        let fit = fit_mvar(&x, 2).unwrap();
        assert!(fit.coeffs().iter().all(|a| a.amax() < 0.05));
    }

    #[test]
    fn fit_errors() {
        let mut rng = random::rng(14);
        let x = random::gaussian_matrix(3, 50, &mut rng);
        assert!(matches!(fit_mvar(&x, 2), Err(MvarError::InsufficientSamples { .. })));
        assert!(matches!(fit_mvar(&Matrix::zeros(2, 500), 2), Err(MvarError::IllConditionedRegression)));
    }

    #[test]
    fn pdc_identity_and_structural_zeros() {
        let m = MvarModel::from_coeffs(vec![Matrix::zeros(3, 3)]).unwrap();
        let s = pdc(&m, 8).unwrap();
        for f in 0..8 {
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(s.get(i, j, f), if i == j { 1.0 } else { 0.0 });
                }
            }
        }
        assert_eq!(s.freqs()[7], 0.5);

        let mut mask = Matrix::from_element(2, 2, 1.0);
        mask[(1, 0)] = 0.0;
        let a = Matrix::from_row_slice(2, 2, &[0.5, 0.3, 0.0, 0.4]);
        let m = MvarModel::new(vec![a], Matrix::identity(2, 2), mask).unwrap();
        let s = pdc(&m, 16).unwrap();
        assert!((0..16).all(|f| s.get(1, 0, f) == 0.0));
        assert!((0..16).all(|f| s.get(0, 1, f) > 0.0));
    }

    #[test]
    fn pdc_columns_are_normalized() {
        let m = generate_mvar(2, 4, 0.0, 15).unwrap();
        let s = pdc(&m, 64).unwrap();
        for f in 0..64 {
            for j in 0..2 {
                let col: f64 = (0..2).map(|i| s.get(i, j, f).powi(2)).sum();
                assert!((col - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn pdc_error_examples() {
        let a = pdc(&generate_mvar(3, 2, 0.3, 1).unwrap(), 10).unwrap();
        let b = pdc(&generate_mvar(3, 2, 0.3, 2).unwrap(), 10).unwrap();
        assert_eq!(pdc_error(&a, &a).unwrap(), 0.0);
        let zero = PdcSpectrum { dim: 3, freqs: a.freqs.clone(), values: vec![0.0; a.values.len()] };
        let norm = a.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert_eq!(pdc_error(&a, &zero).unwrap(), norm);
        let mut direct = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for f in 0..10 {
                    direct += (a.get(i, j, f) - b.get(i, j, f)).powi(2);
                }
            }
        }
        assert!((pdc_error(&a, &b).unwrap() - direct.sqrt()).abs() < 1e-12);
        let c = pdc(&generate_mvar(3, 2, 0.3, 1).unwrap(), 11).unwrap();
        assert!(matches!(pdc_error(&a, &c), Err(MvarError::ShapeMismatch)));
    }

    #[test]
    fn pdc_csv_shape() {
        let s = pdc(&generate_mvar(2, 1, 0.0, 3).unwrap(), 4).unwrap();
        let csv = s.to_csv();
        assert_eq!(csv.lines().count(), 1 + 2 * 2 * 4);
        assert!(csv.starts_with("i,j,f,value\n0,0,0,"));
    }

    #[test]
    fn json_round_trip() {
        let m = generate_mvar(3, 2, 0.5, 4).unwrap();
        let json = serde_json::to_string(&MvarRecord::from(&m)).unwrap();
        let back = MvarModel::try_from(serde_json::from_str::<MvarRecord>(&json).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn generated_models_are_stable_and_pdc_normalized(
                seed in any::<u64>(), l in 1usize..6, order in 1usize..7, frac in 0.0f64..=1.0
            ) {
                let m = generate_mvar(l, order, frac, seed).unwrap();
                prop_assert!(m.spectral_radius() < 1.0);
                let s = pdc(&m, 9).unwrap();
                for f in 0..9 {
                    for j in 0..l {
                        let col: f64 = (0..l).map(|i| s.get(i, j, f).powi(2)).sum();
                        prop_assert!((col - 1.0).abs() < 1e-8);
                    }
                }
            }
        }
    }
}
