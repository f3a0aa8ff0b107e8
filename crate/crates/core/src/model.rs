//! Forward-model and covariance data types, the analytic MSE expressions and
//! the source-covariance estimators built on them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, hstack, LinalgError, Matrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: &'static str },

    #[error("covariance matrix is singular or not positive definite")]
    SingularCovariance,

    #[error("need at least 2 samples, got {0}")]
    InsufficientSamples(usize),

    #[error("composite source covariance required when interfering sources are present")]
    MissingCompositeCovariance,

    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Leadfields of the sources of interest, the interfering sources and the
/// background sources. `h_interf` and `h_background` may have zero columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardModel {
    h: Matrix,
    h_interf: Matrix,
    h_background: Matrix,
}

impl ForwardModel {
    pub fn new(h: Matrix, h_interf: Matrix, h_background: Matrix) -> Result<Self> {
        let m = h.nrows();
        if h.ncols() == 0 {
            return Err(ModelError::DimensionMismatch("no sources of interest".into()));
        }
        if h_interf.nrows() != m || h_background.nrows() != m {
            return Err(ModelError::DimensionMismatch(format!(
                "leadfield row counts differ: H {m}, H_I {}, H_b {}",
                h_interf.nrows(),
                h_background.nrows()
            )));
        }
        if m <= h.ncols() + h_interf.ncols() {
            return Err(ModelError::DimensionMismatch(format!(
                "need more sensors ({m}) than sources of interest plus interferers ({})",
                h.ncols() + h_interf.ncols()
            )));
        }
        for mat in [&h, &h_interf, &h_background] {
            linalg::ensure_finite(mat)?;
        }
        Ok(Self { h, h_interf, h_background })
    }

    /// Interference-free model without background leadfields.
    pub fn free(h: Matrix) -> Result<Self> {
        let m = h.nrows();
        Self::new(h, Matrix::zeros(m, 0), Matrix::zeros(m, 0))
    }

    pub fn with_interference(h: Matrix, h_interf: Matrix) -> Result<Self> {
        let m = h.nrows();
        Self::new(h, h_interf, Matrix::zeros(m, 0))
    }

    pub fn h(&self) -> &Matrix {
        &self.h
    }

    pub fn h_interf(&self) -> &Matrix {
        &self.h_interf
    }

    pub fn h_background(&self) -> &Matrix {
        &self.h_background
    }

    /// Sensor count.
    pub fn m(&self) -> usize {
        self.h.nrows()
    }

    /// Sources of interest.
    pub fn l(&self) -> usize {
        self.h.ncols()
    }

    /// Interfering sources.
    pub fn k(&self) -> usize {
        self.h_interf.ncols()
    }

    /// Background sources.
    pub fn p(&self) -> usize {
        self.h_background.ncols()
    }

    pub fn has_interference(&self) -> bool {
        self.k() > 0
    }

    /// Composite leadfield `[H H_I]`.
    pub fn composite(&self) -> Matrix {
        hstack(&self.h, &self.h_interf)
    }

    /// Same model with the interfering leadfields dropped.
    pub fn without_interference(&self) -> Self {
        let m = self.m();
        Self {
            h: self.h.clone(),
            h_interf: Matrix::zeros(m, 0),
            h_background: self.h_background.clone(),
        }
    }

    pub fn h_full_rank(&self) -> bool {
        linalg::rank_check(&self.h, linalg::RANK_REL_TOL) == self.l()
    }

    pub fn composite_full_rank(&self) -> bool {
        linalg::rank_check(&self.composite(), linalg::RANK_REL_TOL) == self.l() + self.k()
    }
}

/// Second-order statistics of a forward model.
///
/// `q` is always the covariance of the sources of interest. `q_composite`
/// is the covariance of `[q; q_I]` and is present only in the interference
/// model; its leading `l x l` block equals `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    pub q: Matrix,
    pub q_composite: Option<Matrix>,
    pub n: Matrix,
    pub r: Matrix,
}

impl CovarianceModel {
    /// Analytic interference-free statistics, `R = H Q H^T + N`.
    pub fn analytic_free(fm: &ForwardModel, q: Matrix, n: Matrix) -> Result<Self> {
        let mut cov = Self { r: Matrix::zeros(0, 0), q, q_composite: None, n };
        cov.r = assemble_r(&fm.without_interference(), &cov)?;
        Ok(cov)
    }

    /// Analytic interference statistics, `R = H_c Q_c H_c^T + N`.
    pub fn analytic_interference(fm: &ForwardModel, q_composite: Matrix, n: Matrix) -> Result<Self> {
        let l = fm.l();
        if q_composite.nrows() < l || !q_composite.is_square() {
            return Err(ModelError::DimensionMismatch("composite covariance too small".into()));
        }
        let q = q_composite.view((0, 0), (l, l)).into_owned();
        let mut cov = Self { r: Matrix::zeros(0, 0), q, q_composite: Some(q_composite), n };
        cov.r = assemble_r(fm, &cov)?;
        Ok(cov)
    }

    /// `c = tr(Q)`.
    pub fn signal_power(&self) -> f64 {
        self.q.trace()
    }
}

fn expect_shape(what: &str, a: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if a.shape() != (rows, cols) {
        return Err(ModelError::DimensionMismatch(format!(
            "{what}: expected {rows}x{cols}, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

fn require_spd(a: &Matrix, what: &'static str) -> Result<()> {
    linalg::check_spd(a).map_err(|e| match e {
        LinalgError::NotPositiveDefinite { .. } | LinalgError::NotSymmetric { .. } => {
            ModelError::NotPositiveDefinite { what }
        }
        other => other.into(),
    })
}

/// Measurement covariance from the source and noise covariances.
///
/// Uses `H_c Q_c H_c^T + N` when the model has interfering sources and
/// `cov.q_composite` is set, `H Q H^T + N` otherwise. `cov.r` is ignored.
pub fn assemble_r(fm: &ForwardModel, cov: &CovarianceModel) -> Result<Matrix> {
    let m = fm.m();
    expect_shape("N", &cov.n, m, m)?;
    require_spd(&cov.n, "N")?;
    let (lead, src) = match (&cov.q_composite, fm.has_interference()) {
        (Some(qc), true) => (fm.composite(), qc),
        (None, true) => return Err(ModelError::MissingCompositeCovariance),
        (_, false) => (fm.h().clone(), &cov.q),
    };
    expect_shape("source covariance", src, lead.ncols(), lead.ncols())?;
    require_spd(src, "source covariance")?;
    Ok(linalg::symmetrize(&(&lead * src * lead.transpose() + &cov.n)))
}

fn check_filter_shape(w: &Matrix, fm: &ForwardModel) -> Result<()> {
    expect_shape("W", w, fm.l(), fm.m())
}

/// Interference-free MSE `tr(W R W^T) - 2 tr(W H Q) + tr(Q)`.
pub fn mse_free(w: &Matrix, fm: &ForwardModel, cov: &CovarianceModel) -> Result<f64> {
    check_filter_shape(w, fm)?;
    expect_shape("R", &cov.r, fm.m(), fm.m())?;
    expect_shape("Q", &cov.q, fm.l(), fm.l())?;
    let output = (w * &cov.r * w.transpose()).trace();
    let cross = (w * fm.h() * &cov.q).trace();
    Ok(output - 2.0 * cross + cov.signal_power())
}

/// MSE in the interference model,
/// `tr(W R W^T) - 2 tr(W H_c E[q_c q^T]) + tr(Q)`, with `E[q_c q^T]` the
/// first `l` columns of `Q_c`. Without interferers this is [`mse_free`].
pub fn mse_int(w: &Matrix, fm: &ForwardModel, cov: &CovarianceModel) -> Result<f64> {
    if !fm.has_interference() {
        return mse_free(w, fm, cov);
    }
    check_filter_shape(w, fm)?;
    let qc = cov.q_composite.as_ref().ok_or(ModelError::MissingCompositeCovariance)?;
    let (l, lk) = (fm.l(), fm.l() + fm.k());
    expect_shape("Q_c", qc, lk, lk)?;
    expect_shape("R", &cov.r, fm.m(), fm.m())?;
    let cross_cov = qc.columns(0, l);
    let output = (w * &cov.r * w.transpose()).trace();
    let cross = (w * fm.composite() * cross_cov).trace();
    Ok(output - 2.0 * cross + cov.signal_power())
}

/// `(L^T R^{-1} L)^{-1} - (L^T N^{-1} L)^{-1}` for a full-column-rank leadfield `L`.
fn lemma_difference(lead: &Matrix, r: &Matrix, n: &Matrix) -> Result<Matrix> {
    let m = lead.nrows();
    expect_shape("R", r, m, m)?;
    expect_shape("N", n, m, m)?;
    let gram_inv = |cov: &Matrix| -> Result<Matrix> {
        let cov_inv = linalg::inv_pd(cov).map_err(|_| ModelError::SingularCovariance)?;
        let gram = linalg::symmetrize(&(lead.transpose() * cov_inv * lead));
        linalg::inv_pd(&gram).map_err(|_| ModelError::SingularCovariance)
    };
    Ok(linalg::symmetrize(&(gram_inv(r)? - gram_inv(n)?)))
}

/// Estimate of `Q` in the interference-free model from `R` and `N`.
pub fn estimate_q_free(fm: &ForwardModel, r: &Matrix, n: &Matrix) -> Result<Matrix> {
    lemma_difference(fm.h(), r, n)
}

/// Estimate of `Q` in the interference model: the leading `l x l` block of the
/// composite estimate computed on `H_c`.
pub fn estimate_q_int(fm: &ForwardModel, r: &Matrix, n: &Matrix) -> Result<Matrix> {
    let qc = lemma_difference(&fm.composite(), r, n)?;
    Ok(qc.view((0, 0), (fm.l(), fm.l())).into_owned())
}

/// Unbiased sample covariance of a `channels x time` record.
pub fn sample_covariance(x: &Matrix) -> Result<Matrix> {
    let t = x.ncols();
    if t < 2 {
        return Err(ModelError::InsufficientSamples(t));
    }
    let mean = x.column_mean();
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let scatter = &centered * centered.transpose();
    Ok(linalg::symmetrize(&(scatter / (t as f64 - 1.0))))
}

/// Average of per-trial sample covariances.
pub fn pooled_covariance<'a>(trials: impl IntoIterator<Item = &'a Matrix>) -> Result<Matrix> {
    let mut acc: Option<Matrix> = None;
    let mut count = 0usize;
    for trial in trials {
        let c = sample_covariance(trial)?;
        match acc.as_mut() {
            Some(a) if a.shape() == c.shape() => *a += c,
            Some(_) => return Err(ModelError::DimensionMismatch("trial channel counts differ".into())),
            None => acc = Some(c),
        }
        count += 1;
    }
    let acc = acc.ok_or(ModelError::InsufficientSamples(0))?;
    Ok(acc / count as f64)
}

/// Adds `factor * tr(C) / n` to the diagonal of `C`.
pub fn diagonal_load(c: &Matrix, factor: f64) -> Matrix {
    if factor == 0.0 {
        return c.clone();
    }
    let n = c.nrows();
    let load = factor * c.trace() / n as f64;
    c + Matrix::identity(n, n) * load
}

/// Role of a simulated time series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalRole {
    /// Source activity of interest.
    #[serde(rename = "SA")]
    Activity,
    /// Interfering activity correlated with the sources of interest.
    #[serde(rename = "IN")]
    Interference,
    /// Background brain activity.
    #[serde(rename = "BN")]
    Background,
    /// Sensor measurement noise.
    #[serde(rename = "MN")]
    Measurement,
}

/// A `sources x time` record tagged with its role.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSignal {
    pub samples: Matrix,
    pub role: SignalRole,
}

impl SourceSignal {
    pub fn new(samples: Matrix, role: SignalRole) -> Self {
        Self { samples, role }
    }

    pub fn channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }
}
