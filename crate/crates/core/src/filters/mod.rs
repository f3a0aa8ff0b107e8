//! Spatial filter constructors.
//!
//! Full-rank baselines (LCMV, nulling, eigenspace-LCMV, MMSE, zero-forcing)
//! live here; the reduced-rank MV-PURE family and rank selection live in
//! [`mvpure`]. Every filter is an `l x m` matrix applied to sensor data as
//! `q_hat = W y`.
//!
//! Where a filter has both a normal-equation form and a whitened projector
//! form, the projector form is the one used; the normal-equation forms are
//! kept as [`lcmv_closed_form`] and [`nulling_closed_form`] for
//! cross-checking.

mod kind;
pub mod mvpure;

use thiserror::Error;

use crate::linalg::{self, EigenSubspace, LinalgError, Matrix};
use crate::model::{ForwardModel, ModelError};
use crate::random;

pub use kind::{CovMode, FilterKind, MvpVariant, ParseKindError};
pub use mvpure::{
    build_rank_selected, mvpure_free, mvpure_int, mvpure_patch, select_rank, RankFamily, RankSelection,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("covariance matrix is singular or not positive definite")]
    SingularCovariance,

    #[error("leadfield of the sources of interest is rank deficient")]
    RankDeficientLeadfield,

    #[error("composite leadfield [H H_I] is rank deficient")]
    CompositeRankDeficient,

    #[error("this filter variant needs the source covariance Q")]
    MissingQ,

    #[error("rank {rank} out of bounds [1, {max}]")]
    RankOutOfBounds { rank: usize, max: usize },

    #[error("patch rank {s} out of bounds [1, {k}]")]
    PatchRankOutOfBounds { s: usize, k: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, FilterError>;

/// Intermediate objects of a whitened-projector filter construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterDiagnostics {
    /// `G = R^{-1/2} H` or `F = N^{-1/2} H`.
    pub whitened_leadfield: Matrix,
    /// `G_I`/`F_I` (or their rank-`s` patch versions); `None` without interference.
    pub whitened_interference: Option<Matrix>,
    /// The symmetric matrix whose smallest eigenvectors span the filter's subspace
    /// (`K^(1)`..`K^(3)` or `L^(1)`..`L^(3)`).
    pub selection_matrix: Matrix,
    /// Matrix whose projected trace gives the MSE (`K^(1)`/`K^(4)` or `L^(1)`/`L^(4)`);
    /// needs `Q`.
    pub cost_matrix: Option<Matrix>,
    /// All eigenvalues of `selection_matrix`, ascending.
    pub eigenvalues: Vec<f64>,
    pub projector: EigenSubspace,
    /// Predicted MSE `tr(P cost) + c`.
    pub j_value: Option<f64>,
    /// False for patch-constrained filters, whose `j_value` is only approximate.
    pub j_exact: bool,
    /// `tr(Q)` when `Q` was supplied.
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFilter {
    pub w: Matrix,
    pub kind: FilterKind,
    /// Nominal rank: `r` for reduced-rank kinds, `l` for full-rank ones.
    pub rank: usize,
    pub diagnostics: Option<FilterDiagnostics>,
}

impl SpatialFilter {
    fn plain(w: Matrix, kind: FilterKind) -> Self {
        let rank = w.nrows();
        Self { w, kind, rank, diagnostics: None }
    }

    pub fn j_value(&self) -> Option<f64> {
        self.diagnostics.as_ref().and_then(|d| d.j_value)
    }

    /// `W Y` for a `sensors x time` record.
    pub fn apply(&self, y: &Matrix) -> Result<Matrix> {
        apply_filter(&self.w, y)
    }
}

/// `W Y`.
pub fn apply_filter(w: &Matrix, y: &Matrix) -> Result<Matrix> {
    if w.ncols() != y.nrows() {
        return Err(FilterError::DimensionMismatch(format!(
            "filter has {} columns but data has {} channels",
            w.ncols(),
            y.nrows()
        )));
    }
    Ok(w * y)
}

fn check_square(what: &str, a: &Matrix, m: usize) -> Result<()> {
    if a.shape() != (m, m) {
        return Err(FilterError::DimensionMismatch(format!(
            "{what}: expected {m}x{m}, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

/// Whitened projector construction shared by LCMV, nulling and MV-PURE.
///
/// With `M^{-1/2}` the whitener, `G = M^{-1/2} H`, `P` the projector onto
/// the complement of `range(M^{-1/2} H_null)` (identity without a nulling
/// set) and `X = (P G)^+`, this holds the full-rank filter `X P M^{-1/2}`
/// and the Gram matrix `X P X^T`.
#[derive(Debug, Clone)]
pub(crate) struct Whitened {
    pub g: Matrix,
    pub g_null: Option<Matrix>,
    pub full_rank: Matrix,
    pub gram: Matrix,
}

impl Whitened {
    pub fn new(h: &Matrix, h_null: Option<&Matrix>, cov: &Matrix) -> Result<Self> {
        let m = h.nrows();
        check_square("covariance", cov, m)?;
        let whitener = linalg::inv_sqrt_pd(cov).map_err(|e| match e {
            LinalgError::NonFinite | LinalgError::NotSquare { .. } => FilterError::Linalg(e),
            _ => FilterError::SingularCovariance,
        })?;
        let g = &whitener * h;
        let l = h.ncols();
        let (projected, complement, g_null) = match h_null.filter(|x| x.ncols() > 0) {
            Some(hn) => {
                let gn = &whitener * hn;
                let p = linalg::proj_range(&gn, true);
                (&p * &g, Some(p), Some(gn))
            }
            None => (g.clone(), None, None),
        };
        if linalg::rank_check(&projected, linalg::RANK_REL_TOL) < l {
            return Err(if g_null.is_some() {
                FilterError::CompositeRankDeficient
            } else {
                FilterError::RankDeficientLeadfield
            });
        }
        let x = linalg::pinv(&projected);
        let xp = match &complement {
            Some(p) => &x * p,
            None => x,
        };
        let gram = linalg::symmetrize(&(&xp * xp.transpose()));
        let full_rank = xp * whitener;
        Ok(Self { g, g_null, full_rank, gram })
    }
}

fn mode_kind(mode: CovMode, r: FilterKind, n: FilterKind) -> FilterKind {
    match mode {
        CovMode::R => r,
        CovMode::N => n,
    }
}

/// LCMV filter `(H^T M^{-1} H)^{-1} H^T M^{-1}`, computed as `G^+ M^{-1/2}`.
pub fn lcmv(fm: &ForwardModel, cov: &Matrix, mode: CovMode) -> Result<SpatialFilter> {
    let wh = Whitened::new(fm.h(), None, cov)?;
    Ok(SpatialFilter::plain(wh.full_rank, mode_kind(mode, FilterKind::LcmvR, FilterKind::LcmvN)))
}

/// Normal-equation form of the LCMV filter.
pub fn lcmv_closed_form(fm: &ForwardModel, cov: &Matrix) -> Result<Matrix> {
    closed_form(fm.h(), cov, fm.l())
}

/// `[I_l 0] (L^T M^{-1} L)^{-1} L^T M^{-1}` for a leadfield `L` whose first `l` columns are `H`.
fn closed_form(lead: &Matrix, cov: &Matrix, l: usize) -> Result<Matrix> {
    check_square("covariance", cov, lead.nrows())?;
    let cov_inv = linalg::inv_pd(cov).map_err(|_| FilterError::SingularCovariance)?;
    let lt_minv = lead.transpose() * cov_inv;
    let gram = linalg::symmetrize(&(&lt_minv * lead));
    let gram_inv = gram.lu().try_inverse().ok_or(FilterError::CompositeRankDeficient)?;
    Ok((gram_inv * lt_minv).rows(0, l).into_owned())
}

/// Nulling filter: unit gain on `H`, zero gain on `H_I`, minimum output
/// power. Computed as `(P G)^+ P M^{-1/2}`. Without interferers this is the
/// LCMV filter and is labeled as such.
pub fn nulling(fm: &ForwardModel, cov: &Matrix, mode: CovMode) -> Result<SpatialFilter> {
    if !fm.has_interference() {
        return lcmv(fm, cov, mode);
    }
    let wh = Whitened::new(fm.h(), Some(fm.h_interf()), cov)?;
    Ok(SpatialFilter::plain(wh.full_rank, mode_kind(mode, FilterKind::NullingR, FilterKind::NullingN)))
}

/// Normal-equation form `[I_l 0] (H_c^T M^{-1} H_c)^{-1} H_c^T M^{-1}` of the nulling filter.
pub fn nulling_closed_form(fm: &ForwardModel, cov: &Matrix) -> Result<Matrix> {
    closed_form(&fm.composite(), cov, fm.l())
}

/// LCMV(R) followed by the projector onto the `sig` leading eigenvectors of `R`.
pub fn eigenspace_lcmv(fm: &ForwardModel, r: &Matrix, sig: usize) -> Result<SpatialFilter> {
    let m = fm.m();
    if sig == 0 || sig > m {
        return Err(FilterError::RankOutOfBounds { rank: sig, max: m });
    }
    let base = lcmv(fm, r, CovMode::R)?;
    let signal = linalg::sorted_eigen(r)?.largest(sig)?;
    let w = base.w * signal.projector;
    Ok(SpatialFilter { w, kind: FilterKind::EigLcmv, rank: fm.l().min(sig), diagnostics: None })
}

/// Wiener filter `Q H^T R^{-1}`.
pub fn mmse(q: &Matrix, fm: &ForwardModel, r: &Matrix) -> Result<SpatialFilter> {
    let (m, l) = (fm.m(), fm.l());
    check_square("Q", q, l)?;
    check_square("R", r, m)?;
    let r_inv = linalg::inv_pd(r).map_err(|_| FilterError::SingularCovariance)?;
    let w = q * fm.h().transpose() * r_inv;
    Ok(SpatialFilter::plain(w, FilterKind::Mmse))
}

/// Zero-forcing filter `H^+`.
pub fn zero_forcing(fm: &ForwardModel) -> Result<SpatialFilter> {
    if !fm.h_full_rank() {
        return Err(FilterError::RankDeficientLeadfield);
    }
    Ok(SpatialFilter::plain(linalg::pinv(fm.h()), FilterKind::ZeroForcing))
}

/// All-zero sanity filter.
pub fn zero_filter(fm: &ForwardModel) -> SpatialFilter {
    SpatialFilter { w: Matrix::zeros(fm.l(), fm.m()), kind: FilterKind::Zero, rank: 0, diagnostics: None }
}

/// Sanity filter with independent standard normal entries.
pub fn random_filter(fm: &ForwardModel, seed: u64) -> SpatialFilter {
    let mut rng = random::rng(seed);
    SpatialFilter::plain(random::gaussian_matrix(fm.l(), fm.m(), &mut rng), FilterKind::Random)
}
