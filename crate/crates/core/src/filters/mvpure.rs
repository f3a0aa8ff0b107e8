//! Reduced-rank MV-PURE filters and MSE-driven rank selection.
//!
//! Every filter in the family has the form `W_r = P_r W_full`, where
//! `W_full = (P G)^+ P M^{-1/2}` is the full-rank nulling (or LCMV) filter in
//! whitened coordinates and `P_r` projects onto the eigenvectors of the `r`
//! smallest eigenvalues of a symmetric `l x l` selection matrix. With
//! `X = (P G)^+` and `B = X P X^T`:
//!
//! | variant | whitener | selection | MSE cost          |
//! |---------|----------|-----------|-------------------|
//! | MSE     | `R`      | `B - 2Q`  | `B - 2Q`          |
//! | R       | `R`      | `B`       | `B - 2Q`          |
//! | N       | `N`      | `B`       | `B - Q`           |
//!
//! and the filter's MSE is `tr(P_r cost) + tr(Q)`. The interference-free
//! family is the same construction with an empty nulling set.

use crate::linalg::{self, Matrix, SortedEigen};
use crate::model::ForwardModel;

use super::{CovMode, FilterDiagnostics, FilterError, FilterKind, MvpVariant, Result, SpatialFilter, Whitened};

/// Which reduced-rank family a rank search is run over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankFamily {
    /// Nulling constraints on all interferers.
    Interference(MvpVariant),
    /// No interferers modeled.
    Free(MvpVariant),
    /// Nulling constraints on the rank-`s` approximation of `H_I`.
    Patch { mode: CovMode, s: usize },
}

impl RankFamily {
    pub fn kind(self) -> FilterKind {
        match self {
            RankFamily::Interference(MvpVariant::Mse) => FilterKind::MvpIntMse,
            RankFamily::Interference(MvpVariant::R) => FilterKind::MvpIntR,
            RankFamily::Interference(MvpVariant::N) => FilterKind::MvpIntN,
            RankFamily::Free(MvpVariant::Mse) => FilterKind::MvpFreeMse,
            RankFamily::Free(MvpVariant::R) => FilterKind::MvpFreeR,
            RankFamily::Free(MvpVariant::N) => FilterKind::MvpFreeN,
            RankFamily::Patch { mode: CovMode::R, .. } => FilterKind::MvpPatchR,
            RankFamily::Patch { mode: CovMode::N, .. } => FilterKind::MvpPatchN,
        }
    }

    fn variant(self) -> MvpVariant {
        match self {
            RankFamily::Interference(v) | RankFamily::Free(v) => v,
            RankFamily::Patch { mode: CovMode::R, .. } => MvpVariant::R,
            RankFamily::Patch { mode: CovMode::N, .. } => MvpVariant::N,
        }
    }
}

/// MSE curve over all ranks and its minimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct RankSelection {
    /// `(r, J(r))` for `r = 1..=l`.
    pub j_curve: Vec<(usize, f64)>,
    pub selected_rank: usize,
    /// Set when more than one rank attains the minimum; the smallest is kept.
    pub tie_policy_applied: bool,
}

impl RankSelection {
    pub fn min_j(&self) -> f64 {
        self.j_curve[self.selected_rank - 1].1
    }
}

/// Whitened quantities plus the selection/cost matrices of one family.
struct Prepared {
    whitened: Whitened,
    selection: Matrix,
    cost: Option<Matrix>,
    eig: SortedEigen,
    c: Option<f64>,
    exact: bool,
    kind: FilterKind,
}

fn check_q(q: &Matrix, l: usize) -> Result<()> {
    if q.shape() != (l, l) {
        return Err(FilterError::DimensionMismatch(format!("Q: expected {l}x{l}, got {}x{}", q.nrows(), q.ncols())));
    }
    linalg::ensure_finite(q)?;
    Ok(())
}

fn prepare(family: RankFamily, fm: &ForwardModel, cov: &Matrix, q: Option<&Matrix>) -> Result<Prepared> {
    let l = fm.l();
    if let Some(q) = q {
        check_q(q, l)?;
    }
    let variant = family.variant();
    if variant == MvpVariant::Mse && q.is_none() {
        return Err(FilterError::MissingQ);
    }

    let patch_lead;
    let (null_set, exact) = match family {
        RankFamily::Free(_) => (None, true),
        RankFamily::Interference(_) => (fm.has_interference().then(|| fm.h_interf()), true),
        RankFamily::Patch { s, .. } => {
            let k = fm.k();
            if k == 0 || s == 0 || s > k {
                return Err(FilterError::PatchRankOutOfBounds { s, k });
            }
            patch_lead = linalg::truncated_svd(fm.h_interf(), s)?;
            (Some(&patch_lead), false)
        }
    };
    let whitened = Whitened::new(fm.h(), null_set, cov)?;

    let gram = &whitened.gram;
    let shifted = |factor: f64, q: &Matrix| linalg::symmetrize(&(gram - q * factor));
    let selection = match (variant, q) {
        (MvpVariant::Mse, Some(q)) => shifted(2.0, q),
        _ => gram.clone(),
    };
    let cost = q.map(|q| match variant {
        MvpVariant::Mse | MvpVariant::R => shifted(2.0, q),
        MvpVariant::N => shifted(1.0, q),
    });
    let eig = linalg::sorted_eigen(&selection)?;
    Ok(Prepared { whitened, selection, cost, eig, c: q.map(|q| q.trace()), exact, kind: family.kind() })
}

fn check_rank(r: usize, l: usize) -> Result<()> {
    if r == 0 || r > l {
        return Err(FilterError::RankOutOfBounds { rank: r, max: l });
    }
    Ok(())
}

/// `v_i^T C v_i` for each eigenvector `v_i` of the selection matrix.
fn projected_costs(eig: &SortedEigen, cost: &Matrix) -> Vec<f64> {
    let v = &eig.eigenvectors;
    let cv = cost * v;
    (0..eig.dim()).map(|i| v.column(i).dot(&cv.column(i))).collect()
}

impl Prepared {
    fn build(self, r: usize) -> Result<SpatialFilter> {
        check_rank(r, self.eig.dim())?;
        let projector = self.eig.smallest(r)?;
        let w = &projector.projector * &self.whitened.full_rank;
        let j_value = match (&self.cost, self.c) {
            (Some(cost), Some(c)) => Some(projected_costs(&self.eig, cost)[..r].iter().sum::<f64>() + c),
            _ => None,
        };
        let diagnostics = FilterDiagnostics {
            whitened_leadfield: self.whitened.g,
            whitened_interference: self.whitened.g_null,
            selection_matrix: self.selection,
            cost_matrix: self.cost,
            eigenvalues: self.eig.eigenvalues.clone(),
            projector,
            j_value,
            j_exact: self.exact,
            c: self.c,
        };
        Ok(SpatialFilter { w, kind: self.kind, rank: r, diagnostics: Some(diagnostics) })
    }

    fn selection(&self) -> Result<RankSelection> {
        let (cost, c) = match (&self.cost, self.c) {
            (Some(cost), Some(c)) => (cost, c),
            _ => return Err(FilterError::MissingQ),
        };
        let mut j_curve = Vec::with_capacity(self.eig.dim());
        let mut acc = c;
        for (i, term) in projected_costs(&self.eig, cost).into_iter().enumerate() {
            acc += term;
            j_curve.push((i + 1, acc));
        }
        let min = j_curve.iter().map(|&(_, j)| j).fold(f64::INFINITY, f64::min);
        let tol = 1e-12 * min.abs().max(1.0);
        let ties: Vec<usize> = j_curve.iter().filter(|&&(_, j)| j - min <= tol).map(|&(r, _)| r).collect();
        Ok(RankSelection { selected_rank: ties[0], tie_policy_applied: ties.len() > 1, j_curve })
    }
}

/// MV-PURE filter with nulling constraints `W H_I = 0`.
///
/// `cov` must be `R` for the MSE and R variants and `N` for the N variant.
/// `q` is required by the MSE variant and, for all variants, to report the
/// predicted MSE. Without interferers this is [`mvpure_free`] (labeled as the
/// interference kind).
pub fn mvpure_int(variant: MvpVariant, fm: &ForwardModel, cov: &Matrix, q: Option<&Matrix>, r: usize) -> Result<SpatialFilter> {
    check_rank(r, fm.l())?;
    prepare(RankFamily::Interference(variant), fm, cov, q)?.build(r)
}

/// MV-PURE filter for the interference-free model.
pub fn mvpure_free(variant: MvpVariant, fm: &ForwardModel, cov: &Matrix, q: Option<&Matrix>, r: usize) -> Result<SpatialFilter> {
    check_rank(r, fm.l())?;
    prepare(RankFamily::Free(variant), fm, cov, q)?.build(r)
}

/// MV-PURE filter under patch constraints `W H_{I_s} = 0`, where `H_{I_s}`
/// is the best rank-`s` approximation of `H_I`. At `r = l` this is the
/// patch-constrained nulling filter. The reported `j_value` is approximate.
pub fn mvpure_patch(mode: CovMode, fm: &ForwardModel, s: usize, cov: &Matrix, q: Option<&Matrix>, r: usize) -> Result<SpatialFilter> {
    check_rank(r, fm.l())?;
    let mut filter = prepare(RankFamily::Patch { mode, s }, fm, cov, q)?.build(r)?;
    if r == fm.l() {
        filter.kind = match mode {
            CovMode::R => FilterKind::NullingPatchR,
            CovMode::N => FilterKind::NullingPatchN,
        };
    }
    Ok(filter)
}

/// Evaluates the closed-form MSE for every rank from one eigendecomposition
/// and returns the minimizing rank (smallest on ties). Needs `q`.
pub fn select_rank(family: RankFamily, fm: &ForwardModel, cov: &Matrix, q: Option<&Matrix>) -> Result<RankSelection> {
    prepare(family, fm, cov, q)?.selection()
}

/// Rank selection followed by construction at the selected rank.
pub fn build_rank_selected(
    family: RankFamily,
    fm: &ForwardModel,
    cov: &Matrix,
    q: Option<&Matrix>,
) -> Result<(SpatialFilter, RankSelection)> {
    let prepared = prepare(family, fm, cov, q)?;
    let selection = prepared.selection()?;
    let filter = prepared.build(selection.selected_rank)?;
    Ok((filter, selection))
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::super::{lcmv, nulling};
    use super::*;
    use crate::model::{mse_free, mse_int, CovarianceModel};
    use crate::random::{gaussian_matrix, rng};

    const VARIANTS: [MvpVariant; 3] = [MvpVariant::Mse, MvpVariant::R, MvpVariant::N];

    fn cov_for(variant: MvpVariant, cov: &CovarianceModel) -> &Matrix {
        match variant.cov_mode() {
            CovMode::R => &cov.r,
            CovMode::N => &cov.n,
        }
    }

    #[test]
    fn full_rank_collapses_to_nulling_and_lcmv() {
        let (fm, cov) = instance(21, 20, 4, 3);
        for v in VARIANTS {
            let m = cov_for(v, &cov);
            let w = mvpure_int(v, &fm, m, Some(&cov.q), 4).unwrap();
            let nl = nulling(&fm, m, v.cov_mode()).unwrap();
            assert!((w.w - nl.w).norm() < 1e-8);

            let free = fm.without_interference();
            let cov_f = CovarianceModel::analytic_free(&free, cov.q.clone(), cov.n.clone()).unwrap();
            let m = cov_for(v, &cov_f);
            let w = mvpure_free(v, &free, m, Some(&cov_f.q), 4).unwrap();
            assert!((w.w - lcmv(&free, m, v.cov_mode()).unwrap().w).norm() < 1e-8);
        }
    }

    #[test]
    fn j_value_matches_direct_mse_interference() {
        let (fm, cov) = instance(22, 24, 5, 3);
        for v in VARIANTS {
            for r in 1..=5 {
                let f = mvpure_int(v, &fm, cov_for(v, &cov), Some(&cov.q), r).unwrap();
                let direct = mse_int(&f.w, &fm, &cov).unwrap();
                assert!((f.j_value().unwrap() - direct).abs() < 1e-8, "{v:?} r={r}");
                assert!((&f.w * fm.h_interf()).norm() < 1e-8);
                assert!(linalg::rank_check(&f.w, 1e-8) <= r);
            }
        }
    }

    #[test]
    fn mse_variant_j_is_eigenvalue_partial_sum() {
        let (fm, cov) = instance(23, 18, 4, 2);
        for r in 1..=4 {
            let f = mvpure_int(MvpVariant::Mse, &fm, &cov.r, Some(&cov.q), r).unwrap();
            let d = f.diagnostics.as_ref().unwrap();
            let partial: f64 = d.eigenvalues[..r].iter().sum();
            let direct = mse_int(&f.w, &fm, &cov).unwrap();
            assert!((direct - (partial + cov.q.trace())).abs() < 1e-8);
        }
    }

    #[test]
    fn j_value_matches_direct_mse_free() {
        let (fm, cov) = free_instance(24, 16, 5);
        for v in VARIANTS {
            for r in 1..=5 {
                let f = mvpure_free(v, &fm, cov_for(v, &cov), Some(&cov.q), r).unwrap();
                let direct = mse_free(&f.w, &fm, &cov).unwrap();
                assert!((f.j_value().unwrap() - direct).abs() < 1e-8, "{v:?} r={r}");
            }
        }
    }

    #[test]
    fn projector_structure_and_output_decomposition() {
        let (fm, cov) = instance(25, 20, 4, 3);
        let full = nulling(&fm, &cov.r, CovMode::R).unwrap().w;
        let mut rg = rng(26);
        let q = gaussian_matrix(4, 40, &mut rg);
        let y = fm.h() * &q + fm.h_interf() * gaussian_matrix(3, 40, &mut rg);
        for r in 1..=4 {
            let f = mvpure_int(MvpVariant::R, &fm, &cov.r, Some(&cov.q), r).unwrap();
            let p = &f.diagnostics.as_ref().unwrap().projector.projector;
            assert!((&f.w - p * &full).norm() < 1e-8);
            assert!((f.apply(&y).unwrap() - p * &q).norm() < 1e-6);
        }
    }

    #[test]
    fn variant_r_and_mse_share_subspace_for_isotropic_q() {
        let (fm, cov) = free_instance(27, 14, 4);
        let q = Matrix::identity(4, 4) * 0.7;
        for r in 1..=4 {
            let a = mvpure_free(MvpVariant::R, &fm, &cov.r, Some(&q), r).unwrap();
            let b = mvpure_free(MvpVariant::Mse, &fm, &cov.r, Some(&q), r).unwrap();
            assert!((a.w - b.w).norm() < 1e-8);
        }
    }

    #[test]
    fn ill_conditioned_rank_reduction_helps() {
        let spectrum: Vec<f64> = (0..5).map(|i| 10f64.powf(-0.75 * i as f64)).collect();
        let mut rg = rng(28);
        let m = 24;
        let h = crate::forward::synthetic_leadfield(m, 5, &spectrum, 128).unwrap();
        let fm = ForwardModel::with_interference(h, gaussian_matrix(m, 2, &mut rg)).unwrap();
        let qc = spd(7, 1.0, &mut rg);
        let cov = CovarianceModel::analytic_interference(&fm, qc, Matrix::identity(m, m) * 0.01).unwrap();
        let curve: Vec<f64> = (1..=5)
            .map(|r| mse_int(&mvpure_int(MvpVariant::Mse, &fm, &cov.r, Some(&cov.q), r).unwrap().w, &fm, &cov).unwrap())
            .collect();
        let best = curve.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(best < curve[4]);

        let sel = select_rank(RankFamily::Interference(MvpVariant::Mse), &fm, &cov.r, Some(&cov.q)).unwrap();
        assert_eq!(sel.j_curve.len(), 5);
        let at_sel = curve[sel.selected_rank - 1];
        assert!(at_sel <= curve[4] + 1e-10);
        assert!((at_sel - best).abs() < 1e-8);
    }

    #[test]
    fn select_rank_noiseless_limit_keeps_full_rank() {
        let (fm, _) = free_instance(29, 12, 3);
        let q = Matrix::identity(3, 3);
        let n = Matrix::identity(12, 12) * 1e-8;
        let cov = CovarianceModel::analytic_free(&fm, q.clone(), n).unwrap();
        let sel = select_rank(RankFamily::Free(MvpVariant::Mse), &fm, &cov.r, Some(&q)).unwrap();
        assert_eq!(sel.selected_rank, 3);
    }

    #[test]
    fn select_rank_zero_q_picks_rank_one() {
        let (fm, cov) = instance(30, 15, 4, 2);
        let zero = Matrix::zeros(4, 4);
        let sel = select_rank(RankFamily::Interference(MvpVariant::Mse), &fm, &cov.r, Some(&zero)).unwrap();
        assert_eq!(sel.selected_rank, 1);
        assert!(sel.j_curve.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn rank_selected_build_matches_curve() {
        let (fm, cov) = instance(31, 20, 4, 3);
        for family in [
            RankFamily::Interference(MvpVariant::N),
            RankFamily::Free(MvpVariant::R),
            RankFamily::Patch { mode: CovMode::R, s: 2 },
        ] {
            let m = match family.variant().cov_mode() {
                CovMode::R => &cov.r,
                CovMode::N => &cov.n,
            };
            let (f, sel) = build_rank_selected(family, &fm, m, Some(&cov.q)).unwrap();
            assert_eq!(f.rank, sel.selected_rank);
            assert!((f.j_value().unwrap() - sel.min_j()).abs() < 1e-10);
            assert!(sel.j_curve.iter().all(|&(_, j)| sel.min_j() <= j));
        }
    }

    #[test]
    fn patch_constraints() {
        let (fm, cov) = instance(32, 60, 4, 9);
        for mode in [CovMode::R, CovMode::N] {
            let m = match mode {
                CovMode::R => &cov.r,
                CovMode::N => &cov.n,
            };
            let full = mvpure_patch(mode, &fm, 9, m, Some(&cov.q), 3).unwrap();
            let variant = if mode == CovMode::R { MvpVariant::R } else { MvpVariant::N };
            let int = mvpure_int(variant, &fm, m, Some(&cov.q), 3).unwrap();
            assert!((full.w - int.w).norm() < 1e-8);

            let patch = mvpure_patch(mode, &fm, 3, m, Some(&cov.q), 4).unwrap();
            assert_eq!(patch.kind, if mode == CovMode::R { FilterKind::NullingPatchR } else { FilterKind::NullingPatchN });
            let his = linalg::truncated_svd(fm.h_interf(), 3).unwrap();
            assert!((&patch.w * his).norm() < 1e-8);
            assert!((&patch.w * fm.h_interf()).norm() > 1e-4);
            assert!((&patch.w * fm.h() - Matrix::identity(4, 4)).norm() < 1e-8);
            assert!(!patch.diagnostics.unwrap().j_exact);
        }
        let a = mvpure_patch(CovMode::R, &fm, 3, &cov.r, None, 4).unwrap();
        let b = mvpure_patch(CovMode::N, &fm, 3, &cov.n, None, 4).unwrap();
        assert!((a.w - b.w).norm() > 1e-6);
    }

    #[test]
    fn errors() {
        let (fm, cov) = instance(33, 12, 3, 2);
        assert!(matches!(mvpure_int(MvpVariant::Mse, &fm, &cov.r, None, 2), Err(FilterError::MissingQ)));
        assert!(matches!(mvpure_int(MvpVariant::R, &fm, &cov.r, None, 0), Err(FilterError::RankOutOfBounds { .. })));
        assert!(matches!(mvpure_free(MvpVariant::N, &fm, &cov.n, None, 4), Err(FilterError::RankOutOfBounds { .. })));
        assert!(matches!(
            mvpure_patch(CovMode::R, &fm, 3, &cov.r, None, 2),
            Err(FilterError::PatchRankOutOfBounds { s: 3, k: 2 })
        ));
        assert!(matches!(
            select_rank(RankFamily::Free(MvpVariant::R), &fm, &cov.r, None),
            Err(FilterError::MissingQ)
        ));
        let r = mvpure_int(MvpVariant::R, &fm, &cov.r, None, 2).unwrap();
        assert!(r.j_value().is_none());
    }
}
