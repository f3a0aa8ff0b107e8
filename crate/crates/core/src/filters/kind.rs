use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Every filter the crate can build, including the zero and random sanity filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FilterKind {
    LcmvR,
    LcmvN,
    NullingR,
    NullingN,
    EigLcmv,
    Mmse,
    ZeroForcing,
    MvpIntMse,
    MvpIntR,
    MvpIntN,
    MvpFreeMse,
    MvpFreeR,
    MvpFreeN,
    MvpPatchR,
    MvpPatchN,
    NullingPatchR,
    NullingPatchN,
    Zero,
    Random,
}

impl FilterKind {
    pub const ALL: [FilterKind; 19] = [
        FilterKind::LcmvR,
        FilterKind::LcmvN,
        FilterKind::NullingR,
        FilterKind::NullingN,
        FilterKind::EigLcmv,
        FilterKind::Mmse,
        FilterKind::ZeroForcing,
        FilterKind::MvpIntMse,
        FilterKind::MvpIntR,
        FilterKind::MvpIntN,
        FilterKind::MvpFreeMse,
        FilterKind::MvpFreeR,
        FilterKind::MvpFreeN,
        FilterKind::MvpPatchR,
        FilterKind::MvpPatchN,
        FilterKind::NullingPatchR,
        FilterKind::NullingPatchN,
        FilterKind::Zero,
        FilterKind::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FilterKind::LcmvR => "LCMV_R",
            FilterKind::LcmvN => "LCMV_N",
            FilterKind::NullingR => "NULLING_R",
            FilterKind::NullingN => "NULLING_N",
            FilterKind::EigLcmv => "EIG_LCMV",
            FilterKind::Mmse => "MMSE",
            FilterKind::ZeroForcing => "ZERO_FORCING",
            FilterKind::MvpIntMse => "MVP_INT_MSE",
            FilterKind::MvpIntR => "MVP_INT_R",
            FilterKind::MvpIntN => "MVP_INT_N",
            FilterKind::MvpFreeMse => "MVP_FREE_MSE",
            FilterKind::MvpFreeR => "MVP_FREE_R",
            FilterKind::MvpFreeN => "MVP_FREE_N",
            FilterKind::MvpPatchR => "MVP_PATCH_R",
            FilterKind::MvpPatchN => "MVP_PATCH_N",
            FilterKind::NullingPatchR => "NULLING_PATCH_R",
            FilterKind::NullingPatchN => "NULLING_PATCH_N",
            FilterKind::Zero => "ZERO",
            FilterKind::Random => "RANDOM",
        }
    }

    /// Reduced-rank kinds whose rank is chosen by MSE minimization.
    pub fn is_reduced_rank(self) -> bool {
        matches!(
            self,
            FilterKind::MvpIntMse
                | FilterKind::MvpIntR
                | FilterKind::MvpIntN
                | FilterKind::MvpFreeMse
                | FilterKind::MvpFreeR
                | FilterKind::MvpFreeN
                | FilterKind::MvpPatchR
                | FilterKind::MvpPatchN
        )
    }

    /// Kinds derived for the model with correlated interferers.
    pub fn models_interference(self) -> bool {
        matches!(
            self,
            FilterKind::NullingR
                | FilterKind::NullingN
                | FilterKind::MvpIntMse
                | FilterKind::MvpIntR
                | FilterKind::MvpIntN
                | FilterKind::MvpPatchR
                | FilterKind::MvpPatchN
                | FilterKind::NullingPatchR
                | FilterKind::NullingPatchN
        )
    }

    pub fn is_sanity_check(self) -> bool {
        matches!(self, FilterKind::Zero | FilterKind::Random)
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown filter kind `{0}`")]
pub struct ParseKindError(pub String);

impl FromStr for FilterKind {
    type Err = ParseKindError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_uppercase().replace('-', "_");
        FilterKind::ALL
            .into_iter()
            .find(|k| k.as_str() == wanted)
            .ok_or_else(|| ParseKindError(s.to_string()))
    }
}

/// Which covariance a filter whitens with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CovMode {
    R,
    N,
}

/// Cost function of a reduced-rank filter: the MSE itself, output power
/// `tr(W R W^T)`, or reconstructed noise power `tr(W N W^T)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MvpVariant {
    Mse,
    R,
    N,
}

impl MvpVariant {
    pub fn cov_mode(self) -> CovMode {
        match self {
            MvpVariant::Mse | MvpVariant::R => CovMode::R,
            MvpVariant::N => CovMode::N,
        }
    }
}
