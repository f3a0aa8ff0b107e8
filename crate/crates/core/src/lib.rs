//! Reduced-rank spatial filtering for sensor-array source reconstruction.
//!
//! The crate provides the MV-PURE family of reduced-rank filters (with and
//! without nulling constraints on correlated interferers, and with patch
//! constraints), the LCMV/nulling/MMSE/zero-forcing baselines, and the
//! simulation machinery used to benchmark them: synthetic leadfields, MVAR
//! source generation, partial directed coherence, and a seeded Monte-Carlo
//! experiment harness.
//!
//! ```
//! use mvpure::filters::{self, MvpVariant, RankFamily};
//! use mvpure::model::{CovarianceModel, ForwardModel};
//! use mvpure::linalg::Matrix;
//!
//! let h = mvpure::forward::synthetic_leadfield(16, 3, &[1.0, 0.1, 0.01], 7).unwrap();
//! let fm = ForwardModel::free(h).unwrap();
//! let cov = CovarianceModel::analytic_free(&fm, Matrix::identity(3, 3), Matrix::identity(16, 16) * 0.01).unwrap();
//! let (w, sel) = filters::build_rank_selected(RankFamily::Free(MvpVariant::Mse), &fm, &cov.r, Some(&cov.q)).unwrap();
//! assert_eq!(w.rank, sel.selected_rank);
//! ```

pub mod filters;
pub mod forward;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod mvar;
pub mod random;

pub use filters::{CovMode, FilterKind, MvpVariant, RankFamily, RankSelection, SpatialFilter};
pub use linalg::{EigenSubspace, Matrix};
pub use model::{CovarianceModel, ForwardModel, SignalRole, SourceSignal};
pub use mvar::{MvarModel, PdcSpectrum};
