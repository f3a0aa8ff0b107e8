//! Seeded problem instances shared by the benchmarks.

use mvpure::random::{gaussian_matrix, rng, SimRng};
use mvpure::{CovarianceModel, ForwardModel, Matrix};

fn spd(n: usize, scale: f64, r: &mut SimRng) -> Matrix {
    let a = gaussian_matrix(n, n, r);
    (&a * a.transpose() / n as f64 + Matrix::identity(n, n) * 0.2) * scale
}

/// Random leadfields with `k` interferers and analytic covariances.
pub fn interference_instance(seed: u64, m: usize, l: usize, k: usize) -> (ForwardModel, CovarianceModel) {
    let mut r = rng(seed);
    let h = gaussian_matrix(m, l, &mut r);
    let hi = gaussian_matrix(m, k, &mut r);
    let fm = ForwardModel::with_interference(h, hi).expect("well-formed leadfields");
    let qc = spd(l + k, 1.0, &mut r);
    let n = spd(m, 0.5, &mut r);
    let cov = CovarianceModel::analytic_interference(&fm, qc, n).expect("consistent shapes");
    (fm, cov)
}

/// Problem sizes exercised by the filter benches as `(m, l, k)`.
pub const SIZES: [(usize, usize, usize); 3] = [(32, 4, 6), (64, 8, 12), (128, 13, 27)];
