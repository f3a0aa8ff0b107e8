use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, QSource, SnrPoint};
use super::snr::{mean_power, snr_gain};
use super::{HarnessError, Result};
use crate::filters::{self, CovMode, FilterKind, MvpVariant, RankFamily, SpatialFilter};
use crate::forward::{self, SensorArray, SourceGeometry, HEAD_RADIUS};
use crate::linalg::{self, Matrix};
use crate::model::{self, ForwardModel};
use crate::mvar::{self, MvarModel, PdcSpectrum};
use crate::random;

/// Radius band of cortical sources, as fractions of the head radius.
const CORTEX: (f64, f64) = (0.7, 0.8);
const DEEP: (f64, f64) = (0.1, 0.4);
/// Share of background sources placed in the cortical band.
const SHALLOW_BN_SHARE: f64 = 7.0 / 27.0;

// Sub-seed indices derived from each run seed.
const SEED_GEOMETRY: u64 = 0;
const SEED_PERTURB: u64 = 1;
const SEED_SA_MODEL: u64 = 2;
const SEED_SA: u64 = 3;
const SEED_IN: u64 = 4;
const SEED_BN_MODEL: u64 = 5;
const SEED_BN: u64 = 6;
const SEED_MN: u64 = 7;
const SEED_RANDOM_FILTER: u64 = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterOutcome {
    pub kind: FilterKind,
    /// Frobenius distance between reconstructed and true active-window activity, over all trials.
    pub reconstruction_error: Option<f64>,
    /// Absent when no stable MVAR model could be fitted to the reconstruction.
    pub pdc_error: Option<f64>,
    pub selected_rank: Option<usize>,
    pub j_value: Option<f64>,
    /// Set when the filter could not be built or applied.
    pub error: Option<String>,
}

impl FilterOutcome {
    fn failed(kind: FilterKind, msg: String) -> Self {
        Self { kind, reconstruction_error: None, pdc_error: None, selected_rank: None, j_value: None, error: Some(msg) }
    }

    pub fn is_failure(&self) -> bool {
        self.error.is_some()
    }
}

/// Outcome of one run at one SNR point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub snr: SnrPoint,
    /// Condition numbers of the (perturbed) leadfields handed to the filters.
    pub cond_h: f64,
    pub cond_hc: f64,
    pub outcomes: Vec<FilterOutcome>,
    pub elapsed_ms: f64,
}

pub fn run_seed(master_seed: u64, run: usize) -> u64 {
    random::derive_seed(master_seed, run as u64)
}

/// Every run at every SNR point, ordered by run then SNR point. Runs execute
/// on the current rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunResult>> {
    cfg.validate()?;
    let per_run: Vec<Result<Vec<RunResult>>> = (0..cfg.n_runs).into_par_iter().map(|run| simulate_run(cfg, run)).collect();
    let mut out = Vec::with_capacity(cfg.n_runs * cfg.snr_points().len());
    for r in per_run {
        out.extend(r?);
    }
    Ok(out)
}

/// [`run_experiment`] on a dedicated pool of `jobs` threads.
pub fn run_experiment_with_jobs(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<Vec<RunResult>> {
    match jobs {
        None => run_experiment(cfg),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| HarnessError::Io(e.to_string()))?
            .install(|| run_experiment(cfg)),
    }
}

/// One run: geometry and signals are drawn once and reused at every SNR point.
pub fn simulate_run(cfg: &ExperimentConfig, run: usize) -> Result<Vec<RunResult>> {
    let seed = run_seed(cfg.master_seed, run);
    let scene = Scene::build(cfg, seed)?;
    cfg.snr_points()
        .into_iter()
        .map(|pt| {
            let start = Instant::now();
            let outcomes = scene.evaluate(cfg, pt)?;
            Ok(RunResult {
                run,
                seed,
                snr: pt,
                cond_h: scene.cond_h,
                cond_hc: scene.cond_hc,
                outcomes,
                elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            })
        })
        .collect()
}

/// True active-window source activity of one run, one `l x half` matrix per trial.
pub fn source_activity(cfg: &ExperimentConfig, run: usize) -> Result<Vec<Matrix>> {
    cfg.validate()?;
    Ok(Scene::build(cfg, run_seed(cfg.master_seed, run))?.sa)
}

struct Scene {
    truth: ForwardModel,
    estimate: ForwardModel,
    sa_pdc: PdcSpectrum,
    /// `l x half` per trial.
    sa: Vec<Matrix>,
    /// `k x half` per trial.
    inn: Vec<Matrix>,
    /// `p x samples_per_trial` per trial.
    bn: Vec<Matrix>,
    mn_seed: u64,
    random_seed: u64,
    powers: Powers,
    cond_h: f64,
    cond_hc: f64,
}

/// Active-window sensor powers of each component before scaling.
struct Powers {
    sa: f64,
    inn: f64,
    bn: f64,
    mn: f64,
}

fn shell(count: usize, band: (f64, f64), rng: &mut random::SimRng) -> Result<SourceGeometry> {
    Ok(SourceGeometry::sample_shell(count, band.0 * HEAD_RADIUS, band.1 * HEAD_RADIUS, rng)?)
}

impl Scene {
    fn build(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        let sub = |i| random::derive_seed(seed, i);
        let (l, k, p) = (cfg.l, cfg.k, cfg.p);
        let half = cfg.samples_per_trial / 2;

        let sensors = SensorArray::fibonacci(cfg.m);
        let mut g = random::rng(sub(SEED_GEOMETRY));
        let cortex = shell(l + k, CORTEX, &mut g)?;
        let shallow = ((p as f64 * SHALLOW_BN_SHARE).round() as usize).min(p);
        let background = shell(shallow, CORTEX, &mut g)?.concat(&shell(p - shallow, DEEP, &mut g)?);
        let moved = forward::perturb_geometry(&cortex, cfg.perturb_shift_m, cfg.perturb_angle_rad, sub(SEED_PERTURB))?;

        let lead = forward::spherical_leadfield(&cortex, &sensors, cfg.conductivity)?;
        let lead_est = forward::spherical_leadfield(&moved, &sensors, cfg.conductivity)?;
        let h_b = forward::spherical_leadfield(&background, &sensors, cfg.conductivity)?;
        let split = |a: &Matrix| (a.columns(0, l).into_owned(), a.columns(l, k).into_owned());
        let (h, h_i) = split(&lead);
        let truth = ForwardModel::new(h, h_i, h_b)?;
        let (h, h_i) = split(&lead_est);
        let estimate = ForwardModel::with_interference(h, h_i)?;

        let sa_model = mvar::generate_mvar(l, cfg.mvar_order, cfg.mask_fraction, sub(SEED_SA_MODEL))?;
        let sa_pdc = mvar::pdc(&sa_model, cfg.n_freqs)?;
        let sa: Vec<Matrix> = samples(&sa_model, half, cfg.n_trials, sub(SEED_SA))?;
        let inn = sa
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let s = model::SourceSignal::new(x.clone(), model::SignalRole::Activity);
                Ok(mvar::derive_interference(&s, k, random::derive_seed(sub(SEED_IN), i as u64))?.samples)
            })
            .collect::<Result<Vec<_>>>()?;
        let bn_model = mvar::generate_mvar(p, cfg.mvar_order, 0.0, sub(SEED_BN_MODEL))?;
        let bn = samples(&bn_model, cfg.samples_per_trial, cfg.n_trials, sub(SEED_BN))?;

        let mut scene = Self {
            cond_h: linalg::condition_number(estimate.h()),
            cond_hc: linalg::condition_number(&estimate.composite()),
            truth,
            estimate,
            sa_pdc,
            sa,
            inn,
            bn,
            mn_seed: sub(SEED_MN),
            random_seed: sub(SEED_RANDOM_FILTER),
            powers: Powers { sa: 0.0, inn: 0.0, bn: 0.0, mn: 0.0 },
        };
        scene.powers = scene.measure_powers(half);
        Ok(scene)
    }

    fn measurement_noise(&self, trial: usize, m: usize, len: usize) -> Matrix {
        let mut rng = random::stream(self.mn_seed, trial as u64);
        random::gaussian_matrix(m, len, &mut rng)
    }

    fn measure_powers(&self, half: usize) -> Powers {
        let t = &self.truth;
        let ysa: Vec<Matrix> = self.sa.iter().map(|x| t.h() * x).collect();
        let yin: Vec<Matrix> = self.inn.iter().map(|x| t.h_interf() * x).collect();
        let ybn: Vec<Matrix> = self.bn.iter().map(|x| t.h_background() * x.columns(half, half)).collect();
        let mn: Vec<Matrix> = (0..self.sa.len())
            .map(|i| self.measurement_noise(i, t.m(), 2 * half).columns(half, half).into_owned())
            .collect();
        Powers { sa: mean_power(&ysa), inn: mean_power(&yin), bn: mean_power(&ybn), mn: mean_power(&mn) }
    }

    fn evaluate(&self, cfg: &ExperimentConfig, pt: SnrPoint) -> Result<Vec<FilterOutcome>> {
        let half = cfg.samples_per_trial / 2;
        let t = &self.truth;
        let g_in = snr_gain(self.powers.inn, self.powers.sa, -pt.sinr_db)?;
        let g_bn = snr_gain(self.powers.bn, self.powers.sa, -pt.sbnr_db)?;
        let g_mn = snr_gain(self.powers.mn, self.powers.sa, -pt.smnr_db)?;

        let mut baseline_covs = Vec::with_capacity(self.sa.len());
        let mut active_covs = Vec::with_capacity(self.sa.len());
        let mut active = Vec::with_capacity(self.sa.len());
        for (i, ((sa, inn), bn)) in self.sa.iter().zip(&self.inn).zip(&self.bn).enumerate() {
            let mut y = t.h_background() * bn * g_bn + self.measurement_noise(i, t.m(), 2 * half) * g_mn;
            let mut act = y.columns_mut(half, half);
            act += t.h() * sa + t.h_interf() * inn * g_in;
            baseline_covs.push(model::sample_covariance(&y.columns(0, half).into_owned())?);
            let a = y.columns(half, half).into_owned();
            active_covs.push(model::sample_covariance(&a)?);
            active.push(a);
        }
        let average = |covs: Vec<Matrix>| {
            let n = covs.len() as f64;
            let sum = covs.into_iter().reduce(|a, b| a + b).expect("at least one trial");
            model::diagonal_load(&linalg::symmetrize(&(sum / n)), cfg.diagonal_loading)
        };
        let n_hat = average(baseline_covs);
        let r_hat = average(active_covs);

        let (q_free, q_int) = match cfg.q_source {
            QSource::Estimated => (
                model::estimate_q_free(&self.estimate, &r_hat, &n_hat).map_err(|e| e.to_string()),
                model::estimate_q_int(&self.estimate, &r_hat, &n_hat).map_err(|e| e.to_string()),
            ),
            QSource::Analytic => {
                let q = model::pooled_covariance(&self.sa).map_err(|e| e.to_string());
                (q.clone(), q)
            }
        };
        let ctx = BuildContext {
            fm: &self.estimate,
            r: &r_hat,
            n: &n_hat,
            q_free: &q_free,
            q_int: &q_int,
            s: cfg.patch_rank(),
            sig: cfg.eig_sig(),
            random_seed: self.random_seed,
        };

        Ok(cfg
            .filter_roster
            .iter()
            .map(|&kind| match ctx.build(kind) {
                Ok((filter, rank)) => self.score(cfg, kind, &filter, rank, &active),
                Err(msg) => FilterOutcome::failed(kind, msg),
            })
            .collect())
    }

    fn score(
        &self,
        cfg: &ExperimentConfig,
        kind: FilterKind,
        filter: &SpatialFilter,
        rank: Option<usize>,
        active: &[Matrix],
    ) -> FilterOutcome {
        let mut sq = 0.0;
        let mut recon = Vec::with_capacity(active.len());
        for (y, sa) in active.iter().zip(&self.sa) {
            let est = &filter.w * y;
            sq += (&est - sa).norm_squared();
            recon.push(est);
        }
        let err = sq.sqrt();
        if !err.is_finite() {
            return FilterOutcome::failed(kind, "non-finite reconstruction".into());
        }
        let pdc_error = mvar::fit_mvar_trials(&recon, cfg.mvar_order)
            .and_then(|fit| mvar::pdc(&fit, cfg.n_freqs))
            .and_then(|est| mvar::pdc_error(&self.sa_pdc, &est))
            .ok();
        FilterOutcome {
            kind,
            reconstruction_error: Some(err),
            pdc_error,
            selected_rank: rank,
            j_value: filter.j_value(),
            error: None,
        }
    }
}

fn samples(model: &MvarModel, len: usize, trials: usize, seed: u64) -> Result<Vec<Matrix>> {
    Ok(mvar::simulate_mvar(model, len, trials, seed)?.into_iter().map(|s| s.samples).collect())
}

struct BuildContext<'a> {
    fm: &'a ForwardModel,
    r: &'a Matrix,
    n: &'a Matrix,
    q_free: &'a std::result::Result<Matrix, String>,
    q_int: &'a std::result::Result<Matrix, String>,
    s: usize,
    sig: usize,
    random_seed: u64,
}

impl BuildContext<'_> {
    fn cov(&self, mode: CovMode) -> &Matrix {
        match mode {
            CovMode::R => self.r,
            CovMode::N => self.n,
        }
    }

    fn q(q: &std::result::Result<Matrix, String>) -> std::result::Result<&Matrix, String> {
        q.as_ref().map_err(|e| format!("Q estimate unavailable: {e}"))
    }

    fn selected(&self, family: RankFamily, mode: CovMode, q: &Matrix) -> std::result::Result<(SpatialFilter, Option<usize>), String> {
        let (f, sel) = filters::build_rank_selected(family, self.fm, self.cov(mode), Some(q)).map_err(|e| e.to_string())?;
        Ok((f, Some(sel.selected_rank)))
    }

    fn build(&self, kind: FilterKind) -> std::result::Result<(SpatialFilter, Option<usize>), String> {
        use FilterKind::*;
        let fm = self.fm;
        let plain = |r: filters::Result<SpatialFilter>| r.map(|f| (f, None)).map_err(|e| e.to_string());
        let variant = |k: FilterKind| match k {
            MvpIntMse | MvpFreeMse => MvpVariant::Mse,
            MvpIntR | MvpFreeR => MvpVariant::R,
            _ => MvpVariant::N,
        };
        match kind {
            LcmvR => plain(filters::lcmv(fm, self.r, CovMode::R)),
            LcmvN => plain(filters::lcmv(fm, self.n, CovMode::N)),
            NullingR => plain(filters::nulling(fm, self.r, CovMode::R)),
            NullingN => plain(filters::nulling(fm, self.n, CovMode::N)),
            EigLcmv => plain(filters::eigenspace_lcmv(fm, self.r, self.sig)),
            Mmse => plain(filters::mmse(Self::q(self.q_int)?, fm, self.r)),
            ZeroForcing => plain(filters::zero_forcing(fm)),
            MvpIntMse | MvpIntR | MvpIntN => {
                let v = variant(kind);
                self.selected(RankFamily::Interference(v), v.cov_mode(), Self::q(self.q_int)?)
            }
            MvpFreeMse | MvpFreeR | MvpFreeN => {
                let v = variant(kind);
                self.selected(RankFamily::Free(v), v.cov_mode(), Self::q(self.q_free)?)
            }
            MvpPatchR | MvpPatchN => {
                let mode = if kind == MvpPatchR { CovMode::R } else { CovMode::N };
                self.selected(RankFamily::Patch { mode, s: self.s }, mode, Self::q(self.q_int)?)
            }
            NullingPatchR | NullingPatchN => {
                let mode = if kind == NullingPatchR { CovMode::R } else { CovMode::N };
                let q = self.q_int.as_ref().ok();
                plain(filters::mvpure_patch(mode, fm, self.s, self.cov(mode), q, fm.l()))
            }
            Zero => Ok((filters::zero_filter(fm), None)),
            Random => Ok((filters::random_filter(fm, self.random_seed), None)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            m: 20,
            l: 3,
            k: 4,
            p: 4,
            sinr_db: vec![0.0, 20.0],
            n_runs: 2,
            n_trials: 6,
            samples_per_trial: 400,
            mvar_order: 2,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn shape_and_determinism() {
        let cfg = tiny();
        let a = run_experiment(&cfg).unwrap();
        assert_eq!(a.len(), 4);
        assert_eq!((a[0].run, a[1].run, a[2].run), (0, 0, 1));
        assert_eq!(a[1].snr.sinr_db, 20.0);
        for r in &a {
            assert_eq!(r.outcomes.len(), FilterKind::ALL.len());
            for o in &r.outcomes {
                assert!(o.is_failure() || o.reconstruction_error.unwrap() >= 0.0, "{o:?}");
                if let Some(rank) = o.selected_rank {
                    assert!((1..=cfg.l).contains(&rank));
                }
            }
        }
        let strip = |v: Vec<RunResult>| v.into_iter().map(|r| RunResult { elapsed_ms: 0.0, ..r }).collect::<Vec<_>>();
        let b = run_experiment_with_jobs(&cfg, Some(1)).unwrap();
        assert_eq!(strip(a), strip(b));
    }

    #[test]
    fn zero_filter_error_is_signal_norm() {
        let cfg = ExperimentConfig { filter_roster: vec![FilterKind::Zero], ..tiny() };
        let res = simulate_run(&cfg, 0).unwrap();
        let scene = Scene::build(&cfg, run_seed(cfg.master_seed, 0)).unwrap();
        let norm = scene.sa.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt();
        for r in res {
            assert_eq!(r.outcomes[0].reconstruction_error, Some(norm));
            assert_eq!(r.outcomes[0].pdc_error, None);
        }
    }

    #[test]
    fn zero_forcing_exact_without_nuisance() {
        let cfg = ExperimentConfig {
            sinr_db: vec![300.0],
            sbnr_db: vec![300.0],
            smnr_db: vec![300.0],
            perturb_shift_m: 0.0,
            perturb_angle_rad: 0.0,
            filter_roster: vec![FilterKind::ZeroForcing],
            ..tiny()
        };
        let res = simulate_run(&cfg, 0).unwrap();
        let err = res[0].outcomes[0].reconstruction_error.unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn scene_powers_hit_targets() {
        let cfg = tiny();
        let scene = Scene::build(&cfg, 5).unwrap();
        let g = snr_gain(scene.powers.inn, scene.powers.sa, -10.0).unwrap();
        let ratio = scene.powers.sa / (scene.powers.inn * g * g);
        assert!((10.0 * ratio.log10() - 10.0).abs() < 1e-10);
    }
}
