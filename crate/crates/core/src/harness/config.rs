use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::filters::FilterKind;

pub const SCHEMA_VERSION: u32 = 1;

/// Which source covariance the MSE-driven filters are given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QSource {
    /// Difference-of-inverses estimate from `R̂` and `N̂`.
    Estimated,
    /// Sample covariance of the true active-window source signals.
    Analytic,
}

/// Sweepable SNR list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnrParam {
    Sinr,
    Sbnr,
    Smnr,
}

impl std::str::FromStr for SnrParam {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sinr_db" | "sinr" => Ok(SnrParam::Sinr),
            "sbnr_db" | "sbnr" => Ok(SnrParam::Sbnr),
            "smnr_db" | "smnr" => Ok(SnrParam::Smnr),
            other => Err(HarnessError::InvalidConfig(format!("unknown sweep parameter `{other}`"))),
        }
    }
}

/// One combination of the three power ratios, all in dB of signal power
/// over nuisance power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrPoint {
    pub sinr_db: f64,
    pub sbnr_db: f64,
    pub smnr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Number of sensors.
    pub m: usize,
    pub l: usize,
    pub k: usize,
    pub p: usize,
    pub sinr_db: Vec<f64>,
    pub sbnr_db: Vec<f64>,
    pub smnr_db: Vec<f64>,
    pub n_runs: usize,
    pub n_trials: usize,
    /// Split evenly into a baseline half and an active half.
    pub samples_per_trial: usize,
    pub mvar_order: usize,
    pub mask_fraction: f64,
    /// Defaults to `ceil(0.3 k)`.
    pub patch_rank_s: Option<usize>,
    /// Signal-subspace dimension of the eigenspace LCMV; defaults to `l + k`.
    pub eig_lcmv_sig: Option<usize>,
    pub perturb_shift_m: f64,
    pub perturb_angle_rad: f64,
    pub filter_roster: Vec<FilterKind>,
    pub master_seed: u64,
    /// Relative diagonal loading applied to `R̂` and `N̂`.
    pub diagonal_loading: f64,
    pub q_source: QSource,
    pub n_freqs: usize,
    pub conductivity: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            m: crate::forward::DEFAULT_SENSORS,
            l: 13,
            k: 27,
            p: 27,
            sinr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            sbnr_db: vec![0.0],
            smnr_db: vec![10.0],
            n_runs: 100,
            n_trials: 100,
            samples_per_trial: 1000,
            mvar_order: crate::mvar::DEFAULT_ORDER,
            mask_fraction: crate::mvar::DEFAULT_MASK_FRACTION,
            patch_rank_s: None,
            eig_lcmv_sig: None,
            perturb_shift_m: crate::forward::DEFAULT_MAX_SHIFT,
            perturb_angle_rad: PI / 32.0,
            filter_roster: FilterKind::ALL.to_vec(),
            master_seed: 0,
            diagonal_loading: 0.0,
            q_source: QSource::Estimated,
            n_freqs: crate::mvar::DEFAULT_N_FREQS,
            conductivity: crate::forward::DEFAULT_CONDUCTIVITY,
        }
    }
}

impl ExperimentConfig {
    /// Small built-in configuration that finishes in seconds.
    pub fn demo() -> Self {
        Self { m: 32, l: 4, k: 6, p: 6, n_runs: 5, n_trials: 10, samples_per_trial: 400, ..Self::default() }
    }

    /// Laptop-scale configuration with SINR at 0 and 20 dB.
    pub fn desk() -> Self {
        Self {
            m: 32,
            l: 4,
            k: 6,
            p: 6,
            sinr_db: vec![0.0, 20.0],
            n_runs: 20,
            n_trials: 20,
            samples_per_trial: 1000,
            master_seed: 2024,
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn patch_rank(&self) -> usize {
        self.patch_rank_s.unwrap_or_else(|| (0.3 * self.k as f64).ceil() as usize)
    }

    pub fn eig_sig(&self) -> usize {
        self.eig_lcmv_sig.unwrap_or(self.l + self.k)
    }

    /// Copy with every defaulted optional field filled in.
    pub fn resolved(&self) -> Self {
        Self { patch_rank_s: Some(self.patch_rank()), eig_lcmv_sig: Some(self.eig_sig()), ..self.clone() }
    }

    /// Cartesian product of the SNR lists, SINR varying fastest.
    pub fn snr_points(&self) -> Vec<SnrPoint> {
        let mut out = Vec::new();
        for &smnr_db in &self.smnr_db {
            for &sbnr_db in &self.sbnr_db {
                for &sinr_db in &self.sinr_db {
                    out.push(SnrPoint { sinr_db, sbnr_db, smnr_db });
                }
            }
        }
        out
    }

    pub fn set_sweep(&mut self, param: SnrParam, values: Vec<f64>) {
        match param {
            SnrParam::Sinr => self.sinr_db = values,
            SnrParam::Sbnr => self.sbnr_db = values,
            SnrParam::Smnr => self.smnr_db = values,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(HarnessError::InvalidConfig(msg));
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        let counts = [
            ("m", self.m),
            ("l", self.l),
            ("k", self.k),
            ("p", self.p),
            ("n_runs", self.n_runs),
            ("n_trials", self.n_trials),
            ("samples_per_trial", self.samples_per_trial),
            ("mvar_order", self.mvar_order),
        ];
        for (name, v) in counts {
            if v == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        if !self.samples_per_trial.is_multiple_of(2) || self.samples_per_trial < 4 {
            return fail("samples_per_trial must be even and at least 4".into());
        }
        if self.m <= self.l + self.k || self.m <= self.p {
            return fail(format!("m = {} must exceed both l + k = {} and p = {}", self.m, self.l + self.k, self.p));
        }
        for (name, list) in [("sinr_db", &self.sinr_db), ("sbnr_db", &self.sbnr_db), ("smnr_db", &self.smnr_db)] {
            if list.is_empty() || list.iter().any(|v| !v.is_finite()) {
                return fail(format!("{name} must be a non-empty list of finite values"));
            }
        }
        if !(0.0..=1.0).contains(&self.mask_fraction) {
            return fail("mask_fraction must lie in [0, 1]".into());
        }
        let s = self.patch_rank();
        if s == 0 || s > self.k {
            return fail(format!("patch_rank_s = {s} must lie in [1, k]"));
        }
        let sig = self.eig_sig();
        if sig == 0 || sig > self.m {
            return fail(format!("eig_lcmv_sig = {sig} must lie in [1, m]"));
        }
        if !(self.perturb_shift_m >= 0.0 && self.perturb_angle_rad >= 0.0) {
            return fail("perturbation bounds must be non-negative".into());
        }
        if self.filter_roster.is_empty() {
            return fail("filter_roster must not be empty".into());
        }
        if self.diagonal_loading.is_nan() || self.diagonal_loading < 0.0 {
            return fail("diagonal_loading must be non-negative".into());
        }
        if self.n_freqs < 2 {
            return fail("n_freqs must be at least 2".into());
        }
        if self.conductivity.is_nan() || self.conductivity <= 0.0 {
            return fail("conductivity must be positive".into());
        }
        Ok(())
    }
}
