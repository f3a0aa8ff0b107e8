use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::config::{ExperimentConfig, SnrPoint};
use super::run::{self, RunResult};
use super::{HarnessError, Result};
use crate::filters::FilterKind;

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CONFIG_ECHO_FILE: &str = "config-echo.json";

/// Column order of `results.csv`; timing is always last.
pub const RESULTS_HEADER: &str = "run,seed,sinr_db,sbnr_db,smnr_db,filter,status,reconstruction_error,pdc_error,selected_rank,j_value,cond_h,cond_hc,error,elapsed_ms";
pub const SUMMARY_HEADER: &str = "sinr_db,sbnr_db,smnr_db,filter,runs,failures,recon_mean,recon_median,recon_std,pdc_count,pdc_mean,pdc_median,pdc_std";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl Stats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { count: n, mean, median, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub snr: SnrPoint,
    pub kind: FilterKind,
    pub runs: usize,
    pub failures: usize,
    pub reconstruction: Option<Stats>,
    pub pdc: Option<Stats>,
}

/// Per filter and SNR point statistics, in first-seen order.
pub fn aggregate(results: &[RunResult]) -> Result<Vec<SummaryRow>> {
    if results.is_empty() {
        return Err(HarnessError::EmptyResults);
    }
    let mut keys: Vec<(SnrPoint, FilterKind)> = Vec::new();
    let mut recon: Vec<Vec<f64>> = Vec::new();
    let mut pdc: Vec<Vec<f64>> = Vec::new();
    let mut counts: Vec<(usize, usize)> = Vec::new();
    for r in results {
        for o in &r.outcomes {
            let idx = match keys.iter().position(|&(s, k)| s == r.snr && k == o.kind) {
                Some(i) => i,
                None => {
                    keys.push((r.snr, o.kind));
                    recon.push(Vec::new());
                    pdc.push(Vec::new());
                    counts.push((0, 0));
                    keys.len() - 1
                }
            };
            counts[idx].0 += 1;
            if o.is_failure() {
                counts[idx].1 += 1;
            }
            recon[idx].extend(o.reconstruction_error);
            pdc[idx].extend(o.pdc_error);
        }
    }
    Ok(keys
        .into_iter()
        .enumerate()
        .map(|(i, (snr, kind))| SummaryRow {
            snr,
            kind,
            runs: counts[i].0,
            failures: counts[i].1,
            reconstruction: Stats::from_values(&recon[i]),
            pdc: Stats::from_values(&pdc[i]),
        })
        .collect())
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn sanitize(msg: &str) -> String {
    msg.chars().map(|c| if matches!(c, ',' | '"' | '\n' | '\r') { ';' } else { c }).collect()
}

pub fn results_csv(results: &[RunResult]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in results {
        for o in &r.outcomes {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.run,
                r.seed,
                r.snr.sinr_db,
                r.snr.sbnr_db,
                r.snr.smnr_db,
                o.kind,
                if o.is_failure() { "failed" } else { "ok" },
                opt(o.reconstruction_error),
                opt(o.pdc_error),
                opt(o.selected_rank),
                opt(o.j_value),
                r.cond_h,
                r.cond_hc,
                o.error.as_deref().map(sanitize).unwrap_or_default(),
                r.elapsed_ms,
            );
        }
    }
    out
}

/// `results.csv` content with the trailing timing column removed.
pub fn strip_timing(csv: &str) -> String {
    csv.lines().map(|line| line.rsplit_once(',').map_or(line, |(head, _)| head)).collect::<Vec<_>>().join("\n")
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for row in rows {
        let (rm, rmed, rs) = stats_fields(row.reconstruction);
        let (pm, pmed, ps) = stats_fields(row.pdc);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{rm},{rmed},{rs},{},{pm},{pmed},{ps}",
            row.snr.sinr_db,
            row.snr.sbnr_db,
            row.snr.smnr_db,
            row.kind,
            row.runs,
            row.failures,
            row.pdc.map_or(0, |s| s.count),
        );
    }
    out
}

fn stats_fields(s: Option<Stats>) -> (String, String, String) {
    match s {
        Some(s) => (s.mean.to_string(), s.median.to_string(), s.std.to_string()),
        None => Default::default(),
    }
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    config: &'a ExperimentConfig,
    run_seeds: Vec<u64>,
    snr_points: Vec<SnrPoint>,
}

pub fn config_echo(cfg: &ExperimentConfig) -> String {
    let resolved = cfg.resolved();
    let echo = ConfigEcho {
        config: &resolved,
        run_seeds: (0..cfg.n_runs).map(|r| run::run_seed(cfg.master_seed, r)).collect(),
        snr_points: cfg.snr_points(),
    };
    serde_json::to_string_pretty(&echo).expect("echo serializes")
}

/// Writes `results.csv`, `summary.csv` and `config-echo.json` into `dir`.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, results: &[RunResult]) -> Result<Vec<SummaryRow>> {
    let summary = aggregate(results)?;
    let io = |e: std::io::Error| HarnessError::Io(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    std::fs::write(dir.join(RESULTS_FILE), results_csv(results)).map_err(io)?;
    std::fs::write(dir.join(SUMMARY_FILE), summary_csv(&summary)).map_err(io)?;
    std::fs::write(dir.join(CONFIG_ECHO_FILE), config_echo(cfg)).map_err(io)?;
    Ok(summary)
}

/// Runs the experiment and writes its outputs.
pub fn run_to_dir(cfg: &ExperimentConfig, dir: &Path, jobs: Option<usize>) -> Result<Vec<SummaryRow>> {
    let results = run::run_experiment_with_jobs(cfg, jobs)?;
    write_outputs(dir, cfg, &results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::FilterOutcome;

    fn result(run: usize, err: Option<f64>, failed: bool) -> RunResult {
        RunResult {
            run,
            seed: run as u64,
            snr: SnrPoint { sinr_db: 0.0, sbnr_db: 0.0, smnr_db: 10.0 },
            cond_h: 1.0,
            cond_hc: 2.0,
            outcomes: vec![FilterOutcome {
                kind: FilterKind::LcmvR,
                reconstruction_error: err,
                pdc_error: err.map(|e| e / 10.0),
                selected_rank: None,
                j_value: None,
                error: failed.then(|| "boom, \"bad\"".to_string()),
            }],
            elapsed_ms: 1.5,
        }
    }

    #[test]
    fn aggregate_examples() {
        assert!(matches!(aggregate(&[]), Err(HarnessError::EmptyResults)));
        let one = aggregate(&[result(0, Some(4.0), false)]).unwrap();
        assert_eq!(one[0].reconstruction.unwrap().mean, 4.0);
        assert_eq!(one[0].reconstruction.unwrap().std, 0.0);

        let two = aggregate(&[result(0, Some(1.0), false), result(1, Some(3.0), false)]).unwrap();
        let s = two[0].reconstruction.unwrap();
        assert_eq!((s.mean, s.median), (2.0, 2.0));
        assert!((s.std - 2f64.sqrt()).abs() < 1e-15);

        let mixed = aggregate(&[result(0, Some(1.0), false), result(1, None, true)]).unwrap();
        assert_eq!((mixed[0].runs, mixed[0].failures), (2, 1));
        assert_eq!(mixed[0].reconstruction.unwrap().count, 1);
    }

    #[test]
    fn csv_layout() {
        let csv = results_csv(&[result(0, Some(1.0), false), result(1, None, true)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], RESULTS_HEADER);
        let cols = RESULTS_HEADER.split(',').count();
        assert!(lines.iter().all(|l| l.split(',').count() == cols));
        assert!(lines[2].contains("failed"));
        assert!(lines[1].ends_with(",1.5"));
        assert!(!strip_timing(&csv).contains("1.5"));

        let summary = summary_csv(&aggregate(&[result(0, Some(1.0), false)]).unwrap());
        let sl: Vec<&str> = summary.lines().collect();
        assert_eq!(sl.len(), 2);
        assert_eq!(sl[1].split(',').count(), SUMMARY_HEADER.split(',').count());
    }
}
