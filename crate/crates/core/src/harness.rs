//! Run directories and the experiment matrix.
//!
//! A run directory holds everything needed to reproduce and inspect one
//! training run:
//!
//! | file | contents |
//! |------|----------|
//! | `config.json` | the full [`RunConfig`], written before training starts |
//! | `history.csv` | per-epoch loss terms (also written when training diverges) |
//! | `checkpoint_best.bin`, `checkpoint_final.bin` | network parameters |
//! | `metrics.json` | [`MetricsRecord`] of the best checkpoint |
//!
//! [`run_matrix`] trains every (case, method, seed) combination into its own
//! directory, records failures without stopping, and assembles a report with
//! improvement ratios against the PINN run of the same case and seed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;
use crate::evalreport::{improvement_ratio, metrics, EvalError, EvalSet, MetricsRecord};
use crate::loss::Method;
use crate::network::NetworkError;
use crate::problems::{get_problem, CaseId};
use crate::trainer::{train_with, EpochRecord, TrainError, TrainOutcome};

pub const CONFIG_FILE: &str = "config.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const BEST_CHECKPOINT: &str = "checkpoint_best.bin";
pub const FINAL_CHECKPOINT: &str = "checkpoint_final.bin";
pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

impl HarnessError {
    /// Process exit status: 3 for numerical failures, 2 for invalid input,
    /// 1 for I/O problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Io { .. } | HarnessError::Network(NetworkError::Io { .. }) => 1,
            HarnessError::Train(e) if e.is_numerical() => 3,
            HarnessError::Eval(EvalError::Diff(_)) => 3,
            HarnessError::Eval(EvalError::Io { .. }) => 1,
            _ => 2,
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A finished run: its outcome and the metrics of the best checkpoint.
#[derive(Debug)]
pub struct CompletedRun {
    pub outcome: TrainOutcome,
    pub metrics: MetricsRecord,
}

/// Trains `cfg` and writes the run directory `dir`.
pub fn run_to_dir(cfg: &RunConfig, dir: &Path) -> Result<CompletedRun, HarnessError> {
    run_to_dir_with(cfg, dir, |_| {})
}

/// [`run_to_dir`] with a callback after every epoch.
pub fn run_to_dir_with(
    cfg: &RunConfig,
    dir: &Path,
    observe: impl FnMut(&EpochRecord),
) -> Result<CompletedRun, HarnessError> {
    cfg.validate().map_err(TrainError::from)?;
    create_dir(dir)?;
    write(&dir.join(CONFIG_FILE), &cfg.to_json())?;
    let outcome = match train_with(cfg, observe) {
        Ok(o) => o,
        Err(TrainError::Diverged {
            epoch,
            total,
            history,
        }) => {
            write(&dir.join(HISTORY_FILE), &history.to_csv(cfg.record_wall_time))?;
            return Err(TrainError::Diverged {
                epoch,
                total,
                history,
            }
            .into());
        }
        Err(e) => return Err(e.into()),
    };
    write(&dir.join(HISTORY_FILE), &outcome.history.to_csv(cfg.record_wall_time))?;
    outcome.best.save(dir.join(BEST_CHECKPOINT))?;
    outcome.last.save(dir.join(FINAL_CHECKPOINT))?;
    let set = EvalSet::new(&get_problem(cfg.case), cfg.eval_nx, cfg.eval_nt)?;
    let metrics = metrics(&set, cfg.method, &outcome.best)?;
    write_metrics(&dir.join(METRICS_FILE), &metrics)?;
    Ok(CompletedRun { outcome, metrics })
}

pub fn write_metrics(path: &Path, m: &MetricsRecord) -> Result<(), HarnessError> {
    let mut s = serde_json::to_string_pretty(m).expect("metrics serialize");
    s.push('\n');
    write(path, &s)
}

/// Directory name of one matrix entry.
pub fn run_dir_name(case: CaseId, method: Method, seed: u64) -> String {
    format!("{case}_{method}_s{seed}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub case: CaseId,
    pub method: Method,
    pub seed: u64,
    pub dir: PathBuf,
    pub exit_code: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub case: CaseId,
    pub seed: u64,
    pub method: Method,
    pub mse_all: f64,
    pub pinn_mse_all: f64,
    /// Percent reduction of MSE_All relative to PINN.
    pub improvement: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub runs: Vec<RunResult>,
    pub comparisons: Vec<ComparisonRow>,
}

/// Median of a non-empty list; the mean of the two central values for even
/// lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

impl MatrixReport {
    /// Builds the comparison rows from `runs`.
    pub fn from_runs(runs: Vec<RunResult>) -> Self {
        let mut comparisons = Vec::new();
        for pinn in runs.iter().filter(|r| r.method == Method::Pinn) {
            let Some(base) = &pinn.metrics else { continue };
            for r in &runs {
                if r.method == Method::Pinn || r.case != pinn.case || r.seed != pinn.seed {
                    continue;
                }
                let Some(m) = &r.metrics else { continue };
                if let Ok(improvement) = improvement_ratio(m.mse_all, base.mse_all) {
                    comparisons.push(ComparisonRow {
                        case: r.case,
                        seed: r.seed,
                        method: r.method,
                        mse_all: m.mse_all,
                        pinn_mse_all: base.mse_all,
                        improvement,
                    });
                }
            }
        }
        Self { runs, comparisons }
    }

    pub fn failures(&self) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(|r| r.metrics.is_none())
    }

    /// MSE_All of every successful run of `(case, method)`, in seed order.
    pub fn mse_all(&self, case: CaseId, method: Method) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.case == case && r.method == method)
            .filter_map(|r| r.metrics.as_ref().map(|m| m.mse_all))
            .collect()
    }

    pub fn median_mse_all(&self, case: CaseId, method: Method) -> Option<f64> {
        median(&self.mse_all(case, method))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("# Experiment matrix\n\n");
        if self.runs.is_empty() {
            s.push_str("No runs.\n");
            return s;
        }
        s.push_str("| case | method | seed | MSE_T1 | MSE_T2 | MSE_T3 | MSE_T4 | MSE_All | status |\n");
        s.push_str("|---|---|---|---|---|---|---|---|---|\n");
        for r in &self.runs {
            let _ = write!(s, "| {} | {} | {} |", r.case, r.method, r.seed);
            match &r.metrics {
                Some(m) => {
                    for v in m.slice_mses() {
                        let _ = write!(s, " {v:.3e} |");
                    }
                    let _ = writeln!(s, " {:.3e} | ok |", m.mse_all);
                }
                None => {
                    let _ = writeln!(s, " - | - | - | - | - | exit {} |", r.exit_code);
                }
            }
        }
        if !self.comparisons.is_empty() {
            s.push_str("\n## Improvement over PINN\n\n");
            s.push_str("| case | seed | method | MSE_All | PINN MSE_All | improvement |\n");
            s.push_str("|---|---|---|---|---|---|\n");
            for c in &self.comparisons {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {:.3e} | {:.3e} | {:.1}% |",
                    c.case, c.seed, c.method, c.mse_all, c.pinn_mse_all, c.improvement
                );
            }
        }
        let failures: Vec<_> = self.failures().collect();
        if !failures.is_empty() {
            s.push_str("\n## Failures\n\n");
            for r in failures {
                let _ = writeln!(
                    s,
                    "- {} {} seed {}: exit {}: {}",
                    r.case,
                    r.method,
                    r.seed,
                    r.exit_code,
                    r.error.as_deref().unwrap_or("unknown error")
                );
            }
        }
        s
    }

    /// Writes `summary.md` and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        create_dir(dir)?;
        write(&dir.join("summary.md"), &self.to_markdown())?;
        write(&dir.join("report.json"), &self.to_json())
    }
}

/// The combinations to run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Matrix {
    pub cases: Vec<CaseId>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
}

impl Matrix {
    /// Entries in case, method, seed order.
    pub fn entries(&self) -> Vec<(CaseId, Method, u64)> {
        let mut v = Vec::new();
        for &c in &self.cases {
            for &m in &self.methods {
                for &s in &self.seeds {
                    v.push((c, m, s));
                }
            }
        }
        v
    }
}

/// Runs every entry of `matrix` into `out/<case>_<method>_s<seed>` using
/// `jobs` worker threads, then writes the report into `out`.
///
/// A failing run is recorded with its exit status and the matrix continues.
/// `progress` sees each result as it finishes; the report lists runs in
/// matrix order regardless of completion order.
pub fn run_matrix(
    matrix: &Matrix,
    config_for: impl Fn(CaseId, Method, u64) -> RunConfig + Sync,
    out: &Path,
    jobs: usize,
    progress: impl FnMut(&RunResult) + Send,
) -> Result<MatrixReport, HarnessError> {
    create_dir(out)?;
    let entries = matrix.entries();
    let results: Mutex<Vec<Option<RunResult>>> = Mutex::new(vec![None; entries.len()]);
    let progress = Mutex::new(progress);
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(case, method, seed)) = entries.get(i) else { break };
        let dir = out.join(run_dir_name(case, method, seed));
        let cfg = RunConfig {
            out: Some(dir.clone()),
            ..config_for(case, method, seed)
        };
        let result = match run_to_dir(&cfg, &dir) {
            Ok(run) => RunResult {
                case,
                method,
                seed,
                dir,
                exit_code: 0,
                metrics: Some(run.metrics),
                error: None,
            },
            Err(e) => RunResult {
                case,
                method,
                seed,
                dir,
                exit_code: e.exit_code(),
                metrics: None,
                error: Some(e.to_string()),
            },
        };
        (progress.lock().expect("progress lock"))(&result);
        results.lock().expect("results lock")[i] = Some(result);
    };
    std::thread::scope(|s| {
        for _ in 1..jobs.max(1).min(entries.len().max(1)) {
            s.spawn(worker);
        }
        worker();
    });
    let runs = results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every entry ran"))
        .collect();
    let report = MatrixReport::from_runs(runs);
    report.write(out)?;
    Ok(report)
}
