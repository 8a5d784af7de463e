//! Experiment orchestration: runs every (algorithm, fid, dim, instance,
//! repetition) cell of a plan, writes one CSV log per run and a JSON-lines
//! manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry;
use crate::run::{Archive, EvalRecord, Observer, RunConfig};
use crate::seed::SeedHasher;
use crate::testbed::{make_problem, Problem};
use crate::timing::thread_cpu_seconds;

pub use crate::timing::{time_phase, Phase};

pub const LOG_HEADER: [&str; 6] =
    ["evaluation", "raw_y", "best_so_far_gap", "model_fit_cpu_s", "acq_opt_cpu_s", "extra_json"];
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const PLAN_FILE: &str = "plan.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub algorithms: Vec<String>,
    pub fids: Vec<u32>,
    pub dims: Vec<usize>,
    pub instances: Vec<u64>,
    pub repetitions: usize,
    /// Budget is `budget_factor · dim + budget_offset`.
    pub budget_factor: usize,
    pub budget_offset: usize,
    pub base_seed: u64,
    pub output_root: PathBuf,
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
    /// When false the timing columns are written as zero, which makes log
    /// bodies reproducible byte for byte.
    pub record_timing: bool,
}

/// One layer of plan settings. Layers are merged with the earlier layer
/// winning, so the command line goes first and the plan file second.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanLayer {
    pub algorithms: Option<Vec<String>>,
    pub fids: Option<Vec<u32>>,
    pub dims: Option<Vec<usize>>,
    pub instances: Option<Vec<u64>>,
    pub repetitions: Option<usize>,
    pub budget_factor: Option<usize>,
    pub budget_offset: Option<usize>,
    pub base_seed: Option<u64>,
    pub output_root: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub record_timing: Option<bool>,
}

impl PlanLayer {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn or(self, lower: PlanLayer) -> PlanLayer {
        PlanLayer {
            algorithms: self.algorithms.or(lower.algorithms),
            fids: self.fids.or(lower.fids),
            dims: self.dims.or(lower.dims),
            instances: self.instances.or(lower.instances),
            repetitions: self.repetitions.or(lower.repetitions),
            budget_factor: self.budget_factor.or(lower.budget_factor),
            budget_offset: self.budget_offset.or(lower.budget_offset),
            base_seed: self.base_seed.or(lower.base_seed),
            output_root: self.output_root.or(lower.output_root),
            jobs: self.jobs.or(lower.jobs),
            record_timing: self.record_timing.or(lower.record_timing),
        }
    }

    /// Fills the remaining gaps with defaults and validates the result.
    pub fn resolve(self) -> Result<ExperimentPlan> {
        let missing = |f: &str| Error::invalid(format!("plan is missing `{f}`"));
        let plan = ExperimentPlan {
            algorithms: self.algorithms.ok_or_else(|| missing("algorithms"))?,
            fids: self.fids.ok_or_else(|| missing("fids"))?,
            dims: self.dims.ok_or_else(|| missing("dims"))?,
            instances: self.instances.unwrap_or_else(|| vec![0, 1, 2]),
            repetitions: self.repetitions.unwrap_or(10),
            budget_factor: self.budget_factor.unwrap_or(10),
            budget_offset: self.budget_offset.unwrap_or(50),
            base_seed: self.base_seed.unwrap_or(0),
            output_root: self.output_root.ok_or_else(|| missing("output_root"))?,
            jobs: self.jobs,
            record_timing: self.record_timing.unwrap_or(true),
        };
        plan.validate()?;
        Ok(plan)
    }
}

impl ExperimentPlan {
    pub fn budget(&self, dim: usize) -> usize {
        self.budget_factor * dim + self.budget_offset
    }

    pub fn validate(&self) -> Result<()> {
        for (name, empty) in [
            ("algorithms", self.algorithms.is_empty()),
            ("fids", self.fids.is_empty()),
            ("dims", self.dims.is_empty()),
            ("instances", self.instances.is_empty()),
        ] {
            if empty {
                return Err(Error::invalid(format!("{name} must not be empty")));
            }
        }
        if self.repetitions == 0 {
            return Err(Error::invalid("repetitions must be at least 1"));
        }
        if let Some(f) = self.fids.iter().find(|f| !(1..=24).contains(*f)) {
            return Err(Error::invalid(format!("fid {f} is outside 1..=24")));
        }
        if let Some(d) = self.dims.iter().find(|d| **d < 2) {
            return Err(Error::invalid(format!("dim {d} is below 2")));
        }
        for a in &self.algorithms {
            registry::lookup(a)?;
        }
        for &d in &self.dims {
            if self.budget(d) < d {
                return Err(Error::invalid(format!("budget {} at dim {d} is smaller than the design", self.budget(d))));
            }
        }
        if self.jobs == Some(0) {
            return Err(Error::invalid("jobs must be at least 1"));
        }
        Ok(())
    }

    /// Every run of the plan in a fixed order.
    pub fn cells(&self) -> Vec<RunCell> {
        let mut out = Vec::new();
        for algorithm in &self.algorithms {
            for &fid in &self.fids {
                for &dim in &self.dims {
                    for &instance in &self.instances {
                        for repetition in 0..self.repetitions {
                            out.push(RunCell {
                                algorithm: algorithm.clone(),
                                fid,
                                dim,
                                instance,
                                repetition,
                                seed: run_seed(self.base_seed, algorithm, fid, dim, instance, repetition),
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCell {
    pub algorithm: String,
    pub fid: u32,
    pub dim: usize,
    pub instance: u64,
    pub repetition: usize,
    pub seed: u64,
}

impl RunCell {
    pub fn file_name(&self) -> String {
        log_file_name(&self.algorithm, self.fid, self.dim, self.instance, self.repetition)
    }
}

pub fn log_file_name(algorithm: &str, fid: u32, dim: usize, instance: u64, repetition: usize) -> String {
    format!("{algorithm}_f{fid}_d{dim}_i{instance}_r{repetition}.csv")
}

pub fn run_seed(base: u64, algorithm: &str, fid: u32, dim: usize, instance: u64, repetition: usize) -> u64 {
    SeedHasher::new()
        .u64(base)
        .str(algorithm)
        .u64(fid.into())
        .u64(dim as u64)
        .u64(instance)
        .u64(repetition as u64)
        .finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    /// The solver returned an error.
    Failed,
    /// The solver panicked.
    Crashed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub cell: RunCell,
    pub budget: usize,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cause: Option<String>,
    pub records: usize,
    pub total_cpu_s: f64,
    pub file: String,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    /// In plan order.
    pub entries: Vec<ManifestEntry>,
}

impl RunSummary {
    pub fn completed(&self) -> usize {
        self.entries.iter().filter(|e| e.status == RunStatus::Completed).count()
    }
}

/// Floats in logs carry 17 significant digits, enough to round-trip.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".to_string()
    }
}

fn setup_error(path: &Path, e: std::io::Error) -> Error {
    Error::Setup(format!("cannot write to {}: {e}", path.display()))
}

/// Signature of the per-run solver call; [`run_experiment`] uses the
/// registry.
pub type Runner = dyn Fn(&RunCell, &Problem, &RunConfig, &mut Observer<'_>) -> Result<Archive> + Sync;

pub fn run_experiment(plan: &ExperimentPlan) -> Result<RunSummary> {
    run_experiment_with(plan, &|cell, problem, run, observer| {
        registry::dispatch(&cell.algorithm, problem, run, observer)
    })
}

pub fn run_experiment_with(plan: &ExperimentPlan, runner: &Runner) -> Result<RunSummary> {
    plan.validate()?;
    let root = &plan.output_root;
    fs::create_dir_all(root).map_err(|e| setup_error(root, e))?;
    fs::write(root.join(PLAN_FILE), serde_json::to_string_pretty(plan)?).map_err(|e| setup_error(root, e))?;
    let manifest = File::create(root.join(MANIFEST_FILE)).map_err(|e| setup_error(root, e))?;
    let manifest = Mutex::new(BufWriter::new(manifest));

    let cells = plan.cells();
    let threads = plan.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Setup(format!("thread pool: {e}")))?;
    log::info!("{} runs on {threads} threads into {}", cells.len(), root.display());

    let entries: Vec<ManifestEntry> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let entry = run_cell(plan, cell, runner);
                match &entry.status {
                    RunStatus::Completed => log::info!("{} done", entry.file),
                    _ => log::warn!("{} {:?}: {}", entry.file, entry.status, entry.cause.as_deref().unwrap_or("")),
                }
                let mut m = manifest.lock().unwrap_or_else(|p| p.into_inner());
                let line = serde_json::to_string(&entry).expect("manifest entries serialize");
                if let Err(e) = writeln!(m, "{line}").and_then(|_| m.flush()) {
                    log::error!("manifest write failed: {e}");
                }
                entry
            })
            .collect()
    });
    Ok(RunSummary { entries })
}

struct LogWriter {
    csv: csv::Writer<BufWriter<File>>,
    best: f64,
    error: Option<csv::Error>,
}

fn run_cell(plan: &ExperimentPlan, cell: &RunCell, runner: &Runner) -> ManifestEntry {
    let budget = plan.budget(cell.dim);
    let file = cell.file_name();
    let started = unix_now();
    let cpu0 = thread_cpu_seconds();
    let mut records = 0usize;

    let outcome: std::result::Result<(), (RunStatus, String)> = (|| {
        let problem = make_problem(cell.fid, cell.dim, cell.instance).map_err(|e| (RunStatus::Failed, e.to_string()))?;
        let path = plan.output_root.join(&file);
        let out = File::create(&path).map_err(|e| (RunStatus::Failed, format!("{}: {e}", path.display())))?;
        let mut log = LogWriter { csv: csv::Writer::from_writer(BufWriter::new(out)), best: f64::INFINITY, error: None };
        log.csv.write_record(LOG_HEADER).map_err(|e| (RunStatus::Failed, e.to_string()))?;

        let run = RunConfig { budget, n0: cell.dim, seed: cell.seed };
        let timing = plan.record_timing;
        let result = {
            let mut observer = |r: &EvalRecord<'_>| {
                records += 1;
                log.best = log.best.min(r.y);
                let (fit, acq) = if timing { (r.model_fit_cpu_s, r.acq_opt_cpu_s) } else { (0.0, 0.0) };
                let extra = serde_json::to_string(r.extra).expect("extras serialize");
                let row = [
                    r.index.to_string(),
                    format_float(r.y),
                    format_float(problem.target_gap(log.best)),
                    format_float(fit),
                    format_float(acq),
                    extra,
                ];
                if let Err(e) = log.csv.write_record(&row) {
                    log.error.get_or_insert(e);
                }
            };
            panic::catch_unwind(AssertUnwindSafe(|| runner(cell, &problem, &run, &mut observer)))
        };
        // partial logs are kept whatever happened
        let flushed = log.csv.flush();
        match result {
            Err(payload) => Err((RunStatus::Crashed, panic_message(&*payload))),
            Ok(Err(e)) => Err((RunStatus::Failed, e.to_string())),
            Ok(Ok(_)) => {
                if let Some(e) = log.error {
                    return Err((RunStatus::Failed, format!("log write: {e}")));
                }
                flushed.map_err(|e| (RunStatus::Failed, format!("log write: {e}")))?;
                if records != budget {
                    return Err((RunStatus::Failed, format!("{records} evaluations for a budget of {budget}")));
                }
                Ok(())
            }
        }
    })();

    let (status, cause) = match outcome {
        Ok(()) => (RunStatus::Completed, None),
        Err((s, c)) => (s, Some(c)),
    };
    ManifestEntry {
        cell: cell.clone(),
        budget,
        status,
        cause,
        records,
        total_cpu_s: (thread_cpu_seconds() - cpu0).max(0.0),
        file,
        started_unix_s: started,
        finished_unix_s: unix_now(),
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::MalformedLog {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}
