//! Post-processing of run logs: convergence statistics, CPU-time summaries
//! with bootstrap intervals, Wilcoxon signed-rank tests and violin data.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{format_float, read_manifest, ManifestEntry, RunStatus, LOG_HEADER, MANIFEST_FILE};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub evaluation: usize,
    pub raw_y: f64,
    pub gap: f64,
    pub model_fit_cpu_s: f64,
    pub acq_opt_cpu_s: f64,
    pub extra_json: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub path: PathBuf,
    pub algorithm: String,
    pub fid: u32,
    pub dim: usize,
    pub instance: u64,
    pub repetition: usize,
    pub status: RunStatus,
    /// Total run CPU from the manifest, when one was found.
    pub total_cpu_s: Option<f64>,
    pub rows: Vec<LogRow>,
}

impl RunLog {
    pub fn final_gap(&self) -> Option<f64> {
        self.rows.last().map(|r| r.gap)
    }

    /// Gap after `evaluation` evaluations (1-based).
    pub fn gap_at(&self, evaluation: usize) -> Option<f64> {
        evaluation.checked_sub(1).and_then(|i| self.rows.get(i)).map(|r| r.gap)
    }
}

fn malformed(path: &Path, message: impl Into<String>) -> Error {
    Error::MalformedLog { path: path.to_path_buf(), message: message.into() }
}

/// Splits `ALGO_fFID_dDIM_iINST_rREP.csv` into its coordinates.
pub fn parse_log_name(name: &str) -> Option<(String, u32, usize, u64, usize)> {
    let stem = name.strip_suffix(".csv")?;
    let mut parts = stem.rsplitn(5, '_');
    let rep = parts.next()?.strip_prefix('r')?.parse().ok()?;
    let inst = parts.next()?.strip_prefix('i')?.parse().ok()?;
    let dim = parts.next()?.strip_prefix('d')?.parse().ok()?;
    let fid = parts.next()?.strip_prefix('f')?.parse().ok()?;
    let algo = parts.next()?;
    if algo.is_empty() {
        return None;
    }
    Some((algo.to_string(), fid, dim, inst, rep))
}

pub fn read_log(path: &Path) -> Result<RunLog> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let (algorithm, fid, dim, instance, repetition) =
        parse_log_name(name).ok_or_else(|| malformed(path, "file name does not follow ALGO_fFID_dDIM_iINST_rREP.csv"))?;
    let mut reader = csv::Reader::from_path(path).map_err(|e| malformed(path, e.to_string()))?;
    let header = reader.headers().map_err(|e| malformed(path, e.to_string()))?;
    if header.iter().ne(LOG_HEADER) {
        return Err(malformed(path, format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| malformed(path, format!("line {line}: {e}")))?;
        let num = |j: usize| -> Result<f64> {
            rec[j].parse::<f64>().map_err(|_| malformed(path, format!("line {line}: bad number `{}`", &rec[j])))
        };
        let evaluation: usize =
            rec[0].parse().map_err(|_| malformed(path, format!("line {line}: bad index `{}`", &rec[0])))?;
        if evaluation != i + 1 {
            return Err(malformed(path, format!("line {line}: index {evaluation}, expected {}", i + 1)));
        }
        rows.push(LogRow {
            evaluation,
            raw_y: num(1)?,
            gap: num(2)?,
            model_fit_cpu_s: num(3)?,
            acq_opt_cpu_s: num(4)?,
            extra_json: rec[5].to_string(),
        });
    }
    Ok(RunLog { path: path.to_path_buf(), algorithm, fid, dim, instance, repetition, status: RunStatus::Completed, total_cpu_s: None, rows })
}

/// Reads every log in `dir`. When a manifest is present, statuses and run
/// totals come from it and manifest runs without a log count as crashed.
pub fn load_dir(dir: &Path) -> Result<Vec<RunLog>> {
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| parse_log_name(n).is_some())
        .collect();
    names.sort();
    let mut logs: Vec<RunLog> = names.iter().map(|n| read_log(&dir.join(n))).collect::<Result<_>>()?;
    let manifest_path = dir.join(MANIFEST_FILE);
    if manifest_path.exists() {
        let entries: BTreeMap<String, ManifestEntry> =
            read_manifest(&manifest_path)?.into_iter().map(|e| (e.file.clone(), e)).collect();
        for log in &mut logs {
            let name = log.path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            match entries.get(name) {
                Some(e) => {
                    log.status = e.status;
                    log.total_cpu_s = Some(e.total_cpu_s);
                }
                None => log.status = RunStatus::Crashed,
            }
        }
        for (file, e) in &entries {
            if !names.contains(file) {
                logs.push(RunLog {
                    path: dir.join(file),
                    algorithm: e.cell.algorithm.clone(),
                    fid: e.cell.fid,
                    dim: e.cell.dim,
                    instance: e.cell.instance,
                    repetition: e.cell.repetition,
                    status: RunStatus::Crashed,
                    total_cpu_s: Some(e.total_cpu_s),
                    rows: Vec::new(),
                });
            }
        }
    }
    Ok(logs)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceCurve {
    pub algorithm: String,
    pub fid: u32,
    pub dim: usize,
    /// Completed runs aggregated.
    pub run_count: usize,
    /// Failed or crashed runs left out.
    pub excluded: usize,
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    pub q1: Vec<f64>,
    pub q3: Vec<f64>,
}

type GroupKey = (String, u32, usize);

fn group_runs(logs: &[RunLog]) -> BTreeMap<GroupKey, Vec<&RunLog>> {
    let mut groups: BTreeMap<GroupKey, Vec<&RunLog>> = BTreeMap::new();
    for log in logs {
        groups.entry((log.algorithm.clone(), log.fid, log.dim)).or_default().push(log);
    }
    groups
}

/// Per-evaluation gap statistics for each (algorithm, fid, dim) group.
pub fn aggregate_convergence(logs: &[RunLog]) -> Result<Vec<ConvergenceCurve>> {
    let mut out = Vec::new();
    for ((algorithm, fid, dim), runs) in group_runs(logs) {
        let done: Vec<&RunLog> = runs.iter().copied().filter(|r| r.status == RunStatus::Completed).collect();
        let excluded = runs.len() - done.len();
        if let Some(first) = done.first() {
            if done.iter().any(|r| r.rows.len() != first.rows.len()) {
                let mut files: Vec<PathBuf> = done.iter().map(|r| r.path.clone()).collect();
                files.sort();
                return Err(Error::Aggregation {
                    message: format!("mixed budgets in group {algorithm} f{fid} d{dim}"),
                    files,
                });
            }
        }
        let len = done.first().map_or(0, |r| r.rows.len());
        let mut curve = ConvergenceCurve {
            algorithm,
            fid,
            dim,
            run_count: done.len(),
            excluded,
            mean: Vec::with_capacity(len),
            median: Vec::with_capacity(len),
            q1: Vec::with_capacity(len),
            q3: Vec::with_capacity(len),
        };
        let mut column = Vec::with_capacity(done.len());
        for i in 0..len {
            column.clear();
            column.extend(done.iter().map(|r| r.rows[i].gap));
            column.sort_by(f64::total_cmp);
            curve.mean.push(column.iter().sum::<f64>() / column.len() as f64);
            curve.median.push(quantile_sorted(&column, 0.5));
            curve.q1.push(quantile_sorted(&column, 0.25));
            curve.q3.push(quantile_sorted(&column, 0.75));
        }
        out.push(curve);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CpuScope {
    TotalRun,
    ModelFit,
    AcqOpt,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CpuSummary {
    pub algorithm: String,
    pub dim: usize,
    pub scope: CpuScope,
    pub mean_seconds: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub run_count: usize,
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Mean over a run's evaluations that carry a nonzero time, zero if none do.
fn per_iteration_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.filter(|v| *v > 0.0).fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean of per-function means.
fn mean_of_strata(strata: &[Vec<f64>]) -> f64 {
    strata.iter().map(|s| s.iter().sum::<f64>() / s.len() as f64).sum::<f64>() / strata.len() as f64
}

/// Point estimate and percentile 95% interval of the mean of per-stratum
/// means, resampling runs within each stratum.
pub fn stratified_bootstrap(strata: &[Vec<f64>], resamples: usize, seed: u64) -> (f64, f64, f64) {
    let point = mean_of_strata(strata);
    let mut rng = seed::rng(seed);
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            let draw: Vec<Vec<f64>> =
                strata.iter().map(|s| (0..s.len()).map(|_| s[rng.random_range(0..s.len())]).collect()).collect();
            mean_of_strata(&draw)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&stats, 0.025).min(point);
    let hi = quantile_sorted(&stats, 0.975).max(point);
    (point, lo, hi)
}

/// CPU summaries for every algorithm at `dim`. Completed runs only; the
/// total scope needs manifest totals and is skipped without them.
pub fn cpu_summary(logs: &[RunLog], dim: usize, seed: u64) -> Vec<CpuSummary> {
    let mut by_algo: BTreeMap<&str, BTreeMap<u32, Vec<&RunLog>>> = BTreeMap::new();
    for log in logs.iter().filter(|l| l.dim == dim && l.status == RunStatus::Completed) {
        by_algo.entry(&log.algorithm).or_default().entry(log.fid).or_default().push(log);
    }
    let mut out = Vec::new();
    for (algo, by_fid) in by_algo {
        let run_count = by_fid.values().map(Vec::len).sum();
        for scope in [CpuScope::TotalRun, CpuScope::ModelFit, CpuScope::AcqOpt] {
            let value = |r: &RunLog| -> Option<f64> {
                match scope {
                    CpuScope::TotalRun => r.total_cpu_s,
                    CpuScope::ModelFit => Some(per_iteration_mean(r.rows.iter().map(|x| x.model_fit_cpu_s))),
                    CpuScope::AcqOpt => Some(per_iteration_mean(r.rows.iter().map(|x| x.acq_opt_cpu_s))),
                }
            };
            let strata: Option<Vec<Vec<f64>>> =
                by_fid.values().map(|runs| runs.iter().map(|r| value(r)).collect()).collect();
            let Some(strata) = strata else { continue };
            let s = seed::SeedHasher::new().u64(seed).str(algo).u64(dim as u64).u64(scope as u64).finish();
            let (mean, lo, hi) = stratified_bootstrap(&strata, BOOTSTRAP_RESAMPLES, s);
            out.push(CpuSummary {
                algorithm: algo.to_string(),
                dim,
                scope,
                mean_seconds: mean,
                ci_low: lo,
                ci_high: hi,
                run_count,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`.
    pub statistic: f64,
    pub p_value: f64,
    /// Number of nonzero differences.
    pub m: usize,
    pub exact: bool,
}

pub const EXACT_LIMIT: usize = 15;

/// Two-sided Wilcoxon signed-rank test on paired samples. Zero differences
/// are dropped and tied magnitudes share their average rank.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid(format!("paired samples of equal nonzero length required, got {} and {}", a.len(), b.len())));
    }
    let mut d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    if d.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("differences contain NaN"));
    }
    let m = d.len();
    if m == 0 {
        return Err(Error::UndefinedTest("all paired differences are zero".into()));
    }
    d.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    // ranks doubled so tied averages stay integral
    let mut rank2 = vec![0u64; m];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < m {
        let mut j = i;
        while j + 1 < m && d[j + 1].abs() == d[i].abs() {
            j += 1;
        }
        let r2 = (i + j + 2) as u64;
        rank2[i..=j].iter_mut().for_each(|r| *r = r2);
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let w_plus2: u64 = d.iter().zip(&rank2).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let total2: u64 = rank2.iter().sum();
    let w2 = w_plus2.min(total2 - w_plus2);
    let statistic = w2 as f64 / 2.0;

    if m <= EXACT_LIMIT {
        // counts of each doubled W+ over all 2^m sign assignments
        let mut counts = vec![0u64; total2 as usize + 1];
        counts[0] = 1;
        let mut reach = 0usize;
        for &r in &rank2 {
            let r = r as usize;
            for s in (0..=reach).rev() {
                if counts[s] > 0 {
                    counts[s + r] += counts[s];
                }
            }
            reach += r;
        }
        let extreme: u64 = counts
            .iter()
            .enumerate()
            .filter(|(s, _)| (*s as u64).min(total2 - *s as u64) <= w2)
            .map(|(_, c)| c)
            .sum();
        let p = extreme as f64 / 2f64.powi(m as i32);
        return Ok(WilcoxonResult { statistic, p_value: p.min(1.0), m, exact: true });
    }

    let mf = m as f64;
    let mean = mf * (mf + 1.0) / 4.0;
    let var = mf * (mf + 1.0) * (2.0 * mf + 1.0) / 24.0 - tie_term / 48.0;
    let z = ((mean - statistic).abs() - 0.5).max(0.0) / var.sqrt();
    let p = (2.0 * crate::acquisition::normal_cdf(-z)).min(1.0);
    Ok(WilcoxonResult { statistic, p_value: p, m, exact: false })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WilcoxonRow {
    pub algorithm_a: String,
    pub algorithm_b: String,
    pub fid: u32,
    pub dim: usize,
    pub checkpoint: usize,
    pub pairs: usize,
    pub median_a: f64,
    pub median_b: f64,
    /// `None` when the test is undefined.
    pub result: Option<WilcoxonResult>,
    pub significant: bool,
}

/// Tests gap differences of two algorithms at each checkpoint, pairing
/// runs by (fid, dim, instance, repetition).
pub fn wilcoxon_table(
    logs: &[RunLog],
    pairs: &[(String, String)],
    checkpoints: &[usize],
    dims: Option<&[usize]>,
    alpha: f64,
) -> Vec<WilcoxonRow> {
    type Cell = (u32, usize, u64, usize);
    let index = |algo: &str| -> BTreeMap<Cell, &RunLog> {
        logs.iter()
            .filter(|l| l.algorithm == algo && l.status == RunStatus::Completed)
            .filter(|l| dims.is_none_or(|d| d.contains(&l.dim)))
            .map(|l| ((l.fid, l.dim, l.instance, l.repetition), l))
            .collect()
    };
    let median = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        if s.is_empty() {
            f64::NAN
        } else {
            quantile_sorted(&s, 0.5)
        }
    };
    let mut out = Vec::new();
    for (a, b) in pairs {
        let (ia, ib) = (index(a), index(b));
        let mut groups: BTreeMap<(u32, usize), Vec<(&RunLog, &RunLog)>> = BTreeMap::new();
        for (cell, la) in &ia {
            if let Some(lb) = ib.get(cell) {
                groups.entry((cell.0, cell.1)).or_default().push((la, lb));
            }
        }
        for ((fid, dim), runs) in groups {
            for &cp in checkpoints {
                let (ga, gb): (Vec<f64>, Vec<f64>) =
                    runs.iter().filter_map(|(x, y)| Some((x.gap_at(cp)?, y.gap_at(cp)?))).unzip();
                if ga.is_empty() {
                    continue;
                }
                let result = wilcoxon_signed_rank(&ga, &gb).ok();
                out.push(WilcoxonRow {
                    algorithm_a: a.clone(),
                    algorithm_b: b.clone(),
                    fid,
                    dim,
                    checkpoint: cp,
                    pairs: ga.len(),
                    median_a: median(&ga),
                    median_b: median(&gb),
                    significant: result.is_some_and(|r| r.p_value < alpha),
                    result,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolinPoint {
    pub algorithm: String,
    pub fid: u32,
    pub dim: usize,
    pub instance: u64,
    pub repetition: usize,
    pub final_gap: f64,
}

/// One row per completed run with its final gap.
pub fn violin_data(logs: &[RunLog]) -> Vec<ViolinPoint> {
    let mut out: Vec<ViolinPoint> = logs
        .iter()
        .filter(|l| l.status == RunStatus::Completed)
        .filter_map(|l| {
            Some(ViolinPoint {
                algorithm: l.algorithm.clone(),
                fid: l.fid,
                dim: l.dim,
                instance: l.instance,
                repetition: l.repetition,
                final_gap: l.final_gap()?,
            })
        })
        .collect();
    out.sort_by(|x, y| {
        (&x.algorithm, x.fid, x.dim, x.instance, x.repetition).cmp(&(&y.algorithm, y.fid, y.dim, y.instance, y.repetition))
    });
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Report {
    pub convergence: Vec<ConvergenceCurve>,
    pub cpu: Vec<CpuSummary>,
    pub wilcoxon: Vec<WilcoxonRow>,
    pub violin: Vec<ViolinPoint>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportIndex {
    pub convergence: Vec<String>,
    pub cpu: Vec<String>,
    pub wilcoxon: Vec<String>,
    pub violin: Vec<String>,
}

pub const INDEX_FILE: &str = "index.json";

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn dims_of<T>(items: &[T], dim: impl Fn(&T) -> usize) -> Vec<usize> {
    let mut d: Vec<usize> = items.iter().map(dim).collect();
    d.sort_unstable();
    d.dedup();
    d
}

/// Writes plot-ready CSV tables, one per figure analog and dimension, plus
/// `index.json` listing them.
pub fn export_report(report: &Report, out_dir: &Path) -> Result<ReportIndex> {
    fs::create_dir_all(out_dir).map_err(|e| Error::Setup(format!("cannot create {}: {e}", out_dir.display())))?;
    let f = format_float;
    let mut index = ReportIndex::default();

    for dim in dims_of(&report.convergence, |c| c.dim) {
        let name = format!("convergence_d{dim}.csv");
        let rows = report.convergence.iter().filter(|c| c.dim == dim).flat_map(|c| {
            (0..c.mean.len()).map(move |i| {
                vec![
                    c.algorithm.clone(),
                    c.fid.to_string(),
                    c.dim.to_string(),
                    (i + 1).to_string(),
                    c.run_count.to_string(),
                    c.excluded.to_string(),
                    f(c.mean[i]),
                    f(c.median[i]),
                    f(c.q1[i]),
                    f(c.q3[i]),
                ]
            })
        });
        write_csv(
            &out_dir.join(&name),
            &["algorithm", "fid", "dim", "evaluation", "run_count", "excluded", "mean", "median", "q1", "q3"],
            rows,
        )?;
        index.convergence.push(name);
    }

    for dim in dims_of(&report.cpu, |c| c.dim) {
        let name = format!("cpu_d{dim}.csv");
        let rows = report.cpu.iter().filter(|c| c.dim == dim).map(|c| {
            vec![
                c.algorithm.clone(),
                c.dim.to_string(),
                format!("{:?}", c.scope),
                f(c.mean_seconds),
                f(c.ci_low),
                f(c.ci_high),
                c.run_count.to_string(),
            ]
        });
        write_csv(&out_dir.join(&name), &["algorithm", "dim", "scope", "mean_s", "ci_low_s", "ci_high_s", "run_count"], rows)?;
        index.cpu.push(name);
    }

    if !report.wilcoxon.is_empty() {
        let name = "wilcoxon.csv".to_string();
        let rows = report.wilcoxon.iter().map(|w| {
            let (stat, p, m, exact) = match &w.result {
                Some(r) => (f(r.statistic), f(r.p_value), r.m.to_string(), r.exact.to_string()),
                None => (String::new(), String::new(), "0".into(), String::new()),
            };
            vec![
                w.algorithm_a.clone(),
                w.algorithm_b.clone(),
                w.fid.to_string(),
                w.dim.to_string(),
                w.checkpoint.to_string(),
                w.pairs.to_string(),
                f(w.median_a),
                f(w.median_b),
                stat,
                p,
                m,
                exact,
                w.significant.to_string(),
            ]
        });
        write_csv(
            &out_dir.join(&name),
            &[
                "algorithm_a",
                "algorithm_b",
                "fid",
                "dim",
                "checkpoint",
                "pairs",
                "median_gap_a",
                "median_gap_b",
                "statistic",
                "p_value",
                "nonzero_pairs",
                "exact",
                "significant",
            ],
            rows,
        )?;
        index.wilcoxon.push(name);
    }

    for dim in dims_of(&report.violin, |v| v.dim) {
        let name = format!("violin_d{dim}.csv");
        let rows = report.violin.iter().filter(|v| v.dim == dim).map(|v| {
            vec![
                v.algorithm.clone(),
                v.fid.to_string(),
                v.dim.to_string(),
                v.instance.to_string(),
                v.repetition.to_string(),
                f(v.final_gap),
            ]
        });
        write_csv(&out_dir.join(&name), &["algorithm", "fid", "dim", "instance", "repetition", "final_gap"], rows)?;
        index.violin.push(name);
    }

    fs::write(out_dir.join(INDEX_FILE), serde_json::to_string_pretty(&index)?)
        .map_err(|e| Error::Setup(format!("cannot write {}: {e}", out_dir.display())))?;
    Ok(index)
}
