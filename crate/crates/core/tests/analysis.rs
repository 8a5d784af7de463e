use std::path::PathBuf;

use hdbo::analysis::{
    aggregate_convergence, cpu_summary, export_report, load_dir, violin_data, wilcoxon_signed_rank, wilcoxon_table,
    CpuScope, LogRow, Report, ReportIndex, RunLog, INDEX_FILE,
};
use hdbo::harness::RunStatus;
use hdbo::seed;
use proptest::prelude::*;
use rand::Rng;

/// Brute-force two-sided p: share of the 2^m sign assignments whose
/// `min(W+, W-)` is at most the observed one.
fn enumeration_p(d: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
    let m = d.len();
    let ranks: Vec<f64> = d
        .iter()
        .map(|x| {
            let below = d.iter().filter(|y| y.abs() < x.abs()).count() as f64;
            let equal = d.iter().filter(|y| y.abs() == x.abs()).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let total: f64 = ranks.iter().sum();
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let w = w_plus.min(total - w_plus);
    let mut hits = 0u64;
    for mask in 0u64..(1 << m) {
        let s: f64 = (0..m).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if s.min(total - s) <= w + 1e-9 {
            hits += 1;
        }
    }
    (w, hits as f64 / (1u64 << m) as f64)
}

#[test]
fn wilcoxon_small_example() {
    let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap();
    assert_eq!(r.statistic, 0.0);
    assert!((r.p_value - 0.25).abs() < 1e-15);
    assert!(r.exact);
}

#[test]
fn wilcoxon_identical_samples_are_undefined() {
    let a = [1.0, 2.0, 3.0];
    assert!(matches!(wilcoxon_signed_rank(&a, &a), Err(hdbo::Error::UndefinedTest(_))));
    assert!(wilcoxon_signed_rank(&a, &a[..2]).is_err());
}

#[test]
fn wilcoxon_exact_matches_enumeration() {
    let mut rng = seed::rng(12);
    for case in 0..50 {
        let n = rng.random_range(1..=12);
        // rounding creates ties and zero differences
        let a: Vec<f64> = (0..n).map(|_| (rng.random_range(-3.0..3.0f64) * 2.0).round() / 2.0).collect();
        let b: Vec<f64> = (0..n).map(|_| (rng.random_range(-3.0..3.0f64) * 2.0).round() / 2.0).collect();
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        if d.iter().all(|v| *v == 0.0) {
            continue;
        }
        let (w, p) = enumeration_p(&d);
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.statistic, w, "case {case}");
        assert!((r.p_value - p).abs() < 1e-12, "case {case}: {} vs {p}", r.p_value);
    }
    // m = 10 with continuous data
    let a: Vec<f64> = (0..10).map(|_| rng.random()).collect();
    let b: Vec<f64> = (0..10).map(|_| rng.random()).collect();
    let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    assert!((wilcoxon_signed_rank(&a, &b).unwrap().p_value - enumeration_p(&d).1).abs() < 1e-12);
}

#[test]
fn wilcoxon_normal_branch_tracks_enumeration() {
    let mut rng = seed::rng(4);
    for _ in 0..3 {
        let a: Vec<f64> = (0..18).map(|i| i as f64 * 0.1 + rng.random_range(-0.6..0.6)).collect();
        let b: Vec<f64> = (0..18).map(|i| i as f64 * 0.1).collect();
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert!(!r.exact);
        let (_, p) = enumeration_p(&d);
        assert!((r.p_value - p).abs() < 0.01, "{} vs {p}", r.p_value);
    }
}

proptest! {
    #[test]
    fn wilcoxon_p_in_unit_interval_and_symmetric(
        pairs in proptest::collection::vec((-5i32..5, -5i32..5), 1..30)
    ) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        if let Ok(r) = wilcoxon_signed_rank(&a, &b) {
            prop_assert!((0.0..=1.0).contains(&r.p_value));
            let s = wilcoxon_signed_rank(&b, &a).unwrap();
            prop_assert_eq!(r.statistic, s.statistic);
            prop_assert!((r.p_value - s.p_value).abs() < 1e-15);
        }
    }
}

fn run(algo: &str, fid: u32, inst: u64, rep: usize, gaps: &[f64], fit: f64, total: f64) -> RunLog {
    RunLog {
        path: PathBuf::from(hdbo::harness::log_file_name(algo, fid, 2, inst, rep)),
        algorithm: algo.into(),
        fid,
        dim: 2,
        instance: inst,
        repetition: rep,
        status: RunStatus::Completed,
        total_cpu_s: Some(total),
        rows: gaps
            .iter()
            .enumerate()
            .map(|(i, g)| LogRow {
                evaluation: i + 1,
                raw_y: *g,
                gap: *g,
                model_fit_cpu_s: if i < 2 { 0.0 } else { fit },
                acq_opt_cpu_s: if i < 2 { 0.0 } else { fit / 10.0 },
                extra_json: "{}".into(),
            })
            .collect(),
    }
}

#[test]
fn convergence_statistics() {
    let one = aggregate_convergence(&[run("bo", 1, 0, 0, &[5.0, 3.0, 3.0, 1.0], 0.1, 1.0)]).unwrap();
    assert_eq!(one[0].median, [5.0, 3.0, 3.0, 1.0]);
    assert_eq!(one[0].run_count, 1);

    let two = aggregate_convergence(&[run("bo", 1, 0, 0, &[2.0; 150], 0.1, 1.0), run("bo", 1, 1, 0, &[4.0; 150], 0.1, 1.0)])
        .unwrap();
    assert_eq!(two[0].mean.len(), 150);
    assert!(two[0].mean.iter().all(|m| *m == 3.0));

    let mut crashed = run("bo", 1, 2, 0, &[1.0; 3], 0.1, 1.0);
    crashed.status = RunStatus::Crashed;
    let c = aggregate_convergence(&[run("bo", 1, 0, 0, &[2.0; 5], 0.1, 1.0), crashed]).unwrap();
    assert_eq!((c[0].run_count, c[0].excluded), (1, 1));
}

#[test]
fn mixed_budgets_name_the_files() {
    let logs = [run("bo", 1, 0, 0, &[2.0; 5], 0.1, 1.0), run("bo", 1, 0, 1, &[2.0; 6], 0.1, 1.0)];
    match aggregate_convergence(&logs) {
        Err(hdbo::Error::Aggregation { files, .. }) => {
            assert_eq!(files, [PathBuf::from("bo_f1_d2_i0_r0.csv"), PathBuf::from("bo_f1_d2_i0_r1.csv")])
        }
        other => panic!("{other:?}"),
    }
}

proptest! {
    #[test]
    fn aggregation_invariants(runs in proptest::collection::vec(proptest::collection::vec(0.0f64..10.0, 8), 1..7), shift in 0usize..7) {
        let logs: Vec<RunLog> = runs.iter().enumerate().map(|(i, steps)| {
            let mut best = f64::INFINITY;
            let gaps: Vec<f64> = steps.iter().map(|v| { best = best.min(*v); best }).collect();
            run("bo", 1, 0, i, &gaps, 0.1, 1.0)
        }).collect();
        let mut rotated = logs.clone();
        rotated.rotate_left(shift % logs.len());
        let a = aggregate_convergence(&logs).unwrap();
        let b = aggregate_convergence(&rotated).unwrap();
        prop_assert_eq!(&a[0].median, &b[0].median);
        prop_assert_eq!(&a[0].q1, &b[0].q1);
        prop_assert_eq!(&a[0].q3, &b[0].q3);
        for i in 0..a[0].mean.len() {
            prop_assert!((a[0].mean[i] - b[0].mean[i]).abs() < 1e-12);
        }
        let c = &a[0];
        prop_assert!(c.median.windows(2).all(|w| w[1] <= w[0]));
        for i in 0..c.median.len() {
            prop_assert!(c.q1[i] <= c.median[i] && c.median[i] <= c.q3[i]);
        }
    }
}

#[test]
fn cpu_summaries() {
    let same: Vec<RunLog> = (0..4).map(|r| run("bo", 1 + r as u32 % 2, 0, r, &[1.0; 6], 0.2, 3.0)).collect();
    let s = cpu_summary(&same, 2, 1);
    assert_eq!(s.len(), 3);
    for c in &s {
        assert_eq!((c.ci_low, c.ci_high), (c.mean_seconds, c.mean_seconds));
    }
    let fit = s.iter().find(|c| c.scope == CpuScope::ModelFit).unwrap();
    assert!((fit.mean_seconds - 0.2).abs() < 1e-15);

    let varied: Vec<RunLog> =
        (0..8).map(|r| run("bo", 1 + r as u32 % 3, 0, r, &[1.0; 6], 0.1 * (r + 1) as f64, r as f64 + 1.0)).collect();
    let doubled: Vec<RunLog> = (0..8)
        .map(|r| run("bo", 1 + r as u32 % 3, 0, r, &[1.0; 6], 0.2 * (r + 1) as f64, 2.0 * (r as f64 + 1.0)))
        .collect();
    let a = cpu_summary(&varied, 2, 7);
    let b = cpu_summary(&doubled, 2, 7);
    assert_eq!(a, cpu_summary(&varied, 2, 7));
    for (x, y) in a.iter().zip(&b) {
        assert!(x.ci_low <= x.mean_seconds && x.mean_seconds <= x.ci_high);
        assert!(x.ci_low < x.ci_high);
        for (u, v) in [(x.mean_seconds, y.mean_seconds), (x.ci_low, y.ci_low), (x.ci_high, y.ci_high)] {
            assert!((2.0 * u - v).abs() < 1e-12 * v.abs().max(1.0), "{u} {v}");
        }
    }
    assert!(cpu_summary(&varied, 5, 7).is_empty());
}

#[test]
fn wilcoxon_table_pairs_runs() {
    let mut logs = Vec::new();
    for rep in 0..6 {
        logs.push(run("bo", 1, 0, rep, &[3.0, 2.0, 1.0 + rep as f64 * 0.01], 0.1, 1.0));
        logs.push(run("cmaes", 1, 0, rep, &[3.0, 2.5, 2.0 + rep as f64 * 0.1], 0.0, 1.0));
    }
    let rows = wilcoxon_table(&logs, &[("bo".into(), "cmaes".into())], &[1, 3], None, 0.05);
    assert_eq!(rows.len(), 2);
    assert!(rows[0].result.is_none() && !rows[0].significant);
    let r = rows[1].result.unwrap();
    assert_eq!((rows[1].pairs, r.statistic), (6, 0.0));
    assert!((r.p_value - 2.0 / 64.0).abs() < 1e-15);
    assert!(rows[1].significant);
}

#[test]
fn report_export() {
    let dir = tempfile::tempdir().unwrap();
    let empty = export_report(&Report::default(), dir.path()).unwrap();
    assert_eq!(empty, ReportIndex::default());
    let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files, [INDEX_FILE]);
    let index: ReportIndex = serde_json::from_str(&std::fs::read_to_string(dir.path().join(INDEX_FILE)).unwrap()).unwrap();
    assert_eq!(index, ReportIndex::default());

    let logs: Vec<RunLog> = ["bo", "cmaes", "turbo1"]
        .iter()
        .flat_map(|a| (0..3).map(move |r| run(a, 1, 0, r, &[4.0, 2.0, 2.0, 1.0 + r as f64], 0.1, 1.0)))
        .collect();
    let report = Report {
        convergence: aggregate_convergence(&logs).unwrap(),
        cpu: cpu_summary(&logs, 2, 0),
        wilcoxon: wilcoxon_table(&logs, &[("bo".into(), "cmaes".into())], &[4], None, 0.05),
        violin: violin_data(&logs),
    };
    let out = tempfile::tempdir().unwrap();
    let index = export_report(&report, out.path()).unwrap();
    let rows = |f: &str| csv::Reader::from_path(out.path().join(f)).unwrap().records().count();
    // budget 4 times three algorithms
    assert_eq!(rows(&index.convergence[0]), 12);
    assert_eq!(rows(&index.violin[0]), 9);
    assert_eq!(rows(&index.cpu[0]), 9);
    assert_eq!(index.wilcoxon, ["wilcoxon.csv"]);
}

#[test]
fn harness_output_loads() {
    let dir = tempfile::tempdir().unwrap();
    let plan = hdbo::harness::PlanLayer {
        algorithms: Some(vec!["cmaes".into()]),
        fids: Some(vec![3]),
        dims: Some(vec![2]),
        instances: Some(vec![0, 1]),
        repetitions: Some(2),
        output_root: Some(dir.path().to_path_buf()),
        jobs: Some(1),
        ..Default::default()
    }
    .resolve()
    .unwrap();
    hdbo::harness::run_experiment(&plan).unwrap();
    let logs = load_dir(dir.path()).unwrap();
    assert_eq!(logs.len(), 4);
    assert!(logs.iter().all(|l| l.rows.len() == 70 && l.total_cpu_s.is_some()));
    let curves = aggregate_convergence(&logs).unwrap();
    assert_eq!((curves.len(), curves[0].run_count, curves[0].mean.len()), (1, 4, 70));

    // a manifest run whose log vanished counts as excluded
    std::fs::remove_file(dir.path().join("cmaes_f3_d2_i1_r1.csv")).unwrap();
    let logs = load_dir(dir.path()).unwrap();
    let curves = aggregate_convergence(&logs).unwrap();
    assert_eq!((curves[0].run_count, curves[0].excluded), (3, 1));

    std::fs::write(dir.path().join("cmaes_f3_d2_i0_r0.csv"), "evaluation,raw_y\n1,2\n").unwrap();
    assert!(matches!(load_dir(dir.path()), Err(hdbo::Error::MalformedLog { .. })));
}
