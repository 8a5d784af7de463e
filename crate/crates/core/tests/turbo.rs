use hdbo::surrogate::{GpConfig, GpModel, Hyperparams};
use hdbo::turbo::{
    generate_candidates, run_turbo, thompson_select, trust_region_box, update_state, RegionPool, TrustRegionState,
    TurboConfig,
};
use hdbo::{make_problem, Archive, EvalRecord, RunConfig};
use proptest::prelude::*;

#[test]
fn scripted_sequence_follows_the_schedule() {
    let c = TurboConfig::turbo1(40); // failtol 8
    assert_eq!(c.failtol, 8);
    // hand-computed expectations: (length, successes, failures, restart)
    let script = "TTTFFFFFFFFTTFTTTFFFFFFFFFFFFF";
    let mut s = TrustRegionState::new(&c);
    let mut expected = Vec::new();
    let (mut len, mut succ, mut fail) = (0.8f64, 0usize, 0usize);
    for ch in script.chars() {
        if ch == 'T' {
            succ += 1;
            fail = 0;
            if succ == 3 {
                len = (2.0 * len).min(1.6);
                succ = 0;
            }
        } else {
            fail += 1;
            succ = 0;
            if fail == 8 {
                len /= 2.0;
                fail = 0;
            }
        }
        expected.push((len, succ, fail));
    }
    for (i, ch) in script.chars().enumerate() {
        s = update_state(&s, ch == 'T', &c);
        assert_eq!((s.length, s.success_count, s.failure_count), expected[i], "step {i}");
        assert!(s.success_count == 0 || s.failure_count == 0);
    }
    assert_eq!(expected[2].0, 1.6);
}

proptest! {
    #[test]
    fn counters_never_both_nonzero(steps in proptest::collection::vec(any::<bool>(), 1..200), failtol in 1usize..10) {
        let c = TurboConfig { failtol, ..TurboConfig::turbo1(10) };
        let mut s = TrustRegionState::new(&c);
        for st in steps {
            s = update_state(&s, st, &c);
            prop_assert!(s.success_count == 0 || s.failure_count == 0);
            prop_assert!(s.length <= c.length_max);
            prop_assert!(s.length >= c.length_min * 0.5);
            prop_assert_eq!(s.restart_pending, s.length < c.length_min);
            if s.restart_pending {
                break;
            }
        }
    }
}

fn small_model(x: Vec<Vec<f64>>, y: Vec<f64>, ls: f64) -> GpModel {
    let d = x[0].len();
    let hp = Hyperparams { lengthscales: vec![ls; d], signal_variance: 1.0, noise_variance: 0.0 };
    GpModel::with_hyperparams(&x, &y, &GpConfig { noise_variance: 0.0, ..Default::default() }, hp).unwrap()
}

#[test]
fn candidates_stay_in_region_and_perturb_a_subset() {
    let d = 30;
    let c = TurboConfig::turbo1(d);
    let mut state = TrustRegionState::new(&c);
    let mut local = Archive::new();
    local.push(vec![0.5; d], 0.0);
    local.push(vec![0.9; d], 1.0);
    state.local = local;
    let model = small_model(state.local.x().to_vec(), state.local.y().to_vec(), 0.4);
    let cands = generate_candidates(&state, &model, &c, 3).unwrap();
    assert_eq!(cands.len(), 3000);
    let (lo, hi) = trust_region_box(&[0.5; 30], 0.8, &[0.4; 30]);
    let mut perturbed = 0usize;
    for p in &cands {
        let moved = p.iter().filter(|v| **v != 0.5).count();
        assert!(moved >= 1);
        perturbed += moved;
        assert!(p.iter().zip(lo.iter().zip(&hi)).all(|(v, (a, b))| *v >= *a && *v <= *b));
    }
    // probability 20/30 per coordinate
    let rate = perturbed as f64 / (3000.0 * 30.0);
    assert!((rate - 2.0 / 3.0).abs() < 0.02, "{rate}");
    assert_eq!(cands, generate_candidates(&state, &model, &c, 3).unwrap());
}

#[test]
fn low_archived_candidate_wins_thompson_draws() {
    // tiny posterior std everywhere but a clear winner at an archived point
    let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 / 5.0]).collect();
    let mut y = vec![1.0; 6];
    y[2] = -10.0;
    let model = small_model(x.clone(), y, 0.05);
    let mut cands = x.clone();
    cands.extend((0..6).filter(|&i| i != 2).map(|i| vec![i as f64 / 5.0 + 1e-3]));
    let mut wins = 0;
    for trial in 0..100 {
        let pools = [RegionPool { model: &model, candidates: cands.clone() }];
        let picked = thompson_select(&pools, 1, trial).unwrap();
        if picked[0].1 == x[2] {
            wins += 1;
        }
    }
    assert!(wins >= 95, "{wins}");
}

#[test]
fn batch_draws_from_disjoint_pools() {
    let a = small_model(vec![vec![0.1, 0.1], vec![0.2, 0.3]], vec![0.0, 1.0], 0.3);
    let b = small_model(vec![vec![0.8, 0.8], vec![0.7, 0.9]], vec![0.5, -1.0], 0.3);
    let pa: Vec<Vec<f64>> = (0..20).map(|i| vec![0.1 + i as f64 * 0.01, 0.2]).collect();
    let pb: Vec<Vec<f64>> = (0..20).map(|i| vec![0.7 + i as f64 * 0.01, 0.8]).collect();
    let pools = [RegionPool { model: &a, candidates: pa.clone() }, RegionPool { model: &b, candidates: pb.clone() }];
    let picked = thompson_select(&pools, 5, 9).unwrap();
    assert_eq!(picked.len(), 5);
    let mut seen = Vec::new();
    for (r, p) in &picked {
        let pool = if *r == 0 { &pa } else { &pb };
        assert!(pool.contains(p));
        assert!(!seen.contains(p));
        seen.push(p.clone());
    }
    // exhausted pools give a shorter batch
    let tiny = [RegionPool { model: &a, candidates: pa[..2].to_vec() }];
    assert_eq!(thompson_select(&tiny, 5, 1).unwrap().len(), 2);
}

fn run(tc: TurboConfig, fid: u32, dim: usize, cfg: RunConfig) -> (Archive, Vec<(usize, Option<usize>, f64)>) {
    let p = make_problem(fid, dim, 0).unwrap();
    let mut seen = Vec::new();
    let mut obs = |r: &EvalRecord| seen.push((r.index, r.extra.region, r.model_fit_cpu_s));
    let a = run_turbo(&p, &cfg, &tc, &GpConfig::default(), &mut obs).unwrap();
    (a, seen)
}

#[test]
fn runs_spend_the_budget_exactly() {
    for (tc, dim) in [(TurboConfig::turbo1(6), 6), (TurboConfig::turbom(10), 10)] {
        let cfg = RunConfig { budget: 47, n0: dim, seed: 5 };
        let tr = tc.tr_count;
        let (a, seen) = run(tc.clone(), 7, dim, cfg);
        assert_eq!(a.len(), 47);
        assert_eq!(seen.len(), 47);
        assert!(seen.iter().all(|s| s.1.is_some_and(|r| r < tr)));
        assert!(a.x().iter().flatten().all(|v| (-5.0..=5.0).contains(v)));
        let bsf = a.best_so_far();
        assert!(bsf.windows(2).all(|w| w[1] <= w[0]));
        let (b, _) = run(tc, 7, dim, cfg);
        assert_eq!(a, b);
    }
}

#[test]
fn restarts_reset_the_region() {
    // a flat function never improves, so the region keeps halving
    let p = hdbo::objective::FnObjective::new(hdbo::Bounds::uniform(2, -5.0, 5.0), |_x: &[f64]| 1.0);
    let tc = TurboConfig { failtol: 1, ..TurboConfig::turbo1(2) };
    let cfg = RunConfig { budget: 120, n0: 2, seed: 1 };
    let mut notes = Vec::new();
    let mut obs = |r: &EvalRecord| notes.push(r.extra.note.clone());
    let a = run_turbo(&p, &cfg, &tc, &GpConfig::default(), &mut obs).unwrap();
    assert_eq!(a.len(), 120);
    // length 0.8 needs seven halvings to drop below 0.5^7, then a fresh
    // design of 2 * batch_size points follows
    let first = notes.iter().position(|n| n.as_deref() == Some("restart")).expect("a restart happened");
    assert_eq!(first, 10 + 7 * 5);
    assert!(notes[first..first + 10].iter().all(|n| n.as_deref() == Some("restart")));
}
