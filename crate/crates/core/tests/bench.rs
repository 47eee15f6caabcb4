use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use proptest::prelude::*;
use qrl_core::agents::{AgentKind, SolverBackend};
use qrl_core::algos::rfs_quantum_query_count;
use qrl_core::bench::verify::{run_suite, Suite};
use qrl_core::bench::{
    derive_seed, emit_report, fit_scaling, load_bundle, quantile, run_experiment, run_trial, BudgetSchedule,
    EfficiencyGrid, ExperimentConfig, Metric, ResultsBundle, ScalingModel, TrialRecord, TRIALS_FILE,
};
use qrl_core::envs::{Family, JumpDist, Variant};
use qrl_core::Error;

fn simon_cfg(sizes: &[usize], agents: &[AgentKind], trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        family: Family::Simon,
        variant: Variant::M2Rg,
        sizes: sizes.to_vec(),
        l: None,
        trials,
        agents: agents.to_vec(),
        budget: BudgetSchedule::Exp2 { coeff: 64.0, rate: 0.5, offset: 2000 },
        budget_overrides: BTreeMap::new(),
        efficiency: None,
        master_seed: 11,
        backend: SolverBackend::Auto,
        jump_dist: JumpDist::default(),
        permute_labels: true,
        output_dir: None,
    }
}

fn brute_median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else if v[m / 2].is_infinite() {
        f64::INFINITY
    } else {
        (v[m / 2 - 1] + v[m / 2]) / 2.0
    }
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn bundle_counts_every_cell_and_is_deterministic() {
    let cfg = simon_cfg(&[4, 6, 8], &[AgentKind::A3, AgentKind::CollisionSeeker], 100);
    let a = run_experiment(&cfg).unwrap();
    assert_eq!(a.trials.len(), 600);
    assert_eq!(a.summary.len(), 6);
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a, b);

    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    emit_report(&a, d1.path()).unwrap();
    emit_report(&b, d2.path()).unwrap();
    for f in ["summary.csv", "solver.csv", "fits.csv", "README.txt"] {
        assert_eq!(read(d1.path(), f), read(d2.path(), f), "{f}");
    }
    let csv = read(d1.path(), "summary.csv");
    assert_eq!(csv.lines().next().unwrap(), "n,agent,median_steps,q25,q75,success_rate");
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn seeds_differ_across_cells_and_streams() {
    let mut seen = std::collections::BTreeSet::new();
    for n in [4, 6] {
        for tag in ["instance", "a3", "collision_seeker"] {
            for t in 0..50 {
                assert!(seen.insert(derive_seed(3, n, None, tag, t)));
            }
        }
    }
    assert_eq!(derive_seed(3, 4, None, "a3", 7), derive_seed(3, 4, None, "a3", 7));
    assert_ne!(derive_seed(3, 4, None, "a3", 7), derive_seed(4, 4, None, "a3", 7));
    assert_ne!(derive_seed(3, 4, Some(2), "a3", 7), derive_seed(3, 4, Some(3), "a3", 7));
}

#[test]
fn agents_in_a_cell_share_the_instance() {
    let cfg = simon_cfg(&[6], &[AgentKind::A3, AgentKind::CollisionSeeker], 3);
    let b = run_experiment(&cfg).unwrap();
    for t in 0..3 {
        let seeds: Vec<u64> = b.trials.iter().filter(|r| r.trial == t).map(|r| r.instance_seed).collect();
        assert_eq!(seeds.len(), 2);
        assert_eq!(seeds[0], seeds[1]);
    }
}

#[test]
fn interrupted_run_resumes_to_the_same_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = simon_cfg(&[4, 6], &[AgentKind::A3, AgentKind::CollisionSeeker], 20);
    let whole = run_experiment(&cfg).unwrap();

    cfg.output_dir = Some(dir.path().to_path_buf());
    run_experiment(&cfg).unwrap();
    let path = dir.path().join(TRIALS_FILE);
    let text = read(dir.path(), TRIALS_FILE);
    assert_eq!(text.lines().count(), 80);
    // keep 30 complete records plus half of the next one
    let lines: Vec<&str> = text.lines().collect();
    let mut cut = lines[..30].join("\n") + "\n";
    cut.push_str(&lines[30][..lines[30].len() / 2]);
    fs::write(&path, cut).unwrap();

    let resumed = run_experiment(&cfg).unwrap();
    assert_eq!(resumed, whole);
    let after = read(dir.path(), TRIALS_FILE);
    assert_eq!(after.lines().count(), 80);
    // the 30 surviving records were not recomputed
    assert_eq!(after.lines().take(30).collect::<Vec<_>>(), lines[..30].to_vec());
    assert_eq!(load_bundle(dir.path()).unwrap(), whole);
}

#[test]
fn output_dir_of_another_experiment_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = simon_cfg(&[4], &[AgentKind::CollisionSeeker], 2);
    cfg.output_dir = Some(dir.path().to_path_buf());
    run_experiment(&cfg).unwrap();
    cfg.master_seed += 1;
    assert!(matches!(run_experiment(&cfg), Err(Error::InvalidConfig(_))));
}

#[test]
fn report_reemission_is_pure_and_matches_raw_records() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = simon_cfg(&[4, 6, 8], &[AgentKind::A3, AgentKind::CollisionSeeker], 15);
    cfg.output_dir = Some(dir.path().join("run"));
    run_experiment(&cfg).unwrap();
    let bundle = load_bundle(&dir.path().join("run")).unwrap();
    let (r1, r2) = (dir.path().join("r1"), dir.path().join("r2"));
    emit_report(&bundle, &r1).unwrap();
    emit_report(&load_bundle(&dir.path().join("run")).unwrap(), &r2).unwrap();
    for f in ["summary.csv", "solver.csv", "fits.csv", "README.txt"] {
        assert_eq!(read(&r1, f), read(&r2, f));
    }

    // independent recomputation straight from the JSONL
    let raw: Vec<TrialRecord> = read(&dir.path().join("run"), TRIALS_FILE)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let mut rows = csv::Reader::from_path(r1.join("summary.csv")).unwrap();
    let mut count = 0;
    for row in rows.records() {
        let row = row.unwrap();
        let n: usize = row[0].parse().unwrap();
        let agent: AgentKind = row[1].parse().unwrap();
        let steps: Vec<f64> = raw
            .iter()
            .filter(|t| t.n == n && t.agent == agent)
            .map(|t| t.steps_to_first_reward.map_or(f64::INFINITY, |s| s as f64))
            .collect();
        assert_eq!(steps.len(), 15);
        assert_eq!(row[2].parse::<f64>().unwrap(), brute_median(steps.clone()));
        let ok = steps.iter().filter(|s| s.is_finite()).count() as f64 / 15.0;
        assert_eq!(row[5].parse::<f64>().unwrap(), ok);
        count += 1;
    }
    assert_eq!(count, 6);
}

#[test]
fn infeasible_cells_are_skipped_with_a_reason() {
    let mut cfg = simon_cfg(&[6, 12], &[AgentKind::A3], 2);
    cfg.backend = SolverBackend::Statevector;
    let b = run_experiment(&cfg).unwrap();
    let big: Vec<&TrialRecord> = b.cell(12, AgentKind::A3).collect();
    assert_eq!(big.len(), 2);
    assert!(big.iter().all(|t| t.skipped.as_deref().is_some_and(|r| r.contains("cap"))));
    assert!(b.cell(6, AgentKind::A3).all(|t| !t.is_skipped()));
    let row = b.summary.iter().find(|r| r.n == 12).unwrap();
    assert_eq!((row.completed, row.skipped, row.median_steps), (0, 2, None));

    let dir = tempfile::tempdir().unwrap();
    emit_report(&b, dir.path()).unwrap();
    assert!(read(dir.path(), "summary.csv").contains("12,a3,NA,NA,NA,NA"));

    // the optimal baseline needs an explicit MDP; RFS at (4, 3) stays feasible for classical agents
    let rfs = ExperimentConfig {
        family: Family::Rfs,
        variant: Variant::RfsM3Rg,
        l: Some(3),
        sizes: vec![4],
        agents: vec![AgentKind::A3],
        ..simon_cfg(&[4], &[], 1)
    };
    let b = run_experiment(&rfs).unwrap();
    assert!(b.trials[0].skipped.is_some());
}

#[test]
fn invalid_configs_are_rejected() {
    let ok = simon_cfg(&[4], &[AgentKind::A3], 1);
    ok.validate().unwrap();
    let cases = [
        ExperimentConfig { variant: Variant::M1, ..ok.clone() },
        ExperimentConfig { variant: Variant::RfsM2, ..ok.clone() },
        ExperimentConfig { sizes: vec![4, 4], ..ok.clone() },
        ExperimentConfig { agents: vec![], ..ok.clone() },
        ExperimentConfig { trials: 0, ..ok.clone() },
        ExperimentConfig { sizes: vec![21], ..ok.clone() },
        ExperimentConfig { budget: BudgetSchedule::Fixed { steps: 0 }, ..ok.clone() },
        ExperimentConfig {
            efficiency: Some(EfficiencyGrid { gammas: vec![1.0], ..EfficiencyGrid::default() }),
            ..ok.clone()
        },
        ExperimentConfig {
            family: Family::Rfs,
            variant: Variant::RfsM3Rg,
            l: Some(2),
            agents: vec![AgentKind::CollisionSeeker],
            ..ok.clone()
        },
    ];
    for c in cases {
        assert!(matches!(run_experiment(&c), Err(Error::InvalidConfig(_))), "{c:?}");
    }
    let tiny = ExperimentConfig { family: Family::Rfs, variant: Variant::RfsM3Rg, l: Some(2), sizes: vec![1], ..ok.clone() };
    assert!(matches!(tiny.validate(), Err(Error::InvalidConfig(_))));
    assert!(matches!(ExperimentConfig::from_json("{\"family\": \"simon\"}"), Err(Error::InvalidConfig(_))));
}

#[test]
fn budget_overrides_apply_per_agent() {
    let mut cfg = simon_cfg(&[6], &[AgentKind::Random, AgentKind::CollisionSeeker], 2);
    cfg.budget_overrides.insert(AgentKind::Random, BudgetSchedule::Poly { coeff: 2.0, degree: 2.0, offset: 1 });
    let b = run_experiment(&cfg).unwrap();
    assert!(b.cell(6, AgentKind::Random).all(|t| t.budget == 73));
    assert!(b.cell(6, AgentKind::CollisionSeeker).all(|t| t.budget == 64 * 8 + 2000));
    let json = cfg.to_json().unwrap();
    assert!(json.contains("\"random\""));
    assert_eq!(ExperimentConfig::from_json(&json).unwrap(), cfg);
}

fn synthetic(values: &[(usize, f64)]) -> ResultsBundle {
    let cfg = simon_cfg(&values.iter().map(|v| v.0).collect::<Vec<_>>(), &[AgentKind::A3], 1);
    let trials = values
        .iter()
        .map(|&(n, v)| {
            let mut t = run_trial(&cfg, 4, AgentKind::A3, 0).unwrap();
            t.n = n;
            t.steps_to_first_reward = v.is_finite().then_some(v as u64);
            t
        })
        .collect();
    ResultsBundle::from_trials(cfg, trials)
}

#[test]
fn fits_recover_planted_scaling() {
    let exp = synthetic(&[(6, 8.0), (8, 16.0), (10, 32.0), (12, 64.0)]);
    let f = fit_scaling(&exp, AgentKind::A3, Metric::StepsToFirstReward, ScalingModel::Exp2InN);
    assert!(!f.inconclusive);
    assert!((f.slope.unwrap() - 0.5).abs() < 1e-12 && f.residual.unwrap() < 1e-12);

    let poly = synthetic(&[(2, 4.0), (4, 16.0), (8, 64.0), (16, 256.0)]);
    let f = fit_scaling(&poly, AgentKind::A3, Metric::StepsToFirstReward, ScalingModel::PolyInN);
    assert!((f.slope.unwrap() - 2.0).abs() < 1e-12);

    let flat = synthetic(&[(4, 100.0), (6, 100.0), (8, 100.0)]);
    for model in [ScalingModel::Exp2InN, ScalingModel::PolyInN] {
        let f = fit_scaling(&flat, AgentKind::A3, Metric::StepsToFirstReward, model);
        assert!(f.slope.unwrap().abs() <= 1e-12 + f.residual.unwrap());
    }

    let short = synthetic(&[(4, 10.0), (6, 20.0)]);
    assert!(fit_scaling(&short, AgentKind::A3, Metric::StepsToFirstReward, ScalingModel::Exp2InN).inconclusive);
    let censored = synthetic(&[(4, 10.0), (6, f64::INFINITY), (8, 40.0)]);
    let f = fit_scaling(&censored, AgentKind::A3, Metric::StepsToFirstReward, ScalingModel::Exp2InN);
    assert!(f.inconclusive && f.slope.is_none());
}

#[test]
fn leak_assisted_search_looks_like_half_the_problem() {
    let mut cfg = simon_cfg(&[8], &[AgentKind::LeakAssisted, AgentKind::CollisionSeeker], 400);
    cfg.variant = Variant::M1;
    let leak = run_experiment(&cfg).unwrap();
    let fresh = run_experiment(&ExperimentConfig { sizes: vec![4], agents: vec![AgentKind::CollisionSeeker], ..cfg }).unwrap();
    let med = |b: &ResultsBundle, n, a| b.summary.iter().find(|r| r.n == n && r.agent == a).unwrap().median_queries.unwrap();
    let (l, f, full) = (
        med(&leak, 8, AgentKind::LeakAssisted),
        med(&fresh, 4, AgentKind::CollisionSeeker),
        med(&leak, 8, AgentKind::CollisionSeeker),
    );
    assert!(l / f <= 4.0 && f / l <= 4.0, "leak {l} vs fresh {f}");
    assert!(l >= 2f64.powi(8 / 2 / 2 - 2));
    assert!(l < full);
}

#[test]
fn efficiency_grid_is_tabulated() {
    let mut cfg = simon_cfg(&[4], &[AgentKind::Optimal, AgentKind::A3], 4);
    cfg.budget = BudgetSchedule::Fixed { steps: 1500 };
    cfg.efficiency = Some(EfficiencyGrid { gammas: vec![0.9], epsilons: vec![0.1], deltas: vec![0.0, 0.5], ps: vec![0, 1000] });
    let b = run_experiment(&cfg).unwrap();
    assert!(b.trials.iter().all(|t| t.total_steps == 1500 && t.efficiency.len() == 1));
    assert_eq!(b.efficiency.len(), 2 * 2 * 2);
    for r in b.efficiency.iter().filter(|r| r.agent == AgentKind::Optimal) {
        assert_eq!((r.fraction, r.attained, r.p_needed), (1.0, true, Some(0)));
    }
    let a3 = b.efficiency.iter().find(|r| r.agent == AgentKind::A3 && r.p == 1000 && r.delta == 0.0).unwrap();
    assert!(a3.attained && a3.p_needed.unwrap() > 0);
    let dir = tempfile::tempdir().unwrap();
    emit_report(&b, dir.path()).unwrap();
    assert_eq!(read(dir.path(), "efficiency.csv").lines().count(), 9);
}

#[test]
fn rfs_experiment_runs_end_to_end() {
    let cfg = ExperimentConfig {
        family: Family::Rfs,
        variant: Variant::RfsM3Rg,
        l: Some(2),
        sizes: vec![2, 3],
        agents: vec![AgentKind::A2, AgentKind::A3],
        budget: BudgetSchedule::Fixed { steps: 5000 },
        ..simon_cfg(&[], &[], 5)
    };
    let b = run_experiment(&cfg).unwrap();
    assert!(b.trials.iter().all(|t| t.secret_correct == Some(true) && t.steps_to_first_reward.is_some()));
    assert!(b.trials.iter().all(|t| t.solver_queries == Some(rfs_quantum_query_count(2))));
}

#[test]
fn verify_suites_pass() {
    for suite in Suite::ALL {
        let checks = run_suite(suite, 3).unwrap();
        assert!(!checks.is_empty());
        for c in checks {
            assert!(c.passed, "{} {}: {}", serde_json::to_string(&c.suite).unwrap(), c.name, c.detail);
        }
    }
}

fn arb_schedule() -> impl Strategy<Value = BudgetSchedule> {
    prop_oneof![
        any::<u64>().prop_map(|steps| BudgetSchedule::Fixed { steps }),
        (any::<f64>(), -4.0..4.0f64, any::<u32>())
            .prop_map(|(coeff, degree, offset)| BudgetSchedule::Poly { coeff, degree, offset: offset.into() }),
        (0.0..1e6f64, 0.0..1.0f64, any::<u32>())
            .prop_map(|(coeff, rate, offset)| BudgetSchedule::Exp2 { coeff, rate, offset: offset.into() }),
    ]
}

proptest! {
    #[test]
    fn config_round_trips_exactly(
        sizes in prop::collection::vec(1usize..20, 1..5),
        trials in 1usize..1000,
        seed in any::<u64>(),
        budget in arb_schedule(),
        gamma in 0.0..1.0f64,
        eps in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 1..3),
        permute in any::<bool>(),
    ) {
        let mut cfg = simon_cfg(&sizes, &[AgentKind::A3, AgentKind::Random], trials);
        cfg.master_seed = seed;
        cfg.budget = budget;
        cfg.permute_labels = permute;
        cfg.efficiency = Some(EfficiencyGrid { gammas: vec![gamma], epsilons: eps, deltas: vec![0.05], ps: vec![seed] });
        let json = cfg.to_json().unwrap();
        let back = ExperimentConfig::from_json(&json).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_json().unwrap(), json);
    }

    #[test]
    fn quantiles_are_ordered_and_bracketed(v in prop::collection::vec(0u32..1000, 1..40), q in 0.0..1.0f64) {
        let xs: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(0.0, f64::max);
        let a = quantile(&xs, q).unwrap();
        prop_assert!(lo <= a && a <= hi);
        prop_assert!(quantile(&xs, (q + 0.1).min(1.0)).unwrap() >= a);
        prop_assert_eq!(quantile(&xs, 0.5).unwrap(), brute_median(xs.clone()));
    }
}
