use qrl_core::agents::*;
use qrl_core::envs::{build_env, Action, EnvSpec, LabelKind, Variant};
use qrl_core::oracles::{gen_rfs, gen_simon, Problem};
use qrl_core::qsim::OracleMode;
use qrl_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn simon_env(n: usize, seed: u64, variant: Variant) -> EnvSpec {
    build_env(Problem::Simon(gen_simon(n, seed, None)), variant).unwrap()
}

fn run(kind: AgentKind, env: &EnvSpec, budget: u64, seed: u64) -> AgentTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_agent(make_agent(kind, SolverBackend::Auto).as_mut(), env, budget, &mut rng).unwrap()
}

fn a3_bound(n: u64) -> u64 {
    5 * n * (n + 20) + 2 * n
}

#[test]
fn random_agent_reward_rate_matches_single_path() {
    let n = 6;
    let env = simon_env(n, 1, Variant::M1);
    let tr = run(AgentKind::Random, &env, 6 * 20_000, 2);
    let episodes = tr.episode_ends.len() as f64;
    let rate = tr.total_reward() as f64 / episodes;
    assert!(rate <= 2.0 * 0.5f64.powi(n as i32), "rate {rate}");
    assert!(rate > 0.25 * 0.5f64.powi(n as i32), "rate {rate}");
    assert!(tr.records.iter().all(|r| r.reward <= 1));
}

#[test]
fn random_agent_success_probability_follows_episode_count() {
    // one rewarding string among 2^n per episode
    let n = 8;
    let budget = 8 * 64;
    let hits = (0..200)
        .filter(|&seed| run(AgentKind::Random, &simon_env(n, seed, Variant::M1), budget, seed).total_reward() > 0)
        .count() as f64
        / 200.0;
    let expect = 1.0 - (1.0 - 0.5f64.powi(n as i32)).powi(64);
    assert!((hits - expect).abs() < 0.1, "hits {hits} expect {expect}");
}

#[test]
fn traces_replay_and_tampering_is_detected() {
    for (kind, variant) in [(AgentKind::Random, Variant::M2Rg), (AgentKind::A3, Variant::M2Rg), (AgentKind::CollisionSeeker, Variant::M1)] {
        let env = simon_env(5, 3, variant);
        let tr = run(kind, &env, 3000, 4);
        let labels = replay_trace(&env, &tr).unwrap();
        assert_eq!(labels.len(), tr.records.len() + 1);
        let mut bad = tr.clone();
        let i = bad.records.iter().position(|r| r.percept.is_some()).unwrap();
        bad.records[i].reward ^= 1;
        assert!(replay_trace(&env, &bad).is_err());
    }
}

#[test]
fn jsonl_round_trip() {
    let env = simon_env(4, 5, Variant::M2Rg);
    let tr = run(AgentKind::A3, &env, 800, 6);
    let mut buf = Vec::new();
    tr.write_jsonl(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert_eq!(text.lines().count(), tr.records.len());
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let mut keys: Vec<&str> = first.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["action", "mode", "percept", "reward", "t"]);
    let back = AgentTrace::read_jsonl(AgentKind::A3, buf.as_slice()).unwrap();
    assert_eq!(back.records, tr.records);
    assert_eq!(back.total_steps, tr.total_steps);
    assert_eq!(back.episode_ends, tr.episode_ends);
}

#[test]
fn a3_reaches_certified_reward_within_quadratic_steps() {
    let n = 6;
    let bound = a3_bound(n);
    let mut within = 0;
    for seed in 0..100 {
        let env = simon_env(n as usize, seed, Variant::M2Rg);
        let tr = run(AgentKind::A3, &env, bound + 200, seed);
        let solve = tr.solve.as_ref().unwrap();
        if solve.success {
            assert_eq!(solve.secret, env.simon().unwrap().secret());
            assert!(tr.steps_to_first_reward().is_some(), "certified secret must yield a reward");
        }
        if tr.steps_to_first_reward().is_some_and(|s| s <= bound) {
            within += 1;
        }
        assert!(tr.accounting_holds(5 * n));
    }
    assert!(within >= 99, "{within}/100");
}

#[test]
fn oracle_calls_are_charged_five_eta() {
    let env = simon_env(5, 7, Variant::M2Rg);
    let tr = run(AgentKind::A3, &env, 2000, 8);
    let calls = tr.oracle_calls();
    assert!(calls >= 5);
    assert_eq!(tr.total_steps, tr.classical_steps() + 25 * calls);
    assert!(tr.accounting_holds(25));
    for w in tr.records.windows(2) {
        assert_eq!(w[1].t, w[0].t + w[0].steps());
    }
}

#[test]
fn a3_completes_the_suffix_after_landing() {
    let n = 8;
    let env = simon_env(n, 9, Variant::M2Rg);
    let s = env.simon().unwrap().secret();
    let tr = run(AgentKind::A3, &env, 20_000, 10);
    let landing3 = env.percept(&qrl_core::envs::StateLabel::Prefix(s.prefix(3).iter().map(Action::Bit).collect()));
    let i = tr
        .records
        .iter()
        .position(|r| r.action == TraceAction::Act(Action::Rg) && r.percept == Some(landing3))
        .expect("some rg lands after three bits");
    let suffix: Vec<Action> = tr.records[i + 1..i + 1 + (n - 3)]
        .iter()
        .map(|r| match r.action {
            TraceAction::Act(a) => a,
            TraceAction::OracleCall { .. } => panic!("no calls after stage one"),
        })
        .collect();
    assert_eq!(suffix, s.suffix_from(3).iter().map(Action::Bit).collect::<Vec<_>>());
    assert_eq!(tr.records[i + n - 3].reward, 1);
    assert!(tr.records[i + 1..i + n - 3].iter().all(|r| r.reward == 0));
}

#[test]
fn a3_long_run_rate_at_eight_bits() {
    let n = 8;
    let env = simon_env(n, 11, Variant::M2Rg);
    let tr = run(AgentKind::A3, &env, 250_000, 12);
    let first = tr.steps_to_first_reward().unwrap();
    let rewards = tr.total_reward() - 1;
    let span = tr.records.iter().rev().find(|r| r.reward == 1).unwrap().t + 1 - first;
    let per_reward = span as f64 / rewards as f64;
    assert!((per_reward - 6.5).abs() <= 0.02 * 6.5, "{per_reward}");
}

#[test]
fn a2_never_plays_rg() {
    for variant in [Variant::M1, Variant::M2Rg] {
        let env = simon_env(6, 13, variant);
        let tr = run(AgentKind::A2, &env, 5000, 14);
        assert!(tr.total_reward() > 10);
        assert!(tr.records.iter().all(|r| r.action != TraceAction::Act(Action::Rg)));
    }
}

#[test]
fn a3_requires_rg() {
    let env = simon_env(4, 1, Variant::M1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = run_agent(make_agent(AgentKind::A3, SolverBackend::Auto).as_mut(), &env, 100, &mut rng);
    assert!(matches!(r, Err(Error::InvalidConfig(_))));
}

struct GreedyOraculizer;

impl Agent for GreedyOraculizer {
    fn kind(&self) -> AgentKind {
        AgentKind::A3
    }

    fn run(&mut self, session: &mut Session<'_>) -> qrl_core::Result<()> {
        session.oracle(OracleMode::Full, false).map(|_| ())
    }
}

#[test]
fn oraculizing_stochastic_transitions_is_a_protocol_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let env = simon_env(4, 2, Variant::M2Rg);
    assert!(matches!(run_agent(&mut GreedyOraculizer, &env, 100, &mut rng), Err(Error::Protocol(_))));
    let env = simon_env(4, 2, Variant::M1);
    assert!(run_agent(&mut GreedyOraculizer, &env, 100, &mut rng).is_ok());
}

#[test]
fn budget_is_respected() {
    let env = simon_env(6, 3, Variant::M2Rg);
    for kind in AgentKind::ALL {
        for budget in [1, 29, 31, 500] {
            let tr = run(kind, &env, budget, 15);
            assert!(tr.total_steps <= budget, "{kind} {budget}");
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(run_agent(make_agent(AgentKind::Random, SolverBackend::Auto).as_mut(), &env, 0, &mut rng).is_err());
}

#[test]
fn collision_seeker_finds_secret_and_exploits() {
    for variant in [Variant::M0, Variant::M1, Variant::M2Rg] {
        for seed in 0..10 {
            let env = simon_env(6, seed, variant);
            let tr = run(AgentKind::CollisionSeeker, &env, 20_000, seed);
            let solve = tr.solve.as_ref().unwrap();
            assert_eq!(solve.secret, env.simon().unwrap().secret());
            assert!(tr.total_reward() > 100);
        }
    }
    // permuted labels do not hide collisions
    let env = simon_env(6, 4, Variant::M1).with_label_permutation(99);
    let tr = run(AgentKind::CollisionSeeker, &env, 20_000, 1);
    assert_eq!(tr.solve.unwrap().secret, env.simon().unwrap().secret());
}

fn median(mut v: Vec<u64>) -> u64 {
    v.sort_unstable();
    v[v.len() / 2]
}

#[test]
fn leak_assisted_search_is_a_half_size_problem() {
    let n = 8;
    let q = |kind| {
        median(
            (0..100)
                .map(|seed| run(kind, &simon_env(n, seed, Variant::M1), 20_000, seed).solve.unwrap().oracle_queries)
                .collect(),
        )
    };
    let leak = q(AgentKind::LeakAssisted);
    let full = q(AgentKind::CollisionSeeker);
    assert!(leak >= 1 << (n / 4).saturating_sub(2), "leak median {leak}");
    assert!(leak < full, "leak {leak} full {full}");
    // a fresh half-size problem needs about 2^{n/4}·√π queries
    let half = 2f64.powf(n as f64 / 4.0) * 1.5;
    assert!((leak as f64) < 4.0 * half && (leak as f64) > half / 4.0, "leak {leak}");
}

#[test]
fn quantum_agents_on_rfs() {
    for seed in 0..3 {
        let inst = gen_rfs(2, 2, seed);
        let env = build_env(Problem::Rfs(inst.clone()), Variant::RfsM2).unwrap();
        let tr = run(AgentKind::A2, &env, 3000, seed);
        assert_eq!(tr.solve.as_ref().unwrap().secret, inst.root_secret());
        assert!(tr.total_reward() > 0);

        let inst = gen_rfs(4, 1, seed);
        let env = build_env(Problem::Rfs(inst.clone()), Variant::RfsM3Rg).unwrap();
        let tr = run(AgentKind::A3, &env, 3000, seed);
        assert_eq!(tr.solve.as_ref().unwrap().secret, inst.root_secret());
        assert!(tr.records.iter().any(|r| r.action == TraceAction::Act(Action::Rg)));
        assert!(tr.total_reward() > 50);
        replay_trace(&env, &tr).unwrap();
    }
}

#[test]
fn optimal_traces_are_efficient_against_themselves() {
    let env = simon_env(6, 5, Variant::M2Rg);
    let traces: Vec<AgentTrace> = (0..20).map(|s| run(AgentKind::Optimal, &env, 2000, s)).collect();
    let rep = evaluate_efficiency(&traces, &env, DEFAULT_GAMMA, DEFAULT_EPSILON, DEFAULT_DELTA, 0).unwrap();
    assert!(rep.epsilon_achieved < 1e-6);
    assert_eq!(rep.delta_achieved, 0.0);
    assert_eq!(rep.efficient_after, Some(0));
    assert!(!rep.inconclusive);
    for (v, r) in rep.value_estimates.iter().zip(&rep.optimal_values) {
        assert!((v - r).abs() < 1e-6);
    }
    // realized returns scatter around the optimum
    let mean: f64 = rep.realized_returns.iter().sum::<f64>() / 20.0;
    assert!((mean - rep.optimal_values[0]).abs() < 0.1);
}

#[test]
fn a3_becomes_efficient_within_the_step_bound() {
    let n = 6;
    let env = simon_env(n, 0, Variant::M2Rg);
    let traces: Vec<AgentTrace> = (0..200).map(|s| run(AgentKind::A3, &env, 3000, s)).collect();
    let rep = evaluate_efficiency(&traces, &env, 0.9, 0.1, 0.05, 0).unwrap();
    let after = rep.efficient_after.expect("A3 becomes efficient");
    assert!(after <= a3_bound(n as u64), "efficient after {after}");
    let late = evaluate_efficiency(&traces, &env, 0.9, 0.1, 0.05, after).unwrap();
    assert!(late.delta_achieved <= 0.05);
    assert!(late.epsilon_achieved <= 0.1);
}

#[test]
fn random_agent_is_never_efficient() {
    let env = simon_env(6, 6, Variant::M2Rg);
    let traces: Vec<AgentTrace> = (0..3).map(|s| run(AgentKind::Random, &env, 100_000, s)).collect();
    let rep = evaluate_efficiency(&traces, &env, 0.9, 0.1, 0.05, 0).unwrap();
    assert_eq!(rep.efficient_after, None);
    assert_eq!(rep.delta_achieved, 1.0);
}

#[test]
fn short_traces_are_inconclusive() {
    let env = simon_env(4, 6, Variant::M2Rg);
    let traces = vec![run(AgentKind::Optimal, &env, 30, 0)];
    assert!(evaluate_efficiency(&traces, &env, 0.9, 0.1, 0.05, 0).unwrap().inconclusive);
    assert!(matches!(evaluate_efficiency(&traces, &env, 1.0, 0.1, 0.05, 0), Err(Error::InvalidConfig(_))));
}

#[test]
fn optimal_agent_pays_six_and_a_half_steps_per_reward() {
    let n = 8;
    let env = simon_env(n, 17, Variant::M2Rg);
    let tr = run(AgentKind::Optimal, &env, 650_000, 18);
    let rewards = tr.total_reward();
    let per = tr.total_steps as f64 / rewards as f64;
    assert!((per - 6.5).abs() <= 0.02 * 6.5, "{per}");
    assert!(tr.records.iter().filter(|r| r.percept.is_some_and(|p| p.kind == LabelKind::Root)).count() as u64 >= rewards);
}
