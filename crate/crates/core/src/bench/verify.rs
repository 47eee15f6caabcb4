//! Invariant suites behind `qrl verify`.

use std::sync::Arc;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algos::{
    rfs_classical, rfs_classical_query_count, rfs_quantum, simon_classical, simon_quantum, ClassicalStrategy,
    ReferenceAccess, RfsEncoding,
};
use crate::envs::{build_env, Variant};
use crate::error::Result;
use crate::oracles::{gen_rfs, gen_simon, permute_outputs, plain_handle, rfs_handle, rfs_query, Problem, RfsQuery};
use crate::qsim::{oracle_reference, oracle_reference_for_env, oraculize_call, realize_env_unitary, OracleMode, QState, RegisterLayout};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    /// Generated instances satisfy their promises, also after output permutation.
    Promise,
    /// Full-mode oraculization equals the reference oracle on every basis state.
    Oraculization,
    /// Quantum and classical solvers agree with the planted secrets.
    Solvers,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Promise, Suite::Oraculization, Suite::Solvers];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(suite: Suite, name: String, passed: bool, detail: String) -> Check {
    Check { suite, name, passed, detail }
}

/// Runs one suite over `seeds` seeds per case.
pub fn run_suite(suite: Suite, seeds: u64) -> Result<Vec<Check>> {
    match suite {
        Suite::Promise => promise(seeds),
        Suite::Oraculization => oraculization(seeds),
        Suite::Solvers => solvers(seeds),
    }
}

fn promise(seeds: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for n in 1..=10 {
        let mut bad = Vec::new();
        for seed in 0..seeds {
            let inst = gen_simon(n, seed, None);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut h: Vec<u64> = (0..1u64 << n).collect();
            h.shuffle(&mut rng);
            let permuted = permute_outputs(&inst, &h)?;
            if !inst.promise_holds() || !permuted.promise_holds() || permuted.secret() != inst.secret() {
                bad.push(seed);
            }
        }
        out.push(check(Suite::Promise, format!("simon n={n}"), bad.is_empty(), format!("failing seeds {bad:?}")));
    }
    for (n, l) in [(1, 1), (2, 1), (2, 2), (3, 2), (2, 3)] {
        let mut bad = Vec::new();
        for seed in 0..seeds {
            let inst = gen_rfs(n, l, seed);
            let q = RfsQuery::root(inst.root_secret());
            if rfs_query(&inst, &q)?.bit() != Some(inst.hidden_bit()) {
                bad.push(seed);
            }
        }
        out.push(check(Suite::Promise, format!("rfs n={n} l={l}"), bad.is_empty(), format!("failing seeds {bad:?}")));
    }
    Ok(out)
}

fn max_deviation_on_basis(problem: Problem, variant: Variant) -> Result<f64> {
    let spec = build_env(problem, variant)?;
    let real = realize_env_unitary(&spec)?;
    let reference = oracle_reference_for_env(&spec)?;
    let layout = RegisterLayout::new(&[("x", real.action_width()), ("y", real.output_width()), ("b", 1)])?;
    let dim = 1usize << layout.total_bits();
    let mut worst: f64 = 0.0;
    for i in 0..dim {
        let mut amps = vec![Complex64::default(); dim];
        amps[i] = Complex64::new(1.0, 0.0);
        let basis = QState::from_amplitudes(layout.clone(), amps)?;
        let call = oraculize_call(&real, &basis, OracleMode::Full)?;
        if call.steps != 5 * real.eta() as u64 {
            return Ok(f64::INFINITY);
        }
        let mut expect = basis;
        reference.apply(&mut expect)?;
        worst = worst.max(call.state.max_deviation(&expect));
    }
    Ok(worst)
}

fn oraculization(seeds: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for n in [2, 3] {
        for variant in [Variant::M0, Variant::M1] {
            let mut worst: f64 = 0.0;
            for seed in 0..seeds {
                worst = worst.max(max_deviation_on_basis(Problem::Simon(gen_simon(n, seed, None)), variant)?);
            }
            out.push(check(
                Suite::Oraculization,
                format!("simon {variant} n={n}"),
                worst <= 1e-10,
                format!("max deviation {worst:.2e}"),
            ));
        }
    }
    let mut worst: f64 = 0.0;
    for seed in 0..seeds.min(5) {
        worst = worst.max(max_deviation_on_basis(Problem::Rfs(gen_rfs(2, 2, seed)), Variant::RfsM2)?);
    }
    out.push(check(Suite::Oraculization, "rfs RFS_M2 n=2 l=2".into(), worst <= 1e-10, format!("max deviation {worst:.2e}")));
    Ok(out)
}

fn solvers(seeds: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for n in 2..=8 {
        let mut bad = Vec::new();
        for seed in 0..seeds {
            let inst = gen_simon(n, seed, None);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = Problem::Simon(inst.clone());
            let q = simon_quantum(&mut ReferenceAccess::new(oracle_reference(&p)), n, 3 * (n as u64 + 10), &mut rng)?;
            let c = simon_classical(&plain_handle(Arc::new(inst.clone())), n, &mut rng, ClassicalStrategy::Random);
            if !(q.success && q.secret == inst.secret() && c.secret == inst.secret()) {
                bad.push(seed);
            }
        }
        out.push(check(Suite::Solvers, format!("simon n={n}"), bad.is_empty(), format!("failing seeds {bad:?}")));
    }
    for (n, l) in [(2, 1), (2, 2), (3, 2)] {
        let mut bad = Vec::new();
        for seed in 0..seeds {
            let inst = gen_rfs(n, l, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = Problem::Rfs(inst.clone());
            let q = rfs_quantum(&mut ReferenceAccess::new(oracle_reference(&p)), n, l, RfsEncoding::Codec, &mut rng)?;
            let c = rfs_classical(&rfs_handle(Arc::new(inst.clone())), n, l);
            let truth = inst.root_secret();
            if q.secret != truth || c.secret != truth || c.oracle_queries != rfs_classical_query_count(n, l) {
                bad.push(seed);
            }
        }
        out.push(check(Suite::Solvers, format!("rfs n={n} l={l}"), bad.is_empty(), format!("failing seeds {bad:?}")));
    }
    Ok(out)
}
