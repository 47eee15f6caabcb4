use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{basis_query, Backend, Certificate, QuantumOracle, SolveResult};
use crate::bitkit::{dot2, gf2_nullspace, BitString, Gf2Span};
use crate::error::{contract, Result};
use crate::oracles::{PlainOracle, SimonInstance};
use crate::qsim::{RegisterLayout, SparseState};

/// Query order of the classical collision search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassicalStrategy {
    /// Distinct inputs in uniformly random order.
    Random,
    /// Inputs `0, 1, 2, …`.
    Systematic,
}

/// Collects vectors orthogonal to the secret until its candidate verifies.
///
/// At rank `n − 1` the unique nonzero nullspace vector is checked with one
/// flagged query; if that fails, sampling continues to rank `n` and `0` is checked.
fn collect(
    n: usize,
    budget: u64,
    cost: u64,
    backend: Backend,
    sample: &mut dyn FnMut() -> Result<u64>,
    flag: &mut dyn FnMut(u64) -> Result<bool>,
) -> Result<SolveResult> {
    if budget < n as u64 {
        return contract(format!("budget {budget} is below n = {n}"));
    }
    let mut span = Gf2Span::new(n);
    let mut queries = 0u64;
    let mut tried: Vec<u64> = Vec::new();
    let mut best = 0u64;
    let result = |secret: u64, queries: u64, success: bool, cert: Option<Certificate>, rank: usize| SolveResult {
        secret: BitString::new(n, secret),
        oracle_queries: queries,
        interaction_steps: queries * cost,
        success,
        backend,
        certificate: cert,
        rank,
    };
    loop {
        let rank = span.rank();
        let candidate = match rank {
            r if r == n => Some(0),
            r if r + 1 == n => gf2_nullspace(&span.to_matrix()).into_iter().map(|v| v.value()).find(|&v| v != 0),
            _ => None,
        };
        if let Some(c) = candidate.filter(|c| !tried.contains(c)) {
            best = c;
            if queries >= budget {
                return Ok(result(best, queries, false, None, rank));
            }
            queries += 1;
            if flag(c)? {
                let cert = Certificate::Flagged { query: queries, input: c };
                return Ok(result(c, queries, true, Some(cert), rank));
            }
            tried.push(c);
            continue;
        }
        if rank == n || queries >= budget {
            return Ok(result(best, queries, false, None, rank));
        }
        queries += 1;
        span.insert(&BitString::new(n, sample()?));
    }
}

/// One round of Simon's circuit; returns the measured `x` register.
///
/// `b` is prepared in `|+⟩` so the flag leaves no trace. The circuit is
/// `H^{⊗n}`, one oracle call, a measurement of `y`, `H^{⊗n}`, and a measurement of `x`.
pub fn simon_round<R: Rng + ?Sized>(oracle: &mut dyn QuantumOracle, rng: &mut R) -> Result<BitString> {
    let n = oracle.x_width();
    let layout = RegisterLayout::new(&[("x", n), ("y", oracle.y_width()), ("b", 1)])?;
    let mut st = SparseState::basis(layout, &[])?;
    st.hadamard("b")?;
    st.hadamard("x")?;
    oracle.apply(&mut st)?;
    st.measure("y", rng)?;
    st.hadamard("x")?;
    Ok(BitString::new(n, st.measure("x", rng)?))
}

/// Simon's algorithm on a statevector, through any flagged oracle on `x` of width `n`.
///
/// Rounds of [`simon_round`] until the secret verifies. The verification query counts against `budget`.
pub fn simon_quantum<R: Rng + ?Sized>(
    oracle: &mut dyn QuantumOracle,
    n: usize,
    budget: u64,
    rng: &mut R,
) -> Result<SolveResult> {
    if oracle.x_width() != n {
        return contract(format!("oracle input width {} is not n = {n}", oracle.x_width()));
    }
    // register cap
    RegisterLayout::new(&[("x", n), ("y", oracle.y_width()), ("b", 1)])?;
    let cost = oracle.cost_per_call();
    let oracle = std::cell::RefCell::new(oracle);
    let mut sample = || simon_round(&mut **oracle.borrow_mut(), rng).map(|y| y.value());
    let mut flag = |c: u64| -> Result<bool> { Ok(basis_query(&mut **oracle.borrow_mut(), c)?.1) };
    collect(n, budget, cost, Backend::Statevector, &mut sample, &mut flag)
}

/// Simon's algorithm with each round replaced by a uniform draw from `s^⊥`.
///
/// Reads the secret from the instance and simulates no unitary; rounds and the
/// verification are charged `cost_per_query` steps each.
pub fn simon_analytic<R: Rng + ?Sized>(
    inst: &SimonInstance,
    budget: u64,
    cost_per_query: u64,
    rng: &mut R,
) -> Result<SolveResult> {
    let n = inst.n();
    let s = inst.secret();
    let mut sample = || -> Result<u64> {
        loop {
            let y = BitString::new(n, rng.gen_range(0..1u64 << n));
            if !dot2(&y, &s) {
                return Ok(y.value());
            }
        }
    };
    let mut flag = |c: u64| -> Result<bool> { Ok(c == s.value()) };
    collect(n, budget, cost_per_query, Backend::AnalyticSampler, &mut sample, &mut flag)
}

/// Classical collision search: query distinct inputs until two outputs agree.
///
/// Exhausting the domain without a collision yields `s = 0`.
pub fn simon_classical<R: Rng + ?Sized>(
    oracle: &PlainOracle,
    n: usize,
    rng: &mut R,
    strategy: ClassicalStrategy,
) -> SolveResult {
    let size = 1u64 << n;
    let start = oracle.queries();
    let mut seen: HashMap<u64, u64> = HashMap::new();
    // lazy Fisher–Yates over 0..size
    let mut swapped: HashMap<u64, u64> = HashMap::new();
    let mut outcome = (0, Certificate::Exhausted);
    for i in 0..size {
        let x = match strategy {
            ClassicalStrategy::Systematic => i,
            ClassicalStrategy::Random => {
                let j = rng.gen_range(i..size);
                let at_j = swapped.get(&j).copied().unwrap_or(j);
                let at_i = swapped.get(&i).copied().unwrap_or(i);
                swapped.insert(j, at_i);
                at_j
            }
        };
        let y = oracle.query(&BitString::new(n, x)).value();
        if let Some(&prev) = seen.get(&y) {
            outcome = (prev ^ x, Certificate::Collision { first: prev, second: x });
            break;
        }
        seen.insert(y, x);
    }
    let queries = oracle.queries() - start;
    SolveResult {
        secret: BitString::new(n, outcome.0),
        oracle_queries: queries,
        interaction_steps: queries * oracle.cost_per_call(),
        success: true,
        backend: Backend::Classical,
        certificate: Some(outcome.1),
        rank: 0,
    }
}
