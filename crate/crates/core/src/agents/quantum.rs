use serde::{Deserialize, Serialize};

use super::{exploit, sequence_for, Agent, AgentKind, Session};
use crate::algos::{rfs_quantum, simon_analytic, simon_quantum, QuantumOracle, RfsEncoding, SolveResult};
use crate::envs::{Family, Variant};
use crate::error::{Error, Result};
use crate::oracles::Problem;
use crate::qsim::{OracleMode, DEFAULT_CAP};

/// Extra Simon rounds allowed beyond `n`.
const SIMON_SLACK: u64 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantumVariant {
    /// Oraculize and solve, then repeat the rewarding sequence.
    A2Deterministic,
    /// As A2, then use `rg` at every root to shortcut into the sequence.
    A3Rg,
}

/// How stage one simulates its quantum rounds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverBackend {
    Statevector,
    /// Simon only: uniform draws from the orthogonal complement, each charged as one call.
    AnalyticSampler,
    /// Statevector while the Simon layout fits the register cap, analytic beyond.
    #[default]
    Auto,
}

/// Three-stage quantum agent.
///
/// Stage one oraculizes the deterministic sub-environment (full mode, `5η`
/// steps per call) and solves for the secret. Stage two plays the rewarding
/// sequence once, classically, recording the percept after every prefix.
/// Stage three (A3 only) plays `rg` at each root and finishes the sequence
/// from the landing point.
#[derive(Clone, Debug)]
pub struct QuantumAgent {
    variant: QuantumVariant,
    backend: SolverBackend,
}

#[must_use]
pub fn make_quantum_agent(variant: QuantumVariant, backend: SolverBackend) -> QuantumAgent {
    QuantumAgent { variant, backend }
}

impl QuantumAgent {
    fn solve(&self, session: &mut Session<'_>) -> Result<SolveResult> {
        let spec = session.spec();
        let n = spec.n();
        let mut rng = session.fork_rng();
        match spec.problem() {
            Problem::Simon(inst) => {
                let budget = n as u64 + SIMON_SLACK;
                let fits = 2 * n + 1 <= DEFAULT_CAP;
                let analytic = match self.backend {
                    SolverBackend::Statevector => false,
                    SolverBackend::AnalyticSampler => true,
                    SolverBackend::Auto => !fits,
                };
                let oracle = session.oracle(OracleMode::Full, true)?;
                if analytic {
                    let cost = oracle.cost_per_call();
                    let res = simon_analytic(inst, budget, cost, &mut rng)?;
                    session.charge_calls(res.oracle_queries, cost)?;
                    Ok(res)
                } else {
                    simon_quantum(&mut session.traced(oracle), n, budget, &mut rng)
                }
            }
            Problem::Rfs(inst) => {
                if spec.variant() == Variant::RfsM1 {
                    return Err(Error::InvalidConfig("block-level RFS has no fixed episode length to oraculize".into()));
                }
                if self.backend == SolverBackend::AnalyticSampler {
                    return Err(Error::InvalidConfig("the analytic sampler exists for Simon only".into()));
                }
                let oracle = session.oracle(OracleMode::Full, true)?;
                rfs_quantum(&mut session.traced(oracle), n, inst.l(), RfsEncoding::Actions, &mut rng)
            }
        }
    }
}

impl Agent for QuantumAgent {
    fn kind(&self) -> AgentKind {
        match self.variant {
            QuantumVariant::A2Deterministic => AgentKind::A2,
            QuantumVariant::A3Rg => AgentKind::A3,
        }
    }

    fn run(&mut self, session: &mut Session<'_>) -> Result<()> {
        let spec = session.spec();
        if self.variant == QuantumVariant::A3Rg && !spec.variant().has_rg() {
            return Err(Error::InvalidConfig(format!("A3 needs an rg variant, got {}", spec.variant())));
        }
        let res = self.solve(session)?;
        let secret = res.secret;
        let ok = res.success;
        session.record_solve(res);
        if !ok {
            let what = if spec.variant().family() == Family::Simon { "Simon" } else { "RFS" };
            session.record_failure(format!("{what} solver did not certify a secret"));
            return Ok(());
        }
        let seq = sequence_for(spec, &secret)?;
        exploit(session, &seq, self.variant == QuantumVariant::A3Rg)
    }
}
