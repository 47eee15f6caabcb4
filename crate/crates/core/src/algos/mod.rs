//! Quantum and classical solvers for the Simon and RFS problems, with query
//! and interaction-step accounting.

mod rfs;
mod simon;

use serde::{Deserialize, Serialize};

use crate::bitkit::BitString;
use crate::envs::EnvSpec;
use crate::error::{contract, Error, Result};
use crate::qsim::{
    oraculize_sparse, realize_env_unitary, EnvUnitaryRealization, OracleMode, ReferenceOracle, RegisterLayout,
    SparseState,
};

pub use rfs::{
    rfs_classical, rfs_classical_query_count, rfs_quantum, rfs_quantum_query_count, RfsEncoding,
};
pub use simon::{simon_analytic, simon_classical, simon_quantum, simon_round, ClassicalStrategy};

/// How a solver obtained its samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Sparse statevector simulation of the circuit.
    Statevector,
    /// Samples drawn directly from the known output distribution; no unitary is simulated.
    AnalyticSampler,
    /// Classical queries.
    Classical,
}

/// Evidence that a returned secret is correct.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certificate {
    /// Query number `query` (1-based) on input `input` raised the flag.
    Flagged { query: u64, input: u64 },
    /// Two distinct inputs with equal outputs.
    Collision { first: u64, second: u64 },
    /// The whole domain was queried without a collision.
    Exhausted,
}

/// Outcome of one solver run.
///
/// Serializes as `{secret, oracle_queries, interaction_steps, success, backend}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveResult {
    pub secret: BitString,
    pub oracle_queries: u64,
    /// `oracle_queries × cost_per_call`.
    pub interaction_steps: u64,
    pub success: bool,
    pub backend: Backend,
    #[serde(skip)]
    pub certificate: Option<Certificate>,
    /// Rank of the collected constraints (Simon) when the run stopped.
    #[serde(skip)]
    pub rank: usize,
}

/// A bit-flip oracle `|x⟩|y⟩|b⟩ → |x⟩|y ⊕ g(x)⟩|b ⊕ flag(x)⟩` acting on sparse states.
pub trait QuantumOracle {
    fn x_width(&self) -> usize;
    fn y_width(&self) -> usize;
    /// Interaction steps charged per call.
    fn cost_per_call(&self) -> u64;
    /// Calls made so far.
    fn calls(&self) -> u64;
    /// One call on registers `x`, `y`, `b` of the state.
    fn apply(&mut self, state: &mut SparseState) -> Result<()>;
}

/// A reference oracle charged one step per call.
#[derive(Debug)]
pub struct ReferenceAccess {
    oracle: ReferenceOracle,
    calls: u64,
}

impl ReferenceAccess {
    #[must_use]
    pub fn new(oracle: ReferenceOracle) -> Self {
        Self { oracle, calls: 0 }
    }
}

impl QuantumOracle for ReferenceAccess {
    fn x_width(&self) -> usize {
        self.oracle.x_width()
    }

    fn y_width(&self) -> usize {
        self.oracle.y_width()
    }

    fn cost_per_call(&self) -> u64 {
        1
    }

    fn calls(&self) -> u64 {
        self.calls
    }

    fn apply(&mut self, state: &mut SparseState) -> Result<()> {
        self.calls += 1;
        self.oracle.apply_sparse(state)
    }
}

/// Oracle access obtained by oraculizing a deterministic environment.
#[derive(Clone, Debug)]
pub struct EnvOracle {
    real: EnvUnitaryRealization,
    mode: OracleMode,
    calls: u64,
}

impl EnvOracle {
    /// Fails with a protocol error if the environment has stochastic transitions.
    pub fn new(spec: &EnvSpec, mode: OracleMode) -> Result<Self> {
        if !spec.is_deterministic() {
            return Err(Error::Protocol(format!(
                "{} has stochastic transitions and cannot be oraculized",
                spec.variant()
            )));
        }
        Ok(Self { real: realize_env_unitary(spec)?, mode, calls: 0 })
    }

    #[must_use]
    pub fn realization(&self) -> &EnvUnitaryRealization {
        &self.real
    }

    #[must_use]
    pub fn mode(&self) -> OracleMode {
        self.mode
    }
}

impl QuantumOracle for EnvOracle {
    fn x_width(&self) -> usize {
        self.real.action_width()
    }

    fn y_width(&self) -> usize {
        self.real.output_width()
    }

    fn cost_per_call(&self) -> u64 {
        self.real.costs(self.mode).total()
    }

    fn calls(&self) -> u64 {
        self.calls
    }

    fn apply(&mut self, state: &mut SparseState) -> Result<()> {
        self.calls += 1;
        oraculize_sparse(&self.real, state, self.mode)?;
        Ok(())
    }
}

/// One call on a basis input with `y = b = 0`; returns `(g(x), flag(x))`.
pub fn basis_query(oracle: &mut dyn QuantumOracle, x: u64) -> Result<(u64, bool)> {
    let layout = RegisterLayout::with_cap(&[("x", oracle.x_width()), ("y", oracle.y_width()), ("b", 1)], 64)?;
    let mut st = SparseState::basis(layout.clone(), &[("x", x)])?;
    oracle.apply(&mut st)?;
    let mut entries = st.entries();
    let (Some((i, _)), None) = (entries.next(), entries.next()) else {
        return contract("oracle did not map a basis state to a basis state");
    };
    Ok((layout.get(i, "y"), layout.get(i, "b") == 1))
}
