//! Agents, the interaction loop with step accounting, and the (ε,δ)-efficiency evaluator.

mod classical;
mod efficiency;
mod quantum;

use std::fmt;
use std::io::{BufRead, Write};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algos::{EnvOracle, QuantumOracle, SolveResult};
use crate::envs::{env_step, Action, EnvSpec, EnvState, Percept, StateLabel};
use crate::error::{contract, Error, Result};
use crate::qsim::{OracleMode, SparseState};

pub use classical::{make_classical_baseline, BaselineKind};
pub use efficiency::{evaluate_efficiency, replay_trace, EfficiencyReport};
pub use quantum::{make_quantum_agent, QuantumVariant, SolverBackend};

/// Default discount of the efficiency evaluator.
pub const DEFAULT_GAMMA: f64 = 0.9;
pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_DELTA: f64 = 0.05;

/// Whether a record is an ordinary step or an oraculized call.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    Classical,
    QuantumOraculized,
}

/// What the agent did in a record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceAction {
    Act(Action),
    /// One oraculized call, charged `steps` interaction steps.
    OracleCall { steps: u64 },
}

/// One trace record; `t` is the index of the first interaction step it consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: u64,
    pub mode: StepMode,
    pub action: TraceAction,
    /// Percept after the step; absent for oraculized calls.
    pub percept: Option<Percept>,
    pub reward: u8,
}

impl TraceRecord {
    #[must_use]
    pub fn steps(&self) -> u64 {
        match self.action {
            TraceAction::Act(_) => 1,
            TraceAction::OracleCall { steps } => steps,
        }
    }
}

/// Complete log of one agent run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentTrace {
    pub agent: AgentKind,
    pub records: Vec<TraceRecord>,
    pub total_steps: u64,
    /// Step counts at which episodes ended.
    pub episode_ends: Vec<u64>,
    /// Why the agent stopped early, if it did.
    pub failure: Option<String>,
    /// Stage-one solver outcome of quantum agents and collision seekers.
    pub solve: Option<SolveResult>,
}

impl AgentTrace {
    #[must_use]
    pub fn new(agent: AgentKind) -> Self {
        Self { agent, records: Vec::new(), total_steps: 0, episode_ends: Vec::new(), failure: None, solve: None }
    }

    /// Rebuilds a trace from its records.
    pub fn from_records(agent: AgentKind, records: Vec<TraceRecord>) -> Result<Self> {
        let mut tr = Self::new(agent);
        for r in records {
            if r.t != tr.total_steps || r.reward > 1 {
                return Err(Error::Parse(format!("record at t={} is out of sequence or has a non-binary reward", r.t)));
            }
            tr.push(r);
        }
        Ok(tr)
    }

    fn push(&mut self, r: TraceRecord) {
        self.total_steps += r.steps();
        if r.mode == StepMode::Classical && r.percept.is_some_and(|p| p.is_root()) {
            self.episode_ends.push(self.total_steps);
        }
        self.records.push(r);
    }

    /// Interaction steps up to and including the first rewarded step.
    #[must_use]
    pub fn steps_to_first_reward(&self) -> Option<u64> {
        self.records.iter().find(|r| r.reward == 1).map(|r| r.t + 1)
    }

    #[must_use]
    pub fn total_reward(&self) -> u64 {
        self.records.iter().map(|r| u64::from(r.reward)).sum()
    }

    #[must_use]
    pub fn oracle_calls(&self) -> u64 {
        self.records.iter().filter(|r| r.mode == StepMode::QuantumOraculized).count() as u64
    }

    #[must_use]
    pub fn classical_steps(&self) -> u64 {
        self.records.iter().filter(|r| r.mode == StepMode::Classical).count() as u64
    }

    /// `total = classical + cost × calls`, with every call charged `cost`.
    #[must_use]
    pub fn accounting_holds(&self, cost_per_call: u64) -> bool {
        let calls_ok = self
            .records
            .iter()
            .all(|r| !matches!(r.action, TraceAction::OracleCall { steps } if steps != cost_per_call));
        calls_ok && self.total_steps == self.classical_steps() + cost_per_call * self.oracle_calls()
    }

    /// One JSON object per record.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(agent: AgentKind, r: R) -> Result<Self> {
        let mut records = Vec::new();
        for line in r.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                records.push(serde_json::from_str(&line)?);
            }
        }
        Self::from_records(agent, records)
    }
}

/// An agent's live connection to an environment, with a step budget.
///
/// Agents see percepts, rewards and the public shape of the environment
/// (variant, sizes, action set). [`Session::spec`] also exposes the instance;
/// only the privileged baselines (optimal, leak-assisted) and the analytic
/// sampler backend read it.
pub struct Session<'a> {
    spec: &'a EnvSpec,
    state: EnvState,
    rng: ChaCha8Rng,
    budget: u64,
    stop_at_reward: bool,
    trace: AgentTrace,
}

impl<'a> Session<'a> {
    fn new(spec: &'a EnvSpec, budget: u64, seed: u64, agent: AgentKind) -> Self {
        Self {
            spec,
            state: EnvState::new(spec),
            rng: ChaCha8Rng::seed_from_u64(seed),
            budget,
            stop_at_reward: false,
            trace: AgentTrace::new(agent),
        }
    }

    #[must_use]
    pub fn spec(&self) -> &'a EnvSpec {
        self.spec
    }

    #[must_use]
    pub fn steps(&self) -> u64 {
        self.trace.total_steps
    }

    #[must_use]
    pub fn remaining(&self) -> u64 {
        self.budget - self.trace.total_steps
    }

    /// Current percept.
    #[must_use]
    pub fn percept(&self) -> Percept {
        self.spec.percept(&self.state.label)
    }

    /// Current state label; for privileged baselines only.
    #[must_use]
    pub fn label(&self) -> &StateLabel {
        &self.state.label
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Independent generator derived from the session stream.
    pub fn fork_rng(&mut self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.rng.next_u64())
    }

    fn exhausted(&self) -> Error {
        Error::BudgetExhausted { budget: self.budget }
    }

    /// One classical step.
    pub fn step(&mut self, a: Action) -> Result<crate::envs::StepResult> {
        if self.remaining() == 0 {
            return Err(self.exhausted());
        }
        if !self.spec.actions().contains(&a) {
            return contract(format!("action {a} is not available in {}", self.spec.variant()));
        }
        let t = self.trace.total_steps;
        let res = env_step(self.spec, &mut self.state, a, &mut self.rng);
        self.trace.push(TraceRecord {
            t,
            mode: StepMode::Classical,
            action: TraceAction::Act(a),
            percept: Some(res.percept),
            reward: u8::from(res.reward),
        });
        if res.reward && self.stop_at_reward {
            self.budget = self.trace.total_steps;
        }
        Ok(res)
    }

    /// Oracle access to the environment for quantum stages.
    ///
    /// With `deterministic_part` the agent restricts itself to the actions
    /// of the deterministic sub-environment; otherwise a stochastic
    /// environment is a protocol error. Calls must start at a root.
    pub fn oracle(&self, mode: OracleMode, deterministic_part: bool) -> Result<EnvOracle> {
        if !self.state.label.is_root() {
            return Err(Error::Protocol("oraculized calls must start at a root state".into()));
        }
        if deterministic_part {
            EnvOracle::new(&self.spec.deterministic_part(), mode)
        } else {
            EnvOracle::new(self.spec, mode)
        }
    }

    /// Wraps an oracle so every call is charged and logged here.
    pub fn traced<'s>(&'s mut self, oracle: EnvOracle) -> TracedOracle<'s, 'a> {
        TracedOracle { inner: oracle, session: self }
    }

    /// Charges `calls` oraculized calls made outside a statevector (analytic backend).
    pub fn charge_calls(&mut self, calls: u64, cost: u64) -> Result<()> {
        for _ in 0..calls {
            self.record_call(cost)?;
        }
        Ok(())
    }

    fn record_call(&mut self, cost: u64) -> Result<()> {
        if self.remaining() < cost {
            return Err(self.exhausted());
        }
        let t = self.trace.total_steps;
        self.trace.push(TraceRecord {
            t,
            mode: StepMode::QuantumOraculized,
            action: TraceAction::OracleCall { steps: cost },
            percept: None,
            reward: 0,
        });
        self.state.step += cost;
        self.state.label = self.spec.initial_label();
        Ok(())
    }

    pub fn record_solve(&mut self, result: SolveResult) {
        self.trace.solve = Some(result);
    }

    pub fn record_failure(&mut self, why: impl Into<String>) {
        self.trace.failure = Some(why.into());
    }
}

/// An [`EnvOracle`] whose calls are charged to a session.
pub struct TracedOracle<'s, 'a> {
    inner: EnvOracle,
    session: &'s mut Session<'a>,
}

impl QuantumOracle for TracedOracle<'_, '_> {
    fn x_width(&self) -> usize {
        self.inner.x_width()
    }

    fn y_width(&self) -> usize {
        self.inner.y_width()
    }

    fn cost_per_call(&self) -> u64 {
        self.inner.cost_per_call()
    }

    fn calls(&self) -> u64 {
        self.inner.calls()
    }

    fn apply(&mut self, state: &mut SparseState) -> Result<()> {
        let cost = self.inner.cost_per_call();
        if self.session.remaining() < cost {
            return Err(self.session.exhausted());
        }
        self.inner.apply(state)?;
        self.session.record_call(cost)
    }
}

/// An interacting agent.
pub trait Agent {
    fn kind(&self) -> AgentKind;

    /// Interacts until done or until a session call reports the budget exhausted.
    fn run(&mut self, session: &mut Session<'_>) -> Result<()>;
}

/// Every agent the laboratory knows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    A2,
    A3,
    Random,
    CollisionSeeker,
    LeakAssisted,
    /// Plays the value-iteration optimal policy with full state access.
    Optimal,
}

impl AgentKind {
    pub const ALL: [AgentKind; 6] = [
        AgentKind::A2,
        AgentKind::A3,
        AgentKind::Random,
        AgentKind::CollisionSeeker,
        AgentKind::LeakAssisted,
        AgentKind::Optimal,
    ];

    #[must_use]
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::A2 => "a2",
            AgentKind::A3 => "a3",
            AgentKind::Random => "random",
            AgentKind::CollisionSeeker => "collision_seeker",
            AgentKind::LeakAssisted => "leak_assisted",
            AgentKind::Optimal => "optimal",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown agent {s:?}")))
    }
}

/// Builds any agent; quantum agents use `backend` for their solver.
#[must_use]
pub fn make_agent(kind: AgentKind, backend: SolverBackend) -> Box<dyn Agent> {
    match kind {
        AgentKind::A2 => Box::new(make_quantum_agent(QuantumVariant::A2Deterministic, backend)),
        AgentKind::A3 => Box::new(make_quantum_agent(QuantumVariant::A3Rg, backend)),
        AgentKind::Random => make_classical_baseline(BaselineKind::Random),
        AgentKind::CollisionSeeker => make_classical_baseline(BaselineKind::CollisionSeeker),
        AgentKind::LeakAssisted => make_classical_baseline(BaselineKind::LeakAssisted),
        AgentKind::Optimal => make_classical_baseline(BaselineKind::Optimal),
    }
}

/// Runs an agent for at most `budget` interaction steps.
///
/// Running out of budget ends the run normally; other errors propagate.
pub fn run_agent<R: RngCore + ?Sized>(
    agent: &mut dyn Agent,
    env: &EnvSpec,
    budget: u64,
    rng: &mut R,
) -> Result<AgentTrace> {
    if budget == 0 {
        return contract("budget must be at least one step");
    }
    let session = Session::new(env, budget, rng.next_u64(), agent.kind());
    run_session(agent, session)
}

/// As [`run_agent`], but the run ends with the first rewarded step.
pub fn run_agent_to_first_reward<R: RngCore + ?Sized>(
    agent: &mut dyn Agent,
    env: &EnvSpec,
    budget: u64,
    rng: &mut R,
) -> Result<AgentTrace> {
    if budget == 0 {
        return contract("budget must be at least one step");
    }
    let mut session = Session::new(env, budget, rng.next_u64(), agent.kind());
    session.stop_at_reward = true;
    run_session(agent, session)
}

fn run_session(agent: &mut dyn Agent, mut session: Session<'_>) -> Result<AgentTrace> {
    match agent.run(&mut session) {
        Ok(()) | Err(Error::BudgetExhausted { .. }) => Ok(session.trace),
        Err(e) => Err(e),
    }
}

/// Plays `seq` from the current state, returning the percept after each action.
pub(crate) fn play(session: &mut Session<'_>, seq: &[Action]) -> Result<Vec<Percept>> {
    seq.iter().map(|&a| session.step(a).map(|r| r.percept)).collect()
}

/// Exploits a known rewarding sequence forever.
///
/// One full traversal records the percept after every prefix. With `rg`
/// available the agent then plays `rg` at each root, locates the landing
/// percept among the recorded ones and completes the sequence from there.
pub(crate) fn exploit(session: &mut Session<'_>, seq: &[Action], use_rg: bool) -> Result<()> {
    if !session.percept().is_root() {
        return contract("exploitation must start at a root");
    }
    let labels = play(session, seq)?;
    loop {
        if !use_rg {
            play(session, seq)?;
            continue;
        }
        let landing = session.step(Action::Rg)?.percept;
        match labels.iter().position(|p| *p == landing) {
            Some(j) => {
                play(session, &seq[j + 1..])?;
            }
            None => {
                while !session.step(seq[0])?.episode_end {}
            }
        }
    }
}

/// Rewarding action sequence implied by a solved secret.
pub(crate) fn sequence_for(spec: &EnvSpec, secret: &crate::BitString) -> Result<Vec<Action>> {
    use crate::envs::Variant;
    Ok(match spec.variant() {
        Variant::M0 => vec![Action::Word(secret.value())],
        Variant::M1 | Variant::M2Rg => secret.iter().map(Action::Bit).collect(),
        Variant::RfsM2 | Variant::RfsM3Rg => {
            let mut seq = vec![Action::Q];
            seq.extend(secret.iter().map(Action::Bit));
            seq.resize(spec.eta().expect("bit-level RFS is episodic"), Action::Bit(false));
            seq
        }
        Variant::RfsM1 => vec![Action::Q, Action::Word(secret.value())],
    })
}
