use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{exploit, play, sequence_for, Agent, AgentKind, Session, DEFAULT_GAMMA};
use crate::algos::{Backend, Certificate, SolveResult};
use crate::bitkit::BitString;
use crate::envs::{explicit_mdp, optimal_actions, Action, EnvSpec, Variant, DEFAULT_STATE_BOUND};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Uniform actions.
    Random,
    /// Random distinct full queries until two root outputs collide.
    CollisionSeeker,
    /// Collision search given the first half of the secret.
    LeakAssisted,
    /// Value-iteration optimal policy with full state access.
    Optimal,
}

#[must_use]
pub fn make_classical_baseline(kind: BaselineKind) -> Box<dyn Agent> {
    match kind {
        BaselineKind::Random => Box::new(RandomAgent),
        BaselineKind::CollisionSeeker => Box::new(CollisionSeeker { leak: false }),
        BaselineKind::LeakAssisted => Box::new(CollisionSeeker { leak: true }),
        BaselineKind::Optimal => Box::new(OptimalAgent),
    }
}

struct RandomAgent;

impl Agent for RandomAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Random
    }

    fn run(&mut self, session: &mut Session<'_>) -> Result<()> {
        let actions = session.spec().actions();
        loop {
            let a = *actions.choose(session.rng()).expect("non-empty action set");
            session.step(a)?;
        }
    }
}

/// Simon collision search through full bit-level (or word-level) queries.
///
/// Each query is one episode; the root percept that ends it stands in for
/// `f(x)`. Two inputs with equal root percepts give `s = x ⊕ x'`; a rewarded
/// episode gives `s = x` directly. The leak-assisted variant knows the first
/// `⌊n/2⌋` bits `p` of `s` and only queries `(0, u)` and `(p, u)`, so
/// collisions live in the unknown half.
struct CollisionSeeker {
    leak: bool,
}

impl CollisionSeeker {
    fn query(session: &mut Session<'_>, spec: &EnvSpec, n: usize, x: u64) -> Result<(u64, bool)> {
        let seq: Vec<Action> = match spec.variant() {
            Variant::M0 => vec![Action::Word(x)],
            _ => BitString::new(n, x).iter().map(Action::Bit).collect(),
        };
        let mut last = None;
        for a in seq {
            last = Some(session.step(a)?);
        }
        let r = last.expect("queries are non-empty");
        Ok((r.percept.code, r.reward))
    }

    fn search(&self, session: &mut Session<'_>) -> Result<SolveResult> {
        let spec = session.spec();
        let Some(inst) = spec.simon() else {
            return Err(Error::InvalidConfig("collision search needs a Simon environment".into()));
        };
        let n = spec.n();
        let (known, prefix) = if self.leak {
            let h = n / 2;
            (h, if h == 0 { 0 } else { inst.secret().prefix(h).value() })
        } else {
            (0, 0)
        };
        let free = n - known;
        let sides: u64 = if prefix == 0 { 1 } else { 2 };
        let size = sides << free;
        let input = |k: u64| {
            let (side, u) = (k >> free, k & ((1u64 << free) - 1));
            (if side == 1 { prefix << free } else { 0 }) | u
        };

        let start = session.steps();
        let mut seen: HashMap<u64, u64> = HashMap::new();
        let mut swapped: HashMap<u64, u64> = HashMap::new();
        let mut queries = 0;
        let mut found = (0, Certificate::Exhausted);
        for i in 0..size {
            let j = session.rng().gen_range(i..size);
            let at_j = swapped.get(&j).copied().unwrap_or(j);
            let at_i = swapped.get(&i).copied().unwrap_or(i);
            swapped.insert(j, at_i);
            let x = input(at_j);
            let (code, reward) = Self::query(session, spec, n, x)?;
            queries += 1;
            if reward {
                found = (x, Certificate::Flagged { query: queries, input: x });
                break;
            }
            if let Some(&prev) = seen.get(&code) {
                found = (prev ^ x, Certificate::Collision { first: prev, second: x });
                break;
            }
            seen.insert(code, x);
        }
        Ok(SolveResult {
            secret: BitString::new(n, found.0),
            oracle_queries: queries,
            interaction_steps: session.steps() - start,
            success: true,
            backend: Backend::Classical,
            certificate: Some(found.1),
            rank: 0,
        })
    }
}

impl Agent for CollisionSeeker {
    fn kind(&self) -> AgentKind {
        if self.leak {
            AgentKind::LeakAssisted
        } else {
            AgentKind::CollisionSeeker
        }
    }

    fn run(&mut self, session: &mut Session<'_>) -> Result<()> {
        let res = self.search(session)?;
        let secret = res.secret;
        session.record_solve(res);
        let spec = session.spec();
        let seq = sequence_for(spec, &secret)?;
        exploit(session, &seq, spec.variant().has_rg())
    }
}

/// Greedy in the optimal action values; the first maximizer breaks ties.
struct OptimalAgent;

impl Agent for OptimalAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Optimal
    }

    fn run(&mut self, session: &mut Session<'_>) -> Result<()> {
        let spec = session.spec();
        let mdp = explicit_mdp(spec, DEFAULT_STATE_BOUND)?;
        let (_, opt) = optimal_actions(&mdp, DEFAULT_GAMMA);
        loop {
            let s = mdp
                .index_of(session.label())
                .ok_or_else(|| Error::Protocol("state missing from the explicit MDP".into()))?;
            let a = mdp.actions[opt[s][0]];
            play(session, &[a])?;
        }
    }
}
