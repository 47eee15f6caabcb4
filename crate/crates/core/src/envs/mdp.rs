use std::collections::{HashMap, VecDeque};
use std::io::Write;

use serde::Serialize;

use super::{Action, EnvSpec, StateLabel, Transition};
use crate::error::{Error, Result};

/// Default cap on enumerated states.
pub const DEFAULT_STATE_BOUND: usize = 1 << 20;

/// One stochastic outcome of an action.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Outcome {
    pub next: usize,
    pub prob: f64,
    pub reward: f64,
}

/// Reachable part of an environment as an explicit tabular MDP.
#[derive(Clone, Debug)]
pub struct ExplicitMdp {
    pub states: Vec<StateLabel>,
    pub actions: Vec<Action>,
    /// `transitions[state][action]`.
    pub transitions: Vec<Vec<Vec<Outcome>>>,
    pub initial: usize,
    index: HashMap<StateLabel, usize>,
}

/// Enumerates every state reachable from the initial root.
pub fn explicit_mdp(spec: &EnvSpec, bound: usize) -> Result<ExplicitMdp> {
    let actions = spec.actions();
    let mut states = vec![spec.initial_label()];
    let mut index = HashMap::from([(spec.initial_label(), 0usize)]);
    let mut transitions: Vec<Vec<Vec<Outcome>>> = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let from = states[i].clone();
        let mut row = Vec::with_capacity(actions.len());
        for &a in &actions {
            let outs: Vec<(f64, StateLabel, bool)> = match spec.transition(&from, a) {
                Transition::Det { next, reward } => vec![(1.0, next, reward)],
                Transition::Jump(t) => t.into_iter().map(|(p, s)| (p, s, false)).collect(),
            };
            let mut cell = Vec::with_capacity(outs.len());
            for (prob, next, reward) in outs {
                let j = match index.get(&next) {
                    Some(&j) => j,
                    None => {
                        let j = states.len();
                        if j >= bound {
                            return Err(Error::Intractable { states: j + 1, bound });
                        }
                        index.insert(next.clone(), j);
                        states.push(next);
                        queue.push_back(j);
                        j
                    }
                };
                cell.push(Outcome { next: j, prob, reward: f64::from(u8::from(reward)) });
            }
            row.push(cell);
        }
        if transitions.len() <= i {
            transitions.resize(i + 1, Vec::new());
        }
        transitions[i] = row;
    }
    Ok(ExplicitMdp { states, actions, transitions, initial: 0, index })
}

#[derive(Serialize)]
struct EdgeRow {
    from: String,
    action: String,
    to: String,
    prob: f64,
    reward: f64,
}

impl ExplicitMdp {
    #[must_use]
    pub fn len(&self) -> usize {
        self.states.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    #[must_use]
    pub fn index_of(&self, label: &StateLabel) -> Option<usize> {
        self.index.get(label).copied()
    }

    #[must_use]
    pub fn expected_reward(&self, s: usize, a: usize) -> f64 {
        self.transitions[s][a].iter().map(|o| o.prob * o.reward).sum()
    }

    /// Edge list as CSV: `from,action,to,prob,reward`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for (s, row) in self.transitions.iter().enumerate() {
            for (a, cell) in row.iter().enumerate() {
                for o in cell {
                    wr.serialize(EdgeRow {
                        from: self.states[s].to_string(),
                        action: self.actions[a].to_string(),
                        to: self.states[o.next].to_string(),
                        prob: o.prob,
                        reward: o.reward,
                    })?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Output of discounted value iteration.
#[derive(Clone, Debug)]
pub struct ValueIteration {
    pub values: Vec<f64>,
    /// `q[state][action]`.
    pub q: Vec<Vec<f64>>,
    pub iterations: usize,
    pub residual: f64,
}

impl ValueIteration {
    /// Actions within `tol` of the best value at a state.
    #[must_use]
    pub fn argmax(&self, s: usize, tol: f64) -> Vec<usize> {
        let best = self.q[s].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (0..self.q[s].len()).filter(|&a| self.q[s][a] >= best - tol).collect()
    }
}

/// Discounted value iteration until the sup-norm residual drops below `tol`.
#[must_use]
pub fn value_iteration(mdp: &ExplicitMdp, gamma: f64, tol: f64, max_iter: usize) -> ValueIteration {
    assert!((0.0..1.0).contains(&gamma), "discount must lie in [0, 1)");
    let ns = mdp.len();
    let mut v = vec![0.0; ns];
    let mut q: Vec<Vec<f64>> = mdp.transitions.iter().map(|r| vec![0.0; r.len()]).collect();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while residual >= tol && iterations < max_iter {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            let mut best = f64::NEG_INFINITY;
            for (a, cell) in mdp.transitions[s].iter().enumerate() {
                let val: f64 = cell.iter().map(|o| o.prob * (o.reward + gamma * v[o.next])).sum();
                q[s][a] = val;
                best = best.max(val);
            }
            next[s] = best;
        }
        residual = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        iterations += 1;
    }
    for s in 0..ns {
        for (a, cell) in mdp.transitions[s].iter().enumerate() {
            q[s][a] = cell.iter().map(|o| o.prob * (o.reward + gamma * v[o.next])).sum();
        }
    }
    ValueIteration { values: v, q, iterations, residual }
}
