use serde::{Deserialize, Serialize};

use super::{AgentTrace, TraceAction};
use crate::envs::{explicit_mdp, value_iteration, EnvSpec, StateLabel, Transition, DEFAULT_STATE_BOUND};
use crate::error::{contract, Error, Result};

const VI_TOL: f64 = 1e-11;

/// Empirical (ε,δ)-efficiency of a set of traces.
///
/// The return from step `p` is estimated per trace as `V*(s_p) − D(p)`, where
/// `D(p) = Σ_k γ^k (V*(s_{p+k}) − Q*(s_{p+k}, a_{p+k}))` sums the discounted
/// optimality gaps of the actions actually taken. This has the same
/// expectation as the realized discounted reward sum (also reported) but
/// does not fluctuate with random landing points. A step spent inside an
/// oraculized call counts as an idle step at the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub gamma: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// Step offset the per-trace figures refer to.
    pub p: u64,
    /// Steps needed after `p` for the truncated tail to stay below `ε/10`.
    pub horizon: u64,
    /// `V*(s_p)` per trace.
    pub optimal_values: Vec<f64>,
    /// Estimated return from `p` per trace.
    pub value_estimates: Vec<f64>,
    /// Truncated discounted reward sum from `p` per trace.
    pub realized_returns: Vec<f64>,
    /// `(1 − δ)`-quantile over traces of the worst deficit from `p` on.
    pub epsilon_achieved: f64,
    /// Fraction of traces whose deficit exceeds `ε` somewhere from `p` on.
    pub delta_achieved: f64,
    /// Smallest offset after which the `(ε, δ)` condition holds, if any.
    pub efficient_after: Option<u64>,
    pub steps_to_first_reward: Vec<Option<u64>>,
    /// Some trace is shorter than `p + horizon`.
    pub inconclusive: bool,
}

/// Re-executes a trace on the environment, checking every percept and
/// reward, and returns the state before each record plus the final state.
pub fn replay_trace(env: &EnvSpec, trace: &AgentTrace) -> Result<Vec<StateLabel>> {
    let mut label = env.initial_label();
    let mut out = Vec::with_capacity(trace.records.len() + 1);
    for r in &trace.records {
        out.push(label.clone());
        match r.action {
            TraceAction::OracleCall { .. } => {
                if !label.is_root() {
                    return contract(format!("oraculized call at t={} does not start at a root", r.t));
                }
                label = env.initial_label();
            }
            TraceAction::Act(a) => {
                let seen = r.percept.ok_or_else(|| Error::Parse(format!("step at t={} has no percept", r.t)))?;
                let (next, reward) = match env.transition(&label, a) {
                    Transition::Det { next, reward } => (next, reward),
                    Transition::Jump(targets) => {
                        let hit = targets.into_iter().map(|t| t.1).find(|l| env.percept(l) == seen);
                        (hit.ok_or_else(|| Error::Contract(format!("no jump target matches t={}", r.t)))?, false)
                    }
                };
                if env.percept(&next) != seen || u8::from(reward) != r.reward {
                    return contract(format!("trace diverges from the environment at t={}", r.t));
                }
                label = next;
            }
        }
    }
    out.push(label);
    Ok(out)
}

struct Profile {
    /// Optimality gap per interaction step.
    gaps: Vec<f64>,
    rewards: Vec<f64>,
    /// `V*` of the state at each step.
    values: Vec<f64>,
}

fn profile(env: &EnvSpec, trace: &AgentTrace, mdp: &crate::envs::ExplicitMdp, vi: &crate::envs::ValueIteration, gamma: f64) -> Result<Profile> {
    let labels = replay_trace(env, trace)?;
    let index = |l: &StateLabel| mdp.index_of(l).ok_or_else(|| Error::Protocol("state missing from the explicit MDP".into()));
    let n = trace.total_steps as usize;
    let mut p = Profile { gaps: Vec::with_capacity(n), rewards: Vec::with_capacity(n), values: Vec::with_capacity(n) };
    for (r, label) in trace.records.iter().zip(&labels) {
        let s = index(label)?;
        let v = vi.values[s];
        match r.action {
            TraceAction::OracleCall { steps } => {
                for _ in 0..steps {
                    p.gaps.push((1.0 - gamma) * v);
                    p.rewards.push(0.0);
                    p.values.push(v);
                }
            }
            TraceAction::Act(a) => {
                let ai = mdp.actions.iter().position(|&b| b == a).expect("replayed action is in the MDP");
                p.gaps.push((v - vi.q[s][ai]).max(0.0));
                p.rewards.push(f64::from(r.reward));
                p.values.push(v);
            }
        }
    }
    Ok(p)
}

/// Discounted suffix sums `Σ_k γ^k x[i+k]` over the available steps.
fn suffix_sums(x: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len() + 1];
    for i in (0..x.len()).rev() {
        out[i] = x[i] + gamma * out[i + 1];
    }
    out
}

fn quantile(mut v: Vec<f64>, q: f64) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let k = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[k]
}

/// Evaluates `(ε, δ)`-efficiency of traces on an explicit desk-scale MDP.
pub fn evaluate_efficiency(
    traces: &[AgentTrace],
    env: &EnvSpec,
    gamma: f64,
    epsilon: f64,
    delta: f64,
    p: u64,
) -> Result<EfficiencyReport> {
    if !(0.0..1.0).contains(&gamma) || gamma == 0.0 || epsilon <= 0.0 || !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidConfig("need γ ∈ (0,1), ε > 0 and δ ∈ [0,1]".into()));
    }
    if traces.is_empty() {
        return contract("no traces to evaluate");
    }
    let mdp = explicit_mdp(env, DEFAULT_STATE_BOUND)?;
    let vi = value_iteration(&mdp, gamma, VI_TOL, 1_000_000);
    // gaps are at most 1/(1−γ); the dropped tail is at most γ^H/(1−γ)²
    let horizon = ((epsilon * (1.0 - gamma).powi(2) / 10.0).ln() / gamma.ln()).ceil().max(1.0) as u64;

    let mut report = EfficiencyReport {
        gamma,
        epsilon,
        delta,
        p,
        horizon,
        optimal_values: Vec::new(),
        value_estimates: Vec::new(),
        realized_returns: Vec::new(),
        epsilon_achieved: 0.0,
        delta_achieved: 0.0,
        efficient_after: None,
        steps_to_first_reward: traces.iter().map(AgentTrace::steps_to_first_reward).collect(),
        inconclusive: false,
    };
    let mut worst = Vec::with_capacity(traces.len());
    let mut last_violation: Vec<Option<u64>> = Vec::with_capacity(traces.len());
    for tr in traces {
        let prof = profile(env, tr, &mdp, &vi, gamma)?;
        let deficit = suffix_sums(&prof.gaps, gamma);
        let realized = suffix_sums(&prof.rewards, gamma);
        let len = prof.gaps.len() as u64;
        let evaluable = len.saturating_sub(horizon);
        if len < p + horizon || evaluable == 0 {
            report.inconclusive = true;
        }
        let at = (p as usize).min(prof.values.len().saturating_sub(1));
        let v = prof.values.get(at).copied().unwrap_or(0.0);
        report.optimal_values.push(v);
        report.value_estimates.push(v - deficit[at]);
        report.realized_returns.push(realized[at]);

        let (lo, hi) = (p.min(evaluable) as usize, evaluable as usize);
        let w = if lo < hi { deficit[lo..hi].iter().copied().fold(0.0, f64::max) } else { deficit[at] };
        worst.push(w);
        // offset after which this trace never violates; None if still violating at the end
        let ends = (0..evaluable as usize).rev().find(|&i| deficit[i] > epsilon);
        last_violation.push(match ends {
            Some(i) if i + 1 == evaluable as usize => None,
            Some(i) => Some(i as u64 + 1),
            None if evaluable == 0 => None,
            None => Some(0),
        });
    }
    report.epsilon_achieved = quantile(worst.clone(), 1.0 - delta);
    report.delta_achieved = worst.iter().filter(|&&w| w > epsilon).count() as f64 / traces.len() as f64;
    let allowed = (delta * traces.len() as f64).floor() as usize;
    let mut ends: Vec<u64> = last_violation.iter().map(|l| l.unwrap_or(u64::MAX)).collect();
    ends.sort_unstable();
    let need = ends[traces.len() - 1 - allowed.min(traces.len() - 1)];
    report.efficient_after = (need != u64::MAX).then_some(need);
    Ok(report)
}
