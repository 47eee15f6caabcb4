//! Structural analysis: rewarding diameter, bisimulation and genuineness.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::mdp::{explicit_mdp, value_iteration, ExplicitMdp, ValueIteration, DEFAULT_STATE_BOUND};
use super::EnvSpec;
use crate::error::Result;

/// Discount used to select optimal actions for structural analysis.
const STRUCT_GAMMA: f64 = 0.99;
const VI_TOL: f64 = 1e-11;
const TIE_TOL: f64 = 1e-7;
const PROB_SCALE: f64 = 1e9;

/// Optimal action sets per state, from discounted value iteration.
#[must_use]
pub fn optimal_actions(mdp: &ExplicitMdp, gamma: f64) -> (ValueIteration, Vec<Vec<usize>>) {
    let vi = value_iteration(mdp, gamma, VI_TOL, 1_000_000);
    let opt = (0..mdp.len()).map(|s| vi.argmax(s, TIE_TOL)).collect();
    (vi, opt)
}

/// States reachable from the initial state using only the given actions.
fn reachable(mdp: &ExplicitMdp, allowed: &[Vec<usize>]) -> Vec<bool> {
    let mut seen = vec![false; mdp.len()];
    let mut stack = vec![mdp.initial];
    seen[mdp.initial] = true;
    while let Some(s) = stack.pop() {
        for &a in &allowed[s] {
            for o in &mdp.transitions[s][a] {
                if !seen[o.next] {
                    seen[o.next] = true;
                    stack.push(o.next);
                }
            }
        }
    }
    seen
}

/// States on some cycle of the optimal-action graph that is reachable from the start.
fn recurrent(mdp: &ExplicitMdp, opt: &[Vec<usize>]) -> Vec<usize> {
    let reach = reachable(mdp, opt);
    let succ = |s: usize| -> Vec<usize> {
        opt[s].iter().flat_map(|&a| mdp.transitions[s][a].iter().map(|o| o.next)).collect()
    };
    (0..mdp.len())
        .filter(|&s| reach[s])
        .filter(|&s| {
            let mut seen = HashSet::new();
            let mut stack = succ(s);
            while let Some(t) = stack.pop() {
                if t == s {
                    return true;
                }
                if seen.insert(t) {
                    stack.extend(succ(t));
                }
            }
            false
        })
        .collect()
}

/// Worst-case steps to the next reward when following optimal actions.
///
/// `d(σ) = min over optimal a of max over outcomes of (1 if rewarded else 1 + d(σ'))`,
/// and the diameter is the largest `d` over recurrent states of optimal play.
/// `None` if some recurrent state never reaches a reward.
#[must_use]
pub fn diameter_of(mdp: &ExplicitMdp, opt: &[Vec<usize>]) -> Option<usize> {
    const INF: usize = usize::MAX;
    let mut d = vec![INF; mdp.len()];
    loop {
        let mut changed = false;
        for s in 0..mdp.len() {
            let best = opt[s]
                .iter()
                .map(|&a| {
                    mdp.transitions[s][a]
                        .iter()
                        .map(|o| if o.reward > 0.0 { 1 } else if d[o.next] == INF { INF } else { 1 + d[o.next] })
                        .max()
                        .unwrap_or(INF)
                })
                .min()
                .unwrap_or(INF);
            if best < d[s] {
                d[s] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let rec = recurrent(mdp, opt);
    let worst = rec.iter().map(|&s| d[s]).max()?;
    (worst != INF).then_some(worst)
}

/// Rewarding diameter of an environment.
pub fn rewarding_diameter(spec: &EnvSpec) -> Result<Option<usize>> {
    let mdp = explicit_mdp(spec, DEFAULT_STATE_BOUND)?;
    let (_, opt) = optimal_actions(&mdp, STRUCT_GAMMA);
    Ok(diameter_of(&mdp, &opt))
}

type Signature = Vec<Vec<(usize, i64, i64)>>;

fn signature(mdp: &ExplicitMdp, class: &[usize], s: usize) -> Signature {
    mdp.transitions[s]
        .iter()
        .map(|cell| {
            let mut agg: BTreeMap<(usize, i64), f64> = BTreeMap::new();
            for o in cell {
                *agg.entry((class[o.next], (o.reward * PROB_SCALE).round() as i64)).or_default() += o.prob;
            }
            agg.into_iter().map(|((c, r), p)| (c, r, (p * PROB_SCALE).round() as i64)).collect()
        })
        .collect()
}

/// Coarsest bisimulation partition; returns the class index of every state.
#[must_use]
pub fn bisimulation_classes(mdp: &ExplicitMdp) -> Vec<usize> {
    let mut class = vec![0usize; mdp.len()];
    let mut count = 1;
    loop {
        let mut ids: HashMap<(usize, Signature), usize> = HashMap::new();
        let next: Vec<usize> = (0..mdp.len())
            .map(|s| {
                let key = (class[s], signature(mdp, &class, s));
                let len = ids.len();
                *ids.entry(key).or_insert(len)
            })
            .collect();
        let new_count = ids.len();
        class = next;
        if new_count == count {
            return class;
        }
        count = new_count;
    }
}

/// One genuineness criterion with a human-readable witness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub holds: bool,
    pub evidence: String,
}

/// Closed-loop versus open-loop value at the initial state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpenLoopGap {
    pub gamma: f64,
    pub horizon: usize,
    pub closed_loop: f64,
    pub open_loop: f64,
}

impl OpenLoopGap {
    #[must_use]
    pub fn gap(&self) -> f64 {
        self.closed_loop - self.open_loop
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenuinenessReport {
    /// Rewarding diameter grows strictly with the instance size.
    pub a: Criterion,
    /// Actions change outcomes at every step of optimal play.
    pub b: Criterion,
    /// Closed-loop play strictly beats every fixed action sequence.
    pub c: Criterion,
    pub diameters: Vec<(usize, Option<usize>)>,
    pub open_loop: Option<OpenLoopGap>,
}

/// Quotient of an MDP by its bisimulation classes.
struct Quotient {
    initial: usize,
    /// `trans[class][action] = [(next class, reward, prob)]`.
    trans: Vec<Vec<Vec<(usize, f64, f64)>>>,
}

fn quotient(mdp: &ExplicitMdp) -> Quotient {
    let class = bisimulation_classes(mdp);
    let k = class.iter().max().map_or(0, |m| m + 1);
    let mut trans = vec![Vec::new(); k];
    let mut done = vec![false; k];
    for s in 0..mdp.len() {
        let c = class[s];
        if done[c] {
            continue;
        }
        done[c] = true;
        trans[c] = mdp.transitions[s]
            .iter()
            .map(|cell| {
                let mut agg: BTreeMap<(usize, i64), (f64, f64)> = BTreeMap::new();
                for o in cell {
                    let e = agg.entry((class[o.next], (o.reward * PROB_SCALE) as i64)).or_insert((o.reward, 0.0));
                    e.1 += o.prob;
                }
                agg.into_iter().map(|((c, _), (r, p))| (c, r, p)).collect()
            })
            .collect();
    }
    Quotient { initial: class[mdp.initial], trans }
}

/// Optimal finite-horizon discounted value from the initial state.
#[must_use]
pub fn closed_loop_value(mdp: &ExplicitMdp, gamma: f64, horizon: usize) -> f64 {
    let q = quotient(mdp);
    let mut v = vec![0.0; q.trans.len()];
    for _ in 0..horizon {
        v = q
            .trans
            .iter()
            .map(|row| {
                row.iter()
                    .map(|cell| cell.iter().map(|&(c, r, p)| p * (r + gamma * v[c])).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
    }
    v[q.initial]
}

/// Best finite-horizon discounted value of a fixed action sequence.
///
/// Exact dynamic programming over beliefs (distributions over bisimulation
/// classes), memoised per remaining horizon.
#[must_use]
pub fn best_open_loop_value(mdp: &ExplicitMdp, gamma: f64, horizon: usize) -> f64 {
    type Belief = Vec<(usize, i64)>;
    fn go(q: &Quotient, belief: &Belief, left: usize, gamma: f64, memo: &mut HashMap<(usize, Belief), f64>) -> f64 {
        if left == 0 {
            return 0.0;
        }
        if let Some(&v) = memo.get(&(left, belief.clone())) {
            return v;
        }
        let n_actions = q.trans[belief[0].0].len();
        let mut best = f64::NEG_INFINITY;
        for a in 0..n_actions {
            let mut reward = 0.0;
            let mut next: BTreeMap<usize, f64> = BTreeMap::new();
            for &(c, w) in belief {
                let w = w as f64 / PROB_SCALE;
                for &(c2, r, p) in &q.trans[c][a] {
                    reward += w * p * r;
                    *next.entry(c2).or_default() += w * p;
                }
            }
            let nb: Belief = next.into_iter().map(|(c, p)| (c, (p * PROB_SCALE).round() as i64)).collect();
            best = best.max(reward + gamma * go(q, &nb, left - 1, gamma, memo));
        }
        memo.insert((left, belief.clone()), best);
        best
    }
    let q = quotient(mdp);
    let start = vec![(q.initial, PROB_SCALE as i64)];
    go(&q, &start, horizon, gamma, &mut HashMap::new())
}

/// Evaluates the three genuineness criteria.
///
/// `sizes` lists the instance sizes used for the growth criterion; the same
/// seed and variant are regenerated at each size. The open-loop comparison
/// uses discount `gamma` over a horizon of two episodes.
pub fn genuineness_report(spec: &EnvSpec, sizes: &[usize], gamma: f64) -> Result<GenuinenessReport> {
    let mut diameters = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut rec = spec.to_record();
        rec.n = n;
        diameters.push((n, rewarding_diameter(&rec.build()?)?));
    }
    let growing = diameters.len() >= 2
        && diameters.windows(2).all(|w| matches!((w[0].1, w[1].1), (Some(x), Some(y)) if y > x) && w[1].0 > w[0].0);
    let a = Criterion {
        holds: growing,
        evidence: diameters
            .iter()
            .map(|(n, d)| format!("n={n}:d={}", d.map_or("inf".to_string(), |d| d.to_string())))
            .collect::<Vec<_>>()
            .join(" "),
    };

    let mdp = explicit_mdp(spec, DEFAULT_STATE_BOUND)?;
    let (_, opt) = optimal_actions(&mdp, STRUCT_GAMMA);
    let class = bisimulation_classes(&mdp);
    let on_path = reachable(&mdp, &opt);
    let outcome = |s: usize, a: usize| signature(&mdp, &class, s)[a].clone();
    let classes_only = |s: usize, a: usize| -> Vec<(usize, i64)> {
        let mut m: BTreeMap<usize, i64> = BTreeMap::new();
        for (c, _, p) in outcome(s, a) {
            *m.entry(c).or_default() += p;
        }
        m.into_iter().collect()
    };
    let mut inert = None;
    let mut branching = None;
    for s in (0..mdp.len()).filter(|&s| on_path[s]) {
        let na = mdp.actions.len();
        let sig: Vec<_> = (0..na).map(|a| outcome(s, a)).collect();
        if inert.is_none() && sig.iter().all(|x| *x == sig[0]) {
            inert = Some(s);
        }
        if branching.is_none() {
            let cls: Vec<_> = (0..na).map(|a| classes_only(s, a)).collect();
            if let Some(j) = (1..na).find(|&j| cls[j] != cls[0]) {
                branching = Some((s, 0, j));
            }
        }
    }
    let b = Criterion {
        holds: inert.is_none() && branching.is_some(),
        evidence: match (inert, branching) {
            (Some(s), _) => format!("all actions equivalent at optimal-path state {}", mdp.states[s]),
            (None, None) => "every action leads to the same successor class at every optimal-path state".into(),
            (None, Some((s, i, j))) => format!(
                "{} classes; at {} actions {} and {} reach different classes",
                class.iter().max().map_or(0, |m| m + 1),
                mdp.states[s],
                mdp.actions[i],
                mdp.actions[j]
            ),
        },
    };

    let (c, open_loop) = if spec.is_deterministic() {
        (Criterion { holds: false, evidence: "deterministic: some action sequence is optimal".into() }, None)
    } else {
        let horizon = 2 * spec.eta().unwrap_or(2);
        let gap = OpenLoopGap {
            gamma,
            horizon,
            closed_loop: closed_loop_value(&mdp, gamma, horizon),
            open_loop: best_open_loop_value(&mdp, gamma, horizon),
        };
        (
            Criterion {
                holds: gap.gap() > 1e-9,
                evidence: format!(
                    "gamma={gamma} T={horizon} closed={:.6} open={:.6} gap={:.3e}",
                    gap.closed_loop,
                    gap.open_loop,
                    gap.gap()
                ),
            },
            Some(gap),
        )
    };
    Ok(GenuinenessReport { a, b, c, diameters, open_loop })
}
