use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, ResultsBundle, TrialRecord};
use crate::agents::AgentKind;

/// Linear-interpolation quantile of sorted-on-the-fly data; infinities sort last.
#[must_use]
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, frac) = (pos.floor() as usize, pos.fract());
    if frac == 0.0 || lo + 1 == v.len() {
        return Some(v[lo]);
    }
    Some(v[lo] + (v[lo + 1] - v[lo]) * frac)
}

/// Per-trial quantity a summary or fit is taken over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    StepsToFirstReward,
    /// Oracle queries spent by the agent's solver.
    SolverQueries,
    /// Interaction steps until the solver returned.
    StepsToSolve,
    TotalSteps,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::StepsToFirstReward, Metric::SolverQueries, Metric::StepsToSolve, Metric::TotalSteps];

    #[must_use]
    pub fn name(self) -> &'static str {
        match self {
            Metric::StepsToFirstReward => "steps_to_first_reward",
            Metric::SolverQueries => "solver_queries",
            Metric::StepsToSolve => "steps_to_solve",
            Metric::TotalSteps => "total_steps",
        }
    }

    /// Value for one completed trial; a missing value counts as infinite.
    #[must_use]
    pub fn of(self, t: &TrialRecord) -> f64 {
        let v = match self {
            Metric::StepsToFirstReward => t.steps_to_first_reward,
            Metric::SolverQueries => t.solver_queries,
            Metric::StepsToSolve => t.steps_to_solve,
            Metric::TotalSteps => Some(t.total_steps),
        };
        v.map_or(f64::INFINITY, |x| x as f64)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingModel {
    /// `log2(median) ≈ slope · n + c`
    Exp2InN,
    /// `log2(median) ≈ degree · log2(n) + c`
    PolyInN,
}

impl ScalingModel {
    #[must_use]
    pub fn name(self) -> &'static str {
        match self {
            ScalingModel::Exp2InN => "exp2_in_n",
            ScalingModel::PolyInN => "poly_in_n",
        }
    }
}

/// One row per `(n, agent)`; medians over completed trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: usize,
    pub agent: AgentKind,
    pub completed: usize,
    pub skipped: usize,
    /// Steps to first reward; unrewarded trials count as infinite.
    pub median_steps: Option<f64>,
    pub q25: Option<f64>,
    pub q75: Option<f64>,
    pub success_rate: Option<f64>,
    pub median_queries: Option<f64>,
    pub median_steps_to_solve: Option<f64>,
    /// Fraction of trials whose solver returned the true secret.
    pub solve_rate: Option<f64>,
}

/// Attainment of one `(γ, ε, δ, p)` target in one `(n, agent)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub n: usize,
    pub agent: AgentKind,
    pub gamma: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub p: u64,
    /// Fraction of trials efficient from `p` on.
    pub fraction: f64,
    pub attained: bool,
    /// Smallest offset from which a `1 − δ` fraction of trials is efficient.
    pub p_needed: Option<u64>,
}

fn cell<'a>(trials: &'a [TrialRecord], n: usize, agent: AgentKind) -> impl Iterator<Item = &'a TrialRecord> {
    trials.iter().filter(move |t| t.n == n && t.agent == agent)
}

/// Aggregates recomputed from per-trial records, in config order.
#[must_use]
pub fn summarize(cfg: &ExperimentConfig, trials: &[TrialRecord]) -> (Vec<SummaryRow>, Vec<EfficiencyRow>) {
    let mut rows = Vec::new();
    let mut eff = Vec::new();
    let mut sizes = cfg.sizes.clone();
    sizes.sort_unstable();
    for &n in &sizes {
        for &agent in &cfg.agents {
            let all: Vec<&TrialRecord> = cell(trials, n, agent).collect();
            let done: Vec<&TrialRecord> = all.iter().copied().filter(|t| !t.is_skipped()).collect();
            let of = |m: Metric| done.iter().map(|t| m.of(t)).collect::<Vec<_>>();
            let steps = of(Metric::StepsToFirstReward);
            let frac = |k: usize| (!done.is_empty()).then(|| k as f64 / done.len() as f64);
            rows.push(SummaryRow {
                n,
                agent,
                completed: done.len(),
                skipped: all.len() - done.len(),
                median_steps: quantile(&steps, 0.5),
                q25: quantile(&steps, 0.25),
                q75: quantile(&steps, 0.75),
                success_rate: frac(done.iter().filter(|t| t.steps_to_first_reward.is_some()).count()),
                median_queries: quantile(&of(Metric::SolverQueries), 0.5),
                median_steps_to_solve: quantile(&of(Metric::StepsToSolve), 0.5),
                solve_rate: frac(done.iter().filter(|t| t.secret_correct == Some(true)).count()),
            });
            let Some(grid) = &cfg.efficiency else { continue };
            if done.is_empty() {
                continue;
            }
            for &gamma in &grid.gammas {
                for &epsilon in &grid.epsilons {
                    let mut after: Vec<u64> = done
                        .iter()
                        .map(|t| {
                            t.efficiency
                                .iter()
                                .find(|e| e.gamma == gamma && e.epsilon == epsilon && !e.inconclusive)
                                .and_then(|e| e.efficient_after)
                                .unwrap_or(u64::MAX)
                        })
                        .collect();
                    after.sort_unstable();
                    for &delta in &grid.deltas {
                        let k = (((1.0 - delta) * after.len() as f64).ceil() as usize).clamp(1, after.len()) - 1;
                        let p_needed = (after[k] != u64::MAX).then_some(after[k]);
                        for &p in &grid.ps {
                            let fraction = after.iter().filter(|&&a| a <= p).count() as f64 / after.len() as f64;
                            eff.push(EfficiencyRow {
                                n,
                                agent,
                                gamma,
                                epsilon,
                                delta,
                                p,
                                fraction,
                                attained: p_needed.is_some_and(|q| q <= p),
                                p_needed,
                            });
                        }
                    }
                }
            }
        }
    }
    (rows, eff)
}

/// Least-squares scaling fit of a per-size median.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub agent: AgentKind,
    pub metric: Metric,
    pub model: ScalingModel,
    pub sizes: Vec<usize>,
    pub medians: Vec<f64>,
    /// Exponent rate (exp model) or degree (poly model).
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// Root-mean-square residual in log2 units.
    pub residual: Option<f64>,
    pub inconclusive: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Fits `log2(median metric)` against `n` or `log2 n` over the bundle's sizes.
///
/// Fewer than three usable sizes, a non-finite or non-positive median, or
/// a single distinct abscissa make the fit inconclusive.
#[must_use]
pub fn fit_scaling(bundle: &ResultsBundle, agent: AgentKind, metric: Metric, model: ScalingModel) -> FitRecord {
    let mut sizes: Vec<usize> = bundle.config.sizes.clone();
    sizes.sort_unstable();
    let mut used = Vec::new();
    let mut medians = Vec::new();
    for n in sizes {
        let vals: Vec<f64> = cell(&bundle.trials, n, agent).filter(|t| !t.is_skipped()).map(|t| metric.of(t)).collect();
        if let Some(m) = quantile(&vals, 0.5) {
            used.push(n);
            medians.push(m);
        }
    }
    let mut rec = FitRecord {
        agent,
        metric,
        model,
        sizes: used.clone(),
        medians: medians.clone(),
        slope: None,
        intercept: None,
        residual: None,
        inconclusive: true,
        reason: None,
    };
    if used.len() < 3 {
        rec.reason = Some(format!("{} usable sizes, need 3", used.len()));
        return rec;
    }
    if medians.iter().any(|m| !m.is_finite() || *m <= 0.0) {
        rec.reason = Some("a median is zero or unreached".into());
        return rec;
    }
    let xs: Vec<f64> = used
        .iter()
        .map(|&n| match model {
            ScalingModel::Exp2InN => n as f64,
            ScalingModel::PolyInN => (n as f64).log2(),
        })
        .collect();
    let ys: Vec<f64> = medians.iter().map(|m| m.log2()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= f64::EPSILON {
        rec.reason = Some("all sizes coincide".into());
        return rec;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    rec.slope = Some(slope);
    rec.intercept = Some(intercept);
    rec.residual = Some((sse / k).sqrt());
    rec.inconclusive = false;
    rec
}
