//! Seeded experiment orchestration, persistence, scaling fits and reports.

mod report;
mod stats;
pub mod verify;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{
    evaluate_efficiency, make_agent, run_agent, run_agent_to_first_reward, AgentKind, AgentTrace, SolverBackend,
    DEFAULT_DELTA, DEFAULT_EPSILON, DEFAULT_GAMMA,
};
use crate::envs::{EnvSpecRecord, Family, JumpDist, Variant};
use crate::error::{Error, Result};
use crate::oracles::{Problem, SIMON_MAX_N};
use crate::qsim::DEFAULT_CAP;

pub use report::{emit_report, REPORT_FILES};
pub use stats::{fit_scaling, quantile, summarize, EfficiencyRow, FitRecord, Metric, ScalingModel, SummaryRow};

pub const CONFIG_FILE: &str = "config.json";
pub const TRIALS_FILE: &str = "trials.jsonl";

/// Interaction budget per trial as a function of `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BudgetSchedule {
    Fixed { steps: u64 },
    /// `coeff · n^degree + offset`
    Poly { coeff: f64, degree: f64, offset: u64 },
    /// `coeff · 2^(rate · n) + offset`
    Exp2 { coeff: f64, rate: f64, offset: u64 },
}

impl BudgetSchedule {
    #[must_use]
    pub fn steps(&self, n: usize) -> u64 {
        let n = n as f64;
        match *self {
            BudgetSchedule::Fixed { steps } => steps,
            BudgetSchedule::Poly { coeff, degree, offset } => (coeff * n.powf(degree)).ceil() as u64 + offset,
            BudgetSchedule::Exp2 { coeff, rate, offset } => (coeff * (rate * n).exp2()).ceil() as u64 + offset,
        }
    }
}

/// Efficiency targets evaluated on every trial's full trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyGrid {
    pub gammas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub deltas: Vec<f64>,
    /// Step offsets at which attainment is tabulated.
    pub ps: Vec<u64>,
}

impl Default for EfficiencyGrid {
    fn default() -> Self {
        Self { gammas: vec![DEFAULT_GAMMA], epsilons: vec![DEFAULT_EPSILON], deltas: vec![DEFAULT_DELTA], ps: vec![0] }
    }
}

/// A full experiment: every `(size, agent, trial)` cell is one seeded run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub family: Family,
    pub variant: Variant,
    /// Values of `n`.
    pub sizes: Vec<usize>,
    /// RFS depth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    pub trials: usize,
    pub agents: Vec<AgentKind>,
    pub budget: BudgetSchedule,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub budget_overrides: BTreeMap<AgentKind, BudgetSchedule>,
    /// With a grid, runs use their whole budget and are scored for
    /// efficiency; without one they stop at the first reward.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efficiency: Option<EfficiencyGrid>,
    pub master_seed: u64,
    #[serde(default)]
    pub backend: SolverBackend,
    #[serde(default)]
    pub jump_dist: JumpDist,
    /// Scramble percept codes with a per-trial permutation.
    #[serde(default)]
    pub permute_labels: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg = Self::from_json(&fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[must_use]
    pub fn budget_for(&self, agent: AgentKind, n: usize) -> u64 {
        self.budget_overrides.get(&agent).unwrap_or(&self.budget).steps(n)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.variant.family() != self.family {
            return bad(format!("variant {} is not in the {:?} family", self.variant, self.family));
        }
        if self.sizes.is_empty() || self.agents.is_empty() || self.trials == 0 {
            return bad("sizes, agents and trials must be non-empty".into());
        }
        if self.sizes.iter().collect::<BTreeSet<_>>().len() != self.sizes.len() {
            return bad("duplicate size".into());
        }
        if self.agents.iter().collect::<BTreeSet<_>>().len() != self.agents.len() {
            return bad("duplicate agent".into());
        }
        for &n in &self.sizes {
            match self.family {
                Family::Simon if !(1..=SIMON_MAX_N).contains(&n) => return bad(format!("Simon n={n} out of range")),
                Family::Rfs => {
                    let l = self.l.ok_or_else(|| Error::InvalidConfig("RFS needs l".into()))?;
                    if n == 0 || l == 0 || n * l > 24 {
                        return bad(format!("RFS (n={n}, l={l}) out of range"));
                    }
                }
                Family::Simon => {}
            }
            env_record(self, n, 0).build()?;
            for &a in &self.agents {
                if self.budget_for(a, n) == 0 {
                    return bad(format!("zero budget for {a} at n={n}"));
                }
            }
        }
        for &a in &self.agents {
            match a {
                AgentKind::A3 if !self.variant.has_rg() => return bad(format!("a3 needs an rg variant, got {}", self.variant)),
                AgentKind::A2 | AgentKind::A3 if self.variant == Variant::RfsM1 => {
                    return bad("quantum agents cannot oraculize RFS_M1".into())
                }
                AgentKind::CollisionSeeker | AgentKind::LeakAssisted if self.family != Family::Simon => {
                    return bad(format!("{a} needs a Simon environment"))
                }
                _ => {}
            }
        }
        if self.family == Family::Rfs && self.backend == SolverBackend::AnalyticSampler {
            return bad("the analytic sampler exists for Simon only".into());
        }
        if let Some(g) = &self.efficiency {
            if g.gammas.is_empty() || g.epsilons.is_empty() || g.deltas.is_empty() || g.ps.is_empty() {
                return bad("efficiency grid axes must be non-empty".into());
            }
            if g.gammas.iter().any(|&x| !(x > 0.0 && x < 1.0))
                || g.epsilons.iter().any(|&x| !(x > 0.0))
                || g.deltas.iter().any(|&x| !(0.0..=1.0).contains(&x))
            {
                return bad("need γ ∈ (0,1), ε > 0 and δ ∈ [0,1]".into());
            }
        }
        Ok(())
    }

    fn without_output(&self) -> Self {
        Self { output_dir: None, ..self.clone() }
    }
}

/// Stable per-cell seed: SHA-256 of the master seed, size, stream tag and trial.
#[must_use]
pub fn derive_seed(master: u64, n: usize, l: Option<usize>, tag: &str, trial: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((n as u64).to_le_bytes());
    h.update((l.unwrap_or(0) as u64).to_le_bytes());
    h.update(tag.as_bytes());
    h.update([0]);
    h.update((trial as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// `efficient_after` of one trace for one `(γ, ε)` pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyPoint {
    pub gamma: f64,
    pub epsilon: f64,
    pub efficient_after: Option<u64>,
    pub inconclusive: bool,
}

/// Outcome of one cell, as persisted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    pub agent: AgentKind,
    pub trial: usize,
    pub instance_seed: u64,
    pub agent_seed: u64,
    pub budget: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    pub steps_to_first_reward: Option<u64>,
    pub total_steps: u64,
    pub total_reward: u64,
    pub oracle_calls: u64,
    /// Queries the agent's solver spent, if it ran one.
    pub solver_queries: Option<u64>,
    /// Interaction steps up to the solver's answer.
    pub steps_to_solve: Option<u64>,
    pub secret_correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub efficiency: Vec<EfficiencyPoint>,
}

impl TrialRecord {
    fn key(&self) -> (usize, AgentKind, usize) {
        (self.n, self.agent, self.trial)
    }

    #[must_use]
    pub fn is_skipped(&self) -> bool {
        self.skipped.is_some()
    }
}

/// Config echo, per-trial records and the aggregates derived from them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsBundle {
    pub config: ExperimentConfig,
    /// Sorted by `(n, agent, trial)`.
    pub trials: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
    pub efficiency: Vec<EfficiencyRow>,
}

impl ResultsBundle {
    /// Sorts the records and recomputes every aggregate from them.
    #[must_use]
    pub fn from_trials(config: ExperimentConfig, mut trials: Vec<TrialRecord>) -> Self {
        trials.sort_by_key(TrialRecord::key);
        let (summary, efficiency) = summarize(&config, &trials);
        Self { config, trials, summary, efficiency }
    }

    /// Records of one cell column.
    pub fn cell(&self, n: usize, agent: AgentKind) -> impl Iterator<Item = &TrialRecord> {
        self.trials.iter().filter(move |t| t.n == n && t.agent == agent)
    }
}

fn skip_reason(cfg: &ExperimentConfig, n: usize, agent: AgentKind) -> Option<String> {
    let quantum = matches!(agent, AgentKind::A2 | AgentKind::A3);
    if quantum && cfg.family == Family::Simon && cfg.backend == SolverBackend::Statevector && 2 * n + 1 > DEFAULT_CAP {
        return Some(format!("statevector needs {} qubits, cap is {DEFAULT_CAP}", 2 * n + 1));
    }
    None
}

fn env_record(cfg: &ExperimentConfig, n: usize, trial: usize) -> EnvSpecRecord {
    EnvSpecRecord {
        family: cfg.family,
        variant: cfg.variant,
        n,
        l: cfg.l.filter(|_| cfg.family == Family::Rfs),
        seed: derive_seed(cfg.master_seed, n, cfg.l, "instance", trial),
        jump_dist: cfg.jump_dist,
        label_permutation_seed: cfg.permute_labels.then(|| derive_seed(cfg.master_seed, n, cfg.l, "labels", trial)),
    }
}

/// Runs one cell. Infeasible cells come back marked as skipped.
pub fn run_trial(cfg: &ExperimentConfig, n: usize, agent: AgentKind, trial: usize) -> Result<TrialRecord> {
    let rec = env_record(cfg, n, trial);
    let agent_seed = derive_seed(cfg.master_seed, n, cfg.l, agent.name(), trial);
    let budget = cfg.budget_for(agent, n);
    let mut out = TrialRecord {
        n,
        l: rec.l,
        agent,
        trial,
        instance_seed: rec.seed,
        agent_seed,
        budget,
        skipped: skip_reason(cfg, n, agent),
        steps_to_first_reward: None,
        total_steps: 0,
        total_reward: 0,
        oracle_calls: 0,
        solver_queries: None,
        steps_to_solve: None,
        secret_correct: None,
        failure: None,
        efficiency: Vec::new(),
    };
    if out.skipped.is_some() {
        return Ok(out);
    }
    let env = rec.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(agent_seed);
    let mut a = make_agent(agent, cfg.backend);
    let run = if cfg.efficiency.is_some() {
        run_agent(a.as_mut(), &env, budget, &mut rng)
    } else {
        run_agent_to_first_reward(a.as_mut(), &env, budget, &mut rng)
    };
    let trace = match run {
        Ok(t) => t,
        Err(e @ (Error::CapExceeded { .. } | Error::Intractable { .. })) => {
            out.skipped = Some(e.to_string());
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    fill_from_trace(&mut out, &trace, env.problem());
    if let Some(grid) = &cfg.efficiency {
        for &gamma in &grid.gammas {
            for &epsilon in &grid.epsilons {
                let r = evaluate_efficiency(std::slice::from_ref(&trace), &env, gamma, epsilon, 0.0, 0)?;
                out.efficiency.push(EfficiencyPoint {
                    gamma,
                    epsilon,
                    efficient_after: r.efficient_after,
                    inconclusive: r.inconclusive,
                });
            }
        }
    }
    Ok(out)
}

fn fill_from_trace(out: &mut TrialRecord, trace: &AgentTrace, problem: &Problem) {
    out.steps_to_first_reward = trace.steps_to_first_reward();
    out.total_steps = trace.total_steps;
    out.total_reward = trace.total_reward();
    out.oracle_calls = trace.oracle_calls();
    out.failure = trace.failure.clone();
    if let Some(s) = &trace.solve {
        out.solver_queries = Some(s.oracle_queries);
        out.steps_to_solve = Some(s.interaction_steps);
        let truth = match problem {
            Problem::Simon(i) => i.secret(),
            Problem::Rfs(i) => i.root_secret(),
        };
        out.secret_correct = Some(s.success && s.secret == truth);
    }
}

fn read_trials(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?);
    }
    Ok(out)
}

/// Drops an unterminated last line left by an interrupted write.
fn trim_partial_line(path: &Path) -> Result<()> {
    let bytes = fs::read(path)?;
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if keep < bytes.len() {
        OpenOptions::new().write(true).open(path)?.set_len(keep as u64)?;
    }
    Ok(())
}

/// Loads a persisted run (config plus trial records) and recomputes its aggregates.
pub fn load_bundle(dir: &Path) -> Result<ResultsBundle> {
    let cfg = ExperimentConfig::from_json(&fs::read_to_string(dir.join(CONFIG_FILE))?)?;
    let trials_path = dir.join(TRIALS_FILE);
    let trials = if trials_path.exists() { read_trials(&trials_path)? } else { Vec::new() };
    Ok(ResultsBundle::from_trials(cfg, trials))
}

/// Executes every pending cell in parallel.
///
/// With an output directory, each finished cell is appended to
/// `trials.jsonl` by a single writer, and cells already present there are
/// not rerun. The returned bundle does not depend on execution order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultsBundle> {
    cfg.validate()?;
    let mut done: Vec<TrialRecord> = Vec::new();
    let mut sink = None;
    if let Some(dir) = &cfg.output_dir {
        fs::create_dir_all(dir)?;
        let cfg_path = dir.join(CONFIG_FILE);
        if cfg_path.exists() {
            let prev = ExperimentConfig::from_json(&fs::read_to_string(&cfg_path)?)?;
            if prev.without_output() != cfg.without_output() {
                return Err(Error::InvalidConfig(format!("{} holds a different experiment", dir.display())));
            }
        } else {
            fs::write(&cfg_path, cfg.without_output().to_json()? + "\n")?;
        }
        let trials_path = dir.join(TRIALS_FILE);
        if trials_path.exists() {
            trim_partial_line(&trials_path)?;
            done = read_trials(&trials_path)?;
        }
        sink = Some(OpenOptions::new().create(true).append(true).open(trials_path)?);
    }

    let have: BTreeSet<_> = done.iter().map(TrialRecord::key).collect();
    let pending: Vec<(usize, AgentKind, usize)> = cfg
        .sizes
        .iter()
        .flat_map(|&n| cfg.agents.iter().flat_map(move |&a| (0..cfg.trials).map(move |t| (n, a, t))))
        .filter(|k| !have.contains(k))
        .collect();

    let (tx, rx) = mpsc::channel::<TrialRecord>();
    let (fresh, outcome) = std::thread::scope(|scope| {
        let collector = scope.spawn(move || -> Result<Vec<TrialRecord>> {
            let mut w = sink.map(BufWriter::new);
            let mut got = Vec::new();
            for rec in rx {
                if let Some(w) = w.as_mut() {
                    serde_json::to_writer(&mut *w, &rec)?;
                    w.write_all(b"\n")?;
                    w.flush()?;
                }
                got.push(rec);
            }
            Ok(got)
        });
        let outcome = pending
            .par_iter()
            .try_for_each_with(tx, |tx, &(n, a, t)| -> Result<()> {
                let rec = run_trial(cfg, n, a, t)?;
                tx.send(rec).map_err(|_| Error::Protocol("result collector stopped".into()))
            });
        (collector.join().expect("collector thread panicked"), outcome)
    });
    let fresh = fresh?;
    outcome?;
    done.extend(fresh);
    Ok(ResultsBundle::from_trials(cfg.without_output(), done))
}
