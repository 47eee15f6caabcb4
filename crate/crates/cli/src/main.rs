use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use qrl_core::agents::{make_agent, replay_trace, run_agent, run_agent_to_first_reward, AgentKind, SolverBackend};
use qrl_core::bench::verify::{run_suite, Suite};
use qrl_core::bench::{derive_seed, emit_report, fit_scaling, load_bundle, run_experiment, ExperimentConfig, Metric, ScalingModel};
use qrl_core::envs::{EnvSpecRecord, Family, JumpDist, Variant};
use qrl_core::Error;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

#[derive(Parser)]
#[command(name = "qrl", version, about = "Quantum-accessible reinforcement-learning laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit a problem instance, and its environment when a variant is given, as JSON.
    Gen {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        l: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scramble percept codes with this key.
        #[arg(long)]
        permute_labels: Option<u64>,
    },
    /// Run one agent on one environment and print a JSON summary.
    Run {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long)]
        variant: Variant,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        l: Option<usize>,
        #[arg(long)]
        agent: AgentKind,
        #[arg(long)]
        budget: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = BackendArg::Auto)]
        backend: BackendArg,
        #[arg(long)]
        permute_labels: Option<u64>,
        /// Stop at the first rewarded step instead of spending the whole budget.
        #[arg(long)]
        stop_at_reward: bool,
        /// Write the full trace as JSONL.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run every cell of an experiment config and write the report.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Results directory; overrides the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run invariant suites; exits 1 if any check fails.
    Verify {
        #[arg(long, value_enum, default_value_t = SuiteArg::All)]
        suite: SuiteArg,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Recompute aggregates and fits from a results directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
        /// Where to write the report; defaults to the results directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Simon,
    Rfs,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Simon => Family::Simon,
            FamilyArg::Rfs => Family::Rfs,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Statevector,
    AnalyticSampler,
    Auto,
}

impl From<BackendArg> for SolverBackend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Statevector => SolverBackend::Statevector,
            BackendArg::AnalyticSampler => SolverBackend::AnalyticSampler,
            BackendArg::Auto => SolverBackend::Auto,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Promise,
    Oraculization,
    Solvers,
    All,
}

/// Failure that maps to a specific exit code.
enum Failure {
    Invariant(String),
    Config(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::InvalidConfig(m) | Error::Parse(m)) => Failure::Config(m.clone()),
            Some(Error::Contract(m)) => Failure::Config(m.clone()),
            _ => Failure::Other(e),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn env_record(family: FamilyArg, variant: Variant, n: usize, l: Option<usize>, seed: u64, key: Option<u64>) -> EnvSpecRecord {
    EnvSpecRecord {
        family: family.into(),
        variant,
        n,
        l,
        seed,
        jump_dist: JumpDist::default(),
        label_permutation_seed: key,
    }
}

fn gen(family: FamilyArg, variant: Option<Variant>, n: usize, l: Option<usize>, seed: u64, key: Option<u64>) -> Result<(), Failure> {
    let variant = variant.unwrap_or(match family {
        FamilyArg::Simon => Variant::M1,
        FamilyArg::Rfs => Variant::RfsM2,
    });
    let rec = env_record(family, variant, n, l, seed, key);
    let spec = rec.build()?;
    let out = json!({ "instance": spec.problem().to_record(), "env": rec });
    println!("{}", serde_json::to_string_pretty(&out).context("serializing instance")?);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run(
    family: FamilyArg,
    variant: Variant,
    n: usize,
    l: Option<usize>,
    agent: AgentKind,
    budget: u64,
    seed: u64,
    backend: BackendArg,
    key: Option<u64>,
    stop_at_reward: bool,
    trace_path: Option<PathBuf>,
) -> Result<(), Failure> {
    if budget == 0 {
        return Err(Failure::Config("budget must be positive".into()));
    }
    let rec = env_record(family, variant, n, l, seed, key);
    let spec = rec.build()?;
    let mut a = make_agent(agent, backend.into());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, n, l, agent.name(), 0));
    let trace = if stop_at_reward {
        run_agent_to_first_reward(a.as_mut(), &spec, budget, &mut rng)
    } else {
        run_agent(a.as_mut(), &spec, budget, &mut rng)
    }
    .map_err(|e| match e {
        e @ (Error::Protocol(_) | Error::CapExceeded { .. } | Error::Intractable { .. }) => Failure::Config(e.to_string()),
        e => e.into(),
    })?;
    if let Some(path) = trace_path {
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        trace.write_jsonl(BufWriter::new(f))?;
    }
    let summary = json!({
        "env": rec,
        "agent": agent,
        "budget": budget,
        "steps_to_first_reward": trace.steps_to_first_reward(),
        "total_steps": trace.total_steps,
        "total_reward": trace.total_reward(),
        "oracle_calls": trace.oracle_calls(),
        "solve": trace.solve,
        "failure": trace.failure,
    });
    println!("{}", serde_json::to_string_pretty(&summary).context("serializing summary")?);

    replay_trace(&spec, &trace).map_err(|e| Failure::Invariant(format!("trace does not replay: {e}")))?;
    let cost = if trace.oracle_calls() == 0 { 0 } else { 5 * spec.eta().unwrap_or(0) as u64 };
    if !trace.accounting_holds(cost) {
        return Err(Failure::Invariant("step accounting does not add up".into()));
    }
    Ok(())
}

fn bench(config: PathBuf, out: Option<PathBuf>) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::load(&config)?;
    if out.is_some() {
        cfg.output_dir = out;
    }
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("results"));
    cfg.output_dir = Some(dir.clone());
    let bundle = run_experiment(&cfg)?;
    let files = emit_report(&bundle, &dir)?;
    print_summary(&bundle);
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn print_summary(bundle: &qrl_core::bench::ResultsBundle) {
    let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    println!("{:>4} {:>18} {:>12} {:>10} {:>10} {:>8}", "n", "agent", "median_steps", "q25", "q75", "success");
    for r in &bundle.summary {
        println!(
            "{:>4} {:>18} {:>12} {:>10} {:>10} {:>8}",
            r.n,
            r.agent.name(),
            fmt(r.median_steps),
            fmt(r.q25),
            fmt(r.q75),
            fmt(r.success_rate)
        );
    }
}

fn verify(suite: SuiteArg, seeds: u64) -> Result<(), Failure> {
    let suites: Vec<Suite> = match suite {
        SuiteArg::Promise => vec![Suite::Promise],
        SuiteArg::Oraculization => vec![Suite::Oraculization],
        SuiteArg::Solvers => vec![Suite::Solvers],
        SuiteArg::All => Suite::ALL.to_vec(),
    };
    let mut failed = 0;
    for s in suites {
        for c in run_suite(s, seeds)? {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            println!("{tag} {:?} {} ({})", c.suite, c.name, c.detail);
            failed += usize::from(!c.passed);
        }
    }
    if failed > 0 {
        return Err(Failure::Invariant(format!("{failed} checks failed")));
    }
    Ok(())
}

fn report(dir: PathBuf, out: Option<PathBuf>) -> Result<(), Failure> {
    let bundle = load_bundle(&dir).with_context(|| format!("loading results from {}", dir.display()))?;
    let out = out.unwrap_or(dir);
    emit_report(&bundle, &out)?;
    print_summary(&bundle);
    for &agent in &bundle.config.agents {
        for model in [ScalingModel::Exp2InN, ScalingModel::PolyInN] {
            let f = fit_scaling(&bundle, agent, Metric::StepsToFirstReward, model);
            match (f.slope, f.residual) {
                (Some(s), Some(r)) => println!("fit {agent} {}: slope {s:.4} residual {r:.4}", model.name()),
                _ => println!("fit {agent} {}: inconclusive", model.name()),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen { family, variant, n, l, seed, permute_labels } => gen(family, variant, n, l, seed, permute_labels),
        Command::Run { family, variant, n, l, agent, budget, seed, backend, permute_labels, stop_at_reward, trace } => {
            run(family, variant, n, l, agent, budget, seed, backend, permute_labels, stop_at_reward, trace)
        }
        Command::Bench { config, out } => bench(config, out),
        Command::Verify { suite, seeds } => verify(suite, seeds),
        Command::Report { dir, out } => report(dir, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invariant(m)) => {
            eprintln!("invariant failure: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("invalid configuration: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
