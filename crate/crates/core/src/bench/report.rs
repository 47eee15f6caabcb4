use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{fit_scaling, FitRecord, Metric, ResultsBundle, ScalingModel};
use crate::error::Result;

/// Files written by [`emit_report`]; `efficiency.csv` only with a grid.
pub const REPORT_FILES: [&str; 5] = ["summary.csv", "solver.csv", "efficiency.csv", "fits.csv", "README.txt"];

const FIT_METRICS: [Metric; 2] = [Metric::StepsToFirstReward, Metric::SolverQueries];

fn num(v: Option<f64>) -> String {
    match v {
        None => "NA".into(),
        Some(x) if x.is_infinite() => "inf".into(),
        Some(x) => x.to_string(),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Every fit the report carries: each agent under both models and both headline metrics.
#[must_use]
pub fn report_fits(bundle: &ResultsBundle) -> Vec<FitRecord> {
    let mut out = Vec::new();
    for &agent in &bundle.config.agents {
        for metric in FIT_METRICS {
            for model in [ScalingModel::Exp2InN, ScalingModel::PolyInN] {
                out.push(fit_scaling(bundle, agent, metric, model));
            }
        }
    }
    out
}

/// Writes the summary tables, fit records and a plain-text description.
///
/// Output depends only on the bundle, so re-emitting a persisted run
/// reproduces the same bytes.
pub fn emit_report(bundle: &ResultsBundle, outdir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(outdir)?;
    let mut written = Vec::new();

    let path = outdir.join("summary.csv");
    write_csv(
        &path,
        &["n", "agent", "median_steps", "q25", "q75", "success_rate"],
        bundle.summary.iter().map(|r| {
            vec![r.n.to_string(), r.agent.to_string(), num(r.median_steps), num(r.q25), num(r.q75), num(r.success_rate)]
        }),
    )?;
    written.push(path);

    let path = outdir.join("solver.csv");
    write_csv(
        &path,
        &["n", "agent", "completed", "skipped", "median_queries", "median_steps_to_solve", "solve_rate"],
        bundle.summary.iter().map(|r| {
            vec![
                r.n.to_string(),
                r.agent.to_string(),
                r.completed.to_string(),
                r.skipped.to_string(),
                num(r.median_queries),
                num(r.median_steps_to_solve),
                num(r.solve_rate),
            ]
        }),
    )?;
    written.push(path);

    if bundle.config.efficiency.is_some() {
        let path = outdir.join("efficiency.csv");
        write_csv(
            &path,
            &["n", "agent", "gamma", "epsilon", "delta", "p", "fraction", "attained", "p_needed"],
            bundle.efficiency.iter().map(|r| {
                vec![
                    r.n.to_string(),
                    r.agent.to_string(),
                    r.gamma.to_string(),
                    r.epsilon.to_string(),
                    r.delta.to_string(),
                    r.p.to_string(),
                    r.fraction.to_string(),
                    r.attained.to_string(),
                    r.p_needed.map_or_else(|| "NA".into(), |p| p.to_string()),
                ]
            }),
        )?;
        written.push(path);
    }

    let fits = report_fits(bundle);
    let path = outdir.join("fits.csv");
    write_csv(
        &path,
        &["agent", "metric", "model", "sizes", "slope", "intercept", "residual", "inconclusive"],
        fits.iter().map(|f| {
            vec![
                f.agent.to_string(),
                f.metric.to_string(),
                f.model.name().to_string(),
                f.sizes.iter().map(ToString::to_string).collect::<Vec<_>>().join(" "),
                num(f.slope),
                num(f.intercept),
                num(f.residual),
                f.inconclusive.to_string(),
            ]
        }),
    )?;
    written.push(path);

    let path = outdir.join("README.txt");
    fs::write(&path, readme(bundle, &fits))?;
    written.push(path);
    Ok(written)
}

fn readme(bundle: &ResultsBundle, fits: &[FitRecord]) -> String {
    let c = &bundle.config;
    let mut s = String::new();
    let _ = writeln!(s, "Experiment: {} on {:?}", c.variant, c.family);
    let sizes: Vec<String> = c.sizes.iter().map(ToString::to_string).collect();
    let _ = writeln!(s, "Sizes n: {}", sizes.join(", "));
    if let Some(l) = c.l {
        let _ = writeln!(s, "Depth l: {l}");
    }
    let agents: Vec<&str> = c.agents.iter().map(|a| a.name()).collect();
    let _ = writeln!(s, "Agents: {}", agents.join(", "));
    let _ = writeln!(s, "Trials per cell: {}", c.trials);
    let _ = writeln!(s, "Master seed: {}", c.master_seed);
    let _ = writeln!(s, "Solver backend: {:?}", c.backend);
    let _ = writeln!(s, "Label permutation: {}", c.permute_labels);
    let _ = writeln!(s, "Runs stop at first reward: {}", c.efficiency.is_none());
    let skipped = bundle.trials.iter().filter(|t| t.is_skipped()).count();
    let _ = writeln!(s, "Trial records: {} ({skipped} skipped)", bundle.trials.len());
    let _ = writeln!(s);
    let _ = writeln!(s, "Budgets (interaction steps):");
    for &a in &c.agents {
        let b: Vec<String> = c.sizes.iter().map(|&n| format!("n={n}: {}", c.budget_for(a, n))).collect();
        let _ = writeln!(s, "  {a}: {}", b.join(", "));
    }
    let _ = writeln!(s);
    s.push_str(
        "Files\n\
         summary.csv  n, agent, median_steps, q25, q75, success_rate\n\
         \x20            steps to first reward over completed trials; unrewarded trials count as inf,\n\
         \x20            NA marks a cell with no completed trials\n\
         solver.csv   n, agent, completed, skipped, median_queries, median_steps_to_solve, solve_rate\n\
         efficiency.csv  n, agent, gamma, epsilon, delta, p, fraction, attained, p_needed\n\
         fits.csv     agent, metric, model, sizes, slope, intercept, residual, inconclusive\n\
         \x20            least squares of log2(median) against n (exp2_in_n) or log2 n (poly_in_n)\n\
         trials.jsonl one record per (n, agent, trial); every table is recomputed from it\n",
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "Fits:");
    for f in fits {
        let what = if f.inconclusive {
            format!("inconclusive ({})", f.reason.as_deref().unwrap_or("-"))
        } else {
            format!("slope {} residual {}", num(f.slope), num(f.residual))
        };
        let _ = writeln!(s, "  {} {} {}: {what}", f.agent, f.metric, f.model.name());
    }
    s
}
