//! Command-line surface for the optimization stack: single runs, method
//! ablations, causal discovery, exact hypervolume, and the regret-bound
//! report. Every command is driven by one root seed and writes deterministic
//! artifacts, so reruns are byte-comparable.
//!
//! Exit codes: 0 on success, 2 on configuration or input errors, 3 when a
//! numerical failure aborts a run.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rescue_core::causal::{pc_discover, Node, ObservationalData, PcConfig, Tier};
use rescue_core::pareto::{hypervolume_exact, pareto_filter};
use rescue_core::runner::{export_results, run, run_method_ablation, Method, RunConfig, RunLog};
use rescue_core::theory::theory_report;
use rescue_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "rescue",
    version,
    about = "Multi-objective multi-fidelity Bayesian optimization with causal priors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one budgeted optimization loop and export its artifacts.
    Run(RunArgs),
    /// Compare methods across seeds with a shared initial design.
    Ablate(AblateArgs),
    /// Discover a tier-consistent DAG from observational data.
    Discover(DiscoverArgs),
    /// Exact hypervolume of a point set against a reference.
    Hv(HvArgs),
    /// Empirical check of the per-iteration regret bound.
    Theory(TheoryArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default results/<problem>_<method>_seed<seed>_<hash>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    /// Base run configuration; method and seed are varied per run.
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated methods to compare.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "rescue,hvkg_noncausal,ehvi_single_fidelity"
    )]
    methods: Vec<Method>,
    /// Seeds per method, counting up from the config's root seed.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Output directory (default results/ablation_<problem>_<hash>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiscoverArgs {
    /// CSV of observational rows; the header names the variables.
    #[arg(long)]
    data: PathBuf,
    /// Columns to treat as controllable options.
    #[arg(long, value_delimiter = ',', required = true)]
    options: Vec<String>,
    /// Columns to treat as optimization objectives.
    #[arg(long, value_delimiter = ',', required = true)]
    objectives: Vec<String>,
    /// Columns to treat as non-manipulable indicators.
    #[arg(long, value_delimiter = ',')]
    indicators: Vec<String>,
    /// Column holding the evaluation fidelity, if recorded.
    #[arg(long)]
    fidelity: Option<String>,
    /// Significance level for the conditional-independence tests.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Largest conditioning set the PC pass may use.
    #[arg(long, default_value_t = 3)]
    max_conditioning: usize,
    /// Where to write the discovered DAG as JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HvArgs {
    /// CSV of objective vectors, one point per row (header optional).
    #[arg(long)]
    points: PathBuf,
    /// Reference point, comma-separated; must be dominated by the points.
    #[arg(long = "ref", value_delimiter = ',', required = true)]
    reference: Vec<f64>,
}

#[derive(Args)]
struct TheoryArgs {
    /// TOML or JSON run configuration; theory instrumentation is forced on.
    #[arg(long)]
    config: PathBuf,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Discover(args) => cmd_discover(args),
        Command::Hv(args) => cmd_hv(args),
        Command::Theory(args) => cmd_theory(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err {
                Error::Conditioning(_) | Error::State(_) => 3u8,
                _ => 2u8,
            })
        }
    }
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let log = run(&config)?;
    let dir = match &args.out {
        Some(dir) => dir.clone(),
        None => default_run_dir(&log),
    };
    export_results(&log, &dir)?;
    print_run_summary(&log, &dir);
    Ok(())
}

fn default_run_dir(log: &RunLog) -> PathBuf {
    PathBuf::from("results").join(format!(
        "{}_{}_seed{}_{}",
        log.problem,
        log.method,
        log.seed,
        &log.config_hash[..8]
    ))
}

fn print_run_summary(log: &RunLog, dir: &Path) {
    println!("problem          {}", log.problem);
    println!("method           {}", log.method);
    println!("seed             {}", log.seed);
    println!("iterations       {}", log.iterations);
    println!(
        "total cost       {:.6} (overshoot {:.6})",
        log.total_cost, log.overshoot
    );
    println!("final hv         {:.9} (optimum {:.9})", log.final_hv, log.hv_star);
    println!("final log regret {:.6}", log.final_log_regret);
    println!("aur              {:.6}", log.aur);
    println!("violation rate   {:.4}", log.violation_rate);
    println!("results          {}", dir.display());
}

/// One `ablation.csv` row and the per-method aggregate for `ablation.json`.
#[derive(Serialize)]
struct MethodSummary {
    method: String,
    seeds: u64,
    median_iterations: f64,
    median_total_cost: f64,
    median_final_hv: f64,
    median_final_log_regret: f64,
    median_aur: f64,
    median_violation_rate: f64,
    /// Evaluation counts over ten equal fidelity bins, summed across seeds.
    fidelity_histogram: Vec<usize>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn summarize_method(method: Method, logs: &[RunLog]) -> MethodSummary {
    let pick = |f: &dyn Fn(&RunLog) -> f64| {
        let mut values: Vec<f64> = logs.iter().map(f).collect();
        median(&mut values)
    };
    let median_iterations = pick(&|log| log.iterations as f64);
    let median_total_cost = pick(&|log| log.total_cost);
    let median_final_hv = pick(&|log| log.final_hv);
    let median_final_log_regret = pick(&|log| log.final_log_regret);
    let median_aur = pick(&|log| log.aur);
    let median_violation_rate = pick(&|log| log.violation_rate);
    let mut fidelity_histogram = vec![0usize; 10];
    for log in logs {
        for (bin, count) in log.fidelity_histogram.iter().enumerate() {
            fidelity_histogram[bin] += count;
        }
    }
    MethodSummary {
        method: method.to_string(),
        seeds: logs.len() as u64,
        median_iterations,
        median_total_cost,
        median_final_hv,
        median_final_log_regret,
        median_aur,
        median_violation_rate,
        fidelity_histogram,
    }
}

fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let base = RunConfig::load(&args.config)?;
    let logs = run_method_ablation(&base, &args.methods, args.seeds)?;
    let dir = match &args.out {
        Some(dir) => dir.clone(),
        None => PathBuf::from("results").join(format!(
            "ablation_{}_{}",
            base.problem,
            &base.hash()?[..8]
        )),
    };
    fs::create_dir_all(&dir)?;

    let mut table = csv::Writer::from_path(dir.join("ablation.csv"))?;
    table.write_record([
        "method",
        "seed",
        "iterations",
        "total_cost",
        "overshoot",
        "final_hv",
        "final_log_regret",
        "aur",
        "violation_rate",
    ])?;
    for (method, per_method) in args.methods.iter().zip(&logs) {
        for log in per_method {
            export_results(
                log,
                &dir.join(method.as_str()).join(format!("seed_{}", log.seed)),
            )?;
            table.write_record([
                method.to_string(),
                log.seed.to_string(),
                log.iterations.to_string(),
                format!("{}", log.total_cost),
                format!("{}", log.overshoot),
                format!("{}", log.final_hv),
                format!("{}", log.final_log_regret),
                format!("{}", log.aur),
                format!("{}", log.violation_rate),
            ])?;
        }
    }
    table.flush()?;

    let summaries: Vec<MethodSummary> = args
        .methods
        .iter()
        .zip(&logs)
        .map(|(&method, per_method)| summarize_method(method, per_method))
        .collect();
    let mut json = serde_json::to_string_pretty(&summaries)?;
    json.push('\n');
    fs::write(dir.join("ablation.json"), json)?;

    for summary in &summaries {
        println!(
            "{:<22} iterations {:>6.1}  log regret {:>10.4}  aur {:>10.4}  violations {:>6.4}",
            summary.method,
            summary.median_iterations,
            summary.median_final_log_regret,
            summary.median_aur,
            summary.median_violation_rate,
        );
    }
    println!("results          {}", dir.display());
    Ok(())
}

fn cmd_discover(args: &DiscoverArgs) -> Result<()> {
    let data = ObservationalData::from_csv_path(&args.data)?;
    let mut nodes = Vec::with_capacity(data.columns().len());
    for column in data.columns() {
        let mut tiers = Vec::new();
        if args.options.iter().any(|name| name == column) {
            tiers.push(Tier::Option);
        }
        if args.indicators.iter().any(|name| name == column) {
            tiers.push(Tier::Indicator);
        }
        if args.objectives.iter().any(|name| name == column) {
            tiers.push(Tier::Objective);
        }
        if args.fidelity.as_deref() == Some(column) {
            tiers.push(Tier::Fidelity);
        }
        match tiers.as_slice() {
            [tier] => nodes.push(Node {
                name: column.clone(),
                tier: *tier,
            }),
            [] => {
                return Err(Error::config(format!(
                    "column {column:?} has no tier; list it under --options, \
                     --indicators, --objectives, or --fidelity"
                )))
            }
            _ => {
                return Err(Error::config(format!(
                    "column {column:?} is listed under more than one tier"
                )))
            }
        }
    }
    let config = PcConfig {
        alpha: args.alpha,
        max_conditioning: args.max_conditioning,
    };
    let graph = pc_discover(&data, nodes, config)?;
    let mut json = graph.to_json()?;
    json.push('\n');
    fs::write(&args.out, json)?;
    println!(
        "discovered {} edges over {} nodes from {} rows; wrote {}",
        graph.edges().count(),
        graph.len(),
        data.n_rows(),
        args.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct HvReport {
    points: usize,
    nondominated: usize,
    reference: Vec<f64>,
    hypervolume: f64,
}

fn cmd_hv(args: &HvArgs) -> Result<()> {
    let points = read_point_csv(&args.points)?;
    if points.is_empty() {
        return Err(Error::domain(format!(
            "{} contains no points",
            args.points.display()
        )));
    }
    let hypervolume = hypervolume_exact(&points, &args.reference)?;
    let report = HvReport {
        points: points.len(),
        nondominated: pareto_filter(&points).len(),
        reference: args.reference.clone(),
        hypervolume,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

/// Reads rows of floats; a non-numeric first row is treated as a header.
fn read_point_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut points = Vec::new();
    for (index, record) in reader.records().enumerate() {
        let record = record?;
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(|cell| cell.parse::<f64>()).collect();
        match parsed {
            Ok(row) => points.push(row),
            Err(_) if index == 0 => continue,
            Err(_) => {
                return Err(Error::domain(format!(
                    "row {} of {} is not numeric",
                    index + 1,
                    path.display()
                )))
            }
        }
    }
    Ok(points)
}

fn cmd_theory(args: &TheoryArgs) -> Result<()> {
    let config = RunConfig::load(&args.config)?;
    let report = theory_report(&config)?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    match &args.out {
        Some(path) => {
            fs::write(path, json)?;
            println!(
                "bound {} over {} iterations; wrote {}",
                if report.pass { "holds" } else { "fails" },
                report.per_iteration.len(),
                path.display()
            );
        }
        None => print!("{json}"),
    }
    Ok(())
}
