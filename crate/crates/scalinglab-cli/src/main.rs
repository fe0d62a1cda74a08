//! Command-line front end for the scalinglab experiment harness.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on runtime
//! errors (I/O, enumeration caps, malformed data files).

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scalinglab::analysis::{
    config_summaries, fit_size_regression, mv_limit, optimal_size_points, pareto_frontier,
    wv_limit, ExperimentGrid, ParetoPoint,
};
use scalinglab::harness::{
    parse_csv, run_experiment, write_csv, write_manifest, write_plot, ConfigError,
    ExperimentConfig, HarnessError, PlotKind,
};
use scalinglab::toyworld::{make_policy_family, Dataset, DEFAULT_PATH_CAP};

#[derive(Parser)]
#[command(
    name = "scalinglab",
    version,
    about = "Inference-strategy scaling experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment sweep described by a config file.
    Run(RunArgs),
    /// Print the voting saturation limits for a config's dataset.
    Limits(ConfigArg),
    /// Print the Pareto frontier of a grid CSV as JSON.
    Pareto(CsvArg),
    /// Fit the compute-versus-optimal-model-size regression from a grid CSV.
    Regress(RegressArgs),
    /// Render a grid CSV as an SVG plot.
    Plot(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Worker threads; 0 picks the default. Env: SCALINGLAB_JOBS.
    #[arg(long, env = "SCALINGLAB_JOBS", default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct CsvArg {
    #[arg(long)]
    csv: PathBuf,
}

#[derive(Args)]
struct RegressArgs {
    #[arg(long)]
    csv: PathBuf,
    /// Record the fitted coefficients into an existing run manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    csv: PathBuf,
    /// error_vs_flops or frontier.
    #[arg(long)]
    kind: String,
    /// Output path; defaults to the CSV path with a kind suffix.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Runtime(msg) => write!(f, "runtime error: {msg}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(inner) => CliError::Config(inner.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(ExperimentConfig::from_json_str(&text)?)
}

fn load_grid(path: &Path) -> Result<ExperimentGrid, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    parse_csv(&text).map_err(runtime)
}

fn summary_points(grid: &ExperimentGrid) -> Result<Vec<ParetoPoint>, CliError> {
    config_summaries(grid)
        .iter()
        .map(|s| ParetoPoint::new(s.mean_flops, s.mean_error, s.key.to_string()).map_err(runtime))
        .collect()
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let config = load_config(&args.config)?;
    let (grid, manifest) = run_experiment(&config, args.jobs)?;
    std::fs::create_dir_all(&args.out_dir).map_err(runtime)?;
    let csv_path = args.out_dir.join(&config.output.csv);
    let manifest_path = args.out_dir.join(&config.output.manifest);
    write_csv(&grid, &csv_path).map_err(runtime)?;
    write_manifest(&manifest, &manifest_path)?;
    println!(
        "wrote {} rows to {} (manifest {})",
        grid.rows.len(),
        csv_path.display(),
        manifest_path.display()
    );
    Ok(())
}

fn cmd_limits(args: &ConfigArg) -> Result<(), CliError> {
    let config = load_config(&args.config)?;
    let dataset = config.dataset.resolve()?;
    let mut report = Vec::new();
    for &size in &config.model_sizes {
        let problems: Vec<_> = dataset
            .problems
            .iter()
            .map(|p| make_policy_family(p, &[size], &config.family).remove(0))
            .collect();
        let sized = Dataset::new(problems).map_err(ConfigError::from)?;
        let mv = mv_limit(&sized, DEFAULT_PATH_CAP).map_err(runtime)?;
        let wv = wv_limit(&sized, &config.reward, DEFAULT_PATH_CAP).map_err(runtime)?;
        report.push(serde_json::json!({
            "model_size": size,
            "mv": mv,
            "wv": wv,
        }));
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({ "limits": report }))
            .expect("limit report serializes")
    );
    Ok(())
}

fn cmd_pareto(args: &CsvArg) -> Result<(), CliError> {
    let grid = load_grid(&args.csv)?;
    let points = summary_points(&grid)?;
    let frontier = pareto_frontier(&points).map_err(runtime)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({ "frontier": frontier }))
            .expect("frontier serializes")
    );
    Ok(())
}

fn cmd_regress(args: &RegressArgs) -> Result<(), CliError> {
    let grid = load_grid(&args.csv)?;
    let mut budgets: Vec<f64> = config_summaries(&grid)
        .iter()
        .map(|s| s.mean_flops)
        .collect();
    budgets.sort_by(f64::total_cmp);
    budgets.dedup();
    let optima = optimal_size_points(&grid, &budgets);
    let fit = fit_size_regression(&optima).map_err(runtime)?;
    let report = serde_json::json!({
        "slope": fit.slope,
        "intercept": fit.intercept,
        "points": optima.len(),
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("regression serializes")
    );
    if let Some(manifest_path) = &args.manifest {
        let text = std::fs::read_to_string(manifest_path).map_err(runtime)?;
        let mut manifest: serde_json::Value = serde_json::from_str(&text).map_err(runtime)?;
        manifest["regression"] = report;
        std::fs::write(
            manifest_path,
            serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
        )
        .map_err(runtime)?;
    }
    Ok(())
}

fn cmd_plot(args: &PlotArgs) -> Result<(), CliError> {
    let kind: PlotKind = args.kind.parse().map_err(CliError::Config)?;
    let grid = load_grid(&args.csv)?;
    let out = args.out.clone().unwrap_or_else(|| {
        let stem = args
            .csv
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("grid");
        args.csv.with_file_name(format!("{stem}_{}.svg", args.kind))
    });
    write_plot(&grid, kind, &out).map_err(runtime)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Limits(args) => cmd_limits(args),
        Command::Pareto(args) => cmd_pareto(args),
        Command::Regress(args) => cmd_regress(args),
        Command::Plot(args) => cmd_plot(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("{error}");
            ExitCode::from(error.exit_code())
        }
    }
}
