//! Experiment configuration, seeded parallel execution, and emission.
//!
//! A run is fully determined by (config, master seed): every cell of the
//! sweep derives its own rng stream by hashing the cell coordinates, so
//! the thread count and scheduling order cannot change any result.

mod csv;
mod svg;

pub use csv::{emit_csv, fmt_sig10, parse_csv, round_sig10, write_csv, CsvError, CSV_HEADER};
pub use svg::{emit_plot, write_plot, PlotError, PlotKind};

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accounting::{merge, BudgetReport, CostModel};
use crate::analysis::{ExperimentGrid, GridRow};
use crate::reward::RewardSpec;
use crate::rng::{SimRng, StableHasher};
use crate::runner::{run_cell, RunnerError, StrategySpec};
use crate::toyworld::{
    make_policy_family, Answer, Dataset, FamilyParams, PolicyDef, Problem, ProblemDef, ProblemError,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config JSON: {0}")]
    Json(String),
    #[error("config field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("dataset generator gave up after {attempts} attempts (min_margin too strict?)")]
    GeneratorFailed { attempts: usize },
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("problem `{problem_id}`: {source}")]
    Cell {
        problem_id: String,
        source: RunnerError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Random dataset recipe: layered trees with categorical transitions.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSpec {
    pub problems: usize,
    pub seed: u64,
    pub num_answers: usize,
    /// Tree depth in steps; paths complete after exactly this many.
    pub depth: u32,
    pub branching: usize,
    /// Regenerate a problem until its answer margin reaches this gap.
    pub min_margin: f64,
    pub base_param_count: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            problems: 8,
            seed: 0,
            num_answers: 2,
            depth: 3,
            branching: 3,
            min_margin: 0.0,
            base_param_count: 1_000_000,
        }
    }
}

impl GeneratorSpec {
    fn validate(&self) -> Result<(), ConfigError> {
        let field = |field: &str, message: &str| ConfigError::Field {
            field: field.to_string(),
            message: message.to_string(),
        };
        if self.problems == 0 {
            return Err(field("dataset.generator.problems", "must be >= 1"));
        }
        if self.num_answers == 0 || self.num_answers > 50 {
            return Err(field("dataset.generator.num_answers", "must be in 1..=50"));
        }
        if self.depth == 0 || self.depth > 8 {
            return Err(field("dataset.generator.depth", "must be in 1..=8"));
        }
        if self.branching == 0 || self.branching > 8 {
            return Err(field("dataset.generator.branching", "must be in 1..=8"));
        }
        if !(0.0..1.0).contains(&self.min_margin) {
            return Err(field("dataset.generator.min_margin", "must be in [0, 1)"));
        }
        if self.base_param_count == 0 {
            return Err(field("dataset.generator.base_param_count", "must be >= 1"));
        }
        Ok(())
    }

    /// Build one random full `branching`-ary tree policy of `depth` levels.
    fn generate_problem(&self, index: usize, attempt: usize) -> Result<Problem, ProblemError> {
        let seed = StableHasher::new()
            .write_str("dataset_generator")
            .write_u64(self.seed)
            .write_u64(index as u64)
            .write_u64(attempt as u64)
            .finish();
        let mut rng = SimRng::new(seed);

        let answers: Vec<String> = (0..self.num_answers).map(|i| format!("a{i}")).collect();
        let truth = answers[rng.next_below(self.num_answers as u64) as usize].clone();

        let mut def = PolicyDef {
            states: vec!["root".to_string()],
            start: "root".to_string(),
            transitions: Default::default(),
            terminals: Default::default(),
            tokens_per_step: Default::default(),
            max_depth: self.depth,
            param_count: self.base_param_count,
        };

        let mut level: Vec<String> = vec!["root".to_string()];
        let mut leaf_names: Vec<String> = Vec::new();
        for d in 1..=self.depth {
            let mut next_level = Vec::new();
            for parent in &level {
                let mut edges = Vec::with_capacity(self.branching);
                let mut raw: Vec<f64> = (0..self.branching).map(|_| 0.1 + rng.next_f64()).collect();
                let total: f64 = raw.iter().sum();
                for p in raw.iter_mut() {
                    *p /= total;
                }
                for (b, prob) in raw.into_iter().enumerate() {
                    let child = format!("{parent}.{b}");
                    def.states.push(child.clone());
                    edges.push((child.clone(), prob));
                    if d == self.depth {
                        let answer =
                            answers[rng.next_below(self.num_answers as u64) as usize].clone();
                        def.terminals.insert(child.clone(), answer);
                        leaf_names.push(child);
                    } else {
                        next_level.push(child);
                    }
                }
                def.transitions.insert(parent.clone(), edges);
            }
            level = next_level;
        }
        if !def.terminals.values().any(|a| *a == truth) {
            let pick = leaf_names[rng.next_below(leaf_names.len() as u64) as usize].clone();
            def.terminals.insert(pick, truth.clone());
        }
        Problem::new(
            format!("gen-{index:03}"),
            Answer::new(truth).map_err(ProblemError::Policy)?,
            def.build()?,
            false,
        )
    }

    pub fn generate(&self) -> Result<Dataset, ConfigError> {
        self.validate()?;
        const MAX_ATTEMPTS: usize = 1000;
        let mut problems = Vec::with_capacity(self.problems);
        for index in 0..self.problems {
            let mut accepted = None;
            for attempt in 0..MAX_ATTEMPTS {
                let problem = self.generate_problem(index, attempt)?;
                let margin = crate::analysis::answer_margin(
                    &problem.policy,
                    crate::toyworld::DEFAULT_PATH_CAP,
                )
                .map_err(|_| ConfigError::Field {
                    field: "dataset.generator".to_string(),
                    message: "generated policy exceeds the enumeration cap".to_string(),
                })?;
                if margin.margin >= self.min_margin && !margin.single_answer {
                    accepted = Some(problem);
                    break;
                }
            }
            problems.push(accepted.ok_or(ConfigError::GeneratorFailed {
                attempts: MAX_ATTEMPTS,
            })?);
        }
        Ok(Dataset::new(problems)?)
    }
}

/// Dataset source: inline problems or a generator recipe.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    Inline(Vec<ProblemDef>),
    Generator(GeneratorSpec),
}

impl DatasetSpec {
    pub fn resolve(&self) -> Result<Dataset, ConfigError> {
        match self {
            DatasetSpec::Inline(defs) => Ok(Dataset::new(
                defs.iter()
                    .cloned()
                    .map(ProblemDef::build)
                    .collect::<Result<_, _>>()?,
            )?),
            DatasetSpec::Generator(spec) => spec.generate(),
        }
    }

    fn generator_seed(&self) -> Option<u64> {
        match self {
            DatasetSpec::Inline(_) => None,
            DatasetSpec::Generator(spec) => Some(spec.seed),
        }
    }
}

/// Output file names, joined under the CLI's `--out-dir`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputPaths {
    pub csv: String,
    pub manifest: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            csv: "grid.csv".to_string(),
            manifest: "manifest.json".to_string(),
        }
    }
}

/// Top-level experiment description. Unknown JSON keys are rejected.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub model_sizes: Vec<u64>,
    pub strategies: Vec<StrategySpec>,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    #[serde(default)]
    pub reward: RewardSpec,
    pub master_seed: u64,
    #[serde(default)]
    pub family: FamilyParams,
    #[serde(default = "default_reward_params")]
    pub reward_params: u64,
    #[serde(default = "default_include_reward_flops")]
    pub include_reward_flops: bool,
    #[serde(default = "default_flops_per_param_token")]
    pub flops_per_param_token: f64,
    #[serde(default)]
    pub output: OutputPaths,
}

fn default_reward_params() -> u64 {
    1
}

fn default_include_reward_flops() -> bool {
    true
}

fn default_flops_per_param_token() -> f64 {
    crate::accounting::DEFAULT_FLOPS_PER_PARAM_TOKEN
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self, ConfigError> {
        let config: Self = serde_json::from_str(s).map_err(|e| ConfigError::Json(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let field = |field: &str, message: &str| ConfigError::Field {
            field: field.to_string(),
            message: message.to_string(),
        };
        if self.model_sizes.is_empty() {
            return Err(field("model_sizes", "must not be empty"));
        }
        if self.model_sizes.contains(&0) {
            return Err(field("model_sizes", "sizes must be >= 1"));
        }
        if self.strategies.is_empty() {
            return Err(field("strategies", "must not be empty"));
        }
        for (i, strategy) in self.strategies.iter().enumerate() {
            if !strategy.is_valid() {
                return Err(field(
                    &format!("strategies[{i}]"),
                    "invalid strategy parameters",
                ));
            }
        }
        if self.n_grid.is_empty() {
            return Err(field("n_grid", "must not be empty"));
        }
        if self.n_grid.contains(&0) {
            return Err(field("n_grid", "sample counts must be >= 1"));
        }
        if self.replicates == 0 {
            return Err(field("replicates", "must be >= 1"));
        }
        self.reward
            .validate()
            .map_err(|e| field("reward", &e.to_string()))?;
        if self.reward_params == 0 {
            return Err(field("reward_params", "must be >= 1"));
        }
        if !self.flops_per_param_token.is_finite() || self.flops_per_param_token <= 0.0 {
            return Err(field("flops_per_param_token", "must be finite and > 0"));
        }
        if let DatasetSpec::Generator(spec) = &self.dataset {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn cost_model(&self) -> CostModel {
        CostModel {
            reward_params: self.reward_params,
            include_reward_flops: self.include_reward_flops,
            flops_per_param_token: self.flops_per_param_token,
        }
    }

    /// Stable hash of the canonical JSON serialization.
    pub fn config_hash(&self) -> u64 {
        let canonical = serde_json::to_string(self).expect("config serializes");
        StableHasher::new().write_str(&canonical).finish()
    }
}

/// Provenance record for one run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub created_unix: u64,
    pub master_seed: u64,
    pub dataset_seed: Option<u64>,
}

/// Independent stream seed for one experiment cell.
pub fn cell_stream_seed(
    master_seed: u64,
    model_size_index: usize,
    strategy_index: usize,
    n: usize,
    replicate: usize,
    problem_id: &str,
) -> u64 {
    StableHasher::new()
        .write_str("experiment_cell")
        .write_u64(master_seed)
        .write_u64(model_size_index as u64)
        .write_u64(strategy_index as u64)
        .write_u64(n as u64)
        .write_u64(replicate as u64)
        .write_str(problem_id)
        .finish()
}

#[derive(Clone, Copy)]
struct Cell {
    size_index: usize,
    strategy_index: usize,
    n: usize,
    replicate: usize,
}

fn execute_cell(
    cell: &Cell,
    config: &ExperimentConfig,
    sized_problems: &[Vec<Problem>],
    cost: &CostModel,
) -> Result<GridRow, HarnessError> {
    let strategy = &config.strategies[cell.strategy_index];
    let problems = &sized_problems[cell.size_index];
    let mut correct = 0usize;
    let mut reports: Vec<BudgetReport> = Vec::with_capacity(problems.len());
    for problem in problems {
        let seed = cell_stream_seed(
            config.master_seed,
            cell.size_index,
            cell.strategy_index,
            cell.n,
            cell.replicate,
            &problem.id,
        );
        let outcome =
            run_cell(problem, &config.reward, strategy, cell.n, seed, cost).map_err(|source| {
                HarnessError::Cell {
                    problem_id: problem.id.clone(),
                    source,
                }
            })?;
        correct += usize::from(outcome.correct(problem));
        reports.push(outcome.report);
    }
    let report = merge(&reports).expect("cell reports share one model size");
    Ok(GridRow {
        model_size: config.model_sizes[cell.size_index],
        strategy: strategy.label(),
        n_samples: cell.n,
        replicate: cell.replicate,
        accuracy: round_sig10(correct as f64 / problems.len() as f64),
        policy_tokens: report.policy_tokens,
        reward_tokens: report.reward_tokens,
        flops: round_sig10(report.flops_with_coefficient(config.flops_per_param_token)),
    })
}

/// Run the full sweep. `jobs = 0` uses the default thread pool size; any
/// thread count produces identical results.
pub fn run_experiment(
    config: &ExperimentConfig,
    jobs: usize,
) -> Result<(ExperimentGrid, RunManifest), HarnessError> {
    config.validate()?;
    let dataset = config.dataset.resolve()?;
    let cost = config.cost_model();

    // One resized problem list per model size.
    let mut sized_problems: Vec<Vec<Problem>> = vec![Vec::new(); config.model_sizes.len()];
    for problem in &dataset.problems {
        let family = make_policy_family(problem, &config.model_sizes, &config.family);
        for (i, sized) in family.into_iter().enumerate() {
            sized_problems[i].push(sized);
        }
    }

    let mut cells = Vec::new();
    for size_index in 0..config.model_sizes.len() {
        for (strategy_index, strategy) in config.strategies.iter().enumerate() {
            // A deterministic single-candidate strategy has nothing to
            // gain from the sample grid; it runs once per replicate.
            let ns: Vec<usize> = if strategy.is_deterministic() {
                vec![1]
            } else {
                config.n_grid.clone()
            };
            for n in ns {
                for replicate in 0..config.replicates {
                    cells.push(Cell {
                        size_index,
                        strategy_index,
                        n,
                        replicate,
                    });
                }
            }
        }
    }

    let run_all = || -> Result<Vec<GridRow>, HarnessError> {
        cells
            .par_iter()
            .map(|cell| execute_cell(cell, config, &sized_problems, &cost))
            .collect()
    };
    let mut rows = if jobs > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool construction");
        pool.install(run_all)?
    } else {
        run_all()?
    };
    rows.sort_by(|a, b| {
        (a.model_size, &a.strategy, a.n_samples, a.replicate).cmp(&(
            b.model_size,
            &b.strategy,
            b.n_samples,
            b.replicate,
        ))
    });

    let manifest = RunManifest {
        config_hash: format!("{:016x}", config.config_hash()),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        master_seed: config.master_seed,
        dataset_seed: config.dataset.generator_seed(),
    };
    Ok((ExperimentGrid { rows }, manifest))
}

/// Write the manifest JSON next to the grid CSV.
pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<(), HarnessError> {
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(path, json + "\n")?;
    Ok(())
}
