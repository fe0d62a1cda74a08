//! Saturation-limit oracles, convergence-rate fitting, Pareto frontiers,
//! and compute-optimal configuration selection.
//!
//! The voting limits are computed exactly from the enumerable policy: as
//! the sample count grows, majority voting converges to the indicator of
//! "the marginal answer argmax equals the truth", and weighted voting to
//! the same with reward-weighted masses. Empirical curves from the runner
//! can therefore be checked against closed-form targets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accounting::CostModel;
use crate::reward::{score_solution, RewardError, RewardSpec};
use crate::rng::StableHasher;
use crate::runner::{run_cell, RunnerError, StrategySpec};
use crate::toyworld::{
    enumerate_paths, marginal_answer_distribution, Answer, CapExceeded, Dataset, PolicySpec,
    Problem, Solution,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Cap(#[from] CapExceeded),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error("need at least {needed} usable points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("no configuration fits within budget {budget}")]
    NoFeasibleConfig { budget: f64 },
    #[error("point has non-finite or out-of-range values")]
    BadPoint,
}

/// Saturation-limit verdict for one problem.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemLimit {
    pub problem_id: String,
    /// 1 iff the (weighted) marginal argmax equals the truth.
    pub limit_indicator: u8,
    /// Gap between the top two answer masses.
    pub margin: f64,
    /// True iff the argmax is non-unique (zero margin).
    pub degenerate: bool,
}

/// Dataset-level saturation limit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LimitReport {
    pub per_problem: Vec<ProblemLimit>,
    /// Mean of the per-problem indicators.
    pub dataset_limit: f64,
}

impl LimitReport {
    fn from_problems(per_problem: Vec<ProblemLimit>) -> Self {
        let dataset_limit = per_problem
            .iter()
            .map(|p| p.limit_indicator as f64)
            .sum::<f64>()
            / per_problem.len() as f64;
        Self {
            per_problem,
            dataset_limit,
        }
    }
}

/// Top-two answer-mass gap of one policy.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AnswerMargin {
    pub margin: f64,
    /// Only one distinct answer exists; the margin is its full mass.
    pub single_answer: bool,
}

impl AnswerMargin {
    pub fn degenerate(&self) -> bool {
        self.margin == 0.0
    }
}

fn mass_argmax(masses: &BTreeMap<Answer, f64>) -> (Answer, AnswerMargin) {
    debug_assert!(!masses.is_empty());
    // BTreeMap iteration is canonical order, so the first maximum wins ties.
    let mut best: Option<(&Answer, f64)> = None;
    let mut runner_up = f64::NEG_INFINITY;
    for (answer, mass) in masses {
        match best {
            None => best = Some((answer, *mass)),
            Some((_, best_mass)) => {
                if *mass > best_mass {
                    runner_up = best_mass;
                    best = Some((answer, *mass));
                } else if *mass > runner_up {
                    runner_up = *mass;
                }
            }
        }
    }
    let (answer, mass) = best.expect("non-empty masses");
    if masses.len() == 1 {
        (
            answer.clone(),
            AnswerMargin {
                margin: mass,
                single_answer: true,
            },
        )
    } else {
        (
            answer.clone(),
            AnswerMargin {
                margin: mass - runner_up,
                single_answer: false,
            },
        )
    }
}

/// Per-answer mass under a solution-level weighting function, summed over
/// every complete path of the policy.
pub fn weighted_answer_masses<F>(
    problem: &Problem,
    cap: usize,
    mut weight: F,
) -> Result<BTreeMap<Answer, f64>, AnalysisError>
where
    F: FnMut(&Solution) -> Result<f64, RewardError>,
{
    let mut masses: BTreeMap<Answer, f64> = BTreeMap::new();
    for (solution, prob) in enumerate_paths(&problem.policy, cap)? {
        let w = weight(&solution)?;
        let answer = solution
            .answer
            .clone()
            .expect("enumerated paths are complete");
        *masses.entry(answer).or_insert(0.0) += prob * w;
    }
    Ok(masses)
}

fn limit_for_problem(problem: &Problem, masses: &BTreeMap<Answer, f64>) -> ProblemLimit {
    let (argmax, margin) = mass_argmax(masses);
    ProblemLimit {
        problem_id: problem.id.clone(),
        limit_indicator: u8::from(argmax == problem.truth),
        margin: margin.margin,
        degenerate: margin.degenerate(),
    }
}

/// Saturation limit of majority voting: per problem, does the marginal
/// answer argmax hit the truth?
pub fn mv_limit(dataset: &Dataset, cap: usize) -> Result<LimitReport, AnalysisError> {
    let mut per_problem = Vec::with_capacity(dataset.len());
    for problem in &dataset.problems {
        let masses = marginal_answer_distribution(&problem.policy, cap)?;
        per_problem.push(limit_for_problem(problem, &masses));
    }
    Ok(LimitReport::from_problems(per_problem))
}

/// Saturation limit of weighted majority voting: the marginal masses are
/// weighted by the reward model's solution scores before the argmax.
pub fn wv_limit(
    dataset: &Dataset,
    reward: &RewardSpec,
    cap: usize,
) -> Result<LimitReport, AnalysisError> {
    let mut per_problem = Vec::with_capacity(dataset.len());
    for problem in &dataset.problems {
        let masses = weighted_answer_masses(problem, cap, |s| score_solution(reward, problem, s))?;
        per_problem.push(limit_for_problem(problem, &masses));
    }
    Ok(LimitReport::from_problems(per_problem))
}

/// Gap between the top two marginal answer masses of a policy.
pub fn answer_margin(policy: &PolicySpec, cap: usize) -> Result<AnswerMargin, AnalysisError> {
    let masses = marginal_answer_distribution(policy, cap)?;
    Ok(mass_argmax(&masses).1)
}

/// One point of an empirical accuracy-versus-samples curve.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CurvePoint {
    pub n: usize,
    pub mean_accuracy: f64,
    pub std: f64,
}

/// Independent stream seed for a (n, replicate, problem) curve cell.
fn curve_stream(master_seed: u64, n: usize, replicate: usize, problem_id: &str) -> u64 {
    StableHasher::new()
        .write_str("convergence_curve")
        .write_u64(master_seed)
        .write_u64(n as u64)
        .write_u64(replicate as u64)
        .write_str(problem_id)
        .finish()
}

/// Run `strategy` at each sample count in `n_grid`, `replicates` times on
/// fresh streams, and report mean/std of the dataset accuracy.
pub fn convergence_curve(
    dataset: &Dataset,
    reward: &RewardSpec,
    strategy: &StrategySpec,
    n_grid: &[usize],
    replicates: usize,
    master_seed: u64,
    cost: &CostModel,
) -> Result<Vec<CurvePoint>, AnalysisError> {
    debug_assert!(n_grid.windows(2).all(|w| w[0] < w[1]), "n_grid must ascend");
    let mut curve = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let mut accuracies = Vec::with_capacity(replicates);
        for replicate in 0..replicates {
            let mut correct = 0usize;
            for problem in &dataset.problems {
                let seed = curve_stream(master_seed, n, replicate, &problem.id);
                let outcome = run_cell(problem, reward, strategy, n, seed, cost)?;
                correct += usize::from(outcome.correct(problem));
            }
            accuracies.push(correct as f64 / dataset.len() as f64);
        }
        let mean = accuracies.iter().sum::<f64>() / replicates as f64;
        let var = if replicates > 1 {
            accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (replicates - 1) as f64
        } else {
            0.0
        };
        curve.push(CurvePoint {
            n,
            mean_accuracy: mean,
            std: var.sqrt(),
        });
    }
    Ok(curve)
}

/// Least squares of `ys` on `xs`; returns (slope, intercept, r_squared).
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    debug_assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let x_bar = xs.iter().sum::<f64>() / n;
    let y_bar = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - x_bar) * (x - x_bar);
        sxy += (x - x_bar) * (y - y_bar);
    }
    let slope = sxy / sxx;
    let intercept = y_bar - slope * x_bar;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        ss_res += (y - (slope * x + intercept)).powi(2);
        ss_tot += (y - y_bar).powi(2);
    }
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    (slope, intercept, r_squared)
}

/// Log-linear fit of the gap between a curve and its saturation limit.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GapFit {
    /// Slope of `ln(limit - accuracy)` against `n`; negative means the
    /// gap shrinks geometrically.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

impl GapFit {
    /// The geometric base: the gap shrinks like `rate_base^-n`.
    pub fn rate_base(&self) -> f64 {
        (-self.slope).exp()
    }
}

/// Fit `ln(limit - mean_accuracy)` against `n`, dropping non-positive gaps.
pub fn fit_exponential_gap(curve: &[CurvePoint], limit: f64) -> Result<GapFit, AnalysisError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for point in curve {
        let gap = limit - point.mean_accuracy;
        if gap > 0.0 {
            xs.push(point.n as f64);
            ys.push(gap.ln());
        }
    }
    if xs.len() < 3 {
        return Err(AnalysisError::InsufficientPoints {
            needed: 3,
            got: xs.len(),
        });
    }
    let (slope, intercept, r_squared) = linear_fit(&xs, &ys);
    Ok(GapFit {
        slope,
        intercept,
        r_squared,
        points_used: xs.len(),
    })
}

/// One configuration's position in the (compute, error) plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub flops: f64,
    pub error: f64,
    pub label: String,
}

impl ParetoPoint {
    pub fn new(flops: f64, error: f64, label: impl Into<String>) -> Result<Self, AnalysisError> {
        if !flops.is_finite() || flops <= 0.0 || !error.is_finite() || !(0.0..=1.0).contains(&error)
        {
            return Err(AnalysisError::BadPoint);
        }
        Ok(Self {
            flops,
            error,
            label: label.into(),
        })
    }
}

/// Keep exactly the non-dominated points, sorted by FLOPs.
///
/// `p` survives iff no other point is at most as expensive and at most as
/// wrong, with at least one strict improvement. Single forward sweep over
/// the FLOPs-sorted points; equal-(flops, error) duplicates all survive.
pub fn pareto_frontier(points: &[ParetoPoint]) -> Result<Vec<ParetoPoint>, AnalysisError> {
    if points.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let mut sorted: Vec<&ParetoPoint> = points.iter().collect();
    sorted.sort_by(|a, b| {
        a.flops
            .total_cmp(&b.flops)
            .then(a.error.total_cmp(&b.error))
    });

    let mut kept: Vec<ParetoPoint> = Vec::new();
    let mut best_cheaper = f64::INFINITY;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].flops == sorted[i].flops {
            j += 1;
        }
        // Within an equal-FLOPs group the smallest error dominates the rest;
        // anything at or above the best strictly-cheaper error is dominated.
        let group_min = sorted[i].error;
        for point in &sorted[i..j] {
            if point.error == group_min && point.error < best_cheaper {
                kept.push((*point).clone());
            }
        }
        best_cheaper = best_cheaper.min(group_min);
        i = j;
    }
    Ok(kept)
}

/// One row of an experiment grid: a single replicate of one
/// (model size, strategy, sample count) cell, aggregated over problems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub model_size: u64,
    pub strategy: String,
    pub n_samples: usize,
    pub replicate: usize,
    pub accuracy: f64,
    pub policy_tokens: u64,
    pub reward_tokens: u64,
    pub flops: f64,
}

/// Sweep results, one row per (model size, strategy, n, replicate).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentGrid {
    pub rows: Vec<GridRow>,
}

/// Identity of one configuration, replicates folded together.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct ConfigKey {
    pub model_size: u64,
    pub strategy: String,
    pub n_samples: usize,
}

impl std::fmt::Display for ConfigKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}/{}/n={}",
            self.model_size, self.strategy, self.n_samples
        )
    }
}

/// A configuration's replicate-averaged error and cost.
#[derive(Clone, Debug, Serialize)]
pub struct ConfigSummary {
    pub key: ConfigKey,
    pub mean_error: f64,
    pub mean_flops: f64,
    pub replicates: usize,
}

/// Replicate-averaged summaries in canonical key order.
pub fn config_summaries(grid: &ExperimentGrid) -> Vec<ConfigSummary> {
    let mut acc: BTreeMap<ConfigKey, (f64, f64, usize)> = BTreeMap::new();
    for row in &grid.rows {
        let key = ConfigKey {
            model_size: row.model_size,
            strategy: row.strategy.clone(),
            n_samples: row.n_samples,
        };
        let entry = acc.entry(key).or_insert((0.0, 0.0, 0));
        entry.0 += 1.0 - row.accuracy;
        entry.1 += row.flops;
        entry.2 += 1;
    }
    acc.into_iter()
        .map(|(key, (error_sum, flops_sum, count))| ConfigSummary {
            key,
            mean_error: error_sum / count as f64,
            mean_flops: flops_sum / count as f64,
            replicates: count,
        })
        .collect()
}

/// The lowest-error configuration whose mean FLOPs fit the budget.
/// Ties prefer cheaper FLOPs, then canonical key order.
pub fn optimal_config(grid: &ExperimentGrid, budget: f64) -> Result<ConfigSummary, AnalysisError> {
    let mut best: Option<ConfigSummary> = None;
    for summary in config_summaries(grid) {
        if summary.mean_flops > budget {
            continue;
        }
        let better = match &best {
            None => true,
            Some(current) => {
                summary.mean_error < current.mean_error
                    || (summary.mean_error == current.mean_error
                        && (summary.mean_flops < current.mean_flops
                            || (summary.mean_flops == current.mean_flops
                                && summary.key < current.key)))
            }
        };
        if better {
            best = Some(summary);
        }
    }
    best.ok_or(AnalysisError::NoFeasibleConfig { budget })
}

/// Optimal model size per budget, for the size regression.
/// Budgets with no feasible configuration are skipped.
pub fn optimal_size_points(grid: &ExperimentGrid, budgets: &[f64]) -> Vec<(f64, u64)> {
    budgets
        .iter()
        .filter_map(|&budget| {
            optimal_config(grid, budget)
                .ok()
                .map(|summary| (budget, summary.key.model_size))
        })
        .collect()
}

/// Power-law fit of compute against optimal model size.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SizeRegression {
    /// d log10(C) / d log10(N).
    pub slope: f64,
    pub intercept: f64,
}

/// Least squares of `log10(flops)` on `log10(model size)`.
/// Needs at least two points with distinct model sizes.
pub fn fit_size_regression(optima: &[(f64, u64)]) -> Result<SizeRegression, AnalysisError> {
    if optima.len() < 2 {
        return Err(AnalysisError::InsufficientPoints {
            needed: 2,
            got: optima.len(),
        });
    }
    let distinct = {
        let mut sizes: Vec<u64> = optima.iter().map(|(_, n)| *n).collect();
        sizes.sort_unstable();
        sizes.dedup();
        sizes.len()
    };
    if distinct < 2 {
        return Err(AnalysisError::InsufficientPoints {
            needed: 2,
            got: distinct,
        });
    }
    let xs: Vec<f64> = optima.iter().map(|(_, n)| (*n as f64).log10()).collect();
    let ys: Vec<f64> = optima.iter().map(|(c, _)| c.log10()).collect();
    let (slope, intercept, _) = linear_fit(&xs, &ys);
    Ok(SizeRegression { slope, intercept })
}
