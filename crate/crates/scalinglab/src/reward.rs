//! Synthetic process reward model.
//!
//! Scores a step prefix by blending an exact success oracle with a
//! deterministic hash-keyed noise term. `alpha` controls how informative
//! the score is (0 = constant 0.5, large = the oracle itself) and `eta`
//! bounds the noise amplitude. Scoring the same prefix twice always
//! returns bit-identical values, like a real reward model would.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{hash_to_unit, StableHasher};
use crate::toyworld::{enumerate_from, CapExceeded, Problem, Solution, StepId, DEFAULT_PATH_CAP};

/// How per-step scores aggregate into a solution-level weight.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardAggregation {
    /// Score of the full path (the final step's prefix score).
    #[default]
    Last,
    /// Minimum prefix score along the path.
    Min,
    /// Product of prefix scores along the path.
    Product,
}

/// Parameters of the synthetic reward model.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardSpec {
    /// Informativeness: the oracle blend weight is `alpha / (1 + alpha)`.
    pub alpha: f64,
    /// Noise amplitude in `[0, 0.5]`.
    pub eta: f64,
    pub seed: u64,
    pub aggregation: RewardAggregation,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            eta: 0.0,
            seed: 0,
            aggregation: RewardAggregation::Last,
        }
    }
}

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("alpha must be finite and >= 0, got {alpha}")]
    BadAlpha { alpha: f64 },
    #[error("eta must be in [0, 0.5], got {eta}")]
    BadEta { eta: f64 },
    #[error("prefix is not a valid path from start")]
    InvalidPrefix,
    #[error("solution is incomplete (no final answer)")]
    IncompleteSolution,
    #[error(transparent)]
    Cap(#[from] CapExceeded),
}

impl RewardSpec {
    pub fn validate(&self) -> Result<(), RewardError> {
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(RewardError::BadAlpha { alpha: self.alpha });
        }
        if !self.eta.is_finite() || !(0.0..=0.5).contains(&self.eta) {
            return Err(RewardError::BadEta { eta: self.eta });
        }
        Ok(())
    }

    /// Oracle blend weight `w(alpha) = alpha / (1 + alpha)`.
    pub fn blend_weight(&self) -> f64 {
        self.alpha / (1.0 + self.alpha)
    }
}

/// Walk `prefix` from the start state, returning the endpoint.
fn prefix_endpoint(problem: &Problem, prefix: &[StepId]) -> Result<StepId, RewardError> {
    let policy = &problem.policy;
    let mut state = policy.start();
    for step in prefix {
        if policy.is_terminal(state) {
            return Err(RewardError::InvalidPrefix);
        }
        if !policy
            .successors(state)
            .iter()
            .any(|(succ, _)| succ == step)
        {
            return Err(RewardError::InvalidPrefix);
        }
        state = *step;
    }
    Ok(state)
}

/// Exact probability that continued sampling from the prefix endpoint
/// reaches a terminal whose answer equals the problem's truth.
///
/// Computed by exhaustive enumeration below the endpoint; the empty prefix
/// gives the marginal truth mass at the root.
pub fn prefix_success_probability(
    problem: &Problem,
    prefix: &[StepId],
) -> Result<f64, RewardError> {
    let endpoint = prefix_endpoint(problem, prefix)?;
    let policy = &problem.policy;
    if policy.is_terminal(endpoint) {
        return Ok(if policy.answer(endpoint) == Some(&problem.truth) {
            1.0
        } else {
            0.0
        });
    }
    let mut mass = 0.0;
    for (solution, prob) in enumerate_from(policy, endpoint, DEFAULT_PATH_CAP)? {
        if solution.answer.as_ref() == Some(&problem.truth) {
            mass += prob;
        }
    }
    Ok(mass)
}

/// Deterministic noise in `[-1, 1]` keyed by (seed, problem id, prefix).
fn prefix_noise(spec: &RewardSpec, problem: &Problem, prefix: &[StepId]) -> f64 {
    let mut hasher = StableHasher::new();
    hasher
        .write_u64(spec.seed)
        .write_str(&problem.id)
        .write_u64(prefix.len() as u64);
    for step in prefix {
        hasher.write_u64(step.index() as u64);
    }
    2.0 * hash_to_unit(hasher.finish()) - 1.0
}

/// Score one step prefix in `[0, 1]`.
pub fn score_prefix(
    spec: &RewardSpec,
    problem: &Problem,
    prefix: &[StepId],
) -> Result<f64, RewardError> {
    let q_star = prefix_success_probability(problem, prefix)?;
    let w = spec.blend_weight();
    let blend = (1.0 - w) * 0.5 + w * q_star;
    let noise = spec.eta * prefix_noise(spec, problem, prefix);
    Ok((blend + noise).clamp(0.0, 1.0))
}

/// Solution-level weight for voting, per the configured aggregation.
pub fn score_solution(
    spec: &RewardSpec,
    problem: &Problem,
    solution: &Solution,
) -> Result<f64, RewardError> {
    if !solution.is_complete() {
        return Err(RewardError::IncompleteSolution);
    }
    match spec.aggregation {
        RewardAggregation::Last => score_prefix(spec, problem, &solution.steps),
        RewardAggregation::Min => {
            let mut min = f64::INFINITY;
            for end in 1..=solution.steps.len() {
                min = min.min(score_prefix(spec, problem, &solution.steps[..end])?);
            }
            Ok(min)
        }
        RewardAggregation::Product => {
            let mut product = 1.0;
            for end in 1..=solution.steps.len() {
                product *= score_prefix(spec, problem, &solution.steps[..end])?;
            }
            Ok(product)
        }
    }
}

/// Aggregate per-prefix scores (one per depth) into a solution weight.
/// Equals [`score_solution`] when the scores came from the same path.
pub fn score_solution_weight_from_scores(aggregation: RewardAggregation, scores: &[f64]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    match aggregation {
        RewardAggregation::Last => *scores.last().expect("non-empty"),
        RewardAggregation::Min => scores.iter().cloned().fold(f64::INFINITY, f64::min),
        RewardAggregation::Product => scores.iter().product(),
    }
}

/// Token cost of the prefixes scored for one solution-level weight.
/// Mirrors the reward-call accounting the strategy runners report.
pub fn solution_score_tokens(spec: &RewardSpec, solution: &Solution, problem: &Problem) -> u64 {
    let step_tokens: Vec<u64> = solution
        .steps
        .iter()
        .map(|s| problem.policy.step_tokens(*s))
        .collect();
    match spec.aggregation {
        RewardAggregation::Last => step_tokens.iter().sum(),
        // Every prefix 1..=k is scored.
        RewardAggregation::Min | RewardAggregation::Product => {
            let mut total = 0;
            let mut acc = 0;
            for t in step_tokens {
                acc += t;
                total += acc;
            }
            total
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use crate::toyworld::fixtures::three_path_policy;
    use crate::toyworld::{sample_solution, Answer};

    fn problem() -> Problem {
        Problem::new("p1", Answer::new("A").unwrap(), three_path_policy(), false).unwrap()
    }

    fn oracle_spec() -> RewardSpec {
        RewardSpec {
            alpha: 1e12,
            eta: 0.0,
            ..RewardSpec::default()
        }
    }

    fn step(problem: &Problem, name: &str) -> StepId {
        problem.policy.state_id(name).expect("state exists")
    }

    #[test]
    fn root_prefix_success_equals_marginal_truth_mass() {
        let p = problem();
        let q = prefix_success_probability(&p, &[]).unwrap();
        assert!((q - 0.85).abs() < 1e-12);
    }

    #[test]
    fn terminal_prefixes_are_certain() {
        let p = problem();
        let t_a = step(&p, "t_a");
        let mid = step(&p, "mid");
        let t_b = step(&p, "t_b");
        assert_eq!(prefix_success_probability(&p, &[t_a]).unwrap(), 1.0);
        assert_eq!(prefix_success_probability(&p, &[mid, t_b]).unwrap(), 0.0);
    }

    #[test]
    fn invalid_prefix_rejected() {
        let p = problem();
        let t_b = step(&p, "t_b");
        // t_b is not a successor of t_b.
        assert!(matches!(
            prefix_success_probability(&p, &[t_b, t_b]),
            Err(RewardError::InvalidPrefix)
        ));
    }

    #[test]
    fn high_alpha_recovers_oracle() {
        let p = problem();
        let score = score_prefix(&oracle_spec(), &p, &[]).unwrap();
        assert!((score - 0.85).abs() < 1e-9);
    }

    #[test]
    fn zero_alpha_is_uninformative() {
        let p = problem();
        let spec = RewardSpec {
            alpha: 0.0,
            eta: 0.0,
            ..RewardSpec::default()
        };
        let mid = step(&p, "mid");
        assert_eq!(score_prefix(&spec, &p, &[]).unwrap(), 0.5);
        assert_eq!(score_prefix(&spec, &p, &[mid]).unwrap(), 0.5);
    }

    #[test]
    fn noise_is_bounded_and_deterministic() {
        let p = problem();
        let spec = RewardSpec {
            alpha: 3.0,
            eta: 0.1,
            seed: 11,
            ..RewardSpec::default()
        };
        let clean = RewardSpec { eta: 0.0, ..spec };
        let mid = step(&p, "mid");
        for prefix in [vec![], vec![mid]] {
            let noisy = score_prefix(&spec, &p, &prefix).unwrap();
            let blend = score_prefix(&clean, &p, &prefix).unwrap();
            assert!((noisy - blend).abs() <= 0.1 + 1e-15);
            assert_eq!(
                noisy.to_bits(),
                score_prefix(&spec, &p, &prefix).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn scores_stay_in_range() {
        let p = problem();
        let mut rng = SimRng::new(5);
        for alpha in [0.0, 0.3, 1.0, 10.0, 1e9] {
            for eta in [0.0, 0.2, 0.5] {
                let spec = RewardSpec {
                    alpha,
                    eta,
                    seed: 3,
                    ..RewardSpec::default()
                };
                for _ in 0..50 {
                    let sol = sample_solution(&p.policy, &mut rng);
                    for end in 1..=sol.steps.len() {
                        let s = score_prefix(&spec, &p, &sol.steps[..end]).unwrap();
                        assert!((0.0..=1.0).contains(&s));
                    }
                }
            }
        }
    }

    #[test]
    fn informative_scores_are_monotone_in_success_probability() {
        let p = problem();
        let mid = step(&p, "mid");
        let t_a = step(&p, "t_a");
        // Q*: [t_a] = 1.0 > [] = 0.85 > [mid] = 0.5.
        for alpha in [0.25, 1.0, 4.0, 100.0] {
            let spec = RewardSpec {
                alpha,
                eta: 0.0,
                ..RewardSpec::default()
            };
            let s_top = score_prefix(&spec, &p, &[t_a]).unwrap();
            let s_root = score_prefix(&spec, &p, &[]).unwrap();
            let s_mid = score_prefix(&spec, &p, &[mid]).unwrap();
            assert!(s_top > s_root && s_root > s_mid, "alpha {alpha}");
        }
    }

    #[test]
    fn solution_scores_honor_aggregation() {
        let p = problem();
        let mid = step(&p, "mid");
        let t_a = step(&p, "t_a");
        let solution = Solution {
            steps: vec![mid, t_a],
            answer: Some(Answer::new("A").unwrap()),
            tokens: 64,
            log_prob: (0.3f64 * 0.5).ln(),
        };
        let spec = oracle_spec();
        let last = score_solution(&spec, &p, &solution).unwrap();
        assert!((last - 1.0).abs() < 1e-9);

        let min_spec = RewardSpec {
            aggregation: RewardAggregation::Min,
            ..spec
        };
        let min = score_solution(&min_spec, &p, &solution).unwrap();
        assert!((min - 0.5).abs() < 1e-9, "min over prefix scores 0.5, 1.0");

        let prod_spec = RewardSpec {
            aggregation: RewardAggregation::Product,
            ..spec
        };
        let prod = score_solution(&prod_spec, &p, &solution).unwrap();
        assert!((prod - 0.5).abs() < 1e-9);

        let truncated = Solution {
            steps: vec![mid],
            answer: None,
            tokens: 32,
            log_prob: 0.3f64.ln(),
        };
        assert!(matches!(
            score_solution(&spec, &p, &truncated),
            Err(RewardError::IncompleteSolution)
        ));
    }

    #[test]
    fn wrong_terminal_scores_zero_under_oracle() {
        let p = problem();
        let mid = step(&p, "mid");
        let t_b = step(&p, "t_b");
        let solution = Solution {
            steps: vec![mid, t_b],
            answer: Some(Answer::new("B").unwrap()),
            tokens: 64,
            log_prob: (0.3f64 * 0.5).ln(),
        };
        let score = score_solution(&oracle_spec(), &p, &solution).unwrap();
        assert!(score < 1e-9);
    }
}
