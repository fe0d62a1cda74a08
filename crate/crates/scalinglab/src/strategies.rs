//! Sampling-based candidate generation and answer-selection rules.
//!
//! Incomplete (truncated) candidates never carry votes but their token
//! cost is still paid by the caller's budget accounting, which is exactly
//! what makes low-effective-vote strategies measurably expensive.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::rng::SimRng;
use crate::toyworld::{sample_solution, Answer, PolicySpec, Solution};

/// Result of a (weighted) vote over candidate solutions.
#[derive(Clone, Debug, PartialEq)]
pub struct VoteOutcome {
    /// Argmax of `tally`; ties break toward the canonically smallest answer.
    pub winner: Option<Answer>,
    /// Vote count (majority) or total weight (weighted) per answer.
    pub tally: BTreeMap<Answer, f64>,
    /// True iff at least two answers share the maximum tally.
    pub tie: bool,
    /// Number of complete solutions that contributed votes.
    pub effective_votes: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VoteError {
    #[error("no solutions given")]
    EmptyInput,
    #[error("solutions and weights have different lengths ({solutions} vs {weights})")]
    LengthMismatch { solutions: usize, weights: usize },
    #[error("all solutions are incomplete")]
    NoCompleteSolutions,
}

/// Draw `n` i.i.d. solutions from the policy, preserving draw order.
pub fn sample_n(policy: &PolicySpec, n: usize, rng: &mut SimRng) -> Vec<Solution> {
    (0..n).map(|_| sample_solution(policy, rng)).collect()
}

fn outcome_from_tally(tally: BTreeMap<Answer, f64>, effective_votes: usize) -> VoteOutcome {
    debug_assert!(!tally.is_empty());
    let max = tally.values().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut at_max = tally.iter().filter(|(_, v)| **v == max);
    let winner = at_max.next().map(|(a, _)| a.clone());
    let tie = at_max.next().is_some();
    VoteOutcome {
        winner,
        tally,
        tie,
        effective_votes,
    }
}

/// Most frequent answer among the complete solutions.
pub fn majority_vote(solutions: &[Solution]) -> Result<VoteOutcome, VoteError> {
    if solutions.is_empty() {
        return Err(VoteError::EmptyInput);
    }
    let mut tally: BTreeMap<Answer, f64> = BTreeMap::new();
    let mut effective = 0usize;
    for solution in solutions {
        if let Some(answer) = &solution.answer {
            *tally.entry(answer.clone()).or_insert(0.0) += 1.0;
            effective += 1;
        }
    }
    if tally.is_empty() {
        return Err(VoteError::NoCompleteSolutions);
    }
    Ok(outcome_from_tally(tally, effective))
}

/// Answer with the largest total weight among the complete solutions.
pub fn weighted_majority_vote(
    solutions: &[Solution],
    weights: &[f64],
) -> Result<VoteOutcome, VoteError> {
    if solutions.is_empty() {
        return Err(VoteError::EmptyInput);
    }
    if solutions.len() != weights.len() {
        return Err(VoteError::LengthMismatch {
            solutions: solutions.len(),
            weights: weights.len(),
        });
    }
    let mut tally: BTreeMap<Answer, f64> = BTreeMap::new();
    let mut effective = 0usize;
    for (solution, weight) in solutions.iter().zip(weights) {
        if let Some(answer) = &solution.answer {
            *tally.entry(answer.clone()).or_insert(0.0) += weight;
            effective += 1;
        }
    }
    if tally.is_empty() {
        return Err(VoteError::NoCompleteSolutions);
    }
    Ok(outcome_from_tally(tally, effective))
}

/// The complete solution with the highest weight; ties keep the earliest.
pub fn best_of_n<'a>(
    solutions: &'a [Solution],
    weights: &[f64],
) -> Result<&'a Solution, VoteError> {
    if solutions.is_empty() {
        return Err(VoteError::EmptyInput);
    }
    if solutions.len() != weights.len() {
        return Err(VoteError::LengthMismatch {
            solutions: solutions.len(),
            weights: weights.len(),
        });
    }
    let mut best: Option<(&Solution, f64)> = None;
    for (solution, weight) in solutions.iter().zip(weights) {
        if solution.is_complete() {
            match best {
                Some((_, best_weight)) if *weight <= best_weight => {}
                _ => best = Some((solution, *weight)),
            }
        }
    }
    best.map(|(s, _)| s).ok_or(VoteError::NoCompleteSolutions)
}
