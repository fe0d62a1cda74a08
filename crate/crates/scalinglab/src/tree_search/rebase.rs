//! Reward-balanced search.
//!
//! Grows a solution tree depth by depth. Every node at the current depth
//! is scored by the reward model; completed solutions are retired and
//! deducted from the sampling budget; the remaining budget is split
//! across the open nodes proportionally to the softmax of their scores at
//! a balance temperature. The search ends once the budget is zero (or the
//! depth limit fills the rest with truncated candidates), so it returns
//! exactly the requested number of candidates.

use serde::{Deserialize, Serialize};

use crate::accounting::{BudgetReport, CostModel};
use crate::reward::{score_solution_weight_from_scores, RewardError, RewardSpec};
use crate::rng::SimRng;
use crate::toyworld::{draw_transition, Problem, Solution, StepId};
use crate::tree_search::SearchOutput;

/// Integer apportionment rule used to turn fractional expansion widths
/// into whole children.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    #[default]
    LargestRemainder,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RebaseConfig {
    /// Number of candidate solutions to return.
    pub target_n: usize,
    /// Softmax temperature for budget balancing.
    #[serde(default = "default_balance_temperature")]
    pub balance_temperature: f64,
    /// Depth at which still-open paths are truncated.
    pub max_depth: u32,
    #[serde(default)]
    pub rounding: Rounding,
}

fn default_balance_temperature() -> f64 {
    0.1
}

impl RebaseConfig {
    pub fn new(target_n: usize, max_depth: u32) -> Self {
        Self {
            target_n,
            balance_temperature: default_balance_temperature(),
            max_depth,
            rounding: Rounding::LargestRemainder,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.target_n >= 1
            && self.max_depth >= 1
            && self.balance_temperature.is_finite()
            && self.balance_temperature > 0.0
    }
}

/// Split an integer budget across nodes by softmax of their rewards.
///
/// Largest-remainder apportionment: floor every raw share, then hand the
/// leftover units to the largest fractional remainders (ties to the lower
/// index). The returned widths always sum to exactly `budget`, and a node
/// with a strictly higher reward never receives fewer units than one with
/// a lower reward.
pub fn allocate_widths(rewards: &[f64], budget: usize, balance_temperature: f64) -> Vec<usize> {
    debug_assert!(!rewards.is_empty());
    debug_assert!(balance_temperature > 0.0);
    let max = rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = rewards
        .iter()
        .map(|r| ((r - max) / balance_temperature).exp())
        .collect();
    let total: f64 = exps.iter().sum();
    let raw: Vec<f64> = exps.iter().map(|e| budget as f64 * e / total).collect();

    let mut widths: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut assigned: usize = widths.iter().sum();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| {
        let frac_a = raw[a] - raw[a].floor();
        let frac_b = raw[b] - raw[b].floor();
        frac_b
            .partial_cmp(&frac_a)
            .expect("finite remainders")
            .then(a.cmp(&b))
    });
    while assigned < budget {
        for &i in &order {
            if assigned == budget {
                break;
            }
            widths[i] += 1;
            assigned += 1;
        }
    }
    widths
}

struct FrontierNode {
    steps: Vec<StepId>,
    state: StepId,
    tokens: u64,
    log_prob: f64,
    /// Reward score of each prefix along the path, one per depth.
    scores: Vec<f64>,
}

impl FrontierNode {
    fn into_solution(self, problem: &Problem, complete: bool) -> (Solution, Vec<f64>) {
        let answer = if complete {
            problem.policy.answer(self.state).cloned()
        } else {
            None
        };
        (
            Solution {
                steps: self.steps,
                answer,
                tokens: self.tokens,
                log_prob: self.log_prob,
            },
            self.scores,
        )
    }
}

/// Run reward-balanced search, returning exactly `config.target_n`
/// candidates plus the run's token/FLOPs accounting.
pub fn rebase(
    problem: &Problem,
    reward: &RewardSpec,
    config: &RebaseConfig,
    rng: &mut SimRng,
    cost: &CostModel,
) -> Result<SearchOutput, RewardError> {
    debug_assert!(config.is_valid());
    let policy = &problem.policy;
    let mut report = BudgetReport::new(policy.param_count(), cost);

    // Sequence-level accounting: every branch pays for its full candidate
    // path. The first child of a node inherits the prefix the parent
    // already paid for; each additional sibling pays a fresh copy.
    let expand = |parent_steps: &[StepId],
                  parent_state: StepId,
                  parent_tokens: u64,
                  parent_log_prob: f64,
                  parent_scores: &[f64],
                  sibling: usize,
                  rng: &mut SimRng,
                  report: &mut BudgetReport| {
        let (next, prob) = draw_transition(policy, parent_state, rng);
        let mut steps = parent_steps.to_vec();
        steps.push(next);
        let tokens = parent_tokens + policy.step_tokens(next);
        report.add_policy_tokens(policy.step_tokens(next));
        if sibling > 0 {
            report.add_policy_tokens(parent_tokens);
        }
        FrontierNode {
            steps,
            state: next,
            tokens,
            log_prob: parent_log_prob + prob.ln(),
            scores: parent_scores.to_vec(),
        }
    };

    // Initialization: target_n independent first steps.
    let mut frontier: Vec<FrontierNode> = (0..config.target_n)
        .map(|i| expand(&[], policy.start(), 0, 0.0, &[], i, rng, &mut report))
        .collect();
    let mut budget = config.target_n;
    let mut finished: Vec<(Solution, Vec<f64>)> = Vec::new();

    for depth in 1..=config.max_depth {
        // Reward assignment for every node at this depth.
        for node in &mut frontier {
            let score = crate::reward::score_prefix(reward, problem, &node.steps)?;
            report.add_reward_tokens(node.tokens);
            node.scores.push(score);
        }

        let (done, open): (Vec<FrontierNode>, Vec<FrontierNode>) = frontier
            .into_iter()
            .partition(|n| policy.is_terminal(n.state));
        budget -= done.len();
        finished.extend(done.into_iter().map(|n| n.into_solution(problem, true)));

        if budget == 0 {
            frontier = Vec::new();
            break;
        }
        debug_assert_eq!(
            open.len(),
            budget,
            "frontier size tracks the remaining budget"
        );
        if depth == config.max_depth {
            finished.extend(open.into_iter().map(|n| n.into_solution(problem, false)));
            frontier = Vec::new();
            break;
        }

        let scores: Vec<f64> = open
            .iter()
            .map(|n| *n.scores.last().expect("scored"))
            .collect();
        let widths = allocate_widths(&scores, budget, config.balance_temperature);
        let mut next_frontier = Vec::with_capacity(budget);
        for (node, width) in open.iter().zip(&widths) {
            for sibling in 0..*width {
                next_frontier.push(expand(
                    &node.steps,
                    node.state,
                    node.tokens,
                    node.log_prob,
                    &node.scores,
                    sibling,
                    rng,
                    &mut report,
                ));
            }
        }
        frontier = next_frontier;
    }
    debug_assert!(frontier.is_empty());
    debug_assert_eq!(finished.len(), config.target_n);

    let mut solutions = Vec::with_capacity(finished.len());
    let mut weights = Vec::with_capacity(finished.len());
    for (solution, scores) in finished {
        weights.push(score_solution_weight_from_scores(
            reward.aggregation,
            &scores,
        ));
        solutions.push(solution);
    }
    Ok(SearchOutput {
        solutions,
        weights,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toyworld::fixtures::{three_path_policy, two_answer_policy};
    use crate::toyworld::{Answer, PolicyDef};
    use std::collections::BTreeMap;

    #[test]
    fn widths_split_symmetrically() {
        assert_eq!(allocate_widths(&[0.5, 0.5], 8, 1.0), vec![4, 4]);
    }

    #[test]
    fn widths_match_hand_softmax() {
        // softmax(1,0) = e/(e+1) = 0.7311 -> raw [7.311, 2.689] -> [7, 3].
        assert_eq!(allocate_widths(&[1.0, 0.0], 10, 1.0), vec![7, 3]);
    }

    #[test]
    fn widths_concentrate_at_low_temperature() {
        // exp(9)/exp(5)/exp(1) softmax -> raw [9.8169, 0.1798, 0.0033].
        assert_eq!(allocate_widths(&[0.9, 0.5, 0.1], 10, 0.1), vec![10, 0, 0]);
    }

    #[test]
    fn remainder_ties_go_to_lower_index() {
        assert_eq!(allocate_widths(&[0.5, 0.5], 5, 1.0), vec![3, 2]);
    }

    #[test]
    fn zero_budget_allocates_nothing() {
        assert_eq!(allocate_widths(&[0.3, 0.9], 0, 0.5), vec![0, 0]);
    }

    fn problem() -> Problem {
        Problem::new("p", Answer::new("A").unwrap(), three_path_policy(), false).unwrap()
    }

    #[test]
    fn depth_one_policy_finishes_at_initialization() {
        let policy = two_answer_policy(0.5);
        let problem = Problem::new("p", Answer::new("A").unwrap(), policy, false).unwrap();
        let config = RebaseConfig::new(4, 4);
        let out = rebase(
            &problem,
            &RewardSpec::default(),
            &config,
            &mut SimRng::new(1),
            &CostModel::default(),
        )
        .unwrap();
        assert_eq!(out.solutions.len(), 4);
        assert!(out.solutions.iter().all(Solution::is_complete));
        // Initialization samples exactly 4 single-step paths.
        assert_eq!(out.report.policy_tokens, 4 * 32);
    }

    #[test]
    fn oracle_reward_routes_all_budget_to_truth() {
        // Two-level tree: both arms still open after depth 1, so the
        // budget reallocation at depth 1 decides everything.
        let def = PolicyDef {
            states: vec![
                "root".into(),
                "g".into(),
                "b".into(),
                "t_a".into(),
                "t_b".into(),
            ],
            start: "root".into(),
            transitions: [
                (
                    "root".to_string(),
                    vec![("g".to_string(), 0.5), ("b".to_string(), 0.5)],
                ),
                ("g".to_string(), vec![("t_a".to_string(), 1.0)]),
                ("b".to_string(), vec![("t_b".to_string(), 1.0)]),
            ]
            .into_iter()
            .collect(),
            terminals: [
                ("t_a".to_string(), "A".to_string()),
                ("t_b".to_string(), "B".to_string()),
            ]
            .into_iter()
            .collect(),
            tokens_per_step: BTreeMap::new(),
            max_depth: 4,
            param_count: 1,
        };
        let problem =
            Problem::new("p", Answer::new("A").unwrap(), def.build().unwrap(), false).unwrap();
        let reward = RewardSpec {
            alpha: 1e9,
            eta: 0.0,
            ..RewardSpec::default()
        };
        let config = RebaseConfig::new(16, 8);
        let out = rebase(
            &problem,
            &reward,
            &config,
            &mut SimRng::new(12),
            &CostModel::default(),
        )
        .unwrap();
        assert_eq!(out.solutions.len(), 16);
        assert!(out
            .solutions
            .iter()
            .all(|s| s.answer.as_ref().map(Answer::as_str) == Some("A")));
    }

    #[test]
    fn returns_exactly_n_with_full_token_accounting() {
        let problem = problem();
        for seed in 0..20 {
            let config = RebaseConfig::new(16, 4);
            let out = rebase(
                &problem,
                &RewardSpec {
                    alpha: 2.0,
                    eta: 0.1,
                    seed,
                    ..RewardSpec::default()
                },
                &config,
                &mut SimRng::new(seed),
                &CostModel::default(),
            )
            .unwrap();
            assert_eq!(out.solutions.len(), 16);
            let returned: u64 = out.solutions.iter().map(|s| s.tokens).sum();
            assert!(out.report.policy_tokens >= returned);
        }
    }

    #[test]
    fn depth_exhaustion_truncates_remaining_budget() {
        let problem = problem();
        // max_depth 1 cannot complete the root -> mid -> terminal paths.
        let config = RebaseConfig::new(8, 1);
        let out = rebase(
            &problem,
            &RewardSpec::default(),
            &config,
            &mut SimRng::new(4),
            &CostModel::default(),
        )
        .unwrap();
        assert_eq!(out.solutions.len(), 8);
        assert!(out.solutions.iter().any(|s| !s.is_complete()));
        // Truncated paths still carry their sampled token cost.
        assert!(out.solutions.iter().all(|s| s.tokens > 0));
    }
}
