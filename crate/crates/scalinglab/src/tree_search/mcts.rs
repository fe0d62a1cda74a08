//! Monte Carlo tree search guided by the process reward model.
//!
//! Selection descends by UCT from the root until it reaches a node that
//! has not been expanded; that node is expanded with a batch of sampled
//! children, each child is evaluated by the reward model, and every
//! evaluation is backpropagated from the expanded node to the root. The
//! expansion budget counts created children, so the number of harvested
//! complete solutions never exceeds it. Terminal nodes are retired from
//! selection at creation; once every path below the root is retired the
//! search stops early.

use serde::{Deserialize, Serialize};

use crate::accounting::{BudgetReport, CostModel};
use crate::reward::{score_prefix, score_solution_weight_from_scores, RewardError, RewardSpec};
use crate::rng::SimRng;
use crate::toyworld::{draw_transition, Problem, Solution, StepId};
use crate::tree_search::SearchOutput;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MctsConfig {
    /// Exploration constant in the UCT value.
    #[serde(default = "default_exploration_c")]
    pub exploration_c: f64,
    /// Children created when expanding the root.
    #[serde(default = "default_root_children")]
    pub root_children: usize,
    /// Children created when expanding any other node.
    #[serde(default = "default_nonroot_children")]
    pub nonroot_children: usize,
    /// Total number of child creations (and reward evaluations) allowed.
    pub total_expansions: usize,
}

fn default_exploration_c() -> f64 {
    1.0
}

fn default_root_children() -> usize {
    8
}

fn default_nonroot_children() -> usize {
    2
}

impl MctsConfig {
    pub fn new(total_expansions: usize) -> Self {
        Self {
            exploration_c: default_exploration_c(),
            root_children: default_root_children(),
            nonroot_children: default_nonroot_children(),
            total_expansions,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.exploration_c.is_finite()
            && self.exploration_c >= 0.0
            && self.root_children >= 1
            && self.nonroot_children >= 1
            && self.total_expansions >= 1
    }
}

/// One node of the search tree.
#[derive(Clone, Debug)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    /// Step this node emits; `None` for the root (the question itself).
    pub step: Option<StepId>,
    pub depth: u32,
    /// Reward-model evaluation of the path ending here; `None` for root.
    pub reward: Option<f64>,
    pub visit_count: u64,
    pub quality: f64,
    pub terminal: bool,
    pub children: Vec<usize>,
    /// Cumulative token cost of the path ending here.
    pub tokens: u64,
    /// Cumulative log-probability of the path ending here.
    pub log_prob: f64,
    expanded: bool,
    /// No further expansion possible anywhere below (or at) this node.
    closed: bool,
}

impl TreeNode {
    /// A fresh, unvisited node. Terminal/reward/cost fields start empty.
    pub fn new(id: usize, parent: Option<usize>, step: Option<StepId>, depth: u32) -> Self {
        Self {
            id,
            parent,
            step,
            depth,
            reward: None,
            visit_count: 0,
            quality: 0.0,
            terminal: false,
            children: Vec::new(),
            tokens: 0,
            log_prob: 0.0,
            expanded: false,
            closed: false,
        }
    }
}

/// One reward evaluation, recorded for replay checks: `value` was
/// backpropagated along the chain from `terminus` to the root.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EvalEvent {
    pub terminus: usize,
    pub value: f64,
}

/// Search result plus the full tree and evaluation log.
#[derive(Clone, Debug)]
pub struct MctsOutcome {
    pub solutions: Vec<Solution>,
    pub weights: Vec<f64>,
    pub report: BudgetReport,
    pub nodes: Vec<TreeNode>,
    pub events: Vec<EvalEvent>,
}

impl MctsOutcome {
    pub fn into_search_output(self) -> SearchOutput {
        SearchOutput {
            solutions: self.solutions,
            weights: self.weights,
            report: self.report,
        }
    }
}

/// Upper confidence bound for trees.
pub fn uct_value(q: f64, n_parent: u64, n_s: u64, c: f64) -> f64 {
    debug_assert!(n_parent >= 1 && n_s >= 1);
    q + c * ((n_parent as f64).ln() / n_s as f64).sqrt()
}

/// Visit-count increment and running-mean quality update for one node.
pub fn backprop_node(node: &mut TreeNode, value: f64) {
    node.visit_count += 1;
    let n = node.visit_count as f64;
    node.quality = ((n - 1.0) * node.quality + value) / n;
}

/// Backpropagate one evaluation along a leaf-to-root chain of node ids.
pub fn backpropagate(nodes: &mut [TreeNode], terminus: usize, value: f64) {
    let mut cursor = Some(terminus);
    while let Some(id) = cursor {
        backprop_node(&mut nodes[id], value);
        cursor = nodes[id].parent;
    }
}

/// Serialize a search tree for debugging and replay tooling.
pub fn tree_dump(nodes: &[TreeNode], problem: &Problem) -> serde_json::Value {
    let dumped: Vec<serde_json::Value> = nodes
        .iter()
        .map(|node| {
            serde_json::json!({
                "id": node.id,
                "parent": node.parent,
                "step": node.step.map(|s| problem.policy.state_name(s).to_string()),
                "depth": node.depth,
                "reward": node.reward,
                "n": node.visit_count,
                "q": node.quality,
                "terminal": node.terminal,
            })
        })
        .collect();
    serde_json::Value::Array(dumped)
}

fn path_steps(nodes: &[TreeNode], id: usize) -> Vec<StepId> {
    let mut steps = Vec::new();
    let mut cursor = Some(id);
    while let Some(i) = cursor {
        if let Some(step) = nodes[i].step {
            steps.push(step);
        }
        cursor = nodes[i].parent;
    }
    steps.reverse();
    steps
}

fn path_scores(nodes: &[TreeNode], id: usize) -> Vec<f64> {
    let mut scores = Vec::new();
    let mut cursor = Some(id);
    while let Some(i) = cursor {
        if let Some(r) = nodes[i].reward {
            scores.push(r);
        }
        cursor = nodes[i].parent;
    }
    scores.reverse();
    scores
}

/// Walk up from `from`, closing every ancestor whose children are all
/// closed.
fn propagate_closed(nodes: &mut [TreeNode], from: usize) {
    let mut cursor = Some(from);
    while let Some(id) = cursor {
        let all_closed =
            !nodes[id].children.is_empty() && nodes[id].children.iter().all(|c| nodes[*c].closed);
        if !all_closed {
            break;
        }
        nodes[id].closed = true;
        cursor = nodes[id].parent;
    }
}

/// Select the next expansion site, or `None` when the tree is saturated.
fn select(nodes: &[TreeNode], exploration_c: f64) -> Option<usize> {
    let mut id = 0usize;
    if nodes[id].closed {
        return None;
    }
    loop {
        let node = &nodes[id];
        if !node.expanded {
            return Some(id);
        }
        // Unvisited children first (in sampling order), then best UCT.
        let open: Vec<usize> = node
            .children
            .iter()
            .copied()
            .filter(|c| !nodes[*c].closed)
            .collect();
        debug_assert!(
            !open.is_empty(),
            "expanded non-closed node has an open child"
        );
        id = match open.iter().find(|c| nodes[**c].visit_count == 0) {
            Some(fresh) => *fresh,
            None => {
                let mut best = open[0];
                let mut best_value = uct_value(
                    nodes[best].quality,
                    node.visit_count,
                    nodes[best].visit_count,
                    exploration_c,
                );
                for &child in &open[1..] {
                    let value = uct_value(
                        nodes[child].quality,
                        node.visit_count,
                        nodes[child].visit_count,
                        exploration_c,
                    );
                    if value > best_value {
                        best = child;
                        best_value = value;
                    }
                }
                best
            }
        };
    }
}

/// Run MCTS and harvest every complete solution found in the tree.
pub fn mcts(
    problem: &Problem,
    reward: &RewardSpec,
    config: &MctsConfig,
    rng: &mut SimRng,
    cost: &CostModel,
) -> Result<MctsOutcome, RewardError> {
    debug_assert!(config.is_valid());
    let policy = &problem.policy;
    let mut report = BudgetReport::new(policy.param_count(), cost);
    let mut nodes = vec![TreeNode::new(0, None, None, 0)];
    let mut events: Vec<EvalEvent> = Vec::new();
    let mut terminal_ids: Vec<usize> = Vec::new();
    let mut created = 0usize;

    while created < config.total_expansions {
        let Some(site) = select(&nodes, config.exploration_c) else {
            break; // saturated: every path already ends at a terminal
        };
        let width = if site == 0 {
            config.root_children
        } else {
            config.nonroot_children
        };
        let width = width.min(config.total_expansions - created);
        let site_state = nodes[site].step.unwrap_or_else(|| policy.start());
        for sibling in 0..width {
            let (step, prob) = draw_transition(policy, site_state, rng);
            let id = nodes.len();
            let terminal = policy.is_terminal(step);
            let tokens = nodes[site].tokens + policy.step_tokens(step);
            // Sequence-level accounting: each branch pays for its full
            // candidate path. The first child inherits the prefix the
            // parent already paid for; later siblings pay a fresh copy.
            report.add_policy_tokens(policy.step_tokens(step));
            if sibling > 0 {
                report.add_policy_tokens(nodes[site].tokens);
            }
            let mut child = TreeNode::new(id, Some(site), Some(step), nodes[site].depth + 1);
            child.terminal = terminal;
            child.closed = terminal;
            child.tokens = tokens;
            child.log_prob = nodes[site].log_prob + prob.ln();
            nodes.push(child);
            nodes[site].children.push(id);
            created += 1;

            let steps = path_steps(&nodes, id);
            let value = score_prefix(reward, problem, &steps)?;
            report.add_reward_tokens(tokens);
            nodes[id].reward = Some(value);
            backpropagate(&mut nodes, site, value);
            events.push(EvalEvent {
                terminus: site,
                value,
            });
            if terminal {
                terminal_ids.push(id);
            }
        }
        nodes[site].expanded = true;
        propagate_closed(&mut nodes, site);
    }

    let mut solutions = Vec::with_capacity(terminal_ids.len());
    let mut weights = Vec::with_capacity(terminal_ids.len());
    for id in terminal_ids {
        let node = &nodes[id];
        let steps = path_steps(&nodes, id);
        let state = node.step.expect("terminal nodes carry a step");
        solutions.push(Solution {
            steps,
            answer: policy.answer(state).cloned(),
            tokens: node.tokens,
            log_prob: node.log_prob,
        });
        weights.push(score_solution_weight_from_scores(
            reward.aggregation,
            &path_scores(&nodes, id),
        ));
    }
    Ok(MctsOutcome {
        solutions,
        weights,
        report,
        nodes,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toyworld::fixtures::{three_path_policy, two_answer_policy};
    use crate::toyworld::Answer;

    fn problem() -> Problem {
        Problem::new("p", Answer::new("A").unwrap(), three_path_policy(), false).unwrap()
    }

    #[test]
    fn uct_matches_hand_evaluation() {
        let v = uct_value(0.5, 8, 2, 1.0);
        assert!((v - 1.519_666_990_168_809).abs() < 1e-12);
        assert_eq!(uct_value(0.7, 8, 2, 0.0), 0.7);
        assert_eq!(uct_value(0.7, 1, 1, 1.0), 0.7);
    }

    fn bare_node(visit_count: u64, quality: f64) -> TreeNode {
        let mut node = TreeNode::new(0, None, None, 0);
        node.visit_count = visit_count;
        node.quality = quality;
        node
    }

    #[test]
    fn backprop_is_a_running_mean() {
        let mut node = bare_node(1, 0.7);
        backprop_node(&mut node, 0.3);
        assert_eq!(node.visit_count, 2);
        assert_eq!(node.quality, 0.5);

        let mut fresh = bare_node(0, 0.0);
        backprop_node(&mut fresh, 0.9);
        assert_eq!(fresh.visit_count, 1);
        assert_eq!(fresh.quality, 0.9);

        let mut acc = bare_node(0, 0.0);
        for v in [0.2, 0.4, 0.9] {
            backprop_node(&mut acc, v);
        }
        assert_eq!(acc.visit_count, 3);
        assert!((acc.quality - 0.5).abs() < 1e-15);
    }

    #[test]
    fn depth_one_policy_harvests_every_expansion() {
        let policy = two_answer_policy(0.6);
        let problem = Problem::new("p", Answer::new("A").unwrap(), policy, false).unwrap();
        let config = MctsConfig {
            root_children: 4,
            total_expansions: 4,
            ..MctsConfig::new(4)
        };
        let out = mcts(
            &problem,
            &RewardSpec::default(),
            &config,
            &mut SimRng::new(3),
            &CostModel::default(),
        )
        .unwrap();
        assert_eq!(out.solutions.len(), 4);
        assert!(out.solutions.iter().all(|s| s.steps.len() == 1));
        assert_eq!(out.nodes[0].visit_count, 4);
    }

    #[test]
    fn saturated_tree_stops_early() {
        let policy = two_answer_policy(0.6);
        let problem = Problem::new("p", Answer::new("A").unwrap(), policy, false).unwrap();
        let config = MctsConfig {
            root_children: 4,
            total_expansions: 64,
            ..MctsConfig::new(64)
        };
        let out = mcts(
            &problem,
            &RewardSpec::default(),
            &config,
            &mut SimRng::new(3),
            &CostModel::default(),
        )
        .unwrap();
        // Depth-one tree saturates after the root expansion.
        assert_eq!(out.solutions.len(), 4);
        assert_eq!(out.events.len(), 4);
    }

    #[test]
    fn visit_counts_equal_routed_evaluations() {
        let problem = problem();
        for seed in 0..10 {
            let config = MctsConfig {
                root_children: 4,
                total_expansions: 32,
                ..MctsConfig::new(32)
            };
            let out = mcts(
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
            assert_eq!(out.nodes[0].visit_count as usize, out.events.len());
            assert!(out.solutions.len() <= config.total_expansions);
            let harvested: u64 = out.solutions.iter().map(|s| s.tokens).sum();
            assert!(out.report.policy_tokens >= harvested);
        }
    }

    #[test]
    fn replay_reproduces_counts_and_means() {
        let problem = problem();
        let config = MctsConfig {
            root_children: 8,
            total_expansions: 64,
            ..MctsConfig::new(64)
        };
        let out = mcts(
            &problem,
            &RewardSpec {
                alpha: 1.0,
                eta: 0.2,
                seed: 5,
                ..RewardSpec::default()
            },
            &config,
            &mut SimRng::new(11),
            &CostModel::default(),
        )
        .unwrap();
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); out.nodes.len()];
        for event in &out.events {
            let mut cursor = Some(event.terminus);
            while let Some(id) = cursor {
                values[id].push(event.value);
                cursor = out.nodes[id].parent;
            }
        }
        for node in &out.nodes {
            assert_eq!(node.visit_count as usize, values[node.id].len());
            if !values[node.id].is_empty() {
                let mean: f64 = values[node.id].iter().sum::<f64>() / values[node.id].len() as f64;
                assert!((node.quality - mean).abs() <= 1e-12);
            }
            // Visit counts decompose into child subtrees plus the
            // evaluations whose backprop path started at this node.
            let own_terminus = out.events.iter().filter(|e| e.terminus == node.id).count() as u64;
            let child_sum: u64 = node
                .children
                .iter()
                .map(|c| out.nodes[*c].visit_count)
                .sum();
            assert_eq!(node.visit_count, child_sum + own_terminus);
        }
    }

    #[test]
    fn dump_is_valid_json_with_one_entry_per_node() {
        let problem = problem();
        let out = mcts(
            &problem,
            &RewardSpec::default(),
            &MctsConfig::new(16),
            &mut SimRng::new(1),
            &CostModel::default(),
        )
        .unwrap();
        let dump = tree_dump(&out.nodes, &problem);
        assert_eq!(dump.as_array().unwrap().len(), out.nodes.len());
        assert!(dump[0]["step"].is_null());
    }
}
