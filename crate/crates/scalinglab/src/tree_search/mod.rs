//! Tree-search inference strategies: reward-balanced search and MCTS.

mod mcts;
mod rebase;

pub use mcts::{
    backprop_node, backpropagate, mcts, tree_dump, uct_value, EvalEvent, MctsConfig, MctsOutcome,
    TreeNode,
};
pub use rebase::{allocate_widths, rebase, RebaseConfig, Rounding};

use crate::accounting::BudgetReport;
use crate::toyworld::Solution;

/// Candidate set produced by a search, with solution-level vote weights
/// derived from the reward scores collected during the search itself.
#[derive(Clone, Debug)]
pub struct SearchOutput {
    pub solutions: Vec<Solution>,
    pub weights: Vec<f64>,
    pub report: BudgetReport,
}
