//! Token and FLOPs accounting for inference runs.
//!
//! Costs follow the standard decoder estimate of 2 FLOPs per parameter
//! per processed token, applied independently to the policy and the
//! reward model. Whether reward-model FLOPs count toward a run's budget
//! is a first-class switch, since both conventions appear in practice.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default FLOPs per parameter per token.
pub const DEFAULT_FLOPS_PER_PARAM_TOKEN: f64 = 2.0;

/// FLOPs for one model processing `tokens` tokens.
pub fn inference_flops(params: u64, tokens: u64) -> f64 {
    DEFAULT_FLOPS_PER_PARAM_TOKEN * params as f64 * tokens as f64
}

/// Run-level accounting switches shared by all strategies.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostModel {
    /// Nominal parameter count of the reward model.
    pub reward_params: u64,
    /// Whether reward-model FLOPs count toward the budget.
    pub include_reward_flops: bool,
    /// Cost coefficient; 2 is the standard inference estimate.
    pub flops_per_param_token: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            reward_params: 1,
            include_reward_flops: true,
            flops_per_param_token: DEFAULT_FLOPS_PER_PARAM_TOKEN,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AccountingError {
    #[error("cannot merge zero reports")]
    EmptyInput,
    #[error("cannot merge reports with different model parameters")]
    ParamMismatch,
}

/// Token counters and FLOPs for one inference run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub policy_params: u64,
    pub policy_tokens: u64,
    pub reward_params: u64,
    pub reward_tokens: u64,
    pub include_reward_flops: bool,
}

impl BudgetReport {
    pub fn new(policy_params: u64, cost: &CostModel) -> Self {
        Self {
            policy_params,
            policy_tokens: 0,
            reward_params: cost.reward_params,
            reward_tokens: 0,
            include_reward_flops: cost.include_reward_flops,
        }
    }

    pub fn add_policy_tokens(&mut self, tokens: u64) {
        self.policy_tokens += tokens;
    }

    pub fn add_reward_tokens(&mut self, tokens: u64) {
        self.reward_tokens += tokens;
    }

    /// Total FLOPs at the default coefficient of 2.
    pub fn flops(&self) -> f64 {
        self.flops_with_coefficient(DEFAULT_FLOPS_PER_PARAM_TOKEN)
    }

    pub fn flops_with_coefficient(&self, flops_per_param_token: f64) -> f64 {
        let policy = flops_per_param_token * self.policy_params as f64 * self.policy_tokens as f64;
        let reward = if self.include_reward_flops {
            flops_per_param_token * self.reward_params as f64 * self.reward_tokens as f64
        } else {
            0.0
        };
        policy + reward
    }
}

/// Sum token counters across reports of the same configuration.
pub fn merge(reports: &[BudgetReport]) -> Result<BudgetReport, AccountingError> {
    let first = reports.first().ok_or(AccountingError::EmptyInput)?;
    let mut merged = *first;
    merged.policy_tokens = 0;
    merged.reward_tokens = 0;
    for report in reports {
        if report.policy_params != first.policy_params
            || report.reward_params != first.reward_params
            || report.include_reward_flops != first.include_reward_flops
        {
            return Err(AccountingError::ParamMismatch);
        }
        merged.policy_tokens += report.policy_tokens;
        merged.reward_tokens += report.reward_tokens;
    }
    Ok(merged)
}
