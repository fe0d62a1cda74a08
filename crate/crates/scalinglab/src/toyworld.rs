//! Synthetic problems and the finite stochastic step policy they run on.
//!
//! A policy is a directed graph of reasoning steps with categorical
//! transition distributions. Every path from the start state reaches a
//! terminal state (which carries an answer) within a bounded depth, so the
//! marginal answer distribution can be computed exactly by enumeration.
//! That exactness is what makes the saturation-limit oracles in
//! `analysis` possible.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SimRng;

/// Maximum answer length in characters.
pub const ANSWER_MAX_LEN: usize = 8;

/// Default token cost of emitting one reasoning step.
pub const DEFAULT_TOKENS_PER_STEP: u64 = 32;

/// Default cap on exact path enumeration.
pub const DEFAULT_PATH_CAP: usize = 1_000_000;

/// A final answer string. Non-empty, at most [`ANSWER_MAX_LEN`] characters.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Answer(String);

impl Answer {
    pub fn new(value: impl Into<String>) -> Result<Self, PolicyError> {
        let value = value.into();
        if value.is_empty() {
            return Err(PolicyError::EmptyAnswer);
        }
        if value.chars().count() > ANSWER_MAX_LEN {
            return Err(PolicyError::AnswerTooLong { answer: value });
        }
        Ok(Self(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Index of one reasoning-step state, in canonical (declaration) order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StepId(u32);

impl StepId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("policy has no states")]
    NoStates,
    #[error("duplicate state `{name}`")]
    DuplicateState { name: String },
    #[error("unknown state `{name}` referenced by `{context}`")]
    UnknownState { name: String, context: String },
    #[error("start state `{name}` is terminal")]
    StartIsTerminal { name: String },
    #[error("terminal state `{name}` has outgoing transitions")]
    TerminalHasTransitions { name: String },
    #[error("non-terminal state `{name}` has no outgoing transitions")]
    MissingTransitions { name: String },
    #[error("transition probability {prob} out of `{name}` is not finite and non-negative")]
    BadProbability { name: String, prob: f64 },
    #[error("outgoing probabilities of `{name}` sum to {sum}, expected 1 within 1e-9")]
    BadProbabilitySum { name: String, sum: f64 },
    #[error("tokens_per_step for `{name}` must be positive")]
    BadTokensPerStep { name: String },
    #[error("max_depth must be positive")]
    BadMaxDepth,
    #[error("param_count must be positive")]
    BadParamCount,
    #[error("cycle reachable from start through `{name}`: some paths never terminate")]
    CycleDetected { name: String },
    #[error("a path of {depth} steps from start exceeds max_depth {max_depth}")]
    DepthExceeded { depth: u32, max_depth: u32 },
    #[error("answer is empty")]
    EmptyAnswer,
    #[error("answer `{answer}` exceeds {ANSWER_MAX_LEN} characters")]
    AnswerTooLong { answer: String },
    #[error("invalid policy JSON: {0}")]
    Json(String),
}

/// Raised when exact enumeration would exceed the configured path cap.
#[derive(Debug, Error)]
#[error("policy has more than {cap} root-to-terminal paths")]
pub struct CapExceeded {
    pub cap: usize,
}

/// Serialized form of a policy. `build` validates and interns it.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDef {
    pub states: Vec<String>,
    pub start: String,
    #[serde(default)]
    pub transitions: BTreeMap<String, Vec<(String, f64)>>,
    #[serde(default)]
    pub terminals: BTreeMap<String, String>,
    #[serde(default)]
    pub tokens_per_step: BTreeMap<String, u64>,
    pub max_depth: u32,
    pub param_count: u64,
}

/// A validated, immutable step policy.
///
/// States are interned as [`StepId`] indices in declaration order; that
/// order is the canonical tie-break order used everywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicySpec {
    state_names: Vec<String>,
    start: StepId,
    /// Outgoing edges per state, empty for terminals.
    transitions: Vec<Vec<(StepId, f64)>>,
    /// Answer per state, `None` for non-terminals.
    terminals: Vec<Option<Answer>>,
    tokens_per_step: Vec<u64>,
    max_depth: u32,
    param_count: u64,
}

impl PolicyDef {
    pub fn build(self) -> Result<PolicySpec, PolicyError> {
        PolicySpec::from_def(self)
    }
}

impl PolicySpec {
    pub fn from_def(def: PolicyDef) -> Result<Self, PolicyError> {
        if def.states.is_empty() {
            return Err(PolicyError::NoStates);
        }
        if def.max_depth == 0 {
            return Err(PolicyError::BadMaxDepth);
        }
        if def.param_count == 0 {
            return Err(PolicyError::BadParamCount);
        }

        let mut index: BTreeMap<&str, StepId> = BTreeMap::new();
        for (i, name) in def.states.iter().enumerate() {
            if index.insert(name, StepId(i as u32)).is_some() {
                return Err(PolicyError::DuplicateState { name: name.clone() });
            }
        }
        let resolve = |name: &str, context: &str| -> Result<StepId, PolicyError> {
            index
                .get(name)
                .copied()
                .ok_or_else(|| PolicyError::UnknownState {
                    name: name.to_string(),
                    context: context.to_string(),
                })
        };

        let start = resolve(&def.start, "start")?;

        let mut terminals: Vec<Option<Answer>> = vec![None; def.states.len()];
        for (name, answer) in &def.terminals {
            let id = resolve(name, "terminals")?;
            terminals[id.index()] = Some(Answer::new(answer.clone())?);
        }
        if terminals[start.index()].is_some() {
            return Err(PolicyError::StartIsTerminal {
                name: def.start.clone(),
            });
        }

        let mut transitions: Vec<Vec<(StepId, f64)>> = vec![Vec::new(); def.states.len()];
        for (name, edges) in &def.transitions {
            let id = resolve(name, "transitions")?;
            if terminals[id.index()].is_some() {
                return Err(PolicyError::TerminalHasTransitions { name: name.clone() });
            }
            let mut out = Vec::with_capacity(edges.len());
            let mut sum = 0.0;
            for (succ, prob) in edges {
                let succ_id = resolve(succ, &format!("transitions of `{name}`"))?;
                if !prob.is_finite() || *prob < 0.0 {
                    return Err(PolicyError::BadProbability {
                        name: name.clone(),
                        prob: *prob,
                    });
                }
                sum += prob;
                out.push((succ_id, *prob));
            }
            if out.is_empty() || (sum - 1.0).abs() > 1e-9 {
                return Err(PolicyError::BadProbabilitySum {
                    name: name.clone(),
                    sum,
                });
            }
            transitions[id.index()] = out;
        }

        for (i, name) in def.states.iter().enumerate() {
            if terminals[i].is_none() && transitions[i].is_empty() {
                return Err(PolicyError::MissingTransitions { name: name.clone() });
            }
        }

        let mut tokens_per_step = vec![DEFAULT_TOKENS_PER_STEP; def.states.len()];
        for (name, tokens) in &def.tokens_per_step {
            let id = resolve(name, "tokens_per_step")?;
            if *tokens == 0 {
                return Err(PolicyError::BadTokensPerStep { name: name.clone() });
            }
            tokens_per_step[id.index()] = *tokens;
        }

        let spec = Self {
            state_names: def.states,
            start,
            transitions,
            terminals,
            tokens_per_step,
            max_depth: def.max_depth,
            param_count: def.param_count,
        };
        spec.check_termination()?;
        Ok(spec)
    }

    /// Cycle detection plus longest-path bound on the subgraph reachable
    /// from start. Guarantees every sampled path terminates within
    /// `max_depth` steps.
    fn check_termination(&self) -> Result<(), PolicyError> {
        const UNSEEN: u8 = 0;
        const OPEN: u8 = 1;
        const DONE: u8 = 2;
        let mut color = vec![UNSEEN; self.state_names.len()];
        // Longest path (in steps) from each state to a terminal.
        let mut height = vec![0u32; self.state_names.len()];
        // Iterative DFS: (state, next edge index).
        let mut stack: Vec<(StepId, usize)> = vec![(self.start, 0)];
        color[self.start.index()] = OPEN;
        while let Some((state, edge)) = stack.pop() {
            let succs = &self.transitions[state.index()];
            if edge < succs.len() {
                stack.push((state, edge + 1));
                let next = succs[edge].0;
                match color[next.index()] {
                    OPEN => {
                        return Err(PolicyError::CycleDetected {
                            name: self.state_names[next.index()].clone(),
                        })
                    }
                    UNSEEN => {
                        color[next.index()] = OPEN;
                        stack.push((next, 0));
                    }
                    _ => {}
                }
            } else {
                color[state.index()] = DONE;
                let h = succs
                    .iter()
                    .map(|(succ, _)| height[succ.index()] + 1)
                    .max()
                    .unwrap_or(0);
                height[state.index()] = h;
            }
        }
        if height[self.start.index()] > self.max_depth {
            return Err(PolicyError::DepthExceeded {
                depth: height[self.start.index()],
                max_depth: self.max_depth,
            });
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self, PolicyError> {
        let def: PolicyDef =
            serde_json::from_str(s).map_err(|e| PolicyError::Json(e.to_string()))?;
        def.build()
    }

    pub fn to_def(&self) -> PolicyDef {
        let name = |id: StepId| self.state_names[id.index()].clone();
        let mut transitions = BTreeMap::new();
        let mut terminals = BTreeMap::new();
        for (i, state_name) in self.state_names.iter().enumerate() {
            if let Some(answer) = &self.terminals[i] {
                terminals.insert(state_name.clone(), answer.as_str().to_string());
            } else {
                transitions.insert(
                    state_name.clone(),
                    self.transitions[i]
                        .iter()
                        .map(|(s, p)| (name(*s), *p))
                        .collect(),
                );
            }
        }
        PolicyDef {
            states: self.state_names.clone(),
            start: name(self.start),
            transitions,
            terminals,
            tokens_per_step: self
                .state_names
                .iter()
                .enumerate()
                .map(|(i, n)| (n.clone(), self.tokens_per_step[i]))
                .collect(),
            max_depth: self.max_depth,
            param_count: self.param_count,
        }
    }

    pub fn start(&self) -> StepId {
        self.start
    }

    pub fn param_count(&self) -> u64 {
        self.param_count
    }

    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    pub fn state_count(&self) -> usize {
        self.state_names.len()
    }

    pub fn state_name(&self, id: StepId) -> &str {
        &self.state_names[id.index()]
    }

    pub fn state_id(&self, name: &str) -> Option<StepId> {
        self.state_names
            .iter()
            .position(|n| n == name)
            .map(|i| StepId(i as u32))
    }

    pub fn is_terminal(&self, id: StepId) -> bool {
        self.terminals[id.index()].is_some()
    }

    pub fn answer(&self, id: StepId) -> Option<&Answer> {
        self.terminals[id.index()].as_ref()
    }

    pub fn successors(&self, id: StepId) -> &[(StepId, f64)] {
        &self.transitions[id.index()]
    }

    pub fn step_tokens(&self, id: StepId) -> u64 {
        self.tokens_per_step[id.index()]
    }

    /// Transition probability of `to` out of `from`, summed over duplicate
    /// edges.
    pub fn transition_prob(&self, from: StepId, to: StepId) -> f64 {
        self.transitions[from.index()]
            .iter()
            .filter(|(s, _)| *s == to)
            .map(|(_, p)| *p)
            .sum()
    }

    /// States reachable from start, in canonical order.
    pub fn reachable_states(&self) -> Vec<StepId> {
        let mut seen = vec![false; self.state_names.len()];
        let mut stack = vec![self.start];
        seen[self.start.index()] = true;
        while let Some(state) = stack.pop() {
            for (succ, _) in &self.transitions[state.index()] {
                if !seen[succ.index()] {
                    seen[succ.index()] = true;
                    stack.push(*succ);
                }
            }
        }
        (0..self.state_names.len() as u32)
            .map(StepId)
            .filter(|s| seen[s.index()])
            .collect()
    }

    /// With a different nominal parameter count; used by the size family.
    fn with_param_count(&self, param_count: u64) -> Self {
        let mut spec = self.clone();
        spec.param_count = param_count;
        spec
    }
}

/// One sampled or enumerated reasoning path.
///
/// `steps` excludes the start state and includes the final (terminal) step
/// when the path completed. `answer` is present iff the last step is
/// terminal; a path cut off at `max_depth` has `answer == None` but still
/// carries its token cost.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub steps: Vec<StepId>,
    pub answer: Option<Answer>,
    pub tokens: u64,
    pub log_prob: f64,
}

impl Solution {
    pub fn is_complete(&self) -> bool {
        self.answer.is_some()
    }
}

/// Draw one path by successive categorical draws from the policy.
pub fn sample_solution(policy: &PolicySpec, rng: &mut SimRng) -> Solution {
    let mut state = policy.start();
    let mut steps = Vec::new();
    let mut tokens = 0u64;
    let mut log_prob = 0.0;
    for _ in 0..policy.max_depth {
        let (next, prob) = draw_transition(policy, state, rng);
        steps.push(next);
        tokens += policy.step_tokens(next);
        log_prob += prob.ln();
        state = next;
        if policy.is_terminal(state) {
            return Solution {
                steps,
                answer: policy.answer(state).cloned(),
                tokens,
                log_prob,
            };
        }
    }
    Solution {
        steps,
        answer: None,
        tokens,
        log_prob,
    }
}

/// One categorical draw over a state's outgoing edges.
pub(crate) fn draw_transition(
    policy: &PolicySpec,
    state: StepId,
    rng: &mut SimRng,
) -> (StepId, f64) {
    let succs = policy.successors(state);
    debug_assert!(!succs.is_empty(), "draw from terminal state");
    let u = rng.next_f64();
    let mut acc = 0.0;
    for (succ, prob) in succs {
        acc += prob;
        if u < acc {
            return (*succ, *prob);
        }
    }
    // Probability sums can fall a hair short of 1; the last edge absorbs it.
    *succs.last().expect("non-empty successors")
}

/// Follow the highest-probability transition at every step.
/// Ties break toward the lowest successor id in canonical order.
pub fn greedy_solution(policy: &PolicySpec) -> Solution {
    let mut state = policy.start();
    let mut steps = Vec::new();
    let mut tokens = 0u64;
    let mut log_prob = 0.0;
    for _ in 0..policy.max_depth {
        let succs = policy.successors(state);
        let mut best = succs[0];
        for &(succ, prob) in &succs[1..] {
            if prob > best.1 || (prob == best.1 && succ < best.0) {
                best = (succ, prob);
            }
        }
        steps.push(best.0);
        tokens += policy.step_tokens(best.0);
        log_prob += best.1.ln();
        state = best.0;
        if policy.is_terminal(state) {
            return Solution {
                steps,
                answer: policy.answer(state).cloned(),
                tokens,
                log_prob,
            };
        }
    }
    Solution {
        steps,
        answer: None,
        tokens,
        log_prob,
    }
}

/// Exhaustively list every root-to-terminal path with its exact probability.
///
/// Paths are emitted in depth-first order following each state's declared
/// edge order. Fails with [`CapExceeded`] once more than `cap` paths exist.
pub fn enumerate_paths(
    policy: &PolicySpec,
    cap: usize,
) -> Result<Vec<(Solution, f64)>, CapExceeded> {
    enumerate_from(policy, policy.start(), cap)
}

/// Enumeration starting below `state` instead of the root.
pub(crate) fn enumerate_from(
    policy: &PolicySpec,
    state: StepId,
    cap: usize,
) -> Result<Vec<(Solution, f64)>, CapExceeded> {
    let mut out = Vec::new();
    let mut prefix: Vec<StepId> = Vec::new();
    dfs(policy, state, 1.0, 0, 0.0, &mut prefix, &mut out, cap)?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    policy: &PolicySpec,
    state: StepId,
    prob: f64,
    tokens: u64,
    log_prob: f64,
    prefix: &mut Vec<StepId>,
    out: &mut Vec<(Solution, f64)>,
    cap: usize,
) -> Result<(), CapExceeded> {
    if policy.is_terminal(state) {
        if out.len() >= cap {
            return Err(CapExceeded { cap });
        }
        out.push((
            Solution {
                steps: prefix.clone(),
                answer: policy.answer(state).cloned(),
                tokens,
                log_prob,
            },
            prob,
        ));
        return Ok(());
    }
    for &(succ, p) in policy.successors(state) {
        prefix.push(succ);
        dfs(
            policy,
            succ,
            prob * p,
            tokens + policy.step_tokens(succ),
            log_prob + p.ln(),
            prefix,
            out,
            cap,
        )?;
        prefix.pop();
    }
    Ok(())
}

/// Exact marginal answer distribution, by enumeration.
pub fn marginal_answer_distribution(
    policy: &PolicySpec,
    cap: usize,
) -> Result<BTreeMap<Answer, f64>, CapExceeded> {
    let mut dist: BTreeMap<Answer, f64> = BTreeMap::new();
    for (solution, prob) in enumerate_paths(policy, cap)? {
        let answer = solution.answer.expect("enumerated paths are complete");
        *dist.entry(answer).or_insert(0.0) += prob;
    }
    Ok(dist)
}

/// One benchmark instance: a policy plus the ground-truth answer.
#[derive(Clone, Debug)]
pub struct Problem {
    pub id: String,
    pub truth: Answer,
    pub policy: PolicySpec,
    /// Declares that the truth answer is intentionally not generatable,
    /// for limit-of-zero checks.
    pub unreachable_truth: bool,
}

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("problem `{id}`: truth `{truth}` is not a reachable terminal answer")]
    TruthUnreachable { id: String, truth: String },
    #[error("problem `{id}`: truth is reachable but flagged unreachable")]
    TruthReachable { id: String },
    #[error("dataset has no problems")]
    EmptyDataset,
    #[error("duplicate problem id `{id}`")]
    DuplicateProblemId { id: String },
    #[error("invalid dataset JSON: {0}")]
    Json(String),
}

/// Serialized form of a problem.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDef {
    pub id: String,
    pub truth: String,
    pub policy: PolicyDef,
    #[serde(default)]
    pub unreachable_truth: bool,
}

impl ProblemDef {
    pub fn build(self) -> Result<Problem, ProblemError> {
        let policy = self.policy.build()?;
        let truth = Answer::new(self.truth).map_err(ProblemError::Policy)?;
        Problem::new(self.id, truth, policy, self.unreachable_truth)
    }
}

impl Problem {
    pub fn new(
        id: impl Into<String>,
        truth: Answer,
        policy: PolicySpec,
        unreachable_truth: bool,
    ) -> Result<Self, ProblemError> {
        let id = id.into();
        let reachable = policy
            .reachable_states()
            .into_iter()
            .any(|s| policy.answer(s) == Some(&truth));
        if !reachable && !unreachable_truth {
            return Err(ProblemError::TruthUnreachable {
                id,
                truth: truth.as_str().to_string(),
            });
        }
        if reachable && unreachable_truth {
            return Err(ProblemError::TruthReachable { id });
        }
        Ok(Self {
            id,
            truth,
            policy,
            unreachable_truth,
        })
    }

    pub fn to_def(&self) -> ProblemDef {
        ProblemDef {
            id: self.id.clone(),
            truth: self.truth.as_str().to_string(),
            policy: self.policy.to_def(),
            unreachable_truth: self.unreachable_truth,
        }
    }
}

/// An ordered list of problems with unique ids.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub problems: Vec<Problem>,
}

impl Dataset {
    pub fn new(problems: Vec<Problem>) -> Result<Self, ProblemError> {
        if problems.is_empty() {
            return Err(ProblemError::EmptyDataset);
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &problems {
            if !seen.insert(p.id.clone()) {
                return Err(ProblemError::DuplicateProblemId { id: p.id.clone() });
            }
        }
        Ok(Self { problems })
    }

    /// Parse a JSON array of problems.
    pub fn from_json_str(s: &str) -> Result<Self, ProblemError> {
        let defs: Vec<ProblemDef> =
            serde_json::from_str(s).map_err(|e| ProblemError::Json(e.to_string()))?;
        Self::new(
            defs.into_iter()
                .map(ProblemDef::build)
                .collect::<Result<_, _>>()?,
        )
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(
            self.problems
                .iter()
                .map(Problem::to_def)
                .collect::<Vec<_>>(),
        )
        .expect("dataset serialization cannot fail")
    }

    pub fn len(&self) -> usize {
        self.problems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Size-quality mapping for emulated model families.
///
/// A policy of nominal size `n` mixes the base transition distribution
/// toward the locally truth-optimal successor with weight
/// `q(n) = 1 - (1 - q0) * (n0 / n)^beta`, clamped to `[0, 1]`, where `n0`
/// is the base policy's parameter count. Larger sizes concentrate more
/// mass on truth-reaching paths. This is a synthetic fixture, not a claim
/// about any particular model family.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FamilyParams {
    pub q0: f64,
    pub beta: f64,
}

impl Default for FamilyParams {
    fn default() -> Self {
        Self {
            q0: 0.55,
            beta: 0.5,
        }
    }
}

impl FamilyParams {
    pub fn mix_weight(&self, base_params: u64, params: u64) -> f64 {
        let ratio = base_params as f64 / params as f64;
        (1.0 - (1.0 - self.q0) * ratio.powf(self.beta)).clamp(0.0, 1.0)
    }
}

/// Probability of eventually answering `truth` from each state.
fn truth_reach_probabilities(policy: &PolicySpec, truth: &Answer) -> Vec<f64> {
    let n = policy.state_count();
    let mut memo: Vec<Option<f64>> = vec![None; n];
    // Reverse postorder via iterative DFS; the validated graph is acyclic.
    fn solve(
        policy: &PolicySpec,
        truth: &Answer,
        state: StepId,
        memo: &mut Vec<Option<f64>>,
    ) -> f64 {
        if let Some(v) = memo[state.index()] {
            return v;
        }
        let v = if policy.is_terminal(state) {
            if policy.answer(state) == Some(truth) {
                1.0
            } else {
                0.0
            }
        } else {
            policy
                .successors(state)
                .iter()
                .map(|&(succ, p)| p * solve(policy, truth, succ, memo))
                .sum()
        };
        memo[state.index()] = Some(v);
        v
    }
    for i in 0..n {
        solve(policy, truth, StepId(i as u32), &mut memo);
    }
    memo.into_iter().map(|v| v.unwrap_or(0.0)).collect()
}

/// Derive one problem per nominal model size from a base problem.
///
/// Each derived policy shares the base state graph; only the transition
/// probabilities and `param_count` change, per [`FamilyParams`].
pub fn make_policy_family(base: &Problem, sizes: &[u64], params: &FamilyParams) -> Vec<Problem> {
    let reach = truth_reach_probabilities(&base.policy, &base.truth);
    sizes
        .iter()
        .map(|&size| {
            let q = params.mix_weight(base.policy.param_count(), size);
            let mut policy = base.policy.with_param_count(size);
            for i in 0..policy.state_count() {
                let succs = policy.transitions[i].clone();
                if succs.is_empty() {
                    continue;
                }
                // Locally truth-optimal successor; canonical tie-break.
                let mut best: Option<(StepId, f64)> = None;
                for &(succ, _) in &succs {
                    let r = reach[succ.index()];
                    match best {
                        None => best = Some((succ, r)),
                        Some((bs, br)) => {
                            if r > br || (r == br && succ < bs) {
                                best = Some((succ, r));
                            }
                        }
                    }
                }
                let (best_succ, best_reach) = best.expect("non-empty successors");
                if best_reach == 0.0 {
                    continue; // no truth-reaching direction below this state
                }
                policy.transitions[i] = succs
                    .into_iter()
                    .map(|(succ, p)| {
                        let bonus = if succ == best_succ { q } else { 0.0 };
                        (succ, (1.0 - q) * p + bonus)
                    })
                    .collect();
            }
            Problem {
                id: base.id.clone(),
                truth: base.truth.clone(),
                policy,
                unreachable_truth: base.unreachable_truth,
            }
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// root ->(0.7) t_a; root ->(0.3) mid; mid ->(0.5) t_a; mid ->(0.5) t_b.
    /// Marginal answers: {A: 0.85, B: 0.15}.
    pub fn three_path_policy() -> PolicySpec {
        PolicyDef {
            states: vec!["root".into(), "mid".into(), "t_a".into(), "t_b".into()],
            start: "root".into(),
            transitions: [
                (
                    "root".to_string(),
                    vec![("t_a".to_string(), 0.7), ("mid".to_string(), 0.3)],
                ),
                (
                    "mid".to_string(),
                    vec![("t_a".to_string(), 0.5), ("t_b".to_string(), 0.5)],
                ),
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
            param_count: 1_000_000,
        }
        .build()
        .expect("fixture is valid")
    }

    /// start -> s1 -> terminal A, all probabilities 1.
    pub fn chain_policy() -> PolicySpec {
        PolicyDef {
            states: vec!["start".into(), "s1".into(), "term".into()],
            start: "start".into(),
            transitions: [
                ("start".to_string(), vec![("s1".to_string(), 1.0)]),
                ("s1".to_string(), vec![("term".to_string(), 1.0)]),
            ]
            .into_iter()
            .collect(),
            terminals: [("term".to_string(), "A".to_string())]
                .into_iter()
                .collect(),
            tokens_per_step: BTreeMap::new(),
            max_depth: 4,
            param_count: 1_000_000,
        }
        .build()
        .expect("fixture is valid")
    }

    /// Two answers with marginals {A: p, B: 1-p}, one step deep.
    pub fn two_answer_policy(p: f64) -> PolicySpec {
        PolicyDef {
            states: vec!["root".into(), "t_a".into(), "t_b".into()],
            start: "root".into(),
            transitions: [(
                "root".to_string(),
                vec![("t_a".to_string(), p), ("t_b".to_string(), 1.0 - p)],
            )]
            .into_iter()
            .collect(),
            terminals: [
                ("t_a".to_string(), "A".to_string()),
                ("t_b".to_string(), "B".to_string()),
            ]
            .into_iter()
            .collect(),
            tokens_per_step: BTreeMap::new(),
            max_depth: 2,
            param_count: 1_000_000,
        }
        .build()
        .expect("fixture is valid")
    }
}
