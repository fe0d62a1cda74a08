//! Simulation lab for inference-time scaling experiments.
//!
//! The lab runs inference strategies (greedy decoding, repeated sampling
//! with majority / weighted / best-of-n selection, reward-balanced tree
//! search, and Monte Carlo tree search) against finite step policies whose
//! answer distributions are exactly enumerable. Exact enumeration provides
//! oracle saturation limits for the voting strategies, so convergence
//! behavior, FLOPs accounting, Pareto frontiers, and compute-optimal
//! configuration selection can all be checked against closed-form ground
//! truth at desk scale.

pub mod accounting;
pub mod analysis;
pub mod harness;
pub mod reward;
pub mod rng;
pub mod runner;
pub mod strategies;
pub mod toyworld;
pub mod tree_search;
