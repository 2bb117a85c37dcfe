//! Monte Carlo tree search over refinement candidates for one function.

pub mod scripted;
mod search;
mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::search::{mcts_search, SafetyScorer, SearchEnv, SearchResult, SearchSession};
pub use self::tree::{
    backpropagate, exhausted, find_best_solution, select, NodeDump, NodeType, SearchNode, SearchTree, TreeStats,
};
use crate::code_model::CodeModelError;
use crate::refiner::RefinerError;
use crate::safety::SafetyError;
use crate::validation::ValidationError;

/// Edge reward given to nodes whose query or extraction failed.
pub const DEAD_NODE_REWARD: f64 = -1.0;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Refiner(#[from] RefinerError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Safety(#[from] SafetyError),
    #[error(transparent)]
    CodeModel(#[from] CodeModelError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub num_rollouts: usize,
    pub uct_c: f64,
    /// Maximum node depth `D`; the root is at depth 0.
    pub max_depth: usize,
    /// Initial candidates, split across the model pool in pool order.
    pub gen_children: usize,
    /// Repair candidates attached to each failed validation.
    pub fix_children: usize,
    pub reward_weight: f64,
    pub seed: u64,
    /// Stop once a Success node with safety ratio 1 exists.
    pub early_exit: bool,
    /// Materialize sibling nodes concurrently during simulation.
    pub parallel: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            num_rollouts: 10,
            uct_c: 1.5,
            max_depth: 5,
            gen_children: 4,
            fix_children: 2,
            reward_weight: 2.0,
            seed: 0,
            early_exit: false,
            parallel: false,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::Config(m.to_string()));
        if self.num_rollouts < 1 {
            return bad("num_rollouts must be at least 1");
        }
        if self.max_depth < 1 {
            return bad("max_depth must be at least 1");
        }
        if self.gen_children < 1 {
            return bad("gen_children must be at least 1");
        }
        if !(self.reward_weight >= 0.0 && self.reward_weight.is_finite()) {
            return bad("reward_weight must be a finite non-negative number");
        }
        if !(self.uct_c >= 0.0 && self.uct_c.is_finite()) {
            return bad("uct_c must be a finite non-negative number");
        }
        Ok(())
    }
}

/// Compile score and safety ratio of a node's program.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub c: f64,
    pub s: f64,
}

/// `(C_curr − C_prev) + w · (S_curr − S_prev)`.
pub fn node_reward(prev: NodeState, curr: NodeState, w: f64) -> f64 {
    (curr.c - prev.c) + w * (curr.s - prev.s)
}

/// Mean reward plus exploration bonus; unvisited children score `+∞`.
pub fn uct_score(q_value: f64, visits: u64, parent_visits: u64, uct_c: f64) -> f64 {
    if visits == 0 {
        return f64::INFINITY;
    }
    let n = visits as f64;
    let explore = if uct_c == 0.0 {
        0.0
    } else {
        uct_c * ((parent_visits.max(1) as f64).ln() / n).sqrt()
    };
    q_value / n + explore
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uct_examples() {
        assert_eq!(uct_score(3.0, 0, 10, 1.5), f64::INFINITY);
        let v = uct_score(1.0, 2, 10, 1.5);
        assert!((v - 2.1095).abs() < 1e-4, "{v}");
        assert_eq!(uct_score(1.0, 4, 10, 0.0), 0.25);
    }

    #[test]
    fn reward_examples() {
        let st = |c, s| NodeState { c, s };
        assert_eq!(node_reward(st(0.5, 0.3), st(0.5, 0.3), 2.0), 0.0);
        assert!((node_reward(st(0.25, 0.0), st(1.0, 0.4), 2.0) - 1.55).abs() < 1e-12);
        assert!((node_reward(st(1.0, 0.4), st(0.5, 0.2), 2.0) + 0.9).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(SearchConfig::default().validate().is_ok());
        for c in [
            SearchConfig {
                num_rollouts: 0,
                ..Default::default()
            },
            SearchConfig {
                max_depth: 0,
                ..Default::default()
            },
            SearchConfig {
                gen_children: 0,
                ..Default::default()
            },
            SearchConfig {
                reward_weight: -1.0,
                ..Default::default()
            },
            SearchConfig {
                uct_c: f64::NAN,
                ..Default::default()
            },
        ] {
            assert!(c.validate().is_err());
        }
    }
}
