//! Expansion, materialization and the rollout loop.

use std::collections::HashMap;
use std::sync::Mutex;

use super::tree::{backpropagate, find_best_solution, select, NodeType, SearchNode, SearchTree, TreeStats};
use super::{node_reward, NodeState, SearchConfig, SearchError, DEAD_NODE_REWARD};
use crate::code_model::{FunctionUnit, ProjectSnapshot};
use crate::refiner::{
    build_prompt, make_feedback_message, postprocess, ActionKind, Conversation, GenerateRequest, ModelPool,
    RefinementAction, Role, UsageRecord,
};
use crate::safety::{count_constructs, safety_ratio, SafetyBaseline, SafetyError};
use crate::validation::{compile_score, TestCase, ValidationResult, Validator};

/// Safety ratio of a candidate program.
pub trait SafetyScorer: Send + Sync {
    fn score(&self, program: &ProjectSnapshot, compilable: bool) -> Result<f64, SafetyError>;
}

impl SafetyScorer for SafetyBaseline {
    fn score(&self, program: &ProjectSnapshot, compilable: bool) -> Result<f64, SafetyError> {
        if !compilable {
            return Ok(0.0);
        }
        Ok(safety_ratio(&count_constructs(program)?, self, true))
    }
}

/// Collaborators shared by every search of a run.
#[derive(Clone, Copy)]
pub struct SearchEnv<'a> {
    pub pool: &'a ModelPool,
    pub validator: &'a dyn Validator,
    pub scorer: &'a dyn SafetyScorer,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub best: SearchNode,
    pub found_success: bool,
    pub rollouts_used: usize,
    pub usage: UsageRecord,
    pub tree_stats: TreeStats,
    pub tree: SearchTree,
}

#[derive(Clone)]
struct Evaluation {
    validation: ValidationResult,
    state: NodeState,
}

enum Outcome {
    Dead(String),
    Evaluated {
        body: String,
        program: ProjectSnapshot,
        eval: Evaluation,
    },
}

struct Materialized {
    reply: Option<String>,
    outcome: Outcome,
    usage: UsageRecord,
}

/// Search state for one function.
pub struct SearchSession<'a> {
    env: SearchEnv<'a>,
    unit: &'a FunctionUnit,
    program: &'a ProjectSnapshot,
    config: &'a SearchConfig,
    suite: &'a [TestCase],
    base_prompt: String,
    tree: SearchTree,
    usage: UsageRecord,
    cache: Mutex<HashMap<String, Evaluation>>,
}

impl<'a> SearchSession<'a> {
    /// Creates the Init root. The input program compiles by premise, so the
    /// root's compile score is 1.
    pub fn new(
        env: SearchEnv<'a>,
        unit: &'a FunctionUnit,
        program: &'a ProjectSnapshot,
        config: &'a SearchConfig,
        suite: &'a [TestCase],
    ) -> Result<Self, SearchError> {
        config.validate()?;
        let base_prompt = build_prompt(unit)?;
        let root_state = NodeState {
            c: 1.0,
            s: env.scorer.score(program, true)?,
        };
        let tree = SearchTree::new(Conversation::start(base_prompt.clone()), program.clone(), root_state);
        Ok(Self {
            env,
            unit,
            program,
            config,
            suite,
            base_prompt,
            tree,
            usage: UsageRecord::default(),
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn tree(&self) -> &SearchTree {
        &self.tree
    }

    pub fn usage(&self) -> UsageRecord {
        self.usage
    }

    /// Creates the Init node's Gen placeholders, or materializes an
    /// unmaterialized node. Returns the children created; a node at maximum
    /// depth is materialized but gets none.
    pub fn expand(&mut self, id: usize) -> Result<Vec<usize>, SearchError> {
        let n = self.tree.node(id);
        if n.node_type == NodeType::Success || n.is_dead() {
            return Ok(Vec::new());
        }
        if n.node_type == NodeType::Init {
            if !n.children.is_empty() {
                return Ok(Vec::new());
            }
            return Ok(self.spawn_gen_children());
        }
        if n.materialized {
            return Ok(Vec::new());
        }
        self.materialize(&[id])?;
        Ok(self.tree.node(id).children.clone())
    }

    fn spawn_gen_children(&mut self) -> Vec<usize> {
        let models: Vec<String> = self.env.pool.model_ids().into_iter().map(str::to_string).collect();
        let k = models.len();
        let n = self.config.gen_children;
        let mut ids = Vec::with_capacity(n);
        for (i, model) in models.iter().enumerate() {
            let share = n / k + usize::from(i < n % k);
            for ordinal in 0..share {
                let action = RefinementAction {
                    kind: ActionKind::NoFeedback,
                    model_id: model.clone(),
                };
                let conv = Conversation::start(self.base_prompt.clone());
                let seed = self.config.seed.wrapping_add(ordinal as u64);
                ids.push(
                    self.tree
                        .add_placeholder(SearchTree::ROOT, NodeType::Gen, action, seed, conv),
                );
            }
        }
        ids
    }

    /// Runs the model query and validation for each unmaterialized node in
    /// `ids` and attaches their children. Results are applied in `ids` order.
    fn materialize(&mut self, ids: &[usize]) -> Result<(), SearchError> {
        let pending: Vec<usize> = ids
            .iter()
            .copied()
            .filter(|&i| !self.tree.node(i).materialized)
            .collect();
        let results: Vec<Result<Materialized, SearchError>> = if self.config.parallel && pending.len() > 1 {
            let this = &*self;
            std::thread::scope(|s| {
                let handles: Vec<_> = pending.iter().map(|&i| s.spawn(move || this.compute(i))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("materialization thread panicked"))
                    .collect()
            })
        } else {
            pending.iter().map(|&i| self.compute(i)).collect()
        };
        for (id, r) in pending.into_iter().zip(results) {
            let m = r?;
            self.apply(id, m)?;
        }
        Ok(())
    }

    fn compute(&self, id: usize) -> Result<Materialized, SearchError> {
        let node = self.tree.node(id);
        let model_id = node.model_id().expect("non-root nodes carry an action");
        let generation = self.env.pool.generate(&GenerateRequest {
            function: &self.unit.id,
            node: id,
            model_id,
            conversation: &node.conversation,
            seed: node.seed,
        })?;
        let usage = generation.usage;
        let reply = match generation.outcome {
            Ok(text) => text,
            Err(e) => {
                return Ok(Materialized {
                    reply: None,
                    outcome: Outcome::Dead(e.to_string()),
                    usage,
                })
            }
        };
        let body = match postprocess(&reply) {
            Ok(b) => b,
            Err(e) => {
                return Ok(Materialized {
                    reply: Some(reply),
                    outcome: Outcome::Dead(e.to_string()),
                    usage,
                })
            }
        };
        let program = match self.program.substitute(&self.unit.id, &body) {
            Ok(p) => p,
            Err(e) => {
                return Ok(Materialized {
                    reply: Some(reply),
                    outcome: Outcome::Dead(e.to_string()),
                    usage,
                })
            }
        };
        let eval = self.evaluate(&body, &program)?;
        Ok(Materialized {
            reply: Some(reply),
            outcome: Outcome::Evaluated { body, program, eval },
            usage,
        })
    }

    fn evaluate(&self, body: &str, program: &ProjectSnapshot) -> Result<Evaluation, SearchError> {
        if let Some(e) = self.cache.lock().expect("cache poisoned").get(body) {
            return Ok(e.clone());
        }
        let validation = self.env.validator.validate(program, self.suite)?;
        let state = NodeState {
            c: compile_score(&validation.compile),
            s: self.env.scorer.score(program, validation.compile.success)?,
        };
        let e = Evaluation { validation, state };
        self.cache
            .lock()
            .expect("cache poisoned")
            .insert(body.to_string(), e.clone());
        Ok(e)
    }

    fn apply(&mut self, id: usize, m: Materialized) -> Result<(), SearchError> {
        self.usage += m.usage;
        let parent_state = {
            let parent = self.tree.node(id).parent.expect("non-root node has a parent");
            self.tree
                .node(parent)
                .state()
                .expect("parent of a materialized node is evaluated")
        };
        let w = self.config.reward_weight;
        let max_depth = self.config.max_depth;
        let fix_children = self.config.fix_children;
        let base_seed = self.config.seed;
        let unit_name = self.unit.name.clone();

        let node = self.tree.node_mut(id);
        node.materialized = true;
        if let Some(reply) = m.reply {
            node.conversation = node.conversation.extended(Role::Assistant, reply);
        }
        let (body, program, eval) = match m.outcome {
            Outcome::Dead(reason) => {
                tracing::debug!(node = id, %reason, "dead node");
                node.dead = Some(reason);
                node.edge_reward = DEAD_NODE_REWARD;
                return Ok(());
            }
            Outcome::Evaluated { body, program, eval } => (body, program, eval),
        };
        node.edge_reward = node_reward(parent_state, eval.state, w);
        node.compile_score = Some(eval.state.c);
        node.safety = Some(eval.state.s);
        node.body = Some(body);
        node.program = Some(program);
        let passed = eval.validation.passed();
        node.validation = Some(eval.validation);
        let depth = node.depth;
        if depth >= max_depth {
            return Ok(());
        }
        if passed {
            self.tree.add_success(id);
        } else if depth + 1 < max_depth {
            let node = self.tree.node(id);
            let feedback = make_feedback_message(&unit_name, node.validation.as_ref().expect("just set"))?;
            let conv = node.conversation.extended(Role::User, feedback);
            let model_id = node.model_id().expect("non-root nodes carry an action").to_string();
            for j in 0..fix_children {
                let action = RefinementAction {
                    kind: ActionKind::WithFeedback,
                    model_id: model_id.clone(),
                };
                let seed = base_seed.wrapping_add(j as u64);
                self.tree.add_placeholder(id, NodeType::Fix, action, seed, conv.clone());
            }
        }
        Ok(())
    }

    /// Greedy descent from `leaf`: materializes all children of the current
    /// node and moves to the one with the highest edge reward, until a
    /// Success or dead node or maximum depth is reached.
    pub fn simulate(&mut self, leaf: usize) -> Result<Vec<usize>, SearchError> {
        let mut path = Vec::new();
        let mut cur = leaf;
        loop {
            let n = self.tree.node(cur);
            if n.node_type == NodeType::Success
                || n.is_dead()
                || n.depth >= self.config.max_depth
                || n.children.is_empty()
            {
                break;
            }
            let children = n.children.clone();
            self.materialize(&children)?;
            let mut best = children[0];
            for &c in &children[1..] {
                if self.tree.node(c).edge_reward > self.tree.node(best).edge_reward {
                    best = c;
                }
            }
            path.push(best);
            cur = best;
        }
        Ok(path)
    }

    /// One select, expand, simulate and backpropagate cycle.
    pub fn rollout(&mut self) -> Result<(), SearchError> {
        let mut path = select(&self.tree, self.config);
        let leaf = *path.last().expect("path holds the root");
        let was_materialized = self.tree.node(leaf).materialized;
        let created = self.expand(leaf)?;
        if !was_materialized || !created.is_empty() {
            path.extend(self.simulate(leaf)?);
        }
        backpropagate(&mut self.tree, &path);
        Ok(())
    }

    fn has_perfect_success(&self) -> bool {
        self.tree
            .nodes()
            .iter()
            .any(|n| n.node_type == NodeType::Success && n.safety.is_some_and(|s| s >= 1.0))
    }

    pub fn finish(self, rollouts_used: usize) -> SearchResult {
        let best_id = find_best_solution(&self.tree);
        let best = self.tree.node(best_id).clone();
        SearchResult {
            found_success: best.node_type == NodeType::Success,
            best,
            rollouts_used,
            usage: self.usage,
            tree_stats: self.tree.stats(),
            tree: self.tree,
        }
    }
}

/// Runs `config.num_rollouts` rollouts for `unit` against `program` and
/// returns the best Success node, or the root when none was found.
pub fn mcts_search(
    env: SearchEnv<'_>,
    unit: &FunctionUnit,
    program: &ProjectSnapshot,
    config: &SearchConfig,
    suite: &[TestCase],
) -> Result<SearchResult, SearchError> {
    let mut session = SearchSession::new(env, unit, program, config, suite)?;
    let mut used = 0;
    for _ in 0..config.num_rollouts {
        session.rollout()?;
        used += 1;
        if config.early_exit && session.has_perfect_success() {
            break;
        }
    }
    let result = session.finish(used);
    tracing::info!(
        function = %unit.id,
        found_success = result.found_success,
        safety = result.best.safety,
        nodes = result.tree.len(),
        queries = result.usage.queries,
        "search finished"
    );
    Ok(result)
}
