//! Arena-backed search tree and the tree-only phases of a rollout.

use serde::{Deserialize, Serialize};

use super::{uct_score, NodeState, SearchConfig};
use crate::code_model::ProjectSnapshot;
use crate::refiner::{ActionKind, Conversation, RefinementAction};
use crate::validation::ValidationResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeType {
    Init,
    Gen,
    Fix,
    Success,
}

#[derive(Clone, Debug)]
pub struct SearchNode {
    /// Creation index; the root is 0.
    pub id: usize,
    pub parent: Option<usize>,
    pub node_type: NodeType,
    pub depth: usize,
    pub action: Option<RefinementAction>,
    pub seed: u64,
    /// Before materialization, the conversation to send; afterwards it also
    /// holds the model's reply.
    pub conversation: Conversation,
    pub body: Option<String>,
    pub program: Option<ProjectSnapshot>,
    pub materialized: bool,
    /// Reason the node's query or extraction failed.
    pub dead: Option<String>,
    pub validation: Option<ValidationResult>,
    pub compile_score: Option<f64>,
    pub safety: Option<f64>,
    pub edge_reward: f64,
    pub q_value: f64,
    pub visits: u64,
    pub children: Vec<usize>,
}

impl SearchNode {
    pub fn is_dead(&self) -> bool {
        self.dead.is_some()
    }

    pub fn state(&self) -> Option<NodeState> {
        Some(NodeState {
            c: self.compile_score?,
            s: self.safety?,
        })
    }

    pub fn model_id(&self) -> Option<&str> {
        self.action.as_ref().map(|a| a.model_id.as_str())
    }
}

#[derive(Clone, Debug)]
pub struct SearchTree {
    nodes: Vec<SearchNode>,
}

impl SearchTree {
    /// A tree holding only the Init root.
    pub fn new(conversation: Conversation, program: ProjectSnapshot, root_state: NodeState) -> Self {
        Self {
            nodes: vec![SearchNode {
                id: 0,
                parent: None,
                node_type: NodeType::Init,
                depth: 0,
                action: None,
                seed: 0,
                conversation,
                body: None,
                program: Some(program),
                materialized: true,
                dead: None,
                validation: None,
                compile_score: Some(root_state.c),
                safety: Some(root_state.s),
                edge_reward: 0.0,
                q_value: 0.0,
                visits: 0,
                children: Vec::new(),
            }],
        }
    }

    pub const ROOT: usize = 0;

    pub fn root(&self) -> &SearchNode {
        &self.nodes[Self::ROOT]
    }

    pub fn node(&self, id: usize) -> &SearchNode {
        &self.nodes[id]
    }

    pub fn node_mut(&mut self, id: usize) -> &mut SearchNode {
        &mut self.nodes[id]
    }

    pub fn nodes(&self) -> &[SearchNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Appends an unmaterialized child and returns its id.
    pub fn add_placeholder(
        &mut self,
        parent: usize,
        node_type: NodeType,
        action: RefinementAction,
        seed: u64,
        conversation: Conversation,
    ) -> usize {
        let id = self.nodes.len();
        let depth = self.nodes[parent].depth + 1;
        self.nodes.push(SearchNode {
            id,
            parent: Some(parent),
            node_type,
            depth,
            action: Some(action),
            seed,
            conversation,
            body: None,
            program: None,
            materialized: false,
            dead: None,
            validation: None,
            compile_score: None,
            safety: None,
            edge_reward: 0.0,
            q_value: 0.0,
            visits: 0,
            children: Vec::new(),
        });
        self.nodes[parent].children.push(id);
        id
    }

    /// Appends a Success leaf that repeats the parent's validated state.
    pub fn add_success(&mut self, parent: usize) -> usize {
        let p = &self.nodes[parent];
        let id = self.nodes.len();
        let node = SearchNode {
            id,
            parent: Some(parent),
            node_type: NodeType::Success,
            depth: p.depth + 1,
            action: None,
            seed: p.seed,
            conversation: p.conversation.clone(),
            body: p.body.clone(),
            program: p.program.clone(),
            materialized: true,
            dead: None,
            validation: p.validation.clone(),
            compile_score: p.compile_score,
            safety: p.safety,
            edge_reward: 0.0,
            q_value: 0.0,
            visits: 0,
            children: Vec::new(),
        };
        self.nodes.push(node);
        self.nodes[parent].children.push(id);
        id
    }

    /// Node ids from the root down to `id`.
    pub fn path_to(&self, id: usize) -> Vec<usize> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    pub fn stats(&self) -> TreeStats {
        let mut s = TreeStats::default();
        for n in &self.nodes {
            match n.node_type {
                NodeType::Init => s.init += 1,
                NodeType::Gen => s.gen += 1,
                NodeType::Fix => s.fix += 1,
                NodeType::Success => s.success += 1,
            }
            s.dead += usize::from(n.is_dead());
            s.materialized += usize::from(n.materialized);
            s.max_depth = s.max_depth.max(n.depth);
        }
        s
    }

    /// Flat structured export of every node.
    pub fn dump(&self) -> Vec<NodeDump> {
        self.nodes
            .iter()
            .map(|n| NodeDump {
                id: n.id,
                parent: n.parent,
                node_type: n.node_type,
                depth: n.depth,
                model_id: n.model_id().map(str::to_string),
                action: n.action.as_ref().map(|a| a.kind),
                seed: n.seed,
                materialized: n.materialized,
                dead: n.dead.clone(),
                compile_errors: n.validation.as_ref().map(|v| v.compile.error_count),
                tests_failed: n
                    .validation
                    .as_ref()
                    .and_then(|v| v.tests.as_ref())
                    .map(|t| t.iter().filter(|o| !o.passed).count()),
                compile_score: n.compile_score,
                safety: n.safety,
                edge_reward: n.edge_reward,
                q_value: n.q_value,
                visits: n.visits,
                children: n.children.clone(),
                body: n.body.clone(),
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeStats {
    pub init: usize,
    pub gen: usize,
    pub fix: usize,
    pub success: usize,
    pub dead: usize,
    pub materialized: usize,
    pub max_depth: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeDump {
    pub id: usize,
    pub parent: Option<usize>,
    pub node_type: NodeType,
    pub depth: usize,
    pub model_id: Option<String>,
    pub action: Option<ActionKind>,
    pub seed: u64,
    pub materialized: bool,
    pub dead: Option<String>,
    pub compile_errors: Option<usize>,
    pub tests_failed: Option<usize>,
    pub compile_score: Option<f64>,
    pub safety: Option<f64>,
    pub edge_reward: f64,
    pub q_value: f64,
    pub visits: u64,
    pub children: Vec<usize>,
    pub body: Option<String>,
}

/// Marks nodes whose subtree has nothing left to materialize: Success,
/// dead and childless leaves, and nodes whose children are all exhausted.
pub fn exhausted(tree: &SearchTree, config: &SearchConfig) -> Vec<bool> {
    let mut out = vec![false; tree.len()];
    for n in tree.nodes().iter().rev() {
        out[n.id] = n.materialized
            && (n.node_type == NodeType::Success
                || n.is_dead()
                || n.depth >= config.max_depth
                || (n.children.is_empty() && n.node_type != NodeType::Init)
                || (!n.children.is_empty() && n.children.iter().all(|&c| out[c])));
    }
    out
}

/// Descends by maximum UCT score until reaching a node that is unexpanded,
/// unmaterialized, terminal or at maximum depth. Dead children and visited
/// exhausted subtrees are never chosen; ties go to the earlier child.
pub fn select(tree: &SearchTree, config: &SearchConfig) -> Vec<usize> {
    let done = exhausted(tree, config);
    let mut path = vec![SearchTree::ROOT];
    let mut cur = SearchTree::ROOT;
    loop {
        let n = tree.node(cur);
        if n.node_type == NodeType::Success || n.is_dead() || !n.materialized || n.depth >= config.max_depth {
            break;
        }
        let mut best: Option<(usize, f64)> = None;
        for &c in &n.children {
            let child = tree.node(c);
            if child.is_dead() || (child.visits > 0 && done[c]) {
                continue;
            }
            let score = uct_score(child.q_value, child.visits, n.visits, config.uct_c);
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((c, score));
            }
        }
        match best {
            Some((c, _)) => {
                path.push(c);
                cur = c;
            }
            None => break,
        }
    }
    path
}

/// Adds one visit to every node on `path` and credits each with the sum of
/// edge rewards below it on the path.
pub fn backpropagate(tree: &mut SearchTree, path: &[usize]) {
    let mut below = 0.0;
    for &id in path.iter().rev() {
        let n = tree.node_mut(id);
        n.visits += 1;
        n.q_value += below;
        below += n.edge_reward;
    }
}

/// The Success node with the highest safety ratio, preferring shallower then
/// earlier nodes; the root when no Success node exists.
pub fn find_best_solution(tree: &SearchTree) -> usize {
    let mut best: Option<&SearchNode> = None;
    for n in tree.nodes().iter().filter(|n| n.node_type == NodeType::Success) {
        let s = n.safety.unwrap_or(0.0);
        let better = match best {
            None => true,
            Some(b) => {
                let bs = b.safety.unwrap_or(0.0);
                s > bs || (s == bs && n.depth < b.depth)
            }
        };
        if better {
            best = Some(n);
        }
    }
    best.map_or(SearchTree::ROOT, |n| n.id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn tree() -> SearchTree {
        let program = ProjectSnapshot {
            files: BTreeMap::new(),
            function_index: BTreeMap::new(),
            baseline: true,
        };
        SearchTree::new(Conversation::start("p"), program, NodeState { c: 1.0, s: 0.0 })
    }

    fn action() -> RefinementAction {
        RefinementAction {
            kind: ActionKind::NoFeedback,
            model_id: "m".into(),
        }
    }

    fn child(t: &mut SearchTree, parent: usize) -> usize {
        let id = t.add_placeholder(parent, NodeType::Gen, action(), 0, Conversation::start("p"));
        let n = t.node_mut(id);
        n.materialized = true;
        n.compile_score = Some(1.0);
        n.safety = Some(0.0);
        id
    }

    #[test]
    fn select_root_only() {
        assert_eq!(select(&tree(), &SearchConfig::default()), vec![0]);
    }

    #[test]
    fn select_prefers_unvisited() {
        let mut t = tree();
        let a = child(&mut t, 0);
        let b = child(&mut t, 0);
        t.add_placeholder(a, NodeType::Fix, action(), 0, Conversation::start("p"));
        t.node_mut(0).visits = 1;
        t.node_mut(a).visits = 1;
        t.node_mut(a).q_value = 100.0;
        assert_eq!(select(&t, &SearchConfig::default()), vec![0, b]);
    }

    #[test]
    fn select_exploits_at_zero_c() {
        let mut t = tree();
        let a = child(&mut t, 0);
        let b = child(&mut t, 0);
        for p in [a, b] {
            t.add_placeholder(p, NodeType::Fix, action(), 0, Conversation::start("p"));
        }
        t.node_mut(0).visits = 4;
        for (id, q) in [(a, 0.2), (b, 1.0)] {
            t.node_mut(id).visits = 2;
            t.node_mut(id).q_value = q;
        }
        let cfg = SearchConfig {
            uct_c: 0.0,
            ..Default::default()
        };
        assert_eq!(select(&t, &cfg)[..2], [0, b]);
    }

    #[test]
    fn select_skips_dead_and_stops_at_placeholder() {
        let mut t = tree();
        let a = child(&mut t, 0);
        let b = t.add_placeholder(0, NodeType::Gen, action(), 1, Conversation::start("p"));
        t.node_mut(a).dead = Some("no delimiters".into());
        assert_eq!(select(&t, &SearchConfig::default()), vec![0, b]);
        t.node_mut(b).dead = Some("x".into());
        t.node_mut(b).materialized = true;
        assert_eq!(select(&t, &SearchConfig::default()), vec![0]);
    }

    #[test]
    fn visited_exhausted_subtrees_are_skipped() {
        let mut t = tree();
        let a = child(&mut t, 0);
        let b = child(&mut t, 0);
        let s = t.add_success(a);
        t.add_placeholder(b, NodeType::Fix, action(), 0, Conversation::start("p"));
        let cfg = SearchConfig::default();
        let done = exhausted(&t, &cfg);
        assert!(done[s] && done[a] && !done[b] && !done[0]);
        t.node_mut(0).visits = 2;
        t.node_mut(a).visits = 1;
        t.node_mut(a).q_value = 50.0;
        t.node_mut(b).visits = 1;
        assert_eq!(select(&t, &cfg)[1], b);
        t.node_mut(a).visits = 0;
        assert_eq!(select(&t, &cfg), vec![0, a, s], "unvisited children still come first");
    }

    #[test]
    fn backpropagate_hand_trace() {
        let mut t = tree();
        let a = child(&mut t, 0);
        let b = child(&mut t, a);
        t.node_mut(a).edge_reward = 0.5;
        t.node_mut(b).edge_reward = 0.3;
        backpropagate(&mut t, &[0, a, b]);
        assert!((t.node(0).q_value - 0.8).abs() < 1e-12);
        assert!((t.node(a).q_value - 0.3).abs() < 1e-12);
        assert_eq!(t.node(b).q_value, 0.0);
        assert!([0, a, b].iter().all(|&i| t.node(i).visits == 1));

        let mut t = tree();
        backpropagate(&mut t, &[0]);
        assert_eq!((t.node(0).visits, t.node(0).q_value), (1, 0.0));
    }

    #[test]
    fn best_solution_rules() {
        let mut t = tree();
        assert_eq!(find_best_solution(&t), 0);
        let a = child(&mut t, 0);
        let a2 = child(&mut t, a);
        let b = child(&mut t, 0);
        t.node_mut(a2).safety = Some(0.5);
        t.node_mut(b).safety = Some(0.5);
        let deep = t.add_success(a2);
        let shallow = t.add_success(b);
        assert_eq!(find_best_solution(&t), shallow);
        t.node_mut(deep).safety = Some(0.7);
        assert_eq!(find_best_solution(&t), deep);
        let c = child(&mut t, a);
        t.node_mut(c).safety = Some(0.7);
        t.add_success(c);
        assert_eq!(find_best_solution(&t), deep, "equal depth keeps the earlier node");
        let stats = t.stats();
        assert_eq!((stats.success, stats.gen, stats.max_depth), (3, 4, 3));
    }
}
