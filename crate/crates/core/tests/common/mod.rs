//! Scripted search universes shared by the engine and acceptance tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use saferefine::code_model::ProjectSnapshot;
use saferefine::mcts::scripted::{ScriptedScorer, ScriptedValidator, Verdict};
use saferefine::mcts::{mcts_search, NodeType, SearchConfig, SearchEnv, SearchResult, SearchTree};
use saferefine::pipeline::{ConfigFile, RunConfig, RunPaths};
use saferefine::refiner::{wrap, Completion, Conversation, FnProvider, ModelPool, ProviderError, Role};

pub const UNIT: &str = "src/main.rs::target";

pub fn toy_program() -> ProjectSnapshot {
    let mut files = BTreeMap::new();
    files.insert(
        "src/main.rs".to_string(),
        "fn target() {}\n\nfn main() {\n    target();\n}\n".to_string(),
    );
    ProjectSnapshot::from_files(files).expect("toy program parses")
}

/// Candidate body whose comment records the action path that produced it.
pub fn body_for(path: &str) -> String {
    format!("fn target() {{ /* {path} */ }}")
}

fn path_of(text: &str) -> Option<&str> {
    let start = text.find("/* ")? + 3;
    let end = text[start..].find(" */")? + start;
    Some(&text[start..end])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Outcome {
    /// Reply without delimiters.
    Malformed,
    CompileErrors(usize),
    /// Compiles, fails a test, and scores `s`.
    TestFailure(f64),
    Pass(f64),
}

/// A fully enumerated space of action sequences with scripted outcomes.
/// Gen candidates are named `model#seed`; a Fix candidate appends `/seed`
/// to its parent's name.
#[derive(Clone, Debug)]
pub struct Universe {
    pub models: Vec<String>,
    pub gen_children: usize,
    pub fix_children: usize,
    pub max_depth: usize,
    pub root_s: f64,
    pub outcomes: BTreeMap<String, Outcome>,
}

impl Universe {
    pub fn config(&self, num_rollouts: usize) -> SearchConfig {
        SearchConfig {
            num_rollouts,
            uct_c: 1.5,
            max_depth: self.max_depth,
            gen_children: self.gen_children,
            fix_children: self.fix_children,
            reward_weight: 2.0,
            seed: 0,
            early_exit: false,
            parallel: false,
        }
    }

    /// Gen candidate names in creation order.
    pub fn gen_paths(&self) -> Vec<String> {
        let k = self.models.len();
        let mut out = Vec::new();
        for (i, m) in self.models.iter().enumerate() {
            let share = self.gen_children / k + usize::from(i < self.gen_children % k);
            for s in 0..share {
                out.push(format!("{m}#{s}"));
            }
        }
        out
    }

    /// Whether a node named `path` at `depth` receives Fix children.
    pub fn has_fix_children(&self, path: &str, depth: usize) -> bool {
        matches!(self.outcomes[path], Outcome::CompileErrors(_) | Outcome::TestFailure(_)) && depth + 1 < self.max_depth
    }

    pub fn fix_paths(&self, path: &str) -> Vec<String> {
        (0..self.fix_children).map(|s| format!("{path}/{s}")).collect()
    }

    /// Random universe. Every reachable name gets an outcome.
    pub fn random(rng: &mut StdRng, models: usize, branching: usize, max_depth: usize) -> Self {
        let mut u = Universe {
            models: ["alpha", "beta", "gamma"][..models]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            gen_children: branching,
            fix_children: branching,
            max_depth,
            root_s: 0.0,
            outcomes: BTreeMap::new(),
        };
        let mut frontier: Vec<(String, usize)> = u.gen_paths().into_iter().map(|p| (p, 1)).collect();
        while let Some((path, depth)) = frontier.pop() {
            let roll: f64 = rng.random_range(0.0..1.0);
            let s = f64::from(rng.random_range(0..=10u32)) / 10.0;
            let outcome = if roll < 0.08 {
                Outcome::Malformed
            } else if roll < 0.40 {
                Outcome::CompileErrors(rng.random_range(1..=4))
            } else if roll < 0.65 {
                Outcome::TestFailure(s)
            } else {
                Outcome::Pass(s)
            };
            u.outcomes.insert(path.clone(), outcome);
            if u.has_fix_children(&path, depth) {
                frontier.extend(u.fix_paths(&path).into_iter().map(|p| (p, depth + 1)));
            }
        }
        u
    }

    /// Makes the global optimum attainable from every Gen candidate by
    /// turning one random leaf of each Gen subtree into a passing candidate
    /// with the optimal score. Leaves have no Fix children, so the shape of
    /// the universe is unchanged.
    pub fn plant_optimum_everywhere(&mut self, rng: &mut StdRng) {
        let opt = self.optimum().unwrap_or(f64::from(rng.random_range(1..=10u32)) / 10.0);
        for g in self.gen_paths() {
            if self.subtree_optimum(&g) == Some(opt) {
                continue;
            }
            let prefix = format!("{g}/");
            let leaves: Vec<String> = self
                .outcomes
                .keys()
                .filter(|p| {
                    (p.as_str() == g || p.starts_with(&prefix)) && !self.outcomes.contains_key(&format!("{p}/0"))
                })
                .cloned()
                .collect();
            let pick = leaves[rng.random_range(0..leaves.len())].clone();
            self.outcomes.insert(pick, Outcome::Pass(opt));
        }
    }

    /// Best attainable safety ratio over every action sequence.
    pub fn optimum(&self) -> Option<f64> {
        self.outcomes
            .values()
            .filter_map(|o| match o {
                Outcome::Pass(s) => Some(*s),
                _ => None,
            })
            .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))))
    }

    /// Best attainable safety ratio within the subtree of `path`.
    pub fn subtree_optimum(&self, path: &str) -> Option<f64> {
        let prefix = format!("{path}/");
        self.outcomes
            .iter()
            .filter(|(p, _)| p.as_str() == path || p.starts_with(&prefix))
            .filter_map(|(_, o)| match o {
                Outcome::Pass(s) => Some(*s),
                _ => None,
            })
            .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))))
    }

    pub fn pool(&self) -> ModelPool {
        let outcomes = Arc::new(self.outcomes.clone());
        let provider = FnProvider(move |model: &str, conv: &Conversation, seed: u64| {
            let path = if conv.len() == 1 {
                format!("{model}#{seed}")
            } else {
                let last_reply = conv
                    .messages()
                    .iter()
                    .rev()
                    .find(|m| m.role == Role::Assistant)
                    .ok_or_else(|| ProviderError::Rejected("no prior reply".into()))?;
                let parent = path_of(&last_reply.content).ok_or_else(|| ProviderError::Rejected("no path".into()))?;
                format!("{parent}/{seed}")
            };
            match outcomes.get(&path) {
                None => Err(ProviderError::Rejected(format!("unscripted path {path}"))),
                Some(Outcome::Malformed) => Ok(Completion::counted(conv, format!("cannot do {path}"))),
                Some(_) => Ok(Completion::counted(conv, wrap(&body_for(&path)))),
            }
        });
        let ids: Vec<&str> = self.models.iter().map(String::as_str).collect();
        ModelPool::shared(&ids, Arc::new(provider)).expect("non-empty pool")
    }

    pub fn validator(&self) -> ScriptedValidator {
        let mut v = ScriptedValidator::new(UNIT, Verdict::Pass);
        for (p, o) in &self.outcomes {
            let verdict = match o {
                Outcome::Malformed => continue,
                Outcome::CompileErrors(n) => Verdict::CompileErrors(*n),
                Outcome::TestFailure(_) => Verdict::TestFailure,
                Outcome::Pass(_) => Verdict::Pass,
            };
            v.set(body_for(p), verdict);
        }
        v
    }

    pub fn scorer(&self) -> ScriptedScorer {
        let mut sc = ScriptedScorer::new(UNIT, self.root_s);
        for (p, o) in &self.outcomes {
            if let Outcome::TestFailure(s) | Outcome::Pass(s) = o {
                sc.set(body_for(p), *s);
            }
        }
        sc
    }

    pub fn search(&self, num_rollouts: usize) -> SearchResult {
        let program = toy_program();
        let unit = program.unit(UNIT).expect("unit").clone();
        let pool = self.pool();
        let validator = self.validator();
        let scorer = self.scorer();
        let env = SearchEnv {
            pool: &pool,
            validator: &validator,
            scorer: &scorer,
        };
        let suite = one_case_suite();
        mcts_search(env, &unit, &program, &self.config(num_rollouts), &suite).expect("search runs")
    }
}

pub fn one_case_suite() -> Vec<saferefine::validation::TestCase> {
    vec![saferefine::validation::TestCase {
        id: "t1".into(),
        args: vec![],
        stdin: vec![],
        expected_stdout: b"ok\n".to_vec(),
        expected_exit: 0,
    }]
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// For every evaluated node, the sum of edge rewards from the root equals
/// the endpoint change in `C + w·S`. Returns the largest deviation.
pub fn telescoping_error(tree: &SearchTree, w: f64) -> f64 {
    let root = tree.root().state().expect("root evaluated");
    let mut worst: f64 = 0.0;
    for n in tree.nodes() {
        if !n.materialized || n.is_dead() || n.node_type == NodeType::Init {
            continue;
        }
        let st = n.state().expect("evaluated node has a state");
        let sum: f64 = tree.path_to(n.id)[1..].iter().map(|&i| tree.node(i).edge_reward).sum();
        let expected = (st.c - root.c) + w * (st.s - root.s);
        worst = worst.max((sum - expected).abs());
    }
    worst
}

/// Checks that no child has two visits while a selectable sibling has none.
pub fn unvisited_first_violation(tree: &SearchTree) -> Option<String> {
    for n in tree.nodes() {
        let selectable: Vec<_> = n
            .children
            .iter()
            .map(|&c| tree.node(c))
            .filter(|c| !c.is_dead())
            .collect();
        if selectable.iter().any(|c| c.visits >= 2) {
            if let Some(idle) = selectable.iter().find(|c| c.visits == 0) {
                return Some(format!(
                    "node {} has an unvisited child {} beside a twice-visited one",
                    n.id, idle.id
                ));
            }
        }
    }
    None
}

/// Per-node summary for comparing trees across runs.
pub fn tree_fingerprint(tree: &SearchTree) -> Vec<(usize, Option<usize>, String, u64, String)> {
    tree.nodes()
        .iter()
        .map(|n| {
            (
                n.id,
                n.parent,
                format!("{:?}", n.node_type),
                n.visits,
                format!("{:?}/{:?}/{}/{}", n.safety, n.compile_score, n.edge_reward, n.q_value),
            )
        })
        .collect()
}

pub fn counts_by_model(tree: &SearchTree, node_type: NodeType) -> HashMap<String, usize> {
    let mut out = HashMap::new();
    for n in tree.nodes().iter().filter(|n| n.node_type == node_type) {
        *out.entry(n.model_id().unwrap_or("-").to_string()).or_insert(0) += 1;
    }
    out
}

pub fn fixture(rel: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
}

/// Two mock-served models, `alpha` then `beta`, with the default search
/// settings except for `seed` and a shortened test timeout.
pub fn mock_run_config(
    project: &str,
    suite: Option<&str>,
    mock: &str,
    out_root: &std::path::Path,
    seed: u64,
) -> RunConfig {
    let file = ConfigFile::parse(&format!(
        r#"
[search]
seed = {seed}

[[models]]
id = "alpha"
provider = "mock"

[[models]]
id = "beta"
provider = "mock"

[timeouts]
test_secs = 10
"#
    ))
    .expect("valid config");
    RunConfig::new(
        file,
        RunPaths {
            project_dir: fixture(project),
            tests_file: suite.map(fixture),
            output_dir: out_root.join("project"),
            report_path: out_root.join("report.json"),
            mock: Some(fixture(mock)),
        },
    )
}

/// Every file under `dir` except build output, keyed by relative path.
pub fn dir_contents(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                if path.file_name().is_some_and(|n| n != "target") {
                    stack.push(path);
                }
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).expect("readable file"));
            }
        }
    }
    out
}
