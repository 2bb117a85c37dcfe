//! Project representation: indexed function units, dependency ordering and
//! function-body substitution.
//!
//! A [`ProjectSnapshot`] is an immutable value. Substitution returns a new
//! snapshot with the target span replaced and the spans of every later
//! function in the same file shifted, so it works even when the replacement
//! text does not parse.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};
use syn::spanned::Spanned;
use syn::visit::Visit;
use thiserror::Error;

/// Name of the optional sidecar that pre-declares function ids and spans.
pub const SIDECAR_FILE: &str = "functions.json";

pub type FunctionId = String;

#[derive(Debug, Error)]
pub enum CodeModelError {
    #[error("{file}:{line}:{column}: parse error: {message}")]
    Parse {
        file: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown function id `{0}`")]
    UnknownFunction(String),
    #[error("replacement body for `{0}` is empty")]
    EmptyBody(String),
    #[error("invalid {SIDECAR_FILE}: {0}")]
    Sidecar(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallSite {
    pub caller_id: FunctionId,
    /// The trimmed source line holding the invocation. Always a substring of
    /// the caller's body.
    pub snippet: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionUnit {
    pub id: FunctionId,
    pub name: String,
    /// Full item text, including attributes and doc comments.
    pub body: String,
    pub file: String,
    pub span: Range<usize>,
    pub callees: Vec<FunctionId>,
    pub call_sites: Vec<CallSite>,
    pub globals: Vec<String>,
    pub imports: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyOrder {
    pub ordered_ids: Vec<FunctionId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProjectSnapshot {
    pub files: BTreeMap<String, String>,
    pub function_index: BTreeMap<FunctionId, FunctionUnit>,
    /// Set only on the untouched transpiler output.
    pub baseline: bool,
}

#[derive(Debug, Deserialize)]
struct SidecarEntry {
    id: FunctionId,
    name: String,
    file: String,
    span: [usize; 2],
}

impl ProjectSnapshot {
    /// Builds a baseline snapshot from in-memory files, indexing with the parser.
    pub fn from_files(files: BTreeMap<String, String>) -> Result<Self, CodeModelError> {
        let units = index_functions(&files)?;
        Ok(Self::assemble(files, units))
    }

    /// Loads a project directory. `target/`, `.git/` and the sidecar itself are
    /// not part of the snapshot; a `functions.json` sidecar, when present,
    /// replaces parser-based discovery of ids and spans.
    pub fn load(dir: &Path) -> Result<Self, CodeModelError> {
        let mut files = BTreeMap::new();
        let mut sidecar = None;
        let walker = walkdir::WalkDir::new(dir)
            .sort_by_file_name()
            .into_iter()
            .filter_entry(|e| {
                let name = e.file_name().to_string_lossy();
                !(e.depth() > 0 && e.file_type().is_dir() && (name == "target" || name.starts_with('.')))
            });
        for entry in walker {
            let entry = entry.map_err(|e| CodeModelError::Io {
                path: dir.to_path_buf(),
                source: e.into(),
            })?;
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry
                .path()
                .strip_prefix(dir)
                .expect("walkdir yields children of root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            let bytes = fs::read(entry.path()).map_err(|source| CodeModelError::Io {
                path: entry.path().to_path_buf(),
                source,
            })?;
            let Ok(text) = String::from_utf8(bytes) else {
                tracing::warn!(file = %rel, "skipping non-UTF-8 file");
                continue;
            };
            if rel == SIDECAR_FILE {
                sidecar = Some(text);
            } else {
                files.insert(rel, text);
            }
        }
        match sidecar {
            None => Self::from_files(files),
            Some(json) => {
                let entries: Vec<SidecarEntry> =
                    serde_json::from_str(&json).map_err(|e| CodeModelError::Sidecar(e.to_string()))?;
                let units = index_declared(&files, &entries)?;
                Ok(Self::assemble(files, units))
            }
        }
    }

    fn assemble(files: BTreeMap<String, String>, units: Vec<FunctionUnit>) -> Self {
        let function_index = units.into_iter().map(|u| (u.id.clone(), u)).collect();
        Self {
            files,
            function_index,
            baseline: true,
        }
    }

    pub fn units(&self) -> Vec<FunctionUnit> {
        self.function_index.values().cloned().collect()
    }

    pub fn unit(&self, id: &str) -> Option<&FunctionUnit> {
        self.function_index.get(id)
    }

    /// Iterates `(path, text)` over the Rust sources of the project.
    pub fn rust_sources(&self) -> impl Iterator<Item = (&str, &str)> {
        self.files
            .iter()
            .filter(|(p, _)| p.ends_with(".rs"))
            .map(|(p, t)| (p.as_str(), t.as_str()))
    }

    /// Replaces the span of `unit_id` with `new_body`.
    pub fn substitute(&self, unit_id: &str, new_body: &str) -> Result<Self, CodeModelError> {
        let unit = self
            .function_index
            .get(unit_id)
            .ok_or_else(|| CodeModelError::UnknownFunction(unit_id.to_string()))?;
        if new_body.trim().is_empty() {
            return Err(CodeModelError::EmptyBody(unit_id.to_string()));
        }
        let old = unit.span.clone();
        let file = unit.file.clone();
        let mut files = self.files.clone();
        let text = files.get_mut(&file).expect("indexed file exists");
        text.replace_range(old.clone(), new_body);

        let delta = new_body.len() as isize - old.len() as isize;
        let shift = |p: usize| (p as isize + delta) as usize;
        let mut function_index = self.function_index.clone();
        for u in function_index.values_mut().filter(|u| u.file == file) {
            if u.id == unit_id {
                u.span = old.start..old.start + new_body.len();
                u.body = new_body.to_string();
            } else if u.span.start >= old.end {
                u.span = shift(u.span.start)..shift(u.span.end);
            }
        }
        Ok(Self {
            files,
            function_index,
            baseline: false,
        })
    }

    /// Writes every file under `dir`.
    pub fn materialize(&self, dir: &Path) -> Result<(), CodeModelError> {
        for (rel, text) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|source| CodeModelError::Io {
                    path: parent.to_path_buf(),
                    source,
                })?;
            }
            fs::write(&path, text).map_err(|source| CodeModelError::Io { path, source })?;
        }
        Ok(())
    }

    /// Hex SHA-256 over paths and contents.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for (p, t) in &self.files {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p.as_bytes());
            h.update((t.len() as u64).to_le_bytes());
            h.update(t.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

fn parse_error(file: &str, err: &syn::Error) -> CodeModelError {
    let start = err.span().start();
    CodeModelError::Parse {
        file: file.to_string(),
        line: start.line,
        column: start.column + 1,
        message: err.to_string(),
    }
}

/// Top-level declarations of one file that feed prompt context.
#[derive(Default)]
struct FileContext {
    /// `(name, declaration text)` for statics and consts.
    globals: Vec<(String, String)>,
    /// `(leaf names, text, is_glob)` for `use` and `extern crate` items.
    imports: Vec<(Vec<String>, String, bool)>,
    /// `(name, span)` of top-level functions.
    functions: Vec<(String, Range<usize>)>,
}

fn scan_file(path: &str, text: &str) -> Result<FileContext, CodeModelError> {
    let parsed = syn::parse_file(text).map_err(|e| parse_error(path, &e));
    let ast = match parsed {
        Ok(ast) => ast,
        Err(e) => {
            proc_macro2::extra::invalidate_current_thread_spans();
            return Err(e);
        }
    };
    let mut ctx = FileContext::default();
    for item in &ast.items {
        let range = item.span().byte_range();
        match item {
            syn::Item::Fn(f) => ctx.functions.push((f.sig.ident.to_string(), range)),
            syn::Item::Static(s) => ctx.globals.push((s.ident.to_string(), text[range].to_string())),
            syn::Item::Const(c) => ctx.globals.push((c.ident.to_string(), text[range].to_string())),
            syn::Item::Use(u) => {
                let mut names = Vec::new();
                let glob = use_leaves(&u.tree, &mut names);
                ctx.imports.push((names, text[range].to_string(), glob));
            }
            syn::Item::ExternCrate(c) => {
                let name = c
                    .rename
                    .as_ref()
                    .map(|(_, i)| i.to_string())
                    .unwrap_or_else(|| c.ident.to_string());
                ctx.imports.push((vec![name], text[range].to_string(), false));
            }
            _ => {}
        }
    }
    drop(ast);
    proc_macro2::extra::invalidate_current_thread_spans();
    Ok(ctx)
}

/// Collects the names a `use` tree brings into scope. Returns true for globs.
fn use_leaves(tree: &syn::UseTree, out: &mut Vec<String>) -> bool {
    match tree {
        syn::UseTree::Path(p) => use_leaves(&p.tree, out),
        syn::UseTree::Name(n) => {
            out.push(n.ident.to_string());
            false
        }
        syn::UseTree::Rename(r) => {
            out.push(r.rename.to_string());
            false
        }
        syn::UseTree::Glob(_) => true,
        syn::UseTree::Group(g) => g.items.iter().fold(false, |acc, t| use_leaves(t, out) | acc),
    }
}

/// Syntactic facts about one function item.
struct BodyFacts {
    /// Referenced names with the byte offset of the reference inside the body.
    references: Vec<(String, usize)>,
    /// Every identifier in the item, macro bodies included.
    idents: BTreeSet<String>,
}

#[derive(Default)]
struct ReferenceCollector {
    references: Vec<(String, usize)>,
}

impl<'ast> Visit<'ast> for ReferenceCollector {
    fn visit_expr_path(&mut self, e: &'ast syn::ExprPath) {
        if let Some(seg) = e.path.segments.last() {
            self.references
                .push((seg.ident.to_string(), seg.ident.span().byte_range().start));
        }
        syn::visit::visit_expr_path(self, e);
    }

    fn visit_macro(&mut self, mac: &'ast syn::Macro) {
        if let Some(exprs) = macro_exprs(mac) {
            for e in &exprs {
                self.visit_expr(e);
            }
        }
    }
}

/// Parses a macro body as a comma-separated expression list, which covers the
/// formatting and assertion macros. Other macro bodies stay opaque.
pub(crate) fn macro_exprs(mac: &syn::Macro) -> Option<Vec<syn::Expr>> {
    use syn::punctuated::Punctuated;
    mac.parse_body_with(Punctuated::<syn::Expr, syn::Token![,]>::parse_terminated)
        .ok()
        .map(|p| p.into_iter().collect())
}

fn collect_idents(ts: proc_macro2::TokenStream, out: &mut BTreeSet<String>) {
    for tt in ts {
        match tt {
            proc_macro2::TokenTree::Ident(i) => {
                out.insert(i.to_string());
            }
            proc_macro2::TokenTree::Group(g) => collect_idents(g.stream(), out),
            _ => {}
        }
    }
}

fn analyze_body(file: &str, first_line: usize, body: &str) -> Result<BodyFacts, CodeModelError> {
    let facts = syn::parse_str::<syn::ItemFn>(body)
        .map_err(|e| match parse_error(file, &e) {
            CodeModelError::Parse {
                file,
                line,
                column,
                message,
            } => CodeModelError::Parse {
                file,
                line: line + first_line - 1,
                column,
                message,
            },
            other => other,
        })
        .map(|item| {
            let mut collector = ReferenceCollector::default();
            collector.visit_item_fn(&item);
            let mut idents = BTreeSet::new();
            collect_idents(quote_tokens(&item), &mut idents);
            BodyFacts {
                references: collector.references,
                idents,
            }
        });
    proc_macro2::extra::invalidate_current_thread_spans();
    facts
}

fn quote_tokens(item: &syn::ItemFn) -> proc_macro2::TokenStream {
    use quote::ToTokens;
    item.to_token_stream()
}

/// The trimmed line of `body` containing byte `offset`.
fn line_at(body: &str, offset: usize) -> &str {
    let start = body[..offset].rfind('\n').map_or(0, |i| i + 1);
    let end = body[offset..].find('\n').map_or(body.len(), |i| offset + i);
    body[start..end].trim()
}

/// Indexes every top-level function of every `.rs` file by parsing.
pub fn index_functions(files: &BTreeMap<String, String>) -> Result<Vec<FunctionUnit>, CodeModelError> {
    let mut declared = Vec::new();
    for (path, text) in files.iter().filter(|(p, _)| p.ends_with(".rs")) {
        let ctx = scan_file(path, text)?;
        for (name, span) in ctx.functions {
            declared.push(SidecarEntry {
                id: format!("{path}::{name}"),
                name,
                file: path.clone(),
                span: [span.start, span.end],
            });
        }
    }
    index_declared(files, &declared)
}

fn index_declared(
    files: &BTreeMap<String, String>,
    declared: &[SidecarEntry],
) -> Result<Vec<FunctionUnit>, CodeModelError> {
    let mut contexts = BTreeMap::new();
    for (path, text) in files.iter().filter(|(p, _)| p.ends_with(".rs")) {
        contexts.insert(path.as_str(), scan_file(path, text)?);
    }

    let mut seen = BTreeSet::new();
    let mut bodies = Vec::with_capacity(declared.len());
    for d in declared {
        if !seen.insert(d.id.as_str()) {
            return Err(CodeModelError::Sidecar(format!("duplicate id `{}`", d.id)));
        }
        let text = files
            .get(&d.file)
            .ok_or_else(|| CodeModelError::Sidecar(format!("`{}` names missing file {}", d.id, d.file)))?;
        let [start, end] = d.span;
        let body = text
            .get(start..end)
            .ok_or_else(|| CodeModelError::Sidecar(format!("span of `{}` is out of bounds", d.id)))?;
        let first_line = text[..start].matches('\n').count() + 1;
        let facts = analyze_body(&d.file, first_line, body)?;
        bodies.push((d, body.to_string(), facts));
    }

    let mut by_name: HashMap<&str, Vec<(&str, &str)>> = HashMap::new();
    for (d, _, _) in &bodies {
        by_name
            .entry(d.name.as_str())
            .or_default()
            .push((d.id.as_str(), d.file.as_str()));
    }
    let resolve = |name: &str, file: &str| -> Vec<String> {
        match by_name.get(name) {
            None => Vec::new(),
            Some(cands) => {
                let local: Vec<_> = cands.iter().filter(|(_, f)| *f == file).collect();
                if local.is_empty() {
                    cands.iter().map(|(id, _)| id.to_string()).collect()
                } else {
                    local.iter().map(|(id, _)| id.to_string()).collect()
                }
            }
        }
    };

    let mut call_sites: BTreeMap<String, Vec<CallSite>> = BTreeMap::new();
    let mut units = Vec::with_capacity(bodies.len());
    for (d, body, facts) in &bodies {
        let mut callees = BTreeSet::new();
        for (name, offset) in &facts.references {
            for callee in resolve(name, &d.file) {
                if callee == d.id {
                    continue;
                }
                let site = CallSite {
                    caller_id: d.id.clone(),
                    snippet: line_at(body, *offset).to_string(),
                };
                let sites = call_sites.entry(callee.clone()).or_default();
                if !sites.contains(&site) {
                    sites.push(site);
                }
                callees.insert(callee);
            }
        }

        let globals = contexts
            .values()
            .flat_map(|c| c.globals.iter())
            .filter(|(name, _)| facts.idents.contains(name))
            .map(|(_, text)| text.clone())
            .collect();
        let imports = contexts
            .get(d.file.as_str())
            .map(|c| {
                c.imports
                    .iter()
                    .filter(|(names, _, glob)| *glob || names.iter().any(|n| facts.idents.contains(n)))
                    .map(|(_, text, _)| text.clone())
                    .collect()
            })
            .unwrap_or_default();

        units.push(FunctionUnit {
            id: d.id.clone(),
            name: d.name.clone(),
            body: body.clone(),
            file: d.file.clone(),
            span: d.span[0]..d.span[1],
            callees: callees.into_iter().collect(),
            call_sites: Vec::new(),
            globals,
            imports,
        });
    }
    for u in &mut units {
        if let Some(sites) = call_sites.remove(&u.id) {
            u.call_sites = sites;
        }
    }
    units.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(units)
}

/// Bottom-up order: callees before callers. Strongly connected components are
/// emitted as blocks in lexicographic id order, and among ready components the
/// one with the smallest id goes first.
pub fn order_by_dependency(units: &[FunctionUnit]) -> DependencyOrder {
    let mut ids: Vec<&str> = units.iter().map(|u| u.id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    let pos: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();

    let mut graph = DiGraph::<usize, ()>::new();
    let nodes: Vec<_> = (0..ids.len()).map(|i| graph.add_node(i)).collect();
    for u in units {
        let from = pos[u.id.as_str()];
        for c in &u.callees {
            if let Some(&to) = pos.get(c.as_str()) {
                if to != from {
                    // edge caller -> callee
                    graph.update_edge(nodes[from], nodes[to], ());
                }
            }
        }
    }

    let sccs = tarjan_scc(&graph);
    let mut comp_of = vec![0usize; ids.len()];
    let mut members: Vec<Vec<usize>> = Vec::with_capacity(sccs.len());
    for (ci, scc) in sccs.iter().enumerate() {
        let mut m: Vec<usize> = scc.iter().map(|n| graph[*n]).collect();
        m.sort_unstable();
        for &i in &m {
            comp_of[i] = ci;
        }
        members.push(m);
    }

    // remaining callee components per component
    let mut pending: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); members.len()];
    let mut dependents: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); members.len()];
    for e in graph.edge_indices() {
        let (a, b) = graph.edge_endpoints(e).expect("edge exists");
        let (ca, cb) = (comp_of[graph[a]], comp_of[graph[b]]);
        if ca != cb {
            pending[ca].insert(cb);
            dependents[cb].insert(ca);
        }
    }

    let mut ready: BTreeMap<usize, usize> = BTreeMap::new();
    for (ci, p) in pending.iter().enumerate() {
        if p.is_empty() {
            ready.insert(members[ci][0], ci);
        }
    }
    let mut ordered_ids = Vec::with_capacity(ids.len());
    while let Some((_, ci)) = ready.pop_first() {
        ordered_ids.extend(members[ci].iter().map(|&i| ids[i].to_string()));
        for &dep in &dependents[ci] {
            pending[dep].remove(&ci);
            if pending[dep].is_empty() {
                ready.insert(members[dep][0], dep);
            }
        }
    }
    DependencyOrder { ordered_ids }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(id: &str, callees: &[&str]) -> FunctionUnit {
        FunctionUnit {
            id: id.into(),
            name: id.into(),
            body: String::new(),
            file: "src/main.rs".into(),
            span: 0..0,
            callees: callees.iter().map(|s| s.to_string()).collect(),
            call_sites: vec![],
            globals: vec![],
            imports: vec![],
        }
    }

    fn ids(order: &DependencyOrder) -> Vec<&str> {
        order.ordered_ids.iter().map(String::as_str).collect()
    }

    const THREE: &str = r#"use std::ptr;
use std::io::Write;

static mut COUNTER: i32 = 0;
const LIMIT: i32 = 10;

unsafe fn bump(p: *mut i32) {
    *p += 1;
    COUNTER += 1;
}

fn helper(x: i32) -> i32 {
    x.min(LIMIT)
}

fn main() {
    let mut v = 1;
    unsafe { bump(&mut v as *mut i32) };
    println!("{}", helper(v));
}
"#;

    fn three() -> ProjectSnapshot {
        let mut files = BTreeMap::new();
        files.insert("src/main.rs".to_string(), THREE.to_string());
        files.insert("Cargo.toml".to_string(), "[package]\nname = \"x\"\n".to_string());
        ProjectSnapshot::from_files(files).unwrap()
    }

    #[test]
    fn chain_is_bottom_up() {
        let order = order_by_dependency(&[unit("A", &["B"]), unit("B", &["C"]), unit("C", &[])]);
        assert_eq!(ids(&order), ["C", "B", "A"]);
    }

    #[test]
    fn independent_units_are_lexicographic() {
        let order = order_by_dependency(&[unit("Y", &[]), unit("X", &[])]);
        assert_eq!(ids(&order), ["X", "Y"]);
    }

    #[test]
    fn cycle_broken_by_id() {
        let order = order_by_dependency(&[unit("B", &["A"]), unit("A", &["B"])]);
        assert_eq!(ids(&order), ["A", "B"]);
    }

    #[test]
    fn caller_of_cycle_waits_for_the_cycle() {
        // "A" sorts first but depends on the {B, C} cycle.
        let order = order_by_dependency(&[unit("A", &["B"]), unit("B", &["C"]), unit("C", &["B"])]);
        assert_eq!(ids(&order), ["B", "C", "A"]);
    }

    #[test]
    fn indexes_three_functions() {
        let p = three();
        let names: Vec<_> = p.units().iter().map(|u| u.name.clone()).collect();
        assert_eq!(names, ["bump", "helper", "main"]);
        for u in p.units() {
            assert_eq!(&p.files[&u.file][u.span.clone()], u.body);
        }
        let main = p.unit("src/main.rs::main").unwrap();
        assert_eq!(main.callees, ["src/main.rs::bump", "src/main.rs::helper"]);
        let bump = p.unit("src/main.rs::bump").unwrap();
        assert_eq!(bump.globals, ["static mut COUNTER: i32 = 0;"]);
        assert_eq!(bump.call_sites.len(), 1);
        assert_eq!(bump.call_sites[0].snippet, "unsafe { bump(&mut v as *mut i32) };");
        assert!(main.body.contains(&bump.call_sites[0].snippet));
        let helper = p.unit("src/main.rs::helper").unwrap();
        assert_eq!(helper.globals, ["const LIMIT: i32 = 10;"]);
        assert!(helper.imports.is_empty());
    }

    #[test]
    fn ids_stable_across_runs() {
        assert_eq!(three(), three());
    }

    #[test]
    fn empty_project_has_no_units() {
        assert!(index_functions(&BTreeMap::new()).unwrap().is_empty());
    }

    #[test]
    fn single_main() {
        let mut files = BTreeMap::new();
        files.insert("src/main.rs".into(), "fn main() {\n    println!(\"hi\");\n}\n".into());
        let units = index_functions(&files).unwrap();
        assert_eq!(units.len(), 1);
        assert_eq!(units[0].name, "main");
        assert!(units[0].callees.is_empty());
    }

    #[test]
    fn parse_failure_names_file_and_location() {
        let mut files = BTreeMap::new();
        files.insert("src/lib.rs".into(), "fn ok() {}\nfn broken( {\n".into());
        match index_functions(&files) {
            Err(CodeModelError::Parse { file, line, .. }) => {
                assert_eq!(file, "src/lib.rs");
                assert!(line >= 2);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn substitute_round_trip_is_identity() {
        let p = three();
        let orig = p.unit("src/main.rs::helper").unwrap().body.clone();
        let q = p
            .substitute(
                "src/main.rs::helper",
                "fn helper(x: i32) -> i32 {\n    if x > LIMIT { LIMIT } else { x }\n}",
            )
            .unwrap();
        assert_ne!(q.files, p.files);
        let r = q.substitute("src/main.rs::helper", &orig).unwrap();
        assert_eq!(r.files, p.files);
        assert_eq!(r.function_index, p.function_index);
        assert!(!r.baseline);
    }

    #[test]
    fn substitute_same_length_keeps_file_length() {
        let p = three();
        let orig = p.unit("src/main.rs::helper").unwrap().body.clone();
        let same = orig.replace("min", "max");
        let q = p.substitute("src/main.rs::helper", &same).unwrap();
        assert_eq!(q.files["src/main.rs"].len(), p.files["src/main.rs"].len());
    }

    #[test]
    fn substitute_leaves_other_bodies_alone() {
        let p = three();
        let q = p
            .substitute("src/main.rs::bump", "fn bump(p: &mut i32) {\n    *p += 1;\n}")
            .unwrap();
        for id in ["src/main.rs::helper", "src/main.rs::main"] {
            let u = q.unit(id).unwrap();
            assert_eq!(u.body, p.unit(id).unwrap().body);
            assert_eq!(&q.files[&u.file][u.span.clone()], u.body);
        }
    }

    #[test]
    fn substitute_tolerates_unparseable_text() {
        let p = three();
        let q = p.substitute("src/main.rs::bump", "fn bump( {{{").unwrap();
        let main = q.unit("src/main.rs::main").unwrap();
        assert_eq!(&q.files[&main.file][main.span.clone()], main.body);
    }

    #[test]
    fn substitute_errors() {
        let p = three();
        assert!(matches!(
            p.substitute("nope", "fn x() {}"),
            Err(CodeModelError::UnknownFunction(_))
        ));
        assert!(matches!(
            p.substitute("src/main.rs::main", "  \n"),
            Err(CodeModelError::EmptyBody(_))
        ));
    }

    #[test]
    fn sidecar_declares_ids() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("src")).unwrap();
        fs::write(dir.path().join("src/main.rs"), THREE).unwrap();
        let start = THREE.find("fn helper").unwrap();
        let end = start + THREE[start..].find("\n}\n").unwrap() + 2;
        fs::write(
            dir.path().join(SIDECAR_FILE),
            format!(r#"[{{"id": "helper", "name": "helper", "file": "src/main.rs", "span": [{start}, {end}]}}]"#),
        )
        .unwrap();
        let p = ProjectSnapshot::load(dir.path()).unwrap();
        assert_eq!(p.function_index.len(), 1);
        assert!(p.unit("helper").unwrap().body.starts_with("fn helper"));
        assert!(!p.files.contains_key(SIDECAR_FILE));
    }
}
