//! Unsafe-construct counting and the safety / idiomaticity ratios.
//!
//! Counting is syntactic and whole-program. The five categories:
//!
//! * `rpc`: declarations whose declared type contains a raw pointer
//!   (function parameters, annotated `let` bindings, struct/union fields,
//!   `static`/`const` items). Foreign (`extern`) signatures are not counted.
//! * `rpr`: unary `*` dereferences inside an unsafe context.
//! * `luc`: physical non-blank lines enclosed by an unsafe block or an unsafe
//!   function body, without the lines of the opening and closing brace. A
//!   region written on a single line counts as one line. Nested regions are
//!   not double counted.
//! * `uce`: calls inside an unsafe context to a function that requires one:
//!   project `unsafe fn`s, foreign functions, `libc::` functions, and a fixed
//!   list of standard unsafe functions and raw-pointer methods.
//! * `utc`: `as` casts whose target type contains a raw pointer, or whose
//!   operand is a raw pointer (a raw-pointer cast or a variable declared with
//!   a raw-pointer type).

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use syn::visit::{self, Visit};
use thiserror::Error;

use crate::code_model::{macro_exprs, ProjectSnapshot};

#[derive(Debug, Error)]
pub enum SafetyError {
    #[error("{file}:{line}:{column}: cannot count constructs: {message}")]
    Parse {
        file: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("malformed counts document: {0}")]
    Format(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UnsafeConstructCounts {
    pub rpc: u64,
    pub rpr: u64,
    pub luc: u64,
    pub uce: u64,
    pub utc: u64,
}

impl UnsafeConstructCounts {
    pub fn total(&self) -> u64 {
        self.rpc + self.rpr + self.luc + self.uce + self.utc
    }
}

impl std::ops::Add for UnsafeConstructCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            rpc: self.rpc + o.rpc,
            rpr: self.rpr + o.rpr,
            luc: self.luc + o.luc,
            uce: self.uce + o.uce,
            utc: self.utc + o.utc,
        }
    }
}

/// Flat `key = value` rendering, one category per line.
impl fmt::Display for UnsafeConstructCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rpc = {}", self.rpc)?;
        writeln!(f, "rpr = {}", self.rpr)?;
        writeln!(f, "luc = {}", self.luc)?;
        writeln!(f, "uce = {}", self.uce)?;
        writeln!(f, "utc = {}", self.utc)
    }
}

impl FromStr for UnsafeConstructCounts {
    type Err = SafetyError;

    /// Parses the flat key/value format. `#` starts a comment; all five keys
    /// are required exactly once.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut slots: [Option<u64>; 5] = [None; 5];
        for raw in s.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .or_else(|| line.split_once(':'))
                .ok_or_else(|| SafetyError::Format(format!("expected `key = value`, got `{line}`")))?;
            let idx = match k.trim().to_ascii_lowercase().as_str() {
                "rpc" => 0,
                "rpr" => 1,
                "luc" => 2,
                "uce" => 3,
                "utc" => 4,
                other => return Err(SafetyError::Format(format!("unknown key `{other}`"))),
            };
            let v: u64 = v
                .trim()
                .parse()
                .map_err(|_| SafetyError::Format(format!("bad value in `{line}`")))?;
            if slots[idx].replace(v).is_some() {
                return Err(SafetyError::Format(format!("duplicate key in `{line}`")));
            }
        }
        match slots {
            [Some(rpc), Some(rpr), Some(luc), Some(uce), Some(utc)] => Ok(Self {
                rpc,
                rpr,
                luc,
                uce,
                utc,
            }),
            _ => Err(SafetyError::Format("missing category key".into())),
        }
    }
}

/// Counts and linter warnings measured once on the untouched input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyBaseline {
    pub counts0: UnsafeConstructCounts,
    pub linter0: Option<u64>,
}

/// Safety ratio `m · max(1 − total_i/total_0, 0)`; a zero baseline yields `m`.
pub fn safety_ratio(counts: &UnsafeConstructCounts, baseline: &SafetyBaseline, compilable: bool) -> f64 {
    if !compilable {
        return 0.0;
    }
    let total0 = baseline.counts0.total();
    if total0 == 0 {
        return 1.0;
    }
    (1.0 - counts.total() as f64 / total0 as f64).max(0.0)
}

/// Linter-based idiomaticity `max(1 − N_i/N_0, 0)`. With `N_0 = 0` the score
/// is 1 for a warning-free result and 0 otherwise.
pub fn idiomaticity(linter_i: u64, linter0: u64) -> f64 {
    if linter0 == 0 {
        return if linter_i == 0 { 1.0 } else { 0.0 };
    }
    (1.0 - linter_i as f64 / linter0 as f64).max(0.0)
}

/// Counts over every Rust source of the project.
pub fn count_constructs(program: &ProjectSnapshot) -> Result<UnsafeConstructCounts, SafetyError> {
    count_sources(program.rust_sources())
}

/// Counts over `(path, text)` pairs. Unsafe function names are collected
/// across all sources before counting calls.
pub fn count_sources<'a>(
    sources: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> Result<UnsafeConstructCounts, SafetyError> {
    let sources: Vec<_> = sources.into_iter().collect();
    let result = (|| {
        let mut files = Vec::with_capacity(sources.len());
        for (path, text) in &sources {
            let ast = syn::parse_file(text).map_err(|e| {
                let start = e.span().start();
                SafetyError::Parse {
                    file: path.to_string(),
                    line: start.line,
                    column: start.column + 1,
                    message: e.to_string(),
                }
            })?;
            files.push((*text, ast));
        }
        let mut unsafe_fns = HashSet::new();
        for (_, ast) in &files {
            let mut c = UnsafeFnCollector(&mut unsafe_fns);
            c.visit_file(ast);
        }
        let mut total = UnsafeConstructCounts::default();
        for (text, ast) in &files {
            let mut counter = Counter::new(text, &unsafe_fns);
            counter.visit_file(ast);
            total = total + counter.finish();
        }
        Ok(total)
    })();
    proc_macro2::extra::invalidate_current_thread_spans();
    result
}

struct UnsafeFnCollector<'a>(&'a mut HashSet<String>);

impl<'ast> Visit<'ast> for UnsafeFnCollector<'_> {
    fn visit_signature(&mut self, sig: &'ast syn::Signature) {
        if sig.unsafety.is_some() {
            self.0.insert(sig.ident.to_string());
        }
    }

    fn visit_foreign_item_fn(&mut self, f: &'ast syn::ForeignItemFn) {
        self.0.insert(f.sig.ident.to_string());
    }
}

/// Functions called through a path that need an unsafe context. Matched on
/// the last two path segments.
const UNSAFE_QUALIFIED: &[&str] = &[
    "ptr::read",
    "ptr::write",
    "ptr::read_volatile",
    "ptr::write_volatile",
    "ptr::read_unaligned",
    "ptr::write_unaligned",
    "ptr::copy",
    "ptr::copy_nonoverlapping",
    "ptr::write_bytes",
    "ptr::swap",
    "ptr::replace",
    "ptr::drop_in_place",
    "mem::transmute",
    "mem::transmute_copy",
    "mem::zeroed",
    "mem::uninitialized",
    "slice::from_raw_parts",
    "slice::from_raw_parts_mut",
    "str::from_utf8_unchecked",
    "CStr::from_ptr",
    "CString::from_raw",
    "Box::from_raw",
    "Vec::from_raw_parts",
    "String::from_raw_parts",
];

/// Unqualified names that are unambiguous enough to match on their own.
const UNSAFE_BARE: &[&str] = &[
    "transmute",
    "transmute_copy",
    "copy_nonoverlapping",
    "drop_in_place",
    "from_raw_parts",
    "from_raw_parts_mut",
    "read_volatile",
    "write_volatile",
    "from_utf8_unchecked",
];

/// Raw-pointer and unchecked methods that need an unsafe context.
const UNSAFE_METHODS: &[&str] = &[
    "offset",
    "add",
    "sub",
    "offset_from",
    "read",
    "write",
    "read_volatile",
    "write_volatile",
    "read_unaligned",
    "write_unaligned",
    "copy_to",
    "copy_from",
    "copy_to_nonoverlapping",
    "copy_from_nonoverlapping",
    "write_bytes",
    "drop_in_place",
    "get_unchecked",
    "get_unchecked_mut",
    "assume_init",
    "unwrap_unchecked",
    "set_len",
];

fn type_has_raw_pointer(ty: &syn::Type) -> bool {
    struct Finder(bool);
    impl<'ast> Visit<'ast> for Finder {
        fn visit_type_ptr(&mut self, _: &'ast syn::TypePtr) {
            self.0 = true;
        }
    }
    let mut f = Finder(false);
    f.visit_type(ty);
    f.0
}

fn strip_parens(mut e: &syn::Expr) -> &syn::Expr {
    while let syn::Expr::Paren(p) = e {
        e = &p.expr;
    }
    e
}

fn pat_ident(pat: &syn::Pat) -> Option<String> {
    match pat {
        syn::Pat::Ident(i) => Some(i.ident.to_string()),
        syn::Pat::Type(t) => pat_ident(&t.pat),
        _ => None,
    }
}

struct Counter<'a> {
    text: &'a str,
    unsafe_fns: &'a HashSet<String>,
    counts: UnsafeConstructCounts,
    unsafe_depth: usize,
    unsafe_lines: BTreeSet<usize>,
    /// Variables declared with a raw-pointer type in the enclosing function.
    ptr_vars: HashSet<String>,
}

impl<'a> Counter<'a> {
    fn new(text: &'a str, unsafe_fns: &'a HashSet<String>) -> Self {
        Self {
            text,
            unsafe_fns,
            counts: UnsafeConstructCounts::default(),
            unsafe_depth: 0,
            unsafe_lines: BTreeSet::new(),
            ptr_vars: HashSet::new(),
        }
    }

    fn finish(mut self) -> UnsafeConstructCounts {
        self.counts.luc = self.unsafe_lines.len() as u64;
        self.counts
    }

    fn mark_region(&mut self, block: &syn::Block) {
        let open = block.brace_token.span.open().start().line;
        let close = block.brace_token.span.close().start().line;
        if open == close {
            self.unsafe_lines.insert(open);
            return;
        }
        let lines: Vec<&str> = self.text.lines().collect();
        for line in open + 1..close {
            if lines.get(line - 1).is_some_and(|l| !l.trim().is_empty()) {
                self.unsafe_lines.insert(line);
            }
        }
    }

    fn in_unsafe(&self) -> bool {
        self.unsafe_depth > 0
    }

    fn declare(&mut self, ty: &syn::Type) {
        if type_has_raw_pointer(ty) {
            self.counts.rpc += 1;
        }
    }

    fn signature(&mut self, sig: &syn::Signature) {
        for input in &sig.inputs {
            if let syn::FnArg::Typed(pt) = input {
                self.declare(&pt.ty);
                if type_has_raw_pointer(&pt.ty) {
                    if let Some(name) = pat_ident(&pt.pat) {
                        self.ptr_vars.insert(name);
                    }
                }
            }
        }
    }

    fn function(&mut self, sig: &syn::Signature, block: &'a syn::Block) {
        let saved = std::mem::take(&mut self.ptr_vars);
        self.signature(sig);
        if sig.unsafety.is_some() {
            self.mark_region(block);
            self.unsafe_depth += 1;
            self.visit_block(block);
            self.unsafe_depth -= 1;
        } else {
            self.visit_block(block);
        }
        self.ptr_vars = saved;
    }

    fn is_unsafe_path_call(&self, path: &syn::Path) -> bool {
        let segs: Vec<String> = path.segments.iter().map(|s| s.ident.to_string()).collect();
        let Some(last) = segs.last() else { return false };
        if self.unsafe_fns.contains(last) || UNSAFE_BARE.contains(&last.as_str()) {
            return true;
        }
        if segs.len() >= 2 {
            let tail = format!("{}::{}", segs[segs.len() - 2], last);
            if UNSAFE_QUALIFIED.contains(&tail.as_str()) {
                return true;
            }
            if segs.iter().any(|s| s == "libc") && last.starts_with(|c: char| c.is_ascii_lowercase()) {
                return true;
            }
        }
        false
    }

    fn operand_is_pointer(&self, e: &syn::Expr) -> bool {
        match strip_parens(e) {
            syn::Expr::Cast(c) => type_has_raw_pointer(&c.ty),
            syn::Expr::Path(p) => p
                .path
                .get_ident()
                .is_some_and(|i| self.ptr_vars.contains(&i.to_string())),
            _ => false,
        }
    }
}

impl<'ast> Visit<'ast> for Counter<'ast> {
    fn visit_item_fn(&mut self, f: &'ast syn::ItemFn) {
        self.function(&f.sig, &f.block);
    }

    fn visit_impl_item_fn(&mut self, f: &'ast syn::ImplItemFn) {
        self.function(&f.sig, &f.block);
    }

    fn visit_trait_item_fn(&mut self, f: &'ast syn::TraitItemFn) {
        match &f.default {
            Some(block) => self.function(&f.sig, block),
            None => {
                let saved = std::mem::take(&mut self.ptr_vars);
                self.signature(&f.sig);
                self.ptr_vars = saved;
            }
        }
    }

    fn visit_item_foreign_mod(&mut self, _: &'ast syn::ItemForeignMod) {}

    fn visit_field(&mut self, f: &'ast syn::Field) {
        self.declare(&f.ty);
        visit::visit_field(self, f);
    }

    fn visit_item_static(&mut self, s: &'ast syn::ItemStatic) {
        self.declare(&s.ty);
        visit::visit_item_static(self, s);
    }

    fn visit_item_const(&mut self, c: &'ast syn::ItemConst) {
        self.declare(&c.ty);
        visit::visit_item_const(self, c);
    }

    fn visit_local(&mut self, l: &'ast syn::Local) {
        if let syn::Pat::Type(pt) = &l.pat {
            self.declare(&pt.ty);
            if type_has_raw_pointer(&pt.ty) {
                if let Some(name) = pat_ident(&pt.pat) {
                    self.ptr_vars.insert(name);
                }
            }
        }
        visit::visit_local(self, l);
    }

    fn visit_expr_unsafe(&mut self, e: &'ast syn::ExprUnsafe) {
        self.mark_region(&e.block);
        self.unsafe_depth += 1;
        visit::visit_expr_unsafe(self, e);
        self.unsafe_depth -= 1;
    }

    fn visit_expr_unary(&mut self, e: &'ast syn::ExprUnary) {
        if matches!(e.op, syn::UnOp::Deref(_)) && self.in_unsafe() {
            self.counts.rpr += 1;
        }
        visit::visit_expr_unary(self, e);
    }

    fn visit_expr_call(&mut self, e: &'ast syn::ExprCall) {
        if self.in_unsafe() {
            if let syn::Expr::Path(p) = strip_parens(&e.func) {
                if self.is_unsafe_path_call(&p.path) {
                    self.counts.uce += 1;
                }
            }
        }
        visit::visit_expr_call(self, e);
    }

    fn visit_expr_method_call(&mut self, e: &'ast syn::ExprMethodCall) {
        if self.in_unsafe() {
            let name = e.method.to_string();
            if UNSAFE_METHODS.contains(&name.as_str()) || self.unsafe_fns.contains(&name) {
                self.counts.uce += 1;
            }
        }
        visit::visit_expr_method_call(self, e);
    }

    fn visit_expr_cast(&mut self, e: &'ast syn::ExprCast) {
        if type_has_raw_pointer(&e.ty) || self.operand_is_pointer(&e.expr) {
            self.counts.utc += 1;
        }
        visit::visit_expr_cast(self, e);
    }

    fn visit_macro(&mut self, mac: &'ast syn::Macro) {
        if let Some(exprs) = macro_exprs(mac) {
            for e in &exprs {
                self.visit_owned_expr(e);
            }
        }
    }
}

impl Counter<'_> {
    /// Macro bodies are parsed into owned expressions that do not live for
    /// `'ast`, so they go through a short-lived counter sharing our state.
    fn visit_owned_expr(&mut self, e: &syn::Expr) {
        let mut sub = Counter {
            text: self.text,
            unsafe_fns: self.unsafe_fns,
            counts: UnsafeConstructCounts::default(),
            unsafe_depth: self.unsafe_depth,
            unsafe_lines: std::mem::take(&mut self.unsafe_lines),
            ptr_vars: std::mem::take(&mut self.ptr_vars),
        };
        sub.visit_expr(e);
        self.counts = self.counts + sub.counts;
        self.unsafe_lines = sub.unsafe_lines;
        self.ptr_vars = sub.ptr_vars;
    }
}
