//! Prompt templates and rendering.
//!
//! Templates use `{name}` placeholders; `{{` and `}}` are literal braces.
//! Substitution is a single pass, so placeholder-like text inside the
//! substituted code is left alone.

use super::RefinerError;
use crate::code_model::FunctionUnit;
use crate::validation::ValidationResult;

pub const FUNC_OPEN: &str = "<FUNC>";
pub const FUNC_CLOSE: &str = "</FUNC>";
/// Backslash form of the closing delimiter, accepted by [`super::postprocess`].
pub const FUNC_CLOSE_ALT: &str = "<\\FUNC>";

/// Rendered in place of an empty context section.
pub const NONE_MARKER: &str = "(none)";

pub const MAIN_TEMPLATE: &str = "\
The Rust function below was produced by a C-to-Rust transpiler.
It is already Rust, but it mirrors the original C and relies on unsafe Rust.
Rewrite it as safe, idiomatic Rust. Do not translate it into any other language.
Remove raw pointers, raw-pointer dereferences, unsafe blocks, unsafe calls and
pointer casts wherever possible, and keep unsafe code minimal where it cannot be avoided.
The rewritten function must keep the observable behavior of the original.

Keep the function name. Its signature must stay compatible with the call sites
listed below, because callers are not rewritten together with this function.

Target function:
{unsafe_rust}

Call sites of the target function:
{call_sites}

Global variables used by the target function:
{global}

Imports available to the target function:
{import}

Reply with the complete rewritten function only, placed between <FUNC> and </FUNC>.
";

pub const COMPILE_REPAIR_TEMPLATE: &str = "\
The function `{function}` you produced does not compile when placed in the project.
The compiler reported:

{errors}
Fix the errors while keeping the function safe and its behavior unchanged.
Reply with the complete corrected function only, placed between <FUNC> and </FUNC>.
";

pub const TEST_REPAIR_TEMPLATE: &str = "\
The function `{function}` you produced compiles, but the program no longer
behaves like the original on these tests:

{failures}
Fix the function so every test produces the expected output and exit status,
keeping it safe.
Reply with the complete corrected function only, placed between <FUNC> and </FUNC>.
";

/// Substitutes `{name}` placeholders from `values` in one pass.
pub fn render(template: &str, values: &[(&str, &str)]) -> Result<String, RefinerError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(i) = rest.find(['{', '}']) {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        if tail.starts_with("{{") || tail.starts_with("}}") {
            out.push_str(&tail[..1]);
            rest = &tail[2..];
            continue;
        }
        if let Some(after) = tail.strip_prefix('}') {
            out.push('}');
            rest = after;
            continue;
        }
        let end = tail
            .find('}')
            .ok_or_else(|| RefinerError::Template("unterminated placeholder".into()))?;
        let name = &tail[1..end];
        let value = values
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| RefinerError::UnresolvedPlaceholder(name.to_string()))?;
        out.push_str(value);
        rest = &tail[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn section(items: impl IntoIterator<Item = String>) -> String {
    let joined = items.into_iter().collect::<Vec<_>>().join("\n");
    if joined.is_empty() {
        NONE_MARKER.to_string()
    } else {
        joined
    }
}

/// The main refinement prompt for one function.
pub fn build_prompt(unit: &FunctionUnit) -> Result<String, RefinerError> {
    let call_sites = section(
        unit.call_sites
            .iter()
            .map(|c| format!("// in {}\n{}", c.caller_id, c.snippet)),
    );
    let globals = section(unit.globals.iter().cloned());
    let imports = section(unit.imports.iter().cloned());
    render(
        MAIN_TEMPLATE,
        &[
            ("unsafe_rust", unit.body.as_str()),
            ("call_sites", &call_sites),
            ("global", &globals),
            ("import", &imports),
        ],
    )
}

/// Compile-repair or test-repair message for a failed validation.
pub fn make_feedback_message(function: &str, result: &ValidationResult) -> Result<String, RefinerError> {
    if !result.compile.success {
        render(
            COMPILE_REPAIR_TEMPLATE,
            &[("function", function), ("errors", &result.feedback_text)],
        )
    } else if result.failed_tests().next().is_some() {
        render(
            TEST_REPAIR_TEMPLATE,
            &[("function", function), ("failures", &result.feedback_text)],
        )
    } else {
        Err(RefinerError::NothingToRepair)
    }
}
