//! Extraction of a candidate body from a model response.

use super::prompt::{FUNC_CLOSE, FUNC_CLOSE_ALT, FUNC_OPEN};
use super::RefinerError;

/// Extracts the text between the first `<FUNC>` and the next closing
/// delimiter, drops a surrounding code fence and trims blank edge lines.
pub fn postprocess(response: &str) -> Result<String, RefinerError> {
    let start = response
        .find(FUNC_OPEN)
        .ok_or(RefinerError::Extraction("no <FUNC> delimiter"))?
        + FUNC_OPEN.len();
    let rest = &response[start..];
    let end = [FUNC_CLOSE, FUNC_CLOSE_ALT]
        .iter()
        .filter_map(|d| rest.find(d))
        .min()
        .ok_or(RefinerError::Extraction("no closing </FUNC> delimiter"))?;
    let inner = strip_fence(&rest[..end]);
    let body = trim_blank_lines(inner);
    if body.trim().is_empty() {
        return Err(RefinerError::Extraction("empty function between delimiters"));
    }
    Ok(body.to_string())
}

/// Wraps a body in delimiters; inverse of [`postprocess`].
pub fn wrap(body: &str) -> String {
    format!("{FUNC_OPEN}\n{body}\n{FUNC_CLOSE}")
}

fn strip_fence(s: &str) -> &str {
    let t = s.trim();
    if !t.starts_with("```") || t.len() < 6 || !t.ends_with("```") {
        return s;
    }
    let Some(nl) = t.find('\n') else { return s };
    let inner = &t[nl + 1..t.len() - 3];
    if inner.contains("```") {
        return s;
    }
    inner
}

fn trim_blank_lines(s: &str) -> &str {
    let mut start = 0;
    for line in s.split_inclusive('\n') {
        if line.trim().is_empty() {
            start += line.len();
        } else {
            break;
        }
    }
    let s = &s[start..];
    let mut end = s.len();
    while end > 0 {
        let line_start = s[..end].trim_end_matches(['\n', '\r']).rfind('\n').map_or(0, |i| i + 1);
        let line = &s[line_start..end];
        if line.trim().is_empty() {
            end = line_start;
        } else {
            end = line_start + line.trim_end_matches(['\n', '\r']).len();
            break;
        }
    }
    &s[..end]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn direct_extraction() {
        assert_eq!(postprocess("<FUNC>fn f() {}</FUNC>").unwrap(), "fn f() {}");
    }

    #[test]
    fn backslash_close_is_accepted() {
        assert_eq!(postprocess("ok <FUNC>\nfn f() {}\n<\\FUNC> done").unwrap(), "fn f() {}");
    }

    #[test]
    fn fences_removed() {
        let r = "Here you go:\n<FUNC>\n```rust\nfn f() -> i32 {\n    1\n}\n```\n</FUNC>\n";
        assert_eq!(postprocess(r).unwrap(), "fn f() -> i32 {\n    1\n}");
    }

    #[test]
    fn first_pair_wins() {
        let r = "<FUNC>fn a() {}</FUNC> or <FUNC>fn b() {}</FUNC>";
        assert_eq!(postprocess(r).unwrap(), "fn a() {}");
    }

    #[test]
    fn missing_delimiters() {
        assert!(matches!(postprocess("fn f() {}"), Err(RefinerError::Extraction(_))));
        assert!(matches!(
            postprocess("<FUNC>fn f() {}"),
            Err(RefinerError::Extraction(_))
        ));
        assert!(matches!(
            postprocess("<FUNC>\n\n</FUNC>"),
            Err(RefinerError::Extraction(_))
        ));
    }

    #[test]
    fn keeps_inner_indentation_and_blank_lines() {
        let r = "<FUNC>\n\n  fn f() {\n\n      g();\n  }\n\n</FUNC>";
        assert_eq!(postprocess(r).unwrap(), "  fn f() {\n\n      g();\n  }");
    }

    proptest! {
        #[test]
        fn round_trip(
            lines in prop::collection::vec("[ a-z0-9(){};:=<>*&.,]{0,30}", 1..8)
                .prop_filter("non-blank edges", |ls| {
                    !ls.first().unwrap().trim().is_empty() && !ls.last().unwrap().trim().is_empty()
                })
                .prop_filter("no delimiters or fences", |ls| {
                    ls.iter().all(|l| !l.contains("FUNC>") && !l.contains("```"))
                })
        ) {
            let mut body = lines.join("\n");
            let trimmed_len = body.trim_end().len();
            body.truncate(trimmed_len);
            prop_assert_eq!(postprocess(&wrap(&body)).unwrap(), body);
        }
    }
}
