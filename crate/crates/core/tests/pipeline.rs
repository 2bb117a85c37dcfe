mod common;

use std::fs;

use common::{dir_contents, fixture, mock_run_config};
use saferefine::pipeline::{
    check_schema, exit_code, read_report, replay, run_translation, ConfigFile, PipelineError, EXIT_NO_REFINEMENTS,
    EXIT_REFINED, REPORT_SCHEMA,
};
use saferefine::refiner::transcript::read_transcript;

const FIXES: &str = "mocks/three_fn_fixes.toml";
const ALL_FAIL: &str = "mocks/all_fail.toml";
const SUITE: Option<&str> = Some("suites/three_fn.toml");

fn schema_ok(path: &std::path::Path) {
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    check_schema(&doc, REPORT_SCHEMA).unwrap();
}

#[test]
fn refines_every_function_bottom_up() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = mock_run_config("three_fn", SUITE, FIXES, tmp.path(), 0);
    cfg.tree_dump_dir = Some(tmp.path().join("trees"));
    let report = run_translation(&cfg).unwrap();

    assert_eq!(report.order.last().map(String::as_str), Some("src/main.rs::main"));
    assert_eq!(report.project.refined, 3);
    assert_eq!(exit_code(&report), EXIT_REFINED);
    assert!(report
        .per_function
        .values()
        .all(|f| f.refined && f.best_depth.is_some()));
    assert!(report.project.sr > 0.0);
    assert_eq!(report.project.tests_passed, 3);
    assert_eq!(report.baseline.tests_passed, 3);
    assert_eq!(read_report(&tmp.path().join("report.json")).unwrap(), report);
    schema_ok(&tmp.path().join("report.json"));

    let transcript = read_transcript(&tmp.path().join("report.transcript.jsonl")).unwrap();
    assert!(transcript.config.is_some());
    assert_eq!(transcript.queries.len() as u64, report.project.total_queries);
    let per_fn: u64 = report.per_function.values().map(|f| f.queries).sum();
    assert_eq!(per_fn, report.project.total_queries);

    let mut dumps: Vec<_> = fs::read_dir(tmp.path().join("trees"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    dumps.sort();
    assert_eq!(dumps.len(), 3);
    assert_eq!(dumps[2], "002_src_main_rs__main.json");
    let dump: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("trees").join(&dumps[0])).unwrap()).unwrap();
    assert!(dump.is_object() || dump.is_array());

    let out = fs::read_to_string(tmp.path().join("project/src/main.rs")).unwrap();
    let original = fs::read_to_string(fixture("three_fn/src/main.rs")).unwrap();
    assert_ne!(out, original);
}

#[test]
fn failed_searches_fall_back_to_the_input() {
    let tmp = tempfile::tempdir().unwrap();
    let report = run_translation(&mock_run_config("three_fn", SUITE, ALL_FAIL, tmp.path(), 0)).unwrap();
    assert_eq!(exit_code(&report), EXIT_NO_REFINEMENTS);
    assert_eq!(report.project.frr, Some(0.0));
    assert_eq!(report.project.fcr, Some(1.0));
    assert_eq!(report.project.tpr, Some(1.0));
    assert_eq!(report.project.sr, 0.0);
    assert!(report.per_function.values().all(|f| !f.refined && f.queries > 0));
    assert_eq!(
        dir_contents(&tmp.path().join("project")),
        dir_contents(&fixture("three_fn"))
    );
}

#[test]
fn non_compiling_input_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let err = run_translation(&mock_run_config("broken", None, FIXES, tmp.path(), 0)).unwrap_err();
    match err {
        PipelineError::BaselineCompile { count, diagnostics } => {
            assert_eq!(count, 1);
            assert!(diagnostics.contains("mismatched types"));
        }
        other => panic!("unexpected error {other}"),
    }
    assert!(!tmp.path().join("report.json").exists());
}

#[test]
fn replay_reproduces_the_recorded_run() {
    let tmp = tempfile::tempdir().unwrap();
    let original = run_translation(&mock_run_config("three_fn", SUITE, FIXES, &tmp.path().join("run"), 3)).unwrap();
    let summary = replay(
        &tmp.path().join("run/report.transcript.jsonl"),
        &tmp.path().join("replay"),
    )
    .unwrap();
    assert_eq!(summary.matches_original, Some(true));
    assert_eq!(summary.unused_records, 0);
    assert_eq!(summary.report.without_timing(), original.without_timing());
    assert_eq!(
        dir_contents(&tmp.path().join("replay/project")),
        dir_contents(&tmp.path().join("run/project"))
    );
    assert!(tmp.path().join("replay/transcript.jsonl").exists());
}

#[test]
fn empty_suite_is_flagged() {
    let tmp = tempfile::tempdir().unwrap();
    let report = run_translation(&mock_run_config("three_fn", None, FIXES, tmp.path(), 0)).unwrap();
    assert!(report.project.vacuous.empty_suite);
    assert_eq!((report.project.tpr, report.project.ppr), (None, None));
    assert_eq!(report.project.pcr, 1.0);
    assert_eq!(report.project.refined, 3);
    schema_ok(&tmp.path().join("report.json"));
}

#[test]
fn project_without_functions_is_flagged() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("input");
    fs::create_dir_all(input.join("src")).unwrap();
    fs::write(
        input.join("Cargo.toml"),
        "[package]\nname = \"consts\"\nversion = \"0.1.0\"\nedition = \"2021\"\n\n[workspace]\n",
    )
    .unwrap();
    fs::write(input.join("src/lib.rs"), "pub const ANSWER: i32 = 42;\n").unwrap();
    let mut cfg = mock_run_config("three_fn", None, FIXES, &tmp.path().join("run"), 0);
    cfg.project_dir = input.clone();
    let report = run_translation(&cfg).unwrap();
    assert!(report.project.vacuous.no_functions);
    assert_eq!(
        (report.project.fcr, report.project.frr, report.project.avg_queries),
        (None, None, None)
    );
    assert_eq!(report.project.total_queries, 0);
    assert_eq!(report.project.sr, 1.0);
    assert_eq!(exit_code(&report), EXIT_NO_REFINEMENTS);
    schema_ok(&tmp.path().join("run/report.json"));
}

#[test]
fn occupied_output_dir_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir_all(tmp.path().join("project")).unwrap();
    fs::write(tmp.path().join("project/keep.txt"), "x").unwrap();
    let err = run_translation(&mock_run_config("three_fn", SUITE, FIXES, tmp.path(), 0)).unwrap_err();
    assert!(matches!(err, PipelineError::Config(_)), "{err}");
    assert_eq!(fs::read_to_string(tmp.path().join("project/keep.txt")).unwrap(), "x");
}

#[test]
fn sample_config_parses() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/example.toml");
    let file = ConfigFile::load(&path).unwrap();
    assert_eq!(file.models.len(), 2);
    assert_eq!(file.search.gen_children, 4);
    assert!(file.output.tree_dump.unwrap().is_absolute());
}
