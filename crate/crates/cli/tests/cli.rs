mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::*;
use serde_json::Value;

use cqkit_core::analysis::Clustering;
use cqkit_core::cq::CqSet;
use cqkit_core::story::UserStory;
use cqkit_core::testing::TestReport;

fn cqkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cqkit"))
        .args(args)
        .env_remove("CQKIT_WORKSPACE")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fx(rel: &str) -> String {
    fixture(rel).to_str().unwrap().to_string()
}

fn stderr_error(output: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&output.stderr);
    let line = stderr.lines().rev().find(|l| l.trim_start().starts_with('{')).unwrap_or_else(|| panic!("no error JSON: {stderr}"));
    serde_json::from_str(line).unwrap()
}

fn assert_ok(output: &Output) {
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
}

#[test]
fn test_command_reproduces_the_confusion_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let md = dir.path().join("report.md");
    let output = cqkit(&[
        "--replay", &fx("transcripts/music-meta-suite.json"),
        "test", "--ontology", &fx("ontologies/music-meta.ttl"), "--suite", &fx("suites/music-meta-suite.json"),
        "--out", path(&out), "--markdown", path(&md),
    ]);
    assert_ok(&output);
    assert!(String::from_utf8_lossy(&output.stdout).contains("tp=25 tn=24 fp=3 fn=4"));
    let report: TestReport = read_json(&out);
    assert_eq!((report.matrix.tp, report.matrix.tn, report.matrix.fp, report.matrix.fn_), (25, 24, 3, 4));
    let markdown = std::fs::read_to_string(&md).unwrap();
    assert_eq!(markdown, report.to_markdown());

    // `report` renders the stored report identically.
    let output = cqkit(&["report", "--in", path(&out)]);
    assert_ok(&output);
    assert_eq!(String::from_utf8_lossy(&output.stdout), markdown);
}

#[test]
fn verbalize_is_byte_identical_across_runs_and_writes_a_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let mut bodies = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}.txt"));
        assert_ok(&cqkit(&["verbalize", "--in", &fx("ontologies/music-meta.ttl"), "--out", path(&out)]));
        let stats: Value = read_json(&out.with_extension("stats.json"));
        assert_eq!(stats["classes"], 24);
        bodies.push((std::fs::read(&out).unwrap(), std::fs::read(out.with_extension("stats.json")).unwrap()));
    }
    assert_eq!(bodies[0], bodies[1]);
    assert!(String::from_utf8_lossy(&bodies[0].0).contains("RecordingProcess"));

    let rdf = dir.path().join("instruments.txt");
    assert_ok(&cqkit(&["verbalize", "--in", &fx("ontologies/instruments.rdf"), "--out", path(&rdf)]));

    let bad = cqkit(&["verbalize", "--in", &fx("ontologies/malformed/missing_dot.ttl"), "--out", path(&dir.path().join("x.txt"))]);
    assert_eq!(bad.status.code(), Some(4));
    let err = stderr_error(&bad);
    assert_eq!(err["code"], "SYNTAX_ERROR");
    assert_eq!(err["details"]["line"], 5);
}

#[test]
fn scripted_story_matches_the_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("story.json");
    let md = dir.path().join("story.md");
    let output = cqkit(&[
        "--replay", &fx("transcripts/elicitation.json"),
        "story", "--answers", &fx("scripts/elicitation.json"), "--out", path(&out), "--markdown", path(&md),
    ]);
    assert_ok(&output);
    let story: UserStory = read_json(&out);
    let expected: UserStory = read_json(&fixture("stories/elicited-final.json"));
    assert_eq!(story, expected);
    assert_eq!(std::fs::read_to_string(&md).unwrap(), expected.to_markdown());
}

#[test]
fn extract_and_analyze_write_valid_artifacts_and_store_them() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let project = cqkit_core::workspace::Workspace::open(&ws).unwrap().create_project("music").unwrap().id;
    let out = dir.path().join("cqs.json");
    let history = dir.path().join("history.json");
    let output = cqkit(&[
        "--replay", &fx("transcripts/penny-lane.json"), "--workspace", path(&ws), "--project", &project,
        "extract", "--story", &fx("stories/penny-lane.json"), "--out", path(&out), "--history", path(&history),
    ]);
    assert_ok(&output);
    let set: CqSet = read_json(&out);
    let revisions: Vec<CqSet> = read_json(&history);
    assert_eq!(revisions.len(), 3);
    assert_eq!(revisions.last(), Some(&set));
    assert!(set.texts().contains(&"What genres are associated with the musical work?"));
    // Unknown projects are refused rather than created implicitly.
    let unknown = cqkit(&["--workspace", path(&ws), "--project", "nope", "verbalize", "--in", &fx("ontologies/music-meta.ttl"), "--out", path(&dir.path().join("v.txt"))]);
    assert_eq!(unknown.status.code(), Some(3));
    let stored = std::fs::read_dir(ws.join(&project).join("cq_sets")).unwrap().count();
    assert_eq!(stored, 3);

    let clustering_out = dir.path().join("clusters.json");
    let survivors_out = dir.path().join("survivors.json");
    let output = cqkit(&[
        "--replay", &fx("transcripts/clustering.json"),
        "analyze", "--cqs", &fx("cq_sets/listing1.json"), "--out", path(&clustering_out), "--survivors", path(&survivors_out),
    ]);
    assert_ok(&output);
    let clustering: Clustering = read_json(&clustering_out);
    let labels: Vec<&str> = clustering.clusters.iter().map(|c| c.label.as_str()).collect();
    assert!(labels.contains(&"Music Artists"), "{labels:?}");
    let survivors: CqSet = read_json(&survivors_out);
    let members: usize = clustering.clusters.iter().map(|c| c.members.len()).sum();
    assert_eq!(members, survivors.cqs.len());

    let output = cqkit(&[
        "--replay", &fx("transcripts/clustering.json"),
        "analyze", "--cqs", &fx("cq_sets/listing1.json"), "--k", "99", "--out", path(&clustering_out),
    ]);
    assert_eq!(output.status.code(), Some(4));
    assert_eq!(stderr_error(&output)["code"], "K_TOO_LARGE");
}

#[test]
fn errors_map_to_documented_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.json");

    let missing = cqkit(&[
        "--replay", &fx("transcripts/penny-lane.json"),
        "extract", "--story", path(&dir.path().join("absent.json")), "--out", path(&out),
    ]);
    assert_eq!(missing.status.code(), Some(3));
    assert_eq!(stderr_error(&missing)["code"], "NOT_FOUND");

    // A story the transcript has never seen cannot be replayed.
    let mut story: Value = read_json(&fixture("stories/penny-lane.json"));
    story["scenario"] = Value::String("An unrecorded scenario about jazz festivals.".into());
    let drifted = dir.path().join("drifted.json");
    std::fs::write(&drifted, serde_json::to_vec(&story).unwrap()).unwrap();
    let output = cqkit(&["--replay", &fx("transcripts/penny-lane.json"), "extract", "--story", path(&drifted), "--out", path(&out)]);
    assert_eq!(output.status.code(), Some(7));
    assert_eq!(stderr_error(&output)["code"], "MISSING_FIXTURE");
    assert!(!out.exists());

    let output = cqkit(&["--project", "p", "verbalize", "--in", &fx("ontologies/music-meta.ttl"), "--out", path(&out)]);
    assert_eq!(output.status.code(), Some(4));
    assert_eq!(stderr_error(&output)["code"], "BAD_CONFIG");

    let output = cqkit(&["--mode", "replay", "extract", "--story", &fx("stories/penny-lane.json"), "--out", path(&out)]);
    assert_eq!(stderr_error(&output)["code"], "BAD_CONFIG");

    let output = cqkit(&["extract"]);
    assert_eq!(output.status.code(), Some(2));
}
