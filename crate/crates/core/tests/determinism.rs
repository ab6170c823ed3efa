mod common;

use common::*;

#[tokio::test]
async fn ten_replays_produce_byte_identical_artifacts() {
    let first = all_artifacts().await;
    assert!(first.keys().any(|k| k.starts_with("cq_set")));
    for run in 1..10 {
        let again = all_artifacts().await;
        assert_eq!(again.keys().collect::<Vec<_>>(), first.keys().collect::<Vec<_>>());
        for (name, bytes) in &first {
            assert!(again[name] == *bytes, "run {run}: {name} differs");
        }
    }
}

#[tokio::test]
async fn saved_artifacts_have_stable_ids_and_files() {
    use cqkit_core::cq;
    use cqkit_core::workspace::Workspace;

    let mut trees = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(dir.path()).unwrap();
        let project = ws.create_project("determinism").unwrap();
        let engine = replay_engine("penny-lane");
        let revisions = cq::extract_and_refine(&engine, &penny_lane_story()).await.unwrap();
        let mut files = Vec::new();
        for set in &revisions {
            let r = ws.save(&project.id, set).unwrap();
            let bytes = std::fs::read(dir.path().join(&project.id).join(&r.file)).unwrap();
            files.push((r.id, r.file, bytes));
        }
        trees.push(files);
    }
    assert_eq!(trees[0], trees[1]);
}
