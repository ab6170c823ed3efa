mod common;

use std::collections::BTreeSet;

use common::*;
use cqkit_core::analysis;
use cqkit_core::cq::{self, ConfirmVerdict, CqSet, CqStatus, LineageOp};
use cqkit_core::story::{self, AgentTurnKind, Phase, Slot, UserStory};
use cqkit_core::ErrorCode;

fn text_of<'a>(set: &'a CqSet, text: &str) -> &'a cq::CompetencyQuestion {
    set.cqs.iter().find(|c| c.text == text).unwrap_or_else(|| panic!("{text:?} missing from {:#?}", set.texts()))
}

#[tokio::test]
async fn penny_lane_extraction_split_and_abstraction() {
    let engine = replay_engine("penny-lane");
    let revisions = cq::extract_and_refine(&engine, &penny_lane_story()).await.unwrap();
    assert_eq!(revisions.len(), 3);
    let [extracted, split, abstracted] = [&revisions[0], &revisions[1], &revisions[2]];

    let compound = text_of(extracted, "What genres/styles are associated with Penny Lane?");
    assert_eq!(compound.status, CqStatus::Raw);

    let genres = text_of(split, "What genres are associated with Penny Lane?");
    let styles = text_of(split, "What styles are associated with Penny Lane?");
    for part in [genres, styles] {
        assert_eq!(part.lineage.last().unwrap().op, LineageOp::SplitFrom);
        assert_eq!(part.lineage.last().unwrap().parents, vec![compound.id.clone()]);
    }

    let abstract_genres = text_of(abstracted, "What genres are associated with the musical work?");
    let abstract_styles = text_of(abstracted, "What styles are associated with the musical work?");
    for (cq, parent) in [(abstract_genres, genres), (abstract_styles, styles)] {
        assert_eq!(cq.status, CqStatus::Abstracted);
        let ops: Vec<LineageOp> = cq.lineage.iter().map(|s| s.op).collect();
        assert_eq!(ops, vec![LineageOp::Extracted, LineageOp::SplitFrom, LineageOp::AbstractedFrom]);
        assert_eq!(cq.lineage[1].parents, vec![compound.id.clone()]);
        assert_eq!(cq.lineage[2].parents, vec![parent.id.clone()]);
    }
    assert!(abstracted.texts().iter().all(|t| !t.contains("Penny Lane")), "{:#?}", abstracted.texts());
    cq::verify_lineage(&revisions).unwrap();
}

#[tokio::test]
async fn abstraction_is_idempotent_on_abstracted_sets() {
    let engine = replay_engine("penny-lane");
    let revisions = cq::extract_and_refine(&engine, &penny_lane_story()).await.unwrap();
    let abstracted = revisions.last().unwrap();
    let again = cq::abstract_entities(&engine, abstracted).await.unwrap();
    assert_eq!(again.texts(), abstracted.texts());
}

#[tokio::test]
async fn rerun_with_feedback_bumps_revision_and_keeps_lineage() {
    let engine = replay_engine("penny-lane");
    let mut revisions = cq::extract_and_refine(&engine, &penny_lane_story()).await.unwrap();
    let abstracted = revisions.last().unwrap().clone();
    let rerun_revisions = cq::rerun(&engine, &abstracted, Some("Distinguish composers from lyricists.")).await.unwrap();
    let rerun = rerun_revisions.last().unwrap().clone();
    let confirmed = cq::confirm(&engine, &abstracted, ConfirmVerdict::Rerun, Some("Distinguish composers from lyricists."))
        .await
        .unwrap();
    assert_eq!(confirmed, rerun);
    assert!(rerun.revision > abstracted.revision);
    assert_eq!(rerun.refinement_cycles(), 2);
    text_of(&rerun, "Who composed the music of the musical work?");
    text_of(&rerun, "Who wrote the lyrics of the musical work?");
    assert!(!rerun.texts().contains(&"Who wrote the musical work?"));
    revisions.extend(rerun_revisions);
    cq::verify_lineage(&revisions).unwrap();

    let accepted = cq::confirm(&engine, &rerun, ConfirmVerdict::Accept, None).await.unwrap();
    assert!(accepted.cqs.iter().all(|c| c.status == CqStatus::Confirmed));
    assert_eq!(accepted.texts(), rerun.texts());
}

#[tokio::test]
async fn confirm_requires_an_abstracted_set() {
    let engine = replay_engine("penny-lane");
    let raw = cq::extract(&engine, &penny_lane_story()).await.unwrap();
    let err = cq::confirm(&engine, &raw, ConfirmVerdict::Accept, None).await.unwrap_err();
    assert_eq!(err.code(), "WRONG_STATE");
}

#[tokio::test]
async fn requests_outside_the_transcript_fail_with_missing_fixture() {
    let engine = replay_engine("penny-lane");
    let mut story = penny_lane_story();
    story.goal.push_str(" Also track radio plays.");
    let err = cq::extract(&engine, &story).await.unwrap_err();
    assert_eq!(err.code(), "MISSING_FIXTURE");
}

#[tokio::test]
async fn listing_clusters_reproduce_published_memberships() {
    let engine = replay_engine("clustering");
    let set = listing_set();
    let (survivors, clustering) = analysis::analyze(&engine, &set, None).await.unwrap();
    assert_eq!(survivors.cqs.len(), 24);
    assert!(clustering.dropped_duplicates.is_empty());
    clustering.validate(&survivors).unwrap();

    let text_by_id = |id: &str| set.cqs.iter().find(|c| c.id == id).unwrap().text.clone();
    for (label, members) in LISTING_GROUPS {
        let cluster = clustering
            .clusters
            .iter()
            .find(|c| c.label == label)
            .unwrap_or_else(|| panic!("no cluster labelled {label}"));
        let got: BTreeSet<String> = cluster.members.iter().map(|m| text_by_id(m)).collect();
        let want: BTreeSet<String> = members.iter().map(|s| s.to_string()).collect();
        assert_eq!(got, want, "{label}");
    }
}

#[tokio::test]
async fn clustering_with_fixed_k_partitions_into_k_groups() {
    let engine = replay_engine("clustering");
    let (survivors, _) = analysis::analyze(&engine, &listing_set(), None).await.unwrap();
    let clustering = analysis::cluster(&engine, &survivors, Some(4)).await.unwrap();
    assert_eq!(clustering.clusters.len(), 4);
    clustering.validate(&survivors).unwrap();
}

#[tokio::test]
async fn k_larger_than_the_set_is_rejected_before_any_call() {
    let engine = replay_engine("clustering");
    let set = listing_set();
    let err = analysis::cluster(&engine, &set, Some(25)).await.unwrap_err();
    assert_eq!(err.code(), "K_TOO_LARGE");
    assert_eq!(analysis::cluster(&engine, &set, Some(0)).await.unwrap_err().code(), "BAD_REQUEST");
}

#[tokio::test]
async fn paraphrases_collapse_and_dedup_is_idempotent() {
    let engine = replay_engine("dedup");
    let set: CqSet = read_json("cq_sets/paraphrases.json");
    let (survivors, dropped) = analysis::deduplicate(&engine, &set).await.unwrap();
    assert_eq!(dropped, vec![("q1".to_string(), "q2".to_string())]);
    assert_eq!(survivors.texts(), vec!["Which award was received by a music artist?", "Which is the name of a music artist?"]);
    let (again, dropped_again) = analysis::deduplicate(&engine, &survivors).await.unwrap();
    assert!(dropped_again.is_empty());
    assert_eq!(again.texts(), survivors.texts());
}

#[tokio::test]
async fn exact_duplicates_are_removed_without_a_model_call() {
    // The dedup transcript holds no entry for this set, so any model call fails.
    let engine = replay_engine("dedup");
    let mut set: CqSet = read_json("cq_sets/paraphrases.json");
    set.cqs.truncate(1);
    let mut copy = set.cqs[0].clone();
    copy.id = "q9".into();
    copy.text = format!("  {} ", copy.text);
    set.cqs.push(copy);
    let (survivors, dropped) = analysis::deduplicate(&engine, &set).await.unwrap();
    assert_eq!(survivors.cqs.len(), 1);
    assert_eq!(dropped, vec![("q1".to_string(), "q9".to_string())]);
}

#[tokio::test]
async fn scripted_elicitation_produces_the_final_story() {
    let engine = replay_engine("elicitation");
    let script = elicitation_script();
    let (mut session, opening) = story::start_session(&engine.prompts).unwrap();
    assert_eq!(opening.slot, Some(Slot::Persona));

    // A name alone does not fill the persona slot: the agent follows up.
    let follow_up = story::submit_answer(&engine, &mut session, &script.answers[0]).await.unwrap();
    assert_eq!(follow_up.kind, AgentTurnKind::FollowUp);
    assert_eq!(follow_up.slot, Some(Slot::Persona));

    let mut last = follow_up;
    for answer in &script.answers[1..] {
        last = story::submit_answer(&engine, &mut session, answer).await.unwrap();
    }
    assert_eq!(last.kind, AgentTurnKind::ElicitationComplete);
    assert_eq!(session.phase, Phase::Drafting);

    let draft = story::generate_draft(&engine, &mut session).await.unwrap();
    assert_eq!(draft.version, 1);
    let refined = story::refine_draft(&engine, &mut session, &script.refinements[0]).await.unwrap();
    assert_eq!(refined.version, 2);
    assert_eq!(session.history.len(), 2);

    let final_story = story::finalize(&mut session).unwrap();
    let expected: UserStory = read_json("stories/elicited-final.json");
    assert_eq!(final_story, expected);
    assert_eq!(session.phase, Phase::Finalized);
}

#[tokio::test]
async fn empty_answers_are_rejected_without_changing_the_session() {
    let engine = replay_engine("elicitation");
    let (mut session, _) = story::start_session(&engine.prompts).unwrap();
    let before = session.clone();
    let err = story::submit_answer(&engine, &mut session, "   ").await.unwrap_err();
    assert_eq!(err.code(), "EMPTY_ANSWER");
    assert_eq!(session, before);
}
