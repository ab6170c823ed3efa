#![allow(dead_code)]

use std::path::{Path, PathBuf};

use cqkit_core::cq::CqSet;
use cqkit_core::gateway::{load_transcript, Gateway};
use cqkit_core::ontology::{parse_ontology, verbalize, OntologyFormat, OntologyModel, VerbalizationDoc};
use cqkit_core::prompts::PromptRegistry;
use cqkit_core::story::UserStory;
use cqkit_core::testing::LabeledCq;
use cqkit_core::Engine;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn read_json<T: serde::de::DeserializeOwned>(relative: &str) -> T {
    let path = fixtures().join(relative);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn read_text(relative: &str) -> String {
    let path = fixtures().join(relative);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Engine answering only from the named transcript in `fixtures/transcripts`.
pub fn replay_engine(transcript: &str) -> Engine {
    let transcript = load_transcript(&fixtures().join("transcripts").join(format!("{transcript}.json")))
        .expect("transcript loads");
    Engine::new(Gateway::replay(transcript), PromptRegistry::bundled())
}

pub fn suite() -> Vec<LabeledCq> {
    read_json("suites/music-meta-suite.json")
}

pub fn listing_set() -> CqSet {
    read_json("cq_sets/listing1.json")
}

pub fn penny_lane_story() -> UserStory {
    read_json("stories/penny-lane.json")
}

pub fn ontology(name: &str) -> OntologyModel {
    let path = fixtures().join("ontologies").join(name);
    let format = OntologyFormat::from_path(&path).expect("known extension");
    parse_ontology(&read_text(&format!("ontologies/{name}")), format).expect("fixture parses").model
}

pub fn music_meta_doc() -> VerbalizationDoc {
    verbalize(&ontology("music-meta.ttl"))
}

pub const VALID_ONTOLOGIES: [&str; 4] = ["music-meta.ttl", "library.ttl", "unlabeled.ttl", "instruments.rdf"];

pub fn malformed_ontologies() -> Vec<(String, String)> {
    let dir = fixtures().join("ontologies/malformed");
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .expect("malformed dir")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "ttl"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read_to_string(&p).unwrap())
        })
        .collect()
}

/// The 24 CQs of the published clustering listing, grouped as published.
pub const LISTING_GROUPS: [(&str, &[&str]); 4] = [
    (
        "Music Artists",
        &[
            "Which is the name of a music artist?",
            "Which is the alias of a music artist?",
            "Which is the language of the name/alias of a music artist?",
            "Which award was a music artist nominated for?",
            "Which award was received by a music artist?",
            "Which music artists has a music artist been influenced by?",
            "Which music artist has a music artist collaborated with?",
            "Which is the start date of the activity of a music artist?",
            "Which is the end date of the activity of a music artist?",
        ],
    ),
    (
        "Musical Pieces and Composers",
        &[
            "Which is the composer of a musical piece?",
            "Is the composer of a musical piece known?",
            "In which time interval did the creation process took place?",
            "Where did the creation process took place?",
            "Which task was executed by a creative action?",
            "Which are the parts of a musical piece?",
            "Which collection is a musical piece member of?",
        ],
    ),
    (
        "Music Ensembles",
        &[
            "Which are the members of a music ensemble?",
            "Which role a music artist played within a music ensemble?",
            "Where was a music ensemble formed?",
        ],
    ),
    (
        "Musical Performances and Recordings",
        &[
            "Where was a musical piece performed?",
            "When was a musical piece performed?",
            "Which music artists took part to a musical performance?",
            "Which is the recording process that recorded a musical performance?",
            "Which is the recording produced by a recording process?",
        ],
    ),
];

/// The seven published example rows: (CQ, expected supported?, predicted yes?).
/// The blank prediction of the time-interval row is taken as yes.
pub const PUBLISHED_ROWS: [(&str, bool, bool); 7] = [
    ("Which award was received by a music artist?", true, true),
    ("In which time interval did the creation process took place?", true, true),
    ("Which is the recording process that recorded a musical performance?", true, true),
    ("Does a music algorithm favor a specific genre?", false, true),
    ("Is a music work associated to any case of plagiarism?", false, false),
    ("Which language is most used in a music artist's lyrics?", false, false),
    ("When was the album first sold?", false, true),
];

#[derive(Debug, serde::Deserialize)]
pub struct ElicitationScript {
    pub answers: Vec<String>,
    pub refinements: Vec<String>,
}

pub fn elicitation_script() -> ElicitationScript {
    read_json("scripts/elicitation.json")
}

/// Drives a fresh session through the scripted dialogue until it reaches
/// `phase`, answering every model call from the elicitation transcript.
pub async fn session_in(engine: &Engine, phase: cqkit_core::story::Phase) -> cqkit_core::story::ElicitationSession {
    use cqkit_core::story::{self, Phase};
    let script = elicitation_script();
    let (mut session, _) = story::start_session(&engine.prompts).expect("session starts");
    if phase == Phase::Eliciting {
        return session;
    }
    for answer in &script.answers {
        story::submit_answer(engine, &mut session, answer).await.expect("scripted answer");
    }
    if phase == Phase::Drafting {
        return session;
    }
    story::generate_draft(engine, &mut session).await.expect("draft");
    if phase == Phase::Refining {
        return session;
    }
    story::finalize(&mut session).expect("finalize");
    session
}

/// Canonical bytes of an artifact as the workspace stores it.
pub fn stored_bytes<A: cqkit_core::workspace::Artifact>(artifact: &A) -> Vec<u8> {
    let encoded = artifact.encode();
    let mut bytes = encoded.body;
    if let Some(sidecar) = encoded.sidecar {
        bytes.push(0);
        bytes.extend(sidecar);
    }
    bytes
}

/// Runs every pipeline once from the committed transcripts and returns the
/// stored bytes of each artifact it produces, keyed by a descriptive name.
pub async fn all_artifacts() -> std::collections::BTreeMap<String, Vec<u8>> {
    use cqkit_core::{analysis, cq, story, testing};
    let mut out = std::collections::BTreeMap::new();

    let engine = replay_engine("elicitation");
    let mut session = session_in(&engine, story::Phase::Refining).await;
    story::refine_draft(&engine, &mut session, &elicitation_script().refinements[0]).await.expect("refine");
    out.insert("story".into(), stored_bytes(&story::finalize(&mut session).expect("finalize")));

    let engine = replay_engine("penny-lane");
    let mut revisions = cq::extract_and_refine(&engine, &penny_lane_story()).await.expect("cq pipeline");
    let rerun = cq::rerun(&engine, revisions.last().unwrap(), Some("Distinguish composers from lyricists."))
        .await
        .expect("rerun");
    revisions.extend(rerun);
    for set in &revisions {
        out.insert(format!("cq_set r{}", set.revision), stored_bytes(set));
    }

    let engine = replay_engine("clustering");
    let (survivors, clustering) = analysis::analyze(&engine, &listing_set(), None).await.expect("analysis");
    out.insert("clustering".into(), stored_bytes(&clustering));
    let fixed = analysis::cluster(&engine, &survivors, Some(4)).await.expect("k = 4");
    out.insert("clustering k=4".into(), stored_bytes(&fixed));

    let engine = replay_engine("dedup");
    let (deduped, _) = analysis::deduplicate(&engine, &read_json("cq_sets/paraphrases.json")).await.expect("dedup");
    out.insert("deduplicated set".into(), stored_bytes(&deduped));

    for name in VALID_ONTOLOGIES {
        out.insert(format!("verbalization {name}"), stored_bytes(&verbalize(&ontology(name))));
    }

    let engine = replay_engine("music-meta-suite");
    let report = testing::run_suite(&engine, &music_meta_doc(), &suite(), "music-meta").await.expect("suite");
    out.insert("report".into(), stored_bytes(&report));
    out.insert("report markdown".into(), report.to_markdown().into_bytes());
    out
}
