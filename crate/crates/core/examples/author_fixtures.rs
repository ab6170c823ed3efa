//! Regenerates the replay transcripts under `fixtures/transcripts/`.
//!
//! Every pipeline is run in record mode against a scripted transport whose
//! replies come from the rule files in `fixtures/authoring/`. A rule matches
//! a request when the tag is equal and the last user message contains every
//! listed substring; the first matching rule wins. A request that no rule
//! matches aborts the run, so fixtures never contain accidental replies.
//!
//! Usage: cargo run -p cqkit-core --example author_fixtures -- [FIXTURES_DIR]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use cqkit_core::analysis;
use cqkit_core::cq::{self, CompetencyQuestion, ConfirmVerdict, CqSet};
use cqkit_core::gateway::{
    ChatRequest, ChatResponse, FnTransport, Gateway, ProviderConfig, ProviderError, Role, Transcript,
};
use cqkit_core::ontology::{parse_ontology, verbalize, OntologyFormat};
use cqkit_core::prompts::PromptRegistry;
use cqkit_core::story::{self, UserStory};
use cqkit_core::testing::{self, LabeledCq};
use cqkit_core::{Engine, Settings};

#[derive(Debug, Clone, Deserialize)]
struct Rule {
    tag: String,
    contains: Vec<String>,
    reply: String,
    /// Reply with the text after the last "Question: " line (identity rewrite).
    #[serde(default)]
    echo_question: bool,
}

#[derive(Debug, Deserialize)]
struct RuleFile {
    rules: Vec<Rule>,
}

#[derive(Debug, Deserialize)]
struct ElicitationScript {
    answers: Vec<String>,
    refinements: Vec<String>,
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
}

fn last_user_text(request: &ChatRequest) -> &str {
    request.messages.iter().rev().find(|m| m.role == Role::User).map(|m| m.text.as_str()).unwrap_or("")
}

fn respond(rules: &[Rule], request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
    let user = last_user_text(request);
    let rule = rules
        .iter()
        .find(|r| r.tag == request.tag && r.contains.iter().all(|c| user.contains(c.as_str())))
        .unwrap_or_else(|| panic!("no authored reply for tag {:?}; user message:\n{user}", request.tag));
    if rule.echo_question {
        let question = user.rsplit("Question: ").next().unwrap_or("").lines().next().unwrap_or("").trim();
        return Ok(ChatResponse::complete(question));
    }
    Ok(ChatResponse::complete(rule.reply.clone()))
}

fn recording_engine(rules: Vec<Rule>) -> Engine {
    let provider = ProviderConfig {
        provider: "authored".into(),
        base_url: String::new(),
        model: "scripted-fixture".into(),
        // The gateway insists on a credential outside replay; the scripted
        // transport ignores it and it is never written to a transcript.
        api_key: Some("scripted".into()),
    };
    let transport = Arc::new(FnTransport(move |request: &ChatRequest| respond(&rules, request)));
    // One request at a time keeps the entry order of the transcript stable.
    let gateway = Gateway::record(provider, transport).with_concurrency(1);
    Engine::new(gateway, PromptRegistry::bundled())
        .with_settings(Settings { concurrency: 1, ..Settings::default() })
}

fn save_transcript(engine: &Engine, path: &Path) -> Transcript {
    let transcript = engine.gateway.transcript();
    transcript.save(path).expect("transcript written");
    println!("{}: {} entries", path.display(), transcript.entries.len());
    transcript
}

async fn suite(dir: &Path) {
    let replies: std::collections::BTreeMap<String, String> = read(&dir.join("authoring/suite-replies.json"));
    let suite: Vec<LabeledCq> = read(&dir.join("suites/music-meta-suite.json"));
    let rules = suite
        .iter()
        .map(|item| Rule {
            tag: "test".into(),
            contains: vec![format!("Competency question: {}\n", item.cq.text)],
            reply: replies.get(&item.cq.id).unwrap_or_else(|| panic!("no reply for {}", item.cq.id)).clone(),
            echo_question: false,
        })
        .collect();
    let engine = recording_engine(rules);
    let ttl = std::fs::read_to_string(dir.join("ontologies/music-meta.ttl")).expect("ontology");
    let model = parse_ontology(&ttl, OntologyFormat::Turtle).expect("ontology parses").model;
    let doc = verbalize(&model);
    let report = testing::run_suite(&engine, &doc, &suite, "music-meta").await.expect("suite runs");
    println!("suite matrix: {:?}", report.matrix);
    save_transcript(&engine, &dir.join("transcripts/music-meta-suite.json"));
}

async fn penny_lane(dir: &Path) {
    let engine = recording_engine(read::<RuleFile>(&dir.join("authoring/penny-lane.json")).rules);
    let story: UserStory = read(&dir.join("stories/penny-lane.json"));
    let revisions = cq::extract_and_refine(&engine, &story).await.expect("pipeline runs");
    let abstracted = revisions.last().expect("three revisions");
    cq::abstract_entities(&engine, abstracted).await.expect("second abstraction pass");
    let rerun = cq::confirm(&engine, abstracted, ConfirmVerdict::Rerun, Some("Distinguish composers from lyricists."))
        .await
        .expect("rerun");
    for c in &rerun.cqs {
        println!("  rerun r{}: {} {}", rerun.revision, c.id, c.text);
    }
    save_transcript(&engine, &dir.join("transcripts/penny-lane.json"));
}

fn listing_set(dir: &Path) -> CqSet {
    let suite: Vec<LabeledCq> = read(&dir.join("suites/music-meta-suite.json"));
    let cqs: Vec<CompetencyQuestion> = suite
        .iter()
        .take(24)
        .enumerate()
        .map(|(i, item)| CompetencyQuestion::root(format!("q{}", i + 1), item.cq.text.clone()))
        .collect();
    CqSet { story_ref: "music-meta-requirements".into(), revision: 1, cqs }
}

async fn clustering(dir: &Path) {
    let engine = recording_engine(read::<RuleFile>(&dir.join("authoring/clustering.json")).rules);
    let set = listing_set(dir);
    write_json(&dir.join("cq_sets/listing1.json"), &set);
    let (survivors, clustering) = analysis::analyze(&engine, &set, None).await.expect("analysis runs");
    for c in &clustering.clusters {
        println!("  {}: {}", c.label, c.members.len());
    }
    analysis::cluster(&engine, &survivors, Some(4)).await.expect("k = 4 clustering");
    save_transcript(&engine, &dir.join("transcripts/clustering.json"));
}

async fn dedup(dir: &Path) {
    let engine = recording_engine(read::<RuleFile>(&dir.join("authoring/dedup.json")).rules);
    let set = CqSet {
        story_ref: "music-meta-requirements".into(),
        revision: 1,
        cqs: vec![
            CompetencyQuestion::root("q1", "Which award was received by a music artist?"),
            CompetencyQuestion::root("q2", "What award did a music artist receive?"),
            CompetencyQuestion::root("q3", "Which is the name of a music artist?"),
        ],
    };
    write_json(&dir.join("cq_sets/paraphrases.json"), &set);
    let (survivors, dropped) = analysis::deduplicate(&engine, &set).await.expect("dedup runs");
    println!("  dropped {dropped:?}");
    analysis::deduplicate(&engine, &survivors).await.expect("second dedup pass");
    save_transcript(&engine, &dir.join("transcripts/dedup.json"));
}

async fn elicitation(dir: &Path) {
    let engine = recording_engine(read::<RuleFile>(&dir.join("authoring/elicitation.json")).rules);
    let script: ElicitationScript = read(&dir.join("scripts/elicitation.json"));
    let (mut session, _) = story::start_session(&engine.prompts).expect("session starts");
    for answer in &script.answers {
        let turn = story::submit_answer(&engine, &mut session, answer).await.expect("answer accepted");
        println!("  agent: {:?} {}", turn.kind, turn.text);
    }
    story::generate_draft(&engine, &mut session).await.expect("draft");
    for feedback in &script.refinements {
        story::refine_draft(&engine, &mut session, feedback).await.expect("refinement");
    }
    let final_story = story::finalize(&mut session).expect("finalize");
    write_json(&dir.join("stories/elicited-final.json"), &final_story);
    save_transcript(&engine, &dir.join("transcripts/elicitation.json"));
}

#[tokio::main]
async fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"));
    std::fs::create_dir_all(dir.join("transcripts")).expect("fixtures dir");
    std::fs::create_dir_all(dir.join("cq_sets")).expect("fixtures dir");
    suite(&dir).await;
    penny_lane(&dir).await;
    clustering(&dir).await;
    dedup(&dir).await;
    elicitation(&dir).await;
}
