//! Competency-question extraction and refinement.
//!
//! A story is turned into a raw list of CQs, then every CQ is checked for a
//! complex form and split, then named entities are abstracted away. Each
//! pass bumps the set revision. Every CQ carries its full lineage back to
//! the extracted root, so any refined question can be traced to its origin.
//!
//! Id scheme: extracted roots are `q1`, `q2`, ...; split children append
//! `.1`, `.2`, ... to the parent id; abstraction appends `.a`.

use futures::stream::{self, StreamExt, TryStreamExt};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

use crate::engine::{Engine, LlmError};
use crate::error::{self, ErrorCode};
use crate::prompts::PromptError;
use crate::story::UserStory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CqStatus {
    Raw,
    Atomic,
    Abstracted,
    Confirmed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineageOp {
    Extracted,
    SplitFrom,
    AbstractedFrom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageStep {
    pub op: LineageOp,
    pub parents: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompetencyQuestion {
    pub id: String,
    pub text: String,
    pub status: CqStatus,
    pub lineage: Vec<LineageStep>,
}

impl CompetencyQuestion {
    pub fn root(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            status: CqStatus::Raw,
            lineage: vec![LineageStep { op: LineageOp::Extracted, parents: Vec::new() }],
        }
    }

    fn derive(&self, id: String, text: String, op: LineageOp, status: CqStatus) -> Self {
        let mut lineage = self.lineage.clone();
        lineage.push(LineageStep { op, parents: vec![self.id.clone()] });
        Self { id, text, status, lineage }
    }

    fn abstraction_passes(&self) -> usize {
        self.lineage.iter().filter(|s| s.op == LineageOp::AbstractedFrom).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CqSet {
    pub story_ref: String,
    pub revision: u32,
    pub cqs: Vec<CompetencyQuestion>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CqError {
    #[error("story has an empty {0}")]
    EmptyStory(&'static str),
    #[error("the CQ set is empty")]
    EmptySet,
    #[error("could not parse a question list from the model reply: {0}")]
    ListParse(String),
    #[error("wrong state: {0}")]
    WrongState(String),
    #[error("CQ set violates an invariant: {0}")]
    Invalid(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

impl From<PromptError> for CqError {
    fn from(e: PromptError) -> Self {
        CqError::Llm(e.into())
    }
}

impl ErrorCode for CqError {
    fn code(&self) -> &'static str {
        match self {
            CqError::EmptyStory(_) => error::EMPTY_STORY,
            CqError::EmptySet => error::EMPTY_SET,
            CqError::ListParse(_) => error::LIST_PARSE_ERROR,
            CqError::WrongState(_) => error::WRONG_STATE,
            CqError::Invalid(_) => error::INVARIANT_VIOLATION,
            CqError::Llm(e) => e.code(),
        }
    }
}

impl CqSet {
    /// Structural invariants of a single revision.
    pub fn validate(&self) -> Result<(), CqError> {
        let mut seen = BTreeSet::new();
        for cq in &self.cqs {
            if !seen.insert(cq.id.as_str()) {
                return Err(CqError::Invalid(format!("duplicate id {}", cq.id)));
            }
            if cq.text.trim().is_empty() || !cq.text.ends_with('?') {
                return Err(CqError::Invalid(format!("{} is not a question: {:?}", cq.id, cq.text)));
            }
            match cq.lineage.first() {
                Some(LineageStep { op: LineageOp::Extracted, parents }) if parents.is_empty() => {}
                _ => return Err(CqError::Invalid(format!("{} lineage does not start at an extracted root", cq.id))),
            }
            for step in &cq.lineage[1..] {
                if step.op == LineageOp::Extracted || step.parents.is_empty() {
                    return Err(CqError::Invalid(format!("{} has a malformed lineage step", cq.id)));
                }
                if step.parents.iter().any(|p| p == &cq.id) {
                    return Err(CqError::Invalid(format!("{} lists itself as a parent", cq.id)));
                }
            }
        }
        Ok(())
    }

    pub fn texts(&self) -> Vec<&str> {
        self.cqs.iter().map(|c| c.text.as_str()).collect()
    }

    pub fn numbered(&self) -> String {
        numbered_list(self.cqs.iter().map(|c| c.text.as_str()))
    }

    fn min_status(&self) -> Option<CqStatus> {
        self.cqs.iter().map(|c| c.status).min()
    }

    /// Completed refinement cycles: the first split/abstract pass and every rerun.
    pub fn refinement_cycles(&self) -> usize {
        self.cqs.iter().map(CompetencyQuestion::abstraction_passes).max().unwrap_or(0)
    }
}

/// Checks lineage completeness over a revision history (oldest first):
/// every parent named by a CQ must exist in an earlier revision.
pub fn verify_lineage(revisions: &[CqSet]) -> Result<(), CqError> {
    let mut known: HashMap<&str, u32> = HashMap::new();
    let mut last_revision = 0;
    for set in revisions {
        set.validate()?;
        if set.revision <= last_revision {
            return Err(CqError::Invalid(format!("revision {} does not increase", set.revision)));
        }
        for cq in &set.cqs {
            for step in &cq.lineage[1..] {
                for parent in &step.parents {
                    match known.get(parent.as_str()) {
                        Some(&rev) if rev < set.revision => {}
                        _ => {
                            return Err(CqError::Invalid(format!(
                                "{} names parent {parent} that is not in an earlier revision",
                                cq.id
                            )))
                        }
                    }
                }
            }
        }
        for cq in &set.cqs {
            known.entry(cq.id.as_str()).or_insert(set.revision);
        }
        last_revision = set.revision;
    }
    Ok(())
}

pub fn numbered_list<'a>(items: impl IntoIterator<Item = &'a str>) -> String {
    items
        .into_iter()
        .enumerate()
        .map(|(i, t)| format!("{}. {t}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Items of an enumerated list reply: `N. text`, `N) text`, `- text`,
/// `* text` or `• text`. Other lines (preambles, blank lines) are ignored.
pub fn parse_list(reply: &str) -> Vec<String> {
    let mut items = Vec::new();
    for line in reply.lines() {
        let line = line.trim();
        let digits = line.chars().take_while(char::is_ascii_digit).count();
        let body = if digits > 0 {
            line[digits..].strip_prefix('.').or_else(|| line[digits..].strip_prefix(')'))
        } else {
            ["- ", "* ", "• "].iter().find_map(|b| line.strip_prefix(b))
        };
        if let Some(body) = body {
            let body = unquote(body.trim());
            if !body.is_empty() {
                items.push(body.to_string());
            }
        }
    }
    items
}

fn unquote(s: &str) -> &str {
    let s = s.trim_matches('*').trim();
    for (open, close) in [('"', '"'), ('“', '”')] {
        if let Some(inner) = s.strip_prefix(open).and_then(|r| r.strip_suffix(close)) {
            return inner.trim();
        }
    }
    s
}

fn parse_questions(reply: &str) -> Result<Vec<String>, CqError> {
    let items = parse_list(reply);
    if items.is_empty() {
        return Err(CqError::ListParse(format!("no list items in {reply:?}")));
    }
    if let Some(bad) = items.iter().find(|q| !q.ends_with('?')) {
        return Err(CqError::ListParse(format!("item is not a question: {bad:?}")));
    }
    Ok(items)
}

fn story_ref_of(story: &UserStory) -> String {
    crate::digest::content_id(story)
}

pub async fn extract(engine: &Engine, story: &UserStory) -> Result<CqSet, CqError> {
    if story.goal.trim().is_empty() {
        return Err(CqError::EmptyStory("goal"));
    }
    if story.scenario.trim().is_empty() {
        return Err(CqError::EmptyStory("scenario"));
    }
    let prompt = engine.render("cq_extract_user", &[("story", &story.to_markdown())])?;
    let reply = engine
        .ask("cq_extract", "cq_extract_system", prompt, engine.settings.analytic_temperature)
        .await?;
    let cqs = parse_questions(&reply)?
        .into_iter()
        .enumerate()
        .map(|(i, text)| CompetencyQuestion::root(format!("q{}", i + 1), text))
        .collect();
    Ok(CqSet { story_ref: story_ref_of(story), revision: 1, cqs })
}

/// Prior-refinement context prepended to rerun prompts.
#[derive(Debug, Clone)]
struct RerunContext(String);

fn with_context(context: Option<&RerunContext>, prompt: String) -> String {
    match context {
        Some(RerunContext(c)) => format!("{c}\n\n{prompt}"),
        None => prompt,
    }
}

enum SplitReply {
    Atomic,
    Parts(Vec<String>),
}

fn parse_split(reply: &str) -> Result<SplitReply, CqError> {
    if reply.trim().to_ascii_uppercase().starts_with("ATOMIC") {
        return Ok(SplitReply::Atomic);
    }
    let parts = parse_questions(reply)?;
    if parts.len() < 2 {
        return Err(CqError::ListParse(format!(
            "a split must yield at least two questions, got {}",
            parts.len()
        )));
    }
    Ok(SplitReply::Parts(parts))
}

async fn split_one(engine: &Engine, cq: &CompetencyQuestion, context: Option<&RerunContext>) -> Result<SplitReply, CqError> {
    let prompt = engine.render("cq_split_user", &[("question", &cq.text)])?;
    let reply = engine
        .ask("cq_split", "cq_split_system", with_context(context, prompt), engine.settings.analytic_temperature)
        .await?;
    parse_split(&reply)
}

async fn abstract_one(engine: &Engine, cq: &CompetencyQuestion, context: Option<&RerunContext>) -> Result<String, CqError> {
    let prompt = engine.render("cq_abstract_user", &[("question", &cq.text)])?;
    let reply = engine
        .ask("cq_abstract", "cq_abstract_system", with_context(context, prompt), engine.settings.analytic_temperature)
        .await?;
    parse_abstraction(&reply)
}

pub async fn split_non_atomic(engine: &Engine, set: &CqSet) -> Result<CqSet, CqError> {
    split_pass(engine, set, None).await
}

async fn split_pass(engine: &Engine, set: &CqSet, context: Option<&RerunContext>) -> Result<CqSet, CqError> {
    if set.cqs.is_empty() {
        return Err(CqError::EmptySet);
    }
    // One call per CQ; `buffered` keeps results in input order.
    // The futures are collected first so the stream's type does not name the
    // closure, which keeps callers' futures `Send` across lifetimes.
    let calls: Vec<_> = set.cqs.iter().map(|cq| split_one(engine, cq, context)).collect();
    let replies: Vec<SplitReply> =
        stream::iter(calls).buffered(engine.settings.concurrency.max(1)).try_collect().await?;

    let mut cqs = Vec::new();
    for (cq, reply) in set.cqs.iter().zip(replies) {
        match reply {
            SplitReply::Atomic => cqs.push(CompetencyQuestion { status: CqStatus::Atomic, ..cq.clone() }),
            SplitReply::Parts(parts) => {
                for (k, text) in parts.into_iter().enumerate() {
                    let id = format!("{}.{}", cq.id, k + 1);
                    cqs.push(cq.derive(id, text, LineageOp::SplitFrom, CqStatus::Atomic));
                }
            }
        }
    }
    Ok(CqSet { story_ref: set.story_ref.clone(), revision: set.revision + 1, cqs })
}

fn parse_abstraction(reply: &str) -> Result<String, CqError> {
    let line = reply
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .ok_or_else(|| CqError::ListParse("empty abstraction reply".into()))?;
    let line = line.strip_prefix("Answer:").map(str::trim).unwrap_or(line);
    let text = parse_list(line).into_iter().next().unwrap_or_else(|| unquote(line).to_string());
    if !text.ends_with('?') {
        return Err(CqError::ListParse(format!("abstraction is not a question: {text:?}")));
    }
    Ok(text)
}

pub async fn abstract_entities(engine: &Engine, set: &CqSet) -> Result<CqSet, CqError> {
    abstract_pass(engine, set, None).await
}

async fn abstract_pass(engine: &Engine, set: &CqSet, context: Option<&RerunContext>) -> Result<CqSet, CqError> {
    if set.cqs.is_empty() {
        return Err(CqError::EmptySet);
    }
    if set.min_status() == Some(CqStatus::Raw) {
        return Err(CqError::WrongState("abstraction needs every CQ to be at least atomic".into()));
    }
    let calls: Vec<_> = set.cqs.iter().map(|cq| abstract_one(engine, cq, context)).collect();
    let texts: Vec<String> = stream::iter(calls).buffered(engine.settings.concurrency.max(1)).try_collect().await?;

    let cqs = set
        .cqs
        .iter()
        .zip(texts)
        .map(|(cq, text)| cq.derive(format!("{}.a", cq.id), text, LineageOp::AbstractedFrom, CqStatus::Abstracted))
        .collect();
    Ok(CqSet { story_ref: set.story_ref.clone(), revision: set.revision + 1, cqs })
}

/// Extraction followed by the split and abstraction passes. Returns every
/// revision, oldest first.
pub async fn extract_and_refine(engine: &Engine, story: &UserStory) -> Result<Vec<CqSet>, CqError> {
    let extracted = extract(engine, story).await?;
    let split = split_non_atomic(engine, &extracted).await?;
    let abstracted = abstract_entities(engine, &split).await?;
    Ok(vec![extracted, split, abstracted])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfirmVerdict {
    Accept,
    Rerun,
}

/// Accepting marks every CQ confirmed. Rerunning repeats split and
/// abstraction with the previous list and the user's feedback in context;
/// each pass bumps the revision. Reruns are capped by
/// [`Settings::max_reruns`](crate::engine::Settings).
pub async fn confirm(
    engine: &Engine,
    set: &CqSet,
    verdict: ConfirmVerdict,
    feedback: Option<&str>,
) -> Result<CqSet, CqError> {
    if set.cqs.is_empty() {
        return Err(CqError::EmptySet);
    }
    if set.min_status() < Some(CqStatus::Abstracted) {
        return Err(CqError::WrongState("confirm requires a set that went through split and abstraction".into()));
    }
    match verdict {
        ConfirmVerdict::Accept => Ok(CqSet {
            cqs: set.cqs.iter().map(|c| CompetencyQuestion { status: CqStatus::Confirmed, ..c.clone() }).collect(),
            ..set.clone()
        }),
        ConfirmVerdict::Rerun => {
            let mut revisions = rerun(engine, set, feedback).await?;
            Ok(revisions.pop().expect("a rerun yields two revisions"))
        }
    }
}

/// The rerun behind [`confirm`], returning both revisions it creates (split,
/// then abstracted) so that callers persisting the result keep every parent
/// named by the lineage.
pub async fn rerun(engine: &Engine, set: &CqSet, feedback: Option<&str>) -> Result<Vec<CqSet>, CqError> {
    if set.cqs.is_empty() {
        return Err(CqError::EmptySet);
    }
    if set.min_status() < Some(CqStatus::Abstracted) {
        return Err(CqError::WrongState("rerun requires a set that went through split and abstraction".into()));
    }
    let reruns = set.refinement_cycles().saturating_sub(1);
    if reruns >= engine.settings.max_reruns as usize {
        return Err(CqError::WrongState(format!("{reruns} reruns already done; edit the set manually")));
    }
    let feedback = feedback.map(str::trim).filter(|f| !f.is_empty()).unwrap_or("(no feedback given)");
    let context =
        RerunContext(engine.render("cq_rerun_context", &[("previous", &set.numbered()), ("feedback", feedback)])?);
    let split = split_pass(engine, set, Some(&context)).await?;
    let abstracted = abstract_pass(engine, &split, Some(&context)).await?;
    Ok(vec![split, abstracted])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_parser_variants() {
        let reply = "Here are the questions:\n\n1. Who? \n  2) What?\n- Where?\n* \"When?\"\n• Why?\nNot an item";
        assert_eq!(parse_list(reply), vec!["Who?", "What?", "Where?", "When?", "Why?"]);
    }

    #[test]
    fn non_questions_are_rejected() {
        assert!(matches!(parse_questions("1. A statement."), Err(CqError::ListParse(_))));
        assert!(matches!(parse_questions("nothing here"), Err(CqError::ListParse(_))));
    }

    #[test]
    fn split_reply_contract() {
        assert!(matches!(parse_split("ATOMIC"), Ok(SplitReply::Atomic)));
        assert!(matches!(parse_split("atomic."), Ok(SplitReply::Atomic)));
        assert!(matches!(parse_split("1. A?\n2. B?"), Ok(SplitReply::Parts(p)) if p.len() == 2));
        assert!(matches!(parse_split("1. A?"), Err(CqError::ListParse(_))));
    }

    #[test]
    fn abstraction_reply_forms() {
        assert_eq!(parse_abstraction("What is X?").unwrap(), "What is X?");
        assert_eq!(parse_abstraction("Answer: What is X?\n").unwrap(), "What is X?");
        assert_eq!(parse_abstraction("1. \"What is X?\"").unwrap(), "What is X?");
        assert!(parse_abstraction("").is_err());
        assert!(parse_abstraction("No entity here").is_err());
    }

    fn chain() -> Vec<CqSet> {
        let root = CompetencyQuestion::root("q1", "A or B?");
        let r1 = CqSet { story_ref: "s".into(), revision: 1, cqs: vec![root.clone()] };
        let a = root.derive("q1.1".into(), "A?".into(), LineageOp::SplitFrom, CqStatus::Atomic);
        let b = root.derive("q1.2".into(), "B?".into(), LineageOp::SplitFrom, CqStatus::Atomic);
        let r2 = CqSet { story_ref: "s".into(), revision: 2, cqs: vec![a.clone(), b.clone()] };
        let aa = a.derive("q1.1.a".into(), "A?".into(), LineageOp::AbstractedFrom, CqStatus::Abstracted);
        let r3 = CqSet { story_ref: "s".into(), revision: 3, cqs: vec![aa] };
        vec![r1, r2, r3]
    }

    #[test]
    fn lineage_verification() {
        let revs = chain();
        verify_lineage(&revs).unwrap();
        assert_eq!(revs[2].refinement_cycles(), 1);
        // Dropping the middle revision orphans the abstracted CQ.
        assert!(verify_lineage(&[revs[0].clone(), revs[2].clone()]).is_err());
        // Out-of-order revisions are rejected.
        assert!(verify_lineage(&[revs[1].clone(), revs[0].clone()]).is_err());
    }

    #[test]
    fn structural_validation() {
        let mut set = chain()[1].clone();
        set.validate().unwrap();
        set.cqs[1].id = "q1.1".into();
        assert!(set.validate().is_err());
        let mut set = chain()[1].clone();
        set.cqs[0].text = "no question mark".into();
        assert!(set.validate().is_err());
        let mut set = chain()[1].clone();
        set.cqs[0].lineage.remove(0);
        assert!(set.validate().is_err());
    }
}
