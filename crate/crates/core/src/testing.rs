//! Prompt-driven CQ coverage testing.
//!
//! Each CQ is put to the model in its own context-free exchange together with
//! the full ontology verbalization; the model answers Yes/No and explains.
//! Labeled suites are tallied into a confusion matrix with "supported" as the
//! positive class.

use futures::stream::{self, StreamExt, TryStreamExt};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cq::CompetencyQuestion;
use crate::digest::content_id;
use crate::engine::{Engine, LlmError};
use crate::error::{self, ErrorCode};
use crate::ontology::VerbalizationDoc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Yes,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expected {
    Supported,
    NotSupported,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub cq_id: String,
    pub answer: Answer,
    pub explanation: String,
    pub raw_reply: String,
    /// Set when the reply carried no verdict and `answer` is the conservative default.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub flagged: bool,
    /// Label the CQ carried in its suite, when the verdict came from a suite run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Expected>,
}

/// One row of a suite file: `{id, text, expected}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteItem {
    pub id: String,
    pub text: String,
    pub expected: Expected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "SuiteItem", into = "SuiteItem")]
pub struct LabeledCq {
    pub cq: CompetencyQuestion,
    pub expected: Expected,
}

impl From<SuiteItem> for LabeledCq {
    fn from(item: SuiteItem) -> Self {
        Self { cq: CompetencyQuestion::root(item.id, item.text), expected: item.expected }
    }
}

impl From<LabeledCq> for SuiteItem {
    fn from(l: LabeledCq) -> Self {
        Self { id: l.cq.id, text: l.cq.text, expected: l.expected }
    }
}

pub fn parse_suite(json: &str) -> Result<Vec<LabeledCq>, TestingError> {
    let suite: Vec<LabeledCq> =
        serde_json::from_str(json).map_err(|e| TestingError::InvalidSuite(e.to_string()))?;
    validate_suite(&suite)?;
    Ok(suite)
}

pub fn validate_suite(suite: &[LabeledCq]) -> Result<(), TestingError> {
    if suite.is_empty() {
        return Err(TestingError::EmptySuite);
    }
    let mut seen = std::collections::HashSet::new();
    for item in suite {
        if item.cq.id.trim().is_empty() || item.cq.text.trim().is_empty() {
            return Err(TestingError::InvalidSuite("suite items need a non-empty id and text".into()));
        }
        if !seen.insert(item.cq.id.as_str()) {
            return Err(TestingError::InvalidSuite(format!("duplicate CQ id {}", item.cq.id)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn record(&mut self, expected: Expected, answer: Answer) {
        match (expected, answer) {
            (Expected::Supported, Answer::Yes) => self.tp += 1,
            (Expected::Supported, Answer::No) => self.fn_ += 1,
            (Expected::NotSupported, Answer::Yes) => self.fp += 1,
            (Expected::NotSupported, Answer::No) => self.tn += 1,
        }
    }
}

/// Metrics as exact fractions; precision and recall are absent when their
/// denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactMetrics {
    pub accuracy: Ratio<u64>,
    pub precision: Option<Ratio<u64>>,
    pub recall: Option<Ratio<u64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

fn to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

impl From<ExactMetrics> for Metrics {
    fn from(m: ExactMetrics) -> Self {
        Self { accuracy: to_f64(m.accuracy), precision: m.precision.map(to_f64), recall: m.recall.map(to_f64) }
    }
}

pub fn exact_metrics(matrix: &ConfusionMatrix) -> Result<ExactMetrics, TestingError> {
    let total = matrix.total();
    if total == 0 {
        return Err(TestingError::EmptyMatrix);
    }
    let ratio = |num: u64, den: u64| (den > 0).then(|| Ratio::new(num, den));
    Ok(ExactMetrics {
        accuracy: Ratio::new(matrix.tp + matrix.tn, total),
        precision: ratio(matrix.tp, matrix.tp + matrix.fp),
        recall: ratio(matrix.tp, matrix.tp + matrix.fn_),
    })
}

pub fn compute_metrics(matrix: &ConfusionMatrix) -> Result<Metrics, TestingError> {
    exact_metrics(matrix).map(Metrics::from)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub verdicts: Vec<Verdict>,
    pub matrix: ConfusionMatrix,
    pub metrics: Metrics,
    pub ontology_ref: String,
    pub suite_ref: String,
}

impl TestReport {
    /// Checks tally conservation and that the stored metrics match the matrix.
    pub fn validate(&self) -> Result<(), TestingError> {
        if self.matrix.total() != self.verdicts.len() as u64 {
            return Err(TestingError::Invalid(format!(
                "matrix counts {} verdicts, report has {}",
                self.matrix.total(),
                self.verdicts.len()
            )));
        }
        if compute_metrics(&self.matrix)? != self.metrics {
            return Err(TestingError::Invalid("metrics do not match the matrix".into()));
        }
        Ok(())
    }

    pub fn to_markdown(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{:.1}%", v * 100.0));
        let m = &self.matrix;
        let mut out = String::from("# CQ test report\n\n");
        out.push_str(&format!("Ontology: `{}`  \nSuite: `{}`\n\n", self.ontology_ref, self.suite_ref));
        out.push_str("| | predicted yes | predicted no |\n|---|---|---|\n");
        out.push_str(&format!("| supported | {} (TP) | {} (FN) |\n", m.tp, m.fn_));
        out.push_str(&format!("| not supported | {} (FP) | {} (TN) |\n\n", m.fp, m.tn));
        out.push_str("| metric | value |\n|---|---|\n");
        out.push_str(&format!("| accuracy | {} |\n", pct(Some(self.metrics.accuracy))));
        out.push_str(&format!("| precision | {} |\n", pct(self.metrics.precision)));
        out.push_str(&format!("| recall | {} |\n\n", pct(self.metrics.recall)));
        out.push_str("| CQ | expected | answer | explanation |\n|---|---|---|---|\n");
        for v in &self.verdicts {
            let expected = match v.expected {
                Some(Expected::Supported) => "supported",
                Some(Expected::NotSupported) => "not supported",
                None => "",
            };
            let answer = match (v.answer, v.flagged) {
                (Answer::Yes, _) => "yes",
                (Answer::No, false) => "no",
                (Answer::No, true) => "no (unparseable)",
            };
            let explanation = v.explanation.replace('|', "\\|").replace('\n', " ");
            out.push_str(&format!("| {} | {expected} | {answer} | {explanation} |\n", v.cq_id));
        }
        out
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TestingError {
    #[error("the ontology verbalization is empty")]
    EmptyVerbalization,
    #[error("the test suite is empty")]
    EmptySuite,
    #[error("confusion matrix has no entries")]
    EmptyMatrix,
    #[error("reply carries no yes/no verdict: {0:?}")]
    UnparseableVerdict(String),
    #[error("invalid suite: {0}")]
    InvalidSuite(String),
    #[error("invalid report: {0}")]
    Invalid(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

impl ErrorCode for TestingError {
    fn code(&self) -> &'static str {
        match self {
            TestingError::EmptyVerbalization => error::BAD_REQUEST,
            TestingError::EmptySuite | TestingError::EmptyMatrix => error::EMPTY_SET,
            TestingError::UnparseableVerdict(_) => error::UNPARSEABLE_VERDICT,
            TestingError::InvalidSuite(_) => error::BAD_REQUEST,
            TestingError::Invalid(_) => error::INVARIANT_VIOLATION,
            TestingError::Llm(e) => e.code(),
        }
    }
}

impl From<crate::prompts::PromptError> for TestingError {
    fn from(e: crate::prompts::PromptError) -> Self {
        TestingError::Llm(e.into())
    }
}

/// The first case-insensitive standalone "yes"/"no" decides the answer; the
/// text after the first sentence is the explanation (or, for a one-sentence
/// reply, the remainder after the verdict word).
pub fn parse_verdict(reply: &str) -> Option<(Answer, String)> {
    let mut verdict = None;
    let mut word_start = None;
    let bytes: Vec<(usize, char)> = reply.char_indices().collect();
    for (k, &(i, c)) in bytes.iter().enumerate() {
        let is_word = c.is_alphanumeric() || c == '_' || c == '\'';
        if is_word && word_start.is_none() {
            word_start = Some(i);
        }
        let at_end = k + 1 == bytes.len();
        if let Some(start) = word_start {
            if !is_word || at_end {
                let end = if is_word { i + c.len_utf8() } else { i };
                let word = &reply[start..end];
                word_start = None;
                if word.eq_ignore_ascii_case("yes") {
                    verdict = Some((Answer::Yes, end));
                } else if word.eq_ignore_ascii_case("no") {
                    verdict = Some((Answer::No, end));
                }
                if verdict.is_some() {
                    break;
                }
            }
        }
    }
    let (answer, verdict_end) = verdict?;
    let explanation = match first_sentence_end(reply) {
        Some(end) if end < reply.len() && !reply[end..].trim().is_empty() => reply[end..].trim(),
        _ => reply[verdict_end..].trim_start_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace()).trim(),
    };
    Some((answer, explanation.to_string()))
}

/// Byte offset just past the first sentence terminator that is followed by
/// whitespace or the end of the text.
fn first_sentence_end(text: &str) -> Option<usize> {
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            match chars.peek() {
                None => return Some(i + 1),
                Some((_, next)) if next.is_whitespace() => return Some(i + 1),
                _ => {}
            }
        }
    }
    None
}

/// Asks whether the documented ontology covers one CQ, in a fresh exchange
/// that contains nothing but the verbalization and this CQ.
pub async fn test_cq(
    engine: &Engine,
    verbalization: &VerbalizationDoc,
    cq: &CompetencyQuestion,
) -> Result<Verdict, TestingError> {
    if verbalization.text.trim().is_empty() {
        return Err(TestingError::EmptyVerbalization);
    }
    if cq.text.trim().is_empty() {
        return Err(TestingError::InvalidSuite(format!("CQ {} has empty text", cq.id)));
    }
    let prompt = engine.render("test_user", &[("verbalization", &verbalization.text), ("question", &cq.text)])?;
    let reply = engine.ask("test", "test_system", prompt, engine.settings.analytic_temperature).await?;
    let Some((answer, explanation)) = parse_verdict(&reply) else {
        return Err(TestingError::UnparseableVerdict(reply));
    };
    Ok(Verdict { cq_id: cq.id.clone(), answer, explanation, raw_reply: reply, flagged: false, expected: None })
}

/// Verdict for one suite item; an unparseable reply becomes a flagged "no".
async fn suite_item_verdict(
    engine: &Engine,
    verbalization: &VerbalizationDoc,
    item: &LabeledCq,
) -> Result<Verdict, TestingError> {
    let verdict = match test_cq(engine, verbalization, &item.cq).await {
        Ok(v) => v,
        Err(TestingError::UnparseableVerdict(raw)) => {
            tracing::warn!(cq = %item.cq.id, "unparseable verdict; counting as no");
            Verdict {
                cq_id: item.cq.id.clone(),
                answer: Answer::No,
                explanation: String::new(),
                raw_reply: raw,
                flagged: true,
                expected: None,
            }
        }
        Err(e) => return Err(e),
    };
    Ok(Verdict { expected: Some(item.expected), ..verdict })
}

/// Tests every suite item independently (bounded fan-out) and tallies the
/// verdicts. An unparseable reply counts as "no" with `flagged` set.
pub async fn run_suite(
    engine: &Engine,
    verbalization: &VerbalizationDoc,
    suite: &[LabeledCq],
    ontology_ref: impl Into<String>,
) -> Result<TestReport, TestingError> {
    validate_suite(suite)?;
    if verbalization.text.trim().is_empty() {
        return Err(TestingError::EmptyVerbalization);
    }
    // The futures are collected first so the stream's type does not name the
    // closure, which keeps callers' futures `Send` across lifetimes.
    let calls: Vec<_> = suite.iter().map(|item| suite_item_verdict(engine, verbalization, item)).collect();
    let verdicts: Vec<Verdict> =
        stream::iter(calls).buffered(engine.settings.concurrency.max(1)).try_collect().await?;

    let mut matrix = ConfusionMatrix::default();
    for (item, verdict) in suite.iter().zip(&verdicts) {
        matrix.record(item.expected, verdict.answer);
    }
    let metrics = compute_metrics(&matrix)?;
    let items: Vec<SuiteItem> = suite.iter().cloned().map(SuiteItem::from).collect();
    Ok(TestReport { verdicts, matrix, metrics, ontology_ref: ontology_ref.into(), suite_ref: content_id(&items) })
}
