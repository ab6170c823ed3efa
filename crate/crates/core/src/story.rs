//! User-story elicitation as a slot-filling conversation.
//!
//! A session asks for the persona, goal, scenario and example data in that
//! order. After each user answer the model judges whether the current slot
//! is sufficiently specified; it either replies `SUFFICIENT` or with a
//! follow-up question. Once every slot is filled the model drafts a story
//! from a one-shot exemplar, the user refines it as often as they like, and
//! finalization freezes the latest version.
//!
//! Phases only move forward: eliciting → drafting → refining → finalized.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Engine, LlmError};
use crate::error::{self, ErrorCode};
use crate::prompts::{PromptError, PromptRegistry};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub name: String,
    pub occupation: String,
    pub skills: Vec<String>,
    pub interests: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserStory {
    pub title: String,
    pub version: u32,
    pub persona: Persona,
    pub goal: String,
    pub scenario: String,
    pub example_data: Vec<String>,
}

pub const DEFAULT_TITLE: &str = "User story";

impl UserStory {
    /// Invariants a story must meet before it can be finalized or saved.
    pub fn validate(&self) -> Result<(), String> {
        if self.persona.name.trim().is_empty() {
            return Err("persona name is empty".into());
        }
        if self.goal.trim().is_empty() {
            return Err("goal is empty".into());
        }
        if self.scenario.trim().is_empty() {
            return Err("scenario is empty".into());
        }
        if self.example_data.iter().all(|e| e.trim().is_empty()) {
            return Err("story has no example data".into());
        }
        if self.version == 0 {
            return Err("story version starts at 1".into());
        }
        Ok(())
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# {}\n\n", self.title));
        out.push_str("## Persona\n");
        out.push_str(&format!("Name: {}\n", self.persona.name));
        out.push_str(&format!("Occupation: {}\n", self.persona.occupation));
        out.push_str(&format!("Skills: {}\n", self.persona.skills.join(", ")));
        out.push_str(&format!("Interests: {}\n\n", self.persona.interests.join(", ")));
        out.push_str(&format!("## Goal\n{}\n\n", self.goal));
        out.push_str(&format!("## Scenario\n{}\n\n", self.scenario));
        out.push_str("## Example Data\n");
        for item in &self.example_data {
            out.push_str(&format!("- {item}\n"));
        }
        out
    }

    /// Parses a story written with the four fixed section headers.
    pub fn from_markdown(text: &str, version: u32) -> Result<Self, StoryError> {
        let sections = split_sections(text);
        let missing = |name: &str| StoryError::DraftParse { missing: name.to_string() };

        let persona_text = sections.get("persona").ok_or_else(|| missing("Persona"))?;
        let persona = parse_persona(persona_text);
        if persona.name.is_empty() {
            return Err(missing("Persona name"));
        }
        let goal = sections.get("goal").map(|s| s.trim().to_string()).unwrap_or_default();
        if goal.is_empty() {
            return Err(missing("Goal"));
        }
        let scenario = sections.get("scenario").map(|s| s.trim().to_string()).unwrap_or_default();
        if scenario.is_empty() {
            return Err(missing("Scenario"));
        }
        let example_data = sections.get("example data").map(|s| parse_items(s)).unwrap_or_default();
        if example_data.is_empty() {
            return Err(missing("Example Data"));
        }
        let title = sections
            .title
            .clone()
            .filter(|t| !t.is_empty())
            .unwrap_or_else(|| DEFAULT_TITLE.to_string());
        Ok(Self { title, version, persona, goal, scenario, example_data })
    }
}

struct Sections {
    title: Option<String>,
    bodies: Vec<(String, String)>,
}

impl Sections {
    fn get(&self, name: &str) -> Option<&String> {
        self.bodies.iter().find(|(k, _)| k == name).map(|(_, v)| v)
    }
}

fn normalize_header(raw: &str) -> String {
    raw.trim()
        .trim_matches(|c| c == '*' || c == ':' || c == '_')
        .trim()
        .to_lowercase()
}

fn split_sections(text: &str) -> Sections {
    let mut title = None;
    let mut bodies: Vec<(String, String)> = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix("## ").or_else(|| trimmed.strip_prefix("### ")) {
            bodies.push((normalize_header(rest), String::new()));
        } else if let Some(rest) = trimmed.strip_prefix("# ") {
            if title.is_none() && bodies.is_empty() {
                title = Some(rest.trim().to_string());
            }
        } else if let Some((_, body)) = bodies.last_mut() {
            body.push_str(line);
            body.push('\n');
        }
    }
    Sections { title, bodies }
}

fn split_list(value: &str) -> Vec<String> {
    value
        .split([',', ';'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn parse_persona(body: &str) -> Persona {
    let mut persona = Persona::default();
    for line in body.lines() {
        let line = line.trim().trim_start_matches(['-', '*']).trim();
        let Some((key, value)) = line.split_once(':') else { continue };
        let value = value.trim();
        match normalize_header(key).as_str() {
            "name" => persona.name = value.to_string(),
            "occupation" | "occupations" => persona.occupation = value.to_string(),
            "skills" => persona.skills = split_list(value),
            "interests" => persona.interests = split_list(value),
            _ => {}
        }
    }
    persona
}

fn parse_items(body: &str) -> Vec<String> {
    body.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let l = l.strip_prefix("- ").or_else(|| l.strip_prefix("* ")).unwrap_or(l);
            strip_enumeration(l).trim().to_string()
        })
        .filter(|l| !l.is_empty())
        .collect()
}

fn strip_enumeration(line: &str) -> &str {
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        if let Some(rest) = line[digits..].strip_prefix(". ").or_else(|| line[digits..].strip_prefix(") ")) {
            return rest;
        }
    }
    line
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Persona,
    Goal,
    Scenario,
    ExampleData,
}

impl Slot {
    pub const ALL: [Slot; 4] = [Slot::Persona, Slot::Goal, Slot::Scenario, Slot::ExampleData];

    fn question_template(self) -> &'static str {
        match self {
            Slot::Persona => "elicit_persona",
            Slot::Goal => "elicit_goal",
            Slot::Scenario => "elicit_scenario",
            Slot::ExampleData => "elicit_example_data",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Slot::Persona => "persona",
            Slot::Goal => "goal",
            Slot::Scenario => "scenario",
            Slot::ExampleData => "example data",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotStatus {
    Pending,
    InProgress,
    Filled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotState {
    pub slot: Slot,
    pub status: SlotStatus,
    pub answers: Vec<String>,
    pub follow_ups: u32,
    /// Whether the slot was closed by the follow-up cap rather than the model.
    #[serde(default)]
    pub forced: bool,
    /// Index in the dialogue of the slot's opening question.
    #[serde(default)]
    opened_at: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Agent,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Eliciting,
    Drafting,
    Refining,
    Finalized,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::Eliciting => "eliciting",
            Phase::Drafting => "drafting",
            Phase::Refining => "refining",
            Phase::Finalized => "finalized",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    StartSession,
    SubmitAnswer,
    GenerateDraft,
    RefineDraft,
    Finalize,
}

impl Operation {
    pub const ALL: [Operation; 5] = [
        Operation::StartSession,
        Operation::SubmitAnswer,
        Operation::GenerateDraft,
        Operation::RefineDraft,
        Operation::Finalize,
    ];

    /// Phase precondition of each operation. Starting a session creates a new
    /// one, so it is independent of any existing session's phase.
    pub fn accepts(self, phase: Phase) -> bool {
        match self {
            Operation::StartSession => true,
            Operation::SubmitAnswer => phase == Phase::Eliciting,
            Operation::GenerateDraft => phase == Phase::Drafting,
            Operation::RefineDraft | Operation::Finalize => phase == Phase::Refining,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum StoryError {
    #[error("{operation:?} is not allowed while the session is {phase}")]
    WrongPhase { operation: Operation, phase: Phase },
    #[error("answer is empty")]
    EmptyAnswer,
    #[error("draft is missing the {missing} section")]
    DraftParse { missing: String },
    #[error("story violates an invariant: {0}")]
    Invalid(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

impl From<PromptError> for StoryError {
    fn from(e: PromptError) -> Self {
        StoryError::Llm(e.into())
    }
}

impl ErrorCode for StoryError {
    fn code(&self) -> &'static str {
        match self {
            StoryError::WrongPhase { .. } => error::WRONG_PHASE,
            StoryError::EmptyAnswer => error::EMPTY_ANSWER,
            StoryError::DraftParse { .. } => error::DRAFT_PARSE_ERROR,
            StoryError::Invalid(_) => error::INVARIANT_VIOLATION,
            StoryError::Llm(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentTurnKind {
    /// Opening question of a slot.
    Question,
    /// Follow-up for a slot that is not yet sufficient.
    FollowUp,
    /// Every slot is filled; the session moved to drafting.
    ElicitationComplete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTurn {
    pub kind: AgentTurnKind,
    pub slot: Option<Slot>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElicitationSession {
    pub id: String,
    pub phase: Phase,
    pub slots: Vec<SlotState>,
    pub dialogue: Vec<DialogueTurn>,
    pub draft: Option<UserStory>,
    /// Every drafted version, oldest first.
    pub history: Vec<UserStory>,
}

impl ElicitationSession {
    fn check(&self, operation: Operation) -> Result<(), StoryError> {
        if operation.accepts(self.phase) {
            Ok(())
        } else {
            Err(StoryError::WrongPhase { operation, phase: self.phase })
        }
    }

    pub fn current_slot(&self) -> Option<Slot> {
        self.slots.iter().find(|s| s.status != SlotStatus::Filled).map(|s| s.slot)
    }

    fn slot_mut(&mut self, slot: Slot) -> &mut SlotState {
        self.slots.iter_mut().find(|s| s.slot == slot).expect("every slot is present")
    }

    fn push(&mut self, speaker: Speaker, text: impl Into<String>) {
        self.dialogue.push(DialogueTurn { speaker, text: text.into() });
    }

    fn render_dialogue(turns: &[DialogueTurn]) -> String {
        turns
            .iter()
            .map(|t| match t.speaker {
                Speaker::Agent => format!("Agent: {}", t.text),
                Speaker::User => format!("User: {}", t.text),
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub fn start_session(prompts: &PromptRegistry) -> Result<(ElicitationSession, AgentTurn), StoryError> {
    let question = prompts.render(Slot::Persona.question_template(), &[])?;
    let mut session = ElicitationSession {
        id: uuid::Uuid::new_v4().to_string(),
        phase: Phase::Eliciting,
        slots: Slot::ALL
            .iter()
            .map(|&slot| SlotState {
                slot,
                status: SlotStatus::Pending,
                answers: Vec::new(),
                follow_ups: 0,
                forced: false,
                opened_at: None,
            })
            .collect(),
        dialogue: Vec::new(),
        draft: None,
        history: Vec::new(),
    };
    session.slot_mut(Slot::Persona).opened_at = Some(0);
    session.push(Speaker::Agent, question.clone());
    Ok((session, AgentTurn { kind: AgentTurnKind::Question, slot: Some(Slot::Persona), text: question }))
}

enum Judgement {
    Sufficient { forced: bool },
    FollowUp(String),
}

pub async fn submit_answer(
    engine: &Engine,
    session: &mut ElicitationSession,
    text: &str,
) -> Result<AgentTurn, StoryError> {
    session.check(Operation::SubmitAnswer)?;
    let answer = text.trim();
    if answer.is_empty() {
        return Err(StoryError::EmptyAnswer);
    }
    let slot = session.current_slot().expect("eliciting sessions have an open slot");
    let state = session.slots.iter().find(|s| s.slot == slot).expect("slot present");

    // The model is consulted before the session is touched, so a failed call
    // leaves the session as it was.
    let judgement = if state.follow_ups >= engine.settings.max_follow_ups {
        Judgement::Sufficient { forced: true }
    } else {
        let start = state.opened_at.unwrap_or(0);
        let mut exchange = session.dialogue[start..].to_vec();
        exchange.push(DialogueTurn { speaker: Speaker::User, text: answer.to_string() });
        let prompt = engine.render(
            "elicit_judge",
            &[
                ("slot", slot.label()),
                ("exchange", &ElicitationSession::render_dialogue(&exchange)),
            ],
        )?;
        let reply = engine
            .ask("elicit_judge", "elicit_system", prompt, engine.settings.analytic_temperature)
            .await?;
        let reply = reply.trim();
        if reply.to_ascii_uppercase().starts_with("SUFFICIENT") {
            Judgement::Sufficient { forced: false }
        } else if reply.is_empty() {
            Judgement::FollowUp(engine.render(slot.question_template(), &[])?)
        } else {
            Judgement::FollowUp(reply.to_string())
        }
    };

    session.push(Speaker::User, answer);
    let state = session.slot_mut(slot);
    state.answers.push(answer.to_string());
    match judgement {
        Judgement::FollowUp(question) => {
            state.status = SlotStatus::InProgress;
            state.follow_ups += 1;
            session.push(Speaker::Agent, question.clone());
            Ok(AgentTurn { kind: AgentTurnKind::FollowUp, slot: Some(slot), text: question })
        }
        Judgement::Sufficient { forced } => {
            state.status = SlotStatus::Filled;
            state.forced = forced;
            match session.current_slot() {
                Some(next) => {
                    let question = engine.render(next.question_template(), &[])?;
                    let at = session.dialogue.len();
                    session.slot_mut(next).opened_at = Some(at);
                    session.push(Speaker::Agent, question.clone());
                    Ok(AgentTurn { kind: AgentTurnKind::Question, slot: Some(next), text: question })
                }
                None => {
                    let notice = engine.render("elicit_complete", &[])?;
                    session.push(Speaker::Agent, notice.clone());
                    session.phase = Phase::Drafting;
                    Ok(AgentTurn { kind: AgentTurnKind::ElicitationComplete, slot: None, text: notice })
                }
            }
        }
    }
}

pub async fn generate_draft(
    engine: &Engine,
    session: &mut ElicitationSession,
) -> Result<UserStory, StoryError> {
    session.check(Operation::GenerateDraft)?;
    let exemplar = engine.render("draft_exemplar", &[])?;
    let dialogue = ElicitationSession::render_dialogue(&session.dialogue);
    let prompt = engine.render("draft_user", &[("exemplar", &exemplar), ("dialogue", &dialogue)])?;
    let reply = engine
        .ask("draft", "draft_system", prompt, engine.settings.creative_temperature)
        .await?;
    let story = UserStory::from_markdown(&reply, 1)?;
    session.push(Speaker::Agent, story.to_markdown());
    session.history.push(story.clone());
    session.draft = Some(story.clone());
    session.phase = Phase::Refining;
    Ok(story)
}

pub async fn refine_draft(
    engine: &Engine,
    session: &mut ElicitationSession,
    feedback: &str,
) -> Result<UserStory, StoryError> {
    session.check(Operation::RefineDraft)?;
    let feedback = feedback.trim();
    if feedback.is_empty() {
        return Err(StoryError::EmptyAnswer);
    }
    let current = session.draft.as_ref().expect("refining sessions hold a draft");
    let prompt = engine.render("refine_user", &[("draft", &current.to_markdown()), ("feedback", feedback)])?;
    let reply = engine
        .ask("refine", "draft_system", prompt, engine.settings.creative_temperature)
        .await?;
    let story = UserStory::from_markdown(&reply, current.version + 1)?;
    session.push(Speaker::User, feedback);
    session.push(Speaker::Agent, story.to_markdown());
    session.history.push(story.clone());
    session.draft = Some(story.clone());
    Ok(story)
}

pub fn finalize(session: &mut ElicitationSession) -> Result<UserStory, StoryError> {
    session.check(Operation::Finalize)?;
    let story = session.draft.clone().expect("refining sessions hold a draft");
    story.validate().map_err(StoryError::Invalid)?;
    session.phase = Phase::Finalized;
    Ok(story)
}
