use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use cqkit_core::analysis::AnalysisError;
use cqkit_core::cq::CqError;
use cqkit_core::error as codes;
use cqkit_core::gateway::GatewayError;
use cqkit_core::ontology::OntologyError;
use cqkit_core::prompts::PromptError;
use cqkit_core::story::StoryError;
use cqkit_core::testing::TestingError;
use cqkit_core::workspace::WorkspaceError;
use cqkit_core::ErrorCode;

/// Error body shared by the HTTP API (JSON response) and the CLI (stderr).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl ApiError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self { code: code.to_string(), message: message.into(), details: None }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn not_found(kind: &str, id: &str) -> Self {
        Self::new(codes::NOT_FOUND, format!("{kind} {id} not found")).with_details(json!({ "kind": kind, "id": id }))
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(codes::BAD_REQUEST, message)
    }

    pub fn bad_config(message: impl Into<String>) -> Self {
        Self::new(codes::BAD_CONFIG, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(codes::INTERNAL, message)
    }

    fn from_coded<E: ErrorCode + fmt::Display>(e: &E) -> Self {
        Self::new(e.code(), e.to_string())
    }

    /// HTTP status for each documented code.
    pub fn status(&self) -> u16 {
        status_for(&self.code)
    }

    /// Process exit status for each documented code.
    pub fn exit_code(&self) -> i32 {
        exit_code_for(&self.code)
    }
}

pub fn status_for(code: &str) -> u16 {
    match code {
        codes::NOT_FOUND => 404,
        codes::BAD_REQUEST
        | codes::EMPTY_ANSWER
        | codes::EMPTY_STORY
        | codes::EMPTY_SET
        | codes::K_TOO_LARGE
        | codes::SYNTAX_ERROR
        | codes::UNSUPPORTED_FORMAT
        | codes::PARSE_ERROR
        | codes::BAD_CONFIG => 400,
        codes::INVARIANT_VIOLATION => 422,
        codes::WRONG_PHASE | codes::WRONG_STATE => 409,
        codes::LOCKED => 423,
        codes::DRAFT_PARSE_ERROR | codes::LIST_PARSE_ERROR | codes::UNPARSEABLE_VERDICT | codes::PROVIDER_ERROR => 502,
        _ => 500,
    }
}

/// 0 is success and 2 is a command-line usage error (reported by the
/// argument parser before any code is produced).
pub fn exit_code_for(code: &str) -> i32 {
    match status_for(code) {
        404 => 3,
        400 | 422 => 4,
        409 => 5,
        502 => 6,
        423 => 8,
        _ => 7,
    }
}

impl From<WorkspaceError> for ApiError {
    fn from(e: WorkspaceError) -> Self {
        match &e {
            WorkspaceError::NotFound { kind, id } => ApiError::not_found(kind, id),
            _ => ApiError::from_coded(&e),
        }
    }
}

impl From<StoryError> for ApiError {
    fn from(e: StoryError) -> Self {
        match &e {
            StoryError::WrongPhase { operation, phase } => ApiError::from_coded(&e)
                .with_details(json!({ "operation": operation, "phase": phase })),
            _ => ApiError::from_coded(&e),
        }
    }
}

impl From<OntologyError> for ApiError {
    fn from(e: OntologyError) -> Self {
        match &e {
            OntologyError::Syntax { position: Some(p), .. } => {
                ApiError::from_coded(&e).with_details(json!({ "line": p.line, "column": p.column }))
            }
            _ => ApiError::from_coded(&e),
        }
    }
}

macro_rules! coded {
    ($($ty:ty),*) => {
        $(impl From<$ty> for ApiError {
            fn from(e: $ty) -> Self {
                ApiError::from_coded(&e)
            }
        })*
    };
}

coded!(CqError, AnalysisError, TestingError, GatewayError, PromptError);
