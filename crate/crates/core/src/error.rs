/// Stable machine-readable error code, shared by the HTTP API and the CLI.
///
/// The set of codes is closed; see [`ALL_CODES`].
pub trait ErrorCode {
    fn code(&self) -> &'static str;
}

pub const NOT_FOUND: &str = "NOT_FOUND";
pub const BAD_REQUEST: &str = "BAD_REQUEST";
pub const WRONG_PHASE: &str = "WRONG_PHASE";
pub const WRONG_STATE: &str = "WRONG_STATE";
pub const EMPTY_ANSWER: &str = "EMPTY_ANSWER";
pub const EMPTY_STORY: &str = "EMPTY_STORY";
pub const EMPTY_SET: &str = "EMPTY_SET";
pub const K_TOO_LARGE: &str = "K_TOO_LARGE";
pub const INVARIANT_VIOLATION: &str = "INVARIANT_VIOLATION";
pub const SYNTAX_ERROR: &str = "SYNTAX_ERROR";
pub const UNSUPPORTED_FORMAT: &str = "UNSUPPORTED_FORMAT";
pub const PARSE_ERROR: &str = "PARSE_ERROR";
pub const DRAFT_PARSE_ERROR: &str = "DRAFT_PARSE_ERROR";
pub const LIST_PARSE_ERROR: &str = "LIST_PARSE_ERROR";
pub const UNPARSEABLE_VERDICT: &str = "UNPARSEABLE_VERDICT";
pub const UNKNOWN_TEMPLATE: &str = "UNKNOWN_TEMPLATE";
pub const MISSING_BINDING: &str = "MISSING_BINDING";
pub const MISSING_CREDENTIAL: &str = "MISSING_CREDENTIAL";
pub const MISSING_FIXTURE: &str = "MISSING_FIXTURE";
pub const DIGEST_MISMATCH: &str = "DIGEST_MISMATCH";
pub const PROVIDER_ERROR: &str = "PROVIDER_ERROR";
pub const STORAGE_ERROR: &str = "STORAGE_ERROR";
pub const LOCKED: &str = "LOCKED";
pub const BAD_CONFIG: &str = "BAD_CONFIG";
pub const PORT_IN_USE: &str = "PORT_IN_USE";
pub const INTERNAL: &str = "INTERNAL";

pub const ALL_CODES: &[&str] = &[
    NOT_FOUND,
    BAD_REQUEST,
    WRONG_PHASE,
    WRONG_STATE,
    EMPTY_ANSWER,
    EMPTY_STORY,
    EMPTY_SET,
    K_TOO_LARGE,
    INVARIANT_VIOLATION,
    SYNTAX_ERROR,
    UNSUPPORTED_FORMAT,
    PARSE_ERROR,
    DRAFT_PARSE_ERROR,
    LIST_PARSE_ERROR,
    UNPARSEABLE_VERDICT,
    UNKNOWN_TEMPLATE,
    MISSING_BINDING,
    MISSING_CREDENTIAL,
    MISSING_FIXTURE,
    DIGEST_MISMATCH,
    PROVIDER_ERROR,
    STORAGE_ERROR,
    LOCKED,
    BAD_CONFIG,
    PORT_IN_USE,
    INTERNAL,
];
