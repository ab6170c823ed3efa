//! Engine for conversational ontology requirements work.
//!
//! The crate covers the whole requirements workflow: eliciting a user story
//! through a slot-filling dialogue, extracting and refining competency
//! questions (CQs), filtering and clustering them, verbalizing an OWL
//! ontology, and testing CQ coverage against that verbalization.
//!
//! Every language-model call goes through [`gateway::Gateway`], which can
//! run live, record a transcript, or replay one. Pipelines driven from a
//! replay transcript are fully deterministic and perform no network I/O.

pub mod analysis;
pub mod cq;
pub mod digest;
pub mod engine;
pub mod error;
pub mod gateway;
pub mod ontology;
pub mod prompts;
pub mod story;
pub mod testing;
pub mod workspace;

pub use engine::{Engine, Settings};
pub use error::ErrorCode;
