//! Prompt templates as data.
//!
//! Templates live in a directory holding one UTF-8 text file per template
//! and a `manifest.json` listing `{id, stage, file, required_bindings}`.
//! A copy of the shipped directory is compiled in ([`PromptRegistry::bundled`]).
//!
//! Placeholders are written `{{name}}`. A literal `{{` is written `{{{{`
//! and a literal `}}` is written `}}}}`. Single braces are plain text.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{self, ErrorCode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Elicitation,
    Draft,
    CqExtract,
    CqSplit,
    CqAbstract,
    Dedup,
    Cluster,
    Test,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("unknown template '{0}'")]
    UnknownTemplate(String),
    #[error("template '{template}' needs a binding for '{name}'")]
    MissingBinding { template: String, name: String },
    #[error("template '{id}' is malformed at byte {offset}: {reason}")]
    Malformed { id: String, offset: usize, reason: String },
    #[error("template '{id}': placeholders {found:?} do not match required bindings {declared:?}")]
    BindingMismatch { id: String, found: BTreeSet<String>, declared: BTreeSet<String> },
    #[error("duplicate template id '{0}'")]
    DuplicateId(String),
    #[error("cannot load templates: {0}")]
    Load(String),
}

impl ErrorCode for PromptError {
    fn code(&self) -> &'static str {
        match self {
            PromptError::UnknownTemplate(_) => error::UNKNOWN_TEMPLATE,
            PromptError::MissingBinding { .. } => error::MISSING_BINDING,
            _ => error::BAD_REQUEST,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

fn tokenize(id: &str, body: &str) -> Result<Vec<Piece>, PromptError> {
    let mut pieces = Vec::new();
    let mut text = String::new();
    let mut rest = body;
    let mut offset = 0;
    while !rest.is_empty() {
        if let Some(after) = rest.strip_prefix("{{{{") {
            text.push_str("{{");
            offset += 4;
            rest = after;
        } else if let Some(after) = rest.strip_prefix("}}}}") {
            text.push_str("}}");
            offset += 4;
            rest = after;
        } else if let Some(after) = rest.strip_prefix("{{") {
            let end = after.find("}}").ok_or_else(|| PromptError::Malformed {
                id: id.into(),
                offset,
                reason: "unterminated placeholder".into(),
            })?;
            let name = &after[..end];
            let valid = name
                .chars()
                .next()
                .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !valid {
                return Err(PromptError::Malformed {
                    id: id.into(),
                    offset,
                    reason: format!("invalid placeholder name '{name}'"),
                });
            }
            if !text.is_empty() {
                pieces.push(Piece::Text(std::mem::take(&mut text)));
            }
            pieces.push(Piece::Slot(name.to_string()));
            offset += 2 + end + 2;
            rest = &after[end + 2..];
        } else {
            let c = rest.chars().next().expect("non-empty");
            text.push(c);
            offset += c.len_utf8();
            rest = &rest[c.len_utf8()..];
        }
    }
    if !text.is_empty() {
        pieces.push(Piece::Text(text));
    }
    Ok(pieces)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: String,
    pub stage: Stage,
    pub body: String,
    pub required_bindings: BTreeSet<String>,
    pieces: Vec<Piece>,
}

impl PromptTemplate {
    pub fn new(
        id: impl Into<String>,
        stage: Stage,
        body: impl Into<String>,
        required_bindings: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<Self, PromptError> {
        let id = id.into();
        let body = body.into();
        let declared: BTreeSet<String> = required_bindings.into_iter().map(Into::into).collect();
        let pieces = tokenize(&id, &body)?;
        let found: BTreeSet<String> = pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Slot(name) => Some(name.clone()),
                Piece::Text(_) => None,
            })
            .collect();
        if found != declared {
            return Err(PromptError::BindingMismatch { id, found, declared });
        }
        Ok(Self { id, stage, body, required_bindings: declared, pieces })
    }

    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.body.len());
        for piece in &self.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => {
                    let value = bindings
                        .iter()
                        .find(|(k, _)| k == name)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| PromptError::MissingBinding {
                            template: self.id.clone(),
                            name: name.clone(),
                        })?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestEntry {
    id: String,
    stage: Stage,
    file: String,
    #[serde(default)]
    required_bindings: Vec<String>,
}

/// Immutable after load; share it behind an `Arc`.
#[derive(Debug, Clone, Default)]
pub struct PromptRegistry {
    templates: BTreeMap<String, PromptTemplate>,
}

macro_rules! bundled_files {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../prompts/", $name)))),*]
    };
}

const BUNDLED_MANIFEST: &str = include_str!("../prompts/manifest.json");
const BUNDLED_FILES: &[(&str, &str)] = bundled_files!(
    "elicit_system.txt",
    "elicit_persona.txt",
    "elicit_goal.txt",
    "elicit_scenario.txt",
    "elicit_example_data.txt",
    "elicit_judge.txt",
    "elicit_complete.txt",
    "draft_system.txt",
    "draft_exemplar.txt",
    "draft_user.txt",
    "refine_user.txt",
    "cq_extract_system.txt",
    "cq_extract_user.txt",
    "cq_split_system.txt",
    "cq_split_user.txt",
    "cq_abstract_system.txt",
    "cq_abstract_user.txt",
    "cq_rerun_context.txt",
    "dedup_system.txt",
    "dedup_user.txt",
    "cluster_system.txt",
    "cluster_user.txt",
    "cluster_k_instruction.txt",
    "cluster_free_instruction.txt",
    "test_system.txt",
    "test_user.txt",
);

impl PromptRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The templates shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_manifest(BUNDLED_MANIFEST, |file| {
            BUNDLED_FILES
                .iter()
                .find(|(name, _)| *name == file)
                .map(|(_, body)| body.to_string())
                .ok_or_else(|| PromptError::Load(format!("bundled file '{file}' missing")))
        })
        .expect("bundled prompt assets are valid")
    }

    /// Loads `manifest.json` and its template files from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let manifest = std::fs::read_to_string(dir.join("manifest.json"))
            .map_err(|e| PromptError::Load(format!("{}: {e}", dir.join("manifest.json").display())))?;
        Self::from_manifest(&manifest, |file| {
            std::fs::read_to_string(dir.join(file))
                .map_err(|e| PromptError::Load(format!("{}: {e}", dir.join(file).display())))
        })
    }

    fn from_manifest(
        manifest: &str,
        read: impl Fn(&str) -> Result<String, PromptError>,
    ) -> Result<Self, PromptError> {
        let entries: Vec<ManifestEntry> =
            serde_json::from_str(manifest).map_err(|e| PromptError::Load(e.to_string()))?;
        let mut registry = Self::new();
        for entry in entries {
            let body = read(&entry.file)?;
            // Asset files end with a newline that is not part of the prompt.
            let body = body.strip_suffix('\n').unwrap_or(&body);
            registry.register(PromptTemplate::new(
                entry.id,
                entry.stage,
                body,
                entry.required_bindings,
            )?)?;
        }
        Ok(registry)
    }

    pub fn register(&mut self, template: PromptTemplate) -> Result<(), PromptError> {
        if self.templates.contains_key(&template.id) {
            return Err(PromptError::DuplicateId(template.id));
        }
        self.templates.insert(template.id.clone(), template);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&PromptTemplate, PromptError> {
        self.templates.get(id).ok_or_else(|| PromptError::UnknownTemplate(id.to_string()))
    }

    pub fn render(&self, id: &str, bindings: &[(&str, &str)]) -> Result<String, PromptError> {
        self.get(id)?.render(bindings)
    }

    /// All templates as `(id, stage)`, sorted by id.
    pub fn list_templates(&self) -> Vec<(String, Stage)> {
        self.templates.values().map(|t| (t.id.clone(), t.stage)).collect()
    }
}
