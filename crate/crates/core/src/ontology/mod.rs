//! OWL ontology ingestion and plain-text verbalization.
//!
//! Only a small OWL subset is modelled: class, property and individual
//! declarations, `rdfs:label`, `rdfs:comment`, `rdfs:subClassOf`,
//! `rdfs:domain`, `rdfs:range` and `rdf:type`. Everything else is skipped
//! and reported as a warning.

mod parse;
mod serialize;
mod verbalize;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{self, ErrorCode};

pub use parse::{parse_ontology, Parsed};
pub use serialize::to_turtle;
pub use verbalize::{
    display_name, verbalize, verbalize_with, LineSpan, VerbalizationDoc, VerbalizationStats,
    VerbalizeOptions, DEFAULT_COMMENT_CAP,
};

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
pub const RDF_PROPERTY: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#Property";
pub const RDFS_CLASS: &str = "http://www.w3.org/2000/01/rdf-schema#Class";
pub const RDFS_LABEL: &str = "http://www.w3.org/2000/01/rdf-schema#label";
pub const RDFS_COMMENT: &str = "http://www.w3.org/2000/01/rdf-schema#comment";
pub const RDFS_SUBCLASS_OF: &str = "http://www.w3.org/2000/01/rdf-schema#subClassOf";
pub const RDFS_DOMAIN: &str = "http://www.w3.org/2000/01/rdf-schema#domain";
pub const RDFS_RANGE: &str = "http://www.w3.org/2000/01/rdf-schema#range";
pub const OWL_CLASS: &str = "http://www.w3.org/2002/07/owl#Class";
pub const OWL_OBJECT_PROPERTY: &str = "http://www.w3.org/2002/07/owl#ObjectProperty";
pub const OWL_DATATYPE_PROPERTY: &str = "http://www.w3.org/2002/07/owl#DatatypeProperty";
pub const OWL_NAMED_INDIVIDUAL: &str = "http://www.w3.org/2002/07/owl#NamedIndividual";
pub const OWL_ONTOLOGY: &str = "http://www.w3.org/2002/07/owl#Ontology";
pub const OWL_ANNOTATION_PROPERTY: &str = "http://www.w3.org/2002/07/owl#AnnotationProperty";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntity {
    pub iri: String,
    pub label: Option<String>,
    pub comment: Option<String>,
    pub superclasses: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyEntity {
    pub iri: String,
    pub label: Option<String>,
    pub comment: Option<String>,
    pub domains: Vec<String>,
    pub ranges: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndividualEntity {
    pub iri: String,
    pub label: Option<String>,
    pub comment: Option<String>,
    pub types: Vec<String>,
}

/// Parsed ontology content. Entity lists are sorted by IRI and reference
/// lists (superclasses, domains, ranges, types) are sorted and deduplicated.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologyModel {
    pub classes: Vec<ClassEntity>,
    pub object_properties: Vec<PropertyEntity>,
    pub data_properties: Vec<PropertyEntity>,
    pub individuals: Vec<IndividualEntity>,
    pub prefixes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OntologyFormat {
    Turtle,
    RdfXml,
}

impl std::str::FromStr for OntologyFormat {
    type Err = OntologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "turtle" | "ttl" => Ok(OntologyFormat::Turtle),
            "rdfxml" | "rdf/xml" | "rdf" | "owl" | "xml" => Ok(OntologyFormat::RdfXml),
            other => Err(OntologyError::UnsupportedFormat(other.to_string())),
        }
    }
}

impl OntologyFormat {
    /// Guess from a file extension.
    pub fn from_path(path: &std::path::Path) -> Result<Self, OntologyError> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or_default();
        ext.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Position {
    pub line: u64,
    pub column: u64,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum OntologyError {
    #[error("syntax error{}: {message}", position.as_ref().map(|p| format!(" at {p}")).unwrap_or_default())]
    Syntax { position: Option<Position>, message: String },
    #[error("unsupported ontology format '{0}'")]
    UnsupportedFormat(String),
    #[error("ontology model violates an invariant: {0}")]
    Invalid(String),
}

impl ErrorCode for OntologyError {
    fn code(&self) -> &'static str {
        match self {
            OntologyError::Syntax { .. } => error::SYNTAX_ERROR,
            OntologyError::UnsupportedFormat(_) => error::UNSUPPORTED_FORMAT,
            OntologyError::Invalid(_) => error::INVARIANT_VIOLATION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EntityKind {
    Class,
    ObjectProperty,
    DataProperty,
    Individual,
}

impl OntologyModel {
    pub fn entity_count(&self) -> usize {
        self.classes.len() + self.object_properties.len() + self.data_properties.len() + self.individuals.len()
    }

    /// Every declared entity as `(kind, iri, label)`, in verbalization order.
    pub fn entities(&self) -> Vec<(EntityKind, &str, Option<&str>)> {
        let mut out = Vec::with_capacity(self.entity_count());
        out.extend(self.classes.iter().map(|c| (EntityKind::Class, c.iri.as_str(), c.label.as_deref())));
        out.extend(
            self.object_properties
                .iter()
                .map(|p| (EntityKind::ObjectProperty, p.iri.as_str(), p.label.as_deref())),
        );
        out.extend(
            self.data_properties
                .iter()
                .map(|p| (EntityKind::DataProperty, p.iri.as_str(), p.label.as_deref())),
        );
        out.extend(self.individuals.iter().map(|i| (EntityKind::Individual, i.iri.as_str(), i.label.as_deref())));
        out
    }

    pub fn label_of(&self, iri: &str) -> Option<&str> {
        self.entities().into_iter().find(|(_, i, _)| *i == iri).and_then(|(_, _, l)| l)
    }

    pub fn is_declared(&self, iri: &str) -> bool {
        self.entities().iter().any(|(_, i, _)| *i == iri)
    }

    /// Referenced IRIs (superclasses, domains, ranges, types) that are not
    /// declared in this model.
    pub fn external_references(&self) -> BTreeSet<String> {
        let declared: BTreeSet<&str> = self.entities().into_iter().map(|(_, i, _)| i).collect();
        let refs = self
            .classes
            .iter()
            .flat_map(|c| c.superclasses.iter())
            .chain(self.object_properties.iter().chain(&self.data_properties).flat_map(|p| p.domains.iter().chain(&p.ranges)))
            .chain(self.individuals.iter().flat_map(|i| i.types.iter()));
        refs.filter(|r| !declared.contains(r.as_str())).cloned().collect()
    }

    pub fn validate(&self) -> Result<(), OntologyError> {
        fn sorted_unique<'a>(what: &str, iris: impl Iterator<Item = &'a str>) -> Result<(), OntologyError> {
            let iris: Vec<&str> = iris.collect();
            if iris.windows(2).any(|w| w[0] >= w[1]) {
                return Err(OntologyError::Invalid(format!("{what} are not unique and sorted by IRI")));
            }
            Ok(())
        }
        sorted_unique("classes", self.classes.iter().map(|c| c.iri.as_str()))?;
        sorted_unique("object properties", self.object_properties.iter().map(|c| c.iri.as_str()))?;
        sorted_unique("data properties", self.data_properties.iter().map(|c| c.iri.as_str()))?;
        sorted_unique("individuals", self.individuals.iter().map(|c| c.iri.as_str()))?;
        Ok(())
    }
}
