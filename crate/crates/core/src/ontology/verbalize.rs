use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::*;

pub const DEFAULT_COMMENT_CAP: usize = 2000;

const XSD_NS: &str = "http://www.w3.org/2001/XMLSchema#";

#[derive(Debug, Clone, Copy)]
pub struct VerbalizeOptions {
    /// Comments longer than this many characters are truncated and flagged.
    pub comment_cap: usize,
}

impl Default for VerbalizeOptions {
    fn default() -> Self {
        Self { comment_cap: DEFAULT_COMMENT_CAP }
    }
}

/// 1-based inclusive line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineSpan {
    pub start: usize,
    pub end: usize,
}

/// Also the JSON stats sidecar written next to a verbalization.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerbalizationStats {
    pub classes: usize,
    pub object_properties: usize,
    pub data_properties: usize,
    pub individuals: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerbalizationDoc {
    pub text: String,
    pub index: BTreeMap<String, LineSpan>,
    pub stats: VerbalizationStats,
}

fn local_name(iri: &str) -> &str {
    let cut = iri.rfind(['#', '/', ':']).map(|i| i + 1).unwrap_or(0);
    let name = &iri[cut..];
    if name.is_empty() { iri } else { name }
}

/// `isRecordedBy` → `is Recorded By`, `music_artist` → `music artist`.
fn split_words(name: &str) -> String {
    let mut words: Vec<String> = Vec::new();
    let mut current = String::new();
    let chars: Vec<char> = name.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if c == '_' || c == '-' || c.is_whitespace() {
            if !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
            continue;
        }
        let boundary = c.is_uppercase()
            && i > 0
            && (chars[i - 1].is_lowercase()
                || chars[i - 1].is_ascii_digit()
                || (chars[i - 1].is_uppercase() && chars.get(i + 1).is_some_and(|n| n.is_lowercase())));
        if boundary && !current.is_empty() {
            words.push(std::mem::take(&mut current));
        }
        current.push(c);
    }
    if !current.is_empty() {
        words.push(current);
    }
    if words.is_empty() {
        name.to_string()
    } else {
        words.join(" ")
    }
}

/// Label of a declared entity, or the IRI's local name split into words.
pub fn display_name(model: &OntologyModel, iri: &str) -> String {
    if let Some(datatype) = iri.strip_prefix(XSD_NS) {
        return format!("xsd:{datatype}");
    }
    match model.label_of(iri) {
        Some(label) if !label.trim().is_empty() => label.trim().to_string(),
        _ => split_words(local_name(iri)),
    }
}

/// Name used as a sentence subject: the label, followed by the identifier
/// when it differs, so both forms can be cited.
fn subject_name(model: &OntologyModel, iri: &str) -> String {
    let name = display_name(model, iri);
    let id = local_name(iri);
    if name == id {
        format!("\"{name}\"")
    } else {
        format!("\"{name}\" ({id})")
    }
}

fn join_names(model: &OntologyModel, iris: &[String]) -> String {
    let names: Vec<String> = iris.iter().map(|i| display_name(model, i)).collect();
    match names.len() {
        0 => String::new(),
        1 => names[0].clone(),
        n => format!("{} and {}", names[..n - 1].join(", "), names[n - 1]),
    }
}

struct Writer {
    options: VerbalizeOptions,
    lines: Vec<String>,
    index: BTreeMap<String, LineSpan>,
    warnings: Vec<String>,
}

impl Writer {
    fn line_count(&self) -> usize {
        self.lines.len()
    }

    fn comment(&mut self, iri: &str, comment: &Option<String>) -> String {
        let Some(comment) = comment.as_deref().map(str::trim).filter(|c| !c.is_empty()) else {
            return String::new();
        };
        if comment.chars().count() > self.options.comment_cap {
            let cut: String = comment.chars().take(self.options.comment_cap).collect();
            self.warnings.push(format!(
                "comment of {iri} truncated to {} characters",
                self.options.comment_cap
            ));
            format!(" {cut}…")
        } else {
            format!(" {comment}")
        }
    }

    fn entity(&mut self, iri: &str, sentence: String) {
        let start = self.line_count() + 1;
        self.lines.extend(sentence.split('\n').map(String::from));
        let end = self.line_count();
        self.index.insert(iri.to_string(), LineSpan { start, end });
    }

    fn section(&mut self, header: &str) {
        if !self.lines.is_empty() {
            self.lines.push(String::new());
        }
        self.lines.push(header.to_string());
    }
}

fn by_iri<T>(items: &[T], key: fn(&T) -> &String) -> Vec<&T> {
    let mut v: Vec<&T> = items.iter().collect();
    v.sort_by(|a, b| key(a).cmp(key(b)));
    v
}

pub fn verbalize(model: &OntologyModel) -> VerbalizationDoc {
    verbalize_with(model, VerbalizeOptions::default())
}

/// Renders the model as plain text: a fixed section order (classes, object
/// properties, data properties, individuals), entities sorted by IRI, one
/// sentence group per entity. Output depends only on the model.
pub fn verbalize_with(model: &OntologyModel, options: VerbalizeOptions) -> VerbalizationDoc {
    let mut w = Writer { options, lines: Vec::new(), index: BTreeMap::new(), warnings: Vec::new() };

    w.section("Classes:");
    for c in by_iri(&model.classes, |c| &c.iri) {
        let mut s = format!("{} is a class.", subject_name(model, &c.iri));
        s.push_str(&w.comment(&c.iri, &c.comment));
        if !c.superclasses.is_empty() {
            s.push_str(&format!(" It is a subclass of {}.", join_names(model, &c.superclasses)));
        }
        w.entity(&c.iri, s);
    }

    w.section("Object properties:");
    for p in by_iri(&model.object_properties, |p| &p.iri) {
        let mut s = format!("{} is an object property.", subject_name(model, &p.iri));
        s.push_str(&w.comment(&p.iri, &p.comment));
        match (p.domains.is_empty(), p.ranges.is_empty()) {
            (false, false) => s.push_str(&format!(
                " It connects {} to {}.",
                join_names(model, &p.domains),
                join_names(model, &p.ranges)
            )),
            (false, true) => s.push_str(&format!(" Its domain is {}.", join_names(model, &p.domains))),
            (true, false) => s.push_str(&format!(" Its range is {}.", join_names(model, &p.ranges))),
            (true, true) => {}
        }
        w.entity(&p.iri, s);
    }

    w.section("Data properties:");
    for p in by_iri(&model.data_properties, |p| &p.iri) {
        let mut s = format!("{} is a data property.", subject_name(model, &p.iri));
        s.push_str(&w.comment(&p.iri, &p.comment));
        match (p.domains.is_empty(), p.ranges.is_empty()) {
            (false, false) => s.push_str(&format!(
                " It relates {} to values of type {}.",
                join_names(model, &p.domains),
                join_names(model, &p.ranges)
            )),
            (false, true) => s.push_str(&format!(" Its domain is {}.", join_names(model, &p.domains))),
            (true, false) => s.push_str(&format!(" Its values are of type {}.", join_names(model, &p.ranges))),
            (true, true) => {}
        }
        w.entity(&p.iri, s);
    }

    w.section("Individuals:");
    for ind in by_iri(&model.individuals, |i| &i.iri) {
        let mut s = if ind.types.is_empty() {
            format!("{} is an individual.", subject_name(model, &ind.iri))
        } else {
            format!("{} is an individual of type {}.", subject_name(model, &ind.iri), join_names(model, &ind.types))
        };
        s.push_str(&w.comment(&ind.iri, &ind.comment));
        w.entity(&ind.iri, s);
    }

    let mut text = w.lines.join("\n");
    text.push('\n');
    VerbalizationDoc {
        text,
        index: w.index,
        stats: VerbalizationStats {
            classes: model.classes.len(),
            object_properties: model.object_properties.len(),
            data_properties: model.data_properties.len(),
            individuals: model.individuals.len(),
            warnings: w.warnings,
        },
    }
}
