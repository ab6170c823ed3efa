mod common;

use common::*;
use cqkit_core::ontology::{
    parse_ontology, to_turtle, verbalize, verbalize_with, OntologyError, OntologyFormat, OntologyModel,
    VerbalizationDoc, VerbalizeOptions,
};
use cqkit_core::ErrorCode;

fn span_text(doc: &VerbalizationDoc, iri: &str) -> String {
    let span = doc.index.get(iri).unwrap_or_else(|| panic!("{iri} is not indexed"));
    let lines: Vec<&str> = doc.text.lines().collect();
    assert!(span.start >= 1 && span.start <= span.end && span.end <= lines.len(), "{iri}: {span:?}");
    lines[span.start - 1..span.end].join("\n")
}

fn comments(model: &OntologyModel) -> Vec<(&str, &str)> {
    let mut out = Vec::new();
    out.extend(model.classes.iter().filter_map(|c| c.comment.as_deref().map(|t| (c.iri.as_str(), t))));
    for p in model.object_properties.iter().chain(&model.data_properties) {
        out.extend(p.comment.as_deref().map(|t| (p.iri.as_str(), t)));
    }
    out.extend(model.individuals.iter().filter_map(|i| i.comment.as_deref().map(|t| (i.iri.as_str(), t))));
    out
}

fn local_name(iri: &str) -> &str {
    iri.rsplit(['#', '/']).next().unwrap()
}

#[test]
fn every_entity_is_covered_by_its_own_span() {
    for name in VALID_ONTOLOGIES {
        let model = ontology(name);
        assert!(model.entity_count() > 0, "{name}");
        let doc = verbalize(&model);
        assert_eq!(doc.index.len(), model.entity_count(), "{name}");
        for (_, iri, label) in model.entities() {
            let text = span_text(&doc, iri);
            assert!(text.contains(local_name(iri)), "{name}: {iri} not named in {text:?}");
            if let Some(label) = label {
                assert!(text.contains(label.trim()), "{name}: label of {iri} missing from {text:?}");
            }
        }
        // Spans never overlap.
        let mut spans: Vec<_> = doc.index.values().collect();
        spans.sort_by_key(|s| s.start);
        assert!(spans.windows(2).all(|w| w[0].end < w[1].start), "{name}");
    }
}

#[test]
fn comments_are_reproduced_verbatim() {
    for name in VALID_ONTOLOGIES {
        let model = ontology(name);
        let doc = verbalize(&model);
        assert!(doc.stats.warnings.is_empty(), "{name}: {:?}", doc.stats.warnings);
        for (iri, comment) in comments(&model) {
            assert!(span_text(&doc, iri).contains(comment.trim()), "{name}: comment of {iri}");
        }
    }
}

#[test]
fn fixture_set_includes_multiline_comments() {
    let model = ontology("library.ttl");
    assert!(comments(&model).iter().any(|(_, c)| c.contains('\n')));
}

#[test]
fn music_meta_subset_describes_recording_processes() {
    let model = ontology("music-meta.ttl");
    let doc = verbalize(&model);
    let ns = "https://w3id.org/polifonia/ontology/music-meta/";
    let process = span_text(&doc, &format!("{ns}RecordingProcess"));
    assert!(process.contains("is a class"), "{process}");
    assert!(process.contains("Creative Process") || process.contains("creative process"), "{process}");
    let recorded_by = span_text(&doc, &format!("{ns}isRecordedBy"));
    assert!(recorded_by.contains("is an object property"), "{recorded_by}");
    assert!(recorded_by.to_lowercase().contains("recording process"), "{recorded_by}");
}

#[test]
fn output_is_byte_identical_across_runs_and_reparses() {
    for name in VALID_ONTOLOGIES {
        let first = verbalize(&ontology(name));
        for _ in 0..10 {
            let again = verbalize(&ontology(name));
            assert_eq!(again.text.as_bytes(), first.text.as_bytes(), "{name}");
            assert_eq!(again, first, "{name}");
        }
    }
}

#[test]
fn serialization_round_trip_preserves_the_verbalization() {
    for name in VALID_ONTOLOGIES {
        let model = ontology(name);
        let reparsed = parse_ontology(&to_turtle(&model), OntologyFormat::Turtle).unwrap().model;
        assert_eq!(reparsed, model, "{name}");
        assert_eq!(verbalize(&reparsed), verbalize(&model), "{name}");
    }
}

#[test]
fn long_comments_are_capped_with_a_warning() {
    let model = ontology("library.ttl");
    let longest = comments(&model).iter().map(|(_, c)| c.trim().chars().count()).max().unwrap();
    let doc = verbalize_with(&model, VerbalizeOptions { comment_cap: longest - 1 });
    assert!(!doc.stats.warnings.is_empty());
    assert!(doc.text.contains('…'));
}

#[test]
fn unsupported_constructs_become_warnings_not_errors() {
    let parsed = parse_ontology(&read_text("ontologies/library.ttl"), OntologyFormat::Turtle).unwrap();
    assert!(!parsed.warnings.is_empty());
    let clean = parse_ontology(&read_text("ontologies/music-meta.ttl"), OntologyFormat::Turtle).unwrap();
    assert!(clean.warnings.is_empty(), "{:?}", clean.warnings);
}

/// Line on which each defect becomes detectable, read off the fixture text:
/// the token after a missing terminator, the defect itself, or end of input.
fn defect_line(name: &str, text: &str) -> usize {
    let lines = text.lines().count();
    match name {
        "missing_dot.ttl" => 5,
        "space_in_iri.ttl" => 5,
        "unclosed_blank_node.ttl" => lines + 1,
        "undeclared_prefix.ttl" => 3,
        "unterminated_literal.ttl" => 4,
        other => panic!("unexpected malformed fixture {other}"),
    }
}

#[test]
fn malformed_turtle_is_rejected_with_positions() {
    let files = malformed_ontologies();
    assert_eq!(files.len(), 5);
    for (name, text) in files {
        let err = parse_ontology(&text, OntologyFormat::Turtle).unwrap_err();
        assert_eq!(err.code(), "SYNTAX_ERROR", "{name}");
        let OntologyError::Syntax { position: Some(position), .. } = &err else {
            panic!("{name}: no position in {err:?}");
        };
        let line = defect_line(&name, &text);
        assert_eq!(position.line as usize, line, "{name}: {err}");
        let width = text.lines().nth(line - 1).map(str::len).unwrap_or(0);
        assert!(position.column >= 1 && position.column as usize <= width + 1, "{name}: {err}");
    }
}

#[test]
fn unknown_extensions_are_unsupported() {
    let err = OntologyFormat::from_path(std::path::Path::new("model.owx")).unwrap_err();
    assert_eq!(err.code(), "UNSUPPORTED_FORMAT");
}
