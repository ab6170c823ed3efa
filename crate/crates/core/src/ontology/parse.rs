use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufReader;

use rio_api::model::{Literal, Subject, Term};
use rio_api::parser::{ParseError, TriplesParser};
use rio_turtle::TurtleParser;
use rio_xml::RdfXmlParser;

use super::*;

/// A parsed model plus the statements that were skipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parsed {
    pub model: OntologyModel,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Node {
    Iri(String),
    Blank,
    Literal { value: String, language: Option<String> },
}

#[derive(Debug)]
struct Statement {
    subject: Option<String>,
    predicate: String,
    object: Node,
}

fn own_subject(s: &Subject<'_>) -> Option<String> {
    match s {
        Subject::NamedNode(n) => Some(n.iri.to_string()),
        _ => None,
    }
}

fn own_term(t: &Term<'_>) -> Node {
    match t {
        Term::NamedNode(n) => Node::Iri(n.iri.to_string()),
        Term::Literal(Literal::Simple { value }) => Node::Literal { value: value.to_string(), language: None },
        Term::Literal(Literal::LanguageTaggedString { value, language }) => {
            Node::Literal { value: value.to_string(), language: Some(language.to_string()) }
        }
        Term::Literal(Literal::Typed { value, .. }) => Node::Literal { value: value.to_string(), language: None },
        _ => Node::Blank,
    }
}

fn syntax_error<E: ParseError>(e: &E) -> OntologyError {
    // The Turtle reader reports 1-based lines and 1-based byte columns.
    let position = e.textual_position().map(|p| Position { line: p.line_number().max(1), column: p.byte_number().max(1) });
    let mut message = e.to_string();
    if let Some(cut) = message.find(" on line ") {
        message.truncate(cut);
    }
    OntologyError::Syntax { position, message }
}

/// Parses a Turtle or RDF/XML document into an [`OntologyModel`].
///
/// An empty (or comment-only) Turtle document yields an empty model.
pub fn parse_ontology(document: &str, format: OntologyFormat) -> Result<Parsed, OntologyError> {
    let mut statements = Vec::new();
    let mut collect = |t: rio_api::model::Triple<'_>| {
        statements.push(Statement {
            subject: own_subject(&t.subject),
            predicate: t.predicate.iri.to_string(),
            object: own_term(&t.object),
        });
    };
    let prefixes: BTreeMap<String, String> = match format {
        OntologyFormat::Turtle => {
            let mut parser = TurtleParser::new(BufReader::new(document.as_bytes()), None);
            parser
                .parse_all(&mut |t| -> Result<(), rio_turtle::TurtleError> {
                    collect(t);
                    Ok(())
                })
                .map_err(|e| syntax_error(&e))?;
            parser.prefixes().iter().map(|(k, v)| (k.clone(), v.clone())).collect()
        }
        OntologyFormat::RdfXml => {
            let mut parser = RdfXmlParser::new(BufReader::new(document.as_bytes()), None);
            parser
                .parse_all(&mut |t| -> Result<(), rio_xml::RdfXmlError> {
                    collect(t);
                    Ok(())
                })
                .map_err(|e| syntax_error(&e))?;
            BTreeMap::new()
        }
    };
    Ok(build(statements, prefixes))
}

fn compact(iri: &str, prefixes: &BTreeMap<String, String>) -> String {
    prefixes
        .iter()
        .filter(|(_, ns)| !ns.is_empty() && iri.starts_with(ns.as_str()))
        .max_by_key(|(_, ns)| ns.len())
        .map(|(p, ns)| format!("{p}:{}", &iri[ns.len()..]))
        .unwrap_or_else(|| format!("<{iri}>"))
}

fn pick_literal(values: &[(String, Option<String>)]) -> Option<String> {
    let english = |l: &Option<String>| match l {
        None => true,
        Some(tag) => tag.to_ascii_lowercase().starts_with("en"),
    };
    values
        .iter()
        .find(|(_, l)| english(l))
        .or_else(|| values.first())
        .map(|(v, _)| v.clone())
}

fn build(statements: Vec<Statement>, prefixes: BTreeMap<String, String>) -> Parsed {
    let mut classes: BTreeMap<String, ClassEntity> = BTreeMap::new();
    let mut object_properties: BTreeMap<String, PropertyEntity> = BTreeMap::new();
    let mut data_properties: BTreeMap<String, PropertyEntity> = BTreeMap::new();
    let mut individuals: BTreeMap<String, IndividualEntity> = BTreeMap::new();
    let mut ontology_headers: BTreeSet<String> = BTreeSet::new();
    let mut other_types: Vec<(String, String)> = Vec::new();

    let class = |iri: &str| ClassEntity { iri: iri.to_string(), ..Default::default() };
    let property = |iri: &str| PropertyEntity { iri: iri.to_string(), ..Default::default() };

    // Declarations first, so statement order in the document does not matter.
    for st in &statements {
        let (Some(s), RDF_TYPE, Node::Iri(o)) = (&st.subject, st.predicate.as_str(), &st.object) else { continue };
        match o.as_str() {
            OWL_CLASS | RDFS_CLASS => {
                classes.entry(s.clone()).or_insert_with(|| class(s));
            }
            OWL_OBJECT_PROPERTY | RDF_PROPERTY => {
                object_properties.entry(s.clone()).or_insert_with(|| property(s));
            }
            OWL_DATATYPE_PROPERTY => {
                data_properties.entry(s.clone()).or_insert_with(|| property(s));
            }
            OWL_NAMED_INDIVIDUAL => {
                individuals
                    .entry(s.clone())
                    .or_insert_with(|| IndividualEntity { iri: s.clone(), ..Default::default() });
            }
            OWL_ONTOLOGY => {
                ontology_headers.insert(s.clone());
            }
            OWL_ANNOTATION_PROPERTY => {}
            _ => other_types.push((s.clone(), o.clone())),
        }
    }
    // Implicit declarations from the axioms themselves.
    for st in &statements {
        let Some(s) = &st.subject else { continue };
        match st.predicate.as_str() {
            RDFS_SUBCLASS_OF if !classes.contains_key(s) => {
                classes.insert(s.clone(), class(s));
            }
            RDFS_DOMAIN | RDFS_RANGE if !object_properties.contains_key(s) && !data_properties.contains_key(s) => {
                object_properties.insert(s.clone(), property(s));
            }
            _ => {}
        }
    }
    for (s, t) in other_types {
        let is_schema = classes.contains_key(&s) || object_properties.contains_key(&s) || data_properties.contains_key(&s);
        if !is_schema {
            individuals
                .entry(s.clone())
                .or_insert_with(|| IndividualEntity { iri: s.clone(), ..Default::default() })
                .types
                .push(t);
        }
    }

    let mut labels: HashMap<String, Vec<(String, Option<String>)>> = HashMap::new();
    let mut comments: HashMap<String, Vec<(String, Option<String>)>> = HashMap::new();
    let mut skipped_predicates: BTreeMap<String, usize> = BTreeMap::new();
    let mut undeclared_annotations: BTreeMap<String, usize> = BTreeMap::new();
    let mut anonymous_subjects = 0usize;
    let mut anonymous_objects = 0usize;

    for st in statements {
        let Some(s) = st.subject else {
            anonymous_subjects += 1;
            continue;
        };
        match (st.predicate.as_str(), st.object) {
            (RDF_TYPE, _) => {}
            (RDFS_LABEL, Node::Literal { value, language }) => labels.entry(s).or_default().push((value, language)),
            (RDFS_COMMENT, Node::Literal { value, language }) => comments.entry(s).or_default().push((value, language)),
            (RDFS_SUBCLASS_OF, Node::Iri(o)) => {
                classes.get_mut(&s).expect("declared above").superclasses.push(o);
            }
            (p @ (RDFS_DOMAIN | RDFS_RANGE), Node::Iri(o)) => {
                let prop = object_properties
                    .get_mut(&s)
                    .or_else(|| data_properties.get_mut(&s))
                    .expect("declared above");
                if p == RDFS_DOMAIN {
                    prop.domains.push(o);
                } else {
                    prop.ranges.push(o);
                }
            }
            (RDFS_SUBCLASS_OF | RDFS_DOMAIN | RDFS_RANGE, Node::Blank) => anonymous_objects += 1,
            (p, _) => *skipped_predicates.entry(p.to_string()).or_default() += 1,
        }
    }

    let mut apply = |iri: &str, label: &mut Option<String>, comment: &mut Option<String>| {
        *label = labels.remove(iri).and_then(|v| pick_literal(&v));
        *comment = comments.remove(iri).and_then(|v| pick_literal(&v));
    };
    for c in classes.values_mut() {
        apply(&c.iri, &mut c.label, &mut c.comment);
    }
    for p in object_properties.values_mut().chain(data_properties.values_mut()) {
        apply(&p.iri, &mut p.label, &mut p.comment);
    }
    for i in individuals.values_mut() {
        apply(&i.iri, &mut i.label, &mut i.comment);
    }
    for iri in labels.keys().chain(comments.keys()) {
        if !ontology_headers.contains(iri) {
            *undeclared_annotations.entry(iri.clone()).or_default() += 1;
        }
    }

    fn tidy(v: &mut Vec<String>) {
        v.sort();
        v.dedup();
    }
    let mut model = OntologyModel {
        classes: classes.into_values().collect(),
        object_properties: object_properties.into_values().collect(),
        data_properties: data_properties.into_values().collect(),
        individuals: individuals.into_values().collect(),
        prefixes,
    };
    model.classes.iter_mut().for_each(|c| tidy(&mut c.superclasses));
    for p in model.object_properties.iter_mut().chain(model.data_properties.iter_mut()) {
        tidy(&mut p.domains);
        tidy(&mut p.ranges);
    }
    model.individuals.iter_mut().for_each(|i| tidy(&mut i.types));

    let mut warnings = Vec::new();
    if anonymous_subjects > 0 {
        warnings.push(format!(
            "skipped {anonymous_subjects} statement(s) about anonymous nodes (restrictions, lists or other class expressions)"
        ));
    }
    if anonymous_objects > 0 {
        warnings.push(format!("skipped {anonymous_objects} anonymous superclass, domain or range expression(s)"));
    }
    for (p, n) in skipped_predicates {
        warnings.push(format!("skipped {n} statement(s) with unsupported predicate {}", compact(&p, &model.prefixes)));
    }
    for (iri, n) in undeclared_annotations {
        warnings.push(format!("ignored {n} annotation(s) on undeclared subject {}", compact(&iri, &model.prefixes)));
    }
    Parsed { model, warnings }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "@prefix : <http://example.org/m#> .\n@prefix owl: <http://www.w3.org/2002/07/owl#> .\n@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .\n";

    fn turtle(body: &str) -> Result<Parsed, OntologyError> {
        parse_ontology(&format!("{HEADER}{body}"), OntologyFormat::Turtle)
    }

    #[test]
    fn one_labelled_class() {
        let p = turtle(":Award a owl:Class ; rdfs:label \"Award\"@en ; rdfs:comment \"A prize given to artists\" .").unwrap();
        assert_eq!(p.model.classes.len(), 1);
        let c = &p.model.classes[0];
        assert_eq!(c.iri, "http://example.org/m#Award");
        assert_eq!(c.label.as_deref(), Some("Award"));
        assert_eq!(c.comment.as_deref(), Some("A prize given to artists"));
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn empty_turtle_is_an_empty_model() {
        let p = parse_ontology("", OntologyFormat::Turtle).unwrap();
        assert_eq!(p.model, OntologyModel::default());
        let p = parse_ontology("# only a comment\n", OntologyFormat::Turtle).unwrap();
        assert_eq!(p.model.entity_count(), 0);
    }

    #[test]
    fn english_label_preferred() {
        let p = turtle(":A a owl:Class ; rdfs:label \"Preis\"@de , \"Prize\"@en .").unwrap();
        assert_eq!(p.model.classes[0].label.as_deref(), Some("Prize"));
    }

    #[test]
    fn restrictions_are_skipped_with_warnings() {
        let p = turtle(
            ":A a owl:Class ; rdfs:subClassOf :B , [ a owl:Restriction ; owl:onProperty :p ; owl:someValuesFrom :C ] .\n:p a owl:ObjectProperty ; owl:inverseOf :q .",
        )
        .unwrap();
        assert_eq!(p.model.classes[0].superclasses, vec!["http://example.org/m#B"]);
        assert_eq!(p.warnings.len(), 3, "{:?}", p.warnings);
        assert!(p.warnings.iter().any(|w| w.contains("owl:inverseOf")));
        assert_eq!(
            p.model.external_references().into_iter().collect::<Vec<_>>(),
            vec!["http://example.org/m#B".to_string()]
        );
    }

    #[test]
    fn individuals_and_implicit_declarations() {
        let p = turtle(
            ":Song a owl:Class .\n:PennyLane a :Song ; rdfs:label \"Penny Lane\" .\n:Sub rdfs:subClassOf :Song .\n:hasGenre rdfs:domain :Song .",
        )
        .unwrap();
        let m = &p.model;
        assert_eq!(m.individuals.len(), 1);
        assert_eq!(m.individuals[0].types, vec!["http://example.org/m#Song"]);
        assert_eq!(m.classes.len(), 2);
        assert_eq!(m.object_properties.len(), 1);
        m.validate().unwrap();
    }

    #[test]
    fn positioned_syntax_error() {
        let err = parse_ontology(":A a owl:Class .", OntologyFormat::Turtle).unwrap_err();
        match err {
            OntologyError::Syntax { position: Some(p), .. } => assert_eq!(p.line, 1),
            other => panic!("unexpected {other:?}"),
        }
        let err = turtle("\n:A a owl:Class ;\n  rdfs:label \"open .\n").unwrap_err();
        assert!(matches!(err, OntologyError::Syntax { position: Some(_), .. }), "{err:?}");
    }

    #[test]
    fn rdfxml_input() {
        let doc = r#"<?xml version="1.0"?>
<rdf:RDF xmlns:rdf="http://www.w3.org/1999/02/22-rdf-syntax-ns#"
         xmlns:rdfs="http://www.w3.org/2000/01/rdf-schema#"
         xmlns:owl="http://www.w3.org/2002/07/owl#">
  <owl:Class rdf:about="http://example.org/m#Award">
    <rdfs:label>Award</rdfs:label>
  </owl:Class>
</rdf:RDF>"#;
        let p = parse_ontology(doc, OntologyFormat::RdfXml).unwrap();
        assert_eq!(p.model.classes[0].label.as_deref(), Some("Award"));
        assert!(parse_ontology("<rdf:RDF", OntologyFormat::RdfXml).is_err());
    }

    #[test]
    fn format_names() {
        assert_eq!("ttl".parse::<OntologyFormat>().unwrap(), OntologyFormat::Turtle);
        assert_eq!("rdfxml".parse::<OntologyFormat>().unwrap(), OntologyFormat::RdfXml);
        assert!(matches!("jsonld".parse::<OntologyFormat>(), Err(OntologyError::UnsupportedFormat(_))));
    }
}
