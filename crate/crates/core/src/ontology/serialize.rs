use super::*;

fn literal(value: &str) -> String {
    let mut out = String::with_capacity(value.len() + 2);
    out.push('"');
    for c in value.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn iri(value: &str) -> String {
    format!("<{value}>")
}

fn write_entity(out: &mut String, subject: &str, types: &[String], attributes: Vec<(&str, Vec<String>)>) {
    out.push_str(&iri(subject));
    out.push_str(" a ");
    out.push_str(&types.join(", "));
    for (predicate, objects) in attributes {
        if objects.is_empty() {
            continue;
        }
        out.push_str(" ;\n    ");
        out.push_str(&iri(predicate));
        out.push(' ');
        out.push_str(&objects.join(", "));
    }
    out.push_str(" .\n\n");
}

fn annotations(label: &Option<String>, comment: &Option<String>) -> Vec<(&'static str, Vec<String>)> {
    vec![
        (RDFS_LABEL, label.iter().map(|l| literal(l)).collect()),
        (RDFS_COMMENT, comment.iter().map(|c| literal(c)).collect()),
    ]
}

/// Canonical Turtle for the supported subset. All IRIs are written in full;
/// the model's prefix map is emitted so that it survives a round trip.
pub fn to_turtle(model: &OntologyModel) -> String {
    let mut out = String::new();
    for (prefix, ns) in &model.prefixes {
        out.push_str(&format!("@prefix {prefix}: <{ns}> .\n"));
    }
    if !model.prefixes.is_empty() {
        out.push('\n');
    }
    for c in &model.classes {
        let mut attrs = annotations(&c.label, &c.comment);
        attrs.push((RDFS_SUBCLASS_OF, c.superclasses.iter().map(|s| iri(s)).collect()));
        write_entity(&mut out, &c.iri, &[iri(OWL_CLASS)], attrs);
    }
    for (kind, props) in [(OWL_OBJECT_PROPERTY, &model.object_properties), (OWL_DATATYPE_PROPERTY, &model.data_properties)] {
        for p in props {
            let mut attrs = annotations(&p.label, &p.comment);
            attrs.push((RDFS_DOMAIN, p.domains.iter().map(|s| iri(s)).collect()));
            attrs.push((RDFS_RANGE, p.ranges.iter().map(|s| iri(s)).collect()));
            write_entity(&mut out, &p.iri, &[iri(kind)], attrs);
        }
    }
    for i in &model.individuals {
        let mut types = vec![iri(OWL_NAMED_INDIVIDUAL)];
        types.extend(i.types.iter().map(|t| iri(t)));
        write_entity(&mut out, &i.iri, &types, annotations(&i.label, &i.comment));
    }
    out
}
