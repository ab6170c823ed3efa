//! Paraphrase filtering and thematic clustering of CQ sets.
//!
//! Both steps are single model calls and need no user supervision. The
//! engine only enforces structure: deduplication keeps the earliest member
//! of each paraphrase group, and clustering always yields a partition of
//! the input (questions the model leaves out land in an `Unclustered` group).

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cq::{numbered_list, CqSet};
use crate::engine::{Engine, LlmError};
use crate::error::{self, ErrorCode};
use crate::prompts::PromptError;

pub const UNCLUSTERED: &str = "Unclustered";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CqCluster {
    pub label: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    pub input_set: String,
    pub dropped_duplicates: Vec<(String, String)>,
    pub clusters: Vec<CqCluster>,
    /// Model output the engine had to ignore or repair.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("the CQ set is empty")]
    EmptySet,
    #[error("could not parse the model reply: {0}")]
    ListParse(String),
    #[error("k = {k} is larger than the {available} questions available")]
    KTooLarge { k: usize, available: usize },
    #[error("k must be positive")]
    ZeroK,
    #[error("clustering violates an invariant: {0}")]
    Invalid(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

impl From<PromptError> for AnalysisError {
    fn from(e: PromptError) -> Self {
        AnalysisError::Llm(e.into())
    }
}

impl ErrorCode for AnalysisError {
    fn code(&self) -> &'static str {
        match self {
            AnalysisError::EmptySet => error::EMPTY_SET,
            AnalysisError::ListParse(_) => error::LIST_PARSE_ERROR,
            AnalysisError::KTooLarge { .. } => error::K_TOO_LARGE,
            AnalysisError::ZeroK => error::BAD_REQUEST,
            AnalysisError::Invalid(_) => error::INVARIANT_VIOLATION,
            AnalysisError::Llm(e) => e.code(),
        }
    }
}

impl Clustering {
    /// Partition and duplicate-mapping invariants against the survivor set.
    pub fn validate(&self, survivors: &CqSet) -> Result<(), AnalysisError> {
        let mut seen: HashMap<&str, &str> = HashMap::new();
        for cluster in &self.clusters {
            if cluster.label.trim().is_empty() || cluster.members.is_empty() {
                return Err(AnalysisError::Invalid("clusters need a label and members".into()));
            }
            for m in &cluster.members {
                if let Some(other) = seen.insert(m, &cluster.label) {
                    return Err(AnalysisError::Invalid(format!("{m} is in both '{other}' and '{}'", cluster.label)));
                }
            }
        }
        let ids: Vec<&str> = survivors.cqs.iter().map(|c| c.id.as_str()).collect();
        if seen.len() != ids.len() || ids.iter().any(|id| !seen.contains_key(id)) {
            return Err(AnalysisError::Invalid("clusters do not partition the survivor set".into()));
        }
        let mut dropped = std::collections::HashSet::new();
        for (kept, gone) in &self.dropped_duplicates {
            if !seen.contains_key(kept.as_str()) {
                return Err(AnalysisError::Invalid(format!("kept id {kept} is not a survivor")));
            }
            if seen.contains_key(gone.as_str()) || !dropped.insert(gone) {
                return Err(AnalysisError::Invalid(format!("dropped id {gone} is not dropped exactly once")));
            }
        }
        Ok(())
    }
}

/// Casefolded text with punctuation removed and whitespace collapsed.
pub fn normalize_question(text: &str) -> String {
    text.chars()
        .filter(|c| !c.is_ascii_punctuation() && !matches!(c, '“' | '”' | '‘' | '’'))
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_groups(reply: &str, count: usize) -> Result<Vec<Vec<usize>>, AnalysisError> {
    let trimmed = reply.trim();
    if trimmed.to_ascii_uppercase().starts_with("NONE") {
        return Ok(Vec::new());
    }
    let number = regex::Regex::new(r"\d+").expect("valid regex");
    let mut groups = Vec::new();
    for line in trimmed.lines() {
        let indices: Vec<usize> = number
            .find_iter(line)
            .map(|m| m.as_str().parse::<usize>().unwrap_or(0))
            .collect();
        if indices.len() < 2 {
            continue;
        }
        if let Some(bad) = indices.iter().find(|&&i| i == 0 || i > count) {
            return Err(AnalysisError::ListParse(format!("question number {bad} out of range 1..={count}")));
        }
        groups.push(indices.into_iter().map(|i| i - 1).collect());
    }
    if groups.is_empty() {
        return Err(AnalysisError::ListParse(format!("no paraphrase groups or NONE in {trimmed:?}")));
    }
    Ok(groups)
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut root = i;
    while parent[root] != root {
        root = parent[root];
    }
    let mut cur = i;
    while parent[cur] != root {
        let next = parent[cur];
        parent[cur] = root;
        cur = next;
    }
    root
}

/// Removes paraphrases. Exact textual repeats are collapsed without asking
/// the model; the distinct remainder goes to the model in one call when it
/// has at least two questions. Returns the survivors and `(kept, dropped)`
/// id pairs. The revision is unchanged: filtering is not a refinement pass.
pub async fn deduplicate(engine: &Engine, set: &CqSet) -> Result<(CqSet, Vec<(String, String)>), AnalysisError> {
    if set.cqs.is_empty() {
        return Err(AnalysisError::EmptySet);
    }
    let n = set.cqs.len();
    let mut parent: Vec<usize> = (0..n).collect();

    let mut first_by_text: HashMap<&str, usize> = HashMap::new();
    let mut distinct = Vec::new();
    for (i, cq) in set.cqs.iter().enumerate() {
        match first_by_text.get(cq.text.trim()) {
            Some(&j) => parent[i] = j,
            None => {
                first_by_text.insert(cq.text.trim(), i);
                distinct.push(i);
            }
        }
    }

    if distinct.len() >= 2 {
        let questions = numbered_list(distinct.iter().map(|&i| set.cqs[i].text.as_str()));
        let prompt = engine.render("dedup_user", &[("questions", &questions)])?;
        let reply = engine
            .ask("dedup", "dedup_system", prompt, engine.settings.analytic_temperature)
            .await?;
        for group in parse_groups(&reply, distinct.len())? {
            let members: Vec<usize> = group.iter().map(|&g| distinct[g]).collect();
            for pair in members.windows(2) {
                let (a, b) = (find(&mut parent, pair[0]), find(&mut parent, pair[1]));
                // Earliest input position represents the group.
                if a < b {
                    parent[b] = a;
                } else if b < a {
                    parent[a] = b;
                }
            }
        }
    }

    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        if root == i {
            kept.push(set.cqs[i].clone());
        } else {
            dropped.push((set.cqs[root].id.clone(), set.cqs[i].id.clone()));
        }
    }
    Ok((CqSet { cqs: kept, ..set.clone() }, dropped))
}

/// Cluster labels with their question texts, in reply order.
pub type LabeledGroups = Vec<(String, Vec<String>)>;

/// Parses the `{label: [question, ...]}` reply. Code fences and text around
/// the object are ignored; a missing pair of outer braces and trailing
/// commas are repaired. Anything else is an error.
pub fn parse_cluster_reply(reply: &str) -> Result<(LabeledGroups, Vec<String>), AnalysisError> {
    let mut warnings = Vec::new();
    let body = match (reply.find('{'), reply.rfind('}')) {
        (Some(start), Some(end)) if start < end => reply[start..=end].to_string(),
        _ => {
            warnings.push("reply had no outer braces".to_string());
            format!("{{{}}}", reply.trim())
        }
    };
    let parsed: serde_json::Value = match serde_json::from_str(&body) {
        Ok(v) => v,
        Err(_) => {
            let repaired = strip_trailing_commas(&body);
            let value = serde_json::from_str(&repaired)
                .map_err(|e| AnalysisError::ListParse(format!("cluster reply is not a JSON object: {e}")))?;
            warnings.push("removed trailing commas from reply".to_string());
            value
        }
    };
    let object = parsed
        .as_object()
        .ok_or_else(|| AnalysisError::ListParse("cluster reply is not a JSON object".into()))?;
    let mut groups = Vec::new();
    for (label, members) in object {
        let members = members
            .as_array()
            .ok_or_else(|| AnalysisError::ListParse(format!("group '{label}' is not a list")))?;
        let members = members
            .iter()
            .map(|m| {
                m.as_str()
                    .map(String::from)
                    .ok_or_else(|| AnalysisError::ListParse(format!("group '{label}' has a non-string member")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if label.trim().is_empty() {
            return Err(AnalysisError::ListParse("group with an empty label".into()));
        }
        groups.push((label.trim().to_string(), members));
    }
    Ok((groups, warnings))
}

fn strip_trailing_commas(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        if c == '"' {
            in_string = true;
        } else if c == ',' {
            let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
            if matches!(next, Some('}') | Some(']') | None) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

/// Groups a (deduplicated) set. Without `k` the model picks the number of
/// groups; with `k` the prompt asks for exactly `k`.
pub async fn cluster(engine: &Engine, set: &CqSet, k: Option<usize>) -> Result<Clustering, AnalysisError> {
    if set.cqs.is_empty() {
        return Err(AnalysisError::EmptySet);
    }
    let instruction = match k {
        Some(0) => return Err(AnalysisError::ZeroK),
        Some(k) if k > set.cqs.len() => {
            return Err(AnalysisError::KTooLarge { k, available: set.cqs.len() })
        }
        Some(k) => engine.render("cluster_k_instruction", &[("k", &k.to_string())])?,
        None => engine.render("cluster_free_instruction", &[])?,
    };
    let prompt = engine.render("cluster_user", &[("questions", &set.numbered()), ("instruction", &instruction)])?;
    let reply = engine
        .ask("cluster", "cluster_system", prompt, engine.settings.analytic_temperature)
        .await?;
    let (groups, mut warnings) = parse_cluster_reply(&reply)?;
    let mut clusters = assign_members(set, groups, &mut warnings);
    if let Some(k) = k {
        let real = clusters.iter().filter(|c| c.label != UNCLUSTERED).count();
        if real != k {
            warnings.push(format!("asked for {k} groups, model returned {real}"));
        }
    }
    clusters.retain(|c| !c.members.is_empty());
    Ok(Clustering { input_set: crate::digest::content_id(set), dropped_duplicates: Vec::new(), clusters, warnings })
}

fn assign_members(set: &CqSet, groups: Vec<(String, Vec<String>)>, warnings: &mut Vec<String>) -> Vec<CqCluster> {
    let mut exact: HashMap<&str, Vec<usize>> = HashMap::new();
    let mut loose: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, cq) in set.cqs.iter().enumerate() {
        exact.entry(cq.text.trim()).or_default().push(i);
        loose.entry(normalize_question(&cq.text)).or_default().push(i);
    }
    let mut taken = vec![false; set.cqs.len()];
    // Repeated labels are merged, keeping first-seen order.
    let mut order: Vec<String> = Vec::new();
    let mut by_label: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (label, members) in groups {
        if !by_label.contains_key(&label) {
            order.push(label.clone());
        }
        let slot = by_label.entry(label.clone()).or_default();
        for text in members {
            let candidates = exact
                .get(text.trim())
                .into_iter()
                .flatten()
                .chain(loose.get(&normalize_question(&text)).into_iter().flatten());
            let hit = candidates.copied().find(|&i| !taken[i]);
            match hit {
                Some(i) => {
                    taken[i] = true;
                    slot.push(i);
                }
                None => warnings.push(format!("'{label}' lists an unknown or repeated question: {text:?}")),
            }
        }
    }
    let mut clusters: Vec<CqCluster> = order
        .into_iter()
        .map(|label| {
            let members = by_label[&label].iter().map(|&i| set.cqs[i].id.clone()).collect();
            CqCluster { label, members }
        })
        .collect();
    let leftover: Vec<String> = set
        .cqs
        .iter()
        .zip(&taken)
        .filter(|(_, t)| !**t)
        .map(|(c, _)| c.id.clone())
        .collect();
    if !leftover.is_empty() {
        warnings.push(format!("{} question(s) were not clustered by the model", leftover.len()));
        match clusters.iter_mut().find(|c| c.label == UNCLUSTERED) {
            Some(c) => c.members.extend(leftover),
            None => clusters.push(CqCluster { label: UNCLUSTERED.to_string(), members: leftover }),
        }
    }
    clusters
}

/// Deduplication followed by clustering of the survivors.
pub async fn analyze(engine: &Engine, set: &CqSet, k: Option<usize>) -> Result<(CqSet, Clustering), AnalysisError> {
    let (survivors, dropped) = deduplicate(engine, set).await?;
    let mut clustering = cluster(engine, &survivors, k).await?;
    clustering.input_set = crate::digest::content_id(set);
    clustering.dropped_duplicates = dropped;
    clustering.validate(&survivors)?;
    Ok((survivors, clustering))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cq::CompetencyQuestion;

    fn set(texts: &[&str]) -> CqSet {
        CqSet {
            story_ref: "s".into(),
            revision: 1,
            cqs: texts
                .iter()
                .enumerate()
                .map(|(i, t)| CompetencyQuestion::root(format!("q{}", i + 1), *t))
                .collect(),
        }
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_question("  Which IS the name, of an artist? "), "which is the name of an artist");
    }

    #[test]
    fn group_parsing() {
        assert_eq!(parse_groups("NONE", 3).unwrap(), Vec::<Vec<usize>>::new());
        assert_eq!(parse_groups("1, 3\n", 3).unwrap(), vec![vec![0, 2]]);
        assert_eq!(parse_groups("Groups:\n2, 3", 3).unwrap(), vec![vec![1, 2]]);
        assert!(parse_groups("1, 4", 3).is_err());
        assert!(parse_groups("no idea", 3).is_err());
    }

    #[test]
    fn cluster_reply_repairs() {
        let (g, w) = parse_cluster_reply("```json\n{\"A\": [\"x?\", \"y?\",],}\n```").unwrap();
        assert_eq!(g, vec![("A".to_string(), vec!["x?".to_string(), "y?".to_string()])]);
        assert_eq!(w.len(), 1);
        let (g, _) = parse_cluster_reply("\"A\": [\"x?\"],\n\"B\": [\"y?\"]").unwrap();
        assert_eq!(g.len(), 2);
        assert!(parse_cluster_reply("{\"A\": \"x?\"}").is_err());
        assert!(parse_cluster_reply("just prose").is_err());
        // Commas inside strings are untouched.
        let (g, _) = parse_cluster_reply("{\"A, B\": [\"x, y?\",]}").unwrap();
        assert_eq!(g[0], ("A, B".to_string(), vec!["x, y?".to_string()]));
    }

    #[test]
    fn label_order_is_preserved() {
        let (g, _) = parse_cluster_reply("{\"Zeta\": [\"a?\"], \"Alpha\": [\"b?\"]}").unwrap();
        assert_eq!(g[0].0, "Zeta");
    }

    #[test]
    fn assignment_matches_loosely_and_flags_leftovers() {
        let s = set(&["Who is the composer?", "Where was it formed?", "When did it end?"]);
        let mut warnings = Vec::new();
        let clusters = assign_members(
            &s,
            vec![
                ("People".into(), vec!["who is the Composer".into(), "Something else?".into()]),
                ("Places".into(), vec!["Where was it formed?".into(), "Where was it formed?".into()]),
            ],
            &mut warnings,
        );
        assert_eq!(clusters[0].members, vec!["q1"]);
        assert_eq!(clusters[1].members, vec!["q2"]);
        assert_eq!(clusters[2], CqCluster { label: UNCLUSTERED.into(), members: vec!["q3".into()] });
        assert_eq!(warnings.len(), 3);
    }

    #[test]
    fn clustering_validation() {
        let s = set(&["A?", "B?"]);
        let ok = Clustering {
            input_set: "x".into(),
            dropped_duplicates: vec![("q1".into(), "q9".into())],
            clusters: vec![CqCluster { label: "L".into(), members: vec!["q1".into(), "q2".into()] }],
            warnings: vec![],
        };
        ok.validate(&s).unwrap();
        let mut missing = ok.clone();
        missing.clusters[0].members.pop();
        assert!(missing.validate(&s).is_err());
        let mut twice = ok.clone();
        twice.clusters.push(CqCluster { label: "M".into(), members: vec!["q2".into()] });
        assert!(twice.validate(&s).is_err());
        let mut bad_pair = ok;
        bad_pair.dropped_duplicates.push(("q1".into(), "q9".into()));
        assert!(bad_pair.validate(&s).is_err());
    }
}
