//! Project-scoped artifact storage.
//!
//! Layout of a workspace root:
//!
//! ```text
//! <root>/<project-id>/manifest.json
//! <root>/<project-id>/stories/<id>.json
//! <root>/<project-id>/cq_sets/<id>.json
//! <root>/<project-id>/clusterings/<id>.json
//! <root>/<project-id>/ontologies/<id>.ttl | <id>.rdf
//! <root>/<project-id>/verbalizations/<id>.txt (+ <id>.stats.json)
//! <root>/<project-id>/reports/<id>.json
//! <root>/<project-id>/transcripts/<id>.json
//! <root>/<project-id>/sessions/<session-id>.json
//! ```
//!
//! Artifacts are content-addressed by the hash of their canonical form, so
//! saving the same artifact twice yields one file and one manifest entry.
//! The artifact file is always written before the manifest is updated, and
//! both writes go through a temp file plus rename. Sessions are the one
//! mutable kind: they are stored under their own id and overwritten.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant, SystemTime};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::Clustering;
use crate::cq::CqSet;
use crate::digest::{content_id, sha256_hex};
use crate::error::{self, ErrorCode};
use crate::gateway::Transcript;
use crate::ontology::{parse_ontology, LineSpan, OntologyFormat, VerbalizationDoc, VerbalizationStats};
use crate::story::{ElicitationSession, UserStory};
use crate::testing::TestReport;

const MANIFEST: &str = "manifest.json";
const LOCK: &str = ".lock";
/// A lock older than this is assumed to be left over from a crashed writer.
const STALE_LOCK: Duration = Duration::from_secs(60);
const LOCK_WAIT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum WorkspaceError {
    #[error("{kind} {id} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("artifact violates its invariants: {0}")]
    InvariantViolation(String),
    #[error("cannot parse {file}: {message}")]
    Parse { file: String, message: String },
    #[error("storage error: {0}")]
    Storage(String),
    #[error("project {0} is locked by another writer")]
    Locked(String),
}

impl ErrorCode for WorkspaceError {
    fn code(&self) -> &'static str {
        match self {
            WorkspaceError::NotFound { .. } => error::NOT_FOUND,
            WorkspaceError::InvariantViolation(_) => error::INVARIANT_VIOLATION,
            WorkspaceError::Parse { .. } => error::PARSE_ERROR,
            WorkspaceError::Storage(_) => error::STORAGE_ERROR,
            WorkspaceError::Locked(_) => error::LOCKED,
        }
    }
}

fn storage(path: &Path, e: impl std::fmt::Display) -> WorkspaceError {
    WorkspaceError::Storage(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Stories,
    CqSets,
    Clusterings,
    Ontologies,
    Verbalizations,
    Reports,
    Transcripts,
    Sessions,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 8] = [
        ArtifactKind::Stories,
        ArtifactKind::CqSets,
        ArtifactKind::Clusterings,
        ArtifactKind::Ontologies,
        ArtifactKind::Verbalizations,
        ArtifactKind::Reports,
        ArtifactKind::Transcripts,
        ArtifactKind::Sessions,
    ];

    pub fn dir(self) -> &'static str {
        match self {
            ArtifactKind::Stories => "stories",
            ArtifactKind::CqSets => "cq_sets",
            ArtifactKind::Clusterings => "clusterings",
            ArtifactKind::Ontologies => "ontologies",
            ArtifactKind::Verbalizations => "verbalizations",
            ArtifactKind::Reports => "reports",
            ArtifactKind::Transcripts => "transcripts",
            ArtifactKind::Sessions => "sessions",
        }
    }

    pub fn singular(self) -> &'static str {
        match self {
            ArtifactKind::Stories => "story",
            ArtifactKind::CqSets => "CQ set",
            ArtifactKind::Clusterings => "clustering",
            ArtifactKind::Ontologies => "ontology",
            ArtifactKind::Verbalizations => "verbalization",
            ArtifactKind::Reports => "report",
            ArtifactKind::Transcripts => "transcript",
            ArtifactKind::Sessions => "session",
        }
    }
}

/// Manifest entry; `file` is relative to the project directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub id: String,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Project {
    pub id: String,
    pub name: String,
    pub created_at: String,
    pub artifacts: BTreeMap<ArtifactKind, Vec<ArtifactRef>>,
}

impl Project {
    pub fn refs(&self, kind: ArtifactKind) -> &[ArtifactRef] {
        self.artifacts.get(&kind).map(Vec::as_slice).unwrap_or_default()
    }

    pub fn find(&self, kind: ArtifactKind, id: &str) -> Option<&ArtifactRef> {
        self.refs(kind).iter().find(|r| r.id == id)
    }
}

/// Encoded form of an artifact: main file plus optional JSON sidecar.
pub struct Encoded {
    pub extension: &'static str,
    pub body: Vec<u8>,
    pub sidecar: Option<Vec<u8>>,
}

/// A storable, content-addressed artifact type.
pub trait Artifact: Sized {
    const KIND: ArtifactKind;

    fn check(&self) -> Result<(), String>;
    fn content_id(&self) -> String;
    fn encode(&self) -> Encoded;
    fn decode(file: &str, body: &[u8], sidecar: Option<&[u8]>) -> Result<Self, String>;
}

fn pretty_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("artifact types serialize infallibly");
    out.push(b'\n');
    out
}

fn from_json<T: DeserializeOwned>(body: &[u8]) -> Result<T, String> {
    serde_json::from_slice(body).map_err(|e| e.to_string())
}

macro_rules! json_artifact {
    ($ty:ty, $kind:expr, $check:expr) => {
        impl Artifact for $ty {
            const KIND: ArtifactKind = $kind;

            fn check(&self) -> Result<(), String> {
                #[allow(clippy::redundant_closure_call)]
                ($check)(self)
            }

            fn content_id(&self) -> String {
                content_id(self)
            }

            fn encode(&self) -> Encoded {
                Encoded { extension: "json", body: pretty_json(self), sidecar: None }
            }

            fn decode(_file: &str, body: &[u8], _sidecar: Option<&[u8]>) -> Result<Self, String> {
                from_json(body)
            }
        }
    };
}

json_artifact!(UserStory, ArtifactKind::Stories, |s: &UserStory| s.validate());
json_artifact!(CqSet, ArtifactKind::CqSets, |s: &CqSet| s.validate().map_err(|e| e.to_string()));
json_artifact!(Clustering, ArtifactKind::Clusterings, |c: &Clustering| check_clustering(c));
json_artifact!(TestReport, ArtifactKind::Reports, |r: &TestReport| r.validate().map_err(|e| e.to_string()));

fn check_clustering(c: &Clustering) -> Result<(), String> {
    let mut seen = std::collections::HashSet::new();
    for cluster in &c.clusters {
        if cluster.label.trim().is_empty() || cluster.members.is_empty() {
            return Err("clusters need a label and members".into());
        }
        for m in &cluster.members {
            if !seen.insert(m) {
                return Err(format!("{m} is in more than one cluster"));
            }
        }
    }
    Ok(())
}

impl Artifact for Transcript {
    const KIND: ArtifactKind = ArtifactKind::Transcripts;

    fn check(&self) -> Result<(), String> {
        for (i, entry) in self.entries.iter().enumerate() {
            if entry.request.digest() != entry.digest {
                return Err(format!("entry {i} has a stale digest"));
            }
        }
        Ok(())
    }

    fn content_id(&self) -> String {
        content_id(self)
    }

    fn encode(&self) -> Encoded {
        Encoded { extension: "json", body: self.to_json().into_bytes(), sidecar: None }
    }

    fn decode(_file: &str, body: &[u8], _sidecar: Option<&[u8]>) -> Result<Self, String> {
        let text = std::str::from_utf8(body).map_err(|e| e.to_string())?;
        Transcript::from_json(text).map_err(|e| e.to_string())
    }
}

/// An ontology document stored exactly as supplied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologySource {
    pub format: OntologyFormat,
    pub text: String,
}

impl Artifact for OntologySource {
    const KIND: ArtifactKind = ArtifactKind::Ontologies;

    fn check(&self) -> Result<(), String> {
        parse_ontology(&self.text, self.format).map(|_| ()).map_err(|e| e.to_string())
    }

    fn content_id(&self) -> String {
        let mut id = sha256_hex(self.text.as_bytes());
        id.truncate(16);
        id
    }

    fn encode(&self) -> Encoded {
        let extension = match self.format {
            OntologyFormat::Turtle => "ttl",
            OntologyFormat::RdfXml => "rdf",
        };
        Encoded { extension, body: self.text.as_bytes().to_vec(), sidecar: None }
    }

    fn decode(file: &str, body: &[u8], _sidecar: Option<&[u8]>) -> Result<Self, String> {
        let format = OntologyFormat::from_path(Path::new(file)).map_err(|e| e.to_string())?;
        let text = String::from_utf8(body.to_vec()).map_err(|e| e.to_string())?;
        Ok(Self { format, text })
    }
}

#[derive(Serialize, Deserialize)]
struct VerbalizationSidecar {
    #[serde(flatten)]
    stats: VerbalizationStats,
    index: BTreeMap<String, LineSpan>,
}

impl Artifact for VerbalizationDoc {
    const KIND: ArtifactKind = ArtifactKind::Verbalizations;

    fn check(&self) -> Result<(), String> {
        let lines = self.text.lines().count();
        for (iri, span) in &self.index {
            if span.start == 0 || span.start > span.end || span.end > lines {
                return Err(format!("line span of {iri} is outside the text"));
            }
        }
        Ok(())
    }

    fn content_id(&self) -> String {
        content_id(self)
    }

    fn encode(&self) -> Encoded {
        let sidecar = VerbalizationSidecar { stats: self.stats.clone(), index: self.index.clone() };
        Encoded { extension: "txt", body: self.text.as_bytes().to_vec(), sidecar: Some(pretty_json(&sidecar)) }
    }

    fn decode(_file: &str, body: &[u8], sidecar: Option<&[u8]>) -> Result<Self, String> {
        let text = String::from_utf8(body.to_vec()).map_err(|e| e.to_string())?;
        let sidecar: VerbalizationSidecar = from_json(sidecar.ok_or("missing stats sidecar")?)?;
        Ok(Self { text, index: sidecar.index, stats: sidecar.stats })
    }
}

fn sidecar_name(file: &str) -> String {
    match file.rsplit_once('.') {
        Some((stem, _)) => format!("{stem}.stats.json"),
        None => format!("{file}.stats.json"),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), WorkspaceError> {
    let dir = path.parent().expect("artifact paths have a parent");
    fs::create_dir_all(dir).map_err(|e| storage(dir, e))?;
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact"),
        uuid::Uuid::new_v4().simple()
    ));
    let mut f = fs::File::create(&tmp).map_err(|e| storage(&tmp, e))?;
    f.write_all(bytes).map_err(|e| storage(&tmp, e))?;
    f.sync_all().map_err(|e| storage(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| storage(path, e))
}

/// Held while a project is being written; removes the lock file on drop.
struct LockGuard {
    path: PathBuf,
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Root directory holding one subdirectory per project.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, WorkspaceError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| storage(&root, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn project_dir(&self, id: &str) -> Result<PathBuf, WorkspaceError> {
        let valid = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if !valid {
            return Err(WorkspaceError::NotFound { kind: "project", id: id.to_string() });
        }
        Ok(self.root.join(id))
    }

    pub fn create_project(&self, name: &str) -> Result<Project, WorkspaceError> {
        if name.trim().is_empty() {
            return Err(WorkspaceError::InvariantViolation("project name must not be empty".into()));
        }
        let project = Project {
            id: uuid::Uuid::new_v4().simple().to_string(),
            name: name.trim().to_string(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            artifacts: BTreeMap::new(),
        };
        let dir = self.project_dir(&project.id)?;
        fs::create_dir_all(&dir).map_err(|e| storage(&dir, e))?;
        write_atomic(&dir.join(MANIFEST), &pretty_json(&project))?;
        Ok(project)
    }

    pub fn project(&self, id: &str) -> Result<Project, WorkspaceError> {
        let path = self.project_dir(id)?.join(MANIFEST);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(WorkspaceError::NotFound { kind: "project", id: id.to_string() })
            }
            Err(e) => return Err(storage(&path, e)),
        };
        from_json(&bytes).map_err(|message| WorkspaceError::Parse { file: path.display().to_string(), message })
    }

    pub fn list_projects(&self) -> Result<Vec<Project>, WorkspaceError> {
        let mut projects = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(|e| storage(&self.root, e))? {
            let entry = entry.map_err(|e| storage(&self.root, e))?;
            if entry.path().join(MANIFEST).is_file() {
                if let Some(id) = entry.file_name().to_str() {
                    projects.push(self.project(id)?);
                }
            }
        }
        projects.sort_by(|a, b| (&a.created_at, &a.id).cmp(&(&b.created_at, &b.id)));
        Ok(projects)
    }

    /// Project that holds an artifact of this kind with this id, if any.
    pub fn locate(&self, kind: ArtifactKind, id: &str) -> Result<Option<Project>, WorkspaceError> {
        Ok(self.list_projects()?.into_iter().find(|p| p.find(kind, id).is_some()))
    }

    fn lock(&self, project: &str) -> Result<LockGuard, WorkspaceError> {
        let path = self.project_dir(project)?.join(LOCK);
        let deadline = Instant::now() + LOCK_WAIT;
        loop {
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    let _ = writeln!(f, "{}", std::process::id());
                    return Ok(LockGuard { path });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    let stale = fs::metadata(&path)
                        .and_then(|m| m.modified())
                        .ok()
                        .and_then(|t| SystemTime::now().duration_since(t).ok())
                        .is_some_and(|age| age > STALE_LOCK);
                    if stale {
                        tracing::warn!(project, "removing stale lock file");
                        let _ = fs::remove_file(&path);
                        continue;
                    }
                    if Instant::now() >= deadline {
                        return Err(WorkspaceError::Locked(project.to_string()));
                    }
                    std::thread::sleep(Duration::from_millis(10));
                }
                Err(e) => return Err(storage(&path, e)),
            }
        }
    }

    /// Adds `entry` under `kind` unless an entry with the same id exists.
    fn register(&self, project: &str, kind: ArtifactKind, entry: ArtifactRef) -> Result<(), WorkspaceError> {
        let mut manifest = self.project(project)?;
        let refs = manifest.artifacts.entry(kind).or_default();
        if refs.iter().any(|r| r.id == entry.id) {
            return Ok(());
        }
        refs.push(entry);
        write_atomic(&self.project_dir(project)?.join(MANIFEST), &pretty_json(&manifest))
    }

    /// Validates and stores an artifact; returns its content-addressed reference.
    pub fn save<A: Artifact>(&self, project: &str, artifact: &A) -> Result<ArtifactRef, WorkspaceError> {
        artifact.check().map_err(WorkspaceError::InvariantViolation)?;
        let dir = self.project_dir(project)?;
        self.project(project)?;
        let _guard = self.lock(project)?;
        let id = artifact.content_id();
        let encoded = artifact.encode();
        let file = format!("{}/{id}.{}", A::KIND.dir(), encoded.extension);
        if let Some(sidecar) = &encoded.sidecar {
            write_atomic(&dir.join(sidecar_name(&file)), sidecar)?;
        }
        write_atomic(&dir.join(&file), &encoded.body)?;
        let entry = ArtifactRef { id, file };
        self.register(project, A::KIND, entry.clone())?;
        Ok(entry)
    }

    pub fn load<A: Artifact>(&self, project: &str, id: &str) -> Result<A, WorkspaceError> {
        let manifest = self.project(project)?;
        let not_found = || WorkspaceError::NotFound { kind: A::KIND.singular(), id: id.to_string() };
        let entry = manifest.find(A::KIND, id).ok_or_else(not_found)?;
        let dir = self.project_dir(project)?;
        let read = |name: &str| match fs::read(dir.join(name)) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(storage(&dir.join(name), e)),
        };
        let body = read(&entry.file)?.ok_or_else(not_found)?;
        let sidecar = read(&sidecar_name(&entry.file))?;
        A::decode(&entry.file, &body, sidecar.as_deref())
            .map_err(|message| WorkspaceError::Parse { file: dir.join(&entry.file).display().to_string(), message })
    }

    /// Stores (or overwrites) the mutable state of an elicitation session.
    pub fn save_session(&self, project: &str, session: &ElicitationSession) -> Result<(), WorkspaceError> {
        let dir = self.project_dir(project)?;
        self.project(project)?;
        if session.id.is_empty() || !session.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
            return Err(WorkspaceError::InvariantViolation(format!("bad session id {:?}", session.id)));
        }
        let _guard = self.lock(project)?;
        let file = format!("{}/{}.json", ArtifactKind::Sessions.dir(), session.id);
        write_atomic(&dir.join(&file), &pretty_json(session))?;
        self.register(project, ArtifactKind::Sessions, ArtifactRef { id: session.id.clone(), file })
    }

    pub fn load_session(&self, project: &str, id: &str) -> Result<ElicitationSession, WorkspaceError> {
        let manifest = self.project(project)?;
        let not_found = || WorkspaceError::NotFound { kind: "session", id: id.to_string() };
        let entry = manifest.find(ArtifactKind::Sessions, id).ok_or_else(not_found)?;
        let path = self.project_dir(project)?.join(&entry.file);
        let bytes = fs::read(&path).map_err(|_| not_found())?;
        from_json(&bytes).map_err(|message| WorkspaceError::Parse { file: path.display().to_string(), message })
    }

    /// Raw bytes of a stored artifact file (for serving artifacts verbatim).
    pub fn read_raw(&self, project: &str, kind: ArtifactKind, id: &str) -> Result<Vec<u8>, WorkspaceError> {
        let manifest = self.project(project)?;
        let entry = manifest
            .find(kind, id)
            .ok_or_else(|| WorkspaceError::NotFound { kind: kind.singular(), id: id.to_string() })?;
        let path = self.project_dir(project)?.join(&entry.file);
        fs::read(&path).map_err(|e| storage(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::story::Persona;

    fn story() -> UserStory {
        UserStory {
            title: "Archive".into(),
            version: 1,
            persona: Persona {
                name: "Mara".into(),
                occupation: "Archivist".into(),
                skills: vec!["cataloguing".into()],
                interests: vec!["folk songs".into()],
            },
            goal: "Document songs".into(),
            scenario: "She records performances".into(),
            example_data: vec!["A ballad recorded in 1962".into()],
        }
    }

    #[test]
    fn story_round_trip_and_dedup() {
        let tmp = tempfile::tempdir().unwrap();
        let ws = Workspace::open(tmp.path()).unwrap();
        let p = ws.create_project("demo").unwrap();
        let r1 = ws.save(&p.id, &story()).unwrap();
        let r2 = ws.save(&p.id, &story()).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(ws.project(&p.id).unwrap().refs(ArtifactKind::Stories).len(), 1);
        assert_eq!(fs::read_dir(tmp.path().join(&p.id).join("stories")).unwrap().count(), 1);
        let loaded: UserStory = ws.load(&p.id, &r1.id).unwrap();
        assert_eq!(loaded, story());
        let raw = ws.read_raw(&p.id, ArtifactKind::Stories, &r1.id).unwrap();
        assert_eq!(raw, pretty_json(&loaded));
        assert!(!tmp.path().join(&p.id).join(LOCK).exists());
    }

    #[test]
    fn invalid_story_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let ws = Workspace::open(tmp.path()).unwrap();
        let p = ws.create_project("demo").unwrap();
        let bad = UserStory { goal: String::new(), ..story() };
        assert!(matches!(ws.save(&p.id, &bad), Err(WorkspaceError::InvariantViolation(_))));
        assert!(ws.project(&p.id).unwrap().refs(ArtifactKind::Stories).is_empty());
    }

    #[test]
    fn unknown_and_corrupt_references() {
        let tmp = tempfile::tempdir().unwrap();
        let ws = Workspace::open(tmp.path()).unwrap();
        let p = ws.create_project("demo").unwrap();
        let err = ws.load::<UserStory>(&p.id, "nope").unwrap_err();
        assert_eq!(err.code(), error::NOT_FOUND);
        assert_eq!(ws.project("../etc").unwrap_err().code(), error::NOT_FOUND);

        let r = ws.save(&p.id, &story()).unwrap();
        let path = tmp.path().join(&p.id).join(&r.file);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        match ws.load::<UserStory>(&p.id, &r.id).unwrap_err() {
            WorkspaceError::Parse { file, .. } => assert!(file.ends_with(&r.file)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn held_lock_blocks_writers() {
        let tmp = tempfile::tempdir().unwrap();
        let ws = Workspace::open(tmp.path()).unwrap();
        let p = ws.create_project("demo").unwrap();
        let _held = ws.lock(&p.id).unwrap();
        let started = Instant::now();
        assert_eq!(ws.save(&p.id, &story()).unwrap_err(), WorkspaceError::Locked(p.id.clone()));
        assert!(started.elapsed() >= LOCK_WAIT);
    }

    #[test]
    fn ontology_and_verbalization_files() {
        let tmp = tempfile::tempdir().unwrap();
        let ws = Workspace::open(tmp.path()).unwrap();
        let p = ws.create_project("demo").unwrap();
        let src = OntologySource {
            format: OntologyFormat::Turtle,
            text: "@prefix owl: <http://www.w3.org/2002/07/owl#> .\n<http://x/A> a owl:Class .\n".into(),
        };
        let r = ws.save(&p.id, &src).unwrap();
        assert!(r.file.ends_with(".ttl"));
        assert_eq!(ws.load::<OntologySource>(&p.id, &r.id).unwrap(), src);
        let broken = OntologySource { format: OntologyFormat::Turtle, text: "<a> <b> .".into() };
        assert!(matches!(ws.save(&p.id, &broken), Err(WorkspaceError::InvariantViolation(_))));

        let doc = crate::ontology::verbalize(&parse_ontology(&src.text, src.format).unwrap().model);
        let r = ws.save(&p.id, &doc).unwrap();
        assert!(tmp.path().join(&p.id).join(format!("verbalizations/{}.stats.json", r.id)).is_file());
        assert_eq!(
            fs::read_to_string(tmp.path().join(&p.id).join(&r.file)).unwrap(),
            doc.text
        );
        assert_eq!(ws.load::<VerbalizationDoc>(&p.id, &r.id).unwrap(), doc);
    }
}
