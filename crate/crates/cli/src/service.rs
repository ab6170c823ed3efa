//! Pipeline operations shared by the HTTP API and the CLI, so both surfaces
//! produce identical artifacts for identical inputs.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use cqkit_core::analysis::{self, Clustering};
use cqkit_core::cq::{self, ConfirmVerdict, CqSet};
use cqkit_core::ontology::{parse_ontology, verbalize, OntologyFormat, VerbalizationDoc};
use cqkit_core::story::{self, AgentTurn, ElicitationSession, Phase, SlotState, UserStory};
use cqkit_core::testing::{self, LabeledCq, TestReport};
use cqkit_core::workspace::{ArtifactKind, OntologySource, Project, Workspace};
use cqkit_core::Engine;

use crate::config::EngineConfig;
use crate::error::ApiError;

/// Parses an ontology document and verbalizes it. Parser warnings (skipped
/// statements) come first in the stats, followed by verbalizer warnings.
pub fn verbalize_source(source: &OntologySource) -> Result<VerbalizationDoc, ApiError> {
    let parsed = parse_ontology(&source.text, source.format)?;
    let mut doc = verbalize(&parsed.model);
    let mut warnings = parsed.warnings;
    warnings.append(&mut doc.stats.warnings);
    doc.stats.warnings = warnings;
    Ok(doc)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionTurn {
    pub session_id: String,
    pub agent_turn: AgentTurn,
    pub phase: Phase,
    pub slots: Vec<SlotState>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DraftResponse {
    pub session_id: String,
    pub phase: Phase,
    pub story: UserStory,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalizeResponse {
    pub session_id: String,
    pub phase: Phase,
    pub story_ref: String,
    pub story: UserStory,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SetResponse {
    pub set_ref: String,
    pub set: CqSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfirmResponse {
    pub set_ref: String,
    pub set: CqSet,
    /// Every revision the call stored, oldest first.
    pub revisions: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DedupeResponse {
    pub set_ref: String,
    pub set: CqSet,
    pub dropped: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterResponse {
    pub clustering_ref: String,
    pub clustering: Clustering,
    /// The deduplicated set the clusters partition.
    pub survivors_ref: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OntologyResponse {
    pub ontology_ref: String,
    pub format: OntologyFormat,
    pub classes: usize,
    pub object_properties: usize,
    pub data_properties: usize,
    pub individuals: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerbalizeResponse {
    pub verbalization_ref: String,
    pub verbalization: VerbalizationDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResponse {
    pub report_ref: String,
    pub report: TestReport,
}

/// Workspace-backed pipeline service. All durable state lives in the
/// workspace; the only in-memory state is the per-session lock table.
pub struct Service {
    pub workspace: Workspace,
    pub engine: Engine,
    config: EngineConfig,
    sessions: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl Service {
    pub fn new(workspace: Workspace, config: EngineConfig) -> Result<Self, ApiError> {
        let engine = config.build()?;
        Ok(Self { workspace, engine, config, sessions: Mutex::new(HashMap::new()) })
    }

    fn session_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut table = self.sessions.lock().expect("session table poisoned");
        table.entry(id.to_string()).or_default().clone()
    }

    fn persist_transcript(&self) -> Result<(), ApiError> {
        self.config.persist_transcript(&self.engine)
    }

    fn owner(&self, kind: ArtifactKind, id: &str) -> Result<Project, ApiError> {
        self.workspace.locate(kind, id)?.ok_or_else(|| ApiError::not_found(kind.singular(), id))
    }

    pub fn create_project(&self, name: &str) -> Result<Project, ApiError> {
        Ok(self.workspace.create_project(name)?)
    }

    pub fn project(&self, id: &str) -> Result<Project, ApiError> {
        Ok(self.workspace.project(id)?)
    }

    pub fn list_projects(&self) -> Result<Vec<Project>, ApiError> {
        Ok(self.workspace.list_projects()?)
    }

    // Elicitation -----------------------------------------------------------

    pub fn start_session(&self, project: &str) -> Result<SessionTurn, ApiError> {
        self.workspace.project(project)?;
        let (session, agent_turn) = story::start_session(&self.engine.prompts)?;
        self.workspace.save_session(project, &session)?;
        Ok(SessionTurn { session_id: session.id.clone(), agent_turn, phase: session.phase, slots: session.slots })
    }

    pub fn session(&self, id: &str) -> Result<ElicitationSession, ApiError> {
        let project = self.owner(ArtifactKind::Sessions, id)?;
        Ok(self.workspace.load_session(&project.id, id)?)
    }

    /// Loads a session, applies `op` under the session's lock and stores the
    /// result. A failed operation leaves the stored session untouched.
    async fn with_session<T, F>(&self, id: &str, op: F) -> Result<T, ApiError>
    where
        F: AsyncFnOnce(&Engine, &mut ElicitationSession) -> Result<T, ApiError>,
    {
        let lock = self.session_lock(id);
        let _guard = lock.lock().await;
        let project = self.owner(ArtifactKind::Sessions, id)?;
        let mut session = self.workspace.load_session(&project.id, id)?;
        let result = op(&self.engine, &mut session).await;
        self.persist_transcript()?;
        let value = result?;
        self.workspace.save_session(&project.id, &session)?;
        Ok(value)
    }

    pub async fn submit_message(&self, session_id: &str, text: &str) -> Result<SessionTurn, ApiError> {
        self.with_session(session_id, async |engine, session| {
            let agent_turn = story::submit_answer(engine, session, text).await?;
            Ok(SessionTurn {
                session_id: session.id.clone(),
                agent_turn,
                phase: session.phase,
                slots: session.slots.clone(),
            })
        })
        .await
    }

    pub async fn draft(&self, session_id: &str) -> Result<DraftResponse, ApiError> {
        self.with_session(session_id, async |engine, session| {
            let story = story::generate_draft(engine, session).await?;
            Ok(DraftResponse { session_id: session.id.clone(), phase: session.phase, story })
        })
        .await
    }

    pub async fn refine(&self, session_id: &str, feedback: &str) -> Result<DraftResponse, ApiError> {
        self.with_session(session_id, async |engine, session| {
            let story = story::refine_draft(engine, session, feedback).await?;
            Ok(DraftResponse { session_id: session.id.clone(), phase: session.phase, story })
        })
        .await
    }

    pub async fn finalize(&self, session_id: &str) -> Result<FinalizeResponse, ApiError> {
        let lock = self.session_lock(session_id);
        let _guard = lock.lock().await;
        let project = self.owner(ArtifactKind::Sessions, session_id)?;
        let mut session = self.workspace.load_session(&project.id, session_id)?;
        let story = story::finalize(&mut session)?;
        // The story is stored before the session is marked final, so a crash
        // in between leaves a session that can simply be finalized again.
        let story_ref = self.workspace.save(&project.id, &story)?;
        self.workspace.save_session(&project.id, &session)?;
        Ok(FinalizeResponse { session_id: session.id, phase: session.phase, story_ref: story_ref.id, story })
    }

    // Competency questions --------------------------------------------------

    pub fn story(&self, id: &str) -> Result<UserStory, ApiError> {
        let project = self.owner(ArtifactKind::Stories, id)?;
        Ok(self.workspace.load(&project.id, id)?)
    }

    pub fn cq_set(&self, id: &str) -> Result<(Project, CqSet), ApiError> {
        let project = self.owner(ArtifactKind::CqSets, id)?;
        let set = self.workspace.load(&project.id, id)?;
        Ok((project, set))
    }

    fn store_set(&self, project: &str, set: CqSet) -> Result<SetResponse, ApiError> {
        let r = self.workspace.save(project, &set)?;
        Ok(SetResponse { set_ref: r.id, set })
    }

    pub async fn extract(&self, project: &str, story_ref: &str) -> Result<SetResponse, ApiError> {
        self.workspace.project(project)?;
        let story: UserStory = self.workspace.load(project, story_ref)?;
        let set = cq::extract(&self.engine, &story).await;
        self.persist_transcript()?;
        self.store_set(project, set?)
    }

    pub async fn split(&self, set_ref: &str) -> Result<SetResponse, ApiError> {
        let (project, set) = self.cq_set(set_ref)?;
        let split = cq::split_non_atomic(&self.engine, &set).await;
        self.persist_transcript()?;
        self.store_set(&project.id, split?)
    }

    pub async fn abstract_entities(&self, set_ref: &str) -> Result<SetResponse, ApiError> {
        let (project, set) = self.cq_set(set_ref)?;
        let abstracted = cq::abstract_entities(&self.engine, &set).await;
        self.persist_transcript()?;
        self.store_set(&project.id, abstracted?)
    }

    pub async fn confirm(
        &self,
        set_ref: &str,
        verdict: ConfirmVerdict,
        feedback: Option<&str>,
    ) -> Result<ConfirmResponse, ApiError> {
        let (project, set) = self.cq_set(set_ref)?;
        let revisions = match verdict {
            ConfirmVerdict::Accept => vec![cq::confirm(&self.engine, &set, verdict, feedback).await?],
            ConfirmVerdict::Rerun => {
                let revisions = cq::rerun(&self.engine, &set, feedback).await;
                self.persist_transcript()?;
                revisions?
            }
        };
        let mut refs = Vec::new();
        for revision in &revisions {
            refs.push(self.workspace.save(&project.id, revision)?.id);
        }
        let set = revisions.into_iter().last().expect("confirm yields a revision");
        Ok(ConfirmResponse { set_ref: refs.last().cloned().expect("one ref per revision"), set, revisions: refs })
    }

    // Analysis --------------------------------------------------------------

    pub async fn dedupe(&self, set_ref: &str) -> Result<DedupeResponse, ApiError> {
        let (project, set) = self.cq_set(set_ref)?;
        let result = analysis::deduplicate(&self.engine, &set).await;
        self.persist_transcript()?;
        let (survivors, dropped) = result?;
        let r = self.workspace.save(&project.id, &survivors)?;
        Ok(DedupeResponse { set_ref: r.id, set: survivors, dropped })
    }

    /// The full analysis stage: deduplication, then clustering of the survivors.
    pub async fn cluster(&self, set_ref: &str, k: Option<usize>) -> Result<ClusterResponse, ApiError> {
        let (project, set) = self.cq_set(set_ref)?;
        let result = analysis::analyze(&self.engine, &set, k).await;
        self.persist_transcript()?;
        let (survivors, clustering) = result?;
        let survivors_ref = self.workspace.save(&project.id, &survivors)?.id;
        let r = self.workspace.save(&project.id, &clustering)?;
        Ok(ClusterResponse { clustering_ref: r.id, clustering, survivors_ref })
    }

    pub fn clustering(&self, id: &str) -> Result<Clustering, ApiError> {
        let project = self.owner(ArtifactKind::Clusterings, id)?;
        Ok(self.workspace.load(&project.id, id)?)
    }

    // Ontologies and testing ------------------------------------------------

    pub fn upload_ontology(&self, project: &str, source: OntologySource) -> Result<OntologyResponse, ApiError> {
        self.workspace.project(project)?;
        let parsed = parse_ontology(&source.text, source.format)?;
        let r = self.workspace.save(project, &source)?;
        Ok(OntologyResponse {
            ontology_ref: r.id,
            format: source.format,
            classes: parsed.model.classes.len(),
            object_properties: parsed.model.object_properties.len(),
            data_properties: parsed.model.data_properties.len(),
            individuals: parsed.model.individuals.len(),
            warnings: parsed.warnings,
        })
    }

    pub fn ontology(&self, id: &str) -> Result<(Project, OntologySource), ApiError> {
        let project = self.owner(ArtifactKind::Ontologies, id)?;
        let source = self.workspace.load(&project.id, id)?;
        Ok((project, source))
    }

    pub fn verbalize(&self, ontology_ref: &str) -> Result<VerbalizeResponse, ApiError> {
        let (project, source) = self.ontology(ontology_ref)?;
        let doc = verbalize_source(&source)?;
        let r = self.workspace.save(&project.id, &doc)?;
        Ok(VerbalizeResponse { verbalization_ref: r.id, verbalization: doc })
    }

    pub fn verbalization(&self, id: &str) -> Result<VerbalizationDoc, ApiError> {
        let project = self.owner(ArtifactKind::Verbalizations, id)?;
        Ok(self.workspace.load(&project.id, id)?)
    }

    pub async fn run_test(&self, project: &str, ontology_ref: &str, suite: &[LabeledCq]) -> Result<TestResponse, ApiError> {
        self.workspace.project(project)?;
        let source: OntologySource = self.workspace.load(project, ontology_ref)?;
        let doc = verbalize_source(&source)?;
        self.workspace.save(project, &doc)?;
        let report = testing::run_suite(&self.engine, &doc, suite, ontology_ref).await;
        self.persist_transcript()?;
        let report = report?;
        let r = self.workspace.save(project, &report)?;
        Ok(TestResponse { report_ref: r.id, report })
    }

    pub fn report(&self, id: &str) -> Result<TestReport, ApiError> {
        let project = self.owner(ArtifactKind::Reports, id)?;
        Ok(self.workspace.load(&project.id, id)?)
    }
}
