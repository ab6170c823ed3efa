use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use cqkit_core::analysis;
use cqkit_core::cq::{self, CqSet};
use cqkit_core::error as codes;
use cqkit_core::gateway::Mode;
use cqkit_core::ontology::OntologyFormat;
use cqkit_core::story::{self, Phase, UserStory};
use cqkit_core::testing::{self, LabeledCq, TestReport};
use cqkit_core::workspace::{Artifact, OntologySource, Workspace};
use cqkit_core::Engine;

use crate::config::EngineConfig;
use crate::error::ApiError;
use crate::server;
use crate::service::{verbalize_source, Service};

#[derive(Debug, Parser)]
#[command(name = "cqkit", version, about = "Ontology requirements engineering: stories, competency questions, verbalization and testing")]
pub struct Cli {
    /// Workspace root. Required by `serve`; with --project, other commands
    /// also store their artifacts there.
    #[arg(long, global = true, env = "CQKIT_WORKSPACE")]
    pub workspace: Option<PathBuf>,
    /// Project in the workspace that receives the artifacts of a command.
    #[arg(long, global = true)]
    pub project: Option<String>,
    /// Gateway mode. Defaults to replay when a transcript is given, else live.
    #[arg(long, global = true)]
    pub mode: Option<Mode>,
    /// Transcript to replay from, or to record into.
    #[arg(long, global = true)]
    pub transcript: Option<PathBuf>,
    /// Shorthand for `--mode replay --transcript PATH`.
    #[arg(long, global = true, conflicts_with_all = ["mode", "transcript"])]
    pub replay: Option<PathBuf>,
    /// Model id, overriding the environment.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Directory of prompt templates replacing the bundled ones.
    #[arg(long, global = true)]
    pub prompts: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Runs a scripted elicitation session and writes the final user story.
    Story {
        /// JSON file `{"answers": [...], "refinements": [...]}`.
        #[arg(long)]
        answers: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the story as Markdown.
        #[arg(long)]
        markdown: Option<PathBuf>,
    },
    /// Extracts CQs from a story and refines them (split, then abstraction).
    Extract {
        #[arg(long)]
        story: PathBuf,
        /// Final (abstracted) CQ set.
        #[arg(long)]
        out: PathBuf,
        /// JSON array of every revision, oldest first.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Deduplicates a CQ set and clusters the survivors.
    Analyze {
        #[arg(long)]
        cqs: PathBuf,
        /// Number of clusters; the model chooses when omitted.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Deduplicated CQ set.
        #[arg(long)]
        survivors: Option<PathBuf>,
    },
    /// Renders an ontology as plain text, plus a `.stats.json` sidecar.
    Verbalize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `turtle` or `rdfxml`; taken from the file extension by default.
        #[arg(long)]
        format: Option<OntologyFormat>,
    },
    /// Tests a labeled CQ suite against an ontology and writes the report.
    Test {
        #[arg(long)]
        ontology: PathBuf,
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        markdown: Option<PathBuf>,
    },
    /// Renders a stored test report as Markdown (stdout unless --out).
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Starts the HTTP service over the workspace.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

#[derive(Debug, Deserialize)]
struct Script {
    answers: Vec<String>,
    #[serde(default)]
    refinements: Vec<String>,
}

impl Cli {
    pub fn engine_config(&self) -> EngineConfig {
        let (mode, transcript) = match &self.replay {
            Some(path) => (Mode::Replay, Some(path.clone())),
            None => {
                let mode = self.mode.unwrap_or(if self.transcript.is_some() { Mode::Replay } else { Mode::Live });
                (mode, self.transcript.clone())
            }
        };
        EngineConfig { mode, transcript, model: self.model.clone(), prompts: self.prompts.clone() }
    }

    fn target(&self) -> Result<Option<(Workspace, String)>, ApiError> {
        match (&self.workspace, &self.project) {
            (Some(root), Some(project)) => {
                let ws = Workspace::open(root)?;
                ws.project(project)?;
                Ok(Some((ws, project.clone())))
            }
            (None, Some(_)) => Err(ApiError::bad_config("--project needs --workspace")),
            _ => Ok(None),
        }
    }
}

fn read_file(path: &Path) -> Result<String, ApiError> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ApiError::not_found("file", &path.display().to_string()),
        _ => ApiError::new(codes::STORAGE_ERROR, format!("{}: {e}", path.display())),
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ApiError> {
    serde_json::from_str(&read_file(path)?)
        .map_err(|e| ApiError::new(codes::PARSE_ERROR, format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ApiError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| ApiError::new(codes::STORAGE_ERROR, format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| ApiError::new(codes::STORAGE_ERROR, format!("{}: {e}", path.display())))
}

/// Writes an artifact exactly as the workspace stores it (body, and the
/// sidecar next to it as `<stem>.stats.json`).
fn write_artifact<A: Artifact>(path: &Path, artifact: &A) -> Result<(), ApiError> {
    let encoded = artifact.encode();
    write_file(path, &encoded.body)?;
    if let Some(sidecar) = encoded.sidecar {
        write_file(&path.with_extension("stats.json"), &sidecar)?;
    }
    Ok(())
}

fn store<A: Artifact>(target: &Option<(Workspace, String)>, artifact: &A) -> Result<(), ApiError> {
    if let Some((ws, project)) = target {
        let r = ws.save(project, artifact)?;
        tracing::info!(id = %r.id, file = %r.file, "stored in workspace");
    }
    Ok(())
}

async fn run_story(engine: &Engine, script: &Script) -> Result<UserStory, ApiError> {
    let (mut session, _) = story::start_session(&engine.prompts)?;
    let mut answers = script.answers.iter();
    while session.phase == Phase::Eliciting {
        let answer = answers.next().ok_or_else(|| {
            ApiError::bad_request(format!(
                "the script ran out of answers while eliciting the {:?} slot",
                session.current_slot().expect("eliciting sessions have an open slot")
            ))
        })?;
        story::submit_answer(engine, &mut session, answer).await?;
    }
    let unused = answers.count();
    if unused > 0 {
        tracing::warn!(unused, "elicitation finished before the script's last answers");
    }
    story::generate_draft(engine, &mut session).await?;
    for feedback in &script.refinements {
        story::refine_draft(engine, &mut session, feedback).await?;
    }
    Ok(story::finalize(&mut session)?)
}

/// Executes one command. Model-backed commands persist the transcript in
/// record mode even when they fail.
pub async fn run(cli: Cli) -> Result<(), ApiError> {
    let config = cli.engine_config();
    let target = cli.target()?;
    match &cli.command {
        Command::Serve { addr } => {
            let root = cli.workspace.clone().ok_or_else(|| ApiError::bad_config("serve needs --workspace"))?;
            let service = Arc::new(Service::new(Workspace::open(root)?, config)?);
            let listener = server::bind(*addr).await?;
            tracing::info!(addr = %listener.local_addr().map_err(|e| ApiError::internal(e.to_string()))?, "listening");
            let shutdown = async {
                let _ = tokio::signal::ctrl_c().await;
            };
            server::serve(listener, service, shutdown).await
        }
        Command::Verbalize { input, out, format } => {
            let format = match format {
                Some(f) => *f,
                None => OntologyFormat::from_path(input)?,
            };
            let source = OntologySource { format, text: read_file(input)? };
            let doc = verbalize_source(&source)?;
            write_artifact(out, &doc)?;
            store(&target, &source)?;
            store(&target, &doc)?;
            println!(
                "verbalized {} classes, {} object properties, {} data properties, {} individuals ({} warnings)",
                doc.stats.classes,
                doc.stats.object_properties,
                doc.stats.data_properties,
                doc.stats.individuals,
                doc.stats.warnings.len()
            );
            Ok(())
        }
        Command::Report { input, out } => {
            let report: TestReport = read_json(input)?;
            report.validate()?;
            let markdown = report.to_markdown();
            match out {
                Some(path) => write_file(path, markdown.as_bytes()),
                None => {
                    print!("{markdown}");
                    Ok(())
                }
            }
        }
        command => {
            let engine = config.build()?;
            let result = run_model_command(&engine, command, &target).await;
            config.persist_transcript(&engine)?;
            result
        }
    }
}

async fn run_model_command(
    engine: &Engine,
    command: &Command,
    target: &Option<(Workspace, String)>,
) -> Result<(), ApiError> {
    match command {
        Command::Story { answers, out, markdown } => {
            let script: Script = read_json(answers)?;
            let story = run_story(engine, &script).await?;
            write_artifact(out, &story)?;
            if let Some(path) = markdown {
                write_file(path, story.to_markdown().as_bytes())?;
            }
            store(target, &story)?;
            println!("story \"{}\" (version {})", story.title, story.version);
        }
        Command::Extract { story, out, history } => {
            let story: UserStory = read_json(story)?;
            let revisions = cq::extract_and_refine(engine, &story).await?;
            let last = revisions.last().expect("three revisions");
            write_artifact(out, last)?;
            if let Some(path) = history {
                let mut body = serde_json::to_vec_pretty(&revisions).expect("CQ sets serialize");
                body.push(b'\n');
                write_file(path, &body)?;
            }
            for set in &revisions {
                store(target, set)?;
            }
            println!("{} CQs after {} revisions", last.cqs.len(), revisions.len());
        }
        Command::Analyze { cqs, k, out, survivors } => {
            let set: CqSet = read_json(cqs)?;
            let (kept, clustering) = analysis::analyze(engine, &set, *k).await?;
            write_artifact(out, &clustering)?;
            if let Some(path) = survivors {
                write_artifact(path, &kept)?;
            }
            store(target, &kept)?;
            store(target, &clustering)?;
            println!(
                "{} clusters over {} CQs ({} duplicates dropped)",
                clustering.clusters.len(),
                kept.cqs.len(),
                clustering.dropped_duplicates.len()
            );
        }
        Command::Test { ontology, suite, out, markdown } => {
            let format = OntologyFormat::from_path(ontology)?;
            let source = OntologySource { format, text: read_file(ontology)? };
            let doc = verbalize_source(&source)?;
            let suite: Vec<LabeledCq> = read_json(suite)?;
            let ontology_ref = source.content_id();
            let report = testing::run_suite(engine, &doc, &suite, ontology_ref).await?;
            write_artifact(out, &report)?;
            if let Some(path) = markdown {
                write_file(path, report.to_markdown().as_bytes())?;
            }
            store(target, &source)?;
            store(target, &doc)?;
            store(target, &report)?;
            let m = &report.matrix;
            println!("tp={} tn={} fp={} fn={} accuracy={}", m.tp, m.tn, m.fp, m.fn_, report.metrics.accuracy);
        }
        Command::Serve { .. } | Command::Verbalize { .. } | Command::Report { .. } => {
            unreachable!("handled without a model")
        }
    }
    Ok(())
}
