#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use cqkit::config::EngineConfig;
use cqkit::server;
use cqkit::service::Service;
use cqkit_core::gateway::{load_transcript, Transcript};
use cqkit_core::workspace::Workspace;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture(relative: &str) -> PathBuf {
    fixtures().join(relative)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// One transcript holding the entries of every committed transcript.
pub fn merged_transcript(dir: &Path) -> PathBuf {
    let mut merged = Transcript::new("authored", "scripted-fixture");
    for name in ["elicitation", "penny-lane", "clustering", "dedup", "music-meta-suite"] {
        let t = load_transcript(&fixture(&format!("transcripts/{name}.json"))).unwrap();
        merged.entries.extend(t.entries);
    }
    let path = dir.join("merged-transcript.json");
    merged.save(&path).unwrap();
    path
}

pub struct TestServer {
    pub base: String,
    pub workspace: PathBuf,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    handle: Option<tokio::task::JoinHandle<()>>,
}

impl TestServer {
    /// Replay-mode server over `workspace` on an ephemeral port.
    pub async fn start(workspace: &Path, transcript: &Path) -> Self {
        let service = Service::new(Workspace::open(workspace).unwrap(), EngineConfig::replay(transcript)).unwrap();
        let listener = server::bind(SocketAddr::from(([127, 0, 0, 1], 0))).await.unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let handle = tokio::spawn(async move {
            server::serve(listener, Arc::new(service), async {
                let _ = rx.await;
            })
            .await
            .unwrap();
        });
        Self { base: format!("http://{addr}"), workspace: workspace.to_path_buf(), shutdown: Some(tx), handle: Some(handle) }
    }

    pub async fn stop(mut self) {
        let _ = self.shutdown.take().unwrap().send(());
        self.handle.take().unwrap().await.unwrap();
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }
}
