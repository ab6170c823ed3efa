use std::path::PathBuf;
use std::sync::Arc;

use cqkit_core::gateway::{load_transcript, Gateway, HttpTransport, Mode, ProviderConfig};
use cqkit_core::prompts::PromptRegistry;
use cqkit_core::Engine;

use crate::error::ApiError;

/// How the model gateway is wired for one CLI run or server process.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub mode: Mode,
    /// Replay: transcript to answer from. Record: file the transcript is written to.
    pub transcript: Option<PathBuf>,
    /// Overrides the model id taken from the environment.
    pub model: Option<String>,
    /// Directory of prompt templates replacing the bundled ones.
    pub prompts: Option<PathBuf>,
}

impl EngineConfig {
    pub fn replay(transcript: impl Into<PathBuf>) -> Self {
        Self { mode: Mode::Replay, transcript: Some(transcript.into()), model: None, prompts: None }
    }

    pub fn build(&self) -> Result<Engine, ApiError> {
        let prompts = match &self.prompts {
            Some(dir) => PromptRegistry::load_dir(dir)?,
            None => PromptRegistry::bundled(),
        };
        let gateway = match self.mode {
            Mode::Replay => {
                let path = self
                    .transcript
                    .as_ref()
                    .ok_or_else(|| ApiError::bad_config("replay mode needs --transcript"))?;
                Gateway::replay(load_transcript(path)?)
            }
            Mode::Live | Mode::Record => {
                if self.mode == Mode::Record && self.transcript.is_none() {
                    return Err(ApiError::bad_config("record mode needs --transcript to write to"));
                }
                let mut provider = ProviderConfig::from_env();
                if let Some(model) = &self.model {
                    provider.model = model.clone();
                }
                let transport = Arc::new(HttpTransport::new());
                if self.mode == Mode::Record {
                    Gateway::record(provider, transport)
                } else {
                    Gateway::live(provider, transport)
                }
            }
        };
        Ok(Engine::new(gateway, prompts))
    }

    /// Writes the transcript recorded so far; a no-op outside record mode.
    pub fn persist_transcript(&self, engine: &Engine) -> Result<(), ApiError> {
        if self.mode != Mode::Record {
            return Ok(());
        }
        let path = self.transcript.as_ref().ok_or_else(|| ApiError::bad_config("record mode needs --transcript"))?;
        engine.gateway.transcript().save(path)?;
        Ok(())
    }
}
