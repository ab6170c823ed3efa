use std::sync::Arc;

use thiserror::Error;

use crate::error::ErrorCode;
use crate::gateway::{ChatMessage, ChatRequest, Gateway, GatewayError};
use crate::prompts::{PromptError, PromptRegistry};

/// Decoding and loop limits shared by every pipeline stage.
#[derive(Debug, Clone)]
pub struct Settings {
    /// Extraction, splitting, abstraction, analysis and testing.
    pub analytic_temperature: f64,
    /// Story drafting and refinement.
    pub creative_temperature: f64,
    pub max_tokens: u32,
    /// Upper bound on per-item fan-out (split, abstract, suite runs).
    pub concurrency: usize,
    pub max_follow_ups: u32,
    pub max_reruns: u32,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            analytic_temperature: 0.0,
            creative_temperature: 0.7,
            max_tokens: 1024,
            concurrency: 4,
            max_follow_ups: 5,
            max_reruns: 3,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LlmError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl ErrorCode for LlmError {
    fn code(&self) -> &'static str {
        match self {
            LlmError::Prompt(e) => e.code(),
            LlmError::Gateway(e) => e.code(),
        }
    }
}

/// Gateway, prompt registry and settings bundled for the pipelines.
#[derive(Debug, Clone)]
pub struct Engine {
    pub gateway: Arc<Gateway>,
    pub prompts: Arc<PromptRegistry>,
    pub settings: Settings,
}

impl Engine {
    pub fn new(gateway: Gateway, prompts: PromptRegistry) -> Self {
        Self { gateway: Arc::new(gateway), prompts: Arc::new(prompts), settings: Settings::default() }
    }

    pub fn with_settings(mut self, settings: Settings) -> Self {
        self.settings = settings;
        self
    }

    pub fn render(&self, id: &str, bindings: &[(&str, &str)]) -> Result<String, PromptError> {
        self.prompts.render(id, bindings)
    }

    /// One system + user exchange; returns the reply text.
    pub async fn ask(
        &self,
        tag: &str,
        system_template: &str,
        user_text: String,
        temperature: f64,
    ) -> Result<String, LlmError> {
        let system = self.render(system_template, &[])?;
        let request = ChatRequest::new(tag, vec![ChatMessage::system(system), ChatMessage::user(user_text)])
            .with_temperature(temperature)
            .with_max_tokens(self.settings.max_tokens);
        Ok(self.gateway.complete(request).await?.text)
    }
}
