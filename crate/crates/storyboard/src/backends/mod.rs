//! Model endpoints behind narrow async interfaces.
//!
//! Two capabilities are needed: chat completion (story to style, story to
//! frame prompts) and txt2img. Each has a live HTTP client and a
//! deterministic mock; [`testing`] holds scripted doubles for failure paths.

pub mod a1111;
pub mod mock;
pub mod openai;
pub mod openai_images;
pub mod testing;

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use storyboard_core::config::is_valid_dimension;
use thiserror::Error;

pub use a1111::A1111Client;
pub use mock::{MockChat, MockImage};
pub use openai::OpenAiChatClient;
pub use openai_images::OpenAiImagesClient;

/// A prior exchange replayed before the next user turn (used for corrective
/// re-asks after a parse failure).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub assistant: String,
    pub user: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_message: String,
    #[serde(default)]
    pub followups: Vec<ChatTurn>,
    pub model_id: String,
    pub temperature: f32,
    /// Sampling nonce. Live endpoints receive it as `seed`; the mock mixes it
    /// into its hash so a regeneration differs from the first answer.
    #[serde(default)]
    pub seed: Option<i64>,
}

impl ChatRequest {
    pub fn new(system_prompt: impl Into<String>, user_message: impl Into<String>) -> Self {
        ChatRequest {
            system_prompt: system_prompt.into(),
            user_message: user_message.into(),
            followups: Vec::new(),
            model_id: "gpt-4".into(),
            temperature: 1.0,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.system_prompt.trim().is_empty() || self.user_message.trim().is_empty() {
            return Err(BackendError::InvalidParameters(
                "system prompt and user message must be non-empty".into(),
            ));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::InvalidParameters(
                "temperature must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRequest {
    pub prompt: String,
    pub negative_prompt: String,
    /// `-1` asks the backend to choose.
    pub seed: i64,
    pub width: u32,
    pub height: u32,
    pub steps: u32,
}

impl ImageRequest {
    pub fn new(prompt: impl Into<String>, seed: i64) -> Self {
        ImageRequest {
            prompt: prompt.into(),
            negative_prompt: String::new(),
            seed,
            width: 512,
            height: 512,
            steps: 20,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.prompt.trim().is_empty() {
            return Err(BackendError::InvalidParameters(
                "prompt must be non-empty".into(),
            ));
        }
        if !is_valid_dimension(self.width) || !is_valid_dimension(self.height) {
            return Err(BackendError::InvalidParameters(format!(
                "width and height must be positive multiples of 8, got {}x{}",
                self.width, self.height
            )));
        }
        if self.steps == 0 {
            return Err(BackendError::InvalidParameters("steps must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageResult {
    /// PNG of exactly the requested dimensions.
    pub image_bytes: Vec<u8>,
    pub seed_used: i64,
    pub backend_latency: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("credentials rejected: {0}")]
    Auth(String),
    #[error("model refused or returned nothing: {0}")]
    ModelRefusal(String),
    #[error("backend busy: {0}")]
    BackendBusy(String),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("invalid response: {0}")]
    InvalidResponse(String),
}

impl BackendError {
    /// Errors worth retrying after a pause.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            BackendError::Transport(_) | BackendError::BackendBusy(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "lowercase")]
pub enum Health {
    Ok,
    Degraded(String),
    Down(String),
}

impl Health {
    /// Health after a failed probe.
    pub fn from_error(e: &BackendError) -> Health {
        match e {
            BackendError::BackendBusy(d) => Health::Degraded(format!("busy: {d}")),
            BackendError::InvalidResponse(d) => Health::Degraded(format!("invalid response: {d}")),
            other => Health::Down(other.to_string()),
        }
    }
}

#[async_trait]
pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;
    async fn chat(&self, request: &ChatRequest) -> Result<String, BackendError>;
    async fn health_check(&self) -> Health;
}

#[async_trait]
pub trait ImageBackend: Send + Sync {
    fn name(&self) -> &str;
    async fn txt2img(&self, request: &ImageRequest) -> Result<ImageResult, BackendError>;
    async fn health_check(&self) -> Health;
    /// In-flight request cap the pipeline honors when fanning out.
    fn max_concurrency(&self) -> usize {
        4
    }
}

/// Retry schedule for transient failures: `base * 2^attempt`, capped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            ..RetryPolicy::default()
        }
    }

    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }

    pub async fn run<T, F, Fut>(&self, mut op: F) -> Result<T, BackendError>
    where
        F: FnMut() -> Fut,
        Fut: std::future::Future<Output = Result<T, BackendError>>,
    {
        let mut attempt = 0;
        loop {
            match op().await {
                Err(e) if e.is_transient() && attempt < self.max_retries => {
                    tokio::time::sleep(self.delay(attempt)).await;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Maps a reqwest failure onto the backend taxonomy.
pub(crate) fn transport_error(e: reqwest::Error) -> BackendError {
    BackendError::Transport(e.to_string())
}

/// Checks that `bytes` is a PNG of `width`x`height`.
pub(crate) fn check_png(bytes: &[u8], width: u32, height: u32) -> Result<(), BackendError> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| BackendError::InvalidResponse(format!("image is not a PNG: {e}")))?;
    if (img.width(), img.height()) != (width, height) {
        return Err(BackendError::InvalidResponse(format!(
            "expected {width}x{height} image, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

/// A chat backend shared between the pipeline, service and harness.
pub type SharedChat = Arc<dyn ChatBackend>;
/// An image backend shared between the pipeline, service and harness.
pub type SharedImage = Arc<dyn ImageBackend>;
