//! Scripted doubles for exercising failure paths.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use async_trait::async_trait;

use super::mock::{MockChat, MockImage};
use super::{
    BackendError, ChatBackend, ChatRequest, Health, ImageBackend, ImageRequest, ImageResult,
};

/// Replies from a queue, then falls back to [`MockChat`]. Records every
/// request it sees.
#[derive(Default)]
pub struct ScriptedChat {
    script: Mutex<VecDeque<Result<String, BackendError>>>,
    calls: Mutex<Vec<ChatRequest>>,
    fallback: MockChat,
}

impl ScriptedChat {
    pub fn new<I>(replies: I) -> Self
    where
        I: IntoIterator<Item = Result<String, BackendError>>,
    {
        ScriptedChat {
            script: Mutex::new(replies.into_iter().collect()),
            ..ScriptedChat::default()
        }
    }

    pub fn calls(&self) -> Vec<ChatRequest> {
        self.calls.lock().unwrap().clone()
    }
}

#[async_trait]
impl ChatBackend for ScriptedChat {
    fn name(&self) -> &str {
        "scripted"
    }

    async fn chat(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.calls.lock().unwrap().push(request.clone());
        let next = self.script.lock().unwrap().pop_front();
        match next {
            Some(r) => r,
            None => Ok(self.fallback.reply(request)),
        }
    }

    async fn health_check(&self) -> Health {
        Health::Ok
    }
}

/// A chat backend that is unreachable.
pub struct DownChat;

#[async_trait]
impl ChatBackend for DownChat {
    fn name(&self) -> &str {
        "down"
    }

    async fn chat(&self, _: &ChatRequest) -> Result<String, BackendError> {
        Err(BackendError::Transport("connection refused".into()))
    }

    async fn health_check(&self) -> Health {
        Health::Down("connection refused".into())
    }
}

/// An image backend that is unreachable.
pub struct DownImage;

#[async_trait]
impl ImageBackend for DownImage {
    fn name(&self) -> &str {
        "down"
    }

    async fn txt2img(&self, _: &ImageRequest) -> Result<ImageResult, BackendError> {
        Err(BackendError::Transport("connection refused".into()))
    }

    async fn health_check(&self) -> Health {
        Health::Down("connection refused".into())
    }
}

/// Fails requests whose prompt contains any of `poison`, and the first
/// `fail_first` requests overall; everything else goes to [`MockImage`].
#[derive(Default)]
pub struct FlakyImage {
    pub poison: Vec<String>,
    pub fail_first: usize,
    seen: AtomicUsize,
    max_in_flight: AtomicUsize,
    in_flight: AtomicUsize,
}

impl FlakyImage {
    pub fn failing_first(n: usize) -> Self {
        FlakyImage {
            fail_first: n,
            ..FlakyImage::default()
        }
    }

    pub fn poisoned(words: &[&str]) -> Self {
        FlakyImage {
            poison: words.iter().map(|w| w.to_string()).collect(),
            ..FlakyImage::default()
        }
    }

    pub fn attempts(&self) -> usize {
        self.seen.load(Ordering::SeqCst)
    }

    /// Highest number of concurrent requests observed.
    pub fn peak_concurrency(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl ImageBackend for FlakyImage {
    fn name(&self) -> &str {
        "flaky"
    }

    async fn txt2img(&self, request: &ImageRequest) -> Result<ImageResult, BackendError> {
        let n = self.seen.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        tokio::task::yield_now().await;
        let result = if n < self.fail_first {
            Err(BackendError::Transport(format!(
                "scripted failure #{}",
                n + 1
            )))
        } else if self
            .poison
            .iter()
            .any(|p| request.prompt.contains(p.as_str()))
        {
            Err(BackendError::ModelRefusal("scripted refusal".into()))
        } else {
            MockImage::new().txt2img(request).await
        };
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }

    async fn health_check(&self) -> Health {
        Health::Ok
    }

    fn max_concurrency(&self) -> usize {
        2
    }
}

/// [`MockImage`] that records every request it receives.
#[derive(Default)]
pub struct RecordingImage {
    requests: Mutex<Vec<ImageRequest>>,
}

impl RecordingImage {
    pub fn requests(&self) -> Vec<ImageRequest> {
        self.requests.lock().unwrap().clone()
    }
}

#[async_trait]
impl ImageBackend for RecordingImage {
    fn name(&self) -> &str {
        "recording"
    }

    async fn txt2img(&self, request: &ImageRequest) -> Result<ImageResult, BackendError> {
        self.requests.lock().unwrap().push(request.clone());
        MockImage::new().txt2img(request).await
    }

    async fn health_check(&self) -> Health {
        Health::Ok
    }
}
