//! Automatic1111 web-UI txt2img client (API mode).

use std::time::{Duration, Instant};

use async_trait::async_trait;
use base64::Engine as _;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::{json, Value};

use super::openai::truncate;
use super::{
    check_png, transport_error, BackendError, Health, ImageBackend, ImageRequest, ImageResult,
    RetryPolicy,
};

#[derive(Debug, Deserialize)]
struct Txt2ImgResponse {
    images: Vec<String>,
    /// JSON-encoded generation info; carries the effective seed.
    #[serde(default)]
    info: Option<String>,
}

pub struct A1111Client {
    http: reqwest::Client,
    base_url: String,
    retry: RetryPolicy,
    max_concurrency: usize,
}

impl A1111Client {
    /// `base_url` is the web-UI root, e.g. `http://127.0.0.1:7860`.
    pub fn new(base_url: impl Into<String>) -> Self {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .expect("reqwest client with static configuration");
        A1111Client {
            http,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            retry: RetryPolicy::none(),
            max_concurrency: 4,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_concurrency(mut self, n: usize) -> Self {
        self.max_concurrency = n.max(1);
        self
    }

    pub fn wire_body(request: &ImageRequest) -> Value {
        json!({
            "prompt": request.prompt,
            "negative_prompt": request.negative_prompt,
            "seed": request.seed,
            "steps": request.steps,
            "width": request.width,
            "height": request.height,
        })
    }

    async fn send_once(&self, request: &ImageRequest) -> Result<ImageResult, BackendError> {
        let started = Instant::now();
        let url = format!("{}/sdapi/v1/txt2img", self.base_url);
        let resp = self
            .http
            .post(&url)
            .json(&Self::wire_body(request))
            .send()
            .await
            .map_err(transport_error)?;
        let status = resp.status();
        let text = resp.text().await.map_err(transport_error)?;
        if !status.is_success() {
            let detail = format!("HTTP {}: {}", status.as_u16(), truncate(&text, 200));
            return Err(match status {
                StatusCode::SERVICE_UNAVAILABLE | StatusCode::TOO_MANY_REQUESTS => {
                    BackendError::BackendBusy(detail)
                }
                StatusCode::BAD_REQUEST | StatusCode::UNPROCESSABLE_ENTITY => {
                    BackendError::InvalidParameters(detail)
                }
                _ => BackendError::Transport(detail),
            });
        }
        let body: Txt2ImgResponse = serde_json::from_str(&text)
            .map_err(|e| BackendError::InvalidResponse(format!("txt2img body: {e}")))?;
        let first = body
            .images
            .first()
            .ok_or_else(|| BackendError::InvalidResponse("no images returned".into()))?;
        // some builds prefix a data URL header
        let b64 = first.rsplit_once(',').map_or(first.as_str(), |(_, d)| d);
        let image_bytes = base64::engine::general_purpose::STANDARD
            .decode(b64)
            .map_err(|e| BackendError::InvalidResponse(format!("image base64: {e}")))?;
        check_png(&image_bytes, request.width, request.height)?;
        let seed_used = body
            .info
            .as_deref()
            .and_then(|i| serde_json::from_str::<Value>(i).ok())
            .and_then(|v| v.get("seed").and_then(Value::as_i64))
            .unwrap_or(request.seed);
        Ok(ImageResult {
            image_bytes,
            seed_used,
            backend_latency: started.elapsed(),
        })
    }
}

#[async_trait]
impl ImageBackend for A1111Client {
    fn name(&self) -> &str {
        "a1111"
    }

    async fn txt2img(&self, request: &ImageRequest) -> Result<ImageResult, BackendError> {
        request.validate()?;
        self.retry.run(|| self.send_once(request)).await
    }

    async fn health_check(&self) -> Health {
        let url = format!("{}/sdapi/v1/progress", self.base_url);
        match self.http.get(&url).send().await {
            Err(e) => Health::Down(transport_error(e).to_string()),
            Ok(r) if r.status().is_success() => Health::Ok,
            Ok(r) if matches!(r.status(), StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN) => {
                Health::Down(format!(
                    "credentials rejected: HTTP {}",
                    r.status().as_u16()
                ))
            }
            Ok(r) => Health::Degraded(format!("HTTP {}", r.status().as_u16())),
        }
    }

    fn max_concurrency(&self) -> usize {
        self.max_concurrency
    }
}
