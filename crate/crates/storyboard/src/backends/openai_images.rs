//! OpenAI images adapter (DALL-E class models). Used by the comparison
//! harness as a second txt2img implementation.

use std::io::Cursor;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use base64::Engine as _;
use serde::Deserialize;
use serde_json::{json, Value};

use super::openai::truncate;
use super::{
    transport_error, BackendError, Health, ImageBackend, ImageRequest, ImageResult, RetryPolicy,
};

#[derive(Debug, Deserialize)]
struct ImagesResponse {
    data: Vec<ImageDatum>,
}

#[derive(Debug, Deserialize)]
struct ImageDatum {
    #[serde(default)]
    b64_json: Option<String>,
}

pub struct OpenAiImagesClient {
    http: reqwest::Client,
    base_url: String,
    api_key: Option<String>,
    model: String,
    retry: RetryPolicy,
}

impl OpenAiImagesClient {
    pub fn new(
        base_url: impl Into<String>,
        api_key: Option<String>,
        model: impl Into<String>,
    ) -> Self {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(180))
            .build()
            .expect("reqwest client with static configuration");
        OpenAiImagesClient {
            http,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            model: model.into(),
            retry: RetryPolicy::none(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// The endpoint has no seed and no negative prompt; both are dropped.
    pub fn wire_body(&self, request: &ImageRequest) -> Value {
        json!({
            "model": self.model,
            "prompt": request.prompt,
            "n": 1,
            "size": format!("{}x{}", request.width, request.height),
            "response_format": "b64_json",
        })
    }

    async fn send_once(&self, request: &ImageRequest) -> Result<ImageResult, BackendError> {
        let started = Instant::now();
        let mut rb = self
            .http
            .post(format!("{}/images/generations", self.base_url))
            .json(&self.wire_body(request));
        if let Some(key) = &self.api_key {
            rb = rb.bearer_auth(key);
        }
        let resp = rb.send().await.map_err(transport_error)?;
        let status = resp.status();
        let text = resp.text().await.map_err(transport_error)?;
        if !status.is_success() {
            let detail = format!("HTTP {}: {}", status.as_u16(), truncate(&text, 200));
            return Err(match status.as_u16() {
                401 | 403 => BackendError::Auth(detail),
                400 | 422 => BackendError::InvalidParameters(detail),
                429 | 503 => BackendError::BackendBusy(detail),
                _ => BackendError::Transport(detail),
            });
        }
        let body: ImagesResponse = serde_json::from_str(&text)
            .map_err(|e| BackendError::InvalidResponse(format!("images body: {e}")))?;
        let b64 = body
            .data
            .into_iter()
            .find_map(|d| d.b64_json)
            .ok_or_else(|| BackendError::InvalidResponse("no b64_json image returned".into()))?;
        let raw = base64::engine::general_purpose::STANDARD
            .decode(b64)
            .map_err(|e| BackendError::InvalidResponse(format!("image base64: {e}")))?;
        let image_bytes = fit_png(&raw, request.width, request.height)?;
        Ok(ImageResult {
            image_bytes,
            seed_used: request.seed,
            backend_latency: started.elapsed(),
        })
    }
}

/// Re-encodes any decodable image as a PNG of exactly `width`x`height`.
fn fit_png(raw: &[u8], width: u32, height: u32) -> Result<Vec<u8>, BackendError> {
    let img = image::load_from_memory(raw)
        .map_err(|e| BackendError::InvalidResponse(format!("undecodable image: {e}")))?;
    let img = if (img.width(), img.height()) == (width, height) {
        img
    } else {
        img.resize_exact(width, height, image::imageops::FilterType::Triangle)
    };
    let mut out = Cursor::new(Vec::new());
    img.to_rgb8()
        .write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| BackendError::InvalidResponse(format!("png encode: {e}")))?;
    Ok(out.into_inner())
}

#[async_trait]
impl ImageBackend for OpenAiImagesClient {
    fn name(&self) -> &str {
        "openai-images"
    }

    async fn txt2img(&self, request: &ImageRequest) -> Result<ImageResult, BackendError> {
        request.validate()?;
        self.retry.run(|| self.send_once(request)).await
    }

    async fn health_check(&self) -> Health {
        let mut rb = self.http.get(format!("{}/models", self.base_url));
        if let Some(key) = &self.api_key {
            rb = rb.bearer_auth(key);
        }
        match rb.send().await {
            Err(e) => Health::Down(transport_error(e).to_string()),
            Ok(r) if r.status().is_success() => Health::Ok,
            Ok(r) if matches!(r.status().as_u16(), 401 | 403) => Health::Down(format!(
                "credentials rejected: HTTP {}",
                r.status().as_u16()
            )),
            Ok(r) => Health::Degraded(format!("HTTP {}", r.status().as_u16())),
        }
    }

    fn max_concurrency(&self) -> usize {
        2
    }
}
