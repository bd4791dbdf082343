//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use async_trait::async_trait;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{transport_error, BackendError, ChatBackend, ChatRequest, Health, RetryPolicy};

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ResponseMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    refusal: Option<String>,
}

pub struct OpenAiChatClient {
    http: reqwest::Client,
    base_url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl OpenAiChatClient {
    /// `base_url` is the API root, e.g. `https://api.openai.com/v1`.
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Self {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .expect("reqwest client with static configuration");
        OpenAiChatClient {
            http,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// The JSON body sent to `/chat/completions`.
    pub fn wire_body(request: &ChatRequest) -> Value {
        let mut messages = vec![
            json!({"role": "system", "content": request.system_prompt}),
            json!({"role": "user", "content": request.user_message}),
        ];
        for turn in &request.followups {
            messages.push(json!({"role": "assistant", "content": turn.assistant}));
            messages.push(json!({"role": "user", "content": turn.user}));
        }
        let mut body = json!({
            "model": request.model_id,
            "messages": messages,
            "temperature": request.temperature,
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    fn authorized(&self, rb: reqwest::RequestBuilder) -> reqwest::RequestBuilder {
        match &self.api_key {
            Some(key) => rb.bearer_auth(key),
            None => rb,
        }
    }

    async fn send_once(&self, body: &Value) -> Result<String, BackendError> {
        let url = format!("{}/chat/completions", self.base_url);
        let resp = self
            .authorized(self.http.post(&url))
            .json(body)
            .send()
            .await
            .map_err(transport_error)?;
        let status = resp.status();
        let text = resp.text().await.map_err(transport_error)?;
        if let Some(err) = status_error(status, &text) {
            return Err(err);
        }
        let parsed: CompletionResponse = serde_json::from_str(&text)
            .map_err(|e| BackendError::InvalidResponse(format!("chat completion body: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::ModelRefusal("no choices returned".into()))?;
        if let Some(r) = choice.message.refusal.filter(|r| !r.is_empty()) {
            return Err(BackendError::ModelRefusal(r));
        }
        if choice.finish_reason.as_deref() == Some("content_filter") {
            return Err(BackendError::ModelRefusal(
                "blocked by content filter".into(),
            ));
        }
        match choice.message.content {
            Some(c) if !c.trim().is_empty() => Ok(c),
            _ => Err(BackendError::ModelRefusal("empty reply".into())),
        }
    }
}

fn status_error(status: StatusCode, body: &str) -> Option<BackendError> {
    if status.is_success() {
        return None;
    }
    let detail = format!("HTTP {}: {}", status.as_u16(), truncate(body, 200));
    Some(match status {
        StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => BackendError::Auth(detail),
        StatusCode::BAD_REQUEST | StatusCode::UNPROCESSABLE_ENTITY => {
            BackendError::InvalidParameters(detail)
        }
        // 429 and 5xx are transient for a chat endpoint
        _ => BackendError::Transport(detail),
    })
}

pub(crate) fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

#[async_trait]
impl ChatBackend for OpenAiChatClient {
    fn name(&self) -> &str {
        "openai"
    }

    async fn chat(&self, request: &ChatRequest) -> Result<String, BackendError> {
        request.validate()?;
        let body = Self::wire_body(request);
        self.retry.run(|| self.send_once(&body)).await
    }

    async fn health_check(&self) -> Health {
        let url = format!("{}/models", self.base_url);
        let resp = match self.authorized(self.http.get(&url)).send().await {
            Ok(r) => r,
            Err(e) => return Health::Down(transport_error(e).to_string()),
        };
        let status = resp.status();
        match status_error(status, "") {
            None => Health::Ok,
            Some(e @ BackendError::Auth(_)) => Health::Down(e.to_string()),
            Some(e) if status.is_server_error() => Health::Degraded(e.to_string()),
            Some(e) => Health::from_error(&e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::ChatTurn;

    #[test]
    fn followups_become_alternating_turns() {
        let mut r = ChatRequest::new("sys", "story");
        r.followups.push(ChatTurn {
            assistant: "oops".into(),
            user: "again".into(),
        });
        r.seed = Some(3);
        let b = OpenAiChatClient::wire_body(&r);
        let roles: Vec<&str> = b["messages"]
            .as_array()
            .unwrap()
            .iter()
            .map(|m| m["role"].as_str().unwrap())
            .collect();
        assert_eq!(roles, ["system", "user", "assistant", "user"]);
        assert_eq!(b["seed"], 3);
    }

    #[test]
    fn status_mapping() {
        assert!(status_error(StatusCode::OK, "").is_none());
        assert!(matches!(
            status_error(StatusCode::UNAUTHORIZED, ""),
            Some(BackendError::Auth(_))
        ));
        assert!(matches!(
            status_error(StatusCode::TOO_MANY_REQUESTS, ""),
            Some(BackendError::Transport(_))
        ));
    }
}
