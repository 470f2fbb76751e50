//! HTTP-backed providers.
//!
//! [`OpenAiChat`] speaks the chat-completions wire format
//! (`{"model","messages","temperature"}` → `choices[0].message.content`).
//! [`ShimClient`] speaks the model shim contract:
//!
//! | endpoint | request | response |
//! |---|---|---|
//! | `POST /embed` | `{"texts":[…]}` | `{"vectors":[[…]]}` |
//! | `POST /nli` | `{"premise","hypothesis"}` | `{"entails":0\|1}` |
//! | `POST /expert` | `{"question","passages":[…]}` | `{"answer"}` |
//!
//! Transport failures and 429/5xx statuses are retried up to
//! [`RetryPolicy::max_retries`] times with doubling delays. Other statuses and
//! malformed bodies are not retried.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    ChatMessage, ChatProvider, Embedder, EmbeddingVector, ExpertProvider, NliJudge, ProviderError,
    ProviderErrorKind, ProviderRole,
};
use crate::corpus::Passage;

pub const OPENAI_CHAT_URL: &str = "https://api.openai.com/v1/chat/completions";
/// Environment variable holding the chat API key.
pub const API_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn run<T>(&self, mut attempt: impl FnMut() -> Result<T, ProviderError>) -> Result<T, ProviderError> {
        let mut delay = self.base_delay;
        let mut tries = 0;
        loop {
            match attempt() {
                Err(e) if e.is_retryable() && tries < self.max_retries => {
                    tries += 1;
                    std::thread::sleep(delay);
                    delay *= 2;
                }
                other => return other,
            }
        }
    }
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

fn post_json(
    agent: &ureq::Agent,
    role: ProviderRole,
    url: &str,
    bearer: Option<&str>,
    body: &Value,
) -> Result<Value, ProviderError> {
    let mut req = agent.post(url).header("Content-Type", "application/json");
    if let Some(key) = bearer {
        req = req.header("Authorization", &format!("Bearer {key}"));
    }
    let mut resp = req
        .send(body.to_string())
        .map_err(|e| ProviderError::new(role, ProviderErrorKind::Transport, e.to_string()))?;
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| ProviderError::new(role, ProviderErrorKind::Transport, e.to_string()))?;
    match status {
        200..=299 => serde_json::from_str(&text).map_err(|e| {
            ProviderError::new(role, ProviderErrorKind::Protocol, format!("response is not json: {e}"))
        }),
        429 | 500..=599 => Err(ProviderError::new(
            role,
            ProviderErrorKind::Transport,
            format!("status {status}: {text}"),
        )),
        _ => Err(ProviderError::new(
            role,
            ProviderErrorKind::Rejected,
            format!("status {status}: {text}"),
        )),
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

/// Request body for a chat completion.
pub fn chat_request_body(model: &str, messages: &[ChatMessage], temperature: f64) -> Value {
    serde_json::to_value(ChatRequest {
        model,
        messages,
        temperature,
    })
    .expect("chat request serializes")
}

/// Pulls `choices[0].message.content` out of a completion response.
pub fn parse_chat_response(body: &Value) -> Result<String, ProviderError> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| {
            ProviderError::new(
                ProviderRole::Chat,
                ProviderErrorKind::Protocol,
                "response lacks choices[0].message.content",
            )
        })
}

pub struct OpenAiChat {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl OpenAiChat {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            retry: RetryPolicy::default(),
            agent: agent(Duration::from_secs(120)),
        }
    }

    /// Reads the key from [`API_KEY_ENV`].
    pub fn from_env(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self::new(endpoint, model, std::env::var(API_KEY_ENV).ok())
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

impl ChatProvider for OpenAiChat {
    fn complete(&self, messages: &[ChatMessage], temperature: f64) -> Result<String, ProviderError> {
        let body = chat_request_body(&self.model, messages, temperature);
        let resp = self.retry.run(|| {
            post_json(&self.agent, ProviderRole::Chat, &self.endpoint, self.api_key.as_deref(), &body)
        })?;
        parse_chat_response(&resp)
    }
}

/// Client for the embed / NLI / expert shim.
pub struct ShimClient {
    base_url: String,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl ShimClient {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            retry: RetryPolicy::default(),
            agent: agent(Duration::from_secs(300)),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn call(&self, role: ProviderRole, path: &str, body: &Value) -> Result<Value, ProviderError> {
        let url = format!("{}{}", self.base_url, path);
        self.retry.run(|| post_json(&self.agent, role, &url, None, body))
    }
}

fn protocol(role: ProviderRole, msg: impl Into<String>) -> ProviderError {
    ProviderError::new(role, ProviderErrorKind::Protocol, msg)
}

/// How a passage is sent to the expert endpoint.
pub fn passage_wire_text(p: &Passage) -> String {
    if p.title.is_empty() {
        p.text.clone()
    } else {
        format!("{}: {}", p.title, p.text)
    }
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct NliResponse {
    entails: u8,
}

#[derive(Deserialize)]
struct ExpertResponse {
    answer: String,
}

impl Embedder for ShimClient {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        let role = ProviderRole::Embed;
        let resp = self.call(role, "/embed", &serde_json::json!({ "texts": texts }))?;
        let parsed: EmbedResponse = serde_json::from_value(resp).map_err(|e| protocol(role, e.to_string()))?;
        parsed
            .vectors
            .into_iter()
            .map(|v| EmbeddingVector::new(v).map_err(|e| protocol(role, e)))
            .collect()
    }
}

impl NliJudge for ShimClient {
    fn entails(&self, premise: &str, hypothesis: &str) -> Result<u8, ProviderError> {
        let role = ProviderRole::Nli;
        let resp = self.call(
            role,
            "/nli",
            &serde_json::json!({ "premise": premise, "hypothesis": hypothesis }),
        )?;
        let parsed: NliResponse = serde_json::from_value(resp).map_err(|e| protocol(role, e.to_string()))?;
        if parsed.entails > 1 {
            return Err(protocol(role, format!("entails = {}", parsed.entails)));
        }
        Ok(parsed.entails)
    }
}

impl ExpertProvider for ShimClient {
    fn answer(&self, question: &str, passages: &[Passage]) -> Result<String, ProviderError> {
        let role = ProviderRole::Expert;
        let passages: Vec<String> = passages.iter().map(passage_wire_text).collect();
        let resp = self.call(
            role,
            "/expert",
            &serde_json::json!({ "question": question, "passages": passages }),
        )?;
        let parsed: ExpertResponse = serde_json::from_value(resp).map_err(|e| protocol(role, e.to_string()))?;
        Ok(parsed.answer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn chat_body_shape() {
        let body = chat_request_body("gpt-x", &[ChatMessage::system("s"), ChatMessage::user("u")], 0.0);
        assert_eq!(
            body,
            serde_json::json!({
                "model": "gpt-x",
                "messages": [{"role": "system", "content": "s"}, {"role": "user", "content": "u"}],
                "temperature": 0.0
            })
        );
    }

    #[test]
    fn chat_response_parsing() {
        let ok = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": "Paris"}}]});
        assert_eq!(parse_chat_response(&ok).unwrap(), "Paris");
        let bad = serde_json::json!({"choices": []});
        assert_eq!(parse_chat_response(&bad).unwrap_err().kind, ProviderErrorKind::Protocol);
    }

    #[test]
    fn retry_is_bounded_and_skips_content_errors() {
        let policy = RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(1),
        };
        let calls = Cell::new(0);
        let err = policy
            .run::<()>(|| {
                calls.set(calls.get() + 1);
                Err(ProviderError::new(ProviderRole::Chat, ProviderErrorKind::Transport, "down"))
            })
            .unwrap_err();
        assert_eq!(err.kind, ProviderErrorKind::Transport);
        assert_eq!(calls.get(), 4);

        calls.set(0);
        policy
            .run::<()>(|| {
                calls.set(calls.get() + 1);
                Err(ProviderError::new(ProviderRole::Chat, ProviderErrorKind::Protocol, "bad"))
            })
            .unwrap_err();
        assert_eq!(calls.get(), 1);

        calls.set(0);
        let v = policy
            .run(|| {
                calls.set(calls.get() + 1);
                if calls.get() < 3 {
                    Err(ProviderError::new(ProviderRole::Nli, ProviderErrorKind::Transport, "flaky"))
                } else {
                    Ok(7)
                }
            })
            .unwrap();
        assert_eq!((v, calls.get()), (7, 3));
    }
}
