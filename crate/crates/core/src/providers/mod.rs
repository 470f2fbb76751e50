//! Contracts for the four external model roles.
//!
//! * chat completion: the QA model and, with a different system prompt, the
//!   evaluator-critic
//! * expert QA model: the independent answerer used by the monitor
//! * embedder: sentence vectors for the monitor and dense retrieval
//! * NLI judge: binary entailment
//!
//! Every error carries the [`ProviderRole`] it came from. [`scripted`] holds
//! deterministic doubles driven by playbooks; [`http`] talks to a
//! chat-completions endpoint and to the model shim.

use serde::{Deserialize, Serialize};

use crate::corpus::Passage;

pub mod http;
pub mod playbook;
pub mod scripted;

pub use playbook::{Playbook, PlaybookRule};
pub use scripted::{CallLog, CallRecord, ScriptedChat, ScriptedEmbedder, ScriptedExpert, ScriptedNli};

/// Default character budget for NLI premises.
pub const DEFAULT_NLI_PREMISE_CHARS: usize = 6000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderRole {
    Chat,
    Expert,
    Embed,
    Nli,
}

impl std::fmt::Display for ProviderRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Chat => "chat",
            Self::Expert => "expert",
            Self::Embed => "embed",
            Self::Nli => "nli",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderErrorKind {
    /// Connection-level failure; retried with backoff.
    Transport,
    /// The endpoint answered with something off-contract.
    Protocol,
    /// The caller violated a precondition.
    InvalidArgument,
    /// The endpoint rejected the request content.
    Rejected,
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("{role} provider {kind:?} error: {message}")]
pub struct ProviderError {
    pub role: ProviderRole,
    pub kind: ProviderErrorKind,
    pub message: String,
}

impl ProviderError {
    pub fn new(role: ProviderRole, kind: ProviderErrorKind, message: impl Into<String>) -> Self {
        Self {
            role,
            kind,
            message: message.into(),
        }
    }

    pub fn is_retryable(&self) -> bool {
        self.kind == ProviderErrorKind::Transport
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::System => "system",
            Self::User => "user",
            Self::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

/// Flattens a conversation to the text scripted playbooks match against.
pub fn render_messages(messages: &[ChatMessage]) -> String {
    let mut out = String::new();
    for m in messages {
        out.push_str(m.role.as_str());
        out.push_str(": ");
        out.push_str(&m.content);
        out.push('\n');
    }
    out
}

/// A finite embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, String> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(format!("non-finite value at position {i}"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, messages: &[ChatMessage], temperature: f64) -> Result<String, ProviderError>;
}

pub trait ExpertProvider: Send + Sync {
    fn answer(&self, question: &str, passages: &[Passage]) -> Result<String, ProviderError>;
}

pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError>;
}

pub trait NliJudge: Send + Sync {
    /// 1 if `premise` entails `hypothesis`, else 0.
    fn entails(&self, premise: &str, hypothesis: &str) -> Result<u8, ProviderError>;
}

/// Sends a conversation, rejecting an empty one up front.
pub fn chat_complete(
    provider: &dyn ChatProvider,
    messages: &[ChatMessage],
    temperature: f64,
) -> Result<String, ProviderError> {
    if messages.is_empty() {
        return Err(ProviderError::new(
            ProviderRole::Chat,
            ProviderErrorKind::InvalidArgument,
            "no messages to send",
        ));
    }
    if messages.iter().any(|m| m.role == Role::User && m.content.is_empty()) {
        return Err(ProviderError::new(
            ProviderRole::Chat,
            ProviderErrorKind::InvalidArgument,
            "user message content is empty",
        ));
    }
    provider.complete(messages, temperature)
}

pub fn expert_answer(
    provider: &dyn ExpertProvider,
    question: &str,
    passages: &[Passage],
) -> Result<String, ProviderError> {
    provider.answer(question, passages)
}

/// Embeds a batch, checking one vector per input and a constant dimension.
pub fn embed(provider: &dyn Embedder, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
    let protocol = |msg: String| ProviderError::new(ProviderRole::Embed, ProviderErrorKind::Protocol, msg);
    if texts.is_empty() {
        return Err(ProviderError::new(
            ProviderRole::Embed,
            ProviderErrorKind::InvalidArgument,
            "no texts to embed",
        ));
    }
    let vectors = provider.embed(texts)?;
    if vectors.len() != texts.len() {
        return Err(protocol(format!(
            "expected {} vectors, got {}",
            texts.len(),
            vectors.len()
        )));
    }
    if let Some(first) = vectors.first() {
        if let Some(bad) = vectors.iter().find(|v| v.dim() != first.dim()) {
            return Err(protocol(format!(
                "dimension mismatch in batch: {} vs {}",
                first.dim(),
                bad.dim()
            )));
        }
    }
    Ok(vectors)
}

pub fn nli_entails(provider: &dyn NliJudge, premise: &str, hypothesis: &str) -> Result<u8, ProviderError> {
    let verdict = provider.entails(premise, hypothesis)?;
    if verdict > 1 {
        return Err(ProviderError::new(
            ProviderRole::Nli,
            ProviderErrorKind::Protocol,
            format!("verdict {verdict} is not 0 or 1"),
        ));
    }
    Ok(verdict)
}

/// Keeps the first `max_chars` characters of a premise.
pub fn truncate_premise(premise: &str, max_chars: usize) -> &str {
    match premise.char_indices().nth(max_chars) {
        Some((byte, _)) => &premise[..byte],
        None => premise,
    }
}

/// The four providers one pipeline run needs.
#[derive(Clone)]
pub struct Providers {
    pub chat: std::sync::Arc<dyn ChatProvider>,
    pub expert: std::sync::Arc<dyn ExpertProvider>,
    pub embedder: std::sync::Arc<dyn Embedder>,
    pub nli: std::sync::Arc<dyn NliJudge>,
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<Vec<f64>>);

    impl Embedder for Fixed {
        fn embed(&self, _texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
            Ok(self.0.iter().map(|v| EmbeddingVector::new(v.clone()).unwrap()).collect())
        }
    }

    #[test]
    fn embed_checks_batch_shape() {
        let texts = vec!["a".to_string(), "b".to_string()];
        let err = embed(&Fixed(vec![vec![1.0], vec![1.0, 2.0]]), &texts).unwrap_err();
        assert_eq!(err.kind, ProviderErrorKind::Protocol);
        assert_eq!(err.role, ProviderRole::Embed);
        let err = embed(&Fixed(vec![vec![1.0]]), &texts).unwrap_err();
        assert_eq!(err.kind, ProviderErrorKind::Protocol);
        let err = embed(&Fixed(vec![]), &[]).unwrap_err();
        assert_eq!(err.kind, ProviderErrorKind::InvalidArgument);
    }

    #[test]
    fn non_finite_vectors_rejected() {
        assert!(EmbeddingVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(EmbeddingVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn truncation_respects_char_boundaries() {
        assert_eq!(truncate_premise("héllo", 2), "hé");
        assert_eq!(truncate_premise("abc", 10), "abc");
        assert_eq!(truncate_premise("abc", 0), "");
    }

    #[test]
    fn empty_conversation_rejected() {
        let chat = ScriptedChat::new(Playbook::with_default("x"));
        let err = chat_complete(&chat, &[], 0.0).unwrap_err();
        assert_eq!(err.kind, ProviderErrorKind::InvalidArgument);
        assert_eq!(err.role, ProviderRole::Chat);
        let err = chat_complete(&chat, &[ChatMessage::user("")], 0.0).unwrap_err();
        assert_eq!(err.kind, ProviderErrorKind::InvalidArgument);
    }
}
