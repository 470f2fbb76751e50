//! Deterministic provider doubles. Each one is a pure function of its input,
//! optionally recording calls into a shared [`CallLog`].

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

use super::{
    render_messages, ChatMessage, ChatProvider, Embedder, EmbeddingVector, ExpertProvider, NliJudge,
    Playbook, ProviderError, ProviderErrorKind, ProviderRole,
};
use crate::corpus::Passage;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallRecord {
    pub role: ProviderRole,
    pub input: String,
}

/// Shared record of provider calls, in call order.
#[derive(Debug, Clone, Default)]
pub struct CallLog(Arc<Mutex<Vec<CallRecord>>>);

impl CallLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, role: ProviderRole, input: impl Into<String>) {
        self.0.lock().expect("call log poisoned").push(CallRecord {
            role,
            input: input.into(),
        });
    }

    pub fn records(&self) -> Vec<CallRecord> {
        self.0.lock().expect("call log poisoned").clone()
    }

    pub fn count(&self, role: ProviderRole) -> usize {
        self.0
            .lock()
            .expect("call log poisoned")
            .iter()
            .filter(|r| r.role == role)
            .count()
    }

    pub fn clear(&self) {
        self.0.lock().expect("call log poisoned").clear();
    }
}

fn record(log: &Option<CallLog>, role: ProviderRole, input: &str) {
    if let Some(log) = log {
        log.push(role, input);
    }
}

/// Chat double: the playbook sees the role-tagged rendering of all messages.
#[derive(Debug, Clone)]
pub struct ScriptedChat {
    playbook: Playbook,
    log: Option<CallLog>,
}

impl ScriptedChat {
    pub fn new(playbook: Playbook) -> Self {
        Self { playbook, log: None }
    }

    pub fn with_log(mut self, log: CallLog) -> Self {
        self.log = Some(log);
        self
    }
}

impl ChatProvider for ScriptedChat {
    fn complete(&self, messages: &[ChatMessage], _temperature: f64) -> Result<String, ProviderError> {
        let prompt = render_messages(messages);
        record(&self.log, ProviderRole::Chat, &prompt);
        Ok(self.playbook.lookup(&prompt).to_owned())
    }
}

/// The text an expert playbook is matched against.
pub fn expert_input(question: &str, passages: &[Passage]) -> String {
    let mut out = format!("question: {question}\n");
    for p in passages {
        out.push_str("passage: ");
        out.push_str(&p.title);
        out.push_str(": ");
        out.push_str(&p.text);
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct ScriptedExpert {
    playbook: Playbook,
    log: Option<CallLog>,
}

impl ScriptedExpert {
    pub fn new(playbook: Playbook) -> Self {
        Self { playbook, log: None }
    }

    pub fn with_log(mut self, log: CallLog) -> Self {
        self.log = Some(log);
        self
    }
}

impl ExpertProvider for ScriptedExpert {
    fn answer(&self, question: &str, passages: &[Passage]) -> Result<String, ProviderError> {
        let input = expert_input(question, passages);
        record(&self.log, ProviderRole::Expert, &input);
        Ok(self.playbook.lookup(&input).to_owned())
    }
}

/// NLI double. Identical premise and hypothesis always entail; an empty
/// premise never entails a non-empty hypothesis. Otherwise the playbook is
/// matched against `"premise: {p}\nhypothesis: {h}"` and must answer `0` or `1`.
#[derive(Debug, Clone)]
pub struct ScriptedNli {
    playbook: Playbook,
    log: Option<CallLog>,
}

impl ScriptedNli {
    pub fn new(playbook: Playbook) -> Self {
        Self { playbook, log: None }
    }

    pub fn with_log(mut self, log: CallLog) -> Self {
        self.log = Some(log);
        self
    }
}

impl NliJudge for ScriptedNli {
    fn entails(&self, premise: &str, hypothesis: &str) -> Result<u8, ProviderError> {
        let input = format!("premise: {premise}\nhypothesis: {hypothesis}");
        record(&self.log, ProviderRole::Nli, &input);
        if premise == hypothesis {
            return Ok(1);
        }
        if premise.is_empty() {
            return Ok(0);
        }
        match self.playbook.lookup(&input).trim() {
            "1" => Ok(1),
            "0" => Ok(0),
            other => Err(ProviderError::new(
                ProviderRole::Nli,
                ProviderErrorKind::Protocol,
                format!("scripted verdict `{other}` is not 0 or 1"),
            )),
        }
    }
}

/// Embedding double: a fixed text → vector table, falling back to a
/// pseudo-random unit-scale vector derived from the SHA-256 of the text.
#[derive(Debug, Clone)]
pub struct ScriptedEmbedder {
    table: HashMap<String, Vec<f64>>,
    dim: usize,
    log: Option<CallLog>,
}

impl ScriptedEmbedder {
    /// Pure hashing embedder of the given dimension.
    pub fn hashing(dim: usize) -> Self {
        Self {
            table: HashMap::new(),
            dim: dim.max(1),
            log: None,
        }
    }

    /// Table-backed embedder; every table vector must share one dimension.
    pub fn from_table<S: Into<String>>(entries: impl IntoIterator<Item = (S, Vec<f64>)>) -> Result<Self, String> {
        let mut table = HashMap::new();
        let mut dim = None;
        for (text, vector) in entries {
            let text = text.into();
            EmbeddingVector::new(vector.clone()).map_err(|e| format!("vector for `{text}`: {e}"))?;
            match dim {
                None => dim = Some(vector.len()),
                Some(d) if d != vector.len() => {
                    return Err(format!("vector for `{text}` has dimension {}, expected {d}", vector.len()))
                }
                _ => {}
            }
            table.insert(text, vector);
        }
        Ok(Self {
            table,
            dim: dim.unwrap_or(16).max(1),
            log: None,
        })
    }

    /// Reads `{"text": "...", "vector": [...]}` lines.
    pub fn parse_table(text: &str) -> Result<Self, String> {
        #[derive(serde::Deserialize)]
        struct Entry {
            text: String,
            vector: Vec<f64>,
        }
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: Entry = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", n + 1))?;
            entries.push((e.text, e.vector));
        }
        Self::from_table(entries)
    }

    pub fn with_log(mut self, log: CallLog) -> Self {
        self.log = Some(log);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn hashed(&self, text: &str) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim);
        let mut counter = 0u32;
        while out.len() < self.dim {
            let mut h = Sha256::new();
            h.update(counter.to_le_bytes());
            h.update(text.as_bytes());
            for pair in h.finalize().chunks(2) {
                if out.len() == self.dim {
                    break;
                }
                let raw = u16::from_le_bytes([pair[0], pair[1]]);
                out.push(f64::from(raw) / 32767.5 - 1.0);
            }
            counter += 1;
        }
        out
    }
}

impl Embedder for ScriptedEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        texts
            .iter()
            .map(|t| {
                record(&self.log, ProviderRole::Embed, t);
                let v = self.table.get(t).cloned().unwrap_or_else(|| self.hashed(t));
                EmbeddingVector::new(v)
                    .map_err(|e| ProviderError::new(ProviderRole::Embed, ProviderErrorKind::Protocol, e))
            })
            .collect()
    }
}
