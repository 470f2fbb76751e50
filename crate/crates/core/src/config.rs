//! Run configuration and its flat `key = value` file format.
//!
//! ```text
//! # comments and blank lines are ignored
//! monitor_threshold = 0.5
//! mode = metarag
//! ablations = no_external_judge, no_redundance
//! ```
//!
//! Unknown keys are rejected. The chat credential is read from the
//! environment and has no config key.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::metacognition::HypothesisMode;
use crate::prompts::ErrorType;
use crate::providers::http::OPENAI_CHAT_URL;

macro_rules! keyword_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s.trim() {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!(
                        "unknown {} `{}` (expected one of: {})",
                        stringify!($name),
                        other,
                        [$($text),+].join(", ")
                    )),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

keyword_enum!(RetrieverMode { Bm25 => "bm25", Hybrid => "hybrid" });

keyword_enum!(
    /// Which pipeline answers the questions.
    RunMode {
        Metarag => "metarag",
        StandardRag => "standard_rag",
        Closebook => "closebook",
        CloseBookCot => "closebook_cot",
    }
);

keyword_enum!(Ablation {
    NoInternalJudge => "no_internal_judge",
    NoExternalJudge => "no_external_judge",
    NoIncomplete => "no_incomplete",
    NoRedundance => "no_redundance",
    NoAmbiguity => "no_ambiguity",
    NoDeclarative => "no_declarative",
});

keyword_enum!(
    /// `scripted` reads playbooks from disk; `http` talks to the chat API and
    /// the model shim.
    ProviderKind { Scripted => "scripted", Http => "http" }
);

keyword_enum!(DatasetFormat { Hotpotqa => "hotpotqa", TwoWiki => "two_wiki", Simple => "simple" });

impl FromStr for HypothesisMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "question" => Ok(HypothesisMode::Question),
            "question_answer" => Ok(HypothesisMode::QuestionAnswer),
            other => Err(format!("unknown hypothesis_mode `{other}` (expected question or question_answer)")),
        }
    }
}

impl HypothesisMode {
    pub fn as_str(self) -> &'static str {
        match self {
            HypothesisMode::Question => "question",
            HypothesisMode::QuestionAnswer => "question_answer",
        }
    }
}

impl Ablation {
    /// Catalog entry removed by this flag, if any.
    pub fn removed_error_types(self) -> &'static [ErrorType] {
        match self {
            Ablation::NoIncomplete => &[ErrorType::IncompleteReasoning],
            Ablation::NoRedundance => &[ErrorType::AnswerRedundance],
            Ablation::NoAmbiguity => &[ErrorType::AmbiguityUnderstanding],
            Ablation::NoDeclarative => &ErrorType::ALL,
            Ablation::NoInternalJudge | Ablation::NoExternalJudge => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub monitor_threshold: f64,
    pub max_iterations: usize,
    pub top_k: usize,
    pub chunk_size: usize,
    pub retriever_mode: RetrieverMode,
    pub mode: RunMode,
    pub ablations: BTreeSet<Ablation>,
    pub sample_n: usize,
    pub seed: u64,
    pub hypothesis_mode: HypothesisMode,
    pub temperature: f64,
    pub workers: usize,
    pub max_references: usize,
    pub premise_chars: usize,
    pub index_titles: bool,
    pub rrf_k: usize,
    pub demonstrations: bool,
    pub providers: ProviderKind,
    pub chat_endpoint: String,
    pub chat_model: String,
    pub shim_endpoint: String,
    pub chat_playbook: Option<PathBuf>,
    pub expert_playbook: Option<PathBuf>,
    pub nli_playbook: Option<PathBuf>,
    pub embed_table: Option<PathBuf>,
    pub embed_dim: usize,
    pub prompts_dir: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub dataset_format: DatasetFormat,
    pub corpus: Option<PathBuf>,
    pub index_cache: Option<PathBuf>,
    pub trace_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            monitor_threshold: 0.4,
            max_iterations: 5,
            top_k: 5,
            chunk_size: crate::corpus::DEFAULT_CHUNK_SIZE,
            retriever_mode: RetrieverMode::Bm25,
            mode: RunMode::Metarag,
            ablations: BTreeSet::new(),
            sample_n: 500,
            seed: 0,
            hypothesis_mode: HypothesisMode::Question,
            temperature: 0.0,
            workers: 1,
            max_references: 10,
            premise_chars: crate::providers::DEFAULT_NLI_PREMISE_CHARS,
            index_titles: true,
            rrf_k: crate::retrieval::DEFAULT_RRF_K,
            demonstrations: true,
            providers: ProviderKind::Scripted,
            chat_endpoint: OPENAI_CHAT_URL.to_owned(),
            chat_model: "gpt-3.5-turbo".to_owned(),
            shim_endpoint: "http://127.0.0.1:8000".to_owned(),
            chat_playbook: None,
            expert_playbook: None,
            nli_playbook: None,
            embed_table: None,
            embed_dim: 64,
            prompts_dir: None,
            dataset: None,
            dataset_format: DatasetFormat::Simple,
            corpus: None,
            index_cache: None,
            trace_path: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| format!("{key}: {e}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("{key}: expected true or false, got `{value}`")),
    }
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    pub const KEYS: &'static [&'static str] = &[
        "monitor_threshold",
        "max_iterations",
        "top_k",
        "chunk_size",
        "retriever_mode",
        "mode",
        "ablations",
        "sample_n",
        "seed",
        "hypothesis_mode",
        "temperature",
        "workers",
        "max_references",
        "premise_chars",
        "index_titles",
        "rrf_k",
        "demonstrations",
        "providers",
        "chat_endpoint",
        "chat_model",
        "shim_endpoint",
        "chat_playbook",
        "expert_playbook",
        "nli_playbook",
        "embed_table",
        "embed_dim",
        "prompts_dir",
        "dataset",
        "dataset_format",
        "corpus",
        "index_cache",
        "trace_path",
    ];

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        match key {
            "monitor_threshold" => self.monitor_threshold = parse_value(key, value)?,
            "max_iterations" => self.max_iterations = parse_value(key, value)?,
            "top_k" => self.top_k = parse_value(key, value)?,
            "chunk_size" => self.chunk_size = parse_value(key, value)?,
            "retriever_mode" => self.retriever_mode = parse_value(key, value)?,
            "mode" => self.mode = parse_value(key, value)?,
            "ablations" => {
                self.ablations = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_value(key, s))
                    .collect::<Result<_, _>>()?
            }
            "sample_n" => self.sample_n = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "hypothesis_mode" => self.hypothesis_mode = parse_value(key, value)?,
            "temperature" => self.temperature = parse_value(key, value)?,
            "workers" => self.workers = parse_value(key, value)?,
            "max_references" => self.max_references = parse_value(key, value)?,
            "premise_chars" => self.premise_chars = parse_value(key, value)?,
            "index_titles" => self.index_titles = parse_bool(key, value)?,
            "rrf_k" => self.rrf_k = parse_value(key, value)?,
            "demonstrations" => self.demonstrations = parse_bool(key, value)?,
            "providers" => self.providers = parse_value(key, value)?,
            "chat_endpoint" => self.chat_endpoint = value.to_owned(),
            "chat_model" => self.chat_model = value.to_owned(),
            "shim_endpoint" => self.shim_endpoint = value.to_owned(),
            "chat_playbook" => self.chat_playbook = optional_path(value),
            "expert_playbook" => self.expert_playbook = optional_path(value),
            "nli_playbook" => self.nli_playbook = optional_path(value),
            "embed_table" => self.embed_table = optional_path(value),
            "embed_dim" => self.embed_dim = parse_value(key, value)?,
            "prompts_dir" => self.prompts_dir = optional_path(value),
            "dataset" => self.dataset = optional_path(value),
            "dataset_format" => self.dataset_format = parse_value(key, value)?,
            "corpus" => self.corpus = optional_path(value),
            "index_cache" => self.index_cache = optional_path(value),
            "trace_path" => self.trace_path = optional_path(value),
            "api_key" | "openai_api_key" => {
                return Err(format!("{key}: credentials are read from OPENAI_API_KEY, not the config file"))
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut config = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| EvalError::Config {
                line: i + 1,
                reason: format!("expected `key = value`, got `{line}`"),
            })?;
            config
                .set(key.trim(), value)
                .map_err(|reason| EvalError::Config { line: i + 1, reason })?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut config = Self::parse(&text)?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.chat_playbook,
            &mut self.expert_playbook,
            &mut self.nli_playbook,
            &mut self.embed_table,
            &mut self.prompts_dir,
            &mut self.dataset,
            &mut self.corpus,
            &mut self.index_cache,
            &mut self.trace_path,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.monitor_threshold) {
            return bad(format!("monitor_threshold {} outside [0, 1]", self.monitor_threshold));
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1".into());
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1".into());
        }
        if self.chunk_size == 0 {
            return bad("chunk_size must be at least 1".into());
        }
        if self.sample_n == 0 {
            return bad("sample_n must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.max_references < self.top_k {
            return bad(format!(
                "max_references {} is smaller than top_k {}",
                self.max_references, self.top_k
            ));
        }
        if self.embed_dim == 0 {
            return bad("embed_dim must be at least 1".into());
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return bad(format!("temperature {} must be a non-negative number", self.temperature));
        }
        Ok(())
    }

    pub fn has(&self, ablation: Ablation) -> bool {
        self.ablations.contains(&ablation)
    }

    /// Error types dropped from the critic's catalog by the active ablations.
    pub fn removed_error_types(&self) -> Vec<ErrorType> {
        let mut out: Vec<ErrorType> = self
            .ablations
            .iter()
            .flat_map(|a| a.removed_error_types().iter().copied())
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Renders the config back to the file format; unset paths are omitted.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        line("monitor_threshold", self.monitor_threshold.to_string());
        line("max_iterations", self.max_iterations.to_string());
        line("top_k", self.top_k.to_string());
        line("chunk_size", self.chunk_size.to_string());
        line("retriever_mode", self.retriever_mode.to_string());
        line("mode", self.mode.to_string());
        line(
            "ablations",
            self.ablations.iter().map(|a| a.as_str()).collect::<Vec<_>>().join(", "),
        );
        line("sample_n", self.sample_n.to_string());
        line("seed", self.seed.to_string());
        line("hypothesis_mode", self.hypothesis_mode.as_str().to_owned());
        line("temperature", self.temperature.to_string());
        line("workers", self.workers.to_string());
        line("max_references", self.max_references.to_string());
        line("premise_chars", self.premise_chars.to_string());
        line("index_titles", self.index_titles.to_string());
        line("rrf_k", self.rrf_k.to_string());
        line("demonstrations", self.demonstrations.to_string());
        line("providers", self.providers.to_string());
        line("chat_endpoint", self.chat_endpoint.clone());
        line("chat_model", self.chat_model.clone());
        line("shim_endpoint", self.shim_endpoint.clone());
        line("embed_dim", self.embed_dim.to_string());
        line("dataset_format", self.dataset_format.to_string());
        for (k, v) in [
            ("chat_playbook", &self.chat_playbook),
            ("expert_playbook", &self.expert_playbook),
            ("nli_playbook", &self.nli_playbook),
            ("embed_table", &self.embed_table),
            ("prompts_dir", &self.prompts_dir),
            ("dataset", &self.dataset),
            ("corpus", &self.corpus),
            ("index_cache", &self.index_cache),
            ("trace_path", &self.trace_path),
        ] {
            if let Some(p) = v {
                line(k, p.display().to_string());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.monitor_threshold, 0.4);
        assert_eq!((c.max_iterations, c.top_k, c.chunk_size, c.sample_n), (5, 5, 100, 500));
        assert_eq!(c.temperature, 0.0);
        assert_eq!(c.mode, RunMode::Metarag);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn parse_flat_file() {
        let c = RunConfig::parse(
            "# sweep base\nmonitor_threshold = 0.5\n\nmode=closebook_cot\nablations = no_external_judge , no_redundance\nindex_titles = false\ntrace_path = out/traces.jsonl\n",
        )
        .unwrap();
        assert_eq!(c.monitor_threshold, 0.5);
        assert_eq!(c.mode, RunMode::CloseBookCot);
        assert!(c.has(Ablation::NoExternalJudge) && c.has(Ablation::NoRedundance));
        assert!(!c.index_titles);
        assert_eq!(c.removed_error_types(), [ErrorType::AnswerRedundance]);
        assert_eq!(c.trace_path.as_deref(), Some(Path::new("out/traces.jsonl")));
    }

    #[test]
    fn every_key_is_settable_and_round_trips() {
        let mut c = RunConfig {
            ablations: Ablation::ALL.iter().copied().collect(),
            chat_playbook: Some("chat.jsonl".into()),
            dataset: Some("d.json".into()),
            ..RunConfig::default()
        };
        c.hypothesis_mode = HypothesisMode::QuestionAnswer;
        let back = RunConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
        for key in RunConfig::KEYS {
            assert!(!matches!(RunConfig::default().set(key, ""), Err(e) if e.starts_with("unknown key")), "{key}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        for (text, line) in [
            ("monitor_threshold = lots", 1),
            ("\nfoo = 1", 2),
            ("no separator", 1),
            ("ablations = no_such_flag", 1),
            ("api_key = sk-123", 1),
        ] {
            match RunConfig::parse(text) {
                Err(EvalError::Config { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        for text in ["monitor_threshold = 1.5", "max_iterations = 0", "top_k = 0", "top_k = 20"] {
            assert!(matches!(RunConfig::parse(text), Err(EvalError::InvalidConfig(_))), "{text}");
        }
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "corpus = corpus.jsonl\ndataset = /abs/d.json\n").unwrap();
        let c = RunConfig::load(&path).unwrap();
        assert_eq!(c.corpus.unwrap(), dir.path().join("corpus.jsonl"));
        assert_eq!(c.dataset.unwrap(), PathBuf::from("/abs/d.json"));
    }
}
