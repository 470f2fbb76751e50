//! Prompt templates and the error catalog used by the critic.
//!
//! Templates live as plain-text files (see `data/templates/`), one per
//! [`TemplateId`], split into a `[system]` and a `[user]` section. Slots are
//! written `{name}`; names may contain spaces. The built-in set is compiled
//! in, and [`PromptRegistry::load_dir`] swaps in files from a directory.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::PromptError;
use crate::providers::ChatMessage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    QaWithRefs,
    QaInternalOnly,
    QaExternalOnly,
    EvalInternal,
    CriticErrors,
    QueryGen,
    SuggestionGen,
    RecheckStatement,
}

impl TemplateId {
    pub const ALL: [TemplateId; 8] = [
        Self::QaWithRefs,
        Self::QaInternalOnly,
        Self::QaExternalOnly,
        Self::EvalInternal,
        Self::CriticErrors,
        Self::QueryGen,
        Self::SuggestionGen,
        Self::RecheckStatement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::QaWithRefs => "qa_with_refs",
            Self::QaInternalOnly => "qa_internal_only",
            Self::QaExternalOnly => "qa_external_only",
            Self::EvalInternal => "eval_internal",
            Self::CriticErrors => "critic_errors",
            Self::QueryGen => "query_gen",
            Self::SuggestionGen => "suggestion_gen",
            Self::RecheckStatement => "recheck_statement",
        }
    }

    /// Slots the engine fills for this template.
    pub fn slots(self) -> &'static [&'static str] {
        match self {
            Self::QaWithRefs | Self::QaExternalOnly => &["question", "retrieved documents"],
            Self::QaInternalOnly => &["question"],
            Self::EvalInternal => &["question", "answer"],
            Self::CriticErrors => &["error types", "references", "question", "response"],
            Self::QueryGen => &["references", "question", "answer"],
            Self::SuggestionGen => &["error type", "rationale"],
            Self::RecheckStatement => &["statement"],
        }
    }

    fn builtin_text(self) -> &'static str {
        match self {
            Self::QaWithRefs => include_str!("../data/templates/qa_with_refs.txt"),
            Self::QaInternalOnly => include_str!("../data/templates/qa_internal_only.txt"),
            Self::QaExternalOnly => include_str!("../data/templates/qa_external_only.txt"),
            Self::EvalInternal => include_str!("../data/templates/eval_internal.txt"),
            Self::CriticErrors => include_str!("../data/templates/critic_errors.txt"),
            Self::QueryGen => include_str!("../data/templates/query_gen.txt"),
            Self::SuggestionGen => include_str!("../data/templates/suggestion_gen.txt"),
            Self::RecheckStatement => include_str!("../data/templates/recheck_statement.txt"),
        }
    }
}

/// A rendered prompt: role sentence in the system message, slots in the user
/// message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendered {
    pub system: String,
    pub user: String,
}

impl Rendered {
    pub fn messages(&self) -> Vec<ChatMessage> {
        vec![ChatMessage::system(&self.system), ChatMessage::user(&self.user)]
    }

    /// Both sections joined, for golden-string checks.
    pub fn text(&self) -> String {
        format!("{}\n{}", self.system, self.user)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Literal(String),
    Slot(String),
}

fn is_slot_char(c: char) -> bool {
    c.is_ascii_lowercase() || c == ' ' || c == '_'
}

fn parse_pieces(text: &str) -> Vec<Piece> {
    let mut pieces = Vec::new();
    let mut literal = String::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let slot = after
            .find('}')
            .map(|close| &after[..close])
            .filter(|name| !name.is_empty() && name.chars().all(is_slot_char));
        match slot {
            Some(name) => {
                literal.push_str(&rest[..open]);
                if !literal.is_empty() {
                    pieces.push(Piece::Literal(std::mem::take(&mut literal)));
                }
                pieces.push(Piece::Slot(name.to_owned()));
                rest = &after[name.len() + 1..];
            }
            None => {
                literal.push_str(&rest[..=open]);
                rest = after;
            }
        }
    }
    literal.push_str(rest);
    if !literal.is_empty() {
        pieces.push(Piece::Literal(literal));
    }
    pieces
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub id: TemplateId,
    pub text: String,
    pub required_slots: BTreeSet<String>,
    system: Vec<Piece>,
    user: Vec<Piece>,
}

impl Template {
    /// Parses `[system]` / `[user]` sections and checks the slot set matches
    /// what the engine supplies for `id`.
    pub fn parse(id: TemplateId, text: &str) -> Result<Self, PromptError> {
        let malformed = |reason: String| PromptError::Malformed {
            template: id.name().to_owned(),
            reason,
        };
        let body = text.trim_start();
        let body = body
            .strip_prefix("[system]")
            .ok_or_else(|| malformed("must start with [system]".into()))?;
        let (system, user) = body
            .split_once("\n[user]")
            .ok_or_else(|| malformed("missing [user] section".into()))?;
        let system = parse_pieces(system.trim());
        let user = parse_pieces(user.trim_start_matches('\n').trim_end());
        let required_slots: BTreeSet<String> = system
            .iter()
            .chain(&user)
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s.clone()),
                Piece::Literal(_) => None,
            })
            .collect();
        let expected: BTreeSet<String> = id.slots().iter().map(|s| s.to_string()).collect();
        if required_slots != expected {
            return Err(malformed(format!(
                "slots {required_slots:?} differ from the expected {expected:?}"
            )));
        }
        Ok(Self {
            id,
            text: text.to_owned(),
            required_slots,
            system,
            user,
        })
    }

    pub fn render<'a>(&self, slots: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Rendered, PromptError> {
        let mut values: BTreeMap<&str, &str> = BTreeMap::new();
        for (name, value) in slots {
            if !self.required_slots.contains(name) {
                return Err(PromptError::UnexpectedSlot {
                    template: self.id.name().to_owned(),
                    slot: name.to_owned(),
                });
            }
            values.insert(name, value);
        }
        if let Some(missing) = self.required_slots.iter().find(|s| !values.contains_key(s.as_str())) {
            return Err(PromptError::MissingSlot {
                template: self.id.name().to_owned(),
                slot: missing.clone(),
            });
        }
        let fill = |pieces: &[Piece]| {
            let mut out = String::new();
            for p in pieces {
                match p {
                    Piece::Literal(s) => out.push_str(s),
                    Piece::Slot(s) => out.push_str(values[s.as_str()]),
                }
            }
            out
        };
        Ok(Rendered {
            system: fill(&self.system),
            user: fill(&self.user),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorType {
    IncompleteReasoning,
    AnswerRedundance,
    AmbiguityUnderstanding,
}

impl ErrorType {
    /// Highest priority first.
    pub const ALL: [ErrorType; 3] = [
        Self::IncompleteReasoning,
        Self::AnswerRedundance,
        Self::AmbiguityUnderstanding,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::IncompleteReasoning => "Incomplete Reasoning",
            Self::AnswerRedundance => "Answer Redundance",
            Self::AmbiguityUnderstanding => "Ambiguity Understanding",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Self::IncompleteReasoning => "incomplete_reasoning",
            Self::AnswerRedundance => "answer_redundance",
            Self::AmbiguityUnderstanding => "ambiguity_understanding",
        }
    }

    /// Accepts the label or key in any case, with spaces, dashes or
    /// underscores.
    pub fn parse(name: &str) -> Option<Self> {
        let norm: String = name
            .trim()
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c.to_ascii_lowercase() })
            .collect();
        Self::ALL.into_iter().find(|t| t.key() == norm)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: ErrorType,
    pub label: String,
    pub description: String,
    pub examples: Vec<String>,
}

/// The declarative-knowledge catalog: one entry per [`ErrorType`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorCatalog {
    entries: Vec<CatalogEntry>,
}

impl ErrorCatalog {
    /// Parses line-delimited entries; all three error types must appear
    /// exactly once.
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let mut entries: Vec<CatalogEntry> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: CatalogEntry =
                serde_json::from_str(line).map_err(|e| PromptError::Catalog(format!("line {}: {e}", n + 1)))?;
            if entries.iter().any(|e| e.name == entry.name) {
                return Err(PromptError::Catalog(format!("duplicate entry {}", entry.name.key())));
            }
            entries.push(entry);
        }
        if entries.len() != ErrorType::ALL.len() {
            return Err(PromptError::Catalog(format!(
                "expected {} entries, found {}",
                ErrorType::ALL.len(),
                entries.len()
            )));
        }
        entries.sort_by_key(|e| e.name);
        Ok(Self { entries })
    }

    pub fn builtin() -> Self {
        Self::parse(include_str!("../data/error_catalog.jsonl")).expect("built-in catalog is valid")
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn contains(&self, t: ErrorType) -> bool {
        self.entries.iter().any(|e| e.name == t)
    }

    /// A view with the given types removed (for ablations).
    pub fn without(&self, removed: &[ErrorType]) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .filter(|e| !removed.contains(&e.name))
                .cloned()
                .collect(),
        }
    }

    /// One `Name - Description - Examples: …` line per entry.
    pub fn serialize(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{} - {} - Examples: {}", e.label, e.description, e.examples.join(" | ")))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Templates, the error catalog and the demonstrations block.
#[derive(Debug, Clone)]
pub struct PromptRegistry {
    templates: HashMap<TemplateId, Template>,
    catalog: ErrorCatalog,
    demonstrations: String,
}

impl PromptRegistry {
    pub fn builtin() -> Self {
        let templates = TemplateId::ALL
            .into_iter()
            .map(|id| (id, Template::parse(id, id.builtin_text()).expect("built-in template is valid")))
            .collect();
        Self {
            templates,
            catalog: ErrorCatalog::builtin(),
            demonstrations: include_str!("../data/demonstrations.txt").to_owned(),
        }
    }

    /// Loads `<id>.txt`, `error_catalog.jsonl` and `demonstrations.txt` from
    /// `dir` (templates may also sit in `dir/templates/`). Missing files keep
    /// the built-in version.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let read = |path: &Path| -> Result<Option<String>, PromptError> {
            match std::fs::read_to_string(path) {
                Ok(s) => Ok(Some(s)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(PromptError::Io {
                    path: path.display().to_string(),
                    reason: e.to_string(),
                }),
            }
        };
        let mut registry = Self::builtin();
        for id in TemplateId::ALL {
            let file = format!("{}.txt", id.name());
            let text = match read(&dir.join(&file))? {
                Some(t) => Some(t),
                None => read(&dir.join("templates").join(&file))?,
            };
            if let Some(text) = text {
                registry.templates.insert(id, Template::parse(id, &text)?);
            }
        }
        if let Some(text) = read(&dir.join("error_catalog.jsonl"))? {
            registry.catalog = ErrorCatalog::parse(&text)?;
        }
        if let Some(text) = read(&dir.join("demonstrations.txt"))? {
            registry.demonstrations = text;
        }
        Ok(registry)
    }

    pub fn with_demonstrations(mut self, demonstrations: impl Into<String>) -> Self {
        self.demonstrations = demonstrations.into();
        self
    }

    pub fn template(&self, id: TemplateId) -> &Template {
        &self.templates[&id]
    }

    pub fn catalog(&self) -> &ErrorCatalog {
        &self.catalog
    }

    pub fn demonstrations(&self) -> &str {
        &self.demonstrations
    }

    pub fn render<'a>(
        &self,
        id: TemplateId,
        slots: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Rendered, PromptError> {
        self.template(id).render(slots)
    }
}
