//! Monitoring, evaluating and planning.
//!
//! The monitor compares the QA answer with an expert model's answer by
//! embedding cosine similarity and activates evaluation when the similarity
//! is strictly below the threshold. Evaluation asks the critic whether it can
//! answer from its own knowledge, asks the NLI judge whether the references
//! entail the question, and (when both sources suffice) asks the critic to
//! name catalogued errors. Planning maps the resulting knowledge condition to
//! repair actions:
//!
//! | condition | actions |
//! |---|---|
//! | no knowledge | generate follow-up query, augment references |
//! | only internal | switch to internal-only answering |
//! | only external | switch to references-only answering |
//! | both | double-check statements, add a suggestion |

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::Passage;
use crate::error::PipelineError;
use crate::prompts::{ErrorCatalog, ErrorType, PromptRegistry, TemplateId};
use crate::providers::{
    self, http::passage_wire_text, truncate_premise, ChatProvider, Embedder, ExpertProvider, NliJudge,
};
use crate::retrieval::cosine_similarity;

pub const DEFAULT_SUGGESTION: &str = "Please think step by step.";
const QUERY_MARKER: &str = "i further need to search";
const FALLBACK_QUERY_SUFFIX: &str = " background facts";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorAction {
    Pass,
    ActivateEvaluating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorOutcome {
    pub expert_answer: String,
    pub similarity: f64,
    pub threshold: f64,
    pub action: MonitorAction,
}

/// Strict rule: evaluate iff `similarity < threshold`.
pub fn monitor_action(similarity: f64, threshold: f64) -> MonitorAction {
    if similarity < threshold {
        MonitorAction::ActivateEvaluating
    } else {
        MonitorAction::Pass
    }
}

/// Asks the expert for its own answer and gates on answer similarity.
pub fn monitor_decide(
    answer: &str,
    question: &str,
    references: &[Passage],
    expert: &dyn ExpertProvider,
    embedder: &dyn Embedder,
    threshold: f64,
) -> Result<MonitorOutcome, PipelineError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(PipelineError::Config(format!("monitor threshold {threshold} outside [0, 1]")));
    }
    let expert_answer = providers::expert_answer(expert, question, references)?;
    let vectors = providers::embed(embedder, &[answer.to_owned(), expert_answer.clone()])?;
    let similarity = cosine_similarity(vectors[0].values(), vectors[1].values());
    Ok(MonitorOutcome {
        expert_answer,
        similarity,
        threshold,
        action: monitor_action(similarity, threshold),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionLabel {
    NoKnowledge,
    OnlyExternal,
    OnlyInternal,
    Both,
}

impl ConditionLabel {
    pub const ALL: [ConditionLabel; 4] = [Self::NoKnowledge, Self::OnlyExternal, Self::OnlyInternal, Self::Both];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::NoKnowledge => "no_knowledge",
            Self::OnlyExternal => "only_external",
            Self::OnlyInternal => "only_internal",
            Self::Both => "both",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeCondition {
    pub internal_ok: bool,
    pub external_ok: bool,
    pub label: ConditionLabel,
}

pub fn classify_condition(internal_ok: bool, external_ok: bool) -> KnowledgeCondition {
    let label = match (internal_ok, external_ok) {
        (false, false) => ConditionLabel::NoKnowledge,
        (false, true) => ConditionLabel::OnlyExternal,
        (true, false) => ConditionLabel::OnlyInternal,
        (true, true) => ConditionLabel::Both,
    };
    KnowledgeCondition {
        internal_ok,
        external_ok,
        label,
    }
}

/// Reads a leading yes/no, ignoring case and trailing punctuation.
pub fn parse_verdict(reply: &str) -> Option<bool> {
    let first = reply
        .split(|c: char| c.is_whitespace() || c == ',' || c == '.' || c == '!' || c == ':' || c == ';')
        .find(|w| !w.is_empty())?
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_ascii_lowercase();
    match first.as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

/// A binary judgement plus whether the reply had to be defaulted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Judgement {
    pub ok: bool,
    pub unparsable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisMode {
    /// The bare question.
    #[default]
    Question,
    /// The question followed by the current answer.
    QuestionAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorFinding {
    pub error_type: ErrorType,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Critique {
    pub findings: Vec<ErrorFinding>,
    pub warnings: Vec<String>,
}

/// Parses critic lines of the form `Name: reason` (also `Name - reason` or
/// `Name, reason`). Names outside `catalog` are dropped; a colon/dash line
/// with an unknown name produces a warning.
pub fn parse_findings(reply: &str, catalog: &ErrorCatalog) -> Critique {
    let mut out = Critique::default();
    for raw in reply.lines() {
        let line = raw
            .trim()
            .trim_start_matches(|c: char| c == '-' || c == '*' || c == '•' || c.is_ascii_digit() || c == '.' || c == ')')
            .trim();
        if line.is_empty() {
            continue;
        }
        let strong = line
            .find(':')
            .map(|i| (i, 1))
            .into_iter()
            .chain(line.find(" - ").map(|i| (i, 3)))
            .min_by_key(|&(i, _)| i);
        let (name, rationale, explicit) = match strong {
            Some((i, len)) => (&line[..i], &line[i + len..], true),
            None => match line.find(',') {
                Some(i) => (&line[..i], &line[i + 1..], false),
                None => (line.trim_end_matches(['.', '!']), "", false),
            },
        };
        match ErrorType::parse(name) {
            Some(t) if catalog.contains(t) => {
                if !out.findings.iter().any(|f| f.error_type == t) {
                    out.findings.push(ErrorFinding {
                        error_type: t,
                        rationale: rationale.trim().to_owned(),
                    });
                }
            }
            Some(t) => out.warnings.push(format!("critic named suppressed error type `{}`", t.key())),
            None if explicit => out.warnings.push(format!("critic named unknown error type `{}`", name.trim())),
            None => {}
        }
    }
    out
}

/// Splits on `.`, `!` or `?` followed by whitespace or end of text.
pub fn split_statements(answer: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = answer.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let at_boundary = chars.peek().is_none_or(|&(_, n)| n.is_whitespace());
            if at_boundary {
                let end = i + c.len_utf8();
                let s = answer[start..end].trim();
                if !s.is_empty() {
                    out.push(s.to_owned());
                }
                start = end;
            }
        }
    }
    let tail = answer[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_owned());
    }
    out
}

/// Pulls the follow-up query out of a completion, if the marker is present.
pub fn extract_followup_query(completion: &str) -> Option<String> {
    let lower = completion.to_lowercase();
    let at = lower.find(QUERY_MARKER)?;
    // Lowercasing can change byte lengths; map back through char counts.
    let chars_before = lower[..at].chars().count() + QUERY_MARKER.chars().count();
    let byte = completion
        .char_indices()
        .nth(chars_before)
        .map_or(completion.len(), |(b, _)| b);
    let rest = completion[byte..].lines().next().unwrap_or("");
    let q = rest
        .trim()
        .trim_start_matches(':')
        .trim()
        .trim_matches(|c: char| matches!(c, '"' | '\'' | '{' | '}' | '“' | '”' | '.') || c.is_whitespace());
    (!q.is_empty()).then(|| q.to_owned())
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DoubleCheckResult {
    pub statements: Vec<String>,
    pub unsupported: BTreeSet<usize>,
    pub rechecked_keep: BTreeSet<usize>,
}

impl DoubleCheckResult {
    /// Statements to drop: unsupported and not affirmed on recheck.
    pub fn excluded(&self) -> Vec<String> {
        self.unsupported
            .difference(&self.rechecked_keep)
            .map(|&i| self.statements[i].clone())
            .collect()
    }

    /// Statements that survive, in order.
    pub fn retained(&self) -> Vec<String> {
        let dropped: BTreeSet<usize> = self.unsupported.difference(&self.rechecked_keep).copied().collect();
        self.statements
            .iter()
            .enumerate()
            .filter(|(i, _)| !dropped.contains(i))
            .map(|(_, s)| s.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", content = "value", rename_all = "snake_case")]
pub enum PlanAction {
    GenerateQuery(String),
    AugmentReferences,
    InternalOnlyMode,
    ExternalOnlyMode,
    DoubleCheck(DoubleCheckResult),
    AddSuggestion(String),
}

impl PlanAction {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::GenerateQuery(_) => "generate_query",
            Self::AugmentReferences => "augment_references",
            Self::InternalOnlyMode => "internal_only_mode",
            Self::ExternalOnlyMode => "external_only_mode",
            Self::DoubleCheck(_) => "double_check",
            Self::AddSuggestion(_) => "add_suggestion",
        }
    }

    /// Compact form recorded in traces.
    pub fn describe(&self) -> String {
        match self {
            Self::GenerateQuery(q) => format!("generate_query: {q}"),
            Self::AddSuggestion(s) => format!("add_suggestion: {s}"),
            Self::DoubleCheck(r) => format!(
                "double_check: {} checked, {} unsupported, {} excluded",
                r.statements.len(),
                r.unsupported.len(),
                r.excluded().len()
            ),
            other => other.kind().to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Plan {
    pub actions: Vec<PlanAction>,
}

impl Plan {
    pub fn kinds(&self) -> Vec<&'static str> {
        self.actions.iter().map(PlanAction::kind).collect()
    }

    pub fn followup_query(&self) -> Option<&str> {
        self.actions.iter().find_map(|a| match a {
            PlanAction::GenerateQuery(q) => Some(q.as_str()),
            _ => None,
        })
    }

    pub fn suggestion(&self) -> Option<&str> {
        self.actions.iter().find_map(|a| match a {
            PlanAction::AddSuggestion(s) => Some(s.as_str()),
            _ => None,
        })
    }
}

/// What the planner looks at besides the condition.
#[derive(Debug, Clone, Copy)]
pub struct PlanContext<'a> {
    pub question: &'a str,
    pub references: &'a [Passage],
    pub answer: &'a str,
}

/// The evaluator-critic side of the loop: one chat provider in critic role,
/// the NLI judge, the prompt registry and the active error catalog.
pub struct Metacognition<'a> {
    pub prompts: &'a PromptRegistry,
    pub catalog: ErrorCatalog,
    pub chat: &'a dyn ChatProvider,
    pub nli: &'a dyn NliJudge,
    pub temperature: f64,
    pub premise_chars: usize,
    pub hypothesis_mode: HypothesisMode,
}

/// Joins references in rank order as the NLI premise.
pub fn reference_premise(references: &[Passage]) -> String {
    references.iter().map(passage_wire_text).collect::<Vec<_>>().join("\n")
}

/// Numbered reference block for prompts: `(1) Title: text`.
pub fn format_references(references: &[Passage]) -> String {
    references
        .iter()
        .enumerate()
        .map(|(i, p)| format!("({}) {}", i + 1, passage_wire_text(p)))
        .collect::<Vec<_>>()
        .join("\n")
}

impl<'a> Metacognition<'a> {
    pub fn new(prompts: &'a PromptRegistry, chat: &'a dyn ChatProvider, nli: &'a dyn NliJudge) -> Self {
        Self {
            prompts,
            catalog: prompts.catalog().clone(),
            chat,
            nli,
            temperature: 0.0,
            premise_chars: providers::DEFAULT_NLI_PREMISE_CHARS,
            hypothesis_mode: HypothesisMode::Question,
        }
    }

    fn ask(&self, id: TemplateId, slots: &[(&str, &str)]) -> Result<String, PipelineError> {
        let rendered = self.prompts.render(id, slots.iter().copied())?;
        Ok(providers::chat_complete(self.chat, &rendered.messages(), self.temperature)?)
    }

    /// Can the model answer from its own knowledge? Unparsable replies count
    /// as no.
    pub fn judge_internal(&self, question: &str, answer: &str) -> Result<Judgement, PipelineError> {
        let reply = self.ask(TemplateId::EvalInternal, &[("question", question), ("answer", answer)])?;
        Ok(match parse_verdict(&reply) {
            Some(ok) => Judgement { ok, unparsable: false },
            None => Judgement {
                ok: false,
                unparsable: true,
            },
        })
    }

    /// Do the references entail the hypothesis? Empty references short-circuit
    /// to false.
    pub fn judge_external(&self, question: &str, answer: &str, references: &[Passage]) -> Result<bool, PipelineError> {
        if references.is_empty() {
            return Ok(false);
        }
        let premise = reference_premise(references);
        let premise = truncate_premise(&premise, self.premise_chars);
        let hypothesis = match self.hypothesis_mode {
            HypothesisMode::Question => question.to_owned(),
            HypothesisMode::QuestionAnswer => format!("{question} {answer}"),
        };
        Ok(providers::nli_entails(self.nli, premise, &hypothesis)? == 1)
    }

    pub fn critic_prompt(&self, question: &str, references: &[Passage], answer: &str) -> Result<String, PipelineError> {
        let types = self.catalog.serialize();
        let refs = format_references(references);
        Ok(self
            .prompts
            .render(
                TemplateId::CriticErrors,
                [
                    ("error types", types.as_str()),
                    ("references", refs.as_str()),
                    ("question", question),
                    ("response", answer),
                ],
            )?
            .text())
    }

    pub fn critique_errors(&self, question: &str, references: &[Passage], answer: &str) -> Result<Critique, PipelineError> {
        if self.catalog.entries().is_empty() {
            return Ok(Critique::default());
        }
        let types = self.catalog.serialize();
        let refs = format_references(references);
        let reply = self.ask(
            TemplateId::CriticErrors,
            &[
                ("error types", &types),
                ("references", &refs),
                ("question", question),
                ("response", answer),
            ],
        )?;
        Ok(parse_findings(&reply, &self.catalog))
    }

    /// Returns the follow-up query and whether the fallback was used.
    pub fn generate_followup_query(
        &self,
        question: &str,
        references: &[Passage],
        answer: &str,
    ) -> Result<(String, bool), PipelineError> {
        let refs = format_references(references);
        let reply = self.ask(
            TemplateId::QueryGen,
            &[("references", &refs), ("question", question), ("answer", answer)],
        )?;
        match extract_followup_query(&reply) {
            Some(q) if q != question => Ok((q, false)),
            _ => Ok((format!("{question}{FALLBACK_QUERY_SUFFIX}"), true)),
        }
    }

    /// NLI-checks every statement; unsupported ones go back to the critic.
    pub fn double_check(&self, statements: &[String], references: &[Passage]) -> Result<DoubleCheckResult, PipelineError> {
        let premise = reference_premise(references);
        let premise = truncate_premise(&premise, self.premise_chars);
        let mut result = DoubleCheckResult {
            statements: statements.to_vec(),
            ..Default::default()
        };
        for (i, s) in statements.iter().enumerate() {
            if providers::nli_entails(self.nli, premise, s)? == 0 {
                result.unsupported.insert(i);
            }
        }
        for &i in &result.unsupported {
            let reply = self.ask(TemplateId::RecheckStatement, &[("statement", &statements[i])])?;
            if parse_verdict(&reply) == Some(true) {
                result.rechecked_keep.insert(i);
            }
        }
        Ok(result)
    }

    /// The critic's advice for the highest-priority finding, or the default
    /// suggestion. Returns whether the default had to stand in for a failure.
    pub fn make_suggestion(&self, findings: &[ErrorFinding]) -> (String, bool) {
        let Some(top) = findings.iter().min_by_key(|f| f.error_type) else {
            return (DEFAULT_SUGGESTION.to_owned(), false);
        };
        let reply = self.ask(
            TemplateId::SuggestionGen,
            &[("error type", top.error_type.label()), ("rationale", &top.rationale)],
        );
        match reply {
            Ok(text) if !text.trim().is_empty() => (text.trim().to_owned(), false),
            _ => (DEFAULT_SUGGESTION.to_owned(), true),
        }
    }

    /// Builds the repair plan for a condition. Flags describe fallbacks taken.
    pub fn plan(
        &self,
        condition: ConditionLabel,
        findings: &[ErrorFinding],
        ctx: PlanContext<'_>,
    ) -> Result<(Plan, Vec<String>), PipelineError> {
        let mut flags = Vec::new();
        let actions = match condition {
            ConditionLabel::NoKnowledge => {
                let (q, fallback) = self.generate_followup_query(ctx.question, ctx.references, ctx.answer)?;
                if fallback {
                    flags.push("followup_query_fallback".to_owned());
                }
                vec![PlanAction::GenerateQuery(q), PlanAction::AugmentReferences]
            }
            ConditionLabel::OnlyInternal => vec![PlanAction::InternalOnlyMode],
            ConditionLabel::OnlyExternal => vec![PlanAction::ExternalOnlyMode],
            ConditionLabel::Both => {
                let check = self.double_check(&split_statements(ctx.answer), ctx.references)?;
                let (suggestion, fallback) = self.make_suggestion(findings);
                if fallback {
                    flags.push("suggestion_fallback".to_owned());
                }
                vec![PlanAction::DoubleCheck(check), PlanAction::AddSuggestion(suggestion)]
            }
        };
        Ok((Plan { actions }, flags))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{
        Playbook, ProviderError, ProviderErrorKind, ProviderRole, ScriptedChat, ScriptedEmbedder, ScriptedExpert,
        ScriptedNli,
    };
    use proptest::prelude::*;

    struct Down;

    impl ChatProvider for Down {
        fn complete(&self, _: &[providers::ChatMessage], _: f64) -> Result<String, ProviderError> {
            Err(ProviderError::new(ProviderRole::Chat, ProviderErrorKind::Transport, "down"))
        }
    }

    fn passages(texts: &[&str]) -> Vec<Passage> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Passage::from_text(format!("p{i}"), format!("T{i}"), t))
            .collect()
    }

    fn unit(s: f64) -> Vec<f64> {
        vec![s, (1.0 - s * s).sqrt()]
    }

    #[test]
    fn monitor_uses_strict_threshold() {
        let expert = ScriptedExpert::new(Playbook::with_default("gold"));
        for (sim, k, action) in [
            (0.06, 0.4, MonitorAction::ActivateEvaluating),
            (0.88, 0.4, MonitorAction::Pass),
            (0.4, 0.4, MonitorAction::Pass),
        ] {
            let embedder = ScriptedEmbedder::from_table([("gold", vec![1.0, 0.0]), ("ans", unit(sim))]).unwrap();
            let out = monitor_decide("ans", "q", &[], &expert, &embedder, k).unwrap();
            assert!((out.similarity - sim).abs() < 1e-12);
            assert_eq!(out.action, action, "sim {sim} k {k}");
            assert_eq!(out.expert_answer, "gold");
        }
        let hashing = ScriptedEmbedder::hashing(16);
        let out = monitor_decide("gold", "q", &[], &expert, &hashing, 1.0).unwrap();
        assert!((out.similarity - 1.0).abs() < 1e-12);
        assert_eq!(out.action, MonitorAction::Pass);
    }

    #[test]
    fn zero_norm_forces_activation() {
        let expert = ScriptedExpert::new(Playbook::with_default("gold"));
        let embedder = ScriptedEmbedder::from_table([("gold", vec![1.0, 0.0]), ("ans", vec![0.0, 0.0])]).unwrap();
        let out = monitor_decide("ans", "q", &[], &expert, &embedder, 0.0).unwrap();
        assert_eq!(out.similarity, 0.0);
        assert_eq!(out.action, MonitorAction::Pass);
        let out = monitor_decide("ans", "q", &[], &expert, &embedder, 0.1).unwrap();
        assert_eq!(out.action, MonitorAction::ActivateEvaluating);
        assert!(monitor_decide("ans", "q", &[], &expert, &embedder, 1.5).is_err());
    }

    #[test]
    fn verdict_parsing() {
        assert_eq!(parse_verdict("Yes, I can answer this reliably."), Some(true));
        assert_eq!(parse_verdict("No."), Some(false));
        assert_eq!(parse_verdict("  YES"), Some(true));
        assert_eq!(parse_verdict("maybe, unclear"), None);
        assert_eq!(parse_verdict("Nothing to add"), None);
        assert_eq!(parse_verdict(""), None);
    }

    fn meta<'a>(prompts: &'a PromptRegistry, chat: &'a dyn ChatProvider, nli: &'a dyn NliJudge) -> Metacognition<'a> {
        Metacognition::new(prompts, chat, nli)
    }

    #[test]
    fn internal_judge() {
        let prompts = PromptRegistry::builtin();
        let nli = ScriptedNli::new(Playbook::with_default("0"));
        for (reply, ok, unparsable) in [
            ("Yes, I can answer this reliably.", true, false),
            ("No.", false, false),
            ("maybe, unclear", false, true),
        ] {
            let chat = ScriptedChat::new(Playbook::with_default(reply));
            let j = meta(&prompts, &chat, &nli).judge_internal("q", "a").unwrap();
            assert_eq!((j.ok, j.unparsable), (ok, unparsable));
        }
    }

    #[test]
    fn external_judge() {
        let prompts = PromptRegistry::builtin();
        let chat = ScriptedChat::new(Playbook::with_default(""));
        let log = providers::CallLog::new();
        let nli = ScriptedNli::new(Playbook::with_default("0").rule("hypothesis: Who?", "1")).with_log(log.clone());
        let m = meta(&prompts, &chat, &nli);
        assert!(m.judge_external("Who?", "a", &passages(&["doc"])).unwrap());
        assert!(!m.judge_external("What?", "a", &passages(&["doc"])).unwrap());
        log.clear();
        assert!(!m.judge_external("Who?", "a", &[]).unwrap());
        assert_eq!(log.count(ProviderRole::Nli), 0);
    }

    #[test]
    fn external_judge_truncates_and_switches_hypothesis() {
        let prompts = PromptRegistry::builtin();
        let chat = ScriptedChat::new(Playbook::with_default(""));
        let log = providers::CallLog::new();
        let nli = ScriptedNli::new(Playbook::with_default("0")).with_log(log.clone());
        let mut m = meta(&prompts, &chat, &nli);
        m.premise_chars = 10;
        m.hypothesis_mode = HypothesisMode::QuestionAnswer;
        m.judge_external("Q?", "A", &passages(&["a very long reference text"])).unwrap();
        assert_eq!(log.records()[0].input, "premise: T0: a very\nhypothesis: Q? A");
    }

    #[test]
    fn condition_truth_table() {
        use ConditionLabel::*;
        for (i, e, label) in [(false, false, NoKnowledge), (false, true, OnlyExternal), (true, false, OnlyInternal), (true, true, Both)] {
            let c = classify_condition(i, e);
            assert_eq!((c.internal_ok, c.external_ok, c.label), (i, e, label));
        }
    }

    #[test]
    fn findings_parsing() {
        let catalog = ErrorCatalog::builtin();
        let c = parse_findings("Answer Redundance: just answer the film name", &catalog);
        assert_eq!(
            c.findings,
            [ErrorFinding {
                error_type: ErrorType::AnswerRedundance,
                rationale: "just answer the film name".into()
            }]
        );
        assert!(c.warnings.is_empty());
        let c = parse_findings("Answer redundance, just answer the film name", &catalog);
        assert_eq!(c.findings.len(), 1);

        let c = parse_findings("No errors found.", &catalog);
        assert!(c.findings.is_empty() && c.warnings.is_empty());

        let c = parse_findings("Temporal Confusion: the dates are mixed up", &catalog);
        assert!(c.findings.is_empty());
        assert_eq!(c.warnings.len(), 1);

        let c = parse_findings(
            "1. Incomplete Reasoning: only one director checked\n- Ambiguity Understanding - wrong film\nIncomplete Reasoning: dup",
            &catalog,
        );
        assert_eq!(
            c.findings.iter().map(|f| f.error_type).collect::<Vec<_>>(),
            [ErrorType::IncompleteReasoning, ErrorType::AmbiguityUnderstanding]
        );

        let ablated = catalog.without(&[ErrorType::AnswerRedundance]);
        let c = parse_findings("Answer Redundance: x", &ablated);
        assert!(c.findings.is_empty());
        assert_eq!(c.warnings.len(), 1);
    }

    #[test]
    fn critique_with_scripted_critic() {
        let prompts = PromptRegistry::builtin();
        let nli = ScriptedNli::new(Playbook::with_default("0"));
        let chat = ScriptedChat::new(
            Playbook::with_default("No errors found.").rule("Response: verbose", "Answer Redundance: just answer the film name"),
        );
        let m = meta(&prompts, &chat, &nli);
        let c = m.critique_errors("q", &passages(&["r"]), "verbose answer").unwrap();
        assert_eq!(c.findings[0].error_type, ErrorType::AnswerRedundance);
        assert!(m.critique_errors("q", &passages(&["r"]), "short").unwrap().findings.is_empty());
    }

    #[test]
    fn followup_query_extraction_and_fallbacks() {
        let q = "Which film has the director who died later?";
        assert_eq!(
            extract_followup_query(
                "To answer this question, I further need to search Death information of S. Roy Luby and June Kovach"
            )
            .as_deref(),
            Some("Death information of S. Roy Luby and June Kovach")
        );
        assert_eq!(extract_followup_query("I FURTHER NEED TO SEARCH: \"x y\".").as_deref(), Some("x y"));
        assert_eq!(extract_followup_query("nothing here"), None);

        let prompts = PromptRegistry::builtin();
        let nli = ScriptedNli::new(Playbook::with_default("0"));
        let chat = ScriptedChat::new(Playbook::with_default("I don't know"));
        let (got, fallback) = meta(&prompts, &chat, &nli).generate_followup_query(q, &[], "a").unwrap();
        assert!(fallback);
        assert_eq!(got, format!("{q} background facts"));

        let echo = ScriptedChat::new(Playbook::with_default(format!("To answer this question, I further need to search {q}")));
        let (got, fallback) = meta(&prompts, &echo, &nli).generate_followup_query(q, &[], "a").unwrap();
        assert!(fallback);
        assert_ne!(got, q);
    }

    #[test]
    fn statement_splitting() {
        assert_eq!(
            split_statements("A was born in 1904. B directed the film."),
            ["A was born in 1904.", "B directed the film."]
        );
        assert_eq!(split_statements("Boot Hill Bandits"), ["Boot Hill Bandits"]);
        assert!(split_statements("").is_empty());
        assert_eq!(split_statements("Version 1.5 works! Really?  Yes"), ["Version 1.5 works!", "Really?", "Yes"]);
    }

    #[test]
    fn double_check_composition() {
        let prompts = PromptRegistry::builtin();
        let statements: Vec<String> = ["s0 fine.", "s1 shaky.", "s2 fine.", "s3 shaky."].map(String::from).to_vec();
        let nli = ScriptedNli::new(Playbook::with_default("1").rule("hypothesis: s1", "0").rule("hypothesis: s3", "0"));
        let log = providers::CallLog::new();
        let chat = ScriptedChat::new(Playbook::with_default("No.").rule("s3 shaky.", "Yes, confident.")).with_log(log.clone());
        let m = meta(&prompts, &chat, &nli);
        let r = m.double_check(&statements, &passages(&["ref"])).unwrap();
        assert_eq!(r.unsupported, BTreeSet::from([1, 3]));
        assert_eq!(r.rechecked_keep, BTreeSet::from([3]));
        assert_eq!(r.excluded(), ["s1 shaky."]);
        assert_eq!(r.retained(), ["s0 fine.", "s2 fine.", "s3 shaky."]);
        assert_eq!(log.count(ProviderRole::Chat), 2);

        log.clear();
        let all_ok = ScriptedNli::new(Playbook::with_default("1"));
        let m = meta(&prompts, &chat, &all_ok);
        let r = m.double_check(&statements, &passages(&["ref"])).unwrap();
        assert!(r.unsupported.is_empty());
        assert_eq!(log.count(ProviderRole::Chat), 0);
        assert_eq!(m.double_check(&[], &passages(&["ref"])).unwrap(), DoubleCheckResult::default());
    }

    #[test]
    fn suggestions() {
        let prompts = PromptRegistry::builtin();
        let nli = ScriptedNli::new(Playbook::with_default("0"));
        let chat = ScriptedChat::new(
            Playbook::with_default("generic").rule("occurrence of the Answer Redundance", "Rely more on references."),
        );
        let m = meta(&prompts, &chat, &nli);
        assert_eq!(m.make_suggestion(&[]), (DEFAULT_SUGGESTION.to_owned(), false));
        let redundance = ErrorFinding {
            error_type: ErrorType::AnswerRedundance,
            rationale: "just answer the film name".into(),
        };
        assert_eq!(m.make_suggestion(std::slice::from_ref(&redundance)), ("Rely more on references.".to_owned(), false));
        // incomplete reasoning outranks redundance
        let incomplete = ErrorFinding {
            error_type: ErrorType::IncompleteReasoning,
            rationale: String::new(),
        };
        assert_eq!(m.make_suggestion(&[redundance.clone(), incomplete]).0, "generic");

        let down = meta(&prompts, &Down, &nli);
        assert_eq!(down.make_suggestion(&[redundance]), (DEFAULT_SUGGESTION.to_owned(), true));
    }

    #[test]
    fn plan_mapping() {
        let prompts = PromptRegistry::builtin();
        let nli = ScriptedNli::new(Playbook::with_default("1"));
        let chat = ScriptedChat::new(Playbook::with_default("To answer this question, I further need to search X facts"));
        let m = meta(&prompts, &chat, &nli);
        let refs = passages(&["r"]);
        let ctx = PlanContext {
            question: "Q",
            references: &refs,
            answer: "A.",
        };
        let (p, _) = m.plan(ConditionLabel::NoKnowledge, &[], ctx).unwrap();
        assert_eq!(p.kinds(), ["generate_query", "augment_references"]);
        assert_eq!(p.followup_query(), Some("X facts"));
        assert_eq!(m.plan(ConditionLabel::OnlyInternal, &[], ctx).unwrap().0.kinds(), ["internal_only_mode"]);
        assert_eq!(m.plan(ConditionLabel::OnlyExternal, &[], ctx).unwrap().0.kinds(), ["external_only_mode"]);
        let (p, _) = m.plan(ConditionLabel::Both, &[], ctx).unwrap();
        assert_eq!(p.kinds(), ["double_check", "add_suggestion"]);
        assert_eq!(p.suggestion(), Some(DEFAULT_SUGGESTION));
    }

    proptest! {
        #[test]
        fn strict_gate(sim in -1.0f64..=1.0, k in 0.0f64..=1.0) {
            prop_assert_eq!(monitor_action(sim, k) == MonitorAction::ActivateEvaluating, sim < k);
            prop_assert_eq!(monitor_action(k, k), MonitorAction::Pass);
        }

        #[test]
        fn double_check_never_flags_supported(verdicts in prop::collection::vec(any::<bool>(), 0..10), keep in prop::collection::vec(any::<bool>(), 10)) {
            let statements: Vec<String> = (0..verdicts.len()).map(|i| format!("stmt{i:02} text.")).collect();
            let mut nli_book = Playbook::with_default("1");
            let mut chat_book = Playbook::with_default("No.");
            for (i, ok) in verdicts.iter().enumerate() {
                if !ok {
                    nli_book = nli_book.rule(format!("hypothesis: stmt{i:02}"), "0");
                }
                if keep[i] {
                    chat_book = chat_book.rule(format!("stmt{i:02} text."), "Yes");
                }
            }
            let prompts = PromptRegistry::builtin();
            let nli = ScriptedNli::new(nli_book);
            let chat = ScriptedChat::new(chat_book);
            let r = meta(&prompts, &chat, &nli).double_check(&statements, &passages(&["ref"])).unwrap();
            for (i, ok) in verdicts.iter().enumerate() {
                prop_assert_eq!(r.unsupported.contains(&i), !ok);
                prop_assert_eq!(r.rechecked_keep.contains(&i), !ok && keep[i]);
            }
        }
    }
}
