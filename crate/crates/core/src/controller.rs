//! The per-question loop: retrieve, answer, monitor, evaluate, plan, revise.
//!
//! Each iteration produces one [`TraceRound`]. A question ends when the
//! monitor passes, when the iteration cap is reached, or when a provider
//! fails hard; in the last case the rounds completed so far are kept in the
//! [`FinalResult`] together with the error message.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{Ablation, RunConfig, RunMode};
use crate::corpus::{Corpus, Passage};
use crate::error::{EvalError, PipelineError, RetrievalError};
use crate::metacognition::{
    classify_condition, format_references, monitor_decide, ConditionLabel, Critique, ErrorFinding,
    Metacognition, MonitorAction, Plan, PlanAction, PlanContext,
};
use crate::prompts::{PromptRegistry, Rendered, TemplateId};
use crate::providers::{self, ChatProvider, Providers};
use crate::retrieval::{RetrievedSet, Retriever};

pub const COT_INSTRUCTION: &str = "Please think step by step.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMode {
    #[default]
    WithRefs,
    InternalOnly,
    ExternalOnly,
}

impl AnswerMode {
    pub fn template(self) -> TemplateId {
        match self {
            AnswerMode::WithRefs => TemplateId::QaWithRefs,
            AnswerMode::InternalOnly => TemplateId::QaInternalOnly,
            AnswerMode::ExternalOnly => TemplateId::QaExternalOnly,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineState {
    pub question: String,
    pub references: RetrievedSet,
    pub answer: String,
    pub mode: AnswerMode,
    pub suggestions: Vec<String>,
    pub excluded_statements: Vec<String>,
    /// Statements of the previous answer that survived a double check.
    pub carried_statements: Vec<String>,
    pub round: usize,
}

impl PipelineState {
    pub fn new(question: impl Into<String>) -> Self {
        let question = question.into();
        Self {
            references: RetrievedSet::empty(question.clone()),
            question,
            answer: String::new(),
            mode: AnswerMode::WithRefs,
            suggestions: Vec::new(),
            excluded_statements: Vec::new(),
            carried_statements: Vec::new(),
            round: 1,
        }
    }
}

/// Looks up the passages of a ranked set, in rank order.
pub fn resolve_references(set: &RetrievedSet, corpus: &Corpus) -> Result<Vec<Passage>, RetrievalError> {
    set.entries
        .iter()
        .map(|e| {
            corpus
                .get(&e.passage_id)
                .cloned()
                .ok_or_else(|| RetrievalError::PassageNotFound(e.passage_id.clone()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CognizeOptions {
    pub demonstrations: bool,
    pub chain_of_thought: bool,
    pub temperature: f64,
}

impl Default for CognizeOptions {
    fn default() -> Self {
        Self {
            demonstrations: true,
            chain_of_thought: false,
            temperature: 0.0,
        }
    }
}

/// Builds the QA prompt for the current state. Suggestions become
/// instruction lines in the system message; statements carried over from a
/// double check are listed there too unless excluded.
pub fn build_qa_prompt(
    state: &PipelineState,
    references: &[Passage],
    prompts: &PromptRegistry,
    options: CognizeOptions,
) -> Result<Rendered, PipelineError> {
    let template = state.mode.template();
    let refs = if references.is_empty() {
        "(none)".to_owned()
    } else {
        format_references(references)
    };
    let mut slots = vec![("question", state.question.as_str())];
    if template != TemplateId::QaInternalOnly {
        slots.push(("retrieved documents", refs.as_str()));
    }
    let rendered = prompts.render(template, slots)?;

    let mut system = rendered.system;
    if options.chain_of_thought {
        system.push(' ');
        system.push_str(COT_INSTRUCTION);
    }
    if !state.suggestions.is_empty() {
        system.push_str("\nInstructions:");
        for s in &state.suggestions {
            system.push_str("\n- ");
            system.push_str(s);
        }
    }
    let carried: Vec<&String> = state
        .carried_statements
        .iter()
        .filter(|s| !state.excluded_statements.contains(s))
        .collect();
    if !carried.is_empty() {
        system.push_str("\nStatements verified so far:");
        for s in carried {
            system.push_str("\n- ");
            system.push_str(s);
        }
    }

    let mut user = String::new();
    let demos = prompts.demonstrations().trim();
    if options.demonstrations && !demos.is_empty() {
        user.push_str(demos);
        user.push_str("\n\n");
    }
    user.push_str(&rendered.user);
    Ok(Rendered { system, user })
}

/// Produces a new answer for the state.
pub fn cognize(
    state: &PipelineState,
    references: &[Passage],
    chat: &dyn ChatProvider,
    prompts: &PromptRegistry,
    options: CognizeOptions,
) -> Result<String, PipelineError> {
    let prompt = build_qa_prompt(state, references, prompts, options)?;
    let answer = providers::chat_complete(chat, &prompt.messages(), options.temperature)?;
    Ok(answer.trim().to_owned())
}

/// Applies plan actions in order. Follow-up retrieval appends new passages
/// up to `max_references`.
pub fn apply_plan(
    mut state: PipelineState,
    plan: &Plan,
    retriever: &dyn Retriever,
    top_k: usize,
    max_references: usize,
) -> Result<PipelineState, PipelineError> {
    for action in &plan.actions {
        match action {
            PlanAction::GenerateQuery(q) => {
                let extra = retriever.retrieve(q, top_k)?;
                state.references.merge_append(&extra, max_references);
            }
            PlanAction::AugmentReferences => {
                if state.mode == AnswerMode::InternalOnly {
                    state.mode = AnswerMode::WithRefs;
                }
            }
            PlanAction::InternalOnlyMode => state.mode = AnswerMode::InternalOnly,
            PlanAction::ExternalOnlyMode => state.mode = AnswerMode::ExternalOnly,
            PlanAction::DoubleCheck(check) => {
                for s in check.excluded() {
                    if !state.excluded_statements.contains(&s) {
                        state.excluded_statements.push(s);
                    }
                }
                state.carried_statements = check.retained();
            }
            PlanAction::AddSuggestion(s) => {
                if !state.suggestions.contains(s) {
                    state.suggestions.push(s.clone());
                }
            }
        }
    }
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MonitorPass,
    MaxIterations,
    /// Reference modes answer once without monitoring.
    SinglePass,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceRound {
    pub round: usize,
    pub retrieved_ids: Vec<String>,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monitor_similarity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monitor_action: Option<MonitorAction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub internal_ok: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_ok: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<ConditionLabel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub findings: Vec<ErrorFinding>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub plan_actions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub followup_query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggestion: Option<String>,
    pub elapsed_ms: u64,
    /// Parse fallbacks and warnings raised during the round.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl TraceRound {
    pub fn evaluated(&self) -> bool {
        self.monitor_action == Some(MonitorAction::ActivateEvaluating)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalResult {
    pub question_id: String,
    pub final_answer: String,
    pub rounds_used: usize,
    pub terminated_by: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub trace: Vec<TraceRound>,
}

impl FinalResult {
    fn finish(question_id: &str, trace: Vec<TraceRound>, terminated_by: Termination, error: Option<String>) -> Self {
        Self {
            question_id: question_id.to_owned(),
            final_answer: trace.last().map(|r| r.answer.clone()).unwrap_or_default(),
            rounds_used: trace.len(),
            terminated_by,
            error,
            trace,
        }
    }

    /// The condition of the last evaluated round, if any round was evaluated.
    pub fn last_condition(&self) -> Option<ConditionLabel> {
        self.trace.iter().rev().find_map(|r| r.condition)
    }

    pub fn activated(&self) -> bool {
        self.trace.first().is_some_and(TraceRound::evaluated)
    }

    /// Copy with every `elapsed_ms` zeroed, for comparisons.
    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        for r in &mut out.trace {
            r.elapsed_ms = 0;
        }
        out
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace records serialize")
    }
}

fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis().try_into().unwrap_or(u64::MAX)
}

/// Runs one question under `config.mode`. Provider or retrieval failures end
/// the question with [`Termination::Failed`]; only an invalid config is an
/// `Err`.
pub fn run_pipeline(
    question_id: &str,
    question: &str,
    retriever: &dyn Retriever,
    providers: &Providers,
    prompts: &PromptRegistry,
    config: &RunConfig,
) -> Result<FinalResult, PipelineError> {
    if config.max_iterations == 0 {
        return Err(PipelineError::Config("max_iterations must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&config.monitor_threshold) {
        return Err(PipelineError::Config(format!(
            "monitor threshold {} outside [0, 1]",
            config.monitor_threshold
        )));
    }
    if config.top_k == 0 {
        return Err(PipelineError::Config("top_k must be at least 1".into()));
    }
    let mut trace = Vec::new();
    let outcome = match config.mode {
        RunMode::Metarag => metarag_loop(question, retriever, providers, prompts, config, &mut trace),
        mode => single_pass(question, mode, retriever, providers, prompts, config, &mut trace),
    };
    Ok(match outcome {
        Ok(t) => FinalResult::finish(question_id, trace, t, None),
        Err(e) => FinalResult::finish(question_id, trace, Termination::Failed, Some(e.to_string())),
    })
}

fn single_pass(
    question: &str,
    mode: RunMode,
    retriever: &dyn Retriever,
    providers: &Providers,
    prompts: &PromptRegistry,
    config: &RunConfig,
    trace: &mut Vec<TraceRound>,
) -> Result<Termination, PipelineError> {
    let start = Instant::now();
    let mut state = PipelineState::new(question);
    let options = CognizeOptions {
        demonstrations: config.demonstrations,
        chain_of_thought: mode == RunMode::CloseBookCot,
        temperature: config.temperature,
    };
    let references = if mode == RunMode::StandardRag {
        state.references = retriever.retrieve(question, config.top_k)?;
        resolve_references(&state.references, retriever.corpus())?
    } else {
        state.mode = AnswerMode::InternalOnly;
        Vec::new()
    };
    let answer = cognize(&state, &references, providers.chat.as_ref(), prompts, options)?;
    trace.push(TraceRound {
        round: 1,
        retrieved_ids: state.references.ids(),
        answer,
        elapsed_ms: elapsed_ms(start),
        ..TraceRound::default()
    });
    Ok(Termination::SinglePass)
}

fn metarag_loop(
    question: &str,
    retriever: &dyn Retriever,
    providers: &Providers,
    prompts: &PromptRegistry,
    config: &RunConfig,
    trace: &mut Vec<TraceRound>,
) -> Result<Termination, PipelineError> {
    let mut meta = Metacognition::new(prompts, providers.chat.as_ref(), providers.nli.as_ref());
    meta.catalog = prompts.catalog().without(&config.removed_error_types());
    meta.temperature = config.temperature;
    meta.premise_chars = config.premise_chars;
    meta.hypothesis_mode = config.hypothesis_mode;
    let options = CognizeOptions {
        demonstrations: config.demonstrations,
        chain_of_thought: false,
        temperature: config.temperature,
    };

    let mut state = PipelineState::new(question);
    state.references = retriever.retrieve(question, config.top_k)?;
    for round in 1..=config.max_iterations {
        let start = Instant::now();
        state.round = round;
        let references = resolve_references(&state.references, retriever.corpus())?;
        state.answer = cognize(&state, &references, providers.chat.as_ref(), prompts, options)?;
        let monitor = monitor_decide(
            &state.answer,
            question,
            &references,
            providers.expert.as_ref(),
            providers.embedder.as_ref(),
            config.monitor_threshold,
        )?;
        let mut record = TraceRound {
            round,
            retrieved_ids: state.references.ids(),
            answer: state.answer.clone(),
            monitor_similarity: Some(monitor.similarity),
            monitor_action: Some(monitor.action),
            ..TraceRound::default()
        };
        if monitor.action == MonitorAction::Pass {
            record.elapsed_ms = elapsed_ms(start);
            trace.push(record);
            return Ok(Termination::MonitorPass);
        }

        let internal_ok = if config.has(Ablation::NoInternalJudge) {
            false
        } else {
            let j = meta.judge_internal(question, &state.answer)?;
            if j.unparsable {
                record.flags.push("internal_verdict_unparsable".into());
            }
            j.ok
        };
        let external_ok = !config.has(Ablation::NoExternalJudge)
            && meta.judge_external(question, &state.answer, &references)?;
        let condition = classify_condition(internal_ok, external_ok);
        let critique = if condition.label == ConditionLabel::Both {
            meta.critique_errors(question, &references, &state.answer)?
        } else {
            Critique::default()
        };
        record.flags.extend(critique.warnings);
        let ctx = PlanContext {
            question,
            references: &references,
            answer: &state.answer,
        };
        let (plan, flags) = meta.plan(condition.label, &critique.findings, ctx)?;
        record.flags.extend(flags);
        record.internal_ok = Some(internal_ok);
        record.external_ok = Some(external_ok);
        record.condition = Some(condition.label);
        record.findings = critique.findings;
        record.plan_actions = plan.actions.iter().map(PlanAction::describe).collect();
        record.followup_query = plan.followup_query().map(str::to_owned);
        record.suggestion = plan.suggestion().map(str::to_owned);

        if round < config.max_iterations {
            state = apply_plan(state, &plan, retriever, config.top_k, config.max_references)?;
        }
        record.elapsed_ms = elapsed_ms(start);
        trace.push(record);
    }
    Ok(Termination::MaxIterations)
}

/// Appends one JSON line per [`FinalResult`]. Safe to share across worker
/// threads; each record is written and flushed under the lock.
pub struct TraceSink {
    path: PathBuf,
    file: Mutex<File>,
}

impl TraceSink {
    /// Creates or truncates the trace file.
    pub fn create(path: &Path) -> Result<Self, EvalError> {
        let io = |source| EvalError::Io {
            path: path.to_owned(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(io)?;
        Ok(Self {
            path: path.to_owned(),
            file: Mutex::new(file),
        })
    }

    pub fn append(&self, result: &FinalResult) -> Result<(), EvalError> {
        let mut line = result.to_json_line();
        line.push('\n');
        let mut file = self.file.lock().unwrap_or_else(|p| p.into_inner());
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|source| EvalError::Io {
                path: self.path.clone(),
                source,
            })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

pub fn read_traces(path: &Path) -> Result<Vec<FinalResult>, EvalError> {
    let file = File::open(path).map_err(|source| EvalError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| EvalError::Io {
            path: path.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| EvalError::Parse {
            path: path.to_owned(),
            reason: format!("line {}: {e}", i + 1),
        })?;
        out.push(record);
    }
    Ok(out)
}
