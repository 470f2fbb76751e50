//! Wiring a config to providers, retriever and dataset, and running it.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use super::dataset::{load_dataset, sample, QAInstance};
use super::report::{evaluate_run, MetricsReport};
use crate::config::{Ablation, ProviderKind, RetrieverMode, RunConfig};
use crate::controller::{run_pipeline, FinalResult, TraceSink};
use crate::corpus::Corpus;
use crate::error::EvalError;
use crate::prompts::PromptRegistry;
use crate::providers::http::{OpenAiChat, ShimClient};
use crate::providers::{Playbook, Providers, ScriptedChat, ScriptedEmbedder, ScriptedExpert, ScriptedNli};
use crate::retrieval::{Bm25Index, Bm25Params, Bm25Retriever, HybridRetriever, Retriever};

fn required<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, EvalError> {
    path.as_deref()
        .ok_or_else(|| EvalError::InvalidConfig(format!("`{key}` is required with providers = scripted")))
}

fn playbook(path: &Path) -> Result<Playbook, EvalError> {
    Playbook::load(path).map_err(EvalError::InvalidConfig)
}

/// Scripted providers read their playbooks from the config paths; HTTP
/// providers take the chat key from the environment.
pub fn build_providers(config: &RunConfig) -> Result<Providers, EvalError> {
    match config.providers {
        ProviderKind::Scripted => {
            let embedder = match &config.embed_table {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
                        path: path.clone(),
                        source,
                    })?;
                    ScriptedEmbedder::parse_table(&text)
                        .map_err(|e| EvalError::InvalidConfig(format!("{}: {e}", path.display())))?
                }
                None => ScriptedEmbedder::hashing(config.embed_dim),
            };
            Ok(Providers {
                chat: Arc::new(ScriptedChat::new(playbook(required(&config.chat_playbook, "chat_playbook")?)?)),
                expert: Arc::new(ScriptedExpert::new(playbook(required(
                    &config.expert_playbook,
                    "expert_playbook",
                )?)?)),
                embedder: Arc::new(embedder),
                nli: Arc::new(ScriptedNli::new(playbook(required(&config.nli_playbook, "nli_playbook")?)?)),
            })
        }
        ProviderKind::Http => {
            let shim = Arc::new(ShimClient::new(&config.shim_endpoint));
            Ok(Providers {
                chat: Arc::new(OpenAiChat::from_env(&config.chat_endpoint, &config.chat_model)),
                expert: shim.clone(),
                embedder: shim.clone(),
                nli: shim,
            })
        }
    }
}

pub fn build_prompts(config: &RunConfig) -> Result<PromptRegistry, EvalError> {
    Ok(match &config.prompts_dir {
        Some(dir) => PromptRegistry::load_dir(dir)?,
        None => PromptRegistry::builtin(),
    })
}

/// BM25 index from the cache when it matches the corpus, rebuilt (and
/// written back) otherwise.
pub fn build_index(corpus: &Corpus, config: &RunConfig) -> Result<Bm25Index, EvalError> {
    if let Some(cache) = &config.index_cache {
        if cache.exists() {
            if let Ok(index) = Bm25Index::load_cache(corpus, cache) {
                if index.index_titles == config.index_titles {
                    return Ok(index);
                }
            }
        }
        let index = Bm25Index::build(corpus, Bm25Params::default(), config.index_titles);
        index.save_cache(corpus, cache)?;
        return Ok(index);
    }
    Ok(Bm25Index::build(corpus, Bm25Params::default(), config.index_titles))
}

pub fn build_retriever(
    corpus: Arc<Corpus>,
    config: &RunConfig,
    providers: &Providers,
) -> Result<Box<dyn Retriever>, EvalError> {
    let index = build_index(&corpus, config)?;
    let lexical = Bm25Retriever::new(corpus, index);
    Ok(match config.retriever_mode {
        RetrieverMode::Bm25 => Box::new(lexical),
        RetrieverMode::Hybrid => Box::new(HybridRetriever::new(
            lexical,
            providers.embedder.clone(),
            config.top_k,
            config.rrf_k,
        )),
    })
}

/// Everything a run needs besides the config.
pub struct Workspace {
    pub retriever: Box<dyn Retriever>,
    pub providers: Providers,
    pub prompts: PromptRegistry,
    pub instances: Vec<QAInstance>,
    pub skipped: usize,
}

impl Workspace {
    /// Loads corpus, dataset, prompts and providers named by the config and
    /// samples `sample_n` questions with `seed`.
    pub fn load(config: &RunConfig) -> Result<Self, EvalError> {
        let corpus_path = config
            .corpus
            .as_deref()
            .ok_or_else(|| EvalError::InvalidConfig("`corpus` is required".into()))?;
        let dataset_path = config
            .dataset
            .as_deref()
            .ok_or_else(|| EvalError::InvalidConfig("`dataset` is required".into()))?;
        let corpus = Arc::new(Corpus::load(corpus_path)?);
        let providers = build_providers(config)?;
        let retriever = build_retriever(corpus, config, &providers)?;
        let prompts = build_prompts(config)?;
        let dataset = load_dataset(dataset_path, config.dataset_format)?;
        Ok(Self {
            retriever,
            providers,
            prompts,
            instances: sample(&dataset.instances, config.sample_n, config.seed),
            skipped: dataset.skipped,
        })
    }
}

/// Runs every instance with up to `config.workers` threads. Results come
/// back in instance order whatever the completion order.
pub fn run_questions(
    instances: &[QAInstance],
    retriever: &dyn Retriever,
    providers: &Providers,
    prompts: &PromptRegistry,
    config: &RunConfig,
) -> Result<Vec<FinalResult>, EvalError> {
    config.validate()?;
    let slots: Vec<Mutex<Option<FinalResult>>> = instances.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let first_error = Mutex::new(None);
    let workers = config.workers.min(instances.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(q) = instances.get(i) else { break };
                match run_pipeline(&q.id, &q.question, retriever, providers, prompts, config) {
                    Ok(r) => *slots[i].lock().unwrap() = Some(r),
                    Err(e) => {
                        first_error.lock().unwrap().get_or_insert(e);
                        break;
                    }
                }
            });
        }
    });
    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e.into());
    }
    Ok(slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("every slot filled"))
        .collect())
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: MetricsReport,
    pub results: Vec<FinalResult>,
}

pub fn run_label(config: &RunConfig) -> String {
    let mut label = config.mode.to_string();
    for a in &config.ablations {
        label.push_str(" w/o ");
        label.push_str(a.as_str().trim_start_matches("no_"));
    }
    label
}

/// Runs, writes traces to `config.trace_path` in instance order, and scores.
pub fn run_experiment(
    config: &RunConfig,
    label: &str,
    instances: &[QAInstance],
    retriever: &dyn Retriever,
    providers: &Providers,
    prompts: &PromptRegistry,
) -> Result<Outcome, EvalError> {
    let results = run_questions(instances, retriever, providers, prompts, config)?;
    if let Some(path) = &config.trace_path {
        let sink = TraceSink::create(path)?;
        for r in &results {
            sink.append(r)?;
        }
    }
    let report = evaluate_run(
        label,
        results.iter().zip(instances.iter().map(|q| q.gold_answer.as_str())),
    )?;
    Ok(Outcome { report, results })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Threshold,
    Iterations,
}

impl std::str::FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "threshold" => Ok(Self::Threshold),
            "iterations" => Ok(Self::Iterations),
            other => Err(format!("unknown sweep parameter `{other}` (expected threshold or iterations)")),
        }
    }
}

/// One config per sweep point: k in 0.2..=0.8 by 0.1, or 1..=6 iterations.
pub fn sweep_points(base: &RunConfig, param: SweepParam) -> Vec<(String, RunConfig)> {
    let with_trace = |c: &mut RunConfig, suffix: &str| {
        if let Some(p) = &base.trace_path {
            c.trace_path = Some(suffixed(p, suffix));
        }
    };
    match param {
        SweepParam::Threshold => (2..=8)
            .map(|i| {
                let k = f64::from(i) / 10.0;
                let mut c = base.clone();
                c.monitor_threshold = k;
                let tag = format!("k={k:.1}");
                with_trace(&mut c, &format!("k{k:.1}"));
                (tag, c)
            })
            .collect(),
        SweepParam::Iterations => (1..=6)
            .map(|n| {
                let mut c = base.clone();
                c.max_iterations = n;
                with_trace(&mut c, &format!("iter{n}"));
                (format!("iterations={n}"), c)
            })
            .collect(),
    }
}

/// The baseline plus one config per ablation flag.
pub fn ablation_points(base: &RunConfig, flags: &[Ablation]) -> Vec<(String, RunConfig)> {
    let mut out = vec![(run_label(base), base.clone())];
    for &flag in flags {
        let mut c = base.clone();
        c.ablations.insert(flag);
        if let Some(p) = &base.trace_path {
            c.trace_path = Some(suffixed(p, flag.as_str()));
        }
        out.push((run_label(&c), c));
    }
    out
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{suffix}"),
    };
    path.with_file_name(name)
}
