use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use metarag::config::{Ablation, DatasetFormat, RunConfig};
use metarag::controller::read_traces;
use metarag::corpus::{build_corpus, read_documents, Corpus, DEFAULT_CHUNK_SIZE};
use metarag::eval::experiment::{ablation_points, run_experiment, run_label, sweep_points};
use metarag::eval::report::{evaluate_run, render_conditions, render_table, MetricsReport};
use metarag::eval::{load_dataset, SweepParam, Workspace};
use metarag::retrieval::{Bm25Index, Bm25Params};

/// Metacognitive retrieval-augmented QA: build corpora, run experiments,
/// score traces.
#[derive(Parser)]
#[command(name = "metarag", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Chunk a documents file into a passage corpus.
    Ingest {
        /// Line-delimited {"id","title","text"} documents.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE)]
        chunk_size: usize,
    },
    /// Build the BM25 index cache for a corpus.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Leave passage titles out of the index.
        #[arg(long)]
        no_titles: bool,
    },
    /// Run one configuration and report.
    Run(RunArgs),
    /// Run the configuration at each point of a threshold or iteration sweep.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_parser = parse_sweep)]
        param: SweepParam,
    },
    /// Run the configuration with and without each ablation flag.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated flags, e.g. no_external_judge,no_redundance.
        #[arg(long, value_delimiter = ',', required = true, value_parser = parse_ablation)]
        flags: Vec<Ablation>,
    },
    /// Score a trace file against gold answers without calling any provider.
    Score {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, default_value = "simple", value_parser = parse_format)]
        format: DatasetFormat,
        #[arg(long, default_value = "scored")]
        label: String,
        /// Where to write the JSON report lines; stdout when absent.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. --set monitor_threshold=0.5.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Where to write the JSON report lines; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn parse_sweep(s: &str) -> Result<SweepParam, String> {
    s.parse()
}

fn parse_ablation(s: &str) -> Result<Ablation, String> {
    s.parse()
}

fn parse_format(s: &str) -> Result<DatasetFormat, String> {
    s.parse()
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut config = RunConfig::load(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    for o in &args.overrides {
        let (k, v) = o.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got `{o}`"))?;
        config.set(k.trim(), v).map_err(anyhow::Error::msg)?;
    }
    config.validate()?;
    Ok(config)
}

fn emit(reports: &[MetricsReport], path: Option<&Path>) -> Result<()> {
    print!("{}", render_table(reports));
    if let [single] = reports {
        println!();
        print!("{}", render_conditions(single));
    }
    let lines: String = reports.iter().map(|r| r.to_json_line() + "\n").collect();
    match path {
        Some(p) => fs::write(p, lines).with_context(|| format!("writing {}", p.display()))?,
        None => {
            println!();
            std::io::stdout().write_all(lines.as_bytes())?;
        }
    }
    Ok(())
}

fn run_points(points: Vec<(String, RunConfig)>, report: Option<&Path>) -> Result<()> {
    let Some((_, first)) = points.first() else {
        bail!("nothing to run");
    };
    let ws = Workspace::load(first)?;
    if ws.skipped > 0 {
        eprintln!("skipped {} malformed dataset records", ws.skipped);
    }
    let mut reports = Vec::new();
    for (label, config) in &points {
        let out = run_experiment(
            config,
            label,
            &ws.instances,
            ws.retriever.as_ref(),
            &ws.providers,
            &ws.prompts,
        )?;
        for r in out.results.iter().filter(|r| r.error.is_some()) {
            eprintln!("{label}: question {} failed: {}", r.question_id, r.error.as_deref().unwrap_or(""));
        }
        reports.push(out.report);
    }
    emit(&reports, report)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Ingest {
            input,
            output,
            chunk_size,
        } => {
            let docs = read_documents(&input)?;
            let corpus = build_corpus(&docs, chunk_size)?;
            corpus.save(&output)?;
            println!("{} documents -> {} passages in {}", docs.len(), corpus.len(), output.display());
        }
        Command::Index {
            corpus,
            output,
            no_titles,
        } => {
            let corpus = Corpus::load(&corpus)?;
            let index = Bm25Index::build(&corpus, Bm25Params::default(), !no_titles);
            index.save_cache(&corpus, &output)?;
            println!(
                "indexed {} passages ({} terms) into {}",
                index.n_passages,
                index.doc_freq.len(),
                output.display()
            );
        }
        Command::Run(args) => {
            let config = load_config(&args)?;
            run_points(vec![(run_label(&config), config)], args.report.as_deref())?;
        }
        Command::Sweep { run, param } => {
            let config = load_config(&run)?;
            run_points(sweep_points(&config, param), run.report.as_deref())?;
        }
        Command::Ablate { run, flags } => {
            let config = load_config(&run)?;
            run_points(ablation_points(&config, &flags), run.report.as_deref())?;
        }
        Command::Score {
            traces,
            gold,
            format,
            label,
            report,
        } => {
            let results = read_traces(&traces)?;
            let gold = load_dataset(&gold, format)?;
            let answers: HashMap<&str, &str> = gold
                .instances
                .iter()
                .map(|q| (q.id.as_str(), q.gold_answer.as_str()))
                .collect();
            let mut pairs = Vec::new();
            for r in &results {
                let Some(g) = answers.get(r.question_id.as_str()) else {
                    bail!("no gold answer for question {}", r.question_id);
                };
                pairs.push((r, *g));
            }
            let scored = evaluate_run(label, pairs)?;
            emit(&[scored], report.as_deref())?;
        }
    }
    Ok(())
}
