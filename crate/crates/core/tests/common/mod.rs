#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use metarag::config::RunConfig;
use metarag::corpus::{build_corpus, read_documents, DEFAULT_CHUNK_SIZE};
use metarag::eval::experiment::build_providers;
use metarag::eval::QAInstance;
use metarag::providers::Providers;
use metarag::retrieval::{Bm25Params, Bm25Retriever};

pub fn fixture_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub struct CaseStudy {
    pub retriever: Bm25Retriever,
    pub providers: Providers,
    pub config: RunConfig,
    pub question: QAInstance,
}

pub fn case_study() -> CaseStudy {
    let dir = fixture_dir("case_study");
    let docs = read_documents(&dir.join("documents.jsonl")).unwrap();
    let corpus = Arc::new(build_corpus(&docs, DEFAULT_CHUNK_SIZE).unwrap());
    let config = RunConfig::load(&dir.join("run.cfg")).unwrap();
    let providers = build_providers(&config).unwrap();
    let dataset = metarag::eval::load_dataset(&dir.join("dataset.jsonl"), config.dataset_format).unwrap();
    CaseStudy {
        retriever: Bm25Retriever::build(corpus, Bm25Params::default(), config.index_titles),
        providers,
        config,
        question: dataset.instances[0].clone(),
    }
}
