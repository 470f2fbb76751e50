//! Lexical and dense ranking over a [`Corpus`].
//!
//! The lexical ranker is Okapi BM25 with
//! `idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))` and the usual `k1`/`b`
//! saturation. Terms are the whitespace tokens of a passage, lowercased; title
//! tokens are indexed with the body unless disabled. Passages scoring zero are
//! never returned.
//!
//! Hybrid mode draws a candidate pool from each ranker and merges them with
//! reciprocal rank fusion.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{tokenize, Corpus, Passage};
use crate::error::RetrievalError;
use crate::providers::{self, Embedder, EmbeddingVector};

/// Default reciprocal-rank-fusion constant.
pub const DEFAULT_RRF_K: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

/// Collection statistics for BM25 scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    pub doc_freq: HashMap<String, usize>,
    pub term_freqs: Vec<HashMap<String, u32>>,
    pub passage_lengths: Vec<usize>,
    pub avg_length: f64,
    pub n_passages: usize,
    pub params: Bm25Params,
    pub index_titles: bool,
    passage_ids: Vec<String>,
    #[serde(skip)]
    postings: HashMap<String, Vec<(usize, u32)>>,
}

/// Lowercased index terms of a passage.
pub fn passage_terms(passage: &Passage, index_titles: bool) -> Vec<String> {
    let title = if index_titles {
        tokenize(&passage.title)
    } else {
        Vec::new()
    };
    title
        .iter()
        .chain(&passage.tokens)
        .map(|t| t.to_lowercase())
        .collect()
}

/// Lowercased whitespace terms of a query string.
pub fn query_terms(query: &str) -> Vec<String> {
    tokenize(query).iter().map(|t| t.to_lowercase()).collect()
}

impl Bm25Index {
    pub fn build(corpus: &Corpus, params: Bm25Params, index_titles: bool) -> Self {
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        let mut term_freqs = Vec::with_capacity(corpus.len());
        let mut passage_lengths = Vec::with_capacity(corpus.len());
        for passage in corpus.passages() {
            let terms = passage_terms(passage, index_titles);
            passage_lengths.push(terms.len());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for term in terms {
                *tf.entry(term).or_default() += 1;
            }
            for term in tf.keys() {
                *doc_freq.entry(term.clone()).or_default() += 1;
            }
            term_freqs.push(tf);
        }
        let n_passages = corpus.len();
        let avg_length = if n_passages == 0 {
            0.0
        } else {
            passage_lengths.iter().sum::<usize>() as f64 / n_passages as f64
        };
        let mut index = Self {
            doc_freq,
            term_freqs,
            passage_lengths,
            avg_length,
            n_passages,
            params,
            index_titles,
            passage_ids: corpus.passages().iter().map(|p| p.id.clone()).collect(),
            postings: HashMap::new(),
        };
        index.rebuild_postings();
        index
    }

    fn rebuild_postings(&mut self) {
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        for (ordinal, tf) in self.term_freqs.iter().enumerate() {
            for (term, &count) in tf {
                postings.entry(term.clone()).or_default().push((ordinal, count));
            }
        }
        self.postings = postings;
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.n_passages as f64;
        let df = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_score(&self, term: &str, tf: u32, ordinal: usize) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = f64::from(tf);
        let norm = self.passage_lengths[ordinal] as f64 / self.avg_length;
        self.idf(term) * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm))
    }

    fn score_ordinal(&self, terms: &[String], ordinal: usize) -> f64 {
        let tf = &self.term_freqs[ordinal];
        terms
            .iter()
            .filter_map(|t| tf.get(t).map(|&c| self.term_score(t, c, ordinal)))
            .sum()
    }

    /// BM25 score of one passage. Query terms are used exactly as given.
    pub fn score(&self, query_terms: &[String], passage_id: &str) -> Result<f64, RetrievalError> {
        let ordinal = self
            .passage_ids
            .iter()
            .position(|id| id == passage_id)
            .ok_or_else(|| RetrievalError::PassageNotFound(passage_id.to_owned()))?;
        Ok(self.score_ordinal(query_terms, ordinal))
    }

    /// Ranks every passage sharing a term with `query` and keeps `top_k`.
    pub fn search(&self, query: &str, top_k: usize) -> Result<RetrievedSet, RetrievalError> {
        if top_k == 0 {
            return Err(RetrievalError::InvalidArgument("top_k must be at least 1".into()));
        }
        let terms = query_terms(query);
        let mut candidates = HashSet::new();
        for term in &terms {
            if let Some(list) = self.postings.get(term) {
                candidates.extend(list.iter().map(|&(ordinal, _)| ordinal));
            }
        }
        let scored = candidates
            .into_iter()
            .map(|ordinal| (self.passage_ids[ordinal].clone(), self.score_ordinal(&terms, ordinal)))
            .filter(|(_, score)| *score > 0.0);
        Ok(RetrievedSet::from_scores(query, scored, top_k))
    }

    /// Hex SHA-256 over the passages' ids, titles and text.
    pub fn corpus_hash(corpus: &Corpus) -> String {
        let mut hasher = Sha256::new();
        for p in corpus.passages() {
            hasher.update(p.id.as_bytes());
            hasher.update([0]);
            hasher.update(p.title.as_bytes());
            hasher.update([0]);
            hasher.update(p.text.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    /// Writes the index as JSON tagged with the corpus content hash.
    pub fn save_cache(&self, corpus: &Corpus, path: &Path) -> Result<(), RetrievalError> {
        let cache_err = |reason: String| RetrievalError::Cache {
            path: path.to_path_buf(),
            reason,
        };
        let file = File::create(path).map_err(|e| cache_err(e.to_string()))?;
        let cache = IndexCache {
            corpus_hash: Self::corpus_hash(corpus),
            index: self.clone(),
        };
        serde_json::to_writer(BufWriter::new(file), &cache).map_err(|e| cache_err(e.to_string()))
    }

    /// Loads a cached index, refusing it if it was built from another corpus.
    pub fn load_cache(corpus: &Corpus, path: &Path) -> Result<Self, RetrievalError> {
        let cache_err = |reason: String| RetrievalError::Cache {
            path: path.to_path_buf(),
            reason,
        };
        let file = File::open(path).map_err(|e| cache_err(e.to_string()))?;
        let cache: IndexCache =
            serde_json::from_reader(BufReader::new(file)).map_err(|e| cache_err(e.to_string()))?;
        let expected = Self::corpus_hash(corpus);
        if cache.corpus_hash != expected {
            return Err(cache_err(format!(
                "built for corpus {}, current corpus is {expected}",
                cache.corpus_hash
            )));
        }
        let mut index = cache.index;
        index.rebuild_postings();
        Ok(index)
    }
}

#[derive(Serialize, Deserialize)]
struct IndexCache {
    corpus_hash: String,
    index: Bm25Index,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedEntry {
    pub passage_id: String,
    pub score: f64,
    pub rank: usize,
}

/// Ranked passages for one query: score descending, ties by id ascending,
/// ranks consecutive from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedSet {
    pub query: String,
    pub entries: Vec<RetrievedEntry>,
}

fn rank_order(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

impl RetrievedSet {
    pub fn empty(query: impl Into<String>) -> Self {
        Self {
            query: query.into(),
            entries: Vec::new(),
        }
    }

    /// Sorts `(id, score)` pairs into a ranked set truncated to `top_k`.
    pub fn from_scores(
        query: impl Into<String>,
        scores: impl IntoIterator<Item = (String, f64)>,
        top_k: usize,
    ) -> Self {
        let mut scores: Vec<(String, f64)> = scores.into_iter().collect();
        scores.sort_by(rank_order);
        scores.truncate(top_k);
        Self {
            query: query.into(),
            entries: scores
                .into_iter()
                .enumerate()
                .map(|(i, (passage_id, score))| RetrievedEntry {
                    passage_id,
                    score,
                    rank: i + 1,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.passage_id.clone()).collect()
    }

    pub fn contains(&self, passage_id: &str) -> bool {
        self.entries.iter().any(|e| e.passage_id == passage_id)
    }

    /// Appends entries from `other` whose ids are new, up to `cap` entries in
    /// total. Returns how many were added. Ranks are renumbered.
    pub fn merge_append(&mut self, other: &RetrievedSet, cap: usize) -> usize {
        let mut added = 0;
        for entry in &other.entries {
            if self.entries.len() >= cap {
                break;
            }
            if self.contains(&entry.passage_id) {
                continue;
            }
            self.entries.push(RetrievedEntry {
                passage_id: entry.passage_id.clone(),
                score: entry.score,
                rank: self.entries.len() + 1,
            });
            added += 1;
        }
        added
    }
}

/// Reciprocal rank fusion: each passage scores `Σ 1 / (rrf_k + rank)` over
/// the lists containing it.
pub fn fuse_rankings(
    lexical: &RetrievedSet,
    dense: &RetrievedSet,
    top_k: usize,
    rrf_k: usize,
) -> RetrievedSet {
    let mut fused: Vec<(String, f64)> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    for entry in lexical.entries.iter().chain(&dense.entries) {
        let contribution = 1.0 / (rrf_k + entry.rank) as f64;
        match slot.get(entry.passage_id.as_str()) {
            Some(&i) => fused[i].1 += contribution,
            None => {
                slot.insert(&entry.passage_id, fused.len());
                fused.push((entry.passage_id.clone(), contribution));
            }
        }
    }
    RetrievedSet::from_scores(lexical.query.clone(), fused, top_k)
}

/// Cosine similarity; zero-norm inputs give 0.0. Clamped to [-1, 1].
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    // one sqrt keeps cosine(v, v) at exactly 1
    (dot / (na * nb).sqrt()).clamp(-1.0, 1.0)
}

fn embedding_text(passage: &Passage, include_title: bool) -> String {
    if include_title && !passage.title.is_empty() {
        format!("{} {}", passage.title, passage.text)
    } else {
        passage.text.clone()
    }
}

fn rank_by_vectors(
    query: &str,
    query_vector: &EmbeddingVector,
    corpus: &Corpus,
    vectors: &[EmbeddingVector],
    top_k: usize,
) -> RetrievedSet {
    let scores = corpus
        .passages()
        .iter()
        .zip(vectors)
        .map(|(p, v)| (p.id.clone(), cosine_similarity(query_vector.values(), v.values())));
    RetrievedSet::from_scores(query, scores, top_k)
}

/// Ranks every passage by cosine similarity of provider embeddings.
pub fn dense_rank(
    embedder: &dyn Embedder,
    query: &str,
    corpus: &Corpus,
    top_k: usize,
) -> Result<RetrievedSet, RetrievalError> {
    if top_k == 0 {
        return Err(RetrievalError::InvalidArgument("top_k must be at least 1".into()));
    }
    if corpus.is_empty() {
        return Ok(RetrievedSet::empty(query));
    }
    let mut texts = vec![query.to_owned()];
    texts.extend(corpus.passages().iter().map(|p| p.text.clone()));
    let mut vectors = providers::embed(embedder, &texts)?;
    let query_vector = vectors.remove(0);
    Ok(rank_by_vectors(query, &query_vector, corpus, &vectors, top_k))
}

/// Anything that can turn a query into a ranked reference set.
pub trait Retriever: Send + Sync {
    fn retrieve(&self, query: &str, top_k: usize) -> Result<RetrievedSet, RetrievalError>;
    fn corpus(&self) -> &Corpus;
}

/// BM25-only retrieval.
pub struct Bm25Retriever {
    corpus: Arc<Corpus>,
    index: Bm25Index,
}

impl Bm25Retriever {
    pub fn new(corpus: Arc<Corpus>, index: Bm25Index) -> Self {
        Self { corpus, index }
    }

    pub fn build(corpus: Arc<Corpus>, params: Bm25Params, index_titles: bool) -> Self {
        let index = Bm25Index::build(&corpus, params, index_titles);
        Self { corpus, index }
    }

    pub fn index(&self) -> &Bm25Index {
        &self.index
    }
}

impl Retriever for Bm25Retriever {
    fn retrieve(&self, query: &str, top_k: usize) -> Result<RetrievedSet, RetrievalError> {
        self.index.search(query, top_k)
    }

    fn corpus(&self) -> &Corpus {
        &self.corpus
    }
}

/// BM25 fused with dense ranking. Each ranker contributes a pool of
/// `pool_size` candidates; passage embeddings are computed once on first use.
pub struct HybridRetriever {
    lexical: Bm25Retriever,
    embedder: Arc<dyn Embedder>,
    pool_size: usize,
    rrf_k: usize,
    passage_vectors: OnceLock<Vec<EmbeddingVector>>,
}

impl HybridRetriever {
    pub fn new(lexical: Bm25Retriever, embedder: Arc<dyn Embedder>, pool_size: usize, rrf_k: usize) -> Self {
        Self {
            lexical,
            embedder,
            pool_size,
            rrf_k,
            passage_vectors: OnceLock::new(),
        }
    }

    fn vectors(&self) -> Result<&[EmbeddingVector], RetrievalError> {
        if let Some(v) = self.passage_vectors.get() {
            return Ok(v);
        }
        let corpus = self.lexical.corpus();
        let texts: Vec<String> = corpus
            .passages()
            .iter()
            .map(|p| embedding_text(p, self.lexical.index.index_titles))
            .collect();
        let vectors = if texts.is_empty() {
            Vec::new()
        } else {
            providers::embed(self.embedder.as_ref(), &texts)?
        };
        Ok(self.passage_vectors.get_or_init(|| vectors))
    }
}

impl Retriever for HybridRetriever {
    fn retrieve(&self, query: &str, top_k: usize) -> Result<RetrievedSet, RetrievalError> {
        if top_k == 0 {
            return Err(RetrievalError::InvalidArgument("top_k must be at least 1".into()));
        }
        let pool = self.pool_size.max(top_k);
        let lexical = self.lexical.retrieve(query, pool)?;
        let corpus = self.lexical.corpus();
        let dense = if corpus.is_empty() {
            RetrievedSet::empty(query)
        } else {
            let vectors = self.vectors()?;
            let query_vector = providers::embed(self.embedder.as_ref(), &[query.to_owned()])?.remove(0);
            rank_by_vectors(query, &query_vector, corpus, vectors, pool)
        };
        Ok(fuse_rankings(&lexical, &dense, top_k, self.rrf_k))
    }

    fn corpus(&self) -> &Corpus {
        self.lexical.corpus()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::ScriptedEmbedder;
    use proptest::prelude::*;

    fn corpus(texts: &[&str]) -> Corpus {
        Corpus::from_passages(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Passage::from_text(format!("p{}", i + 1), "", t))
                .collect(),
        )
        .unwrap()
    }

    fn terms(q: &[&str]) -> Vec<String> {
        q.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn index_statistics() {
        let idx = Bm25Index::build(&corpus(&["cat sat", "dog ran"]), Bm25Params::default(), true);
        assert_eq!(idx.n_passages, 2);
        assert_eq!(idx.doc_freq["cat"], 1);
        assert_eq!(idx.avg_length, 2.0);

        let empty = Bm25Index::build(&Corpus::default(), Bm25Params::default(), true);
        assert_eq!(empty.n_passages, 0);
        assert!(empty.search("cat", 5).unwrap().is_empty());

        let rep = Bm25Index::build(&corpus(&["cat cat"]), Bm25Params::default(), true);
        assert_eq!(rep.term_freqs[0]["cat"], 2);
        assert_eq!(rep.doc_freq["cat"], 1);
    }

    #[test]
    fn single_term_score_is_ln_two() {
        // N=2, df=1, tf=1 and |d| = avgdl, so the tf factor is exactly 1.
        let idx = Bm25Index::build(&corpus(&["cat sat", "dog ran"]), Bm25Params::default(), true);
        let s = idx.score(&terms(&["cat"]), "p1").unwrap();
        assert!((s - std::f64::consts::LN_2).abs() < 1e-12, "{s}");
        assert_eq!(idx.score(&terms(&["zebra"]), "p1").unwrap(), 0.0);
        assert_eq!(idx.score(&[], "p2").unwrap(), 0.0);
        assert!(matches!(
            idx.score(&terms(&["cat"]), "nope"),
            Err(RetrievalError::PassageNotFound(_))
        ));
    }

    #[test]
    fn retrieve_drops_zero_scores_and_truncates() {
        let idx = Bm25Index::build(&corpus(&["cat sat", "dog ran"]), Bm25Params::default(), true);
        let set = idx.search("Cat", 5).unwrap();
        assert_eq!(set.ids(), ["p1"]);
        assert_eq!(set.entries[0].rank, 1);
        assert!(idx.search("zebra", 5).unwrap().is_empty());

        let idx = Bm25Index::build(
            &corpus(&["cat", "cat cat dog", "cat dog dog dog", "bird"]),
            Bm25Params::default(),
            true,
        );
        let all = idx.search("cat", 10).unwrap();
        assert_eq!(all.len(), 3);
        let top = idx.search("cat", 1).unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!(top.entries[0], all.entries[0]);
        assert!(matches!(idx.search("cat", 0), Err(RetrievalError::InvalidArgument(_))));
    }

    #[test]
    fn title_indexing_is_switchable() {
        let c = Corpus::from_passages(vec![Passage::from_text("a#0", "Zebra", "striped animal")]).unwrap();
        assert_eq!(Bm25Index::build(&c, Bm25Params::default(), true).search("zebra", 5).unwrap().len(), 1);
        assert!(Bm25Index::build(&c, Bm25Params::default(), false).search("zebra", 5).unwrap().is_empty());
    }

    #[test]
    fn cache_round_trip_and_hash_check() {
        let c = corpus(&["cat sat", "dog ran", "cat dog"]);
        let idx = Bm25Index::build(&c, Bm25Params::default(), true);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        idx.save_cache(&c, &path).unwrap();
        let loaded = Bm25Index::load_cache(&c, &path).unwrap();
        assert_eq!(loaded, idx);
        assert_eq!(loaded.search("cat", 5).unwrap(), idx.search("cat", 5).unwrap());

        let other = corpus(&["cat sat"]);
        assert!(matches!(
            Bm25Index::load_cache(&other, &path),
            Err(RetrievalError::Cache { .. })
        ));
    }

    fn set(ids: &[&str]) -> RetrievedSet {
        RetrievedSet::from_scores(
            "q",
            ids.iter().enumerate().map(|(i, id)| (id.to_string(), 10.0 - i as f64)),
            100,
        )
    }

    #[test]
    fn rrf_hand_example() {
        let fused = fuse_rankings(&set(&["A", "B"]), &set(&["B", "C"]), 5, 60);
        assert_eq!(fused.ids(), ["B", "A", "C"]);
        let expect = [1.0 / 62.0 + 1.0 / 61.0, 1.0 / 61.0, 1.0 / 62.0];
        for (e, x) in fused.entries.iter().zip(expect) {
            assert!((e.score - x).abs() < 1e-15);
        }
    }

    #[test]
    fn rrf_single_list_and_identical_lists() {
        let lex = set(&["A", "B", "C"]);
        let fused = fuse_rankings(&lex, &RetrievedSet::empty("q"), 5, 60);
        assert_eq!(fused.ids(), lex.ids());
        let doubled = fuse_rankings(&lex, &lex, 5, 60);
        assert_eq!(doubled.ids(), lex.ids());
        for (d, s) in doubled.entries.iter().zip(&fused.entries) {
            assert!((d.score - 2.0 * s.score).abs() < 1e-15);
        }
    }

    #[test]
    fn merge_append_dedupes_and_caps() {
        let mut refs = set(&["A", "B"]);
        assert_eq!(refs.merge_append(&set(&["B", "C", "D"]), 10), 2);
        assert_eq!(refs.ids(), ["A", "B", "C", "D"]);
        assert_eq!(refs.entries.iter().map(|e| e.rank).collect::<Vec<_>>(), [1, 2, 3, 4]);
        assert_eq!(refs.merge_append(&set(&["E", "F", "G"]), 5), 1);
        assert_eq!(refs.len(), 5);
    }

    #[test]
    fn dense_rank_orders_by_cosine() {
        let c = corpus(&["alpha", "beta", "gamma"]);
        let embedder = ScriptedEmbedder::from_table([
            ("q", vec![1.0, 0.0]),
            ("alpha", vec![0.9, (1.0f64 - 0.81).sqrt()]),
            ("beta", vec![0.5, (1.0f64 - 0.25).sqrt()]),
            ("gamma", vec![0.1, (1.0f64 - 0.01).sqrt()]),
        ])
        .unwrap();
        let ranked = dense_rank(&embedder, "q", &c, 2).unwrap();
        assert_eq!(ranked.ids(), ["p1", "p2"]);
        assert!((ranked.entries[0].score - 0.9).abs() < 1e-12);

        let self_sim = dense_rank(&embedder, "beta", &c, 3).unwrap();
        assert_eq!(self_sim.entries[0].passage_id, "p2");
        assert!((self_sim.entries[0].score - 1.0).abs() < 1e-12);

        let ortho = ScriptedEmbedder::from_table([
            ("q", vec![1.0, 0.0]),
            ("alpha", vec![0.0, 1.0]),
            ("beta", vec![0.0, 2.0]),
            ("gamma", vec![0.0, 3.0]),
        ])
        .unwrap();
        let r = dense_rank(&ortho, "q", &c, 3).unwrap();
        assert_eq!(r.len(), 3);
        assert!(r.entries.iter().all(|e| e.score == 0.0));
    }

    #[test]
    fn hybrid_fuses_both_pools() {
        let c = Arc::new(corpus(&["cat sat", "dog ran", "bird flew"]));
        let embedder = Arc::new(ScriptedEmbedder::hashing(8));
        let hybrid = HybridRetriever::new(
            Bm25Retriever::build(c.clone(), Bm25Params::default(), true),
            embedder,
            5,
            DEFAULT_RRF_K,
        );
        let out = hybrid.retrieve("cat", 5).unwrap();
        // dense ranking covers every passage, lexical only p1
        assert_eq!(out.len(), 3);
        assert_eq!(out.entries[0].passage_id, "p1");
        assert_eq!(out, hybrid.retrieve("cat", 5).unwrap());
    }

    #[test]
    fn cosine_zero_norm() {
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
    }

    proptest! {
        #[test]
        fn more_occurrences_score_higher(extra in 1usize..6, filler in 0usize..6) {
            // Same length and df, different tf for "cat".
            let fill = |n: usize| vec!["x"; n].join(" ");
            let low = format!("cat {} {}", fill(extra), fill(filler));
            let high = format!("{} {}", vec!["cat"; 1 + extra].join(" "), fill(filler));
            let c = corpus(&[&low, &high, "dog", "bird"]);
            let idx = Bm25Index::build(&c, Bm25Params::default(), true);
            let q = terms(&["cat"]);
            prop_assert!(idx.idf("cat") > 0.0);
            prop_assert!(idx.score(&q, "p2").unwrap() > idx.score(&q, "p1").unwrap());
        }

        #[test]
        fn cosine_is_symmetric_and_bounded(
            a in prop::collection::vec(-1e3f64..1e3, 1..8),
            b in prop::collection::vec(-1e3f64..1e3, 1..8),
        ) {
            let n = a.len().min(b.len());
            let (a, b) = (&a[..n], &b[..n]);
            let s = cosine_similarity(a, b);
            prop_assert!((-1.0..=1.0).contains(&s));
            prop_assert!((s - cosine_similarity(b, a)).abs() < 1e-9);
        }

        #[test]
        fn cosine_self_is_exactly_one(a in prop::collection::vec(-1.0f64..1.0, 1..64)) {
            prop_assume!(a.iter().any(|x| *x != 0.0));
            prop_assert_eq!(cosine_similarity(&a, &a), 1.0);
        }

        #[test]
        fn rrf_matches_brute_force(
            lex in prop::collection::vec(0u8..12, 0..8),
            dense in prop::collection::vec(0u8..12, 0..8),
            top_k in 1usize..10,
        ) {
            let dedup = |v: Vec<u8>| {
                let mut seen = HashSet::new();
                v.into_iter().filter(|x| seen.insert(*x)).map(|x| format!("d{x:02}")).collect::<Vec<_>>()
            };
            let (lex, dense) = (dedup(lex), dedup(dense));
            let l = set(&lex.iter().map(String::as_str).collect::<Vec<_>>());
            let d = set(&dense.iter().map(String::as_str).collect::<Vec<_>>());
            let fused = fuse_rankings(&l, &d, top_k, 60);

            let mut all: Vec<String> = lex.iter().chain(&dense).cloned().collect();
            all.sort();
            all.dedup();
            let mut expected: Vec<(String, f64)> = all.into_iter().map(|id| {
                let mut s = 0.0;
                if let Some(p) = lex.iter().position(|x| *x == id) { s += 1.0 / (61 + p) as f64; }
                if let Some(p) = dense.iter().position(|x| *x == id) { s += 1.0 / (61 + p) as f64; }
                (id, s)
            }).collect();
            expected.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            expected.truncate(top_k);
            prop_assert_eq!(fused.len(), expected.len());
            for (e, (id, s)) in fused.entries.iter().zip(&expected) {
                prop_assert_eq!(&e.passage_id, id);
                prop_assert!((e.score - s).abs() < 1e-12);
            }
        }
    }
}
