//! Document ingestion: whitespace tokenization, fixed-size chunking, and the
//! line-delimited corpus file.
//!
//! A corpus file holds one passage per line as `{"id","title","text"}`. The
//! document input file uses the same record shape with document ids.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CorpusError;

/// Default passage length in tokens.
pub const DEFAULT_CHUNK_SIZE: usize = 100;

/// A raw source article.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            text: text.into(),
        }
    }
}

/// One chunk of a document. `text` is always `tokens.join(" ")`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Passage {
    pub id: String,
    pub title: String,
    pub tokens: Vec<String>,
    pub text: String,
}

impl Passage {
    pub fn new(id: impl Into<String>, title: impl Into<String>, tokens: Vec<String>) -> Self {
        let text = tokens.join(" ");
        Self {
            id: id.into(),
            title: title.into(),
            tokens,
            text,
        }
    }

    /// Builds a passage from already-joined text.
    pub fn from_text(id: impl Into<String>, title: impl Into<String>, text: &str) -> Self {
        Self::new(id, title, tokenize(text))
    }
}

#[derive(Serialize, Deserialize)]
struct PassageRecord<'a> {
    id: std::borrow::Cow<'a, str>,
    title: std::borrow::Cow<'a, str>,
    text: std::borrow::Cow<'a, str>,
}

/// An ordered, immutable set of passages with an id lookup.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    passages: Vec<Passage>,
    passage_index: HashMap<String, usize>,
}

impl Corpus {
    /// Assembles a corpus from passages, rejecting duplicate ids.
    pub fn from_passages(passages: Vec<Passage>) -> Result<Self, CorpusError> {
        let mut passage_index = HashMap::with_capacity(passages.len());
        for (ordinal, passage) in passages.iter().enumerate() {
            if passage_index.insert(passage.id.clone(), ordinal).is_some() {
                return Err(CorpusError::DuplicatePassage(passage.id.clone()));
            }
        }
        Ok(Self {
            passages,
            passage_index,
        })
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Passage> {
        self.ordinal(id).map(|i| &self.passages[i])
    }

    pub fn ordinal(&self, id: &str) -> Option<usize> {
        self.passage_index.get(id).copied()
    }

    /// Writes the corpus as line-delimited `{"id","title","text"}` records.
    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        for p in &self.passages {
            let record = PassageRecord {
                id: p.id.as_str().into(),
                title: p.title.as_str().into(),
                text: p.text.as_str().into(),
            };
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let io_err = |source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = File::create(path).map_err(io_err)?;
        self.write_to(BufWriter::new(file)).map_err(io_err)
    }

    /// Streams a corpus file back in. Blank lines are ignored.
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let file = File::open(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut passages = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| CorpusError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let record: PassageRecord<'_> =
                serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                    path: path.to_path_buf(),
                    line: n + 1,
                    reason: e.to_string(),
                })?;
            passages.push(Passage::from_text(
                record.id.into_owned(),
                record.title.into_owned(),
                &record.text,
            ));
        }
        Self::from_passages(passages)
    }
}

/// Splits on runs of Unicode whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

/// Cuts a document into non-overlapping passages of at most `chunk_size`
/// tokens. Passage ids are `"{doc_id}#{ordinal}"`.
pub fn chunk_document(doc: &Document, chunk_size: usize) -> Result<Vec<Passage>, CorpusError> {
    if chunk_size == 0 {
        return Err(CorpusError::InvalidArgument(
            "chunk_size must be at least 1".into(),
        ));
    }
    let tokens = tokenize(&doc.text);
    Ok(tokens
        .chunks(chunk_size)
        .enumerate()
        .map(|(ordinal, chunk)| {
            Passage::new(
                format!("{}#{}", doc.id, ordinal),
                doc.title.clone(),
                chunk.to_vec(),
            )
        })
        .collect())
}

/// Chunks every document in input order into one corpus.
pub fn build_corpus(docs: &[Document], chunk_size: usize) -> Result<Corpus, CorpusError> {
    let mut seen = HashSet::with_capacity(docs.len());
    let mut passages = Vec::new();
    for doc in docs {
        if doc.id.is_empty() {
            return Err(CorpusError::InvalidArgument("document id is empty".into()));
        }
        if !seen.insert(doc.id.as_str()) {
            return Err(CorpusError::DuplicateDocument(doc.id.clone()));
        }
        passages.extend(chunk_document(doc, chunk_size)?);
    }
    Corpus::from_passages(passages)
}

/// Reads a line-delimited document file.
pub fn read_documents(path: &Path) -> Result<Vec<Document>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut docs = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            path: path.to_path_buf(),
            line: n + 1,
            reason: e.to_string(),
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc_with_tokens(id: &str, n: usize) -> Document {
        let text = (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        Document::new(id, "T", text)
    }

    #[test]
    fn tokenize_splits_whitespace_runs() {
        assert_eq!(tokenize("cat  sat\non mat"), ["cat", "sat", "on", "mat"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("a"), ["a"]);
        assert_eq!(tokenize("\u{3000}x\u{00a0}y\t"), ["x", "y"]);
    }

    #[test]
    fn chunking_sizes() {
        let sizes = |n| {
            chunk_document(&doc_with_tokens("D", n), 100)
                .unwrap()
                .iter()
                .map(|p| p.tokens.len())
                .collect::<Vec<_>>()
        };
        assert_eq!(sizes(250), [100, 100, 50]);
        assert_eq!(sizes(100), [100]);
        assert!(sizes(0).is_empty());
    }

    #[test]
    fn chunk_ids_carry_ordinals() {
        let passages = chunk_document(&doc_with_tokens("D12", 7), 2).unwrap();
        let ids: Vec<_> = passages.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["D12#0", "D12#1", "D12#2", "D12#3"]);
        assert!(passages.iter().all(|p| p.title == "T"));
    }

    #[test]
    fn zero_chunk_size_rejected() {
        let err = chunk_document(&doc_with_tokens("D", 3), 0).unwrap_err();
        assert!(matches!(err, CorpusError::InvalidArgument(_)));
    }

    #[test]
    fn build_corpus_counts_and_duplicates() {
        let docs = [doc_with_tokens("A", 150), doc_with_tokens("B", 150)];
        let corpus = build_corpus(&docs, 100).unwrap();
        assert_eq!(corpus.len(), 4);
        assert_eq!(corpus.ordinal("B#1"), Some(3));

        assert!(build_corpus(&[], 100).unwrap().is_empty());

        let dup = [doc_with_tokens("A", 3), doc_with_tokens("A", 3)];
        match build_corpus(&dup, 100) {
            Err(CorpusError::DuplicateDocument(id)) => assert_eq!(id, "A"),
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn persist_then_load_round_trips() {
        let docs = [
            Document::new("x", "Title \"quoted\"", "alpha beta\n gamma délta"),
            doc_with_tokens("y", 5),
        ];
        let corpus = build_corpus(&docs, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        corpus.save(&path).unwrap();
        assert_eq!(Corpus::load(&path).unwrap(), corpus);
    }

    proptest! {
        #[test]
        fn chunks_reassemble_the_document(
            words in prop::collection::vec("[a-z]{1,5}", 0..60),
            seps in prop::collection::vec(prop::sample::select(vec![" ", "  ", "\n", "\t "]), 60),
            chunk_size in 1usize..12,
        ) {
            let mut text = String::new();
            for (w, s) in words.iter().zip(&seps) {
                text.push_str(w);
                text.push_str(s);
            }
            let doc = Document::new("d", "", text.clone());
            let passages = chunk_document(&doc, chunk_size).unwrap();
            prop_assert_eq!(passages.len(), words.len().div_ceil(chunk_size));
            let joined: Vec<String> = passages.iter().flat_map(|p| p.tokens.clone()).collect();
            prop_assert_eq!(joined, tokenize(&text));
            for (i, p) in passages.iter().enumerate() {
                prop_assert!(!p.tokens.is_empty() && p.tokens.len() <= chunk_size);
                if i + 1 < passages.len() {
                    prop_assert_eq!(p.tokens.len(), chunk_size);
                }
                prop_assert_eq!(&p.text, &p.tokens.join(" "));
            }
        }
    }
}
