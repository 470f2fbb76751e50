//! QA datasets and seeded sampling.
//!
//! `hotpotqa` and `two_wiki` files are JSON arrays of records carrying
//! `_id` (or `id`), `question` and `answer`. `simple` files hold one
//! `{"id","question","answer"}` object per line. Records with a missing or
//! empty field are skipped and counted.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::DatasetFormat;
use crate::error::EvalError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAInstance {
    pub id: String,
    pub question: String,
    pub gold_answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub instances: Vec<QAInstance>,
    pub skipped: usize,
}

fn text_field<'a>(record: &'a Value, keys: &[&str]) -> Option<&'a str> {
    keys.iter()
        .find_map(|k| record.get(*k))
        .and_then(|v| match v {
            Value::String(s) => Some(s.as_str()),
            // some dumps store the answer as a one-element list
            Value::Array(items) => items.first().and_then(Value::as_str),
            _ => None,
        })
        .map(str::trim)
        .filter(|s| !s.is_empty())
}

fn project(record: &Value) -> Option<QAInstance> {
    Some(QAInstance {
        id: text_field(record, &["_id", "id"])?.to_owned(),
        question: text_field(record, &["question"])?.to_owned(),
        gold_answer: text_field(record, &["answer", "gold_answer"])?.to_owned(),
    })
}

pub fn parse_dataset(text: &str, format: DatasetFormat, path: &Path) -> Result<Dataset, EvalError> {
    let mut instances = Vec::new();
    let mut skipped = 0;
    match format {
        DatasetFormat::Simple => {
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                match serde_json::from_str::<Value>(line).ok().as_ref().and_then(project) {
                    Some(i) => instances.push(i),
                    None => skipped += 1,
                }
            }
        }
        DatasetFormat::Hotpotqa | DatasetFormat::TwoWiki => {
            if !text.trim().is_empty() {
                let records: Vec<Value> = serde_json::from_str(text).map_err(|e| EvalError::Parse {
                    path: path.to_owned(),
                    reason: e.to_string(),
                })?;
                for r in &records {
                    match project(r) {
                        Some(i) => instances.push(i),
                        None => skipped += 1,
                    }
                }
            }
        }
    }
    if instances.is_empty() {
        return Err(EvalError::EmptyDataset {
            path: path.to_owned(),
            skipped,
        });
    }
    Ok(Dataset { instances, skipped })
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_dataset(&text, format, path)
}

/// Seeded shuffle, then the first `min(n, len)` instances.
pub fn sample(instances: &[QAInstance], n: usize, seed: u64) -> Vec<QAInstance> {
    let mut out = instances.to_vec();
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    out.truncate(n);
    out
}
