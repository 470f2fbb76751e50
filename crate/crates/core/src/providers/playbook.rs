use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

/// One substring rule of a playbook.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaybookRule {
    #[serde(rename = "match")]
    pub pattern: String,
    pub response: String,
}

/// Ordered substring rules; the first rule whose pattern occurs in the input
/// wins, otherwise the default response is returned.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Playbook {
    pub rules: Vec<PlaybookRule>,
    pub default: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Line {
    Rule(PlaybookRule),
    Default { default: String },
}

impl Playbook {
    pub fn with_default(default: impl Into<String>) -> Self {
        Self {
            rules: Vec::new(),
            default: default.into(),
        }
    }

    pub fn rule(mut self, pattern: impl Into<String>, response: impl Into<String>) -> Self {
        self.rules.push(PlaybookRule {
            pattern: pattern.into(),
            response: response.into(),
        });
        self
    }

    pub fn lookup(&self, input: &str) -> &str {
        self.rules
            .iter()
            .find(|r| input.contains(&r.pattern))
            .map_or(self.default.as_str(), |r| r.response.as_str())
    }

    /// Parses line-delimited `{"match","response"}` records plus one
    /// `{"default"}` record. A missing default means the empty string.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut book = Self::default();
        let mut saw_default = false;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Line>(line) {
                Ok(Line::Rule(rule)) => book.rules.push(rule),
                Ok(Line::Default { default }) => {
                    if saw_default {
                        return Err(format!("line {}: second default record", n + 1));
                    }
                    saw_default = true;
                    book.default = default;
                }
                Err(e) => return Err(format!("line {}: {e}", n + 1)),
            }
        }
        Ok(book)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let file = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut text = String::new();
        for line in BufReader::new(file).lines() {
            text.push_str(&line.map_err(|e| format!("{}: {e}", path.display()))?);
            text.push('\n');
        }
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        for rule in &self.rules {
            serde_json::to_writer(&mut out, rule)?;
            out.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut out, &serde_json::json!({ "default": self.default }))?;
        out.write_all(b"\n")
    }
}
