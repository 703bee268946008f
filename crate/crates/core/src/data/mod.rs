//! Documents, tokenization, vocabularies and JSONL ingestion.

mod synthetic;
mod vocab;

pub use synthetic::{keyword_oracle, make_synthetic_corpus, Splits, SyntheticSpec};
pub use vocab::{build_vocab, Vocabulary, CLS_ID, PAD_ID, SEP_ID, UNK_ID};

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD_TOKEN: &str = "[PAD]";
pub const CLS_TOKEN: &str = "[CLS]";
pub const SEP_TOKEN: &str = "[SEP]";
pub const UNK_TOKEN: &str = "[UNK]";

/// True for the structural markers that never carry salience.
pub fn is_special_token(token: &str) -> bool {
    matches!(token, PAD_TOKEN | CLS_TOKEN | SEP_TOKEN)
}

/// A labeled, tokenized text instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<String>,
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos_tags: Option<Vec<String>>,
}

impl Document {
    pub fn new(id: impl Into<String>, tokens: Vec<String>, label: usize) -> Result<Self> {
        let doc = Self {
            id: id.into(),
            tokens,
            label,
            pos_tags: None,
        };
        doc.validate()?;
        Ok(doc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::data(format!("document {} has no tokens", self.id)));
        }
        if let Some(tags) = &self.pos_tags {
            if tags.len() != self.tokens.len() {
                return Err(Error::data(format!(
                    "document {}: {} pos tags for {} tokens",
                    self.id,
                    tags.len(),
                    self.tokens.len()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Keeps at most `max_tokens` leading tokens (and their tags).
    pub fn truncated(&self, max_tokens: usize) -> Self {
        let keep = self.tokens.len().min(max_tokens);
        Self {
            id: self.id.clone(),
            tokens: self.tokens[..keep].to_vec(),
            label: self.label,
            pos_tags: self.pos_tags.as_ref().map(|t| t[..keep].to_vec()),
        }
    }
}

pub trait Tokenizer {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

/// Lowercases, splits on whitespace and splits punctuation into its own tokens.
/// Bracketed special markers such as `[CLS]` are kept whole.
#[derive(Debug, Clone, Copy, Default)]
pub struct BasicTokenizer;

impl Tokenizer for BasicTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            if is_special_token(word) || word == UNK_TOKEN {
                out.push(word.to_string());
                continue;
            }
            let mut current = String::new();
            for ch in word.chars() {
                if ch.is_alphanumeric() {
                    current.extend(ch.to_lowercase());
                } else {
                    if !current.is_empty() {
                        out.push(std::mem::take(&mut current));
                    }
                    out.push(ch.to_string());
                }
            }
            if !current.is_empty() {
                out.push(current);
            }
        }
        out
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    tokens: Option<Vec<String>>,
    label: i64,
    #[serde(default)]
    pos_tags: Option<Vec<String>>,
}

/// Parses a JSONL dataset. `num_classes`, when given, bounds the labels.
pub fn parse_jsonl<R: BufRead>(
    reader: R,
    tokenizer: &dyn Tokenizer,
    num_classes: Option<usize>,
) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::data(format!("line {lineno}: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::data(format!("line {lineno}: {e}")))?;
        let tokens = match (raw.tokens, raw.text) {
            (Some(tokens), _) => tokens,
            (None, Some(text)) => tokenizer.tokenize(&text),
            (None, None) => return Err(Error::data(format!("line {lineno}: missing field `tokens` or `text`"))),
        };
        if raw.label < 0 {
            return Err(Error::data(format!("line {lineno}: negative label {}", raw.label)));
        }
        let label = raw.label as usize;
        if let Some(c) = num_classes {
            if label >= c {
                return Err(Error::data(format!("line {lineno}: label {label} outside {c} classes")));
            }
        }
        let doc = Document {
            id: raw.id,
            tokens,
            label,
            pos_tags: raw.pos_tags,
        };
        doc.validate().map_err(|e| Error::data(format!("line {lineno}: {e}")))?;
        if !seen.insert(doc.id.clone()) {
            log::warn!("line {lineno}: duplicate document id {}", doc.id);
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_jsonl(
    path: impl AsRef<Path>,
    tokenizer: &dyn Tokenizer,
    num_classes: Option<usize>,
) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(BufReader::new(file), tokenizer, num_classes)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

pub fn save_jsonl(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for doc in docs {
        serde_json::to_writer(&mut w, doc)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
