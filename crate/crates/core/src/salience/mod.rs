//! A priori token salience: TextRank, Tf-idf, chi-squared and uniform.
//!
//! Scores are produced per token position and then turned into a strictly
//! positive distribution by [`normalize_salience`] so they can serve as the
//! target of a KL divergence.

mod tables;
mod textrank;

pub use tables::{chi2_salience, tfidf_salience, Chi2Table, DocumentFrequency};
pub use textrank::{build_graph, textrank, textrank_residual, CoocGraph, TextRankConfig};

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{is_special_token, Document};
use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SalienceMethod {
    TextRank,
    Tfidf,
    Chi2,
    Uniform,
}

impl SalienceMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SalienceMethod::TextRank => "textrank",
            SalienceMethod::Tfidf => "tfidf",
            SalienceMethod::Chi2 => "chi2",
            SalienceMethod::Uniform => "uniform",
        }
    }
}

impl fmt::Display for SalienceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SalienceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "textrank" => Ok(SalienceMethod::TextRank),
            "tfidf" => Ok(SalienceMethod::Tfidf),
            "chi2" => Ok(SalienceMethod::Chi2),
            "uniform" => Ok(SalienceMethod::Uniform),
            other => Err(Error::config(format!(
                "unknown salience method `{other}` (expected textrank, tfidf, chi2 or uniform)"
            ))),
        }
    }
}

/// Per-position salience scores for one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalienceMap {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub method: SalienceMethod,
    pub scores: Vec<f64>,
    #[serde(skip, default = "normalized_on_load")]
    pub normalized: bool,
}

fn normalized_on_load() -> bool {
    true
}

impl SalienceMap {
    pub fn new(doc_id: impl Into<String>, method: SalienceMethod, scores: Vec<f64>) -> Self {
        Self {
            doc_id: doc_id.into(),
            method,
            scores,
            normalized: false,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Marks special-token positions of a document.
pub fn special_mask(tokens: &[String]) -> Vec<bool> {
    tokens.iter().map(|t| is_special_token(t)).collect()
}

/// Runs TextRank over the document's co-occurrence graph and copies each
/// word's node score to every position where it occurs.
pub fn textrank_salience(doc: &Document, cfg: &TextRankConfig) -> Result<SalienceMap> {
    let graph = build_graph(&doc.tokens, cfg.window)?;
    let node_scores = textrank(&graph, cfg)?;
    let scores = doc
        .tokens
        .iter()
        .map(|t| graph.node_index(t).map_or(0.0, |i| node_scores[i]))
        .collect();
    Ok(SalienceMap::new(&doc.id, SalienceMethod::TextRank, scores))
}

pub fn uniform_salience(doc: &Document) -> Result<SalienceMap> {
    let mask = special_mask(&doc.tokens);
    if mask.iter().all(|&m| m) {
        return Err(Error::data(format!("document {} has no content tokens", doc.id)));
    }
    let scores = mask.iter().map(|&m| if m { 0.0 } else { 1.0 }).collect();
    Ok(SalienceMap::new(&doc.id, SalienceMethod::Uniform, scores))
}

/// Turns raw scores into a strictly positive distribution.
///
/// Special positions get exactly `epsilon`. Content positions get
/// `epsilon + (1 - n * epsilon) * p_i` where `p` is the content scores
/// rescaled to sum to one (uniform when they are all zero), so every entry
/// is at least `epsilon` and the vector sums to one.
pub fn normalize_salience(map: &SalienceMap, special: &[bool], epsilon: f64) -> Result<SalienceMap> {
    let n = map.scores.len();
    if special.len() != n {
        return Err(Error::data(format!(
            "salience for {}: mask of {} for {} scores",
            map.doc_id,
            special.len(),
            n
        )));
    }
    if !(epsilon > 0.0) || epsilon * n as f64 >= 1.0 {
        return Err(Error::config(format!("epsilon {epsilon} invalid for length {n}")));
    }
    if map.scores.iter().any(|&s| !(s >= 0.0) || !s.is_finite()) {
        return Err(Error::data(format!(
            "salience for {} has negative or non-finite scores",
            map.doc_id
        )));
    }
    let content = special.iter().filter(|&&s| !s).count();
    if content == 0 {
        return Err(Error::data(format!(
            "salience for {} has no content positions",
            map.doc_id
        )));
    }
    let total: f64 = map
        .scores
        .iter()
        .zip(special)
        .filter(|(_, &s)| !s)
        .map(|(v, _)| v)
        .sum();
    let free = 1.0 - epsilon * n as f64;
    let scores = map
        .scores
        .iter()
        .zip(special)
        .map(|(&v, &s)| {
            if s {
                epsilon
            } else if total > 0.0 {
                epsilon + free * v / total
            } else {
                epsilon + free / content as f64
            }
        })
        .collect();
    Ok(SalienceMap {
        doc_id: map.doc_id.clone(),
        method: map.method,
        scores,
        normalized: true,
    })
}

/// Corpus statistics needed by the table-based methods.
#[derive(Debug, Clone, Default)]
pub struct SalienceContext {
    pub textrank: TextRankConfig,
    pub df: Option<DocumentFrequency>,
    pub chi2: Option<Chi2Table>,
    pub epsilon: f64,
}

impl SalienceContext {
    /// Builds whatever statistics `method` needs from the training split.
    pub fn fit(method: SalienceMethod, train: &[Document], num_classes: usize) -> Result<Self> {
        let mut ctx = Self {
            epsilon: DEFAULT_EPSILON,
            ..Default::default()
        };
        match method {
            SalienceMethod::Tfidf => ctx.df = Some(DocumentFrequency::from_docs(train)),
            SalienceMethod::Chi2 => ctx.chi2 = Some(Chi2Table::from_docs(train, num_classes)?),
            SalienceMethod::TextRank | SalienceMethod::Uniform => {}
        }
        Ok(ctx)
    }
}

/// Raw scores for `doc` by `method`, followed by normalization.
pub fn compute_salience(doc: &Document, method: SalienceMethod, ctx: &SalienceContext) -> Result<SalienceMap> {
    let raw = match method {
        SalienceMethod::TextRank => textrank_salience(doc, &ctx.textrank)?,
        SalienceMethod::Uniform => uniform_salience(doc)?,
        SalienceMethod::Tfidf => {
            let df = ctx
                .df
                .as_ref()
                .ok_or_else(|| Error::config("tfidf salience needs document frequencies"))?;
            tfidf_salience(doc, df)
        }
        SalienceMethod::Chi2 => {
            let table = ctx
                .chi2
                .as_ref()
                .ok_or_else(|| Error::config("chi2 salience needs a chi-squared table"))?;
            chi2_salience(doc, table)
        }
    };
    let eps = if ctx.epsilon > 0.0 {
        ctx.epsilon
    } else {
        DEFAULT_EPSILON
    };
    normalize_salience(&raw, &special_mask(&doc.tokens), eps)
}

pub fn write_salience_jsonl(path: impl AsRef<Path>, maps: &[SalienceMap]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for m in maps {
        serde_json::to_writer(&mut w, m)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_salience_jsonl(path: impl AsRef<Path>) -> Result<Vec<SalienceMap>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let map: SalienceMap =
            serde_json::from_str(&line).map_err(|e| Error::data(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        out.push(map);
    }
    Ok(out)
}
