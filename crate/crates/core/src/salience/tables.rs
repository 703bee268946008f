use std::collections::{HashMap, HashSet};

use super::{SalienceMap, SalienceMethod};
use crate::data::{is_special_token, Document};
use crate::error::{Error, Result};

/// Document frequencies over the training split.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DocumentFrequency {
    pub num_docs: usize,
    pub df: HashMap<String, usize>,
}

impl DocumentFrequency {
    pub fn from_docs(docs: &[Document]) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        for doc in docs {
            let distinct: HashSet<&str> = doc.tokens.iter().map(String::as_str).collect();
            for t in distinct {
                *df.entry(t.to_string()).or_default() += 1;
            }
        }
        Self {
            num_docs: docs.len(),
            df,
        }
    }

    /// Smoothed inverse document frequency `ln((N + 1) / (df + 1)) + 1`.
    /// Unseen tokens count as `df = 0`.
    pub fn idf(&self, token: &str) -> f64 {
        let df = self.df.get(token).copied().unwrap_or(0) as f64;
        ((self.num_docs as f64 + 1.0) / (df + 1.0)).ln() + 1.0
    }
}

/// Tf-idf score of each position's token: raw in-document count times the
/// corpus-level smoothed idf.
pub fn tfidf_salience(doc: &Document, stats: &DocumentFrequency) -> SalienceMap {
    let mut tf: HashMap<&str, usize> = HashMap::new();
    for t in &doc.tokens {
        *tf.entry(t.as_str()).or_default() += 1;
    }
    let scores = doc
        .tokens
        .iter()
        .map(|t| {
            if is_special_token(t) {
                0.0
            } else {
                tf[t.as_str()] as f64 * stats.idf(t)
            }
        })
        .collect();
    SalienceMap::new(&doc.id, SalienceMethod::Tfidf, scores)
}

/// Per-token chi-squared statistic of the presence-by-class contingency table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Chi2Table {
    pub scores: HashMap<String, f64>,
}

impl Chi2Table {
    pub fn from_docs(docs: &[Document], num_classes: usize) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::data("chi2 table needs a non-empty training split"));
        }
        let mut class_totals = vec![0usize; num_classes];
        let mut present: HashMap<&str, Vec<usize>> = HashMap::new();
        for doc in docs {
            if doc.label >= num_classes {
                return Err(Error::data(format!(
                    "document {}: label {} outside {num_classes} classes",
                    doc.id, doc.label
                )));
            }
            class_totals[doc.label] += 1;
            let distinct: HashSet<&str> = doc.tokens.iter().map(String::as_str).collect();
            for t in distinct {
                present.entry(t).or_insert_with(|| vec![0; num_classes])[doc.label] += 1;
            }
        }
        let n = docs.len() as f64;
        let scores = present
            .into_iter()
            .map(|(tok, counts)| {
                let with: usize = counts.iter().sum();
                let without = docs.len() - with;
                let mut chi2 = 0.0;
                for (c, &total) in class_totals.iter().enumerate() {
                    for (observed, row_total) in [(counts[c], with), (total - counts[c], without)] {
                        let expected = row_total as f64 * total as f64 / n;
                        if expected > 0.0 {
                            let diff = observed as f64 - expected;
                            chi2 += diff * diff / expected;
                        }
                    }
                }
                (tok.to_string(), chi2)
            })
            .collect();
        Ok(Self { scores })
    }

    pub fn get(&self, token: &str) -> f64 {
        self.scores.get(token).copied().unwrap_or(0.0)
    }
}

pub fn chi2_salience(doc: &Document, table: &Chi2Table) -> SalienceMap {
    let scores = doc
        .tokens
        .iter()
        .map(|t| if is_special_token(t) { 0.0 } else { table.get(t) })
        .collect();
    SalienceMap::new(&doc.id, SalienceMethod::Chi2, scores)
}
