use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Document, CLS_TOKEN, PAD_TOKEN, SEP_TOKEN, UNK_TOKEN};
use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const CLS_ID: usize = 1;
pub const SEP_ID: usize = 2;
pub const UNK_ID: usize = 3;

/// Token to id map with PAD, CLS, SEP and UNK reserved at ids 0 through 3.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Wraps content ids as `[CLS] ids [SEP]`.
    pub fn wrap(content: &[usize]) -> Vec<usize> {
        let mut out = Vec::with_capacity(content.len() + 2);
        out.push(CLS_ID);
        out.extend_from_slice(content);
        out.push(SEP_ID);
        out
    }
}

/// Builds a vocabulary from training documents.
///
/// Tokens seen fewer than `min_freq` times are left out and map to UNK. Ids
/// are assigned by descending frequency, then lexicographically.
pub fn build_vocab(train_docs: &[Document], min_freq: usize) -> Result<Vocabulary> {
    if train_docs.is_empty() {
        return Err(Error::data("cannot build a vocabulary from an empty training split"));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in train_docs {
        for t in &doc.tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let reserved = [PAD_TOKEN, CLS_TOKEN, SEP_TOKEN, UNK_TOKEN];
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_freq.max(1) && !reserved.contains(t))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut tokens: Vec<String> = reserved.iter().map(|s| s.to_string()).collect();
    tokens.extend(ranked.into_iter().map(|(t, _)| t.to_string()));
    Ok(Vocabulary::from(tokens))
}
