use std::collections::HashSet;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Document;
use crate::error::{Error, Result};
use crate::seed::rng_for;

/// Parameters of the planted-keyword benchmark.
///
/// Each document gets a label, `keyword_occurrences` copies of one keyword
/// from that label's keyword set at uniformly random positions, and filler
/// tokens drawn uniformly from `vocab_size` distractor words. With
/// probability `distractor_rate` a document also carries a single copy of a
/// keyword belonging to another class; the true class keeps the majority, so
/// the label stays recoverable from keyword counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_docs: usize,
    pub vocab_size: usize,
    pub seq_len: usize,
    pub num_classes: usize,
    #[serde(default = "default_keywords_per_class")]
    pub keywords_per_class: usize,
    /// Explicit keyword sets, one per class. Generated when absent.
    #[serde(default)]
    pub keywords: Option<Vec<Vec<String>>>,
    #[serde(default = "default_occurrences")]
    pub keyword_occurrences: usize,
    #[serde(default)]
    pub distractor_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_train_frac")]
    pub train_frac: f64,
    #[serde(default = "default_dev_frac")]
    pub dev_frac: f64,
}

fn default_keywords_per_class() -> usize {
    1
}
fn default_occurrences() -> usize {
    1
}
fn default_train_frac() -> f64 {
    0.7
}
fn default_dev_frac() -> f64 {
    0.1
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_docs: 1000,
            vocab_size: 200,
            seq_len: 32,
            num_classes: 2,
            keywords_per_class: 1,
            keywords: None,
            keyword_occurrences: 1,
            distractor_rate: 0.0,
            seed: 0,
            train_frac: 0.7,
            dev_frac: 0.1,
        }
    }
}

impl SyntheticSpec {
    /// The desk-scale benchmark: 350 documents of 32 tokens split 200/50/100,
    /// three keyword copies and a distractor keyword in half the documents.
    pub fn benchmark(seed: u64) -> Self {
        Self {
            num_docs: 350,
            vocab_size: 300,
            seq_len: 32,
            keyword_occurrences: 3,
            distractor_rate: 0.5,
            seed,
            train_frac: 200.0 / 350.0,
            dev_frac: 50.0 / 350.0,
            ..Default::default()
        }
    }

    pub fn keyword_sets(&self) -> Vec<Vec<String>> {
        match &self.keywords {
            Some(k) => k.clone(),
            None => (0..self.num_classes)
                .map(|c| (0..self.keywords_per_class).map(|j| format!("key{c}x{j}")).collect())
                .collect(),
        }
    }

    fn validate(&self, keywords: &[Vec<String>]) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config("synthetic corpus needs at least 2 classes"));
        }
        if keywords.len() != self.num_classes || keywords.iter().any(Vec::is_empty) {
            return Err(Error::config("need one non-empty keyword set per class"));
        }
        let mut seen = HashSet::new();
        for kw in keywords.iter().flatten() {
            if !seen.insert(kw.as_str()) {
                return Err(Error::config(format!("keyword `{kw}` appears in more than one class")));
            }
        }
        if self.vocab_size == 0 {
            return Err(Error::config("vocab_size must be positive"));
        }
        let planted = self.keyword_occurrences + usize::from(self.distractor_rate > 0.0);
        if self.keyword_occurrences == 0 || planted > self.seq_len {
            return Err(Error::config(format!(
                "cannot plant {planted} keywords in sequences of length {}",
                self.seq_len
            )));
        }
        if !(0.0..=1.0).contains(&self.distractor_rate) {
            return Err(Error::config("distractor_rate must lie in [0, 1]"));
        }
        if self.distractor_rate > 0.0 && self.keyword_occurrences < 2 {
            return Err(Error::config(
                "distractor keywords require keyword_occurrences >= 2 to keep labels recoverable",
            ));
        }
        if self.train_frac <= 0.0 || self.dev_frac < 0.0 || self.train_frac + self.dev_frac > 1.0 {
            return Err(Error::config("invalid split fractions"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<Document>,
    pub dev: Vec<Document>,
    pub test: Vec<Document>,
}

pub fn make_synthetic_corpus(spec: &SyntheticSpec) -> Result<Splits> {
    let keywords = spec.keyword_sets();
    spec.validate(&keywords)?;
    let mut rng = rng_for(spec.seed, "synthetic-corpus");

    let mut docs = Vec::with_capacity(spec.num_docs);
    for i in 0..spec.num_docs {
        let label = i % spec.num_classes;
        let mut tokens: Vec<String> = (0..spec.seq_len)
            .map(|_| format!("w{}", rng.random_range(0..spec.vocab_size)))
            .collect();
        let distract = spec.distractor_rate > 0.0 && rng.random_bool(spec.distractor_rate);
        let planted = spec.keyword_occurrences + usize::from(distract);
        let positions = sample(&mut rng, spec.seq_len, planted).into_vec();
        let own = &keywords[label];
        let keyword = &own[rng.random_range(0..own.len())];
        for &p in &positions[..spec.keyword_occurrences] {
            tokens[p] = keyword.clone();
        }
        if distract {
            let other = (label + rng.random_range(1..spec.num_classes)) % spec.num_classes;
            let set = &keywords[other];
            tokens[positions[spec.keyword_occurrences]] = set[rng.random_range(0..set.len())].clone();
        }
        docs.push(Document {
            id: format!("syn-{}-{i:05}", spec.seed),
            tokens,
            label,
            pos_tags: None,
        });
    }

    let n_train = (spec.num_docs as f64 * spec.train_frac).round() as usize;
    let n_dev = ((spec.num_docs as f64 * spec.dev_frac).round() as usize).min(spec.num_docs - n_train);
    let test = docs.split_off(n_train + n_dev);
    let dev = docs.split_off(n_train);
    Ok(Splits { train: docs, dev, test })
}

/// Bayes classifier for the synthetic corpus: the class whose keywords occur
/// most often. Returns `None` when no keyword is present or the count ties.
pub fn keyword_oracle(keywords: &[Vec<String>], tokens: &[String]) -> Option<usize> {
    let counts: Vec<usize> = keywords
        .iter()
        .map(|set| tokens.iter().filter(|t| set.contains(t)).count())
        .collect();
    let max = *counts.iter().max()?;
    if max == 0 || counts.iter().filter(|&&c| c == max).count() > 1 {
        return None;
    }
    counts.iter().position(|&c| c == max)
}
