use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::f1_macro;
use super::rationale::{extract_rationale, Thresholder};
use crate::attribution::{attribute, AttributionMethod, AttributionOptions};
use crate::data::{Document, Splits};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, TextClassifier};
use crate::training::{train_from_scratch, TrainConfig};

/// How rationales are scored and cut.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extractor {
    pub method: AttributionMethod,
    pub thresholder: Thresholder,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreshResult {
    pub extractor: Extractor,
    pub test_f1: f64,
    pub test_count: usize,
}

/// Replaces each document's tokens by its rationale, in original order.
///
/// Documents are first cut to what the support model sees.
pub fn extract_rationale_docs(
    support: &TextClassifier,
    docs: &[Document],
    extractor: &Extractor,
    opts: &AttributionOptions,
) -> Result<Vec<Document>> {
    let capacity = support.content_capacity();
    docs.par_iter()
        .map(|doc| {
            let doc = doc.truncated(capacity);
            let scores = attribute(support, extractor.method, &doc.id, &doc.tokens, opts)?;
            let rationale = extract_rationale(&scores, extractor.thresholder, extractor.ratio)?;
            if rationale.positions.is_empty() {
                return Err(Error::data(format!("empty rationale for document {}", doc.id)));
            }
            Ok(Document {
                id: doc.id.clone(),
                tokens: rationale.positions.iter().map(|&p| doc.tokens[p].clone()).collect(),
                label: doc.label,
                pos_tags: doc
                    .pos_tags
                    .as_ref()
                    .map(|tags| rationale.positions.iter().map(|&p| tags[p].clone()).collect()),
            })
        })
        .collect()
}

/// Trains a classifier without salience on `splits` and scores it on test.
pub fn train_and_test(splits: &Splits, arch: &ModelConfig, cfg: &TrainConfig) -> Result<f64> {
    let cfg = TrainConfig {
        lambda: 0.0,
        ..cfg.clone()
    };
    let fitted = train_from_scratch(&splits.train, &splits.dev, None, arch, &cfg)?;
    let predictions = fitted.classifier.predict_all(&splits.test)?;
    let labels: Vec<usize> = splits.test.iter().map(|d| d.label).collect();
    f1_macro(&predictions, &labels, arch.num_classes)
}

/// Support model, extractor and a fresh classifier trained on rationales only.
/// Higher test macro-F1 means more informative rationales.
pub fn fresh_run(
    support: &TextClassifier,
    extractor: &Extractor,
    arch: &ModelConfig,
    cfg: &TrainConfig,
    splits: &Splits,
    opts: &AttributionOptions,
) -> Result<FreshResult> {
    let rationales = Splits {
        train: extract_rationale_docs(support, &splits.train, extractor, opts)?,
        dev: extract_rationale_docs(support, &splits.dev, extractor, opts)?,
        test: extract_rationale_docs(support, &splits.test, extractor, opts)?,
    };
    Ok(FreshResult {
        extractor: *extractor,
        test_f1: train_and_test(&rationales, arch, cfg)?,
        test_count: rationales.test.len(),
    })
}
