use serde::{Deserialize, Serialize};

use crate::attribution::{AttributionMethod, AttributionScores};
use crate::error::{Error, Result};
use crate::model::TextClassifier;

/// Anything that maps content tokens to a class.
pub trait Classifier: Sync {
    fn predict(&self, tokens: &[String]) -> Result<usize>;
}

impl Classifier for TextClassifier {
    fn predict(&self, tokens: &[String]) -> Result<usize> {
        Ok(crate::model::argmax(&self.logits(tokens)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErasureResult {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub method: AttributionMethod,
    pub flip_fraction: f64,
    pub flipped: bool,
}

pub const DEFAULT_STEP: f64 = 0.05;

/// Positions ordered by descending score, earlier position first on ties.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Tokens removed after `k` erasure steps: `ceil(k * step * t)`, capped at `t`.
pub fn erasure_budget(k: usize, step: f64, t: usize) -> usize {
    ((k as f64 * step * t as f64 - 1e-9).ceil().max(0.0) as usize).min(t)
}

/// Deletes tokens in descending score order, `step` of the length at a time,
/// and reports the first fraction at which the predicted class changes.
///
/// `scores` covers the leading content tokens the model sees; later tokens
/// are dropped. Never flipping reports 1.0 with `flipped == false`.
pub fn decision_flip_fraction<C: Classifier + ?Sized>(
    model: &C,
    tokens: &[String],
    scores: &AttributionScores,
    step: f64,
) -> Result<ErasureResult> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::config(format!("erasure step {step} outside (0, 1]")));
    }
    let t = scores.scores.len();
    if t == 0 {
        return Err(Error::data(format!("document {} has no content tokens", scores.doc_id)));
    }
    if t > tokens.len() {
        return Err(Error::data(format!(
            "document {}: {t} scores for {} tokens",
            scores.doc_id,
            tokens.len()
        )));
    }
    let tokens = &tokens[..t];
    let original = model.predict(tokens)?;
    let order = ranking(&scores.scores);
    let max_k = (1.0 / step - 1e-9).ceil() as usize;
    let mut removed = vec![false; t];
    let mut done = 0;
    for k in 1..=max_k {
        let budget = erasure_budget(k, step, t);
        for &p in &order[done..budget.max(done)] {
            removed[p] = true;
        }
        done = done.max(budget);
        let kept: Vec<String> = tokens
            .iter()
            .zip(&removed)
            .filter(|(_, &r)| !r)
            .map(|(tok, _)| tok.clone())
            .collect();
        if model.predict(&kept)? != original {
            return Ok(ErasureResult {
                doc_id: scores.doc_id.clone(),
                method: scores.method,
                flip_fraction: (k as f64 * step).min(1.0),
                flipped: true,
            });
        }
    }
    Ok(ErasureResult {
        doc_id: scores.doc_id.clone(),
        method: scores.method,
        flip_fraction: 1.0,
        flipped: false,
    })
}
