//! Joint cross-entropy and salience objective, optimizer and training loop.

mod loss;
mod optim;
mod select;

use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use loss::{joint_loss, joint_loss_on_graph, kl_on_graph, kl_salience_loss, GraphLoss, LossBreakdown};
pub use optim::{linear_decay, AdamW};
pub use select::{select_lambda, LambdaCandidate, LambdaSelection};

use crate::data::{build_vocab, Document};
use crate::error::{Error, ErrorKind, Result};
use crate::evaluation::f1_macro;
use crate::model::{alpha_on_graph, content_positions, ModelConfig, TextClassifier, Transformer, Weights, HEAD_PREFIX};
use crate::salience::{compute_salience, SalienceContext, SalienceMap, SalienceMethod};
use crate::seed::rng_for;
use crate::tensor::{Graph, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub lr_model: f64,
    pub lr_head: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub salience_method: SalienceMethod,
    /// Linear decay of both learning rates to zero over all steps.
    pub scheduler: bool,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
}

fn default_weight_decay() -> f64 {
    0.01
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            lr_model: 1e-3,
            lr_head: 1e-3,
            epochs: 10,
            batch_size: 16,
            seed: 0,
            salience_method: SalienceMethod::TextRank,
            scheduler: true,
            weight_decay: default_weight_decay(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::config(format!(
                "lambda {} must be finite and non-negative",
                self.lambda
            )));
        }
        for (name, lr) in [("lr_model", self.lr_model), ("lr_head", self.lr_head)] {
            if !(lr > 0.0) || !lr.is_finite() {
                return Err(Error::config(format!("{name} {lr} must be positive")));
            }
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch_size must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay must be non-negative"));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub l_c: f64,
    /// Mean KL over the epoch, when salience maps were supplied.
    pub l_sal: Option<f64>,
    pub dev_f1: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    /// Weights from the epoch with the best dev macro-F1.
    pub classifier: TextClassifier,
    pub metrics: Vec<EpochMetrics>,
    pub best_epoch: usize,
}

/// Truncates documents to what the model sees and computes normalized
/// salience on the truncated tokens.
pub fn prepare_salience(
    docs: &[Document],
    method: SalienceMethod,
    num_classes: usize,
    max_tokens: usize,
) -> Result<Vec<SalienceMap>> {
    let truncated: Vec<Document> = docs.iter().map(|d| d.truncated(max_tokens)).collect();
    let ctx = SalienceContext::fit(method, &truncated, num_classes)?;
    truncated.iter().map(|d| compute_salience(d, method, &ctx)).collect()
}

/// Builds a vocabulary from the truncated training split, initializes a
/// fresh model from `cfg.seed` and fits it.
///
/// `arch.vocab_size` is replaced by the size of the built vocabulary.
pub fn train_from_scratch(
    train: &[Document],
    dev: &[Document],
    salience: Option<&[SalienceMap]>,
    arch: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<FitOutput> {
    let max_tokens = arch.max_len.saturating_sub(2);
    let truncated: Vec<Document> = train.iter().map(|d| d.truncated(max_tokens)).collect();
    let vocab = build_vocab(&truncated, 1)?;
    let config = ModelConfig {
        vocab_size: vocab.len(),
        ..*arch
    };
    let classifier = TextClassifier::new(Transformer::init(config, cfg.seed)?, vocab)?;
    fit(&truncated, dev, salience, classifier, cfg)
}

struct Example {
    ids: Vec<usize>,
    label: usize,
    sigma: Option<Vec<f64>>,
}

fn examples(
    classifier: &TextClassifier,
    docs: &[Document],
    salience: Option<&[SalienceMap]>,
    require_salience: bool,
) -> Result<Vec<Example>> {
    let num_classes = classifier.model.config().num_classes;
    let by_id: Option<HashMap<&str, &SalienceMap>> =
        salience.map(|maps| maps.iter().map(|m| (m.doc_id.as_str(), m)).collect());
    if require_salience {
        let Some(by_id) = &by_id else {
            return Err(Error::config("lambda > 0 requires salience maps"));
        };
        let missing: Vec<&str> = docs
            .iter()
            .filter(|d| !by_id.contains_key(d.id.as_str()))
            .map(|d| d.id.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(Error::data(format!(
                "no salience for documents: {}",
                missing.join(", ")
            )));
        }
    }
    docs.iter()
        .map(|d| {
            if d.label >= num_classes {
                return Err(Error::data(format!(
                    "document {}: label {} outside {num_classes} classes",
                    d.id, d.label
                )));
            }
            let ids = classifier.encode(&d.tokens);
            let sigma = match by_id.as_ref().and_then(|m| m.get(d.id.as_str())) {
                Some(map) => {
                    if map.len() != ids.len() - 2 {
                        return Err(Error::data(format!(
                            "document {}: salience covers {} tokens, model sees {}",
                            d.id,
                            map.len(),
                            ids.len() - 2
                        )));
                    }
                    Some(map.scores.clone())
                }
                None => None,
            };
            Ok(Example {
                ids,
                label: d.label,
                sigma,
            })
        })
        .collect()
}

fn with_context(epoch: usize, step: usize, err: Error) -> Error {
    match err.kind() {
        ErrorKind::Numerical => Error::numerical(format!("epoch {epoch}, step {step}: {err}")),
        _ => err,
    }
}

/// Trains a copy of `classifier` and keeps the epoch with the best dev macro-F1.
///
/// With `lambda == 0` the salience term is left off the tape; supplied maps
/// are then only used to log `l_sal`.
pub fn fit(
    train: &[Document],
    dev: &[Document],
    salience: Option<&[SalienceMap]>,
    classifier: TextClassifier,
    cfg: &TrainConfig,
) -> Result<FitOutput> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::data("empty training split"));
    }
    if dev.is_empty() {
        return Err(Error::data("empty dev split"));
    }
    let regularized = cfg.lambda > 0.0;
    let data = examples(&classifier, train, salience, regularized)?;
    let dev_labels: Vec<usize> = dev.iter().map(|d| d.label).collect();
    let num_classes = classifier.model.config().num_classes;

    let mut current = classifier.clone();
    let mut opt = AdamW::new(current.model.weights(), cfg.weight_decay);
    let mut shuffle_rng = rng_for(cfg.seed, "train-shuffle");
    let mut dropout_rng = rng_for(cfg.seed, "train-dropout");
    let batches_per_epoch = data.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * batches_per_epoch;
    let mut order: Vec<usize> = (0..data.len()).collect();

    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, TextClassifier)> = None;
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut lc_sum, mut lsal_sum, mut lsal_count) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &data[i]).collect();
            let (grads, l_c, l_sal) = batch_gradients(&current, &batch, cfg.lambda, &mut dropout_rng)
                .map_err(|e| with_context(epoch, step, e))?;
            if !l_c.is_finite() {
                return Err(Error::numerical(format!("epoch {epoch}, step {step}: loss is {l_c}")));
            }
            let scale = if cfg.scheduler {
                linear_decay(step, total_steps)
            } else {
                1.0
            };
            let (lr_model, lr_head) = (cfg.lr_model * scale, cfg.lr_head * scale);
            opt.step(current.model.weights_mut(), &grads, |name| {
                if name.starts_with(HEAD_PREFIX) {
                    lr_head
                } else {
                    lr_model
                }
            })
            .map_err(|e| with_context(epoch, step, e))?;
            lc_sum += l_c * batch.len() as f64;
            if let Some(v) = l_sal {
                lsal_sum += v * batch.len() as f64;
                lsal_count += batch.len();
            }
            step += 1;
        }
        let predictions = current.predict_all(dev)?;
        let dev_f1 = f1_macro(&predictions, &dev_labels, num_classes)?;
        let record = EpochMetrics {
            epoch,
            l_c: lc_sum / data.len() as f64,
            l_sal: (lsal_count > 0).then(|| lsal_sum / lsal_count as f64),
            dev_f1,
        };
        let l_sal = record.l_sal.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"));
        log::info!(
            "epoch {epoch}: l_c {:.6} l_sal {l_sal} dev_f1 {:.4}",
            record.l_c,
            record.dev_f1
        );
        metrics.push(record);
        if best.as_ref().is_none_or(|(f, _, _)| dev_f1 >= *f) {
            best = Some((dev_f1, epoch, current.clone()));
        }
    }
    let (_, best_epoch, classifier) = best.expect("at least one epoch");
    Ok(FitOutput {
        classifier,
        metrics,
        best_epoch,
    })
}

/// Gradients of the batch objective, its cross-entropy and (when salience is
/// available) its mean KL.
fn batch_gradients(
    classifier: &TextClassifier,
    batch: &[&Example],
    lambda: f64,
    dropout_rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<(Weights<Tensor>, f64, Option<f64>)> {
    let model = &classifier.model;
    let mut g = Graph::new();
    let w = model.bind(&mut g, true)?;
    let mut logits = Vec::with_capacity(batch.len());
    let mut alphas = Vec::new();
    let mut sigmas: Vec<&[f64]> = Vec::new();
    let mut logged_kl = Vec::new();
    for ex in batch {
        let pad = vec![false; ex.ids.len()];
        let enc = model.forward_ids(&mut g, &w, &ex.ids, &pad, Some(&mut *dropout_rng))?;
        logits.push(enc.logits);
        let Some(sigma) = ex.sigma.as_deref() else { continue };
        let last = enc.attention.last().expect("at least one layer");
        if lambda > 0.0 {
            alphas.push(alpha_on_graph(&mut g, last, &content_positions(&pad))?);
            sigmas.push(sigma);
        } else {
            logged_kl.push(detached_kl(&g, last, &pad, sigma)?);
        }
    }
    let labels: Vec<usize> = batch.iter().map(|ex| ex.label).collect();
    let loss = joint_loss_on_graph(&mut g, &logits, &labels, &alphas, &sigmas, lambda)?;
    let grads = g.backward(loss.total)?;
    let grads = w.map(|_, &v| grads.get(v).expect("parameter gradient").clone());
    let l_c = g.value(loss.l_c).data()[0];
    let l_sal = match loss.l_sal {
        Some(v) => Some(g.value(v).data()[0]),
        None if logged_kl.is_empty() => None,
        None => Some(logged_kl.iter().sum::<f64>() / logged_kl.len() as f64),
    };
    Ok((grads, l_c, l_sal))
}

/// KL of the current attention from `sigma`, computed off the tape.
fn detached_kl(g: &Graph, last: &[crate::tensor::Var], pad: &[bool], sigma: &[f64]) -> Result<f64> {
    let content = content_positions(pad);
    let heads = last.len() as f64;
    let raw: Vec<f64> = content
        .iter()
        .map(|&j| last.iter().map(|&a| g.value(a).get(0, j)).sum::<f64>() / heads)
        .collect();
    let total: f64 = raw.iter().sum();
    let alpha: Vec<f64> = raw.iter().map(|v| v / total).collect();
    loss::kl_values(&alpha, sigma)
}
