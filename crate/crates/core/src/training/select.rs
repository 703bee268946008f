use serde::{Deserialize, Serialize};

use super::{train_from_scratch, FitOutput, TrainConfig};
use crate::attribution::{AttributionMethod, AttributionOptions};
use crate::data::Document;
use crate::error::{Error, Result};
use crate::evaluation::{mean_flip_fraction, DEFAULT_STEP};
use crate::model::ModelConfig;
use crate::salience::SalienceMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaCandidate {
    pub lambda: f64,
    pub best_epoch: usize,
    pub dev_f1: f64,
    /// Mean dev decision-flip fraction under attention ranking.
    pub dev_flip_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct LambdaSelection {
    pub chosen: f64,
    pub candidates: Vec<LambdaCandidate>,
    /// The fitted model for the chosen lambda.
    pub fit: FitOutput,
}

/// Fits one model per candidate and keeps the one whose attention flips dev
/// decisions with the fewest removed tokens. Earlier candidates win ties.
pub fn select_lambda(
    candidates: &[f64],
    train: &[Document],
    dev: &[Document],
    salience: Option<&[SalienceMap]>,
    arch: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<LambdaSelection> {
    if candidates.is_empty() {
        return Err(Error::config("no lambda candidates"));
    }
    let opts = AttributionOptions {
        seed: cfg.seed,
        ..Default::default()
    };
    let mut rows = Vec::with_capacity(candidates.len());
    let mut best: Option<(f64, f64, FitOutput)> = None;
    for &lambda in candidates {
        let run = TrainConfig { lambda, ..cfg.clone() };
        let fit = train_from_scratch(train, dev, salience, arch, &run)?;
        let flip = mean_flip_fraction(&fit.classifier, dev, AttributionMethod::Alpha, &opts, DEFAULT_STEP)?;
        log::info!("lambda {lambda}: dev flip fraction {flip:.4}");
        rows.push(LambdaCandidate {
            lambda,
            best_epoch: fit.best_epoch,
            dev_f1: fit.metrics[fit.best_epoch - 1].dev_f1,
            dev_flip_fraction: flip,
        });
        if best.as_ref().is_none_or(|(f, _, _)| flip < *f) {
            best = Some((flip, lambda, fit));
        }
    }
    let (_, chosen, fit) = best.expect("non-empty candidates");
    Ok(LambdaSelection {
        chosen,
        candidates: rows,
        fit,
    })
}
