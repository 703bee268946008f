use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::erasure::ranking;
use crate::attribution::AttributionScores;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Thresholder {
    TopK,
    Contiguous,
}

impl Thresholder {
    pub fn as_str(self) -> &'static str {
        match self {
            Thresholder::TopK => "topk",
            Thresholder::Contiguous => "contiguous",
        }
    }
}

impl fmt::Display for Thresholder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Thresholder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topk" => Ok(Thresholder::TopK),
            "contiguous" => Ok(Thresholder::Contiguous),
            other => Err(Error::config(format!(
                "unknown thresholder `{other}` (expected topk or contiguous)"
            ))),
        }
    }
}

/// Kept token positions, in original order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationaleSet {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub thresholder: Thresholder,
    pub ratio: f64,
    pub positions: Vec<usize>,
}

/// `ceil(ratio * t)`, guarded against float noise.
pub fn rationale_length(t: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::config(format!("rationale ratio {ratio} outside (0, 1]")));
    }
    Ok(((ratio * t as f64 - 1e-9).ceil().max(1.0) as usize).min(t))
}

/// The `k` highest-scoring positions, earlier first on ties, returned in
/// ascending position order.
pub fn topk_positions(scores: &[f64], k: usize) -> Vec<usize> {
    let mut keep: Vec<usize> = ranking(scores).into_iter().take(k).collect();
    keep.sort_unstable();
    keep
}

/// Start of the leftmost length-`k` window with the largest score sum.
pub fn best_window(scores: &[f64], k: usize) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for start in 0..=scores.len().saturating_sub(k) {
        let sum: f64 = scores[start..start + k].iter().sum();
        if sum > best.1 {
            best = (start, sum);
        }
    }
    best.0
}

pub fn topk_rationale(scores: &AttributionScores, ratio: f64) -> Result<RationaleSet> {
    let k = rationale_length(scores.scores.len(), ratio)?;
    Ok(RationaleSet {
        doc_id: scores.doc_id.clone(),
        thresholder: Thresholder::TopK,
        ratio,
        positions: topk_positions(&scores.scores, k),
    })
}

pub fn contiguous_rationale(scores: &AttributionScores, ratio: f64) -> Result<RationaleSet> {
    let k = rationale_length(scores.scores.len(), ratio)?;
    let start = best_window(&scores.scores, k);
    Ok(RationaleSet {
        doc_id: scores.doc_id.clone(),
        thresholder: Thresholder::Contiguous,
        ratio,
        positions: (start..start + k).collect(),
    })
}

pub fn extract_rationale(scores: &AttributionScores, thresholder: Thresholder, ratio: f64) -> Result<RationaleSet> {
    match thresholder {
        Thresholder::TopK => topk_rationale(scores, ratio),
        Thresholder::Contiguous => contiguous_rationale(scores, ratio),
    }
}
