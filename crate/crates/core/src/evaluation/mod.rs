//! Faithfulness metrics: erasure decision flips, FRESH rationales, macro-F1,
//! significance tests and part-of-speech aggregation.

mod erasure;
mod fresh;
mod metrics;
mod pos;
mod rationale;
mod report;
pub mod stats;

use rayon::prelude::*;

pub use erasure::{decision_flip_fraction, erasure_budget, ranking, Classifier, ErasureResult, DEFAULT_STEP};
pub use fresh::{extract_rationale_docs, fresh_run, train_and_test, Extractor, FreshResult};
pub use metrics::f1_macro;
pub use pos::{pos_importance, TagImportance};
pub use rationale::{
    best_window, contiguous_rationale, extract_rationale, rationale_length, topk_positions, topk_rationale,
    RationaleSet, Thresholder,
};
pub use report::{
    compare_reports, Comparison, ComparisonRow, ErasureSummary, EvalReport, FreshSummary, REPORT_VERSION,
    SIGNIFICANCE_LEVEL,
};
pub use stats::{t_test_two_sample, wilcoxon_rank_sum, wilcoxon_rank_sum_normal, TestKind, TestResult};

use crate::attribution::{attribute, AttributionMethod, AttributionOptions, AttributionScores};
use crate::data::Document;
use crate::error::Result;
use crate::model::TextClassifier;

/// Attributions and erasure results for every document, in document order.
pub fn erasure_over(
    model: &TextClassifier,
    docs: &[Document],
    method: AttributionMethod,
    opts: &AttributionOptions,
    step: f64,
) -> Result<(Vec<AttributionScores>, Vec<ErasureResult>)> {
    let pairs: Vec<(AttributionScores, ErasureResult)> = docs
        .par_iter()
        .map(|doc| {
            let scores = attribute(model, method, &doc.id, &doc.tokens, opts)?;
            let result = decision_flip_fraction(model, &doc.tokens, &scores, step)?;
            Ok((scores, result))
        })
        .collect::<Result<_>>()?;
    Ok(pairs.into_iter().unzip())
}

/// Mean flip fraction of `method` over `docs`.
pub fn mean_flip_fraction(
    model: &TextClassifier,
    docs: &[Document],
    method: AttributionMethod,
    opts: &AttributionOptions,
    step: f64,
) -> Result<f64> {
    let (_, results) = erasure_over(model, docs, method, opts, step)?;
    Ok(ErasureSummary::from_results(method, &results)?.mean_fraction)
}
