use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::erasure::ErasureResult;
use super::fresh::Extractor;
use super::pos::TagImportance;
use super::stats::{t_test_two_sample, wilcoxon_rank_sum, TestKind, TestResult};
use crate::attribution::AttributionMethod;
use crate::error::{Error, Result};

pub const REPORT_VERSION: u32 = 1;
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErasureSummary {
    pub method: AttributionMethod,
    pub mean_fraction: f64,
    pub count: usize,
    /// Share of documents whose prediction never changed.
    pub no_flip_rate: f64,
    /// Per-document fractions, in document order.
    pub fractions: Vec<f64>,
}

impl ErasureSummary {
    pub fn from_results(method: AttributionMethod, results: &[ErasureResult]) -> Result<Self> {
        if results.is_empty() {
            return Err(Error::data(format!("no erasure results for {method}")));
        }
        let fractions: Vec<f64> = results.iter().map(|r| r.flip_fraction).collect();
        let n = results.len() as f64;
        Ok(Self {
            method,
            mean_fraction: fractions.iter().sum::<f64>() / n,
            count: results.len(),
            no_flip_rate: results.iter().filter(|r| !r.flipped).count() as f64 / n,
            fractions,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreshSummary {
    pub extractor: Extractor,
    pub mean_f1: f64,
    pub count: usize,
    pub f1_per_seed: Vec<f64>,
}

impl FreshSummary {
    pub fn from_runs(extractor: Extractor, f1s: Vec<f64>) -> Result<Self> {
        if f1s.is_empty() {
            return Err(Error::data("no FRESH runs"));
        }
        Ok(Self {
            extractor,
            mean_f1: f1s.iter().sum::<f64>() / f1s.len() as f64,
            count: f1s.len(),
            f1_per_seed: f1s,
        })
    }

    fn key(&self) -> String {
        format!(
            "{}/{}/{}",
            self.extractor.method, self.extractor.thresholder, self.extractor.ratio
        )
    }
}

/// Faithfulness results for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub dataset: String,
    pub step: f64,
    pub seed: u64,
    pub erasure: Vec<ErasureSummary>,
    #[serde(default)]
    pub fresh: Vec<FreshSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<BTreeMap<String, BTreeMap<String, TagImportance>>>,
}

impl EvalReport {
    pub fn new(dataset: impl Into<String>, step: f64, seed: u64) -> Self {
        Self {
            version: REPORT_VERSION,
            dataset: dataset.into(),
            step,
            seed,
            erasure: Vec::new(),
            fresh: Vec::new(),
            pos: None,
        }
    }

    /// Plain-text tables: attribution methods as rows, the dataset as column.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if !self.erasure.is_empty() {
            let _ = writeln!(
                out,
                "Fraction of tokens removed before a decision flip (lower is better)"
            );
            let _ = writeln!(
                out,
                "{:<22} {:>14} {:>8} {:>10}",
                "method", self.dataset, "n", "no-flip"
            );
            for e in &self.erasure {
                let _ = writeln!(
                    out,
                    "{:<22} {:>14.4} {:>8} {:>10.4}",
                    e.method.as_str(),
                    e.mean_fraction,
                    e.count,
                    e.no_flip_rate
                );
            }
        }
        if !self.fresh.is_empty() {
            let _ = writeln!(
                out,
                "\nFRESH macro-F1 of classifiers trained on rationales (higher is better)"
            );
            let _ = writeln!(out, "{:<34} {:>14} {:>8}", "extractor", self.dataset, "n");
            for f in &self.fresh {
                let _ = writeln!(out, "{:<34} {:>14.4} {:>8}", f.key(), f.mean_f1, f.count);
            }
        }
        if let Some(pos) = &self.pos {
            for (method, tags) in pos {
                let _ = writeln!(out, "\nMean importance by part-of-speech tag ({method})");
                let _ = writeln!(out, "{:<10} {:>12} {:>8}", "tag", "mean", "n");
                for (tag, imp) in tags {
                    let _ = writeln!(out, "{:<10} {:>12.6} {:>8}", tag, imp.mean, imp.count);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    /// `erasure` or `fresh`.
    pub section: String,
    pub row: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub result: TestResult,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub dataset: String,
    pub test: TestKind,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Significance ({:?}, alpha {SIGNIFICANCE_LEVEL}) on {}",
            self.test, self.dataset
        );
        let _ = writeln!(
            out,
            "{:<9} {:<34} {:>10} {:>10} {:>12} {:>4}",
            "section", "row", "mean A", "mean B", "p", ""
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<9} {:<34} {:>10.4} {:>10.4} {:>12.6} {:>4}",
                r.section,
                r.row,
                r.mean_a,
                r.mean_b,
                r.result.p_value,
                if r.significant { "*" } else { "" }
            );
        }
        out
    }
}

fn run_test(test: TestKind, a: &[f64], b: &[f64]) -> Result<TestResult> {
    match test {
        TestKind::WilcoxonRankSum => wilcoxon_rank_sum(a, b),
        TestKind::WelchT => t_test_two_sample(a, b),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Tests every erasure method and FRESH configuration present in both
/// reports. Rows present in only one report are skipped with a warning.
pub fn compare_reports(a: &EvalReport, b: &EvalReport, test: TestKind) -> Result<Comparison> {
    if a.dataset != b.dataset {
        return Err(Error::data(format!(
            "reports cover different datasets: `{}` and `{}`",
            a.dataset, b.dataset
        )));
    }
    let mut rows = Vec::new();
    for ea in &a.erasure {
        let Some(eb) = b.erasure.iter().find(|e| e.method == ea.method) else {
            log::warn!("method {} missing from the second report; row omitted", ea.method);
            continue;
        };
        let result = run_test(test, &ea.fractions, &eb.fractions)?;
        rows.push(ComparisonRow {
            section: "erasure".into(),
            row: ea.method.to_string(),
            mean_a: mean(&ea.fractions),
            mean_b: mean(&eb.fractions),
            significant: result.p_value < SIGNIFICANCE_LEVEL,
            result,
        });
    }
    for eb in &b.erasure {
        if !a.erasure.iter().any(|e| e.method == eb.method) {
            log::warn!("method {} missing from the first report; row omitted", eb.method);
        }
    }
    for fa in &a.fresh {
        let Some(fb) = b.fresh.iter().find(|f| f.extractor == fa.extractor) else {
            log::warn!("FRESH row {} missing from the second report; row omitted", fa.key());
            continue;
        };
        let result = match run_test(test, &fa.f1_per_seed, &fb.f1_per_seed) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("FRESH row {} skipped: {e}", fa.key());
                continue;
            }
        };
        rows.push(ComparisonRow {
            section: "fresh".into(),
            row: fa.key(),
            mean_a: fa.mean_f1,
            mean_b: fb.mean_f1,
            significant: result.p_value < SIGNIFICANCE_LEVEL,
            result,
        });
    }
    Ok(Comparison {
        dataset: a.dataset.clone(),
        test,
        rows,
    })
}
