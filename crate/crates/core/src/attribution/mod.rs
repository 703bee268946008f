//! Per-token importance scores: attention, attention times its gradient,
//! input times gradient and integrated gradients.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{argmax, content_positions, TextClassifier};
use crate::seed::rng_for;
use crate::tensor::{Graph, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionMethod {
    Alpha,
    AlphaGrad,
    InputXGrad,
    IntegratedGradients,
    /// Seeded random ranking, used as a reference row.
    Random,
}

impl AttributionMethod {
    /// The four gradient- and attention-based methods.
    pub const EXPLANATORY: [AttributionMethod; 4] = [
        AttributionMethod::Alpha,
        AttributionMethod::AlphaGrad,
        AttributionMethod::InputXGrad,
        AttributionMethod::IntegratedGradients,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttributionMethod::Alpha => "alpha",
            AttributionMethod::AlphaGrad => "alpha_grad",
            AttributionMethod::InputXGrad => "input_x_grad",
            AttributionMethod::IntegratedGradients => "integrated_gradients",
            AttributionMethod::Random => "random",
        }
    }
}

impl fmt::Display for AttributionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttributionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(AttributionMethod::Alpha),
            "alpha_grad" => Ok(AttributionMethod::AlphaGrad),
            "input_x_grad" => Ok(AttributionMethod::InputXGrad),
            "ig" | "integrated_gradients" => Ok(AttributionMethod::IntegratedGradients),
            "random" => Ok(AttributionMethod::Random),
            other => Err(Error::config(format!(
                "unknown attribution method `{other}` (expected alpha, alpha_grad, input_x_grad, ig or random)"
            ))),
        }
    }
}

/// Importance of each content token of one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionScores {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub method: AttributionMethod,
    pub predicted_class: usize,
    pub scores: Vec<f64>,
}

impl AttributionScores {
    /// Scores replaced by their magnitudes, for ranking by |score| instead of
    /// the signed default.
    pub fn absolute(&self) -> Self {
        Self {
            scores: self.scores.iter().map(|v| v.abs()).collect(),
            ..self.clone()
        }
    }
}

/// Forward pass recorded from input embeddings.
#[derive(Debug, Clone)]
pub struct ExplainedPass {
    /// `1 x num_classes`.
    pub logits: Var,
    /// Last-layer attention, one `t x t` node per head.
    pub last_attention: Vec<Var>,
}

/// A classifier whose forward pass can be replayed from input embeddings.
pub trait Explainable: Sync {
    /// Combined input embeddings of the framed sequence, `t x d`.
    fn input_embeddings(&self, tokens: &[String]) -> Result<Tensor>;

    fn forward_from_embeddings(&self, g: &mut Graph, x: Var) -> Result<ExplainedPass>;

    /// Rows of the embedding matrix holding content tokens.
    fn content_positions(&self, t: usize) -> Vec<usize> {
        content_positions(&vec![false; t])
    }
}

impl Explainable for TextClassifier {
    fn input_embeddings(&self, tokens: &[String]) -> Result<Tensor> {
        let mut g = Graph::new();
        let w = self.model.bind(&mut g, false)?;
        let x = self.model.embed(&mut g, &w, &self.encode(tokens))?;
        Ok(g.value(x).clone())
    }

    fn forward_from_embeddings(&self, g: &mut Graph, x: Var) -> Result<ExplainedPass> {
        let w = self.model.bind(g, false)?;
        let t = g.value(x).rows();
        let enc = self.model.encode(g, &w, x, &vec![false; t], None)?;
        let last_attention = enc.attention.last().cloned().unwrap_or_default();
        Ok(ExplainedPass {
            logits: enc.logits,
            last_attention,
        })
    }
}

struct Pass {
    graph: Graph,
    x: Var,
    out: ExplainedPass,
}

fn run<M: Explainable + ?Sized>(model: &M, x: Tensor, track: bool) -> Result<Pass> {
    let mut graph = Graph::new();
    let x = graph.leaf(x, track)?;
    let out = model.forward_from_embeddings(&mut graph, x)?;
    Ok(Pass { graph, x, out })
}

fn content_of<M: Explainable + ?Sized>(model: &M, x: &Tensor) -> Result<Vec<usize>> {
    let content = model.content_positions(x.rows());
    if content.is_empty() {
        return Err(Error::data("document has no content tokens"));
    }
    Ok(content)
}

/// Head-mean CLS attention at `content` and its normalizer.
fn cls_mass(g: &Graph, heads: &[Var], content: &[usize]) -> Result<(Vec<f64>, f64)> {
    if heads.is_empty() {
        return Err(Error::data("model exposes no attention heads"));
    }
    let h = heads.len() as f64;
    let mean: Vec<f64> = content
        .iter()
        .map(|&j| heads.iter().map(|&a| g.value(a).get(0, j)).sum::<f64>() / h)
        .collect();
    let z: f64 = mean.iter().sum();
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::numerical(format!("CLS attention mass {z} over content")));
    }
    Ok((mean, z))
}

fn scores(
    doc_id: &str,
    method: AttributionMethod,
    predicted_class: usize,
    scores: Vec<f64>,
) -> Result<AttributionScores> {
    if let Some(i) = scores.iter().position(|v| !v.is_finite()) {
        return Err(Error::numerical(format!(
            "{method} score {i} of {doc_id} is not finite"
        )));
    }
    Ok(AttributionScores {
        doc_id: doc_id.to_string(),
        method,
        predicted_class,
        scores,
    })
}

/// Renormalized head-mean CLS attention of the last layer.
pub fn attr_alpha<M: Explainable + ?Sized>(model: &M, doc_id: &str, tokens: &[String]) -> Result<AttributionScores> {
    let x = model.input_embeddings(tokens)?;
    let content = content_of(model, &x)?;
    let pass = run(model, x, false)?;
    let predicted = argmax(pass.graph.value(pass.out.logits).data());
    let (mean, z) = cls_mass(&pass.graph, &pass.out.last_attention, &content)?;
    scores(
        doc_id,
        AttributionMethod::Alpha,
        predicted,
        mean.iter().map(|v| v / z).collect(),
    )
}

/// Attention scaled by the gradient of the predicted-class logit.
///
/// Gradients are taken at each head's raw CLS entries; the per-head products
/// are averaged and divided by the same normalizer as alpha.
pub fn attr_alpha_grad<M: Explainable + ?Sized>(
    model: &M,
    doc_id: &str,
    tokens: &[String],
) -> Result<AttributionScores> {
    let x = model.input_embeddings(tokens)?;
    let content = content_of(model, &x)?;
    let mut pass = run(model, x, true)?;
    let g = &mut pass.graph;
    let predicted = argmax(g.value(pass.out.logits).data());
    let (_, z) = cls_mass(g, &pass.out.last_attention, &content)?;
    let y = g.gather(pass.out.logits, &[predicted])?;
    let grads = g.backward(y)?;
    let h = pass.out.last_attention.len() as f64;
    let out = content
        .iter()
        .map(|&j| {
            pass.out
                .last_attention
                .iter()
                .map(|&a| {
                    let grad = grads.get(a).map_or(0.0, |t| t.get(0, j));
                    g.value(a).get(0, j) * grad
                })
                .sum::<f64>()
                / h
                / z
        })
        .collect();
    scores(doc_id, AttributionMethod::AlphaGrad, predicted, out)
}

/// Gradient of the predicted logit w.r.t. `x`, plus the logit.
fn logit_gradient<M: Explainable + ?Sized>(model: &M, x: Tensor, class: Option<usize>) -> Result<(Tensor, f64, usize)> {
    let mut pass = run(model, x, true)?;
    let g = &mut pass.graph;
    let class = class.unwrap_or_else(|| argmax(g.value(pass.out.logits).data()));
    let y = g.gather(pass.out.logits, &[class])?;
    let value = g.value(y).data()[0];
    let mut grads = g.backward(y)?;
    let grad = grads
        .take(pass.x)
        .ok_or_else(|| Error::numerical("input embeddings received no gradient"))?;
    Ok((grad, value, class))
}

fn row_dot(x: &Tensor, g: &Tensor, row: usize) -> f64 {
    x.row_slice(row).iter().zip(g.row_slice(row)).map(|(a, b)| a * b).sum()
}

/// Signed dot product of each token's input embedding with its gradient.
pub fn attr_input_x_grad<M: Explainable + ?Sized>(
    model: &M,
    doc_id: &str,
    tokens: &[String],
) -> Result<AttributionScores> {
    let x = model.input_embeddings(tokens)?;
    let content = content_of(model, &x)?;
    let (grad, _, predicted) = logit_gradient(model, x.clone(), None)?;
    let out = content.iter().map(|&i| row_dot(&x, &grad, i)).collect();
    scores(doc_id, AttributionMethod::InputXGrad, predicted, out)
}

/// Integrated gradients over every position, with the quantities needed to
/// check completeness.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratedGradients {
    pub predicted_class: usize,
    /// One score per row of the input, specials included.
    pub all_positions: Vec<f64>,
    pub content: Vec<usize>,
    pub logit_at_input: f64,
    pub logit_at_baseline: f64,
}

impl IntegratedGradients {
    /// `|sum of attributions - (f(x) - f(0))|`.
    pub fn completeness_gap(&self) -> f64 {
        let total: f64 = self.all_positions.iter().sum();
        (total - (self.logit_at_input - self.logit_at_baseline)).abs()
    }

    pub fn content_scores(&self) -> Vec<f64> {
        self.content.iter().map(|&i| self.all_positions[i]).collect()
    }
}

/// Right-endpoint Riemann sum of gradients along `k/steps * x`, from the
/// all-zero baseline.
pub fn integrated_gradients_detail<M: Explainable + ?Sized>(
    model: &M,
    tokens: &[String],
    steps: usize,
) -> Result<IntegratedGradients> {
    if steps == 0 {
        return Err(Error::config("integrated gradients needs at least one step"));
    }
    let x = model.input_embeddings(tokens)?;
    let content = content_of(model, &x)?;
    let full = run(model, x.clone(), false)?;
    let predicted = argmax(full.graph.value(full.out.logits).data());
    let logit_at_input = full.graph.value(full.out.logits).data()[predicted];
    let baseline = run(model, Tensor::zeros(x.shape()), false)?;
    let logit_at_baseline = baseline.graph.value(baseline.out.logits).data()[predicted];

    let grads: Vec<Tensor> = (1..=steps)
        .into_par_iter()
        .map(|k| {
            let frac = k as f64 / steps as f64;
            let mut point = x.clone();
            point.data_mut().iter_mut().for_each(|v| *v *= frac);
            logit_gradient(model, point, Some(predicted)).map(|(g, _, _)| g)
        })
        .collect::<Result<_>>()?;
    let mut avg = Tensor::zeros(x.shape());
    for g in &grads {
        avg.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b);
    }
    avg.data_mut().iter_mut().for_each(|v| *v /= steps as f64);
    let all_positions = (0..x.rows()).map(|i| row_dot(&x, &avg, i)).collect();
    Ok(IntegratedGradients {
        predicted_class: predicted,
        all_positions,
        content,
        logit_at_input,
        logit_at_baseline,
    })
}

pub fn attr_integrated_gradients<M: Explainable + ?Sized>(
    model: &M,
    doc_id: &str,
    tokens: &[String],
    steps: usize,
) -> Result<AttributionScores> {
    let ig = integrated_gradients_detail(model, tokens, steps)?;
    scores(
        doc_id,
        AttributionMethod::IntegratedGradients,
        ig.predicted_class,
        ig.content_scores(),
    )
}

/// A seeded random permutation of `n..1` over the content tokens.
pub fn attr_random<M: Explainable + ?Sized>(
    model: &M,
    doc_id: &str,
    tokens: &[String],
    seed: u64,
) -> Result<AttributionScores> {
    let x = model.input_embeddings(tokens)?;
    let content = content_of(model, &x)?;
    let pass = run(model, x, false)?;
    let predicted = argmax(pass.graph.value(pass.out.logits).data());
    let mut ranks: Vec<f64> = (1..=content.len()).map(|r| r as f64).collect();
    ranks.shuffle(&mut rng_for(seed, &format!("random-ranking/{doc_id}")));
    scores(doc_id, AttributionMethod::Random, predicted, ranks)
}

/// Settings shared by [`attribute`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttributionOptions {
    pub ig_steps: usize,
    pub seed: u64,
}

impl Default for AttributionOptions {
    fn default() -> Self {
        Self { ig_steps: 50, seed: 0 }
    }
}

pub fn attribute<M: Explainable + ?Sized>(
    model: &M,
    method: AttributionMethod,
    doc_id: &str,
    tokens: &[String],
    opts: &AttributionOptions,
) -> Result<AttributionScores> {
    match method {
        AttributionMethod::Alpha => attr_alpha(model, doc_id, tokens),
        AttributionMethod::AlphaGrad => attr_alpha_grad(model, doc_id, tokens),
        AttributionMethod::InputXGrad => attr_input_x_grad(model, doc_id, tokens),
        AttributionMethod::IntegratedGradients => attr_integrated_gradients(model, doc_id, tokens, opts.ig_steps),
        AttributionMethod::Random => attr_random(model, doc_id, tokens, opts.seed),
    }
}

pub fn write_attributions_jsonl(path: impl AsRef<Path>, items: &[AttributionScores]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for a in items {
        serde_json::to_writer(&mut w, a)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_attributions_jsonl(path: impl AsRef<Path>) -> Result<Vec<AttributionScores>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::data(format!("{}: line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}
