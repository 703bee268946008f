//! Transformer encoder classifier with inspectable attention.

mod checkpoint;
mod weights;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use checkpoint::{TextClassifier, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use weights::{LayerWeights, Weights, HEAD_PREFIX};

use crate::data::{Vocabulary, PAD_ID};
use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::tensor::{Graph, Tensor, Var};

/// Embeddings start small: with no normalization layers the logit is then a
/// gentle function of the input scale, which integrated gradients rely on.
const EMBEDDING_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub num_classes: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_layers: 2,
            num_heads: 4,
            d_model: 64,
            d_ff: 128,
            vocab_size: 1000,
            max_len: 64,
            num_classes: 2,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("vocab_size", self.vocab_size),
            ("num_classes", self.num_classes),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{name} must be positive")));
        }
        if self.max_len < 3 {
            return Err(Error::config("max_len must leave room for CLS, SEP and one token"));
        }
        if !self.d_model.is_multiple_of(self.num_heads) {
            return Err(Error::config(format!(
                "d_model {} is not divisible by num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.num_heads
    }
}

/// Padded token-id matrix. Row `b` holds `[CLS] content [SEP]` followed by
/// PAD up to the longest row.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    ids: Vec<Vec<usize>>,
    lengths: Vec<usize>,
}

impl Batch {
    pub fn new(sequences: &[Vec<usize>]) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::data("empty batch"));
        }
        let width = sequences.iter().map(Vec::len).max().unwrap_or(0);
        if let Some(bad) = sequences.iter().position(|s| s.len() < 2) {
            return Err(Error::data(format!("sequence {bad} lacks CLS/SEP framing")));
        }
        let ids = sequences
            .iter()
            .map(|s| {
                let mut row = s.clone();
                row.resize(width, PAD_ID);
                row
            })
            .collect();
        Ok(Self {
            ids,
            lengths: sequences.iter().map(Vec::len).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn width(&self) -> usize {
        self.ids[0].len()
    }

    pub fn ids(&self, row: usize) -> &[usize] {
        &self.ids[row]
    }

    /// True at padding positions.
    pub fn pad_mask(&self, row: usize) -> Vec<bool> {
        (0..self.width()).map(|j| j >= self.lengths[row]).collect()
    }
}

/// Encodes document tokens as `[CLS] ids [SEP]`, keeping at most
/// `max_len - 2` content tokens.
pub fn encode_tokens(vocab: &Vocabulary, tokens: &[String], max_len: usize) -> Vec<usize> {
    let keep = tokens.len().min(max_len.saturating_sub(2));
    Vocabulary::wrap(&vocab.encode(&tokens[..keep]))
}

/// Attention maps of one sequence: `layers[l][h]` is a `t x t` matrix whose
/// rows are queries. Rows and columns at padding positions are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionProfile {
    pub layers: Vec<Vec<Tensor>>,
    pub pad: Vec<bool>,
}

impl AttentionProfile {
    pub fn new(layers: Vec<Vec<Tensor>>, pad: Vec<bool>) -> Result<Self> {
        let t = pad.len();
        if layers.is_empty() || layers.iter().any(Vec::is_empty) {
            return Err(Error::data("attention profile needs at least one layer and head"));
        }
        for m in layers.iter().flatten() {
            if m.shape() != [t, t] {
                return Err(Error::data(format!(
                    "attention map of shape {:?} for sequence length {t}",
                    m.shape()
                )));
            }
        }
        Ok(Self { layers, pad })
    }

    /// Content positions: everything between the leading CLS and the SEP
    /// that closes the unpadded sequence.
    pub fn content_positions(&self) -> Vec<usize> {
        content_positions(&self.pad)
    }
}

pub(crate) fn content_positions(pad: &[bool]) -> Vec<usize> {
    let len = pad.iter().take_while(|&&p| !p).count();
    (1..len.saturating_sub(1)).collect()
}

/// Head-averaged last-layer CLS attention over content positions,
/// renormalized to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaVector {
    pub scores: Vec<f64>,
}

impl AlphaVector {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

pub fn extract_alpha(profile: &AttentionProfile) -> Result<AlphaVector> {
    let content = profile.content_positions();
    if content.is_empty() {
        return Err(Error::data("no content positions to attend to"));
    }
    let last = profile.layers.last().expect("validated non-empty");
    let heads = last.len() as f64;
    let raw: Vec<f64> = content
        .iter()
        .map(|&j| last.iter().map(|m| m.get(0, j)).sum::<f64>() / heads)
        .collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::numerical(format!("CLS attention mass {total} over content")));
    }
    Ok(AlphaVector {
        scores: raw.iter().map(|v| v / total).collect(),
    })
}

/// Same as [`extract_alpha`] but recorded on the tape, taking the last-layer
/// per-head attention nodes. Returns a `1 x n` row.
pub fn alpha_on_graph(g: &mut Graph, last_layer: &[Var], content: &[usize]) -> Result<Var> {
    if content.is_empty() {
        return Err(Error::data("no content positions to attend to"));
    }
    if last_layer.is_empty() {
        return Err(Error::data("no attention heads"));
    }
    let mut acc = g.gather(last_layer[0], content)?;
    for &head in &last_layer[1..] {
        let row = g.gather(head, content)?;
        acc = g.add(acc, row)?;
    }
    let mean = g.scale(acc, 1.0 / last_layer.len() as f64)?;
    let total = g.sum(mean)?;
    Ok(g.div_scalar(mean, total)?)
}

/// Tape nodes produced by one encoder pass.
#[derive(Debug, Clone)]
pub struct Encoded {
    /// `1 x num_classes`.
    pub logits: Var,
    /// `[layer][head]`, each `t x t`.
    pub attention: Vec<Vec<Var>>,
}

/// Output of a batched inference pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// `batch x num_classes`.
    pub logits: Tensor,
    pub profiles: Vec<AttentionProfile>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transformer {
    config: ModelConfig,
    weights: Weights<Tensor>,
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Tensor {
    let dist = Normal::new(0.0, std).expect("positive std");
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Tensor::matrix(rows, cols, data).expect("sized")
}

impl Transformer {
    /// Random encoder with a zero classifier head, so fresh logits are zero.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_for(seed, "model-init");
        let d = config.d_model;
        let dh = config.head_dim();
        let proj = 1.0 / (d as f64).sqrt();
        let layers = (0..config.num_layers)
            .map(|_| {
                let mut heads = || {
                    (0..config.num_heads)
                        .map(|_| normal_matrix(&mut rng, d, dh, proj))
                        .collect::<Vec<_>>()
                };
                let (wq, wk, wv) = (heads(), heads(), heads());
                LayerWeights {
                    wq,
                    wk,
                    wv,
                    wo: normal_matrix(&mut rng, d, d, proj),
                    bo: Tensor::zeros(&[1, d]),
                    ff_w1: normal_matrix(&mut rng, d, config.d_ff, proj),
                    ff_b1: Tensor::zeros(&[1, config.d_ff]),
                    ff_w2: normal_matrix(&mut rng, config.d_ff, d, 1.0 / (config.d_ff as f64).sqrt()),
                    ff_b2: Tensor::zeros(&[1, d]),
                }
            })
            .collect();
        let weights = Weights {
            tok_emb: normal_matrix(&mut rng, config.vocab_size, d, EMBEDDING_STD),
            pos_emb: normal_matrix(&mut rng, config.max_len, d, EMBEDDING_STD),
            layers,
            head_w: Tensor::zeros(&[d, config.num_classes]),
            head_b: Tensor::zeros(&[1, config.num_classes]),
        };
        Ok(Self { config, weights })
    }

    /// Like [`Transformer::init`] but with a random classifier head.
    pub fn init_random_head(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut model = Self::init(config, seed)?;
        let mut rng = rng_for(seed, "model-init-head");
        let d = config.d_model;
        model.weights.head_w = normal_matrix(&mut rng, d, config.num_classes, 1.0 / (d as f64).sqrt());
        model.weights.head_b = normal_matrix(&mut rng, 1, config.num_classes, 0.1);
        Ok(model)
    }

    pub fn from_weights(config: ModelConfig, weights: Weights<Tensor>) -> Result<Self> {
        config.validate()?;
        let reference = Self::init(config, 0)?;
        let expected: Vec<&[usize]> = reference.weights.iter().map(Tensor::shape).collect();
        let got: Vec<&[usize]> = weights.iter().map(Tensor::shape).collect();
        if expected != got || weights.layers.len() != config.num_layers {
            return Err(Error::data("weight shapes do not match the model configuration"));
        }
        if weights.iter().any(|t| !t.is_finite()) {
            return Err(Error::numerical("non-finite weight"));
        }
        Ok(Self { config, weights })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn weights(&self) -> &Weights<Tensor> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Weights<Tensor> {
        &mut self.weights
    }

    pub fn into_weights(self) -> Weights<Tensor> {
        self.weights
    }

    /// Records every weight on the tape, as trainable parameters or as
    /// constants.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Result<Weights<Var>> {
        Ok(self.weights.try_map(|_, t| g.leaf(t.clone(), trainable))?)
    }

    fn check_ids(&self, ids: &[usize]) -> Result<()> {
        if ids.len() > self.config.max_len {
            return Err(Error::data(format!(
                "sequence length {} exceeds max_len {}",
                ids.len(),
                self.config.max_len
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id >= self.config.vocab_size) {
            return Err(Error::data(format!(
                "token id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// Token plus position embeddings, `t x d_model`.
    pub fn embed(&self, g: &mut Graph, w: &Weights<Var>, ids: &[usize]) -> Result<Var> {
        self.check_ids(ids)?;
        let tok = g.embedding(w.tok_emb, ids)?;
        let positions: Vec<usize> = (0..ids.len()).collect();
        let pos = g.embedding(w.pos_emb, &positions)?;
        Ok(g.add(tok, pos)?)
    }

    /// Runs the encoder and classifier on precomputed input embeddings.
    /// Padding keys are masked out; `dropout_rng` enables dropout.
    pub fn encode(
        &self,
        g: &mut Graph,
        w: &Weights<Var>,
        x: Var,
        pad: &[bool],
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Encoded> {
        let t = pad.len();
        if g.value(x).shape() != [t, self.config.d_model] {
            return Err(Error::data(format!(
                "input embeddings of shape {:?} for length {t}",
                g.value(x).shape()
            )));
        }
        let scale = 1.0 / (self.config.head_dim() as f64).sqrt();
        let key_mask: Vec<bool> = (0..t * t).map(|k| pad[k % t]).collect();
        let any_pad = pad.iter().any(|&p| p);

        let mut h = self.dropout(g, x, dropout_rng.as_deref_mut())?;
        let mut attention = Vec::with_capacity(w.layers.len());
        for lw in &w.layers {
            let mut outs = Vec::with_capacity(lw.wq.len());
            let mut maps = Vec::with_capacity(lw.wq.len());
            for head in 0..lw.wq.len() {
                let q = g.matmul(h, lw.wq[head])?;
                let k = g.matmul(h, lw.wk[head])?;
                let v = g.matmul(h, lw.wv[head])?;
                let kt = g.transpose(k)?;
                let s = g.matmul(q, kt)?;
                let mut s = g.scale(s, scale)?;
                if any_pad {
                    s = g.masked_fill(s, &key_mask)?;
                }
                let a = g.softmax_rows(s)?;
                outs.push(g.matmul(a, v)?);
                maps.push(a);
            }
            let cat = if outs.len() == 1 { outs[0] } else { g.concat(&outs, 1)? };
            let proj = g.matmul(cat, lw.wo)?;
            let proj = g.add(proj, lw.bo)?;
            let proj = self.dropout(g, proj, dropout_rng.as_deref_mut())?;
            h = g.add(h, proj)?;

            let f = g.matmul(h, lw.ff_w1)?;
            let f = g.add(f, lw.ff_b1)?;
            let f = g.gelu(f)?;
            let f = g.matmul(f, lw.ff_w2)?;
            let f = g.add(f, lw.ff_b2)?;
            let f = self.dropout(g, f, dropout_rng.as_deref_mut())?;
            h = g.add(h, f)?;
            attention.push(maps);
        }
        let cls_idx: Vec<usize> = (0..self.config.d_model).collect();
        let cls = g.gather(h, &cls_idx)?;
        let logits = g.matmul(cls, w.head_w)?;
        let logits = g.add(logits, w.head_b)?;
        Ok(Encoded { logits, attention })
    }

    fn dropout(&self, g: &mut Graph, x: Var, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let p = self.config.dropout;
        let Some(rng) = rng else { return Ok(x) };
        if p == 0.0 {
            return Ok(x);
        }
        let shape = g.value(x).shape().to_vec();
        let n = g.value(x).len();
        let keep = 1.0 / (1.0 - p);
        let mask = (0..n)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let mask = g.constant(Tensor::new(shape, mask)?)?;
        Ok(g.mul(x, mask)?)
    }

    /// Embeds and encodes one framed sequence on `g`.
    pub fn forward_ids(
        &self,
        g: &mut Graph,
        w: &Weights<Var>,
        ids: &[usize],
        pad: &[bool],
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Encoded> {
        let x = self.embed(g, w, ids)?;
        self.encode(g, w, x, pad, dropout_rng)
    }

    /// Logits and attention for one framed sequence, no gradients.
    pub fn infer(&self, ids: &[usize]) -> Result<(Vec<f64>, AttentionProfile)> {
        let pad = vec![false; ids.len()];
        self.infer_padded(ids, &pad)
    }

    fn infer_padded(&self, ids: &[usize], pad: &[bool]) -> Result<(Vec<f64>, AttentionProfile)> {
        let mut g = Graph::new();
        let w = self.bind(&mut g, false)?;
        let enc = self.forward_ids(&mut g, &w, ids, pad, None)?;
        let logits = g.value(enc.logits).data().to_vec();
        let t = pad.len();
        let layers = enc
            .attention
            .iter()
            .map(|heads| {
                heads
                    .iter()
                    .map(|&a| {
                        let mut m = g.value(a).clone();
                        for (i, &pi) in pad.iter().enumerate() {
                            if pi {
                                m.data_mut()[i * t..(i + 1) * t].fill(0.0);
                            }
                        }
                        m
                    })
                    .collect()
            })
            .collect();
        Ok((logits, AttentionProfile::new(layers, pad.to_vec())?))
    }

    /// Evaluation-mode pass over a padded batch. Dropout is off.
    pub fn forward(&self, batch: &Batch) -> Result<ForwardOutput> {
        if batch.is_empty() {
            return Err(Error::data("empty batch"));
        }
        let rows: Vec<(Vec<f64>, AttentionProfile)> = (0..batch.len())
            .into_par_iter()
            .map(|b| self.infer_padded(batch.ids(b), &batch.pad_mask(b)))
            .collect::<Result<_>>()?;
        let c = self.config.num_classes;
        let mut data = Vec::with_capacity(rows.len() * c);
        let mut profiles = Vec::with_capacity(rows.len());
        for (l, p) in rows {
            data.extend(l);
            profiles.push(p);
        }
        Ok(ForwardOutput {
            logits: Tensor::matrix(batch.len(), c, data)?,
            profiles,
        })
    }
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &v)| if v > best.1 { (i, v) } else { best },
        )
        .0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradient_check;

    fn tiny() -> ModelConfig {
        ModelConfig {
            num_layers: 2,
            num_heads: 2,
            d_model: 8,
            d_ff: 12,
            vocab_size: 20,
            max_len: 10,
            num_classes: 3,
            dropout: 0.0,
        }
    }

    fn profile(rows: &[&[f64]], pad: Vec<bool>) -> AttentionProfile {
        let t = pad.len();
        let heads = rows
            .iter()
            .map(|r| {
                let mut m = Tensor::zeros(&[t, t]);
                m.data_mut()[..t].copy_from_slice(r);
                m
            })
            .collect();
        AttentionProfile::new(vec![heads], pad).unwrap()
    }

    #[test]
    fn config_rejects_indivisible_heads() {
        let cfg = ModelConfig {
            num_heads: 3,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(ModelConfig::default().validate().is_ok());
    }

    #[test]
    fn zero_head_gives_zero_logits() {
        let m = Transformer::init(tiny(), 1).unwrap();
        let (logits, _) = m.infer(&[1, 5, 7, 2]).unwrap();
        assert!(logits.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn three_position_rows_are_distributions() {
        let m = Transformer::init_random_head(tiny(), 2).unwrap();
        let (_, p) = m.infer(&[1, 9, 2]).unwrap();
        for a in p.layers.iter().flatten() {
            assert_eq!(a.shape(), &[3, 3]);
            for r in 0..3 {
                assert!((a.row_slice(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn duplicate_documents_get_identical_rows() {
        let m = Transformer::init_random_head(tiny(), 3).unwrap();
        let seq = vec![1, 4, 5, 6, 2];
        let out = m.forward(&Batch::new(&[seq.clone(), seq]).unwrap()).unwrap();
        assert_eq!(out.logits.row_slice(0), out.logits.row_slice(1));
    }

    #[test]
    fn padding_does_not_change_results() {
        let m = Transformer::init_random_head(tiny(), 4).unwrap();
        let short = vec![1, 4, 2];
        let long = vec![1, 4, 5, 6, 7, 2];
        let out = m.forward(&Batch::new(&[short.clone(), long]).unwrap()).unwrap();
        let (alone, _) = m.infer(&short).unwrap();
        assert_eq!(out.logits.row_slice(0), alone.as_slice());
        let p = &out.profiles[0];
        for a in p.layers.iter().flatten() {
            for r in 0..3 {
                assert!((a.row_slice(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(a.row_slice(r)[3..].iter().all(|&v| v == 0.0));
            }
            assert!(a.data()[3 * 6..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn out_of_range_ids_and_empty_batches_fail() {
        let m = Transformer::init(tiny(), 0).unwrap();
        assert!(m.infer(&[1, 20, 2]).is_err());
        assert!(m.infer(&[1; 11]).is_err());
        assert!(Batch::new(&[]).is_err());
    }

    #[test]
    fn alpha_averages_heads_then_renormalizes() {
        let pad = vec![false; 4];
        let p = profile(&[&[0.0, 0.2, 0.8, 0.0], &[0.0, 0.6, 0.4, 0.0]], pad);
        let a = extract_alpha(&p).unwrap();
        assert!((a.scores[0] - 0.4).abs() < 1e-12 && (a.scores[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn alpha_of_uniform_cls_row_is_uniform() {
        // CLS attends to itself and three content tokens; SEP gets nothing
        let p = profile(&[&[0.25, 0.25, 0.25, 0.25, 0.0]], vec![false; 5]);
        let a = extract_alpha(&p).unwrap();
        for s in &a.scores {
            assert!((s - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_of_single_token_is_one() {
        let p = profile(&[&[0.3, 0.5, 0.2]], vec![false; 3]);
        assert_eq!(extract_alpha(&p).unwrap().scores, vec![1.0]);
        let empty = profile(&[&[0.5, 0.5]], vec![false; 2]);
        assert!(extract_alpha(&empty).is_err());
    }

    #[test]
    fn graph_alpha_matches_tensor_alpha() {
        let m = Transformer::init_random_head(tiny(), 5).unwrap();
        let ids = [1, 3, 8, 11, 2];
        let (_, p) = m.infer(&ids).unwrap();
        let mut g = Graph::new();
        let w = m.bind(&mut g, false).unwrap();
        let enc = m.forward_ids(&mut g, &w, &ids, &[false; 5], None).unwrap();
        let a = alpha_on_graph(&mut g, enc.attention.last().unwrap(), &[1, 2, 3]).unwrap();
        let expected = extract_alpha(&p).unwrap().scores;
        for (x, y) in g.value(a).data().iter().zip(&expected) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_is_seeded_and_off_at_eval() {
        let cfg = ModelConfig { dropout: 0.3, ..tiny() };
        let m = Transformer::init_random_head(cfg, 6).unwrap();
        let ids = [1, 3, 4, 2];
        let run = |seed: u64| {
            let mut g = Graph::new();
            let w = m.bind(&mut g, false).unwrap();
            let mut rng = rng_for(seed, "dropout");
            let enc = m.forward_ids(&mut g, &w, &ids, &[false; 4], Some(&mut rng)).unwrap();
            g.value(enc.logits).clone()
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), run(2));
        assert_eq!(m.infer(&ids).unwrap().0, m.infer(&ids).unwrap().0);
    }

    fn logit_wrt(m: &Transformer, target: &str, class: usize) -> f64 {
        let ids = [1, 4, 9, 13, 2];
        let x = m.weights().names().iter().position(|n| n == target).unwrap();
        let start = m.weights().iter().nth(x).unwrap().clone();
        gradient_check(
            |g, v| {
                let w = m
                    .weights()
                    .try_map(|name, t| if name == target { Ok(v) } else { g.constant(t.clone()) })?;
                let enc = m.forward_ids(g, &w, &ids, &[false; 5], None)?;
                Ok::<_, Error>(g.gather(enc.logits, &[class])?)
            },
            &start,
            1e-5,
        )
        .unwrap()
    }

    #[test]
    fn logit_gradients_wrt_attention_weights_match_finite_differences() {
        let m = Transformer::init_random_head(tiny(), 7).unwrap();
        for name in ["layers.0.attn.query.0", "layers.1.attn.key.1", "layers.1.attn.value.0"] {
            for class in 0..3 {
                let err = logit_wrt(&m, name, class);
                assert!(err < 1e-4, "{name} class {class}: {err}");
            }
        }
    }

    #[test]
    fn logit_gradients_wrt_input_embeddings_match_finite_differences() {
        let m = Transformer::init_random_head(tiny(), 8).unwrap();
        let ids = [1, 4, 9, 2];
        let mut g0 = Graph::new();
        let w0 = m.bind(&mut g0, false).unwrap();
        let x0 = m.embed(&mut g0, &w0, &ids).unwrap();
        let start = g0.value(x0).clone();
        for class in 0..3 {
            let err = gradient_check(
                |g, x| {
                    let w = m.bind(g, false)?;
                    let enc = m.encode(g, &w, x, &[false; 4], None)?;
                    Ok::<_, Error>(g.gather(enc.logits, &[class])?)
                },
                &start,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "class {class}: {err}");
        }
    }
}
