use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, encode_tokens, ModelConfig, Transformer};
use crate::data::{Document, Vocabulary};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "saloss-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained encoder together with the vocabulary it was trained on.
///
/// Checkpoints are JSON:
/// `{"format", "version", "config", "vocab", "tensors": [{"name", "shape", "values"}]}`
/// with tensors in a fixed parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct TextClassifier {
    pub model: Transformer,
    pub vocab: Vocabulary,
}

#[derive(Serialize, Deserialize)]
struct NamedArray {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    version: u32,
    config: ModelConfig,
    vocab: Vocabulary,
    tensors: Vec<NamedArray>,
}

impl TextClassifier {
    pub fn new(model: Transformer, vocab: Vocabulary) -> Result<Self> {
        if vocab.len() != model.config().vocab_size {
            return Err(Error::config(format!(
                "vocabulary of {} tokens for a model sized for {}",
                vocab.len(),
                model.config().vocab_size
            )));
        }
        Ok(Self { model, vocab })
    }

    /// Frames and encodes content tokens, truncating to the model's length.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        encode_tokens(&self.vocab, tokens, self.model.config().max_len)
    }

    /// Largest number of content tokens the model sees.
    pub fn content_capacity(&self) -> usize {
        self.model.config().max_len - 2
    }

    pub fn logits(&self, tokens: &[String]) -> Result<Vec<f64>> {
        Ok(self.model.infer(&self.encode(tokens))?.0)
    }

    /// Argmax class for every document, computed in parallel.
    pub fn predict_all(&self, docs: &[Document]) -> Result<Vec<usize>> {
        docs.par_iter().map(|d| Ok(argmax(&self.logits(&d.tokens)?))).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut tensors = Vec::new();
        self.model.weights().map(|name, t| {
            tensors.push(NamedArray {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                values: t.data().to_vec(),
            })
        });
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: *self.model.config(),
            vocab: self.vocab.clone(),
            tensors,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text)?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::data(format!("unknown checkpoint format `{}`", file.format)));
        }
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::data(format!("unsupported checkpoint version {}", file.version)));
        }
        let mut by_name: HashMap<String, NamedArray> = file.tensors.into_iter().map(|a| (a.name.clone(), a)).collect();
        let template = Transformer::init(file.config, 0)?;
        let weights = template.weights().try_map(|name, _| {
            let a = by_name
                .remove(name)
                .ok_or_else(|| Error::data(format!("checkpoint lacks tensor `{name}`")))?;
            Ok::<_, Error>(Tensor::new(a.shape, a.values)?)
        })?;
        if let Some(extra) = by_name.keys().next() {
            return Err(Error::data(format!("unexpected tensor `{extra}` in checkpoint")));
        }
        Self::new(Transformer::from_weights(file.config, weights)?, file.vocab)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_vocab;

    fn classifier() -> TextClassifier {
        let docs = vec![
            Document::new("a", vec!["x".into(), "y".into()], 0).unwrap(),
            Document::new("b", vec!["z".into()], 1).unwrap(),
        ];
        let vocab = build_vocab(&docs, 1).unwrap();
        let cfg = ModelConfig {
            num_layers: 1,
            num_heads: 2,
            d_model: 4,
            d_ff: 8,
            vocab_size: vocab.len(),
            max_len: 6,
            num_classes: 2,
            dropout: 0.0,
        };
        TextClassifier::new(Transformer::init_random_head(cfg, 3).unwrap(), vocab).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let c = classifier();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        c.save(&path).unwrap();
        let back = TextClassifier::load(&path).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json().unwrap(), c.to_json().unwrap());
    }

    #[test]
    fn missing_tensor_is_reported() {
        let text = classifier().to_json().unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["tensors"].as_array_mut().unwrap().pop();
        let err = TextClassifier::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("classifier.bias"));
    }

    #[test]
    fn long_documents_are_truncated() {
        let c = classifier();
        let toks: Vec<String> = ["x", "y", "z", "x", "y", "z"].iter().map(|s| s.to_string()).collect();
        assert_eq!(c.encode(&toks).len(), 6);
        assert!(c.logits(&toks).is_ok());
    }
}
