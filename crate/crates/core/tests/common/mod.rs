#![allow(dead_code)]

use saloss_core::data::{build_vocab, Document};
use saloss_core::model::{ModelConfig, TextClassifier, Transformer};

pub fn tokens(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

pub fn tiny_config(vocab_size: usize) -> ModelConfig {
    ModelConfig {
        num_layers: 1,
        num_heads: 2,
        d_model: 8,
        d_ff: 16,
        vocab_size,
        max_len: 16,
        num_classes: 2,
        dropout: 0.0,
    }
}

/// A small model with a random classifier head over a fixed word list.
pub fn tiny_classifier(seed: u64) -> TextClassifier {
    let words = ["the", "good", "bad", "film", "plot", "was", "very", "dull"];
    let doc = Document::new("vocab", tokens(&words), 0).unwrap();
    let vocab = build_vocab(&[doc], 1).unwrap();
    let model = Transformer::init_random_head(tiny_config(vocab.len()), seed).unwrap();
    TextClassifier::new(model, vocab).unwrap()
}
