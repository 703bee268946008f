use crate::tensor::Tensor;

/// Parameters of one encoder layer. Query, key and value projections are
/// kept per head (`d_model x head_dim` each).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T> {
    pub wq: Vec<T>,
    pub wk: Vec<T>,
    pub wv: Vec<T>,
    pub wo: T,
    pub bo: T,
    pub ff_w1: T,
    pub ff_b1: T,
    pub ff_w2: T,
    pub ff_b2: T,
}

/// All model parameters, generic over storage so the same layout holds
/// tensors, tape handles or optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T> {
    pub tok_emb: T,
    pub pos_emb: T,
    pub layers: Vec<LayerWeights<T>>,
    pub head_w: T,
    pub head_b: T,
}

/// Prefix shared by the classifier head parameters.
pub const HEAD_PREFIX: &str = "classifier.";

impl<T> Weights<T> {
    /// Visits every parameter with its stable name, in a fixed order.
    pub fn try_map<U, E>(&self, mut f: impl FnMut(&str, &T) -> Result<U, E>) -> Result<Weights<U>, E> {
        let tok_emb = f("embeddings.token", &self.tok_emb)?;
        let pos_emb = f("embeddings.position", &self.pos_emb)?;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (l, lw) in self.layers.iter().enumerate() {
            let mut heads = |name: &str, xs: &[T]| -> Result<Vec<U>, E> {
                xs.iter()
                    .enumerate()
                    .map(|(h, x)| f(&format!("layers.{l}.attn.{name}.{h}"), x))
                    .collect()
            };
            let wq = heads("query", &lw.wq)?;
            let wk = heads("key", &lw.wk)?;
            let wv = heads("value", &lw.wv)?;
            let p = |s: &str| format!("layers.{l}.{s}");
            layers.push(LayerWeights {
                wq,
                wk,
                wv,
                wo: f(&p("attn.out.weight"), &lw.wo)?,
                bo: f(&p("attn.out.bias"), &lw.bo)?,
                ff_w1: f(&p("ffn.in.weight"), &lw.ff_w1)?,
                ff_b1: f(&p("ffn.in.bias"), &lw.ff_b1)?,
                ff_w2: f(&p("ffn.out.weight"), &lw.ff_w2)?,
                ff_b2: f(&p("ffn.out.bias"), &lw.ff_b2)?,
            });
        }
        Ok(Weights {
            tok_emb,
            pos_emb,
            layers,
            head_w: f("classifier.weight", &self.head_w)?,
            head_b: f("classifier.bias", &self.head_b)?,
        })
    }

    pub fn map<U>(&self, mut f: impl FnMut(&str, &T) -> U) -> Weights<U> {
        self.try_map(|n, x| Ok::<U, std::convert::Infallible>(f(n, x)))
            .unwrap_or_else(|e| match e {})
    }

    /// Parameters in the same order as [`Weights::try_map`] visits them.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        let layers = self.layers.iter().flat_map(|lw| {
            lw.wq
                .iter()
                .chain(&lw.wk)
                .chain(&lw.wv)
                .chain([&lw.wo, &lw.bo, &lw.ff_w1, &lw.ff_b1, &lw.ff_w2, &lw.ff_b2])
        });
        [&self.tok_emb, &self.pos_emb]
            .into_iter()
            .chain(layers)
            .chain([&self.head_w, &self.head_b])
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        let layers = self.layers.iter_mut().flat_map(|lw| {
            lw.wq.iter_mut().chain(lw.wk.iter_mut()).chain(lw.wv.iter_mut()).chain([
                &mut lw.wo,
                &mut lw.bo,
                &mut lw.ff_w1,
                &mut lw.ff_b1,
                &mut lw.ff_w2,
                &mut lw.ff_b2,
            ])
        });
        [&mut self.tok_emb, &mut self.pos_emb]
            .into_iter()
            .chain(layers)
            .chain([&mut self.head_w, &mut self.head_b])
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.map(|n, _| names.push(n.to_string()));
        names
    }
}

impl Weights<Tensor> {
    pub fn num_parameters(&self) -> usize {
        self.iter().map(Tensor::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Transformer};

    #[test]
    fn iteration_order_matches_names() {
        let cfg = ModelConfig {
            vocab_size: 10,
            num_layers: 2,
            num_heads: 2,
            d_model: 4,
            d_ff: 6,
            max_len: 8,
            ..Default::default()
        };
        let m = Transformer::init(cfg, 0).unwrap();
        let names = m.weights().names();
        let shapes_by_map: Vec<Vec<usize>> = {
            let mut v = Vec::new();
            m.weights().map(|_, t| v.push(t.shape().to_vec()));
            v
        };
        let shapes_by_iter: Vec<Vec<usize>> = m.weights().iter().map(|t| t.shape().to_vec()).collect();
        assert_eq!(shapes_by_map, shapes_by_iter);
        assert_eq!(names.len(), shapes_by_iter.len());
        assert_eq!(names.first().unwrap(), "embeddings.token");
        assert!(names.last().unwrap().starts_with(HEAD_PREFIX));
    }
}
