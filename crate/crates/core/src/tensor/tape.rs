use super::{Result, Tensor, TensorError};

/// Value written by [`Graph::masked_fill`] at masked positions.
pub const MASK_FILL_VALUE: f64 = -1e9;

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    Rows,
    Cols,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add {
        a: Var,
        b: Var,
        broadcast: bool,
    },
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    DivScalar(Var, Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    Concat {
        parts: Vec<Var>,
        axis: Axis,
    },
    Mean(Var),
    Sum(Var),
    Transpose(Var),
    MaskedFill {
        x: Var,
        mask: Vec<bool>,
    },
    Gelu(Var),
    Log(Var),
    Gather {
        x: Var,
        indices: Vec<usize>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Eager computation tape.
///
/// Nodes are appended in execution order, so every node's inputs precede it.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`; `None` when `v` does not require grad.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn matmul_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose_kernel(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

fn gelu(x: f64) -> (f64, f64) {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    const K: f64 = 0.044_715;
    let u = C * (x + K * x * x * x);
    let t = u.tanh();
    let y = 0.5 * x * (1.0 + t);
    let dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * K * x * x);
    (y, dy)
}

fn accumulate(slot: &mut Option<Vec<f64>>, delta: &[f64]) {
    match slot {
        Some(g) => g.iter_mut().zip(delta).for_each(|(g, d)| *g += d),
        None => *slot = Some(delta.to_vec()),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records an input tensor. Non-finite inputs are rejected.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: "leaf" });
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> TensorError {
        TensorError::ShapeMismatch {
            op,
            lhs: self.value(a).shape().to_vec(),
            rhs: self.value(b).shape().to_vec(),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape().len() != 2 || bv.shape().len() != 2 || av.cols() != bv.rows() {
            return Err(self.mismatch("matmul", a, b));
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        let data = matmul_kernel(av.data(), bv.data(), m, k, n);
        let out = Tensor::new(vec![m, n], data)?;
        self.push("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    /// Elementwise sum. `b` may also be a single row broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (data, broadcast) = if av.shape() == bv.shape() {
            (av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect(), false)
        } else if bv.rows() == 1 && bv.cols() == av.cols() && bv.shape().len() <= 2 {
            let cols = av.cols();
            let data = av
                .data()
                .iter()
                .enumerate()
                .map(|(i, x)| x + bv.data()[i % cols])
                .collect();
            (data, true)
        } else {
            return Err(self.mismatch("add", a, b));
        };
        let out = Tensor::new(av.shape().to_vec(), data)?;
        self.push("add", out, Op::Add { a, b, broadcast }, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(self.mismatch("sub", a, b));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x - y).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        self.push("sub", out, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise (Hadamard) product of equal-shape tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(self.mismatch("mul", a, b));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        self.push("mul", out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        if !factor.is_finite() {
            return Err(TensorError::NonFinite { op: "scale" });
        }
        let av = self.value(a);
        let out = Tensor::new(av.shape().to_vec(), av.data().iter().map(|x| x * factor).collect())?;
        self.push("scale", out, Op::Scale(a, factor), &[a])
    }

    /// Divides every element of `a` by the one-element tensor `s`.
    pub fn div_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let Some(denom) = self.value(s).item() else {
            return Err(self.mismatch("div_scalar", a, s));
        };
        if denom == 0.0 {
            return Err(TensorError::NonFinite { op: "div_scalar" });
        }
        let av = self.value(a);
        let out = Tensor::new(av.shape().to_vec(), av.data().iter().map(|x| x / denom).collect())?;
        self.push("div_scalar", out, Op::DivScalar(a, s), &[a, s])
    }

    /// Row-wise softmax over the last axis, max-subtracted.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let cols = av.cols();
        let mut data = av.data().to_vec();
        for row in data.chunks_mut(cols.max(1)) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            row.iter_mut().for_each(|v| *v /= sum);
        }
        let out = Tensor::new(av.shape().to_vec(), data)?;
        self.push("softmax_rows", out, Op::SoftmaxRows(a), &[a])
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let cols = av.cols();
        let mut data = av.data().to_vec();
        for row in data.chunks_mut(cols.max(1)) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let out = Tensor::new(av.shape().to_vec(), data)?;
        self.push("log_softmax_rows", out, Op::LogSoftmaxRows(a), &[a])
    }

    /// Normalizes each row to zero mean and unit population variance, then
    /// applies a per-column `gain` and `bias` (each a single row).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let xv = self.value(x);
        let cols = xv.cols();
        let (gv, bv) = (self.value(gain), self.value(bias));
        if gv.len() != cols {
            return Err(self.mismatch("layer_norm", x, gain));
        }
        if bv.len() != cols {
            return Err(self.mismatch("layer_norm", x, bias));
        }
        let n = cols as f64;
        let mut xhat = Vec::with_capacity(xv.len());
        let mut inv_std = Vec::with_capacity(xv.rows());
        let mut data = Vec::with_capacity(xv.len());
        for row in xv.data().chunks(cols) {
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std.push(inv);
            for (c, v) in row.iter().enumerate() {
                let h = (v - mean) * inv;
                xhat.push(h);
                data.push(h * gv.data()[c] + bv.data()[c]);
            }
        }
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(
            "layer_norm",
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            &[x, gain, bias],
        )
    }

    /// Gathers rows of `table` (vocab x dim) for each id.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        let (vocab, dim) = (tv.rows(), tv.cols());
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(TensorError::Invalid {
                op: "embedding_lookup",
                msg: format!("id {bad} out of range for table of {vocab} rows"),
            });
        }
        let mut data = Vec::with_capacity(ids.len() * dim);
        for &i in ids {
            data.extend_from_slice(tv.row_slice(i));
        }
        let out = Tensor::new(vec![ids.len(), dim], data)?;
        self.push(
            "embedding_lookup",
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        )
    }

    /// Concatenates matrices side by side (`axis == 1`) or stacked (`axis == 0`).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(TensorError::Invalid {
                op: "concat",
                msg: "no inputs".into(),
            });
        };
        let axis = match axis {
            0 => Axis::Rows,
            1 => Axis::Cols,
            _ => {
                return Err(TensorError::Invalid {
                    op: "concat",
                    msg: format!("axis {axis} unsupported"),
                })
            }
        };
        let rows0 = self.value(first).rows();
        let cols0 = self.value(first).cols();
        for &p in &parts[1..] {
            let pv = self.value(p);
            let ok = match axis {
                Axis::Rows => pv.cols() == cols0,
                Axis::Cols => pv.rows() == rows0,
            };
            if !ok {
                return Err(self.mismatch("concat", first, p));
            }
        }
        let out = match axis {
            Axis::Rows => {
                let rows: usize = parts.iter().map(|&p| self.value(p).rows()).sum();
                let mut data = Vec::with_capacity(rows * cols0);
                for &p in parts {
                    data.extend_from_slice(self.value(p).data());
                }
                Tensor::new(vec![rows, cols0], data)?
            }
            Axis::Cols => {
                let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
                let mut data = Vec::with_capacity(rows0 * cols);
                for r in 0..rows0 {
                    for &p in parts {
                        data.extend_from_slice(self.value(p).row_slice(r));
                    }
                }
                Tensor::new(vec![rows0, cols], data)?
            }
        };
        self.push(
            "concat",
            out,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            parts,
        )
    }

    /// Mean of all elements, as a scalar.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.is_empty() {
            return Err(TensorError::Invalid {
                op: "mean",
                msg: "empty tensor".into(),
            });
        }
        let m = av.data().iter().sum::<f64>() / av.len() as f64;
        self.push("mean", Tensor::scalar(m), Op::Mean(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum::<f64>();
        self.push("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let (r, c) = (av.rows(), av.cols());
        let out = Tensor::new(vec![c, r], transpose_kernel(av.data(), r, c))?;
        self.push("transpose", out, Op::Transpose(a), &[a])
    }

    /// Replaces every position where `mask` is true with [`MASK_FILL_VALUE`].
    pub fn masked_fill(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let av = self.value(a);
        if mask.len() != av.len() {
            return Err(TensorError::ShapeMismatch {
                op: "masked_fill",
                lhs: av.shape().to_vec(),
                rhs: vec![mask.len()],
            });
        }
        let data = av
            .data()
            .iter()
            .zip(mask)
            .map(|(&v, &m)| if m { MASK_FILL_VALUE } else { v })
            .collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        self.push(
            "masked_fill",
            out,
            Op::MaskedFill {
                x: a,
                mask: mask.to_vec(),
            },
            &[a],
        )
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let out = Tensor::new(av.shape().to_vec(), av.data().iter().map(|&x| gelu(x).0).collect())?;
        self.push("gelu", out, Op::Gelu(a), &[a])
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.data().iter().any(|&v| v <= 0.0) {
            return Err(TensorError::NonFinite { op: "log" });
        }
        let out = Tensor::new(av.shape().to_vec(), av.data().iter().map(|v| v.ln()).collect())?;
        self.push("log", out, Op::Log(a), &[a])
    }

    /// Picks elements by flat row-major index into a `1 x k` row.
    pub fn gather(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let av = self.value(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= av.len()) {
            return Err(TensorError::Invalid {
                op: "gather",
                msg: format!("index {bad} out of range for {} elements", av.len()),
            });
        }
        let data = indices.iter().map(|&i| av.data()[i]).collect();
        let out = Tensor::new(vec![1, indices.len()], data)?;
        self.push(
            "gather",
            out,
            Op::Gather {
                x: a,
                indices: indices.to_vec(),
            },
            &[a],
        )
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Every node with `requires_grad` gets a gradient; nodes the loss does
    /// not depend on get zeros. Shared subexpressions accumulate additively.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(TensorError::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            self.backward_node(node, &gy, &mut grads);
            grads[idx] = Some(gy);
        }

        let mut out = Vec::with_capacity(self.nodes.len());
        for (node, g) in self.nodes.iter().zip(grads) {
            if !node.requires_grad {
                out.push(None);
                continue;
            }
            let data = g.unwrap_or_else(|| vec![0.0; node.value.len()]);
            if data.iter().any(|v| !v.is_finite()) {
                return Err(TensorError::NonFinite { op: "backward" });
            }
            out.push(Some(Tensor::new(node.value.shape().to_vec(), data)?));
        }
        Ok(Gradients { grads: out })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backward_node(&self, node: &Node, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if self.wants(*a) {
                    let bt = transpose_kernel(bv.data(), k, n);
                    accumulate(&mut grads[a.0], &matmul_kernel(gy, &bt, m, n, k));
                }
                if self.wants(*b) {
                    let at = transpose_kernel(av.data(), m, k);
                    accumulate(&mut grads[b.0], &matmul_kernel(&at, gy, k, m, n));
                }
            }
            Op::Add { a, b, broadcast } => {
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], gy);
                }
                if self.wants(*b) {
                    if *broadcast {
                        let cols = self.value(*b).len();
                        let mut gb = vec![0.0; cols];
                        for (i, g) in gy.iter().enumerate() {
                            gb[i % cols] += g;
                        }
                        accumulate(&mut grads[b.0], &gb);
                    } else {
                        accumulate(&mut grads[b.0], gy);
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], gy);
                }
                if self.wants(*b) {
                    let neg: Vec<f64> = gy.iter().map(|g| -g).collect();
                    accumulate(&mut grads[b.0], &neg);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let d: Vec<f64> = gy.iter().zip(bv.data()).map(|(g, y)| g * y).collect();
                    accumulate(&mut grads[a.0], &d);
                }
                if self.wants(*b) {
                    let d: Vec<f64> = gy.iter().zip(av.data()).map(|(g, x)| g * x).collect();
                    accumulate(&mut grads[b.0], &d);
                }
            }
            Op::Scale(a, f) => {
                let d: Vec<f64> = gy.iter().map(|g| g * f).collect();
                accumulate(&mut grads[a.0], &d);
            }
            Op::DivScalar(a, s) => {
                let denom = self.value(*s).data()[0];
                if self.wants(*a) {
                    let d: Vec<f64> = gy.iter().map(|g| g / denom).collect();
                    accumulate(&mut grads[a.0], &d);
                }
                if self.wants(*s) {
                    let av = self.value(*a);
                    let ds: f64 = gy.iter().zip(av.data()).map(|(g, x)| -g * x / (denom * denom)).sum();
                    accumulate(&mut grads[s.0], &[ds]);
                }
            }
            Op::SoftmaxRows(a) => {
                let y = node.value.data();
                let cols = node.value.cols();
                let mut d = vec![0.0; y.len()];
                for ((yr, gr), dr) in y.chunks(cols).zip(gy.chunks(cols)).zip(d.chunks_mut(cols)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for ((o, y), g) in dr.iter_mut().zip(yr).zip(gr) {
                        *o = y * (g - dot);
                    }
                }
                accumulate(&mut grads[a.0], &d);
            }
            Op::LogSoftmaxRows(a) => {
                let y = node.value.data();
                let cols = node.value.cols();
                let mut d = vec![0.0; y.len()];
                for ((yr, gr), dr) in y.chunks(cols).zip(gy.chunks(cols)).zip(d.chunks_mut(cols)) {
                    let total: f64 = gr.iter().sum();
                    for ((o, y), g) in dr.iter_mut().zip(yr).zip(gr) {
                        *o = g - y.exp() * total;
                    }
                }
                accumulate(&mut grads[a.0], &d);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let cols = node.value.cols();
                let n = cols as f64;
                let g = self.value(*gain).data();
                if self.wants(*x) {
                    let mut d = vec![0.0; gy.len()];
                    for (r, inv) in inv_std.iter().enumerate() {
                        let span = r * cols..(r + 1) * cols;
                        let gr = &gy[span.clone()];
                        let hr = &xhat[span.clone()];
                        let dh: Vec<f64> = gr.iter().zip(g).map(|(gy, g)| gy * g).collect();
                        let sum_dh: f64 = dh.iter().sum();
                        let sum_dh_h: f64 = dh.iter().zip(hr).map(|(a, b)| a * b).sum();
                        for c in 0..cols {
                            d[r * cols + c] = inv / n * (n * dh[c] - sum_dh - hr[c] * sum_dh_h);
                        }
                    }
                    accumulate(&mut grads[x.0], &d);
                }
                if self.wants(*gain) {
                    let mut d = vec![0.0; cols];
                    for (i, (gy, h)) in gy.iter().zip(xhat).enumerate() {
                        d[i % cols] += gy * h;
                    }
                    accumulate(&mut grads[gain.0], &d);
                }
                if self.wants(*bias) {
                    let mut d = vec![0.0; cols];
                    for (i, gy) in gy.iter().enumerate() {
                        d[i % cols] += gy;
                    }
                    accumulate(&mut grads[bias.0], &d);
                }
            }
            Op::Embedding { table, ids } => {
                let tv = self.value(*table);
                let dim = tv.cols();
                let mut d = vec![0.0; tv.len()];
                for (r, &id) in ids.iter().enumerate() {
                    for c in 0..dim {
                        d[id * dim + c] += gy[r * dim + c];
                    }
                }
                accumulate(&mut grads[table.0], &d);
            }
            Op::Concat { parts, axis } => match axis {
                Axis::Rows => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.value(*p).len();
                        if self.wants(*p) {
                            accumulate(&mut grads[p.0], &gy[offset..offset + len]);
                        }
                        offset += len;
                    }
                }
                Axis::Cols => {
                    let total_cols = node.value.cols();
                    let rows = node.value.rows();
                    let mut offset = 0;
                    for p in parts {
                        let pc = self.value(*p).cols();
                        if self.wants(*p) {
                            let mut d = Vec::with_capacity(rows * pc);
                            for r in 0..rows {
                                let start = r * total_cols + offset;
                                d.extend_from_slice(&gy[start..start + pc]);
                            }
                            accumulate(&mut grads[p.0], &d);
                        }
                        offset += pc;
                    }
                }
            },
            Op::Mean(a) => {
                let n = self.value(*a).len();
                accumulate(&mut grads[a.0], &vec![gy[0] / n as f64; n]);
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                accumulate(&mut grads[a.0], &vec![gy[0]; n]);
            }
            Op::Transpose(a) => {
                let (r, c) = (node.value.rows(), node.value.cols());
                accumulate(&mut grads[a.0], &transpose_kernel(gy, r, c));
            }
            Op::MaskedFill { x, mask } => {
                let d: Vec<f64> = gy.iter().zip(mask).map(|(&g, &m)| if m { 0.0 } else { g }).collect();
                accumulate(&mut grads[x.0], &d);
            }
            Op::Gelu(a) => {
                let d: Vec<f64> = gy
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(g, &x)| g * gelu(x).1)
                    .collect();
                accumulate(&mut grads[a.0], &d);
            }
            Op::Log(a) => {
                let d: Vec<f64> = gy.iter().zip(self.value(*a).data()).map(|(g, x)| g / x).collect();
                accumulate(&mut grads[a.0], &d);
            }
            Op::Gather { x, indices } => {
                let mut d = vec![0.0; self.value(*x).len()];
                for (g, &i) in gy.iter().zip(indices) {
                    d[i] += g;
                }
                accumulate(&mut grads[x.0], &d);
            }
        }
    }
}
