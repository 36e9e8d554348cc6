//! Reverse-mode differentiation over a linear record of tensor primitives.
//!
//! A [`Tape`] owns every intermediate value. Operations append a node and hand
//! back a [`Var`] handle; [`Tape::backward`] walks the record in reverse and
//! accumulates exact gradients. The compute primitives are affine, batched
//! matmul, softmax, layer norm, GELU, row mean and cross-entropy; add, scale,
//! gather and reshape only move or combine values.
//!
//! The tape also tallies multiply-accumulates of its matrix products, split
//! into projection (affine) and attention (matmul) work.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract, Result};
use crate::ops;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Multiply-accumulate counts of one recorded run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MacTally {
    /// Affine maps (projections, FFN, embedding, classifier).
    pub projection: u64,
    /// Batched matmuls (attention scores and value aggregation).
    pub attention: u64,
}

impl MacTally {
    pub fn total(&self) -> u64 {
        self.projection + self.attention
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Affine {
        x: Var,
        w: Var,
        b: Var,
    },
    MatMul {
        a: Var,
        b: Var,
        trans_b: bool,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    },
    Gelu {
        x: Var,
    },
    MeanRows {
        x: Var,
    },
    CrossEntropy {
        logits: Var,
        labels: Arc<[usize]>,
    },
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        factor: f64,
    },
    Gather {
        x: Var,
        index: Arc<[usize]>,
        shape: Vec<usize>,
    },
    Reshape {
        x: Var,
        shape: Vec<usize>,
    },
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    /// Per-row `1/sigma` for layer norm.
    stats: Option<Vec<f64>>,
}

/// Gradients of one scalar with respect to every recorded value.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros shaped like `like` when `v` did not influence the output.
    pub fn wrt(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape().to_vec()))
    }
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    macs: MacTally,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn macs(&self) -> MacTally {
        self.macs
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, None)
    }

    fn push(&mut self, value: Tensor, op: Op, stats: Option<Vec<f64>>) -> Var {
        self.nodes.push(Node { value, op, stats });
        Var(self.nodes.len() - 1)
    }

    /// Evaluates `op` against the values currently on the tape.
    fn eval(&self, op: &Op) -> Result<(Tensor, Option<Vec<f64>>)> {
        let v = |x: &Var| &self.nodes[x.0].value;
        Ok(match op {
            Op::Leaf => unreachable!("leaves are not evaluated"),
            Op::Affine { x, w, b } => (ops::affine(v(x), v(w), v(b))?, None),
            Op::MatMul { a, b, trans_b } => (ops::matmul(v(a), v(b), *trans_b)?, None),
            Op::Softmax { x, axis } => (ops::softmax(v(x), *axis)?, None),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                eps,
            } => {
                let (y, s) = ops::layer_norm_with_stats(v(x), v(gamma), v(beta), *eps)?;
                (y, Some(s))
            }
            Op::Gelu { x } => (ops::gelu(v(x)), None),
            Op::MeanRows { x } => (ops::mean_rows(v(x)), None),
            Op::CrossEntropy { logits, labels } => (ops::cross_entropy(v(logits), labels)?, None),
            Op::Add { a, b } => (ops::add(v(a), v(b))?, None),
            Op::Scale { x, factor } => (ops::scale(v(x), *factor), None),
            Op::Gather { x, index, shape } => (ops::gather(v(x), index, shape)?, None),
            Op::Reshape { x, shape } => (v(x).clone().reshape(shape.clone())?, None),
        })
    }

    fn record(&mut self, op: Op) -> Result<Var> {
        let (value, stats) = self.eval(&op)?;
        match &op {
            Op::Affine { w, .. } => {
                let w = self.value(*w).shape();
                let rows = (value.len() / w[0]) as u64;
                self.macs.projection += rows * (w[0] * w[1]) as u64;
            }
            Op::MatMul { a, b, trans_b } => {
                let (bt, m, k, n) = ops::matmul_dims(self.value(*a), self.value(*b), *trans_b)?;
                self.macs.attention += (bt * m * k * n) as u64;
            }
            _ => {}
        }
        Ok(self.push(value, op, stats))
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        self.record(Op::Affine { x, w, b })
    }

    pub fn matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        self.record(Op::MatMul { a, b, trans_b })
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.record(Op::Softmax { x, axis })
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        self.record(Op::LayerNorm {
            x,
            gamma,
            beta,
            eps,
        })
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.record(Op::Gelu { x })
    }

    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        self.record(Op::MeanRows { x })
    }

    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        self.record(Op::CrossEntropy {
            logits,
            labels: labels.into(),
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Add { a, b })
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.record(Op::Scale { x, factor })
    }

    /// `out[i] = x[index[i]]` over flat storage, shaped as `shape`.
    pub fn gather(&mut self, x: Var, index: Arc<[usize]>, shape: &[usize]) -> Result<Var> {
        self.record(Op::Gather {
            x,
            index,
            shape: shape.to_vec(),
        })
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.record(Op::Reshape {
            x,
            shape: shape.to_vec(),
        })
    }

    /// Recomputes every non-leaf value from the recorded leaves.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let mut scratch = Tape {
            nodes: Vec::with_capacity(self.nodes.len()),
            macs: MacTally::default(),
        };
        for node in &self.nodes {
            match node.op {
                Op::Leaf => {
                    scratch.leaf(node.value.clone());
                }
                ref op => {
                    scratch.record(op.clone())?;
                }
            }
        }
        Ok(scratch.nodes.into_iter().map(|n| n.value).collect())
    }

    /// Gradients of the scalar `output` with respect to every recorded value.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out_len = self.value(output).len();
        if out_len != 1 {
            return Err(contract!(
                "backward needs a scalar output, got shape {:?}",
                self.value(output).shape()
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(vec![1.0]);
        for idx in (0..=output.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            self.backprop(node, &dy, &mut grads);
            grads[idx] = Some(dy);
        }
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.map(|g| Tensor::new(self.nodes[i].value.shape().to_vec(), g).expect("grad shape"))
            })
            .collect::<Vec<_>>();
        let mut grads = grads;
        grads.resize(self.nodes.len(), None);
        Ok(Gradients { grads })
    }

    fn backprop(&self, node: &Node, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let (xv, wv) = (val(*x), val(*w));
                let (out_dim, in_dim) = (wv.shape()[0], wv.shape()[1]);
                let rows = xv.len() / in_dim;
                let (xd, wd) = (xv.data(), wv.data());
                let mut dx = vec![0.0; xv.len()];
                let mut dw = vec![0.0; wv.len()];
                let mut db = vec![0.0; out_dim];
                for r in 0..rows {
                    for j in 0..out_dim {
                        let g = dy[r * out_dim + j];
                        if g == 0.0 {
                            continue;
                        }
                        db[j] += g;
                        for i in 0..in_dim {
                            dx[r * in_dim + i] += g * wd[j * in_dim + i];
                            dw[j * in_dim + i] += g * xd[r * in_dim + i];
                        }
                    }
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *w, dw);
                accumulate(grads, *b, db);
            }
            Op::MatMul { a, b, trans_b } => {
                let (av, bv) = (val(*a), val(*b));
                let (bt, m, k, n) = ops::matmul_dims(av, bv, *trans_b).expect("recorded");
                let (ad, bd) = (av.data(), bv.data());
                let mut da = vec![0.0; av.len()];
                let mut db = vec![0.0; bv.len()];
                for bi in 0..bt {
                    let (a0, b0, o0) = (bi * m * k, bi * k * n, bi * m * n);
                    for i in 0..m {
                        for j in 0..n {
                            let g = dy[o0 + i * n + j];
                            for p in 0..k {
                                let bidx = if *trans_b {
                                    b0 + j * k + p
                                } else {
                                    b0 + p * n + j
                                };
                                da[a0 + i * k + p] += g * bd[bidx];
                                db[bidx] += g * ad[a0 + i * k + p];
                            }
                        }
                    }
                }
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::Softmax { x, axis } => {
                let y = node.value.data();
                let (outer, len, inner) = ops::axis_split(node.value.shape(), *axis);
                let mut dx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| o * len * inner + j * inner + i;
                        let dot: f64 = (0..len).map(|j| dy[at(j)] * y[at(j)]).sum();
                        for j in 0..len {
                            dx[at(j)] = y[at(j)] * (dy[at(j)] - dot);
                        }
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::LayerNorm { x, gamma, beta, .. } => {
                let xv = val(*x);
                let g = val(*gamma).data();
                let d = xv.last_dim();
                let rows = xv.len() / d;
                let inv_std = node.stats.as_ref().expect("layer norm stats");
                let mut dx = vec![0.0; xv.len()];
                let mut dg = vec![0.0; d];
                let mut dbeta = vec![0.0; d];
                let mut xhat = vec![0.0; d];
                let mut dxhat = vec![0.0; d];
                for r in 0..rows {
                    let row = &xv.data()[r * d..(r + 1) * d];
                    let mean = row.iter().sum::<f64>() / d as f64;
                    let is = inv_std[r];
                    let mut m1 = 0.0;
                    let mut m2 = 0.0;
                    for i in 0..d {
                        xhat[i] = (row[i] - mean) * is;
                        let gy = dy[r * d + i];
                        dg[i] += gy * xhat[i];
                        dbeta[i] += gy;
                        dxhat[i] = gy * g[i];
                        m1 += dxhat[i];
                        m2 += dxhat[i] * xhat[i];
                    }
                    m1 /= d as f64;
                    m2 /= d as f64;
                    for i in 0..d {
                        dx[r * d + i] = is * (dxhat[i] - m1 - xhat[i] * m2);
                    }
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *gamma, dg);
                accumulate(grads, *beta, dbeta);
            }
            Op::Gelu { x } => {
                let xd = val(*x).data();
                let dx = xd
                    .iter()
                    .zip(dy)
                    .map(|(&v, &g)| g * ops::gelu_grad_scalar(v))
                    .collect();
                accumulate(grads, *x, dx);
            }
            Op::MeanRows { x } => {
                let xv = val(*x);
                let d = xv.last_dim();
                let rows = xv.len() / d;
                let mut dx = vec![0.0; xv.len()];
                for r in 0..rows {
                    for i in 0..d {
                        dx[r * d + i] = dy[i] / rows as f64;
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::CrossEntropy { logits, labels } => {
                let lv = val(*logits);
                let c = lv.shape()[1];
                let bsz = labels.len() as f64;
                let mut dx = vec![0.0; lv.len()];
                for (b, &label) in labels.iter().enumerate() {
                    let row = &lv.data()[b * c..(b + 1) * c];
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = row.iter().map(|v| libm::exp(v - max)).sum();
                    for j in 0..c {
                        let p = libm::exp(row[j] - max) / sum;
                        let t = if j == label { 1.0 } else { 0.0 };
                        dx[b * c + j] = dy[0] * (p - t) / bsz;
                    }
                }
                accumulate(grads, *logits, dx);
            }
            Op::Add { a, b } => {
                accumulate(grads, *a, dy.to_vec());
                accumulate(grads, *b, dy.to_vec());
            }
            Op::Scale { x, factor } => {
                accumulate(grads, *x, dy.iter().map(|g| g * factor).collect());
            }
            Op::Gather { x, index, .. } => {
                let mut dx = vec![0.0; val(*x).len()];
                for (o, &i) in index.iter().enumerate() {
                    dx[i] += dy[o];
                }
                accumulate(grads, *x, dx);
            }
            Op::Reshape { x, .. } => accumulate(grads, *x, dy.to_vec()),
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(acc) => {
            for (a, b) in acc.iter_mut().zip(g) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

/// Runs `f` on a fresh tape and returns the multiply-accumulates it performed.
pub fn count_macs<F>(f: F) -> Result<MacTally>
where
    F: FnOnce(&mut Tape) -> Result<()>,
{
    let mut tape = Tape::new();
    f(&mut tape)?;
    Ok(tape.macs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::zeros([2]));
        assert!(t.backward(x).is_err());
    }

    #[test]
    fn replay_is_bit_exact() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::new([2, 3], vec![0.1, -0.4, 0.7, 1.3, -2.0, 0.05]).unwrap());
        let g = t.leaf(Tensor::full([3], 1.1));
        let b = t.leaf(Tensor::full([3], -0.2));
        let y = t.layer_norm(x, g, b, ops::LN_EPS).unwrap();
        let y = t.gelu(y).unwrap();
        let y = t.softmax(y, 1).unwrap();
        let m = t.mean_rows(y).unwrap();
        let replayed = t.replay().unwrap();
        assert_eq!(replayed[m.index()], *t.value(m));
        assert_eq!(replayed.len(), t.len());
    }

    #[test]
    fn unused_leaf_has_no_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(3.0));
        let unused = t.leaf(Tensor::scalar(1.0));
        let y = t.scale(x, 2.0).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0]);
        assert!(g.get(unused).is_none());
    }

    #[test]
    fn mac_tally_splits_affine_and_matmul() {
        let macs = count_macs(|t| {
            let x = t.leaf(Tensor::zeros([5, 3]));
            let w = t.leaf(Tensor::zeros([4, 3]));
            let b = t.leaf(Tensor::zeros([4]));
            t.affine(x, w, b)?;
            let a = t.leaf(Tensor::zeros([2, 3, 4]));
            let c = t.leaf(Tensor::zeros([2, 6, 4]));
            t.matmul(a, c, true)?;
            Ok(())
        })
        .unwrap();
        assert_eq!(macs.projection, 5 * 4 * 3);
        assert_eq!(macs.attention, 2 * 3 * 6 * 4);
        assert_eq!(count_macs(|_| Ok(())).unwrap().total(), 0);
    }
}
