//! Loss, gradients and a momentum SGD optimizer for [`Model`].

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::model::{Model, ModelParams};
use crate::tape::Tape;
use crate::tensor::Tensor;

/// A video with a class label.
pub trait Labeled {
    fn video(&self) -> &Tensor;
    fn label(&self) -> usize;
}

impl Labeled for (Tensor, usize) {
    fn video(&self) -> &Tensor {
        &self.0
    }

    fn label(&self) -> usize {
        self.1
    }
}

impl<T: Labeled> Labeled for &T {
    fn video(&self) -> &Tensor {
        (*self).video()
    }

    fn label(&self) -> usize {
        (*self).label()
    }
}

/// Mean cross-entropy over `batch` and its gradient for every parameter.
pub fn loss_and_grads<S: Labeled>(model: &Model, batch: &[S]) -> Result<(f64, ModelParams)> {
    if batch.is_empty() {
        return Err(contract!("empty batch"));
    }
    let mut tape = Tape::new();
    let p = model.params().bind(&mut tape);
    let mut total = None;
    for s in batch {
        let v = tape.leaf(s.video().clone());
        let logits = model.forward_tape(&mut tape, &p, v)?;
        let loss = tape.cross_entropy(logits, &[s.label()])?;
        total = Some(match total {
            None => loss,
            Some(acc) => tape.add(acc, loss)?,
        });
    }
    let loss = tape.scale(total.expect("non-empty"), 1.0 / batch.len() as f64)?;
    let grads = tape.backward(loss)?;
    let g = p.map(&mut |&v| grads.wrt(v, tape.value(v)));
    Ok((tape.value(loss).data()[0], g))
}

fn check_lr(lr: f64) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(contract!(
            "learning rate {} must be finite and non-negative",
            lr
        ));
    }
    Ok(())
}

/// One plain gradient-descent step; returns the loss before the update.
pub fn train_step<S: Labeled>(model: &mut Model, batch: &[S], lr: f64) -> Result<f64> {
    check_lr(lr)?;
    let (loss, grads) = loss_and_grads(model, batch)?;
    model.params_mut().zip_mut(&grads, &mut |p, g| {
        for (a, b) in p.data_mut().iter_mut().zip(g.data()) {
            *a -= lr * b;
        }
    });
    Ok(loss)
}

/// SGD with heavy-ball momentum: `v = m v + g; p -= lr v`.
#[derive(Clone, Debug)]
pub struct Sgd {
    lr: f64,
    momentum: f64,
    velocity: Option<ModelParams>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        check_lr(lr)?;
        if !(0.0..1.0).contains(&momentum) {
            return Err(contract!("momentum {} outside [0, 1)", momentum));
        }
        Ok(Self {
            lr,
            momentum,
            velocity: None,
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) -> Result<()> {
        check_lr(lr)?;
        self.lr = lr;
        Ok(())
    }

    /// One update on `batch`; returns the loss before the update.
    pub fn step<S: Labeled>(&mut self, model: &mut Model, batch: &[S]) -> Result<f64> {
        let (loss, grads) = loss_and_grads(model, batch)?;
        let velocity = self
            .velocity
            .get_or_insert_with(|| grads.map(&mut |g| Tensor::zeros(g.shape().to_vec())));
        let m = self.momentum;
        velocity.zip_mut(&grads, &mut |v, g| {
            for (a, b) in v.data_mut().iter_mut().zip(g.data()) {
                *a = m * *a + b;
            }
        });
        let lr = self.lr;
        model.params_mut().zip_mut(velocity, &mut |p, v| {
            for (a, b) in p.data_mut().iter_mut().zip(v.data()) {
                *a -= lr * b;
            }
        });
        Ok(loss)
    }
}

/// Shuffles `data` and runs one pass of minibatch updates; returns the mean batch loss.
pub fn train_epoch<S: Labeled, R: Rng + ?Sized>(
    model: &mut Model,
    opt: &mut Sgd,
    data: &[S],
    batch_size: usize,
    rng: &mut R,
) -> Result<f64> {
    if batch_size == 0 || data.is_empty() {
        return Err(contract!("batch size and data must be non-empty"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut batches = 0;
    for chunk in order.chunks(batch_size) {
        let batch: Vec<&S> = chunk.iter().map(|&i| &data[i]).collect();
        total += opt.step(model, &batch)?;
        batches += 1;
    }
    Ok(total / batches as f64)
}

/// Validation summary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub top1: f64,
    pub correct: usize,
    pub total: usize,
}

/// Index of the largest logit; the first one on ties.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

pub fn evaluate<S: Labeled>(model: &Model, samples: &[S]) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(contract!("no samples to evaluate"));
    }
    let mut loss = 0.0;
    let mut correct = 0;
    for s in samples {
        let logits = model.classify(s.video())?;
        let row = logits.clone().reshape([1, logits.len()])?;
        loss += crate::ops::cross_entropy(&row, &[s.label()])?.data()[0];
        if argmax(logits.data()) == s.label() {
            correct += 1;
        }
    }
    Ok(Evaluation {
        loss: loss / samples.len() as f64,
        top1: correct as f64 / samples.len() as f64,
        correct,
        total: samples.len(),
    })
}
