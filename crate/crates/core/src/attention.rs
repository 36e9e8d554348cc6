//! Windowed multi-head self-attention with a 3D relative position bias, and
//! the patch-shift pipeline built on top of it.
//!
//! The pipeline shifts patches in time, attends inside each spatial window of
//! every frame, then shifts the outputs back. The bias index of every token
//! pair is computed from the tokens' source frames, so the 3D positions travel
//! with the patches.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, dim_err, Result};
use crate::init::trunc_normal;
use crate::patterns::{tile_offsets, OffsetGrid, ShiftPattern};
use crate::shift::{patch_shift_index, shifted_frame_coords, ShiftDirection, TokenTensor};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Partition of an `Hp x Wp` patch grid into non-overlapping windows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowLayout {
    grid_h: usize,
    grid_w: usize,
    win_h: usize,
    win_w: usize,
}

impl WindowLayout {
    pub fn new(grid_h: usize, grid_w: usize, win_h: usize, win_w: usize) -> Result<Self> {
        if win_h == 0 || win_w == 0 || grid_h == 0 || grid_w == 0 {
            return Err(contract!("window and grid extents must be positive"));
        }
        if !grid_h.is_multiple_of(win_h) || !grid_w.is_multiple_of(win_w) {
            return dim_err("window layout", &[grid_h, grid_w], &[win_h, win_w]);
        }
        Ok(Self {
            grid_h,
            grid_w,
            win_h,
            win_w,
        })
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.grid_h, self.grid_w)
    }

    pub fn window(&self) -> (usize, usize) {
        (self.win_h, self.win_w)
    }

    pub fn windows(&self) -> usize {
        (self.grid_h / self.win_h) * (self.grid_w / self.win_w)
    }

    pub fn tokens_per_window(&self) -> usize {
        self.win_h * self.win_w
    }

    /// Grid coordinate of token `i` (row-major) of window `w` (row-major).
    pub fn token_coord(&self, w: usize, i: usize) -> (usize, usize) {
        let per_row = self.grid_w / self.win_w;
        let (wy, wx) = (w / per_row, w % per_row);
        (
            wy * self.win_h + i / self.win_w,
            wx * self.win_w + i % self.win_w,
        )
    }

    /// Gather index `[T, Hp, Wp, D] -> [T * windows, n, D]`.
    pub fn partition_index(&self, frames: usize, dim: usize) -> Vec<usize> {
        let n = self.tokens_per_window();
        let mut index = Vec::with_capacity(frames * self.windows() * n * dim);
        for t in 0..frames {
            for w in 0..self.windows() {
                for i in 0..n {
                    let (r, c) = self.token_coord(w, i);
                    let base = ((t * self.grid_h + r) * self.grid_w + c) * dim;
                    index.extend(base..base + dim);
                }
            }
        }
        index
    }

    /// Inverse of [`partition_index`](Self::partition_index).
    pub fn reverse_index(&self, frames: usize, dim: usize) -> Vec<usize> {
        let fwd = self.partition_index(frames, dim);
        let mut inv = vec![0; fwd.len()];
        for (o, &i) in fwd.iter().enumerate() {
            inv[i] = o;
        }
        inv
    }
}

/// Geometry of a per-head relative position bias table indexed by
/// `(dt, dr, dc)` with `|dt| < max_frames`, `|dr| < win_h`, `|dc| < win_w`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelPosBias3D {
    pub heads: usize,
    pub max_frames: usize,
    pub win_h: usize,
    pub win_w: usize,
}

impl RelPosBias3D {
    pub fn table_len(&self) -> usize {
        (2 * self.max_frames - 1) * (2 * self.win_h - 1) * (2 * self.win_w - 1)
    }

    pub fn table_shape(&self) -> [usize; 2] {
        [self.heads, self.table_len()]
    }

    /// Flat table slot of a displacement.
    pub fn index(&self, dt: i64, dr: i64, dc: i64) -> Result<usize> {
        let (t, h, w) = (self.max_frames as i64, self.win_h as i64, self.win_w as i64);
        if dt.abs() >= t || dr.abs() >= h || dc.abs() >= w {
            return Err(contract!(
                "displacement ({}, {}, {}) outside bias table bounds ({}, {}, {})",
                dt,
                dr,
                dc,
                t - 1,
                h - 1,
                w - 1
            ));
        }
        let (st, sh, sw) = (dt + t - 1, dr + h - 1, dc + w - 1);
        Ok(((st * (2 * h - 1) + sh) * (2 * w - 1) + sw) as usize)
    }
}

/// Bias-table index of every query/key pair of one window; `srcframe[i]` is
/// the temporal coordinate of window token `i`.
pub fn relpos_index(
    bias: &RelPosBias3D,
    layout: &WindowLayout,
    srcframe: &[usize],
) -> Result<Vec<usize>> {
    let n = layout.tokens_per_window();
    if (bias.win_h, bias.win_w) != layout.window() {
        return dim_err(
            "relpos_index",
            &[bias.win_h, bias.win_w],
            &[layout.win_h, layout.win_w],
        );
    }
    if srcframe.len() != n {
        return dim_err("relpos_index", &[n], &[srcframe.len()]);
    }
    let mut out = Vec::with_capacity(n * n);
    for q in 0..n {
        let (qr, qc) = ((q / layout.win_w) as i64, (q % layout.win_w) as i64);
        for k in 0..n {
            let (kr, kc) = ((k / layout.win_w) as i64, (k % layout.win_w) as i64);
            let dt = srcframe[k] as i64 - srcframe[q] as i64;
            out.push(bias.index(dt, kr - qr, kc - qc)?);
        }
    }
    Ok(out)
}

/// Projection weights and bias table of one attention layer.
///
/// Generic over the parameter handle so the same structure carries tensors,
/// tape variables or gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams<P = Tensor> {
    pub dim: usize,
    pub bias: RelPosBias3D,
    pub wq: P,
    pub bq: P,
    pub wk: P,
    pub bk: P,
    pub wv: P,
    pub bv: P,
    pub wo: P,
    pub bo: P,
    /// `[heads, table_len]`.
    pub bias_table: P,
}

impl<P> AttentionParams<P> {
    pub fn heads(&self) -> usize {
        self.bias.heads
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.bias.heads
    }

    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> AttentionParams<Q> {
        AttentionParams {
            dim: self.dim,
            bias: self.bias,
            wq: f(&self.wq),
            bq: f(&self.bq),
            wk: f(&self.wk),
            bk: f(&self.bk),
            wv: f(&self.wv),
            bv: f(&self.bv),
            wo: f(&self.wo),
            bo: f(&self.bo),
            bias_table: f(&self.bias_table),
        }
    }

    pub fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a P)) {
        for (name, p) in [
            ("wq", &self.wq),
            ("bq", &self.bq),
            ("wk", &self.wk),
            ("bk", &self.bk),
            ("wv", &self.wv),
            ("bv", &self.bv),
            ("wo", &self.wo),
            ("bo", &self.bo),
            ("bias_table", &self.bias_table),
        ] {
            f(format!("{prefix}.{name}"), p);
        }
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&mut P)) {
        for p in [
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.bias_table,
        ] {
            f(p);
        }
    }
}

fn check_heads(dim: usize, heads: usize) -> Result<()> {
    if heads == 0 || !dim.is_multiple_of(heads) {
        return Err(contract!("{} heads do not divide width D = {}", heads, dim));
    }
    Ok(())
}

impl AttentionParams<Tensor> {
    pub fn zeros(dim: usize, bias: RelPosBias3D) -> Result<Self> {
        check_heads(dim, bias.heads)?;
        let w = || Tensor::zeros([dim, dim]);
        let b = || Tensor::zeros([dim]);
        Ok(Self {
            dim,
            bias,
            wq: w(),
            bq: b(),
            wk: w(),
            bk: b(),
            wv: w(),
            bv: b(),
            wo: w(),
            bo: b(),
            bias_table: Tensor::zeros(bias.table_shape()),
        })
    }

    /// Truncated-normal weights with standard deviation `std`; zero biases and bias table.
    pub fn init<R: Rng + ?Sized>(
        dim: usize,
        bias: RelPosBias3D,
        rng: &mut R,
        std: f64,
    ) -> Result<Self> {
        let mut p = Self::zeros(dim, bias)?;
        p.wq = trunc_normal(rng, &[dim, dim], std);
        p.wk = trunc_normal(rng, &[dim, dim], std);
        p.wv = trunc_normal(rng, &[dim, dim], std);
        p.wo = trunc_normal(rng, &[dim, dim], std);
        Ok(p)
    }

    pub fn bind(&self, tape: &mut Tape) -> AttentionParams<Var> {
        self.map(&mut |t| tape.leaf(t.clone()))
    }
}

/// Gather index splitting `[B, n, D]` into `[B * heads, n, d]`.
fn head_split_index(batch: usize, n: usize, heads: usize, head_dim: usize) -> Vec<usize> {
    let dim = heads * head_dim;
    let mut index = Vec::with_capacity(batch * n * dim);
    for b in 0..batch {
        for h in 0..heads {
            for i in 0..n {
                for j in 0..head_dim {
                    index.push((b * n + i) * dim + h * head_dim + j);
                }
            }
        }
    }
    index
}

fn invert(index: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; index.len()];
    for (o, &i) in index.iter().enumerate() {
        inv[i] = o;
    }
    inv
}

/// Pre-computed gather indices for multi-head attention over a batch of
/// equally sized token sets.
#[derive(Clone, Debug)]
struct HeadPlan {
    batch: usize,
    n: usize,
    heads: usize,
    head_dim: usize,
    split: Arc<[usize]>,
    merge: Arc<[usize]>,
    /// Per `(batch, head, q, k)` slot into the flat `[heads, table_len]` bias table.
    bias: Option<Arc<[usize]>>,
}

impl HeadPlan {
    fn new(
        batch: usize,
        n: usize,
        heads: usize,
        head_dim: usize,
        rel: Option<(&[usize], usize)>,
    ) -> Self {
        let split = head_split_index(batch, n, heads, head_dim);
        let merge = invert(&split);
        let bias = rel.map(|(rel, table_len)| {
            let mut idx = Vec::with_capacity(batch * heads * n * n);
            for b in 0..batch {
                for h in 0..heads {
                    idx.extend(
                        rel[b * n * n..(b + 1) * n * n]
                            .iter()
                            .map(|&r| h * table_len + r),
                    );
                }
            }
            idx.into()
        });
        Self {
            batch,
            n,
            heads,
            head_dim,
            split: split.into(),
            merge: merge.into(),
            bias,
        }
    }

    /// `x: [B, n, D] -> [B, n, D]`; also returns the attention probabilities `[B * heads, n, n]`.
    fn forward(&self, tape: &mut Tape, x: Var, p: &AttentionParams<Var>) -> Result<(Var, Var)> {
        let (b, n, h, d) = (self.batch, self.n, self.heads, self.head_dim);
        let q = tape.affine(x, p.wq, p.bq)?;
        let k = tape.affine(x, p.wk, p.bk)?;
        let v = tape.affine(x, p.wv, p.bv)?;
        let split_shape = [b * h, n, d];
        let q = tape.gather(q, self.split.clone(), &split_shape)?;
        let k = tape.gather(k, self.split.clone(), &split_shape)?;
        let v = tape.gather(v, self.split.clone(), &split_shape)?;
        let scores = tape.matmul(q, k, true)?;
        let mut scores = tape.scale(scores, 1.0 / libm::sqrt(d as f64))?;
        if let Some(bias) = &self.bias {
            let gathered = tape.gather(p.bias_table, bias.clone(), &[b * h, n, n])?;
            scores = tape.add(scores, gathered)?;
        }
        let probs = tape.softmax(scores, 2)?;
        let out = tape.matmul(probs, v, false)?;
        let merged = tape.gather(out, self.merge.clone(), &[b, n, h * d])?;
        Ok((tape.affine(merged, p.wo, p.bo)?, probs))
    }
}

/// Multi-head attention over the tokens of one window: `tokens: [n, D]`,
/// `index`: the `n * n` bias-table slots from [`relpos_index`].
pub fn window_mhsa(tokens: &Tensor, params: &AttentionParams, index: &[usize]) -> Result<Tensor> {
    if tokens.rank() != 2 || tokens.shape()[1] != params.dim {
        return dim_err("window_mhsa", tokens.shape(), &[params.dim]);
    }
    let n = tokens.shape()[0];
    if index.len() != n * n {
        return dim_err("window_mhsa", &[n * n], &[index.len()]);
    }
    check_heads(params.dim, params.heads())?;
    let plan = HeadPlan::new(
        1,
        n,
        params.heads(),
        params.head_dim(),
        Some((index, params.bias.table_len())),
    );
    let mut tape = Tape::new();
    let p = params.bind(&mut tape);
    let x = tape.leaf(tokens.clone().reshape([1, n, params.dim])?);
    let (out, _) = plan.forward(&mut tape, x, &p)?;
    tape.value(out).clone().reshape([n, params.dim])
}

/// Forward and inverse gather indices of one permutation.
pub(crate) type IndexPair = (Arc<[usize]>, Arc<[usize]>);

/// Everything needed to run windowed attention over one `[T, Hp, Wp, D]`
/// token grid, optionally wrapped in a patch shift.
#[derive(Clone, Debug)]
pub struct AttentionPlan {
    extents: [usize; 4],
    layout: WindowLayout,
    shift: Option<IndexPair>,
    partition: Arc<[usize]>,
    reverse: Arc<[usize]>,
    heads: HeadPlan,
}

impl AttentionPlan {
    /// Spatial-only windowed attention (every token's temporal coordinate is its own frame).
    pub fn spatial(extents: [usize; 4], layout: WindowLayout, bias: &RelPosBias3D) -> Result<Self> {
        let [frames, hp, wp, _] = extents;
        let coords: Vec<usize> = (0..frames)
            .flat_map(|t| core::iter::repeat_n(t, hp * wp))
            .collect();
        Self::build(extents, layout, bias, None, &coords)
    }

    /// Patch shift, windowed attention, shift back. With `shift_rpe` the bias
    /// uses each token's source frame; otherwise its host frame.
    pub fn patch_shift(
        extents: [usize; 4],
        layout: WindowLayout,
        bias: &RelPosBias3D,
        grid: &OffsetGrid,
        shift_rpe: bool,
    ) -> Result<Self> {
        let [frames, hp, wp, _] = extents;
        let fwd = patch_shift_index(extents, grid, ShiftDirection::Forward)?;
        let inv = patch_shift_index(extents, grid, ShiftDirection::Inverse)?;
        let coords = if shift_rpe {
            shifted_frame_coords(frames, grid)
        } else {
            (0..frames)
                .flat_map(|t| core::iter::repeat_n(t, hp * wp))
                .collect()
        };
        Self::build(
            extents,
            layout,
            bias,
            Some((fwd.into(), inv.into())),
            &coords,
        )
    }

    fn build(
        extents: [usize; 4],
        layout: WindowLayout,
        bias: &RelPosBias3D,
        shift: Option<IndexPair>,
        frame_coords: &[usize],
    ) -> Result<Self> {
        let [frames, hp, wp, dim] = extents;
        if layout.grid() != (hp, wp) {
            return dim_err(
                "attention layout",
                &[hp, wp],
                &[layout.grid_h, layout.grid_w],
            );
        }
        check_heads(dim, bias.heads)?;
        let n = layout.tokens_per_window();
        let batch = frames * layout.windows();
        let mut rel = Vec::with_capacity(batch * n * n);
        let mut src = vec![0; n];
        for t in 0..frames {
            for w in 0..layout.windows() {
                for (i, s) in src.iter_mut().enumerate() {
                    let (r, c) = layout.token_coord(w, i);
                    *s = frame_coords[(t * hp + r) * wp + c];
                }
                rel.extend(relpos_index(bias, &layout, &src)?);
            }
        }
        Ok(Self {
            extents,
            layout,
            shift,
            partition: layout.partition_index(frames, dim).into(),
            reverse: layout.reverse_index(frames, dim).into(),
            heads: HeadPlan::new(
                batch,
                n,
                bias.heads,
                dim / bias.heads,
                Some((&rel, bias.table_len())),
            ),
        })
    }

    pub fn layout(&self) -> &WindowLayout {
        &self.layout
    }

    /// `x: [T, Hp, Wp, D] -> [T, Hp, Wp, D]`; no residual.
    pub fn forward(&self, tape: &mut Tape, x: Var, params: &AttentionParams<Var>) -> Result<Var> {
        self.forward_with_probs(tape, x, params).map(|(o, _)| o)
    }

    /// As [`forward`](Self::forward), also returning the attention probabilities.
    pub fn forward_with_probs(
        &self,
        tape: &mut Tape,
        x: Var,
        params: &AttentionParams<Var>,
    ) -> Result<(Var, Var)> {
        if tape.value(x).shape() != self.extents {
            return dim_err("attention input", tape.value(x).shape(), &self.extents);
        }
        let [frames, _, _, dim] = self.extents;
        let mut h = x;
        if let Some((fwd, _)) = &self.shift {
            h = tape.gather(h, fwd.clone(), &self.extents)?;
        }
        let batch = frames * self.layout.windows();
        let windows = tape.gather(
            h,
            self.partition.clone(),
            &[batch, self.layout.tokens_per_window(), dim],
        )?;
        let (out, probs) = self.heads.forward(tape, windows, params)?;
        let mut out = tape.gather(out, self.reverse.clone(), &self.extents)?;
        if let Some((_, inv)) = &self.shift {
            out = tape.gather(out, inv.clone(), &self.extents)?;
        }
        Ok((out, probs))
    }

    /// Runs the plan on plain values.
    pub fn apply(&self, z: &TokenTensor, params: &AttentionParams) -> Result<TokenTensor> {
        let mut tape = Tape::new();
        let p = params.bind(&mut tape);
        let x = tape.leaf(z.tensor().clone());
        let out = self.forward(&mut tape, x, &p)?;
        TokenTensor::new(tape.value(out).clone())
    }
}

/// Spatial-only windowed attention applied independently at every frame.
pub fn windowed_attention(
    z: &TokenTensor,
    layout: WindowLayout,
    params: &AttentionParams,
) -> Result<TokenTensor> {
    AttentionPlan::spatial(z.extents(), layout, &params.bias)?.apply(z, params)
}

/// Patch shift, per-frame windowed attention with source-frame bias indices, shift back.
pub fn patch_shift_attention(
    z: &TokenTensor,
    pattern: &ShiftPattern,
    layout: WindowLayout,
    params: &AttentionParams,
) -> Result<TokenTensor> {
    let grid = tile_offsets(pattern, z.grid_h(), z.grid_w());
    AttentionPlan::patch_shift(z.extents(), layout, &params.bias, &grid, true)?.apply(z, params)
}

/// Full spatiotemporal attention over all `T * Hp * Wp` tokens at once,
/// without position bias. Reference point for complexity comparisons.
pub fn joint_attention_tape(tape: &mut Tape, x: Var, params: &AttentionParams<Var>) -> Result<Var> {
    let shape = tape.value(x).shape().to_vec();
    if shape.len() != 4 || shape[3] != params.dim {
        return dim_err("joint_attention", &shape, &[params.dim]);
    }
    check_heads(params.dim, params.heads())?;
    let tokens = shape[0] * shape[1] * shape[2];
    let plan = HeadPlan::new(1, tokens, params.heads(), params.head_dim(), None);
    let flat = tape.reshape(x, &[1, tokens, params.dim])?;
    let (out, _) = plan.forward(tape, flat, params)?;
    tape.reshape(out, &shape)
}

pub fn joint_attention(z: &TokenTensor, params: &AttentionParams) -> Result<TokenTensor> {
    let mut tape = Tape::new();
    let p = params.bind(&mut tape);
    let x = tape.leaf(z.tensor().clone());
    let out = joint_attention_tape(&mut tape, x, &p)?;
    TokenTensor::new(tape.value(out).clone())
}
