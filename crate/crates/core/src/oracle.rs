//! Brute-force reference for patch-shift attention and the attention
//! complexity model.
//!
//! [`oracle_attention`] never calls the shift or partition code: it lists, for
//! every frame and window, the source coordinates of the tokens that end up
//! there, runs a naive double-loop attention over them with hand-indexed
//! bias lookups, and writes each output back to its source coordinate.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{
    joint_attention_tape, AttentionParams, AttentionPlan, RelPosBias3D, WindowLayout,
};
use crate::error::{contract, dim_err, Result};
use crate::init::uniform;
use crate::patterns::{OffsetGrid, ShiftPattern};
use crate::shift::TokenTensor;
use crate::tape::{count_macs, MacTally};
use crate::tensor::Tensor;

/// Token coordinate `(frame, row, col)` in the unshifted grid.
pub type Coord = (usize, usize, usize);

/// For every frame and window, the unshifted coordinates of the tokens that
/// attend together once the pattern has been applied.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GatherSet {
    frames: usize,
    windows: usize,
    sets: Vec<Vec<Coord>>,
}

impl GatherSet {
    pub fn new(frames: usize, pattern: &ShiftPattern, layout: &WindowLayout) -> Self {
        let (wh, ww) = layout.window();
        let (_, gw) = layout.grid();
        let per_row = gw / ww;
        let mut sets = Vec::with_capacity(frames * layout.windows());
        for t in 0..frames {
            for w in 0..layout.windows() {
                let (r0, c0) = ((w / per_row) * wh, (w % per_row) * ww);
                let mut set = Vec::with_capacity(wh * ww);
                for r in r0..r0 + wh {
                    for c in c0..c0 + ww {
                        let g = pattern.get(r % pattern.height(), c % pattern.width()) as i64;
                        let src = (t as i64 + g).rem_euclid(frames as i64) as usize;
                        set.push((src, r, c));
                    }
                }
                sets.push(set);
            }
        }
        Self {
            frames,
            windows: layout.windows(),
            sets,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn windows(&self) -> usize {
        self.windows
    }

    /// Tokens of window `w` at frame `t`, in row-major window order.
    pub fn get(&self, t: usize, w: usize) -> &[Coord] {
        &self.sets[t * self.windows + w]
    }
}

/// Naive patch-shift attention. Must agree with
/// [`patch_shift_attention`](crate::attention::patch_shift_attention).
pub fn oracle_attention(
    z: &TokenTensor,
    pattern: &ShiftPattern,
    layout: WindowLayout,
    params: &AttentionParams,
) -> Result<TokenTensor> {
    let [frames, hp, wp, dim] = z.extents();
    if layout.grid() != (hp, wp) {
        let (gh, gw) = layout.grid();
        return dim_err("oracle layout", &[hp, wp], &[gh, gw]);
    }
    if dim != params.dim {
        return dim_err("oracle width", &[dim], &[params.dim]);
    }
    let bias = params.bias;
    if (bias.win_h, bias.win_w) != layout.window() {
        let (wh, ww) = layout.window();
        return dim_err("oracle bias window", &[bias.win_h, bias.win_w], &[wh, ww]);
    }
    if bias.heads == 0 || dim % bias.heads != 0 {
        return Err(contract!(
            "{} heads do not divide width D = {}",
            bias.heads,
            dim
        ));
    }
    let heads = bias.heads;
    let hd = dim / heads;
    let scale = 1.0 / libm::sqrt(hd as f64);
    let table = params.bias_table.data();
    let table_len = bias.table_len();
    let (span_r, span_c) = (2 * bias.win_h as i64 - 1, 2 * bias.win_w as i64 - 1);

    let gathers = GatherSet::new(frames, pattern, &layout);
    let mut out = TokenTensor::zeros(frames, hp, wp, dim);
    for t in 0..frames {
        for w in 0..layout.windows() {
            let set = gathers.get(t, w);
            let n = set.len();
            let x: Vec<Vec<f64>> = set
                .iter()
                .map(|&(s, r, c)| (0..dim).map(|d| z.get(s, r, c, d)).collect())
                .collect();
            let q: Vec<Vec<f64>> = x
                .iter()
                .map(|v| naive_affine(&params.wq, &params.bq, v))
                .collect();
            let k: Vec<Vec<f64>> = x
                .iter()
                .map(|v| naive_affine(&params.wk, &params.bk, v))
                .collect();
            let v: Vec<Vec<f64>> = x
                .iter()
                .map(|v| naive_affine(&params.wv, &params.bv, v))
                .collect();
            let mut concat = vec![vec![0.0; dim]; n];
            for h in 0..heads {
                for i in 0..n {
                    let mut scores = vec![0.0; n];
                    for (j, s) in scores.iter_mut().enumerate() {
                        let mut dot = 0.0;
                        for e in h * hd..(h + 1) * hd {
                            dot += q[i][e] * k[j][e];
                        }
                        let (ti, ri, ci) = set[i];
                        let (tj, rj, cj) = set[j];
                        let dt = tj as i64 - ti as i64;
                        let dr = rj as i64 - ri as i64;
                        let dc = cj as i64 - ci as i64;
                        if dt.abs() >= bias.max_frames as i64 {
                            return Err(contract!("frame displacement {} exceeds bias table", dt));
                        }
                        let slot =
                            ((dt + bias.max_frames as i64 - 1) * span_r + dr + bias.win_h as i64
                                - 1)
                                * span_c
                                + dc
                                + bias.win_w as i64
                                - 1;
                        *s = dot * scale + table[h * table_len + slot as usize];
                    }
                    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for s in scores.iter_mut() {
                        *s = libm::exp(*s - max);
                        total += *s;
                    }
                    for (j, s) in scores.iter().enumerate() {
                        for e in h * hd..(h + 1) * hd {
                            concat[i][e] += s / total * v[j][e];
                        }
                    }
                }
            }
            for (i, &(s, r, c)) in set.iter().enumerate() {
                let o = naive_affine(&params.wo, &params.bo, &concat[i]);
                for (d, val) in o.into_iter().enumerate() {
                    out.set(s, r, c, d, val);
                }
            }
        }
    }
    Ok(out)
}

fn naive_affine(w: &Tensor, b: &Tensor, x: &[f64]) -> Vec<f64> {
    let (rows, cols) = (w.shape()[0], w.shape()[1]);
    (0..rows)
        .map(|o| {
            b.data()[o]
                + (0..cols)
                    .map(|i| w.data()[o * cols + i] * x[i])
                    .sum::<f64>()
        })
        .collect()
}

/// Attention families compared by the complexity model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexityKind {
    /// One attention over all `N * T` tokens.
    Joint,
    /// Spatial attention per frame, then temporal attention per site.
    Divide,
    /// A fraction `alpha` of the joint token pairs.
    SparseLocal { alpha: f64 },
    /// Windowed attention per frame after a patch shift.
    PatchShift,
}

impl ComplexityKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Joint => "joint",
            Self::Divide => "divide",
            Self::SparseLocal { .. } => "sparse_local",
            Self::PatchShift => "patchshift",
        }
    }

    pub fn class(&self) -> &'static str {
        match self {
            Self::Joint => "O(N^2 T^2)",
            Self::Divide => "O(N^2 T + T^2 N)",
            Self::SparseLocal { .. } => "O(a N^2 T^2)",
            Self::PatchShift => "O(N^2 T)",
        }
    }

    /// Parses `joint`, `divide`, `sparse_local` (with the given `alpha`) or `patchshift`.
    pub fn from_name(name: &str, alpha: f64) -> Result<Self> {
        let key: String = name
            .chars()
            .filter(|c| *c != '_' && *c != '-')
            .flat_map(char::to_lowercase)
            .collect();
        match key.as_str() {
            "joint" => Ok(Self::Joint),
            "divide" | "divided" => Ok(Self::Divide),
            "sparselocal" | "sparse" | "local" => Ok(Self::SparseLocal { alpha }),
            "patchshift" => Ok(Self::PatchShift),
            _ => Err(contract!("unknown attention kind '{}'", name)),
        }
    }

    pub const ALL: [ComplexityKind; 4] = [
        Self::Joint,
        Self::Divide,
        Self::SparseLocal { alpha: 1.0 },
        Self::PatchShift,
    ];
}

/// Exact multiply-accumulate and buffer counts of one attention layer over
/// `tokens` spatial tokens and `frames` frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub kind: ComplexityKind,
    pub class: String,
    pub tokens: usize,
    pub frames: usize,
    pub dim: usize,
    pub heads: usize,
    pub window: usize,
    /// `Q K^T` products.
    pub score_macs: u64,
    /// Probability-weighted sums of values.
    pub aggregate_macs: u64,
    /// Q, K, V and output projections; identical for every kind.
    pub projection_macs: u64,
    /// Largest number of attention-score entries alive at once.
    pub buffer_elements: u64,
}

impl ComplexityReport {
    pub fn attention_macs(&self) -> u64 {
        self.score_macs + self.aggregate_macs
    }
}

/// Closed-form counts for `kind`. `window` is the number of tokens per
/// attention window (patch shift only) and must divide `tokens`.
pub fn complexity_estimate(
    kind: ComplexityKind,
    tokens: usize,
    frames: usize,
    dim: usize,
    heads: usize,
    window: usize,
) -> Result<ComplexityReport> {
    if tokens == 0 || frames == 0 || dim == 0 || heads == 0 || window == 0 {
        return Err(contract!("complexity extents must be positive"));
    }
    if !tokens.is_multiple_of(window) {
        return dim_err("complexity window", &[tokens], &[window]);
    }
    let (n, t, d, h, w) = (
        tokens as u64,
        frames as u64,
        dim as u64,
        heads as u64,
        window as u64,
    );
    let joint_pairs = (n * t) * (n * t);
    let (pairs, buffer) = match kind {
        ComplexityKind::Joint => (joint_pairs, h * joint_pairs),
        ComplexityKind::Divide => (
            t * n * n + n * t * t,
            h * core::cmp::max(t * n * n, n * t * t),
        ),
        ComplexityKind::SparseLocal { alpha } => {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(contract!(
                    "sparse fraction alpha = {} outside (0, 1]",
                    alpha
                ));
            }
            let p = libm::round(alpha * joint_pairs as f64) as u64;
            (p, h * p)
        }
        ComplexityKind::PatchShift => {
            let p = t * (n / w) * w * w;
            (p, h * p)
        }
    };
    Ok(ComplexityReport {
        kind,
        class: kind.class().into(),
        tokens,
        frames,
        dim,
        heads,
        window,
        score_macs: pairs * d,
        aggregate_macs: pairs * d,
        projection_macs: 4 * n * t * d * d,
        buffer_elements: buffer,
    })
}

/// Runs one instrumented attention layer and returns its tallied MACs.
///
/// The tokens are laid out as a `1 x tokens` grid per frame with `1 x window`
/// windows, so the counts are directly comparable with
/// [`complexity_estimate`]. Only joint and patch-shift attention are executable.
pub fn measure_macs(
    kind: ComplexityKind,
    tokens: usize,
    frames: usize,
    dim: usize,
    heads: usize,
    window: usize,
) -> Result<MacTally> {
    if tokens == 0 || frames == 0 || dim == 0 || heads == 0 || window == 0 {
        return Err(contract!("complexity extents must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let bias = RelPosBias3D {
        heads,
        max_frames: frames,
        win_h: 1,
        win_w: window,
    };
    let params = AttentionParams::init(dim, bias, &mut rng, 0.02)?;
    let x = uniform(&mut rng, &[frames, 1, tokens, dim], -1.0, 1.0);
    match kind {
        ComplexityKind::Joint => count_macs(|tape| {
            let p = params.bind(tape);
            let x = tape.leaf(x);
            joint_attention_tape(tape, x, &p).map(|_| ())
        }),
        ComplexityKind::PatchShift => {
            let layout = WindowLayout::new(1, tokens, 1, window)?;
            let offsets = (0..tokens).map(|c| [0, -1, 1][c % 3]).collect();
            let grid = OffsetGrid::new(1, tokens, offsets)?;
            let plan =
                AttentionPlan::patch_shift([frames, 1, tokens, dim], layout, &bias, &grid, true)?;
            count_macs(|tape| {
                let p = params.bind(tape);
                let x = tape.leaf(x);
                plan.forward(tape, x, &p).map(|_| ())
            })
        }
        other => Err(contract!(
            "{} attention has no executable reference",
            other.name()
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::{patch_shift_attention, windowed_attention};
    use crate::patterns::pattern_by_name;

    fn random_case(
        seed: u64,
        frames: usize,
        grid: usize,
        win: usize,
        dim: usize,
        heads: usize,
    ) -> (TokenTensor, WindowLayout, AttentionParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bias = RelPosBias3D {
            heads,
            max_frames: frames,
            win_h: win,
            win_w: win,
        };
        let mut params = AttentionParams::init(dim, bias, &mut rng, 0.5).unwrap();
        params.bias_table = uniform(&mut rng, &bias.table_shape(), -1.0, 1.0);
        params.bq = uniform(&mut rng, &[dim], -0.5, 0.5);
        let z = TokenTensor::new(uniform(&mut rng, &[frames, grid, grid, dim], -1.0, 1.0)).unwrap();
        (z, WindowLayout::new(grid, grid, win, win).unwrap(), params)
    }

    #[test]
    fn oracle_matches_fast_path_bayer() {
        let (z, layout, params) = random_case(1, 4, 4, 2, 8, 2);
        let p = pattern_by_name("bayerA").unwrap();
        let fast = patch_shift_attention(&z, &p, layout, &params).unwrap();
        let slow = oracle_attention(&z, &p, layout, &params).unwrap();
        assert!(fast.tensor().max_abs_diff(slow.tensor()) < 1e-9);
    }

    #[test]
    fn oracle_with_no_pattern_is_windowed_attention() {
        let (z, layout, params) = random_case(2, 3, 6, 3, 4, 1);
        let p = pattern_by_name("none").unwrap();
        let plain = windowed_attention(&z, layout, &params).unwrap();
        let slow = oracle_attention(&z, &p, layout, &params).unwrap();
        assert!(plain.tensor().max_abs_diff(slow.tensor()) < 1e-9);
    }

    #[test]
    fn full_window_sees_each_frame_once() {
        let p = ShiftPattern::new("sweep", vec![vec![-1, 0, 1]]).unwrap();
        let layout = WindowLayout::new(1, 3, 1, 3).unwrap();
        let g = GatherSet::new(3, &p, &layout);
        for t in 0..3 {
            let mut frames: Vec<usize> = g.get(t, 0).iter().map(|c| c.0).collect();
            frames.sort();
            assert_eq!(frames, [0, 1, 2]);
        }
    }

    #[test]
    fn estimate_ratios() {
        let j = complexity_estimate(ComplexityKind::Joint, 16, 4, 8, 1, 16).unwrap();
        let p = complexity_estimate(ComplexityKind::PatchShift, 16, 4, 8, 1, 16).unwrap();
        assert_eq!(j.attention_macs(), 4 * p.attention_macs());
        assert_eq!((j.buffer_elements, p.buffer_elements), (4096, 1024));
        let p4 = complexity_estimate(ComplexityKind::PatchShift, 16, 4, 8, 1, 4).unwrap();
        assert_eq!(p4.buffer_elements, 4 * 16 * 4);
        let d = complexity_estimate(ComplexityKind::Divide, 16, 4, 8, 1, 16).unwrap();
        assert_eq!(d.score_macs, (4 * 256 + 16 * 16) * 8);
        assert!(ComplexityKind::from_name("dense", 1.0).is_err());
    }

    #[test]
    fn measured_equals_estimate() {
        for kind in [ComplexityKind::Joint, ComplexityKind::PatchShift] {
            let m = measure_macs(kind, 6, 3, 4, 2, 3).unwrap();
            let e = complexity_estimate(kind, 6, 3, 4, 2, 3).unwrap();
            assert_eq!(m.attention, e.attention_macs());
            assert_eq!(m.projection, e.projection_macs);
        }
        assert!(measure_macs(ComplexityKind::Divide, 4, 2, 4, 1, 2).is_err());
    }
}
