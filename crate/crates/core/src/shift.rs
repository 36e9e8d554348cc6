//! Temporal shift operators over `[T, Hp, Wp, D]` token grids.
//!
//! All shifts wrap cyclically in time, so each one is a permutation of the
//! token tensor and has an exact inverse. Patch shift moves whole channel
//! vectors with a space-variant offset; channel shift moves a fixed slice of
//! channels with a space-invariant offset. Both are special cases of
//! [`generic_shift`].

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract, dim_err, Result};
use crate::patterns::OffsetGrid;
use crate::tensor::Tensor;

/// Embedded video tokens laid out as `[T, Hp, Wp, D]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenTensor(Tensor);

impl TokenTensor {
    pub fn new(tensor: Tensor) -> Result<Self> {
        if tensor.rank() != 4 {
            return Err(contract!(
                "token tensor must be [T, Hp, Wp, D], got {:?}",
                tensor.shape()
            ));
        }
        Ok(Self(tensor))
    }

    pub fn zeros(frames: usize, hp: usize, wp: usize, dim: usize) -> Self {
        Self(Tensor::zeros([frames, hp, wp, dim]))
    }

    pub fn frames(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn grid_h(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn grid_w(&self) -> usize {
        self.0.shape()[2]
    }

    pub fn channels(&self) -> usize {
        self.0.shape()[3]
    }

    pub fn get(&self, t: usize, r: usize, c: usize, d: usize) -> f64 {
        self.0.get(&[t, r, c, d])
    }

    pub fn set(&mut self, t: usize, r: usize, c: usize, d: usize, v: f64) {
        self.0.set(&[t, r, c, d], v)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn extents(&self) -> [usize; 4] {
        [self.frames(), self.grid_h(), self.grid_w(), self.channels()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShiftDirection {
    Forward,
    Inverse,
}

impl ShiftDirection {
    fn sign(self) -> i64 {
        match self {
            ShiftDirection::Forward => 1,
            ShiftDirection::Inverse => -1,
        }
    }
}

/// `(t + offset) mod frames`.
pub fn wrap_frame(t: usize, offset: i64, frames: usize) -> usize {
    (t as i64 + offset).rem_euclid(frames as i64) as usize
}

/// Flat gather index realising a patch shift on `[T, Hp, Wp, D]`:
/// forward reads `z[(t + g(r, c)) mod T, r, c, :]`, inverse uses `-g`.
pub fn patch_shift_index(
    extents: [usize; 4],
    grid: &OffsetGrid,
    dir: ShiftDirection,
) -> Result<Vec<usize>> {
    let [frames, hp, wp, dim] = extents;
    if grid.height() != hp || grid.width() != wp {
        return dim_err("patch_shift", &[hp, wp], &[grid.height(), grid.width()]);
    }
    let mut index = Vec::with_capacity(frames * hp * wp * dim);
    for t in 0..frames {
        for r in 0..hp {
            for c in 0..wp {
                let src = wrap_frame(t, dir.sign() * grid.get(r, c) as i64, frames);
                let base = ((src * hp + r) * wp + c) * dim;
                index.extend(base..base + dim);
            }
        }
    }
    Ok(index)
}

fn apply_index(z: &TokenTensor, index: &[usize]) -> TokenTensor {
    let src = z.tensor().data();
    let data = index.iter().map(|&i| src[i]).collect();
    TokenTensor(Tensor::new(z.tensor().shape().to_vec(), data).expect("same extents"))
}

/// Space-variant temporal patch shift.
pub fn patch_shift(z: &TokenTensor, grid: &OffsetGrid, dir: ShiftDirection) -> Result<TokenTensor> {
    let index = patch_shift_index(z.extents(), grid, dir)?;
    Ok(apply_index(z, &index))
}

/// Number of channels moved in each direction for `ratio` of `dim` channels.
pub fn channel_fold(dim: usize, ratio: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(contract!("channel shift ratio {} outside [0, 1]", ratio));
    }
    let half = ratio * dim as f64 / 2.0;
    let fold = libm::round(half);
    if libm::fabs(half - fold) > 1e-9 {
        return Err(contract!(
            "channel shift ratio {} does not split D = {} into whole channels (ratio*D/2 = {})",
            ratio,
            dim,
            half
        ));
    }
    Ok(fold as usize)
}

/// Per-channel source offset of a channel shift: the first `fold` channels
/// read frame `t - 1`, the next `fold` read `t + 1`, the rest stay.
fn channel_offsets(dim: usize, fold: usize, dir: ShiftDirection) -> Vec<i64> {
    (0..dim)
        .map(|d| {
            let o = if d < fold {
                -1
            } else if d < 2 * fold {
                1
            } else {
                0
            };
            o * dir.sign()
        })
        .collect()
}

pub fn channel_shift_index(
    extents: [usize; 4],
    ratio: f64,
    dir: ShiftDirection,
) -> Result<Vec<usize>> {
    let [frames, hp, wp, dim] = extents;
    let fold = channel_fold(dim, ratio)?;
    let offsets = channel_offsets(dim, fold, dir);
    let mut index = Vec::with_capacity(frames * hp * wp * dim);
    for t in 0..frames {
        for site in 0..hp * wp {
            for (d, &o) in offsets.iter().enumerate() {
                let src = wrap_frame(t, o, frames);
                index.push((src * hp * wp + site) * dim + d);
            }
        }
    }
    Ok(index)
}

/// Space-invariant temporal channel shift (cyclic in time).
pub fn channel_shift(z: &TokenTensor, ratio: f64, dir: ShiftDirection) -> Result<TokenTensor> {
    let index = channel_shift_index(z.extents(), ratio, dir)?;
    Ok(apply_index(z, &index))
}

/// Full selection for the generic shift: for every patch `p = r * Wp + c` and
/// channel `d`, whether the element is replaced and which frame offset it is
/// read from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShiftSelection {
    patches: usize,
    channels: usize,
    mask: Vec<bool>,
    source: Vec<i32>,
}

impl ShiftSelection {
    pub fn new(patches: usize, channels: usize, mask: Vec<bool>, source: Vec<i32>) -> Result<Self> {
        let n = patches * channels;
        if mask.len() != n || source.len() != n {
            return dim_err(
                "shift selection",
                &[patches, channels],
                &[mask.len(), source.len()],
            );
        }
        Ok(Self {
            patches,
            channels,
            mask,
            source,
        })
    }

    /// Whole-patch selection from a tiled grid: `a_p` is all ones where `g(p) != 0`.
    pub fn from_patch_grid(grid: &OffsetGrid, channels: usize) -> Self {
        let patches = grid.height() * grid.width();
        let mut mask = Vec::with_capacity(patches * channels);
        let mut source = Vec::with_capacity(patches * channels);
        for &o in grid.offsets() {
            for _ in 0..channels {
                mask.push(o != 0);
                source.push(o);
            }
        }
        Self {
            patches,
            channels,
            mask,
            source,
        }
    }

    /// The same channel mask at every patch.
    pub fn from_channel_ratio(patches: usize, channels: usize, ratio: f64) -> Result<Self> {
        let fold = channel_fold(channels, ratio)?;
        let per_patch = channel_offsets(channels, fold, ShiftDirection::Forward);
        let mut mask = Vec::with_capacity(patches * channels);
        let mut source = Vec::with_capacity(patches * channels);
        for _ in 0..patches {
            for &o in &per_patch {
                mask.push(o != 0);
                source.push(o as i32);
            }
        }
        Ok(Self {
            patches,
            channels,
            mask,
            source,
        })
    }

    pub fn mask(&self, p: usize, d: usize) -> bool {
        self.mask[p * self.channels + d]
    }

    pub fn source(&self, p: usize, d: usize) -> i32 {
        self.source[p * self.channels + d]
    }

    /// Every patch's mask is all zeros or all ones with one source offset.
    pub fn is_patch_mode(&self) -> bool {
        (0..self.patches).all(|p| {
            let m0 = self.mask(p, 0);
            let s0 = self.source(p, 0);
            (0..self.channels).all(|d| self.mask(p, d) == m0 && (!m0 || self.source(p, d) == s0))
        })
    }

    /// The mask and sources are identical across patches.
    pub fn is_channel_mode(&self) -> bool {
        let c = self.channels;
        (1..self.patches).all(|p| {
            self.mask[p * c..(p + 1) * c] == self.mask[..c]
                && self.source[p * c..(p + 1) * c] == self.source[..c]
        })
    }

    /// Fraction of selected channels in one patch.
    pub fn masked_fraction(&self, p: usize) -> f64 {
        (0..self.channels).filter(|&d| self.mask(p, d)).count() as f64 / self.channels as f64
    }
}

/// `out[t, p, d] = A[p][d] ? z[t + src(p, d), p, d] : z[t, p, d]`, cyclic in `t`.
pub fn generic_shift(z: &TokenTensor, sel: &ShiftSelection) -> Result<TokenTensor> {
    let [frames, hp, wp, dim] = z.extents();
    if sel.patches != hp * wp || sel.channels != dim {
        return dim_err(
            "generic_shift",
            &[hp * wp, dim],
            &[sel.patches, sel.channels],
        );
    }
    let mut out = TokenTensor::zeros(frames, hp, wp, dim);
    for t in 0..frames {
        for r in 0..hp {
            for c in 0..wp {
                let p = r * wp + c;
                for d in 0..dim {
                    let src_t = if sel.mask(p, d) {
                        wrap_frame(t, sel.source(p, d) as i64, frames)
                    } else {
                        t
                    };
                    out.set(t, r, c, d, z.get(src_t, r, c, d));
                }
            }
        }
    }
    Ok(out)
}

/// Source frame of the token that lands at `(t, r, c)` after a forward patch
/// shift: the shifted copy of the frame-coordinate grid.
pub fn shifted_frame_coords(frames: usize, grid: &OffsetGrid) -> Vec<usize> {
    let (hp, wp) = (grid.height(), grid.width());
    let mut out = vec![0; frames * hp * wp];
    for t in 0..frames {
        for r in 0..hp {
            for c in 0..wp {
                out[(t * hp + r) * wp + c] = wrap_frame(t, grid.get(r, c) as i64, frames);
            }
        }
    }
    out
}
