//! Seeded synthetic videos whose labels depend on temporal order.
//!
//! `direction4` shows a square dot moving up, down, left or right.
//! `reversal2` shows a dot moving right or down (class 0) or the exact
//! frame-reversal of such a clip (class 1). Each rendered step, noise
//! included, is held for `tubelet_frames` frames, so reversing a clip only
//! permutes whole tubelets and the two classes have identical frame multisets.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::tensor::Tensor;
use crate::train::Labeled;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Labels 0..4: up, down, left, right.
    Direction4,
    /// Label 0: forward clip; 1: the same clip reversed.
    Reversal2,
}

impl Task {
    pub fn classes(&self) -> usize {
        match self {
            Self::Direction4 => 4,
            Self::Reversal2 => 2,
        }
    }
}

fn default_dot() -> usize {
    3
}

/// What moves across the frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// A `dot x dot` square.
    #[default]
    Dot,
    /// A `dot`-thick bar spanning the frame across the direction of motion.
    Bar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task: Task,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Tubelet depth `s` of the model that will consume the data.
    pub tubelet_frames: usize,
    /// Tubelet side `k` of the model that will consume the data.
    pub patch: usize,
    /// Side of the square dot in pixels.
    #[serde(default = "default_dot")]
    pub dot: usize,
    #[serde(default)]
    pub shape: Shape,
    /// Standard deviation of the additive Gaussian pixel noise.
    pub noise: f64,
    pub train: usize,
    pub val: usize,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            task: Task::Reversal2,
            frames: 8,
            height: 16,
            width: 16,
            tubelet_frames: 2,
            patch: 4,
            dot: 3,
            shape: Shape::Dot,
            noise: 0.02,
            train: 256,
            val: 128,
        }
    }
}

impl TaskSpec {
    /// Frames each rendered step is repeated for.
    pub fn hold(&self) -> usize {
        match self.task {
            Task::Direction4 => 1,
            Task::Reversal2 => self.tubelet_frames,
        }
    }

    pub fn steps(&self) -> usize {
        self.frames / self.hold()
    }

    pub fn validate(&self) -> Result<()> {
        let (s, k) = (self.tubelet_frames, self.patch);
        if s == 0 || k == 0 || self.frames == 0 || self.height == 0 || self.width == 0 {
            return Err(contract!("video and tubelet extents must be positive"));
        }
        if !self.frames.is_multiple_of(s)
            || !self.height.is_multiple_of(k)
            || !self.width.is_multiple_of(k)
        {
            return Err(contract!(
                "video {}x{}x{} is not divisible into {}x{}x{} tubelets",
                self.frames,
                self.height,
                self.width,
                s,
                k,
                k
            ));
        }
        if self.steps() < 2 {
            return Err(contract!(
                "need at least two motion steps, got {}",
                self.steps()
            ));
        }
        let span = self.height.min(self.width);
        if self.dot == 0 || self.dot + self.steps() - 1 > span {
            return Err(contract!(
                "a {}px dot cannot move {} steps inside {}px",
                self.dot,
                self.steps(),
                span
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(contract!("noise must be finite and non-negative"));
        }
        let c = self.task.classes();
        if !self.train.is_multiple_of(c) || !self.val.is_multiple_of(c) {
            return Err(contract!(
                "train ({}) and val ({}) counts must be multiples of {} classes",
                self.train,
                self.val,
                c
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSample {
    /// `[F, H, W, 3]` in `[0, 1]`.
    pub video: Tensor,
    pub label: usize,
    pub seed: u64,
}

impl Labeled for SyntheticSample {
    fn video(&self) -> &Tensor {
        &self.video
    }

    fn label(&self) -> usize {
        self.label
    }
}

impl SyntheticSample {
    pub fn generate(spec: &TaskSpec, seed: u64, label: usize) -> Result<Self> {
        Ok(Self {
            video: render(spec, seed, label)?,
            label,
            seed,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: TaskSpec,
    pub seed: u64,
    pub train: Vec<SyntheticSample>,
    pub val: Vec<SyntheticSample>,
}

/// Direction of travel in pixel units per step: `(drow, dcol)`.
fn unit(task: Task, label: usize, rng: &mut ChaCha8Rng) -> (i64, i64) {
    match task {
        Task::Direction4 => [(-1, 0), (1, 0), (0, -1), (0, 1)][label],
        Task::Reversal2 => {
            if rng.random_bool(0.5) {
                (0, 1)
            } else {
                (1, 0)
            }
        }
    }
}

/// Renders the clip of `seed` with class `label`.
pub fn render(spec: &TaskSpec, seed: u64, label: usize) -> Result<Tensor> {
    spec.validate()?;
    if label >= spec.task.classes() {
        return Err(contract!(
            "label {} out of range for {} classes",
            label,
            spec.task.classes()
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = spec.steps();
    let (h, w, dot) = (spec.height, spec.width, spec.dot);
    let (dr, dc) = unit(spec.task, label, &mut rng);
    let moving_extent = if dr != 0 { h } else { w };
    let max_speed = ((moving_extent - dot) / (steps - 1)).max(1);
    let speed = rng.random_range(max_speed.div_ceil(2)..=max_speed) as i64;
    let travel = speed * (steps as i64 - 1);
    // Choose the start so the whole path stays inside the frame.
    let start = |extent: usize, d: i64, rng: &mut ChaCha8Rng| -> i64 {
        let free = extent as i64 - dot as i64 - if d != 0 { travel } else { 0 };
        let base = rng.random_range(0..=free);
        if d < 0 {
            base + travel
        } else {
            base
        }
    };
    let r0 = start(h, dr, &mut rng);
    let c0 = start(w, dc, &mut rng);
    let color: [f64; 3] = core::array::from_fn(|_| rng.random_range(0.6..1.0));
    let noise = if spec.noise > 0.0 {
        Some(Normal::new(0.0, spec.noise).expect("finite noise"))
    } else {
        None
    };

    let frame_len = h * w * 3;
    let mut rendered = Vec::with_capacity(steps);
    for step in 0..steps as i64 {
        let (r, c) = (r0 + dr * speed * step, c0 + dc * speed * step);
        let mut frame = vec![0.0; frame_len];
        let (rows, cols) = match (spec.shape, dr != 0) {
            (Shape::Dot, _) => (r..r + dot as i64, c..c + dot as i64),
            (Shape::Bar, true) => (r..r + dot as i64, 0..w as i64),
            (Shape::Bar, false) => (0..h as i64, c..c + dot as i64),
        };
        for y in rows {
            for x in cols.clone() {
                let base = (y as usize * w + x as usize) * 3;
                frame[base..base + 3].copy_from_slice(&color);
            }
        }
        if let Some(n) = &noise {
            for v in frame.iter_mut() {
                *v = (*v + n.sample(&mut rng)).clamp(0.0, 1.0);
            }
        }
        rendered.push(frame);
    }
    if spec.task == Task::Reversal2 && label == 1 {
        rendered.reverse();
    }
    let mut data = Vec::with_capacity(spec.frames * frame_len);
    for frame in &rendered {
        for _ in 0..spec.hold() {
            data.extend_from_slice(frame);
        }
    }
    Tensor::new([spec.frames, h, w, 3], data)
}

fn split(spec: &TaskSpec, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<SyntheticSample>> {
    let mut out = Vec::with_capacity(count);
    match spec.task {
        Task::Reversal2 => {
            for _ in 0..count / 2 {
                let seed = rng.next_u64();
                out.push(SyntheticSample::generate(spec, seed, 0)?);
                out.push(SyntheticSample::generate(spec, seed, 1)?);
            }
        }
        Task::Direction4 => {
            for i in 0..count {
                out.push(SyntheticSample::generate(spec, rng.next_u64(), i % 4)?);
            }
        }
    }
    Ok(out)
}

/// Balanced train and validation splits. Reversal pairs share a seed.
pub fn gen_dataset(spec: &TaskSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = split(spec, spec.train, &mut rng)?;
    let val = split(spec, spec.val, &mut rng)?;
    Ok(Dataset {
        spec: spec.clone(),
        seed,
        train,
        val,
    })
}
