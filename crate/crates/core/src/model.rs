//! Video transformer built from tubelet embedding, pre-norm encoder blocks
//! with optional temporal shifts, token averaging and a linear classifier.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{AttentionParams, AttentionPlan, IndexPair, RelPosBias3D, WindowLayout};
use crate::error::{contract, dim_err, Result};
use crate::init::trunc_normal;
use crate::ops::LN_EPS;
use crate::patterns::{pattern_by_name, tile_offsets, ShiftPattern};
use crate::shift::{channel_fold, channel_shift_index, ShiftDirection, TokenTensor};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Which blocks carry temporal shifts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// No shifts anywhere: frames only meet in the final average.
    #[serde(alias = "avgpool-baseline", alias = "baseline")]
    Avgpool,
    /// Patch shift on every other block.
    PatchOnly,
    /// Channel shift on every other block.
    ChannelOnly,
    /// Every other block shifts, alternating patch and channel shift.
    Combined,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Self::Avgpool,
        Self::PatchOnly,
        Self::ChannelOnly,
        Self::Combined,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Avgpool => "avgpool",
            Self::PatchOnly => "patch-only",
            Self::ChannelOnly => "channel-only",
            Self::Combined => "combined",
        }
    }
}

/// Temporal mixing applied around one block's attention.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftMode {
    None,
    #[serde(alias = "tps")]
    Patch,
    #[serde(alias = "tcs")]
    Channel,
}

/// Learnable positional table layout.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosEmbedding {
    /// One vector per patch position, shared by all frames.
    #[default]
    Spatial,
    /// One vector per (frame, patch position).
    Spatiotemporal,
}

/// A pattern given by built-in name or as an explicit grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PatternRef {
    Name(String),
    Grid(ShiftPattern),
}

impl PatternRef {
    pub fn resolve(&self) -> Result<ShiftPattern> {
        match self {
            Self::Name(n) => pattern_by_name(n),
            Self::Grid(p) => Ok(p.clone()),
        }
    }
}

impl From<&str> for PatternRef {
    fn from(name: &str) -> Self {
        Self::Name(name.into())
    }
}

fn default_true() -> bool {
    true
}

fn default_init_std() -> f64 {
    0.02
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Input video frames `F`.
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Frames per tubelet `s`.
    pub tubelet_frames: usize,
    /// Tubelet side `k` in pixels.
    pub patch: usize,
    pub depth: usize,
    pub dim: usize,
    pub heads: usize,
    /// Attention window `[rows, cols]` in patches.
    pub window: [usize; 2],
    pub pattern: PatternRef,
    pub channel_ratio: f64,
    pub classes: usize,
    pub variant: Variant,
    /// Per-block modes; derived from `variant` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<ShiftMode>>,
    #[serde(default)]
    pub pos_embedding: PosEmbedding,
    /// Index the position bias by source frame after the patch shift.
    #[serde(default = "default_true")]
    pub shift_rpe: bool,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            frames: 8,
            height: 16,
            width: 16,
            tubelet_frames: 2,
            patch: 4,
            depth: 2,
            dim: 16,
            heads: 2,
            window: [2, 2],
            pattern: "bayerA".into(),
            channel_ratio: 0.25,
            classes: 2,
            variant: Variant::PatchOnly,
            schedule: None,
            pos_embedding: PosEmbedding::Spatial,
            shift_rpe: true,
            init_std: 0.02,
        }
    }
}

/// Derived extents of a validated configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Geometry {
    /// Token frames `T = F / s`.
    pub frames: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub dim: usize,
    /// `3 s k^2`.
    pub tubelet_len: usize,
}

impl Geometry {
    pub fn extents(&self) -> [usize; 4] {
        [self.frames, self.grid_h, self.grid_w, self.dim]
    }

    pub fn tokens(&self) -> usize {
        self.frames * self.grid_h * self.grid_w
    }
}

impl ModelConfig {
    /// Alternating schedule: shifts on even blocks, none on odd ones.
    pub fn schedule(&self) -> Vec<ShiftMode> {
        if let Some(s) = &self.schedule {
            return s.clone();
        }
        (0..self.depth)
            .map(|i| match (self.variant, i % 2) {
                (_, 1) | (Variant::Avgpool, _) => ShiftMode::None,
                (Variant::PatchOnly, _) => ShiftMode::Patch,
                (Variant::ChannelOnly, _) => ShiftMode::Channel,
                (Variant::Combined, _) if (i / 2) % 2 == 0 => ShiftMode::Patch,
                (Variant::Combined, _) => ShiftMode::Channel,
            })
            .collect()
    }

    pub fn geometry(&self) -> Result<Geometry> {
        let (s, k) = (self.tubelet_frames, self.patch);
        if s == 0 || k == 0 || self.frames == 0 || self.height == 0 || self.width == 0 {
            return Err(contract!("video and tubelet extents must be positive"));
        }
        if !self.frames.is_multiple_of(s)
            || !self.height.is_multiple_of(k)
            || !self.width.is_multiple_of(k)
        {
            return dim_err(
                "tubelet embedding",
                &[self.frames, self.height, self.width],
                &[s, k, k],
            );
        }
        Ok(Geometry {
            frames: self.frames / s,
            grid_h: self.height / k,
            grid_w: self.width / k,
            dim: self.dim,
            tubelet_len: 3 * s * k * k,
        })
    }

    /// Checks every structural constraint and returns the derived extents.
    pub fn validate(&self) -> Result<Geometry> {
        let g = self.geometry()?;
        if self.depth == 0 || self.dim == 0 || self.classes == 0 {
            return Err(contract!("depth, dim and classes must be positive"));
        }
        if self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(contract!(
                "{} heads do not divide width D = {}",
                self.heads,
                self.dim
            ));
        }
        WindowLayout::new(g.grid_h, g.grid_w, self.window[0], self.window[1])?;
        self.pattern.resolve()?;
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(contract!("init_std must be finite and non-negative"));
        }
        let schedule = self.schedule();
        if schedule.len() != self.depth {
            return Err(contract!(
                "schedule has {} entries for depth {}",
                schedule.len(),
                self.depth
            ));
        }
        if schedule.contains(&ShiftMode::Channel) {
            channel_fold(self.dim, self.channel_ratio)?;
        }
        Ok(g)
    }
}

/// Tubelet projection and positional table.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbedParams<P = Tensor> {
    /// `[D, 3 s k^2]`.
    pub proj: P,
    /// `[Hp * Wp, D]` or `[T * Hp * Wp, D]`.
    pub pos: P,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams<P = Tensor> {
    pub ln1_gamma: P,
    pub ln1_beta: P,
    pub attn: AttentionParams<P>,
    pub ln2_gamma: P,
    pub ln2_beta: P,
    /// `[4D, D]`.
    pub fc1_w: P,
    pub fc1_b: P,
    /// `[D, 4D]`.
    pub fc2_w: P,
    pub fc2_b: P,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<P = Tensor> {
    pub embed: EmbedParams<P>,
    pub blocks: Vec<BlockParams<P>>,
    /// `[classes, D]`.
    pub head_w: P,
    pub head_b: P,
}

impl<P> ModelParams<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> ModelParams<Q> {
        ModelParams {
            embed: self.embed.map(f),
            blocks: self.blocks.iter().map(|b| b.map(f)).collect(),
            head_w: f(&self.head_w),
            head_b: f(&self.head_b),
        }
    }

    /// Visits every parameter with a stable dotted name, in a fixed order.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(String, &'a P)) {
        f("embed.proj".into(), &self.embed.proj);
        f("embed.pos".into(), &self.embed.pos);
        for (i, b) in self.blocks.iter().enumerate() {
            let pre = format!("blocks.{i}");
            f(format!("{pre}.ln1_gamma"), &b.ln1_gamma);
            f(format!("{pre}.ln1_beta"), &b.ln1_beta);
            b.attn.visit(&format!("{pre}.attn"), f);
            f(format!("{pre}.ln2_gamma"), &b.ln2_gamma);
            f(format!("{pre}.ln2_beta"), &b.ln2_beta);
            f(format!("{pre}.fc1_w"), &b.fc1_w);
            f(format!("{pre}.fc1_b"), &b.fc1_b);
            f(format!("{pre}.fc2_w"), &b.fc2_w);
            f(format!("{pre}.fc2_b"), &b.fc2_b);
        }
        f("head.w".into(), &self.head_w);
        f("head.b".into(), &self.head_b);
    }

    /// Same order as [`visit`](Self::visit).
    pub fn visit_mut(&mut self, f: &mut impl FnMut(&mut P)) {
        f(&mut self.embed.proj);
        f(&mut self.embed.pos);
        for b in &mut self.blocks {
            f(&mut b.ln1_gamma);
            f(&mut b.ln1_beta);
            b.attn.visit_mut(f);
            f(&mut b.ln2_gamma);
            f(&mut b.ln2_beta);
            f(&mut b.fc1_w);
            f(&mut b.fc1_b);
            f(&mut b.fc2_w);
            f(&mut b.fc2_b);
        }
        f(&mut self.head_w);
        f(&mut self.head_b);
    }

    /// Applies `f` to matching parameters of `self` and `other`.
    pub fn zip_mut<Q>(&mut self, other: &ModelParams<Q>, f: &mut impl FnMut(&mut P, &Q)) {
        let mut rhs = Vec::new();
        other.visit(&mut |_, q| rhs.push(q));
        let mut it = rhs.into_iter();
        self.visit_mut(&mut |p| f(p, it.next().expect("matching structure")));
    }
}

impl ModelParams<Tensor> {
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.len());
        n
    }

    /// Shapes every parameter must have under `config`.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        let g = config.validate()?;
        let d = config.dim;
        let pos_rows = match config.pos_embedding {
            PosEmbedding::Spatial => g.grid_h * g.grid_w,
            PosEmbedding::Spatiotemporal => g.tokens(),
        };
        let bias = bias_geometry(config, &g);
        let mut blocks = Vec::with_capacity(config.depth);
        for _ in 0..config.depth {
            blocks.push(BlockParams {
                ln1_gamma: Tensor::full([d], 1.0),
                ln1_beta: Tensor::zeros([d]),
                attn: AttentionParams::zeros(d, bias)?,
                ln2_gamma: Tensor::full([d], 1.0),
                ln2_beta: Tensor::zeros([d]),
                fc1_w: Tensor::zeros([4 * d, d]),
                fc1_b: Tensor::zeros([4 * d]),
                fc2_w: Tensor::zeros([d, 4 * d]),
                fc2_b: Tensor::zeros([d]),
            });
        }
        Ok(Self {
            embed: EmbedParams {
                proj: Tensor::zeros([d, g.tubelet_len]),
                pos: Tensor::zeros([pos_rows, d]),
            },
            blocks,
            head_w: Tensor::zeros([config.classes, d]),
            head_b: Tensor::zeros([config.classes]),
        })
    }

    /// Truncated-normal weights and positional table; unit LN gains; zero biases and bias tables.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = config.init_std;
        let mut draw = |t: &mut Tensor| *t = trunc_normal(&mut rng, t.shape(), std);
        draw(&mut p.embed.proj);
        draw(&mut p.embed.pos);
        for b in &mut p.blocks {
            draw(&mut b.attn.wq);
            draw(&mut b.attn.wk);
            draw(&mut b.attn.wv);
            draw(&mut b.attn.wo);
            draw(&mut b.fc1_w);
            draw(&mut b.fc2_w);
        }
        draw(&mut p.head_w);
        Ok(p)
    }

    pub fn bind(&self, tape: &mut Tape) -> ModelParams<Var> {
        self.map(&mut |t| tape.leaf(t.clone()))
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, t| ok &= t.is_finite());
        ok
    }
}

fn bias_geometry(config: &ModelConfig, g: &Geometry) -> RelPosBias3D {
    RelPosBias3D {
        heads: config.heads,
        max_frames: g.frames,
        win_h: config.window[0],
        win_w: config.window[1],
    }
}

/// Index maps shared by every forward pass of one configuration.
#[derive(Debug)]
struct Plan {
    geometry: Geometry,
    schedule: Vec<ShiftMode>,
    tubelets: Arc<[usize]>,
    pos: Option<Arc<[usize]>>,
    spatial: AttentionPlan,
    shifted: AttentionPlan,
    channel: Option<IndexPair>,
}

impl Plan {
    fn new(config: &ModelConfig, pattern: &ShiftPattern) -> Result<Self> {
        let g = config.validate()?;
        let extents = g.extents();
        let layout = WindowLayout::new(g.grid_h, g.grid_w, config.window[0], config.window[1])?;
        let bias = bias_geometry(config, &g);
        let grid = tile_offsets(pattern, g.grid_h, g.grid_w);
        let schedule = config.schedule();
        let channel = match channel_indices(extents, config.channel_ratio) {
            Ok(c) => Some(c),
            Err(e) if schedule.contains(&ShiftMode::Channel) => return Err(e),
            Err(_) => None,
        };
        let sites = g.grid_h * g.grid_w;
        let pos = match config.pos_embedding {
            PosEmbedding::Spatial => {
                let d = config.dim;
                let idx: Vec<usize> = (0..g.frames).flat_map(|_| 0..sites * d).collect();
                Some(idx.into())
            }
            PosEmbedding::Spatiotemporal => None,
        };
        Ok(Self {
            geometry: g,
            schedule,
            tubelets: tubelet_index(config, &g).into(),
            pos,
            spatial: AttentionPlan::spatial(extents, layout, &bias)?,
            shifted: AttentionPlan::patch_shift(extents, layout, &bias, &grid, config.shift_rpe)?,
            channel,
        })
    }
}

fn channel_indices(extents: [usize; 4], ratio: f64) -> Result<IndexPair> {
    Ok((
        channel_shift_index(extents, ratio, ShiftDirection::Forward)?.into(),
        channel_shift_index(extents, ratio, ShiftDirection::Inverse)?.into(),
    ))
}

/// Gather index flattening `[F, H, W, 3]` into `[T * Hp * Wp, 3 s k^2]` with
/// features ordered `(frame, row, col, channel)` inside the tubelet.
fn tubelet_index(config: &ModelConfig, g: &Geometry) -> Vec<usize> {
    let (s, k, h, w) = (
        config.tubelet_frames,
        config.patch,
        config.height,
        config.width,
    );
    let mut idx = Vec::with_capacity(g.tokens() * g.tubelet_len);
    for t in 0..g.frames {
        for pr in 0..g.grid_h {
            for pc in 0..g.grid_w {
                for dt in 0..s {
                    for dy in 0..k {
                        for dx in 0..k {
                            let base = (((t * s + dt) * h + pr * k + dy) * w + pc * k + dx) * 3;
                            idx.extend(base..base + 3);
                        }
                    }
                }
            }
        }
    }
    idx
}

/// A configured model with its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    pattern: ShiftPattern,
    params: ModelParams,
    plan: Arc<Plan>,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = ModelParams::init(&config, seed)?;
        Self::from_params(config, params)
    }

    /// Wraps existing parameters; every shape must match `config`.
    pub fn from_params(config: ModelConfig, params: ModelParams) -> Result<Self> {
        let pattern = config.pattern.resolve()?;
        let plan = Plan::new(&config, &pattern)?;
        let expected = ModelParams::zeros(&config)?;
        let mut want = Vec::new();
        expected.visit(&mut |name, t| want.push((name, t.shape().to_vec())));
        let mut got = Vec::new();
        params.visit(&mut |_, t| got.push(t.shape().to_vec()));
        if want.len() != got.len() {
            return Err(contract!(
                "expected {} parameter tensors, got {}",
                want.len(),
                got.len()
            ));
        }
        for ((name, w), g) in want.iter().zip(&got) {
            if w != g {
                return Err(contract!(
                    "parameter {} has shape {:?}, expected {:?}",
                    name,
                    g,
                    w
                ));
            }
        }
        Ok(Self {
            config,
            pattern,
            params,
            plan: Arc::new(plan),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn pattern(&self) -> &ShiftPattern {
        &self.pattern
    }

    pub fn geometry(&self) -> Geometry {
        self.plan.geometry
    }

    pub fn schedule(&self) -> &[ShiftMode] {
        &self.plan.schedule
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    fn check_video(&self, shape: &[usize]) -> Result<()> {
        let c = &self.config;
        let want = [c.frames, c.height, c.width, 3];
        if shape != want {
            return dim_err("video", shape, &want);
        }
        Ok(())
    }

    /// `video: [F, H, W, 3] -> [T, Hp, Wp, D]` tokens.
    pub fn embed_tape(&self, tape: &mut Tape, p: &EmbedParams<Var>, video: Var) -> Result<Var> {
        self.check_video(tape.value(video).shape())?;
        let g = self.plan.geometry;
        let flat = tape.gather(
            video,
            self.plan.tubelets.clone(),
            &[g.tokens(), g.tubelet_len],
        )?;
        let zero = tape.leaf(Tensor::zeros([g.dim]));
        let tokens = tape.affine(flat, p.proj, zero)?;
        let pos = match &self.plan.pos {
            Some(idx) => tape.gather(p.pos, idx.clone(), &[g.tokens(), g.dim])?,
            None => p.pos,
        };
        let z = tape.add(tokens, pos)?;
        tape.reshape(z, &g.extents())
    }

    /// One pre-norm block: attention (wrapped in `mode`'s shift) and FFN, both residual.
    pub fn block_tape(
        &self,
        tape: &mut Tape,
        p: &BlockParams<Var>,
        z: Var,
        mode: ShiftMode,
    ) -> Result<Var> {
        let h = tape.layer_norm(z, p.ln1_gamma, p.ln1_beta, LN_EPS)?;
        let a = match mode {
            ShiftMode::None => self.plan.spatial.forward(tape, h, &p.attn)?,
            ShiftMode::Patch => self.plan.shifted.forward(tape, h, &p.attn)?,
            ShiftMode::Channel => {
                let e = self.plan.geometry.extents();
                let (fwd, inv) = match &self.plan.channel {
                    Some(c) => c.clone(),
                    None => channel_indices(e, self.config.channel_ratio)?,
                };
                let h = tape.gather(h, fwd, &e)?;
                let a = self.plan.spatial.forward(tape, h, &p.attn)?;
                tape.gather(a, inv, &e)?
            }
        };
        let z = tape.add(z, a)?;
        let h = tape.layer_norm(z, p.ln2_gamma, p.ln2_beta, LN_EPS)?;
        let h = tape.affine(h, p.fc1_w, p.fc1_b)?;
        let h = tape.gelu(h)?;
        let h = tape.affine(h, p.fc2_w, p.fc2_b)?;
        tape.add(z, h)
    }

    /// Token average and linear head: `[T, Hp, Wp, D] -> [1, classes]`.
    pub fn head_tape(&self, tape: &mut Tape, p: &ModelParams<Var>, z: Var) -> Result<Var> {
        let pooled = tape.mean_rows(z)?;
        let pooled = tape.reshape(pooled, &[1, self.config.dim])?;
        tape.affine(pooled, p.head_w, p.head_b)
    }

    /// Full forward pass: `[F, H, W, 3] -> [1, classes]` logits.
    pub fn forward_tape(&self, tape: &mut Tape, p: &ModelParams<Var>, video: Var) -> Result<Var> {
        let mut z = self.embed_tape(tape, &p.embed, video)?;
        for (bp, &mode) in p.blocks.iter().zip(&self.plan.schedule) {
            z = self.block_tape(tape, bp, z, mode)?;
        }
        self.head_tape(tape, p, z)
    }

    pub fn tubelet_embed(&self, video: &Tensor) -> Result<TokenTensor> {
        let mut tape = Tape::new();
        let p = self.params.embed.map(&mut |t| tape.leaf(t.clone()));
        let v = tape.leaf(video.clone());
        let z = self.embed_tape(&mut tape, &p, v)?;
        TokenTensor::new(tape.value(z).clone())
    }

    /// Runs block `index` on `z` with an explicit shift mode.
    pub fn encoder_block(
        &self,
        z: &TokenTensor,
        index: usize,
        mode: ShiftMode,
    ) -> Result<TokenTensor> {
        let block = self.params.blocks.get(index).ok_or_else(|| {
            contract!(
                "block {} out of range for depth {}",
                index,
                self.config.depth
            )
        })?;
        if z.extents() != self.plan.geometry.extents() {
            return dim_err("encoder block", &z.extents(), &self.plan.geometry.extents());
        }
        let mut tape = Tape::new();
        let p = block.map(&mut |t| tape.leaf(t.clone()));
        let x = tape.leaf(z.tensor().clone());
        let out = self.block_tape(&mut tape, &p, x, mode)?;
        TokenTensor::new(tape.value(out).clone())
    }

    /// Class logits `[classes]` for one video.
    pub fn classify(&self, video: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let v = tape.leaf(video.clone());
        let logits = self.forward_tape(&mut tape, &p, v)?;
        tape.value(logits).clone().reshape([self.config.classes])
    }
}

impl<P> EmbedParams<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> EmbedParams<Q> {
        EmbedParams {
            proj: f(&self.proj),
            pos: f(&self.pos),
        }
    }
}

impl<P> BlockParams<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> BlockParams<Q> {
        BlockParams {
            ln1_gamma: f(&self.ln1_gamma),
            ln1_beta: f(&self.ln1_beta),
            attn: self.attn.map(f),
            ln2_gamma: f(&self.ln2_gamma),
            ln2_beta: f(&self.ln2_beta),
            fc1_w: f(&self.fc1_w),
            fc1_b: f(&self.fc1_b),
            fc2_w: f(&self.fc2_w),
            fc2_b: f(&self.fc2_b),
        }
    }
}

/// Parameter names in checkpoint order.
pub fn param_names(config: &ModelConfig) -> Result<Vec<String>> {
    let p = ModelParams::zeros(config)?;
    let mut names = vec![];
    p.visit(&mut |n, _| names.push(n));
    Ok(names)
}
