//! Shift patterns: small grids of signed frame offsets tiled over the patch grid.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Offsets must satisfy `|offset| < MAX_OFFSET`.
pub const MAX_OFFSET: i32 = 64;

/// A small 2D grid of temporal offsets (in frames). Offset `o` at a cell means
/// the patch shown there comes from frame `t + o`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PatternRepr", into = "PatternRepr")]
pub struct ShiftPattern {
    name: String,
    height: usize,
    width: usize,
    offsets: Vec<i32>,
}

#[derive(Serialize, Deserialize)]
struct PatternRepr {
    name: String,
    offsets: Vec<Vec<i32>>,
}

impl TryFrom<PatternRepr> for ShiftPattern {
    type Error = crate::Error;
    fn try_from(r: PatternRepr) -> Result<Self> {
        ShiftPattern::new(r.name, r.offsets)
    }
}

impl From<ShiftPattern> for PatternRepr {
    fn from(p: ShiftPattern) -> Self {
        PatternRepr {
            offsets: p.rows(),
            name: p.name,
        }
    }
}

impl ShiftPattern {
    /// Builds a pattern from rows; rows must be non-empty, rectangular and bounded.
    pub fn new(name: impl Into<String>, rows: Vec<Vec<i32>>) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if height == 0 || width == 0 {
            return Err(contract!("shift pattern needs at least one cell"));
        }
        if rows.iter().any(|r| r.len() != width) {
            return Err(contract!(
                "shift pattern rows must all have {} cells",
                width
            ));
        }
        let offsets: Vec<i32> = rows.into_iter().flatten().collect();
        if let Some(bad) = offsets.iter().find(|o| o.abs() >= MAX_OFFSET) {
            return Err(contract!(
                "offset {} exceeds |offset| < {}",
                bad,
                MAX_OFFSET
            ));
        }
        Ok(Self {
            name: name.into(),
            height,
            width,
            offsets,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, r: usize, c: usize) -> i32 {
        self.offsets[r * self.width + c]
    }

    pub fn offsets(&self) -> &[i32] {
        &self.offsets
    }

    pub fn rows(&self) -> Vec<Vec<i32>> {
        self.offsets
            .chunks(self.width)
            .map(<[i32]>::to_vec)
            .collect()
    }

    /// Number of cells holding each offset.
    pub fn offset_counts(&self) -> BTreeMap<i32, usize> {
        let mut m = BTreeMap::new();
        for &o in &self.offsets {
            *m.entry(o).or_insert(0) += 1;
        }
        m
    }

    pub fn is_identity(&self) -> bool {
        self.offsets.iter().all(|&o| o == 0)
    }
}

/// The built-in pattern families, plus arbitrary grids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PatternKind {
    /// 1x1 `[0]`: no shift.
    None,
    /// 3x3, centre cell from the next frame.
    CenterOne,
    /// 2x2, left column from the next frame (uneven columns).
    UnevenHalf,
    /// 2x2 checkerboard of `0` / `+1`.
    Even2,
    /// 2x2 Bayer layout: a quarter from `t-1`, half from `t`, a quarter from `t+1`.
    BayerA,
    /// 4x4 Bayer tiling with two maximally separated zero cells moved to `+2`.
    B4,
    /// 3x3, offsets `-4..=4` row-major.
    C9,
    /// 4x4, offsets `-7..=8` row-major.
    D16,
    Custom(Vec<Vec<i32>>),
}

impl PatternKind {
    pub const BUILTIN: [PatternKind; 8] = [
        PatternKind::None,
        PatternKind::CenterOne,
        PatternKind::UnevenHalf,
        PatternKind::Even2,
        PatternKind::BayerA,
        PatternKind::B4,
        PatternKind::C9,
        PatternKind::D16,
    ];

    /// Canonical name used by the CLI and config files.
    pub fn name(&self) -> &'static str {
        match self {
            PatternKind::None => "none",
            PatternKind::CenterOne => "center_one",
            PatternKind::UnevenHalf => "uneven_half",
            PatternKind::Even2 => "even2",
            PatternKind::BayerA => "bayerA",
            PatternKind::B4 => "B4",
            PatternKind::C9 => "C9",
            PatternKind::D16 => "D16",
            PatternKind::Custom(_) => "custom",
        }
    }

    /// Looks up a built-in by name; accepts a few common aliases.
    pub fn from_name(name: &str) -> Result<Self> {
        let key: String = name
            .chars()
            .filter(|c| *c != '_' && *c != '-')
            .flat_map(char::to_lowercase)
            .collect();
        Ok(match key.as_str() {
            "none" => PatternKind::None,
            "centerone" => PatternKind::CenterOne,
            "unevenhalf" | "uneven" => PatternKind::UnevenHalf,
            "even2" => PatternKind::Even2,
            "bayera" | "bayer" | "a3" | "even3" => PatternKind::BayerA,
            "b4" => PatternKind::B4,
            "c9" => PatternKind::C9,
            "d16" => PatternKind::D16,
            _ => return Err(contract!("unknown shift pattern '{}'", name)),
        })
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn build_pattern(kind: &PatternKind) -> Result<ShiftPattern> {
    let rows: Vec<Vec<i32>> = match kind {
        PatternKind::None => vec![vec![0]],
        PatternKind::CenterOne => vec![vec![0, 0, 0], vec![0, 1, 0], vec![0, 0, 0]],
        PatternKind::UnevenHalf => vec![vec![1, 0], vec![1, 0]],
        PatternKind::Even2 => vec![vec![0, 1], vec![1, 0]],
        PatternKind::BayerA => vec![vec![0, -1], vec![1, 0]],
        PatternKind::B4 => vec![
            vec![2, -1, 0, -1],
            vec![1, 0, 1, 0],
            vec![0, -1, 2, -1],
            vec![1, 0, 1, 0],
        ],
        PatternKind::C9 => (0..3)
            .map(|r| (0..3).map(|c| r * 3 + c - 4).collect())
            .collect(),
        PatternKind::D16 => (0..4)
            .map(|r| (0..4).map(|c| r * 4 + c - 7).collect())
            .collect(),
        PatternKind::Custom(rows) => rows.clone(),
    };
    ShiftPattern::new(kind.name(), rows)
}

/// Convenience: [`PatternKind::from_name`] followed by [`build_pattern`].
pub fn pattern_by_name(name: &str) -> Result<ShiftPattern> {
    build_pattern(&PatternKind::from_name(name)?)
}

/// Per-patch temporal offsets for a full `Hp x Wp` patch grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OffsetGrid {
    height: usize,
    width: usize,
    offsets: Vec<i32>,
}

impl OffsetGrid {
    pub fn new(height: usize, width: usize, offsets: Vec<i32>) -> Result<Self> {
        if height == 0 || width == 0 || offsets.len() != height * width {
            return Err(contract!(
                "offset grid {}x{} needs {} offsets, got {}",
                height,
                width,
                height * width,
                offsets.len()
            ));
        }
        Ok(Self {
            height,
            width,
            offsets,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            offsets: vec![0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, r: usize, c: usize) -> i32 {
        self.offsets[r * self.width + c]
    }

    pub fn offsets(&self) -> &[i32] {
        &self.offsets
    }

    pub fn offset_counts(&self) -> BTreeMap<i32, usize> {
        let mut m = BTreeMap::new();
        for &o in &self.offsets {
            *m.entry(o).or_insert(0) += 1;
        }
        m
    }
}

/// Repeats `p` over an `hp x wp` grid: `offset(r, c) = p[r mod h][c mod w]`.
pub fn tile_offsets(p: &ShiftPattern, hp: usize, wp: usize) -> OffsetGrid {
    assert!(hp >= 1 && wp >= 1, "grid extents must be positive");
    let mut offsets = Vec::with_capacity(hp * wp);
    for r in 0..hp {
        for c in 0..wp {
            offsets.push(p.get(r % p.height, c % p.width));
        }
    }
    OffsetGrid {
        height: hp,
        width: wp,
        offsets,
    }
}

/// Design metrics of a pattern.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternMetrics {
    /// `max(offset) - min(offset) + 1`.
    pub receptive_field: i32,
    /// Fraction of cells with a non-zero offset.
    pub shift_pct: f64,
    /// Coefficient of variation of same-offset nearest-neighbour distances
    /// along rows and columns of the periodic tiling; 0 is perfectly even.
    pub evenness: f64,
}

pub fn pattern_metrics(p: &ShiftPattern) -> PatternMetrics {
    let max = *p.offsets.iter().max().expect("non-empty");
    let min = *p.offsets.iter().min().expect("non-empty");
    let shifted = p.offsets.iter().filter(|&&o| o != 0).count();
    PatternMetrics {
        receptive_field: max - min + 1,
        shift_pct: shifted as f64 / p.offsets.len() as f64,
        evenness: evenness(p),
    }
}

fn evenness(p: &ShiftPattern) -> f64 {
    let (h, w) = (p.height, p.width);
    let mut dists = Vec::with_capacity(2 * h * w);
    for r in 0..h {
        for c in 0..w {
            let v = p.get(r, c);
            // The cell's own periodic copy bounds each search by the period.
            let horizontal = (1..=w)
                .find(|&k| p.get(r, (c + k) % w) == v || p.get(r, (c + w * k - k) % w) == v)
                .unwrap_or(w);
            let vertical = (1..=h)
                .find(|&k| p.get((r + k) % h, c) == v || p.get((r + h * k - k) % h, c) == v)
                .unwrap_or(h);
            dists.push(horizontal as f64);
            dists.push(vertical as f64);
        }
    }
    let n = dists.len() as f64;
    let mean = dists.iter().sum::<f64>() / n;
    let var = dists.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    libm::sqrt(var) / mean
}

impl fmt::Display for ShiftPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.rows() {
            let cells: Vec<String> = row
                .iter()
                .map(|o| {
                    if *o > 0 {
                        alloc::format!("+{o}")
                    } else {
                        o.to_string()
                    }
                })
                .collect();
            writeln!(f, "[{}]", cells.join(", "))?;
        }
        Ok(())
    }
}
