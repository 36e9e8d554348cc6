//! Plain-text pattern files, PGM renders and content hashes.
//!
//! A pattern file holds `height width` on the first line followed by
//! `height` rows of `width` signed offsets. Blank lines and `#` comments are
//! ignored.

use std::fmt::Write as _;
use std::path::Path;

use patchshift_core::patterns::{pattern_by_name, OffsetGrid, ShiftPattern};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub fn parse_pattern(name: &str, text: &str) -> Result<ShiftPattern> {
    let mut lines = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty());
    let header = lines
        .next()
        .ok_or_else(|| CliError::Config(format!("{name}: empty pattern file")))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| {
            CliError::Config(format!(
                "{name}: header must be 'height width', got '{header}'"
            ))
        })?;
    let [h, w] = dims[..] else {
        return Err(CliError::Config(format!(
            "{name}: header must be 'height width', got '{header}'"
        )));
    };
    let mut rows = Vec::with_capacity(h);
    for (i, line) in lines.enumerate() {
        let row: Vec<i32> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.trim_start_matches('+').parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| {
                CliError::Config(format!("{name}: row {} is not a list of integers", i + 1))
            })?;
        if row.len() != w {
            return Err(CliError::Config(format!(
                "{name}: row {} has {} entries, expected {w}",
                i + 1,
                row.len()
            )));
        }
        rows.push(row);
    }
    if rows.len() != h {
        return Err(CliError::Config(format!(
            "{name}: expected {h} rows, found {}",
            rows.len()
        )));
    }
    Ok(ShiftPattern::new(name, rows)?)
}

/// Canonical text form; [`parse_pattern`] reads it back.
pub fn format_pattern(p: &ShiftPattern) -> String {
    let mut s = format!("{} {}\n", p.height(), p.width());
    for row in p.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    s
}

/// SHA-256 of the canonical text in git blob framing.
pub fn content_hash(p: &ShiftPattern) -> String {
    let text = format_pattern(p);
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", text.len()).as_bytes());
    h.update(text.as_bytes());
    let mut out = String::with_capacity(64);
    for b in h.finalize().iter() {
        write!(out, "{b:02x}").expect("string write");
    }
    out
}

/// Loads a built-in pattern by name, or a pattern file when `spec` names an existing path.
pub fn load_pattern(spec: &str) -> Result<ShiftPattern> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("custom");
        return parse_pattern(name, &text);
    }
    Ok(pattern_by_name(spec)?)
}

/// Binary PGM of `grid` with `cell` pixels per patch; the smallest offset is
/// black and the largest white.
pub fn render_pgm(grid: &OffsetGrid, cell: usize) -> Vec<u8> {
    let (h, w) = (grid.height(), grid.width());
    let lo = *grid.offsets().iter().min().expect("non-empty");
    let hi = *grid.offsets().iter().max().expect("non-empty");
    let level = |v: i32| -> u8 {
        if hi == lo {
            128
        } else {
            ((v - lo) as f64 / (hi - lo) as f64 * 255.0).round() as u8
        }
    };
    let mut out = format!("P5\n{} {}\n255\n", w * cell, h * cell).into_bytes();
    for r in 0..h * cell {
        for c in 0..w * cell {
            out.push(level(grid.get(r / cell, c / cell)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use patchshift_core::patterns::{tile_offsets, PatternKind};

    #[test]
    fn text_round_trip_for_builtins() {
        for kind in PatternKind::BUILTIN.iter() {
            let p = patchshift_core::patterns::build_pattern(kind).unwrap();
            let back = parse_pattern(p.name(), &format_pattern(&p)).unwrap();
            assert_eq!(back, p);
        }
    }

    #[test]
    fn parse_accepts_signs_commas_and_comments() {
        let p = parse_pattern("x", "# bayer\n2 2\n0, -1\n+1 0  # last\n").unwrap();
        assert_eq!(p.rows(), vec![vec![0, -1], vec![1, 0]]);
        assert!(parse_pattern("x", "2 2\n0 1\n").is_err());
        assert!(parse_pattern("x", "2 2\n0 1 2\n0 0\n").is_err());
        assert!(parse_pattern("x", "two 2\n").is_err());
    }

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let a = pattern_by_name("bayerA").unwrap();
        assert_eq!(content_hash(&a), content_hash(&a.clone()));
        assert_eq!(content_hash(&a).len(), 64);
        assert_ne!(
            content_hash(&a),
            content_hash(&pattern_by_name("even2").unwrap())
        );
    }

    #[test]
    fn pgm_maps_offsets_to_levels() {
        let grid = tile_offsets(&pattern_by_name("bayerA").unwrap(), 2, 2);
        let img = render_pgm(&grid, 2);
        let header = b"P5\n4 4\n255\n";
        assert_eq!(&img[..header.len()], header);
        let px = &img[header.len()..];
        assert_eq!(px.len(), 16);
        assert_eq!((px[0], px[2], px[8]), (128, 0, 255));
    }
}
