//! Text table of the attention complexity model.

use std::fmt::Write as _;

use patchshift_core::oracle::{
    complexity_estimate, measure_macs, ComplexityKind, ComplexityReport,
};

use crate::error::Result;

#[derive(Clone, Debug, serde::Serialize)]
pub struct ComplexityRow {
    #[serde(flatten)]
    pub report: ComplexityReport,
    /// Tallied attention MACs of an executed layer, for executable kinds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured_attention_macs: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured_projection_macs: Option<u64>,
}

/// Rows for joint, divide, sparse/local (with `alpha`) and patch shift.
pub fn complexity_rows(
    tokens: usize,
    frames: usize,
    dim: usize,
    heads: usize,
    window: usize,
    alpha: f64,
    measure: bool,
) -> Result<Vec<ComplexityRow>> {
    let kinds = [
        ComplexityKind::Joint,
        ComplexityKind::Divide,
        ComplexityKind::SparseLocal { alpha },
        ComplexityKind::PatchShift,
    ];
    let mut rows = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let report = complexity_estimate(kind, tokens, frames, dim, heads, window)?;
        let measured = match (measure, kind) {
            (true, ComplexityKind::Joint | ComplexityKind::PatchShift) => {
                Some(measure_macs(kind, tokens, frames, dim, heads, window)?)
            }
            _ => None,
        };
        rows.push(ComplexityRow {
            report,
            measured_attention_macs: measured.map(|m| m.attention),
            measured_projection_macs: measured.map(|m| m.projection),
        });
    }
    Ok(rows)
}

pub fn format_table(rows: &[ComplexityRow]) -> String {
    let mut s = String::new();
    let measured = rows.iter().any(|r| r.measured_attention_macs.is_some());
    write!(
        s,
        "{:<13} {:<18} {:>14} {:>14} {:>14} {:>14}",
        "kind", "class", "attn_macs", "proj_macs", "buffer", "ratio_to_ps"
    )
    .unwrap();
    if measured {
        write!(s, " {:>14}", "measured").unwrap();
    }
    s.push('\n');
    let ps = rows
        .iter()
        .find(|r| r.report.kind == ComplexityKind::PatchShift)
        .map(|r| r.report.attention_macs());
    for r in rows {
        let ratio = ps
            .map(|p| r.report.attention_macs() as f64 / p as f64)
            .unwrap_or(f64::NAN);
        write!(
            s,
            "{:<13} {:<18} {:>14} {:>14} {:>14} {:>14.3}",
            r.report.kind.name(),
            r.report.class,
            r.report.attention_macs(),
            r.report.projection_macs,
            r.report.buffer_elements,
            ratio
        )
        .unwrap();
        if measured {
            match r.measured_attention_macs {
                Some(m) => write!(s, " {m:>14}").unwrap(),
                None => write!(s, " {:>14}", "-").unwrap(),
            }
        }
        s.push('\n');
    }
    s
}
