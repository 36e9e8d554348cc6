//! Model checkpoints: one line of JSON header, a newline, then every parameter
//! as little-endian `f64` in header order.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use patchshift_core::model::{Model, ModelConfig, ModelParams};
use patchshift_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::pattern_io::content_hash;

pub const FORMAT: &str = "patchshift-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the data section.
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub model: ModelConfig,
    pub pattern_hash: String,
    /// The run configuration that produced the weights, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<serde_json::Value>,
    pub tensors: Vec<TensorEntry>,
}

pub fn save(path: &Path, model: &Model, run: Option<serde_json::Value>) -> Result<()> {
    let mut tensors = Vec::new();
    let mut offset = 0u64;
    model.params().visit(&mut |name, t| {
        tensors.push(TensorEntry {
            name,
            shape: t.shape().to_vec(),
            offset,
        });
        offset += 8 * t.len() as u64;
    });
    let header = CheckpointHeader {
        format: FORMAT.into(),
        model: model.config().clone(),
        pattern_hash: content_hash(model.pattern()),
        run,
        tensors,
    };
    let mut buf = serde_json::to_vec(&header).expect("header serializes");
    buf.push(b'\n');
    model.params().visit(&mut |_, t| {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    });
    let mut f = std::fs::File::create(path).map_err(CliError::io(path))?;
    f.write_all(&buf).map_err(CliError::io(path))
}

pub fn load(path: &Path) -> Result<(Model, CheckpointHeader)> {
    let f = std::fs::File::open(path).map_err(CliError::io(path))?;
    let mut r = BufReader::new(f);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line).map_err(CliError::io(path))?;
    let header: CheckpointHeader = serde_json::from_slice(&line)
        .map_err(|e| CliError::Data(format!("{}: bad checkpoint header: {e}", path.display())))?;
    if header.format != FORMAT {
        return Err(CliError::Data(format!(
            "{}: unsupported format '{}'",
            path.display(),
            header.format
        )));
    }
    let mut data = Vec::new();
    r.read_to_end(&mut data).map_err(CliError::io(path))?;

    let mut params = ModelParams::zeros(&header.model)?;
    let mut entries = header.tensors.iter();
    let mut failure = None;
    params.visit_mut(&mut |t: &mut Tensor| {
        if failure.is_some() {
            return;
        }
        let Some(e) = entries.next() else {
            failure = Some("fewer tensors than the configuration needs".to_string());
            return;
        };
        if e.shape != t.shape() {
            failure = Some(format!(
                "{} has shape {:?}, expected {:?}",
                e.name,
                e.shape,
                t.shape()
            ));
            return;
        }
        let start = e.offset as usize;
        let end = start + 8 * t.len();
        let Some(bytes) = data.get(start..end) else {
            failure = Some(format!("{} runs past the end of the data", e.name));
            return;
        };
        for (v, b) in t.data_mut().iter_mut().zip(bytes.chunks_exact(8)) {
            *v = f64::from_le_bytes(b.try_into().expect("8 bytes"));
        }
    });
    if entries.next().is_some() {
        failure.get_or_insert_with(|| "more tensors than the configuration needs".into());
    }
    if let Some(msg) = failure {
        return Err(CliError::Data(format!("{}: {msg}", path.display())));
    }
    let model = Model::from_params(header.model.clone(), params)?;
    if content_hash(model.pattern()) != header.pattern_hash {
        return Err(CliError::Data(format!(
            "{}: pattern hash mismatch",
            path.display()
        )));
    }
    Ok((model, header))
}
