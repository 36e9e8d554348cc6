//! Dataset files: a JSON sidecar describing the task and samples, next to a
//! raw little-endian `f64` blob holding the train videos then the val videos.

use std::io::Write;
use std::path::{Path, PathBuf};

use patchshift_core::synth::{Dataset, SyntheticSample, TaskSpec};
use patchshift_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub seed: u64,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub spec: TaskSpec,
    pub seed: u64,
    /// `[F, H, W, 3]` of every video.
    pub video_shape: Vec<usize>,
    /// File name of the blob, relative to the sidecar.
    pub blob: String,
    pub train: Vec<SampleEntry>,
    pub val: Vec<SampleEntry>,
}

fn entries(samples: &[SyntheticSample]) -> Vec<SampleEntry> {
    samples
        .iter()
        .map(|s| SampleEntry {
            seed: s.seed,
            label: s.label,
        })
        .collect()
}

/// Writes `<dir>/<stem>.json` and `<dir>/<stem>.bin`; returns the sidecar path.
pub fn save(dir: &Path, stem: &str, data: &Dataset) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let blob_name = format!("{stem}.bin");
    let spec = &data.spec;
    let sidecar = DatasetSidecar {
        spec: spec.clone(),
        seed: data.seed,
        video_shape: vec![spec.frames, spec.height, spec.width, 3],
        blob: blob_name.clone(),
        train: entries(&data.train),
        val: entries(&data.val),
    };
    let blob_path = dir.join(&blob_name);
    let mut blob = std::io::BufWriter::new(
        std::fs::File::create(&blob_path).map_err(CliError::io(&blob_path))?,
    );
    for s in data.train.iter().chain(&data.val) {
        for v in s.video.data() {
            blob.write_all(&v.to_le_bytes())
                .map_err(CliError::io(&blob_path))?;
        }
    }
    blob.flush().map_err(CliError::io(&blob_path))?;
    let json_path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    std::fs::write(&json_path, text).map_err(CliError::io(&json_path))?;
    Ok(json_path)
}

pub fn load(sidecar_path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(sidecar_path).map_err(CliError::io(sidecar_path))?;
    let side: DatasetSidecar = serde_json::from_str(&text).map_err(|e| {
        CliError::Data(format!(
            "{}: bad dataset sidecar: {e}",
            sidecar_path.display()
        ))
    })?;
    let spec = &side.spec;
    let shape = vec![spec.frames, spec.height, spec.width, 3];
    if side.video_shape != shape {
        return Err(CliError::Data(format!(
            "{}: video shape {:?} does not match the task {:?}",
            sidecar_path.display(),
            side.video_shape,
            shape
        )));
    }
    let blob_path = sidecar_path.with_file_name(&side.blob);
    let bytes = std::fs::read(&blob_path).map_err(CliError::io(&blob_path))?;
    let per_video = shape.iter().product::<usize>();
    let count = side.train.len() + side.val.len();
    if bytes.len() != count * per_video * 8 {
        return Err(CliError::Data(format!(
            "{}: {} bytes, expected {} videos of {} values",
            blob_path.display(),
            bytes.len(),
            count,
            per_video
        )));
    }
    let mut videos = bytes.chunks_exact(per_video * 8).map(|chunk| {
        let data = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        Tensor::new(shape.clone(), data).expect("sized above")
    });
    let mut take = |list: &[SampleEntry]| -> Vec<SyntheticSample> {
        list.iter()
            .map(|e| SyntheticSample {
                video: videos.next().expect("counted above"),
                label: e.label,
                seed: e.seed,
            })
            .collect()
    };
    let train = take(&side.train);
    let val = take(&side.val);
    Ok(Dataset {
        spec: side.spec,
        seed: side.seed,
        train,
        val,
    })
}
