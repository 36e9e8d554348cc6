//! Run configuration: JSON file merged over defaults, then dotted-key
//! overrides such as `--model.pattern C9` or `--optim.lr=0.05`.

use std::path::{Path, PathBuf};

use patchshift_core::model::ModelConfig;
use patchshift_core::synth::{Shape, TaskSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "PATCHSHIFT_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    /// Half-cosine decay from `lr` to zero over the run.
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimConfig {
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 0.02,
            momentum: 0.9,
            epochs: 20,
            batch_size: 16,
            schedule: LrSchedule::Cosine,
        }
    }
}

impl OptimConfig {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Cosine => {
                let phase = std::f64::consts::PI * epoch as f64 / self.epochs.max(1) as f64;
                self.lr * 0.5 * (1.0 + phase.cos())
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Falls back to `$PATCHSHIFT_OUT`, then `runs`.
    pub dir: Option<PathBuf>,
    pub checkpoint: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    /// Model initialization and minibatch order.
    pub seed: u64,
    /// Dataset generation.
    pub data_seed: u64,
    pub model: ModelConfig,
    pub task: TaskSpec,
    pub optim: OptimConfig,
    pub output: OutputConfig,
    /// Pre-generated dataset sidecar; generated from `task` when absent.
    pub data: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            seed: 0,
            data_seed: 0,
            model: ModelConfig {
                depth: 4,
                init_std: 0.3,
                ..ModelConfig::default()
            },
            task: TaskSpec {
                dot: 4,
                shape: Shape::Bar,
                train: 512,
                val: 128,
                ..TaskSpec::default()
            },
            optim: OptimConfig::default(),
            output: OutputConfig {
                dir: None,
                checkpoint: true,
            },
            data: None,
        }
    }
}

impl RunConfig {
    pub fn output_dir(&self) -> PathBuf {
        self.output
            .dir
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"))
            .join(&self.name)
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Structural checks of model, task and optimizer and their agreement.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.task
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let (m, t) = (&self.model, &self.task);
        if (m.frames, m.height, m.width) != (t.frames, t.height, t.width)
            || (m.tubelet_frames, m.patch) != (t.tubelet_frames, t.patch)
        {
            return Err(CliError::Data(format!(
                "model expects {}x{}x{} video with {}x{}x{} tubelets, task produces {}x{}x{} with {}x{}x{}",
                m.frames, m.height, m.width, m.tubelet_frames, m.patch, m.patch,
                t.frames, t.height, t.width, t.tubelet_frames, t.patch, t.patch
            )));
        }
        if m.classes != t.task.classes() {
            return Err(CliError::Data(format!(
                "model has {} classes, task has {}",
                m.classes,
                t.task.classes()
            )));
        }
        let o = &self.optim;
        if !(o.lr >= 0.0 && o.lr.is_finite())
            || !(0.0..1.0).contains(&o.momentum)
            || o.batch_size == 0
        {
            return Err(CliError::Config(
                "optim needs lr >= 0, momentum in [0, 1) and batch_size > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Recursively overlays `patch` onto `base`.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses an override value: JSON when it parses as JSON, a string otherwise.
fn override_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let Value::Object(map) = node else {
            return Err(CliError::Config(format!(
                "override '{key}': '{}' is not a section",
                parts[..i].join(".")
            )));
        };
        if i + 1 == parts.len() {
            map.insert((*part).to_string(), value);
            return Ok(());
        }
        node = map
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
    }
    Ok(())
}

/// Splits `--a.b value` / `--a.b=value` pairs.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(key) = arg.strip_prefix("--") else {
            return Err(CliError::Config(format!(
                "unexpected argument '{arg}'; overrides look like --section.key value"
            )));
        };
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| CliError::Config(format!("override --{key} needs a value")))?;
                (key.to_string(), v.clone())
            }
        };
        if key.is_empty() {
            return Err(CliError::Config("empty override key".into()));
        }
        out.push((key, value));
    }
    Ok(out)
}

/// Defaults, overlaid with the optional JSON file, then the overrides.
pub fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut value = RunConfig::default().to_json();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if !file.is_object() {
            return Err(CliError::Config(format!(
                "{}: top level must be an object",
                path.display()
            )));
        }
        merge(&mut value, file);
    }
    for (k, v) in overrides {
        set_path(&mut value, k, override_value(v))?;
    }
    serde_json::from_value(value)
        .map_err(|e| CliError::Config(format!("invalid configuration: {e}")))
}
