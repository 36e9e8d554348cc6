//! Training runs: dataset, model, epochs, CSV metrics, checkpoint and summary.

use std::io::Write;
use std::path::PathBuf;

use patchshift_core::model::Model;
use patchshift_core::synth::{gen_dataset, Dataset};
use patchshift_core::train::{evaluate, train_epoch, Evaluation, Sgd};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::dataset_io;
use crate::error::{CliError, Result};
use crate::pattern_io::content_hash;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_top1: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: RunConfig,
    pub pattern_hash: String,
    pub param_count: usize,
    pub final_eval: Evaluation,
    pub epochs: Vec<EpochRecord>,
}

/// The dataset a run trains on: loaded from `config.data`, or generated.
pub fn dataset_for(config: &RunConfig) -> Result<Dataset> {
    match &config.data {
        Some(path) => {
            let data = dataset_io::load(path)?;
            if data.spec != config.task {
                return Err(CliError::Data(format!(
                    "{}: dataset task does not match the configured task",
                    path.display()
                )));
            }
            Ok(data)
        }
        None => Ok(gen_dataset(&config.task, config.data_seed)?),
    }
}

/// Trains a fresh model; calls `on_epoch` after every epoch.
pub fn train_model(
    config: &RunConfig,
    data: &Dataset,
    mut on_epoch: impl FnMut(&EpochRecord) -> Result<()>,
) -> Result<(Model, Vec<EpochRecord>)> {
    config.validate()?;
    let mut model = Model::new(config.model.clone(), config.seed)?;
    let o = &config.optim;
    let mut opt = Sgd::new(o.lr, o.momentum)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut records = Vec::with_capacity(o.epochs);
    for epoch in 0..o.epochs {
        opt.set_lr(o.lr_at(epoch))?;
        let train_loss = train_epoch(&mut model, &mut opt, &data.train, o.batch_size, &mut rng)?;
        if !train_loss.is_finite() {
            return Err(CliError::Data(format!(
                "training diverged at epoch {epoch}"
            )));
        }
        let val = evaluate(&model, &data.val)?;
        let rec = EpochRecord {
            epoch,
            train_loss,
            val_top1: val.top1,
        };
        on_epoch(&rec)?;
        records.push(rec);
    }
    Ok((model, records))
}

pub struct RunOutput {
    pub dir: PathBuf,
    pub csv: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub summary: RunSummary,
}

/// Full run with artifacts under [`RunConfig::output_dir`].
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let data = dataset_for(config)?;
    let dir = config.output_dir();
    std::fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
    let pattern = config.model.pattern.resolve()?;
    let hash = content_hash(&pattern);
    let config_json = serde_json::to_string(&config.to_json()).expect("config serializes");

    let csv_path = dir.join("metrics.csv");
    let mut file = std::fs::File::create(&csv_path).map_err(CliError::io(&csv_path))?;
    writeln!(file, "# config: {config_json}").map_err(CliError::io(&csv_path))?;
    writeln!(file, "# pattern_hash: {hash}").map_err(CliError::io(&csv_path))?;
    let mut csv = csv::Writer::from_writer(file);
    let (model, records) = train_model(config, &data, |rec| {
        csv.serialize(rec)
            .and_then(|_| csv.flush().map_err(Into::into))
            .map_err(|e| CliError::Data(format!("{}: {e}", csv_path.display())))
    })?;
    drop(csv);

    let final_eval = evaluate(&model, &data.val)?;
    let checkpoint_path = if config.output.checkpoint {
        let p = dir.join("model.ckpt");
        checkpoint::save(&p, &model, Some(config.to_json()))?;
        Some(p)
    } else {
        None
    };
    let summary = RunSummary {
        config: config.clone(),
        pattern_hash: hash,
        param_count: model.param_count(),
        final_eval,
        epochs: records,
    };
    let summary_path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(&summary_path, text).map_err(CliError::io(&summary_path))?;
    Ok(RunOutput {
        dir,
        csv: csv_path,
        checkpoint: checkpoint_path,
        summary,
    })
}
