use std::path::{Path, PathBuf};

use ssdespeckle::data::{DatasetManifest, PatchDataset};
use ssdespeckle::network::{save_model, Model};
use ssdespeckle::rng::{derive_seed, tag};
use ssdespeckle::trainer::{TrainLog, Trainer};

use super::write_text;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MODEL_FILE: &str = "model.bdsm";

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub patches: usize,
    pub log: TrainLog,
}

/// Trains on the manifest images and writes `model.bdsm`, per-epoch
/// checkpoints and training state under `checkpoints/`, `train_log.csv`,
/// `epochs.csv` and `timing.csv`.
pub fn train(cfg: &RunConfig, manifest: &Path) -> CliResult<TrainOutcome> {
    if !manifest.exists() {
        return Err(CliError::usage(format!("manifest {} does not exist", manifest.display())));
    }
    let data_seed = derive_seed(cfg.seed, tag::DATA, &[]);
    let manifest = DatasetManifest::load(manifest, cfg.data.patch, cfg.data.stride, data_seed)?;
    let target = cfg.histogram_target()?;
    let dataset = PatchDataset::from_manifest(&manifest, target.as_ref())?;
    let model = Model::build(cfg.model_config()?, cfg.seed)?;
    cfg.echo()?;

    let ckpt_dir = cfg.out.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", ckpt_dir.display())))?;
    let trainer = Trainer::new(&dataset, cfg.train_config())?.with_checkpoints(&ckpt_dir);
    log::info!(
        "{} patches, {} iterations per epoch, {} parameters",
        dataset.len(),
        trainer.iterations_per_epoch(),
        model.param_count()
    );
    let (model, log) = trainer.run(model).map_err(|e| CliError::runtime(e.to_string()))?;

    let checkpoint = cfg.out.join(MODEL_FILE);
    save_model(&checkpoint, &model).map_err(CliError::output)?;
    write_text(&cfg.out.join("train_log.csv"), &log.to_csv())?;
    write_text(&cfg.out.join("epochs.csv"), &log.epochs_csv())?;
    write_text(&cfg.out.join("timing.csv"), &log.timing_csv())?;
    if let (Some(first), Some(last)) = (log.iterations.first(), log.iterations.last()) {
        log::info!("loss {:.6} -> {:.6} over {} iterations", first.loss, last.loss, log.iterations.len());
    }
    Ok(TrainOutcome {
        checkpoint,
        patches: dataset.len(),
        log,
    })
}
