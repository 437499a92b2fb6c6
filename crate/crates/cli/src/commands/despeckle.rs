use std::path::{Path, PathBuf};

use ssdespeckle::data::read_raster;
use ssdespeckle::network::load_model;
use ssdespeckle::trainer;

use super::{output_path, write_output};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Writes `<stem>.bdsr` (and `<stem>.pgm` with previews on) for every input.
pub fn despeckle(cfg: &RunConfig, checkpoint: &Path, inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let model = load_model(checkpoint).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("checkpoint {}: {}", checkpoint.display(), err.message);
        err
    })?;
    cfg.echo()?;
    let mut outputs = Vec::new();
    for input in inputs {
        let with_path = |e: ssdespeckle::Error| {
            let mut err = CliError::from(e);
            err.message = format!("{}: {}", input.display(), err.message);
            err
        };
        let image = read_raster(input).map_err(with_path)?;
        let clean = trainer::despeckle(&model, &image, cfg.inference.tile).map_err(with_path)?;
        let output = output_path(&cfg.out, input, "bdsr");
        write_output(&clean, &output)?;
        if cfg.inference.preview {
            write_output(&clean, &output_path(&cfg.out, input, "pgm"))?;
        }
        log::info!("{} -> {}", input.display(), output.display());
        outputs.push(output);
    }
    Ok(outputs)
}
