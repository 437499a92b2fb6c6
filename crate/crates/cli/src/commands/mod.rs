mod despeckle;
mod evaluate;
mod simulate;
mod train;

pub use despeckle::despeckle;
pub use evaluate::{evaluate, parse_pairs, EvalPair, METRICS_FILE};
pub use simulate::{simulate, SimulatedImage, SIDECAR_FILE};
pub use train::{train, TrainOutcome, MODEL_FILE};

use std::path::{Path, PathBuf};

use ssdespeckle::data::{write_raster, ImageRaster};

use crate::error::{CliError, CliResult};

/// `<out>/<stem of input>.<ext>`.
pub(crate) fn output_path(out: &Path, input: &Path, ext: &str) -> PathBuf {
    let stem = input.file_stem().map_or_else(|| "image".into(), |s| s.to_string_lossy());
    out.join(format!("{stem}.{ext}"))
}

pub(crate) fn write_output(raster: &ImageRaster, path: &Path) -> CliResult<()> {
    write_raster(raster, path).map_err(CliError::output)
}

pub(crate) fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}
