use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{LooksSetting, ModeSetting, RunConfig};
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "ssdespeckle", version, about = "Self-supervised SAR despeckling")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = one per core). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inject speckle into every clean raster of a directory.
    Simulate {
        /// Directory of clean PGM or BDSR rasters.
        #[arg(long, value_name = "DIR")]
        clean: PathBuf,
        /// Fixed look count (`4`) or an interval sampled per image (`1:10`).
        #[arg(long)]
        looks: Option<LooksSetting>,
    },
    /// Train a model on the images listed in a manifest.
    Train {
        /// One clean image path per line, relative to the manifest.
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        /// Train against a second speckled copy or against the clean patch.
        #[arg(long, value_enum)]
        mode: Option<ModeSetting>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Stop after this many iterations.
        #[arg(long)]
        max_iterations: Option<usize>,
    },
    /// Apply a trained model to rasters.
    Despeckle {
        /// Model checkpoint written by `train`.
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(required = true, value_name = "RASTER")]
        inputs: Vec<PathBuf>,
        /// Also write an 8-bit PGM preview of each output.
        #[arg(long)]
        preview: bool,
        /// Tile edge for large inputs; the output does not depend on it.
        #[arg(long)]
        tile: Option<usize>,
    },
    /// Compute quality indexes for despeckled images.
    Evaluate {
        /// Lines of `name despeckled speckled [clean|-] [regions|-]`.
        #[arg(long, value_name = "FILE")]
        pairs: PathBuf,
        /// Region spec for pairs that do not name their own.
        #[arg(long, value_name = "FILE")]
        regions: Option<PathBuf>,
        /// Comma-separated subset of psnr, ssim, enl, mor, epd_roa, tcr.
        #[arg(long, value_delimiter = ',')]
        indexes: Option<Vec<String>>,
    },
}

impl Cli {
    /// The config file (or defaults) with this invocation's flags applied.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        match &self.command {
            Command::Simulate { looks, .. } => {
                if let Some(l) = looks {
                    cfg.speckle.looks = *l;
                }
            }
            Command::Train {
                mode,
                epochs,
                max_iterations,
                ..
            } => {
                if let Some(m) = mode {
                    cfg.trainer.mode = *m;
                }
                if let Some(e) = epochs {
                    cfg.trainer.epochs = *e;
                }
                if max_iterations.is_some() {
                    cfg.trainer.max_iterations = *max_iterations;
                }
            }
            Command::Despeckle { preview, tile, .. } => {
                cfg.inference.preview |= preview;
                if let Some(t) = tile {
                    cfg.inference.tile = *t;
                }
            }
            Command::Evaluate { regions, indexes, .. } => {
                if let Some(r) = regions {
                    cfg.metrics.regions = Some(r.clone());
                }
                if let Some(i) = indexes {
                    cfg.metrics.indexes = i.clone();
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
