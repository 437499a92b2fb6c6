use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ssdespeckle::data::{read_raster, ImageRaster, Provenance};
use ssdespeckle::rng::{derive_seed, tag};
use ssdespeckle::speckle::{apply_speckle, sample_speckle, SpeckleSpec};

use super::{output_path, write_output, write_text};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const SIDECAR_FILE: &str = "speckle.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedImage {
    pub source: PathBuf,
    pub output: PathBuf,
    pub looks: f64,
    pub seed: u64,
}

/// Files of `dir` in name order.
fn list_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::usage(format!("cannot read clean directory {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

/// Writes one speckled `BDSR` raster per readable file of `clean_dir`, plus a
/// `file,looks,seed` sidecar. The noise seed of a file depends only on the
/// master seed and the file's position in name order.
pub fn simulate(cfg: &RunConfig, clean_dir: &Path) -> CliResult<Vec<SimulatedImage>> {
    let files = list_files(clean_dir)?;
    cfg.echo()?;
    let looks = cfg.speckle.looks.to_looks();
    let mut done = Vec::new();
    for (i, path) in files.iter().enumerate() {
        let clean = match read_raster(path) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                continue;
            }
        };
        let seed = derive_seed(cfg.seed, tag::NOISE, &[i as u64]);
        let spec = SpeckleSpec::new(looks, seed)?;
        let noise = sample_speckle(&[clean.height, clean.width], &spec)?;
        let values = apply_speckle(&clean.values, &noise)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let speckled = ImageRaster::new(clean.width, clean.height, values)?.with_provenance(Provenance::Speckled);
        let output = output_path(&cfg.out, path, "bdsr");
        write_output(&speckled, &output)?;
        log::info!("{} -> {} (L = {})", path.display(), output.display(), noise.looks_used);
        done.push(SimulatedImage {
            source: path.clone(),
            output,
            looks: noise.looks_used,
            seed,
        });
    }
    if done.is_empty() {
        return Err(CliError::usage(format!("no readable raster in {}", clean_dir.display())));
    }
    let mut csv = String::from("file,looks,seed\n");
    for s in &done {
        let name = s.output.file_name().unwrap_or_default().to_string_lossy();
        let _ = writeln!(csv, "{name},{},{}", s.looks, s.seed);
    }
    write_text(&cfg.out.join(SIDECAR_FILE), &csv)?;
    Ok(done)
}
