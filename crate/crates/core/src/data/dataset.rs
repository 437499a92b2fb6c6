//! Dataset manifests, in-memory patch sets and training-pair streams.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::speckle::{make_training_pair, speckle_realization, Looks, PairRole, SpeckleSpec};

use super::histogram::{sar_like_transform, HistogramSpec};
use super::patches::extract_patches;
use super::raster::{read_raster, ImageRaster};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub regions: Option<PathBuf>,
}

/// Images to train on and how to cut them.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub patch: usize,
    pub stride: usize,
    pub seed: u64,
}

/// Parses a manifest: one image path per line, optionally followed by a
/// region-spec path. `#` starts a comment. Relative paths resolve against
/// `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut fields = content.split_whitespace();
        let image = base.join(fields.next().unwrap());
        let regions = fields.next().map(|r| base.join(r));
        if fields.next().is_some() {
            return Err(Error::parse(start, "manifest lines hold at most two paths"));
        }
        entries.push(ManifestEntry { image, regions });
    }
    Ok(entries)
}

impl DatasetManifest {
    /// Loads a manifest file and checks that every listed path exists.
    pub fn load(path: impl AsRef<Path>, patch: usize, stride: usize, seed: u64) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let entries = parse_manifest(&text, base)?;
        let manifest = DatasetManifest {
            entries,
            patch,
            stride,
            seed,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::config("manifest lists no images"));
        }
        if self.patch == 0 || self.stride == 0 {
            return Err(Error::config("patch extent and stride must be positive"));
        }
        for e in &self.entries {
            for p in std::iter::once(&e.image).chain(e.regions.as_ref()) {
                if !p.exists() {
                    return Err(Error::config(format!("manifest path {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}

/// Clean training patches held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchDataset {
    patches: Vec<ImageRaster>,
    patch: usize,
}

impl PatchDataset {
    pub fn from_patches(patches: Vec<ImageRaster>) -> Result<Self> {
        let first = patches
            .first()
            .ok_or_else(|| Error::config("dataset holds no patches"))?;
        let patch = first.width;
        for p in &patches {
            if p.width != patch || p.height != patch {
                return Err(Error::config(format!(
                    "patches must all be {patch}x{patch}, found {}x{}",
                    p.width, p.height
                )));
            }
            p.validate()?;
        }
        Ok(PatchDataset { patches, patch })
    }

    /// Cuts patches from clean images, optionally matching each image's
    /// histogram to `sar_like` first.
    pub fn from_images(images: &[ImageRaster], patch: usize, stride: usize, seed: u64, sar_like: Option<&HistogramSpec>) -> Result<Self> {
        let mut patches = Vec::new();
        for (i, img) in images.iter().enumerate() {
            let img = match sar_like {
                Some(t) => sar_like_transform(img, t)?,
                None => img.clone(),
            };
            patches.extend(extract_patches(&img, patch, stride, rng::derive_seed(seed, tag::PATCHES, &[i as u64]))?);
        }
        Self::from_patches(patches)
    }

    /// Reads every manifest image. Unreadable images are skipped with a
    /// warning; if none can be read the manifest is rejected.
    pub fn from_manifest(manifest: &DatasetManifest, sar_like: Option<&HistogramSpec>) -> Result<Self> {
        manifest.validate()?;
        let mut images = Vec::new();
        for e in &manifest.entries {
            match read_raster(&e.image) {
                Ok(img) => images.push(img),
                Err(err) => log::warn!("skipping {}: {err}", e.image.display()),
            }
        }
        if images.is_empty() {
            return Err(Error::config("no manifest image could be read"));
        }
        Self::from_images(&images, manifest.patch, manifest.stride, manifest.seed, sar_like)
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn patches(&self) -> &[ImageRaster] {
        &self.patches
    }
}

/// Target used for training pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrainingMode {
    /// `(y, y')`: two independent speckled observations.
    #[default]
    SelfSupervised,
    /// `(y, x)`: speckled input against the clean patch.
    Supervised,
}

impl std::str::FromStr for TrainingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "self_supervised" => Ok(TrainingMode::SelfSupervised),
            "supervised" => Ok(TrainingMode::Supervised),
            other => Err(Error::Usage(format!(
                "unknown mode `{other}`, expected `self_supervised` or `supervised`"
            ))),
        }
    }
}

impl std::fmt::Display for TrainingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrainingMode::SelfSupervised => "self_supervised",
            TrainingMode::Supervised => "supervised",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairStreamConfig {
    pub looks: Looks,
    pub mode: TrainingMode,
    pub noise_seed: u64,
    pub order_seed: u64,
    /// Fresh noise and order every epoch; when off, every epoch replays
    /// epoch 0.
    pub reseed_each_epoch: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub patch_index: usize,
    pub input: Vec<f32>,
    pub target: Vec<f32>,
    pub input_looks: f64,
    pub target_looks: Option<f64>,
}

/// Deterministic stream of training pairs for one epoch.
pub struct PairStream<'a> {
    dataset: &'a PatchDataset,
    cfg: PairStreamConfig,
    epoch_key: u64,
    order: std::vec::IntoIter<usize>,
}

impl PairStream<'_> {
    fn pair(&self, index: usize) -> Result<TrainingPair> {
        let x = &self.dataset.patches[index].values;
        let spec = SpeckleSpec::new(
            self.cfg.looks,
            rng::derive_seed(self.cfg.noise_seed, tag::NOISE, &[self.epoch_key, index as u64]),
        )?;
        Ok(match self.cfg.mode {
            TrainingMode::SelfSupervised => {
                let (y, t) = make_training_pair(x, &spec)?;
                TrainingPair {
                    patch_index: index,
                    input: y.values,
                    target: t.values,
                    input_looks: y.looks,
                    target_looks: Some(t.looks),
                }
            }
            TrainingMode::Supervised => {
                let y = speckle_realization(x, &spec, PairRole::Input)?;
                TrainingPair {
                    patch_index: index,
                    input: y.values,
                    target: x.clone(),
                    input_looks: y.looks,
                    target_looks: None,
                }
            }
        })
    }
}

impl Iterator for PairStream<'_> {
    type Item = Result<TrainingPair>;

    fn next(&mut self) -> Option<Self::Item> {
        let index = self.order.next()?;
        Some(self.pair(index))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.order.size_hint()
    }
}

/// Pairs for `epoch`, in an order shuffled by `cfg.order_seed`.
pub fn build_pair_stream(dataset: &PatchDataset, cfg: PairStreamConfig, epoch: usize) -> PairStream<'_> {
    let epoch_key = if cfg.reseed_each_epoch { epoch as u64 } else { 0 };
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng::substream(cfg.order_seed, tag::ORDER, &[epoch_key]));
    PairStream {
        dataset,
        cfg,
        epoch_key,
        order: order.into_iter(),
    }
}
