//! Raster I/O, SAR-like intensity mapping, patching and training pairs.

mod dataset;
mod histogram;
mod patches;
mod raster;
pub mod synthetic;

pub use dataset::{
    build_pair_stream, parse_manifest, DatasetManifest, ManifestEntry, PairStream, PairStreamConfig, PatchDataset,
    TrainingMode, TrainingPair,
};
pub use histogram::{ks_distance, sar_like_transform, HistogramSpec, BINS};
pub use patches::{extract_patches, patch_grid};
pub use raster::{
    decode_float, decode_pgm, encode_float, encode_pgm, quantize, read_raster, write_raster, ImageRaster, Provenance,
    RasterFormat, RASTER_MAGIC, RASTER_VERSION,
};
