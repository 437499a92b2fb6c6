use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{self, tag};

use super::raster::ImageRaster;

/// Top-left corners of a regular patch grid; the remainder is dropped.
pub fn patch_grid(width: usize, height: usize, patch: usize, stride: usize) -> Result<Vec<(usize, usize)>> {
    if patch == 0 || stride == 0 {
        return Err(Error::config("patch extent and stride must be positive"));
    }
    if patch > width || patch > height {
        return Err(Error::Geometry(format!(
            "patch {patch} exceeds image extent {width}x{height}"
        )));
    }
    let xs: Vec<usize> = (0..=width - patch).step_by(stride).collect();
    Ok((0..=height - patch)
        .step_by(stride)
        .flat_map(|y| xs.iter().map(move |&x| (x, y)))
        .collect())
}

/// Cuts `image` into `patch x patch` tiles on a `stride` grid, in an order
/// shuffled by `seed`.
pub fn extract_patches(image: &ImageRaster, patch: usize, stride: usize, seed: u64) -> Result<Vec<ImageRaster>> {
    let mut corners = patch_grid(image.width, image.height, patch, stride)?;
    corners.shuffle(&mut rng::substream(seed, tag::PATCHES, &[]));
    corners
        .into_iter()
        .map(|(x, y)| image.crop(x, y, patch, patch))
        .collect()
}
