use rayon::prelude::*;

use crate::data::{ImageRaster, Provenance};
use crate::error::{Error, Result};
use crate::network::Model;
use crate::numerics::{Real, Tensor};

pub const DEFAULT_TILE: usize = 256;

struct Tile {
    /// Core rectangle written to the output.
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    /// Padded rectangle fed to the network, clipped to the image.
    px0: usize,
    py0: usize,
    pw: usize,
    ph: usize,
}

fn tiles(width: usize, height: usize, tile: usize, margin: usize) -> Vec<Tile> {
    let mut out = Vec::new();
    for y0 in (0..height).step_by(tile) {
        for x0 in (0..width).step_by(tile) {
            let (w, h) = (tile.min(width - x0), tile.min(height - y0));
            let px0 = x0.saturating_sub(margin);
            let py0 = y0.saturating_sub(margin);
            let px1 = (x0 + w + margin).min(width);
            let py1 = (y0 + h + margin).min(height);
            out.push(Tile {
                x0,
                y0,
                w,
                h,
                px0,
                py0,
                pw: px1 - px0,
                ph: py1 - py0,
            });
        }
    }
    out
}

fn forward_raster<T: Real>(model: &Model<T>, image: &ImageRaster) -> Result<Vec<f32>> {
    let input = Tensor::new(
        &[1, 1, image.height, image.width],
        image.values.iter().map(|&v| T::of(v as f64)).collect(),
    )?;
    let out = model.forward(&input)?;
    Ok(out.data().iter().map(|v| v.to_f32().unwrap_or(f32::NAN)).collect())
}

/// Applies the network to a whole image.
///
/// Images no larger than `tile` in both directions take one forward pass.
/// Larger images are cut into `tile x tile` cores, each extended by the
/// receptive-field half-extent on every side that lies inside the image,
/// so every output pixel sees exactly the context it would see untiled.
pub fn despeckle<T: Real>(model: &Model<T>, image: &ImageRaster, tile: usize) -> Result<ImageRaster> {
    if image.width == 0 || image.height == 0 || image.values.len() != image.width * image.height {
        return Err(Error::Geometry(format!("cannot despeckle a {}x{} image", image.width, image.height)));
    }
    if tile == 0 {
        return Err(Error::config("tile extent must be positive"));
    }
    image.validate()?;
    if let Some(i) = image.values.iter().position(|&v| v < 0.0) {
        return Err(Error::Domain(format!("intensity image has negative pixel {i}: {}", image.values[i])));
    }

    let values = if image.width <= tile && image.height <= tile {
        forward_raster(model, image)?
    } else {
        let margin = model.receptive_field() / 2;
        let plan = tiles(image.width, image.height, tile, margin);
        let parts: Vec<Vec<f32>> = plan
            .par_iter()
            .map(|t| forward_raster(model, &image.crop(t.px0, t.py0, t.pw, t.ph)?))
            .collect::<Result<_>>()?;
        let mut out = vec![0.0f32; image.len()];
        for (t, part) in plan.iter().zip(parts) {
            let (ox, oy) = (t.x0 - t.px0, t.y0 - t.py0);
            for row in 0..t.h {
                let src = (oy + row) * t.pw + ox;
                let dst = (t.y0 + row) * image.width + t.x0;
                out[dst..dst + t.w].copy_from_slice(&part[src..src + t.w]);
            }
        }
        out
    };
    Ok(ImageRaster::new(image.width, image.height, values)?.with_provenance(Provenance::Despeckled))
}
