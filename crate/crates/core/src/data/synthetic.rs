//! Procedural clean scenes standing in for optical imagery.
//!
//! A scene is a Voronoi partition into fields of distinct reflectivity,
//! each with its own gentle gradient, overlaid with low-frequency
//! modulation, a few linear features and bright point targets. Values are
//! continuous (no large ties) and lie in `[0, 1]`.

use rand::Rng;

use crate::error::Result;
use crate::rng::{self, tag};

use super::histogram::{sar_like_transform, HistogramSpec};
use super::raster::ImageRaster;

struct Field {
    cx: f64,
    cy: f64,
    level: f64,
    gx: f64,
    gy: f64,
}

pub fn natural_scene(width: usize, height: usize, seed: u64) -> Result<ImageRaster> {
    let mut rng = rng::substream(seed, tag::DATA, &[width as u64, height as u64]);
    let (w, h) = (width as f64, height as f64);
    let scale = w.max(h);

    let n_fields = rng.random_range(5..=10);
    let fields: Vec<Field> = (0..n_fields)
        .map(|_| Field {
            cx: rng.random_range(0.0..w),
            cy: rng.random_range(0.0..h),
            level: rng.random_range(0.15..0.85),
            gx: rng.random_range(-0.15..0.15) / scale,
            gy: rng.random_range(-0.15..0.15) / scale,
        })
        .collect();

    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let freq = rng.random_range(1.0..4.0) * std::f64::consts::TAU / scale;
            (freq * theta.cos(), freq * theta.sin(), rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.02..0.05))
        })
        .collect();

    let mut values = vec![0.0f32; width * height];
    for y in 0..height {
        for x in 0..width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let f = fields
                .iter()
                .min_by(|a, b| {
                    let da = (a.cx - px).powi(2) + (a.cy - py).powi(2);
                    let db = (b.cx - px).powi(2) + (b.cy - py).powi(2);
                    da.total_cmp(&db)
                })
                .unwrap();
            let mut v = f.level + f.gx * (px - f.cx) + f.gy * (py - f.cy);
            for &(kx, ky, phase, amp) in &waves {
                v += amp * (kx * px + ky * py + phase).sin();
            }
            values[y * width + x] = v as f32;
        }
    }

    // Linear features: roads or canals crossing the scene.
    for _ in 0..rng.random_range(1..=2) {
        let bright = rng.random_bool(0.5);
        let level = if bright { 0.95 } else { 0.05 };
        let (x0, y0) = (rng.random_range(0.0..w), rng.random_range(0.0..h));
        let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let (nx, ny) = (-theta.sin(), theta.cos());
        let half = rng.random_range(0.8..1.6);
        for y in 0..height {
            for x in 0..width {
                let d = ((x as f64 + 0.5 - x0) * nx + (y as f64 + 0.5 - y0) * ny).abs();
                if d < half {
                    let i = y * width + x;
                    values[i] = (0.7 * level + 0.3 * values[i] as f64) as f32;
                }
            }
        }
    }

    // Point targets.
    for _ in 0..rng.random_range(2..=5) {
        let x = rng.random_range(0..width.saturating_sub(1).max(1));
        let y = rng.random_range(0..height.saturating_sub(1).max(1));
        for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            if x + dx < width && y + dy < height {
                values[(y + dy) * width + x + dx] = rng.random_range(0.97..1.0);
            }
        }
    }

    for v in &mut values {
        *v = v.clamp(0.0, 1.0);
    }
    ImageRaster::new(width, height, values)
}

/// A natural scene pushed through histogram matching to `target`.
pub fn sar_like_scene(width: usize, height: usize, seed: u64, target: &HistogramSpec) -> Result<ImageRaster> {
    sar_like_transform(&natural_scene(width, height, seed)?, target)
}
