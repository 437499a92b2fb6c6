//! Histogram matching toward a SAR-like intensity distribution.

use std::path::Path;

use crate::error::{Error, Result};

use super::raster::ImageRaster;

pub const BINS: usize = 256;

const DEFAULT_TARGET: &str = include_str!("../../assets/sar_like_target.txt");

/// Normalized 256-bin intensity histogram over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramSpec {
    masses: Vec<f64>,
    cdf: Vec<f64>,
}

fn bin_of(v: f32) -> (usize, f64) {
    let s = (v.clamp(0.0, 1.0) as f64) * BINS as f64;
    let b = (s.floor() as usize).min(BINS - 1);
    (b, (s - b as f64).clamp(0.0, 1.0))
}

impl HistogramSpec {
    pub fn from_masses(masses: &[f64]) -> Result<Self> {
        if masses.len() != BINS {
            return Err(Error::config(format!(
                "histogram needs {BINS} bins, got {}",
                masses.len()
            )));
        }
        if let Some(i) = masses.iter().position(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::Domain(format!("bin {i} has invalid mass {}", masses[i])));
        }
        let total: f64 = masses.iter().sum();
        if total <= 0.0 {
            return Err(Error::Domain("histogram has zero total mass".into()));
        }
        let masses: Vec<f64> = masses.iter().map(|m| m / total).collect();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = masses
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect();
        cdf[BINS - 1] = 1.0;
        Ok(HistogramSpec { masses, cdf })
    }

    /// Parses 256 whitespace-separated non-negative bin masses.
    pub fn parse(text: &str) -> Result<Self> {
        let mut masses = Vec::with_capacity(BINS);
        let mut offset = 0;
        for token in text.split_ascii_whitespace() {
            let at = offset + text[offset..].find(token).unwrap_or(0);
            offset = at + token.len();
            let v: f64 = token
                .parse()
                .map_err(|_| Error::parse(at, format!("`{token}` is not a number")))?;
            masses.push(v);
        }
        Self::from_masses(&masses)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Exponential intensity law (single-look-like), truncated to `[0, 1]`.
    pub fn sar_like_default() -> Self {
        Self::parse(DEFAULT_TARGET).expect("bundled histogram table is valid")
    }

    pub fn of_image(image: &ImageRaster) -> Result<Self> {
        let mut counts = vec![0.0; BINS];
        for &v in &image.values {
            counts[bin_of(v).0] += 1.0;
        }
        Self::from_masses(&counts)
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Cumulative mass through the end of each bin.
    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    fn below(&self, b: usize) -> f64 {
        if b == 0 {
            0.0
        } else {
            self.cdf[b - 1]
        }
    }

    /// Piecewise-linear CDF evaluated at `v`.
    pub fn cdf_at(&self, v: f32) -> f64 {
        let (b, frac) = bin_of(v);
        self.below(b) + frac * self.masses[b]
    }

    /// Piecewise-linear quantile function.
    pub fn quantile(&self, u: f64) -> f32 {
        let u = u.clamp(0.0, 1.0);
        let j = match self.cdf.iter().position(|&c| c > u) {
            Some(j) => j,
            None => return (self.masses.iter().rposition(|&m| m > 0.0).unwrap() + 1) as f32 / BINS as f32,
        };
        let frac = ((u - self.below(j)) / self.masses[j]).clamp(0.0, 1.0);
        ((j as f64 + frac) / BINS as f64) as f32
    }

    pub fn median(&self) -> f32 {
        self.quantile(0.5)
    }
}

/// Kolmogorov–Smirnov distance between two binned distributions.
pub fn ks_distance(a: &HistogramSpec, b: &HistogramSpec) -> f64 {
    a.cdf
        .iter()
        .zip(&b.cdf)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Maps every pixel through `F_target^-1(F_source(v))`.
///
/// Both CDFs are the piecewise-linear interpolants of 256-bin histograms,
/// so the map is monotone non-decreasing. A constant image maps to the
/// target median.
pub fn sar_like_transform(image: &ImageRaster, target: &HistogramSpec) -> Result<ImageRaster> {
    image.validate()?;
    let first = image.values[0];
    if image.values.iter().all(|&v| v == first) {
        let m = target.median();
        return Ok(ImageRaster {
            values: vec![m; image.len()],
            ..image.clone()
        });
    }
    let source = HistogramSpec::of_image(image)?;
    let values = image
        .values
        .iter()
        .map(|&v| target.quantile(source.cdf_at(v)))
        .collect();
    Ok(ImageRaster {
        values,
        ..image.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> ImageRaster {
        let n = (w * h) as f32;
        ImageRaster::new(w, h, (0..w * h).map(|i| (i as f32 * 0.37).sin().abs() * 0.6 + i as f32 / n * 0.3).collect()).unwrap()
    }

    #[test]
    fn default_target_is_normalized_and_decreasing() {
        let t = HistogramSpec::sar_like_default();
        assert!((t.masses().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(t.masses().windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(HistogramSpec::parse("1 2 3"), Err(Error::Config(_))));
        let mut text = "1 ".repeat(255);
        text.push_str("oops");
        assert!(matches!(HistogramSpec::parse(&text), Err(Error::Parse { offset: 510, .. })));
        let neg = format!("{}-1", "1 ".repeat(255));
        assert!(matches!(HistogramSpec::parse(&neg), Err(Error::Domain(_))));
    }

    #[test]
    fn self_target_is_fixed_point() {
        let img = ramp(40, 30);
        let own = HistogramSpec::of_image(&img).unwrap();
        let out = sar_like_transform(&img, &own).unwrap();
        let dev = img
            .values
            .iter()
            .zip(&out.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(dev <= 1.0 / 256.0, "max deviation {dev}");
    }

    #[test]
    fn constant_image_maps_to_median() {
        let img = ImageRaster::filled(5, 5, 0.3).unwrap();
        let t = HistogramSpec::sar_like_default();
        let out = sar_like_transform(&img, &t).unwrap();
        let m = t.median();
        assert!(out.values.iter().all(|&v| v == m));
        // exponential with rate 8, truncated: median = -ln(1 - 0.5 (1 - e^-8)) / 8
        let expect = -(1.0 - 0.5 * (1.0 - (-8.0f64).exp())).ln() / 8.0;
        assert!((m as f64 - expect).abs() < 2e-3, "{m} vs {expect}");
    }

    #[test]
    fn transform_is_monotone() {
        let img = ramp(50, 20);
        let out = sar_like_transform(&img, &HistogramSpec::sar_like_default()).unwrap();
        let mut idx: Vec<usize> = (0..img.len()).collect();
        idx.sort_by(|&a, &b| img.values[a].total_cmp(&img.values[b]));
        for w in idx.windows(2) {
            assert!(out.values[w[0]] <= out.values[w[1]]);
        }
    }
}
