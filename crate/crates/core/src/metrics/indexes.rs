//! Full-reference and no-reference quality indexes. All arithmetic is f64.

use crate::data::ImageRaster;
use crate::error::{Error, Result};

use super::region::Region;

pub const PSNR_CAP_DB: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const EPD_EPS: f64 = 1e-12;

fn same_shape(a: &ImageRaster, b: &ImageRaster) -> Result<()> {
    if (a.width, a.height) != (b.width, b.height) || a.values.len() != b.values.len() {
        return Err(Error::config(format!(
            "image shapes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// `10 log10(peak^2 / MSE)`, capped at 99 dB.
pub fn psnr(reference: &ImageRaster, test: &ImageRaster, peak: f64) -> Result<f64> {
    same_shape(reference, test)?;
    if !(peak > 0.0) {
        return Err(Error::Domain(format!("peak must be positive, got {peak}")));
    }
    let sse: f64 = reference
        .values
        .iter()
        .zip(&test.values)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    let mse = sse / reference.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

fn gaussian_taps() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let raw: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filtering of a row-major `w x h` plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let n = taps.len();
    let (wo, ho) = (w - n + 1, h - n + 1);
    let mut rows = vec![0.0; wo * h];
    for y in 0..h {
        for x in 0..wo {
            rows[y * wo + x] = taps.iter().enumerate().map(|(k, t)| t * plane[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; wo * ho];
    for y in 0..ho {
        for x in 0..wo {
            out[y * wo + x] = taps.iter().enumerate().map(|(k, t)| t * rows[(y + k) * wo + x]).sum();
        }
    }
    out
}

/// Mean SSIM over all fully contained 11x11 Gaussian windows, dynamic
/// range 1.
pub fn ssim(reference: &ImageRaster, test: &ImageRaster) -> Result<f64> {
    ssim_with_range(reference, test, 1.0)
}

pub fn ssim_with_range(reference: &ImageRaster, test: &ImageRaster, range: f64) -> Result<f64> {
    same_shape(reference, test)?;
    let (w, h) = (reference.width, reference.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Geometry(format!(
            "{w}x{h} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let x: Vec<f64> = reference.values.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = test.values.iter().map(|&v| v as f64).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
    let taps = gaussian_taps();
    let [mx, my, sxx, syy, sxy] = [&x, &y, &xx, &yy, &xy].map(|p| filter_valid(p, w, h, &taps));
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}

/// Equivalent number of looks `mean^2 / s^2` with the unbiased variance.
pub fn enl(image: &ImageRaster, region: &Region) -> Result<f64> {
    let v = region.values(image)?;
    if v.len() < 2 {
        return Err(Error::Geometry(format!("ENL needs at least 2 pixels, region {region} has {}", v.len())));
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Err(Error::DegenerateRegion(format!("degenerate region {region}: zero variance")));
    }
    Ok(mean * mean / var)
}

fn max_over_mean(image: &ImageRaster, patch: &Region, label: &str) -> Result<f64> {
    let v = patch.values(image)?;
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    if !(mean > 0.0) {
        return Err(Error::Domain(format!("{label} patch {patch} has nonpositive mean {mean}")));
    }
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(max / mean)
}

/// Absolute change in dB of the max/mean ratio of a point-target patch.
pub fn tcr(speckled: &ImageRaster, despeckled: &ImageRaster, patch: &Region) -> Result<f64> {
    same_shape(speckled, despeckled)?;
    let d = max_over_mean(despeckled, patch, "despeckled")?;
    let s = max_over_mean(speckled, patch, "speckled")?;
    Ok((20.0 * d.log10() - 20.0 * s.log10()).abs())
}

/// Sums of `|E_H / E_V|`, `|E_H|` and `|E_V|` over the pixels of `region`
/// that have both a right and a lower neighbour inside it, where
/// `E_H = I(r,c) / I(r,c+1)` and `E_V = I(r,c) / I(r+1,c)`.
fn edge_ratio_sums(image: &ImageRaster, region: &Region) -> (f64, f64, f64) {
    let (mut hv, mut h_sum, mut v_sum) = (0.0, 0.0, 0.0);
    let px = |x: usize, y: usize| image.values[y * image.width + x] as f64;
    for y in region.y0..region.y0 + region.height - 1 {
        for x in region.x0..region.x0 + region.width - 1 {
            let c = px(x, y);
            let eh = c / (px(x + 1, y) + EPD_EPS);
            let ev = c / (px(x, y + 1) + EPD_EPS);
            hv += (eh / (ev + EPD_EPS)).abs();
            h_sum += eh.abs();
            v_sum += ev.abs();
        }
    }
    (hv, h_sum, v_sum)
}

fn epd_prepare(speckled: &ImageRaster, despeckled: &ImageRaster, region: &Region) -> Result<()> {
    same_shape(speckled, despeckled)?;
    region.check(speckled)?;
    if region.width < 2 || region.height < 2 {
        return Err(Error::Geometry(format!("EPD-ROA needs a region of at least 2x2, got {region}")));
    }
    Ok(())
}

/// Edge-preservation degree: the horizontal-over-vertical adjacent-ratio
/// sum of the despeckled region divided by that of the speckled region.
pub fn epd_roa(speckled: &ImageRaster, despeckled: &ImageRaster, region: &Region) -> Result<f64> {
    epd_prepare(speckled, despeckled, region)?;
    let (d, _, _) = edge_ratio_sums(despeckled, region);
    let (s, _, _) = edge_ratio_sums(speckled, region);
    if s == 0.0 {
        return Err(Error::DegenerateRegion(format!("speckled region {region} has no edge ratio mass")));
    }
    Ok(d / s)
}

/// Per-direction form: `(sum |E_DH| / sum |E_SH|, sum |E_DV| / sum |E_SV|)`.
pub fn epd_roa_directional(speckled: &ImageRaster, despeckled: &ImageRaster, region: &Region) -> Result<(f64, f64)> {
    epd_prepare(speckled, despeckled, region)?;
    let (_, dh, dv) = edge_ratio_sums(despeckled, region);
    let (_, sh, sv) = edge_ratio_sums(speckled, region);
    if sh == 0.0 || sv == 0.0 {
        return Err(Error::DegenerateRegion(format!("speckled region {region} has no edge ratio mass")));
    }
    Ok((dh / sh, dv / sv))
}

/// Mean of ratio: despeckled region mean over speckled region mean.
pub fn mor(speckled: &ImageRaster, despeckled: &ImageRaster, region: &Region) -> Result<f64> {
    same_shape(speckled, despeckled)?;
    let s = region.values(speckled)?;
    let d = region.values(despeckled)?;
    let ms = s.iter().sum::<f64>() / s.len() as f64;
    if ms == 0.0 {
        return Err(Error::Domain(format!("speckled region {region} has zero mean")));
    }
    Ok(d.iter().sum::<f64>() / d.len() as f64 / ms)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, f: impl Fn(usize, usize) -> f32) -> ImageRaster {
        ImageRaster::new(w, h, (0..w * h).map(|i| f(i % w, i / w)).collect()).unwrap()
    }

    fn textured(seed: u32) -> ImageRaster {
        img(16, 14, |x, y| 0.2 + 0.5 * (((x * 7 + y * 13 + seed as usize * 5) % 11) as f32 / 11.0))
    }

    #[test]
    fn psnr_examples() {
        let a = ImageRaster::filled(4, 4, 0.5).unwrap();
        let b = ImageRaster::filled(4, 4, 0.25).unwrap();
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), 99.0);
        assert!((psnr(&a, &b, 1.0).unwrap() - 12.041199826559248).abs() < 1e-9);
        assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
        assert!(psnr(&a, &ImageRaster::filled(4, 3, 0.5).unwrap(), 1.0).is_err());
        assert!(psnr(&a, &b, 0.0).is_err());
    }

    #[test]
    fn ssim_examples() {
        let t = textured(1);
        assert_eq!(ssim(&t, &t).unwrap(), 1.0);
        let one = ImageRaster::filled(12, 12, 1.0).unwrap();
        let zero = ImageRaster::filled(12, 12, 0.0).unwrap();
        let c1 = 1e-4;
        assert!((ssim(&one, &zero).unwrap() - c1 / (1.0 + c1)).abs() < 1e-12);
        let u = textured(2);
        assert!((ssim(&t, &u).unwrap() - ssim(&u, &t).unwrap()).abs() < 1e-15);
        assert!(matches!(ssim(&ImageRaster::filled(10, 20, 1.0).unwrap(), &ImageRaster::filled(10, 20, 1.0).unwrap()), Err(Error::Geometry(_))));
    }

    #[test]
    fn enl_examples() {
        let r = img(3, 1, |x, _| x as f32 + 1.0);
        assert!((enl(&r, &Region::whole(&r)).unwrap() - 4.0).abs() < 1e-12);
        let c = ImageRaster::filled(5, 5, 2.0).unwrap();
        assert!(matches!(enl(&c, &Region::whole(&c)), Err(Error::DegenerateRegion(_))));
        assert!(enl(&r, &Region::new(0, 0, 1, 1)).is_err());
    }

    #[test]
    fn tcr_examples() {
        let s = textured(3);
        let p = Region::new(2, 2, 5, 5);
        assert_eq!(tcr(&s, &s, &p).unwrap(), 0.0);
        // ratio max/mean = 4 on the speckled side, 2 on the despeckled side
        let spk = img(2, 2, |x, y| if x + y == 0 { 4.0 } else { 0.0 });
        let dsp = img(2, 2, |x, y| if x + y == 0 { 1.0 } else { 1.0 / 3.0 });
        let want = 20.0 * 2f64.log10();
        let got = tcr(&spk, &dsp, &Region::whole(&spk)).unwrap();
        assert!((got - want).abs() < 1e-6, "{got}");
        let zero = ImageRaster::filled(2, 2, 0.0).unwrap();
        assert!(tcr(&zero, &zero, &Region::whole(&zero)).is_err());
    }

    #[test]
    fn epd_and_mor_identities() {
        let s = textured(4);
        let r = Region::new(1, 1, 10, 9);
        assert_eq!(epd_roa(&s, &s, &r).unwrap(), 1.0);
        assert_eq!(epd_roa_directional(&s, &s, &r).unwrap(), (1.0, 1.0));
        let doubled = img(16, 14, |x, y| 2.0 * s.get(x, y));
        assert!((epd_roa(&s, &doubled, &r).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(mor(&s, &s, &r).unwrap(), 1.0);
        let bright = img(16, 14, |x, y| 1.1 * s.get(x, y));
        assert!((mor(&s, &bright, &r).unwrap() - 1.1).abs() < 1e-6);
        assert!(epd_roa(&s, &s, &Region::new(0, 0, 1, 5)).is_err());
        let zero = ImageRaster::filled(3, 3, 0.0).unwrap();
        assert!(mor(&zero, &s.crop(0, 0, 3, 3).unwrap(), &Region::whole(&zero)).is_err());
    }
}
