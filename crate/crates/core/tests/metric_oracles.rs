//! Quality indexes against direct, unoptimized evaluations of their
//! defining formulas.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssdespeckle::data::ImageRaster;
use ssdespeckle::metrics::{enl, epd_roa, epd_roa_directional, mor, psnr, ssim, tcr, Region};
use ssdespeckle::Error;

const TOL: f64 = 1e-9;

fn random_image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> ImageRaster {
    ImageRaster::new(w, h, (0..w * h).map(|_| rng.random_range(0.01f32..1.0)).collect()).unwrap()
}

fn px(img: &ImageRaster, x: usize, y: usize) -> f64 {
    img.values[y * img.width + x] as f64
}

fn region_pixels(img: &ImageRaster, r: &Region) -> Vec<f64> {
    let mut v = Vec::new();
    for y in r.y0..r.y0 + r.height {
        for x in r.x0..r.x0 + r.width {
            v.push(px(img, x, y));
        }
    }
    v
}

fn random_region(img: &ImageRaster, min: usize, rng: &mut ChaCha8Rng) -> Region {
    let w = rng.random_range(min..=img.width);
    let h = rng.random_range(min..=img.height);
    Region::new(rng.random_range(0..=img.width - w), rng.random_range(0..=img.height - h), w, h)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL * b.abs().max(1.0)
}

fn psnr_direct(a: &ImageRaster, b: &ImageRaster) -> f64 {
    let mse = a.values.iter().zip(&b.values).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        99.0
    } else {
        (10.0 * (1.0 / mse).log10()).min(99.0)
    }
}

/// SSIM with a full 2-D 11x11 Gaussian window evaluated at every fully
/// contained position, no separability.
fn ssim_direct(a: &ImageRaster, b: &ImageRaster) -> f64 {
    let mut g = [[0.0f64; 11]; 11];
    let mut total = 0.0;
    for (i, row) in g.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut sum = 0.0;
    let mut count = 0;
    for y0 in 0..=a.height - 11 {
        for x0 in 0..=a.width - 11 {
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let w = g[i][j] / total;
                    mx += w * px(a, x0 + j, y0 + i);
                    my += w * px(b, x0 + j, y0 + i);
                }
            }
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let w = g[i][j] / total;
                    let (dx, dy) = (px(a, x0 + j, y0 + i) - mx, px(b, x0 + j, y0 + i) - my);
                    vx += w * dx * dx;
                    vy += w * dy * dy;
                    cov += w * dx * dy;
                }
            }
            sum += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    sum / count as f64
}

fn enl_direct(img: &ImageRaster, r: &Region) -> f64 {
    let v = region_pixels(img, r);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    mean * mean / var
}

fn tcr_direct(s: &ImageRaster, d: &ImageRaster, r: &Region) -> f64 {
    let ratio = |img: &ImageRaster| {
        let v = region_pixels(img, r);
        let max = v.iter().cloned().fold(f64::MIN, f64::max);
        max / (v.iter().sum::<f64>() / v.len() as f64)
    };
    (20.0 * ratio(d).log10() - 20.0 * ratio(s).log10()).abs()
}

/// `sum |E_H / E_V|` over pixels whose right and lower neighbours lie in
/// the region, with a 1e-12 guard in every denominator.
fn roa_sums(img: &ImageRaster, r: &Region) -> (f64, f64, f64) {
    let eps = 1e-12;
    let (mut hv, mut h, mut v) = (0.0, 0.0, 0.0);
    for y in r.y0..r.y0 + r.height - 1 {
        for x in r.x0..r.x0 + r.width - 1 {
            let eh = px(img, x, y) / (px(img, x + 1, y) + eps);
            let ev = px(img, x, y) / (px(img, x, y + 1) + eps);
            hv += (eh / (ev + eps)).abs();
            h += eh.abs();
            v += ev.abs();
        }
    }
    (hv, h, v)
}

fn mor_direct(s: &ImageRaster, d: &ImageRaster, r: &Region) -> f64 {
    let mean = |img: &ImageRaster| {
        let v = region_pixels(img, r);
        v.iter().sum::<f64>() / v.len() as f64
    };
    mean(d) / mean(s)
}

#[test]
fn indexes_match_direct_formulas_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..100 {
        let (w, h) = (rng.random_range(11..30), rng.random_range(11..30));
        let s = random_image(w, h, &mut rng);
        let d = random_image(w, h, &mut rng);
        let r = random_region(&s, 2, &mut rng);

        let checks = [
            ("psnr", psnr(&s, &d, 1.0).unwrap(), psnr_direct(&s, &d)),
            ("ssim", ssim(&s, &d).unwrap(), ssim_direct(&s, &d)),
            ("enl", enl(&d, &r).unwrap(), enl_direct(&d, &r)),
            ("tcr", tcr(&s, &d, &r).unwrap(), tcr_direct(&s, &d, &r)),
            ("epd_roa", epd_roa(&s, &d, &r).unwrap(), roa_sums(&d, &r).0 / roa_sums(&s, &r).0),
            ("mor", mor(&s, &d, &r).unwrap(), mor_direct(&s, &d, &r)),
        ];
        for (name, got, want) in checks {
            assert!(close(got, want), "case {case}: {name} = {got}, direct {want}");
        }
        let (eh, ev) = epd_roa_directional(&s, &d, &r).unwrap();
        let (ds, ss) = (roa_sums(&d, &r), roa_sums(&s, &r));
        assert!(close(eh, ds.1 / ss.1) && close(ev, ds.2 / ss.2), "case {case}: directional");
    }
}

#[test]
fn identity_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_image(24, 20, &mut rng);
    let r = Region::new(3, 2, 12, 10);
    assert_eq!(psnr(&x, &x, 1.0).unwrap(), 99.0);
    assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    let flat = ImageRaster::filled(24, 20, 0.3).unwrap();
    assert!(matches!(enl(&flat, &r), Err(Error::DegenerateRegion(_))));
    assert_eq!(tcr(&x, &x, &r).unwrap(), 0.0);
    assert_eq!(epd_roa(&x, &x, &r).unwrap(), 1.0);
    assert_eq!(mor(&x, &x, &r).unwrap(), 1.0);
}

fn image_strategy() -> impl Strategy<Value = (ImageRaster, ImageRaster)> {
    (11usize..20, 11usize..20).prop_flat_map(|(w, h)| {
        (
            prop::collection::vec(0.01f32..1.0, w * h),
            prop::collection::vec(0.01f32..1.0, w * h),
        )
            .prop_map(move |(a, b)| (ImageRaster::new(w, h, a).unwrap(), ImageRaster::new(w, h, b).unwrap()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn psnr_and_ssim_are_symmetric_and_bounded((a, b) in image_strategy()) {
        prop_assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
        prop_assert!(psnr(&a, &b, 1.0).unwrap() <= 99.0);
        let s = ssim(&a, &b).unwrap();
        prop_assert!((s - ssim(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((-1.0..=1.0 + 1e-12).contains(&s));
    }

    #[test]
    fn enl_is_scale_invariant((a, _) in image_strategy(), k in 0.1f32..8.0) {
        let r = Region::whole(&a);
        let scaled = ImageRaster::new(a.width, a.height, a.values.iter().map(|v| v * k).collect()).unwrap();
        let (e1, e2) = (enl(&a, &r).unwrap(), enl(&scaled, &r).unwrap());
        prop_assert!((e1 - e2).abs() <= 1e-4 * e1);
    }

    #[test]
    fn mor_tracks_a_global_gain((a, _) in image_strategy(), k in 0.1f32..4.0) {
        let r = Region::whole(&a);
        let scaled = ImageRaster::new(a.width, a.height, a.values.iter().map(|v| v * k).collect()).unwrap();
        prop_assert!((mor(&a, &scaled, &r).unwrap() - k as f64).abs() < 1e-5 * k as f64);
        // a global gain leaves the max/mean ratio and the adjacent ratios alone
        prop_assert!(tcr(&a, &scaled, &r).unwrap() < 1e-4);
        prop_assert!((epd_roa(&a, &scaled, &r).unwrap() - 1.0).abs() < 1e-5);
    }
}
