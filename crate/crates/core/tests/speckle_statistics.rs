//! Distributional checks of the Gamma speckle generator.

use ssdespeckle::metrics::{enl, Region};
use ssdespeckle::data::ImageRaster;
use ssdespeckle::rng::{substream, tag};
use ssdespeckle::speckle::{gamma_unit_mean, sample_speckle, speckle_realization, PairRole, SpeckleSpec};

/// CDF of Gamma(shape L, rate L) for integer L:
/// `1 - exp(-Lx) * sum_{k<L} (Lx)^k / k!`.
fn gamma_cdf(x: f64, looks: u32) -> f64 {
    let z = looks as f64 * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..looks {
        term *= z / k as f64;
        sum += term;
    }
    1.0 - (-z).exp() * sum
}

fn ks_statistic(mut samples: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn samples_follow_the_gamma_law() {
    for (looks, n) in [(1u32, 1_000_000usize), (2, 200_000), (4, 200_000)] {
        let mut rng = substream(77, tag::NOISE, &[looks as u64]);
        let samples: Vec<f64> = (0..n).map(|_| gamma_unit_mean(&mut rng, looks as f64)).collect();
        let d = ks_statistic(samples, |x| gamma_cdf(x, looks));
        // 0.01 is far outside sampling noise (about 1.6/sqrt(n) at 1%).
        let bound = if looks == 1 { 0.01 } else { 1.63 / (n as f64).sqrt() };
        assert!(d < bound, "L = {looks}: KS distance {d} >= {bound}");
    }
}

#[test]
fn moments_match_unit_mean_and_inverse_look_variance() {
    for looks in [1.0, 2.0, 4.0, 8.0] {
        let spec = SpeckleSpec::fixed(looks, 5).unwrap();
        let n = 1_000_000;
        let noise = sample_speckle(&[n], &spec).unwrap();
        let v: Vec<f64> = noise.values.iter().map(|&x| x as f64).collect();
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // standard error of the sample variance: sqrt((mu4 - sigma^4) / n),
        // with mu4 = 3/L^2 + 6/L^3 for Gamma(L, L)
        let mu4 = 3.0 / looks.powi(2) + 6.0 / looks.powi(3);
        let se = ((mu4 - 1.0 / looks.powi(2)) / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 0.005, "L = {looks}: mean {mean}");
        assert!((var - 1.0 / looks).abs() < 3.0 * se, "L = {looks}: variance {var}, se {se}");
    }
}

#[test]
fn averaged_target_realizations_recover_the_clean_value() {
    let x = vec![0.5f32; 16];
    let mut acc = vec![0.0f64; 16];
    let reps = 10_000;
    for i in 0..reps {
        let spec = SpeckleSpec::uniform(1.0, 10.0, 1000 + i).unwrap();
        let y = speckle_realization(&x, &spec, PairRole::Target).unwrap();
        for (a, v) in acc.iter_mut().zip(&y.values) {
            *a += *v as f64;
        }
    }
    for a in acc {
        assert!((a / reps as f64 - 0.5).abs() < 0.005, "pixel mean {}", a / reps as f64);
    }
}

#[test]
fn enl_of_simulated_speckle_is_close_to_looks() {
    for looks in [1.0, 2.0, 4.0, 8.0, 16.0] {
        let x = vec![0.4f32; 100 * 100];
        let spec = SpeckleSpec::fixed(looks, 31).unwrap();
        let y = speckle_realization(&x, &spec, PairRole::Input).unwrap();
        let img = ImageRaster::new(100, 100, y.values).unwrap();
        let e = enl(&img, &Region::whole(&img)).unwrap();
        assert!((e / looks - 1.0).abs() < 0.05, "L = {looks}: ENL {e}");
    }
}
