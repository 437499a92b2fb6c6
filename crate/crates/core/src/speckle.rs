//! Multiplicative Gamma speckle and self-supervised training pairs.
//!
//! An `L`-look intensity observation is `y = n * x`, where `n` follows a
//! Gamma law with shape `L` and rate `L` (unit mean, variance `1/L`).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{self, tag, StreamRng};

/// Number-of-looks distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Looks {
    Fixed(f64),
    /// Continuous uniform draw from `[min, max]`.
    Uniform { min: f64, max: f64 },
}

impl Looks {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Looks::Fixed(l) if l >= 1.0 && l.is_finite() => Ok(()),
            Looks::Fixed(l) => Err(Error::Domain(format!("number of looks must be >= 1, got {l}"))),
            Looks::Uniform { min, max } if min >= 1.0 && max >= min && max.is_finite() => Ok(()),
            Looks::Uniform { min, max } => Err(Error::Domain(format!(
                "look interval [{min}, {max}] must be nonempty with min >= 1"
            ))),
        }
    }

    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        match *self {
            Looks::Fixed(l) => l,
            Looks::Uniform { min, max } => {
                let u: f64 = rng.random();
                (min + (max - min) * u).min(max)
            }
        }
    }
}

impl std::fmt::Display for Looks {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Looks::Fixed(l) => write!(f, "{l}"),
            Looks::Uniform { min, max } => write!(f, "[{min}, {max}]"),
        }
    }
}

/// Looks distribution plus the seed that drives all noise synthesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeckleSpec {
    pub looks: Looks,
    pub seed: u64,
}

impl SpeckleSpec {
    pub fn new(looks: Looks, seed: u64) -> Result<Self> {
        looks.validate()?;
        Ok(SpeckleSpec { looks, seed })
    }

    pub fn fixed(looks: f64, seed: u64) -> Result<Self> {
        Self::new(Looks::Fixed(looks), seed)
    }

    pub fn uniform(min: f64, max: f64, seed: u64) -> Result<Self> {
        Self::new(Looks::Uniform { min, max }, seed)
    }

    /// Same looks distribution on a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        SpeckleSpec { seed, ..*self }
    }
}

/// Realized speckle multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField {
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
    pub looks_used: f64,
}

/// Draws `Gamma(shape = looks, rate = looks)` by the Marsaglia–Tsang
/// squeeze/rejection method (valid for `looks >= 1`).
pub fn gamma_unit_mean(rng: &mut StreamRng, looks: f64) -> f64 {
    let d = looks - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u: f64 = rng.random();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v / looks;
        }
    }
}

fn fill_noise(rng: &mut StreamRng, looks: f64, len: usize) -> Vec<f32> {
    (0..len).map(|_| gamma_unit_mean(rng, looks) as f32).collect()
}

/// Draws the number of looks from `spec` (a fixed spec returns its value).
pub fn sample_looks(spec: &SpeckleSpec) -> f64 {
    spec.looks.sample(&mut rng::substream(spec.seed, tag::LOOKS, &[]))
}

/// I.i.d. unit-mean Gamma multipliers for a tensor of the given shape.
pub fn sample_speckle(shape: &[usize], spec: &SpeckleSpec) -> Result<NoiseField> {
    spec.looks.validate()?;
    let len: usize = shape.iter().product();
    if shape.is_empty() || len == 0 {
        return Err(Error::config("speckle needs a nonempty shape"));
    }
    let looks = sample_looks(spec);
    let mut rng = rng::substream(spec.seed, tag::NOISE, &[]);
    Ok(NoiseField {
        shape: shape.to_vec(),
        values: fill_noise(&mut rng, looks, len),
        looks_used: looks,
    })
}

fn check_intensity(x: &[f32]) -> Result<()> {
    match x.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::Domain(format!(
            "intensity must be finite and non-negative, pixel {i} is {}",
            x[i]
        ))),
    }
}

/// `y = n * x`, elementwise, without clipping.
pub fn apply_speckle(x: &[f32], noise: &NoiseField) -> Result<Vec<f32>> {
    if x.len() != noise.values.len() {
        return Err(Error::config(format!(
            "image has {} pixels, noise field {}",
            x.len(),
            noise.values.len()
        )));
    }
    check_intensity(x)?;
    Ok(x.iter().zip(&noise.values).map(|(&x, &n)| n * x).collect())
}

/// One speckled observation of a clean image.
#[derive(Debug, Clone, PartialEq)]
pub struct Speckled {
    pub values: Vec<f32>,
    pub looks: f64,
}

/// Which member of a training pair a realization belongs to. Each role
/// reads its own substream of the spec seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairRole {
    Input,
    Target,
}

/// A single speckled realization of `x` on the substream for `role`.
///
/// With an interval looks spec, the realization draws its own `L`.
pub fn speckle_realization(x: &[f32], spec: &SpeckleSpec, role: PairRole) -> Result<Speckled> {
    spec.looks.validate()?;
    check_intensity(x)?;
    let t = match role {
        PairRole::Input => tag::PAIR_INPUT,
        PairRole::Target => tag::PAIR_TARGET,
    };
    let mut rng = rng::substream(spec.seed, t, &[]);
    let looks = spec.looks.sample(&mut rng);
    let values = x
        .iter()
        .map(|&v| gamma_unit_mean(&mut rng, looks) as f32 * v)
        .collect();
    Ok(Speckled { values, looks })
}

/// Two independent speckled observations `(y, y')` of the same clean image.
pub fn make_training_pair(x: &[f32], spec: &SpeckleSpec) -> Result<(Speckled, Speckled)> {
    Ok((
        speckle_realization(x, spec, PairRole::Input)?,
        speckle_realization(x, spec, PairRole::Target)?,
    ))
}
