use crate::data::TrainingMode;
use crate::error::{Error, Result};
use crate::speckle::Looks;

/// Optimizer schedule and data settings for one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    /// Epochs between learning-rate halvings.
    pub halve_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub patch: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub mode: TrainingMode,
    pub seed: u64,
    /// Look distribution of the training speckle.
    pub looks: Looks,
    /// Draw fresh speckle and a fresh order every epoch.
    pub reseed_each_epoch: bool,
    /// Stops after this many iterations even if epochs remain.
    pub max_iterations: Option<usize>,
}

impl TrainConfig {
    /// The full-size schedule: 16 epochs, batch 16, 112-pixel patches,
    /// learning rate 0.001 halved every three epochs.
    pub fn full_scale() -> Self {
        TrainConfig {
            lr0: 1e-3,
            halve_every: 3,
            epochs: 16,
            batch_size: 16,
            patch: 112,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            mode: TrainingMode::SelfSupervised,
            seed: 0,
            looks: Looks::Uniform { min: 1.0, max: 10.0 },
            reseed_each_epoch: true,
            max_iterations: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr0", self.lr0),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("eps", self.eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("`{name}` must be positive, got {v}")));
            }
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::config("Adam betas must lie in (0, 1)"));
        }
        let counts = [
            ("halve_every", self.halve_every),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("patch", self.patch),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::config(format!("`{name}` must be positive")));
            }
        }
        if self.max_iterations == Some(0) {
            return Err(Error::config("`max_iterations` must be positive"));
        }
        self.looks.validate()
    }
}

/// `lr0 * 0.5^floor(epoch / halve_every)` for a 0-based epoch.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    let halvings = (epoch / cfg.halve_every.max(1)).min(i32::MAX as usize) as i32;
    cfg.lr0 * 0.5f64.powi(halvings)
}
