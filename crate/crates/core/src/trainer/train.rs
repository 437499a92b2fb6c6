use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use crate::data::{build_pair_stream, ImageRaster, PairStreamConfig, PatchDataset, Provenance};
use crate::error::{Error, Result};
use crate::metrics::psnr;
use crate::network::{save_model, Model};
use crate::numerics::{AdamConfig, Real, Tape, Tensor, Var};
use crate::rng::{self, tag};
use crate::speckle::{speckle_realization, Looks, PairRole, SpeckleSpec};

use super::config::{lr_schedule, TrainConfig};
use super::inference::{despeckle, DEFAULT_TILE};
use super::state::{save_state, TrainState};

/// Mean squared difference of two equally shaped tensors.
pub fn n2n_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    if pred.shape() != target.shape() {
        return Err(Error::config(format!(
            "loss operands differ in shape: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let sum: T = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    Ok(sum / T::of(pred.len() as f64))
}

/// The same loss recorded on a tape.
pub fn n2n_loss_on_tape<T: Real>(tape: &mut Tape<T>, pred: Var, target: Var) -> Result<Var> {
    let diff = tape.sub(pred, target)?;
    let sq = tape.square(diff);
    Ok(tape.mean(sq))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub validation_psnr: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub iterations: Vec<IterationRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    /// `iteration,epoch,lr,loss`, one row per iteration.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,epoch,lr,loss\n");
        for r in &self.iterations {
            let _ = writeln!(out, "{},{},{:e},{:.9e}", r.iteration, r.epoch, r.lr, r.loss);
        }
        out
    }

    /// `epoch,lr,validation_psnr`, one row per epoch.
    pub fn epochs_csv(&self) -> String {
        let mut out = String::from("epoch,lr,validation_psnr\n");
        for e in &self.epochs {
            let v = e.validation_psnr.map_or_else(|| "NA".into(), |v| format!("{v:.6}"));
            let _ = writeln!(out, "{},{:e},{}", e.epoch, e.lr, v);
        }
        out
    }

    /// Wall-clock seconds per epoch. Kept apart from the other logs so
    /// those stay reproducible byte for byte.
    pub fn timing_csv(&self) -> String {
        let mut out = String::from("epoch,seconds\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{:.3}", e.epoch, e.seconds);
        }
        out
    }

    /// Mean loss over iterations `range`.
    pub fn mean_loss(&self, range: std::ops::Range<usize>) -> f64 {
        let s = &self.iterations[range];
        s.iter().map(|r| r.loss).sum::<f64>() / s.len() as f64
    }
}

/// Clean images with fixed speckled observations for per-epoch reporting.
/// Never used for optimization.
#[derive(Debug, Clone)]
pub struct ValidationSet {
    pub clean: Vec<ImageRaster>,
    pub speckled: Vec<ImageRaster>,
}

impl ValidationSet {
    pub fn new(clean: Vec<ImageRaster>, looks: Looks, seed: u64) -> Result<Self> {
        let speckled = clean
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let spec = SpeckleSpec::new(looks, rng::derive_seed(seed, tag::VALIDATION, &[i as u64]))?;
                let y = speckle_realization(&x.values, &spec, PairRole::Input)?;
                Ok(ImageRaster::new(x.width, x.height, y.values)?.with_provenance(Provenance::Speckled))
            })
            .collect::<Result<_>>()?;
        Ok(ValidationSet { clean, speckled })
    }

    /// Mean despeckled-vs-clean PSNR over the set.
    pub fn mean_psnr<T: Real>(&self, model: &Model<T>) -> Result<f64> {
        let mut total = 0.0;
        for (x, y) in self.clean.iter().zip(&self.speckled) {
            total += psnr(x, &despeckle(model, y, DEFAULT_TILE)?, 1.0)?;
        }
        Ok(total / self.clean.len().max(1) as f64)
    }
}

/// Adam training of a model on a patch dataset.
pub struct Trainer<'a> {
    dataset: &'a PatchDataset,
    cfg: TrainConfig,
    checkpoint_dir: Option<PathBuf>,
    validation: Option<&'a ValidationSet>,
}

/// Trains with default options: no checkpoints, no validation.
pub fn train(dataset: &PatchDataset, model: Model<f32>, cfg: &TrainConfig) -> Result<(Model<f32>, TrainLog)> {
    Trainer::new(dataset, cfg.clone())?.run(model)
}

impl<'a> Trainer<'a> {
    pub fn new(dataset: &'a PatchDataset, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if dataset.is_empty() {
            return Err(Error::config("training dataset is empty"));
        }
        if dataset.patch() != cfg.patch {
            return Err(Error::config(format!(
                "dataset patches are {} pixels, config expects {}",
                dataset.patch(),
                cfg.patch
            )));
        }
        Ok(Trainer {
            dataset,
            cfg,
            checkpoint_dir: None,
            validation: None,
        })
    }

    /// Writes `epoch_NNN.bdsm` and `state.bdst` into `dir` after every epoch.
    pub fn with_checkpoints(mut self, dir: impl Into<PathBuf>) -> Self {
        self.checkpoint_dir = Some(dir.into());
        self
    }

    pub fn with_validation(mut self, set: &'a ValidationSet) -> Self {
        self.validation = Some(set);
        self
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn iterations_per_epoch(&self) -> usize {
        self.dataset.len().div_ceil(self.cfg.batch_size)
    }

    fn pair_config(&self) -> PairStreamConfig {
        PairStreamConfig {
            looks: self.cfg.looks,
            mode: self.cfg.mode,
            noise_seed: rng::derive_seed(self.cfg.seed, tag::NOISE, &[]),
            order_seed: rng::derive_seed(self.cfg.seed, tag::ORDER, &[]),
            reseed_each_epoch: self.cfg.reseed_each_epoch,
        }
    }

    pub fn run(&self, model: Model<f32>) -> Result<(Model<f32>, TrainLog)> {
        self.resume(TrainState::new(model))
    }

    /// Continues from `state` to the configured end.
    pub fn resume(&self, state: TrainState) -> Result<(Model<f32>, TrainLog)> {
        let s = self.run_until(state, self.cfg.epochs)?;
        Ok((s.model, s.log))
    }

    fn finished(&self, state: &TrainState) -> bool {
        self.cfg.max_iterations.is_some_and(|m| state.iteration >= m)
    }

    /// Trains until `epoch_limit` epochs are complete (capped by the
    /// configured epoch count).
    pub fn run_until(&self, mut state: TrainState, epoch_limit: usize) -> Result<TrainState> {
        if state.model.params().len() != state.adam.first_moment.len() {
            return Err(Error::config("optimizer state does not match the model"));
        }
        if let Some(dir) = &self.checkpoint_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let pair_cfg = self.pair_config();
        let patch = self.cfg.patch;
        while state.epochs_done < epoch_limit.min(self.cfg.epochs) && !self.finished(&state) {
            let epoch = state.epochs_done;
            let started = Instant::now();
            let lr = lr_schedule(epoch, &self.cfg);
            let adam_cfg = AdamConfig {
                lr,
                beta1: self.cfg.beta1,
                beta2: self.cfg.beta2,
                eps: self.cfg.eps,
            };
            let mut stream = build_pair_stream(self.dataset, pair_cfg, epoch).peekable();
            while stream.peek().is_some() && !self.finished(&state) {
                let mut inputs = Vec::with_capacity(self.cfg.batch_size * patch * patch);
                let mut targets = Vec::with_capacity(inputs.capacity());
                let mut n = 0;
                for pair in stream.by_ref().take(self.cfg.batch_size) {
                    let pair = pair?;
                    inputs.extend_from_slice(&pair.input);
                    targets.extend_from_slice(&pair.target);
                    n += 1;
                }
                let shape = [n, 1, patch, patch];
                let loss = self.step(&mut state, Tensor::new(&shape, inputs)?, Tensor::new(&shape, targets)?, &adam_cfg)?;
                state.log.iterations.push(IterationRecord {
                    iteration: state.iteration,
                    epoch,
                    lr,
                    loss,
                });
                state.iteration += 1;
            }
            let validation_psnr = match self.validation {
                Some(v) => Some(v.mean_psnr(&state.model)?),
                None => None,
            };
            state.epochs_done += 1;
            state.log.epochs.push(EpochRecord {
                epoch,
                lr,
                validation_psnr,
                seconds: started.elapsed().as_secs_f64(),
            });
            log::info!(
                "epoch {epoch}: lr {lr:e}, mean loss {:.6e}{}",
                state.log.iterations.iter().rev().take_while(|r| r.epoch == epoch).map(|r| r.loss).sum::<f64>()
                    / self.iterations_per_epoch() as f64,
                validation_psnr.map_or_else(String::new, |p| format!(", validation PSNR {p:.3} dB"))
            );
            if let Some(dir) = &self.checkpoint_dir {
                save_model(dir.join(format!("epoch_{epoch:03}.bdsm")), &state.model)?;
                save_state(dir.join("state.bdst"), &state)?;
            }
        }
        Ok(state)
    }

    fn step(&self, state: &mut TrainState, input: Tensor<f32>, target: Tensor<f32>, adam_cfg: &AdamConfig) -> Result<f64> {
        let mut tape = Tape::new();
        let params = state.model.register(&mut tape);
        let x = tape.constant(input);
        let t = tape.constant(target);
        let pred = state.model.forward_on_tape(&mut tape, &params, x)?;
        let loss_var = n2n_loss_on_tape(&mut tape, pred, t)?;
        let loss = tape.value(loss_var).data()[0] as f64;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: state.iteration,
                lr: adam_cfg.lr,
                loss,
            });
        }
        tape.backward(loss_var)?;
        let grads: Vec<Tensor<f32>> = params
            .iter()
            .zip(state.model.params())
            .map(|(&v, p)| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect();
        state.adam.step(state.model.params_mut(), &grads, adam_cfg)?;
        Ok(loss)
    }
}
