//! Resumable training state.
//!
//! File layout: `"BDST"`, u32 version, u32 epochs done, u64 iteration,
//! u64 Adam step count, the model body as in a `BDSM` checkpoint, the first
//! and second moment tensors, then the log (u32 count and per iteration
//! u64 index, u32 epoch, f64 lr, f64 loss; u32 count and per epoch u32
//! epoch, f64 lr, u32 has-validation flag, f64 PSNR). Wall-clock times are
//! not stored so that reruns produce identical files.

use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{read_model_body, write_model_body, Model, Reader, Writer};
use crate::numerics::{AdamState, Tensor};

use super::train::{EpochRecord, IterationRecord, TrainLog};

pub const STATE_MAGIC: &[u8; 4] = b"BDST";
pub const STATE_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: Model<f32>,
    pub adam: AdamState<f32>,
    pub epochs_done: usize,
    pub iteration: usize,
    pub log: TrainLog,
}

impl TrainState {
    pub fn new(model: Model<f32>) -> Self {
        let adam = AdamState::new(model.params());
        TrainState {
            model,
            adam,
            epochs_done: 0,
            iteration: 0,
            log: TrainLog::default(),
        }
    }
}

fn f64_of(r: &mut Reader, what: &str) -> Result<f64> {
    Ok(f64::from_bits(r.u64(what)?))
}

pub fn encode_state(s: &TrainState) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(STATE_MAGIC);
    w.u32(STATE_VERSION as usize);
    w.u32(s.epochs_done);
    w.u64(s.iteration as u64);
    w.u64(s.adam.step_count);
    write_model_body(&mut w, &s.model);
    for t in s.adam.first_moment.iter().chain(&s.adam.second_moment) {
        w.tensor(t);
    }
    w.u32(s.log.iterations.len());
    for r in &s.log.iterations {
        w.u64(r.iteration as u64);
        w.u32(r.epoch);
        w.u64(r.lr.to_bits());
        w.u64(r.loss.to_bits());
    }
    w.u32(s.log.epochs.len());
    for e in &s.log.epochs {
        w.u32(e.epoch);
        w.u64(e.lr.to_bits());
        w.u32(e.validation_psnr.is_some() as usize);
        w.u64(e.validation_psnr.unwrap_or(0.0).to_bits());
    }
    w.buf
}

pub fn decode_state(bytes: &[u8]) -> Result<TrainState> {
    let mut r = Reader::new(bytes);
    r.magic(STATE_MAGIC)?;
    let version = r.u32("version")?;
    if version != STATE_VERSION as usize {
        return Err(Error::parse(4, format!("unsupported training state version {version}")));
    }
    let epochs_done = r.u32("epochs done")?;
    let iteration = r.u64("iteration")? as usize;
    let step_count = r.u64("Adam step count")?;
    let model: Model<f32> = read_model_body(&mut r)?;
    let n = model.params().len();
    let mut moments = (0..2 * n).map(|_| r.tensor()).collect::<Result<Vec<Tensor<f32>>>>()?;
    let second_moment = moments.split_off(n);
    for (i, (m, p)) in moments.iter().chain(&second_moment).zip(model.params().iter().cycle()).enumerate() {
        if m.shape() != p.shape() {
            return Err(Error::config(format!("Adam moment {i} has shape {:?}, expected {:?}", m.shape(), p.shape())));
        }
    }
    let mut log = TrainLog::default();
    for _ in 0..r.u32("iteration count")? {
        log.iterations.push(IterationRecord {
            iteration: r.u64("iteration")? as usize,
            epoch: r.u32("epoch")?,
            lr: f64_of(&mut r, "lr")?,
            loss: f64_of(&mut r, "loss")?,
        });
    }
    for _ in 0..r.u32("epoch count")? {
        let epoch = r.u32("epoch")?;
        let lr = f64_of(&mut r, "lr")?;
        let has = r.u32("validation flag")? != 0;
        let v = f64_of(&mut r, "validation PSNR")?;
        log.epochs.push(EpochRecord {
            epoch,
            lr,
            validation_psnr: has.then_some(v),
            seconds: 0.0,
        });
    }
    r.finish()?;
    Ok(TrainState {
        model,
        adam: AdamState {
            first_moment: moments,
            second_moment,
            step_count,
        },
        epochs_done,
        iteration,
        log,
    })
}

pub fn save_state(path: impl AsRef<Path>, state: &TrainState) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_state(state)).map_err(|e| Error::io(path, e))
}

pub fn load_state(path: impl AsRef<Path>) -> Result<TrainState> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_state(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ImageRaster, PatchDataset};
    use crate::network::{encode_model, ModelConfig};
    use crate::trainer::{TrainConfig, Trainer};

    #[test]
    fn resume_matches_uninterrupted_run() {
        let patches = (0..6)
            .map(|i| ImageRaster::new(16, 16, (0..256).map(|v| 0.1 + ((v * 7 + i) % 13) as f32 / 20.0).collect()).unwrap())
            .collect();
        let ds = PatchDataset::from_patches(patches).unwrap();
        let cfg = TrainConfig {
            epochs: 4,
            halve_every: 2,
            batch_size: 4,
            patch: 16,
            seed: 8,
            ..TrainConfig::full_scale()
        };
        let model = Model::build(ModelConfig::scaled(8).unwrap(), 2).unwrap();
        let trainer = Trainer::new(&ds, cfg).unwrap();
        let (full, full_log) = trainer.run(model.clone()).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let half = Trainer::new(&ds, trainer.config().clone())
            .unwrap()
            .with_checkpoints(dir.path())
            .run_until(TrainState::new(model), 2)
            .unwrap();
        assert_eq!(half.epochs_done, 2);
        assert!(dir.path().join("epoch_001.bdsm").exists());
        let restored = load_state(dir.path().join("state.bdst")).unwrap();
        assert_eq!(restored.iteration, 4);
        let (resumed, log) = trainer.resume(restored).unwrap();
        assert_eq!(encode_model(&resumed), encode_model(&full));
        assert_eq!(log.to_csv(), full_log.to_csv());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let s = TrainState::new(Model::build(ModelConfig::scaled(8).unwrap(), 2).unwrap());
        let mut bytes = encode_state(&s);
        let back = decode_state(&bytes).unwrap();
        assert_eq!(back.model.params(), s.model.params());
        bytes[3] = b'M';
        assert!(decode_state(&bytes).unwrap_err().to_string().contains("bad magic"));
    }
}
