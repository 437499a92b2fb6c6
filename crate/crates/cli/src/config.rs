//! Run configuration: a TOML file with one section per pipeline stage.
//!
//! Every key has a default, so an empty file (or no file) is valid. Command
//! line flags are applied on top of the file. The resolved configuration is
//! written next to each command's outputs as `config.toml`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ssdespeckle::data::{HistogramSpec, TrainingMode};
use ssdespeckle::network::ModelConfig;
use ssdespeckle::speckle::Looks;
use ssdespeckle::trainer::{TrainConfig, DEFAULT_TILE};

use crate::error::{CliError, CliResult};

pub const ECHO_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    /// Worker threads, 0 for one per core.
    pub threads: usize,
    pub out: PathBuf,
    pub speckle: SpeckleSection,
    pub model: ModelSection,
    pub trainer: TrainerSection,
    pub data: DataSection,
    pub inference: InferenceSection,
    pub metrics: MetricsSection,
}

/// Either a fixed look count (`looks = 4`) or an interval sampled
/// uniformly per image (`looks = [1, 10]`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LooksSetting {
    Fixed(f64),
    Interval([f64; 2]),
}

impl LooksSetting {
    pub fn to_looks(self) -> Looks {
        match self {
            LooksSetting::Fixed(l) => Looks::Fixed(l),
            LooksSetting::Interval([min, max]) => Looks::Uniform { min, max },
        }
    }
}

impl std::str::FromStr for LooksSetting {
    type Err = String;

    /// `4` or `1:10`.
    fn from_str(s: &str) -> Result<Self, String> {
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("invalid number of looks `{t}`"));
        let setting = match s.split_once(':') {
            Some((a, b)) => LooksSetting::Interval([num(a)?, num(b)?]),
            None => LooksSetting::Fixed(num(s)?),
        };
        setting.to_looks().validate().map_err(|e| e.to_string())?;
        Ok(setting)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeckleSection {
    pub looks: LooksSetting,
}

impl Default for SpeckleSection {
    fn default() -> Self {
        SpeckleSection {
            looks: LooksSetting::Interval([1.0, 10.0]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Divides every channel count of the full-size network; must divide 16.
    pub scale_factor: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { scale_factor: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ModeSetting {
    #[default]
    SelfSupervised,
    Supervised,
}

impl From<ModeSetting> for TrainingMode {
    fn from(m: ModeSetting) -> Self {
        match m {
            ModeSetting::SelfSupervised => TrainingMode::SelfSupervised,
            ModeSetting::Supervised => TrainingMode::Supervised,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSection {
    pub lr0: f64,
    pub halve_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub mode: ModeSetting,
    pub reseed_each_epoch: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
}

impl Default for TrainerSection {
    fn default() -> Self {
        let t = TrainConfig::full_scale();
        TrainerSection {
            lr0: t.lr0,
            halve_every: t.halve_every,
            epochs: t.epochs,
            batch_size: t.batch_size,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            mode: ModeSetting::SelfSupervised,
            reseed_each_epoch: t.reseed_each_epoch,
            max_iterations: t.max_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub patch: usize,
    pub stride: usize,
    /// Match each training image's histogram to `histogram` (or the bundled
    /// single-look target) before cutting patches.
    pub sar_like: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histogram: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            patch: 112,
            stride: 112,
            sar_like: true,
            histogram: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSection {
    pub tile: usize,
    /// Also write an 8-bit PGM next to each despeckled raster.
    pub preview: bool,
}

impl Default for InferenceSection {
    fn default() -> Self {
        InferenceSection {
            tile: DEFAULT_TILE,
            preview: false,
        }
    }
}

pub const ALL_INDEXES: [&str; 6] = ["psnr", "ssim", "enl", "mor", "epd_roa", "tcr"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    /// Region spec used for pairs that do not name their own.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regions: Option<PathBuf>,
    /// Indexes to report; each must be computable for every pair.
    pub indexes: Vec<String>,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            regions: None,
            indexes: ALL_INDEXES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: 0,
            out: PathBuf::from("out"),
            speckle: SpeckleSection::default(),
            model: ModelSection::default(),
            trainer: TrainerSection::default(),
            data: DataSection::default(),
            inference: InferenceSection::default(),
            metrics: MetricsSection::default(),
        }
    }
}

fn anchor(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::usage(format!("invalid configuration: {e}")))
    }

    /// Reads a config file. Relative input paths inside it are taken
    /// relative to the file's directory; `out` stays relative to the
    /// working directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        anchor(base, &mut cfg.data.histogram);
        anchor(base, &mut cfg.metrics.regions);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::usage(format!("cannot serialize configuration: {e}")))
    }

    /// Checks every section so that bad settings fail before any work.
    pub fn validate(&self) -> CliResult<()> {
        // TOML integers are signed 64-bit, so larger seeds could not be echoed.
        if self.seed > i64::MAX as u64 {
            return Err(CliError::usage(format!("seed {} exceeds {}", self.seed, i64::MAX)));
        }
        self.speckle.looks.to_looks().validate()?;
        self.model_config()?;
        self.train_config().validate()?;
        if self.data.stride == 0 {
            return Err(CliError::usage("data.stride must be positive"));
        }
        if self.inference.tile == 0 {
            return Err(CliError::usage("inference.tile must be positive"));
        }
        for name in &self.metrics.indexes {
            if !ALL_INDEXES.contains(&name.as_str()) {
                return Err(CliError::usage(format!(
                    "unknown index `{name}` in metrics.indexes, expected one of {}",
                    ALL_INDEXES.join(", ")
                )));
            }
        }
        Ok(())
    }

    pub fn model_config(&self) -> CliResult<ModelConfig> {
        Ok(match self.model.scale_factor {
            1 => ModelConfig::full_scale(),
            f => ModelConfig::scaled(f)?,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.trainer;
        TrainConfig {
            lr0: t.lr0,
            halve_every: t.halve_every,
            epochs: t.epochs,
            batch_size: t.batch_size,
            patch: self.data.patch,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            mode: t.mode.into(),
            seed: self.seed,
            looks: self.speckle.looks.to_looks(),
            reseed_each_epoch: t.reseed_each_epoch,
            max_iterations: t.max_iterations,
        }
    }

    pub fn histogram_target(&self) -> CliResult<Option<HistogramSpec>> {
        if !self.data.sar_like {
            return Ok(None);
        }
        Ok(Some(match &self.data.histogram {
            Some(p) => HistogramSpec::load(p)?,
            None => HistogramSpec::sar_like_default(),
        }))
    }

    /// Creates the output directory and writes the resolved configuration.
    pub fn echo(&self) -> CliResult<()> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", self.out.display())))?;
        let path = self.out.join(ECHO_FILE);
        std::fs::write(&path, self.to_toml()?)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.speckle.looks = LooksSetting::Fixed(4.0);
        cfg.trainer.max_iterations = Some(10);
        cfg.metrics.regions = Some("r.txt".into());
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn sections_and_looks_forms() {
        let cfg = RunConfig::parse(
            "seed = 9\n[speckle]\nlooks = [2, 5]\n[model]\nscale_factor = 8\n[trainer]\nmode = \"supervised\"\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.speckle.looks.to_looks(), Looks::Uniform { min: 2.0, max: 5.0 });
        assert_eq!(cfg.train_config().mode, TrainingMode::Supervised);
        assert_eq!(cfg.model_config().unwrap(), ModelConfig::scaled(8).unwrap());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::parse("[trainer]\nlearning_rate = 1\n").is_err());
        assert!(RunConfig::parse("[trainer]\nmode = \"other\"\n").is_err());
        let cfg = RunConfig::parse("[model]\nscale_factor = 3\n").unwrap();
        assert_eq!(cfg.validate().unwrap_err().code, 2);
        let cfg = RunConfig::parse("[metrics]\nindexes = [\"snr\"]\n").unwrap();
        assert!(cfg.validate().unwrap_err().message.contains("snr"));
    }

    #[test]
    fn looks_flag_syntax() {
        assert_eq!("4".parse::<LooksSetting>().unwrap(), LooksSetting::Fixed(4.0));
        assert_eq!("1:10".parse::<LooksSetting>().unwrap(), LooksSetting::Interval([1.0, 10.0]));
        assert!("0.5".parse::<LooksSetting>().is_err());
        assert!("x".parse::<LooksSetting>().is_err());
    }
}
