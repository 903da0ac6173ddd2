//! Experiment configuration files (TOML, one flat table).

use std::fs;
use std::path::{Path, PathBuf};

use isingarray_core::recon::{Activation, DecoderConfig, DecoderKind, Reduction};
use isingarray_core::train::{derive_seed, AdamConfig, DataSource, Dataset, DatasetSpec, Experiment, TrainConfig};
use isingarray_core::vlbi::{NoiseConfig, Schedule, SiteTable, Target, ETA_PRESET, UAS};
use isingarray_core::seeded_rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::idx;

/// Stream index reserved for dataset generation, away from trial streams.
const DATA_STREAM: u64 = 0xDA7A;
const TEST_STREAM: u64 = 0x7E57;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetName {
    SgrA,
    M87,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrayName {
    EhtPlus,
    Future,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecoderChoice {
    #[serde(rename = "auto")]
    Auto,
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationName {
    Relu,
    Tanh,
    Softplus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionName {
    Sum,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic,
    Idx,
}

/// Everything that determines a run. Unknown keys are rejected; relative
/// paths are taken relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Base seed; drawn from entropy and recorded when absent.
    pub seed: Option<u64>,
    pub out: PathBuf,

    pub trials: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub fraction: f64,
    pub reduction: ReductionName,

    pub gibbs_layers: usize,
    pub s1: f64,
    pub s2: f64,

    pub noise_case: u8,
    /// Thermal scale; the preset is used for noisy cases when absent.
    pub eta: Option<f64>,
    pub target: TargetName,
    pub array: ArrayName,
    /// Replaces the bundled array when set.
    pub site_file: Option<PathBuf>,
    pub timestamps: usize,
    pub min_elevation_deg: f64,
    pub image_size: usize,
    pub fov_uas: f64,

    pub decoder: DecoderChoice,
    pub base_width: usize,
    pub depth: usize,
    pub activation: ActivationName,
    pub phase_hidden: usize,

    pub dataset: DatasetSource,
    pub dataset_count: usize,
    pub idx_path: Option<PathBuf>,
    pub rotate: bool,
    pub elastic: bool,
    pub elastic_amplitude: f64,

    pub mask_samples: usize,
    pub recon_samples: usize,
    /// `synthetic`, `point`, or a path to a CSV pixel grid.
    pub truth: String,

    pub lambda1_grid: Vec<f64>,
    pub lambda2_grid: Vec<f64>,
    pub fractions: Vec<f64>,
    pub test_count: usize,
    pub tau: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let d = DecoderConfig::default();
        Self {
            seed: None,
            out: PathBuf::from("run"),
            trials: t.trials,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.adam.learning_rate,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            adam_eps: t.adam.eps,
            lambda1: t.lambda1,
            lambda2: t.lambda2,
            fraction: t.fraction,
            reduction: ReductionName::Sum,
            gibbs_layers: t.gibbs_layers,
            s1: t.s1,
            s2: t.s2,
            noise_case: 1,
            eta: None,
            target: TargetName::SgrA,
            array: ArrayName::EhtPlus,
            site_file: None,
            timestamps: 24,
            min_elevation_deg: 10.0,
            image_size: 32,
            fov_uas: 100.0,
            decoder: DecoderChoice::Auto,
            base_width: d.base_width,
            depth: d.depth,
            activation: ActivationName::Relu,
            phase_hidden: d.phase_hidden,
            dataset: DatasetSource::Synthetic,
            dataset_count: 2000,
            idx_path: None,
            rotate: true,
            elastic: true,
            elastic_amplitude: 1.5,
            mask_samples: t.mask_samples,
            recon_samples: 100,
            truth: "synthetic".to_string(),
            lambda1_grid: vec![-0.05, -0.005, 0.005, 0.05],
            lambda2_grid: vec![0.005],
            fractions: vec![0.5, 0.75, 1.0],
            test_count: 200,
            tau: 0.04,
        }
    }
}

impl ExperimentConfig {
    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out);
        if let Some(p) = self.site_file.as_mut() {
            fix(p);
        }
        if let Some(p) = self.idx_path.as_mut() {
            fix(p);
        }
        if !matches!(self.truth.as_str(), "synthetic" | "point") {
            let mut p = PathBuf::from(&self.truth);
            fix(&mut p);
            self.truth = p.to_string_lossy().into_owned();
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fills in a missing seed from entropy and returns it.
    pub fn ensure_seed(&mut self) -> u64 {
        *self.seed.get_or_insert_with(rand::random)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::Config(msg.to_string())) };
        check((1..=6).contains(&self.noise_case), "noise_case must be 1 to 6")?;
        check(self.eta.is_none_or(|e| e >= 0.0 && e.is_finite()), "eta must be finite and nonnegative")?;
        check(self.timestamps >= 1, "timestamps must be at least 1")?;
        check(self.image_size >= 4, "image_size must be at least 4")?;
        check(self.fov_uas > 0.0, "fov_uas must be positive")?;
        check(self.dataset_count >= 1, "dataset_count must be at least 1")?;
        check(
            self.dataset == DatasetSource::Synthetic || self.idx_path.is_some(),
            "idx_path is required when dataset = \"idx\"",
        )?;
        check(self.recon_samples >= 1, "recon_samples must be at least 1")?;
        check(self.test_count >= 1, "test_count must be at least 1")?;
        check(self.elastic_amplitude >= 0.0, "elastic_amplitude must be nonnegative")?;
        self.train_config(0).validate()?;
        Ok(())
    }

    pub fn noise(&self) -> Result<NoiseConfig> {
        let eta = match self.eta {
            Some(e) => e,
            None if self.noise_case == 1 => 0.0,
            None => ETA_PRESET,
        };
        Ok(NoiseConfig::case(self.noise_case, eta)?)
    }

    /// The configured decoder, or the one matching the noise case.
    pub fn decoder_kind(&self) -> DecoderKind {
        match self.decoder {
            DecoderChoice::A => DecoderKind::A,
            DecoderChoice::B => DecoderKind::B,
            DecoderChoice::Auto if self.noise_case <= 3 => DecoderKind::A,
            DecoderChoice::Auto => DecoderKind::B,
        }
    }

    pub fn sites(&self) -> Result<SiteTable> {
        match &self.site_file {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                SiteTable::parse(&text).map_err(|e| Error::Sites {
                    path: path.clone(),
                    source: e,
                })
            }
            None => Ok(match self.array {
                ArrayName::EhtPlus => SiteTable::eht_plus(),
                ArrayName::Future => SiteTable::future(),
            }),
        }
    }

    pub fn target(&self) -> Target {
        match self.target {
            TargetName::SgrA => Target::sgr_a(),
            TargetName::M87 => Target::m87(),
        }
    }

    pub fn schedule(&self) -> Result<Schedule> {
        Ok(Schedule::uniform(self.timestamps, self.min_elevation_deg)?)
    }

    pub fn experiment(&self) -> Result<Experiment> {
        Ok(Experiment::new(
            self.sites()?,
            self.target(),
            &self.schedule()?,
            self.noise()?,
            self.decoder_kind(),
            self.image_size,
            self.fov_uas * UAS,
        )?)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.adam_eps,
            },
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            fraction: self.fraction,
            trials: self.trials,
            gibbs_layers: self.gibbs_layers,
            s1: self.s1,
            s2: self.s2,
            decoder: DecoderConfig {
                image_size: self.image_size,
                base_width: self.base_width,
                depth: self.depth,
                activation: match self.activation {
                    ActivationName::Relu => Activation::Relu,
                    ActivationName::Tanh => Activation::Tanh,
                    ActivationName::Softplus => Activation::Softplus,
                },
                phase_hidden: self.phase_hidden,
            },
            reduction: match self.reduction {
                ReductionName::Sum => Reduction::Sum,
                ReductionName::Mean => Reduction::Mean,
            },
            mask_samples: self.mask_samples,
        }
    }

    fn build_dataset(&self, count: usize, seed: u64, skip: usize) -> Result<Dataset> {
        let source = match self.dataset {
            DatasetSource::Synthetic => DataSource::Synthetic { count },
            DatasetSource::Idx => {
                let path = self.idx_path.as_ref().expect("validated");
                let images = idx::read_images(path, self.image_size)?;
                if images.len() <= skip {
                    return Err(Error::Config(format!("{} holds only {} images", path.display(), images.len())));
                }
                DataSource::Images(images.into_iter().skip(skip).take(count).collect())
            }
        };
        let spec = DatasetSpec {
            source,
            rotate: self.rotate,
            elastic: self.elastic,
            elastic_amplitude: self.elastic_amplitude,
        };
        Ok(Dataset::build(&spec, self.image_size, &mut seeded_rng(seed)))
    }

    /// Training images for `seed`.
    pub fn dataset(&self, seed: u64) -> Result<Dataset> {
        self.build_dataset(self.dataset_count, derive_seed(seed, DATA_STREAM), 0)
    }

    /// Held-out images: an independent synthetic stream, or the IDX images
    /// after the training ones.
    pub fn test_set(&self, seed: u64) -> Result<Dataset> {
        self.build_dataset(self.test_count, derive_seed(seed, TEST_STREAM), self.dataset_count)
    }
}
