//! Joint training of the Ising sampler and the reconstruction decoder, and
//! the experiment protocols built on it.

use alloc::vec::Vec;

mod adam;
mod data;
mod objective;
mod protocols;
mod run;

pub use adam::{Adam, AdamConfig};
pub use data::{augment, augment_with, normalize_flux, synthetic_image, AugmentOptions, DataSource, Dataset, DatasetSpec};
pub use objective::{total_loss_tape, LossParts, LossVars, LossWeights, Model, Prepared};
pub use protocols::{
    mask_count_stats, resolution_sweep, swap_eval, sweep_regularization, tune_lambda1, CountStats, ResolutionRow, SwapEntry,
    SweepCell,
};
pub use run::{
    derive_seed, reconstruction_stats, sample_masks, train_joint, train_model, train_trial, EpochLoss, RunArtifacts, TrialResult,
};

use crate::autodiff::AutodiffError;
use crate::gibbs::GibbsError;
use crate::recon::{DecoderConfig, DecoderKind, ReconError, Reduction};
use crate::vlbi::{
    uv_coverage, Complex64, DftMatrix, Layout, NoiseConfig, ObservationGeometry, PackMode, Schedule, SiteTable, Target,
    TriangleSet, VlbiError,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("non-finite loss in trial {trial} at step {step}")]
    Diverged { trial: usize, step: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Vlbi(#[from] VlbiError),
    #[error(transparent)]
    Recon(#[from] ReconError),
    #[error(transparent)]
    Gibbs(#[from] GibbsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Target resolution as a fraction of the nominal beam.
    pub fraction: f64,
    pub trials: usize,
    pub gibbs_layers: usize,
    pub s1: f64,
    pub s2: f64,
    pub decoder: DecoderConfig,
    /// Pixel reduction of the ℓ1 similarity (images are always summed over
    /// the batch and divided by the batch size).
    pub reduction: Reduction,
    /// Masks drawn after training for the selection statistics.
    pub mask_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.005,
            lambda2: 0.005,
            adam: AdamConfig::default(),
            epochs: 50,
            batch_size: 32,
            seed: 0,
            fraction: 0.75,
            trials: 5,
            gibbs_layers: 5,
            s1: 3.0,
            s2: 10.0,
            decoder: DecoderConfig::default(),
            reduction: Reduction::Sum,
            mask_samples: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |ok: bool, msg| if ok { Ok(()) } else { Err(TrainError::Config(msg)) };
        bad(self.adam.learning_rate > 0.0, "learning rate must be positive")?;
        bad(self.trials >= 1, "trials must be at least 1")?;
        bad(self.epochs >= 1, "epochs must be at least 1")?;
        bad(self.batch_size >= 1, "batch size must be at least 1")?;
        bad(self.fraction > 0.0, "resolution fraction must be positive")?;
        bad(self.gibbs_layers >= 1, "at least one Gibbs layer is required")?;
        bad(self.s1 > 0.0 && self.s2 > 0.0, "slopes must be positive")?;
        bad(self.lambda1.is_finite() && self.lambda2.is_finite(), "lambdas must be finite")?;
        Ok(())
    }
}

/// Everything fixed by the physical setup: sites, source, schedule, noise
/// model and the decoder input layout derived from them.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub sites: SiteTable,
    pub target: Target,
    pub noise: NoiseConfig,
    pub geometry: ObservationGeometry,
    pub triangles: TriangleSet,
    pub layout: Layout,
    pub dft: DftMatrix,
    pub image_size: usize,
    pub fov_rad: f64,
    pub kind: DecoderKind,
}

impl Experiment {
    /// Decoder A consumes complex visibilities, decoder B amplitudes and
    /// closure phases.
    pub fn new(
        sites: SiteTable,
        target: Target,
        schedule: &Schedule,
        noise: NoiseConfig,
        kind: DecoderKind,
        image_size: usize,
        fov_rad: f64,
    ) -> Result<Self, TrainError> {
        if sites.is_empty() {
            return Err(TrainError::Config("site table is empty"));
        }
        let geometry = uv_coverage(&sites, &target, schedule)?;
        let triangles = TriangleSet::new(&geometry);
        let mode = match kind {
            DecoderKind::A => PackMode::Complex,
            DecoderKind::B => PackMode::AmpClosure,
        };
        let layout = Layout::new(&geometry, &triangles, mode);
        if layout.n_vis() == 0 {
            return Err(TrainError::Config("no baseline is ever visible"));
        }
        let dft = DftMatrix::new(&geometry, image_size, fov_rad, layout.vis_slots().to_vec());
        Ok(Self {
            sites,
            target,
            noise,
            geometry,
            triangles,
            layout,
            dft,
            image_size,
            fov_rad,
            kind,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    /// Ideal visibilities of flattened images on the layout's slots.
    pub fn ideal(&self, images: &[Vec<f64>]) -> Result<Vec<Vec<Complex64>>, TrainError> {
        let flat: Vec<f64> = images.iter().flatten().copied().collect();
        Ok(self.dft.apply(&flat)?)
    }

    /// Noisy, unmasked decoder input for one image.
    pub fn measure<R: rand::Rng + ?Sized>(&self, ideal: &[Complex64], rng: &mut R) -> Result<Vec<f64>, TrainError> {
        let ms = crate::vlbi::corrupt(ideal, &self.geometry, &self.sites, &self.noise, rng)?;
        Ok(self.layout.pack(&ms, &self.geometry, &self.triangles)?)
    }

    pub fn is_noiseless(&self) -> bool {
        !self.noise.atmospheric && (self.noise.thermal == crate::vlbi::ThermalMode::None || self.noise.eta == 0.0)
    }
}
