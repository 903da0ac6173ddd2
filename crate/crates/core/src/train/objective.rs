use alloc::vec::Vec;

use rand::Rng;

use super::{Dataset, Experiment, TrainConfig, TrainError};
use crate::autodiff::{AutodiffError, Bound, ParamId, ParameterSet, Tape, Tensor, Var};
use crate::gibbs::{fresh_orderings, hamiltonian_tape, sample_mask_tape, unpack_theta, GibbsConfig, GibbsNoise};
use crate::ising::{packed_len, IsingModel};
use crate::recon::{
    blur, blur_periodic, l1_loss_tape, shift_invariant_loss_tape, BlurKernel, Decoder, DecoderKind, Reduction,
};
use crate::vlbi::Complex64;

/// Sampler and decoder parameters trained together.
#[derive(Debug, Clone)]
pub struct Model {
    pub params: ParameterSet,
    /// Packed upper triangle of the Ising parameters.
    pub theta: ParamId,
    pub decoder: Decoder,
    pub gibbs: GibbsConfig,
}

impl Model {
    /// Zero `theta`, random decoder weights and fresh per-layer orderings.
    pub fn new<R: Rng + ?Sized>(experiment: &Experiment, config: &TrainConfig, rng: &mut R) -> Result<Self, TrainError> {
        let n = experiment.n_sites();
        let orderings = fresh_orderings(rng, n, config.gibbs_layers);
        let gibbs = GibbsConfig::new(n, config.gibbs_layers, config.s1, config.s2, orderings)?;
        let mut params = ParameterSet::new();
        let theta = params.insert("theta", Tensor::zeros(&[packed_len(n)]))?;
        let mut dcfg = config.decoder;
        dcfg.image_size = experiment.image_size;
        let layout = &experiment.layout;
        let decoder = Decoder::new(experiment.kind, dcfg, layout.len(), layout.n_vis(), &mut params, "dec.", rng)?;
        Ok(Self {
            params,
            theta,
            decoder,
            gibbs,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.gibbs.n()
    }

    pub fn ising(&self) -> IsingModel {
        IsingModel::from_packed(self.n_sites(), self.params.value(self.theta).data()).expect("packed length is fixed")
    }
}

/// Per-image quantities computed once before training.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub ideal: Vec<Vec<Complex64>>,
    /// Blurred truth images (periodic blur for decoder B).
    pub targets: Vec<Vec<f64>>,
    /// Packed inputs when the measurements carry no noise.
    pub clean: Option<Vec<Vec<f64>>>,
    pub kernel: BlurKernel,
}

impl Prepared {
    pub fn new(experiment: &Experiment, dataset: &Dataset, fraction: f64) -> Result<Self, TrainError> {
        if dataset.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        if dataset.size != experiment.image_size {
            return Err(TrainError::Config("dataset and experiment image sizes differ"));
        }
        let kernel = BlurKernel::for_grid(fraction, dataset.size)?;
        let ideal = experiment.ideal(&dataset.images)?;
        let targets = dataset
            .images
            .iter()
            .map(|img| match experiment.kind {
                DecoderKind::A => blur(img, dataset.size, &kernel),
                DecoderKind::B => blur_periodic(img, dataset.size, &kernel),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let clean = if experiment.is_noiseless() {
            let mut rng = crate::seeded_rng(0);
            Some(
                ideal
                    .iter()
                    .map(|v| experiment.measure(v, &mut rng))
                    .collect::<Result<Vec<_>, _>>()?,
            )
        } else {
            None
        };
        Ok(Self {
            ideal,
            targets,
            clean,
            kernel,
        })
    }

    pub fn len(&self) -> usize {
        self.ideal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ideal.is_empty()
    }

    /// Decoder input for image `i`, drawing fresh noise when needed.
    pub fn input<R: Rng + ?Sized>(&self, experiment: &Experiment, i: usize, rng: &mut R) -> Result<Vec<f64>, TrainError> {
        match &self.clean {
            Some(c) => Ok(c[i].clone()),
            None => experiment.measure(&self.ideal[i], rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub reduction: Reduction,
}

/// Scalar tape handles of the objective and its parts, each averaged over
/// the batch.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub similarity: Var,
    /// Mean `|M|_1`.
    pub sparsity: Var,
    /// Mean `H(X^(N))`.
    pub hamiltonian: Var,
    pub masks: Var,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    pub similarity: f64,
    pub sparsity: f64,
    pub hamiltonian: f64,
}

impl LossVars {
    pub fn values(&self, tape: &Tape) -> LossParts {
        LossParts {
            total: tape.value(self.total).item(),
            similarity: tape.value(self.similarity).item(),
            sparsity: tape.value(self.sparsity).item(),
            hamiltonian: tape.value(self.hamiltonian).item(),
        }
    }
}

/// `(1/B) sum_j [ s(z_hat_j, z_j) + lambda1 |M_j|_1 - lambda2 H(X_j) ]` with one
/// mask per image; `inputs` and `targets` are `[B, L]` and `[B, P]`.
#[allow(clippy::too_many_arguments)]
pub fn total_loss_tape(
    tape: &mut Tape,
    bound: &Bound,
    model: &Model,
    experiment: &Experiment,
    inputs: &Tensor,
    targets: &Tensor,
    noise: &[GibbsNoise],
    weights: &LossWeights,
) -> Result<LossVars, AutodiffError> {
    let b = noise.len();
    if inputs.shape()[0] != b || targets.shape()[0] != b {
        return Err(AutodiffError::InvalidArgument {
            op: "total_loss",
            reason: "batch sizes of inputs, targets and noise differ",
        });
    }
    let theta = unpack_theta(tape, bound.var(model.theta), model.n_sites())?;
    let (masks, states) = sample_mask_tape(tape, &theta, &model.gibbs, noise)?;
    let x = tape.constant(inputs.clone());
    let masked = experiment.layout.mask_tape(tape, masks, x)?;
    let recon = model.decoder.forward(tape, bound, masked)?;
    let sim = match experiment.kind {
        DecoderKind::A => l1_loss_tape(tape, recon, targets, weights.reduction)?,
        DecoderKind::B => shift_invariant_loss_tape(tape, recon, targets, experiment.image_size)?,
    };
    let sparsity = tape.sum(masks);
    let h = hamiltonian_tape(tape, &theta, states)?;
    let h = tape.sum(h);
    let reg1 = tape.scale(sparsity, weights.lambda1);
    let reg2 = tape.scale(h, -weights.lambda2);
    let total = tape.add(sim, reg1)?;
    let total = tape.add(total, reg2)?;
    let inv = 1.0 / b as f64;
    Ok(LossVars {
        total: tape.scale(total, inv),
        similarity: tape.scale(sim, inv),
        sparsity: tape.scale(sparsity, inv),
        hamiltonian: tape.scale(h, inv),
        masks,
    })
}
