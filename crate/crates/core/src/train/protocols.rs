use alloc::vec;
use alloc::vec::Vec;

use super::{derive_seed, sample_masks, train_joint, Dataset, Experiment, Model, RunArtifacts, TrainConfig, TrainError};
use crate::gibbs::{fresh_noise, mask_marginals, sample_mask, Mask};
use crate::recon::{shift_invariant_loss, BlurKernel};
use crate::seeded_rng;

/// Selection statistics over a set of masks (entries above 0.5 count as
/// selected).
#[derive(Debug, Clone, PartialEq)]
pub struct CountStats {
    pub mean: f64,
    /// `histogram[c]` is the number of masks selecting exactly `c` sites.
    pub histogram: Vec<usize>,
    /// Per-site selection frequency.
    pub marginals: Vec<f64>,
}

pub fn mask_count_stats(masks: &[Mask]) -> Option<CountStats> {
    let marginals = mask_marginals(masks)?;
    let n = marginals.len();
    let mut histogram = vec![0; n + 1];
    let mut total = 0usize;
    for m in masks {
        let c = m.count_selected();
        histogram[c] += 1;
        total += c;
    }
    Some(CountStats {
        mean: total as f64 / masks.len() as f64,
        histogram,
        marginals,
    })
}

/// Pools `per_trial` masks from every trial of a run.
fn run_count_stats(run: &RunArtifacts, per_trial: usize, seed: u64) -> Result<CountStats, TrainError> {
    let mut masks = Vec::new();
    for t in &run.trials {
        let mut rng = seeded_rng(derive_seed(seed, 1000 + t.trial as u64));
        masks.extend(sample_masks(&t.model, per_trial, &mut rng)?);
    }
    mask_count_stats(&masks).ok_or(TrainError::Config("no masks sampled"))
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub lambda1: f64,
    pub lambda2: f64,
    pub stats: CountStats,
    pub run: RunArtifacts,
}

/// Trains one run per `(lambda1, lambda2)` cell, row-major over
/// `lambda1s` then `lambda2s`, and summarizes `config.mask_samples` masks
/// per trial.
pub fn sweep_regularization(
    experiment: &Experiment,
    dataset: &Dataset,
    config: &TrainConfig,
    lambda1s: &[f64],
    lambda2s: &[f64],
) -> Result<Vec<SweepCell>, TrainError> {
    let mut cells = Vec::with_capacity(lambda1s.len() * lambda2s.len());
    for &lambda1 in lambda1s {
        for &lambda2 in lambda2s {
            let cfg = TrainConfig {
                lambda1,
                lambda2,
                ..config.clone()
            };
            let run = train_joint(experiment, dataset, &cfg)?;
            let stats = run_count_stats(&run, config.mask_samples, config.seed)?;
            cells.push(SweepCell {
                lambda1,
                lambda2,
                stats,
                run,
            });
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone)]
pub struct ResolutionRow {
    pub fraction: f64,
    pub run: RunArtifacts,
}

impl ResolutionRow {
    /// Mean activity of site `j`.
    pub fn activity(&self, j: usize) -> f64 {
        self.run.mean(j, j)
    }
}

pub fn resolution_sweep(
    experiment: &Experiment,
    dataset: &Dataset,
    config: &TrainConfig,
    fractions: &[f64],
) -> Result<Vec<ResolutionRow>, TrainError> {
    fractions
        .iter()
        .map(|&fraction| {
            let cfg = TrainConfig {
                fraction,
                ..config.clone()
            };
            Ok(ResolutionRow {
                fraction,
                run: train_joint(experiment, dataset, &cfg)?,
            })
        })
        .collect()
}

/// A trained model together with the experiment it was trained under.
#[derive(Debug, Clone, Copy)]
pub struct SwapEntry<'a> {
    pub experiment: &'a Experiment,
    pub model: &'a Model,
}

/// Entry `(i, j)` is the mean shift-invariant loss of decoder `i`, fed
/// measurements from experiment `i` masked by draws from sampler `j`,
/// over `images`. All entries must share the site count.
pub fn swap_eval(entries: &[SwapEntry<'_>], images: &[Vec<f64>], fraction: f64, seed: u64) -> Result<Vec<Vec<f64>>, TrainError> {
    let n = entries.first().map_or(0, |e| e.model.n_sites());
    if entries.iter().any(|e| e.model.n_sites() != n) {
        return Err(TrainError::Config("swap entries must share the site count"));
    }
    if images.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut out = vec![vec![0.0; entries.len()]; entries.len()];
    for (i, ei) in entries.iter().enumerate() {
        let size = ei.experiment.image_size;
        let kernel = BlurKernel::for_grid(fraction, size)?;
        let ideal = ei.experiment.ideal(images)?;
        for (j, ej) in entries.iter().enumerate() {
            let mut rng = seeded_rng(derive_seed(seed, (i * entries.len() + j) as u64));
            let ising = ej.model.ising();
            let mut inputs = Vec::with_capacity(images.len() * ei.experiment.layout.len());
            for v in &ideal {
                let noise = fresh_noise(&mut rng, n, ej.model.gibbs.num_layers);
                let (mask, _) = sample_mask(&ising, &ej.model.gibbs, &noise)?;
                let packed = ei.experiment.measure(v, &mut rng)?;
                inputs.extend(ei.experiment.layout.apply_mask(mask.values(), &packed)?);
            }
            let recons = ei.model.decoder.decode(&ei.model.params, &inputs)?;
            let mut total = 0.0;
            for (r, z) in recons.iter().zip(images) {
                total += shift_invariant_loss(r, z, size, &kernel)?;
            }
            out[i][j] = total / images.len() as f64;
        }
    }
    Ok(out)
}

/// Bisects `lambda1` in `[lo, hi]` until the pooled mean selected count is
/// within `tolerance` of `target_count`. Counts are assumed to fall as
/// `lambda1` grows. Returns the last tried value, its run and its counts.
#[allow(clippy::too_many_arguments)]
pub fn tune_lambda1(
    experiment: &Experiment,
    dataset: &Dataset,
    config: &TrainConfig,
    target_count: f64,
    tolerance: f64,
    mut lo: f64,
    mut hi: f64,
    max_iters: usize,
) -> Result<(f64, RunArtifacts, CountStats), TrainError> {
    if !(lo < hi) || max_iters == 0 {
        return Err(TrainError::Config("lambda1 bracket must be non-empty"));
    }
    let mut best = None;
    for _ in 0..max_iters {
        let lambda1 = 0.5 * (lo + hi);
        let cfg = TrainConfig {
            lambda1,
            ..config.clone()
        };
        let run = train_joint(experiment, dataset, &cfg)?;
        let stats = run_count_stats(&run, config.mask_samples, config.seed)?;
        let diff = stats.mean - target_count;
        let done = diff.abs() <= tolerance;
        if diff > 0.0 {
            lo = lambda1;
        } else {
            hi = lambda1;
        }
        best = Some((lambda1, run, stats));
        if done {
            break;
        }
    }
    Ok(best.expect("at least one iteration"))
}
