//! The operations behind each subcommand. Every function writes its outputs
//! under the configured output directory and returns what it computed.

use std::fs;
use std::path::{Path, PathBuf};

use isingarray_core::gibbs::GibbsConfig;
use isingarray_core::ising::{CliqueReport, IsingModel};
use isingarray_core::seeded_rng;
use isingarray_core::train::{
    derive_seed, mask_count_stats, reconstruction_stats, resolution_sweep, sample_masks, swap_eval, sweep_regularization,
    synthetic_image, train_joint, CountStats, Experiment, Model, ResolutionRow, RunArtifacts, SwapEntry, SweepCell,
};
use isingarray_core::vlbi::{amplitude, closure_phases, corrupt, phase, Image};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::formats::{
    nums, read_params, read_text, read_theta, strings, write_csv, write_grid, write_params, write_png, write_text,
    write_theta,
};

const TRUTH_STREAM: u64 = 0x7407;
const RECON_STREAM: u64 = 0x2EC0;
const MASK_STREAM: u64 = 1000;
const SWAP_STREAM: u64 = 0x5A4B;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// `theta_trial_1.csv` is the first trial.
pub fn trial_file(dir: &Path, stem: &str, trial: usize, ext: &str) -> PathBuf {
    dir.join(format!("{stem}_trial_{}.{ext}", trial + 1))
}

/// Resolves the `truth` setting to pixels.
pub fn truth_image(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<f64>> {
    let size = cfg.image_size;
    match cfg.truth.as_str() {
        "synthetic" => Ok(synthetic_image(size, &mut seeded_rng(derive_seed(seed, TRUTH_STREAM)))),
        "point" => Ok(Image::point(size, cfg.fov_uas * isingarray_core::vlbi::UAS, size / 2, size / 2, 1.0).into_pixels()),
        path => {
            let path = Path::new(path);
            let (s, px) = crate::formats::read_grid(path)?;
            if s != size {
                return Err(Error::format(path, format!("{s}x{s} grid, but image_size is {size}")));
            }
            if px.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(Error::format(path, "pixels must be finite and nonnegative"));
            }
            Ok(px)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOutput {
    pub uv_rows: usize,
    pub measurement_rows: usize,
    pub closure_rows: usize,
}

/// uv coverage, simulated measurements and closure phases of the truth
/// image under the configured noise.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<SimulateOutput> {
    let mut cfg = cfg.clone();
    let seed = cfg.ensure_seed();
    cfg.validate()?;
    let exp = cfg.experiment()?;
    let dir = cfg.out.clone();
    create_dir(&dir)?;
    let truth = truth_image(&cfg, seed)?;
    let g = &exp.geometry;
    let names = exp.sites.names();

    let path = dir.join("uv_coverage.csv");
    let mut uv_rows = Vec::new();
    for t in 0..g.n_times() {
        for &(p, q) in g.pairs() {
            if g.visible(t, p, q) {
                let [u, v] = g.uv(t, p, q);
                let mut row = vec![t.to_string(), crate::formats::num(&path, g.gst_hours()[t])?];
                row.extend([names[p].to_string(), names[q].to_string()]);
                row.extend(nums(&path, &[u, v])?);
                uv_rows.push(row);
            }
        }
    }
    let uv_count = uv_rows.len();
    write_csv(&path, &strings(&["t", "gst_hours", "p", "q", "u_lambda", "v_lambda"]), uv_rows)?;

    let ideal = exp.ideal(std::slice::from_ref(&truth))?.remove(0);
    let mut rng = seeded_rng(derive_seed(seed, 0));
    let ms = corrupt(&ideal, g, &exp.sites, &exp.noise, &mut rng)?;
    let path = dir.join("measurements.csv");
    let mut rows = Vec::new();
    for (i, &slot) in ms.slots.iter().enumerate() {
        let (t, p, q) = g.slot_info(slot);
        let [u, v] = g.slot_uv(slot);
        let vis = ms.vis[i];
        let mut row = vec![t.to_string(), names[p].to_string(), names[q].to_string()];
        row.extend(nums(&path, &[u, v, vis.re, vis.im, amplitude(vis), phase(vis), ms.sigma[i]])?);
        rows.push(row);
    }
    let measurement_rows = rows.len();
    write_csv(
        &path,
        &strings(&["t", "p", "q", "u_lambda", "v_lambda", "re_jy", "im_jy", "amplitude_jy", "phase_rad", "sigma_jy"]),
        rows,
    )?;

    let path = dir.join("closure_phases.csv");
    let mut rows = Vec::new();
    for (tr, cp) in exp.triangles.triangles().iter().zip(closure_phases(&ms, g, &exp.triangles)) {
        if let Some(c) = cp {
            let [r, q, b] = tr.sites;
            let mut row = vec![tr.t.to_string()];
            row.extend([r, q, b].map(|s| names[s].to_string()));
            row.push(crate::formats::num(&path, c)?);
            rows.push(row);
        }
    }
    let closure_rows = rows.len();
    write_csv(&path, &strings(&["t", "r", "q", "b", "closure_phase_rad"]), rows)?;

    write_grid(&dir.join("truth.csv"), cfg.image_size, &truth)?;
    write_png(&dir.join("truth.png"), cfg.image_size, &truth)?;
    write_text(&dir.join("config.toml"), &cfg.to_toml()?)?;
    write_text(&dir.join("README.md"), SIMULATE_README)?;
    Ok(SimulateOutput {
        uv_rows: uv_count,
        measurement_rows,
        closure_rows,
    })
}

#[derive(Serialize)]
struct Metadata {
    command: String,
    version: String,
    seed: u64,
    trials: usize,
    sites: Vec<String>,
    final_total_loss: Vec<f64>,
    final_similarity: Vec<f64>,
    mean_selected: f64,
}

fn write_metadata(dir: &Path, meta: &Metadata) -> Result<()> {
    if meta.final_total_loss.iter().chain(&meta.final_similarity).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            path: dir.join("metadata.toml"),
        });
    }
    let text = toml::to_string(meta).map_err(|e| Error::Config(e.to_string()))?;
    write_text(&dir.join("metadata.toml"), &text)
}

/// Masks drawn from every trial with the per-trial mask streams.
fn trial_masks(run: &RunArtifacts, count: usize, seed: u64) -> Result<Vec<Vec<isingarray_core::gibbs::Mask>>> {
    run.trials
        .iter()
        .map(|t| {
            let mut rng = seeded_rng(derive_seed(seed, MASK_STREAM + t.trial as u64));
            Ok(sample_masks(&t.model, count, &mut rng)?)
        })
        .collect()
}

fn write_count_stats(dir: &Path, names: &[String], stats: &CountStats) -> Result<()> {
    let path = dir.join("marginals.csv");
    let rows = names
        .iter()
        .zip(&stats.marginals)
        .map(|(n, &m)| Ok(vec![n.clone(), crate::formats::num(&path, m)?]))
        .collect::<Result<Vec<_>>>()?;
    write_csv(&path, &strings(&["site", "selection_frequency"]), rows)?;
    let rows = stats.histogram.iter().enumerate().map(|(c, &k)| vec![c.to_string(), k.to_string()]);
    write_csv(&dir.join("count_histogram.csv"), &strings(&["selected", "masks"]), rows)
}

/// Writes every artifact of a finished run into `dir`.
pub fn write_run(cfg: &ExperimentConfig, exp: &Experiment, run: &RunArtifacts, dir: &Path, command: &str) -> Result<()> {
    let seed = cfg.seed.expect("seed resolved before training");
    create_dir(dir)?;
    let names = &run.site_names;
    let n = names.len();
    for t in &run.trials {
        write_theta(&trial_file(dir, "theta", t.trial, "csv"), names, &t.theta_matrix())?;
        write_params(&trial_file(dir, "params", t.trial, "bin"), &t.model.params)?;
        let rows = t.model.gibbs.orderings.iter().map(|o| strings(o));
        let header: Vec<String> = (0..n).map(|i| format!("position_{i}")).collect();
        write_csv(&trial_file(dir, "orderings", t.trial, "csv"), &header, rows)?;
    }
    write_theta(&dir.join("theta_mean.csv"), names, &run.theta_mean)?;
    write_theta(&dir.join("theta_std.csv"), names, &run.theta_std)?;

    let path = dir.join("loss_history.csv");
    let mut rows = Vec::new();
    for t in &run.trials {
        for e in &t.history {
            let p = &e.parts;
            let mut row = vec![(t.trial + 1).to_string(), (e.epoch + 1).to_string()];
            row.extend(nums(&path, &[p.total, p.similarity, p.sparsity, p.hamiltonian])?);
            rows.push(row);
        }
    }
    write_csv(&path, &strings(&["trial", "epoch", "total", "similarity", "sparsity", "hamiltonian"]), rows)?;

    let masks = trial_masks(run, cfg.mask_samples, seed)?;
    let path = dir.join("masks_sample.csv");
    let mut header = vec!["trial".to_string()];
    header.extend(names.iter().cloned());
    let mut rows = Vec::new();
    for (t, ms) in masks.iter().enumerate() {
        for m in ms {
            let mut row = vec![(t + 1).to_string()];
            row.extend(nums(&path, m.values())?);
            rows.push(row);
        }
    }
    write_csv(&path, &header, rows)?;
    let pooled: Vec<_> = masks.into_iter().flatten().collect();
    let stats = mask_count_stats(&pooled).ok_or_else(|| Error::Config("mask_samples must be positive".into()))?;
    write_count_stats(dir, names, &stats)?;

    let truth = truth_image(cfg, seed)?;
    let first = &run.trials[0].model;
    let mut rng = seeded_rng(derive_seed(seed, RECON_STREAM));
    let (mean, std) = reconstruction_stats(first, exp, &truth, cfg.recon_samples, &mut rng)?;
    let size = cfg.image_size;
    write_grid(&dir.join("truth.csv"), size, &truth)?;
    write_png(&dir.join("truth.png"), size, &truth)?;
    write_grid(&dir.join("recon_mean.csv"), size, &mean)?;
    write_png(&dir.join("recon_mean.png"), size, &mean)?;
    write_grid(&dir.join("recon_std.csv"), size, &std)?;
    write_png(&dir.join("recon_std.png"), size, &std)?;

    write_text(&dir.join("config.toml"), &cfg.to_toml()?)?;
    write_metadata(
        dir,
        &Metadata {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            trials: run.trials.len(),
            sites: names.clone(),
            final_total_loss: run.trials.iter().map(|t| t.history.last().map_or(0.0, |e| e.parts.total)).collect(),
            final_similarity: run
                .trials
                .iter()
                .map(|t| t.history.last().map_or(0.0, |e| e.parts.similarity))
                .collect(),
            mean_selected: stats.mean,
        },
    )?;
    write_text(&dir.join("README.md"), RUN_README)
}

/// Trains `trials` joint models and writes the run directory.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    let mut cfg = cfg.clone();
    let seed = cfg.ensure_seed();
    cfg.validate()?;
    let exp = cfg.experiment()?;
    let data = cfg.dataset(seed)?;
    let run = train_joint(&exp, &data, &cfg.train_config(seed))?;
    write_run(&cfg, &exp, &run, &cfg.out, "train")?;
    Ok(run)
}

/// A run directory read back: its config, experiment and trained models.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub config: ExperimentConfig,
    pub experiment: Experiment,
    pub models: Vec<Model>,
}

pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let config = ExperimentConfig::parse(&read_text(&dir.join("config.toml"))?, dir)?;
    let seed = config
        .seed
        .ok_or_else(|| Error::format(&dir.join("config.toml"), "run config has no seed"))?;
    let experiment = config.experiment()?;
    let tcfg = config.train_config(seed);
    let mut models = Vec::with_capacity(config.trials);
    for trial in 0..config.trials {
        let mut model = Model::new(&experiment, &tcfg, &mut seeded_rng(derive_seed(seed, trial as u64)))?;
        read_params(&trial_file(dir, "params", trial, "bin"), &mut model.params)?;
        let path = trial_file(dir, "orderings", trial, "csv");
        let mut orderings = Vec::new();
        let mut r = csv::Reader::from_path(&path).map_err(|e| Error::format(&path, e.to_string()))?;
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::format(&path, e.to_string()))?;
            let row = rec
                .iter()
                .map(|f| f.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::format(&path, e.to_string()))?;
            orderings.push(row);
        }
        let g = &model.gibbs;
        model.gibbs = GibbsConfig::new(model.n_sites(), g.num_layers, g.s1, g.s2, orderings)
            .map_err(|e| Error::format(&path, e.to_string()))?;
        models.push(model);
    }
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        config,
        experiment,
        models,
    })
}

/// One run per `(lambda1, lambda2)` cell of the configured grids.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepCell>> {
    let mut cfg = cfg.clone();
    let seed = cfg.ensure_seed();
    cfg.validate()?;
    if cfg.lambda1_grid.is_empty() || cfg.lambda2_grid.is_empty() {
        return Err(Error::Config("lambda1_grid and lambda2_grid must be non-empty".into()));
    }
    let exp = cfg.experiment()?;
    let data = cfg.dataset(seed)?;
    let cells = sweep_regularization(&exp, &data, &cfg.train_config(seed), &cfg.lambda1_grid, &cfg.lambda2_grid)?;
    let dir = cfg.out.clone();
    create_dir(&dir)?;
    let names: Vec<String> = exp.sites.names().iter().map(|s| s.to_string()).collect();
    let path = dir.join("sweep.csv");
    let mut header = strings(&["cell", "lambda1", "lambda2", "mean_selected"]);
    header.extend((0..=names.len()).map(|c| format!("count_{c}")));
    let mut rows = Vec::new();
    let mpath = dir.join("sweep_marginals.csv");
    let mut mrows = Vec::new();
    for (i, c) in cells.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(nums(&path, &[c.lambda1, c.lambda2, c.stats.mean])?);
        row.extend(strings(&c.stats.histogram));
        rows.push(row);
        let mut mrow = vec![i.to_string()];
        mrow.extend(nums(&mpath, &c.stats.marginals)?);
        mrows.push(mrow);
        write_theta(&dir.join(format!("theta_mean_cell_{i}.csv")), &names, &c.run.theta_mean)?;
    }
    write_csv(&path, &header, rows)?;
    let mut mheader = vec!["cell".to_string()];
    mheader.extend(names.iter().cloned());
    write_csv(&mpath, &mheader, mrows)?;
    write_text(&dir.join("config.toml"), &cfg.to_toml()?)?;
    write_text(&dir.join("README.md"), SWEEP_README)?;
    Ok(cells)
}

/// One run per configured resolution fraction.
pub fn cmd_resolution(cfg: &ExperimentConfig) -> Result<Vec<ResolutionRow>> {
    let mut cfg = cfg.clone();
    let seed = cfg.ensure_seed();
    cfg.validate()?;
    if cfg.fractions.is_empty() {
        return Err(Error::Config("fractions must be non-empty".into()));
    }
    let exp = cfg.experiment()?;
    let data = cfg.dataset(seed)?;
    let rows = resolution_sweep(&exp, &data, &cfg.train_config(seed), &cfg.fractions)?;
    let dir = cfg.out.clone();
    create_dir(&dir)?;
    let names: Vec<String> = exp.sites.names().iter().map(|s| s.to_string()).collect();
    let path = dir.join("resolution.csv");
    let mut header = strings(&["fraction"]);
    header.extend(names.iter().cloned());
    let mut table = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let mut row = nums(&path, &[r.fraction])?;
        let acts: Vec<f64> = (0..names.len()).map(|j| r.activity(j)).collect();
        row.extend(nums(&path, &acts)?);
        table.push(row);
        write_theta(&dir.join(format!("theta_mean_fraction_{i}.csv")), &names, &r.run.theta_mean)?;
    }
    write_csv(&path, &header, table)?;
    write_text(&dir.join("config.toml"), &cfg.to_toml()?)?;
    write_text(&dir.join("README.md"), RESOLUTION_README)?;
    Ok(rows)
}

/// Square loss matrix: row `i` decodes with run `i`'s decoder, column `j`
/// samples masks from run `j`'s Ising model.
pub fn cmd_swap(cfg: &ExperimentConfig, runs: &[PathBuf], trial: usize) -> Result<Vec<Vec<f64>>> {
    let mut cfg = cfg.clone();
    let seed = cfg.ensure_seed();
    cfg.validate()?;
    if runs.len() < 2 {
        return Err(Error::Config("swap needs at least two run directories".into()));
    }
    let loaded = runs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>>>()?;
    for l in &loaded {
        if trial >= l.models.len() {
            return Err(Error::format(&l.dir, format!("run has no trial {}", trial + 1)));
        }
        if l.experiment.image_size != cfg.image_size {
            return Err(Error::format(&l.dir, "run image size differs from the test set"));
        }
    }
    let test = cfg.test_set(seed)?;
    let entries: Vec<SwapEntry<'_>> = loaded
        .iter()
        .map(|l| SwapEntry {
            experiment: &l.experiment,
            model: &l.models[trial],
        })
        .collect();
    let matrix = swap_eval(&entries, &test.images, cfg.fraction, derive_seed(seed, SWAP_STREAM))?;
    let dir = cfg.out.clone();
    create_dir(&dir)?;
    let labels: Vec<String> = loaded
        .iter()
        .map(|l| l.dir.file_name().map_or_else(|| l.dir.display().to_string(), |s| s.to_string_lossy().into_owned()))
        .collect();
    let path = dir.join("swap.csv");
    let mut header = vec!["decoder".to_string()];
    header.extend(labels.iter().cloned());
    let rows = matrix
        .iter()
        .zip(&labels)
        .map(|(r, l)| {
            let mut row = vec![l.clone()];
            row.extend(nums(&path, r)?);
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    write_csv(&path, &header, rows)?;
    write_text(&dir.join("config.toml"), &cfg.to_toml()?)?;
    Ok(matrix)
}

/// Three-cliques of a θ file above `tau`, strongest first.
pub fn cmd_cliques(theta: &Path, tau: f64, out: &Path) -> Result<CliqueReport> {
    if !tau.is_finite() {
        return Err(Error::Config("tau must be finite".into()));
    }
    let (names, model) = read_theta(theta)?;
    let report = model.find_three_cliques(tau);
    let rows = report
        .triples
        .iter()
        .map(|c| {
            let mut row: Vec<String> = c.sites.iter().map(|&s| names[s].clone()).collect();
            row.push(crate::formats::num(out, c.score)?);
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    write_csv(out, &strings(&["j", "k", "l", "m_c"]), rows)?;
    Ok(report)
}

/// Parses `NAME` (selected) or `NAME=+1` / `NAME=-1` site conditions.
pub fn parse_fixed(spec: &str) -> Result<Vec<(String, i8)>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| match item.split_once('=') {
            None => Ok((item.to_string(), 1)),
            Some((name, v)) => match v.trim() {
                "1" | "+1" => Ok((name.trim().to_string(), 1)),
                "-1" => Ok((name.trim().to_string(), -1)),
                other => Err(Error::Config(format!("site state must be +1 or -1, got `{other}`"))),
            },
        })
        .collect()
}

/// Ising parameters of the remaining sites given fixed states for `fixed`.
pub fn cmd_conditional(theta: &Path, fixed: &[(String, i8)], out: &Path) -> Result<(Vec<String>, IsingModel)> {
    let (names, model) = read_theta(theta)?;
    let known = fixed
        .iter()
        .map(|(name, s)| {
            names
                .iter()
                .position(|n| n == name)
                .map(|j| (j, *s))
                .ok_or_else(|| Error::format(theta, format!("no site named `{name}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let (cond, rest) = model.conditional(&known)?;
    let rest_names: Vec<String> = rest.iter().map(|&j| names[j].clone()).collect();
    write_theta(out, &rest_names, cond.matrix())?;
    Ok((rest_names, cond))
}

const SIMULATE_README: &str = "\
# Simulated observation

- `uv_coverage.csv`: `t, gst_hours, p, q, u_lambda, v_lambda`, one row per
  timestamp and site pair with both sites above the elevation cut.
- `measurements.csv`: `t, p, q, u_lambda, v_lambda, re_jy, im_jy,
  amplitude_jy, phase_rad, sigma_jy`, the same rows after noise.
- `closure_phases.csv`: `t, r, q, b, closure_phase_rad` over triangles
  anchored at the first visible site.
- `truth.csv` / `truth.png`: the observed image (rows of pixels, Jy).
- `config.toml`: the configuration with the seed filled in.
";

const RUN_README: &str = "\
# Training run

All CSV files are comma separated with a header row unless noted. Trials
are numbered from 1.

- `theta_trial_K.csv`, `theta_mean.csv`, `theta_std.csv`: header of site
  names, then one row per site; activities on the diagonal, couplings off
  it. The std uses the n-1 denominator.
- `params_trial_K.bin`: every trained tensor (Ising parameters and decoder
  weights), little-endian.
- `orderings_trial_K.csv`: the site update order of each Gibbs layer.
- `loss_history.csv`: `trial, epoch, total, similarity, sparsity,
  hamiltonian`, epoch means of the per-image objective terms.
- `masks_sample.csv`: `trial` then one relaxed mask value per site.
- `marginals.csv`: `site, selection_frequency` over all sampled masks.
- `count_histogram.csv`: `selected, masks`.
- `truth.csv`, `recon_mean.csv`, `recon_std.csv` (no header) and matching
  PNGs: pixelwise statistics of trial 1 reconstructions of the truth image.
- `metadata.toml`: seed, trial count and final losses.
- `config.toml`: the configuration with the seed filled in; rerunning it
  reproduces this directory.
";

const SWEEP_README: &str = "\
# Regularization sweep

- `sweep.csv`: `cell, lambda1, lambda2, mean_selected, count_0 .. count_K`
  where `count_c` is the number of sampled masks selecting `c` sites.
- `sweep_marginals.csv`: `cell` then the selection frequency of each site.
- `theta_mean_cell_I.csv`: mean θ of each cell.
";

const RESOLUTION_README: &str = "\
# Resolution sweep

- `resolution.csv`: `fraction` then the mean activity of every site.
- `theta_mean_fraction_I.csv`: mean θ for the I-th fraction.
";
