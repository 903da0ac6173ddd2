//! Acceptance suite: one PASS/FAIL line per criterion. Runs as a plain
//! binary (`harness = false`) and exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use isingarray::commands::{cmd_swap, cmd_sweep, cmd_train};
use isingarray::config::{ActivationName, TargetName};
use isingarray::formats::read_theta;
use isingarray::ExperimentConfig;
use isingarray_core::autodiff::{finite_diff_check, GradCheckOptions, Tensor};
use isingarray_core::gibbs::{fresh_noise, fresh_orderings, gibbs_step_exact, gibbs_step_with_noise, init_state, relaxed_layer};
use isingarray_core::ising::{packed_len, IsingModel, SpinState};
use isingarray_core::recon::{stack, Activation, DecoderConfig, DecoderKind, Reduction};
use isingarray_core::seeded_rng;
use isingarray_core::train::{total_loss_tape, Dataset, DatasetSpec, Experiment, LossWeights, Model, Prepared, TrainConfig};
use isingarray_core::vlbi::{
    closure_phases, corrupt, dft_visibility, uv_coverage, visibility_at, Complex64, DftMatrix, Image, MeasurementSet,
    NoiseConfig, Schedule, SiteTable, Target, TriangleSet, FOV_UAS, UAS,
};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_model(n: usize, seed: u64) -> IsingModel {
    let mut rng = seeded_rng(seed);
    let packed: Vec<f64> = (0..packed_len(n)).map(|_| rng.random_range(-1.0..1.0)).collect();
    IsingModel::from_packed(n, &packed).unwrap()
}

fn spins(index: usize, n: usize) -> Vec<f64> {
    (0..n).map(|j| if index >> j & 1 == 1 { 1.0 } else { -1.0 }).collect()
}

/// Boltzmann weights from a direct double loop over the full matrix.
fn oracle_distribution(m: &IsingModel) -> Vec<f64> {
    let n = m.n();
    let w: Vec<f64> = (0..1usize << n)
        .map(|i| {
            let x = spins(i, n);
            let mut h = 0.0;
            for j in 0..n {
                h -= m.theta(j, j) * x[j];
                for k in j + 1..n {
                    h -= m.theta(j, k) * x[j] * x[k];
                }
            }
            (-h).exp()
        })
        .collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

fn ising_oracles() -> Outcome {
    let (mut worst_s, mut worst_c) = (0.0f64, 0.0f64);
    for i in 0..20u64 {
        let n = 1 + (i as usize) % 12;
        let m = random_model(n, 100 + i);
        let s = m.entropy().unwrap();
        worst_s = worst_s.max((s - (m.expected_energy().unwrap() + m.log_partition().unwrap())).abs());

        if n < 2 {
            continue;
        }
        let mut rng = seeded_rng(i);
        let fixed = 1 + rng.random_range(0..n - 1);
        let mut sites: Vec<usize> = (0..n).collect();
        for a in (1..n).rev() {
            sites.swap(a, rng.random_range(0..=a));
        }
        let known: Vec<(usize, i8)> = sites[..fixed]
            .iter()
            .map(|&j| (j, if rng.random::<bool>() { 1 } else { -1 }))
            .collect();
        let (cond, unknown) = m.conditional(&known).unwrap();
        let joint = oracle_distribution(&m);
        let consistent = |i: usize| known.iter().all(|&(j, s)| (i >> j & 1 == 1) == (s == 1));
        let norm: f64 = (0..joint.len()).filter(|&i| consistent(i)).map(|i| joint[i]).sum();
        let cd = cond.distribution().unwrap();
        for idx in (0..joint.len()).filter(|&i| consistent(i)) {
            let ci = unknown
                .iter()
                .enumerate()
                .filter(|(_, &j)| idx >> j & 1 == 1)
                .fold(0, |acc, (r, _)| acc | 1 << r);
            worst_c = worst_c.max((cd[ci] - joint[idx] / norm).abs());
        }
    }
    outcome(
        worst_s < 1e-8 && worst_c < 1e-10,
        format!("max |S - E[H] - log Z| = {worst_s:.1e}, max conditional error = {worst_c:.1e}"),
    )
}

fn gibbs_convergence() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..10u64 {
        let n = 3 + (i as usize) % 8;
        let m = random_model(n, 700 + i);
        let mut rng = seeded_rng(i);
        let order: Vec<usize> = (0..n).collect();
        let mut state = SpinState::from_index(0, n);
        for _ in 0..50 {
            state = gibbs_step_exact(&m, &state, &order, &mut rng).unwrap();
        }
        let samples = 100_000;
        let mut counts = vec![0usize; 1 << n];
        for _ in 0..samples {
            state = gibbs_step_exact(&m, &state, &order, &mut rng).unwrap();
            counts[state.index()] += 1;
        }
        let p = oracle_distribution(&m);
        let tv: f64 = 0.5 * counts.iter().zip(&p).map(|(&c, q)| (c as f64 / samples as f64 - q).abs()).sum::<f64>();
        worst = worst.max(tv);
    }
    outcome(worst < 0.05, format!("worst total variation over 10 models = {worst:.4}"))
}

/// Rounded agreement of one relaxed sweep with one exact sweep from the
/// same spins and uniforms.
fn sweep_agreement(s1: f64) -> f64 {
    let n = 8;
    let (mut agree, mut total) = (0usize, 0usize);
    for seed in 0..40u64 {
        let m = random_model(n, 500 + seed);
        let mut rng = seeded_rng(seed);
        let orderings = fresh_orderings(&mut rng, n, 5);
        for _ in 0..50 {
            let noise = fresh_noise(&mut rng, n, 5);
            let mut exact = init_state(&noise.layers[0]);
            for (l, o) in orderings.iter().enumerate() {
                let mut x = exact.to_f64();
                relaxed_layer(&m, &mut x, &noise.layers[l + 1], s1, o).unwrap();
                exact = gibbs_step_with_noise(&m, &exact, o, &noise.layers[l + 1]).unwrap();
                for j in 0..n {
                    total += 1;
                    agree += usize::from((x[j] > 0.0) == (exact.spins()[j] == 1));
                }
            }
        }
    }
    agree as f64 / total as f64
}

fn relaxation_consistency() -> Outcome {
    let rates: Vec<f64> = [3.0, 10.0, 50.0, 1e3].iter().map(|&s| sweep_agreement(s)).collect();
    let increasing = rates.windows(2).all(|w| w[1] >= w[0]);
    outcome(
        increasing && rates[2] >= 0.99,
        format!(
            "agreement at s1 = 3, 10, 50, 1000: {}",
            rates.iter().map(|r| format!("{:.4}", r)).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn gradient_suite() -> Outcome {
    let mut worst = 0.0f64;
    for kind in [DecoderKind::A, DecoderKind::B] {
        let all = SiteTable::eht_plus();
        let sites = SiteTable::new([2, 3, 4].iter().map(|&j| all.site(j).clone()).collect()).unwrap();
        let exp = Experiment::new(
            sites,
            Target::sgr_a(),
            &Schedule::uniform(6, 10.0).unwrap(),
            NoiseConfig::none(),
            kind,
            8,
            FOV_UAS * UAS,
        )
        .unwrap();
        let cfg = TrainConfig {
            decoder: DecoderConfig {
                image_size: 8,
                base_width: 2,
                depth: 2,
                activation: Activation::Tanh,
                phase_hidden: 8,
            },
            ..TrainConfig::default()
        };
        let ds = Dataset::build(&DatasetSpec::synthetic(3), 8, &mut seeded_rng(7));
        let prepared = Prepared::new(&exp, &ds, 0.75).unwrap();
        let mut model = Model::new(&exp, &cfg, &mut seeded_rng(8)).unwrap();
        *model.params.value_mut(model.theta) = Tensor::from_vec(&[6], vec![0.3, -0.2, 0.4, -0.1, 0.25, 0.1]).unwrap();
        let mut rng = seeded_rng(9);
        let mut inputs = Vec::new();
        for i in 0..3 {
            inputs.extend(prepared.input(&exp, i, &mut rng).unwrap());
        }
        let inputs = Tensor::from_vec(&[3, exp.layout.len()], inputs).unwrap();
        let targets = stack(&prepared.targets.iter().map(Vec::as_slice).collect::<Vec<_>>()).unwrap();
        let noise: Vec<_> = (0..3).map(|_| fresh_noise(&mut rng, 3, 5)).collect();
        let w = LossWeights {
            lambda1: 0.05,
            lambda2: 0.05,
            reduction: Reduction::Sum,
        };
        let report = finite_diff_check(&model.params, GradCheckOptions::default(), |t, b| {
            Ok(total_loss_tape(t, b, &model, &exp, &inputs, &targets, &noise, &w)?.total)
        })
        .unwrap();
        worst = worst.max(report.max_rel_error);
    }
    outcome(worst < 1e-3, format!("max relative error over θ and decoder weights (A and B) = {worst:.1e}"))
}

fn norm(c: Complex64) -> f64 {
    c.re.hypot(c.im)
}

fn wrap(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

fn physics_suite() -> Outcome {
    let sites = SiteTable::eht_plus();
    let g = uv_coverage(&sites, &Target::sgr_a(), &Schedule::uniform(12, 10.0).unwrap()).unwrap();
    let tris = TriangleSet::new(&g);
    let mut rng = seeded_rng(3);
    let px: Vec<f64> = (0..1024).map(|_| rng.random::<f64>().powi(3)).collect();
    let img = Image::standard(px.clone()).unwrap();

    let all = dft_visibility(&img, &g);
    let slots = g.visible_slots();
    let ideal: Vec<Complex64> = slots.iter().map(|&s| all[s]).collect();
    let clean = MeasurementSet::ideal(&g, ideal.clone()).unwrap();
    let noisy = corrupt(&ideal, &g, &sites, &NoiseConfig::case(4, 0.0).unwrap(), &mut rng).unwrap();
    let closure = closure_phases(&clean, &g, &tris)
        .iter()
        .zip(closure_phases(&noisy, &g, &tris))
        .filter_map(|(a, b)| Some(wrap(a.as_ref()? - b?).abs()))
        .fold(0.0f64, f64::max);

    let flux: f64 = px.iter().sum();
    let zero = (norm(visibility_at(&img, 0.0, 0.0)) - flux).abs();

    let fast = DftMatrix::new(&g, 32, FOV_UAS * UAS, slots.clone()).apply(&px).unwrap().remove(0);
    let d = FOV_UAS * UAS / 32.0;
    let mut dft = 0.0f64;
    for (i, &s) in slots.iter().enumerate() {
        let [u, v] = g.slot_uv(s);
        let (mut re, mut im) = (0.0, 0.0);
        for row in 0..32 {
            for col in 0..32 {
                let ang = -2.0 * PI * (u * (col as f64 - 16.0) * d + v * (row as f64 - 16.0) * d);
                re += px[row * 32 + col] * ang.cos();
                im += px[row * 32 + col] * ang.sin();
            }
        }
        dft = dft.max((fast[i].re - re).abs().max((fast[i].im - im).abs()));
    }

    let mut conj = 0.0f64;
    for &s in &slots {
        let [u, v] = g.slot_uv(s);
        conj = conj.max(norm(visibility_at(&img, u, v) - visibility_at(&img, -u, -v).conj()));
    }
    outcome(
        closure < 1e-10 && zero < 1e-12 && dft < 1e-12 && conj < 1e-12,
        format!("closure {closure:.1e}, zero baseline {zero:.1e}, DFT {dft:.1e}, conjugate {conj:.1e}"),
    )
}

/// Noiseless EHT+ / Sgr A*, decoder A, 256 synthetic images, 25 epochs.
fn desk(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        seed: Some(0),
        out: out.to_path_buf(),
        trials: 5,
        epochs: 25,
        batch_size: 32,
        lambda1: 0.005,
        lambda2: 0.005,
        fraction: 0.75,
        noise_case: 1,
        timestamps: 12,
        base_width: 4,
        depth: 3,
        activation: ActivationName::Relu,
        dataset_count: 256,
        mask_samples: 1000,
        recon_samples: 20,
        test_count: 200,
        ..ExperimentConfig::default()
    }
}

fn qualitative(root: &Path) -> Outcome {
    let dir = root.join("c6");
    if let Err(e) = cmd_train(&desk(&dir)) {
        return outcome(false, format!("training failed: {e}"));
    }
    let mut good = 0;
    let mut lines = Vec::new();
    for k in 1..=5 {
        let (names, m) = read_theta(&dir.join(format!("theta_trial_{k}.csv"))).unwrap();
        let idx = |s: &str| names.iter().position(|n| n == s).unwrap();
        let aa = m.theta(idx("ALMA"), idx("APEX"));
        let js = m.theta(idx("JCMT"), idx("SMA"));
        let glt = idx("GLT");
        let glt_min = (0..m.n()).all(|j| j == glt || m.activity(j) > m.activity(glt));
        let ok = aa < 0.0 && js < 0.0 && glt_min;
        good += usize::from(ok);
        lines.push(format!("[{aa:+.3} {js:+.3} {}]", if glt_min { "min" } else { "-" }));
    }
    outcome(
        good >= 4,
        format!("{good}/5 trials with θ(ALMA,APEX)<0, θ(JCMT,SMA)<0, GLT least active {}", lines.join(" ")),
    )
}

fn sparsity(root: &Path) -> Outcome {
    let base = ExperimentConfig {
        trials: 1,
        lambda1_grid: vec![-0.05, -0.005, 0.005, 0.05],
        lambda2_grid: vec![0.005],
        ..desk(&root.join("c7a"))
    };
    let cells = match cmd_sweep(&base) {
        Ok(c) => c,
        Err(e) => return outcome(false, format!("sweep failed: {e}")),
    };
    let means: Vec<f64> = cells.iter().map(|c| c.stats.mean).collect();
    let decreasing = means.windows(2).all(|w| w[1] < w[0]);
    let big = ExperimentConfig {
        lambda1_grid: vec![0.005],
        lambda2_grid: vec![0.5],
        out: root.join("c7b"),
        ..base
    };
    let big_mean = match cmd_sweep(&big) {
        Ok(c) => c[0].stats.mean,
        Err(e) => return outcome(false, format!("sweep failed: {e}")),
    };
    outcome(
        decreasing && (big_mean - 6.0).abs() <= 1.0,
        format!(
            "mean count at λ1 = -0.05, -0.005, 0.005, 0.05: {}; at λ2 = 0.5: {big_mean:.3}",
            means.iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn swap(root: &Path) -> Outcome {
    let sgra = root.join("c8_sgra");
    let m87 = root.join("c8_m87");
    for (dir, target) in [(&sgra, TargetName::SgrA), (&m87, TargetName::M87)] {
        let cfg = ExperimentConfig {
            trials: 1,
            target,
            ..desk(dir)
        };
        if let Err(e) = cmd_train(&cfg) {
            return outcome(false, format!("training failed: {e}"));
        }
    }
    let counts: Vec<f64> = [&sgra, &m87]
        .iter()
        .map(|d| {
            let text = fs::read_to_string(d.join("metadata.toml")).unwrap();
            let line = text.lines().find(|l| l.starts_with("mean_selected")).unwrap();
            line.split('=').nth(1).unwrap().trim().parse().unwrap()
        })
        .collect();
    let cfg = ExperimentConfig {
        seed: Some(9),
        ..desk(&root.join("c8_swap"))
    };
    let m = match cmd_swap(&cfg, &[sgra, m87], 0) {
        Ok(m) => m,
        Err(e) => return outcome(false, format!("swap failed: {e}")),
    };
    let ok = m[0][0] <= m[0][1] && m[1][1] <= m[1][0];
    outcome(
        ok,
        format!(
            "losses [[{:.4}, {:.4}], [{:.4}, {:.4}]], mean counts Sgr A* {:.2}, M87* {:.2}",
            m[0][0], m[0][1], m[1][0], m[1][1], counts[0], counts[1]
        ),
    )
}

fn determinism(root: &Path) -> Outcome {
    let cfg = |d: &str| ExperimentConfig {
        seed: Some(42),
        trials: 2,
        epochs: 3,
        dataset_count: 64,
        mask_samples: 50,
        ..desk(&root.join(d))
    };
    for d in ["c9a", "c9b"] {
        if let Err(e) = cmd_train(&cfg(d)) {
            return outcome(false, format!("training failed: {e}"));
        }
    }
    let mut same = true;
    for k in 1..=2 {
        let f = format!("theta_trial_{k}.csv");
        same &= fs::read(root.join("c9a").join(&f)).unwrap() == fs::read(root.join("c9b").join(&f)).unwrap();
    }
    outcome(same, "theta_trial_1.csv and theta_trial_2.csv identical across reruns".into())
}

fn main() -> ExitCode {
    let root = tempfile::tempdir().unwrap();
    let criteria: [(&str, Box<dyn Fn() -> Outcome>); 9] = [
        ("Ising oracle suite", Box::new(ising_oracles)),
        ("Gibbs convergence", Box::new(gibbs_convergence)),
        ("relaxation consistency", Box::new(relaxation_consistency)),
        ("gradient suite", Box::new(gradient_suite)),
        ("physics suite", Box::new(physics_suite)),
        ("qualitative reproduction", Box::new(|| qualitative(root.path()))),
        ("sparsity monotonicity", Box::new(|| sparsity(root.path()))),
        ("swap protocol", Box::new(|| swap(root.path()))),
        ("determinism", Box::new(|| determinism(root.path()))),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let t = Instant::now();
        let o = run();
        failed += usize::from(!o.pass);
        println!(
            "criterion {} {:<26} {} ({:.1}s) {}",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            o.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
