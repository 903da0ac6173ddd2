use isingarray_core::autodiff::{ParameterSet, Tape, Tensor};
use isingarray_core::recon::{
    blur, blur_periodic, l1_blurred_loss, l1_loss_tape, make_kernel, shift_invariant_loss, shift_invariant_loss_tape,
    stack, Activation, BlurKernel, Decoder, DecoderConfig, DecoderKind, Reduction,
};
use isingarray_core::seeded_rng;
use proptest::prelude::*;
use rand::Rng;

fn random_image(size: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded_rng(seed);
    let mut v: Vec<f64> = (0..size * size).map(|_| rng.random::<f64>()).collect();
    let t: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= t);
    v
}

/// Direct zero-padded (or wrapped) convolution with a freshly evaluated
/// Gaussian.
fn oracle_blur(image: &[f64], size: usize, fwhm: f64, radius: usize, periodic: bool) -> Vec<f64> {
    let sigma = fwhm / (8.0 * 2f64.ln()).sqrt();
    let r = radius as isize;
    let mut w = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            w.push(((-(dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = w.iter().sum();
    let n = size as isize;
    let mut out = vec![0.0; size * size];
    for y in 0..n {
        for x in 0..n {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (mut yy, mut xx) = (y + dy, x + dx);
                    if periodic {
                        yy = yy.rem_euclid(n);
                        xx = xx.rem_euclid(n);
                    } else if yy < 0 || xx < 0 || yy >= n || xx >= n {
                        continue;
                    }
                    acc += w[((dy + r) * (2 * r + 1) + dx + r) as usize] / total * image[(yy * n + xx) as usize];
                }
            }
            out[(y * n + x) as usize] = acc;
        }
    }
    out
}

fn shift(image: &[f64], size: usize, sy: usize, sx: usize) -> Vec<f64> {
    let mut out = vec![0.0; size * size];
    for y in 0..size {
        for x in 0..size {
            out[((y + sy) % size) * size + (x + sx) % size] = image[y * size + x];
        }
    }
    out
}

#[test]
fn kernel_examples() {
    let k = make_kernel(1.0).unwrap();
    assert_eq!(k.fwhm_px, 8.0);
    assert!((k.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let side = k.side();
    let c = k.radius;
    let centre = k.weights[c * side + c];
    // half maximum sits 4 px from the centre
    assert!((k.weights[c * side + c + 4] / centre - 0.5).abs() < 1e-12);
    for dy in 0..side {
        for dx in 0..side {
            let w = k.weights[dy * side + dx];
            assert!((w - k.weights[dx * side + dy]).abs() < 1e-15);
            assert!((w - k.weights[(side - 1 - dy) * side + dx]).abs() < 1e-15);
        }
    }
    let tiny = make_kernel(1e-3).unwrap();
    assert_eq!(tiny.weights[tiny.radius * tiny.side() + tiny.radius], 1.0);
    assert!(make_kernel(0.0).is_err());
    assert_eq!(BlurKernel::for_grid(0.5, 64).unwrap().fwhm_px, 8.0);
}

#[test]
fn blurs_match_direct_convolution() {
    let img = random_image(16, 3);
    for fraction in [0.25, 0.75, 1.0] {
        let k = BlurKernel::for_grid(fraction, 16).unwrap();
        let a = blur(&img, 16, &k).unwrap();
        let b = oracle_blur(&img, 16, k.fwhm_px, k.radius, false);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-14));
        let a = blur_periodic(&img, 16, &k).unwrap();
        let b = oracle_blur(&img, 16, k.fwhm_px, k.radius, true);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-14));
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn perfect_reconstructions_have_zero_loss() {
    let k = make_kernel(0.75).unwrap();
    let z = random_image(32, 1);
    let target = blur(&z, 32, &k).unwrap();
    assert!(l1_blurred_loss(&target, &z, 32, &k).unwrap() < 1e-15);
    let pt = blur_periodic(&z, 32, &k).unwrap();
    for (sy, sx) in [(0, 0), (3, 7), (31, 1)] {
        let shifted = shift(&pt, 32, sy, sx);
        assert!(shift_invariant_loss(&shifted, &z, 32, &k).unwrap().abs() < 1e-12);
        let scaled: Vec<f64> = shifted.iter().map(|v| 3.0 * v).collect();
        assert!(shift_invariant_loss(&scaled, &z, 32, &k).unwrap().abs() < 1e-12);
    }
    assert!(l1_blurred_loss(&z, &z, 32, &k).unwrap() > 0.0);
    assert!(shift_invariant_loss(&vec![0.0; 1024], &z, 32, &k).is_err());
}

#[test]
fn tape_losses_match_plain_losses() {
    let size = 8;
    let k = BlurKernel::for_grid(0.75, size).unwrap();
    let truths: Vec<Vec<f64>> = (0..3).map(|s| random_image(size, s)).collect();
    let recons: Vec<Vec<f64>> = (0..3).map(|s| random_image(size, 10 + s)).collect();
    let blurred: Vec<Vec<f64>> = truths.iter().map(|z| blur(z, size, &k).unwrap()).collect();
    let periodic: Vec<Vec<f64>> = truths.iter().map(|z| blur_periodic(z, size, &k).unwrap()).collect();
    let rs: Vec<&[f64]> = recons.iter().map(Vec::as_slice).collect();

    let mut tape = Tape::new();
    let r = tape.variable(stack(&rs).unwrap());
    let targets = stack(&blurred.iter().map(Vec::as_slice).collect::<Vec<_>>()).unwrap();
    let mean = l1_loss_tape(&mut tape, r, &targets, Reduction::Mean).unwrap();
    let sum = l1_loss_tape(&mut tape, r, &targets, Reduction::Sum).unwrap();
    let expect: f64 = (0..3).map(|i| l1_blurred_loss(&recons[i], &truths[i], size, &k).unwrap()).sum();
    assert!((tape.value(mean).item() - expect).abs() < 1e-14);
    assert!((tape.value(sum).item() - expect * (size * size) as f64).abs() < 1e-12);

    let targets = stack(&periodic.iter().map(Vec::as_slice).collect::<Vec<_>>()).unwrap();
    let si = shift_invariant_loss_tape(&mut tape, r, &targets, size).unwrap();
    let expect: f64 = (0..3).map(|i| shift_invariant_loss(&recons[i], &truths[i], size, &k).unwrap()).sum();
    assert!((tape.value(si).item() - expect).abs() < 1e-12);
}

#[test]
fn default_decoders_emit_full_images() {
    for kind in [DecoderKind::A, DecoderKind::B] {
        let mut params = ParameterSet::new();
        let cfg = DecoderConfig {
            base_width: 2,
            ..DecoderConfig::default()
        };
        let cfg = DecoderConfig {
            phase_hidden: 8,
            activation: Activation::Relu,
            ..cfg
        };
        let d = Decoder::new(kind, cfg, 40, 20, &mut params, "dec.", &mut seeded_rng(1)).unwrap();
        let out = d.decode(&params, &vec![0.1; 40]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].len(), 32 * 32);
        assert!(out[0].iter().all(|&v| v > 0.0 && v.is_finite()));
        assert!(params.iter().all(|p| p.name.starts_with("dec.")));
    }
    let mut params = ParameterSet::new();
    let bad = DecoderConfig {
        depth: 6,
        ..DecoderConfig::default()
    };
    assert!(Decoder::new(DecoderKind::A, bad, 4, 2, &mut params, "", &mut seeded_rng(0)).is_err());
}

#[test]
fn zero_input_gives_a_constant_image_per_seed() {
    let mut params = ParameterSet::new();
    let d = Decoder::new(DecoderKind::A, DecoderConfig::default(), 6, 3, &mut params, "dec.", &mut seeded_rng(4)).unwrap();
    let a = d.decode(&params, &[0.0; 12]).unwrap();
    assert_eq!(a[0], a[1]);
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let x = tape.constant(Tensor::zeros(&[1, 6]));
    let y = d.forward(&mut tape, &bound, x).unwrap();
    assert_eq!(tape.value(y).data(), a[0].as_slice());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_is_normalized(fraction in 0.05f64..2.0, size in 4usize..40) {
        let k = BlurKernel::for_grid(fraction, size).unwrap();
        prop_assert!((k.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(k.weights.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn periodic_blur_preserves_flux(seed in 0u64..1000, fraction in 0.1f64..1.5) {
        let img = random_image(12, seed);
        let k = BlurKernel::for_grid(fraction, 12).unwrap();
        let out = blur_periodic(&img, 12, &k).unwrap();
        prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let zp = blur(&img, 12, &k).unwrap();
        prop_assert!(zp.iter().sum::<f64>() <= 1.0 + 1e-12);
    }
}
