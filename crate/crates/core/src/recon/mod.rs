//! Image reconstruction: blur kernels, decoders A and B, and the two
//! similarity losses.

use alloc::vec;
use alloc::vec::Vec;

mod decoder;
mod kernel;

pub use decoder::{Activation, Decoder, DecoderConfig, DecoderKind};
pub use kernel::{blur, blur_periodic, make_kernel, BlurKernel, NOMINAL_FWHM_PX};

use crate::autodiff::{AutodiffError, Tape, Tensor, Var};
use crate::math::{fabs, sqrt};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReconError {
    #[error("kernel fraction must be positive")]
    BadFraction,
    #[error("expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("image has zero norm")]
    ZeroNorm,
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// How the per-pixel ℓ1 differences of one image are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Mean,
    Sum,
}

fn check_len(a: &[f64], b: &[f64]) -> Result<(), ReconError> {
    if a.len() != b.len() {
        return Err(ReconError::SizeMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Mean absolute difference between `recon` and `blur(truth)`.
pub fn l1_blurred_loss(recon: &[f64], truth: &[f64], size: usize, kernel: &BlurKernel) -> Result<f64, ReconError> {
    check_len(recon, truth)?;
    let target = blur(truth, size, kernel)?;
    Ok(recon.iter().zip(&target).map(|(a, b)| fabs(a - b)).sum::<f64>() / recon.len() as f64)
}

/// `1 - max_s <recon, shift_s(blur(truth))> / (|recon| |blur(truth)|)` over
/// all cyclic shifts, with the periodic blur.
pub fn shift_invariant_loss(recon: &[f64], truth: &[f64], size: usize, kernel: &BlurKernel) -> Result<f64, ReconError> {
    check_len(recon, truth)?;
    let target = blur_periodic(truth, size, kernel)?;
    let nr = sqrt(recon.iter().map(|v| v * v).sum::<f64>());
    let nt = sqrt(target.iter().map(|v| v * v).sum::<f64>());
    if nr == 0.0 || nt == 0.0 {
        return Err(ReconError::ZeroNorm);
    }
    let mut best = f64::NEG_INFINITY;
    for sy in 0..size {
        for sx in 0..size {
            let mut acc = 0.0;
            for y in 0..size {
                for x in 0..size {
                    let ty = (y + size - sy) % size;
                    let tx = (x + size - sx) % size;
                    acc += recon[y * size + x] * target[ty * size + tx];
                }
            }
            best = best.max(acc);
        }
    }
    Ok(1.0 - best / (nr * nt))
}

/// Sum over the batch of per-image ℓ1 losses against precomputed blurred
/// targets, both `[B, P]`.
pub fn l1_loss_tape(tape: &mut Tape, recon: Var, targets: &Tensor, reduction: Reduction) -> Result<Var, AutodiffError> {
    let t = tape.constant(targets.clone());
    let d = tape.sub(recon, t)?;
    let a = tape.abs(d);
    let s = tape.sum(a);
    Ok(match reduction {
        Reduction::Sum => s,
        Reduction::Mean => tape.scale(s, 1.0 / targets.shape()[1] as f64),
    })
}

/// Sum over the batch of per-image shift-invariant losses against
/// precomputed periodically blurred targets, both `[B, size*size]`.
pub fn shift_invariant_loss_tape(tape: &mut Tape, recon: Var, targets: &Tensor, size: usize) -> Result<Var, AutodiffError> {
    let b = targets.shape()[0];
    let p = targets.shape()[1];
    let norms: Vec<f64> = (0..b)
        .map(|i| sqrt(targets.data()[i * p..][..p].iter().map(|v| v * v).sum::<f64>()))
        .collect();
    if norms.iter().any(|&n| n == 0.0) {
        return Err(AutodiffError::InvalidArgument {
            op: "shift_invariant_loss",
            reason: "target has zero norm",
        });
    }
    let t = tape.constant(targets.clone());
    let xc = tape.cyclic_xcorr(recon, t, size, size)?;
    let best = tape.max_last(xc)?;
    let sq = tape.mul(recon, recon)?;
    let sq = tape.sum_axis(sq, 1)?;
    let nr = tape.sqrt(sq)?;
    let nt = tape.constant(Tensor::from_vec(&[b, 1], norms)?);
    let denom = tape.mul(nr, nt)?;
    let cos = tape.div(best, denom)?;
    let total = tape.sum(cos);
    let neg = tape.scale(total, -1.0);
    Ok(tape.add_scalar(neg, b as f64))
}

/// Stacks equally sized images into a `[B, P]` tensor.
pub fn stack(images: &[&[f64]]) -> Result<Tensor, AutodiffError> {
    let p = images.first().map_or(0, |i| i.len());
    let mut data = vec![0.0; images.len() * p];
    for (row, img) in data.chunks_mut(p.max(1)).zip(images) {
        row.copy_from_slice(img);
    }
    Tensor::from_vec(&[images.len(), p], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(size: usize, cy: f64, cx: f64) -> Vec<f64> {
        (0..size * size)
            .map(|i| {
                let (y, x) = ((i / size) as f64, (i % size) as f64);
                libm::exp(-((y - cy).powi(2) + (x - cx).powi(2)) / 6.0)
            })
            .collect()
    }

    #[test]
    fn l1_examples() {
        let k = make_kernel(0.75).unwrap();
        let truth = blob(32, 14.0, 17.0);
        let target = blur(&truth, 32, &k).unwrap();
        assert_eq!(l1_blurred_loss(&target, &truth, 32, &k).unwrap(), 0.0);
        let shifted: Vec<f64> = target.iter().map(|v| v + 0.1).collect();
        assert!((l1_blurred_loss(&shifted, &truth, 32, &k).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn shift_invariance() {
        let k = make_kernel(0.5).unwrap();
        let truth = blob(16, 6.0, 9.0);
        let target = blur_periodic(&truth, 16, &k).unwrap();
        let mut moved = vec![0.0; 256];
        for y in 0..16 {
            for x in 0..16 {
                moved[((y + 5) % 16) * 16 + (x + 13) % 16] = target[y * 16 + x];
            }
        }
        assert!(shift_invariant_loss(&moved, &truth, 16, &k).unwrap().abs() < 1e-10);
        let scaled: Vec<f64> = moved.iter().map(|v| 3.0 * v).collect();
        assert!(shift_invariant_loss(&scaled, &truth, 16, &k).unwrap().abs() < 1e-10);
        assert_eq!(
            shift_invariant_loss(&[0.0; 256], &truth, 16, &k),
            Err(ReconError::ZeroNorm)
        );
    }

    #[test]
    fn orthogonal_gives_one() {
        // Single bright pixel vs. an image supported on disjoint pixels
        // for every shift is impossible cyclically, so use signed values.
        let k = make_kernel(1e-6).unwrap();
        let mut a = vec![0.0; 4];
        a[0] = 1.0;
        a[1] = -1.0;
        let t = vec![1.0, 1.0, 1.0, 1.0];
        assert!((shift_invariant_loss(&a, &t, 2, &k).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tape_losses_match_plain() {
        let k = make_kernel(0.75).unwrap();
        let truth = blob(8, 3.0, 4.0);
        let recon = blob(8, 4.0, 2.0);
        let mut tape = Tape::new();
        let r = tape.variable(Tensor::from_vec(&[1, 64], recon.clone()).unwrap());
        let t = stack(&[&blur_periodic(&truth, 8, &k).unwrap()]).unwrap();
        let si = shift_invariant_loss_tape(&mut tape, r, &t, 8).unwrap();
        let plain = shift_invariant_loss(&recon, &truth, 8, &k).unwrap();
        assert!((tape.value(si).item() - plain).abs() < 1e-12);
        let t = stack(&[&blur(&truth, 8, &k).unwrap()]).unwrap();
        let l1 = l1_loss_tape(&mut tape, r, &t, Reduction::Mean).unwrap();
        assert!((tape.value(l1).item() - l1_blurred_loss(&recon, &truth, 8, &k).unwrap()).abs() < 1e-14);
    }
}
