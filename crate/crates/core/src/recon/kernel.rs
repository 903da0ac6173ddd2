use alloc::vec;
use alloc::vec::Vec;

use super::ReconError;
use crate::math::{exp, log, sqrt};

/// FWHM of the nominal array resolution, in pixels of the 32x32 grid.
pub const NOMINAL_FWHM_PX: f64 = 8.0;

/// Normalized, rotationally symmetric Gaussian on a `(2r+1)^2` support.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    pub fwhm_px: f64,
    pub radius: usize,
    /// Row-major weights, summing to 1.
    pub weights: Vec<f64>,
}

impl BlurKernel {
    pub fn gaussian(fwhm_px: f64, radius: usize) -> Result<Self, ReconError> {
        if !(fwhm_px > 0.0 && fwhm_px.is_finite()) {
            return Err(ReconError::BadFraction);
        }
        let sigma = fwhm_px / (2.0 * sqrt(2.0 * log(2.0)));
        let side = 2 * radius + 1;
        let r = radius as f64;
        let mut weights: Vec<f64> = (0..side * side)
            .map(|i| {
                let dy = (i / side) as f64 - r;
                let dx = (i % side) as f64 - r;
                exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma))
            })
            .collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self {
            fwhm_px,
            radius,
            weights,
        })
    }

    /// Kernel at `fraction` of the nominal resolution for a `size`-pixel
    /// grid spanning the standard field of view.
    pub fn for_grid(fraction: f64, size: usize) -> Result<Self, ReconError> {
        if !(fraction > 0.0) {
            return Err(ReconError::BadFraction);
        }
        let fwhm = fraction * NOMINAL_FWHM_PX * size as f64 / 32.0;
        Self::gaussian(fwhm, size.saturating_sub(1) / 2)
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }
}

/// Kernel at `fraction` of the nominal resolution on the 32x32 grid.
pub fn make_kernel(fraction: f64) -> Result<BlurKernel, ReconError> {
    BlurKernel::for_grid(fraction, 32)
}

fn convolve(image: &[f64], size: usize, kernel: &BlurKernel, periodic: bool) -> Result<Vec<f64>, ReconError> {
    if image.len() != size * size {
        return Err(ReconError::SizeMismatch {
            expected: size * size,
            got: image.len(),
        });
    }
    let r = kernel.radius as isize;
    let side = kernel.side();
    let n = size as isize;
    let mut out = vec![0.0; size * size];
    for y in 0..n {
        for x in 0..n {
            let mut acc = 0.0;
            for dy in -r..=r {
                let mut sy = y - dy;
                if periodic {
                    sy = sy.rem_euclid(n);
                } else if sy < 0 || sy >= n {
                    continue;
                }
                let krow = &kernel.weights[((dy + r) as usize) * side..][..side];
                let irow = &image[sy as usize * size..][..size];
                for dx in -r..=r {
                    let mut sx = x - dx;
                    if periodic {
                        sx = sx.rem_euclid(n);
                    } else if sx < 0 || sx >= n {
                        continue;
                    }
                    acc += krow[(dx + r) as usize] * irow[sx as usize];
                }
            }
            out[(y * n + x) as usize] = acc;
        }
    }
    Ok(out)
}

/// Zero-padded 2-D convolution.
pub fn blur(image: &[f64], size: usize, kernel: &BlurKernel) -> Result<Vec<f64>, ReconError> {
    convolve(image, size, kernel, false)
}

/// Cyclic 2-D convolution (commutes with cyclic shifts).
pub fn blur_periodic(image: &[f64], size: usize, kernel: &BlurKernel) -> Result<Vec<f64>, ReconError> {
    convolve(image, size, kernel, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_properties() {
        let k = make_kernel(1.0).unwrap();
        assert!((k.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(k.fwhm_px, 8.0);
        assert_eq!(k.side(), 31);
        // half maximum at 4 px from the centre
        let c = k.weights[15 * 31 + 15];
        assert!((k.weights[15 * 31 + 19] / c - 0.5).abs() < 1e-12);
        let tiny = make_kernel(1e-6).unwrap();
        assert_eq!(tiny.weights[15 * 31 + 15], 1.0);
        assert!(make_kernel(0.0).is_err());
    }

    #[test]
    fn delta_kernel_is_identity() {
        let k = make_kernel(1e-6).unwrap();
        let img: Vec<f64> = (0..1024).map(|i| (i % 7) as f64).collect();
        assert_eq!(blur(&img, 32, &k).unwrap(), img);
    }

    #[test]
    fn constant_interior_preserved() {
        let k = BlurKernel::gaussian(2.0, 3).unwrap();
        let img = vec![2.0; 256];
        let out = blur(&img, 16, &k).unwrap();
        assert!((out[8 * 16 + 8] - 2.0).abs() < 1e-12);
        let per = blur_periodic(&img, 16, &k).unwrap();
        assert!(per.iter().all(|v| (v - 2.0).abs() < 1e-12));
    }
}
