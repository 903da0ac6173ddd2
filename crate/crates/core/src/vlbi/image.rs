use alloc::vec;
use alloc::vec::Vec;

use super::{Complex64, ObservationGeometry, VlbiError};
use crate::autodiff::{AutodiffError, Tape, Tensor, Var};
use crate::math::{cos, gemm, sin, TAU};

/// Default image side length in pixels.
pub const IMAGE_SIZE: usize = 32;
/// Default field of view in microarcseconds.
pub const FOV_UAS: f64 = 100.0;
/// One microarcsecond in radians.
pub const UAS: f64 = core::f64::consts::PI / (180.0 * 3600.0 * 1e6);

/// Square, nonnegative sky brightness grid (row-major, Jy per pixel).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    size: usize,
    fov_rad: f64,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(size: usize, fov_rad: f64, pixels: Vec<f64>) -> Result<Self, VlbiError> {
        if pixels.len() != size * size {
            return Err(VlbiError::SizeMismatch {
                expected: size * size,
                got: pixels.len(),
            });
        }
        if pixels.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(VlbiError::BadImage);
        }
        Ok(Self { size, fov_rad, pixels })
    }

    /// 32x32 grid over 100 microarcseconds.
    pub fn standard(pixels: Vec<f64>) -> Result<Self, VlbiError> {
        Self::new(IMAGE_SIZE, FOV_UAS * UAS, pixels)
    }

    pub fn point(size: usize, fov_rad: f64, row: usize, col: usize, flux: f64) -> Self {
        let mut pixels = vec![0.0; size * size];
        pixels[row * size + col] = flux;
        Self { size, fov_rad, pixels }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn fov_rad(&self) -> f64 {
        self.fov_rad
    }

    pub fn pixel_rad(&self) -> f64 {
        self.fov_rad / self.size as f64
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn total_flux(&self) -> f64 {
        self.pixels.iter().sum()
    }

    /// Angular offsets `(l, m)` of a pixel from the centre pixel `(size/2, size/2)`.
    pub fn pixel_lm(&self, row: usize, col: usize) -> (f64, f64) {
        pixel_lm(self.size, self.fov_rad, row, col)
    }
}

fn pixel_lm(size: usize, fov_rad: f64, row: usize, col: usize) -> (f64, f64) {
    let d = fov_rad / size as f64;
    let c = (size / 2) as f64;
    ((col as f64 - c) * d, (row as f64 - c) * d)
}

/// `sum_pixels z(l, m) exp(-2 pi i (u l + v m))` at one spatial frequency.
pub fn visibility_at(image: &Image, u: f64, v: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for row in 0..image.size {
        for col in 0..image.size {
            let z = image.pixels[row * image.size + col];
            if z == 0.0 {
                continue;
            }
            let (l, m) = image.pixel_lm(row, col);
            let ang = -TAU * (u * l + v * m);
            acc += Complex64::new(z * cos(ang), z * sin(ang));
        }
    }
    acc
}

/// Ideal visibilities for every slot of the geometry.
pub fn dft_visibility(image: &Image, geometry: &ObservationGeometry) -> Vec<Complex64> {
    (0..geometry.n_slots())
        .map(|s| {
            let [u, v] = geometry.slot_uv(s);
            visibility_at(image, u, v)
        })
        .collect()
}

/// Precomputed Fourier extraction rows for a chosen set of slots.
#[derive(Debug, Clone)]
pub struct DftMatrix {
    slots: Vec<usize>,
    n_pixels: usize,
    /// `[S, P]` row-major.
    re: Vec<f64>,
    im: Vec<f64>,
}

impl DftMatrix {
    pub fn new(geometry: &ObservationGeometry, size: usize, fov_rad: f64, slots: Vec<usize>) -> Self {
        let n_pixels = size * size;
        let mut re = Vec::with_capacity(slots.len() * n_pixels);
        let mut im = Vec::with_capacity(slots.len() * n_pixels);
        for &s in &slots {
            let [u, v] = geometry.slot_uv(s);
            for row in 0..size {
                for col in 0..size {
                    let (l, m) = pixel_lm(size, fov_rad, row, col);
                    let ang = -TAU * (u * l + v * m);
                    re.push(cos(ang));
                    im.push(sin(ang));
                }
            }
        }
        Self {
            slots,
            n_pixels,
            re,
            im,
        }
    }

    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    pub fn n_pixels(&self) -> usize {
        self.n_pixels
    }

    /// Visibilities of a batch of flattened images `[B, P]`; returns one
    /// vector of length `S` per image.
    pub fn apply(&self, images: &[f64]) -> Result<Vec<Vec<Complex64>>, VlbiError> {
        if self.n_pixels == 0 || images.len() % self.n_pixels != 0 {
            return Err(VlbiError::SizeMismatch {
                expected: self.n_pixels,
                got: images.len(),
            });
        }
        let b = images.len() / self.n_pixels;
        let s = self.slots.len();
        let p = self.n_pixels;
        let mut re = vec![0.0; b * s];
        let mut im = vec![0.0; b * s];
        gemm(b, p, s, 1.0, images, (p, 1), &self.re, (1, p), 0.0, &mut re, (s, 1));
        gemm(b, p, s, 1.0, images, (p, 1), &self.im, (1, p), 0.0, &mut im, (s, 1));
        Ok((0..b)
            .map(|i| (0..s).map(|j| Complex64::new(re[i * s + j], im[i * s + j])).collect())
            .collect())
    }
}

/// Differentiable DFT of `[B, P]` images; returns real and imaginary
/// parts, each `[B, S]`.
pub fn dft_tape(tape: &mut Tape, images: Var, dft: &DftMatrix) -> Result<(Var, Var), AutodiffError> {
    let s = dft.slots.len();
    let p = dft.n_pixels;
    let transpose = |m: &[f64]| {
        let mut t = vec![0.0; p * s];
        for i in 0..s {
            for j in 0..p {
                t[j * s + i] = m[i * p + j];
            }
        }
        Tensor::from_vec(&[p, s], t)
    };
    let re_t = tape.constant(transpose(&dft.re)?);
    let im_t = tape.constant(transpose(&dft.im)?);
    Ok((tape.matmul(images, re_t)?, tape.matmul(images, im_t)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centred_point_is_real_unity() {
        let img = Image::point(IMAGE_SIZE, FOV_UAS * UAS, 16, 16, 1.0);
        for (u, v) in [(0.0, 0.0), (3e9, -1e9), (-7e9, 4e9)] {
            let vis = visibility_at(&img, u, v);
            assert_eq!(vis, Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn batch_matches_direct() {
        let g = crate::vlbi::uv_coverage(
            &crate::vlbi::SiteTable::eht_plus(),
            &crate::vlbi::Target::m87(),
            &crate::vlbi::Schedule::uniform(4, 10.0).unwrap(),
        )
        .unwrap();
        let size = 8;
        let fov = 40.0 * UAS;
        let pix: Vec<f64> = (0..size * size).map(|i| ((i * 37) % 11) as f64).collect();
        let img = Image::new(size, fov, pix.clone()).unwrap();
        let slots = g.visible_slots();
        let dft = DftMatrix::new(&g, size, fov, slots.clone());
        let out = dft.apply(&pix).unwrap();
        let direct = dft_visibility(&img, &g);
        for (j, &s) in slots.iter().enumerate() {
            assert!(crate::vlbi::amplitude(out[0][j] - direct[s]) < 1e-10);
        }
    }
}
