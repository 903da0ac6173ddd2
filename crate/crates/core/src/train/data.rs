//! Training images: synthetic black-hole-like shapes and augmentation.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::math::{atan2, cos, exp, floor, sigmoid, sin, sqrt, PI, TAU};

/// Where training images come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Random rings, crescents, disks and Gaussian blobs.
    Synthetic { count: usize },
    /// Externally loaded square images (already at the training size).
    Images(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub source: DataSource,
    pub rotate: bool,
    pub elastic: bool,
    /// Peak displacement of the elastic field, in pixels of a 32x32 grid.
    pub elastic_amplitude: f64,
}

impl DatasetSpec {
    pub fn synthetic(count: usize) -> Self {
        Self {
            source: DataSource::Synthetic { count },
            rotate: true,
            elastic: true,
            elastic_amplitude: 1.5,
        }
    }
}

/// Images normalized to a total flux of 1 Jy.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub size: usize,
    pub images: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn build<R: Rng + ?Sized>(spec: &DatasetSpec, size: usize, rng: &mut R) -> Self {
        let base: Vec<Vec<f64>> = match &spec.source {
            DataSource::Synthetic { count } => (0..*count).map(|_| synthetic_image(size, rng)).collect(),
            DataSource::Images(images) => images.clone(),
        };
        let images = base
            .into_iter()
            .map(|img| {
                let opts = AugmentOptions {
                    rotate: spec.rotate,
                    elastic: spec.elastic,
                    elastic_amplitude: spec.elastic_amplitude,
                };
                augment(&img, size, &opts, rng)
            })
            .collect();
        Self { size, images }
    }
}

/// Scales to unit total flux; an all-zero image becomes uniform.
pub fn normalize_flux(image: &mut [f64]) {
    let total: f64 = image.iter().sum();
    if total > 0.0 {
        image.iter_mut().for_each(|v| *v /= total);
    } else {
        let n = image.len() as f64;
        image.iter_mut().for_each(|v| *v = 1.0 / n);
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// One random geometric source on a `size x size` grid, 1 Jy total.
pub fn synthetic_image<R: Rng + ?Sized>(size: usize, rng: &mut R) -> Vec<f64> {
    // shape parameters are drawn in 32-pixel units and rescaled
    let s = size as f64 / 32.0;
    let c = (size / 2) as f64;
    let kind = rng.random_range(0..4u8);
    let cy = c + s * uniform(rng, -3.0, 3.0);
    let cx = c + s * uniform(rng, -3.0, 3.0);
    let mut img = vec![0.0; size * size];
    let polar = |y: usize, x: usize| {
        let dy = y as f64 - cy;
        let dx = x as f64 - cx;
        (sqrt(dy * dy + dx * dx), atan2(dy, dx))
    };
    match kind {
        0 | 1 => {
            let radius = s * uniform(rng, 4.0, 10.0);
            let width = s * uniform(rng, 1.0, 2.5);
            let asym = if kind == 1 { uniform(rng, 0.3, 1.0) } else { 0.0 };
            let phi0 = uniform(rng, 0.0, TAU);
            for y in 0..size {
                for x in 0..size {
                    let (r, phi) = polar(y, x);
                    let ring = exp(-(r - radius) * (r - radius) / (2.0 * width * width));
                    img[y * size + x] = ring * (1.0 + asym * cos(phi - phi0));
                }
            }
        }
        2 => {
            let radius = s * uniform(rng, 3.0, 9.0);
            let edge = 0.7 * s.max(0.25);
            for y in 0..size {
                for x in 0..size {
                    let (r, _) = polar(y, x);
                    img[y * size + x] = sigmoid((radius - r) / edge);
                }
            }
        }
        _ => {
            let count = rng.random_range(1..=4usize);
            for _ in 0..count {
                let by = c + s * uniform(rng, -8.0, 8.0);
                let bx = c + s * uniform(rng, -8.0, 8.0);
                let sigma = s * uniform(rng, 1.0, 4.0);
                let weight = uniform(rng, 0.3, 1.0);
                for y in 0..size {
                    for x in 0..size {
                        let (dy, dx) = (y as f64 - by, x as f64 - bx);
                        let d2 = dy * dy + dx * dx;
                        img[y * size + x] += weight * exp(-d2 / (2.0 * sigma * sigma));
                    }
                }
            }
        }
    }
    normalize_flux(&mut img);
    img
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentOptions {
    pub rotate: bool,
    pub elastic: bool,
    pub elastic_amplitude: f64,
}

/// Bilinear sample with zero outside the grid.
fn bilinear(image: &[f64], size: usize, y: f64, x: f64) -> f64 {
    let y0 = floor(y);
    let x0 = floor(x);
    let (fy, fx) = (y - y0, x - x0);
    let at = |yy: f64, xx: f64| {
        if yy < 0.0 || xx < 0.0 || yy >= size as f64 || xx >= size as f64 {
            0.0
        } else {
            image[yy as usize * size + xx as usize]
        }
    };
    let mut v = (1.0 - fy) * (1.0 - fx) * at(y0, x0);
    if fx > 0.0 {
        v += (1.0 - fy) * fx * at(y0, x0 + 1.0);
    }
    if fy > 0.0 {
        v += fy * (1.0 - fx) * at(y0 + 1.0, x0);
        if fx > 0.0 {
            v += fy * fx * at(y0 + 1.0, x0 + 1.0);
        }
    }
    v
}

/// Smooth random displacement: a few random low-frequency sinusoids.
fn elastic_field<R: Rng + ?Sized>(size: usize, amplitude: f64, rng: &mut R) -> Vec<[f64; 2]> {
    let terms: Vec<[f64; 5]> = (0..6)
        .map(|_| {
            let ky = uniform(rng, -2.0, 2.0) * TAU / size as f64;
            let kx = uniform(rng, -2.0, 2.0) * TAU / size as f64;
            let ph = uniform(rng, 0.0, TAU);
            let ay: f64 = rng.sample(StandardNormal);
            let ax: f64 = rng.sample(StandardNormal);
            [ky, kx, ph, ay, ax]
        })
        .collect();
    let norm = amplitude / sqrt(terms.len() as f64);
    (0..size * size)
        .map(|i| {
            let (y, x) = ((i / size) as f64, (i % size) as f64);
            let mut d = [0.0, 0.0];
            for t in &terms {
                let w = sin(t[0] * y + t[1] * x + t[2]);
                d[0] += norm * t[3] * w;
                d[1] += norm * t[4] * w;
            }
            d
        })
        .collect()
}

/// Random rotation about the grid centre and a smooth local deformation,
/// then renormalization to 1 Jy.
pub fn augment<R: Rng + ?Sized>(image: &[f64], size: usize, opts: &AugmentOptions, rng: &mut R) -> Vec<f64> {
    let angle = if opts.rotate { uniform(rng, -PI, PI) } else { 0.0 };
    let field = if opts.elastic {
        Some(elastic_field(size, opts.elastic_amplitude * size as f64 / 32.0, rng))
    } else {
        None
    };
    let mut out = augment_with(image, size, angle, field.as_deref());
    normalize_flux(&mut out);
    out
}

/// Deterministic core of [`augment`]: inverse-maps each output pixel
/// through the deformation then the rotation.
pub fn augment_with(image: &[f64], size: usize, angle: f64, field: Option<&[[f64; 2]]>) -> Vec<f64> {
    let c = (size / 2) as f64;
    let (sa, ca) = (sin(angle), cos(angle));
    (0..size * size)
        .map(|i| {
            let (mut y, mut x) = ((i / size) as f64, (i % size) as f64);
            if let Some(f) = field {
                y += f[i][0];
                x += f[i][1];
            }
            let (dy, dx) = (y - c, x - c);
            let sy = c + ca * dy - sa * dx;
            let sx = c + sa * dy + ca * dx;
            bilinear(image, size, sy, sx).max(0.0)
        })
        .collect()
}
