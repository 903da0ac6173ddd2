//! VLBI forward model: site geometry, uv coverage, visibilities, noise,
//! closure phases and measurement masking/packing.
//!
//! Complex visibilities are indexed by *slot* `t * P + pair`, where `pair`
//! enumerates site pairs `p < q` row by row and `P = K (K - 1) / 2`.

use alloc::string::String;

mod closure;
mod geometry;
mod image;
mod noise;
mod packing;
mod sites;

pub use closure::{closure_phases, Triangle, TriangleSet};
pub use geometry::{pair_index, uv_coverage, ObservationGeometry, Schedule, Target, SIDEREAL_DAY_HOURS};
pub use image::{dft_tape, dft_visibility, visibility_at, DftMatrix, Image, FOV_UAS, IMAGE_SIZE, UAS};
pub use noise::{corrupt, thermal_sigma, MeasurementSet, NoiseConfig, ThermalMode, ETA_PRESET};
pub use packing::{Layout, PackMode, Unpacked};
pub use sites::{geodetic_to_ecef, Site, SiteTable, EHT_PLUS_SITES, FUTURE_SEFD, FUTURE_SITES};

pub use num_complex::Complex64;

/// Speed of light in m/s.
pub const C_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VlbiError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("duplicate site name `{0}`")]
    DuplicateSite(String),
    #[error("unknown site `{0}`")]
    UnknownSite(String),
    #[error("SEFD of `{0}` must be positive")]
    BadSefd(String),
    #[error("declination must lie in [-90, 90] degrees")]
    BadDeclination,
    #[error("observing frequency must be positive")]
    BadFrequency,
    #[error("schedule needs at least one timestamp")]
    EmptySchedule,
    #[error("schedule timestamps must be strictly increasing")]
    UnorderedSchedule,
    #[error("expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("image pixels must be finite and nonnegative")]
    BadImage,
    #[error("noise case must be 1 to 6, got {0}")]
    BadNoiseCase(u8),
    #[error("thermal scale must be finite and nonnegative")]
    BadEta,
}

/// `|v|`.
pub fn amplitude(v: Complex64) -> f64 {
    libm::hypot(v.re, v.im)
}

/// `arg v` in `(-pi, pi]`.
pub fn phase(v: Complex64) -> f64 {
    crate::math::wrap_angle(libm::atan2(v.im, v.re))
}
