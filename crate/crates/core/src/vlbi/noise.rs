use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{Complex64, ObservationGeometry, SiteTable, VlbiError};
use crate::math::{cos, sin, sqrt, TAU};

/// Default thermal scale for the noisy cases: ALMA-APEX gets about 0.06 Jy
/// and the weakest pairs about 1 Jy per visibility.
pub const ETA_PRESET: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThermalMode {
    None,
    /// Every site uses the mean SEFD of the table.
    Equal,
    SiteVarying,
}

/// Corruptions applied to ideal visibilities. Gains are always 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub thermal: ThermalMode,
    pub atmospheric: bool,
    /// Proportionality constant between `sqrt(SEFD_p SEFD_q)` and the
    /// baseline noise level.
    pub eta: f64,
}

impl NoiseConfig {
    pub fn none() -> Self {
        Self {
            thermal: ThermalMode::None,
            atmospheric: false,
            eta: 0.0,
        }
    }

    /// The six standard cases: 1 none, 2 equal thermal, 3 site-varying
    /// thermal, 4 atmospheric phase, 5 atmospheric + equal, 6 atmospheric +
    /// site-varying.
    pub fn case(id: u8, eta: f64) -> Result<Self, VlbiError> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(VlbiError::BadEta);
        }
        let (thermal, atmospheric) = match id {
            1 => (ThermalMode::None, false),
            2 => (ThermalMode::Equal, false),
            3 => (ThermalMode::SiteVarying, false),
            4 => (ThermalMode::None, true),
            5 => (ThermalMode::Equal, true),
            6 => (ThermalMode::SiteVarying, true),
            _ => return Err(VlbiError::BadNoiseCase(id)),
        };
        Ok(Self {
            thermal,
            atmospheric,
            eta,
        })
    }

    /// [`NoiseConfig::case`] with [`ETA_PRESET`].
    pub fn preset(id: u8) -> Result<Self, VlbiError> {
        Self::case(id, ETA_PRESET)
    }

    /// Baseline noise level for every site pair, in pair order.
    pub fn pair_sigmas(&self, sites: &SiteTable) -> Vec<f64> {
        let sefd = sites.sefds();
        let k = sefd.len();
        let mean = sefd.iter().sum::<f64>() / k.max(1) as f64;
        let mut out = Vec::with_capacity(k * k.saturating_sub(1) / 2);
        for p in 0..k {
            for q in p + 1..k {
                out.push(match self.thermal {
                    ThermalMode::None => 0.0,
                    ThermalMode::Equal => thermal_sigma(mean, mean, self.eta),
                    ThermalMode::SiteVarying => thermal_sigma(sefd[p], sefd[q], self.eta),
                });
            }
        }
        out
    }
}

/// `eta * sqrt(SEFD_p * SEFD_q)` in Jy.
pub fn thermal_sigma(sefd_p: f64, sefd_q: f64, eta: f64) -> f64 {
    eta * sqrt(sefd_p * sefd_q)
}

/// Visibilities on the visible slots of a geometry, with the noise
/// realization that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    /// Visible slots in increasing order.
    pub slots: Vec<usize>,
    pub vis: Vec<Complex64>,
    /// Thermal noise level per entry.
    pub sigma: Vec<f64>,
    /// Atmospheric phase per `t * K + p` (zero when disabled).
    pub site_phases: Vec<f64>,
    position: Vec<usize>,
}

impl MeasurementSet {
    /// Noise-free set from visibilities aligned with `geometry.visible_slots()`.
    pub fn ideal(geometry: &ObservationGeometry, vis: Vec<Complex64>) -> Result<Self, VlbiError> {
        let slots = geometry.visible_slots();
        if vis.len() != slots.len() {
            return Err(VlbiError::SizeMismatch {
                expected: slots.len(),
                got: vis.len(),
            });
        }
        let n = vis.len();
        Ok(Self::assemble(
            geometry,
            slots,
            vis,
            vec![0.0; n],
            vec![0.0; geometry.n_times() * geometry.n_sites()],
        ))
    }

    fn assemble(
        geometry: &ObservationGeometry,
        slots: Vec<usize>,
        vis: Vec<Complex64>,
        sigma: Vec<f64>,
        site_phases: Vec<f64>,
    ) -> Self {
        let mut position = vec![usize::MAX; geometry.n_slots()];
        for (i, &s) in slots.iter().enumerate() {
            position[s] = i;
        }
        Self {
            slots,
            vis,
            sigma,
            site_phases,
            position,
        }
    }

    pub fn len(&self) -> usize {
        self.vis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vis.is_empty()
    }

    /// `V_pq` at time `t` (conjugated when `p > q`), if measured.
    pub fn get(&self, geometry: &ObservationGeometry, t: usize, p: usize, q: usize) -> Option<Complex64> {
        if p == q {
            return None;
        }
        let i = *self.position.get(geometry.slot(t, p, q))?;
        let v = *self.vis.get(i)?;
        Some(if p < q { v } else { v.conj() })
    }
}

/// `V' = exp(-i (phi_p - phi_q)) V + n` on every visible slot.
pub fn corrupt<R: Rng + ?Sized>(
    ideal: &[Complex64],
    geometry: &ObservationGeometry,
    sites: &SiteTable,
    noise: &NoiseConfig,
    rng: &mut R,
) -> Result<MeasurementSet, VlbiError> {
    if sites.len() != geometry.n_sites() {
        return Err(VlbiError::SizeMismatch {
            expected: geometry.n_sites(),
            got: sites.len(),
        });
    }
    let slots = geometry.visible_slots();
    if ideal.len() != slots.len() {
        return Err(VlbiError::SizeMismatch {
            expected: slots.len(),
            got: ideal.len(),
        });
    }
    let k = geometry.n_sites();
    let phases: Vec<f64> = if noise.atmospheric {
        (0..geometry.n_times() * k).map(|_| rng.random::<f64>() * TAU).collect()
    } else {
        vec![0.0; geometry.n_times() * k]
    };
    let pair_sigma = noise.pair_sigmas(sites);
    let mut vis = Vec::with_capacity(slots.len());
    let mut sigma = Vec::with_capacity(slots.len());
    for (&s, &v) in slots.iter().zip(ideal) {
        let (t, p, q) = geometry.slot_info(s);
        let mut out = v;
        if noise.atmospheric {
            let d = phases[t * k + p] - phases[t * k + q];
            out = Complex64::new(cos(d), -sin(d)) * v;
        }
        let nu = pair_sigma[s % geometry.n_pairs()];
        if nu > 0.0 {
            let scale = nu / core::f64::consts::SQRT_2;
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            out += Complex64::new(scale * re, scale * im);
        }
        vis.push(out);
        sigma.push(nu);
    }
    Ok(MeasurementSet::assemble(geometry, slots, vis, sigma, phases))
}
