use alloc::vec;
use alloc::vec::Vec;

use super::{SiteTable, VlbiError, C_LIGHT};
use crate::math::{cos, sin, sqrt};

/// Hours of Greenwich sidereal time in one rotation.
pub const SIDEREAL_DAY_HOURS: f64 = 24.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub ra_hours: f64,
    pub dec_deg: f64,
    pub frequency_hz: f64,
}

impl Target {
    pub fn new(ra_hours: f64, dec_deg: f64, frequency_hz: f64) -> Result<Self, VlbiError> {
        if !(-90.0..=90.0).contains(&dec_deg) {
            return Err(VlbiError::BadDeclination);
        }
        if !(frequency_hz > 0.0 && frequency_hz.is_finite()) {
            return Err(VlbiError::BadFrequency);
        }
        Ok(Self {
            ra_hours,
            dec_deg,
            frequency_hz,
        })
    }

    /// Sgr A* at 230 GHz.
    pub fn sgr_a() -> Self {
        Self::new(17.761_122, -29.24, 230e9).expect("valid")
    }

    /// M87* at 230 GHz.
    pub fn m87() -> Self {
        Self::new(12.513_728, 12.39, 230e9).expect("valid")
    }

    pub fn wavelength(&self) -> f64 {
        C_LIGHT / self.frequency_hz
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// Greenwich sidereal times in hours.
    pub gst_hours: Vec<f64>,
    pub min_elevation_deg: f64,
}

impl Schedule {
    pub fn new(gst_hours: Vec<f64>, min_elevation_deg: f64) -> Result<Self, VlbiError> {
        if gst_hours.is_empty() {
            return Err(VlbiError::EmptySchedule);
        }
        if gst_hours.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(VlbiError::UnorderedSchedule);
        }
        Ok(Self {
            gst_hours,
            min_elevation_deg,
        })
    }

    /// `count` evenly spaced timestamps over one sidereal day.
    pub fn uniform(count: usize, min_elevation_deg: f64) -> Result<Self, VlbiError> {
        Self::new(
            (0..count).map(|i| SIDEREAL_DAY_HOURS * i as f64 / count as f64).collect(),
            min_elevation_deg,
        )
    }

    pub fn len(&self) -> usize {
        self.gst_hours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gst_hours.is_empty()
    }
}

/// Index of pair `(p, q)`, `p < q`, among `k` sites.
pub fn pair_index(k: usize, p: usize, q: usize) -> usize {
    debug_assert!(p < q && q < k);
    p * k - p * (p + 1) / 2 + (q - p - 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationGeometry {
    n_sites: usize,
    gst_hours: Vec<f64>,
    pairs: Vec<(usize, usize)>,
    /// `(u, v)` in wavelengths for each slot, oriented `p -> q` with `p < q`.
    uv: Vec<[f64; 2]>,
    /// Site above the elevation cut, indexed `t * K + p`.
    site_visible: Vec<bool>,
    elevation_deg: Vec<f64>,
}

impl ObservationGeometry {
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_times(&self) -> usize {
        self.gst_hours.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_slots(&self) -> usize {
        self.uv.len()
    }

    pub fn gst_hours(&self) -> &[f64] {
        &self.gst_hours
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn slot(&self, t: usize, p: usize, q: usize) -> usize {
        let (a, b) = if p < q { (p, q) } else { (q, p) };
        t * self.pairs.len() + pair_index(self.n_sites, a, b)
    }

    /// `(t, p, q)` of a slot, `p < q`.
    pub fn slot_info(&self, slot: usize) -> (usize, usize, usize) {
        let (p, q) = self.pairs[slot % self.pairs.len()];
        (slot / self.pairs.len(), p, q)
    }

    pub fn slot_uv(&self, slot: usize) -> [f64; 2] {
        self.uv[slot]
    }

    /// `(u, v)` of the ordered pair; `(q, p)` is the negation of `(p, q)`.
    pub fn uv(&self, t: usize, p: usize, q: usize) -> [f64; 2] {
        let w = self.uv[self.slot(t, p, q)];
        if p < q {
            w
        } else {
            [-w[0], -w[1]]
        }
    }

    pub fn site_visible(&self, t: usize, p: usize) -> bool {
        self.site_visible[t * self.n_sites + p]
    }

    pub fn elevation_deg(&self, t: usize, p: usize) -> f64 {
        self.elevation_deg[t * self.n_sites + p]
    }

    pub fn visible(&self, t: usize, p: usize, q: usize) -> bool {
        p != q && self.site_visible(t, p) && self.site_visible(t, q)
    }

    pub fn slot_visible(&self, slot: usize) -> bool {
        let (t, p, q) = self.slot_info(slot);
        self.visible(t, p, q)
    }

    /// Slots with both sites above the cut, in increasing order.
    pub fn visible_slots(&self) -> Vec<usize> {
        (0..self.n_slots()).filter(|&s| self.slot_visible(s)).collect()
    }

    /// Timestamps at which site `p` is above the cut.
    pub fn visible_times(&self, p: usize) -> usize {
        (0..self.n_times()).filter(|&t| self.site_visible(t, p)).count()
    }
}

/// Projects every baseline onto the sky plane at each timestamp.
pub fn uv_coverage(sites: &SiteTable, target: &Target, schedule: &Schedule) -> Result<ObservationGeometry, VlbiError> {
    if schedule.is_empty() {
        return Err(VlbiError::EmptySchedule);
    }
    let k = sites.len();
    let lambda = target.wavelength();
    let dec = target.dec_deg.to_radians();
    let (sd, cd) = (sin(dec), cos(dec));
    let sin_cut = sin(schedule.min_elevation_deg.to_radians());
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|p| (p + 1..k).map(move |q| (p, q))).collect();
    let radial: Vec<[f64; 3]> = sites
        .sites()
        .iter()
        .map(|s| {
            let [x, y, z] = s.position;
            let r = sqrt(x * x + y * y + z * z);
            if r > 0.0 {
                [x / r, y / r, z / r]
            } else {
                [0.0, 0.0, 0.0]
            }
        })
        .collect();

    let mut uv = Vec::with_capacity(schedule.len() * pairs.len());
    let mut site_visible = vec![false; schedule.len() * k];
    let mut elevation_deg = vec![0.0; schedule.len() * k];
    for (t, &gst) in schedule.gst_hours.iter().enumerate() {
        let h = ((gst - target.ra_hours) * 15.0).to_radians();
        let (sh, ch) = (sin(h), cos(h));
        let source = [cd * ch, -cd * sh, sd];
        let e_u = [sh, ch, 0.0];
        let e_v = [-sd * ch, sd * sh, cd];
        for p in 0..k {
            let r = radial[p];
            let sin_el = r[0] * source[0] + r[1] * source[1] + r[2] * source[2];
            elevation_deg[t * k + p] = libm::asin(sin_el.clamp(-1.0, 1.0)).to_degrees();
            site_visible[t * k + p] = sin_el > sin_cut;
        }
        for &(p, q) in &pairs {
            let a = sites.site(p).position;
            let b = sites.site(q).position;
            let base = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
            let dot = |e: [f64; 3]| (base[0] * e[0] + base[1] * e[1] + base[2] * e[2]) / lambda;
            uv.push([dot(e_u), dot(e_v)]);
        }
    }
    Ok(ObservationGeometry {
        n_sites: k,
        gst_hours: schedule.gst_hours.clone(),
        pairs,
        uv,
        site_visible,
        elevation_deg,
    })
}
