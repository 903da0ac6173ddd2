use alloc::vec::Vec;

use super::{MeasurementSet, ObservationGeometry};
use crate::math::{atan2, wrap_angle};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triangle {
    pub t: usize,
    /// `(r, q, b)`: anchor first, then `q < b`.
    pub sites: [usize; 3],
    /// All three sites are above the cut.
    pub present: bool,
}

/// Non-redundant closure triangles: at each timestamp, every triangle
/// through the lowest-index visible site. Each timestamp owns a fixed block
/// of `(K-1 choose 2)` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleSet {
    per_time: usize,
    anchors: Vec<Option<usize>>,
    triangles: Vec<Triangle>,
}

impl TriangleSet {
    pub fn new(geometry: &ObservationGeometry) -> Self {
        let k = geometry.n_sites();
        let per_time = if k < 3 { 0 } else { (k - 1) * (k - 2) / 2 };
        let mut anchors = Vec::with_capacity(geometry.n_times());
        let mut triangles = Vec::with_capacity(geometry.n_times() * per_time);
        for t in 0..geometry.n_times() {
            let anchor = (0..k).find(|&p| geometry.site_visible(t, p));
            anchors.push(anchor);
            if per_time == 0 {
                continue;
            }
            let r = anchor.unwrap_or(0);
            let others: Vec<usize> = (0..k).filter(|&p| p != r).collect();
            for (i, &q) in others.iter().enumerate() {
                for &b in &others[i + 1..] {
                    triangles.push(Triangle {
                        t,
                        sites: [r, q, b],
                        present: anchor.is_some() && geometry.site_visible(t, q) && geometry.site_visible(t, b),
                    });
                }
            }
        }
        Self {
            per_time,
            anchors,
            triangles,
        }
    }

    pub fn per_time(&self) -> usize {
        self.per_time
    }

    pub fn anchor(&self, t: usize) -> Option<usize> {
        self.anchors[t]
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn present(&self) -> impl Iterator<Item = (usize, &Triangle)> {
        self.triangles.iter().enumerate().filter(|(_, tr)| tr.present)
    }
}

/// `arg(V_rq V_qb V_br)` wrapped to `(-pi, pi]` for each triangle slot;
/// `None` when a member visibility is missing.
pub fn closure_phases(ms: &MeasurementSet, geometry: &ObservationGeometry, triangles: &TriangleSet) -> Vec<Option<f64>> {
    triangles
        .triangles
        .iter()
        .map(|tr| {
            if !tr.present {
                return None;
            }
            let [r, q, b] = tr.sites;
            let v1 = ms.get(geometry, tr.t, r, q)?;
            let v2 = ms.get(geometry, tr.t, q, b)?;
            let v3 = ms.get(geometry, tr.t, b, r)?;
            let prod = v1 * v2 * v3;
            Some(wrap_angle(atan2(prod.im, prod.re)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vlbi::{uv_coverage, Schedule, SiteTable, Target};

    #[test]
    fn counts_per_timestamp() {
        let g = uv_coverage(&SiteTable::eht_plus(), &Target::sgr_a(), &Schedule::uniform(6, 10.0).unwrap()).unwrap();
        let tris = TriangleSet::new(&g);
        assert_eq!(tris.per_time(), 55);
        assert_eq!(tris.len(), 6 * 55);
        for tr in tris.triangles() {
            if tr.present {
                assert!(tr.sites[0] < tr.sites[1] && tr.sites[1] < tr.sites[2]);
            }
        }
    }
}
