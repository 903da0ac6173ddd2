use alloc::vec::Vec;

use super::{closure_phases, Complex64, MeasurementSet, ObservationGeometry, TriangleSet, VlbiError};
use crate::autodiff::{AutodiffError, Tape, Tensor, Var};
use crate::math::{cos, sin};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PackMode {
    /// Interleaved `(Re, Im)` per visibility.
    Complex,
    /// Amplitudes, then `(cos C, sin C)` per closure triangle.
    AmpClosure,
}

/// Fixed decoder-input layout for one geometry.
///
/// Only slots the geometry can ever observe get an entry, so the vector
/// length depends on the geometry alone; sites removed by a mask leave
/// zeros in their entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    mode: PackMode,
    n_sites: usize,
    vis_slots: Vec<usize>,
    tri_slots: Vec<usize>,
    /// Sites whose mask values multiply each entry; `n_sites` means "none".
    factors: [Vec<usize>; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub enum Unpacked {
    Complex(Vec<Complex64>),
    AmpClosure { amps: Vec<f64>, closure: Vec<[f64; 2]> },
}

impl Layout {
    pub fn new(geometry: &ObservationGeometry, triangles: &TriangleSet, mode: PackMode) -> Self {
        let k = geometry.n_sites();
        let vis_slots = geometry.visible_slots();
        let tri_slots: Vec<usize> = match mode {
            PackMode::Complex => Vec::new(),
            PackMode::AmpClosure => triangles.present().map(|(i, _)| i).collect(),
        };
        let mut factors = [Vec::new(), Vec::new(), Vec::new()];
        let mut push = |sites: [usize; 3]| {
            for (f, s) in factors.iter_mut().zip(sites) {
                f.push(s);
            }
        };
        for &s in &vis_slots {
            let (_, p, q) = geometry.slot_info(s);
            let reps = if mode == PackMode::Complex { 2 } else { 1 };
            for _ in 0..reps {
                push([p, q, k]);
            }
        }
        for &i in &tri_slots {
            let tr = triangles.triangles()[i];
            push(tr.sites);
            push(tr.sites);
        }
        Self {
            mode,
            n_sites: k,
            vis_slots,
            tri_slots,
            factors,
        }
    }

    pub fn mode(&self) -> PackMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.factors[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// Number of visibility (or amplitude) slots.
    pub fn n_vis(&self) -> usize {
        self.vis_slots.len()
    }

    pub fn n_closure(&self) -> usize {
        self.tri_slots.len()
    }

    pub fn vis_slots(&self) -> &[usize] {
        &self.vis_slots
    }

    /// Indices into the [`TriangleSet`] of the packed closure entries.
    pub fn tri_slots(&self) -> &[usize] {
        &self.tri_slots
    }

    /// Unmasked measurement vector.
    pub fn pack(
        &self,
        ms: &MeasurementSet,
        geometry: &ObservationGeometry,
        triangles: &TriangleSet,
    ) -> Result<Vec<f64>, VlbiError> {
        if ms.slots != self.vis_slots {
            return Err(VlbiError::SizeMismatch {
                expected: self.vis_slots.len(),
                got: ms.slots.len(),
            });
        }
        let mut out = Vec::with_capacity(self.len());
        match self.mode {
            PackMode::Complex => {
                for v in &ms.vis {
                    out.push(v.re);
                    out.push(v.im);
                }
            }
            PackMode::AmpClosure => {
                out.extend(ms.vis.iter().map(|&v| super::amplitude(v)));
                let phases = closure_phases(ms, geometry, triangles);
                for &i in &self.tri_slots {
                    match phases[i] {
                        Some(c) => {
                            out.push(cos(c));
                            out.push(sin(c));
                        }
                        None => out.extend([0.0, 0.0]),
                    }
                }
            }
        }
        Ok(out)
    }

    /// Product of the mask values of the sites behind each entry.
    pub fn mask_factors(&self, mask: &[f64]) -> Result<Vec<f64>, VlbiError> {
        if mask.len() != self.n_sites {
            return Err(VlbiError::SizeMismatch {
                expected: self.n_sites,
                got: mask.len(),
            });
        }
        let m = |j: usize| if j == self.n_sites { 1.0 } else { mask[j] };
        Ok((0..self.len())
            .map(|i| m(self.factors[0][i]) * m(self.factors[1][i]) * m(self.factors[2][i]))
            .collect())
    }

    /// Scales each entry by `M_p M_q` (visibilities, amplitudes) or
    /// `M_p M_q M_b` (closure-phase encodings).
    pub fn apply_mask(&self, mask: &[f64], packed: &[f64]) -> Result<Vec<f64>, VlbiError> {
        if packed.len() != self.len() {
            return Err(VlbiError::SizeMismatch {
                expected: self.len(),
                got: packed.len(),
            });
        }
        Ok(self
            .mask_factors(mask)?
            .into_iter()
            .zip(packed)
            .map(|(f, v)| f * v)
            .collect())
    }

    pub fn unpack(&self, packed: &[f64]) -> Result<Unpacked, VlbiError> {
        if packed.len() != self.len() {
            return Err(VlbiError::SizeMismatch {
                expected: self.len(),
                got: packed.len(),
            });
        }
        Ok(match self.mode {
            PackMode::Complex => Unpacked::Complex(packed.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect()),
            PackMode::AmpClosure => {
                let (amps, rest) = packed.split_at(self.n_vis());
                Unpacked::AmpClosure {
                    amps: amps.to_vec(),
                    closure: rest.chunks(2).map(|c| [c[0], c[1]]).collect(),
                }
            }
        })
    }

    /// Masks a batch of packed vectors `[B, L]` with masks `[B, K]` on the tape.
    pub fn mask_tape(&self, tape: &mut Tape, masks: Var, packed: Var) -> Result<Var, AutodiffError> {
        let b = tape.shape(masks)[0];
        let ones = tape.constant(Tensor::filled(&[b, 1], 1.0));
        let extended = tape.concat(&[masks, ones], 1)?;
        let f0 = tape.gather(extended, self.factors[0].clone())?;
        let f1 = tape.gather(extended, self.factors[1].clone())?;
        let mut f = tape.mul(f0, f1)?;
        if self.mode == PackMode::AmpClosure && !self.tri_slots.is_empty() {
            let f2 = tape.gather(extended, self.factors[2].clone())?;
            f = tape.mul(f, f2)?;
        }
        tape.mul(f, packed)
    }
}
