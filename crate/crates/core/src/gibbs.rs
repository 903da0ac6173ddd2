//! Exact and relaxed Gibbs sampling of an [`IsingModel`].
//!
//! Both samplers consume the same noise: one vector of uniforms `U^(0)` for
//! initialization and one `U^(i)` per layer. The exact update sets
//! `x_j = sgn(sigma(2 h_j) - u_j)`; the relaxed one replaces `sgn` with
//! `tanh(s1 * .)`, so for large `s1` the two agree pathwise.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::autodiff::{AutodiffError, Tape, Tensor, Var, GATHER_ZERO};
use crate::ising::{packed_index, packed_len, IsingModel, SpinState};
use crate::math::{sigmoid, tanh};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GibbsError {
    #[error("number of layers must be at least 1")]
    NoLayers,
    #[error("slopes must be positive")]
    BadSlope,
    #[error("ordering for layer {0} is not a permutation of the sites")]
    BadOrdering(usize),
    #[error("expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("noise values must lie in [0, 1)")]
    NoiseOutOfRange,
    #[error("mask values must lie in [0, 1]")]
    MaskOutOfRange,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsConfig {
    pub num_layers: usize,
    pub s1: f64,
    pub s2: f64,
    /// One site permutation per layer.
    pub orderings: Vec<Vec<usize>>,
}

impl GibbsConfig {
    pub fn new(n: usize, num_layers: usize, s1: f64, s2: f64, orderings: Vec<Vec<usize>>) -> Result<Self, GibbsError> {
        if num_layers == 0 {
            return Err(GibbsError::NoLayers);
        }
        if !(s1 > 0.0 && s2 > 0.0) {
            return Err(GibbsError::BadSlope);
        }
        if orderings.len() != num_layers {
            return Err(GibbsError::SizeMismatch {
                expected: num_layers,
                got: orderings.len(),
            });
        }
        for (i, o) in orderings.iter().enumerate() {
            if !is_permutation(o, n) {
                return Err(GibbsError::BadOrdering(i));
            }
        }
        Ok(Self {
            num_layers,
            s1,
            s2,
            orderings,
        })
    }

    /// Five layers, `s1 = 3`, `s2 = 10`, identity orderings.
    pub fn standard(n: usize) -> Self {
        Self {
            num_layers: 5,
            s1: 3.0,
            s2: 10.0,
            orderings: vec![(0..n).collect(); 5],
        }
    }

    pub fn n(&self) -> usize {
        self.orderings.first().map_or(0, Vec::len)
    }
}

fn is_permutation(o: &[usize], n: usize) -> bool {
    if o.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &j in o {
        if j >= n || seen[j] {
            return false;
        }
        seen[j] = true;
    }
    true
}

/// Uniform draws driving one chain: `layers[0]` initializes, `layers[i]`
/// drives layer `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsNoise {
    pub layers: Vec<Vec<f64>>,
}

impl GibbsNoise {
    pub fn new(layers: Vec<Vec<f64>>) -> Result<Self, GibbsError> {
        if layers.iter().flatten().any(|&u| !(0.0..1.0).contains(&u)) {
            return Err(GibbsError::NoiseOutOfRange);
        }
        Ok(Self { layers })
    }

    fn check(&self, n: usize, num_layers: usize) -> Result<(), GibbsError> {
        if self.layers.len() != num_layers + 1 {
            return Err(GibbsError::SizeMismatch {
                expected: num_layers + 1,
                got: self.layers.len(),
            });
        }
        for l in &self.layers {
            if l.len() != n {
                return Err(GibbsError::SizeMismatch { expected: n, got: l.len() });
            }
        }
        Ok(())
    }
}

pub fn fresh_noise<R: Rng + ?Sized>(rng: &mut R, n: usize, num_layers: usize) -> GibbsNoise {
    GibbsNoise {
        layers: (0..=num_layers)
            .map(|_| (0..n).map(|_| rng.random::<f64>()).collect())
            .collect(),
    }
}

pub fn fresh_orderings<R: Rng + ?Sized>(rng: &mut R, n: usize, num_layers: usize) -> Vec<Vec<usize>> {
    (0..num_layers)
        .map(|_| {
            let mut o: Vec<usize> = (0..n).collect();
            o.shuffle(rng);
            o
        })
        .collect()
}

/// A sensor-selection pattern with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask(Vec<f64>);

impl Mask {
    pub fn new(values: Vec<f64>) -> Result<Self, GibbsError> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(GibbsError::MaskOutOfRange);
        }
        Ok(Self(values))
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn selected(&self, j: usize) -> bool {
        self.0[j] > 0.5
    }

    /// Number of entries above 0.5.
    pub fn count_selected(&self) -> usize {
        self.0.iter().filter(|&&v| v > 0.5).count()
    }

    /// Entries rounded to 0 or 1 (ties go to 0).
    pub fn rounded(&self) -> Mask {
        Mask(self.0.iter().map(|&v| if v > 0.5 { 1.0 } else { 0.0 }).collect())
    }
}

/// Per-site frequency of `M_j > 0.5`.
pub fn mask_marginals(masks: &[Mask]) -> Option<Vec<f64>> {
    let n = masks.first()?.len();
    let mut freq = vec![0.0; n];
    for m in masks {
        for (f, &v) in freq.iter_mut().zip(m.values()) {
            if v > 0.5 {
                *f += 1.0;
            }
        }
    }
    let count = masks.len() as f64;
    Some(freq.into_iter().map(|f| f / count).collect())
}

/// `sgn(y)` with `sgn(0) = -1`.
fn sgn(y: f64) -> i8 {
    if y > 0.0 {
        1
    } else {
        -1
    }
}

pub fn init_state(u0: &[f64]) -> SpinState {
    SpinState::new(u0.iter().map(|&u| sgn(0.5 - u)).collect()).expect("sgn yields +-1")
}

fn check_state(model: &IsingModel, len: usize) -> Result<(), GibbsError> {
    if len != model.n() {
        return Err(GibbsError::SizeMismatch {
            expected: model.n(),
            got: len,
        });
    }
    Ok(())
}

/// One sweep with prescribed uniforms: `x_j = sgn(sigma(2 h_j) - u_j)`.
pub fn gibbs_step_with_noise(
    model: &IsingModel,
    state: &SpinState,
    ordering: &[usize],
    u: &[f64],
) -> Result<SpinState, GibbsError> {
    check_state(model, state.len())?;
    check_state(model, u.len())?;
    if !is_permutation(ordering, model.n()) {
        return Err(GibbsError::BadOrdering(0));
    }
    let mut x = state.to_f64();
    for &j in ordering {
        let p = sigmoid(2.0 * model.local_field(j, &x));
        x[j] = sgn(p - u[j]) as f64;
    }
    Ok(SpinState::new(x.iter().map(|&v| v as i8).collect()).expect("spins"))
}

/// One sequential sweep drawing each site from its exact conditional.
pub fn gibbs_step_exact<R: Rng + ?Sized>(
    model: &IsingModel,
    state: &SpinState,
    ordering: &[usize],
    rng: &mut R,
) -> Result<SpinState, GibbsError> {
    let u: Vec<f64> = (0..model.n()).map(|_| rng.random::<f64>()).collect();
    gibbs_step_with_noise(model, state, ordering, &u)
}

/// Relaxed sweep in place: `x_j = tanh(s1 (sigma(2 h_j) - u_j))`.
pub fn relaxed_layer(
    model: &IsingModel,
    state: &mut [f64],
    u: &[f64],
    s1: f64,
    ordering: &[usize],
) -> Result<(), GibbsError> {
    check_state(model, state.len())?;
    check_state(model, u.len())?;
    if !is_permutation(ordering, model.n()) {
        return Err(GibbsError::BadOrdering(0));
    }
    for &j in ordering {
        let p = sigmoid(2.0 * model.local_field(j, state));
        state[j] = tanh(s1 * (p - u[j]));
    }
    Ok(())
}

/// Runs all relaxed layers from [`init_state`]; returns the mask
/// `sigma(s2 X^(N))` and the final relaxed state `X^(N)`.
pub fn sample_mask(model: &IsingModel, config: &GibbsConfig, noise: &GibbsNoise) -> Result<(Mask, Vec<f64>), GibbsError> {
    check_state(model, config.n())?;
    noise.check(model.n(), config.num_layers)?;
    let mut x = init_state(&noise.layers[0]).to_f64();
    for (layer, ordering) in config.orderings.iter().enumerate() {
        relaxed_layer(model, &mut x, &noise.layers[layer + 1], config.s1, ordering)?;
    }
    let m = x.iter().map(|&v| sigmoid(config.s2 * v)).collect();
    Ok((Mask(m), x))
}

/// Tape handles for the unpacked parameter matrix.
#[derive(Debug, Clone, Copy)]
pub struct ThetaVars {
    /// `[n, n]` couplings with a zero diagonal.
    pub offdiag: Var,
    /// `[n, n]` couplings above the diagonal only.
    pub upper: Var,
    /// `[n, 1]` activities.
    pub diag: Var,
}

/// Unpacks a packed `n(n+1)/2` parameter vector on the tape.
pub fn unpack_theta(tape: &mut Tape, packed: Var, n: usize) -> Result<ThetaVars, AutodiffError> {
    if tape.shape(packed) != [packed_len(n)] {
        return Err(AutodiffError::ShapeMismatch {
            op: "unpack_theta",
            lhs: tape.shape(packed).to_vec(),
            rhs: vec![packed_len(n)],
        });
    }
    let mut off = Vec::with_capacity(n * n);
    let mut up = Vec::with_capacity(n * n);
    for j in 0..n {
        for k in 0..n {
            off.push(if j == k { GATHER_ZERO } else { packed_index(n, j, k) });
            up.push(if j < k { packed_index(n, j, k) } else { GATHER_ZERO });
        }
    }
    let offdiag = tape.gather(packed, off)?;
    let offdiag = tape.reshape(offdiag, &[n, n])?;
    let upper = tape.gather(packed, up)?;
    let upper = tape.reshape(upper, &[n, n])?;
    let diag = tape.gather(packed, (0..n).map(|j| packed_index(n, j, j)).collect())?;
    let diag = tape.reshape(diag, &[n, 1])?;
    Ok(ThetaVars { offdiag, upper, diag })
}

/// Batched relaxed sampler recorded on the tape, one chain per noise
/// entry. Returns `(masks, states)`, both `[B, n]`.
pub fn sample_mask_tape(
    tape: &mut Tape,
    theta: &ThetaVars,
    config: &GibbsConfig,
    noise: &[GibbsNoise],
) -> Result<(Var, Var), AutodiffError> {
    let n = tape.shape(theta.diag)[0];
    let b = noise.len();
    let bad = |_| AutodiffError::InvalidArgument {
        op: "sample_mask_tape",
        reason: "noise does not match the sampler configuration",
    };
    if config.n() != n {
        return Err(AutodiffError::InvalidArgument {
            op: "sample_mask_tape",
            reason: "ordering length differs from the number of sites",
        });
    }
    for nz in noise {
        nz.check(n, config.num_layers).map_err(bad)?;
    }
    let column = |tape: &mut Tape, layer: usize, j: usize| {
        tape.constant(Tensor::from_vec(&[b, 1], noise.iter().map(|nz| nz.layers[layer][j]).collect()).expect("shape"))
    };
    let mut cols: Vec<Var> = (0..n)
        .map(|j| {
            let init = noise.iter().map(|nz| sgn(0.5 - nz.layers[0][j]) as f64).collect();
            tape.constant(Tensor::from_vec(&[b, 1], init).expect("shape"))
        })
        .collect();
    let mut diag_j = Vec::with_capacity(n);
    let mut off_j = Vec::with_capacity(n);
    for j in 0..n {
        diag_j.push(tape.slice(theta.diag, 0, j, 1)?);
        off_j.push(tape.slice(theta.offdiag, 1, j, 1)?);
    }
    for (layer, ordering) in config.orderings.iter().enumerate() {
        for &j in ordering {
            let x = tape.concat(&cols, 1)?;
            let coupling = tape.matmul(x, off_j[j])?;
            let h = tape.add(coupling, diag_j[j])?;
            let h2 = tape.scale(h, 2.0);
            let p = tape.sigmoid(h2);
            let u = column(tape, layer + 1, j);
            let d = tape.sub(p, u)?;
            let d = tape.scale(d, config.s1);
            cols[j] = tape.tanh(d);
        }
    }
    let state = tape.concat(&cols, 1)?;
    let scaled = tape.scale(state, config.s2);
    let mask = tape.sigmoid(scaled);
    Ok((mask, state))
}

/// `H(X_b)` for each row of a `[B, n]` relaxed state; returns `[B, 1]`.
pub fn hamiltonian_tape(tape: &mut Tape, theta: &ThetaVars, state: Var) -> Result<Var, AutodiffError> {
    let xu = tape.matmul(state, theta.upper)?;
    let pair = tape.mul(xu, state)?;
    let pair = tape.sum_axis(pair, 1)?;
    let field = tape.matmul(state, theta.diag)?;
    let neg = tape.add(pair, field)?;
    Ok(tape.scale(neg, -1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    #[test]
    fn init_rule() {
        assert_eq!(init_state(&[0.2, 0.9, 0.5]).spins(), &[1, -1, -1]);
    }

    #[test]
    fn relaxed_fixed_points() {
        let m = IsingModel::zeros(2).unwrap();
        let mut x = vec![1.0, -1.0];
        relaxed_layer(&m, &mut x, &[0.5, 0.0], 3.0, &[0, 1]).unwrap();
        assert_eq!(x[0], 0.0);
        assert!((x[1] - tanh(1.5)).abs() < 1e-15);
        assert!((x[1] - 0.9051482536448664).abs() < 1e-12);
    }

    #[test]
    fn mask_conversion() {
        let m = IsingModel::zeros(1).unwrap();
        let cfg = GibbsConfig::standard(1);
        let noise = GibbsNoise::new(vec![vec![0.2]; 6]).unwrap();
        let (mask, x) = sample_mask(&m, &cfg, &noise).unwrap();
        assert!((mask.values()[0] - sigmoid(10.0 * x[0])).abs() < 1e-15);
        assert!((sigmoid(10.0) - 0.9999546).abs() < 1e-6);
    }

    #[test]
    fn exact_single_site_frequency() {
        let mut m = IsingModel::zeros(1).unwrap();
        m.set_activity(0, 1.0);
        let mut rng = seeded_rng(11);
        let mut s = SpinState::new(vec![-1]).unwrap();
        let mut ups = 0;
        let steps = 100_000;
        for _ in 0..steps {
            s = gibbs_step_exact(&m, &s, &[0], &mut rng).unwrap();
            ups += (s.spins()[0] == 1) as usize;
        }
        assert!((ups as f64 / steps as f64 - sigmoid(2.0)).abs() < 0.01);
    }

    #[test]
    fn tape_sampler_matches_plain() {
        let n = 4;
        let mut rng = seeded_rng(5);
        let packed: Vec<f64> = (0..packed_len(n)).map(|_| rng.random::<f64>() - 0.5).collect();
        let model = IsingModel::from_packed(n, &packed).unwrap();
        let cfg = GibbsConfig::new(n, 3, 3.0, 10.0, fresh_orderings(&mut rng, n, 3)).unwrap();
        let noise: Vec<_> = (0..3).map(|_| fresh_noise(&mut rng, n, 3)).collect();
        let mut tape = Tape::new();
        let p = tape.variable(Tensor::from_vec(&[packed_len(n)], packed).unwrap());
        let th = unpack_theta(&mut tape, p, n).unwrap();
        let (mask, state) = sample_mask_tape(&mut tape, &th, &cfg, &noise).unwrap();
        let h = hamiltonian_tape(&mut tape, &th, state).unwrap();
        for (b, nz) in noise.iter().enumerate() {
            let (m, x) = sample_mask(&model, &cfg, nz).unwrap();
            for j in 0..n {
                assert!((tape.value(mask).data()[b * n + j] - m.values()[j]).abs() < 1e-14);
            }
            assert!((tape.value(h).data()[b] - model.hamiltonian(&x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        assert_eq!(
            GibbsConfig::new(3, 1, 3.0, 10.0, vec![vec![0, 0, 1]]),
            Err(GibbsError::BadOrdering(0))
        );
        assert_eq!(GibbsConfig::new(3, 0, 3.0, 10.0, vec![]), Err(GibbsError::NoLayers));
        assert_eq!(
            GibbsConfig::new(3, 1, 0.0, 10.0, vec![vec![0, 1, 2]]),
            Err(GibbsError::BadSlope)
        );
    }

    #[test]
    fn noise_and_orderings_valid() {
        let mut rng = seeded_rng(1);
        let nz = fresh_noise(&mut rng, 7, 5);
        assert!(GibbsNoise::new(nz.layers.clone()).is_ok());
        for o in fresh_orderings(&mut rng, 7, 5) {
            assert!(is_permutation(&o, 7));
        }
    }
}
