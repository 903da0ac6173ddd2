//! Fully-connected binary Ising model over `n` sites.
//!
//! The parameter matrix is symmetric: the diagonal holds per-site
//! activities and the off-diagonal entries hold pairwise couplings. The
//! energy of a spin configuration `x` in `{-1, +1}^n` is
//!
//! ```text
//! H(x) = -sum_j theta_jj x_j - sum_{j<k} theta_jk x_j x_k
//! ```
//!
//! and `p(x) = exp(-H(x)) / Z`. Everything that needs `Z` enumerates all
//! `2^n` states and is therefore limited to [`MAX_ENUMERATION_SITES`].

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::math::{exp, log, log_sum_exp};

/// Largest model the enumeration oracles accept.
pub const MAX_ENUMERATION_SITES: usize = 20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IsingError {
    #[error("model needs at least one site")]
    NoSites,
    #[error("expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("theta is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("enumeration over {0} sites exceeds the limit of {MAX_ENUMERATION_SITES}")]
    TooLarge(usize),
    #[error("site index {0} out of range")]
    BadSite(usize),
    #[error("spin values must be +1 or -1")]
    BadSpin,
    #[error("conditioning must leave at least one unknown site")]
    NoUnknownSites,
    #[error("site {0} is assigned more than once")]
    RepeatedSite(usize),
    #[error("no samples")]
    NoSamples,
}

/// A configuration of `n` spins, each exactly `+1` or `-1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinState(Vec<i8>);

impl SpinState {
    pub fn new(spins: Vec<i8>) -> Result<Self, IsingError> {
        if spins.iter().any(|&s| s != 1 && s != -1) {
            return Err(IsingError::BadSpin);
        }
        Ok(Self(spins))
    }

    /// Site `j` is `+1` iff bit `j` of `index` is set.
    pub fn from_index(index: usize, n: usize) -> Self {
        Self((0..n).map(|j| if index >> j & 1 == 1 { 1 } else { -1 }).collect())
    }

    pub fn index(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 1)
            .fold(0, |acc, (j, _)| acc | 1 << j)
    }

    pub fn spins(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&s| s as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsingModel {
    n: usize,
    theta: Vec<f64>,
}

/// Position of `(j, k)`, `j <= k`, in the packed upper triangle (row-major,
/// diagonal included).
pub fn packed_index(n: usize, j: usize, k: usize) -> usize {
    let (j, k) = if j <= k { (j, k) } else { (k, j) };
    j * n - j * (j + 1) / 2 + k
}

pub fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

impl IsingModel {
    /// All-zero model (uniform distribution).
    pub fn zeros(n: usize) -> Result<Self, IsingError> {
        if n == 0 {
            return Err(IsingError::NoSites);
        }
        Ok(Self {
            n,
            theta: vec![0.0; n * n],
        })
    }

    /// From a full row-major `n x n` matrix; must be exactly symmetric.
    pub fn from_matrix(n: usize, theta: Vec<f64>) -> Result<Self, IsingError> {
        if n == 0 {
            return Err(IsingError::NoSites);
        }
        if theta.len() != n * n {
            return Err(IsingError::SizeMismatch {
                expected: n * n,
                got: theta.len(),
            });
        }
        for j in 0..n {
            for k in j + 1..n {
                if theta[j * n + k] != theta[k * n + j] {
                    return Err(IsingError::NotSymmetric(j, k));
                }
            }
        }
        Ok(Self { n, theta })
    }

    /// From the `n(n+1)/2` free values of the upper triangle.
    pub fn from_packed(n: usize, packed: &[f64]) -> Result<Self, IsingError> {
        if n == 0 {
            return Err(IsingError::NoSites);
        }
        if packed.len() != packed_len(n) {
            return Err(IsingError::SizeMismatch {
                expected: packed_len(n),
                got: packed.len(),
            });
        }
        let mut theta = vec![0.0; n * n];
        for j in 0..n {
            for k in j..n {
                let v = packed[packed_index(n, j, k)];
                theta[j * n + k] = v;
                theta[k * n + j] = v;
            }
        }
        Ok(Self { n, theta })
    }

    pub fn packed(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(packed_len(self.n));
        for j in 0..self.n {
            for k in j..self.n {
                out.push(self.theta[j * self.n + k]);
            }
        }
        out
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Row-major symmetric matrix.
    pub fn matrix(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta(&self, j: usize, k: usize) -> f64 {
        self.theta[j * self.n + k]
    }

    pub fn activity(&self, j: usize) -> f64 {
        self.theta(j, j)
    }

    pub fn set_activity(&mut self, j: usize, value: f64) {
        self.theta[j * self.n + j] = value;
    }

    /// Sets `theta_jk` and its mirror.
    pub fn set_coupling(&mut self, j: usize, k: usize, value: f64) {
        self.theta[j * self.n + k] = value;
        self.theta[k * self.n + j] = value;
    }

    fn check_len(&self, len: usize) -> Result<(), IsingError> {
        if len != self.n {
            return Err(IsingError::SizeMismatch {
                expected: self.n,
                got: len,
            });
        }
        Ok(())
    }

    /// Energy of a state. Relaxed states in `[-1, 1]^n` use the same
    /// bilinear formula.
    pub fn hamiltonian(&self, x: &[f64]) -> Result<f64, IsingError> {
        self.check_len(x.len())?;
        Ok(self.energy_unchecked(x))
    }

    fn energy_unchecked(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut e = 0.0;
        for j in 0..n {
            let row = &self.theta[j * n..][..n];
            let mut pair = 0.0;
            for k in j + 1..n {
                pair += row[k] * x[k];
            }
            e -= (row[j] + pair) * x[j];
        }
        e
    }

    pub fn energy(&self, state: &SpinState) -> Result<f64, IsingError> {
        self.hamiltonian(&state.to_f64())
    }

    /// `theta_jj + sum_{k != j} theta_jk x_k`.
    pub fn local_field(&self, j: usize, x: &[f64]) -> f64 {
        let row = &self.theta[j * self.n..][..self.n];
        let mut h = row[j];
        for (k, (&t, &xk)) in row.iter().zip(x).enumerate() {
            if k != j {
                h += t * xk;
            }
        }
        h
    }

    fn check_enumerable(&self) -> Result<(), IsingError> {
        if self.n > MAX_ENUMERATION_SITES {
            return Err(IsingError::TooLarge(self.n));
        }
        Ok(())
    }

    /// `-H(x)` for every state, indexed by [`SpinState::index`].
    fn neg_energies(&self) -> Result<Vec<f64>, IsingError> {
        self.check_enumerable()?;
        let n = self.n;
        let mut x = vec![0.0; n];
        Ok((0..1usize << n)
            .map(|s| {
                for (j, xj) in x.iter_mut().enumerate() {
                    *xj = if s >> j & 1 == 1 { 1.0 } else { -1.0 };
                }
                -self.energy_unchecked(&x)
            })
            .collect())
    }

    pub fn log_partition(&self) -> Result<f64, IsingError> {
        Ok(log_sum_exp(&self.neg_energies()?))
    }

    pub fn partition_function(&self) -> Result<f64, IsingError> {
        Ok(exp(self.log_partition()?))
    }

    /// Exact Boltzmann probabilities of all `2^n` states.
    pub fn distribution(&self) -> Result<Vec<f64>, IsingError> {
        let ne = self.neg_energies()?;
        let lz = log_sum_exp(&ne);
        Ok(ne.into_iter().map(|v| exp(v - lz)).collect())
    }

    pub fn probability(&self, state: &SpinState) -> Result<f64, IsingError> {
        self.check_len(state.len())?;
        let lz = self.log_partition()?;
        Ok(exp(-self.energy(state)? - lz))
    }

    /// `-sum_x p(x) log p(x)`, computed directly from the probabilities.
    pub fn entropy(&self) -> Result<f64, IsingError> {
        let ne = self.neg_energies()?;
        let lz = log_sum_exp(&ne);
        Ok(-ne
            .iter()
            .map(|&v| {
                let lp = v - lz;
                let p = exp(lp);
                if p > 0.0 {
                    p * lp
                } else {
                    0.0
                }
            })
            .sum::<f64>())
    }

    /// `E[H]` under the model's own distribution.
    pub fn expected_energy(&self) -> Result<f64, IsingError> {
        let ne = self.neg_energies()?;
        let lz = log_sum_exp(&ne);
        Ok(ne.iter().map(|&v| -v * exp(v - lz)).sum())
    }

    /// Ising model over the sites not in `known`, given their values.
    ///
    /// Returns the conditional model and, for each of its sites, the index
    /// of the corresponding site in `self` (increasing order).
    pub fn conditional(&self, known: &[(usize, i8)]) -> Result<(IsingModel, Vec<usize>), IsingError> {
        let n = self.n;
        let mut assigned = vec![None; n];
        for &(j, s) in known {
            if j >= n {
                return Err(IsingError::BadSite(j));
            }
            if s != 1 && s != -1 {
                return Err(IsingError::BadSpin);
            }
            if assigned[j].is_some() {
                return Err(IsingError::RepeatedSite(j));
            }
            assigned[j] = Some(s as f64);
        }
        let unknown: Vec<usize> = (0..n).filter(|&j| assigned[j].is_none()).collect();
        if unknown.is_empty() {
            return Err(IsingError::NoUnknownSites);
        }
        let m = unknown.len();
        let mut theta = vec![0.0; m * m];
        for (a, &j) in unknown.iter().enumerate() {
            let mut act = self.theta(j, j);
            for (l, v) in assigned.iter().enumerate() {
                if let Some(xl) = v {
                    act += self.theta(j, l) * xl;
                }
            }
            theta[a * m + a] = act;
            for (b, &k) in unknown.iter().enumerate() {
                if a != b {
                    theta[a * m + b] = self.theta(j, k);
                }
            }
        }
        Ok((IsingModel { n: m, theta }, unknown))
    }

    /// All triples whose three pairwise couplings exceed `tau`, ranked by
    /// coupling sum (descending; ties in lexicographic index order).
    pub fn find_three_cliques(&self, tau: f64) -> CliqueReport {
        let n = self.n;
        let neighbours: Vec<Vec<usize>> = (0..n)
            .map(|j| (j + 1..n).filter(|&k| self.theta(j, k) > tau).collect())
            .collect();
        let mut triples = Vec::new();
        for j in 0..n {
            for (a, &k) in neighbours[j].iter().enumerate() {
                for &l in &neighbours[j][a + 1..] {
                    if self.theta(k, l) > tau {
                        triples.push(Clique {
                            sites: [j, k, l],
                            score: self.theta(j, k) + self.theta(k, l) + self.theta(j, l),
                        });
                    }
                }
            }
        }
        triples.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.sites.cmp(&b.sites)));
        CliqueReport { tau, triples }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clique {
    /// Increasing site indices `(j, k, l)`.
    pub sites: [usize; 3],
    /// `theta_jk + theta_kl + theta_jl`.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliqueReport {
    pub tau: f64,
    pub triples: Vec<Clique>,
}

/// Inverse-CDF sampler over the enumerated Boltzmann distribution.
#[derive(Debug, Clone)]
pub struct ExactSampler {
    n: usize,
    cdf: Vec<f64>,
}

impl ExactSampler {
    pub fn new(model: &IsingModel) -> Result<Self, IsingError> {
        let p = model.distribution()?;
        let mut acc = 0.0;
        let cdf = p
            .iter()
            .map(|&v| {
                acc += v;
                acc
            })
            .collect();
        Ok(Self { n: model.n, cdf })
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SpinState {
        SpinState::from_index(self.sample_index(rng), self.n)
    }
}

/// One exact draw; build an [`ExactSampler`] when drawing repeatedly.
pub fn exact_sample<R: Rng + ?Sized>(model: &IsingModel, rng: &mut R) -> Result<SpinState, IsingError> {
    Ok(ExactSampler::new(model)?.sample(rng))
}

/// Per-site frequency of `+1`.
pub fn spin_marginals(samples: &[SpinState]) -> Result<Vec<f64>, IsingError> {
    let first = samples.first().ok_or(IsingError::NoSamples)?;
    let mut freq = vec![0.0; first.len()];
    for s in samples {
        if s.len() != freq.len() {
            return Err(IsingError::SizeMismatch {
                expected: freq.len(),
                got: s.len(),
            });
        }
        for (f, &x) in freq.iter_mut().zip(s.spins()) {
            if x == 1 {
                *f += 1.0;
            }
        }
    }
    let n = samples.len() as f64;
    Ok(freq.into_iter().map(|f| f / n).collect())
}

/// Binary entropy in nats.
pub fn binary_entropy(p: f64) -> f64 {
    let mut h = 0.0;
    if p > 0.0 {
        h -= p * log(p);
    }
    if p < 1.0 {
        h -= (1.0 - p) * log(1.0 - p);
    }
    h
}
