use isingarray_core::ising::{packed_index, packed_len, IsingModel, SpinState};
use isingarray_core::seeded_rng;
use proptest::prelude::*;
use rand::Rng;

fn random_model(n: usize, seed: u64) -> IsingModel {
    let mut rng = seeded_rng(seed);
    let packed: Vec<f64> = (0..packed_len(n)).map(|_| rng.random_range(-1.0..1.0)).collect();
    IsingModel::from_packed(n, &packed).unwrap()
}

/// Independent energy: walks the full matrix and halves the double-counted
/// couplings.
fn oracle_energy(m: &IsingModel, x: &[f64]) -> f64 {
    let n = m.n();
    let mut e = 0.0;
    for j in 0..n {
        e -= m.theta(j, j) * x[j];
        for k in 0..n {
            if k != j {
                e -= 0.5 * m.theta(j, k) * x[j] * x[k];
            }
        }
    }
    e
}

fn spins(index: usize, n: usize) -> Vec<f64> {
    (0..n).map(|j| if index >> j & 1 == 1 { 1.0 } else { -1.0 }).collect()
}

fn oracle_distribution(m: &IsingModel) -> Vec<f64> {
    let n = m.n();
    let w: Vec<f64> = (0..1usize << n).map(|i| (-oracle_energy(m, &spins(i, n))).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

#[test]
fn energy_examples() {
    let mut m = IsingModel::zeros(2).unwrap();
    m.set_activity(0, 1.0);
    m.set_coupling(0, 1, 0.5);
    assert_eq!(m.hamiltonian(&[1.0, 1.0]).unwrap(), -1.5);
    assert_eq!(m.hamiltonian(&[-1.0, 1.0]).unwrap(), 1.5);
    assert!((m.log_partition().unwrap() - (1.5f64.exp() + (-1.5f64).exp() + 0.5f64.exp() + (-0.5f64).exp()).ln()).abs() < 1e-12);
    let zero = IsingModel::zeros(5).unwrap();
    assert!((zero.entropy().unwrap() - 5.0 * 2f64.ln()).abs() < 1e-12);
}

#[test]
fn enumeration_matches_oracle() {
    for seed in 0..10 {
        let n = 2 + seed as usize % 7;
        let m = random_model(n, seed);
        let p = m.distribution().unwrap();
        let q = oracle_distribution(&m);
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-12);
        }
        let s: f64 = -q.iter().map(|v| v * v.ln()).sum::<f64>();
        assert!((m.entropy().unwrap() - s).abs() < 1e-10);
    }
}

#[test]
fn entropy_identity() {
    for seed in 0..20 {
        let n = 1 + seed as usize % 12;
        let m = random_model(n, 100 + seed);
        let lhs = m.entropy().unwrap();
        let rhs = m.expected_energy().unwrap() + m.log_partition().unwrap();
        assert!((lhs - rhs).abs() < 1e-8, "n={n}: {lhs} vs {rhs}");
    }
}

#[test]
fn conditional_matches_brute_force() {
    for seed in 0..20 {
        let n = 3 + seed as usize % 7;
        let m = random_model(n, 200 + seed);
        let mut rng = seeded_rng(seed);
        let fixed_count = 1 + seed as usize % (n - 1);
        let mut sites: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            sites.swap(i, rng.random_range(0..=i));
        }
        let known: Vec<(usize, i8)> = sites[..fixed_count]
            .iter()
            .map(|&j| (j, if rng.random::<bool>() { 1 } else { -1 }))
            .collect();
        let (cond, unknown) = m.conditional(&known).unwrap();
        assert_eq!(cond.n(), n - fixed_count);

        let joint = oracle_distribution(&m);
        let consistent = |i: usize| known.iter().all(|&(j, s)| (i >> j & 1 == 1) == (s == 1));
        let norm: f64 = (0..joint.len()).filter(|&i| consistent(i)).map(|i| joint[i]).sum();
        let cd = cond.distribution().unwrap();
        for i in (0..joint.len()).filter(|&i| consistent(i)) {
            let mut ci = 0;
            for (r, &j) in unknown.iter().enumerate() {
                if i >> j & 1 == 1 {
                    ci |= 1 << r;
                }
            }
            assert!((cd[ci] - joint[i] / norm).abs() < 1e-10);
        }
    }
}

#[test]
fn conditioning_rejects_everything_fixed() {
    let m = random_model(3, 1);
    assert!(m.conditional(&[(0, 1), (1, 1), (2, -1)]).is_err());
    assert!(m.conditional(&[(0, 1), (0, -1)]).is_err());
}

#[test]
fn cliques_match_triple_scan() {
    for seed in 0..10 {
        let n = 5 + seed as usize % 8;
        let m = random_model(n, 300 + seed);
        let tau = 0.1;
        let mut brute = Vec::new();
        for j in 0..n {
            for k in j + 1..n {
                for l in k + 1..n {
                    let (a, b, c) = (m.theta(j, k), m.theta(k, l), m.theta(j, l));
                    if a > tau && b > tau && c > tau {
                        brute.push(([j, k, l], a + b + c));
                    }
                }
            }
        }
        brute.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        let report = m.find_three_cliques(tau);
        assert_eq!(report.triples.len(), brute.len());
        for (c, (s, score)) in report.triples.iter().zip(&brute) {
            assert_eq!(&c.sites, s);
            assert!((c.score - score).abs() < 1e-12);
        }
        assert!(m.find_three_cliques(10.0).triples.is_empty());
    }
}

proptest! {
    #[test]
    fn packed_round_trip(n in 1usize..8, seed in 0u64..1000) {
        let m = random_model(n, seed);
        let again = IsingModel::from_packed(n, &m.packed()).unwrap();
        prop_assert_eq!(&m, &again);
        for j in 0..n {
            for k in j..n {
                prop_assert_eq!(m.theta(j, k), m.theta(k, j));
                prop_assert_eq!(m.theta(j, k), m.packed()[packed_index(n, j, k)]);
            }
        }
    }

    #[test]
    fn energy_matches_oracle(n in 1usize..9, seed in 0u64..1000, index in 0usize..256) {
        let m = random_model(n, seed);
        let x = spins(index % (1 << n), n);
        let e = m.hamiltonian(&x).unwrap();
        prop_assert!((e - oracle_energy(&m, &x)).abs() < 1e-12);
        let state = SpinState::from_index(index % (1 << n), n);
        prop_assert_eq!(state.index(), index % (1 << n));
        prop_assert!((m.energy(&state).unwrap() - e).abs() < 1e-12);
    }

    #[test]
    fn couplings_only_models_are_flip_symmetric(n in 2usize..8, seed in 0u64..1000, index in 0usize..128) {
        let mut m = random_model(n, seed);
        for j in 0..n {
            m.set_activity(j, 0.0);
        }
        let x = spins(index % (1 << n), n);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        prop_assert!((m.hamiltonian(&x).unwrap() - m.hamiltonian(&neg).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn distribution_is_normalized(n in 1usize..10, seed in 0u64..1000) {
        let p = random_model(n, seed).distribution().unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| v > 0.0));
    }
}
