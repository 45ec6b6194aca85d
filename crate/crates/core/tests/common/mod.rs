//! Seeded random instances shared by the integration tests.

#![allow(dead_code)]

pub mod invariants;

use amm::incompat::{observables_assemblage, QubitBinaryObservable};
use amm::matlin::{c, c64, cmat, pinv_sqrt, ComplexMatrix, HermitianMatrix};
use amm::quantum::{DensityMatrix, MeasurementAssemblage, Povm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> c64 {
    c(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexMatrix {
    let entries: Vec<c64> = (0..rows * cols).map(|_| gaussian(rng)).collect();
    cmat(rows, cols, |i, j| entries[i * cols + j])
}

pub fn unit_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-6 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Ginibre state of rank `rank` on `C^da ⊗ C^db`.
pub fn random_state(rng: &mut ChaCha8Rng, dims: (usize, usize), rank: usize) -> DensityMatrix {
    let d = dims.0 * dims.1;
    let g = gaussian_matrix(rng, d, rank);
    let m = HermitianMatrix::hermitize((&g * g.adjoint()).as_ref());
    let m = m.scale(1.0 / m.trace());
    DensityMatrix::new(m, dims).expect("Ginibre state is valid")
}

/// Mixture of `terms` random product states.
pub fn random_separable(rng: &mut ChaCha8Rng, dims: (usize, usize), terms: usize) -> DensityMatrix {
    let mut acc: Option<DensityMatrix> = None;
    for k in 0..terms {
        let a = random_state(rng, (1, dims.0), 1);
        let b = random_state(rng, (1, dims.1), 1);
        let p = DensityMatrix::product(a.mat(), b.mat()).expect("product state");
        acc = Some(match acc {
            None => p,
            Some(prev) => {
                let w = 1.0 / (k as f64 + 1.0);
                prev.mix(&p, w).expect("mixture of states")
            }
        });
    }
    acc.expect("at least one term")
}

/// `n` unbiased binary qubit observables; sharp when `projective`.
pub fn random_qubit_observables(rng: &mut ChaCha8Rng, n: usize, projective: bool) -> MeasurementAssemblage {
    let obs: Vec<_> = (0..n)
        .map(|_| {
            let v = unit_vector(rng);
            let len = if projective { 1.0 } else { rng.random_range(0.4..1.0) };
            QubitBinaryObservable::unbiased([v[0] * len, v[1] * len, v[2] * len]).expect("valid observable")
        })
        .collect();
    observables_assemblage(&obs).expect("valid assemblage")
}

/// Random POVM with `k` outcomes of random rank on `C^d`.
pub fn random_povm(rng: &mut ChaCha8Rng, d: usize, k: usize) -> Povm {
    let gs: Vec<HermitianMatrix> = (0..k)
        .map(|i| {
            // A full-rank first element keeps the sum invertible.
            let rank = if i == 0 { d } else { rng.random_range(1..=d) };
            let a = gaussian_matrix(rng, d, rank);
            HermitianMatrix::hermitize((&a * a.adjoint()).as_ref())
        })
        .collect();
    let total = gs.iter().skip(1).fold(gs[0].clone(), |s, g| s.add(g));
    let inv = pinv_sqrt(&total, None).expect("PSD sum").result;
    let els = gs.iter().map(|g| g.sandwich(inv.as_mat())).collect();
    Povm::new(els).expect("normalized POVM")
}

pub fn random_measurements(rng: &mut ChaCha8Rng, d: usize, settings: usize, outcomes: usize) -> MeasurementAssemblage {
    MeasurementAssemblage::new((0..settings).map(|_| random_povm(rng, d, outcomes)).collect()).expect("valid assemblage")
}
