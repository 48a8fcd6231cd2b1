//! Seeded generators for random matrices, states and POVMs.
//!
//! Used by the property and acceptance tests; every generator takes the RNG
//! explicitly so runs are reproducible from a seed.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{extend_orthonormal, psd_sqrt, pseudo_inverse, ComplexMatrix, Tolerances};
use crate::povm::Povm;
use crate::simulator::QuantumState;

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn random_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| gaussian(rng)).collect()
}

/// Matrix with i.i.d. complex Gaussian entries.
pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// Product of Gaussian `rows × rank` and `rank × cols` factors, so the rank is
/// `rank` with probability one.
pub fn random_rank_deficient<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, rank: usize) -> ComplexMatrix {
    let left = random_matrix(rng, rows, rank);
    let right = random_matrix(rng, rank, cols);
    &left * &right
}

pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexMatrix {
    random_matrix(rng, n, n).hermitian_part()
}

/// `G G†` for Gaussian `G`; full rank with probability one.
pub fn random_psd<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexMatrix {
    let g = random_matrix(rng, n, n);
    &g * &g.adjoint()
}

/// Unitary from Gram-Schmidt on Gaussian columns.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexMatrix {
    let cols = extend_orthonormal(&[], (0..).map(|_| random_vector(rng, n)), n, 1e-6);
    ComplexMatrix::from_columns(&cols)
}

/// Random density matrix of the given rank (clamped to `1..=d`).
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, d: usize, rank: usize) -> QuantumState {
    let g = random_matrix(rng, d, rank.clamp(1, d));
    let rho = &g * &g.adjoint();
    let tr = rho.trace().re;
    QuantumState::new(rho.scale_real(1.0 / tr), &Tolerances::default()).expect("Gaussian Gram matrix is a valid state")
}

/// Random mixed state with a uniformly chosen rank.
pub fn random_mixed_state<R: Rng + ?Sized>(rng: &mut R, d: usize) -> QuantumState {
    let rank = rng.random_range(1..=d);
    random_density(rng, d, rank)
}

/// Symmetrises a list of PSD operators into a POVM: with `G = Σ P_j`, each
/// element becomes `G^{-1/2} P_j G^{-1/2}`. `G` must be invertible.
pub fn normalize_to_povm(parts: &[ComplexMatrix]) -> Povm {
    let tol = Tolerances::default();
    let d = parts[0].rows();
    let total = parts.iter().fold(ComplexMatrix::zeros(d, d), |acc, p| &acc + p);
    let inv_sqrt = pseudo_inverse(&psd_sqrt(&total, &tol).expect("Gram matrix is PSD"), &tol);
    let elements: Vec<_> = parts
        .iter()
        .map(|p| (&(&inv_sqrt * p) * &inv_sqrt).hermitian_part())
        .collect();
    Povm::validate(elements, &tol).expect("symmetrised POVM is valid")
}

/// `n` rank-1 elements on dimension `d` (`n ≥ d`).
pub fn random_rank1_povm<R: Rng + ?Sized>(rng: &mut R, d: usize, n: usize) -> Povm {
    assert!(n >= d, "need at least d rank-1 elements");
    let parts: Vec<_> = (0..n).map(|_| ComplexMatrix::ket_bra(&random_vector(rng, d))).collect();
    normalize_to_povm(&parts)
}

/// `n` elements with independently drawn ranks in `1..=d`. Ranks are bumped
/// when needed so that the elements span the space.
pub fn random_mixed_rank_povm<R: Rng + ?Sized>(rng: &mut R, d: usize, n: usize) -> Povm {
    let mut ranks: Vec<usize> = (0..n).map(|_| rng.random_range(1..=d)).collect();
    let mut i = 0;
    while ranks.iter().sum::<usize>() < d {
        if ranks[i % n] < d {
            ranks[i % n] += 1;
        }
        i += 1;
    }
    let parts: Vec<_> = ranks
        .iter()
        .map(|&r| {
            let a = random_matrix(rng, d, r);
            &a * &a.adjoint()
        })
        .collect();
    normalize_to_povm(&parts)
}
