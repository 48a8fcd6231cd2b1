//! Sequential-measurement simulation of compiled trees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{min_eigenvalue, ComplexMatrix, LinalgError, Tolerances};
use crate::povm::{OutcomeLabel, Povm};
use crate::tree::{MeasurementTree, TreeNode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("state dimension {found} does not match system dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("shot count must be at least one")]
    NoShots,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Density matrix of a `d`-level system.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    density: ComplexMatrix,
}

impl QuantumState {
    /// Validates Hermiticity, unit trace and positivity within `tol.check`.
    pub fn new(density: ComplexMatrix, tol: &Tolerances) -> Result<Self, SimError> {
        if !density.is_square() {
            return Err(SimError::InvalidState(format!(
                "density matrix is {}x{}",
                density.rows(),
                density.cols()
            )));
        }
        let herm = density.hermiticity_residual();
        if herm > tol.check {
            return Err(SimError::InvalidState(format!("not Hermitian (residual {herm:e})")));
        }
        let tr = density.trace();
        if (tr.re - 1.0).abs() > tol.check || tr.im.abs() > tol.check {
            return Err(SimError::InvalidState(format!("trace is {tr}, not 1")));
        }
        let min = min_eigenvalue(&density, tol)?;
        if min < -tol.check {
            return Err(SimError::InvalidState(format!(
                "minimum eigenvalue {min:e} is negative"
            )));
        }
        Ok(Self { density })
    }

    /// `|ψ⟩⟨ψ|/⟨ψ|ψ⟩`.
    pub fn pure(psi: &[num_complex::Complex64]) -> Self {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        Self {
            density: ComplexMatrix::ket_bra(psi).scale_real(1.0 / norm),
        }
    }

    /// Computational basis state `|k⟩⟨k|`.
    pub fn basis(d: usize, k: usize) -> Self {
        let mut diag = vec![0.0; d];
        diag[k] = 1.0;
        Self {
            density: ComplexMatrix::from_real_diagonal(&diag),
        }
    }

    /// `I/d`.
    pub fn maximally_mixed(d: usize) -> Self {
        Self {
            density: ComplexMatrix::identity(d).scale_real(1.0 / d as f64),
        }
    }

    /// Hermitian part of `sigma` divided by its trace. `sigma` must have a
    /// positive trace.
    fn from_unnormalized(sigma: &ComplexMatrix) -> Self {
        let h = sigma.hermitian_part();
        let tr = h.trace().re;
        Self {
            density: h.scale_real(1.0 / tr),
        }
    }

    pub fn dim(&self) -> usize {
        self.density.rows()
    }

    pub fn density(&self) -> &ComplexMatrix {
        &self.density
    }
}

/// `p_j = Tr[M_j ρ]`, clamped to `[0, 1]`.
pub fn direct_probabilities(p: &Povm, state: &QuantumState) -> Result<Vec<f64>, SimError> {
    if state.dim() != p.dim() {
        return Err(SimError::DimensionMismatch {
            expected: p.dim(),
            found: state.dim(),
        });
    }
    Ok(p.elements()
        .iter()
        .map(|m| (m * state.density()).trace().re.clamp(0.0, 1.0))
        .collect())
}

/// Result of following one root-to-leaf path.
#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    /// Outcome index in the tree's (padded) POVM.
    pub outcome: usize,
    pub label: OutcomeLabel,
    /// Probe results along the path, e.g. `"01"`.
    pub path: String,
    pub probability: f64,
    /// Conditional post-measurement state; `None` when the leaf is unreached
    /// (probability below `tol.check`).
    pub post_state: Option<QuantumState>,
}

enum Branch {
    /// Normalised state reached with the given probability.
    Reached(f64, ComplexMatrix),
    /// Below the pruning threshold; the state is carried unnormalised so
    /// that leaf probabilities stay exact.
    Pruned(ComplexMatrix),
}

fn descend(
    node: &TreeNode,
    branch: Branch,
    tree: &MeasurementTree,
    tol: &Tolerances,
    out: &mut Vec<SimulationOutcome>,
) {
    let Some(children) = node.children() else {
        let j = node.outcomes[0];
        let (probability, post_state) = match branch {
            Branch::Reached(p, rho) => (p, Some(QuantumState { density: rho })),
            Branch::Pruned(sigma) => (sigma.trace().re.max(0.0), None),
        };
        out.push(SimulationOutcome {
            outcome: j,
            label: tree.labels()[j].clone(),
            path: node.path.clone(),
            probability,
            post_state,
        });
        return;
    };
    for child in children {
        let b = child
            .node_kraus
            .as_ref()
            .expect("non-root nodes carry a Kraus operator");
        let next = match &branch {
            Branch::Reached(p, rho) => {
                let sigma = b.conjugate(rho);
                let q = sigma.trace().re.max(0.0);
                let reach = p * q;
                if reach < tol.check {
                    Branch::Pruned(sigma.scale_real(*p))
                } else {
                    Branch::Reached(reach, QuantumState::from_unnormalized(&sigma).density)
                }
            }
            Branch::Pruned(sigma) => Branch::Pruned(b.conjugate(sigma)),
        };
        descend(child, next, tree, tol, out);
    }
}

/// Exact propagation of `state` through every branch of `tree`.
///
/// At each node the branch probability `Tr[b ρ b†]` multiplies the path
/// probability and the state is renormalised. Results are in leaf order.
pub fn propagate(
    tree: &MeasurementTree,
    state: &QuantumState,
    tol: &Tolerances,
) -> Result<Vec<SimulationOutcome>, SimError> {
    if state.dim() != tree.dim() {
        return Err(SimError::DimensionMismatch {
            expected: tree.dim(),
            found: state.dim(),
        });
    }
    let mut out = Vec::with_capacity(tree.povm.len());
    descend(
        &tree.root,
        Branch::Reached(1.0, state.density.clone()),
        tree,
        tol,
        &mut out,
    );
    Ok(out)
}

/// Leaf probabilities from [`propagate`], indexed by outcome.
pub fn tree_probabilities(
    tree: &MeasurementTree,
    state: &QuantumState,
    tol: &Tolerances,
) -> Result<Vec<f64>, SimError> {
    let mut probs = vec![0.0; tree.povm.len()];
    for o in propagate(tree, state, tol)? {
        probs[o.outcome] = o.probability;
    }
    Ok(probs)
}

/// Tallies from a seeded Monte Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleReport {
    pub seed: u64,
    pub shots: u64,
    pub labels: Vec<OutcomeLabel>,
    /// Counts per outcome index.
    pub counts: Vec<u64>,
    /// Exact probabilities per outcome index.
    pub expected: Vec<f64>,
    /// Largest `|count − n·p| / √(n·p·(1−p))` over outcomes.
    pub max_sigma_deviation: f64,
}

/// Shots per independently seeded chunk. Chunk `c` draws from the ChaCha8
/// stream `c` of the master seed, so results do not depend on how chunks are
/// scheduled across threads.
pub const SHOTS_PER_CHUNK: u64 = 1 << 16;

/// Conditional branch probabilities stored heap-style: node `i` has children
/// `2i` and `2i+1`; leaves occupy `n..2n` in leaf order.
struct BranchTable {
    left: Vec<f64>,
    leaf_outcome: Vec<usize>,
}

impl BranchTable {
    fn new(outcomes: &[SimulationOutcome]) -> Self {
        let n = outcomes.len();
        let mut mass = vec![0.0; 2 * n];
        for (i, o) in outcomes.iter().enumerate() {
            mass[n + i] = o.probability;
        }
        for i in (1..n).rev() {
            mass[i] = mass[2 * i] + mass[2 * i + 1];
        }
        let left = (0..n)
            .map(|i| {
                if i == 0 {
                    0.0
                } else if mass[i] > 0.0 {
                    mass[2 * i] / mass[i]
                } else {
                    0.5
                }
            })
            .collect();
        Self {
            left,
            leaf_outcome: outcomes.iter().map(|o| o.outcome).collect(),
        }
    }

    fn walk(&self, rng: &mut impl Rng) -> usize {
        let n = self.leaf_outcome.len();
        let mut i = 1;
        while i < n {
            let u: f64 = rng.random();
            i = if u < self.left[i] { 2 * i } else { 2 * i + 1 };
        }
        self.leaf_outcome[i - n]
    }

    fn run_chunk(&self, seed: u64, chunk: u64, shots: u64, outcomes: usize) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chunk);
        let mut counts = vec![0u64; outcomes];
        for _ in 0..shots {
            counts[self.walk(&mut rng)] += 1;
        }
        counts
    }
}

fn chunk_sizes(shots: u64) -> Vec<(u64, u64)> {
    let n = shots.div_ceil(SHOTS_PER_CHUNK);
    (0..n)
        .map(|c| (c, SHOTS_PER_CHUNK.min(shots - c * SHOTS_PER_CHUNK)))
        .collect()
}

fn sample_impl(
    tree: &MeasurementTree,
    state: &QuantumState,
    shots: u64,
    seed: u64,
    parallel: bool,
) -> Result<SampleReport, SimError> {
    if shots == 0 {
        return Err(SimError::NoShots);
    }
    let tol = tree.tolerances;
    let outcomes = propagate(tree, state, &tol)?;
    let table = BranchTable::new(&outcomes);
    let n = tree.povm.len();
    let chunks = chunk_sizes(shots);
    let run = |&(c, s): &(u64, u64)| table.run_chunk(seed, c, s, n);
    let partials: Vec<Vec<u64>> = if parallel {
        chunks.par_iter().map(run).collect()
    } else {
        chunks.iter().map(run).collect()
    };
    let mut counts = vec![0u64; n];
    for part in partials {
        for (c, p) in counts.iter_mut().zip(part) {
            *c += p;
        }
    }

    let mut expected = vec![0.0; n];
    for o in &outcomes {
        expected[o.outcome] = o.probability;
    }
    let max_sigma_deviation = counts
        .iter()
        .zip(&expected)
        .map(|(&c, &p)| sigma_deviation(c, p, shots))
        .fold(0.0, f64::max);
    Ok(SampleReport {
        seed,
        shots,
        labels: tree.labels().to_vec(),
        counts,
        expected,
        max_sigma_deviation,
    })
}

fn sigma_deviation(count: u64, p: f64, shots: u64) -> f64 {
    let n = shots as f64;
    let mean = n * p;
    let var = n * p * (1.0 - p);
    let diff = (count as f64 - mean).abs();
    if var > 0.0 {
        diff / var.sqrt()
    } else if diff < 0.5 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Samples `shots` root-to-leaf walks, choosing each branch from its
/// conditional probability. Chunks run in parallel; the report is identical to
/// [`sample_sequential`] for the same seed.
pub fn sample(tree: &MeasurementTree, state: &QuantumState, shots: u64, seed: u64) -> Result<SampleReport, SimError> {
    sample_impl(tree, state, shots, seed, true)
}

/// Single-threaded reference for [`sample`].
pub fn sample_sequential(
    tree: &MeasurementTree,
    state: &QuantumState,
    shots: u64,
    seed: u64,
) -> Result<SampleReport, SimError> {
    sample_impl(tree, state, shots, seed, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::tetrad;
    use crate::random::{random_mixed_rank_povm, random_mixed_state, random_rank1_povm, random_unitary};
    use crate::tree::{compile, compile_default, SplitCoefficients};

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn projective() -> Povm {
        Povm::validate(
            vec![
                ComplexMatrix::from_real_diagonal(&[1.0, 0.0]),
                ComplexMatrix::from_real_diagonal(&[0.0, 1.0]),
            ],
            &tol(),
        )
        .unwrap()
    }

    #[test]
    fn state_validation() {
        assert!(QuantumState::new(ComplexMatrix::identity(2), &tol()).is_err());
        assert!(QuantumState::new(ComplexMatrix::from_real_diagonal(&[1.5, -0.5]), &tol()).is_err());
        assert!(QuantumState::new(ComplexMatrix::identity(2).scale_real(0.5), &tol()).is_ok());
    }

    #[test]
    fn direct_tetrad() {
        let p = tetrad::povm();
        let probs = direct_probabilities(&p, &QuantumState::maximally_mixed(2)).unwrap();
        assert!(probs.iter().all(|x| (x - 0.25).abs() < 1e-15));
        let probs = direct_probabilities(&p, &QuantumState::basis(2, 0)).unwrap();
        let expect = [0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0];
        assert!(probs.iter().zip(expect).all(|(a, b)| (a - b).abs() < 1e-15));
        assert!(matches!(
            direct_probabilities(&p, &QuantumState::basis(3, 0)),
            Err(SimError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn padded_direct_probability_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_rank1_povm(&mut rng, 2, 3).pad_to_power_of_two();
        let probs = direct_probabilities(&p, &random_mixed_state(&mut rng, 2)).unwrap();
        assert_eq!(probs[3], 0.0);
    }

    #[test]
    fn projective_propagation() {
        let tree = compile_default(&projective(), None, &tol()).unwrap();
        let out = propagate(&tree, &QuantumState::basis(2, 0), &tol()).unwrap();
        assert_eq!(out[0].probability, 1.0);
        assert_eq!(out[1].probability, 0.0);
        assert!(out[1].post_state.is_none());
        assert_eq!(out[0].post_state.as_ref().unwrap(), &QuantumState::basis(2, 0));
    }

    #[test]
    fn tetrad_propagation_matches_direct() {
        let p = tetrad::povm();
        let tree = compile_default(&p, Some(&tetrad::GROUPING), &tol()).unwrap();
        let state = QuantumState::basis(2, 0);
        let tree_p = tree_probabilities(&tree, &state, &tol()).unwrap();
        let direct = direct_probabilities(&p, &state).unwrap();
        for (a, b) in tree_p.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
        let out = propagate(&tree, &state, &tol()).unwrap();
        let paths: Vec<_> = out.iter().map(|o| (o.path.as_str(), o.outcome)).collect();
        assert_eq!(paths, vec![("00", 0), ("01", 3), ("10", 1), ("11", 2)]);
    }

    #[test]
    fn padded_leaf_is_unreached() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_rank1_povm(&mut rng, 2, 3);
        let tree = compile_default(&p, None, &tol()).unwrap();
        for _ in 0..10 {
            let out = propagate(&tree, &random_mixed_state(&mut rng, 2), &tol()).unwrap();
            let pad = out.iter().find(|o| o.label.padding).unwrap();
            assert!(pad.probability < 1e-15);
            assert!(pad.post_state.is_none());
        }
    }

    #[test]
    fn post_states_are_valid_and_probabilities_conserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for d in 2..=4 {
            let p = random_mixed_rank_povm(&mut rng, d, 6);
            let tree = compile_default(&p, None, &tol()).unwrap();
            let state = random_mixed_state(&mut rng, d);
            let out = propagate(&tree, &state, &tol()).unwrap();
            let total: f64 = out.iter().map(|o| o.probability).sum();
            assert!((total - 1.0).abs() < 1e-9);
            for o in out.iter().filter_map(|o| o.post_state.as_ref()) {
                QuantumState::new(o.density().clone(), &tol()).unwrap();
            }
        }
    }

    #[test]
    fn freedom_rotates_post_states_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_rank1_povm(&mut rng, 3, 6);
        let f = p.default_kraus(&tol());
        let us = (0..6).map(|_| random_unitary(&mut rng, 3)).collect();
        let g = f.apply_freedom(us, &tol()).unwrap();
        let a = compile(&p, &f, None, SplitCoefficients::default(), &tol()).unwrap();
        let b = compile(&p, &g, None, SplitCoefficients::default(), &tol()).unwrap();
        let state = random_mixed_state(&mut rng, 3);
        let pa = propagate(&a, &state, &tol()).unwrap();
        let pb = propagate(&b, &state, &tol()).unwrap();
        let mut moved = 0.0f64;
        for (x, y) in pa.iter().zip(&pb) {
            assert!((x.probability - y.probability).abs() < 1e-9);
            if let (Some(s), Some(t)) = (&x.post_state, &y.post_state) {
                moved = moved.max(s.density().distance(t.density()));
            }
        }
        assert!(moved > 1e-3);
    }

    #[test]
    fn single_shot_is_deterministic_outcome() {
        let tree = compile_default(&projective(), None, &tol()).unwrap();
        for seed in 0..20 {
            let r = sample(&tree, &QuantumState::basis(2, 0), 1, seed).unwrap();
            assert_eq!(r.counts, vec![1, 0]);
        }
    }

    #[test]
    fn sampling_is_reproducible_and_thread_independent() {
        let tree = compile_default(&tetrad::povm(), Some(&tetrad::GROUPING), &tol()).unwrap();
        let state = QuantumState::maximally_mixed(2);
        let shots = 3 * SHOTS_PER_CHUNK + 17;
        let a = sample(&tree, &state, shots, 99).unwrap();
        let b = sample(&tree, &state, shots, 99).unwrap();
        let c = sample_sequential(&tree, &state, shots, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.counts.iter().sum::<u64>(), shots);
        let d = sample(&tree, &state, shots, 100).unwrap();
        assert_ne!(a.counts, d.counts);
    }

    #[test]
    fn zero_shots_rejected() {
        let tree = compile_default(&projective(), None, &tol()).unwrap();
        assert!(matches!(
            sample(&tree, &QuantumState::basis(2, 0), 0, 1),
            Err(SimError::NoShots)
        ));
    }
}
