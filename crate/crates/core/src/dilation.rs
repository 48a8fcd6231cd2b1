//! Unitary dilations.
//!
//! [`dilate_binary`] builds the `2d × 2d` system-probe coupling for one tree
//! node. [`full_neumark`] builds the single `N × N` unitary that realises a
//! whole POVM as a projective measurement; it serves as an independent oracle
//! for the tree.
//!
//! Index convention for the dilated space: `index = probe · d + system`, i.e.
//! the probe is the slow index. With the probe prepared in `|0⟩`, the block
//! `⟨j|U|0⟩` is rows `j·d..(j+1)·d`, columns `0..d`.

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{complete_to_unitary, hermitian_eig, ComplexMatrix, LinalgError, Tolerances};
use crate::povm::Povm;
use crate::simulator::QuantumState;
use crate::tree::KrausPair;

pub const PROBE_DIM: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DilationError {
    #[error("Kraus pair is not complete: ‖b₀†b₀ + b₁†b₁ − I‖_F = {residual:e}")]
    NotComplete { residual: f64 },
    #[error("probe outcome {0} is out of range (expected 0 or 1)")]
    IndexOutOfRange(usize),
    #[error("element {index} has rank {rank}; rank-1 elements required")]
    NotRankOne { index: usize, rank: usize },
    #[error("state dimension {found} does not match system dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Probe-coupling unitary realising one binary split.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDilation {
    pub unitary: ComplexMatrix,
    pub system_dim: usize,
}

impl NodeDilation {
    pub fn probe_dim(&self) -> usize {
        PROBE_DIM
    }
}

/// Stacks `[b₀; b₁]` and completes it to a `2d × 2d` unitary.
pub fn dilate_binary(pair: &KrausPair, tol: &Tolerances) -> Result<NodeDilation, DilationError> {
    let residual = pair.completeness_residual();
    if residual > tol.check {
        return Err(DilationError::NotComplete { residual });
    }
    let d = pair.b0.rows();
    let block = ComplexMatrix::vstack(&pair.b0, &pair.b1);
    // The pair may sit between the unitarity and the check thresholds; admit
    // it for completion under the looser of the two.
    let completion_tol = Tolerances {
        unitary: tol.unitary.max(tol.check),
        ..*tol
    };
    let unitary = complete_to_unitary(&block, &completion_tol)?;
    Ok(NodeDilation { unitary, system_dim: d })
}

/// `⟨j|U|0⟩` for probe outcome `j`.
pub fn extract_kraus(nd: &NodeDilation, probe_outcome: usize) -> Result<ComplexMatrix, DilationError> {
    if probe_outcome >= PROBE_DIM {
        return Err(DilationError::IndexOutOfRange(probe_outcome));
    }
    let d = nd.system_dim;
    Ok(nd.unitary.block(probe_outcome * d, 0, d, d))
}

/// How [`full_neumark`] treats elements of rank above one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HigherRank {
    /// Split each element into rank-1 eigen-pieces and sum their probabilities.
    #[default]
    Decompose,
    /// Fail with [`DilationError::NotRankOne`].
    Reject,
}

/// Projective realisation of a POVM on an extended space.
///
/// The system is embedded in the first `d` coordinates of the extended space.
/// Applying `unitary` and measuring the computational basis yields row `r`
/// with probability `⟨ψ_r|ρ|ψ_r⟩`; `owners[r]` is the POVM outcome that row
/// belongs to.
#[derive(Debug, Clone)]
pub struct NeumarkExtension {
    pub unitary: ComplexMatrix,
    pub system_dim: usize,
    pub owners: Vec<usize>,
    pub num_outcomes: usize,
}

impl NeumarkExtension {
    /// Outcome probabilities of `state`, summed over the rank-1 pieces of each
    /// outcome.
    pub fn probabilities(&self, state: &QuantumState) -> Result<Vec<f64>, DilationError> {
        let d = self.system_dim;
        if state.dim() != d {
            return Err(DilationError::DimensionMismatch {
                expected: d,
                found: state.dim(),
            });
        }
        let rho = state.density();
        let mut probs = vec![0.0; self.num_outcomes];
        for (row, &owner) in self.owners.iter().enumerate() {
            // Embedded state only has support on the first d coordinates.
            let amp: Vec<Complex64> = (0..d).map(|k| self.unitary[(row, k)]).collect();
            let mut p = Complex64::new(0.0, 0.0);
            for k in 0..d {
                for l in 0..d {
                    p += amp[k] * rho[(k, l)] * amp[l].conj();
                }
            }
            probs[owner] += p.re;
        }
        Ok(probs)
    }
}

/// Builds the `N' × N'` Neumark unitary, `N'` being the number of rank-1
/// pieces (equal to the outcome count for rank-1 POVMs).
pub fn full_neumark(p: &Povm, tol: &Tolerances, higher_rank: HigherRank) -> Result<NeumarkExtension, DilationError> {
    let d = p.dim();
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    let mut owners = Vec::new();
    for (index, m) in p.elements().iter().enumerate() {
        let eig = hermitian_eig(m, tol)?;
        // Elements are bounded by the identity, so the threshold is taken
        // relative to one rather than to the element's own norm.
        let pieces: Vec<usize> = (0..d).filter(|&k| eig.values[k] > tol.rank).collect();
        if pieces.len() > 1 && higher_rank == HigherRank::Reject {
            return Err(DilationError::NotRankOne {
                index,
                rank: pieces.len(),
            });
        }
        for k in pieces {
            let scale = eig.values[k].sqrt();
            // ⟨ψ| as a row vector
            rows.push((0..d).map(|i| eig.vectors[(i, k)].conj() * scale).collect());
            owners.push(index);
        }
    }
    let n = rows.len();
    let block = ComplexMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let unitary = complete_to_unitary(&block, tol)?;
    Ok(NeumarkExtension {
        unitary,
        system_dim: d,
        owners,
        num_outcomes: p.len(),
    })
}
