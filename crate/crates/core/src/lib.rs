//! Compile generalized quantum measurements (POVMs) into binary trees of
//! two-outcome measurements, each realised by coupling the system to a single
//! probe qubit, and check the result by exact and sampled simulation.
//!
//! Pipeline: [`povm::Povm::validate`] → [`povm::Povm::default_kraus`] →
//! [`tree::compile`] → [`tree::verify`] → [`simulator::propagate`] /
//! [`simulator::sample`]. [`dilation::full_neumark`] gives an independent
//! projective realisation for cross-checking, and [`cost`] compares operation
//! counts between realisations.
//!
//! ```
//! use povm_tree::fixtures::tetrad;
//! use povm_tree::linalg::Tolerances;
//! use povm_tree::simulator::{tree_probabilities, QuantumState};
//! use povm_tree::tree::compile_default;
//!
//! let tol = Tolerances::default();
//! let tree = compile_default(&tetrad::povm(), Some(&tetrad::GROUPING), &tol).unwrap();
//! let probs = tree_probabilities(&tree, &QuantumState::basis(2, 0), &tol).unwrap();
//! assert!((probs[0] - 0.5).abs() < 1e-12);
//! ```

pub mod cost;
pub mod dilation;
pub mod fixtures;
pub mod linalg;
pub mod povm;
pub mod random;
pub mod simulator;
pub mod tree;

pub use linalg::{ComplexMatrix, Tolerances};
pub use povm::{KrausFactorization, OutcomeLabel, Povm};
pub use simulator::QuantumState;
pub use tree::{compile, verify, MeasurementTree, SplitCoefficients};
