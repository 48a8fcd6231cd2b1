//! Reference measurements.

/// The symmetric informationally complete four-outcome qubit POVM (tetrad).
///
/// Elements are `|ψ_j⟩⟨ψ_j|` with
/// `|ψ₀⟩ = |0⟩/√2` and `|ψ_k⟩ = (|0⟩ + √2·ω_k|1⟩)/√6` where
/// `ω₁ = e^{2πi/3}`, `ω₂ = e^{4πi/3}`, `ω₃ = 1`.
pub mod tetrad {
    use std::f64::consts::PI;

    use num_complex::Complex64;

    use crate::linalg::{ComplexMatrix, Tolerances};
    use crate::povm::Povm;

    /// Leaf order grouping outcomes {0, 3} and {1, 2} at the first split.
    pub const GROUPING: [usize; 4] = [0, 3, 1, 2];

    pub fn states() -> [Vec<Complex64>; 4] {
        let s2 = 2f64.sqrt();
        let s6 = 6f64.sqrt();
        let branch = |phase: f64| vec![Complex64::new(1.0 / s6, 0.0), Complex64::from_polar(s2 / s6, phase)];
        [
            vec![Complex64::new(1.0 / s2, 0.0), Complex64::new(0.0, 0.0)],
            branch(2.0 * PI / 3.0),
            branch(4.0 * PI / 3.0),
            branch(0.0),
        ]
    }

    pub fn elements() -> Vec<ComplexMatrix> {
        states().iter().map(|v| ComplexMatrix::ket_bra(v)).collect()
    }

    pub fn povm() -> Povm {
        Povm::validate(elements(), &Tolerances::default()).expect("tetrad is a valid POVM")
    }

    /// Sum of the elements with the given indices, e.g. `M₀₃ = M₀ + M₃`.
    pub fn group_operator(indices: &[usize]) -> ComplexMatrix {
        let els = elements();
        indices
            .iter()
            .fold(ComplexMatrix::zeros(2, 2), |acc, &j| &acc + &els[j])
    }
}
