//! POVMs, their Kraus factorizations and outcome padding.

use thiserror::Error;

use crate::linalg::{isometry_residual, min_eigenvalue, psd_sqrt, ComplexMatrix, LinalgError, Tolerances};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PovmError {
    #[error("a POVM needs at least one element")]
    Empty,
    #[error("element {index} is {rows}x{cols}, not square")]
    NotSquare { index: usize, rows: usize, cols: usize },
    #[error("element {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("element {index} is not Hermitian: ‖M − M†‖_F = {residual:e}")]
    NotHermitian { index: usize, residual: f64 },
    #[error("element {index} is not positive semidefinite: minimum eigenvalue {min_eigenvalue:e}")]
    NotPsd { index: usize, min_eigenvalue: f64 },
    #[error("elements do not sum to the identity: ‖ΣM − I‖_F = {residual:e}")]
    IncompleteSum { residual: f64 },
    #[error("{labels} labels supplied for {elements} elements")]
    LabelCount { labels: usize, elements: usize },
    #[error("{found} Kraus operators or unitaries supplied for {expected} outcomes")]
    CountMismatch { expected: usize, found: usize },
    #[error("unitary {index} is not unitary: ‖V†V − I‖_F = {residual:e}")]
    NotUnitary { index: usize, residual: f64 },
    #[error("Kraus operator {index} does not reproduce its element: ‖m†m − M‖_F = {residual:e}")]
    KrausMismatch { index: usize, residual: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Name of one outcome. Padding outcomes are flagged so reports can mark them
/// as unreachable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeLabel {
    pub name: String,
    pub padding: bool,
}

impl OutcomeLabel {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            padding: false,
        }
    }

    pub fn padding(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            padding: true,
        }
    }
}

/// Per-element residuals of a candidate POVM.
#[derive(Debug, Clone)]
pub struct PovmDiagnostics {
    /// `‖M_j − M_j†‖_F` per element.
    pub hermiticity: Vec<f64>,
    /// Smallest eigenvalue of the Hermitian part of each element.
    pub min_eigenvalues: Vec<f64>,
    /// `‖Σ M_j − I‖_F`.
    pub completeness: f64,
}

/// A validated set of PSD operators `{M_j}` summing to the identity.
#[derive(Debug, Clone)]
pub struct Povm {
    dim: usize,
    elements: Vec<ComplexMatrix>,
    labels: Vec<OutcomeLabel>,
}

fn check_shapes(elements: &[ComplexMatrix]) -> Result<usize, PovmError> {
    let first = elements.first().ok_or(PovmError::Empty)?;
    let dim = first.rows();
    for (index, m) in elements.iter().enumerate() {
        if !m.is_square() {
            return Err(PovmError::NotSquare {
                index,
                rows: m.rows(),
                cols: m.cols(),
            });
        }
        if m.rows() != dim {
            return Err(PovmError::DimensionMismatch {
                index,
                expected: dim,
                found: m.rows(),
            });
        }
    }
    if dim == 0 {
        return Err(PovmError::Empty);
    }
    Ok(dim)
}

impl Povm {
    /// Validates elements with default labels `"0"`, `"1"`, ….
    pub fn validate(elements: Vec<ComplexMatrix>, tol: &Tolerances) -> Result<Self, PovmError> {
        let labels = (0..elements.len()).map(|j| OutcomeLabel::new(j.to_string())).collect();
        Self::with_labels(elements, labels, tol)
    }

    /// Validates elements and attaches the given labels. Reports the first
    /// violated condition.
    pub fn with_labels(
        elements: Vec<ComplexMatrix>,
        labels: Vec<OutcomeLabel>,
        tol: &Tolerances,
    ) -> Result<Self, PovmError> {
        let dim = check_shapes(&elements)?;
        if labels.len() != elements.len() {
            return Err(PovmError::LabelCount {
                labels: labels.len(),
                elements: elements.len(),
            });
        }
        for (index, m) in elements.iter().enumerate() {
            let residual = m.hermiticity_residual();
            if residual > tol.check {
                return Err(PovmError::NotHermitian { index, residual });
            }
            let min = min_eigenvalue(m, tol)?;
            if min < -tol.check {
                return Err(PovmError::NotPsd {
                    index,
                    min_eigenvalue: min,
                });
            }
        }
        let residual = completeness_residual(&elements, dim);
        if residual > tol.check {
            return Err(PovmError::IncompleteSum { residual });
        }
        Ok(Self { dim, elements, labels })
    }

    /// Residuals of a candidate element list without failing on violations.
    /// Only shape problems are reported as errors.
    pub fn diagnose(elements: &[ComplexMatrix], tol: &Tolerances) -> Result<PovmDiagnostics, PovmError> {
        let dim = check_shapes(elements)?;
        let hermiticity = elements.iter().map(ComplexMatrix::hermiticity_residual).collect();
        let min_eigenvalues = elements
            .iter()
            .map(|m| {
                // Diagnose the Hermitian part so non-Hermitian input still
                // gets a spectrum to report.
                let h = m.hermitian_part();
                min_eigenvalue(
                    &h,
                    &Tolerances {
                        check: f64::INFINITY,
                        ..*tol
                    },
                )
            })
            .collect::<Result<_, _>>()?;
        Ok(PovmDiagnostics {
            hermiticity,
            min_eigenvalues,
            completeness: completeness_residual(elements, dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[ComplexMatrix] {
        &self.elements
    }

    pub fn element(&self, j: usize) -> &ComplexMatrix {
        &self.elements[j]
    }

    pub fn labels(&self) -> &[OutcomeLabel] {
        &self.labels
    }

    /// Appends zero elements until the outcome count is `2^⌈log₂K⌉`.
    pub fn pad_to_power_of_two(&self) -> Povm {
        let target = self.len().next_power_of_two();
        let mut padded = self.clone();
        for k in 0..target - self.len() {
            padded.elements.push(ComplexMatrix::zeros(self.dim, self.dim));
            padded.labels.push(OutcomeLabel::padding(format!("pad{k}")));
        }
        padded
    }

    /// `m_j = √M_j`.
    pub fn default_kraus(&self, tol: &Tolerances) -> KrausFactorization {
        let kraus = self
            .elements
            .iter()
            .map(|m| psd_sqrt(m, tol).expect("validated elements are PSD"))
            .collect();
        KrausFactorization { kraus, freedom: None }
    }
}

fn completeness_residual(elements: &[ComplexMatrix], dim: usize) -> f64 {
    elements
        .iter()
        .fold(ComplexMatrix::zeros(dim, dim), |acc, m| &acc + m)
        .distance(&ComplexMatrix::identity(dim))
}

/// Kraus operators `m_j` with `m_j† m_j = M_j`.
#[derive(Debug, Clone)]
pub struct KrausFactorization {
    pub kraus: Vec<ComplexMatrix>,
    /// Unitaries `V_j` that were applied on top of the square roots, if any.
    pub freedom: Option<Vec<ComplexMatrix>>,
}

impl KrausFactorization {
    /// Wraps user-supplied Kraus operators after checking them against `povm`.
    pub fn from_kraus(povm: &Povm, kraus: Vec<ComplexMatrix>, tol: &Tolerances) -> Result<Self, PovmError> {
        let f = Self { kraus, freedom: None };
        f.check(povm, tol)?;
        Ok(f)
    }

    /// `‖m_j†m_j − M_j‖_F` per outcome.
    pub fn residuals(&self, povm: &Povm) -> Vec<f64> {
        self.kraus
            .iter()
            .zip(povm.elements())
            .map(|(m, big)| (&m.adjoint() * m).distance(big))
            .collect()
    }

    /// Checks counts, shapes and `m_j†m_j = M_j` within `tol.check`.
    pub fn check(&self, povm: &Povm, tol: &Tolerances) -> Result<(), PovmError> {
        if self.kraus.len() != povm.len() {
            return Err(PovmError::CountMismatch {
                expected: povm.len(),
                found: self.kraus.len(),
            });
        }
        for (index, m) in self.kraus.iter().enumerate() {
            if m.rows() != povm.dim() || m.cols() != povm.dim() {
                return Err(PovmError::DimensionMismatch {
                    index,
                    expected: povm.dim(),
                    found: m.rows().max(m.cols()),
                });
            }
        }
        for (index, residual) in self.residuals(povm).into_iter().enumerate() {
            if residual > tol.check {
                return Err(PovmError::KrausMismatch { index, residual });
            }
        }
        Ok(())
    }

    /// `m_j ← V_j m_j`. Leaves every `m_j†m_j` unchanged.
    pub fn apply_freedom(&self, unitaries: Vec<ComplexMatrix>, tol: &Tolerances) -> Result<Self, PovmError> {
        if unitaries.len() != self.kraus.len() {
            return Err(PovmError::CountMismatch {
                expected: self.kraus.len(),
                found: unitaries.len(),
            });
        }
        for (index, v) in unitaries.iter().enumerate() {
            let d = self.kraus[index].rows();
            if !v.is_square() || v.rows() != d {
                return Err(PovmError::DimensionMismatch {
                    index,
                    expected: d,
                    found: v.rows(),
                });
            }
            let residual = isometry_residual(v);
            if residual > tol.unitary {
                return Err(PovmError::NotUnitary { index, residual });
            }
        }
        let kraus = self.kraus.iter().zip(&unitaries).map(|(m, v)| v * m).collect();
        Ok(Self {
            kraus,
            freedom: Some(unitaries),
        })
    }

    /// Appends zero Kraus operators to match a padded POVM.
    pub(crate) fn padded_to(&self, n: usize, dim: usize) -> Self {
        let mut kraus = self.kraus.clone();
        kraus.resize(n.max(kraus.len()), ComplexMatrix::zeros(dim, dim));
        Self {
            kraus,
            freedom: self.freedom.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::tetrad;
    use crate::random::{random_rank1_povm, random_unitary};
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn projectors() -> Vec<ComplexMatrix> {
        vec![
            ComplexMatrix::from_real_diagonal(&[1.0, 0.0]),
            ComplexMatrix::from_real_diagonal(&[0.0, 1.0]),
        ]
    }

    #[test]
    fn tetrad_is_valid() {
        let p = tetrad::povm();
        assert_eq!((p.len(), p.dim()), (4, 2));
    }

    #[test]
    fn halves_of_identity() {
        let half = ComplexMatrix::identity(2).scale_real(0.5);
        let p = Povm::validate(vec![half.clone(), half], &tol()).unwrap();
        let f = p.default_kraus(&tol());
        let r = ComplexMatrix::identity(2).scale_real(0.5f64.sqrt());
        for m in &f.kraus {
            assert!(m.distance(&r) < 1e-15);
        }
    }

    #[test]
    fn double_identity_is_incomplete() {
        let id = ComplexMatrix::identity(2);
        match Povm::validate(vec![id.clone(), id], &tol()) {
            Err(PovmError::IncompleteSum { residual }) => {
                assert!((residual - 2f64.sqrt()).abs() < 1e-14)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn first_violation_is_reported() {
        let neg = ComplexMatrix::from_real_diagonal(&[1.5, 1.0]);
        let comp = ComplexMatrix::from_real_diagonal(&[-0.5, 0.0]);
        assert!(matches!(
            Povm::validate(vec![neg, comp], &tol()),
            Err(PovmError::NotPsd { index: 1, .. })
        ));
        let mut skew = ComplexMatrix::zeros(2, 2);
        skew[(0, 1)] = Complex64::new(0.1, 0.0);
        assert!(matches!(
            Povm::validate(vec![skew, ComplexMatrix::identity(2)], &tol()),
            Err(PovmError::NotHermitian { index: 0, .. })
        ));
        assert!(matches!(
            Povm::validate(vec![ComplexMatrix::identity(2), ComplexMatrix::identity(3)], &tol()),
            Err(PovmError::DimensionMismatch { index: 1, .. })
        ));
        assert!(matches!(Povm::validate(vec![], &tol()), Err(PovmError::Empty)));
    }

    #[test]
    fn projectors_are_their_own_roots() {
        let p = Povm::validate(projectors(), &tol()).unwrap();
        let f = p.default_kraus(&tol());
        for (m, big) in f.kraus.iter().zip(p.elements()) {
            assert!(m.distance(big) < 1e-15);
        }
    }

    #[test]
    fn rank_one_root_identity() {
        // √M = M/√tr M for rank-1 M
        let p = tetrad::povm();
        let f = p.default_kraus(&tol());
        for (m, big) in f.kraus.iter().zip(p.elements()) {
            let expect = big.scale_real(1.0 / big.trace().re.sqrt());
            assert!(m.distance(&expect) < 1e-12);
        }
        assert!(f.residuals(&p).iter().all(|r| *r < 1e-9));
    }

    #[test]
    fn identity_freedom_is_noop() {
        let p = tetrad::povm();
        let f = p.default_kraus(&tol());
        let g = f.apply_freedom(vec![ComplexMatrix::identity(2); 4], &tol()).unwrap();
        assert_eq!(g.kraus, f.kraus);
    }

    #[test]
    fn pauli_x_freedom() {
        let p = Povm::validate(projectors(), &tol()).unwrap();
        let f = p.default_kraus(&tol());
        let x = ComplexMatrix::from_fn(2, 2, |i, j| Complex64::new((i != j) as u8 as f64, 0.0));
        let g = f.apply_freedom(vec![x.clone(), x.clone()], &tol()).unwrap();
        assert_eq!(g.kraus[0], &x * &p.elements()[0]);
        assert!(g.residuals(&p).iter().all(|r| *r < 1e-15));
    }

    #[test]
    fn freedom_rejects_non_unitary() {
        let p = tetrad::povm();
        let f = p.default_kraus(&tol());
        let mut us = vec![ComplexMatrix::identity(2); 4];
        us[2] = ComplexMatrix::identity(2).scale_real(2.0);
        assert!(matches!(
            f.apply_freedom(us, &tol()),
            Err(PovmError::NotUnitary { index: 2, .. })
        ));
    }

    #[test]
    fn random_freedom_keeps_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = random_rank1_povm(&mut rng, 3, 5);
        let f = p.default_kraus(&tol());
        let us = (0..5).map(|_| random_unitary(&mut rng, 3)).collect();
        let g = f.apply_freedom(us, &tol()).unwrap();
        assert!(g.residuals(&p).iter().all(|r| *r < 1e-9));
    }

    #[test]
    fn padding_counts() {
        let p = tetrad::povm();
        assert_eq!(p.pad_to_power_of_two().len(), 4);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let three = random_rank1_povm(&mut rng, 2, 3).pad_to_power_of_two();
        assert_eq!(three.len(), 4);
        assert_eq!(three.element(3), &ComplexMatrix::zeros(2, 2));
        assert!(three.labels()[3].padding && !three.labels()[2].padding);

        let five = random_rank1_povm(&mut rng, 2, 5).pad_to_power_of_two();
        assert_eq!(five.len(), 8);
        assert_eq!(five.labels().iter().filter(|l| l.padding).count(), 3);
    }

    #[test]
    fn diagnostics_report_residuals() {
        let id = ComplexMatrix::identity(2);
        let d = Povm::diagnose(&[id.clone(), id], &tol()).unwrap();
        assert!((d.completeness - 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(d.hermiticity, vec![0.0, 0.0]);
        assert!((d.min_eigenvalues[0] - 1.0).abs() < 1e-14);
    }
}
