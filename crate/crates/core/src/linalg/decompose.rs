use std::cmp::Ordering;

use nalgebra::linalg::SymmetricEigen;
use num_complex::Complex64;

use super::{isometry_residual, ComplexMatrix, LinalgError, Tolerances};

/// Eigen-decomposition `A = V Λ V†` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Unitary matrix of eigenvectors; column `i` belongs to `values[i]`.
    pub vectors: ComplexMatrix,
}

impl EigenDecomposition {
    /// Number of eigenvalues above `tol.rank × max(|λ|)`.
    pub fn rank(&self, tol: &Tolerances) -> usize {
        count_above(&self.values, tol.rank)
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        let scaled = ComplexMatrix::from_fn(self.vectors.rows(), self.vectors.cols(), |i, j| {
            self.vectors[(i, j)] * self.values[j]
        });
        &scaled * &self.vectors.adjoint()
    }
}

/// Thin singular value decomposition `A = U Σ V†`.
///
/// For an `m × n` input with `k = min(m, n)`, `u` is `m × k`, `v` is `n × k` and
/// `singular` holds `k` values in descending order. Square inputs therefore
/// get full unitary factors.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: ComplexMatrix,
    pub singular: Vec<f64>,
    pub v: ComplexMatrix,
}

impl Svd {
    pub fn rank(&self, tol: &Tolerances) -> usize {
        count_above(&self.singular, tol.rank)
    }

    /// Rank with the threshold `tol.rank × max(σ_max, scale)`. For operators
    /// of known size this keeps pure rounding noise from counting as rank.
    pub fn rank_at_scale(&self, tol: &Tolerances, scale: f64) -> usize {
        let largest = self.singular.first().copied().unwrap_or(0.0).max(scale);
        if largest == 0.0 {
            return 0;
        }
        self.singular.iter().filter(|s| **s > tol.rank * largest).count()
    }

    /// `V Σ⁺ U†` keeping the first `rank` singular values.
    pub fn pseudo_inverse_with_rank(&self, rank: usize) -> ComplexMatrix {
        let (m, n) = (self.u.rows(), self.v.rows());
        let mut out = ComplexMatrix::zeros(n, m);
        for k in 0..rank {
            let inv = 1.0 / self.singular[k];
            for i in 0..n {
                let vik = self.v[(i, k)] * inv;
                for j in 0..m {
                    out[(i, j)] += vik * self.u[(j, k)].conj();
                }
            }
        }
        out
    }
}

fn count_above(values: &[f64], rel: f64) -> usize {
    let largest = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if largest == 0.0 {
        return 0;
    }
    values.iter().filter(|v| **v > rel * largest).count()
}

/// Rotates `v` so its largest-magnitude component is real and positive and
/// returns the phase factor that was applied.
fn fix_phase(v: &mut [Complex64]) -> Complex64 {
    let largest = v.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if largest == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    // First component within rounding of the maximum, so near-ties resolve
    // to the lowest index.
    let pivot = v.iter().position(|z| z.norm() >= largest * (1.0 - 1e-12)).unwrap_or(0);
    let phase = v[pivot].conj() / v[pivot].norm();
    for z in v.iter_mut() {
        *z *= phase;
    }
    v[pivot] = Complex64::new(v[pivot].re, 0.0);
    phase
}

/// Lexicographic order on vectors, larger components first. Differences
/// below 1e-12 are treated as ties.
fn lexicographic_desc(a: &[Complex64], b: &[Complex64]) -> Ordering {
    const EPS: f64 = 1e-12;
    for (x, y) in a.iter().zip(b) {
        for (p, q) in [(x.re, y.re), (x.im, y.im)] {
            if (p - q).abs() > EPS {
                return q.total_cmp(&p);
            }
        }
    }
    Ordering::Equal
}

fn require_square(a: &ComplexMatrix) -> Result<(), LinalgError> {
    if a.is_square() {
        Ok(())
    } else {
        Err(LinalgError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        })
    }
}

/// Eigen-decomposition of a Hermitian matrix with a reproducible basis.
///
/// Eigenvalues come out descending. Each eigenvector has its largest
/// component made real positive; eigenvectors of (numerically) equal
/// eigenvalues are ordered lexicographically.
pub fn hermitian_eig(a: &ComplexMatrix, tol: &Tolerances) -> Result<EigenDecomposition, LinalgError> {
    require_square(a)?;
    let residual = a.hermiticity_residual();
    if residual > tol.check {
        return Err(LinalgError::NotHermitian { residual });
    }
    let n = a.rows();
    if n == 0 {
        return Ok(EigenDecomposition {
            values: Vec::new(),
            vectors: ComplexMatrix::zeros(0, 0),
        });
    }

    let eig = SymmetricEigen::new(a.hermitian_part().to_nalgebra());
    let vecs = ComplexMatrix::from_nalgebra(&eig.eigenvectors);
    let mut pairs: Vec<(f64, Vec<Complex64>)> = (0..n)
        .map(|j| {
            let mut v = vecs.column(j);
            fix_phase(&mut v);
            (eig.eigenvalues[j], v)
        })
        .collect();

    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    let scale = pairs.iter().fold(1.0f64, |m, p| m.max(p.0.abs()));
    let tie = tol.rank * scale;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (pairs[end - 1].0 - pairs[end].0).abs() <= tie {
            end += 1;
        }
        pairs[start..end].sort_by(|x, y| lexicographic_desc(&x.1, &y.1));
        start = end;
    }

    let values = pairs.iter().map(|p| p.0).collect();
    let columns: Vec<_> = pairs.into_iter().map(|p| p.1).collect();
    Ok(EigenDecomposition {
        values,
        vectors: ComplexMatrix::from_columns(&columns),
    })
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(a: &ComplexMatrix, tol: &Tolerances) -> Result<f64, LinalgError> {
    let eig = hermitian_eig(a, tol)?;
    Ok(eig.values.last().copied().unwrap_or(0.0))
}

/// Thin SVD with descending singular values.
///
/// Computed from the Hermitian eigenproblem of `[[0, A], [A†, 0]]`, whose
/// eigenpairs are `±σ` with vectors `(u; ±v)/√2`. (nalgebra's complex SVD
/// can lose accuracy on exactly rank-deficient inputs.) Singular values at or
/// below `1e-11 × σ_max` get completed bases rather than eigenvector halves,
/// since the `±σ` pair is not separable there.
///
/// Right singular vectors follow the same phase convention as
/// [`hermitian_eig`]; left vectors of nonzero singular values carry the
/// matching phase so that `A = U Σ V†` still holds.
pub fn svd(a: &ComplexMatrix) -> Svd {
    let (m, n) = (a.rows(), a.cols());
    let k = m.min(n);
    if k == 0 {
        return Svd {
            u: ComplexMatrix::zeros(m, 0),
            singular: Vec::new(),
            v: ComplexMatrix::zeros(n, 0),
        };
    }
    let zero = Complex64::new(0.0, 0.0);
    let jw = ComplexMatrix::from_fn(m + n, m + n, |i, j| match (i < m, j < m) {
        (true, false) => a[(i, j - m)],
        (false, true) => a[(j, i - m)].conj(),
        _ => zero,
    });
    let eig = SymmetricEigen::new(jw.to_nalgebra());
    let vecs = ComplexMatrix::from_nalgebra(&eig.eigenvectors);
    let mut order: Vec<usize> = (0..m + n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));

    let largest = eig.eigenvalues[order[0]].max(0.0);
    let cutoff = SVD_SEPARATION * largest;
    let mut singular = Vec::with_capacity(k);
    let mut us: Vec<Vec<Complex64>> = Vec::with_capacity(k);
    let mut vs: Vec<Vec<Complex64>> = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let s = eig.eigenvalues[idx];
        if largest == 0.0 || s <= cutoff {
            break;
        }
        let col = vecs.column(idx);
        let (top, bottom) = col.split_at(m);
        singular.push(s);
        us.push(top.to_vec());
        vs.push(bottom.to_vec());
    }
    // Clean up the halves: two-pass Gram-Schmidt keeps them orthonormal to
    // working precision.
    let r = singular.len();
    let us = extend_orthonormal(&[], us, r, 0.0);
    let vs = extend_orthonormal(&[], vs, r, 0.0);
    debug_assert!(us.len() == r && vs.len() == r);

    let mut triples: Vec<(f64, Vec<Complex64>, Vec<Complex64>)> = singular
        .into_iter()
        .zip(us)
        .zip(vs)
        .map(|((s, u), v)| (s, u, v))
        .collect();
    for (_, uj, vj) in triples.iter_mut() {
        let phase = fix_phase(vj);
        uj.iter_mut().for_each(|z| *z *= phase);
    }

    // Remaining singular values are (numerically) zero; complete both bases.
    let u_fill = extend_orthonormal(
        &triples.iter().map(|t| t.1.clone()).collect::<Vec<_>>(),
        basis_vectors(m),
        k - r,
        1e-8,
    );
    let v_fill = extend_orthonormal(
        &triples.iter().map(|t| t.2.clone()).collect::<Vec<_>>(),
        basis_vectors(n),
        k - r,
        1e-8,
    );
    for (mut uj, mut vj) in u_fill.into_iter().zip(v_fill) {
        fix_phase(&mut uj);
        fix_phase(&mut vj);
        triples.push((0.0, uj, vj));
    }

    let singular = triples.iter().map(|t| t.0).collect();
    let us: Vec<_> = triples.iter().map(|t| t.1.clone()).collect();
    let vs: Vec<_> = triples.into_iter().map(|t| t.2).collect();
    Svd {
        u: ComplexMatrix::from_columns(&us),
        singular,
        v: ComplexMatrix::from_columns(&vs),
    }
}

/// Singular values below this fraction of `σ_max` are reported as zero.
const SVD_SEPARATION: f64 = 1e-11;

fn basis_vectors(n: usize) -> impl Iterator<Item = Vec<Complex64>> {
    (0..n).map(move |i| {
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        e[i] = Complex64::new(1.0, 0.0);
        e
    })
}

/// Moore-Penrose pseudoinverse via the SVD.
///
/// Singular values at or below `tol.rank × σ_max` are treated as zero.
pub fn pseudo_inverse(a: &ComplexMatrix, tol: &Tolerances) -> ComplexMatrix {
    let dec = svd(a);
    dec.pseudo_inverse_with_rank(dec.rank(tol))
}

/// Hermitian PSD square root computed spectrally.
///
/// Eigenvalues in `[-tol.check·‖A‖_F, tol.rank·λ_max]` are rounding dust and
/// are clamped to zero; anything more negative is rejected.
pub fn psd_sqrt(a: &ComplexMatrix, tol: &Tolerances) -> Result<ComplexMatrix, LinalgError> {
    let eig = hermitian_eig(a, tol)?;
    let floor = -tol.check * a.frobenius_norm();
    if let Some(&min) = eig.values.last() {
        if min < floor {
            return Err(LinalgError::NotPsd { min_eigenvalue: min });
        }
    }
    // Eigenvalues at or below the rank threshold are zero; their square
    // roots would otherwise be amplified to ~√ε.
    let cutoff = tol.rank * eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let roots: Vec<f64> = eig
        .values
        .iter()
        .map(|&v| if v > cutoff { v.sqrt() } else { 0.0 })
        .collect();
    let v = &eig.vectors;
    let scaled = ComplexMatrix::from_fn(v.rows(), v.cols(), |i, j| v[(i, j)] * roots[j]);
    Ok((&scaled * &v.adjoint()).hermitian_part())
}

/// Gram-Schmidt extension of an orthonormal set.
///
/// Each candidate is orthogonalised (two passes) against `existing` plus the
/// vectors accepted so far; it is skipped when its residual norm falls below
/// `min_residual`. Stops after `count` acceptances. Returns only the new
/// vectors, possibly fewer than `count` if the candidates run out.
pub fn extend_orthonormal(
    existing: &[Vec<Complex64>],
    candidates: impl IntoIterator<Item = Vec<Complex64>>,
    count: usize,
    min_residual: f64,
) -> Vec<Vec<Complex64>> {
    let mut accepted: Vec<Vec<Complex64>> = Vec::with_capacity(count);
    if count == 0 {
        return accepted;
    }
    for mut cand in candidates {
        let norm0 = norm(&cand);
        if norm0 == 0.0 {
            continue;
        }
        cand.iter_mut().for_each(|z| *z /= norm0);
        for _ in 0..2 {
            for q in existing.iter().chain(accepted.iter()) {
                let overlap: Complex64 = q.iter().zip(&cand).map(|(a, b)| a.conj() * b).sum();
                for (c, qi) in cand.iter_mut().zip(q) {
                    *c -= overlap * qi;
                }
            }
        }
        let res = norm(&cand);
        if res < min_residual {
            continue;
        }
        cand.iter_mut().for_each(|z| *z /= res);
        accepted.push(cand);
        if accepted.len() == count {
            break;
        }
    }
    accepted
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn basis_vector(n: usize, i: usize) -> Vec<Complex64> {
    let mut e = vec![Complex64::new(0.0, 0.0); n];
    e[i] = Complex64::new(1.0, 0.0);
    e
}

/// Completes an `n × k` block with orthonormal columns to an `n × n` unitary.
///
/// The first `k` columns of the result are copied verbatim from `block`. The
/// remaining columns come from orthonormalising `|0⟩, |1⟩, …` in order.
pub fn complete_to_unitary(block: &ComplexMatrix, tol: &Tolerances) -> Result<ComplexMatrix, LinalgError> {
    let (n, k) = (block.rows(), block.cols());
    if k > n {
        return Err(LinalgError::DimensionMismatch { expected: n, found: k });
    }
    let residual = isometry_residual(block);
    if residual > tol.unitary {
        return Err(LinalgError::NotIsometry { residual });
    }
    let given = block.columns();
    let extra = extend_orthonormal(&given, (0..n).map(|i| basis_vector(n, i)), n - k, tol.rank);
    if extra.len() != n - k {
        // Only reachable if the block is far from orthonormal, which the check
        // above excludes.
        return Err(LinalgError::NotIsometry { residual });
    }
    let mut out = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..k {
            out[(i, j)] = block[(i, j)];
        }
        for (j, col) in extra.iter().enumerate() {
            out[(i, k + j)] = col[i];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_matrix, random_psd, random_rank_deficient};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    /// Independent check of the four Penrose conditions.
    fn penrose_residuals(a: &ComplexMatrix, p: &ComplexMatrix) -> [f64; 4] {
        let ap = a * p;
        let pa = p * a;
        [
            (&ap * a).distance(a),
            (&pa * p).distance(p),
            ap.distance(&ap.adjoint()),
            pa.distance(&pa.adjoint()),
        ]
    }

    fn tetrad_m03() -> ComplexMatrix {
        let s2 = 2f64.sqrt();
        ComplexMatrix::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => c(2.0 / 3.0, 0.0),
            (1, 1) => c(1.0 / 3.0, 0.0),
            _ => c(1.0 / (3.0 * s2), 0.0),
        })
    }

    #[test]
    fn eig_identity() {
        let e = hermitian_eig(&ComplexMatrix::identity(2), &tol()).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0]);
        assert!(isometry_residual(&e.vectors) < 1e-14);
        assert!(e.vectors.distance(&ComplexMatrix::identity(2)) < 1e-14);
    }

    #[test]
    fn eig_diagonal_orders_descending() {
        let e = hermitian_eig(&ComplexMatrix::from_real_diagonal(&[0.0, 3.0]), &tol()).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14 && e.values[1].abs() < 1e-14);
        assert!((e.vectors[(1, 0)] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((e.vectors[(0, 1)] - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn eig_tetrad_group() {
        // λ² − λ + 1/6 = 0
        let e = hermitian_eig(&tetrad_m03(), &tol()).unwrap();
        let s3 = 3f64.sqrt();
        assert!((e.values[0] - (3.0 + s3) / 6.0).abs() < 1e-14);
        assert!((e.values[1] - (3.0 - s3) / 6.0).abs() < 1e-14);
        assert!(e.reconstruct().distance(&tetrad_m03()) < 1e-14);
    }

    #[test]
    fn eig_phase_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_psd(&mut rng, 4);
        let e = hermitian_eig(&a, &tol()).unwrap();
        for j in 0..4 {
            let col = e.vectors.column(j);
            let big = col
                .iter()
                .copied()
                .max_by(|x, y| x.norm().total_cmp(&y.norm()))
                .unwrap();
            assert!(big.im.abs() < 1e-15 && big.re > 0.0);
        }
    }

    #[test]
    fn eig_rejects_bad_input() {
        let a = ComplexMatrix::new(2, 2, vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert!(matches!(
            hermitian_eig(&a, &tol()),
            Err(LinalgError::NotHermitian { .. })
        ));
        assert!(matches!(
            hermitian_eig(&ComplexMatrix::zeros(2, 3), &tol()),
            Err(LinalgError::NotSquare { .. })
        ));
    }

    #[test]
    fn pinv_analytic_cases() {
        let p = pseudo_inverse(&ComplexMatrix::identity(3), &tol());
        assert!(p.distance(&ComplexMatrix::identity(3)) < 1e-14);
        let p = pseudo_inverse(&ComplexMatrix::from_real_diagonal(&[2.0, 0.0]), &tol());
        assert!(p.distance(&ComplexMatrix::from_real_diagonal(&[0.5, 0.0])) < 1e-14);
        let z = pseudo_inverse(&ComplexMatrix::zeros(2, 3), &tol());
        assert_eq!((z.rows(), z.cols()), (3, 2));
        assert_eq!(z.frobenius_norm(), 0.0);
    }

    #[test]
    fn pinv_rank_two_axioms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_rank_deficient(&mut rng, 3, 3, 2);
        assert_eq!(svd(&a).rank(&tol()), 2);
        let p = pseudo_inverse(&a, &tol());
        for r in penrose_residuals(&a, &p) {
            assert!(r < 1e-9, "{r}");
        }
    }

    #[test]
    fn pinv_rectangular_axioms() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for (m, n) in [(2, 5), (5, 2), (4, 4)] {
            let a = random_matrix(&mut rng, m, n);
            let p = pseudo_inverse(&a, &tol());
            for r in penrose_residuals(&a, &p) {
                assert!(r < 1e-9);
            }
        }
    }

    #[test]
    fn svd_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_matrix(&mut rng, 4, 4);
        let d = svd(&a);
        let sigma = ComplexMatrix::from_real_diagonal(&d.singular);
        assert!((&(&d.u * &sigma) * &d.v.adjoint()).distance(&a) < 1e-12);
        assert!(d.singular.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn sqrt_cases() {
        let s = psd_sqrt(&ComplexMatrix::identity(2), &tol()).unwrap();
        assert!(s.distance(&ComplexMatrix::identity(2)) < 1e-14);
        let s = psd_sqrt(&ComplexMatrix::from_real_diagonal(&[4.0, 1.0]), &tol()).unwrap();
        assert!(s.distance(&ComplexMatrix::from_real_diagonal(&[2.0, 1.0])) < 1e-14);
        assert!(matches!(
            psd_sqrt(&ComplexMatrix::from_real_diagonal(&[1.0, -0.5]), &tol()),
            Err(LinalgError::NotPsd { .. })
        ));
        // rounding dust below zero is clamped
        let s = psd_sqrt(&ComplexMatrix::from_real_diagonal(&[1.0, -1e-13]), &tol()).unwrap();
        assert_eq!(s[(1, 1)], c(0.0, 0.0));
    }

    #[test]
    fn sqrt_tetrad_group_shares_eigenvectors() {
        let m03 = tetrad_m03();
        let s = psd_sqrt(&m03, &tol()).unwrap();
        let e = hermitian_eig(&m03, &tol()).unwrap();
        let es = hermitian_eig(&s, &tol()).unwrap();
        let s3 = 3f64.sqrt();
        assert!((es.values[0] - ((3.0 + s3) / 6.0).sqrt()).abs() < 1e-14);
        assert!((es.values[1] - ((3.0 - s3) / 6.0).sqrt()).abs() < 1e-14);
        assert!(es.vectors.distance(&e.vectors) < 1e-12);
        assert!((&s * &s).distance(&m03) < 1e-14);
    }

    #[test]
    fn completion_small_cases() {
        let e0 = ComplexMatrix::identity(2).block(0, 0, 2, 1);
        let u = complete_to_unitary(&e0, &tol()).unwrap();
        assert_eq!(u, ComplexMatrix::identity(2));

        let h = 0.5f64.sqrt();
        let col = ComplexMatrix::new(2, 1, vec![c(h, 0.0), c(h, 0.0)]).unwrap();
        let u = complete_to_unitary(&col, &tol()).unwrap();
        assert!(isometry_residual(&u) < 1e-15);
        // second column is (1, −1)/√2 up to phase
        let overlap = u[(0, 1)] * h - u[(1, 1)] * h;
        assert!((overlap.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn completion_rejects_non_isometry() {
        let col = ComplexMatrix::new(2, 1, vec![c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert!(matches!(
            complete_to_unitary(&col, &tol()),
            Err(LinalgError::NotIsometry { .. })
        ));
    }

    #[test]
    fn completion_keeps_block_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = crate::random::random_unitary(&mut rng, 6);
        let block = q.block(0, 0, 6, 3);
        let u = complete_to_unitary(&block, &tol()).unwrap();
        assert_eq!(u.block(0, 0, 6, 3), block);
        assert!(isometry_residual(&u) < 1e-10);
    }
}
