//! Binary measurement trees.
//!
//! An `N`-outcome POVM (padded to `N = 2^t`) is realised by `t` rounds of
//! two-outcome measurements. Each internal node holds a cumulative Kraus
//! operator `m_x`; its two children are reached through Kraus operators
//!
//! ```text
//! b_side = m_side · pinv(m_x) + a_side · g_x
//! ```
//!
//! where `g_x` is an isometry from the co-kernel of `m_x` that vanishes on
//! its range. The `g` term is what keeps `b₀†b₀ + b₁†b₁ = I` when `m_x` is
//! rank deficient.

use num_complex::Complex64;
use thiserror::Error;

use crate::dilation::{dilate_binary, extract_kraus, DilationError, NodeDilation};
use crate::linalg::{
    extend_orthonormal, isometry_residual, min_eigenvalue, psd_sqrt, svd, ComplexMatrix, LinalgError, Tolerances,
};
use crate::povm::{KrausFactorization, OutcomeLabel, Povm, PovmError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplitError {
    #[error("children do not sum to the parent: ‖m₀†m₀ + m₁†m₁ − M‖_F = {residual:e}")]
    InconsistentChildren { residual: f64 },
    #[error("split is not complete: ‖b₀†b₀ + b₁†b₁ − I‖_F = {residual:e}")]
    CompletenessViolation { residual: f64 },
    #[error("operator shapes do not match (expected {expected}x{expected})")]
    ShapeMismatch { expected: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompileError {
    #[error(transparent)]
    Povm(#[from] PovmError),
    #[error("invalid partition: {0}")]
    Partition(String),
    #[error("node '{path}': {source}")]
    Split { path: String, source: SplitError },
    #[error("node '{path}': {source}")]
    Dilation { path: String, source: DilationError },
    #[error("node '{path}': {source}")]
    Linalg { path: String, source: LinalgError },
}

/// Coefficients `(a₀, a₁)` weighting the null-space isometry in each child.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCoefficients {
    pub a0: Complex64,
    pub a1: Complex64,
}

impl SplitCoefficients {
    pub fn new(a0: Complex64, a1: Complex64) -> Result<Self, CompileError> {
        let norm = a0.norm_sqr() + a1.norm_sqr();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(CompileError::Partition(format!(
                "split coefficients must satisfy |a0|² + |a1|² = 1 (got {norm})"
            )));
        }
        Ok(Self { a0, a1 })
    }
}

impl Default for SplitCoefficients {
    fn default() -> Self {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self { a0: h, a1: h }
    }
}

/// Kraus operators of one two-outcome measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausPair {
    pub b0: ComplexMatrix,
    pub b1: ComplexMatrix,
}

impl KrausPair {
    /// `‖b₀†b₀ + b₁†b₁ − I‖_F`.
    pub fn completeness_residual(&self) -> f64 {
        let sum = &(&self.b0.adjoint() * &self.b0) + &(&self.b1.adjoint() * &self.b1);
        sum.distance(&ComplexMatrix::identity(self.b0.cols()))
    }

    pub fn get(&self, side: usize) -> &ComplexMatrix {
        match side {
            0 => &self.b0,
            _ => &self.b1,
        }
    }
}

/// Pseudoinverse and null-space data of a square operator from one SVD.
struct NullSpace {
    rank: usize,
    pinv: ComplexMatrix,
    /// Left singular vectors with zero singular value (co-kernel of `A`).
    left: Vec<Vec<Complex64>>,
    /// Right singular vectors with zero singular value (kernel of `A`).
    right: Vec<Vec<Complex64>>,
}

/// Kraus operators in a tree are contractions, so rank is judged against a
/// scale of at least one. A parent that is pure rounding noise (e.g. above
/// padding-only leaves) then has rank zero.
fn null_space(a: &ComplexMatrix, tol: &Tolerances) -> NullSpace {
    let d = a.rows();
    // The root parent: keep the pass-through exact.
    if *a == ComplexMatrix::identity(d) {
        return NullSpace {
            rank: d,
            pinv: a.clone(),
            left: Vec::new(),
            right: Vec::new(),
        };
    }
    let dec = svd(a);
    let rank = dec.rank_at_scale(tol, 1.0);
    NullSpace {
        rank,
        pinv: dec.pseudo_inverse_with_rank(rank),
        left: (rank..d).map(|j| dec.u.column(j)).collect(),
        right: (rank..d).map(|j| dec.v.column(j)).collect(),
    }
}

fn isometry_from(images: &[Vec<Complex64>], sources: &[Vec<Complex64>], d: usize) -> ComplexMatrix {
    images
        .iter()
        .zip(sources)
        .fold(ComplexMatrix::zeros(d, d), |acc, (img, src)| {
            &acc + &ComplexMatrix::outer(img, src)
        })
}

/// The isometry `g = Σ_{j>r} |v_j⟩⟨u_j|` built from the SVD of `parent_kraus`:
/// `u_j` span the co-kernel (so `g · parent_kraus = 0`) and `v_j` span the
/// kernel. `g†g` is the projector onto the complement of the range of
/// `parent_kraus`. Zero when `parent_kraus` has full rank.
pub fn null_space_isometry(parent_kraus: &ComplexMatrix, tol: &Tolerances) -> ComplexMatrix {
    let ns = null_space(parent_kraus, tol);
    isometry_from(&ns.right, &ns.left, parent_kraus.rows())
}

/// A split together with the isometry that completed it.
#[derive(Debug, Clone)]
pub struct SplitResult {
    pub pair: KrausPair,
    pub isometry: ComplexMatrix,
}

/// Two-outcome measurement taking a node with cumulative Kraus operator
/// `parent_kraus` to children with cumulative operators `children_kraus`.
pub fn split_node(
    children_kraus: (&ComplexMatrix, &ComplexMatrix),
    parent_kraus: &ComplexMatrix,
    coeffs: &SplitCoefficients,
    tol: &Tolerances,
) -> Result<KrausPair, SplitError> {
    split_node_with_isometry(children_kraus, parent_kraus, coeffs, tol).map(|s| s.pair)
}

/// [`split_node`], also returning the isometry `g` that was used.
///
/// When the children's ranges stay inside the parent's support (always the
/// case for Hermitian children) `g` is [`null_space_isometry`]. Otherwise the
/// image of `g` is re-aimed at the orthogonal complement of the range of
/// `ā₀·X₀ + ā₁·X₁` (with `X = m_child · pinv(parent)`), which removes the
/// cross terms from `b₀†b₀ + b₁†b₁`.
pub fn split_node_with_isometry(
    (m_left, m_right): (&ComplexMatrix, &ComplexMatrix),
    parent_kraus: &ComplexMatrix,
    coeffs: &SplitCoefficients,
    tol: &Tolerances,
) -> Result<SplitResult, SplitError> {
    let d = parent_kraus.rows();
    let shapes_ok = [m_left, m_right, parent_kraus]
        .iter()
        .all(|m| m.rows() == d && m.cols() == d);
    if !shapes_ok {
        return Err(SplitError::ShapeMismatch { expected: d });
    }

    let parent_op = &parent_kraus.adjoint() * parent_kraus;
    let child_sum = &(&m_left.adjoint() * m_left) + &(&m_right.adjoint() * m_right);
    let residual = child_sum.distance(&parent_op);
    if residual > tol.check {
        return Err(SplitError::InconsistentChildren { residual });
    }

    let ns = null_space(parent_kraus, tol);
    let x_left = m_left * &ns.pinv;
    let x_right = m_right * &ns.pinv;

    let mut isometry = isometry_from(&ns.right, &ns.left, d);
    if ns.rank < d {
        let combined = &x_left.scale(coeffs.a0.conj()) + &x_right.scale(coeffs.a1.conj());
        let cross = (&combined.adjoint() * &isometry).frobenius_norm();
        if cross > tol.check {
            let dec = svd(&combined);
            let range: Vec<_> = (0..dec.rank_at_scale(tol, 1.0)).map(|j| dec.u.column(j)).collect();
            let candidates = ns.right.iter().cloned().chain((0..d).map(|i| {
                let mut e = vec![Complex64::new(0.0, 0.0); d];
                e[i] = Complex64::new(1.0, 0.0);
                e
            }));
            let images = extend_orthonormal(&range, candidates, d - ns.rank, 1e-8);
            isometry = isometry_from(&images, &ns.left, d);
        }
    }

    let pair = KrausPair {
        b0: &x_left + &isometry.scale(coeffs.a0),
        b1: &x_right + &isometry.scale(coeffs.a1),
    };
    let residual = pair.completeness_residual();
    if residual > tol.check {
        return Err(SplitError::CompletenessViolation { residual });
    }
    Ok(SplitResult { pair, isometry })
}

/// Internal-node data: the split measurement and its children.
#[derive(Debug, Clone)]
pub struct Split {
    /// Null-space isometry `g` used at this node.
    pub isometry: ComplexMatrix,
    /// Probe coupling realising the children's Kraus pair.
    pub dilation: NodeDilation,
    pub children: [TreeNode; 2],
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    /// Probe results leading here, e.g. `"01"`; empty at the root.
    pub path: String,
    /// Indices (into the padded POVM) of the outcomes below this node.
    pub outcomes: Vec<usize>,
    /// `m_x`, the product of node Kraus operators along the path.
    pub cumulative_kraus: ComplexMatrix,
    /// `M_x = m_x† m_x`.
    pub cumulative_operator: ComplexMatrix,
    /// Kraus operator applied at the parent to reach this node.
    pub node_kraus: Option<ComplexMatrix>,
    pub split: Option<Box<Split>>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }

    pub fn children(&self) -> Option<&[TreeNode; 2]> {
        self.split.as_ref().map(|s| &s.children)
    }

    /// Kraus pair of the children, for internal nodes.
    pub fn kraus_pair(&self) -> Option<KrausPair> {
        let [l, r] = self.children()?;
        Some(KrausPair {
            b0: l.node_kraus.clone()?,
            b1: r.node_kraus.clone()?,
        })
    }

    fn visit<'a>(&'a self, out: &mut Vec<&'a TreeNode>) {
        out.push(self);
        if let Some(children) = self.children() {
            children[0].visit(out);
            children[1].visit(out);
        }
    }
}

/// A compiled binary measurement tree.
#[derive(Debug, Clone)]
pub struct MeasurementTree {
    /// The padded POVM the tree implements.
    pub povm: Povm,
    pub root: TreeNode,
    /// `t = log₂ N`.
    pub depth: usize,
    pub coefficients: SplitCoefficients,
    pub tolerances: Tolerances,
}

impl MeasurementTree {
    /// All nodes in depth-first pre-order.
    pub fn nodes(&self) -> Vec<&TreeNode> {
        let mut out = Vec::new();
        self.root.visit(&mut out);
        out
    }

    /// Leaves from left to right.
    pub fn leaves(&self) -> Vec<&TreeNode> {
        self.nodes().into_iter().filter(|n| n.is_leaf()).collect()
    }

    pub fn internal_nodes(&self) -> Vec<&TreeNode> {
        self.nodes().into_iter().filter(|n| !n.is_leaf()).collect()
    }

    pub fn node(&self, path: &str) -> Option<&TreeNode> {
        let mut node = &self.root;
        for bit in path.chars() {
            let side = match bit {
                '0' => 0,
                '1' => 1,
                _ => return None,
            };
            node = &node.children()?[side];
        }
        Some(node)
    }

    pub fn node_mut(&mut self, path: &str) -> Option<&mut TreeNode> {
        let mut node = &mut self.root;
        for bit in path.chars() {
            let side = match bit {
                '0' => 0,
                '1' => 1,
                _ => return None,
            };
            node = &mut node.split.as_mut()?.children[side];
        }
        Some(node)
    }

    pub fn labels(&self) -> &[OutcomeLabel] {
        self.povm.labels()
    }

    pub fn dim(&self) -> usize {
        self.povm.dim()
    }
}

/// Leaf order for a padded POVM of `n` outcomes. A partition of length `k`
/// (the unpadded count) gets the padding indices appended.
fn leaf_order(partition: Option<&[usize]>, k: usize, n: usize) -> Result<Vec<usize>, CompileError> {
    let Some(p) = partition else {
        return Ok((0..n).collect());
    };
    let mut order = p.to_vec();
    if order.len() == k {
        order.extend(k..n);
    }
    if order.len() != n {
        return Err(CompileError::Partition(format!(
            "expected a permutation of {k} or {n} outcomes, got {} indices",
            p.len()
        )));
    }
    let mut seen = vec![false; n];
    for &j in &order {
        if j >= n || seen[j] {
            return Err(CompileError::Partition(format!(
                "index {j} is out of range or repeated"
            )));
        }
        seen[j] = true;
    }
    Ok(order)
}

struct Builder<'a> {
    povm: &'a Povm,
    kraus: &'a KrausFactorization,
    coeffs: SplitCoefficients,
    tol: Tolerances,
}

impl Builder<'_> {
    /// Target cumulative Kraus operator of a node: the factorization's own
    /// operator at leaves, `√M_x` above them.
    fn target(&self, outcomes: &[usize], path: &str) -> Result<ComplexMatrix, CompileError> {
        if let [j] = outcomes {
            return Ok(self.kraus.kraus[*j].clone());
        }
        psd_sqrt(&self.operator_sum(outcomes), &self.tol).map_err(|source| CompileError::Linalg {
            path: path.to_string(),
            source,
        })
    }

    fn operator_sum(&self, outcomes: &[usize]) -> ComplexMatrix {
        let d = self.povm.dim();
        outcomes
            .iter()
            .fold(ComplexMatrix::zeros(d, d), |acc, &j| &acc + self.povm.element(j))
    }

    fn build(
        &self,
        path: String,
        outcomes: Vec<usize>,
        cumulative_kraus: ComplexMatrix,
        target: ComplexMatrix,
        node_kraus: Option<ComplexMatrix>,
    ) -> Result<TreeNode, CompileError> {
        let cumulative_operator = &cumulative_kraus.adjoint() * &cumulative_kraus;
        if outcomes.len() == 1 {
            return Ok(TreeNode {
                path,
                outcomes,
                cumulative_kraus,
                cumulative_operator,
                node_kraus,
                split: None,
            });
        }

        let half = outcomes.len() / 2;
        let (left, right) = outcomes.split_at(half);
        let left_path = format!("{path}0");
        let right_path = format!("{path}1");
        let t_left = self.target(left, &left_path)?;
        let t_right = self.target(right, &right_path)?;
        // Split against the exact target rather than the accumulated product,
        // whose rounding noise would otherwise leak into the rank decision.
        let split =
            split_node_with_isometry((&t_left, &t_right), &target, &self.coeffs, &self.tol).map_err(|source| {
                CompileError::Split {
                    path: path.clone(),
                    source,
                }
            })?;
        let dilation = dilate_binary(&split.pair, &self.tol).map_err(|source| CompileError::Dilation {
            path: path.clone(),
            source,
        })?;

        let m_left = &split.pair.b0 * &cumulative_kraus;
        let m_right = &split.pair.b1 * &cumulative_kraus;
        let (left_node, right_node) = rayon::join(
            || self.build(left_path, left.to_vec(), m_left, t_left, Some(split.pair.b0.clone())),
            || {
                self.build(
                    right_path,
                    right.to_vec(),
                    m_right,
                    t_right,
                    Some(split.pair.b1.clone()),
                )
            },
        );
        Ok(TreeNode {
            path,
            outcomes,
            cumulative_kraus,
            cumulative_operator,
            node_kraus,
            split: Some(Box::new(Split {
                isometry: split.isometry,
                dilation,
                children: [left_node?, right_node?],
            })),
        })
    }
}

/// Compiles a POVM and a Kraus factorization of it into a measurement tree.
///
/// The POVM is padded to `2^t` outcomes. `partition` fixes the leaf order
/// (default: index order); each node splits its ordered outcome list in half.
pub fn compile(
    povm: &Povm,
    factorization: &KrausFactorization,
    partition: Option<&[usize]>,
    coeffs: SplitCoefficients,
    tol: &Tolerances,
) -> Result<MeasurementTree, CompileError> {
    factorization.check(povm, tol)?;
    let padded = povm.pad_to_power_of_two();
    let n = padded.len();
    let kraus = factorization.padded_to(n, povm.dim());
    let order = leaf_order(partition, povm.len(), n)?;

    let builder = Builder {
        povm: &padded,
        kraus: &kraus,
        coeffs,
        tol: *tol,
    };
    let root = builder.build(
        String::new(),
        order,
        ComplexMatrix::identity(povm.dim()),
        ComplexMatrix::identity(povm.dim()),
        None,
    )?;
    Ok(MeasurementTree {
        povm: padded,
        root,
        depth: n.trailing_zeros() as usize,
        coefficients: coeffs,
        tolerances: *tol,
    })
}

/// Compiles with the default square-root factorization and coefficients.
pub fn compile_default(
    povm: &Povm,
    partition: Option<&[usize]>,
    tol: &Tolerances,
) -> Result<MeasurementTree, CompileError> {
    compile(
        povm,
        &povm.default_kraus(tol),
        partition,
        SplitCoefficients::default(),
        tol,
    )
}

/// Residuals of one internal node.
#[derive(Debug, Clone)]
pub struct NodeCheck {
    pub path: String,
    /// `‖b₀†b₀ + b₁†b₁ − I‖_F`.
    pub completeness: f64,
    /// Smallest eigenvalues of `B₀ = b₀†b₀` and `B₁ = b₁†b₁`.
    pub min_eigenvalues: [f64; 2],
    /// `‖b_side · m_x − m_side‖_F` for both children.
    pub factorization: [f64; 2],
    /// `‖M_x − Σ_{j below} M_j‖_F`.
    pub operator: f64,
    /// `‖U†U − I‖_F` of the node dilation.
    pub dilation_unitarity: f64,
    /// Largest `‖⟨j|U|0⟩ − b_j‖_F`.
    pub dilation_extraction: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct LeafCheck {
    pub path: String,
    pub outcome: usize,
    pub label: OutcomeLabel,
    /// `‖m_leaf† m_leaf − M_j‖_F`.
    pub residual: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub nodes: Vec<NodeCheck>,
    pub leaves: Vec<LeafCheck>,
    pub passed: bool,
}

impl VerificationReport {
    /// Largest residual measured against `tol.check` (unitarity excluded).
    pub fn max_residual(&self) -> f64 {
        let node_max = self.nodes.iter().flat_map(|n| {
            [
                n.completeness,
                n.factorization[0],
                n.factorization[1],
                n.operator,
                n.dilation_extraction,
                (-n.min_eigenvalues[0]).max(0.0),
                (-n.min_eigenvalues[1]).max(0.0),
            ]
        });
        let leaf_max = self.leaves.iter().map(|l| l.residual);
        node_max.chain(leaf_max).fold(0.0, f64::max)
    }

    pub fn max_unitarity(&self) -> f64 {
        self.nodes.iter().map(|n| n.dilation_unitarity).fold(0.0, f64::max)
    }

    pub fn failing_nodes(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| !n.passed)
            .map(|n| n.path.as_str())
            .collect()
    }
}

/// Re-checks every consistency condition of a tree.
pub fn verify(tree: &MeasurementTree, tol: &Tolerances) -> VerificationReport {
    let povm = &tree.povm;
    let d = povm.dim();
    let mut nodes = Vec::new();
    let mut leaves = Vec::new();
    for node in tree.nodes() {
        let Some(split) = &node.split else {
            let j = node.outcomes[0];
            let residual = node.cumulative_operator.distance(povm.element(j));
            let residual =
                residual.max((&node.cumulative_kraus.adjoint() * &node.cumulative_kraus).distance(povm.element(j)));
            leaves.push(LeafCheck {
                path: node.path.clone(),
                outcome: j,
                label: povm.labels()[j].clone(),
                residual,
                passed: residual <= tol.check,
            });
            continue;
        };

        let kids = &split.children;
        let bs: Vec<ComplexMatrix> = kids
            .iter()
            .map(|k| k.node_kraus.clone().unwrap_or_else(|| ComplexMatrix::zeros(d, d)))
            .collect();
        let pair = KrausPair {
            b0: bs[0].clone(),
            b1: bs[1].clone(),
        };
        let completeness = pair.completeness_residual();
        let psd_tol = Tolerances {
            check: f64::INFINITY,
            ..*tol
        };
        let min_eig = |b: &ComplexMatrix| {
            min_eigenvalue(&(&b.adjoint() * b).hermitian_part(), &psd_tol).unwrap_or(f64::NEG_INFINITY)
        };
        let min_eigenvalues = [min_eig(&bs[0]), min_eig(&bs[1])];
        let factorization = [0, 1].map(|s| (&bs[s] * &node.cumulative_kraus).distance(&kids[s].cumulative_kraus));
        let expected_op = node
            .outcomes
            .iter()
            .fold(ComplexMatrix::zeros(d, d), |acc, &j| &acc + povm.element(j));
        let operator = node
            .cumulative_operator
            .distance(&expected_op)
            .max((&node.cumulative_kraus.adjoint() * &node.cumulative_kraus).distance(&expected_op));
        let dilation_unitarity = isometry_residual(&split.dilation.unitary);
        let dilation_extraction = [0, 1]
            .iter()
            .map(|&j| match extract_kraus(&split.dilation, j) {
                Ok(b) if b.rows() == d => b.distance(&bs[j]),
                _ => f64::INFINITY,
            })
            .fold(0.0, f64::max);
        let passed = completeness <= tol.check
            && min_eigenvalues.iter().all(|&e| e >= -tol.check)
            && factorization.iter().all(|&f| f <= tol.check)
            && operator <= tol.check
            && dilation_unitarity <= tol.unitary
            && dilation_extraction <= tol.check;
        nodes.push(NodeCheck {
            path: node.path.clone(),
            completeness,
            min_eigenvalues,
            factorization,
            operator,
            dilation_unitarity,
            dilation_extraction,
            passed,
        });
    }
    let passed = nodes.iter().all(|n| n.passed) && leaves.iter().all(|l| l.passed);
    VerificationReport { nodes, leaves, passed }
}
