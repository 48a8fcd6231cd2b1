//! Human-readable account of the compiled tetrad tree.

use std::fmt::Write;

use povm_tree::fixtures::tetrad;
use povm_tree::linalg::{hermitian_eig, ComplexMatrix, Tolerances};
use povm_tree::simulator::{tree_probabilities, QuantumState};
use povm_tree::tree::MeasurementTree;

use crate::CliError;

fn indent(m: &ComplexMatrix) -> String {
    format!("{m:.6}").lines().map(|l| format!("    {l}\n")).collect()
}

fn node_kraus<'a>(tree: &'a MeasurementTree, path: &str) -> Result<&'a ComplexMatrix, CliError> {
    tree.node(path)
        .and_then(|n| n.node_kraus.as_ref())
        .ok_or_else(|| CliError::Verification(format!("tree has no node {path:?}")))
}

/// Walkthrough of a tetrad tree compiled with grouping {0,3} | {1,2}.
pub fn tetrad(tree: &MeasurementTree, tol: &Tolerances) -> Result<String, CliError> {
    let lin = |e: povm_tree::linalg::LinalgError| CliError::Verification(e.to_string());
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(w, "Tetrad measurement as a two-level binary tree\n");
    let _ = writeln!(w, "States |psi_j> (M_j = |psi_j><psi_j|):");
    for (j, v) in tetrad::states().iter().enumerate() {
        let _ = writeln!(w, "  psi_{j} = ({:.6}, {:.6})", v[0], v[1]);
    }
    for (j, m) in tetrad::elements().iter().enumerate() {
        let _ = write!(w, "  M_{j} =\n{}", indent(m));
    }

    let m03 = tetrad::group_operator(&[0, 3]);
    let m12 = tetrad::group_operator(&[1, 2]);
    let _ = writeln!(w, "\nFirst split groups outcomes {{0,3}} and {{1,2}}:");
    let _ = write!(w, "  M_03 = M_0 + M_3 =\n{}", indent(&m03));
    let _ = write!(w, "  M_12 = M_1 + M_2 =\n{}", indent(&m12));
    let _ = writeln!(
        w,
        "  off-diagonal of M_03: {:.10} (1/(3 sqrt 2) = {:.10})",
        m03[(0, 1)].re,
        1.0 / (3.0 * 2f64.sqrt())
    );

    let eig = hermitian_eig(&m03, tol).map_err(lin)?;
    let s3 = 3f64.sqrt();
    let _ = writeln!(
        w,
        "\nEigen-decomposition of M_03 (M_12 = I - M_03 shares the eigenvectors):"
    );
    let _ = writeln!(
        w,
        "  lambda+ = {:.10}, lambda- = {:.10}  ((3 +- sqrt 3)/6 = {:.10}, {:.10})",
        eig.values[0],
        eig.values[1],
        (3.0 + s3) / 6.0,
        (3.0 - s3) / 6.0
    );
    let _ = write!(w, "  eigenvectors (columns):\n{}", indent(&eig.vectors));

    let root = tree
        .root
        .split
        .as_ref()
        .ok_or_else(|| CliError::Verification("root is a leaf".into()))?;
    let _ = writeln!(w, "\nFirst-level Kraus operators b_0 = sqrt(M_03), b_1 = sqrt(M_12):");
    let _ = write!(w, "  b_0 =\n{}", indent(node_kraus(tree, "0")?));
    let _ = write!(w, "  b_1 =\n{}", indent(node_kraus(tree, "1")?));
    let _ = writeln!(
        w,
        "\nProbe coupling U (4x4, basis |probe>|system>, first two columns [b_0; b_1]):"
    );
    let _ = write!(w, "{}", indent(&root.dilation.unitary));

    let _ = writeln!(
        w,
        "\nSecond level. B_j = b_j^dagger b_j for the node measurement reaching outcome j:"
    );
    let mut bs = Vec::new();
    for (j, path) in [(0, "00"), (3, "01"), (1, "10"), (2, "11")] {
        let b = node_kraus(tree, path)?;
        let big = &b.adjoint() * b;
        let _ = write!(w, "  B_{j} (node {path:?}) =\n{}", indent(&big));
        bs.push((j, big));
    }
    let sum = |a: usize, b: usize| {
        let pick = |k: usize| &bs.iter().find(|(j, _)| *j == k).expect("present").1;
        (pick(a) + pick(b)).distance(&ComplexMatrix::identity(2))
    };
    let _ = writeln!(w, "  ||B_0 + B_3 - I||_F = {:.3e}", sum(0, 3));
    let _ = writeln!(w, "  ||B_1 + B_2 - I||_F = {:.3e}", sum(1, 2));

    let _ = writeln!(w, "\nLeaf reconstruction ||m^dagger m - M_j||_F:");
    for leaf in tree.leaves() {
        let j = leaf.outcomes[0];
        let _ = writeln!(
            w,
            "  leaf {:?} -> outcome {j}: {:.3e}",
            leaf.path,
            leaf.cumulative_operator.distance(tree.povm.element(j))
        );
    }

    let probs =
        tree_probabilities(tree, &QuantumState::basis(2, 0), tol).map_err(|e| CliError::Verification(e.to_string()))?;
    let _ = writeln!(w, "\nProbabilities for rho = |0><0|:");
    for (j, p) in probs.iter().enumerate() {
        let _ = writeln!(w, "  P({j}) = {p:.10}");
    }
    Ok(s)
}
