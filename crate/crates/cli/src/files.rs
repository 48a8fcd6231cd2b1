//! JSON file formats for POVMs, compiled trees and states.
//!
//! Complex numbers are `[re, im]` pairs and matrices are lists of rows.
//! Floats are written in shortest round-trip form, so every matrix survives a
//! save/load cycle bit for bit.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use povm_tree::dilation::NodeDilation;
use povm_tree::linalg::{ComplexMatrix, Tolerances};
use povm_tree::simulator::QuantumState;
use povm_tree::tree::{MeasurementTree, Split, SplitCoefficients, TreeNode};
use povm_tree::{OutcomeLabel, Povm};

use crate::CliError;

pub type MatrixJson = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_json(m: &ComplexMatrix) -> MatrixJson {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

/// Converts nested rows into a matrix. `what` names the field for messages.
pub fn matrix_from_json(rows: &MatrixJson, what: &str) -> Result<ComplexMatrix, String> {
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    let mut data = Vec::with_capacity(n_rows * n_cols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n_cols {
            return Err(format!("{what}: row {i} has {} entries, expected {n_cols}", row.len()));
        }
        data.extend(row.iter().map(|[re, im]| Complex64::new(*re, *im)));
    }
    ComplexMatrix::new(n_rows, n_cols, data).map_err(|e| format!("{what}: {e}"))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PovmFile {
    pub dimension: usize,
    pub elements: Vec<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl PovmFile {
    pub fn from_povm(p: &Povm) -> Self {
        Self {
            dimension: p.dim(),
            elements: p.elements().iter().map(matrix_to_json).collect(),
            labels: Some(p.labels().iter().map(|l| l.name.clone()).collect()),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        parse(path, &read(path)?)
    }

    /// Element matrices, checked against the declared dimension.
    pub fn matrices(&self) -> Result<Vec<ComplexMatrix>, CliError> {
        self.elements
            .iter()
            .enumerate()
            .map(|(j, rows)| {
                let m = matrix_from_json(rows, &format!("elements[{j}]")).map_err(CliError::Parse)?;
                if m.rows() != self.dimension || m.cols() != self.dimension {
                    return Err(CliError::Parse(format!(
                        "elements[{j}]: {}x{} matrix, but dimension is {}",
                        m.rows(),
                        m.cols(),
                        self.dimension
                    )));
                }
                Ok(m)
            })
            .collect()
    }

    pub fn labels(&self) -> Result<Vec<OutcomeLabel>, CliError> {
        match &self.labels {
            None => Ok((0..self.elements.len())
                .map(|j| OutcomeLabel::new(j.to_string()))
                .collect()),
            Some(names) if names.len() == self.elements.len() => {
                Ok(names.iter().map(|n| OutcomeLabel::new(n.clone())).collect())
            }
            Some(names) => Err(CliError::Parse(format!(
                "labels: {} names for {} elements",
                names.len(),
                self.elements.len()
            ))),
        }
    }

    pub fn to_povm(&self, tol: &Tolerances) -> Result<Povm, CliError> {
        Povm::with_labels(self.matrices()?, self.labels()?, tol).map_err(CliError::from)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientsJson {
    pub a0: [f64; 2],
    pub a1: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TolerancesJson {
    pub rank: f64,
    pub check: f64,
    pub unitary: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreePovmJson {
    pub dimension: usize,
    pub elements: Vec<MatrixJson>,
    pub labels: Vec<String>,
    /// Flags the zero elements added to reach a power-of-two outcome count.
    pub padding: Vec<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeJson {
    pub path: String,
    pub outcomes: Vec<usize>,
    pub cumulative_kraus: MatrixJson,
    pub cumulative_operator: MatrixJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_kraus: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isometry: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dilation_unitary: Option<MatrixJson>,
}

/// A serialized [`MeasurementTree`]. Nodes are stored flat in pre-order and
/// linked by their path bitstrings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeFile {
    pub depth: usize,
    pub coefficients: CoefficientsJson,
    pub tolerances: TolerancesJson,
    pub povm: TreePovmJson,
    pub nodes: Vec<NodeJson>,
}

impl TreeFile {
    pub fn from_tree(tree: &MeasurementTree) -> Self {
        let c = &tree.coefficients;
        let t = &tree.tolerances;
        let nodes = tree
            .nodes()
            .into_iter()
            .map(|n| NodeJson {
                path: n.path.clone(),
                outcomes: n.outcomes.clone(),
                cumulative_kraus: matrix_to_json(&n.cumulative_kraus),
                cumulative_operator: matrix_to_json(&n.cumulative_operator),
                node_kraus: n.node_kraus.as_ref().map(matrix_to_json),
                isometry: n.split.as_ref().map(|s| matrix_to_json(&s.isometry)),
                dilation_unitary: n.split.as_ref().map(|s| matrix_to_json(&s.dilation.unitary)),
            })
            .collect();
        Self {
            depth: tree.depth,
            coefficients: CoefficientsJson {
                a0: [c.a0.re, c.a0.im],
                a1: [c.a1.re, c.a1.im],
            },
            tolerances: TolerancesJson {
                rank: t.rank,
                check: t.check,
                unitary: t.unitary,
            },
            povm: TreePovmJson {
                dimension: tree.dim(),
                elements: tree.povm.elements().iter().map(matrix_to_json).collect(),
                labels: tree.labels().iter().map(|l| l.name.clone()).collect(),
                padding: tree.labels().iter().map(|l| l.padding).collect(),
            },
            nodes,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        parse(path, &read(path)?)
    }

    pub fn to_tree(&self) -> Result<MeasurementTree, CliError> {
        let bad = CliError::Parse;
        let tolerances = Tolerances::new(self.tolerances.rank, self.tolerances.check, self.tolerances.unitary)
            .map_err(|e| bad(format!("tolerances: {e}")))?;
        let [a0, a1] = [self.coefficients.a0, self.coefficients.a1].map(|[re, im]| Complex64::new(re, im));
        let coefficients = SplitCoefficients::new(a0, a1).map_err(|e| bad(format!("coefficients: {e}")))?;

        let p = &self.povm;
        if p.labels.len() != p.elements.len() || p.padding.len() != p.elements.len() {
            return Err(bad("povm: labels, padding and elements differ in length".into()));
        }
        let elements = p
            .elements
            .iter()
            .enumerate()
            .map(|(j, rows)| matrix_from_json(rows, &format!("povm.elements[{j}]")).map_err(bad))
            .collect::<Result<Vec<_>, _>>()?;
        let labels = p
            .labels
            .iter()
            .zip(&p.padding)
            .map(|(name, &pad)| {
                if pad {
                    OutcomeLabel::padding(name.clone())
                } else {
                    OutcomeLabel::new(name.clone())
                }
            })
            .collect();
        let povm = Povm::with_labels(elements, labels, &tolerances)?;
        if povm.len() != 1 << self.depth {
            return Err(bad(format!(
                "depth {} does not fit {} outcomes",
                self.depth,
                povm.len()
            )));
        }

        let by_path: HashMap<&str, &NodeJson> = self.nodes.iter().map(|n| (n.path.as_str(), n)).collect();
        if by_path.len() != self.nodes.len() {
            return Err(bad("nodes: duplicate path".into()));
        }
        let root = build_node("", &by_path, povm.dim())?;
        if root_size(&root) != self.nodes.len() {
            return Err(bad("nodes: records not reachable from the root".into()));
        }
        Ok(MeasurementTree {
            povm,
            root,
            depth: self.depth,
            coefficients,
            tolerances,
        })
    }
}

fn root_size(node: &TreeNode) -> usize {
    1 + node.children().map_or(0, |[l, r]| root_size(l) + root_size(r))
}

fn build_node(path: &str, nodes: &HashMap<&str, &NodeJson>, d: usize) -> Result<TreeNode, CliError> {
    let rec = nodes
        .get(path)
        .ok_or_else(|| CliError::Parse(format!("nodes: missing node {path:?}")))?;
    let field = |name: &str, rows: &MatrixJson| {
        matrix_from_json(rows, &format!("node {path:?} {name}")).map_err(CliError::Parse)
    };
    let split = match (&rec.isometry, &rec.dilation_unitary) {
        (Some(g), Some(u)) => Some(Box::new(Split {
            isometry: field("isometry", g)?,
            dilation: NodeDilation {
                unitary: field("dilation_unitary", u)?,
                system_dim: d,
            },
            children: [
                build_node(&format!("{path}0"), nodes, d)?,
                build_node(&format!("{path}1"), nodes, d)?,
            ],
        })),
        (None, None) => None,
        _ => {
            return Err(CliError::Parse(format!(
                "node {path:?}: isometry and dilation_unitary must appear together"
            )))
        }
    };
    Ok(TreeNode {
        path: path.to_string(),
        outcomes: rec.outcomes.clone(),
        cumulative_kraus: field("cumulative_kraus", &rec.cumulative_kraus)?,
        cumulative_operator: field("cumulative_operator", &rec.cumulative_operator)?,
        node_kraus: rec.node_kraus.as_ref().map(|m| field("node_kraus", m)).transpose()?,
        split,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateFile {
    pub dimension: usize,
    /// Density matrix. Exactly one of `density` and `vector` is given.
    #[serde(default)]
    pub density: Option<MatrixJson>,
    /// Pure state amplitudes; normalized on load.
    #[serde(default)]
    pub vector: Option<Vec<[f64; 2]>>,
}

/// Resolves `pure:k`, `mixed:max` or a path to a state file.
pub fn load_state(spec: &str, d: usize, tol: &Tolerances) -> Result<QuantumState, CliError> {
    if let Some(k) = spec.strip_prefix("pure:") {
        let k: usize = k
            .parse()
            .map_err(|_| CliError::Usage(format!("state {spec:?}: expected pure:<index>")))?;
        if k >= d {
            return Err(CliError::Validation(format!(
                "state {spec:?}: index {k} out of range for dimension {d}"
            )));
        }
        return Ok(QuantumState::basis(d, k));
    }
    if spec == "mixed:max" {
        return Ok(QuantumState::maximally_mixed(d));
    }
    if spec.starts_with("mixed:") {
        return Err(CliError::Usage(format!("state {spec:?}: only mixed:max is built in")));
    }

    let path = Path::new(spec);
    let file: StateFile = parse(path, &read(path)?)?;
    if file.dimension != d {
        return Err(CliError::Validation(format!(
            "state dimension {} does not match tree dimension {d}",
            file.dimension
        )));
    }
    match (&file.density, &file.vector) {
        (Some(rows), None) => {
            let rho = matrix_from_json(rows, "density").map_err(CliError::Parse)?;
            if rho.rows() != d || rho.cols() != d {
                return Err(CliError::Parse(format!("density: expected {d}x{d}")));
            }
            QuantumState::new(rho, tol).map_err(|e| CliError::Validation(e.to_string()))
        }
        (None, Some(v)) => {
            if v.len() != d {
                return Err(CliError::Parse(format!(
                    "vector: {} amplitudes for dimension {d}",
                    v.len()
                )));
            }
            let psi: Vec<Complex64> = v.iter().map(|[re, im]| Complex64::new(*re, *im)).collect();
            let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(CliError::Validation("vector: zero or non-finite norm".into()));
            }
            let psi: Vec<Complex64> = psi.iter().map(|z| z / norm).collect();
            Ok(QuantumState::pure(&psi))
        }
        _ => Err(CliError::Parse(format!(
            "{}: give exactly one of `density` and `vector`",
            path.display()
        ))),
    }
}
