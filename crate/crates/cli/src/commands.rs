use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use povm_tree::cost::{compare, crossover, CostReport};
use povm_tree::fixtures::tetrad;
use povm_tree::linalg::Tolerances;
use povm_tree::random::random_unitary;
use povm_tree::simulator::{direct_probabilities, sample, tree_probabilities};
use povm_tree::tree::{compile as compile_tree, verify, MeasurementTree, SplitCoefficients, VerificationReport};
use povm_tree::Povm;

use crate::files::{load_state, write_json, PovmFile, TreeFile};
use crate::{parse_grouping, walkthrough, CliError};

fn io(e: std::io::Error) -> CliError {
    CliError::Io(e.to_string())
}

pub fn validate(path: &Path, tol: &Tolerances, out: &mut dyn Write) -> Result<(), CliError> {
    let file = PovmFile::load(path)?;
    let elements = file.matrices()?;
    let labels = file.labels()?;
    let diag = Povm::diagnose(&elements, tol)?;
    writeln!(
        out,
        "{}: dimension {}, {} elements",
        path.display(),
        file.dimension,
        elements.len()
    )
    .map_err(io)?;
    writeln!(out, "{:<12} {:>14} {:>16}", "label", "hermiticity", "min eigenvalue").map_err(io)?;
    for ((label, h), e) in labels.iter().zip(&diag.hermiticity).zip(&diag.min_eigenvalues) {
        writeln!(out, "{:<12} {:>14.3e} {:>16.3e}", label.name, h, e).map_err(io)?;
    }
    writeln!(out, "completeness ||sum M - I||_F = {:.3e}", diag.completeness).map_err(io)?;
    Povm::with_labels(elements, labels, tol)?;
    writeln!(out, "valid POVM (tolerance {:e})", tol.check).map_err(io)?;
    Ok(())
}

fn write_verification(report: &VerificationReport, out: &mut dyn Write) -> Result<(), CliError> {
    let leaf_max = report.leaves.iter().fold(0.0f64, |m, l| m.max(l.residual));
    writeln!(
        out,
        "verification: {} nodes, {} leaves; max node residual {:.3e}, max leaf residual {:.3e}, max unitarity residual {:.3e}: {}",
        report.nodes.len(),
        report.leaves.len(),
        report.max_residual(),
        leaf_max,
        report.max_unitarity(),
        if report.passed { "passed" } else { "FAILED" }
    )
    .map_err(io)?;
    for path in report.failing_nodes() {
        writeln!(out, "  failing node {path:?}").map_err(io)?;
    }
    Ok(())
}

fn write_cost(r: &CostReport, out: &mut dyn Write) -> Result<(), CliError> {
    writeln!(out, "cost (two-level operations), N = {}, d = {}:", r.n_outcomes, r.dim).map_err(io)?;
    writeln!(out, "  full Neumark extension      {:>12}", r.neumark_ops).map_err(io)?;
    writeln!(
        out,
        "  single extra dimension      {:>12}  (expected {:.1})",
        r.single_extra_dim_ops, r.single_extra_dim_expected_ops
    )
    .map_err(io)?;
    writeln!(
        out,
        "  binary tree (depth {:>2})     {:>12}",
        r.binary_tree_depth, r.binary_tree_ops
    )
    .map_err(io)?;
    Ok(())
}

fn tree_path_for(input: &Path) -> PathBuf {
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("povm");
    let stem = stem.strip_suffix(".povm").unwrap_or(stem);
    input.with_file_name(format!("{stem}.tree.json"))
}

/// Compiles `povm`, verifies it and writes the tree file.
pub(crate) fn compile_povm(
    povm: &Povm,
    order: Option<&[usize]>,
    seed: Option<u64>,
    tol: &Tolerances,
) -> Result<(MeasurementTree, VerificationReport), CliError> {
    let mut kraus = povm.default_kraus(tol);
    if let Some(seed) = seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unitaries = (0..povm.len()).map(|_| random_unitary(&mut rng, povm.dim())).collect();
        kraus = kraus.apply_freedom(unitaries, tol)?;
    }
    let tree = compile_tree(povm, &kraus, order, SplitCoefficients::default(), tol)
        .map_err(|e| CliError::Verification(e.to_string()))?;
    let report = verify(&tree, tol);
    Ok((tree, report))
}

pub fn compile(
    path: &Path,
    grouping: Option<&str>,
    seed: Option<u64>,
    out_path: Option<&Path>,
    tol: &Tolerances,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let povm = PovmFile::load(path)?.to_povm(tol)?;
    let order = grouping.map(|g| parse_grouping(g, povm.len())).transpose()?;

    let padded = povm.pad_to_power_of_two();
    let pads: Vec<&str> = padded
        .labels()
        .iter()
        .filter(|l| l.padding)
        .map(|l| l.name.as_str())
        .collect();
    if !pads.is_empty() {
        writeln!(
            out,
            "warning: {} outcomes padded to {} with zero elements labelled {}",
            povm.len(),
            padded.len(),
            pads.join(", ")
        )
        .map_err(io)?;
    }

    let (tree, report) = compile_povm(&povm, order.as_deref(), seed, tol)?;
    let target = out_path.map_or_else(|| tree_path_for(path), Path::to_path_buf);
    write_json(&target, &TreeFile::from_tree(&tree))?;
    writeln!(out, "wrote {} (depth {})", target.display(), tree.depth).map_err(io)?;
    if let Some(seed) = seed {
        writeln!(out, "leaf Kraus operators rotated by random unitaries (seed {seed})").map_err(io)?;
    }
    write_verification(&report, out)?;
    if let Ok(r) = compare(padded.len() as u64, povm.dim() as u64) {
        write_cost(&r, out)?;
    }
    if !report.passed {
        return Err(CliError::Verification(format!("nodes {:?}", report.failing_nodes())));
    }
    Ok(())
}

pub fn simulate(
    tree_path: &Path,
    state_spec: &str,
    shots: u64,
    seed: u64,
    tol: &Tolerances,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let tree = TreeFile::load(tree_path)?.to_tree()?;
    let report = verify(&tree, tol);
    if !report.passed {
        write_verification(&report, out)?;
        return Err(CliError::Verification(format!(
            "tree nodes {:?}",
            report.failing_nodes()
        )));
    }
    let state = load_state(state_spec, tree.dim(), tol)?;
    let sim = |e: povm_tree::simulator::SimError| CliError::Validation(e.to_string());
    let probs = tree_probabilities(&tree, &state, tol).map_err(sim)?;
    let direct = direct_probabilities(&tree.povm, &state).map_err(sim)?;

    writeln!(out, "state {state_spec}, {} outcomes", probs.len()).map_err(io)?;
    writeln!(out, "{:<12} {:>14} {:>14}", "label", "tree", "Tr[M rho]").map_err(io)?;
    let mut worst = 0.0f64;
    for ((label, p), q) in tree.labels().iter().zip(&probs).zip(&direct) {
        let mark = if label.padding { "  (padding)" } else { "" };
        writeln!(out, "{:<12} {:>14.10} {:>14.10}{mark}", label.name, p, q).map_err(io)?;
        worst = worst.max((p - q).abs());
    }
    writeln!(out, "max |tree - direct| = {worst:.3e}").map_err(io)?;

    if shots > 0 {
        let rep = sample(&tree, &state, shots, seed).map_err(sim)?;
        writeln!(out, "sampled {} shots, seed {}", rep.shots, rep.seed).map_err(io)?;
        writeln!(
            out,
            "{:<12} {:>10} {:>12} {:>12}",
            "label", "count", "frequency", "expected"
        )
        .map_err(io)?;
        for ((label, c), e) in rep.labels.iter().zip(&rep.counts).zip(&rep.expected) {
            writeln!(
                out,
                "{:<12} {:>10} {:>12.6} {:>12.6}",
                label.name,
                c,
                *c as f64 / rep.shots as f64,
                e
            )
            .map_err(io)?;
        }
        writeln!(out, "max deviation {:.3} sigma", rep.max_sigma_deviation).map_err(io)?;
    }

    if worst > tol.check {
        return Err(CliError::Verification(format!(
            "tree and direct probabilities differ by {worst:.3e}"
        )));
    }
    Ok(())
}

pub fn cost(n: u64, d: u64, out: &mut dyn Write) -> Result<(), CliError> {
    let r = compare(n, d).map_err(|e| CliError::Usage(e.to_string()))?;
    write_cost(&r, out)?;
    let cheapest = if r.tree_is_cheapest() {
        "binary tree"
    } else {
        "not the binary tree"
    };
    writeln!(out, "cheapest: {cheapest}").map_err(io)?;
    match crossover(d, 1 << 20) {
        Ok(Some(n_star)) => writeln!(out, "binary tree is cheapest from N = {n_star} (d = {d})").map_err(io)?,
        Ok(None) => writeln!(out, "binary tree never cheapest below N = 2^20 (d = {d})").map_err(io)?,
        Err(e) => return Err(CliError::Usage(e.to_string())),
    }
    Ok(())
}

pub fn example_tetrad(dir: &Path, tol: &Tolerances, out: &mut dyn Write) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let povm = tetrad::povm();
    let povm_path = dir.join("tetrad.povm.json");
    write_json(&povm_path, &PovmFile::from_povm(&povm))?;

    let (tree, report) = compile_povm(&povm, Some(&tetrad::GROUPING), None, tol)?;
    let tree_path = dir.join("tetrad.tree.json");
    write_json(&tree_path, &TreeFile::from_tree(&tree))?;

    let text = walkthrough::tetrad(&tree, tol)?;
    let walk_path = dir.join("walkthrough.txt");
    fs::write(&walk_path, &text).map_err(|e| CliError::Io(format!("{}: {e}", walk_path.display())))?;

    for p in [&povm_path, &tree_path, &walk_path] {
        writeln!(out, "wrote {}", p.display()).map_err(io)?;
    }
    write_verification(&report, out)?;
    if !report.passed {
        return Err(CliError::Verification(format!("nodes {:?}", report.failing_nodes())));
    }
    Ok(())
}
