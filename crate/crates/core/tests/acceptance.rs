//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! fails if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use povm_tree::cost::{ceil_log2, compare};
use povm_tree::dilation::{extract_kraus, full_neumark, HigherRank};
use povm_tree::fixtures::tetrad;
use povm_tree::linalg::{isometry_residual, pseudo_inverse, ComplexMatrix, Tolerances};
use povm_tree::random::{
    random_matrix, random_mixed_rank_povm, random_mixed_state, random_rank_deficient, random_unitary,
};
use povm_tree::simulator::{direct_probabilities, sample, tree_probabilities, QuantumState};
use povm_tree::tree::{compile, compile_default, MeasurementTree, SplitCoefficients};
use povm_tree::Povm;

type Outcome = Result<String, String>;

fn tol() -> Tolerances {
    Tolerances::default()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// The 200-POVM random suite shared by criteria 2-4.
struct Suite {
    cases: Vec<(Povm, MeasurementTree)>,
    padded: usize,
    rank_deficient_elements: usize,
}

fn random_suite() -> Result<(Suite, Duration), String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_2024);
    let mut cases = Vec::with_capacity(200);
    let (mut padded, mut deficient) = (0, 0);
    for i in 0..200 {
        let d = [2, 3, 4][i % 3];
        let n = rng.random_range(2..=16);
        let p = random_mixed_rank_povm(&mut rng, d, n);
        if !n.is_power_of_two() {
            padded += 1;
        }
        deficient += p
            .elements()
            .iter()
            .filter(|m| povm_tree::linalg::svd(m).rank(&tol()) < d)
            .count();
        let tree = compile_default(&p, None, &tol()).map_err(|e| format!("case {i} (d={d}, N={n}): {e}"))?;
        cases.push((p, tree));
    }
    Ok((
        Suite {
            cases,
            padded,
            rank_deficient_elements: deficient,
        },
        start.elapsed(),
    ))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let p = tetrad::povm();
    let tree = compile_default(&p, Some(&tetrad::GROUPING), &tol()).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for leaf in tree.leaves() {
        let j = leaf.outcomes[0];
        worst = worst.max(leaf.cumulative_operator.distance(p.element(j)));
    }
    let probs = tree_probabilities(&tree, &QuantumState::basis(2, 0), &tol()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let expect = [0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0];
    let prob_err = probs.iter().zip(expect).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    ensure(worst <= 1e-9, || format!("leaf operator error {worst:.3e}"))?;
    ensure(prob_err <= 1e-9, || format!("probabilities {probs:?}"))?;
    ensure(elapsed < Duration::from_secs(1), || format!("runtime {elapsed:?}"))?;
    Ok(format!(
        "tetrad leaves max err {worst:.2e}, probabilities {:.6?} (max err {prob_err:.2e}), {elapsed:?}",
        probs
    ))
}

fn criterion_2(suite: &Suite, build_time: Duration) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x7a1a);
    let mut worst = [0.0f64; 3];
    for (i, (p, tree)) in suite.cases.iter().enumerate() {
        let ext = full_neumark(p, &tol(), HigherRank::Decompose).map_err(|e| format!("case {i}: {e}"))?;
        for _ in 0..50 {
            let state = random_mixed_state(&mut rng, p.dim());
            let t = tree_probabilities(tree, &state, &tol()).map_err(|e| e.to_string())?;
            let n = ext.probabilities(&state).map_err(|e| e.to_string())?;
            let d = direct_probabilities(p, &state).map_err(|e| e.to_string())?;
            for (j, tj) in t.iter().enumerate() {
                let dj = d.get(j).copied().unwrap_or(0.0);
                let nj = n.get(j).copied().unwrap_or(0.0);
                worst[0] = worst[0].max((tj - nj).abs());
                worst[1] = worst[1].max((tj - dj).abs());
                worst[2] = worst[2].max((nj - dj).abs());
            }
        }
    }
    let elapsed = build_time + start.elapsed();
    let max = worst.iter().fold(0.0f64, |m, w| m.max(*w));
    ensure(max <= 1e-8, || {
        format!(
            "pairwise disagreement {:.3e}, {:.3e}, {:.3e}",
            worst[0], worst[1], worst[2]
        )
    })?;
    ensure(suite.padded > 0 && suite.rank_deficient_elements > 0, || {
        "suite lacks padded or rank-deficient cases".into()
    })?;
    ensure(elapsed < Duration::from_secs(60), || format!("runtime {elapsed:?}"))?;
    Ok(format!(
        "200 POVMs x 50 states, {} padded, {} rank-deficient elements; max |tree-neumark| {:.2e}, |tree-direct| {:.2e}, |neumark-direct| {:.2e}, {elapsed:?}",
        suite.padded, suite.rank_deficient_elements, worst[0], worst[1], worst[2]
    ))
}

fn criterion_3(suite: &Suite) -> Outcome {
    let mut worst = 0.0f64;
    let mut nodes = 0;
    let mut with_g = 0;
    for (_, tree) in &suite.cases {
        for node in tree.internal_nodes() {
            let pair = node.kraus_pair().ok_or("internal node without pair")?;
            worst = worst.max(pair.completeness_residual());
            nodes += 1;
            let split = node.split.as_ref().ok_or("internal node without split")?;
            // g is nonzero exactly when the parent is rank-deficient; g†g then
            // projects onto a subspace of dimension d - rank >= 1.
            let g_rank = (&split.isometry.adjoint() * &split.isometry).trace().re.round() as usize;
            if g_rank > 0 {
                with_g += 1;
            }
        }
    }
    ensure(worst <= 1e-9, || format!("completeness residual {worst:.3e}"))?;
    ensure(with_g >= 20, || format!("only {with_g} rank-deficient parents"))?;
    Ok(format!(
        "{nodes} nodes, max residual {worst:.2e}, {with_g} rank-deficient parents corrected by g"
    ))
}

fn criterion_4(suite: &Suite) -> Outcome {
    let mut worst = 0.0f64;
    let mut nodes = 0;
    for (i, (_, tree)) in suite.cases.iter().enumerate() {
        for node in tree.internal_nodes() {
            let split = node.split.as_ref().ok_or("internal node without split")?;
            let pair = node.kraus_pair().ok_or("internal node without pair")?;
            worst = worst.max(isometry_residual(&split.dilation.unitary));
            for (j, b) in [&pair.b0, &pair.b1].into_iter().enumerate() {
                let got = extract_kraus(&split.dilation, j).map_err(|e| e.to_string())?;
                ensure(&got == b, || {
                    format!("case {i} node {:?}: extraction {j} differs", node.path)
                })?;
            }
            nodes += 1;
        }
    }
    ensure(worst <= 1e-10, || format!("unitarity residual {worst:.3e}"))?;
    Ok(format!(
        "{nodes} node unitaries, max ||U'U - I|| {worst:.2e}, extraction bit-exact"
    ))
}

fn criterion_5() -> Outcome {
    let d = 2u64;
    let mut rows = Vec::new();
    for n in [4u64, 16, 256, 1024] {
        let r = compare(n, d).map_err(|e| e.to_string())?;
        let expect = (
            n * (n - 1) / 2,
            (n - d) * (d + 1) * d / 2,
            u64::from(ceil_log2(n)) * d * (2 * d - 1),
        );
        let got = (r.neumark_ops, r.single_extra_dim_ops, r.binary_tree_ops);
        ensure(got == expect, || format!("N={n}: {got:?} != {expect:?}"))?;
        let doubled = compare(2 * n, d).map_err(|e| e.to_string())?;
        ensure(doubled.binary_tree_ops - r.binary_tree_ops == d * (2 * d - 1), || {
            format!(
                "N={n}: doubling increment {}",
                doubled.binary_tree_ops - r.binary_tree_ops
            )
        })?;
        rows.push(format!("N={n}: {got:?}"));
    }
    let big = compare(1024, 2).map_err(|e| e.to_string())?;
    ensure(
        (big.neumark_ops, big.single_extra_dim_ops, big.binary_tree_ops) == (523776, 3066, 60),
        || "N=1024 values".into(),
    )?;
    Ok(format!("{}; doubling adds 6", rows.join(", ")))
}

fn criterion_6() -> Outcome {
    let tree = compile_default(&tetrad::povm(), Some(&tetrad::GROUPING), &tol()).map_err(|e| e.to_string())?;
    let state = QuantumState::maximally_mixed(2);
    let shots = 1_000_000u64;
    let seed = 20_240_601;
    let first = sample(&tree, &state, shots, seed).map_err(|e| e.to_string())?;
    let second = sample(&tree, &state, shots, seed).map_err(|e| e.to_string())?;
    let sigma = (0.25f64 * 0.75 / shots as f64).sqrt();
    let mut worst = 0.0f64;
    for &c in &first.counts {
        worst = worst.max((c as f64 / shots as f64 - 0.25).abs() / sigma);
    }
    ensure(worst <= 5.0, || {
        format!("deviation {worst:.2} sigma, counts {:?}", first.counts)
    })?;
    ensure(first.counts == second.counts, || "same-seed rerun differs".into())?;
    Ok(format!(
        "counts {:?}, max deviation {worst:.2} sigma, rerun identical",
        first.counts
    ))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xf7_eed0);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let d = rng.random_range(2..=4);
        let n = rng.random_range(2..=12);
        let p = random_mixed_rank_povm(&mut rng, d, n);
        let state = random_mixed_state(&mut rng, d);
        let base = compile_default(&p, None, &tol()).map_err(|e| format!("pair {i}: {e}"))?;
        let unitaries = (0..n).map(|_| random_unitary(&mut rng, d)).collect();
        let freedom = p
            .default_kraus(&tol())
            .apply_freedom(unitaries, &tol())
            .map_err(|e| e.to_string())?;
        let rotated =
            compile(&p, &freedom, None, SplitCoefficients::default(), &tol()).map_err(|e| format!("pair {i}: {e}"))?;
        let a = tree_probabilities(&base, &state, &tol()).map_err(|e| e.to_string())?;
        let b = tree_probabilities(&rotated, &state, &tol()).map_err(|e| e.to_string())?;
        worst = a.iter().zip(&b).fold(worst, |m, (x, y)| m.max((x - y).abs()));
    }
    ensure(worst <= 1e-9, || format!("probability change {worst:.3e}"))?;
    Ok(format!("20 POVM/state pairs, max probability change {worst:.2e}"))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e4_e05e);
    let mut worst = [0.0f64; 4];
    let mut deficient = 0;
    for _ in 0..1000 {
        let m = rng.random_range(1..=8);
        let n = rng.random_range(1..=8);
        let k = m.min(n);
        let a: ComplexMatrix = if rng.random_bool(0.5) && k > 1 {
            deficient += 1;
            let r = rng.random_range(0..k);
            random_rank_deficient(&mut rng, m, n, r)
        } else {
            random_matrix(&mut rng, m, n)
        };
        let p = pseudo_inverse(&a, &tol());
        let ap = &a * &p;
        let pa = &p * &a;
        let residuals = [
            (&ap * &a).distance(&a),
            (&pa * &p).distance(&p),
            ap.hermiticity_residual(),
            pa.hermiticity_residual(),
        ];
        for (w, r) in worst.iter_mut().zip(residuals) {
            *w = w.max(r);
        }
    }
    let max = worst.iter().fold(0.0f64, |m, w| m.max(*w));
    ensure(max <= 1e-9, || {
        format!(
            "axiom residuals {:.3e} {:.3e} {:.3e} {:.3e}",
            worst[0], worst[1], worst[2], worst[3]
        )
    })?;
    Ok(format!(
        "1000 matrices ({deficient} rank-deficient), max residuals AXA {:.2e}, XAX {:.2e}, (AX)' {:.2e}, (XA)' {:.2e}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

fn run(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(e) => Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() {
    let built = catch_unwind(random_suite).unwrap_or_else(|_| Err("random suite panicked".into()));

    let mut results: Vec<(usize, &str, Outcome)> = vec![(1, "tetrad end-to-end", run(criterion_1))];
    match &built {
        Ok((s, t)) => {
            results.push((2, "oracle triangle", run(|| criterion_2(s, *t))));
            results.push((3, "per-node completeness", run(|| criterion_3(s))));
            results.push((4, "dilation validity", run(|| criterion_4(s))));
        }
        Err(e) => {
            for (k, name) in [
                (2, "oracle triangle"),
                (3, "per-node completeness"),
                (4, "dilation validity"),
            ] {
                results.push((k, name, Err(format!("random suite failed to compile: {e}"))));
            }
        }
    }
    results.push((5, "cost table", run(criterion_5)));
    results.push((6, "statistical soundness", run(criterion_6)));
    results.push((7, "unitary-freedom invariance", run(criterion_7)));
    results.push((8, "pseudoinverse axioms", run(criterion_8)));

    let mut failed = 0;
    for (k, name, r) in &results {
        match r {
            Ok(detail) => println!("PASS criterion {k} ({name}): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {k} ({name}): {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} acceptance criteria failed", results.len());
        std::process::exit(1);
    }
    println!("all {} acceptance criteria passed", results.len());
}
