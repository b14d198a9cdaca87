//! Acceptance criteria, one line each. Runs without the libtest harness so
//! the verdict lines always reach the console.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use escdyn::escape_analysis::{
    classify_direction, classify_escape, shift_agreements, CheckOutcome, EscapeParams, EscapeStatus,
};
use escdyn::flows::{shift_example_points_with_horizon, spiral_blowup_time, Direction, FlowSystem};
use escdyn::hyperspace::Truth;
use escdyn::phase_space::{CompactExhaustion, PhasePoint, SequenceRule};
use escdyn::semigroup::{check_recurrence, default_family, GeneratorSet, SemigroupParams};
use escdyn::suites::{
    default_escape, default_exhaustion, duality_corpus, hyperspace_corpus, rotation, run_conjugacy_suite,
    run_duality_suite, run_hausdorff_suite, run_hyperspace_suite, run_semigroup_suite, semigroup_corpus,
    spiral_samples, SetKind, SHIFT_HORIZON,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn spiral_escaping_set() -> Outcome {
    let start = Instant::now();
    let exh = CompactExhaustion::balls(vec![0.0, 0.0], 1.0, 10).map_err(|e| e.to_string())?;
    let params = EscapeParams::with_t_max(50.0);
    let levels = exh.levels();
    let mut wrong = 0;
    let samples = spiral_samples();
    for p in &samples {
        let x = p.as_euclidean().map_err(|e| e.to_string())?;
        let r0 = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let v = classify_direction(&FlowSystem::Spiral, p, &exh, &levels, &params, Direction::Backward)
            .map_err(|e| e.to_string())?;
        let expected = if r0 > 1.0 {
            EscapeStatus::Escaping
        } else {
            EscapeStatus::NonEscaping
        };
        if v.status != expected {
            wrong += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        wrong == 0 && secs < 5.0,
        format!("{} points, {wrong} misclassified, {secs:.2}s", samples.len()),
    )
}

fn spiral_blowup() -> Outcome {
    let oracle = 0.5 * 0.75f64.ln();
    let closed = spiral_blowup_time(2.0).ok_or("no blowup reported")?;
    let exh = CompactExhaustion::balls(vec![0.0, 0.0], 1.0, 10).map_err(|e| e.to_string())?;
    let v = classify_escape(
        &FlowSystem::Spiral,
        &PhasePoint::euclidean(vec![2.0, 0.0]).map_err(|e| e.to_string())?,
        &exh,
        &EscapeParams::default(),
    )
    .map_err(|e| e.to_string())?;
    let reported = v.backward.and_then(|b| b.blowup_time).ok_or("verdict has no blowup")?;
    let err = (closed - oracle).abs().max((reported - oracle).abs());
    check(err <= 1e-6, format!("blowup {reported:.15} vs {oracle:.15}, error {err:.1e}"))
}

fn r3_escaping_set() -> Outcome {
    let start = Instant::now();
    let sys = FlowSystem::r3saddle();
    let exh = default_exhaustion(&sys).map_err(|e| e.to_string())?;
    let params = default_escape(&sys);
    let levels = exh.levels();
    let classify = |c: Vec<f64>| -> Result<EscapeStatus, String> {
        let p = PhasePoint::euclidean(c).map_err(|e| e.to_string())?;
        classify_direction(&sys, &p, &exh, &levels, &params, Direction::Forward)
            .map(|v| v.status)
            .map_err(|e| e.to_string())
    };
    let mut axis_ok = 0;
    for z0 in [-2.0, 0.0, 2.0] {
        if classify(vec![0.0, 0.0, z0])? == EscapeStatus::Escaping {
            axis_ok += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut off_ok = 0;
    for _ in 0..50 {
        let c = loop {
            let c: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            if c[0] * c[0] + c[1] * c[1] >= 0.01 {
                break c;
            }
        };
        if classify(c)? == EscapeStatus::NonEscaping {
            off_ok += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        axis_ok == 3 && off_ok == 50 && secs < 30.0,
        format!("axis {axis_ok}/3 escaping, off-axis {off_ok}/50 non-escaping, {secs:.2}s"),
    )
}

fn shift_examples() -> Outcome {
    let horizon = 1 << 20;
    let (x, _) = shift_example_points_with_horizon(horizon).map_err(|e| e.to_string())?;
    let ones = PhasePoint::symbolic(SequenceRule::Constant(1), horizon).map_err(|e| e.to_string())?;
    let times: Vec<u64> = (1..=16).map(|j| 1u64 << j).collect();
    let agreements = shift_agreements(&x, &ones, &times, horizon).map_err(|e| e.to_string())?;
    let certified = agreements
        .iter()
        .enumerate()
        .all(|(j, &(_, a))| a >= (j + 1) as u64);

    let (x, y) = shift_example_points_with_horizon(SHIFT_HORIZON).map_err(|e| e.to_string())?;
    let exh = default_exhaustion(&FlowSystem::Shift).map_err(|e| e.to_string())?;
    let params = default_escape(&FlowSystem::Shift);
    let vx = classify_escape(&FlowSystem::Shift, &x, &exh, &params).map_err(|e| e.to_string())?;
    let vy = classify_escape(&FlowSystem::Shift, &y, &exh, &params).map_err(|e| e.to_string())?;
    let chain_ok = vx.forward.subsequence.as_ref().is_some_and(|c| c.certified);
    let last = agreements.last().map_or(0, |a| a.1);
    check(
        certified && chain_ok && vx.forward.status == EscapeStatus::NonEscaping && vy.forward.status == EscapeStatus::Escaping,
        format!(
            "x: agreement after 2^16 shifts = {last}, verdict {}; y: verdict {}",
            vx.forward.status, vy.forward.status
        ),
    )
}

fn duality_suite() -> Outcome {
    let cases = duality_corpus().map_err(|e| e.to_string())?;
    let rows = run_duality_suite(&cases).map_err(|e| e.to_string())?;
    let fails: Vec<&str> = rows
        .iter()
        .filter(|r| r.outcome == CheckOutcome::Fail)
        .map(|r| r.label.as_str())
        .collect();
    let resolved = rows.iter().filter(|r| r.outcome != CheckOutcome::Skip).count();
    check(
        rows.len() >= 12 && fails.is_empty() && resolved >= 9,
        format!("{} pairs, {resolved} resolved, failures {fails:?}", rows.len()),
    )
}

fn hyperspace_suite() -> Outcome {
    let cases = hyperspace_corpus().map_err(|e| e.to_string())?;
    let rows = run_hyperspace_suite(&cases).map_err(|e| e.to_string())?;
    let disagree: Vec<&str> = rows
        .iter()
        .filter(|r| r.outcome == CheckOutcome::Fail)
        .map(|r| r.label.as_str())
        .collect();
    let mixed_bad: Vec<&str> = rows
        .iter()
        .filter(|r| r.kind == SetKind::Mixed && !(r.p1 == Truth::False && r.p3 == Truth::False && r.p4 == Truth::False))
        .map(|r| r.label.as_str())
        .collect();
    let resolved = rows.iter().filter(|r| r.outcome == CheckOutcome::Pass).count();
    check(
        rows.len() >= 20 && disagree.is_empty() && mixed_bad.is_empty(),
        format!(
            "{} sets, {resolved} resolved, disagreements {disagree:?}, unresolved mixed {mixed_bad:?}",
            rows.len()
        ),
    )
}

fn hausdorff_oracle() -> Outcome {
    let s = run_hausdorff_suite(1000, 7).map_err(|e| e.to_string())?;
    check(
        s.outcome() == CheckOutcome::Pass,
        format!(
            "{} pairs: identity {} / symmetry {} / triangle {} violations",
            s.pairs, s.identity_failures, s.symmetry_failures, s.triangle_failures
        ),
    )
}

fn semigroup_invariance() -> Outcome {
    let cases = semigroup_corpus().map_err(|e| e.to_string())?;
    let params = SemigroupParams {
        eps: 1e-2,
        ..Default::default()
    };
    let rows = run_semigroup_suite(&cases, &params, 11).map_err(|e| e.to_string())?;
    let violations: Vec<String> = rows
        .iter()
        .filter(|r| r.outcome() == CheckOutcome::Fail)
        .map(|r| format!("{} at {:?}", r.semigroup, r.point))
        .collect();

    let golden = GeneratorSet::new(
        "<golden rotation>",
        vec![rotation("rot", "2*pi/phi").map_err(|e| e.to_string())?],
        true,
    )
    .map_err(|e| e.to_string())?;
    let fine = SemigroupParams {
        eps: 1e-3,
        budget: 100_000,
        ..Default::default()
    };
    let x = PhasePoint::euclidean(vec![1.0, 0.0]).map_err(|e| e.to_string())?;
    let rec = check_recurrence(&golden, &x, &default_family(&golden, 8, 11), &fine).map_err(|e| e.to_string())?;
    check(
        violations.is_empty() && rec.recurrent,
        format!(
            "{} rows, violations {violations:?}; rotation recurrent at eps 1e-3 with budget 1e5: {}",
            rows.len(),
            rec.recurrent
        ),
    )
}

fn conjugacy_transport() -> Outcome {
    let rows = run_conjugacy_suite(&SemigroupParams::default(), 11).map_err(|e| e.to_string())?;
    let bad: Vec<&str> = rows
        .iter()
        .filter(|r| r.outcome != CheckOutcome::Pass)
        .map(|r| r.label.as_str())
        .collect();
    check(bad.is_empty(), format!("{} conjugacies, not passing {bad:?}", rows.len()))
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_escdyn");
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/paper_examples.json");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(bin)
            .arg("--scenario")
            .arg(&scenario)
            .arg("--out")
            .arg(&out)
            .arg("--seed")
            .arg("17")
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("run {run} exited with {status}"));
        }
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
            .map_err(|e| e.to_string())?
            .map(|entry| {
                let entry = entry.map_err(|e| e.to_string())?;
                let bytes = std::fs::read(entry.path()).map_err(|e| e.to_string())?;
                Ok((entry.file_name().to_string_lossy().into_owned(), bytes))
            })
            .collect::<Result<_, String>>()?;
        files.sort();
        outputs.push(files);
    }
    let same = outputs[0] == outputs[1];
    check(
        same && !outputs[0].is_empty(),
        format!("{} report files, byte-identical: {same}", outputs[0].len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("spiral escaping set", spiral_escaping_set),
        ("spiral blowup time", spiral_blowup),
        ("R3 escaping set", r3_escaping_set),
        ("shift examples", shift_examples),
        ("limit/escape duality", duality_suite),
        ("hyperspace equivalence", hyperspace_suite),
        ("Hausdorff metric axioms", hausdorff_oracle),
        ("semigroup invariance", semigroup_invariance),
        ("conjugacy transport", conjugacy_transport),
        ("report determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (tag, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag} {name}: {detail}", i + 1);
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
