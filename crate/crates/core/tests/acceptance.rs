//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Runs without the libtest harness so the summary is always printed.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use nbody_ctrl::fields::{CaseTag, FieldFamily};
use nbody_ctrl::geometry::{
    circular_distance, lift_configuration, project_to_torus, SeparationConfig, Space,
};
use nbody_ctrl::plan::{
    commutator_primitive, plan_circle, steer_bracket, steer_full_rank, DEFAULT_SEGMENT_COUNT,
};
use nbody_ctrl::sample::{interior_point, seeded_rng};
use nbody_ctrl::sim::{default_step, endpoint, flow, monitor_invariance, ControlSchedule, Segment};
use nbody_ctrl::verify::{
    check_bracket_formulas, check_bracket_oracle, check_multipliers, check_sparsity,
    check_tangency, rank_scan_with,
};
use nbody_ctrl::Error;

const SEED: u64 = 20_240_601;
const EPSILON: f64 = 0.2;

struct Outcome {
    passed: bool,
    detail: String,
}

fn family(space: Space, n: usize, m: usize) -> FieldFamily {
    FieldFamily::new(SeparationConfig::new(space, n, EPSILON).unwrap(), m).unwrap()
}

/// Every supported `(space, n, m)` with `n` in the given range.
fn cases(ns: std::ops::RangeInclusive<usize>) -> Vec<FieldFamily> {
    let mut out = Vec::new();
    for space in [Space::RealLine, Space::Circle] {
        for n in ns.clone() {
            for m in 1..=n {
                if CaseTag::classify(space, n, m).is_ok() {
                    out.push(family(space, n, m));
                }
            }
        }
    }
    out
}

fn label(f: &FieldFamily) -> String {
    format!("{:?}(n={}, m={})", f.case(), f.n(), f.m())
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for f in cases(2..=9) {
        for j in 1..=f.config().gap_count() {
            let r = check_tangency(&f, j, 500, SEED + j as u64).unwrap();
            worst = worst.max(r.max_residual);
            if !r.passed || r.samples < 500 {
                failures.push(format!("{} rho_{j}", label(&f)));
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        passed: failures.is_empty() && worst < 1e-10 && within(elapsed, 10),
        detail: format!(
            "max residual {worst:.2e}, {:.2?}, failures {failures:?}",
            elapsed
        ),
    }
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for f in cases(2..=9) {
        let r = check_multipliers(&f, 1000, SEED).unwrap();
        worst = worst.max(r.max_residual);
        if !r.passed {
            failures.push(label(&f));
        }
    }
    Outcome {
        passed: failures.is_empty() && worst < 1e-10,
        detail: format!("max residual {worst:.2e}, failures {failures:?}"),
    }
}

fn criterion_3() -> Outcome {
    let h = 1e-4;
    let mut worst_ratio = 0.0f64;
    let mut worst_formula = 0.0f64;
    let mut failures = Vec::new();
    for f in cases(2..=9) {
        let oracle = check_bracket_oracle(&f, 500, SEED, h).unwrap();
        let formula = check_bracket_formulas(&f, 500, SEED).unwrap();
        worst_ratio = worst_ratio.max(oracle.max_residual);
        worst_formula = worst_formula.max(formula.max_residual);
        if !oracle.passed || !formula.passed {
            failures.push(label(&f));
        }
    }
    Outcome {
        passed: failures.is_empty() && worst_formula < 1e-12,
        detail: format!(
            "fd error / tolerance {worst_ratio:.2e}, closed-form residual {worst_formula:.2e}, failures {failures:?}"
        ),
    }
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut targets: Vec<FieldFamily> = Vec::new();
    for n in 2..=12 {
        targets.push(family(Space::RealLine, n, n));
        targets.push(family(Space::Circle, n, n));
    }
    for n in 2..=11 {
        for m in (n + 2) / 2..n {
            targets.push(family(Space::RealLine, n, m));
        }
    }
    for n in [3, 5, 7, 9] {
        for m in (1..n).filter(|m| CaseTag::classify(Space::Circle, n, *m).is_ok()) {
            targets.push(family(Space::Circle, n, m));
        }
    }
    for n in [4, 6, 8] {
        for m in (1..n).filter(|m| CaseTag::classify(Space::Circle, n, *m).is_ok()) {
            targets.push(family(Space::Circle, n, m));
        }
    }
    let mut failures = Vec::new();
    let mut min_sv = f64::INFINITY;
    for f in &targets {
        let full = rank_scan_with(f, 1000, SEED, 1e-3, true).unwrap();
        if !full.passed {
            failures.push(format!("{} rank {}", label(f), full.min_rank));
        }
        min_sv = min_sv.min(
            full.min_singular_value_over_samples
                .unwrap_or(f64::INFINITY),
        );
        if f.m() < f.n() {
            let alone = rank_scan_with(f, 1000, SEED, 1e-3, false).unwrap();
            if alone.min_rank != f.m() {
                failures.push(format!("{} fields-only rank {}", label(f), alone.min_rank));
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        passed: failures.is_empty() && within(elapsed, 30),
        detail: format!(
            "{} families, smallest singular value {min_sv:.2e}, {:.2?}, failures {failures:?}",
            targets.len(),
            elapsed
        ),
    }
}

fn criterion_5() -> Outcome {
    let mut rng = seeded_rng(SEED);
    let mut lowest = f64::INFINITY;
    let mut failures: BTreeMap<String, usize> = BTreeMap::new();
    let families = cases(2..=9);
    for f in &families {
        for _ in 0..100 {
            let p = interior_point(f.config(), 0.0, &mut rng);
            let segments = (0..5)
                .map(|_| {
                    Segment::constant(2.0, (0..f.m()).map(|_| rng.gen_range(-1.0..1.0)).collect())
                })
                .collect();
            let schedule = ControlSchedule::new(segments);
            match flow(f, &p, &schedule, default_step(&schedule)) {
                Ok(traj) => {
                    lowest = lowest.min(traj.min_gap_overall());
                    if !monitor_invariance(&traj, 0.0).passed {
                        *failures
                            .entry(format!("{} gap <= 0", label(f)))
                            .or_default() += 1;
                    }
                }
                Err(Error::NonFinite { .. }) => {
                    *failures
                        .entry(format!("{} non-finite", label(f)))
                        .or_default() += 1;
                }
                Err(e) => *failures.entry(format!("{}: {e}", label(f))).or_default() += 1,
            }
        }
    }
    // ẋ = u_2 f_2 with f_2 = (1 + ρ_1, 1): ρ(t) = 0.5 e^{-t} from ρ(0) = 0.5
    let f = FieldFamily::new(SeparationConfig::line(2, 0.5).unwrap(), 2).unwrap();
    let x = endpoint(
        &f,
        &[0.0, 1.0],
        &ControlSchedule::constant(1.0, vec![0.0, 1.0]),
        1e-3,
    )
    .unwrap();
    let gap_error = (x[1] - x[0] - 0.5 - 0.5 * (-1.0f64).exp()).abs();
    Outcome {
        passed: failures.is_empty() && gap_error < 1e-8,
        detail: format!(
            "{} families x 100 runs, smallest gap {lowest:.3e}, closed-form gap error {gap_error:.1e}, failed runs {failures:?}",
            families.len()
        ),
    }
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded_rng(SEED + 6);
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for space in [Space::RealLine, Space::Circle] {
        for n in 2..=12 {
            let f = family(space, n, n);
            for _ in 0..50 {
                let p = interior_point(f.config(), 0.0, &mut rng);
                let q = interior_point(f.config(), 0.0, &mut rng);
                let plan = steer_full_rank(&f, &p, &q, DEFAULT_SEGMENT_COUNT).unwrap();
                worst = worst.max(plan.endpoint_error);
                if plan.endpoint_error >= 1e-6 || plan.min_gap_along_plan <= 0.0 {
                    failures.push(label(&f));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    failures.dedup();
    Outcome {
        passed: failures.is_empty() && within(elapsed, 20),
        detail: format!(
            "worst endpoint error {worst:.2e}, {:.2?}, failures {failures:?}",
            elapsed
        ),
    }
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let targets = [
        family(Space::RealLine, 3, 2),
        family(Space::RealLine, 5, 3),
        family(Space::RealLine, 7, 4),
        family(Space::Circle, 5, 3),
        family(Space::Circle, 6, 4),
    ];
    let mut rng = seeded_rng(SEED + 7);
    let mut worst = 0.0f64;
    let mut most_iterations = 0;
    let mut failures = Vec::new();
    for f in &targets {
        for _ in 0..20 {
            let p = interior_point(f.config(), 0.0, &mut rng);
            let q = interior_point(f.config(), 0.0, &mut rng);
            match steer_bracket(f, &p, &q, 1e-4, 200) {
                Ok(plan) => {
                    worst = worst.max(plan.endpoint_error);
                    most_iterations = most_iterations.max(plan.iterations);
                    let traj = flow(f, &plan.start, &plan.schedule, plan.step).unwrap();
                    if plan.min_gap_along_plan <= 0.0 || !monitor_invariance(&traj, 0.0).passed {
                        failures.push(format!("{} left the region", label(f)));
                    }
                }
                Err(e) => failures.push(format!("{}: {e}", label(f))),
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        passed: failures.is_empty() && within(elapsed, 120),
        detail: format!(
            "worst endpoint error {worst:.2e}, most iterations {most_iterations}, {:.2?}, failures {failures:?}",
            elapsed
        ),
    }
}

fn criterion_8() -> Outcome {
    let targets = [
        family(Space::RealLine, 3, 2),
        family(Space::RealLine, 5, 3),
        family(Space::RealLine, 7, 4),
        family(Space::Circle, 5, 3),
        family(Space::Circle, 6, 4),
    ];
    let mut rng = seeded_rng(SEED + 8);
    let mut lowest_order = f64::INFINITY;
    let mut failures = Vec::new();
    let a = 1.0;
    for f in &targets {
        for _ in 0..10 {
            let x0 = interior_point(f.config(), 0.1, &mut rng);
            for l in f.frame_brackets() {
                let bracket = f.bracket(1, l, &x0).unwrap();
                let errors: Vec<f64> = [0.04, 0.02, 0.01]
                    .iter()
                    .map(|&t| {
                        let s = commutator_primitive(f, 1, l, a, t).unwrap();
                        let y = endpoint(f, &x0, &s, t / 800.0).unwrap();
                        y.iter()
                            .zip(&x0)
                            .zip(&bracket)
                            .map(|((y, x), b)| (y - x - a * t * b).abs())
                            .fold(0.0, f64::max)
                    })
                    .collect();
                for w in errors.windows(2) {
                    let order = (w[0] / w[1]).log2();
                    lowest_order = lowest_order.min(order);
                    if order < 1.8 {
                        failures.push(format!("{} [f1,f{l}] order {order:.2}", label(f)));
                    }
                }
            }
        }
    }
    failures.truncate(5);
    Outcome {
        passed: failures.is_empty(),
        detail: format!("lowest observed order {lowest_order:.3}, failures {failures:?}"),
    }
}

fn criterion_9() -> Outcome {
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    let families = cases(2..=12);
    for f in &families {
        let r = check_sparsity(f, 200, SEED).unwrap();
        worst = worst.max(r.max_residual);
        if !r.passed {
            failures.push(label(f));
        }
    }
    Outcome {
        passed: failures.is_empty() && worst == 0.0,
        detail: format!(
            "{} families, max deviation {worst:e}, failures {failures:?}",
            families.len()
        ),
    }
}

fn criterion_10() -> Outcome {
    let mut rng = seeded_rng(SEED + 10);
    let mut worst = 0.0f64;
    let mut worst_round_trip = 0.0f64;
    let mut failures = Vec::new();
    for m in [3, 5] {
        let f = family(Space::Circle, 5, m);
        for _ in 0..20 {
            let p = project_to_torus(&interior_point(f.config(), 0.0, &mut rng));
            let q = project_to_torus(&interior_point(f.config(), 0.0, &mut rng));
            for angles in [&p, &q] {
                let lifted = lift_configuration(f.config(), angles).unwrap();
                let back = project_to_torus(&lifted);
                for (a, b) in angles.iter().zip(&back) {
                    worst_round_trip = worst_round_trip.max(circular_distance(*a, *b));
                }
                let relifted = lift_configuration(f.config(), &back).unwrap();
                for (a, b) in lifted.iter().zip(&relifted) {
                    worst_round_trip = worst_round_trip.max((a - b).abs());
                }
                if lifted[0] < 0.0 || lifted[0] >= TAU {
                    failures.push("lift anchor outside [0, 2π)".to_string());
                }
            }
            match plan_circle(&f, &p, &q, 1e-4, 200) {
                Ok(plan) => {
                    let reached = plan.projected_endpoint.unwrap();
                    let err = reached
                        .iter()
                        .zip(&q)
                        .map(|(a, b)| circular_distance(*a, *b))
                        .fold(0.0, f64::max);
                    worst = worst.max(err);
                    if err >= 1e-4 {
                        failures.push(format!("m={m} error {err:.2e}"));
                    }
                }
                Err(e) => failures.push(format!("m={m}: {e}")),
            }
        }
    }
    Outcome {
        passed: failures.is_empty() && worst_round_trip <= 1e-12,
        detail: format!(
            "worst circular error {worst:.2e}, worst round trip {worst_round_trip:.1e}, failures {failures:?}"
        ),
    }
}

fn main() -> ExitCode {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("tangency certificates", criterion_1),
        ("multiplier identities", criterion_2),
        ("bracket oracle", criterion_3),
        ("bracket-generating rank", criterion_4),
        ("invariance under random controls", criterion_5),
        ("exact steering (m = n)", criterion_6),
        ("bracket steering (m < n)", criterion_7),
        ("commutator primitive order", criterion_8),
        ("sparsity", criterion_9),
        ("torus round trip", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if let Some(f) = &filter {
            if !name.contains(f.as_str()) && f != &(i + 1).to_string() {
                continue;
            }
        }
        let outcome = run();
        let status = if outcome.passed { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} [{status}] {name}: {}",
            i + 1,
            outcome.detail
        );
        failed += usize::from(!outcome.passed);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
