//! Steering between separated configurations.
//!
//! With `m = n` the field matrix is invertible on the region and a straight
//! line can be tracked directly. With `m < n` the missing directions come
//! from brackets `[f_1, f_ℓ]`, realized by commutator maneuvers inside a
//! damped correction loop.

use std::f64::consts::TAU;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::FieldFamily;
use crate::geometry::{
    circular_distance, in_region, lift_configuration, min_gap, project_to_torus, Space,
};
use crate::sim::{endpoint_with_gap, Control, ControlSchedule, ControlTable, Segment};

/// Knots in the sampled control table of [`steer_full_rank`].
pub const DEFAULT_SEGMENT_COUNT: usize = 1024;
/// Integration step used by [`steer_bracket`]; replays must use the step
/// recorded in the result.
pub const BRACKET_STEP: f64 = 1e-3;

/// RK4 steps per knot interval of a full-rank table.
const STEPS_PER_KNOT: usize = 4;
const FULL_RANK_PASSES: usize = 8;
const FULL_RANK_TARGET: f64 = 1e-10;
/// Knot-count refinements (each ×4) tried while the error stays above this.
const FULL_RANK_REFINE_ABOVE: f64 = 1e-8;
const FULL_RANK_REFINEMENTS: usize = 3;
const ITERATION_HORIZON: f64 = 1.0;
const INITIAL_DAMPING: f64 = 0.5;
const MIN_DAMPING: f64 = 1e-6;
/// Waypoints of [`steer_bracket`] keep every gap above this fraction of the
/// smaller endpoint clearance.
const WAYPOINT_MARGIN_FRACTION: f64 = 0.5;
/// Largest bracket coefficient realized by a single commutator loop.
const BRACKET_LOOP_CAPACITY: f64 = 0.1;
const MAX_BRACKET_LOOPS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub schedule: ControlSchedule,
    /// Start of the plan (lifted on the circle).
    pub start: Vec<f64>,
    /// Target (lifted on the circle).
    pub target: Vec<f64>,
    pub predicted_endpoint: Vec<f64>,
    pub achieved_endpoint: Vec<f64>,
    /// Max-norm distance to the target; per-coordinate circular distance
    /// for [`plan_circle`].
    pub endpoint_error: f64,
    pub iterations: usize,
    pub min_gap_along_plan: f64,
    /// Integration step the schedule was planned (and must be replayed) with.
    pub step: f64,
    pub projected_target: Option<Vec<f64>>,
    pub projected_endpoint: Option<Vec<f64>>,
}

fn max_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max)
}

fn check_endpoints(family: &FieldFamily, p: &[f64], q: &[f64]) -> Result<()> {
    let config = family.config();
    config.check_state(p)?;
    config.check_state(q)?;
    if !in_region(config, p, 0.0) {
        return Err(Error::OutsideRegion("start point"));
    }
    if !in_region(config, q, 0.0) {
        return Err(Error::OutsideRegion("target point"));
    }
    Ok(())
}

fn zero_plan(family: &FieldFamily, p: &[f64], q: &[f64], step: f64) -> PlanResult {
    let gap = crate::geometry::min_gap(family.config(), p);
    PlanResult {
        schedule: ControlSchedule::constant(1.0, vec![0.0; family.m()]),
        start: p.to_vec(),
        target: q.to_vec(),
        predicted_endpoint: q.to_vec(),
        achieved_endpoint: p.to_vec(),
        endpoint_error: max_distance(p, q),
        iterations: 0,
        min_gap_along_plan: gap,
        step,
        projected_target: None,
        projected_endpoint: None,
    }
}

/// Coefficients `w` in the basis `[f_1, f_2 − f_1, …, f_m − f_1, …]` to
/// field controls `u` with `Σ u_ℓ f_ℓ = w_1 f_1 + Σ_{ℓ≥2} w_ℓ (f_ℓ − f_1)`.
/// Entries past `m` (bracket coefficients) are copied unchanged.
fn controls_from_offsets(w: &[f64], m: usize) -> Vec<f64> {
    let mut u = w.to_vec();
    u[0] = w[0] - w[1..m].iter().sum::<f64>();
    u
}

/// `∫_0^s dσ / (a + σ b)` for `a > 0`, `a + b > 0`.
fn log_clock(a: f64, b: f64, s: f64) -> f64 {
    let z = s * b / a;
    if z.abs() < 1e-8 {
        s / a * (1.0 - 0.5 * z)
    } else {
        s / a * z.ln_1p() / z
    }
}

/// Time law for the straight segment `γ(s) = p + s (aim − p)`:
/// `dt/ds = D (1 + Σ_j 1/ρ_j(γ(s)))` with `D = |aim − p|_∞`. Each gap is
/// affine in `s`, so the clock has a closed form. Spending time in
/// proportion to `1/ρ` keeps the controls resolvable near the walls.
struct SegmentClock {
    scale: f64,
    gaps: Vec<(f64, f64)>,
}

impl SegmentClock {
    fn new(family: &FieldFamily, p: &[f64], aim: &[f64]) -> Self {
        let config = family.config();
        let gaps = (1..=config.gap_count())
            .map(|j| {
                let a = config.gap(j, p);
                (a, config.gap(j, aim) - a)
            })
            .collect();
        Self {
            scale: max_distance(p, aim),
            gaps,
        }
    }

    fn time(&self, s: f64) -> f64 {
        self.scale
            * (s + self
                .gaps
                .iter()
                .map(|&(a, b)| log_clock(a, b, s))
                .sum::<f64>())
    }

    fn rate(&self, s: f64) -> f64 {
        self.scale
            * (1.0
                + self
                    .gaps
                    .iter()
                    .map(|&(a, b)| 1.0 / (a + s * b))
                    .sum::<f64>())
    }

    /// Inverse of [`Self::time`] on `[lo, 1]` by safeguarded Newton.
    fn position(&self, t: f64, lo: f64) -> f64 {
        let (mut lo, mut hi) = (lo, 1.0);
        let mut s = lo;
        for _ in 0..100 {
            let r = self.time(s) - t;
            if r < 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            let next = s - r / self.rate(s);
            let next = if next > lo && next < hi {
                next
            } else {
                0.5 * (lo + hi)
            };
            if (next - s).abs() <= 4.0 * f64::EPSILON * s.max(1e-300) || hi - lo <= f64::EPSILON {
                return next;
            }
            s = next;
        }
        s
    }
}

/// `u(t) = F(γ(t))⁻¹ γ'(t)` along the straight segment from `p` to `aim`
/// under the [`SegmentClock`] time law, sampled at `knots` points.
fn straight_line_table(
    family: &FieldFamily,
    p: &[f64],
    aim: &[f64],
    knots: usize,
) -> Result<ControlSchedule> {
    let clock = SegmentClock::new(family, p, aim);
    let horizon = clock.time(1.0);
    let d = DVector::from_iterator(p.len(), p.iter().zip(aim).map(|(a, b)| b - a));
    let mut t = Vec::with_capacity(knots);
    let mut u = Vec::with_capacity(knots);
    let mut previous = 0.0;
    for i in 0..knots {
        let ti = horizon * i as f64 / (knots - 1) as f64;
        let si = match i {
            0 => 0.0,
            _ if i == knots - 1 => 1.0,
            _ => clock.position(ti, previous),
        };
        previous = si;
        let x: Vec<f64> = p.iter().zip(aim).map(|(a, b)| a + si * (b - a)).collect();
        let velocity = &d / clock.rate(si);
        let w = family
            .offset_matrix(&x)?
            .lu()
            .solve(&velocity)
            .ok_or(Error::Singular)?;
        t.push(ti);
        u.push(controls_from_offsets(w.as_slice(), family.m()));
    }
    *t.last_mut().unwrap() = horizon;
    Ok(ControlSchedule::new(vec![Segment {
        duration: horizon,
        control: Control::Table(ControlTable { t, u }),
    }]))
}

/// Tracks the straight segment from `p` to `q` with inverted field
/// controls (`m = n` only). Interpolation error of the sampled table is
/// removed by re-aiming the line at `q + (q - achieved)` a few times.
pub fn steer_full_rank(
    family: &FieldFamily,
    p: &[f64],
    q: &[f64],
    segment_count: usize,
) -> Result<PlanResult> {
    if family.m() != family.n() {
        return Err(Error::UnsupportedFamily(format!(
            "full-rank steering needs m = n, got m = {} < n = {}",
            family.m(),
            family.n()
        )));
    }
    if segment_count < 2 {
        return Err(Error::InvalidConfig(
            "segment_count must be at least 2".into(),
        ));
    }
    check_endpoints(family, p, q)?;
    if p == q {
        return Ok(zero_plan(
            family,
            p,
            q,
            1.0 / crate::sim::DEFAULT_STEPS_PER_HORIZON,
        ));
    }
    let mut best: Option<PlanResult> = None;
    let mut knots = segment_count;
    for _ in 0..FULL_RANK_REFINEMENTS {
        let mut aim = q.to_vec();
        let mut previous = f64::INFINITY;
        for pass in 1..=FULL_RANK_PASSES {
            let schedule = straight_line_table(family, p, &aim, knots)?;
            let step = schedule.total_duration() / (STEPS_PER_KNOT * (knots - 1)) as f64;
            let (x, gap) = endpoint_with_gap(family, p, &schedule, step)?;
            let err = max_distance(&x, q);
            if best.as_ref().is_none_or(|b| err < b.endpoint_error) {
                best = Some(PlanResult {
                    schedule,
                    start: p.to_vec(),
                    target: q.to_vec(),
                    predicted_endpoint: q.to_vec(),
                    achieved_endpoint: x.clone(),
                    endpoint_error: err,
                    iterations: pass,
                    min_gap_along_plan: gap,
                    step,
                    projected_target: None,
                    projected_endpoint: None,
                });
            }
            if err < FULL_RANK_TARGET || err >= previous {
                break;
            }
            previous = err;
            let next: Vec<f64> = aim
                .iter()
                .zip(q.iter().zip(&x))
                .map(|(a, (t, y))| a + t - y)
                .collect();
            if !in_region(family.config(), &next, 0.0) {
                break;
            }
            aim = next;
        }
        if best
            .as_ref()
            .is_some_and(|b| b.endpoint_error < FULL_RANK_REFINE_ABOVE)
        {
            break;
        }
        knots *= 4;
    }
    Ok(best.expect("at least one pass"))
}

/// Schedule whose net displacement from `x₀` is `a T [f_ℓ, f_k](x₀) + O(T²)`.
///
/// Two commutator loops of opposite orientation, `(+ℓ, +k, −ℓ, −k)` then
/// `(−ℓ, −k, +ℓ, +k)`, each leg of length `τ = T/8` at amplitude
/// `s = √(|a| T / 2) / τ`. The third-order terms of the two loops cancel.
/// Negative `a` swaps `ℓ` and `k`.
pub fn commutator_primitive(
    family: &FieldFamily,
    l: usize,
    k: usize,
    a: f64,
    horizon: f64,
) -> Result<ControlSchedule> {
    let m = family.m();
    for idx in [l, k] {
        if idx == 0 || idx > m {
            return Err(Error::IndexOutOfRange {
                what: "field",
                index: idx,
                max: m,
            });
        }
    }
    if l == k {
        return Err(Error::InvalidConfig(
            "commutator needs two distinct fields".into(),
        ));
    }
    if !(horizon.is_finite() && horizon > 0.0) || !a.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "commutator needs finite a and positive horizon, got a = {a}, T = {horizon}"
        )));
    }
    if a == 0.0 {
        return Ok(ControlSchedule::constant(horizon, vec![0.0; m]));
    }
    let (first, second) = if a > 0.0 { (l, k) } else { (k, l) };
    let tau = horizon / 8.0;
    let s = (a.abs() * horizon / 2.0).sqrt() / tau;
    let leg = |idx: usize, sign: f64| {
        let mut u = vec![0.0; m];
        u[idx - 1] = sign * s;
        Segment::constant(tau, u)
    };
    Ok(ControlSchedule::new(vec![
        leg(first, 1.0),
        leg(second, 1.0),
        leg(first, -1.0),
        leg(second, -1.0),
        leg(first, -1.0),
        leg(second, -1.0),
        leg(first, 1.0),
        leg(second, 1.0),
    ]))
}

/// One correction: constant controls for the field part of `c`, then one
/// commutator per nonzero bracket coefficient, on equal sub-horizons.
fn correction_schedule(family: &FieldFamily, c: &[f64]) -> Result<ControlSchedule> {
    let m = family.m();
    let brackets: Vec<(usize, f64)> = family
        .frame_brackets()
        .zip(&c[m..])
        .filter(|(_, v)| **v != 0.0)
        .map(|(l, v)| (l, *v))
        .collect();
    let direct = &c[..m];
    let has_direct = direct.iter().any(|v| *v != 0.0);
    let parts = usize::from(has_direct) + brackets.len();
    let h = ITERATION_HORIZON / parts.max(1) as f64;
    let mut schedule = ControlSchedule::default();
    if has_direct {
        schedule.append(ControlSchedule::constant(
            h,
            direct.iter().map(|v| v / h).collect(),
        ));
    }
    for (l, v) in brackets {
        // repeated small loops keep each commutator in its second-order regime
        let reps = ((v.abs() / BRACKET_LOOP_CAPACITY).ceil() as usize).clamp(1, MAX_BRACKET_LOOPS);
        for _ in 0..reps {
            schedule.append(commutator_primitive(family, 1, l, v / h, h / reps as f64)?);
        }
    }
    if schedule.segments.is_empty() {
        schedule = ControlSchedule::constant(ITERATION_HORIZON, vec![0.0; m]);
    }
    Ok(schedule)
}

/// Damped frame-decomposition steering for any supported family.
///
/// Each iteration solves `frame(x) c = q − x`, realizes `damping · c` and
/// keeps the result only if the error drops and the trial trajectory stays
/// separated. Damping starts at 0.5, halves on rejection and resets on
/// acceptance.
pub fn steer_bracket(
    family: &FieldFamily,
    p: &[f64],
    q: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<PlanResult> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidConfig(format!("tol must be > 0, got {tol}")));
    }
    check_endpoints(family, p, q)?;
    let step = BRACKET_STEP;
    let mut plan = zero_plan(family, p, q, step);
    if plan.endpoint_error < tol {
        return Ok(plan);
    }
    let mut schedule = ControlSchedule::default();
    let mut x = p.to_vec();
    let mut damping = INITIAL_DAMPING;
    let config = family.config();
    let margin = WAYPOINT_MARGIN_FRACTION * min_gap(config, p).min(min_gap(config, q));
    while plan.iterations < max_iter {
        plan.iterations += 1;
        let frame = family.offset_frame_matrix(&x)?;
        let rhs = DVector::from_iterator(x.len(), q.iter().zip(&x).map(|(a, b)| a - b));
        let w = frame.lu().solve(&rhs).ok_or(Error::Singular)?;
        let c = controls_from_offsets(w.as_slice(), family.m());
        loop {
            let scaled: Vec<f64> = c.iter().map(|v| v * damping).collect();
            let trial = correction_schedule(family, &scaled)?;
            if let Ok((y, gap)) = endpoint_with_gap(family, &x, &trial, step) {
                let err = max_distance(&y, q);
                if gap > 0.0 && err < plan.endpoint_error && in_region(config, &y, margin) {
                    schedule.append(trial);
                    plan.endpoint_error = err;
                    plan.min_gap_along_plan = plan.min_gap_along_plan.min(gap);
                    plan.achieved_endpoint = y.clone();
                    x = y;
                    damping = INITIAL_DAMPING;
                    break;
                }
            }
            damping *= 0.5;
            if damping < MIN_DAMPING {
                if !schedule.segments.is_empty() {
                    plan.schedule = schedule;
                }
                return Err(Error::DampingUnderflow {
                    best: Box::new(plan),
                });
            }
        }
        if plan.endpoint_error < tol {
            plan.schedule = schedule;
            return Ok(plan);
        }
    }
    if !schedule.segments.is_empty() {
        plan.schedule = schedule;
    }
    Err(Error::NotConverged {
        best: Box::new(plan),
    })
}

/// Integer `k` minimizing `max_i |p_i − (q_i + 2πk)|`.
fn best_shift(p: &[f64], q: &[f64]) -> f64 {
    let centre = ((p[0] - q[0]) / TAU).round();
    (-3..=3)
        .map(|d| centre + d as f64)
        .min_by(|a, b| {
            let da = p
                .iter()
                .zip(q)
                .map(|(x, y)| (x - y - TAU * a).abs())
                .fold(0.0, f64::max);
            let db = p
                .iter()
                .zip(q)
                .map(|(x, y)| (x - y - TAU * b).abs())
                .fold(0.0, f64::max);
            da.total_cmp(&db)
        })
        .unwrap()
}

/// Plans between two angle configurations on the circle.
///
/// Both are lifted; the target lift is moved by the multiple of
/// `2π (1, …, 1)` closest to the start. Full families use
/// [`steer_full_rank`], the others [`steer_bracket`]. The reported error is
/// the largest per-coordinate circular distance.
pub fn plan_circle(
    family: &FieldFamily,
    p_angles: &[f64],
    q_angles: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<PlanResult> {
    let config = family.config();
    if config.space() != Space::Circle {
        return Err(Error::WrongSpace("circle"));
    }
    let p = lift_configuration(config, p_angles)?;
    let mut q = lift_configuration(config, q_angles)?;
    let k = best_shift(&p, &q);
    q.iter_mut().for_each(|v| *v += TAU * k);
    let finish = |mut plan: PlanResult| {
        let projected = project_to_torus(&plan.achieved_endpoint);
        let target = project_to_torus(&plan.target);
        plan.endpoint_error = projected
            .iter()
            .zip(&target)
            .map(|(a, b)| circular_distance(*a, *b))
            .fold(0.0, f64::max);
        plan.projected_endpoint = Some(projected);
        plan.projected_target = Some(target);
        plan
    };
    let result = if family.m() == family.n() {
        steer_full_rank(family, &p, &q, DEFAULT_SEGMENT_COUNT)
    } else {
        steer_bracket(family, &p, &q, tol, max_iter)
    };
    match result {
        Ok(plan) => Ok(finish(plan)),
        Err(Error::NotConverged { best }) => Err(Error::NotConverged {
            best: Box::new(finish(*best)),
        }),
        Err(Error::DampingUnderflow { best }) => Err(Error::DampingUnderflow {
            best: Box::new(finish(*best)),
        }),
        Err(e) => Err(e),
    }
}

/// Plans from `p` to `q` with the planner suited to the family: angles and
/// [`plan_circle`] on the circle, [`steer_full_rank`] or [`steer_bracket`]
/// on the line.
pub fn plan(
    family: &FieldFamily,
    p: &[f64],
    q: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<PlanResult> {
    match family.config().space() {
        Space::Circle => plan_circle(family, p, q, tol, max_iter),
        Space::RealLine if family.m() == family.n() => {
            steer_full_rank(family, p, q, DEFAULT_SEGMENT_COUNT)
        }
        Space::RealLine => steer_bracket(family, p, q, tol, max_iter),
    }
}

/// Controls `u` with `Σ u_ℓ f_ℓ(x) = v` (`m = n` only).
pub fn field_coordinates(family: &FieldFamily, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if family.m() != family.n() {
        return Err(Error::UnsupportedFamily(
            "field matrix is not square".into(),
        ));
    }
    family.config().check_state(v)?;
    let w = family
        .offset_matrix(x)?
        .lu()
        .solve(&DVector::from_column_slice(v))
        .ok_or(Error::Singular)?;
    Ok(controls_from_offsets(w.as_slice(), family.m()))
}
