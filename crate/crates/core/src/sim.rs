//! Fixed-step integration of `ẋ = Σ u_ℓ(t) f_ℓ(x)` under a control schedule.
//!
//! Each segment (and each knot interval of a sampled table) is split into
//! equal RK4 steps no longer than the requested step, so control
//! discontinuities always fall on step edges.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{FamilyDescriptor, FieldFamily, Scratch};
use crate::geometry::{in_region, min_gap};
use crate::verify::{ResidualLog, VerificationReport};

/// Number of steps used by [`default_step`] over the whole horizon.
pub const DEFAULT_STEPS_PER_HORIZON: f64 = 10_000.0;

/// Control values on one segment, in segment-local time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Control {
    Constant(Vec<f64>),
    Table(ControlTable),
}

/// Samples `u(t[i]) = u[i]`, linearly interpolated in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlTable {
    pub t: Vec<f64>,
    pub u: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration: f64,
    #[serde(flatten)]
    pub control: Control,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlSchedule {
    pub segments: Vec<Segment>,
}

impl ControlTable {
    /// Interpolated control on knot interval `i` at local time `s`.
    fn interpolate(&self, i: usize, s: f64, out: &mut [f64]) {
        let (t0, t1) = (self.t[i], self.t[i + 1]);
        let w = (s - t0) / (t1 - t0);
        for (o, (a, b)) in out.iter_mut().zip(self.u[i].iter().zip(&self.u[i + 1])) {
            *o = a + w * (b - a);
        }
    }
}

impl Segment {
    pub fn constant(duration: f64, u: Vec<f64>) -> Self {
        Self {
            duration,
            control: Control::Constant(u),
        }
    }

    fn validate(&self, index: usize, m: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSchedule(format!("segment {index}: {msg}")));
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!(
                "duration must be positive and finite, got {}",
                self.duration
            ));
        }
        let finite_m = |u: &[f64]| u.len() == m && u.iter().all(|v| v.is_finite());
        match &self.control {
            Control::Constant(u) => {
                if !finite_m(u) {
                    return bad(format!("constant control must have {m} finite entries"));
                }
            }
            Control::Table(table) => {
                if table.t.len() < 2 || table.t.len() != table.u.len() {
                    return bad("table needs at least two knots and one value per knot".into());
                }
                if !table.t.windows(2).all(|w| w[1] > w[0])
                    || table.t.iter().any(|t| !t.is_finite())
                {
                    return bad("table times must be strictly increasing".into());
                }
                let last = *table.t.last().unwrap();
                if table.t[0] != 0.0
                    || (last - self.duration).abs() > 1e-12 * self.duration.max(1.0)
                {
                    return bad("table times must span [0, duration]".into());
                }
                if !table.u.iter().all(|u| finite_m(u)) {
                    return bad(format!("table values must have {m} finite entries"));
                }
            }
        }
        Ok(())
    }

    /// The segment run backwards with negated controls.
    fn reversed(&self) -> Segment {
        let neg = |u: &[f64]| u.iter().map(|v| -v).collect::<Vec<f64>>();
        let control = match &self.control {
            Control::Constant(u) => Control::Constant(neg(u)),
            Control::Table(table) => Control::Table(ControlTable {
                t: table.t.iter().rev().map(|t| self.duration - t).collect(),
                u: table.u.iter().rev().map(|u| neg(u)).collect(),
            }),
        };
        Segment {
            duration: self.duration,
            control,
        }
    }
}

impl ControlSchedule {
    pub fn new(segments: Vec<Segment>) -> Self {
        Self { segments }
    }

    /// One constant segment.
    pub fn constant(duration: f64, u: Vec<f64>) -> Self {
        Self::new(vec![Segment::constant(duration, u)])
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Checks every schedule invariant against a family with `m` controls.
    pub fn validate(&self, m: usize) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidSchedule("schedule has no segments".into()));
        }
        for (i, s) in self.segments.iter().enumerate() {
            s.validate(i, m)?;
        }
        Ok(())
    }

    pub fn append(&mut self, other: ControlSchedule) {
        self.segments.extend(other.segments);
    }

    /// Schedule that retraces this one: segments in reverse order, each time
    /// reversed with negated controls.
    pub fn reversed(&self) -> ControlSchedule {
        Self::new(self.segments.iter().rev().map(Segment::reversed).collect())
    }

    /// `u(t / c) / c` on horizon `c T`; a driftless system reaches the same
    /// endpoint. Requires `c > 0`.
    pub fn time_scaled(&self, c: f64) -> ControlSchedule {
        let scale = |u: &[f64]| u.iter().map(|v| v / c).collect::<Vec<f64>>();
        let segments = self
            .segments
            .iter()
            .map(|s| Segment {
                duration: s.duration * c,
                control: match &s.control {
                    Control::Constant(u) => Control::Constant(scale(u)),
                    Control::Table(t) => Control::Table(ControlTable {
                        t: t.t.iter().map(|v| v * c).collect(),
                        u: t.u.iter().map(|u| scale(u)).collect(),
                    }),
                },
            })
            .collect();
        Self::new(segments)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidSchedule(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidSchedule(e.to_string()))
    }
}

/// `T / 10000` for a schedule of total duration `T`.
pub fn default_step(schedule: &ControlSchedule) -> f64 {
    schedule.total_duration() / DEFAULT_STEPS_PER_HORIZON
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub min_gap: Vec<f64>,
    pub family: FamilyDescriptor,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states
            .last()
            .expect("trajectory has at least the initial state")
    }

    /// Smallest gap seen anywhere along the trajectory.
    pub fn min_gap_overall(&self) -> f64 {
        self.min_gap.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// CSV with header `t,x1,…,xn,rho_min`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.family.n;
        let mut header = String::from("t");
        for i in 1..=n {
            header.push_str(&format!(",x{i}"));
        }
        writeln!(w, "{header},rho_min")?;
        for ((t, x), g) in self.times.iter().zip(&self.states).zip(&self.min_gap) {
            write!(w, "{t:.16e}")?;
            for v in x {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w, ",{g:.16e}")?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

/// RK4 integrator with reusable stage buffers.
struct Stepper<'a> {
    family: &'a FieldFamily,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    u: Vec<f64>,
    scratch: Scratch,
}

impl<'a> Stepper<'a> {
    fn new(family: &'a FieldFamily) -> Self {
        let n = family.n();
        Self {
            family,
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
            u: vec![0.0; family.m()],
            scratch: Scratch::default(),
        }
    }

    /// One step of length `h`; `control(s, u)` writes the control at local
    /// offset `s ∈ {0, h/2, h}` into `u`.
    fn step(&mut self, x: &mut [f64], h: f64, mut control: impl FnMut(f64, &mut [f64])) {
        let offsets = [0.0, 0.5 * h, 0.5 * h, h];
        for (stage, &w) in offsets.iter().enumerate() {
            control(w, &mut self.u);
            if stage == 0 {
                self.tmp.copy_from_slice(x);
            } else {
                for ((t, xi), ki) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k[stage - 1]) {
                    *t = xi + w * ki;
                }
            }
            self.family
                .velocity_into(&self.tmp, &self.u, &mut self.k[stage], &mut self.scratch);
        }
        for (i, xi) in x.iter_mut().enumerate() {
            *xi +=
                h / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
        }
    }
}

fn steps_for(len: f64, step: f64) -> usize {
    ((len / step).ceil() as usize).max(1)
}

/// Integrates from `p`, calling `observe(t, x)` at `t = 0` and after every
/// step. No region check is made on `p`.
pub(crate) fn integrate(
    family: &FieldFamily,
    p: &[f64],
    schedule: &ControlSchedule,
    step: f64,
    mut observe: impl FnMut(f64, &[f64]),
) -> Result<Vec<f64>> {
    family.config().check_state(p)?;
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "step must be positive, got {step}"
        )));
    }
    schedule.validate(family.m())?;
    let mut stepper = Stepper::new(family);
    let mut x = p.to_vec();
    observe(0.0, &x);
    let mut start = 0.0;
    for seg in &schedule.segments {
        // knot intervals in local time; a constant segment is one interval
        let knots: Vec<f64> = match &seg.control {
            Control::Constant(_) => vec![0.0, seg.duration],
            Control::Table(table) => table.t.clone(),
        };
        for i in 0..knots.len() - 1 {
            let (a, b) = (knots[i], knots[i + 1]);
            let count = steps_for(b - a, step);
            let h = (b - a) / count as f64;
            for s in 0..count {
                let local = a + s as f64 * h;
                match &seg.control {
                    Control::Constant(u) => {
                        stepper.step(&mut x, h, |_, out| out.copy_from_slice(u))
                    }
                    Control::Table(table) => {
                        stepper.step(&mut x, h, |off, out| table.interpolate(i, local + off, out))
                    }
                }
                let t = start + a + (s + 1) as f64 * h;
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { time: t });
                }
                observe(t, &x);
            }
        }
        start += seg.duration;
    }
    Ok(x)
}

/// Full trajectory of the flow from an interior point `p`.
pub fn flow(
    family: &FieldFamily,
    p: &[f64],
    schedule: &ControlSchedule,
    step: f64,
) -> Result<Trajectory> {
    family.config().check_state(p)?;
    if !in_region(family.config(), p, 0.0) {
        return Err(Error::OutsideRegion("initial point"));
    }
    flow_ambient(family, p, schedule, step)
}

/// As [`flow`] but accepts any finite starting point, including points on
/// or beyond the boundary of the region.
pub fn flow_ambient(
    family: &FieldFamily,
    p: &[f64],
    schedule: &ControlSchedule,
    step: f64,
) -> Result<Trajectory> {
    let config = family.config();
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        min_gap: Vec::new(),
        family: family.descriptor(),
    };
    integrate(family, p, schedule, step, |t, x| {
        traj.times.push(t);
        traj.states.push(x.to_vec());
        traj.min_gap.push(min_gap(config, x));
    })?;
    Ok(traj)
}

/// Final state `Γ(p, T, u)` without storing the trajectory.
pub fn endpoint(
    family: &FieldFamily,
    p: &[f64],
    schedule: &ControlSchedule,
    step: f64,
) -> Result<Vec<f64>> {
    family.config().check_state(p)?;
    if !in_region(family.config(), p, 0.0) {
        return Err(Error::OutsideRegion("initial point"));
    }
    integrate(family, p, schedule, step, |_, _| {})
}

/// Endpoint together with the smallest gap along the way.
pub(crate) fn endpoint_with_gap(
    family: &FieldFamily,
    p: &[f64],
    schedule: &ControlSchedule,
    step: f64,
) -> Result<(Vec<f64>, f64)> {
    let config = family.config();
    let mut lowest = f64::INFINITY;
    let x = integrate(family, p, schedule, step, |_, x| {
        lowest = lowest.min(min_gap(config, x));
    })?;
    Ok((x, lowest))
}

/// Passes iff every recorded `min_gap` exceeds `margin`. The residual is
/// `margin - min_gap`; the tolerance is the negative number closest to zero,
/// so equality with the margin fails.
pub fn monitor_invariance(trajectory: &Trajectory, margin: f64) -> VerificationReport {
    let mut log = ResidualLog::new("invariance", None, -f64::from_bits(1));
    for (x, g) in trajectory.states.iter().zip(&trajectory.min_gap) {
        log.record(x, margin - g);
    }
    let mut report = log.finish();
    report.passed = report.samples > 0 && trajectory.min_gap.iter().all(|&g| g > margin);
    report
}
