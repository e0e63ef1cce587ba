//! Separation functions, the safe regions and the line/torus lift.
//!
//! On the line the safe region is `{ρ_j > 0, j = 1..n-1}` with
//! `ρ_j(x) = x_{j+1} - x_j - ε`. On the circle the state is a lift of the
//! angles to `ℝⁿ` and the extra wrap-around gap `ρ_n(x) = x_1 + 2π - x_n - ε`
//! closes the chain, so `Σ ρ_j = 2π - nε` identically.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Space {
    #[serde(rename = "real")]
    RealLine,
    #[serde(rename = "circle")]
    Circle,
}

impl Space {
    pub fn name(self) -> &'static str {
        match self {
            Space::RealLine => "real",
            Space::Circle => "circle",
        }
    }
}

impl std::str::FromStr for Space {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" | "line" => Ok(Space::RealLine),
            "circle" => Ok(Space::Circle),
            other => Err(Error::InvalidConfig(format!(
                "space must be \"real\" or \"circle\", got {other:?}"
            ))),
        }
    }
}

/// Space, body count and required separation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeparationConfig {
    space: Space,
    n: usize,
    epsilon: f64,
}

impl SeparationConfig {
    pub fn new(space: Space, n: usize, epsilon: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidConfig(format!("need n >= 2 bodies, got {n}")));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "separation must satisfy epsilon > 0, got {epsilon}"
            )));
        }
        if space == Space::Circle && epsilon >= TAU / n as f64 {
            return Err(Error::InvalidConfig(format!(
                "circle separation must satisfy epsilon < 2π/n = {}, got {epsilon}",
                TAU / n as f64
            )));
        }
        Ok(Self { space, n, epsilon })
    }

    pub fn line(n: usize, epsilon: f64) -> Result<Self> {
        Self::new(Space::RealLine, n, epsilon)
    }

    pub fn circle(n: usize, epsilon: f64) -> Result<Self> {
        Self::new(Space::Circle, n, epsilon)
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Number of separation functions: `n - 1` on the line, `n` on the circle.
    pub fn gap_count(&self) -> usize {
        match self.space {
            Space::RealLine => self.n - 1,
            Space::Circle => self.n,
        }
    }

    pub(crate) fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_gap_index(&self, j: usize) -> Result<()> {
        if j == 0 || j > self.gap_count() {
            return Err(Error::IndexOutOfRange {
                what: "gap",
                index: j,
                max: self.gap_count(),
            });
        }
        Ok(())
    }

    /// `ρ_j` without bounds checks; `j` is 1-based.
    #[inline]
    pub(crate) fn gap(&self, j: usize, x: &[f64]) -> f64 {
        if j < self.n {
            x[j] - x[j - 1] - self.epsilon
        } else {
            x[0] + TAU - x[self.n - 1] - self.epsilon
        }
    }

    /// The two coordinates `ρ_j` depends on as 0-based `(minus, plus)` indices:
    /// `∂ρ_j/∂x_minus = -1`, `∂ρ_j/∂x_plus = +1`.
    #[inline]
    pub(crate) fn gap_support(&self, j: usize) -> (usize, usize) {
        if j < self.n {
            (j - 1, j)
        } else {
            (self.n - 1, 0)
        }
    }
}

/// Separation function `ρ_j(x)`, `j` in `1..=gap_count()`.
pub fn rho(config: &SeparationConfig, j: usize, x: &[f64]) -> Result<f64> {
    config.check_gap_index(j)?;
    config.check_state(x)?;
    Ok(config.gap(j, x))
}

/// All separation functions `(ρ_1, …, ρ_J)`.
pub fn gaps(config: &SeparationConfig, x: &[f64]) -> Vec<f64> {
    (1..=config.gap_count()).map(|j| config.gap(j, x)).collect()
}

/// `min_j ρ_j(x)`, the clearance of the tightest pair.
pub fn min_gap(config: &SeparationConfig, x: &[f64]) -> f64 {
    (1..=config.gap_count())
        .map(|j| config.gap(j, x))
        .fold(f64::INFINITY, f64::min)
}

/// `σ(s) = sin(s - π/2) + 1`: nonnegative, `2π`-periodic, zero exactly on `2πℤ`.
///
/// Evaluated as `2 sin²(s/2)`, which keeps full relative accuracy near zero.
#[inline]
pub fn sigma_profile(s: f64) -> f64 {
    let h = (0.5 * s).sin();
    2.0 * h * h
}

/// `σ'(s) = cos(s - π/2) = sin s`.
#[inline]
pub fn sigma_profile_derivative(s: f64) -> f64 {
    s.sin()
}

/// `σ_j(x) = σ(ρ_j(x))`, circle only.
pub fn sigma(config: &SeparationConfig, j: usize, x: &[f64]) -> Result<f64> {
    if config.space != Space::Circle {
        return Err(Error::WrongSpace("circle"));
    }
    Ok(sigma_profile(rho(config, j, x)?))
}

/// `true` iff `ρ_j(x) > margin` for every gap. `margin = 0` is the open
/// safe region itself.
pub fn in_region(config: &SeparationConfig, x: &[f64], margin: f64) -> bool {
    x.len() == config.n && (1..=config.gap_count()).all(|j| config.gap(j, x) > margin)
}

/// Reduce an angle into `[0, 2π)`.
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    // rem_euclid rounds tiny negatives up to exactly 2π
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Per-coordinate reduction modulo `2π`.
pub fn project_to_torus(x: &[f64]) -> Vec<f64> {
    x.iter().copied().map(wrap_angle).collect()
}

/// Distance between two angles along the circle, in `[0, π]`.
#[inline]
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    d.min(TAU - d)
}

/// Lift an `ε`-separated angle configuration to the safe region of `ℝⁿ`.
///
/// The first body is anchored in `[0, 2π)` and each following body sits at
/// the previous one plus the counter-clockwise gap between them, so labels are
/// preserved and the lift satisfies `x_1 + ε < x_2 < … < x_n + ε < x_1 + 2π`.
pub fn lift_configuration(config: &SeparationConfig, angles: &[f64]) -> Result<Vec<f64>> {
    if config.space != Space::Circle {
        return Err(Error::WrongSpace("circle"));
    }
    config.check_state(angles)?;
    if angles.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidConfig("angles must be finite".into()));
    }
    let mut lifted = Vec::with_capacity(config.n);
    lifted.push(wrap_angle(angles[0]));
    for j in 1..config.n {
        let step = wrap_angle(angles[j] - angles[j - 1]);
        lifted.push(lifted[j - 1] + step);
    }
    for j in 1..=config.n {
        let clearance = config.gap(j, &lifted);
        if clearance <= 0.0 {
            return Err(Error::NotSeparated { gap: j, clearance });
        }
    }
    Ok(lifted)
}
