//! Seeded sampling of states: interior, boundary and ambient points.
//!
//! Every random draw in the crate goes through [`seeded_rng`] so that reports
//! are reproducible from the seed they record.

use std::f64::consts::TAU;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{in_region, SeparationConfig, Space};

pub type SampleRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Extra clearance (beyond `ε`) drawn for each gap on the line.
const LINE_EXTRA_GAP: f64 = 1.5;

/// Uniform weights on the simplex (normalized exponentials).
fn simplex_weights(rng: &mut SampleRng, k: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Positions from a first coordinate and the successive gaps `x_{j+1} - x_j`.
fn accumulate(first: f64, steps: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(steps.len() + 1);
    x.push(first);
    for s in steps {
        let last = *x.last().unwrap();
        x.push(last + s);
    }
    x
}

/// A random point with `ρ_j > margin` for every gap.
///
/// Line points are roughly centered on the origin; circle points have their
/// first angle uniform in `[0, 2π)` and gaps uniform on the simplex of the
/// available slack. Panics if the circle slack `2π - nε` cannot fit `margin`
/// on every gap.
pub fn interior_point(config: &SeparationConfig, margin: f64, rng: &mut SampleRng) -> Vec<f64> {
    let n = config.n();
    let eps = config.epsilon();
    loop {
        let x = match config.space() {
            Space::RealLine => {
                let steps: Vec<f64> = (0..n - 1)
                    .map(|_| eps + margin + LINE_EXTRA_GAP * rng.gen::<f64>())
                    .collect();
                let span: f64 = steps.iter().sum();
                accumulate(-0.5 * span + rng.gen_range(-0.5..0.5), &steps)
            }
            Space::Circle => {
                let slack = TAU - n as f64 * (eps + margin);
                assert!(slack > 0.0, "margin {margin} does not fit on the circle");
                let w = simplex_weights(rng, n);
                let steps: Vec<f64> = w[..n - 1]
                    .iter()
                    .map(|wi| eps + margin + slack * wi)
                    .collect();
                accumulate(rng.gen_range(0.0..TAU), &steps)
            }
        };
        if in_region(config, &x, margin) {
            return x;
        }
    }
}

/// A point on the hypersurface `{ρ_j = 0}` whose other gaps are positive.
///
/// The `j`-th gap is set to exactly `ε` during construction, so the only
/// error in `ρ_j` is the rounding of one addition.
pub fn boundary_point(config: &SeparationConfig, j: usize, rng: &mut SampleRng) -> Vec<f64> {
    let n = config.n();
    let eps = config.epsilon();
    match config.space() {
        Space::RealLine => {
            let steps: Vec<f64> = (1..n)
                .map(|k| {
                    if k == j {
                        eps
                    } else {
                        eps + rng.gen_range(0.05..LINE_EXTRA_GAP)
                    }
                })
                .collect();
            accumulate(rng.gen_range(-3.0..3.0), &steps)
        }
        Space::Circle => {
            let slack = TAU - n as f64 * eps;
            let mut w: Vec<f64> = (1..=n)
                .map(|k| {
                    if k == j {
                        0.0
                    } else {
                        rng.gen_range(0.05..1.0)
                    }
                })
                .collect();
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v = eps + slack * *v / total);
            let first = rng.gen_range(0.0..TAU);
            if j == n {
                // close the chain exactly through the wrap-around gap
                let mut x = accumulate(first, &w[..n - 2]);
                x.push(first + TAU - eps);
                x
            } else {
                accumulate(first, &w[..n - 1])
            }
        }
    }
}

/// A point drawn uniformly from a box, ignoring the separation constraints.
pub fn ambient_point(config: &SeparationConfig, rng: &mut SampleRng) -> Vec<f64> {
    let (lo, hi) = match config.space() {
        Space::RealLine => (-5.0, 5.0),
        Space::Circle => (-TAU, 2.0 * TAU),
    };
    (0..config.n()).map(|_| rng.gen_range(lo..hi)).collect()
}
