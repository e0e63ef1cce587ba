//! Numerical certificates for a constructed family.
//!
//! Each check samples states from a seeded generator and reports the worst
//! residual against a fixed tolerance. The closed forms used as expected
//! values here are written out independently of the coefficient table in
//! [`crate::fields`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{CaseTag, FamilyDescriptor, FieldFamily};
use crate::geometry::{in_region, sigma_profile, Space};
use crate::sample::{ambient_point, boundary_point, interior_point, seeded_rng};

/// Tangency and multiplier identities.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
/// Closed-form bracket columns against the analytic bracket.
pub const BRACKET_FORMULA_TOLERANCE: f64 = 1e-12;
/// Singular values below `RANK_REL_TOL · σ_max` count as zero.
pub const RANK_REL_TOL: f64 = 1e-9;
/// Clearance kept by interior samples of the rank scan.
pub const DEFAULT_RANK_MARGIN: f64 = 1e-3;

const MAX_WITNESSES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub state: Vec<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check_name: String,
    pub samples: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub seed: Option<u64>,
    pub witnesses: Vec<Witness>,
}

/// Running maximum over sampled residuals.
pub(crate) struct ResidualLog {
    name: String,
    seed: Option<u64>,
    tolerance: f64,
    samples: usize,
    max_residual: f64,
    witnesses: Vec<Witness>,
}

impl ResidualLog {
    pub(crate) fn new(name: impl Into<String>, seed: Option<u64>, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            seed,
            tolerance,
            samples: 0,
            max_residual: f64::NEG_INFINITY,
            witnesses: Vec::new(),
        }
    }

    pub(crate) fn record(&mut self, state: &[f64], residual: f64) {
        let residual = if residual.is_nan() {
            f64::INFINITY
        } else {
            residual
        };
        self.samples += 1;
        self.max_residual = self.max_residual.max(residual);
        if residual > self.tolerance && self.witnesses.len() < MAX_WITNESSES {
            self.witnesses.push(Witness {
                state: state.to_vec(),
                residual,
            });
        }
    }

    pub(crate) fn finish(self) -> VerificationReport {
        let max_residual = if self.samples == 0 {
            0.0
        } else {
            self.max_residual
        };
        VerificationReport {
            check_name: self.name,
            samples: self.samples,
            passed: max_residual <= self.tolerance,
            max_residual,
            tolerance: self.tolerance,
            seed: self.seed,
            witnesses: self.witnesses,
        }
    }
}

/// `(f ρ_j)(x) = ∇ρ_j · f(x)`.
fn derivative_along(family: &FieldFamily, j: usize, f: &[f64]) -> f64 {
    let (minus, plus) = family.config().gap_support(j);
    f[plus] - f[minus]
}

/// Samples exact points of `{ρ_j = 0}` and reports `max_ℓ |f_ℓ ρ_j|`.
pub fn check_tangency(
    family: &FieldFamily,
    j: usize,
    sample_count: usize,
    seed: u64,
) -> Result<VerificationReport> {
    family.config().check_gap_index(j)?;
    let mut rng = seeded_rng(seed);
    let mut log = ResidualLog::new(format!("tangency[rho_{j}]"), Some(seed), DEFAULT_TOLERANCE);
    for _ in 0..sample_count {
        let x = boundary_point(family.config(), j, &mut rng);
        let mut worst: f64 = 0.0;
        for l in 1..=family.m() {
            let f = family.eval_field(l, &x)?;
            worst = worst.max(derivative_along(family, j, &f).abs());
        }
        log.record(&x, worst);
    }
    Ok(log.finish())
}

/// Closed-form multiplier `α` in `f_ℓ ρ_j = α ρ_j` style identities, i.e.
/// the value `f_ℓ ρ_j` must take at `x`.
pub fn expected_multiplier(family: &FieldFamily, l: usize, j: usize, x: &[f64]) -> f64 {
    if l == 1 {
        return 0.0;
    }
    let cfg = family.config();
    let (n, m) = (family.n(), family.m());
    let rho = |k: usize| cfg.gap(k, x);
    match cfg.space() {
        Space::RealLine => {
            let bottom = m + l - 2;
            if j == l - 1 {
                -rho(l - 1)
            } else if bottom < n && j == bottom {
                x[bottom - 1] * rho(bottom)
            } else {
                0.0
            }
        }
        Space::Circle => {
            let sig = |k: usize| sigma_profile(rho(k));
            let top = sig(l - 1) * sig(n);
            // (t, first-row extra, second-row extra) for a block column
            let block = (l <= n - m + 1).then(|| {
                let t = m + l - 2 - (l % 2);
                let p = sig(t) * sig(t + 1) * sig(t + 2);
                let (a, b) = (x[t - 1].sin() * p, x[t - 1].cos() * p);
                if l.is_multiple_of(2) {
                    (t, a, b)
                } else {
                    (t, -b, a)
                }
            });
            if j == l - 1 {
                return -top;
            }
            if j == n {
                return match block {
                    Some((t, _, e2)) if t + 2 == n => top - e2,
                    _ => top,
                };
            }
            match block {
                Some((t, e1, _)) if j == t => e1,
                Some((t, e1, e2)) if j == t + 1 => e2 - e1,
                Some((t, _, e2)) if j == t + 2 => -e2,
                _ => 0.0,
            }
        }
    }
}

/// Verifies every identity `f_ℓ ρ_j = (closed form)` at random ambient points.
pub fn check_multipliers(
    family: &FieldFamily,
    sample_count: usize,
    seed: u64,
) -> Result<VerificationReport> {
    let mut rng = seeded_rng(seed);
    let mut log = ResidualLog::new("multipliers", Some(seed), DEFAULT_TOLERANCE);
    let gaps = family.config().gap_count();
    for _ in 0..sample_count {
        let x = ambient_point(family.config(), &mut rng);
        let mut worst: f64 = 0.0;
        for l in 1..=family.m() {
            let f = family.eval_field(l, &x)?;
            for j in 1..=gaps {
                let lhs = derivative_along(family, j, &f);
                worst = worst.max((lhs - expected_multiplier(family, l, j, &x)).abs());
            }
        }
        log.record(&x, worst);
    }
    Ok(log.finish())
}

/// Closed form of `[f_1, f_ℓ](x)`.
pub fn expected_first_bracket(family: &FieldFamily, l: usize, x: &[f64]) -> Vec<f64> {
    let cfg = family.config();
    let (n, m) = (family.n(), family.m());
    let mut out = vec![0.0; n];
    if l == 1 {
        return out;
    }
    match cfg.space() {
        Space::RealLine => {
            let bottom = m + l - 2;
            if bottom < n {
                let r = cfg.gap(bottom, x);
                out[bottom..].iter_mut().for_each(|v| *v = r);
            }
        }
        Space::Circle => {
            if l <= n - m + 1 {
                let t = m + l - 2 - (l % 2);
                let sig = |k: usize| sigma_profile(cfg.gap(k, x));
                let p = sig(t) * sig(t + 1) * sig(t + 2);
                let (s, c) = x[t - 1].sin_cos();
                let (top, bottom) = if l.is_multiple_of(2) { (c, -s) } else { (s, c) };
                out[t] = p * top;
                out[t + 1] = p * bottom;
            }
        }
    }
    out
}

/// Compares `[f_1, f_ℓ]` with its closed form at interior points. Families
/// with `m = n` need no brackets and pass with zero samples.
pub fn check_bracket_formulas(
    family: &FieldFamily,
    sample_count: usize,
    seed: u64,
) -> Result<VerificationReport> {
    let mut log = ResidualLog::new("bracket_formulas", Some(seed), BRACKET_FORMULA_TOLERANCE);
    if matches!(family.case(), CaseTag::LineFull | CaseTag::CircleFull) {
        return Ok(log.finish());
    }
    let mut rng = seeded_rng(seed);
    for _ in 0..sample_count {
        let x = interior_point(family.config(), 0.0, &mut rng);
        let mut worst: f64 = 0.0;
        for l in 2..=family.m() {
            let b = family.bracket(1, l, &x)?;
            let e = expected_first_bracket(family, l, &x);
            for (u, v) in b.iter().zip(&e) {
                worst = worst.max((u - v).abs());
            }
        }
        log.record(&x, worst);
    }
    Ok(log.finish())
}

/// Compares analytic brackets with the finite-difference oracle for all
/// pairs; tolerance `10 h² (1 + |x|)` per point.
pub fn check_bracket_oracle(
    family: &FieldFamily,
    sample_count: usize,
    seed: u64,
    h: f64,
) -> Result<VerificationReport> {
    let mut rng = seeded_rng(seed);
    // residuals are normalized by the per-point tolerance, so the report
    // tolerance is 1
    let mut log = ResidualLog::new("bracket_oracle", Some(seed), 1.0);
    for _ in 0..sample_count {
        let x = interior_point(family.config(), 0.0, &mut rng);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let tol = 10.0 * h * h * (1.0 + norm);
        let mut worst: f64 = 0.0;
        for l in 1..=family.m() {
            for k in l + 1..=family.m() {
                let exact = family.bracket(l, k, &x)?;
                let approx = family.bracket_fd(l, k, &x, h)?;
                for (u, v) in exact.iter().zip(&approx) {
                    worst = worst.max((u - v).abs() / tol);
                }
            }
        }
        log.record(&x, worst);
    }
    Ok(log.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanRank {
    pub rank: usize,
    pub min_singular_value: f64,
}

/// Numerical rank and smallest singular value of `a`.
pub fn numerical_rank(a: &DMatrix<f64>) -> SpanRank {
    let sv = a.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    SpanRank {
        rank: sv.iter().filter(|&&s| s > RANK_REL_TOL * max).count(),
        min_singular_value: min,
    }
}

/// Rank of `{f_ℓ(x)} ∪ {[f_ℓ, f_k](x) : ℓ < k}` at an interior point.
pub fn spanning_rank(family: &FieldFamily, x: &[f64]) -> Result<SpanRank> {
    span_rank_with(family, x, true)
}

/// Rank of the fields alone, without brackets.
pub fn field_rank(family: &FieldFamily, x: &[f64]) -> Result<SpanRank> {
    span_rank_with(family, x, false)
}

fn span_rank_with(family: &FieldFamily, x: &[f64], with_brackets: bool) -> Result<SpanRank> {
    family.config().check_state(x)?;
    if !in_region(family.config(), x, 0.0) {
        return Err(Error::OutsideRegion("rank evaluation point"));
    }
    Ok(numerical_rank(&family.span_matrix(x, with_brackets)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub samples: usize,
    /// Equals `required_rank` for an empty scan.
    pub min_rank: usize,
    pub required_rank: usize,
    /// `None` for an empty scan.
    pub min_singular_value_over_samples: Option<f64>,
    pub passed: bool,
    pub seed: u64,
    pub margin: f64,
    pub with_brackets: bool,
}

/// Spanning rank at `sample_count` interior points with clearance `margin`.
pub fn rank_scan(
    family: &FieldFamily,
    sample_count: usize,
    seed: u64,
    margin: f64,
) -> Result<RankReport> {
    rank_scan_with(family, sample_count, seed, margin, true)
}

/// As [`rank_scan`]; without brackets the required rank is `m`.
pub fn rank_scan_with(
    family: &FieldFamily,
    sample_count: usize,
    seed: u64,
    margin: f64,
    with_brackets: bool,
) -> Result<RankReport> {
    if margin.is_nan() || margin <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "rank scan margin must be > 0, got {margin}"
        )));
    }
    let required = if with_brackets {
        family.n()
    } else {
        family.m()
    };
    let mut rng = seeded_rng(seed);
    let mut min_rank = required;
    let mut min_sv: Option<f64> = None;
    for _ in 0..sample_count {
        let x = interior_point(family.config(), margin, &mut rng);
        let r = span_rank_with(family, &x, with_brackets)?;
        min_rank = min_rank.min(r.rank);
        min_sv = Some(min_sv.map_or(r.min_singular_value, |v| v.min(r.min_singular_value)));
    }
    Ok(RankReport {
        samples: sample_count,
        min_rank,
        required_rank: required,
        min_singular_value_over_samples: min_sv,
        passed: min_rank == required,
        seed,
        margin,
        with_brackets,
    })
}

/// Perturbs coordinates outside each field's dependence pattern and reports
/// the largest change in the field (exactly zero when the pattern is right).
pub fn check_sparsity(
    family: &FieldFamily,
    sample_count: usize,
    seed: u64,
) -> Result<VerificationReport> {
    use rand::Rng;
    let mut rng = seeded_rng(seed);
    let mut log = ResidualLog::new("sparsity", Some(seed), 0.0);
    for _ in 0..sample_count {
        let x = ambient_point(family.config(), &mut rng);
        let mut worst: f64 = 0.0;
        for l in 1..=family.m() {
            let pattern = family.dependence_pattern(l)?;
            let base = family.eval_field(l, &x)?;
            for c in (1..=family.n()).filter(|c| !pattern.contains(c)) {
                let mut y = x.clone();
                y[c - 1] += rng.gen_range(-2.0..2.0);
                let moved = family.eval_field(l, &y)?;
                for (u, v) in base.iter().zip(&moved) {
                    worst = worst.max((u - v).abs());
                }
            }
        }
        log.record(&x, worst);
    }
    Ok(log.finish())
}

/// Everything `verify` runs for one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationBundle {
    pub family: FamilyDescriptor,
    pub case: CaseTag,
    pub seed: u64,
    pub reports: Vec<VerificationReport>,
    pub rank: RankReport,
    pub passed: bool,
}

/// Tangency on every wall, multipliers, bracket formulas, sparsity and the
/// rank scan. Sub-checks draw from seeds derived from `seed`.
pub fn verify_family(
    family: &FieldFamily,
    sample_count: usize,
    seed: u64,
) -> Result<VerificationBundle> {
    let mut reports = Vec::new();
    for j in 1..=family.config().gap_count() {
        reports.push(check_tangency(
            family,
            j,
            sample_count,
            seed.wrapping_add(j as u64),
        )?);
    }
    reports.push(check_multipliers(
        family,
        sample_count,
        seed.wrapping_add(101),
    )?);
    reports.push(check_bracket_formulas(
        family,
        sample_count,
        seed.wrapping_add(102),
    )?);
    reports.push(check_sparsity(
        family,
        sample_count,
        seed.wrapping_add(103),
    )?);
    let rank = rank_scan(
        family,
        sample_count,
        seed.wrapping_add(104),
        DEFAULT_RANK_MARGIN,
    )?;
    let passed = rank.passed && reports.iter().all(|r| r.passed);
    Ok(VerificationBundle {
        family: family.descriptor(),
        case: family.case(),
        seed,
        reports,
        rank,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SeparationConfig;

    fn family(space: Space, n: usize, m: usize, eps: f64) -> FieldFamily {
        FieldFamily::new(SeparationConfig::new(space, n, eps).unwrap(), m).unwrap()
    }

    #[test]
    fn tangency_example_two_bodies() {
        let f = family(Space::RealLine, 2, 2, 0.5);
        let r = check_tangency(&f, 1, 200, 1).unwrap();
        assert!(r.passed);
        assert_eq!(r.samples, 200);
        assert!(r.max_residual < 1e-14);
    }

    #[test]
    fn tangency_line_minimal_and_circle_full() {
        let f = family(Space::RealLine, 3, 2, 0.1);
        for j in 1..=2 {
            assert!(check_tangency(&f, j, 200, 2).unwrap().passed);
        }
        let f = family(Space::Circle, 4, 4, 0.5);
        for j in 1..=4 {
            let r = check_tangency(&f, j, 200, 3).unwrap();
            assert!(r.passed, "{r:?}");
        }
        assert!(check_tangency(&f, 5, 10, 3).is_err());
    }

    #[test]
    fn multiplier_examples() {
        let f = family(Space::RealLine, 3, 3, 0.1);
        let x = [0.0, 1.0, 2.0];
        let f2 = f.eval_field(2, &x).unwrap();
        let lhs = derivative_along(&f, 1, &f2);
        assert!((lhs + 0.9).abs() < 1e-15);
        assert!((expected_multiplier(&f, 2, 1, &x) + 0.9).abs() < 1e-15);

        let f = family(Space::Circle, 3, 3, 0.3);
        let x = [0.2, 2.1, 4.4];
        let f2 = f.eval_field(2, &x).unwrap();
        let cfg = f.config();
        let s = |j| sigma_profile(cfg.gap(j, &x));
        assert!((derivative_along(&f, 3, &f2) - s(1) * s(3)).abs() < 1e-12);
        assert!(check_multipliers(&f, 300, 4).unwrap().passed);
    }

    #[test]
    fn bracket_formula_examples() {
        let f = family(Space::RealLine, 3, 2, 0.1);
        assert_eq!(expected_first_bracket(&f, 2, &[0.0, 1.0, 2.0])[2], 0.9);
        assert!(check_bracket_formulas(&f, 100, 5).unwrap().passed);

        let full = family(Space::RealLine, 4, 4, 0.1);
        let r = check_bracket_formulas(&full, 100, 5).unwrap();
        assert!(r.passed);
        assert_eq!(r.samples, 0);

        let odd = family(Space::Circle, 5, 3, 0.4);
        let x = interior_point(odd.config(), 0.0, &mut seeded_rng(6));
        let b2 = odd.bracket(1, 2, &x).unwrap();
        let b3 = odd.bracket(1, 3, &x).unwrap();
        assert_eq!(&b2[..3], &[0.0, 0.0, 0.0]);
        assert_eq!(&b3[..3], &[0.0, 0.0, 0.0]);
        let fd = odd.bracket_fd(1, 2, &x, 1e-4).unwrap();
        for (u, v) in b2.iter().zip(&fd) {
            assert!((u - v).abs() < 1e-6);
        }
        assert!(check_bracket_formulas(&odd, 100, 6).unwrap().passed);
    }

    #[test]
    fn spanning_rank_examples() {
        let f = family(Space::RealLine, 2, 2, 0.5);
        let r = spanning_rank(&f, &[0.0, 1.0]).unwrap();
        assert_eq!(r.rank, 2);
        assert!((f.field_matrix(&[0.0, 1.0]).unwrap().determinant() + 0.5).abs() < 1e-15);

        let f = family(Space::RealLine, 3, 2, 0.1);
        let x = [0.0, 1.0, 2.0];
        assert_eq!(spanning_rank(&f, &x).unwrap().rank, 3);
        assert!((f.frame_matrix(&x).unwrap().determinant() + 0.81).abs() < 1e-12);
        assert_eq!(field_rank(&f, &x).unwrap().rank, 2);

        // on the wall {ρ_1 = 0} the frame degenerates
        let wall = [0.0, 0.1, 2.0];
        assert!(matches!(
            spanning_rank(&f, &wall),
            Err(Error::OutsideRegion(_))
        ));
        let frame = f.frame_matrix(&wall).unwrap();
        assert!(numerical_rank(&frame).rank < 3);
    }

    #[test]
    fn rank_scan_examples() {
        let f = family(Space::RealLine, 4, 4, 0.2);
        let r = rank_scan(&f, 200, 7, 1e-3).unwrap();
        assert!(r.passed && r.min_rank == 4);

        let f = family(Space::Circle, 5, 3, 0.4);
        let r = rank_scan(&f, 200, 7, 1e-3).unwrap();
        assert!(r.passed, "{r:?}");

        let empty = rank_scan(&f, 0, 7, 1e-3).unwrap();
        assert!(empty.passed);
        assert_eq!(empty.min_rank, 5);
        assert_eq!(empty.min_singular_value_over_samples, None);
        assert!(rank_scan(&f, 10, 7, 0.0).is_err());
    }

    #[test]
    fn sparsity_examples() {
        let f = family(Space::RealLine, 5, 3, 0.2);
        let r = check_sparsity(&f, 50, 8).unwrap();
        assert!(r.passed && r.max_residual == 0.0);
        let f = family(Space::RealLine, 2, 2, 0.5);
        assert!(check_sparsity(&f, 10, 8).unwrap().passed);
    }

    #[test]
    fn report_records_witnesses() {
        let mut log = ResidualLog::new("demo", None, 1.0);
        log.record(&[0.0], 0.5);
        log.record(&[1.0], 2.0);
        log.record(&[2.0], f64::NAN);
        let r = log.finish();
        assert!(!r.passed);
        assert_eq!(r.samples, 3);
        assert_eq!(r.witnesses.len(), 2);
        assert_eq!(r.max_residual, f64::INFINITY);
    }
}
