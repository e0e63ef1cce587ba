//! The vector-field families and their closed-form derivatives.
//!
//! Every family has `f_1 = (1, …, 1)`, the rigid translation (rotation on the
//! circle) of all bodies. The remaining columns perturb that translation by
//! coefficients which vanish, to first order, on the walls `{ρ_j = 0}` they
//! touch, which is what keeps the safe region invariant.
//!
//! Line families (`m = n`, `2m = n + 1`, `2m > n + 1`) share one layout: in
//! column `ℓ ≥ 2`, rows `1..ℓ-1` carry `1 + ρ_{ℓ-1}`, rows `ℓ..m+ℓ-2` carry
//! `1`, and rows `m+ℓ-1..n` (when there are any) carry
//! `1 + x_{m+ℓ-2} ρ_{m+ℓ-2}`.
//!
//! Circle families use `1 + σ_{ℓ-1} σ_n` in the top `m` rows. When `m < n`
//! the bottom `n - m` rows hold `(n - m)/2` rotation blocks
//!
//! ```text
//!   rows (m+2λ-1, m+2λ), columns (2λ, 2λ+1):
//!   | 1 + A_λ   1 - B_λ |
//!   | 1 + B_λ   1 + A_λ |
//! ```
//!
//! with `A_λ = sin x_t · P_λ`, `B_λ = cos x_t · P_λ`, `t = m + 2(λ-1)` and
//! `P_λ = σ_t σ_{t+1} σ_{t+2}`. Each of the three gaps bordering the block's
//! rows contributes a factor, so every wall the block touches stays tangent.
//! All other bottom entries are `1`.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sigma_profile, sigma_profile_derivative, SeparationConfig, Space};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseTag {
    LineFull,
    LineMinimal,
    LineSurplus,
    CircleFull,
    CircleOdd,
    CircleEven,
}

impl CaseTag {
    /// The unique construction case for `(space, n, m)`.
    pub fn classify(space: Space, n: usize, m: usize) -> Result<CaseTag> {
        let unsupported = |why: String| Err(Error::UnsupportedFamily(why));
        if m == 0 || m > n {
            return unsupported(format!("need 1 <= m <= n, got n = {n}, m = {m}"));
        }
        if m == n {
            return Ok(match space {
                Space::RealLine => CaseTag::LineFull,
                Space::Circle => CaseTag::CircleFull,
            });
        }
        match space {
            Space::RealLine => {
                if 2 * m < n + 1 {
                    unsupported(format!(
                        "line families need 2m >= n + 1, got n = {n}, m = {m}"
                    ))
                } else if 2 * m == n + 1 {
                    Ok(CaseTag::LineMinimal)
                } else {
                    Ok(CaseTag::LineSurplus)
                }
            }
            Space::Circle if !n.is_multiple_of(2) => {
                if m.is_multiple_of(2) {
                    unsupported(format!(
                        "circle with odd n needs m odd (both n and m odd, 2m >= n + 1), got n = {n}, m = {m}"
                    ))
                } else if 2 * m < n + 1 {
                    unsupported(format!(
                        "circle with odd n needs 2m >= n + 1, got n = {n}, m = {m}"
                    ))
                } else {
                    Ok(CaseTag::CircleOdd)
                }
            }
            Space::Circle => {
                if m % 2 == 1 {
                    unsupported(format!(
                        "circle with even n needs m even (n even, 2m >= n + 2), got n = {n}, m = {m}"
                    ))
                } else if 2 * m < n + 2 {
                    unsupported(format!(
                        "circle with even n needs 2m >= n + 2, got n = {n}, m = {m}"
                    ))
                } else {
                    Ok(CaseTag::CircleEven)
                }
            }
        }
    }

    pub fn space(self) -> Space {
        match self {
            CaseTag::LineFull | CaseTag::LineMinimal | CaseTag::LineSurplus => Space::RealLine,
            _ => Space::Circle,
        }
    }
}

/// One matrix entry as a function of the state.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Coefficient {
    One,
    /// `1 + ρ_j`
    Rho(usize),
    /// `1 + x_j ρ_j`
    XRho(usize),
    /// `1 + σ_j σ_n`
    SigmaSigmaN(usize),
    /// `1 + A` of the block anchored at angle index `t`
    BlockA(usize),
    /// `1 + B`
    BlockB(usize),
    /// `1 - B`
    BlockMinusB(usize),
}

/// Gap values and σ-profiles evaluated once per state.
struct Local<'a> {
    x: &'a [f64],
    rho: Vec<f64>,
    sigma: Vec<f64>,
    dsigma: Vec<f64>,
}

impl<'a> Local<'a> {
    fn new(config: &SeparationConfig, x: &'a [f64]) -> Self {
        let rho: Vec<f64> = (1..=config.gap_count()).map(|j| config.gap(j, x)).collect();
        let (sigma, dsigma) = match config.space() {
            Space::Circle => (
                rho.iter().map(|&r| sigma_profile(r)).collect(),
                rho.iter().map(|&r| sigma_profile_derivative(r)).collect(),
            ),
            Space::RealLine => (Vec::new(), Vec::new()),
        };
        Self {
            x,
            rho,
            sigma,
            dsigma,
        }
    }

    /// Like [`Local::new`] without the derivatives of `σ`, reusing the
    /// buffers of `scratch`.
    fn values(config: &SeparationConfig, x: &'a [f64], scratch: &mut Scratch) -> Self {
        let mut rho = std::mem::take(&mut scratch.rho);
        let mut sigma = std::mem::take(&mut scratch.sigma);
        rho.clear();
        rho.extend((1..=config.gap_count()).map(|j| config.gap(j, x)));
        sigma.clear();
        if config.space() == Space::Circle {
            sigma.extend(rho.iter().map(|&r| sigma_profile(r)));
        }
        Self {
            x,
            rho,
            sigma,
            dsigma: Vec::new(),
        }
    }

    fn release(self, scratch: &mut Scratch) {
        scratch.rho = self.rho;
        scratch.sigma = self.sigma;
    }

    #[inline]
    fn rho(&self, j: usize) -> f64 {
        self.rho[j - 1]
    }

    #[inline]
    fn sigma(&self, j: usize) -> f64 {
        self.sigma[j - 1]
    }

    /// `P = σ_t σ_{t+1} σ_{t+2}`
    #[inline]
    fn block_weight(&self, t: usize) -> f64 {
        self.sigma(t) * self.sigma(t + 1) * self.sigma(t + 2)
    }
}

/// Reusable buffers for repeated velocity evaluations.
#[derive(Debug, Default)]
pub(crate) struct Scratch {
    rho: Vec<f64>,
    sigma: Vec<f64>,
}

impl Coefficient {
    fn value(self, l: &Local) -> f64 {
        1.0 + self.offset(l)
    }

    /// `value − 1`, evaluated without forming the sum.
    fn offset(self, l: &Local) -> f64 {
        match self {
            Coefficient::One => 0.0,
            Coefficient::Rho(j) => l.rho(j),
            Coefficient::XRho(j) => l.x[j - 1] * l.rho(j),
            Coefficient::SigmaSigmaN(j) => l.sigma(j) * l.sigma[l.sigma.len() - 1],
            Coefficient::BlockA(t) => l.x[t - 1].sin() * l.block_weight(t),
            Coefficient::BlockB(t) => l.x[t - 1].cos() * l.block_weight(t),
            Coefficient::BlockMinusB(t) => -l.x[t - 1].cos() * l.block_weight(t),
        }
    }

    /// Accumulate `scale · ∇(coefficient)` into `row`.
    fn add_gradient(self, config: &SeparationConfig, l: &Local, scale: f64, row: &mut [f64]) {
        let add_gap = |row: &mut [f64], j: usize, w: f64| {
            let (minus, plus) = config.gap_support(j);
            row[minus] -= w;
            row[plus] += w;
        };
        match self {
            Coefficient::One => {}
            Coefficient::Rho(j) => add_gap(row, j, scale),
            Coefficient::XRho(j) => {
                row[j - 1] += scale * l.rho(j);
                add_gap(row, j, scale * l.x[j - 1]);
            }
            Coefficient::SigmaSigmaN(j) => {
                let n = l.sigma.len();
                add_gap(row, j, scale * l.dsigma[j - 1] * l.sigma[n - 1]);
                add_gap(row, n, scale * l.sigma(j) * l.dsigma[n - 1]);
            }
            Coefficient::BlockA(t) | Coefficient::BlockB(t) | Coefficient::BlockMinusB(t) => {
                let theta = l.x[t - 1];
                let (s, c) = theta.sin_cos();
                // value = k + (trig θ) P with trig' written out per variant
                let (trig, dtrig) = match self {
                    Coefficient::BlockA(_) => (s, c),
                    Coefficient::BlockB(_) => (c, -s),
                    _ => (-c, s),
                };
                row[t - 1] += scale * dtrig * l.block_weight(t);
                let sig = [l.sigma(t), l.sigma(t + 1), l.sigma(t + 2)];
                for (k, j) in (t..=t + 2).enumerate() {
                    let others: f64 = (0..3).filter(|&i| i != k).map(|i| sig[i]).product();
                    add_gap(row, j, scale * trig * l.dsigma[j - 1] * others);
                }
            }
        }
    }
}

/// A constructed family `{f_1, …, f_m}` for one configuration.
#[derive(Debug, Clone)]
pub struct FieldFamily {
    config: SeparationConfig,
    m: usize,
    case: CaseTag,
    /// `columns[ℓ-1][i]` is row `i` (0-based) of `f_ℓ`.
    columns: Vec<Vec<Coefficient>>,
    /// `(row, coefficient)` for the non-constant entries of each column.
    active: Vec<Vec<(usize, Coefficient)>>,
}

/// Build the family for `(config, m)`; see [`CaseTag::classify`] for the
/// supported combinations.
pub fn build_family(config: SeparationConfig, m: usize) -> Result<FieldFamily> {
    FieldFamily::new(config, m)
}

impl FieldFamily {
    pub fn new(config: SeparationConfig, m: usize) -> Result<Self> {
        let n = config.n();
        let case = CaseTag::classify(config.space(), n, m)?;
        let mut columns = vec![vec![Coefficient::One; n]; m];
        match config.space() {
            Space::RealLine => {
                for l in 2..=m {
                    let col = &mut columns[l - 1];
                    for row in col.iter_mut().take(l - 1) {
                        *row = Coefficient::Rho(l - 1);
                    }
                    let bottom = m + l - 2;
                    if bottom < n {
                        for row in col.iter_mut().skip(bottom) {
                            *row = Coefficient::XRho(bottom);
                        }
                    }
                }
            }
            Space::Circle => {
                for l in 2..=m {
                    for row in columns[l - 1].iter_mut().take(l - 1) {
                        *row = Coefficient::SigmaSigmaN(l - 1);
                    }
                }
                for lambda in 1..=(n - m) / 2 {
                    let t = m + 2 * (lambda - 1);
                    // 0-based rows t, t+1 are the 1-based rows m+2λ-1, m+2λ
                    let (c1, c2) = (2 * lambda - 1, 2 * lambda);
                    columns[c1][t] = Coefficient::BlockA(t);
                    columns[c1][t + 1] = Coefficient::BlockB(t);
                    columns[c2][t] = Coefficient::BlockMinusB(t);
                    columns[c2][t + 1] = Coefficient::BlockA(t);
                }
            }
        }
        let active = columns
            .iter()
            .map(|col| {
                col.iter()
                    .enumerate()
                    .filter(|(_, c)| **c != Coefficient::One)
                    .map(|(i, c)| (i, *c))
                    .collect()
            })
            .collect();
        Ok(Self {
            config,
            m,
            case,
            columns,
            active,
        })
    }

    pub fn config(&self) -> &SeparationConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.config.n()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn case(&self) -> CaseTag {
        self.case
    }

    /// Number of 2×2 rotation blocks (circle families with `m < n`).
    pub fn block_count(&self) -> usize {
        match self.case {
            CaseTag::CircleOdd | CaseTag::CircleEven => (self.n() - self.m) / 2,
            _ => 0,
        }
    }

    /// Indices `ℓ` whose brackets `[f_1, f_ℓ]` complete `f_1..f_m` to a basis
    /// of the tangent space: `2..=n-m+1`, empty when `m = n`.
    pub fn frame_brackets(&self) -> std::ops::RangeInclusive<usize> {
        2..=self.n() - self.m + 1
    }

    fn check_field_index(&self, l: usize) -> Result<()> {
        if l == 0 || l > self.m {
            return Err(Error::IndexOutOfRange {
                what: "field",
                index: l,
                max: self.m,
            });
        }
        Ok(())
    }

    fn check_state(&self, x: &[f64]) -> Result<()> {
        self.config.check_state(x)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("state must be finite".into()));
        }
        Ok(())
    }

    /// `f_ℓ(x)`.
    pub fn eval_field(&self, l: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_field_index(l)?;
        self.check_state(x)?;
        let local = Local::new(&self.config, x);
        Ok(self.columns[l - 1]
            .iter()
            .map(|c| c.value(&local))
            .collect())
    }

    /// Analytic Jacobian `∂f_ℓ/∂x` (row `i` is the gradient of component `i`).
    pub fn eval_jacobian(&self, l: usize, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_field_index(l)?;
        self.check_state(x)?;
        Ok(self.jacobian_at(l, &Local::new(&self.config, x)))
    }

    fn jacobian_at(&self, l: usize, local: &Local) -> DMatrix<f64> {
        let n = self.n();
        let mut jac = DMatrix::zeros(n, n);
        let mut row = vec![0.0; n];
        for (i, coef) in self.columns[l - 1].iter().enumerate() {
            if *coef == Coefficient::One {
                continue;
            }
            row.iter_mut().for_each(|v| *v = 0.0);
            coef.add_gradient(&self.config, local, 1.0, &mut row);
            for (j, v) in row.iter().enumerate() {
                jac[(i, j)] = *v;
            }
        }
        jac
    }

    /// Lie bracket `[f_ℓ, f_k](x) = J_k f_ℓ - J_ℓ f_k` from the analytic Jacobians.
    pub fn bracket(&self, l: usize, k: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_field_index(l)?;
        self.check_field_index(k)?;
        self.check_state(x)?;
        if l == k {
            return Ok(vec![0.0; self.n()]);
        }
        let local = Local::new(&self.config, x);
        Ok(self.bracket_at(l, k, &local))
    }

    fn bracket_at(&self, l: usize, k: usize, local: &Local) -> Vec<f64> {
        let fl = nalgebra::DVector::from_iterator(
            self.n(),
            self.columns[l - 1].iter().map(|c| c.value(local)),
        );
        let fk = nalgebra::DVector::from_iterator(
            self.n(),
            self.columns[k - 1].iter().map(|c| c.value(local)),
        );
        let b = self.jacobian_at(k, local) * fl - self.jacobian_at(l, local) * fk;
        b.iter().copied().collect()
    }

    /// Central-difference approximation of `[f_ℓ, f_k](x)` that only calls
    /// [`eval_field`](Self::eval_field). Each directional derivative is taken
    /// along the normalized field with step `h`, so the error is `O(h²)`.
    pub fn bracket_fd(&self, l: usize, k: usize, x: &[f64], h: f64) -> Result<Vec<f64>> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "step h must be positive, got {h}"
            )));
        }
        let fl = self.eval_field(l, x)?;
        let fk = self.eval_field(k, x)?;
        let dk_along_l = self.directional_fd(k, x, &fl, h)?;
        let dl_along_k = self.directional_fd(l, x, &fk, h)?;
        Ok(dk_along_l
            .iter()
            .zip(&dl_along_k)
            .map(|(a, b)| a - b)
            .collect())
    }

    /// `J_field(x) · dir` by central differences.
    fn directional_fd(&self, field: usize, x: &[f64], dir: &[f64], h: f64) -> Result<Vec<f64>> {
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(vec![0.0; x.len()]);
        }
        let shifted = |sign: f64| -> Vec<f64> {
            x.iter()
                .zip(dir)
                .map(|(xi, di)| xi + sign * h * di / norm)
                .collect()
        };
        let plus = self.eval_field(field, &shifted(1.0))?;
        let minus = self.eval_field(field, &shifted(-1.0))?;
        Ok(plus
            .iter()
            .zip(&minus)
            .map(|(p, q)| norm * (p - q) / (2.0 * h))
            .collect())
    }

    /// The coordinates (1-based) that `f_ℓ` depends on.
    pub fn dependence_pattern(&self, l: usize) -> Result<BTreeSet<usize>> {
        self.check_field_index(l)?;
        let n = self.n();
        let m = self.m;
        let mut set = BTreeSet::new();
        if l == 1 {
            return Ok(set);
        }
        set.extend([l - 1, l]);
        match self.config.space() {
            Space::RealLine => {
                if m + l - 1 <= n {
                    set.extend([m + l - 2, m + l - 1]);
                }
            }
            Space::Circle => {
                set.extend([1, n]);
                if l <= n - m + 1 {
                    let lambda = l / 2;
                    let t = m + 2 * (lambda - 1);
                    let after = if t + 2 == n { 1 } else { t + 3 };
                    set.extend([t, t + 1, t + 2, after]);
                }
            }
        }
        Ok(set)
    }

    /// The `n × m` matrix whose columns are `f_1(x), …, f_m(x)`.
    pub fn field_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_state(x)?;
        let local = Local::new(&self.config, x);
        Ok(DMatrix::from_fn(self.n(), self.m, |i, l| {
            self.columns[l][i].value(&local)
        }))
    }

    /// The square frame `[f_1 … f_m  [f_1,f_2] … [f_1,f_{n-m+1}]]`, invertible
    /// at interior points.
    pub fn frame_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_state(x)?;
        let n = self.n();
        let local = Local::new(&self.config, x);
        let mut frame = DMatrix::zeros(n, n);
        for l in 1..=self.m {
            for (i, c) in self.columns[l - 1].iter().enumerate() {
                frame[(i, l - 1)] = c.value(&local);
            }
        }
        for (offset, l) in self.frame_brackets().enumerate() {
            let b = self.bracket_at(1, l, &local);
            for (i, v) in b.into_iter().enumerate() {
                frame[(i, self.m + offset)] = v;
            }
        }
        Ok(frame)
    }

    /// The `n × (m + m(m-1)/2)` matrix of all fields and all brackets
    /// `[f_ℓ, f_k]`, `ℓ < k`.
    pub fn span_matrix(&self, x: &[f64], with_brackets: bool) -> Result<DMatrix<f64>> {
        self.check_state(x)?;
        let n = self.n();
        let local = Local::new(&self.config, x);
        let mut cols: Vec<Vec<f64>> = (0..self.m)
            .map(|l| self.columns[l].iter().map(|c| c.value(&local)).collect())
            .collect();
        if with_brackets {
            for l in 1..=self.m {
                for k in l + 1..=self.m {
                    cols.push(self.bracket_at(l, k, &local));
                }
            }
        }
        Ok(DMatrix::from_fn(n, cols.len(), |i, c| cols[c][i]))
    }

    /// `[f_1, f_2 − f_1, …, f_m − f_1]`: same span as the fields, with the
    /// offsets `f_ℓ − 1` computed directly instead of as `(1 + δ) − 1`
    /// (`f_1` is the all-ones field in every case).
    pub fn offset_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_state(x)?;
        let local = Local::new(&self.config, x);
        Ok(DMatrix::from_fn(self.n(), self.m, |i, l| match l {
            0 => 1.0,
            _ => self.columns[l][i].offset(&local),
        }))
    }

    /// [`Self::frame_matrix`] with the field columns replaced as in
    /// [`Self::offset_matrix`].
    pub fn offset_frame_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let mut frame = self.frame_matrix(x)?;
        let offsets = self.offset_matrix(x)?;
        frame.columns_mut(0, self.m).copy_from(&offsets);
        Ok(frame)
    }

    /// `Σ_ℓ u_ℓ f_ℓ(x)` written into `out`; lengths are the caller's contract.
    ///
    /// Summed as `(Σ_ℓ u_ℓ) 1 + Σ_ℓ u_ℓ (f_ℓ − 1)`: large controls whose field
    /// contributions nearly cancel keep the small differences between rows.
    pub(crate) fn velocity_into(
        &self,
        x: &[f64],
        u: &[f64],
        out: &mut [f64],
        scratch: &mut Scratch,
    ) {
        let local = Local::values(&self.config, x, scratch);
        let common: f64 = u.iter().sum();
        out.iter_mut().for_each(|v| *v = 0.0);
        for (col, &ul) in self.active.iter().zip(u).skip(1) {
            if ul == 0.0 {
                continue;
            }
            for &(i, c) in col {
                out[i] += ul * c.offset(&local);
            }
        }
        out.iter_mut().for_each(|v| *v += common);
        local.release(scratch);
    }

    /// Coefficient-level description used by the CLI and FFI.
    pub fn descriptor(&self) -> FamilyDescriptor {
        FamilyDescriptor {
            space: self.config.space(),
            n: self.n(),
            m: self.m,
            epsilon: self.config.epsilon(),
        }
    }
}

/// `(space, n, m, ε)`: everything needed to rebuild a family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyDescriptor {
    pub space: Space,
    pub n: usize,
    pub m: usize,
    pub epsilon: f64,
}

impl FamilyDescriptor {
    pub fn build(&self) -> Result<FieldFamily> {
        let config = SeparationConfig::new(self.space, self.n, self.epsilon)?;
        FieldFamily::new(config, self.m)
    }
}
