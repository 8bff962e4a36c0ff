//! Stationary models: linear processes `X_n = Σ a_k ε_{n−k}`, Fourier-diagonal
//! Markov chains (the rotation chain `P = (2I + R_α + R_{−α})/4` with `α = 2e`),
//! their diagonal spectra, and the ρ-mixing bound calculus.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::numerics::{compensated_sum, dyadic_grid, log_weight, power_tail_sum, NeumaierSum};
use crate::spectral::AtomicSpectralMeasure;

/// Per-replication generator: one ChaCha8 key per seed, one stream per rep.
pub fn rep_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

// ---------------------------------------------------------------------------
// Linear processes

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "camelCase")]
pub enum LinearCoeffRule {
    /// `a_i = k^{−9/4}` at `i = 2^k` (`k ≥ 1`), zero elsewhere; lags retained up to `2^kMax`.
    #[serde(rename_all = "camelCase")]
    Lacunary94 { k_max: u32 },
    /// `a_k = ρ^k`, truncated where `ρ^{2(M+1)} ≤ 10⁻¹²`.
    Geometric { rho: f64 },
    UserTable { coeffs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct LinearSpecRepr {
    coeff_rule: LinearCoeffRule,
    innovation_std: f64,
    #[serde(default = "default_true")]
    analytic_tail: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LinearSpecRepr", into = "LinearSpecRepr")]
pub struct LinearProcessSpec {
    pub coeff_rule: LinearCoeffRule,
    pub innovation_std: f64,
    /// Largest retained lag.
    pub truncation_m: u64,
    /// Upper end of the certified bracket for `Σ_{k>M} a_k²`.
    pub tail_l2: f64,
    /// `Σ_{k>M} |a_k|`, the largest possible distortion of `Θ_m/σ`.
    pub tail_l1: f64,
    /// Whether exact quantities include the closed-form tail beyond `M`
    /// (lacunary rule only); simulations always use the retained lags.
    pub analytic_tail: bool,
    lags: Vec<(u64, f64)>,
}

impl TryFrom<LinearSpecRepr> for LinearProcessSpec {
    type Error = LabError;
    fn try_from(r: LinearSpecRepr) -> Result<Self> {
        let mut spec = match r.coeff_rule {
            LinearCoeffRule::Lacunary94 { k_max } => Self::lacunary(k_max, r.innovation_std)?,
            LinearCoeffRule::Geometric { rho } => Self::geometric(rho, r.innovation_std)?,
            LinearCoeffRule::UserTable { coeffs } => Self::user_table(coeffs, r.innovation_std)?,
        };
        if !r.analytic_tail {
            spec = spec.truncated();
        }
        Ok(spec)
    }
}

impl From<LinearProcessSpec> for LinearSpecRepr {
    fn from(s: LinearProcessSpec) -> Self {
        LinearSpecRepr { coeff_rule: s.coeff_rule, innovation_std: s.innovation_std, analytic_tail: s.analytic_tail }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(LabError::Domain(format!("innovation std {sigma} must be positive")))
    }
}

fn ceil_log2(m: u64) -> u32 {
    if m <= 1 {
        0
    } else {
        64 - (m - 1).leading_zeros()
    }
}

impl LinearProcessSpec {
    /// Lacunary process with lags `2^k`, `1 ≤ k ≤ kMax`, `3 ≤ kMax ≤ 62`.
    pub fn lacunary(k_max: u32, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        if !(3..=62).contains(&k_max) {
            return Err(LabError::Range(format!("kMax = {k_max} outside [3, 62]")));
        }
        let lags = (1..=k_max).map(|k| (1u64 << k, (k as f64).powf(-2.25))).collect();
        Ok(Self {
            coeff_rule: LinearCoeffRule::Lacunary94 { k_max },
            innovation_std: sigma,
            truncation_m: 1 << k_max,
            tail_l2: power_tail_sum(4.5, k_max as u64),
            tail_l1: power_tail_sum(2.25, k_max as u64),
            analytic_tail: true,
            lags,
        })
    }

    pub fn geometric(rho: f64, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        if !(rho.abs() < 1.0) {
            return Err(LabError::Domain(format!("|ρ| = {} must be < 1", rho.abs())));
        }
        let m = if rho == 0.0 { 0 } else { ((1e-12f64).ln() / (2.0 * rho.abs().ln())).ceil().max(1.0) as u64 - 1 };
        let lags = (0..=m).map(|k| (k, rho.powi(k as i32))).filter(|(_, a)| *a != 0.0).collect();
        let r2 = rho * rho;
        Ok(Self {
            coeff_rule: LinearCoeffRule::Geometric { rho },
            innovation_std: sigma,
            truncation_m: m,
            tail_l2: r2.powi(m as i32 + 1) / (1.0 - r2),
            tail_l1: rho.abs().powi(m as i32 + 1) / (1.0 - rho.abs()),
            analytic_tail: false,
            lags,
        })
    }

    pub fn user_table(coeffs: Vec<f64>, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        if coeffs.is_empty() || coeffs.iter().any(|a| !a.is_finite()) {
            return Err(LabError::Invalid("coefficient table must be nonempty and finite".into()));
        }
        let lags = coeffs.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(k, a)| (k as u64, *a)).collect();
        Ok(Self {
            truncation_m: coeffs.len() as u64 - 1,
            coeff_rule: LinearCoeffRule::UserTable { coeffs },
            innovation_std: sigma,
            tail_l2: 0.0,
            tail_l1: 0.0,
            analytic_tail: false,
            lags,
        })
    }

    /// `X_t = σ ε_t`.
    pub fn iid(sigma: f64) -> Result<Self> {
        Self::user_table(vec![1.0], sigma)
    }

    /// The finite process as simulated (no closed-form tail).
    pub fn truncated(&self) -> Self {
        Self { analytic_tail: false, ..self.clone() }
    }

    /// Nonzero retained coefficients `(lag, a_lag)`, increasing in lag.
    pub fn lags(&self) -> &[(u64, f64)] {
        &self.lags
    }

    fn tail_k(&self) -> Option<u32> {
        match (&self.coeff_rule, self.analytic_tail) {
            (LinearCoeffRule::Lacunary94 { k_max }, true) => Some(*k_max),
            _ => None,
        }
    }

    pub fn coefficient(&self, i: u64) -> f64 {
        if let Ok(p) = self.lags.binary_search_by_key(&i, |(l, _)| *l) {
            return self.lags[p].1;
        }
        match self.tail_k() {
            Some(k_max) if i.is_power_of_two() && i.trailing_zeros() > k_max => (i.trailing_zeros() as f64).powf(-2.25),
            _ => 0.0,
        }
    }

    /// Lags where the coefficient is nonzero, up to `n` (tail lags included).
    pub fn support_upto(&self, n: u64) -> Vec<u64> {
        let mut v: Vec<u64> = self.lags.iter().map(|(l, _)| *l).filter(|l| *l <= n).collect();
        if let Some(k_max) = self.tail_k() {
            v.extend((k_max + 1..64).map(|k| 1u64 << k).filter(|l| *l <= n));
        }
        v
    }

    pub fn sum_a(&self) -> f64 {
        compensated_sum(self.lags.iter().map(|(_, a)| *a)) + if self.tail_k().is_some() { self.tail_l1 } else { 0.0 }
    }

    pub fn sum_abs(&self) -> f64 {
        compensated_sum(self.lags.iter().map(|(_, a)| a.abs())) + if self.tail_k().is_some() { self.tail_l1 } else { 0.0 }
    }

    pub fn sum_sq(&self) -> f64 {
        compensated_sum(self.lags.iter().map(|(_, a)| a * a)) + if self.tail_k().is_some() { self.tail_l2 } else { 0.0 }
    }

    /// `Var X_t = σ² Σ a_k²`.
    pub fn variance(&self) -> f64 {
        self.innovation_std.powi(2) * self.sum_sq()
    }

    /// `Cov(X_0, X_h) = σ² Σ_k a_k a_{k+h}`.
    pub fn autocov(&self, h: u64) -> f64 {
        if h == 0 {
            return self.variance();
        }
        let s = compensated_sum(self.lags.iter().map(|(l, a)| a * self.coefficient(l + h)));
        self.innovation_std.powi(2) * s
    }

    /// Long-run variance `σ² (Σ a_k)²`.
    pub fn long_run_variance(&self) -> f64 {
        (self.innovation_std * self.sum_a()).powi(2)
    }

    /// `Σ_{i>m} a_i`.
    pub fn coeff_tail(&self, m: u64) -> f64 {
        let start = self.lags.partition_point(|(l, _)| *l <= m);
        let mut s = compensated_sum(self.lags[start..].iter().map(|(_, a)| *a));
        if let Some(k_max) = self.tail_k() {
            // tail lags 2^l, l > kMax, with 2^l > m
            let from = k_max.max(ceil_log2(m + 1).saturating_sub(1));
            s += power_tail_sum(2.25, from as u64);
        }
        s
    }

    fn abs_tail_from(&self, m: u64) -> f64 {
        let start = self.lags.partition_point(|(l, _)| *l < m);
        let mut s = compensated_sum(self.lags[start..].iter().map(|(_, a)| a.abs()));
        if let Some(k_max) = self.tail_k() {
            let from = k_max.max(ceil_log2(m).saturating_sub(1));
            s += power_tail_sum(2.25, from as u64);
        }
        s
    }

    /// `‖E[X_n|F_0]‖² = σ² Σ_{i≥n} a_i²`.
    pub fn cond_xn_sq(&self, n: u64) -> f64 {
        let start = self.lags.partition_point(|(l, _)| *l < n);
        let mut s = compensated_sum(self.lags[start..].iter().map(|(_, a)| a * a));
        if let Some(k_max) = self.tail_k() {
            let from = k_max.max(ceil_log2(n).saturating_sub(1));
            s += power_tail_sum(4.5, from as u64);
        }
        self.innovation_std.powi(2) * s
    }
}

/// `Θ_m = σ Σ_{i≥m} |a_i|`.
pub fn theta_linear(spec: &LinearProcessSpec, m: u64) -> f64 {
    spec.innovation_std * spec.abs_tail_from(m)
}

/// `‖E[S_n|F_0]‖² = σ² Σ_{j≥0} (a_{j+1} + … + a_{j+n})²`, exact: the window
/// sum is piecewise constant in `j` with breaks at `L−n` and `L` for each lag.
/// With the closed-form lacunary tail the horizon is `n ≤ 2^kMax`, where each
/// tail lag contributes its own window of length `n`.
pub fn cond_sn_norm_linear(spec: &LinearProcessSpec, n: u64) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    if spec.tail_k().is_some() && n > spec.truncation_m {
        return Err(LabError::Range(format!("n = {n} beyond the exact horizon {}", spec.truncation_m)));
    }
    let mut events: Vec<(u64, f64)> = Vec::with_capacity(2 * spec.lags.len());
    for &(l, a) in &spec.lags {
        if l == 0 {
            continue;
        }
        events.push((l.saturating_sub(n), a));
        events.push((l, -a));
    }
    events.sort_by(|x, y| x.0.cmp(&y.0));
    let mut acc = NeumaierSum::new();
    let mut window = NeumaierSum::new();
    let mut i = 0;
    while i < events.len() {
        let pos = events[i].0;
        while i < events.len() && events[i].0 == pos {
            window.add(events[i].1);
            i += 1;
        }
        if i < events.len() {
            let w = window.value();
            acc.add((events[i].0 - pos) as f64 * w * w);
        }
    }
    if let Some(k_max) = spec.tail_k() {
        acc.add(n as f64 * power_tail_sum(4.5, k_max as u64));
    }
    Ok(spec.innovation_std.powi(2) * acc.value())
}

/// Running path of a linear process; innovations `ε_{1−M}, …, ε_0` are drawn
/// first, then one per step.
pub struct LinearPath<'a> {
    spec: &'a LinearProcessSpec,
    rng: ChaCha8Rng,
    buf: Vec<f64>,
    mask: u64,
    t: u64,
}

impl<'a> LinearPath<'a> {
    pub fn new(spec: &'a LinearProcessSpec, seed: u64, rep: u64) -> Self {
        let m = spec.truncation_m;
        let size = (m + 1).next_power_of_two();
        let mut rng = rep_rng(seed, rep);
        let mut buf = vec![0.0; size as usize];
        let sigma = spec.innovation_std;
        // ε_{1−M} … ε_0 at slots (t mod size)
        for t in 0..m {
            let idx = (t + size - m + 1) & (size - 1);
            let e: f64 = StandardNormal.sample(&mut rng);
            buf[idx as usize] = sigma * e;
        }
        Self { spec, rng, buf, mask: size - 1, t: 0 }
    }

    /// Advances one step; returns `(X_t, σε_t)`.
    pub fn step(&mut self) -> (f64, f64) {
        self.t += 1;
        let e: f64 = StandardNormal.sample(&mut self.rng);
        let eps = self.spec.innovation_std * e;
        self.buf[(self.t & self.mask) as usize] = eps;
        let mut x = 0.0;
        for &(l, a) in &self.spec.lags {
            x += a * self.buf[((self.t.wrapping_sub(l)) & self.mask) as usize];
        }
        (x, eps)
    }
}

// ---------------------------------------------------------------------------
// Fourier-diagonal chains

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CoeffRule {
    /// `c_{l!} = l^{−3/2} (log l)^{−2}`.
    FactorialIndex,
    /// `c_{l!} = (l!)^{−3/2} (log l!)^{−2}`.
    LiteralFrequency,
}

impl CoeffRule {
    /// `c_{l!}` for real `l ≥ 3`.
    pub fn coefficient(&self, l: f64) -> f64 {
        match self {
            CoeffRule::FactorialIndex => l.powf(-1.5) / l.ln().powi(2),
            CoeffRule::LiteralFrequency => {
                let lf = statrs::function::gamma::ln_gamma(l + 1.0);
                (-1.5 * lf).exp() / (lf * lf)
            }
        }
    }
}

/// `l!·e = I_l + r_l` with `I_l = Σ_{m≤l} l!/m!`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FactorialRemainder {
    pub l: u32,
    pub integer_part: u64,
    pub remainder: f64,
}

/// `r_l = Σ_{j≥1} Π_{i=1}^{j} 1/(l+i)`, nested from the inside; valid for real `l ≥ 1`.
pub fn factorial_remainder(l: f64) -> f64 {
    let mut r = 0.0;
    for j in (1..=30).rev() {
        r = (1.0 + r) / (l + j as f64);
    }
    r
}

pub fn factorial_integer_part(l: u32) -> u64 {
    // I_l = Σ_{m=0}^{l} l!/m!, accumulated as 1 + l + l(l−1) + …
    let mut term: u64 = 1;
    let mut sum: u64 = 1;
    for k in (1..=l as u64).rev() {
        term *= k;
        sum += term;
    }
    sum
}

fn factorial(l: u32) -> u64 {
    (1..=l as u64).product()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Start {
    Fixed { x0: f64 },
    Stationary,
}

/// `x ∈ [0,1)` as the nearest `k/2^64`.
pub fn to_fraction(x: f64) -> u64 {
    let y = x.rem_euclid(1.0) * 18_446_744_073_709_551_616.0;
    if y >= 18_446_744_073_709_551_615.0 {
        u64::MAX
    } else {
        y.round() as u64
    }
}

/// `frac(m·k/2^64)` exactly, in turns.
pub fn frac_product(m: u64, k: u64) -> f64 {
    let p = (m as u128 * k as u128) as u64;
    p as f64 / 18_446_744_073_709_551_616.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FourierDiagonalModel {
    /// Positive frequencies `m`; `f(x) = Σ 2c_m cos(2πmx)`.
    pub frequencies: Vec<u64>,
    pub coeffs: Vec<f64>,
    /// Phase advanced by one rotation on frequency `m`, `frac(m·α)` in turns.
    pub phase_steps: Vec<f64>,
    /// `λ_m = cos²(π·phase_m)`.
    pub eigenvalues: Vec<f64>,
    /// `1 − λ_m = sin²(π·phase_m)`.
    pub one_minus_eigenvalues: Vec<f64>,
    pub alpha_turns: Option<f64>,
    pub exact_freq_data: Vec<FactorialRemainder>,
    pub coeff_rule: Option<CoeffRule>,
}

impl FourierDiagonalModel {
    /// Generic model for the walk `x ↦ x + sα` with per-frequency phases.
    pub fn from_phases(frequencies: Vec<u64>, coeffs: Vec<f64>, phase_steps: Vec<f64>) -> Result<Self> {
        if frequencies.len() != coeffs.len() || coeffs.len() != phase_steps.len() {
            return Err(LabError::Invalid("frequency, coefficient and phase lengths differ".into()));
        }
        let mut sorted = frequencies.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != frequencies.len() || sorted.first() == Some(&0) {
            return Err(LabError::Invalid("frequencies must be distinct and positive".into()));
        }
        if coeffs.iter().chain(&phase_steps).any(|v| !v.is_finite()) {
            return Err(LabError::Invalid("non-finite coefficient or phase".into()));
        }
        let phase_steps: Vec<f64> = phase_steps.iter().map(|p| p.rem_euclid(1.0)).collect();
        let (eigenvalues, one_minus_eigenvalues) = phase_steps
            .iter()
            .map(|p| {
                let a = std::f64::consts::PI * p;
                (a.cos().powi(2), a.sin().powi(2))
            })
            .unzip();
        Ok(Self {
            frequencies,
            coeffs,
            phase_steps,
            eigenvalues,
            one_minus_eigenvalues,
            alpha_turns: None,
            exact_freq_data: Vec::new(),
            coeff_rule: None,
        })
    }

    /// Rotation chain with `α = 2e` on frequencies `l!`, `3 ≤ l ≤ lMax ≤ 12`.
    /// Phases come from `l!·2e = 2I_l + 2r_l`, never from multiplying `l!` by `e`.
    pub fn rotation(l_max: u32, rule: CoeffRule) -> Result<Self> {
        if !(3..=12).contains(&l_max) {
            return Err(LabError::Range(format!("lMax = {l_max} outside [3, 12]")));
        }
        let ls: Vec<u32> = (3..=l_max).collect();
        let exact: Vec<FactorialRemainder> = ls
            .iter()
            .map(|&l| FactorialRemainder {
                l,
                integer_part: factorial_integer_part(l),
                remainder: factorial_remainder(l as f64),
            })
            .collect();
        let freqs = ls.iter().map(|&l| factorial(l)).collect();
        let coeffs = ls.iter().map(|&l| rule.coefficient(l as f64)).collect();
        // r_l < 1/2, so frac(2r_l) = 2r_l
        let phases = exact.iter().map(|e| 2.0 * e.remainder).collect();
        let mut m = Self::from_phases(freqs, coeffs, phases)?;
        m.alpha_turns = Some(2.0 * std::f64::consts::E - 5.0);
        m.exact_freq_data = exact;
        m.coeff_rule = Some(rule);
        Ok(m)
    }

    /// `f ≡ 0`.
    pub fn zero() -> Self {
        Self::from_phases(vec![], vec![], vec![]).expect("empty model")
    }

    pub fn spectrum(&self) -> DiagonalSpectrum {
        DiagonalSpectrum::new(
            self.coeffs
                .iter()
                .zip(&self.eigenvalues)
                .zip(&self.one_minus_eigenvalues)
                .map(|((c, l), e)| SpectralLine::new(2.0 * c * c, *l, *e))
                .collect(),
        )
    }

    /// `f(x)` at `x = k/2^64`.
    pub fn eval_fraction(&self, k: u64) -> f64 {
        self.frequencies
            .iter()
            .zip(&self.coeffs)
            .map(|(m, c)| 2.0 * c * (std::f64::consts::TAU * frac_product(*m, k)).cos())
            .sum()
    }

    /// `f(x + sα)` at `x = k/2^64`, phases reduced per frequency.
    pub fn eval_after_steps(&self, k: u64, s: i64) -> f64 {
        (0..self.frequencies.len())
            .map(|i| {
                let ph = frac_product(self.frequencies[i], k) + (s as f64 * self.phase_steps[i]).rem_euclid(1.0);
                2.0 * self.coeffs[i] * (std::f64::consts::TAU * ph).cos()
            })
            .sum()
    }

    /// `(‖Pⁿf‖², ‖Σ_{k≤n} P^k f‖²)`.
    pub fn p_power_norms(&self, n: u64) -> (f64, f64) {
        let s = self.spectrum();
        (s.p_norm_sq(n as f64), s.un_norm_sq(n as f64))
    }
}

/// Tabulated `cos/sin(2π s ρ_m)` for `|s| ≤ half_width`.
pub struct PhaseTable {
    half_width: i64,
    cos: Vec<Vec<f64>>,
    sin: Vec<Vec<f64>>,
    steps: Vec<f64>,
}

impl PhaseTable {
    pub fn new(model: &FourierDiagonalModel, half_width: i64) -> Self {
        let mut cos = Vec::new();
        let mut sin = Vec::new();
        for &rho in &model.phase_steps {
            let (c, s): (Vec<f64>, Vec<f64>) = (-half_width..=half_width)
                .map(|s| crate::numerics::cis_turns((s as f64 * rho).rem_euclid(1.0)))
                .unzip();
            cos.push(c);
            sin.push(s);
        }
        Self { half_width, cos, sin, steps: model.phase_steps.clone() }
    }

    #[inline]
    pub fn cis(&self, channel: usize, s: i64) -> (f64, f64) {
        if s.abs() <= self.half_width {
            let i = (s + self.half_width) as usize;
            (self.cos[channel][i], self.sin[channel][i])
        } else {
            crate::numerics::cis_turns((s as f64 * self.steps[channel]).rem_euclid(1.0))
        }
    }
}

pub const PHASE_TABLE_HALF_WIDTH: i64 = 8192;

/// Running path of the rotation walk `W_k = x_0 + (Σ s_i)α`; stores the signed
/// step count, never a reduced position.
pub struct RotationPath<'a> {
    model: &'a FourierDiagonalModel,
    table: &'a PhaseTable,
    rng: ChaCha8Rng,
    bits: u64,
    nbits: u32,
    pub steps: i64,
    pub start: u64,
    cos_phi: Vec<f64>,
    sin_phi: Vec<f64>,
}

impl<'a> RotationPath<'a> {
    pub fn new(model: &'a FourierDiagonalModel, table: &'a PhaseTable, start: Start, seed: u64, rep: u64) -> Self {
        let mut rng = rep_rng(seed, rep);
        let k = match start {
            Start::Fixed { x0 } => to_fraction(x0),
            Start::Stationary => rng.next_u64(),
        };
        let (cos_phi, sin_phi) = model
            .frequencies
            .iter()
            .map(|m| crate::numerics::cis_turns(frac_product(*m, k)))
            .unzip();
        Self { model, table, rng, bits: 0, nbits: 0, steps: 0, start: k, cos_phi, sin_phi }
    }

    pub fn start_turns(&self) -> f64 {
        self.start as f64 / 18_446_744_073_709_551_616.0
    }

    /// Draws one step: 0 → −1, 1 → +1, 2|3 → 0.
    pub fn step(&mut self) -> i64 {
        if self.nbits == 0 {
            self.bits = self.rng.next_u64();
            self.nbits = 32;
        }
        let b = self.bits & 3;
        self.bits >>= 2;
        self.nbits -= 1;
        let s = match b {
            0 => -1,
            1 => 1,
            _ => 0,
        };
        self.steps += s;
        s
    }

    /// `cos(2π m W)` per frequency at step count `s`.
    pub fn channels(&self, s: i64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let (c, sn) = self.table.cis(i, s);
            *o = self.cos_phi[i] * c - self.sin_phi[i] * sn;
        }
    }

    pub fn value(&self, s: i64) -> f64 {
        let mut v = 0.0;
        for i in 0..self.model.coeffs.len() {
            let (c, sn) = self.table.cis(i, s);
            v += 2.0 * self.model.coeffs[i] * (self.cos_phi[i] * c - self.sin_phi[i] * sn);
        }
        v
    }
}

// ---------------------------------------------------------------------------
// Trajectory batches

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum BatchSource {
    Linear { spec: LinearProcessSpec },
    Rotation { model: FourierDiagonalModel, start: Start },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrajectoryBatch {
    pub source: BatchSource,
    pub seed: u64,
    pub reps: u64,
    pub n: u64,
    /// Evaluation points (dyadic plus `n`).
    pub grid: Vec<u64>,
    /// `sums[rep][i] = S_{grid[i]}`.
    pub sums: Vec<Vec<f64>>,
    /// Starting point of each rep in turns (rotation chains).
    pub starts: Vec<f64>,
}

impl TrajectoryBatch {
    /// `S_n` over reps at the final time.
    pub fn final_sums(&self) -> Vec<f64> {
        self.sums.iter().map(|r| *r.last().expect("nonempty grid")).collect()
    }

    /// `S_{grid[i]}` over reps.
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.sums.iter().map(|r| r[i]).collect()
    }
}

pub fn default_grid(n: u64) -> Vec<u64> {
    dyadic_grid(0, 63 - n.leading_zeros(), Some(n))
}

fn check_n(n: u64, reps: u64) -> Result<()> {
    if n == 0 || reps == 0 {
        return Err(LabError::Invalid("n and reps must be ≥ 1".into()));
    }
    Ok(())
}

pub fn simulate_linear(spec: &LinearProcessSpec, n: u64, seed: u64, reps: u64) -> Result<TrajectoryBatch> {
    check_n(n, reps)?;
    let grid = default_grid(n);
    let sums = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut path = LinearPath::new(spec, seed, rep);
            let mut out = Vec::with_capacity(grid.len());
            let mut s = 0.0;
            let mut gi = 0;
            for t in 1..=n {
                s += path.step().0;
                if grid[gi] == t {
                    out.push(s);
                    gi += 1;
                }
            }
            out
        })
        .collect();
    Ok(TrajectoryBatch {
        source: BatchSource::Linear { spec: spec.clone() },
        seed,
        reps,
        n,
        grid,
        sums,
        starts: Vec::new(),
    })
}

pub fn simulate_rotation_chain(
    model: &FourierDiagonalModel,
    n: u64,
    start: Start,
    seed: u64,
    reps: u64,
) -> Result<TrajectoryBatch> {
    check_n(n, reps)?;
    let grid = default_grid(n);
    let table = PhaseTable::new(model, PHASE_TABLE_HALF_WIDTH);
    let rows: Vec<(f64, Vec<f64>)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut path = RotationPath::new(model, &table, start, seed, rep);
            let mut out = Vec::with_capacity(grid.len());
            let mut s = 0.0;
            let mut gi = 0;
            for t in 1..=n {
                path.step();
                s += path.value(path.steps);
                if grid[gi] == t {
                    out.push(s);
                    gi += 1;
                }
            }
            (path.start_turns(), out)
        })
        .collect();
    let (starts, sums) = rows.into_iter().unzip();
    Ok(TrajectoryBatch {
        source: BatchSource::Rotation { model: model.clone(), start },
        seed,
        reps,
        n,
        grid,
        sums,
        starts,
    })
}

// ---------------------------------------------------------------------------
// Diagonal spectra

/// A spectral line: mass `weight` at the real eigenvalue `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpectralLine {
    pub weight: f64,
    pub lambda: f64,
    /// `1 − λ`, supplied without cancellation.
    pub one_minus: f64,
    /// `1 − |λ|`.
    pub gap: f64,
}

impl SpectralLine {
    pub fn new(weight: f64, lambda: f64, one_minus: f64) -> Self {
        let gap = if lambda >= 0.0 { one_minus } else { 1.0 + lambda };
        Self { weight, lambda, one_minus, gap }
    }

    /// `λ^k` (`k` integral when `λ < 0`).
    #[inline]
    pub fn pow(&self, k: f64) -> f64 {
        if self.lambda > 0.5 {
            (k * (-self.one_minus).ln_1p()).exp()
        } else {
            self.lambda.powf(k)
        }
    }

    /// `g_n(λ) = Σ_{k=1}^n λ^k`.
    #[inline]
    pub fn g(&self, n: f64) -> f64 {
        if self.one_minus == 0.0 {
            return n;
        }
        if self.lambda > 0.5 {
            -self.lambda * (n * (-self.one_minus).ln_1p()).exp_m1() / self.one_minus
        } else {
            self.lambda * (1.0 - self.lambda.powf(n)) / self.one_minus
        }
    }
}

/// Spectrum of `f` under a self-adjoint diagonal operator, lines sorted by
/// decreasing gap `1 − |λ|`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalSpectrum {
    lines: Vec<SpectralLine>,
    /// `Σ_{j≥i} w_j`.
    suffix_w: Vec<f64>,
    /// `Σ_{j≥i} w_j (1 − λ_j²)`.
    suffix_dec: Vec<f64>,
    /// `Σ_{j<i} w_j (λ_j/(1−λ_j))²`.
    prefix_g: Vec<f64>,
    /// Lines from here on all have `λ > 1/2`.
    positive_from: usize,
}

const UNDERFLOW_EXPONENT: f64 = 800.0;
const FLAT_EXPONENT: f64 = 1e-18;

impl DiagonalSpectrum {
    pub fn new(mut lines: Vec<SpectralLine>) -> Self {
        lines.retain(|l| l.weight > 0.0);
        lines.sort_by(|a, b| b.gap.partial_cmp(&a.gap).expect("finite gaps"));
        let n = lines.len();
        let mut suffix_w = vec![0.0; n + 1];
        let mut suffix_dec = vec![0.0; n + 1];
        for i in (0..n).rev() {
            let l = &lines[i];
            suffix_w[i] = suffix_w[i + 1] + l.weight;
            suffix_dec[i] = suffix_dec[i + 1] + l.weight * l.one_minus * (1.0 + l.lambda);
        }
        let mut prefix_g = vec![0.0; n + 1];
        for i in 0..n {
            let l = &lines[i];
            let g = if l.one_minus > 0.0 { l.lambda / l.one_minus } else { f64::INFINITY };
            prefix_g[i + 1] = prefix_g[i] + l.weight * g * g;
        }
        let positive_from = n - lines.iter().rev().take_while(|l| l.lambda > 0.5).count();
        Self { lines, suffix_w, suffix_dec, prefix_g, positive_from }
    }

    pub fn lines(&self) -> &[SpectralLine] {
        &self.lines
    }

    pub fn total_mass(&self) -> f64 {
        self.suffix_w[0]
    }

    pub fn has_negative(&self) -> bool {
        self.lines.iter().any(|l| l.lambda < 0.0)
    }

    /// Index range of lines that need explicit evaluation at exponent `k`:
    /// earlier lines have `|λ|^k` below underflow, later ones have `λ^k = 1`
    /// to double precision.
    fn window(&self, k: f64) -> (usize, usize) {
        let lo = self.lines.partition_point(|l| k * l.gap > UNDERFLOW_EXPONENT);
        let hi = self.positive_from.max(lo)
            + self.lines[self.positive_from.max(lo)..].partition_point(|l| k * l.gap >= FLAT_EXPONENT);
        (lo, hi)
    }

    /// `‖P^k f‖² = Σ w λ^{2k}`.
    pub fn p_norm_sq(&self, k: f64) -> f64 {
        let (lo, hi) = self.window(2.0 * k);
        let mut acc = NeumaierSum::new();
        for l in &self.lines[lo..hi] {
            acc.add(l.weight * l.pow(2.0 * k));
        }
        acc.add(self.suffix_w[hi]);
        acc.value()
    }

    /// `‖P^{k−1}f‖² − ‖P^k f‖² = Σ w λ^{2k−2}(1 − λ²)`, `k ≥ 1`.
    pub fn decrement(&self, k: f64) -> f64 {
        let e = 2.0 * k - 2.0;
        let (lo, hi) = self.window(e.max(1.0));
        let mut acc = NeumaierSum::new();
        for l in &self.lines[lo..hi] {
            acc.add(l.weight * l.pow(e) * l.one_minus * (1.0 + l.lambda));
        }
        acc.add(self.suffix_dec[hi]);
        acc.value()
    }

    /// `‖U_n‖² = ‖Σ_{k=1}^n P^k f‖² = Σ w g_n(λ)²`.
    pub fn un_norm_sq(&self, n: f64) -> f64 {
        // lines with n·gap > 45 have g_n = λ/(1−λ) to double precision
        let lo = self.lines.partition_point(|l| n * l.gap > 45.0);
        let (_, hi) = self.window(n);
        let hi = hi.max(lo);
        let mut acc = NeumaierSum::new();
        acc.add(self.prefix_g[lo]);
        for l in &self.lines[lo..hi] {
            let g = l.g(n);
            acc.add(l.weight * g * g);
        }
        acc.add(n * n * self.suffix_w[hi]);
        acc.value()
    }

    /// Tabulates `T(n) = Σ_{k≥n} √d_k` with `d_k` the [`decrement`](Self::decrement):
    /// exact below `k = 1024`, beyond that the midpoint-rule integral of
    /// `√d(x)` accumulated on a grid of step 0.01 in `ln x` up to `x = 10³⁰⁰`.
    pub fn root_decrement_tail(&self) -> RootTail {
        const K: usize = 1024;
        let mut exact = vec![0.0; K + 1];
        let roots: Vec<f64> = (1..K).map(|k| self.decrement(k as f64).max(0.0).sqrt()).collect();
        let v0 = (K as f64 - 0.5).ln();
        let dv = 0.01;
        let v_end = 300.0 * std::f64::consts::LN_10;
        let mut integrand = Vec::new();
        let mut v = v0;
        while v <= v_end {
            let x = v.exp();
            let g = self.decrement(x).max(0.0).sqrt() * x;
            integrand.push(g);
            if g == 0.0 {
                break;
            }
            v += dv;
        }
        let mut tail = vec![0.0; integrand.len()];
        for i in (0..integrand.len().saturating_sub(1)).rev() {
            tail[i] = tail[i + 1] + 0.5 * dv * (integrand[i] + integrand[i + 1]);
        }
        let head = tail.first().copied().unwrap_or(0.0);
        exact[K] = head;
        for k in (1..K).rev() {
            exact[k] = exact[k + 1] + roots[k - 1];
        }
        RootTail { exact, v0, dv, tail }
    }

    /// `σ² = Σ w (1+λ)/(1−λ)`.
    pub fn sigma_sq(&self) -> Result<f64> {
        if self.lines.iter().any(|l| l.one_minus == 0.0) {
            return Err(LabError::Degenerate("eigenvalue 1 carries mass".into()));
        }
        Ok(compensated_sum(self.lines.iter().map(|l| l.weight * (1.0 + l.lambda) / l.one_minus)))
    }

    /// The spectral measure as atoms on `[−1, 1]`.
    pub fn to_measure(&self) -> Result<AtomicSpectralMeasure> {
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        for l in &self.lines {
            let (r, theta) = if l.lambda >= 0.0 { (l.lambda, 0.0) } else { (-l.lambda, -0.5) };
            if let Some(row) = rows.iter_mut().find(|x| x.0 == r && x.1 == theta) {
                row.2 += l.weight;
            } else {
                rows.push((r, theta, l.weight));
            }
        }
        AtomicSpectralMeasure::from_rows(&rows)
    }
}

/// Tabulated `T(n) = Σ_{k≥n} √(‖P^{k−1}f‖² − ‖P^k f‖²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RootTail {
    exact: Vec<f64>,
    v0: f64,
    dv: f64,
    tail: Vec<f64>,
}

impl RootTail {
    /// `T(n)` for `n ≥ 1` (real `n` beyond the exact range).
    pub fn at(&self, n: f64) -> f64 {
        let k = self.exact.len() - 1;
        if n < k as f64 {
            return self.exact[(n.ceil() as usize).max(1)];
        }
        let pos = ((n - 0.5).ln() - self.v0) / self.dv;
        let i = pos.floor() as usize;
        if i + 1 >= self.tail.len() {
            return 0.0;
        }
        let frac = pos - i as f64;
        let (a, b) = (self.tail[i], self.tail[i + 1]);
        if a > 0.0 && b > 0.0 {
            // the tail decays roughly geometrically in ln x
            (a.ln() * (1.0 - frac) + b.ln() * frac).exp()
        } else {
            a * (1.0 - frac) + b * frac
        }
    }
}

/// Spectrum of the rotation-chain function for all `l ≥ 3`: exact lines for
/// `l ≤ l_exact`, then Simpson nodes in `u = ln l` (step about `h`) up to
/// `u_max`, each node carrying the mass of the neighbouring frequencies.
pub fn rotation_spectrum(rule: CoeffRule, l_exact: u32, u_max: f64, h: f64) -> Result<DiagonalSpectrum> {
    if l_exact < 3 || !(h > 0.0) || u_max <= ((l_exact as f64) + 0.5).ln() || u_max > 350.0 {
        return Err(LabError::Invalid("rotation spectrum needs l_exact ≥ 3, h > 0, ln l_exact < u_max ≤ 350".into()));
    }
    let line_at = |l: f64, w: f64| {
        let r = factorial_remainder(l);
        let a = std::f64::consts::TAU * r;
        SpectralLine::new(w, a.cos().powi(2), a.sin().powi(2))
    };
    let mut lines: Vec<SpectralLine> = (3..=l_exact)
        .map(|l| {
            let c = rule.coefficient(l as f64);
            line_at(l as f64, 2.0 * c * c)
        })
        .collect();
    let u0 = ((l_exact as f64) + 0.5).ln();
    let mut intervals = ((u_max - u0) / h).ceil() as usize;
    intervals += intervals % 2;
    let step = (u_max - u0) / intervals as f64;
    for i in 0..=intervals {
        let u = u0 + i as f64 * step;
        let simpson = if i == 0 || i == intervals {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let l = u.exp();
        let c = rule.coefficient(l);
        let w = 2.0 * c * c * l * simpson * step / 3.0;
        if w > 0.0 {
            lines.push(line_at(l, w));
        }
    }
    Ok(DiagonalSpectrum::new(lines))
}

/// The default large-`l` rotation spectrum (exact to `l = 2048`, nodes to `l = e^{345}`).
pub fn rotation_spectrum_default(rule: CoeffRule) -> DiagonalSpectrum {
    rotation_spectrum(rule, 2048, 345.0, 0.05).expect("valid defaults")
}

// ---------------------------------------------------------------------------
// ρ-mixing bound calculus

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decay", rename_all = "camelCase")]
pub enum RhoDecay {
    Zero,
    One,
    /// `ρ(n) = 1/((log n)^a (log log n)^τ)` with clamped logs.
    LogPow { a: f64, tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RhoMixingSpec {
    pub decay: RhoDecay,
    pub constant_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RhoBound {
    pub n: u64,
    /// Majorant of `‖E[S_n|F_0]‖₂`.
    pub bound: f64,
    /// `bound · (log n)² (log log n)^τ / √n`.
    pub normalized: f64,
}

impl RhoMixingSpec {
    pub fn new(decay: RhoDecay, constant_c: f64) -> Result<Self> {
        if let RhoDecay::LogPow { a, tau } = decay {
            if a < 0.0 || tau < 0.0 {
                return Err(LabError::Domain("ρ must be nonincreasing: a, τ ≥ 0".into()));
            }
        }
        if !(constant_c >= 0.0) {
            return Err(LabError::Domain("constant C must be ≥ 0".into()));
        }
        Ok(Self { decay, constant_c })
    }

    pub fn rho(&self, n: f64) -> f64 {
        match self.decay {
            RhoDecay::Zero => 0.0,
            RhoDecay::One => 1.0,
            RhoDecay::LogPow { a, tau } => (1.0 / log_weight(n, a, tau)).min(1.0),
        }
    }

    fn tau(&self) -> f64 {
        match self.decay {
            RhoDecay::LogPow { tau, .. } => tau,
            _ => 0.0,
        }
    }

    /// `C Σ_{j=0}^{l−1} 2^{j/2} ρ(2^j)`, the bound for `‖E[S_{2^l}|F_0]‖₂` (`l ≥ 1`;
    /// `l = 0` uses the `j = 0` term).
    pub fn dyadic_block_bound(&self, l: u32) -> f64 {
        let top = l.max(1);
        self.constant_c * compensated_sum((0..top).map(|j| 2f64.powf(j as f64 / 2.0) * self.rho(2f64.powi(j as i32))))
    }
}

/// Majorant of `‖E[S_n|F_0]‖₂` chained over the binary digits of `n`:
/// `Σ_{l: bit l of n} ‖E[S_{2^l}|F_0]‖₂`.
pub fn rho_dyadic_bound(spec: &RhoMixingSpec, n: u64) -> Result<RhoBound> {
    if n < 2 {
        return Err(LabError::Invalid("n must be ≥ 2".into()));
    }
    let bound = compensated_sum((0..64).filter(|l| n >> l & 1 == 1).map(|l| spec.dyadic_block_bound(l)));
    let nf = n as f64;
    Ok(RhoBound { n, bound, normalized: bound * log_weight(nf, 2.0, spec.tau()) / nf.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lacunary_coefficients() {
        let s = LinearProcessSpec::lacunary(10, 1.0).unwrap();
        assert_eq!(s.coefficient(2), 1.0);
        assert_eq!(s.coefficient(4), 2f64.powf(-2.25));
        assert_eq!(s.coefficient(3), 0.0);
        assert_eq!(s.lags().len(), 10);
        assert_eq!(s.coefficient(1 << 11), 11f64.powf(-2.25));
        assert_eq!(s.truncated().coefficient(1 << 11), 0.0);
        assert!(LinearProcessSpec::lacunary(2, 1.0).is_err());
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(1024), 10);
        assert_eq!(ceil_log2(1025), 11);
    }

    #[test]
    fn integer_parts() {
        assert_eq!(factorial_integer_part(3), 16);
        assert_eq!(factorial_integer_part(4), 65);
        assert_eq!(factorial(12), 479_001_600);
    }

    #[test]
    fn fractions_exact() {
        assert_eq!(to_fraction(0.5), 1 << 63);
        assert_eq!(frac_product(6, to_fraction(0.5)), 0.0);
        assert_eq!(frac_product(3, to_fraction(0.25)), 0.75);
    }

    #[test]
    fn rho_geometric_case() {
        let one = RhoMixingSpec::new(RhoDecay::One, 2.0).unwrap();
        let r = 9;
        let b = rho_dyadic_bound(&one, 1 << (r + 1)).unwrap();
        let want = 2.0 * (2f64.powf((r + 1) as f64 / 2.0) - 1.0) / (2f64.sqrt() - 1.0);
        assert!((b.bound - want).abs() < 1e-12 * want);
        let zero = RhoMixingSpec::new(RhoDecay::Zero, 2.0).unwrap();
        assert_eq!(rho_dyadic_bound(&zero, 1000).unwrap().bound, 0.0);
    }
}
