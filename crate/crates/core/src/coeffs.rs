//! Coefficient sequences built from slowly varying functions, and the
//! boundary asymptotics of the associated power series.
//!
//! The kernel is `γ_n = (c/n) Σ_{k≥n} 1/√(k³ b(k))` normalized to a probability
//! distribution on `n ≥ 1`; `B(z) = Σ γ_n zⁿ`, `A = 1/(1−B) = Σ α_n zⁿ`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{E, PI};

use crate::error::{LabError, Result};
use crate::numerics::{integrate_to_infinity, NeumaierSum, Polar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "camelCase")]
pub enum BFamily {
    Constant,
    /// `(log x)^alpha`
    LogPow { alpha: f64 },
    /// `(log x)^alpha (log log x)^beta`
    LogLogPow { alpha: f64, beta: f64 },
    /// `1/((log x)^alpha (log log x)^beta)`
    ReciprocalLogPow { alpha: f64, beta: f64 },
}

/// A slowly varying function `b` from one of the supported families, defined
/// for `x ≥ x0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlowlyVaryingSpec {
    pub family: BFamily,
    pub x0: f64,
}

impl SlowlyVaryingSpec {
    pub fn constant() -> Self {
        Self { family: BFamily::Constant, x0: 1.0 }
    }

    pub fn log_pow(alpha: f64) -> Self {
        Self { family: BFamily::LogPow { alpha }, x0: E }
    }

    pub fn log_log_pow(alpha: f64, beta: f64) -> Self {
        let x0 = if beta == 0.0 { E } else { E.exp() };
        Self { family: BFamily::LogLogPow { alpha, beta }, x0 }
    }

    pub fn reciprocal_log_pow(alpha: f64, beta: f64) -> Self {
        let x0 = if beta == 0.0 { E } else { E.exp() };
        Self { family: BFamily::ReciprocalLogPow { alpha, beta }, x0 }
    }

    pub fn with_x0(mut self, x0: f64) -> Result<Self> {
        if !(x0 >= self.default_x0()) {
            return Err(LabError::Domain(format!(
                "x0 = {x0} below the natural domain start {}",
                self.default_x0()
            )));
        }
        self.x0 = x0;
        Ok(self)
    }

    fn default_x0(&self) -> f64 {
        match self.family {
            BFamily::Constant => 1.0,
            BFamily::LogPow { .. } => E,
            BFamily::LogLogPow { beta, .. } | BFamily::ReciprocalLogPow { beta, .. } => {
                if beta == 0.0 {
                    E
                } else {
                    E.exp()
                }
            }
        }
    }

    fn raw(&self, x: f64) -> f64 {
        match self.family {
            BFamily::Constant => 1.0,
            BFamily::LogPow { alpha } => x.ln().powf(alpha),
            BFamily::LogLogPow { alpha, beta } => {
                let l = x.ln();
                l.powf(alpha) * if beta == 0.0 { 1.0 } else { l.ln().powf(beta) }
            }
            BFamily::ReciprocalLogPow { alpha, beta } => {
                let l = x.ln();
                1.0 / (l.powf(alpha) * if beta == 0.0 { 1.0 } else { l.ln().powf(beta) })
            }
        }
    }

    /// `b(x)` for `x ≥ x0`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x >= self.x0) {
            return Err(LabError::Domain(format!("b({x}) undefined below x0 = {}", self.x0)));
        }
        Ok(self.raw(x))
    }

    /// `b(max(x, x0))`.
    pub fn eval_clamped(&self, x: f64) -> f64 {
        self.raw(x.max(self.x0))
    }

    /// Smallest point of a geometric sample grid on `[x0, 1e300]` beyond which
    /// `x^δ b(x)` is nondecreasing and `x^{−δ} b(x)` nonincreasing on every
    /// sampled pair. Returns `None` if the last sampled pair violates either.
    pub fn slow_variation_threshold(&self, delta: f64) -> Option<f64> {
        let mut grid = Vec::new();
        let mut u = self.x0.ln().max(1e-3);
        while u < 690.0 {
            grid.push(u);
            u *= 1.05;
        }
        let ok = |i: usize| {
            let (u0, u1) = (grid[i], grid[i + 1]);
            let (b0, b1) = (self.raw(u0.exp()).ln(), self.raw(u1.exp()).ln());
            (delta * u1 + b1 >= delta * u0 + b0) && (-delta * u1 + b1 <= -delta * u0 + b0)
        };
        let mut threshold = None;
        for i in (0..grid.len() - 1).rev() {
            if ok(i) {
                threshold = Some(grid[i].exp());
            } else {
                break;
            }
        }
        threshold
    }
}

/// `b*(n) = Σ_{k=1}^n 1/(k·b(max(k, x0)))`.
pub fn b_star(spec: &SlowlyVaryingSpec, n: u64) -> f64 {
    let mut acc = NeumaierSum::new();
    for k in 1..=n {
        let kf = k as f64;
        acc.add(1.0 / (kf * spec.eval_clamped(kf)));
    }
    acc.value()
}

/// Whether the sampled product `b(n)·b*(n)` increases along the dyadic grid
/// `n = 2^j ≤ n_max`. Does not certify divergence.
pub fn b_bstar_increasing(spec: &SlowlyVaryingSpec, n_max: u64) -> bool {
    let mut prev = f64::NEG_INFINITY;
    let mut acc = NeumaierSum::new();
    let mut k = 1u64;
    let mut next = 2u64;
    while next <= n_max {
        while k <= next {
            let kf = k as f64;
            acc.add(1.0 / (kf * spec.eval_clamped(kf)));
            k += 1;
        }
        let prod = spec.eval_clamped(next as f64) * acc.value();
        if prod <= prev {
            return false;
        }
        prev = prod;
        next *= 2;
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum SeqKind {
    Gamma,
    Alpha,
    Delta,
    ZygmundBeta { beta: f64 },
}

/// Finite prefix of a coefficient sequence with prefix sums and a tail bound.
///
/// `tail_bound` meaning by kind: gamma — certified bound on `Σ_{n>N} γ_n` plus
/// the normalizer uncertainty; delta — `Σ_{n>N} |δ_n|` (exact); alpha and
/// zygmund — bound on the omitted coefficients' magnitudes. Use
/// [`CoefficientSeq::series_tail_bound`] for the tail of `Σ values[n] zⁿ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSeq {
    pub kind: SeqKind,
    pub values: Vec<f64>,
    pub prefix_sums: Vec<f64>,
    pub tail_bound: f64,
    pub spec: Option<SlowlyVaryingSpec>,
    /// The normalizer `c` for gamma sequences.
    pub normalizer: Option<f64>,
    /// Best estimate of `Σ_{n>N} γ_n` for gamma sequences.
    pub tail_estimate: Option<f64>,
}

fn prefix_sums(values: &[f64]) -> Vec<f64> {
    let mut acc = NeumaierSum::new();
    values
        .iter()
        .map(|v| {
            acc.add(*v);
            acc.value()
        })
        .collect()
}

impl CoefficientSeq {
    /// Largest index held.
    pub fn n_max(&self) -> usize {
        self.values.len() - 1
    }

    /// Certified bound on `|Σ_{n>N} values[n] zⁿ|` for `|z| ≤ 1`.
    pub fn series_tail_bound(&self, z: Polar) -> f64 {
        let n = self.n_max();
        let last = self.values[n].abs();
        let r = z.r;
        let geometric = |coef: f64| {
            if r < 1.0 {
                coef * r.powf(n as f64 + 1.0) / (1.0 - r)
            } else {
                f64::INFINITY
            }
        };
        let abel = |coef: f64| {
            if z.is_one() {
                f64::INFINITY
            } else {
                2.0 * coef / z.one_minus().norm()
            }
        };
        match self.kind {
            SeqKind::Gamma => self.tail_bound.min(geometric(last)).min(abel(last)),
            SeqKind::Alpha => geometric(self.tail_bound),
            SeqKind::Delta => self.tail_bound * r.powf(n as f64 + 1.0),
            SeqKind::ZygmundBeta { .. } => geometric(last).min(abel(last)),
        }
    }

    /// Rows `(n, value, prefixSum)`.
    pub fn rows(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.values
            .iter()
            .zip(&self.prefix_sums)
            .enumerate()
            .map(|(n, (v, p))| (n, *v, *p))
    }
}

const CUTOFF_CEILING: u64 = 1 << 28;

/// Bracket `[lo, hi]` for `Σ_{k≥K} g(k)` when `g` is convex and decreasing on
/// `[K − 1/2, ∞)`: `∫_K^∞ g + g(K)/2 ≤ Σ ≤ ∫_{K−1/2}^∞ g`.
fn convex_tail_bracket<F: Fn(f64) -> f64>(g: &F, k: f64) -> (f64, f64) {
    let upper_part = integrate_to_infinity(g, k - 0.5, 1e-15);
    let lower_part = integrate_to_infinity(g, k, 1e-15);
    let lo = lower_part + 0.5 * g(k);
    // quadrature slack
    let slack = 1e-14 * upper_part;
    (lo - slack, upper_part + slack)
}

/// `γ_n` for `0 ≤ n ≤ N` with `γ_0 = 0`.
pub fn gamma_seq(spec: &SlowlyVaryingSpec, n: usize, tol: f64) -> Result<CoefficientSeq> {
    if n < 1 || !(tol > 0.0) {
        return Err(LabError::Invalid("gammaSeq needs N ≥ 1 and tol > 0".into()));
    }
    let f = |x: f64| 1.0 / (x * x.sqrt() * spec.eval_clamped(x).sqrt());
    let mut cutoff = (4 * n as u64).max(1_000_000);
    loop {
        match gamma_at_cutoff(spec, n, tol, cutoff, &f) {
            Ok(seq) => return Ok(seq),
            Err(LabError::Tolerance { .. }) if cutoff < CUTOFF_CEILING => cutoff *= 4,
            Err(e) => return Err(e),
        }
    }
}

fn gamma_at_cutoff<F: Fn(f64) -> f64>(
    spec: &SlowlyVaryingSpec,
    n: usize,
    tol: f64,
    cutoff: u64,
    f: &F,
) -> Result<CoefficientSeq> {
    let kc = cutoff as f64;
    // Σ_{k ≥ K_c} f(k)
    let (t_lo, t_hi) = convex_tail_bracket(f, kc);
    // Σ_{k ≥ K_c} H_k f(k)
    let hf = |x: f64| crate::numerics::harmonic(x) * f(x);
    let (s_lo_tail, s_hi_tail) = convex_tail_bracket(&hf, kc);
    // Σ_{k ≥ K_c} (H_k − H_N) f(k)
    let h_n = crate::numerics::harmonic(n as f64);
    let mf = |x: f64| (crate::numerics::harmonic(x) - h_n) * f(x);
    let (m_lo_tail, m_hi_tail) = convex_tail_bracket(&mf, kc);

    let width = (t_hi - t_lo).max(s_hi_tail - s_lo_tail);
    if width > tol {
        return Err(LabError::Tolerance { tol, width, cutoff });
    }

    // forward pass: Σ_{k<K_c} H_k f(k) and Σ_{N<k<K_c} (H_k − H_N) f(k)
    let mut harm = NeumaierSum::new();
    let mut excess = NeumaierSum::new();
    let mut s_acc = NeumaierSum::new();
    let mut m_acc = NeumaierSum::new();
    let mut fk = vec![0.0; n + 1];
    for k in 1..cutoff {
        let kf = k as f64;
        let v = f(kf);
        harm.add(1.0 / kf);
        s_acc.add(harm.value() * v);
        if (k as usize) <= n {
            fk[k as usize] = v;
        } else {
            excess.add(1.0 / kf);
            m_acc.add(excess.value() * v);
        }
    }
    // backward pass for T(n) = Σ_{k≥n} f(k), n ≤ N
    let mut tail_mid = NeumaierSum::new();
    tail_mid.add(0.5 * (t_lo + t_hi));
    for k in (n as u64 + 1..cutoff).rev() {
        tail_mid.add(f(k as f64));
    }
    let mut tails = vec![0.0; n + 1];
    for k in (1..=n).rev() {
        tail_mid.add(fk[k]);
        tails[k] = tail_mid.value();
    }

    let s_lo = s_acc.value() + s_lo_tail;
    let s_hi = s_acc.value() + s_hi_tail;
    let c = 2.0 / (s_lo + s_hi);
    let c_rel = (s_hi - s_lo) / (s_lo + s_hi) + 1e-15;
    let t_rel = 0.5 * (t_hi - t_lo) / tails[n];

    let mut values = vec![0.0; n + 1];
    for k in 1..=n {
        values[k] = c * tails[k] / k as f64;
    }
    let tail_mid = c * (m_acc.value() + 0.5 * (m_lo_tail + m_hi_tail));
    let tail_hi = c * (1.0 + c_rel) * (m_acc.value() + m_hi_tail);
    let prefix = prefix_sums(&values);
    let tail_bound = tail_hi + c_rel + t_rel + 1e-14;
    Ok(CoefficientSeq {
        kind: SeqKind::Gamma,
        values,
        prefix_sums: prefix,
        tail_bound,
        spec: Some(*spec),
        normalizer: Some(c),
        tail_estimate: Some(tail_mid),
    })
}

/// Taylor coefficients of `A = 1/(1−B)` for `0 ≤ n ≤ N`.
pub fn alpha_seq(gamma: &CoefficientSeq, n: usize) -> Result<CoefficientSeq> {
    if gamma.kind != SeqKind::Gamma {
        return Err(LabError::Invalid("alphaSeq needs a gamma sequence".into()));
    }
    if gamma.n_max() < n {
        return Err(LabError::Invalid(format!(
            "gamma prefix has {} terms, need {n}",
            gamma.n_max()
        )));
    }
    let g = &gamma.values;
    let mut a = vec![0.0; n + 1];
    a[0] = 1.0;
    for m in 1..=n {
        let mut acc = NeumaierSum::new();
        for k in 1..=m {
            acc.add(g[k] * a[m - k]);
        }
        a[m] = acc.value();
    }
    let prefix = prefix_sums(&a);
    Ok(CoefficientSeq {
        kind: SeqKind::Alpha,
        values: a,
        prefix_sums: prefix,
        // α_n are renewal probabilities
        tail_bound: 1.0,
        spec: gamma.spec,
        normalizer: gamma.normalizer,
        tail_estimate: None,
    })
}

/// Taylor coefficients of `√(1−x)`.
pub fn delta_seq(n: usize) -> CoefficientSeq {
    let mut d = vec![0.0; n + 1];
    d[0] = 1.0;
    for k in 1..=n {
        d[k] = d[k - 1] * (k as f64 - 1.5) / k as f64;
    }
    let prefix = prefix_sums(&d);
    let tail_bound = prefix[n].abs();
    CoefficientSeq {
        kind: SeqKind::Delta,
        values: d,
        prefix_sums: prefix,
        tail_bound,
        spec: None,
        normalizer: None,
        tail_estimate: None,
    }
}

/// Taylor coefficients of `(1−z)^{β−1}`.
pub fn zygmund_seq(beta: f64, n: usize) -> Result<CoefficientSeq> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(LabError::Domain(format!("β = {beta} outside (0,1)")));
    }
    let mut a = vec![0.0; n + 1];
    a[0] = 1.0;
    for k in 1..=n {
        a[k] = a[k - 1] * (k as f64 - beta) / k as f64;
    }
    let prefix = prefix_sums(&a);
    let tail_bound = a[n];
    Ok(CoefficientSeq {
        kind: SeqKind::ZygmundBeta { beta },
        values: a,
        prefix_sums: prefix,
        tail_bound,
        spec: None,
        normalizer: None,
        tail_estimate: None,
    })
}

/// `1 − B(z)` with a certified error bound, formed as
/// `Σ_{n≤N} γ_n (1 − zⁿ) + Σ_{n>N} γ_n − Σ_{n>N} γ_n zⁿ`.
pub fn one_minus_b(gamma: &CoefficientSeq, z: Polar) -> Result<(Complex64, f64)> {
    if gamma.kind != SeqKind::Gamma {
        return Err(LabError::Invalid("needs a gamma sequence".into()));
    }
    if z.r > 1.0 {
        return Err(LabError::Domain("|z| > 1".into()));
    }
    if z.is_one() {
        return Err(LabError::Singular("A has a pole at z = 1".into()));
    }
    let mut re = NeumaierSum::new();
    let mut im = NeumaierSum::new();
    if z.theta == 0.0 && z.r > 0.0 {
        let l = (-(1.0 - z.r)).ln_1p();
        for (k, g) in gamma.values.iter().enumerate().skip(1) {
            re.add(-g * (k as f64 * l).exp_m1());
        }
    } else {
        for (k, g) in gamma.values.iter().enumerate().skip(1) {
            let w = z.one_minus_pow(k as f64) * *g;
            re.add(w.re);
            im.add(w.im);
        }
    }
    let tail_mass = gamma.tail_estimate.unwrap_or(0.0);
    re.add(tail_mass);
    let err = gamma.series_tail_bound(z) + (gamma.tail_bound - tail_mass).max(0.0) + 1e-15;
    Ok((Complex64::new(re.value(), im.value()), err))
}

/// `A(z) = 1/(1−B(z))`, requiring `B(z)` to `1e-12` absolute.
pub fn eval_a(gamma: &CoefficientSeq, z: Complex64) -> Result<Complex64> {
    eval_a_polar(gamma, Polar::from_complex(z), 1e-12)
}

/// `A(z)` at a polar point with an explicit absolute target on `B(z)`.
pub fn eval_a_polar(gamma: &CoefficientSeq, z: Polar, target: f64) -> Result<Complex64> {
    let (d, err) = one_minus_b(gamma, z)?;
    if err > target {
        return Err(LabError::Precision { bound: err, target });
    }
    Ok(Complex64::new(1.0, 0.0) / d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum PathKind {
    Radial,
    Circular,
    Diagonal,
}

/// Points approaching `z = 1` along a fixed direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPath {
    pub kind: PathKind,
    pub epsilons: Vec<f64>,
}

impl BoundaryPath {
    pub fn new(kind: PathKind, epsilons: Vec<f64>) -> Result<Self> {
        if epsilons.is_empty() {
            return Err(LabError::Invalid("empty path".into()));
        }
        for w in epsilons.windows(2) {
            if !(w[1] < w[0]) {
                return Err(LabError::Invalid("epsilons must decrease".into()));
            }
        }
        for &e in &epsilons {
            let ok = match kind {
                PathKind::Radial => e > 0.0 && e <= 2.0,
                PathKind::Circular => e > 0.0 && e.fract() != 0.0,
                PathKind::Diagonal => e > 0.0 && e <= 1.0,
            };
            if !ok {
                return Err(LabError::Domain(format!("ε = {e} invalid for {kind:?} path")));
            }
        }
        Ok(Self { kind, epsilons })
    }

    /// Decades `10^{-from}, …, 10^{-to}`.
    pub fn decades(kind: PathKind, from: i32, to: i32) -> Result<Self> {
        Self::new(kind, (from..=to).map(|k| 10f64.powi(-k)).collect())
    }

    /// Parses `radial:1e-2..1e-6` (decade steps) or `circular:0.1,0.01`.
    pub fn parse(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| LabError::Invalid(format!("path '{s}' lacks 'kind:'")))?;
        let kind = match kind {
            "radial" => PathKind::Radial,
            "circular" => PathKind::Circular,
            "diagonal" => PathKind::Diagonal,
            other => return Err(LabError::Invalid(format!("unknown path kind '{other}'"))),
        };
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| LabError::Invalid(format!("bad number '{t}'")))
        };
        let eps = if let Some((a, b)) = rest.split_once("..") {
            let (a, b) = (num(a)?, num(b)?);
            let (ka, kb) = (-a.log10().round() as i32, -b.log10().round() as i32);
            (ka..=kb).map(|k| 10f64.powi(-k)).collect()
        } else {
            rest.split(',').map(num).collect::<Result<Vec<_>>>()?
        };
        Self::new(kind, eps)
    }

    pub fn points(&self) -> Vec<(f64, Polar)> {
        self.epsilons
            .iter()
            .map(|&e| {
                let p = match self.kind {
                    PathKind::Radial => Polar::new(1.0 - e, 0.0),
                    PathKind::Circular => Polar::new(1.0, e),
                    PathKind::Diagonal => Polar::new(1.0 - e, e),
                };
                (e, p)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct A1Row {
    pub epsilon: f64,
    /// `|A(z)|·2c√π·√|1−z| / √b(1/|1−z|)`.
    pub ratio_i: f64,
    /// Same ratio with the constant `4c√π`, the sharp constant of the
    /// asymptotic `1 − B(z) ~ 4c√π √(1−z)/√b`.
    pub ratio_i_sharp: f64,
    /// `sup_{m ≤ M} |Σ_{k≤m} α_k z^k| · √(|1−z|/b(1/|1−z|))`.
    pub ratio_ii: f64,
}

/// Length of the α prefix used for `ratio_ii`.
pub const A1_ALPHA_PREFIX: usize = 4096;

/// Tabulates the boundary behavior of `A` along `path`.
pub fn check_prop_a1(
    gamma: &CoefficientSeq,
    spec: &SlowlyVaryingSpec,
    path: &BoundaryPath,
) -> Result<Vec<A1Row>> {
    let c = gamma
        .normalizer
        .ok_or_else(|| LabError::Invalid("gamma sequence lacks its normalizer".into()))?;
    let alpha = alpha_seq(gamma, A1_ALPHA_PREFIX.min(gamma.n_max()))?;
    let mut rows = Vec::new();
    for (eps, z) in path.points() {
        let (d, _) = one_minus_b(gamma, z)?;
        let target = 1e-9 * d.norm();
        let a = eval_a_polar(gamma, z, target)?;
        let dist = z.one_minus().norm();
        let b = spec.eval_clamped(1.0 / dist);
        let scale = (dist / b).sqrt();
        let ratio_i = a.norm() * 2.0 * c * PI.sqrt() * scale;

        let mut partial = Complex64::new(0.0, 0.0);
        let mut sup: f64 = 0.0;
        for (k, ak) in alpha.values.iter().enumerate() {
            partial += z.pow(k as f64) * *ak;
            sup = sup.max(partial.norm());
        }
        rows.push(A1Row { epsilon: eps, ratio_i, ratio_i_sharp: 2.0 * ratio_i, ratio_ii: sup * scale });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesAsymptoticRow {
    pub epsilon: f64,
    pub ratio: f64,
    pub tail_bound: f64,
}

/// Compares `Σ_{1≤n≤N} b(n) zⁿ/n^β` with `Γ(1−β)(1−z)^{β−1} b(1/|1−z|)`.
///
/// The tail bound assumes `b(n)/n^β` is nonincreasing beyond `N`, which
/// holds for every supported family once `N` is moderately large.
pub fn check_series_asymptotic(
    beta: f64,
    spec: &SlowlyVaryingSpec,
    path: &BoundaryPath,
    n: usize,
) -> Result<Vec<SeriesAsymptoticRow>> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(LabError::Domain(format!("β = {beta} outside (0,1)")));
    }
    let gamma_1mb = statrs::function::gamma::gamma(1.0 - beta);
    let mut rows = Vec::new();
    for (eps, z) in path.points() {
        if 1.0 / eps < spec.x0 {
            return Err(LabError::Domain(format!("1/ε = {} below x0 = {}", 1.0 / eps, spec.x0)));
        }
        let next = (n + 1) as f64;
        let coef = spec.eval_clamped(next) * next.powf(-beta);
        let dist = z.one_minus().norm();
        let geometric = if z.r < 1.0 { coef * z.r.powf(next) / (1.0 - z.r) } else { f64::INFINITY };
        let tail = geometric.min(2.0 * coef / dist);
        if tail > 1e-9 {
            return Err(LabError::Truncation(format!(
                "N = {n} leaves tail bound {tail:e} at ε = {eps:e}"
            )));
        }
        let mut re = NeumaierSum::new();
        let mut im = NeumaierSum::new();
        for k in 1..=n {
            let kf = k as f64;
            let w = z.pow(kf) * (spec.eval_clamped(kf) * kf.powf(-beta));
            re.add(w.re);
            im.add(w.im);
        }
        let s = Complex64::new(re.value(), im.value());
        let reference = gamma_1mb * z.one_minus().norm().powf(beta - 1.0) * spec.eval_clamped(1.0 / dist);
        rows.push(SeriesAsymptoticRow { epsilon: eps, ratio: s.norm() / reference, tail_bound: tail });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_b_examples() {
        assert_eq!(SlowlyVaryingSpec::constant().eval(100.0).unwrap(), 1.0);
        let l = SlowlyVaryingSpec::log_pow(1.0);
        assert!((l.eval(E * E).unwrap() - 2.0).abs() < 1e-15);
        let r = SlowlyVaryingSpec::reciprocal_log_pow(1.0, 2.0);
        assert!((r.eval(E.exp()).unwrap() - 1.0 / E).abs() < 1e-15);
        assert!(matches!(l.eval(2.0), Err(LabError::Domain(_))));
    }

    #[test]
    fn b_star_harmonic() {
        let c = SlowlyVaryingSpec::constant();
        assert!((b_star(&c, 3) - 11.0 / 6.0).abs() < 1e-15);
        assert_eq!(b_star(&c, 1), 1.0);
    }

    #[test]
    fn slow_variation_thresholds_exist() {
        for spec in [
            SlowlyVaryingSpec::constant(),
            SlowlyVaryingSpec::log_pow(2.0),
            SlowlyVaryingSpec::log_log_pow(-1.0, 3.0),
            SlowlyVaryingSpec::reciprocal_log_pow(1.0, 2.0),
        ] {
            assert!(spec.slow_variation_threshold(0.1).is_some(), "{spec:?}");
        }
    }

    #[test]
    fn delta_first_terms() {
        let d = delta_seq(3);
        assert_eq!(d.values[1], -0.5);
        assert_eq!(d.values[2], -0.125);
        assert!(d.values[1..].iter().all(|v| *v < 0.0));
    }

    #[test]
    fn zygmund_first_terms() {
        let a = zygmund_seq(0.5, 2).unwrap();
        assert_eq!(a.values[1], 0.5);
        assert_eq!(a.values[2], 0.375);
        assert!(zygmund_seq(1.0, 2).is_err());
    }

    #[test]
    fn path_parsing() {
        let p = BoundaryPath::parse("radial:1e-2..1e-6").unwrap();
        assert_eq!(p.epsilons.len(), 5);
        assert!((p.epsilons[4] - 1e-6).abs() < 1e-21);
        assert!(BoundaryPath::parse("spiral:0.1").is_err());
        assert!(BoundaryPath::new(PathKind::Circular, vec![1.0]).is_err());
    }
}
