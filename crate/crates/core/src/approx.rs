//! Martingale approximations `S_n = M_n + R_n`: the projective decomposition
//! of linear processes, the resolvent construction `E[Γ_t|F_0]`, and the
//! normal-chain construction with `G_t f = Σ tⁿPⁿf`, together with exact
//! remainder bounds and the martingale-type condition checks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::{sum_quantity, sup_quantity, CriterionReport, NamedQuantity, Verdict, DEFAULT_SLOPE_MARGIN};
use crate::error::{LabError, Result};
use crate::models::{
    cond_sn_norm_linear, theta_linear, BatchSource, DiagonalSpectrum, FourierDiagonalModel, LinearPath,
    LinearProcessSpec, PhaseTable, RotationPath, TrajectoryBatch, PHASE_TABLE_HALF_WIDTH,
};
use crate::numerics::{compensated_sum, dyadic_block_sums, log_weight, mean_se, sum_smooth, NeumaierSum};
use crate::spectral::{criterion_sqrt, spectral_integral, un_norm_sq_prefix, AtomicSpectralMeasure, Kernel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "camelCase")]
pub enum DecompositionMethod {
    WuLinear,
    ResolventKv { t: f64 },
    NormalChain { t: f64 },
}

/// Pooled lag-`h` correlation of martingale increments with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LagCorrelation {
    pub lag: usize,
    pub corr: f64,
    pub se: f64,
}

pub const ORTHOGONALITY_LAGS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MartingaleDecomposition {
    pub method: DecompositionMethod,
    pub t_parameter: Option<f64>,
    pub grid: Vec<u64>,
    pub sn: Vec<Vec<f64>>,
    pub mn: Vec<Vec<f64>>,
    pub rn: Vec<Vec<f64>>,
    pub orthogonality: Vec<LagCorrelation>,
    /// Empirical `E[(M_k − M_{k−1})²]` pooled over steps and reps.
    pub increment_second_moment: f64,
}

impl MartingaleDecomposition {
    /// `(n, mean R_n², SE)` per grid point.
    pub fn remainder_moments(&self) -> Vec<(u64, f64, f64)> {
        self.grid
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let sq: Vec<f64> = self.rn.iter().map(|r| r[i] * r[i]).collect();
                let (m, se) = mean_se(&sq);
                (n, m, se)
            })
            .collect()
    }

    /// `max |S_n − M_n − R_n|` over reps and grid points.
    pub fn exactness_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for ((s, m), r) in self.sn.iter().zip(&self.mn).zip(&self.rn) {
            for i in 0..s.len() {
                worst = worst.max((s[i] - m[i] - r[i]).abs());
            }
        }
        worst
    }

    /// Empirical `Var(M_n)/n` at the last grid point with its SE.
    pub fn martingale_variance_rate(&self) -> (f64, f64) {
        let n = *self.grid.last().expect("nonempty grid") as f64;
        let last: Vec<f64> = self.mn.iter().map(|m| *m.last().expect("nonempty") / n.sqrt()).collect();
        crate::numerics::variance_se(&last)
    }
}

/// Per-rep running statistics of the increments `D_k`.
struct IncrementStats {
    ring: [f64; ORTHOGONALITY_LAGS],
    count: usize,
    sum_sq: f64,
    lag_products: [f64; ORTHOGONALITY_LAGS],
}

impl IncrementStats {
    fn new() -> Self {
        Self { ring: [0.0; ORTHOGONALITY_LAGS], count: 0, sum_sq: 0.0, lag_products: [0.0; ORTHOGONALITY_LAGS] }
    }

    fn push(&mut self, d: f64) {
        for h in 1..=ORTHOGONALITY_LAGS.min(self.count) {
            self.lag_products[h - 1] += d * self.ring[(self.count - h) % ORTHOGONALITY_LAGS];
        }
        self.ring[self.count % ORTHOGONALITY_LAGS] = d;
        self.count += 1;
        self.sum_sq += d * d;
    }
}

struct RepOutput {
    s: Vec<f64>,
    m: Vec<f64>,
    stats: IncrementStats,
}

fn assemble(
    method: DecompositionMethod,
    t_parameter: Option<f64>,
    batch: &TrajectoryBatch,
    reps: Vec<RepOutput>,
) -> Result<MartingaleDecomposition> {
    let n = batch.n as usize;
    let mut sn = Vec::with_capacity(reps.len());
    let mut mn = Vec::with_capacity(reps.len());
    let mut rn = Vec::with_capacity(reps.len());
    let mut second = Vec::with_capacity(reps.len());
    let mut lag_means: Vec<Vec<f64>> = vec![Vec::with_capacity(reps.len()); ORTHOGONALITY_LAGS];
    for (rep, out) in reps.into_iter().enumerate() {
        if out.s != batch.sums[rep] {
            return Err(LabError::Invalid(format!("rep {rep} does not replay the batch bit-identically")));
        }
        rn.push(out.s.iter().zip(&out.m).map(|(s, m)| s - m).collect());
        second.push(out.stats.sum_sq / n as f64);
        for h in 1..=ORTHOGONALITY_LAGS {
            let pairs = n.saturating_sub(h).max(1) as f64;
            lag_means[h - 1].push(out.stats.lag_products[h - 1] / pairs);
        }
        sn.push(out.s);
        mn.push(out.m);
    }
    let var_d = compensated_sum(second.iter().copied()) / second.len() as f64;
    let orthogonality = lag_means
        .iter()
        .enumerate()
        .map(|(h, v)| {
            let (m, se) = mean_se(v);
            let scale = if var_d > 0.0 { var_d } else { 1.0 };
            LagCorrelation { lag: h + 1, corr: m / scale, se: se / scale }
        })
        .collect();
    Ok(MartingaleDecomposition {
        method,
        t_parameter,
        grid: batch.grid.clone(),
        sn,
        mn,
        rn,
        orthogonality,
        increment_second_moment: var_d,
    })
}

fn linear_source<'a>(spec: &LinearProcessSpec, batch: &'a TrajectoryBatch) -> Result<&'a LinearProcessSpec> {
    match &batch.source {
        BatchSource::Linear { spec: s } if s.lags() == spec.lags() && s.innovation_std == spec.innovation_std => Ok(s),
        _ => Err(LabError::Invalid("batch was not simulated from this linear process".into())),
    }
}

/// Replays a linear batch with martingale increments `D_k = coeff·ε_k`.
fn decompose_linear_with(
    spec: &LinearProcessSpec,
    batch: &TrajectoryBatch,
    coeff: f64,
    method: DecompositionMethod,
    t: Option<f64>,
) -> Result<MartingaleDecomposition> {
    let sim = linear_source(spec, batch)?;
    let reps: Vec<RepOutput> = (0..batch.reps)
        .into_par_iter()
        .map(|rep| {
            let mut path = LinearPath::new(sim, batch.seed, rep);
            let (mut s, mut m) = (0.0, 0.0);
            let mut out = RepOutput { s: Vec::new(), m: Vec::new(), stats: IncrementStats::new() };
            let mut gi = 0;
            for k in 1..=batch.n {
                let (x, eps) = path.step();
                let d = coeff * eps;
                s += x;
                m += d;
                out.stats.push(d);
                if batch.grid[gi] == k {
                    out.s.push(s);
                    out.m.push(m);
                    gi += 1;
                }
            }
            out
        })
        .collect();
    assemble(method, t, batch, reps)
}

/// Projective decomposition of a linear process: `D_k = (Σ_{i≤M} a_i) ε_k`.
pub fn wu_decompose_linear(spec: &LinearProcessSpec, batch: &TrajectoryBatch) -> Result<MartingaleDecomposition> {
    let coeff = compensated_sum(spec.lags().iter().map(|(_, a)| *a));
    if !coeff.is_finite() {
        return Err(LabError::Domain("Σ|a_i| must be finite".into()));
    }
    decompose_linear_with(spec, batch, coeff, DecompositionMethod::WuLinear, None)
}

/// Resolvent decomposition of a linear process at fixed `t`: the increment
/// `E[Γ_t∘θ^k|F_k] − E[Γ_t∘θ^k|F_{k−1}]` equals `(Σ tⁿa_n) ε_k`.
pub fn resolvent_decompose_linear(
    spec: &LinearProcessSpec,
    batch: &TrajectoryBatch,
    t: f64,
) -> Result<MartingaleDecomposition> {
    check_t(t)?;
    let coeff = abel_coefficient(spec, t);
    decompose_linear_with(spec, batch, coeff, DecompositionMethod::ResolventKv { t }, Some(t))
}

fn check_t(t: f64) -> Result<()> {
    if (0.0..1.0).contains(&t) {
        Ok(())
    } else {
        Err(LabError::Domain(format!("t = {t} outside [0, 1)")))
    }
}

/// `Σ_n tⁿ a_n` over the retained lags.
fn abel_coefficient(spec: &LinearProcessSpec, t: f64) -> f64 {
    compensated_sum(spec.lags().iter().map(|(l, a)| a * t.powf(*l as f64)))
}

/// Per-channel coefficients of `G_t f` and `P G_t f` (cosine amplitude `2c`).
fn resolvent_channels(model: &FourierDiagonalModel, t: f64) -> (Vec<f64>, Vec<f64>) {
    model
        .coeffs
        .iter()
        .zip(&model.eigenvalues)
        .map(|(c, l)| {
            let g = 2.0 * c / (1.0 - t * l);
            (g, l * g)
        })
        .unzip()
}

/// Normal-chain decomposition at fixed `t`: `φ_t(x, y) = G_t f(y) − P G_t f(x)`,
/// `M_n(t) = Σ_{k≤n} φ_t(W_{k−1}, W_k)`.
pub fn normal_chain_martingale(
    model: &FourierDiagonalModel,
    batch: &TrajectoryBatch,
    t: f64,
) -> Result<MartingaleDecomposition> {
    check_t(t)?;
    let start = match &batch.source {
        BatchSource::Rotation { model: m, start } if m == model => *start,
        _ => return Err(LabError::Invalid("batch was not simulated from this model".into())),
    };
    let (g, h) = resolvent_channels(model, t);
    let table = PhaseTable::new(model, PHASE_TABLE_HALF_WIDTH);
    let channels = model.coeffs.len();
    let reps: Vec<RepOutput> = (0..batch.reps)
        .into_par_iter()
        .map(|rep| {
            let mut path = RotationPath::new(model, &table, start, batch.seed, rep);
            let mut prev = vec![0.0; channels];
            let mut cur = vec![0.0; channels];
            path.channels(0, &mut prev);
            let (mut s, mut m) = (0.0, 0.0);
            let mut out = RepOutput { s: Vec::new(), m: Vec::new(), stats: IncrementStats::new() };
            let mut gi = 0;
            for k in 1..=batch.n {
                path.step();
                // same expression as the simulator so that S replays exactly
                s += path.value(path.steps);
                path.channels(path.steps, &mut cur);
                let mut d = 0.0;
                for i in 0..channels {
                    d += g[i] * cur[i] - h[i] * prev[i];
                }
                m += d;
                out.stats.push(d);
                std::mem::swap(&mut prev, &mut cur);
                if batch.grid[gi] == k {
                    out.s.push(s);
                    out.m.push(m);
                    gi += 1;
                }
            }
            out
        })
        .collect();
    assemble(DecompositionMethod::NormalChain { t }, Some(t), batch, reps)
}

// ---------------------------------------------------------------------------
// Exact remainder quantities

/// `Σ_{j=1}^n Θ_j²`.
pub fn theta_sq_sum(spec: &LinearProcessSpec, n: u64) -> f64 {
    let support = spec.support_upto(n);
    let mut acc = NeumaierSum::new();
    let mut lo = 1;
    // Θ_j is constant for j in (L_prev, L]
    for &l in support.iter().filter(|l| **l >= 1) {
        let th = theta_linear(spec, l);
        acc.add((l - lo + 1) as f64 * th * th);
        lo = l + 1;
    }
    if lo <= n {
        let th = theta_linear(spec, lo);
        acc.add((n - lo + 1) as f64 * th * th);
    }
    acc.value()
}

/// Exact `E[R_n²] = σ² Σ_{m<n} (Σ_{i>m} a_i)² + ‖E[S_n|F_0]‖²` for the
/// projective decomposition of a linear process.
pub fn wu_remainder_exact(spec: &LinearProcessSpec, n: u64) -> Result<f64> {
    let mut acc = NeumaierSum::new();
    let support = spec.support_upto(n);
    let mut lo = 0;
    // Σ_{i>m} a_i is constant for m in [L_prev, L)
    for &l in support.iter().filter(|l| **l >= 1) {
        let tail = spec.coeff_tail(lo);
        acc.add((l.min(n) - lo) as f64 * tail * tail);
        lo = l;
    }
    if lo < n {
        let tail = spec.coeff_tail(lo);
        acc.add((n - lo) as f64 * tail * tail);
    }
    Ok(spec.innovation_std.powi(2) * acc.value() + cond_sn_norm_linear(spec, n)?)
}

/// `Σ_{j,k} b_j b_k λ^{|j−k|}` for a real `λ`.
fn toeplitz_form(b: &[f64], lambda: f64) -> f64 {
    let mut acc = NeumaierSum::new();
    let mut carry = 0.0;
    for (j, &bj) in b.iter().enumerate() {
        if j > 0 {
            carry = lambda * (carry + b[j - 1]);
        }
        acc.add(bj * bj + 2.0 * bj * carry);
    }
    acc.value()
}

/// Exact stationary `E[R_n(t)²]` for the normal-chain decomposition, from
/// `R_n(t) = h(W_0) + (1−t)Σ_{k=1}^{n−1} h(W_k) − t h(W_n)` with `h = P G_t f`.
pub fn normal_chain_remainder_exact(spectrum: &DiagonalSpectrum, n: u64, t: f64) -> Result<f64> {
    check_t(t)?;
    if n == 0 {
        return Ok(0.0);
    }
    let mut b = vec![1.0 - t; n as usize + 1];
    b[0] = 1.0;
    b[n as usize] = -t;
    Ok(compensated_sum(spectrum.lines().iter().map(|l| {
        let amp = l.lambda / (1.0 - t * l.lambda);
        l.weight * amp * amp * toeplitz_form(&b, l.lambda)
    })))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResolventGamma {
    pub t: f64,
    /// `‖E[Γ_t|F_0]‖₂` in closed form.
    pub exact: f64,
    /// `(1−t) Σ_{n≥0} tⁿ ‖E[X_0 + … + X_n|F_0]‖₂`.
    pub majorant: f64,
}

/// `‖E[Γ_t|F_0]‖₂` with `Γ_t = Σ tⁿX_n`, and its Abel majorant, over the
/// retained lags: the coefficient of `ε_{−j}` is `Σ_{L≥j} a_L t^{L−j}`.
pub fn resolvent_gamma(spec: &LinearProcessSpec, t: f64) -> Result<ResolventGamma> {
    check_t(t)?;
    let spec = spec.truncated();
    let lags = spec.lags();
    let sigma = spec.innovation_std;
    // suffix C_i = Σ_{q≥i} a_{L_q} t^{L_q − L_i}
    let mut exact = NeumaierSum::new();
    let mut suffix = 0.0;
    for i in (0..lags.len()).rev() {
        let (l, a) = lags[i];
        if i + 1 < lags.len() {
            suffix *= t.powf((lags[i + 1].0 - l) as f64);
        }
        suffix += a;
        // j ranges over (L_{i−1}, L_i], or [0, L_0] for the first lag
        let len = if i == 0 { l + 1 } else { l - lags[i - 1].0 };
        let t2 = t * t;
        let geo = if t2 == 0.0 { 1.0 } else { -(len as f64 * t2.ln()).exp_m1() / (1.0 - t2) };
        exact.add(suffix * suffix * geo);
    }
    let exact = sigma * exact.value().sqrt();

    let m = spec.truncation_m;
    let mut maj = NeumaierSum::new();
    let mut weight = 1.0 - t;
    let mut partial = 0.0;
    let mut n = 0u64;
    loop {
        partial += spec.coefficient(n);
        let norm = (cond_sn_norm_linear(&spec, n + 1)? + (sigma * partial).powi(2)).sqrt();
        if n >= m {
            // the norm is constant from here on; close the geometric series
            maj.add(norm * weight / (1.0 - t));
            break;
        }
        maj.add(weight * norm);
        weight *= t;
        n += 1;
        if weight == 0.0 {
            break;
        }
    }
    Ok(ResolventGamma { t, exact, majorant: maj.value() })
}

// ---------------------------------------------------------------------------
// Remainder bound reports

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RemainderBoundRow {
    pub n: u64,
    pub empirical_rn2: Option<f64>,
    pub se: Option<f64>,
    pub exact_rn2: Option<f64>,
    pub bound_a: Option<f64>,
    pub bound_b: Option<f64>,
    pub wu_bound: Option<f64>,
    pub theta_sq_sum: Option<f64>,
}

impl RemainderBoundRow {
    fn new(n: u64) -> Self {
        Self {
            n,
            empirical_rn2: None,
            se: None,
            exact_rn2: None,
            bound_a: None,
            bound_b: None,
            wu_bound: None,
            theta_sq_sum: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RemainderBoundReport {
    pub rows: Vec<RemainderBoundRow>,
    /// Empirical sup of `E[R_n²]/Σ_{j≤n}Θ_j²` (Wu route).
    pub k_estimate: Option<f64>,
    /// Verdict of `Σ‖U_n‖²/n² < ∞` for the spectral bounds.
    pub precondition: Option<Verdict>,
    /// Set when the precondition fails and the bounds were computed anyway.
    pub flagged: bool,
}

impl RemainderBoundReport {
    pub fn attach_empirical(&mut self, moments: &[(u64, f64, f64)]) {
        for row in &mut self.rows {
            if let Some((_, m, se)) = moments.iter().find(|(n, _, _)| *n == row.n) {
                row.empirical_rn2 = Some(*m);
                row.se = Some(*se);
            }
        }
    }

    /// Sets `k_estimate` from the rows with both empirical and Θ data and
    /// fills `wu_bound = K Σ Θ_j²`.
    pub fn fit_wu_constant(&mut self) {
        let k = self
            .rows
            .iter()
            .filter_map(|r| Some(r.empirical_rn2? / r.theta_sq_sum?))
            .filter(|k| k.is_finite())
            .fold(None, |acc: Option<f64>, k| Some(acc.map_or(k, |a| a.max(k))));
        self.k_estimate = k;
        if let Some(k) = k {
            for row in &mut self.rows {
                row.wu_bound = row.theta_sq_sum.map(|s| k * s);
            }
        }
    }
}

/// Wu-route report for a linear process: exact `E[R_n²]`, `Σ_{j≤n}Θ_j²`, and,
/// once a decomposition is attached, the fitted constant `K`.
pub fn remainder_bounds_linear(
    spec: &LinearProcessSpec,
    n_list: &[u64],
    decomposition: Option<&MartingaleDecomposition>,
) -> Result<RemainderBoundReport> {
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let mut row = RemainderBoundRow::new(n);
        row.exact_rn2 = Some(wu_remainder_exact(spec, n)?);
        row.theta_sq_sum = Some(theta_sq_sum(spec, n));
        rows.push(row);
    }
    let mut report = RemainderBoundReport { rows, k_estimate: None, precondition: None, flagged: false };
    if let Some(d) = decomposition {
        report.attach_empirical(&d.remainder_moments());
        report.fit_wu_constant();
    }
    Ok(report)
}

/// Spectral bounds at `u_n = 1 − 1/n`:
/// `boundA = (1/n)Σ_{k≤n}‖U_k‖²/k + Σ_{k>n}‖U_k‖²/k²` and
/// `boundB = 8((1/n)∫dμ/(|1−z||1−u_n z|²) + ∫dμ/|1−u_n z|²)`.
/// The tail of `boundA` is summed to `K = max(64n, 4096)` and closed with the
/// certified `Σ_{k>K} ‖U_k‖²/k² ≤ Σ w (2/|1−z|)²/K`.
pub fn remainder_bounds_measure(m: &AtomicSpectralMeasure, n_list: &[u64]) -> Result<RemainderBoundReport> {
    let precondition = criterion_sqrt(m, 1 << 16)?.verdict;
    let n_top = n_list.iter().copied().max().unwrap_or(1);
    let k_max = (64 * n_top).max(4096) as usize;
    let u = un_norm_sq_prefix(m, k_max);
    let positive = || m.atoms().iter().filter(|a| a.weight > 0.0);
    let far_tail = if positive().any(|a| a.point.is_one()) {
        f64::INFINITY
    } else {
        compensated_sum(positive().map(|a| a.weight * 4.0 / a.point.one_minus().norm_sqr())) / k_max as f64
    };
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        if n == 0 {
            return Err(LabError::Invalid("n must be ≥ 1".into()));
        }
        let nu = n as usize;
        let head = compensated_sum((1..=nu).map(|k| u[k] / k as f64)) / n as f64;
        let tail = compensated_sum((nu + 1..=k_max).map(|k| u[k] / (k as f64 * k as f64)));
        let t = 1.0 - 1.0 / n as f64;
        let b = 8.0
            * (spectral_integral(m, &Kernel::ResolventMixed { t }) / n as f64
                + spectral_integral(m, &Kernel::ResolventSq { t }));
        let mut row = RemainderBoundRow::new(n);
        row.bound_a = Some(head + tail + far_tail);
        row.bound_b = Some(b);
        rows.push(row);
    }
    Ok(RemainderBoundReport {
        rows,
        k_estimate: None,
        precondition: Some(precondition),
        flagged: precondition != Verdict::Converges,
    })
}

/// Normal-chain report for a Fourier-diagonal model: spectral bounds plus the
/// exact stationary `E[R_n(u_n)²]`.
pub fn remainder_bounds_model(model: &FourierDiagonalModel, n_list: &[u64]) -> Result<RemainderBoundReport> {
    let spectrum = model.spectrum();
    let mut report = remainder_bounds_measure(&spectrum.to_measure()?, n_list)?;
    for row in &mut report.rows {
        row.exact_rn2 = Some(normal_chain_remainder_exact(&spectrum, row.n, 1.0 - 1.0 / row.n as f64)?);
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Martingale-type conditions

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "camelCase")]
pub enum ConditionForm {
    /// `sup (log n)²(log log n)^τ ‖E[S_n|F_0]‖₂/√n < ∞`.
    Zwc { tau: f64 },
    /// `Σ log n Θ_n²/n < ∞`.
    Wc,
    /// `Σ (log n)³ ‖E[X_n|F_0]‖² < ∞`.
    PropC,
    /// `Σ log n (log log n)^δ/n · (Σ_{k≥n} ‖P^{k−1}f‖² − ‖P^k f‖²)^{1/2})² < ∞`.
    QuenchedWu { delta: f64 },
    /// `sup (log n)²(log log n)^δ ‖Σ_{k≤n}P^k f‖₂/√n < ∞`.
    QuenchedMw { delta: f64 },
    /// `Σ (log n)²(log log n)^δ ‖Σ_{k≤n}P^k f‖₂²/n² < ∞`.
    NormalChain { delta: f64 },
}

impl ConditionForm {
    pub fn name(&self) -> &'static str {
        match self {
            ConditionForm::Zwc { .. } => "zwc",
            ConditionForm::Wc => "wc",
            ConditionForm::PropC => "propC",
            ConditionForm::QuenchedWu { .. } => "quenchedWu",
            ConditionForm::QuenchedMw { .. } => "quenchedMW",
            ConditionForm::NormalChain { .. } => "normalChain",
        }
    }

    /// Parses `zwc`, `wc`, `propC`, `quenchedWu`, `quenchedMW`, `normalChain`,
    /// with an optional `:value` for the exponent (defaults τ = 3/4, δ = 1.5, 0).
    pub fn parse(s: &str) -> Result<Self> {
        let (head, value) = match s.split_once(':') {
            Some((h, v)) => {
                let v: f64 = v.parse().map_err(|_| LabError::Invalid(format!("bad exponent in {s:?}")))?;
                (h, Some(v))
            }
            None => (s, None),
        };
        Ok(match head {
            "zwc" => ConditionForm::Zwc { tau: value.unwrap_or(0.75) },
            "wc" => ConditionForm::Wc,
            "propC" => ConditionForm::PropC,
            "quenchedWu" => ConditionForm::QuenchedWu { delta: value.unwrap_or(1.5) },
            "quenchedMW" => ConditionForm::QuenchedMw { delta: value.unwrap_or(1.5) },
            "normalChain" => ConditionForm::NormalChain { delta: value.unwrap_or(0.0) },
            _ => return Err(LabError::Invalid(format!("unknown condition form {head:?}"))),
        })
    }
}

/// What a condition is evaluated on.
#[derive(Debug, Clone, Copy)]
pub enum ConditionSubject<'a> {
    Linear(&'a LinearProcessSpec),
    Spectrum(&'a DiagonalSpectrum),
}

/// Block sums of `w(n)·q(n)` where `q` is constant between consecutive
/// support points (`q(n)` for `n ∈ (L_prev, L]`) and `w` is smooth.
fn piecewise_blocks<Q: Fn(u64) -> f64, W: Fn(f64) -> f64>(support: &[u64], q: Q, w: &W, j_max: u32) -> Vec<f64> {
    (0..j_max)
        .map(|j| {
            let a = 1u64 << j;
            let b = 2 * a - 1;
            let mut acc = NeumaierSum::new();
            let mut lo = a;
            for &l in support.iter().filter(|l| **l >= a && **l < b) {
                acc.add(q(l) * sum_smooth(w, lo, l));
                lo = l + 1;
            }
            if lo <= b {
                acc.add(q(b) * sum_smooth(w, lo, b));
            }
            acc.value()
        })
        .collect()
}

fn lacunary_minorant(spec: &LinearProcessSpec, n: u64) -> Option<f64> {
    if !matches!(spec.coeff_rule, crate::models::LinearCoeffRule::Lacunary94 { .. }) {
        return None;
    }
    // ‖E[S_{2^k}|F_0]‖² ≥ 2^k Σ_{l≥k} a_{2^l}² (one full window per lag)
    let k = 63 - n.leading_zeros();
    let s = compensated_sum((k.max(1)..64).map(|l| spec.coefficient(1u64 << l).powi(2)));
    Some(spec.innovation_std.powi(2) * n as f64 * s)
}

fn sup_form_linear(spec: &LinearProcessSpec, name: &str, expo: f64, j_max: u32) -> Result<(Vec<NamedQuantity>, Vec<NamedQuantity>)> {
    let norm = |n: u64, sq: f64| log_weight(n as f64, 2.0, expo) * sq.sqrt() / (n as f64).sqrt();
    let horizon = if matches!(spec.coeff_rule, crate::models::LinearCoeffRule::Lacunary94 { .. }) && spec.analytic_tail {
        (63 - spec.truncation_m.leading_zeros()).min(j_max)
    } else {
        j_max
    };
    let exact: Vec<f64> =
        (0..=horizon).map(|j| Ok(norm(1 << j, cond_sn_norm_linear(spec, 1 << j)?))).collect::<Result<_>>()?;
    let exact_q = sup_quantity(&format!("{name}Exact"), exact, DEFAULT_SLOPE_MARGIN);
    if lacunary_minorant(spec, 2).is_some() {
        let minor: Vec<f64> = (0..=j_max).map(|j| norm(1 << j, lacunary_minorant(spec, 1 << j).unwrap())).collect();
        Ok((vec![sup_quantity(&format!("{name}Minorant"), minor, DEFAULT_SLOPE_MARGIN)], vec![exact_q]))
    } else {
        Ok((vec![exact_q], Vec::new()))
    }
}

fn spectrum_sum_blocks<F: Fn(f64) -> f64 + Sync>(
    spectrum: &DiagonalSpectrum,
    t: &F,
    needs_integers: bool,
    j_max: u32,
) -> Result<Vec<f64>> {
    if needs_integers && spectrum.has_negative() {
        if j_max > 24 {
            return Err(LabError::Unsupported("negative eigenvalues need exact summation; use n ≤ 2^24".into()));
        }
        return Ok((0..j_max)
            .map(|j| compensated_sum(((1u64 << j)..(2u64 << j)).map(|n| t(n as f64))))
            .collect());
    }
    Ok(dyadic_block_sums(t, j_max))
}

/// Evaluates a martingale-type condition up to `n = 2^j_max` from exact
/// quantities and classifies it (sum-type by dyadic blocks, sup-type by growth).
pub fn mw_condition_check(subject: ConditionSubject, form: ConditionForm, j_max: u32) -> Result<CriterionReport> {
    if !(4..=62).contains(&j_max) {
        return Err(LabError::Range(format!("j_max = {j_max} outside [4, 62]")));
    }
    let n_max = 1u64 << j_max;
    let crit = format!("mw:{}", form.name());
    let margin = DEFAULT_SLOPE_MARGIN;
    let (quantities, diagnostics) = match subject {
        ConditionSubject::Linear(spec) => {
            let support = spec.support_upto(n_max);
            match form {
                ConditionForm::Zwc { tau } => sup_form_linear(spec, "zwc", tau, j_max)?,
                ConditionForm::QuenchedMw { delta } => sup_form_linear(spec, "quenchedMW", delta, j_max)?,
                ConditionForm::Wc | ConditionForm::QuenchedWu { .. } => {
                    let delta = if let ConditionForm::QuenchedWu { delta } = form { delta } else { 0.0 };
                    let w = |x: f64| log_weight(x, 1.0, delta) / x;
                    let blocks = piecewise_blocks(&support, |n| theta_linear(spec, n).powi(2), &w, j_max);
                    (vec![sum_quantity(form.name(), blocks, margin)], Vec::new())
                }
                ConditionForm::PropC => {
                    let w = |x: f64| log_weight(x, 3.0, 0.0);
                    let blocks = piecewise_blocks(&support, |n| spec.cond_xn_sq(n), &w, j_max);
                    (vec![sum_quantity("propC", blocks, margin)], Vec::new())
                }
                ConditionForm::NormalChain { .. } => {
                    return Err(LabError::Unsupported("the normal-chain condition needs a Markov operator spectrum".into()))
                }
            }
        }
        ConditionSubject::Spectrum(s) => match form {
            ConditionForm::Zwc { tau: e } | ConditionForm::QuenchedMw { delta: e } => {
                let samples: Vec<f64> = (0..=j_max)
                    .map(|j| {
                        let n = (1u64 << j) as f64;
                        log_weight(n, 2.0, e) * s.un_norm_sq(n).sqrt() / n.sqrt()
                    })
                    .collect();
                (vec![sup_quantity(form.name(), samples, margin)], Vec::new())
            }
            ConditionForm::Wc | ConditionForm::QuenchedWu { .. } => {
                let tail = s.root_decrement_tail();
                let (delta, shift) = match form {
                    ConditionForm::QuenchedWu { delta } => (delta, 0.0),
                    _ => (0.0, 1.0),
                };
                let t = |x: f64| log_weight(x, 1.0, delta) / x * tail.at(x + shift).powi(2);
                (vec![sum_quantity(form.name(), spectrum_sum_blocks(s, &t, false, j_max)?, margin)], Vec::new())
            }
            ConditionForm::PropC => {
                let t = |x: f64| log_weight(x, 3.0, 0.0) * s.p_norm_sq(x);
                (vec![sum_quantity("propC", spectrum_sum_blocks(s, &t, false, j_max)?, margin)], Vec::new())
            }
            ConditionForm::NormalChain { delta } => {
                let t = |x: f64| log_weight(x, 2.0, delta) * s.un_norm_sq(x) / (x * x);
                (vec![sum_quantity("normalChain", spectrum_sum_blocks(s, &t, true, j_max)?, margin)], Vec::new())
            }
        },
    };
    let mut report = CriterionReport::from_quantities(&crit, quantities, n_max, margin);
    report.diagnostics = diagnostics;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Cauchy-rate diagnostic

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CauchyRateRow {
    pub level: u32,
    pub t: f64,
    /// `‖M_n(t_{level+1}) − M_n(t_level)‖₂/√n` (exact, stationary).
    pub increment: f64,
    /// `increment · |log(1−t)| (log|log(1−t)|)^τ`.
    pub ratio: f64,
}

/// Distance between consecutive resolvent martingales along the dyadic
/// ladder `t_j = (2^j − 1 + t_0)/2^j`. Martingale increments are orthogonal,
/// so `‖M_n(t) − M_n(t')‖₂²/n` is the one-step `E[(φ_t − φ_{t'})²]`.
pub fn cauchy_rate_diagnostic(subject: ConditionSubject, t0: f64, levels: u32, tau: f64) -> Result<Vec<CauchyRateRow>> {
    check_t(t0)?;
    let ladder = |j: u32| 1.0 - (1.0 - t0) / 2f64.powi(j as i32);
    let step_sq = |a: f64, b: f64| -> f64 {
        match subject {
            ConditionSubject::Linear(spec) => {
                (spec.innovation_std * (abel_coefficient(spec, a) - abel_coefficient(spec, b))).powi(2)
            }
            ConditionSubject::Spectrum(s) => compensated_sum(s.lines().iter().map(|l| {
                // per line: Δg² + Δh² − 2λΔgΔh with Δh = λΔg
                let dq = 1.0 / (1.0 - a * l.lambda) - 1.0 / (1.0 - b * l.lambda);
                l.weight * dq * dq * l.one_minus * (1.0 + l.lambda)
            })),
        }
    };
    Ok((1..=levels)
        .map(|j| {
            let (a, b) = (ladder(j), ladder(j + 1));
            let inc = step_sq(a, b).sqrt();
            let lg = -(1.0 - a).ln();
            let rate = lg * lg.max(std::f64::consts::E).ln().powf(tau);
            CauchyRateRow { level: j, t: a, increment: inc, ratio: inc * rate }
        })
        .collect())
}
