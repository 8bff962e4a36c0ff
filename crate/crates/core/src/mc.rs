//! Monte Carlo checks: the quenched CLT by Kolmogorov–Smirnov distance, LIL
//! running maxima, and normalized-sum rate curves on dyadic grids.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::{b_star, SlowlyVaryingSpec};
use crate::criterion::Verdict;
use crate::error::{LabError, Result};
use crate::models::{
    default_grid, frac_product, to_fraction, FourierDiagonalModel, LinearPath, LinearProcessSpec, PhaseTable,
    RotationPath, Start, PHASE_TABLE_HALF_WIDTH,
};
use crate::numerics::{
    compensated_sum, ks_distance_normal, NeumaierSum, log_weight, ls_slope, mean_se, median, quantile, variance_se,
};

/// `σ² = Σ_m 2c_m²(1+λ_m)/(1−λ_m) = lim E[S_n²]/n` under the stationary law.
pub fn sigma_sq_exact(model: &FourierDiagonalModel) -> Result<f64> {
    model.spectrum().sigma_sq()
}

/// Exact stationary `E[S_n²]/n = Σ_m 2c_m² (1/n)Σ_{j,k≤n} λ_m^{|j−k|}`.
pub fn variance_rate_exact(model: &FourierDiagonalModel, n: u64) -> f64 {
    let nf = n as f64;
    compensated_sum(model.spectrum().lines().iter().map(|l| {
        // (1+λ)/(1−λ) − 2λ(1−λⁿ)/(n(1−λ)²)
        let geo = 1.0 - l.pow(nf);
        l.weight * ((1.0 + l.lambda) / l.one_minus - 2.0 * l.lambda * geo / (nf * l.one_minus * l.one_minus))
    }))
}

/// Exact `Var_x(S_n)/n` for the walk started at `x0`, from
/// `E_x[e^{2πi(mW_j ± m'W_k)}] = e^{2πi(m±m')x0} φ(m±m')^j φ(m')^{k−j}` for
/// `j ≤ k`, with `φ(q) = cos²(π·frac(qα))`. Cross-frequency terms with
/// `φ(m − m')` near 1 make this converge to `σ²` slowly.
pub fn quenched_variance_exact(model: &FourierDiagonalModel, x0: f64, n: u64) -> f64 {
    let k0 = to_fraction(x0);
    let ch = model.coeffs.len();
    let xph: Vec<f64> = model.frequencies.iter().map(|m| frac_product(*m, k0)).collect();
    let mut second = NeumaierSum::new();
    for a in 0..ch {
        for b in 0..ch {
            let lam = model.eigenvalues[b];
            for sgn in [1.0, -1.0] {
                let q = (model.phase_steps[a] + sgn * model.phase_steps[b]).rem_euclid(1.0);
                let mu = (std::f64::consts::PI * q).cos().powi(2);
                let w = (std::f64::consts::TAU * (xph[a] + sgn * xph[b])).cos();
                // Σ_{1≤j≤k≤n} μ^j λ^{k−j} and the diagonal Σ μ^j
                let (mut p, mut h) = (1.0, 0.0);
                let (mut s, mut diag) = (NeumaierSum::new(), NeumaierSum::new());
                for _ in 0..n {
                    p *= mu;
                    h = lam * h + p;
                    s.add(h);
                    diag.add(p);
                }
                second.add(2.0 * model.coeffs[a] * model.coeffs[b] * w * (s.value() - 0.5 * diag.value()));
            }
        }
    }
    // the ordered sum over j ≤ k covers half of the symmetric double sum
    let es2 = 2.0 * second.value();
    let mean = compensated_sum((0..ch).map(|i| {
        let l = model.eigenvalues[i];
        let g = if l == 1.0 { n as f64 } else { l * -(n as f64 * l.ln()).exp_m1() / (1.0 - l) };
        2.0 * model.coeffs[i] * (std::f64::consts::TAU * xph[i]).cos() * g
    }));
    (es2 - mean * mean) / n as f64
}

/// Process driving a Monte Carlo check.
#[derive(Debug, Clone, Copy)]
pub enum Subject<'a> {
    Linear(&'a LinearProcessSpec),
    Rotation { model: &'a FourierDiagonalModel, start: Start },
}

impl Subject<'_> {
    /// Exact asymptotic variance `lim E[S_n²]/n` of the simulated process
    /// (retained lags only).
    pub fn sigma_sq(&self) -> Result<f64> {
        match self {
            Subject::Linear(spec) => Ok(spec.truncated().long_run_variance()),
            Subject::Rotation { model, .. } => sigma_sq_exact(model),
        }
    }

    fn table(&self) -> Option<PhaseTable> {
        match self {
            Subject::Linear(_) => None,
            Subject::Rotation { model, .. } => Some(PhaseTable::new(model, PHASE_TABLE_HALF_WIDTH)),
        }
    }
}

/// One trajectory of `X_1, X_2, …`; the rotation value is computed exactly as
/// in the batch simulator, so sums replay bit-identically.
enum Stepper<'a> {
    Linear(LinearPath<'a>),
    Rotation(RotationPath<'a>),
}

impl<'a> Stepper<'a> {
    fn new(subject: &Subject<'a>, table: Option<&'a PhaseTable>, seed: u64, rep: u64) -> Self {
        match *subject {
            Subject::Linear(spec) => Stepper::Linear(LinearPath::new(spec, seed, rep)),
            Subject::Rotation { model, start } => {
                Stepper::Rotation(RotationPath::new(model, table.expect("phase table"), start, seed, rep))
            }
        }
    }

    fn next(&mut self) -> f64 {
        match self {
            Stepper::Linear(p) => p.step().0,
            Stepper::Rotation(p) => {
                p.step();
                p.value(p.steps)
            }
        }
    }
}

/// Runs `reps` trajectories in parallel (order-preserving), each reduced by `per_rep`.
fn run_reps<T: Send, F>(subject: &Subject, seed: u64, reps: u64, per_rep: F) -> Vec<T>
where
    F: Fn(&mut dyn FnMut() -> f64) -> T + Sync,
{
    let table = subject.table();
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut st = Stepper::new(subject, table.as_ref(), seed, rep);
            per_rep(&mut || st.next())
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Quenched CLT

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CltResult {
    /// `None` for linear processes (no starting point).
    pub start: Option<Start>,
    pub n: u64,
    pub reps: u64,
    pub seed: u64,
    /// KS distance of `S_n/√n` to `N(0, σ²_ref)`; for `σ²_ref = 0` the
    /// distance to the point mass at 0.
    pub ks_distance: f64,
    /// `1.36/√reps`.
    pub ks_critical_5pct: f64,
    pub sigma_hat_sq: f64,
    pub sigma_hat_se: f64,
    pub sigma_ref_sq: f64,
    /// Exact `Var_x(S_n)/n` at the fixed start (rotation chains only).
    pub quenched_var_exact: Option<f64>,
    pub degenerate: bool,
    /// `mean |S_n/√n|`, the degenerate-branch statistic.
    pub mean_abs: f64,
}

pub const MIN_CLT_REPS: u64 = 100;
pub const MIN_CLT_N: u64 = 1000;

fn ks_distance_point_mass(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let below = samples.iter().filter(|x| **x < 0.0).count() as f64 / n;
    let above = samples.iter().filter(|x| **x > 0.0).count() as f64 / n;
    below.max(above)
}

/// KS distance of `S_n/√n` over `reps` trajectories to `N(0, σ²)`.
pub fn quenched_clt_test(subject: Subject, n: u64, reps: u64, seed: u64) -> Result<CltResult> {
    if reps < MIN_CLT_REPS {
        return Err(LabError::Range(format!("reps = {reps} below {MIN_CLT_REPS}")));
    }
    if n < MIN_CLT_N {
        return Err(LabError::Range(format!("n = {n} below {MIN_CLT_N}")));
    }
    let sigma_ref_sq = subject.sigma_sq()?;
    let scale = (n as f64).sqrt();
    let z: Vec<f64> = run_reps(&subject, seed, reps, |next| {
        let mut s = 0.0;
        for _ in 0..n {
            s += next();
        }
        s / scale
    });
    let degenerate = sigma_ref_sq == 0.0;
    let ks_distance = if degenerate {
        ks_distance_point_mass(&z)
    } else {
        ks_distance_normal(&z, sigma_ref_sq.sqrt())
    };
    let (sigma_hat_sq, sigma_hat_se) = variance_se(&z);
    Ok(CltResult {
        start: match subject {
            Subject::Linear(_) => None,
            Subject::Rotation { start, .. } => Some(start),
        },
        n,
        reps,
        seed,
        ks_distance,
        ks_critical_5pct: 1.36 / (reps as f64).sqrt(),
        sigma_hat_sq,
        sigma_hat_se,
        sigma_ref_sq,
        quenched_var_exact: match subject {
            Subject::Rotation { model, start: Start::Fixed { x0 } } => Some(quenched_variance_exact(model, x0, n)),
            _ => None,
        },
        degenerate,
        mean_abs: compensated_sum(z.iter().map(|x| x.abs())) / z.len() as f64,
    })
}

// ---------------------------------------------------------------------------
// LIL

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LilResult {
    pub n0: u64,
    pub n_max: u64,
    pub seeds: Vec<u64>,
    /// `max_{n0≤n≤N} |S_n|/√(2n ln ln n)` per seed.
    pub per_seed: Vec<f64>,
    pub median: f64,
    pub sigma_ref: f64,
    /// `[0.7σ, 1.2σ]`.
    pub band: (f64, f64),
    pub within_band: bool,
    /// Seeds whose running max falls outside the band.
    pub excursions: usize,
    pub degenerate: bool,
}

pub const LIL_BAND: (f64, f64) = (0.7, 1.2);

/// Running maxima of `|S_n|/√(2n ln ln n)` over `[n0, N]`, one trajectory per seed.
pub fn lil_diagnostic(subject: Subject, n_max: u64, seeds: &[u64], n0: u64) -> Result<LilResult> {
    if n0 < 16 {
        return Err(LabError::Range(format!("n0 = {n0} < 16 leaves ln ln n ≤ 0")));
    }
    if n_max <= n0 || seeds.is_empty() {
        return Err(LabError::Invalid("need N > n0 and at least one seed".into()));
    }
    let sigma_ref = subject.sigma_sq()?.sqrt();
    let table = subject.table();
    let per_seed: Vec<f64> = seeds
        .par_iter()
        .map(|&seed| {
            let mut st = Stepper::new(&subject, table.as_ref(), seed, 0);
            let mut s = 0.0;
            let mut best: f64 = 0.0;
            for k in 1..=n_max {
                s += st.next();
                if k >= n0 {
                    let kf = k as f64;
                    best = best.max(s.abs() / (2.0 * kf * kf.ln().ln()).sqrt());
                }
            }
            best
        })
        .collect();
    let med = median(&per_seed);
    let band = (LIL_BAND.0 * sigma_ref, LIL_BAND.1 * sigma_ref);
    let inside = |v: f64| v >= band.0 && v <= band.1;
    let degenerate = sigma_ref == 0.0;
    Ok(LilResult {
        n0,
        n_max,
        seeds: seeds.to_vec(),
        excursions: per_seed.iter().filter(|v| !inside(**v)).count(),
        median: med,
        sigma_ref,
        band,
        within_band: !degenerate && inside(med),
        per_seed,
        degenerate,
    })
}

// ---------------------------------------------------------------------------
// Rates

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Normalizer {
    /// `√(n b*(n))`.
    SqrtNBStar { b: SlowlyVaryingSpec },
    SqrtN,
    /// `√(n ln ln n)`.
    SqrtNLogLogN,
    /// `√n ln n (ln ln n)^{β/2}`.
    SqrtNLog2LogLog { beta: f64 },
}

impl Normalizer {
    /// Values on `grid` (logs clamped so that `ln ln n ≥ 1`).
    pub fn on_grid(&self, grid: &[u64]) -> Vec<f64> {
        grid.iter()
            .map(|&n| {
                let x = n as f64;
                match self {
                    Normalizer::SqrtNBStar { b } => (x * b_star(b, n)).sqrt(),
                    Normalizer::SqrtN => x.sqrt(),
                    Normalizer::SqrtNLogLogN => (x * log_weight(x, 0.0, 1.0)).sqrt(),
                    Normalizer::SqrtNLog2LogLog { beta } => x.sqrt() * log_weight(x, 1.0, beta / 2.0),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum RateStatistic {
    /// `|S_n|/normalizer(n)`.
    Normalized { normalizer: Normalizer },
    /// Partial sums `Σ_{k≤n} X_k/√k`.
    SeriesSqrt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RateCheckResult {
    pub statistic: RateStatistic,
    pub n_max: u64,
    pub reps: u64,
    pub seed: u64,
    pub grid: Vec<u64>,
    /// `curves[rep][i]` at `grid[i]`.
    pub curves: Vec<Vec<f64>>,
    /// Cross-trajectory mean of `|curve|`, with 5% and 95% quantiles.
    pub mean_curve: Vec<f64>,
    pub q05: Vec<f64>,
    pub q95: Vec<f64>,
    /// Log-log slope of the mean curve over the fit window (series: of the
    /// block RMS against the block start).
    pub trend_slope: f64,
    pub fit_from: u64,
    /// `|Σ_{2^j ≤ k < 2^{j+1}} X_k/√k|` per rep and block (series only).
    pub block_tails: Vec<Vec<f64>>,
    pub block_rms: Vec<f64>,
    /// Per-rep max of the block tails over the top half of the blocks.
    pub cauchy_tail: Vec<f64>,
    /// Fraction of reps whose curve envelope over the last decade is below
    /// the envelope over the decade before.
    pub envelope_shrink_fraction: f64,
    /// Verdict of the hypothesis criterion, as recorded by the caller.
    pub hypothesis: Option<Verdict>,
    /// Set unless the hypothesis verdict is `Converges`.
    pub exploratory: bool,
    /// Slope in `(−0.05, 0]`: decay too slow to separate from a constant.
    pub slow: bool,
}

fn check_rate_args(n_max: u64, reps: u64) -> Result<()> {
    if n_max < 16 || reps < 2 {
        return Err(LabError::Invalid("need N ≥ 16 and at least 2 reps".into()));
    }
    Ok(())
}

/// Fit window start: three decades below `N` in powers of two, at least 16.
fn fit_start(n_max: u64) -> u64 {
    (n_max >> 10).max(16)
}

fn envelope_shrinks(grid: &[u64], curve: &[f64], n_max: u64) -> bool {
    let (d1, d2) = (n_max / 100, n_max / 10);
    let sup = |lo: u64, hi: u64| {
        grid.iter()
            .zip(curve)
            .filter(|(n, _)| **n >= lo && **n < hi)
            .map(|(_, v)| v.abs())
            .fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.max(v))))
    };
    let top = grid.iter().zip(curve).filter(|(n, _)| **n >= d2).map(|(_, v)| v.abs()).fold(0.0, f64::max);
    match sup(d1, d2) {
        Some(prev) => top < prev,
        None => false,
    }
}

fn summarize(
    statistic: RateStatistic,
    n_max: u64,
    reps: u64,
    seed: u64,
    grid: Vec<u64>,
    curves: Vec<Vec<f64>>,
    hypothesis: Option<Verdict>,
) -> RateCheckResult {
    let mut mean_curve = Vec::with_capacity(grid.len());
    let mut q05 = Vec::with_capacity(grid.len());
    let mut q95 = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let mut col: Vec<f64> = curves.iter().map(|c| c[i].abs()).collect();
        mean_curve.push(compensated_sum(col.iter().copied()) / col.len() as f64);
        col.sort_by(|a, b| a.total_cmp(b));
        q05.push(quantile(&col, 0.05));
        q95.push(quantile(&col, 0.95));
    }
    let fit_from = fit_start(n_max);
    let (xs, ys): (Vec<f64>, Vec<f64>) = grid
        .iter()
        .zip(&mean_curve)
        .filter(|(n, m)| **n >= fit_from && **m > 0.0)
        .map(|(n, m)| ((*n as f64).ln(), m.ln()))
        .unzip();
    let trend_slope = if xs.len() >= 2 { ls_slope(&xs, &ys) } else { 0.0 };
    let shrink = curves.iter().filter(|c| envelope_shrinks(&grid, c, n_max)).count();
    RateCheckResult {
        statistic,
        n_max,
        reps,
        seed,
        envelope_shrink_fraction: shrink as f64 / reps as f64,
        grid,
        curves,
        mean_curve,
        q05,
        q95,
        trend_slope,
        fit_from,
        block_tails: Vec::new(),
        block_rms: Vec::new(),
        cauchy_tail: Vec::new(),
        exploratory: hypothesis != Some(Verdict::Converges),
        hypothesis,
        slow: trend_slope > -0.05 && trend_slope <= 0.0,
    }
}

/// Curves `|S_n|/normalizer(n)` on the dyadic grid up to `N`.
pub fn rate_check(
    subject: Subject,
    normalizer: Normalizer,
    n_max: u64,
    reps: u64,
    seed: u64,
    hypothesis: Option<Verdict>,
) -> Result<RateCheckResult> {
    check_rate_args(n_max, reps)?;
    let grid = default_grid(n_max);
    let norm = normalizer.on_grid(&grid);
    let curves = run_reps(&subject, seed, reps, |next| {
        let mut out = Vec::with_capacity(grid.len());
        let mut s = 0.0;
        let mut gi = 0;
        for k in 1..=n_max {
            s += next();
            if grid[gi] == k {
                out.push(s.abs() / norm[gi]);
                gi += 1;
            }
        }
        out
    });
    Ok(summarize(RateStatistic::Normalized { normalizer }, n_max, reps, seed, grid, curves, hypothesis))
}

/// Partial sums of `Σ X_k/√k` on the dyadic grid, with per-block Cauchy tails.
pub fn series_sqrt_check(
    subject: Subject,
    n_max: u64,
    reps: u64,
    seed: u64,
    hypothesis: Option<Verdict>,
) -> Result<RateCheckResult> {
    check_rate_args(n_max, reps)?;
    let grid = default_grid(n_max);
    let blocks = 63 - n_max.leading_zeros();
    let runs: Vec<(Vec<f64>, Vec<f64>)> = run_reps(&subject, seed, reps, |next| {
        let mut out = Vec::with_capacity(grid.len());
        let mut tails = vec![0.0; blocks as usize];
        let mut s = 0.0;
        let mut gi = 0;
        for k in 1..=n_max {
            let term = next() / (k as f64).sqrt();
            s += term;
            let j = 63 - k.leading_zeros();
            if j < blocks {
                tails[j as usize] += term;
            }
            if grid[gi] == k {
                out.push(s);
                gi += 1;
            }
        }
        (out, tails.into_iter().map(f64::abs).collect())
    });
    let (curves, block_tails): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let mut r = summarize(RateStatistic::SeriesSqrt, n_max, reps, seed, grid, curves, hypothesis);
    r.block_rms = (0..blocks as usize)
        .map(|j| {
            let sq: Vec<f64> = block_tails.iter().map(|t| t[j] * t[j]).collect();
            mean_se(&sq).0.sqrt()
        })
        .collect();
    let half = blocks as usize / 2;
    r.cauchy_tail = block_tails.iter().map(|t| t[half..].iter().copied().fold(0.0, f64::max)).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = r
        .block_rms
        .iter()
        .enumerate()
        .filter(|(j, v)| (1u64 << j) >= r.fit_from && **v > 0.0)
        .map(|(j, v)| ((j as f64) * std::f64::consts::LN_2, v.ln()))
        .unzip();
    r.trend_slope = if xs.len() >= 2 { ls_slope(&xs, &ys) } else { 0.0 };
    r.slow = r.trend_slope > -0.05 && r.trend_slope <= 0.0;
    r.block_tails = block_tails;
    Ok(r)
}
