//! Atomic spectral measures of normal contractions, `‖U_n(f)‖²`, region masses
//! `μ(D_n)` and the spectral convergence criteria.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::coeffs::SlowlyVaryingSpec;
use crate::criterion::{sum_quantity, CriterionReport, Verdict, DEFAULT_SLOPE_MARGIN};
use crate::error::{LabError, Result};
use crate::numerics::Polar;

/// Index of the largest region `D_n` containing a point; `Infinite` only at `z = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DnIndex {
    Finite(u64),
    Infinite,
}

impl DnIndex {
    pub fn at_least(&self, n: u64) -> bool {
        match self {
            DnIndex::Finite(k) => *k >= n,
            DnIndex::Infinite => true,
        }
    }
}

fn in_region(z: &Polar, n: u64) -> bool {
    let nf = n as f64;
    z.r >= 1.0 - 1.0 / nf && z.theta.abs() <= 1.0 / nf
}

/// Largest `n` with `z ∈ D_n = {1−1/n ≤ r ≤ 1, |θ| ≤ 1/n}`.
pub fn dn_index(z: Polar) -> Result<DnIndex> {
    if z.r > 1.0 || z.r.is_nan() {
        return Err(LabError::Domain(format!("|z| = {} > 1", z.r)));
    }
    if z.is_one() {
        return Ok(DnIndex::Infinite);
    }
    let radial = if z.r == 1.0 { f64::INFINITY } else { 1.0 / (1.0 - z.r) };
    let angular = if z.theta == 0.0 { f64::INFINITY } else { 1.0 / z.theta.abs() };
    let m = radial.min(angular).min(9.0e18);
    let mut k = (m.floor() as u64).max(1);
    // settle rounding at the region boundary against the definition itself
    while k > 1 && !in_region(&z, k) {
        k -= 1;
    }
    while in_region(&z, k + 1) {
        k += 1;
    }
    Ok(DnIndex::Finite(k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: Polar,
    pub weight: f64,
}

/// Finite positive measure with atoms in the closed unit disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicSpectralMeasure {
    atoms: Vec<Atom>,
}

impl AtomicSpectralMeasure {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        let mut clean = Vec::with_capacity(atoms.len());
        for a in atoms {
            if !(a.point.r >= 0.0 && a.point.r <= 1.0) {
                return Err(LabError::Domain(format!("atom radius {} outside [0,1]", a.point.r)));
            }
            if !(a.weight >= 0.0 && a.weight.is_finite()) {
                return Err(LabError::Invalid(format!("weight {} not finite and nonnegative", a.weight)));
            }
            let p = if a.point.r == 0.0 { Polar { r: 0.0, theta: 0.0 } } else { Polar::new(a.point.r, a.point.theta) };
            if clean.iter().any(|b: &Atom| b.point == p) {
                return Err(LabError::Invalid(format!("duplicate atom at r={}, θ={}", p.r, p.theta)));
            }
            clean.push(Atom { point: p, weight: a.weight });
        }
        Ok(Self { atoms: clean })
    }

    /// From `(r, θ in turns, weight)` triples.
    pub fn from_rows(rows: &[(f64, f64, f64)]) -> Result<Self> {
        Self::new(rows.iter().map(|&(r, t, w)| Atom { point: Polar::new(r, t), weight: w }).collect())
    }

    pub fn from_complex(points: &[(Complex64, f64)]) -> Result<Self> {
        Self::new(points.iter().map(|&(z, w)| Atom { point: Polar::from_complex(z), weight: w }).collect())
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn rows(&self) -> Vec<(f64, f64, f64)> {
        self.atoms.iter().map(|a| (a.point.r, a.point.theta, a.weight)).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }
}

/// `μ(D_n)`.
pub fn mu_dn(m: &AtomicSpectralMeasure, n: u64) -> f64 {
    m.atoms
        .iter()
        .filter(|a| dn_index(a.point).map(|d| d.at_least(n)).unwrap_or(false))
        .map(|a| a.weight)
        .sum()
}

/// `g_n(z) = Σ_{k=1}^n z^k`, in closed form `z(1−zⁿ)/(1−z)` with both factors
/// formed from the polar representation.
pub fn g_n(z: Polar, n: u64) -> Complex64 {
    if z.is_one() {
        return Complex64::new(n as f64, 0.0);
    }
    if z.r == 0.0 || n == 0 {
        return Complex64::new(0.0, 0.0);
    }
    z.z() * z.one_minus_pow(n as f64) / z.one_minus()
}

/// `‖U_n(f)‖² = Σ_j w_j |g_n(z_j)|²`.
pub fn un_norm_sq(m: &AtomicSpectralMeasure, n: u64) -> f64 {
    m.atoms.iter().map(|a| a.weight * g_n(a.point, n).norm_sqr()).sum()
}

/// `‖U_n‖²` for all `1 ≤ n ≤ n_max` (index 0 holds 0), each from the closed
/// form. A running power recurrence is cheaper but drifts by `O(n·ε)`, which
/// is fatal where `zⁿ ≈ 1`.
pub fn un_norm_sq_prefix(m: &AtomicSpectralMeasure, n_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    for a in &m.atoms {
        if a.weight == 0.0 || a.point.r == 0.0 {
            continue;
        }
        for (n, slot) in out.iter_mut().enumerate().skip(1) {
            *slot += a.weight * g_n(a.point, n as u64).norm_sqr();
        }
    }
    out
}

/// `Σ_j w_j |Σ_k a_k z_j^k|²`, by Horner per atom in double-double.
///
/// Near-cancelling sums (`zⁿ ≈ 1` on the unit circle) lose about `n·ε` relative
/// accuracy in plain f64, through both the rounding of `z` and the recursion.
pub fn weighted_norm_sq(m: &AtomicSpectralMeasure, a: &[Complex64]) -> f64 {
    let tau = TwoFloat::new_add(std::f64::consts::TAU, 2.449_293_598_294_706_4e-16);
    m.atoms
        .iter()
        .map(|atom| {
            let angle = tau * atom.point.theta;
            let (c, s) = (angle.cos() * atom.point.r, angle.sin() * atom.point.r);
            let (mut re, mut im) = (TwoFloat::from(0.0), TwoFloat::from(0.0));
            for k in a.iter().rev() {
                (re, im) = (re * c - im * s + k.re, re * s + im * c + k.im);
            }
            atom.weight * f64::from(re * re + im * im)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "camelCase")]
pub enum Kernel {
    /// `1/|1−z|`
    InvOneMinus,
    /// `1/|1−z|²`
    InvOneMinusSq,
    /// `log²|1−z|`
    LogSq,
    /// `b(1/|1−z|)/|1−z|`
    BOverOneMinus { spec: SlowlyVaryingSpec },
    /// `ψ²(1/|1−z|)` with `ψ(x) = √(x b(x))/(2c√π)`
    PsiSq { spec: SlowlyVaryingSpec, c: f64 },
    /// `1/(|1−z| |1−tz|²)`
    ResolventMixed { t: f64 },
    /// `1/|1−tz|²`
    ResolventSq { t: f64 },
}

impl Kernel {
    pub fn eval(&self, z: Polar) -> f64 {
        if z.is_one() {
            return match self {
                Kernel::ResolventSq { t } => 1.0 / ((1.0 - t) * (1.0 - t)),
                _ => f64::INFINITY,
            };
        }
        let d = z.one_minus().norm();
        let resolvent = |t: f64| {
            let zz = z.z();
            (Complex64::new(1.0, 0.0) - zz * t).norm_sqr()
        };
        match self {
            Kernel::InvOneMinus => 1.0 / d,
            Kernel::InvOneMinusSq => 1.0 / (d * d),
            Kernel::LogSq => d.ln().powi(2),
            Kernel::BOverOneMinus { spec } => spec.eval_clamped(1.0 / d) / d,
            Kernel::PsiSq { spec, c } => {
                let x = 1.0 / d;
                x * spec.eval_clamped(x) / (4.0 * c * c * std::f64::consts::PI)
            }
            Kernel::ResolventMixed { t } => 1.0 / (d * resolvent(*t)),
            Kernel::ResolventSq { t } => 1.0 / resolvent(*t),
        }
    }
}

/// `Σ_j w_j kernel(z_j)`; `+∞` when a weighted atom sits at a singularity.
pub fn spectral_integral(m: &AtomicSpectralMeasure, kernel: &Kernel) -> f64 {
    m.atoms.iter().filter(|a| a.weight > 0.0).map(|a| a.weight * kernel.eval(a.point)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnBoundRow {
    pub n: u64,
    /// `n² μ(D_n) / ‖U_n‖²`.
    pub lhs_ratio: f64,
    /// `Σ_{j=0}^{n−1} (2j+1) μ(D_j) − ‖U_n‖²` with `D_0 := D̄`.
    pub ub_slack: f64,
    /// The same slack with the sum started at `j = 1`.
    pub ub_slack_from_one: f64,
    pub un_norm_sq: f64,
}

/// Two-sided region bounds for `‖U_n‖²`, `2 ≤ n ≤ n_max`.
pub fn check_sn_bounds(m: &AtomicSpectralMeasure, n_max: u64) -> Result<Vec<SnBoundRow>> {
    if n_max < 2 {
        return Err(LabError::Invalid("nMax must be ≥ 2".into()));
    }
    let total = m.total_mass();
    let mut rows = Vec::new();
    let mut partial = 0.0; // Σ_{j=1}^{n−1} (2j+1) μ(D_j)
    for n in 1..=n_max {
        if n >= 2 {
            let u = un_norm_sq(m, n);
            let mass = mu_dn(m, n);
            let lhs_ratio = if u > 0.0 {
                n as f64 * n as f64 * mass / u
            } else if mass > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            rows.push(SnBoundRow {
                n,
                lhs_ratio,
                ub_slack: total + partial - u,
                ub_slack_from_one: partial - u,
                un_norm_sq: u,
            });
        }
        partial += (2 * n + 1) as f64 * mu_dn(m, n);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "camelCase")]
pub enum ChiForm {
    /// `χ(x) = x`
    X,
    /// `χ(x) = x log x (log log x)^δ`
    XLogPow { delta: f64 },
    /// `χ(x) = x b(x)`
    XTimesB { spec: SlowlyVaryingSpec },
    /// The log-squared pairing: integral weight `log²|1−z|`, series weight `log n / n³`.
    LogSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSpec {
    pub form: ChiForm,
    /// `α ∈ (0,2)` with `χ(x)/x^α` nonincreasing beyond a threshold.
    pub alpha_witness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiInvariants {
    pub nondecreasing: bool,
    /// Smallest sampled `2^k` beyond which `χ(x)/x^α` is nonincreasing.
    pub witness_threshold: Option<f64>,
    /// `min_{k ≥ 4} χ(2^{k+1})/χ(2^k)` over the sample range.
    pub doubling_tau: f64,
}

impl ChiSpec {
    pub fn new(form: ChiForm, alpha_witness: f64) -> Result<Self> {
        if !(alpha_witness > 0.0 && alpha_witness < 2.0) {
            return Err(LabError::Domain(format!("α witness {alpha_witness} outside (0,2)")));
        }
        Ok(Self { form, alpha_witness })
    }

    pub fn x() -> Self {
        Self { form: ChiForm::X, alpha_witness: 1.0 }
    }

    pub fn x_times_b(spec: SlowlyVaryingSpec) -> Self {
        Self { form: ChiForm::XTimesB { spec }, alpha_witness: 1.5 }
    }

    pub fn x_log_pow(delta: f64) -> Self {
        Self { form: ChiForm::XLogPow { delta }, alpha_witness: 1.5 }
    }

    /// `χ(x)`, with logarithms clamped at `e^e` so that `χ` is positive and
    /// nondecreasing on `[1, ∞)`.
    pub fn eval(&self, x: f64) -> f64 {
        match self.form {
            ChiForm::X => x,
            ChiForm::XLogPow { delta } => {
                let l = x.max(std::f64::consts::E.exp()).ln();
                x * l * if delta == 0.0 { 1.0 } else { l.ln().powf(delta) }
            }
            ChiForm::XTimesB { spec } => x * spec.eval_clamped(x),
            ChiForm::LogSquared => x.max(std::f64::consts::E).ln(),
        }
    }

    /// Samples the lemma's hypotheses on `x = 2^k`, `k ≤ 400`.
    pub fn check_invariants(&self) -> ChiInvariants {
        let ks: Vec<f64> = (0..=400).map(|k| (k as f64) * std::f64::consts::LN_2).collect();
        let vals: Vec<f64> = ks.iter().map(|u| self.eval(u.exp()).ln()).collect();
        let nondecreasing = vals.windows(2).all(|w| w[1] >= w[0] - 1e-12);
        let mut threshold = None;
        for i in (0..ks.len() - 1).rev() {
            let d0 = vals[i] - self.alpha_witness * ks[i];
            let d1 = vals[i + 1] - self.alpha_witness * ks[i + 1];
            if d1 <= d0 + 1e-12 {
                threshold = Some(ks[i].exp());
            } else {
                break;
            }
        }
        let doubling_tau = (4..ks.len() - 1).map(|i| (vals[i + 1] - vals[i]).exp()).fold(f64::INFINITY, f64::min);
        ChiInvariants { nondecreasing, witness_threshold: threshold, doubling_tau }
    }

    fn integral_kernel_value(&self, z: Polar) -> f64 {
        match self.form {
            ChiForm::LogSquared => Kernel::LogSq.eval(z),
            ChiForm::X => Kernel::InvOneMinus.eval(z),
            ChiForm::XTimesB { spec } => Kernel::BOverOneMinus { spec }.eval(z),
            ChiForm::XLogPow { .. } => {
                if z.is_one() {
                    f64::INFINITY
                } else {
                    self.eval(1.0 / z.one_minus().norm())
                }
            }
        }
    }
}

/// Precomputed `‖U_n‖²` and `μ(D_n)` tables shared by the criteria.
pub struct SpectralTables<'a> {
    pub measure: &'a AtomicSpectralMeasure,
    /// Largest power of two not exceeding the requested truncation.
    pub truncation_n: u64,
    pub blocks: usize,
    un: Vec<f64>,
    indices: Vec<(DnIndex, f64)>,
}

impl<'a> SpectralTables<'a> {
    pub fn new(measure: &'a AtomicSpectralMeasure, n: u64) -> Result<Self> {
        if n < 16 {
            return Err(LabError::Invalid("criterion truncation must be ≥ 16".into()));
        }
        let blocks = 63 - n.leading_zeros() as usize;
        let truncation_n = 1u64 << blocks;
        let un = un_norm_sq_prefix(measure, truncation_n as usize);
        let indices = measure
            .atoms()
            .iter()
            .map(|a| dn_index(a.point).map(|d| (d, a.weight)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { measure, truncation_n, blocks, un, indices })
    }

    fn mu(&self, n: u64) -> f64 {
        self.indices.iter().filter(|(d, _)| d.at_least(n)).map(|(_, w)| w).sum()
    }

    fn block_of(n: u64) -> usize {
        63 - n.leading_zeros() as usize
    }

    /// Integral side, split into shells by region index.
    fn integral_blocks(&self, kernel: impl Fn(Polar) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.blocks];
        for (a, (d, w)) in self.measure.atoms().iter().zip(&self.indices) {
            if *w == 0.0 {
                continue;
            }
            match d {
                DnIndex::Infinite => {
                    let k = kernel(a.point);
                    if k.is_infinite() {
                        *out.last_mut().unwrap() = f64::INFINITY;
                    }
                }
                DnIndex::Finite(k) => {
                    let j = Self::block_of(*k);
                    if j < self.blocks {
                        out[j] += w * kernel(a.point);
                    }
                }
            }
        }
        out
    }

    /// `Σ t(n)` condensed into dyadic blocks over `1 ≤ n < 2^J`.
    fn series_blocks(&self, term: impl Fn(u64) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.blocks];
        for (j, slot) in out.iter_mut().enumerate() {
            let mut acc = crate::numerics::NeumaierSum::new();
            for n in (1u64 << j)..(1u64 << (j + 1)) {
                acc.add(term(n));
            }
            *slot = acc.value();
        }
        out
    }

    fn un(&self, n: u64) -> f64 {
        self.un[n as usize]
    }

    /// The four equivalent forms of the lemma for `χ`.
    pub fn lemma(&self, chi: &ChiSpec, name: &str, margin: f64) -> CriterionReport {
        let integral = self.integral_blocks(|z| chi.integral_kernel_value(z));
        let dyadic: Vec<f64> = (0..self.blocks).map(|j| chi.eval((1u64 << j) as f64) * self.mu(1u64 << j)).collect();
        // μ(D_n) is a step function; evaluate it through the sorted index list
        let mut finite: Vec<u64> = self
            .indices
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(d, _)| match d {
                DnIndex::Finite(k) => *k,
                DnIndex::Infinite => u64::MAX,
            })
            .collect();
        finite.sort_unstable();
        let weights_by_index: Vec<f64> = {
            let mut pairs: Vec<(u64, f64)> = self
                .indices
                .iter()
                .filter(|(_, w)| *w > 0.0)
                .map(|(d, w)| (match d { DnIndex::Finite(k) => *k, DnIndex::Infinite => u64::MAX }, *w))
                .collect();
            pairs.sort_by_key(|p| p.0);
            pairs.iter().map(|p| p.1).collect()
        };
        let suffix: Vec<f64> = {
            let mut s = vec![0.0; weights_by_index.len() + 1];
            for i in (0..weights_by_index.len()).rev() {
                s[i] = s[i + 1] + weights_by_index[i];
            }
            s
        };
        let mu_fast = |n: u64| suffix[finite.partition_point(|&k| k < n)];
        let region = self.series_blocks(|n| chi.eval(n as f64) * mu_fast(n) / n as f64);
        let series = self.series_blocks(|n| {
            let nf = n as f64;
            chi.eval(nf) * self.un(n) / (nf * nf * nf)
        });
        let qs = vec![
            sum_quantity("integral", integral, margin),
            sum_quantity("dyadicRegions", dyadic, margin),
            sum_quantity("regionSeries", region, margin),
            sum_quantity("normSeries", series, margin),
        ];
        CriterionReport::from_quantities(name, qs, self.truncation_n, margin)
    }

    /// `∫ log²|1−z| dμ` against `Σ log n ‖U_n‖²/n³`.
    pub fn log_pairing(&self, margin: f64) -> CriterionReport {
        let integral = self.integral_blocks(|z| Kernel::LogSq.eval(z));
        let series = self.series_blocks(|n| {
            let nf = n as f64;
            nf.ln() * self.un(n) / (nf * nf * nf)
        });
        let qs = vec![sum_quantity("integral", integral, margin), sum_quantity("normSeries", series, margin)];
        CriterionReport::from_quantities("log", qs, self.truncation_n, margin)
    }
}

/// Lemma criterion for a general `χ`.
pub fn criterion_lemma(m: &AtomicSpectralMeasure, chi: &ChiSpec, n: u64) -> Result<CriterionReport> {
    let t = SpectralTables::new(m, n)?;
    Ok(match chi.form {
        ChiForm::LogSquared => t.log_pairing(DEFAULT_SLOPE_MARGIN),
        _ => t.lemma(chi, "lemma", DEFAULT_SLOPE_MARGIN),
    })
}

/// `f ∈ √(I−T)H` criterion: `χ(x) = x`.
pub fn criterion_sqrt(m: &AtomicSpectralMeasure, n: u64) -> Result<CriterionReport> {
    Ok(SpectralTables::new(m, n)?.lemma(&ChiSpec::x(), "sqrt", DEFAULT_SLOPE_MARGIN))
}

/// Norm convergence of `Σ Tⁿf/n`.
pub fn criterion_log(m: &AtomicSpectralMeasure, n: u64) -> Result<CriterionReport> {
    Ok(SpectralTables::new(m, n)?.log_pairing(DEFAULT_SLOPE_MARGIN))
}

/// The `b(n)‖U_n‖²/n²` criterion: `χ(x) = x b(x)`.
pub fn criterion_b(m: &AtomicSpectralMeasure, spec: &SlowlyVaryingSpec, n: u64) -> Result<CriterionReport> {
    Ok(SpectralTables::new(m, n)?.lemma(&ChiSpec::x_times_b(*spec), "b", DEFAULT_SLOPE_MARGIN))
}

/// A measure of the criterion test corpus with its constructed verdicts.
#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub name: &'static str,
    pub measure: AtomicSpectralMeasure,
    /// Verdicts for: lemma with `χ(x) = x log x log log x`, sqrt, log, `b = log`.
    pub expected: [Verdict; 4],
}

/// Builtin measures by name: `far`, `superDyadic`, `dyadicDamped`,
/// `atomAtOne`, `dyadic`, `circularDyadic`.
pub fn builtin_measure(name: &str) -> Option<AtomicSpectralMeasure> {
    let rows: Vec<(f64, f64, f64)> = match name {
        "far" => vec![(1.0, -0.5, 1.0), (0.0, 0.0, 0.5), (0.5, 0.25, 0.25)],
        "superDyadic" => (1..=40).map(|j| (1.0 - 2f64.powi(-j), 0.0, 4f64.powi(-j))).collect(),
        "dyadicDamped" => (1..=40)
            .map(|j| (1.0 - 2f64.powi(-j), 0.0, 2f64.powi(-j) * (j as f64).powf(-1.5)))
            .collect(),
        "atomAtOne" => vec![(1.0, 0.0, 0.3), (0.0, 0.0, 0.7)],
        "dyadic" => (1..=40).map(|j| (1.0 - 2f64.powi(-j), 0.0, 2f64.powi(-j))).collect(),
        "circularDyadic" => (1..=40).map(|j| (1.0, 2f64.powi(-j), 2f64.powi(-j))).collect(),
        _ => return None,
    };
    AtomicSpectralMeasure::from_rows(&rows).ok()
}

pub fn canonical_corpus() -> Vec<CorpusEntry> {
    use Verdict::{Converges as C, Diverges as D};
    let table: [(&'static str, [Verdict; 4]); 6] = [
        ("far", [C, C, C, C]),
        ("superDyadic", [C, C, C, C]),
        ("dyadicDamped", [D, C, C, D]),
        ("atomAtOne", [D, D, D, D]),
        ("dyadic", [D, D, C, D]),
        ("circularDyadic", [D, D, C, D]),
    ];
    table
        .iter()
        .map(|(name, expected)| CorpusEntry {
            name,
            measure: builtin_measure(name).expect("builtin"),
            expected: *expected,
        })
        .collect()
}

/// The four corpus criteria for one measure, sharing one set of tables.
pub fn corpus_reports(m: &AtomicSpectralMeasure, n: u64) -> Result<[CriterionReport; 4]> {
    let t = SpectralTables::new(m, n)?;
    let margin = DEFAULT_SLOPE_MARGIN;
    Ok([
        t.lemma(&ChiSpec::x_log_pow(1.0), "lemma", margin),
        t.lemma(&ChiSpec::x(), "sqrt", margin),
        t.log_pairing(margin),
        t.lemma(&ChiSpec::x_times_b(SlowlyVaryingSpec::log_pow(1.0)), "b", margin),
    ])
}
