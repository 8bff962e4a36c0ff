//! Shared numerical helpers: compensated summation, adaptive quadrature,
//! least-squares slopes and a few special functions.

use num_complex::Complex64;

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// An infinite running sum is returned as is (its compensation is NaN).
    pub fn value(&self) -> f64 {
        if self.sum.is_finite() {
            self.sum + self.comp
        } else {
            self.sum
        }
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = NeumaierSum::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Compensated complex accumulator (componentwise Neumaier).
#[derive(Debug, Clone, Copy, Default)]
pub struct ComplexSum {
    re: NeumaierSum,
    im: NeumaierSum,
}

impl ComplexSum {
    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Integral of `f` over `[x0, ∞)` for an integrand decaying like `x^{-3/2}`
/// up to slowly varying factors. Substitutes `x = x0·e^u` and integrates
/// `u ∈ [0, 90]` piecewise.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: &F, x0: f64, rel_tol: f64) -> f64 {
    let g = |u: f64| {
        let x = x0 * u.exp();
        f(x) * x
    };
    // rough scale for the absolute tolerance
    let scale = g(0.0).abs().max(1e-300);
    let mut total = NeumaierSum::new();
    let mut lo = 0.0;
    for hi in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 90.0] {
        total.add(integrate(&g, lo, hi, rel_tol * scale * 0.1));
        lo = hi;
    }
    total.value()
}

/// Harmonic number extended to real arguments `x ≥ 0`, `H(x) = ψ(x+1) + γ_E`,
/// from the asymptotic series at `x ≥ 32` and `H(x) = H(x+1) − 1/(x+1)` below.
pub fn harmonic(x: f64) -> f64 {
    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    let mut shift = 0.0;
    let mut y = x;
    while y < 32.0 {
        y += 1.0;
        shift += 1.0 / y;
    }
    let inv2 = 1.0 / (y * y);
    let series = 1.0 / (2.0 * y) - inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)));
    y.ln() + EULER_GAMMA + series - shift
}

/// `Σ_{l>k} l^{−s}` for `s > 1`: explicit terms up to `l ≥ 1000`, then the
/// Euler–Maclaurin tail through the third derivative.
pub fn power_tail_sum(s: f64, k: u64) -> f64 {
    let mut acc = NeumaierSum::new();
    let mut l = k + 1;
    while l < 1000 {
        acc.add((l as f64).powf(-s));
        l += 1;
    }
    let x = l as f64;
    let f = x.powf(-s);
    acc.add(x.powf(1.0 - s) / (s - 1.0));
    acc.add(0.5 * f);
    acc.add(s * f / (12.0 * x));
    acc.add(-s * (s + 1.0) * (s + 2.0) * f / (720.0 * x * x * x));
    acc.value()
}

/// `Σ_{n=a}^{b} f(n)` for a smooth, slowly varying `f`: direct summation of
/// short ranges, otherwise 1024 explicit terms followed by Euler–Maclaurin
/// (quadrature plus first-derivative correction).
pub fn sum_smooth<F: Fn(f64) -> f64>(f: &F, a: u64, b: u64) -> f64 {
    if b < a {
        return 0.0;
    }
    if b - a < 2048 {
        return compensated_sum((a..=b).map(|n| f(n as f64)));
    }
    let mut acc = NeumaierSum::new();
    for n in a..a + 1024 {
        acc.add(f(n as f64));
    }
    let lo = (a + 1024) as f64;
    let hi = b as f64;
    let deriv = |x: f64| {
        let h = 1e-3 * x;
        (f(x + h) - f(x - h)) / (2.0 * h)
    };
    let g = |v: f64| {
        let x = v.exp();
        f(x) * x
    };
    let scale = (f(lo).abs() * lo).max(f(hi).abs() * hi).max(1e-300);
    acc.add(integrate(&g, lo.ln(), hi.ln(), 1e-15 * scale));
    acc.add(0.5 * (f(lo) + f(hi)));
    acc.add((deriv(hi) - deriv(lo)) / 12.0);
    acc.value()
}

/// Blocks with at most this many terms are summed term by term.
pub const EXACT_BLOCK_TERMS: u64 = 4096;

/// Dyadic block sums `B_j = Σ_{2^j ≤ n < 2^{j+1}} t(n)` for `j < j_max`.
/// Long blocks use the midpoint rule `∫_{2^j−1/2}^{2^{j+1}−1/2} t`, evaluated
/// by 64-interval Simpson in `ln x`; `t` must be smooth on those blocks.
pub fn dyadic_block_sums<F: Fn(f64) -> f64>(t: &F, j_max: u32) -> Vec<f64> {
    (0..j_max)
        .map(|j| {
            let a = 1u64 << j;
            if a <= EXACT_BLOCK_TERMS {
                return compensated_sum((a..2 * a).map(|n| t(n as f64)));
            }
            let lo = (a as f64 - 0.5).ln();
            let hi = (2.0 * a as f64 - 0.5).ln();
            let m = 64;
            let h = (hi - lo) / m as f64;
            let mut acc = NeumaierSum::new();
            for i in 0..=m {
                let v = lo + i as f64 * h;
                let x = v.exp();
                let c = if i == 0 || i == m {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                acc.add(c * t(x) * x);
            }
            acc.value() * h / 3.0
        })
        .collect()
}

/// `ln x` clamped below at `ln e^e = e`, so that `ln ln x ≥ 1`; the
/// convention used by every log-weighted condition.
pub fn log_clamped(x: f64) -> f64 {
    x.max(std::f64::consts::E.exp()).ln()
}

/// `(ln x)^a (ln ln x)^b` with the clamped logarithm.
pub fn log_weight(x: f64, a: f64, b: f64) -> f64 {
    let l = log_clamped(x);
    let w = if a == 0.0 { 1.0 } else { l.powf(a) };
    if b == 0.0 {
        w
    } else {
        w * l.ln().powf(b)
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Kolmogorov–Smirnov distance between the empirical law of `samples`
/// and N(0, sigma²).
pub fn ks_distance_normal(samples: &[f64], sigma: f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = std_normal_cdf(x / sigma);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Mean and standard error of the mean (compensated).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = compensated_sum(xs.iter().copied()) / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sample variance with the standard error of the variance estimate
/// (delta method from the fourth central moment).
pub fn variance_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = compensated_sum(xs.iter().copied()) / n;
    let m2 = compensated_sum(xs.iter().map(|x| (x - mean).powi(2))) / n;
    let m4 = compensated_sum(xs.iter().map(|x| (x - mean).powi(4))) / n;
    let var = m2 * n / (n - 1.0);
    (var, ((m4 - m2 * m2) / n).max(0.0).sqrt())
}

/// Empirical quantile by linear interpolation, `q ∈ [0,1]`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile(&v, 0.5)
}

/// `e^w − 1` for complex `w` without cancellation for small `|w|`.
pub fn complex_expm1(w: Complex64) -> Complex64 {
    let half_sin = (0.5 * w.im).sin();
    let re = w.re.exp_m1() * w.im.cos() - 2.0 * half_sin * half_sin;
    let im = w.re.exp() * w.im.sin();
    Complex64::new(re, im)
}

/// `cos(2πx)` and `sin(2πx)` for `x` in turns, exact at multiples of 1/4.
pub fn cis_turns(x: f64) -> (f64, f64) {
    let x = x - x.round();
    let q = 4.0 * x;
    if q == q.round() {
        return match q as i64 {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            -1 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        };
    }
    let a = std::f64::consts::TAU * x;
    (a.cos(), a.sin())
}

/// Dyadic grid 2^lo, …, 2^hi, with `extra` appended when it is not already
/// a grid point.
pub fn dyadic_grid(lo: u32, hi: u32, extra: Option<u64>) -> Vec<u64> {
    let mut g: Vec<u64> = (lo..=hi).map(|j| 1u64 << j).collect();
    if let Some(n) = extra {
        if !g.contains(&n) {
            g.push(n);
            g.sort_unstable();
        }
    }
    g
}

/// A point of the closed unit disk in polar form, `z = r·e^{2iπθ}` with
/// `θ ∈ [−1/2, 1/2)` in turns. Keeping the polar form lets `Log z` and
/// `1 − z` be formed without cancellation near `z = 1`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Polar {
    pub r: f64,
    pub theta: f64,
}

impl Polar {
    /// Normalizes `θ` to `[−1/2, 1/2)`; a negative radius is folded into the angle.
    pub fn new(r: f64, theta: f64) -> Self {
        let (r, theta) = if r < 0.0 { (-r, theta + 0.5) } else { (r, theta) };
        let mut t = theta - theta.floor();
        if t >= 0.5 {
            t -= 1.0;
        }
        Polar { r, theta: t }
    }

    pub fn from_complex(z: Complex64) -> Self {
        Polar::new(z.norm(), z.im.atan2(z.re) / std::f64::consts::TAU)
    }

    pub fn z(&self) -> Complex64 {
        let (c, s) = cis_turns(self.theta);
        Complex64::new(self.r * c, self.r * s)
    }

    pub fn is_one(&self) -> bool {
        self.r == 1.0 && self.theta == 0.0
    }

    /// Principal logarithm `ln r + 2πiθ`.
    pub fn ln(&self) -> Complex64 {
        Complex64::new((-(1.0 - self.r)).ln_1p(), std::f64::consts::TAU * self.theta)
    }

    /// `1 − z`, formed as `(1−r) + 2r·sin²(πθ) − i·r·sin(2πθ)`.
    pub fn one_minus(&self) -> Complex64 {
        let h = (std::f64::consts::PI * self.theta).sin();
        let (_, s) = cis_turns(self.theta);
        Complex64::new((1.0 - self.r) + 2.0 * self.r * h * h, -self.r * s)
    }

    /// `n·Log z` with the angle `n·θ` reduced mod 1 before scaling by 2π.
    /// The product is split exactly as `p + e`, so the reduction loses nothing
    /// even when `n·θ` is near an integer.
    fn ln_times(&self, n: f64) -> Complex64 {
        let p = self.theta * n;
        let e = self.theta.mul_add(n, -p);
        let turns = (p - p.round()) + e;
        Complex64::new((-(1.0 - self.r)).ln_1p() * n, std::f64::consts::TAU * turns)
    }

    /// `1 − zⁿ` via `−expm1(n·Log z)`.
    pub fn one_minus_pow(&self, n: f64) -> Complex64 {
        if self.r == 0.0 {
            return Complex64::new(1.0, 0.0);
        }
        -complex_expm1(self.ln_times(n))
    }

    /// `zⁿ` via `exp(n·Log z)`.
    pub fn pow(&self, n: f64) -> Complex64 {
        if self.r == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        self.ln_times(n).exp()
    }
}
