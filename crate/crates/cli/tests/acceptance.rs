//! Acceptance suite: one PASS/FAIL line per criterion, with its runtime
//! against the budget. Companion lines are informational and do not count.
//! Seeds are the criterion numbers.

use std::time::{Duration, Instant};

use ergolab_cli::{run_args, RunOutcome};
use ergolab_core::approx::{
    mw_condition_check, normal_chain_martingale, remainder_bounds_linear, remainder_bounds_model,
    wu_decompose_linear, ConditionForm, ConditionSubject,
};
use ergolab_core::coeffs::{
    alpha_seq, check_prop_a1, delta_seq, gamma_seq, zygmund_seq, A1Row, BoundaryPath, SlowlyVaryingSpec,
};
use ergolab_core::criterion::Verdict;
use ergolab_core::mc::{lil_diagnostic, quenched_clt_test, sigma_sq_exact, Subject, LIL_BAND};
use ergolab_core::models::{
    rep_rng, rotation_spectrum_default, simulate_linear, simulate_rotation_chain, CoeffRule, FourierDiagonalModel,
    LinearProcessSpec, Start,
};
use ergolab_core::numerics::NeumaierSum;
use ergolab_core::spectral::{
    canonical_corpus, check_sn_bounds, corpus_reports, un_norm_sq, weighted_norm_sq, AtomicSpectralMeasure,
};
use ergolab_core::Complex64;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
    notes: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail, notes: Vec::new() }
    }

    fn note(mut self, line: String) -> Self {
        self.notes.push(line);
        self
    }
}

fn run(id: u32, name: &str, budget: Duration, f: impl FnOnce() -> Result<Outcome, String>) -> bool {
    let t = Instant::now();
    let result = f();
    let elapsed = t.elapsed();
    let in_time = elapsed <= budget;
    let (pass, detail, notes) = match result {
        Ok(o) => (o.pass && in_time, o.detail, o.notes),
        Err(e) => (false, format!("error: {e}"), Vec::new()),
    };
    println!(
        "[{}] {id:>2} {name} ({:.1}s, budget {}s{}): {detail}",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs(),
        if in_time { "" } else { ", OVER BUDGET" },
    );
    for n in notes {
        println!("           {n}");
    }
    pass
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn c1() -> Result<Outcome, String> {
    let mut worst_residual: f64 = 0.0;
    for spec in [SlowlyVaryingSpec::constant(), SlowlyVaryingSpec::log_pow(1.0)] {
        let g = gamma_seq(&spec, 5000, 1e-12).map_err(err)?;
        let a = alpha_seq(&g, 5000).map_err(err)?;
        for n in 1..=5000 {
            let mut s = NeumaierSum::new();
            for k in 1..=n {
                s.add(g.values[k] * a.values[n - k]);
            }
            worst_residual = worst_residual.max((a.values[n] - s.value()).abs());
        }
    }
    let d = delta_seq(200);
    let mut s = NeumaierSum::new();
    let mut z = 1.0;
    for v in &d.values {
        s.add(v * z);
        z *= 0.5;
    }
    let delta_err = (s.value() - 0.5f64.sqrt()).abs();
    let mut ratios = Vec::new();
    for beta in [0.25, 0.5, 0.75] {
        let a = zygmund_seq(beta, 10_000).map_err(err)?;
        ratios.push(a.values[10_000] * statrs::function::gamma::gamma(1.0 - beta) * 1e4f64.powf(beta));
    }
    let pass = worst_residual < 1e-12 && delta_err < 1e-10 && ratios.iter().all(|r| (0.99..=1.01).contains(r));
    Ok(Outcome::new(
        pass,
        format!("max renewal residual {worst_residual:.1e}, delta error {delta_err:.1e}, power-law ratios {ratios:.5?}"),
    ))
}

fn a1_rows(spec: &SlowlyVaryingSpec) -> Result<Vec<A1Row>, String> {
    let path = BoundaryPath::parse("radial:1e-2..1e-5").map_err(err)?;
    // the radial tail needs N ≈ 40/ε
    let g = gamma_seq(spec, 4_000_000, 1e-12).map_err(err)?;
    check_prop_a1(&g, spec, &path).map_err(err)
}

/// Value at ε = 1e-5 in [0.9, 1.1] and |value − 1| strictly decreasing over ε = 1e-3..1e-5.
fn a1_ok(values: &[f64]) -> bool {
    let last = values[values.len() - 1];
    let tail = &values[values.len() - 3..];
    (0.9..=1.1).contains(&last) && tail.windows(2).all(|w| (w[1] - 1.0).abs() < (w[0] - 1.0).abs())
}

fn c2() -> Result<Outcome, String> {
    let mut pass = true;
    let mut sharp_pass = true;
    let mut detail = Vec::new();
    let mut sharp_detail = Vec::new();
    for (name, spec) in [("const", SlowlyVaryingSpec::constant()), ("log", SlowlyVaryingSpec::log_pow(1.0))] {
        let rows = a1_rows(&spec)?;
        let r: Vec<f64> = rows.iter().map(|r| r.ratio_i).collect();
        let s: Vec<f64> = rows.iter().map(|r| r.ratio_i_sharp).collect();
        pass &= a1_ok(&r);
        sharp_pass &= a1_ok(&s);
        detail.push(format!("{name} ratio_i {r:.4?}"));
        sharp_detail.push(format!("{name} {s:.4?}"));
    }
    let companion = format!(
        "companion: ratio with the constant 4c√π over ε = 1e-2..1e-5 ({}): {}",
        if sharp_pass { "within [0.9, 1.1], monotone" } else { "outside band or not monotone" },
        sharp_detail.join("; ")
    );
    Ok(Outcome::new(pass, detail.join("; ")).note(companion))
}

fn random_measure(seed: u64, index: u64) -> AtomicSpectralMeasure {
    let mut rng = rep_rng(seed, index);
    let k = rng.gen_range(1..=8);
    let rows: Vec<(f64, f64, f64)> = (0..k)
        .map(|_| {
            let r = match rng.gen_range(0..3) {
                0 => rng.gen::<f64>(),
                1 => 1.0 - 10f64.powf(-rng.gen_range(0.0..4.0)),
                _ => 1.0,
            };
            let theta = if rng.gen_bool(0.5) { rng.gen_range(-0.5..0.5) } else { rng.gen_range(-0.01..0.01) };
            (r, theta, rng.gen_range(0.0..2.0))
        })
        .collect();
    AtomicSpectralMeasure::from_rows(&rows).expect("valid rows")
}

fn c3() -> Result<Outcome, String> {
    let mut worst_rel: f64 = 0.0;
    let mut worst_slack: f64 = f64::INFINITY;
    for i in 0..100 {
        let m = random_measure(3, i);
        let mut coeffs = vec![Complex64::new(0.0, 0.0)];
        for n in 1..=512u64 {
            coeffs.push(Complex64::new(1.0, 0.0));
            let closed = un_norm_sq(&m, n);
            let brute = weighted_norm_sq(&m, &coeffs);
            let scale = closed.abs().max(brute.abs()).max(f64::MIN_POSITIVE);
            worst_rel = worst_rel.max((closed - brute).abs() / scale);
        }
        for row in check_sn_bounds(&m, 512).map_err(err)? {
            let scale = row.un_norm_sq.max(f64::MIN_POSITIVE);
            worst_slack = worst_slack.min(row.ub_slack / scale);
        }
    }
    Ok(Outcome::new(
        worst_rel <= 1e-12 && worst_slack >= -1e-9,
        format!("max relative Parseval error {worst_rel:.1e}, min relative upper-bound slack {worst_slack:.2e}"),
    ))
}

fn c4() -> Result<Outcome, String> {
    let mut mismatches = Vec::new();
    let mut inconsistent = 0;
    let (mut conv, mut div) = (0, 0);
    for entry in canonical_corpus() {
        let reports = corpus_reports(&entry.measure, 1 << 16).map_err(err)?;
        for (report, expected) in reports.iter().zip(entry.expected) {
            if !report.consistent {
                inconsistent += 1;
            }
            if report.verdict != expected {
                mismatches.push(format!("{}:{} got {:?}", entry.name, report.criterion, report.verdict));
            }
        }
        // the split is by construction under the sqrt form (the central criterion)
        match entry.expected[1] {
            Verdict::Converges => conv += 1,
            _ => div += 1,
        }
    }
    Ok(Outcome::new(
        mismatches.is_empty() && inconsistent == 0 && (conv, div) == (3, 3),
        format!(
            "{conv} convergent / {div} divergent measures, {} verdict mismatches {mismatches:?}, {inconsistent} inconsistent",
            mismatches.len()
        ),
    ))
}

fn c5() -> Result<Outcome, String> {
    let spec = LinearProcessSpec::lacunary(24, 1.0).map_err(err)?;
    let s = ConditionSubject::Linear(&spec);
    let wc = mw_condition_check(s, ConditionForm::Wc, 40).map_err(err)?;
    let zwc = mw_condition_check(s, ConditionForm::Zwc { tau: 0.75 }, 20).map_err(err)?;
    let curve = &zwc.quantities[0].blocks;
    let window = &curve[curve.len() - 7..];
    let growing = window.windows(2).all(|w| w[1] > w[0]);
    Ok(Outcome::new(
        wc.verdict == Verdict::Converges && zwc.verdict == Verdict::Diverges && growing,
        format!(
            "WC {:?} (slope {:.2}), ZWC {:?} via {} (slope {:.2}); normalized sup at n = 2^14..2^20: {window:.3?}",
            wc.verdict, wc.tail_slope, zwc.verdict, zwc.quantities[0].name, zwc.tail_slope
        ),
    ))
}

fn c6() -> Result<Outcome, String> {
    let spectrum = rotation_spectrum_default(CoeffRule::FactorialIndex);
    let s = ConditionSubject::Spectrum(&spectrum);
    let normal = mw_condition_check(s, ConditionForm::NormalChain { delta: 0.0 }, 40).map_err(err)?;
    let wu = mw_condition_check(s, ConditionForm::QuenchedWu { delta: 1.5 }, 40).map_err(err)?;
    Ok(Outcome::new(
        normal.verdict == Verdict::Converges && wu.verdict == Verdict::Diverges,
        format!(
            "normal-chain {:?} (block slope {:.2}), quenched Wu δ = 1.5 {:?} (block slope {:.2})",
            normal.verdict, normal.tail_slope, wu.verdict, wu.tail_slope
        ),
    ))
}

fn c7() -> Result<Outcome, String> {
    let spec = LinearProcessSpec::lacunary(12, 1.0).map_err(err)?.truncated();
    let batch = simulate_linear(&spec, 1 << 12, 7, 10_000).map_err(err)?;
    let d = wu_decompose_linear(&spec, &batch).map_err(err)?;
    let grid: Vec<u64> = (4..=12).map(|k| 1u64 << k).collect();
    let report = remainder_bounds_linear(&spec, &grid, Some(&d)).map_err(err)?;
    let k = report.k_estimate.unwrap_or(f64::NAN);
    let bounded = report.rows.iter().all(|r| r.empirical_rn2.unwrap() <= r.wu_bound.unwrap());
    let top: Vec<f64> = report
        .rows
        .iter()
        .filter(|r| r.n as f64 >= 4096.0 / 10.0)
        .map(|r| r.empirical_rn2.unwrap() / r.n as f64)
        .collect();
    let decreasing = top.windows(2).all(|w| w[1] < w[0]);
    let k_exact = report
        .rows
        .iter()
        .map(|r| r.exact_rn2.unwrap() / r.theta_sq_sum.unwrap())
        .fold(0.0f64, f64::max);
    Ok(Outcome::new(
        k.is_finite() && bounded && decreasing,
        format!("K = {k:.4}, E[R_n²]/n over n = 512..4096: {top:.5?}"),
    )
    .note(format!("companion: K from the exact E[R_n²] = {k_exact:.4}")))
}

fn c8() -> Result<Outcome, String> {
    let model = FourierDiagonalModel::rotation(7, CoeffRule::FactorialIndex).map_err(err)?;
    let grid = [100u64, 1000, 10_000];
    let report = remainder_bounds_model(&model, &grid).map_err(err)?;
    let mut pass = true;
    let mut detail = Vec::new();
    for (row, &n) in report.rows.iter().zip(&grid) {
        let batch = simulate_rotation_chain(&model, n, Start::Stationary, 8, 2000).map_err(err)?;
        let d = normal_chain_martingale(&model, &batch, 1.0 - 1.0 / n as f64).map_err(err)?;
        let (_, m, se) = *d.remainder_moments().last().unwrap();
        let b = row.bound_b.unwrap();
        pass &= m <= b + 3.0 * se;
        detail.push(format!("n = {n}: {m:.3e} ± {se:.1e} vs boundB {b:.3e}"));
    }
    Ok(Outcome::new(pass, detail.join("; ")))
}

fn c9() -> Result<Outcome, String> {
    let model = FourierDiagonalModel::rotation(7, CoeffRule::FactorialIndex).map_err(err)?;
    let sigma_sq = sigma_sq_exact(&model).map_err(err)?;
    let mut pass = true;
    let mut detail = Vec::new();
    let mut notes = Vec::new();
    for x0 in [0.0, 1.0 / 3.0, 0.618] {
        let r = quenched_clt_test(Subject::Rotation { model: &model, start: Start::Fixed { x0 } }, 10_000, 5000, 9)
            .map_err(err)?;
        let z = (r.sigma_hat_sq - sigma_sq) / r.sigma_hat_se;
        pass &= r.ks_distance <= 0.05 && z.abs() <= 3.0;
        detail.push(format!("x0 = {x0:.3}: KS {:.4}, var {:.5} ± {:.5} ({z:+.2} SE)", r.ks_distance, r.sigma_hat_sq, r.sigma_hat_se));
        let q = r.quenched_var_exact.unwrap();
        notes.push(format!(
            "companion x0 = {x0:.3}: finite-n quenched Var_x(S_n)/n = {q:.5} ({:+.2} SE from the estimate)",
            (r.sigma_hat_sq - q) / r.sigma_hat_se
        ));
    }
    let mut o = Outcome::new(pass, format!("σ² = {sigma_sq:.5}; {}", detail.join("; ")));
    o.notes = notes;
    Ok(o)
}

fn c10() -> Result<Outcome, String> {
    let iid = LinearProcessSpec::iid(1.0).map_err(err)?;
    let lac = LinearProcessSpec::lacunary(10, 1.0).map_err(err)?;
    let seeds = [10, 11, 12, 13, 14];
    let mut pass = true;
    let mut detail = Vec::new();
    let mut notes = Vec::new();
    for (name, spec) in [("iid", &iid), ("lacunary", &lac)] {
        let r = lil_diagnostic(Subject::Linear(spec), 1_000_000, &seeds, 1000).map_err(err)?;
        pass &= r.within_band;
        detail.push(format!(
            "{name}: median {:.3} = {:.3}σ (σ = {:.3})",
            r.median,
            r.median / r.sigma_ref,
            r.sigma_ref
        ));
        if r.excursions > 0 {
            let per: Vec<f64> = r.per_seed.iter().map(|v| v / r.sigma_ref).collect();
            notes.push(format!(
                "WARN {name}: {} seed(s) outside [{}, {}]σ, per seed {per:.3?}",
                r.excursions, LIL_BAND.0, LIL_BAND.1
            ));
        }
    }
    let mut o = Outcome::new(pass, detail.join("; "));
    o.notes = notes;
    Ok(o)
}

fn c11() -> Result<Outcome, String> {
    let tmp = tempfile::tempdir().map_err(err)?;
    let runs: Vec<Vec<&str>> = vec![
        vec!["coeffs", "--b", "log", "--N", "4096", "--zygmund", "0.5"],
        vec!["criteria", "--measure", "dyadic"],
        vec!["simulate", "rotation", "--lmax", "7", "--n", "10000", "--reps", "200", "--seed", "11", "--start", "0.0"],
        vec!["simulate", "linear", "--process", "lacunary:kmax=10", "--n", "4096", "--reps", "200", "--seed", "11"],
        vec!["approx", "wu", "--process", "lacunary:kmax=10", "--n-grid", "16..4096", "--reps", "200", "--seed", "11"],
        vec!["approx", "normal", "--n-grid", "100,1000", "--reps", "200", "--seed", "11"],
        vec!["limits", "clt", "--model", "rotation:lmax=7", "--n", "1000", "--reps", "200", "--seed", "11"],
        vec!["limits", "rate", "--process", "iid", "--n-max", "4096", "--reps", "50", "--seed", "11"],
    ];
    let mut csv_checked = 0;
    let mut failures = Vec::new();
    for (i, args) in runs.iter().enumerate() {
        let out = tmp.path().join(format!("run{i}"));
        let mut full = args.clone();
        let out_s = out.to_string_lossy().into_owned();
        full.extend(["--out", out_s.as_str(), "--threads", "1"]);
        run_args(full).map_err(|e| format!("{args:?}: {e:#}"))?;
        match run_args(["verify", out_s.as_str()]).map_err(err)? {
            RunOutcome::Verified(r) => {
                csv_checked += r.files.iter().filter(|f| f.path.ends_with(".csv")).count();
                if !r.all_match() {
                    failures.push(format!("{} {:?}", args[..2].join(" "), r.lines()));
                }
            }
            RunOutcome::Written(_) => return Err("verify wrote outputs".into()),
        }
    }
    Ok(Outcome::new(
        failures.is_empty() && csv_checked > 0,
        format!("{} runs re-derived from their manifests, {csv_checked} CSVs bit-identical; mismatches {failures:?}", runs.len()),
    ))
}

fn main() {
    let mins = |m: u64| Duration::from_secs(60 * m);
    let results = [
        run(1, "coefficient identities", Duration::from_secs(10), c1),
        run(2, "boundary asymptotic of A", mins(1), c2),
        run(3, "spectral consistency", Duration::from_secs(30), c3),
        run(4, "criterion corpus", mins(1), c4),
        run(5, "linear example: WC holds, ZWC fails", mins(1), c5),
        run(6, "rotation example: normal-chain holds, quenched Wu fails", mins(1), c6),
        run(7, "Wu remainder bound", mins(5), c7),
        run(8, "normal-chain remainder bound", mins(5), c8),
        run(9, "quenched CLT", mins(10), c9),
        run(10, "LIL diagnostic", mins(10), c10),
        run(11, "manifest reproducibility", mins(5), c11),
    ];
    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
