use ergolab_core::coeffs::{b_star, SlowlyVaryingSpec};
use ergolab_core::criterion::Verdict;
use ergolab_core::mc::*;
use ergolab_core::models::*;
use ergolab_core::LabError;

// Σ_m 2c_m²(1+λ_m)/(1−λ_m) for the rotation model lMax = 7 (mpmath, 30 digits)
const SIGMA_SQ_LMAX7: f64 = 0.080_712_156_327_597_846_761;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs())
}

fn rotation7() -> FourierDiagonalModel {
    FourierDiagonalModel::rotation(7, CoeffRule::FactorialIndex).unwrap()
}

/// `(1/n) Σ_m 2c_m² Σ_{j,k≤n} λ^{|j−k|}` by the running recursion.
fn double_sum_rate(model: &FourierDiagonalModel, n: usize) -> f64 {
    model
        .spectrum()
        .lines()
        .iter()
        .map(|l| {
            let (mut carry, mut acc) = (0.0, 0.0);
            for j in 0..n {
                if j > 0 {
                    carry = l.lambda * (carry + 1.0);
                }
                acc += 1.0 + 2.0 * carry;
            }
            l.weight * acc / n as f64
        })
        .sum()
}

#[test]
fn sigma_sq_oracle() {
    let model = rotation7();
    assert!(close(sigma_sq_exact(&model).unwrap(), SIGMA_SQ_LMAX7, 1e-13));
    let direct = double_sum_rate(&model, 100_000);
    assert!(close(variance_rate_exact(&model, 100_000), direct, 1e-10));
    assert!(close(direct, SIGMA_SQ_LMAX7, 1e-3));
}

#[test]
fn sigma_sq_trivial_cases() {
    assert_eq!(sigma_sq_exact(&FourierDiagonalModel::zero()).unwrap(), 0.0);
    // phase 1/2 gives λ = cos²(π/2) = 0
    let m = FourierDiagonalModel::from_phases(vec![3], vec![0.4], vec![0.5]).unwrap();
    assert!(close(sigma_sq_exact(&m).unwrap(), 2.0 * 0.16, 1e-14));
    let fixed = FourierDiagonalModel::from_phases(vec![3], vec![0.4], vec![0.0]).unwrap();
    assert!(matches!(sigma_sq_exact(&fixed), Err(LabError::Degenerate(_))));
}

#[test]
fn clt_degenerate_branch() {
    let model = FourierDiagonalModel::zero();
    let r = quenched_clt_test(Subject::Rotation { model: &model, start: Start::Fixed { x0: 0.3 } }, 1000, 100, 1)
        .unwrap();
    assert!(r.degenerate);
    assert_eq!(r.ks_distance, 0.0);
    assert_eq!(r.mean_abs, 0.0);
}

#[test]
fn clt_preconditions() {
    let spec = LinearProcessSpec::iid(1.0).unwrap();
    assert!(matches!(quenched_clt_test(Subject::Linear(&spec), 1000, 99, 1), Err(LabError::Range(_))));
    assert!(matches!(quenched_clt_test(Subject::Linear(&spec), 999, 100, 1), Err(LabError::Range(_))));
}

#[test]
fn clt_iid_ks_calibration() {
    let spec = LinearProcessSpec::iid(1.0).unwrap();
    let passes = (0..20u64)
        .filter(|seed| {
            let r = quenched_clt_test(Subject::Linear(&spec), 1000, 400, 1000 + seed).unwrap();
            assert!(!r.degenerate && (0.0..=1.0).contains(&r.ks_distance));
            r.ks_distance < r.ks_critical_5pct
        })
        .count();
    assert!(passes >= 18, "{passes}/20");
}

#[test]
fn clt_rotation_small() {
    let model = rotation7();
    let r = quenched_clt_test(Subject::Rotation { model: &model, start: Start::Fixed { x0: 0.618 } }, 2000, 1000, 5)
        .unwrap();
    assert!(r.ks_distance < 0.06, "{}", r.ks_distance);
    // at n = 2000 the quenched variance is still 15% above σ²
    let q = r.quenched_var_exact.unwrap();
    assert!((r.sigma_hat_sq - q).abs() <= 3.0 * r.sigma_hat_se, "{} ± {} vs {q}", r.sigma_hat_sq, r.sigma_hat_se);
}

// Var_x(S_n)/n, independent numpy evaluation of the same expansion
const QUENCHED_VAR: [(f64, u64, f64); 4] = [
    (0.0, 2000, 0.100_165_091_928_530_33),
    (0.0, 10_000, 0.086_765_570_847_714_98),
    (0.618, 2000, 0.092_431_782_497_568_93),
    (0.618, 10_000, 0.084_516_709_863_068_35),
];

#[test]
fn quenched_variance_oracle() {
    let model = rotation7();
    for (x0, n, v) in QUENCHED_VAR {
        let q = quenched_variance_exact(&model, x0, n);
        assert!(close(q, v, 1e-7), "{x0} {n}: {q} vs {v}");
    }
    // the start-averaged quenched variance is the stationary one
    let avg: f64 = (0..4096).map(|i| quenched_variance_exact(&model, (i as f64 + 0.5) / 4096.0, 300)).sum::<f64>()
        / 4096.0;
    assert!(close(avg, variance_rate_exact(&model, 300), 1e-3), "{avg}");
}

#[test]
fn clt_deterministic() {
    let model = rotation7();
    let s = Subject::Rotation { model: &model, start: Start::Stationary };
    assert_eq!(quenched_clt_test(s, 1000, 200, 3).unwrap(), quenched_clt_test(s, 1000, 200, 3).unwrap());
}

#[test]
fn rotation_variance_rate() {
    let model = rotation7();
    let n = 100_000;
    let batch = simulate_rotation_chain(&model, n, Start::Stationary, 17, 400).unwrap();
    let z: Vec<f64> = batch.final_sums().iter().map(|s| s / (n as f64).sqrt()).collect();
    let (v, se) = ergolab_core::numerics::variance_se(&z);
    assert!((v - SIGMA_SQ_LMAX7).abs() <= 3.0 * se, "{v} ± {se}");
}

#[test]
fn lil_preconditions_and_degenerate() {
    let spec = LinearProcessSpec::iid(1.0).unwrap();
    assert!(matches!(lil_diagnostic(Subject::Linear(&spec), 100_000, &[1], 15), Err(LabError::Range(_))));
    assert!(lil_diagnostic(Subject::Linear(&spec), 100_000, &[], 1000).is_err());
    let zero = FourierDiagonalModel::zero();
    let r = lil_diagnostic(Subject::Rotation { model: &zero, start: Start::Stationary }, 100_000, &[1, 2], 1000).unwrap();
    assert!(r.degenerate && !r.within_band);
    assert!(r.per_seed.iter().all(|v| *v == 0.0));
}

#[test]
fn lil_iid_band() {
    let spec = LinearProcessSpec::iid(1.0).unwrap();
    let r = lil_diagnostic(Subject::Linear(&spec), 1_000_000, &[1, 2, 3, 4, 5], 1000).unwrap();
    assert_eq!(r.sigma_ref, 1.0);
    assert!(r.within_band, "{:?}", r.per_seed);
}

#[test]
fn bstar_normalizer_matches_coeffs() {
    let b = SlowlyVaryingSpec::log_pow(1.0);
    let grid = default_grid(1 << 12);
    let norm = Normalizer::SqrtNBStar { b: b.clone() }.on_grid(&grid);
    for (n, v) in grid.iter().zip(norm) {
        assert_eq!(v, (*n as f64 * b_star(&b, *n)).sqrt());
    }
    assert!(Normalizer::SqrtNLogLogN.on_grid(&grid).iter().all(|v| *v > 0.0));
    assert!(Normalizer::SqrtNLog2LogLog { beta: 1.0 }.on_grid(&grid).iter().all(|v| *v > 0.0));
}

#[test]
fn zero_function_curves() {
    let zero = FourierDiagonalModel::zero();
    let s = Subject::Rotation { model: &zero, start: Start::Stationary };
    let r = rate_check(s, Normalizer::SqrtN, 1 << 10, 8, 1, Some(Verdict::Converges)).unwrap();
    assert!(r.curves.iter().flatten().all(|v| *v == 0.0));
    assert!(!r.exploratory);
    let r = series_sqrt_check(s, 1 << 10, 8, 1, None).unwrap();
    assert!(r.curves.iter().flatten().all(|v| *v == 0.0));
    assert!(r.cauchy_tail.iter().all(|v| *v == 0.0));
    assert!(r.exploratory);
}

#[test]
fn iid_loglog_rate_is_slow() {
    let spec = LinearProcessSpec::iid(1.0).unwrap();
    let r = rate_check(Subject::Linear(&spec), Normalizer::SqrtNLogLogN, 1 << 16, 200, 2, None).unwrap();
    // E|S_n|/√(n ln ln n) ~ √(2/π)/√(ln ln n): slope barely below 0
    assert!(r.trend_slope < 0.0 && r.trend_slope > -0.1, "{}", r.trend_slope);
    assert!(r.curves.iter().flatten().all(|v| v.is_finite()));
}

#[test]
fn iid_series_blocks_do_not_shrink() {
    // Σ X_k/√k diverges for iid X: each dyadic block has variance ≈ ln 2
    let spec = LinearProcessSpec::iid(1.0).unwrap();
    let r = series_sqrt_check(Subject::Linear(&spec), 1 << 16, 400, 3, None).unwrap();
    let target = std::f64::consts::LN_2.sqrt();
    for v in &r.block_rms[4..] {
        assert!(close(*v, target, 0.15), "{v}");
    }
    assert!(r.trend_slope > -0.05, "{}", r.trend_slope);
}

#[test]
fn rotation_rate_trend() {
    let model = rotation7();
    let s = Subject::Rotation { model: &model, start: Start::Stationary };
    let r = rate_check(s, Normalizer::SqrtNLogLogN, 1 << 20, 48, 4, Some(Verdict::Converges)).unwrap();
    assert_eq!(r.fit_from, 1 << 10);
    assert!(r.trend_slope < 0.0, "{}", r.trend_slope);
}

#[test]
fn results_serialize() {
    let spec = LinearProcessSpec::iid(1.0).unwrap();
    let r = rate_check(Subject::Linear(&spec), Normalizer::SqrtN, 64, 4, 1, None).unwrap();
    let back: RateCheckResult = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(back, r);
}
