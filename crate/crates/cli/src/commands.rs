//! Command bodies. Each produces its files in memory so that `verify` can
//! re-derive them without touching the original run directory.

use std::path::Path;

use ergolab_core::approx::{
    mw_condition_check, normal_chain_martingale, remainder_bounds_linear, remainder_bounds_model,
    resolvent_decompose_linear, resolvent_gamma, wu_decompose_linear, ConditionForm, ConditionSubject,
    MartingaleDecomposition, RemainderBoundReport,
};
use ergolab_core::coeffs::{alpha_seq, check_prop_a1, delta_seq, gamma_seq, zygmund_seq, CoefficientSeq, PathKind};
use ergolab_core::criterion::CriterionReport;
use ergolab_core::mc::{
    lil_diagnostic, quenched_clt_test, rate_check, series_sqrt_check, CltResult, RateCheckResult, Subject,
};
use ergolab_core::models::{
    rep_rng, rotation_spectrum_default, simulate_linear, simulate_rotation_chain, FourierDiagonalModel,
    LinearProcessSpec, Start, TrajectoryBatch,
};
use ergolab_core::spectral::{
    builtin_measure, criterion_b, criterion_lemma, criterion_log, criterion_sqrt, AtomicSpectralMeasure, ChiSpec,
};
use rand::Rng;
use serde::Serialize;

use crate::manifest::{fmt_opt, read_manifest, sha256_hex, Outputs, Table};
use crate::sources::{read_measure_csv, MeasureArg};
use crate::{
    usage, ApproxCmd, ApproxLinearArgs, CltArgs, CoeffsArgs, Command, CriteriaArgs, CriteriaSet, LilArgs, LimitsCmd,
    SeriesArgs, SimulateCmd, SubjectArgs, COEFF_CEILING,
};

pub fn produce(cmd: &Command) -> anyhow::Result<Outputs> {
    match cmd {
        Command::Coeffs(a) => coeffs(a),
        Command::Criteria(a) => criteria(a),
        Command::Simulate(SimulateCmd::Rotation(a)) => {
            let model_arg = a.model();
            let model = model_arg.build()?;
            let batch = simulate_rotation_chain(&model, a.n, a.start, a.seed, a.reps)?;
            let mut out = Outputs::default();
            out.hash_input("model", &model);
            batch_outputs(&mut out, &batch)?;
            Ok(out)
        }
        Command::Simulate(SimulateCmd::Linear(a)) => {
            let spec = a.process.build()?;
            let batch = simulate_linear(&spec, a.n, a.seed, a.reps)?;
            let mut out = Outputs::default();
            out.hash_input("process", &spec);
            batch_outputs(&mut out, &batch)?;
            Ok(out)
        }
        Command::Approx(ApproxCmd::Wu(a)) => approx_linear(a, None),
        Command::Approx(ApproxCmd::Resolvent(a)) => approx_linear(&a.linear, Some(a.t)),
        Command::Approx(ApproxCmd::Normal(a)) => {
            let model = a.model.build()?;
            let grid = &a.n_grid.0;
            let mut moments = Vec::new();
            let mut decompositions = Vec::new();
            for &n in grid {
                let batch = simulate_rotation_chain(&model, n, a.start, a.seed, a.reps)?;
                let d = normal_chain_martingale(&model, &batch, 1.0 - 1.0 / n as f64)?;
                moments.push(*d.remainder_moments().last().expect("grid ends at n"));
                decompositions.push(DecompositionSummary::of(n, &d));
            }
            let mut report = remainder_bounds_model(&model, grid)?;
            report.attach_empirical(&moments);
            let mut out = Outputs::default();
            out.hash_input("model", &model);
            out.add("bounds.csv", bounds_csv(&report)?);
            out.add_json("report.json", &ApproxReport { bounds: &report, decompositions, resolvent_gamma: None })?;
            Ok(out)
        }
        Command::Limits(LimitsCmd::Clt(a)) => clt(a),
        Command::Limits(LimitsCmd::Lil(a)) => lil(a),
        Command::Limits(LimitsCmd::Rate(a)) => rate(&a.series, Some(&a.normalizer)),
        Command::Limits(LimitsCmd::Series(a)) => rate(a, None),
        Command::Verify(_) => Err(usage("verify does not produce outputs")),
    }
}

// ---------------------------------------------------------------------------
// coeffs

fn seq_csv(seq: &CoefficientSeq) -> anyhow::Result<Vec<u8>> {
    let mut t = Table::new(&["n", "value", "prefixSum"])?;
    for (n, v, p) in seq.rows() {
        t.row([n.to_string(), v.to_string(), p.to_string()])?;
    }
    t.finish()
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SeqSummary {
    name: &'static str,
    n_max: usize,
    tail_bound: f64,
    normalizer: Option<f64>,
    tail_estimate: Option<f64>,
}

impl SeqSummary {
    fn of(name: &'static str, s: &CoefficientSeq) -> Self {
        Self { name, n_max: s.n_max(), tail_bound: s.tail_bound, normalizer: s.normalizer, tail_estimate: s.tail_estimate }
    }
}

fn coeffs(a: &CoeffsArgs) -> anyhow::Result<Outputs> {
    let n = a.n as usize;
    if n == 0 || n > COEFF_CEILING {
        return Err(usage(format!("--n must lie in [1, {COEFF_CEILING}]")));
    }
    let mut out = Outputs::default();
    out.hash_input("b", &a.b);
    let gamma = gamma_seq(&a.b, n, a.tol)?;
    let alpha = alpha_seq(&gamma, n)?;
    let delta = delta_seq(n);
    out.add("gamma.csv", seq_csv(&gamma)?);
    out.add("alpha.csv", seq_csv(&alpha)?);
    out.add("delta.csv", seq_csv(&delta)?);
    let mut summary = vec![SeqSummary::of("gamma", &gamma), SeqSummary::of("alpha", &alpha), SeqSummary::of("delta", &delta)];

    if let Some(betas) = &a.zygmund {
        let mut t = Table::new(&["beta", "n", "value", "prefixSum"])?;
        for &beta in &betas.0 {
            let z = zygmund_seq(beta, n)?;
            for (k, v, p) in z.rows() {
                t.row([beta.to_string(), k.to_string(), v.to_string(), p.to_string()])?;
            }
            summary.push(SeqSummary::of("zygmund", &z));
        }
        out.add("zygmund.csv", t.finish()?);
    }

    if let Some(path) = &a.check_a1 {
        // the radial tail r^N/(1−r) needs N ≈ 40/ε before it drops below the target
        let eps_min = path.epsilons.last().copied().expect("nonempty path");
        let needed = match path.kind {
            PathKind::Radial | PathKind::Diagonal => (40.0 / eps_min).ceil() as usize,
            PathKind::Circular => n,
        };
        let n_a1 = n.max(needed);
        if n_a1 > COEFF_CEILING {
            return Err(usage(format!("--check-a1 down to ε = {eps_min:e} needs N = {n_a1} > {COEFF_CEILING}")));
        }
        let g = if n_a1 == n { gamma.clone() } else { gamma_seq(&a.b, n_a1, a.tol)? };
        let rows = check_prop_a1(&g, &a.b, path)?;
        let mut t = Table::new(&["epsilon", "ratioI", "ratioISharp", "ratioII"])?;
        for r in &rows {
            t.row([r.epsilon.to_string(), r.ratio_i.to_string(), r.ratio_i_sharp.to_string(), r.ratio_ii.to_string()])?;
        }
        out.add("a1.csv", t.finish()?);
    }
    out.add_json("coeffs.json", &summary)?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// criteria

fn load_measure(m: &MeasureArg) -> anyhow::Result<AtomicSpectralMeasure> {
    match m {
        MeasureArg::Builtin { name } => builtin_measure(name).ok_or_else(|| usage(format!("unknown measure '{name}'"))),
        MeasureArg::File { path } => read_measure_csv(path).map_err(|e| usage(format!("--measure: {e:#}"))),
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct CriteriaOutput<'a> {
    source: serde_json::Value,
    set: CriteriaSet,
    reports: &'a [CriterionReport],
}

fn spectral_reports(m: &AtomicSpectralMeasure, a: &CriteriaArgs, set: CriteriaSet) -> anyhow::Result<Vec<CriterionReport>> {
    let mut out = Vec::new();
    let all = set == CriteriaSet::All;
    if all || set == CriteriaSet::Lemma {
        out.push(criterion_lemma(m, &ChiSpec::x_log_pow(1.0), a.n)?);
    }
    if all || set == CriteriaSet::Sqrt {
        out.push(criterion_sqrt(m, a.n)?);
    }
    if all || set == CriteriaSet::Log {
        out.push(criterion_log(m, a.n)?);
    }
    if all || set == CriteriaSet::B {
        out.push(criterion_b(m, &a.bfamily, a.n)?);
    }
    Ok(out)
}

fn criteria(a: &CriteriaArgs) -> anyhow::Result<Outputs> {
    let mut out = Outputs::default();
    let set = a.set;
    let spectral_set = matches!(set, CriteriaSet::Sqrt | CriteriaSet::Log | CriteriaSet::Lemma | CriteriaSet::B);
    let mut reports = Vec::new();
    let source;
    if let Some(m) = &a.measure {
        if matches!(set, CriteriaSet::NormalQuenched | CriteriaSet::WcZwc) {
            return Err(usage("--set normal-quenched needs --model and --set wc-zwc needs --process"));
        }
        let measure = load_measure(m)?;
        out.hash_input("measure", &measure);
        source = serde_json::to_value(m)?;
        reports = spectral_reports(&measure, a, set)?;
    } else if let Some(model) = &a.model {
        if set == CriteriaSet::WcZwc {
            return Err(usage("--set wc-zwc needs --process"));
        }
        let spectrum = rotation_spectrum_default(model.rule);
        out.hash_input("spectrum", &spectrum.lines());
        source = serde_json::to_value(model)?;
        if spectral_set || set == CriteriaSet::All {
            reports.extend(spectral_reports(&spectrum.to_measure()?, a, set)?);
        }
        if matches!(set, CriteriaSet::NormalQuenched | CriteriaSet::All) {
            let s = ConditionSubject::Spectrum(&spectrum);
            reports.push(mw_condition_check(s, ConditionForm::NormalChain { delta: 0.0 }, a.jmax)?);
            reports.push(mw_condition_check(s, ConditionForm::QuenchedWu { delta: a.delta }, a.jmax)?);
        }
    } else {
        let p = a.process.as_ref().expect("clap enforces one source");
        if spectral_set || set == CriteriaSet::NormalQuenched {
            return Err(usage("a --process supports --set wc-zwc only"));
        }
        let spec = p.build()?;
        out.hash_input("process", &spec);
        source = serde_json::to_value(p)?;
        let s = ConditionSubject::Linear(&spec);
        reports.push(mw_condition_check(s, ConditionForm::Wc, a.jmax)?);
        reports.push(mw_condition_check(s, ConditionForm::Zwc { tau: a.tau }, a.jmax_sup)?);
    }
    let mut t = Table::new(&["criterion", "verdict", "tailSlope", "consistent", "truncationN"])?;
    for r in &reports {
        let verdict = serde_json::to_value(r.verdict)?;
        t.row([
            r.criterion.clone(),
            verdict.as_str().unwrap_or_default().to_string(),
            r.tail_slope.to_string(),
            r.consistent.to_string(),
            r.truncation_n.to_string(),
        ])?;
    }
    out.add("criteria.csv", t.finish()?);
    out.add_json("criteria.json", &CriteriaOutput { source, set, reports: &reports })?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// simulate

fn batch_outputs(out: &mut Outputs, batch: &TrajectoryBatch) -> anyhow::Result<()> {
    let mut t = Table::new(&["rep", "n", "S_n"])?;
    for (rep, sums) in batch.sums.iter().enumerate() {
        for (n, s) in batch.grid.iter().zip(sums) {
            t.row([rep.to_string(), n.to_string(), s.to_string()])?;
        }
    }
    out.add("batch.csv", t.finish()?);
    if !batch.starts.is_empty() {
        let mut t = Table::new(&["rep", "start"])?;
        for (rep, x) in batch.starts.iter().enumerate() {
            t.row([rep.to_string(), x.to_string()])?;
        }
        out.add("starts.csv", t.finish()?);
    }
    out.add_json("source.json", &batch.source)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// approx

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct DecompositionSummary {
    n: u64,
    method: ergolab_core::approx::DecompositionMethod,
    orthogonality: Vec<ergolab_core::approx::LagCorrelation>,
    increment_second_moment: f64,
    martingale_variance_rate: (f64, f64),
    exactness_residual: f64,
}

impl DecompositionSummary {
    fn of(n: u64, d: &MartingaleDecomposition) -> Self {
        Self {
            n,
            method: d.method,
            orthogonality: d.orthogonality.clone(),
            increment_second_moment: d.increment_second_moment,
            martingale_variance_rate: d.martingale_variance_rate(),
            exactness_residual: d.exactness_residual(),
        }
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ApproxReport<'a> {
    bounds: &'a RemainderBoundReport,
    decompositions: Vec<DecompositionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    resolvent_gamma: Option<ergolab_core::approx::ResolventGamma>,
}

fn bounds_csv(r: &RemainderBoundReport) -> anyhow::Result<Vec<u8>> {
    let mut t = Table::new(&["n", "E_Rn2", "se", "exactRn2", "boundA", "boundB", "wuBound", "thetaSqSum"])?;
    for row in &r.rows {
        t.row([
            row.n.to_string(),
            fmt_opt(row.empirical_rn2),
            fmt_opt(row.se),
            fmt_opt(row.exact_rn2),
            fmt_opt(row.bound_a),
            fmt_opt(row.bound_b),
            fmt_opt(row.wu_bound),
            fmt_opt(row.theta_sq_sum),
        ])?;
    }
    t.finish()
}

fn approx_linear(a: &ApproxLinearArgs, t: Option<f64>) -> anyhow::Result<Outputs> {
    let spec = a.process.build()?;
    let grid = &a.n_grid.0;
    let n_max = *grid.last().expect("nonempty grid");
    // simulate the retained lags; exact quantities then refer to the same process
    let sim = spec.truncated();
    let batch = simulate_linear(&sim, n_max, a.seed, a.reps)?;
    let mut out = Outputs::default();
    out.hash_input("process", &spec);
    let (report, d, gamma) = match t {
        None => {
            let d = wu_decompose_linear(&sim, &batch)?;
            (remainder_bounds_linear(&sim, grid, Some(&d))?, d, None)
        }
        Some(t) => {
            let d = resolvent_decompose_linear(&sim, &batch, t)?;
            let mut r = RemainderBoundReport { rows: Vec::new(), k_estimate: None, precondition: None, flagged: false };
            r.rows = remainder_bounds_linear(&sim, grid, None)?
                .rows
                .into_iter()
                .map(|mut row| {
                    // the Wu-route exact remainder does not describe this decomposition
                    row.exact_rn2 = None;
                    row
                })
                .collect();
            r.attach_empirical(&d.remainder_moments());
            (r, d, Some(resolvent_gamma(&sim, t)?))
        }
    };
    out.add("bounds.csv", bounds_csv(&report)?);
    let decompositions = vec![DecompositionSummary::of(n_max, &d)];
    out.add_json("report.json", &ApproxReport { bounds: &report, decompositions, resolvent_gamma: gamma })?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// limits

enum Built {
    Linear(LinearProcessSpec),
    Rotation(FourierDiagonalModel),
}

impl Built {
    fn from(s: &SubjectArgs, out: &mut Outputs) -> anyhow::Result<Self> {
        if let Some(m) = &s.model {
            let model = m.build()?;
            out.hash_input("model", &model);
            Ok(Built::Rotation(model))
        } else {
            let spec = s.process.as_ref().expect("clap enforces one subject").build()?;
            out.hash_input("process", &spec);
            Ok(Built::Linear(spec))
        }
    }

    fn subject(&self, start: Start) -> Subject<'_> {
        match self {
            Built::Linear(spec) => Subject::Linear(spec),
            Built::Rotation(model) => Subject::Rotation { model, start },
        }
    }
}

/// Fixed starts followed by `count` uniform starts drawn from a stream of
/// `seed` that no simulation rep uses.
pub fn clt_starts(fixed: &[f64], count: u32, seed: u64) -> Vec<f64> {
    let mut rng = rep_rng(seed, u64::MAX);
    let mut v = fixed.to_vec();
    v.extend((0..count).map(|_| rng.gen::<f64>()));
    v
}

fn clt(a: &CltArgs) -> anyhow::Result<Outputs> {
    let mut out = Outputs::default();
    let built = Built::from(&a.subject, &mut out)?;
    let results: Vec<CltResult> = match &built {
        Built::Linear(_) => vec![quenched_clt_test(built.subject(Start::Stationary), a.n, a.reps, a.seed)?],
        Built::Rotation(_) => clt_starts(&a.starts.0, a.random_starts, a.seed)
            .into_iter()
            .map(|x0| quenched_clt_test(built.subject(Start::Fixed { x0 }), a.n, a.reps, a.seed))
            .collect::<Result<_, _>>()?,
    };
    let mut t = Table::new(&[
        "start",
        "n",
        "reps",
        "ksDistance",
        "ksCritical5pct",
        "sigmaHatSq",
        "sigmaHatSe",
        "sigmaRefSq",
        "quenchedVarExact",
        "degenerate",
    ])?;
    for r in &results {
        let start = match r.start {
            Some(Start::Fixed { x0 }) => x0.to_string(),
            _ => "stationary".to_string(),
        };
        t.row([
            start,
            r.n.to_string(),
            r.reps.to_string(),
            r.ks_distance.to_string(),
            r.ks_critical_5pct.to_string(),
            r.sigma_hat_sq.to_string(),
            r.sigma_hat_se.to_string(),
            r.sigma_ref_sq.to_string(),
            fmt_opt(r.quenched_var_exact),
            r.degenerate.to_string(),
        ])?;
    }
    out.add("clt.csv", t.finish()?);
    out.add_json("clt.json", &results)?;
    Ok(out)
}

fn lil(a: &LilArgs) -> anyhow::Result<Outputs> {
    if a.runs == 0 {
        return Err(usage("--runs must be ≥ 1"));
    }
    let mut out = Outputs::default();
    let built = Built::from(&a.subject, &mut out)?;
    let seeds: Vec<u64> = (0..a.runs).map(|i| a.seed.wrapping_add(i)).collect();
    let r = lil_diagnostic(built.subject(a.start), a.n, &seeds, a.n0)?;
    let mut t = Table::new(&["seed", "runningMax"])?;
    for (s, v) in seeds.iter().zip(&r.per_seed) {
        t.row([s.to_string(), v.to_string()])?;
    }
    out.add("lil.csv", t.finish()?);
    out.add_json("lil.json", &r)?;
    Ok(out)
}

fn rate(a: &SeriesArgs, normalizer: Option<&ergolab_core::mc::Normalizer>) -> anyhow::Result<Outputs> {
    let mut out = Outputs::default();
    let built = Built::from(&a.subject, &mut out)?;
    let s = built.subject(a.start);
    let hypothesis = a.hypothesis.map(Into::into);
    let (r, name): (RateCheckResult, &str) = match normalizer {
        Some(norm) => (rate_check(s, norm.clone(), a.n_max, a.reps, a.seed, hypothesis)?, "rate.json"),
        None => (series_sqrt_check(s, a.n_max, a.reps, a.seed, hypothesis)?, "series.json"),
    };
    let mut t = Table::new(&["n", "mean", "q05", "q95"])?;
    for i in 0..r.grid.len() {
        t.row([r.grid[i].to_string(), r.mean_curve[i].to_string(), r.q05[i].to_string(), r.q95[i].to_string()])?;
    }
    out.add("curves.csv", t.finish()?);
    out.add_json(name, &r)?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// verify

#[derive(Debug, Clone, PartialEq)]
pub struct FileCheck {
    pub path: String,
    pub recorded: String,
    pub rederived: Option<String>,
    /// Hash of the file currently on disk, if present.
    pub on_disk: Option<String>,
}

impl FileCheck {
    pub fn matches(&self) -> bool {
        self.rederived.as_deref() == Some(self.recorded.as_str())
            && self.on_disk.as_deref().map_or(true, |h| h == self.recorded)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub files: Vec<FileCheck>,
    /// Outputs the re-run produced that the manifest does not list.
    pub extra: Vec<String>,
}

impl VerifyReport {
    pub fn all_match(&self) -> bool {
        self.extra.is_empty() && !self.files.is_empty() && self.files.iter().all(FileCheck::matches)
    }

    pub fn lines(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .files
            .iter()
            .map(|f| {
                let status = if f.matches() {
                    "ok"
                } else if f.rederived.as_deref() != Some(f.recorded.as_str()) {
                    "DIFFERS"
                } else {
                    "MODIFIED ON DISK"
                };
                format!("{status:>16}  {}", f.path)
            })
            .collect();
        v.extend(self.extra.iter().map(|p| format!("{:>16}  {p}", "UNLISTED")));
        v
    }
}

/// Re-derives every output of a run from its manifest and compares hashes.
pub fn verify(path: &Path) -> anyhow::Result<VerifyReport> {
    let manifest = read_manifest(path)?;
    let dir = if path.is_dir() { path.to_path_buf() } else { path.parent().unwrap_or(Path::new(".")).to_path_buf() };
    let outputs = produce(&manifest.params)?;
    let files = manifest
        .outputs
        .iter()
        .map(|rec| FileCheck {
            path: rec.path.clone(),
            recorded: rec.sha256.clone(),
            rederived: outputs.files.iter().find(|(n, _)| *n == rec.path).map(|(_, b)| sha256_hex(b)),
            on_disk: std::fs::read(dir.join(&rec.path)).ok().map(|b| sha256_hex(&b)),
        })
        .collect();
    let extra = outputs
        .files
        .iter()
        .filter(|(n, _)| !manifest.outputs.iter().any(|r| r.path == *n))
        .map(|(n, _)| n.clone())
        .collect();
    Ok(VerifyReport { files, extra })
}
