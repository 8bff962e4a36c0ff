//! `ergolab` command line: reproducible runs over the core library.
//!
//! Every run writes its tables plus a `manifest.json` holding the complete
//! parameter set, so `ergolab verify <dir>` can re-derive each output and
//! compare hashes. Exit status: 0 success, 2 usage or input errors (bad
//! flags, missing files, refused overwrite), 1 other failures. Scientific
//! verdicts are data and never change the exit status.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{ArgGroup, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use ergolab_core::coeffs::{BoundaryPath, SlowlyVaryingSpec};
use ergolab_core::criterion::Verdict;
use ergolab_core::models::Start;
use ergolab_core::LabError;
use serde::{Deserialize, Serialize};

pub mod commands;
pub mod manifest;
pub mod sources;

use manifest::{Clobber, RunManifest};
use sources::{
    parse_count, parse_family, parse_grid, Grid, parse_measure, parse_model, parse_process, parse_start, MeasureArg,
    ModelArg, ProcessArg,
};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "ERGOLAB_OUT";

/// Largest coefficient prefix `coeffs` will compute.
pub const COEFF_CEILING: usize = 1 << 26;

#[derive(Debug, Parser)]
#[command(name = "ergolab", version, about = "Numerical experiments on rates in ergodic theorems")]
pub struct Cli {
    /// Output directory (default: $ERGOLAB_OUT/<command>, or ./ergolab-out/<command>).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
    /// Worker threads for rep-parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON object of flag values; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Command {
    /// Coefficient sequences and boundary checks.
    Coeffs(CoeffsArgs),
    /// Convergence criteria for a measure, model or process.
    Criteria(CriteriaArgs),
    /// Trajectory batches.
    #[command(subcommand)]
    Simulate(SimulateCmd),
    /// Martingale approximations and remainder bounds.
    #[command(subcommand)]
    Approx(ApproxCmd),
    /// CLT, LIL and rate checks.
    #[command(subcommand)]
    Limits(LimitsCmd),
    /// Re-run a manifest and compare every output hash.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CoeffsArgs {
    /// b family: const, log[:alpha=a], loglog[:alpha=a,beta=b], reclog[:alpha=a,beta=b].
    #[arg(long = "b", value_parser = parse_family)]
    pub b: SlowlyVaryingSpec,
    /// Largest coefficient index.
    #[arg(long = "n", visible_alias = "N", default_value = "4096", value_parser = parse_count)]
    pub n: u64,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    /// Boundary path for the |A| asymptotic table, e.g. radial:1e-2..1e-6.
    #[arg(long, value_parser = |s: &str| BoundaryPath::parse(s).map_err(|e| e.to_string()))]
    pub check_a1: Option<BoundaryPath>,
    /// Comma list of β in (0,1) for the power-law sequences.
    #[arg(long, value_parser = parse_betas)]
    pub zygmund: Option<Betas>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Betas(pub Vec<f64>);

fn parse_betas(s: &str) -> Result<Betas, String> {
    let v = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad β '{t}'")))
        .collect::<Result<Vec<_>, _>>()?;
    if v.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
        return Err("β must lie in (0,1)".into());
    }
    Ok(Betas(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriteriaSet {
    Sqrt,
    Log,
    Lemma,
    B,
    NormalQuenched,
    WcZwc,
    All,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(group(ArgGroup::new("source").required(true).args(["measure", "model", "process"])))]
#[serde(rename_all = "camelCase")]
pub struct CriteriaArgs {
    /// Builtin measure name or CSV file with columns r,theta,weight.
    #[arg(long, value_parser = parse_measure)]
    pub measure: Option<MeasureArg>,
    /// rotation[:lmax=L,rule=factorial|literal]; criteria use the full spectrum.
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelArg>,
    /// iid, lacunary:kmax=K, geometric:rho=r or table:a=a0/a1/…
    #[arg(long, value_parser = parse_process)]
    pub process: Option<ProcessArg>,
    #[arg(long, value_enum, default_value = "all")]
    pub set: CriteriaSet,
    /// Truncation for the spectral criteria.
    #[arg(long, default_value = "65536", value_parser = parse_count)]
    pub n: u64,
    /// Sum-type conditions are evaluated up to 2^jmax.
    #[arg(long, default_value_t = 40)]
    pub jmax: u32,
    /// Sup-type conditions are evaluated up to 2^jmax-sup.
    #[arg(long, default_value_t = 20)]
    pub jmax_sup: u32,
    /// b family of the `b` criterion.
    #[arg(long, value_parser = parse_family, default_value = "log")]
    pub bfamily: SlowlyVaryingSpec,
    /// Exponent τ of the sup-type condition.
    #[arg(long, default_value_t = 0.75)]
    pub tau: f64,
    /// Exponent δ of the quenched sum condition.
    #[arg(long, default_value_t = 1.5)]
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SimulateCmd {
    /// Random walk on the circle observed through the rotation function.
    Rotation(SimRotationArgs),
    /// Linear process with Gaussian innovations.
    Linear(SimLinearArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimRotationArgs {
    #[arg(long, default_value_t = 7)]
    pub lmax: u32,
    #[arg(long, value_enum, default_value = "factorial")]
    pub rule: RuleArg,
    #[arg(long, value_parser = parse_count)]
    pub n: u64,
    #[arg(long, value_parser = parse_count)]
    pub reps: u64,
    #[arg(long)]
    pub seed: u64,
    /// Start in turns, or `stationary`.
    #[arg(long, value_parser = parse_start, default_value = "stationary")]
    pub start: Start,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleArg {
    Factorial,
    Literal,
}

impl SimRotationArgs {
    pub fn model(&self) -> ModelArg {
        let rule = match self.rule {
            RuleArg::Factorial => ergolab_core::models::CoeffRule::FactorialIndex,
            RuleArg::Literal => ergolab_core::models::CoeffRule::LiteralFrequency,
        };
        ModelArg { lmax: self.lmax, rule }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimLinearArgs {
    #[arg(long, value_parser = parse_process)]
    pub process: ProcessArg,
    #[arg(long, value_parser = parse_count)]
    pub n: u64,
    #[arg(long, value_parser = parse_count)]
    pub reps: u64,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ApproxCmd {
    /// Projective decomposition of a linear process against the Θ bound.
    Wu(ApproxLinearArgs),
    /// Resolvent decomposition of a linear process at fixed t.
    Resolvent(ApproxResolventArgs),
    /// Normal-chain decomposition of the rotation model at t = 1 − 1/n.
    Normal(ApproxNormalArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ApproxLinearArgs {
    #[arg(long, value_parser = parse_process)]
    pub process: ProcessArg,
    /// Evaluation points: `16..4096` (powers of two) or a comma list.
    #[arg(long, value_parser = parse_grid, default_value = "16..4096")]
    pub n_grid: Grid,
    #[arg(long, value_parser = parse_count, default_value = "1000")]
    pub reps: u64,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ApproxResolventArgs {
    #[command(flatten)]
    pub linear: ApproxLinearArgs,
    #[arg(long, default_value_t = 0.99)]
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ApproxNormalArgs {
    #[arg(long, value_parser = parse_model, default_value = "rotation:lmax=7")]
    pub model: ModelArg,
    #[arg(long, value_parser = parse_grid, default_value = "100,1000,10000")]
    pub n_grid: Grid,
    #[arg(long, value_parser = parse_count, default_value = "1000")]
    pub reps: u64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_parser = parse_start, default_value = "stationary")]
    pub start: Start,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum LimitsCmd {
    /// Quenched CLT: KS distance and variance of S_n/√n per start.
    Clt(CltArgs),
    /// Running maxima of |S_n|/√(2n log log n).
    Lil(LilArgs),
    /// Normalized |S_n| curves.
    Rate(RateArgs),
    /// Partial sums of X_k/√k.
    Series(SeriesArgs),
}

/// A process for the Monte Carlo checks: the rotation model or a linear process.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(group(ArgGroup::new("subject").required(true).args(["model", "process"])))]
#[serde(rename_all = "camelCase")]
pub struct SubjectArgs {
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelArg>,
    #[arg(long, value_parser = parse_process)]
    pub process: Option<ProcessArg>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CltArgs {
    #[command(flatten)]
    pub subject: SubjectArgs,
    /// Fixed starts in turns (rotation model only).
    #[arg(long, value_parser = parse_starts, default_value = "0,0.3333333333333333,0.618")]
    pub starts: Starts,
    /// Additional uniformly drawn starts, derived from the seed.
    #[arg(long, default_value_t = 2)]
    pub random_starts: u32,
    #[arg(long, value_parser = parse_count, default_value = "10000")]
    pub n: u64,
    #[arg(long, value_parser = parse_count, default_value = "5000")]
    pub reps: u64,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Starts(pub Vec<f64>);

fn parse_starts(s: &str) -> Result<Starts, String> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| match parse_start(t.trim())? {
            Start::Fixed { x0 } => Ok(x0),
            Start::Stationary => Err("starts must be numbers".to_string()),
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Starts)
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LilArgs {
    #[command(flatten)]
    pub subject: SubjectArgs,
    #[arg(long, value_parser = parse_start, default_value = "stationary")]
    pub start: Start,
    #[arg(long, value_parser = parse_count, default_value = "1000000")]
    pub n: u64,
    /// First seed; run i uses seed + i.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub runs: u64,
    /// The running maximum starts at n0 ≥ 16.
    #[arg(long, value_parser = parse_count, default_value = "1000")]
    pub n0: u64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SeriesArgs {
    #[command(flatten)]
    pub subject: SubjectArgs,
    #[arg(long, value_parser = parse_start, default_value = "stationary")]
    pub start: Start,
    #[arg(long, value_parser = parse_count, default_value = "65536")]
    pub n_max: u64,
    #[arg(long, value_parser = parse_count, default_value = "200")]
    pub reps: u64,
    #[arg(long)]
    pub seed: u64,
    /// Verdict of the matching convergence criterion, recorded with the run.
    #[arg(long, value_enum)]
    pub hypothesis: Option<HypothesisArg>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RateArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    /// sqrt-n, sqrt-n-loglog, bstar:<b family> or log2loglog:<β>.
    #[arg(long, value_parser = parse_normalizer, default_value = "sqrt-n-loglog")]
    pub normalizer: ergolab_core::mc::Normalizer,
}

fn parse_normalizer(s: &str) -> Result<ergolab_core::mc::Normalizer, String> {
    use ergolab_core::mc::Normalizer;
    match s.split_once(':') {
        None if s == "sqrt-n" => Ok(Normalizer::SqrtN),
        None if s == "sqrt-n-loglog" => Ok(Normalizer::SqrtNLogLogN),
        Some(("bstar", b)) => Ok(Normalizer::SqrtNBStar { b: parse_family(b)? }),
        Some(("log2loglog", beta)) => {
            Ok(Normalizer::SqrtNLog2LogLog { beta: beta.parse().map_err(|_| format!("bad β '{beta}'"))? })
        }
        _ => Err(format!("unknown normalizer '{s}' (sqrt-n, sqrt-n-loglog, bstar:<b>, log2loglog:<β>)")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HypothesisArg {
    Converges,
    Diverges,
}

impl From<HypothesisArg> for Verdict {
    fn from(h: HypothesisArg) -> Self {
        match h {
            HypothesisArg::Converges => Verdict::Converges,
            HypothesisArg::Diverges => Verdict::Diverges,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    /// Run directory or manifest file.
    pub manifest: PathBuf,
}

impl Command {
    /// Directory name under the output root.
    pub fn slug(&self) -> &'static str {
        match self {
            Command::Coeffs(_) => "coeffs",
            Command::Criteria(_) => "criteria",
            Command::Simulate(SimulateCmd::Rotation(_)) => "simulate-rotation",
            Command::Simulate(SimulateCmd::Linear(_)) => "simulate-linear",
            Command::Approx(ApproxCmd::Wu(_)) => "approx-wu",
            Command::Approx(ApproxCmd::Resolvent(_)) => "approx-resolvent",
            Command::Approx(ApproxCmd::Normal(_)) => "approx-normal",
            Command::Limits(LimitsCmd::Clt(_)) => "limits-clt",
            Command::Limits(LimitsCmd::Lil(_)) => "limits-lil",
            Command::Limits(LimitsCmd::Rate(_)) => "limits-rate",
            Command::Limits(LimitsCmd::Series(_)) => "limits-series",
            Command::Verify(_) => "verify",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Coeffs(_) | Command::Criteria(_) | Command::Verify(_) => None,
            Command::Simulate(SimulateCmd::Rotation(a)) => Some(a.seed),
            Command::Simulate(SimulateCmd::Linear(a)) => Some(a.seed),
            Command::Approx(ApproxCmd::Wu(a)) => Some(a.seed),
            Command::Approx(ApproxCmd::Resolvent(a)) => Some(a.linear.seed),
            Command::Approx(ApproxCmd::Normal(a)) => Some(a.seed),
            Command::Limits(LimitsCmd::Clt(a)) => Some(a.seed),
            Command::Limits(LimitsCmd::Lil(a)) => Some(a.seed),
            Command::Limits(LimitsCmd::Rate(a)) => Some(a.series.seed),
            Command::Limits(LimitsCmd::Series(a)) => Some(a.seed),
        }
    }
}

/// An invocation problem: bad flag combination, missing input, unreadable config.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Exit status for a failed run.
pub fn exit_status(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<Clobber>() {
            return 2;
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            if io.kind() == std::io::ErrorKind::NotFound {
                return 2;
            }
        }
        if let Some(lab) = cause.downcast_ref::<LabError>() {
            if matches!(
                lab,
                LabError::Invalid(_) | LabError::Range(_) | LabError::Unsupported(_) | LabError::Domain(_)
            ) {
                return 2;
            }
        }
    }
    1
}

/// Global flags that consume a value, for locating the subcommand in argv.
const VALUE_FLAGS: [&str; 3] = ["--out", "--threads", "--config"];

/// Inserts `--key value` pairs from the JSON config right after the
/// subcommand path, so that later command-line flags override them.
fn expand_config(argv: &[OsString]) -> anyhow::Result<Vec<OsString>> {
    let strs: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut config = None;
    for (i, a) in strs.iter().enumerate() {
        if a == "--config" {
            config = strs.get(i + 1).cloned();
        } else if let Some(v) = a.strip_prefix("--config=") {
            config = Some(v.to_string());
        }
    }
    let Some(config) = config else {
        return Ok(argv.to_vec());
    };
    let text = std::fs::read_to_string(&config).map_err(|e| usage(format!("--config {config}: {e}")))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| usage(format!("--config {config}: {e}")))?;
    let obj = value.as_object().ok_or_else(|| usage(format!("--config {config}: expected a JSON object")))?;
    let mut extra = Vec::new();
    for (k, v) in obj {
        let flag = format!("--{k}");
        match v {
            serde_json::Value::Bool(true) => extra.push(flag),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::String(s) => extra.extend([flag, s.clone()]),
            serde_json::Value::Number(n) => extra.extend([flag, n.to_string()]),
            serde_json::Value::Array(items) => {
                let joined: Vec<String> = items
                    .iter()
                    .map(|x| match x {
                        serde_json::Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect();
                extra.extend([flag, joined.join(",")]);
            }
            serde_json::Value::Object(_) => return Err(usage(format!("--config {config}: nested value for '{k}'"))),
        }
    }
    // subcommand path: the first one or two positionals
    let root = Cli::command();
    let mut insert_at = strs.len();
    let mut depth_cmd: Option<&clap::Command> = Some(&root);
    let mut i = 1;
    while i < strs.len() {
        let a = &strs[i];
        if VALUE_FLAGS.contains(&a.as_str()) {
            i += 2;
            continue;
        }
        if a.starts_with('-') {
            if depth_cmd.is_some_and(|c| std::ptr::eq(c, &root)) {
                i += 1;
                continue;
            }
            break;
        }
        match depth_cmd.and_then(|c| c.find_subcommand(a)) {
            Some(sub) => {
                insert_at = i + 1;
                depth_cmd = if sub.has_subcommands() { Some(sub) } else { None };
                i += 1;
                if depth_cmd.is_none() {
                    break;
                }
            }
            None => break,
        }
    }
    let mut out = argv.to_vec();
    for (j, tok) in extra.into_iter().enumerate() {
        out.insert(insert_at + j, tok.into());
    }
    Ok(out)
}

fn set_override_self(cmd: clap::Command) -> clap::Command {
    cmd.args_override_self(true).mut_subcommands(set_override_self)
}

/// Parses argv (including the program name) with config expansion.
pub fn parse_args(argv: &[OsString]) -> anyhow::Result<Result<(Cli, Vec<String>), clap::Error>> {
    let argv = expand_config(argv)?;
    let matches = set_override_self(Cli::command()).try_get_matches_from(&argv);
    let strs = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    Ok(matches.and_then(|m| Cli::from_arg_matches(&m)).map(|c| (c, strs)))
}

/// Outcome of a run for the caller.
#[derive(Debug)]
pub enum RunOutcome {
    Written(PathBuf),
    Verified(commands::VerifyReport),
}

fn output_dir(cli: &Cli) -> PathBuf {
    if let Some(out) = &cli.out {
        return out.clone();
    }
    let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("ergolab-out"), PathBuf::from);
    root.join(cli.command.slug())
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(usage("--threads must be ≥ 1"));
        }
        builder = builder.num_threads(t);
    }
    Ok(builder.build()?.install(f))
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli, argv: Vec<String>) -> anyhow::Result<RunOutcome> {
    if let Command::Verify(v) = &cli.command {
        let report = with_threads(cli.threads, || commands::verify(&v.manifest))??;
        return Ok(RunOutcome::Verified(report));
    }
    let outputs = with_threads(cli.threads, || commands::produce(&cli.command))??;
    let dir = output_dir(cli);
    let manifest = RunManifest {
        tool: "ergolab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        argv,
        params: cli.command.clone(),
        seed: cli.command.seed(),
        input_hashes: outputs.input_hashes.clone(),
        created_at: chrono::Utc::now().to_rfc3339(),
        outputs: outputs.records(),
    };
    manifest::write_run(&dir, &outputs, &manifest, cli.force)?;
    Ok(RunOutcome::Written(dir))
}

/// Parses and runs; returns the process exit status.
pub fn main_with(argv: Vec<OsString>) -> i32 {
    let (cli, strs) = match parse_args(&argv) {
        Ok(Ok(parsed)) => parsed,
        Ok(Err(e)) => {
            let _ = e.print();
            return e.exit_code();
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            return exit_status(&e);
        }
    };
    match execute(&cli, strs) {
        Ok(RunOutcome::Written(dir)) => {
            println!("{}", dir.display());
            0
        }
        Ok(RunOutcome::Verified(report)) => {
            for line in report.lines() {
                println!("{line}");
            }
            if report.all_match() {
                0
            } else {
                eprintln!("error: outputs differ from the manifest");
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_status(&e)
        }
    }
}

/// Runs `ergolab <args>` in-process; used by tests and the acceptance suite.
pub fn run_args<I, S>(args: I) -> anyhow::Result<RunOutcome>
where
    I: IntoIterator<Item = S>,
    S: Into<OsString>,
{
    let argv: Vec<OsString> = std::iter::once(OsString::from("ergolab")).chain(args.into_iter().map(Into::into)).collect();
    let (cli, strs) = parse_args(&argv)?.map_err(|e| usage(e.to_string()))?;
    execute(&cli, strs)
}

pub fn read_output(dir: &Path, name: &str) -> anyhow::Result<Vec<u8>> {
    let p = dir.join(name);
    std::fs::read(&p).with_context(|| format!("reading {}", p.display()))
}
