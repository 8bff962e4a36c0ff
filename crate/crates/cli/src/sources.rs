//! Parsers for the textual model, process, measure and grid arguments.
//!
//! These run as clap value parsers, so a bad value is reported against the
//! flag that carried it and exits with the usage status.

use std::path::PathBuf;

use ergolab_core::coeffs::SlowlyVaryingSpec;
use ergolab_core::models::{CoeffRule, FourierDiagonalModel, LinearProcessSpec, Start};
use ergolab_core::spectral::{builtin_measure, AtomicSpectralMeasure};
use serde::{Deserialize, Serialize};

/// Splits `head:k=v,k=v` into the head and its key-value pairs.
fn split_kv(s: &str) -> Result<(&str, Vec<(&str, &str)>), String> {
    let (head, rest) = match s.split_once(':') {
        Some((h, r)) => (h, r),
        None => (s, ""),
    };
    let mut kv = Vec::new();
    for part in rest.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| format!("expected key=value, got '{part}'"))?;
        kv.push((k.trim(), v.trim()));
    }
    Ok((head.trim(), kv))
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("bad value '{v}' for '{key}'"))
}

fn reject_unknown(kv: &[(&str, &str)], known: &[&str]) -> Result<(), String> {
    match kv.iter().find(|(k, _)| !known.contains(k)) {
        Some((k, _)) => Err(format!("unknown key '{k}' (expected one of: {})", known.join(", "))),
        None => Ok(()),
    }
}

/// `const`, `log`, `log:alpha=2`, `loglog:alpha=1,beta=1`, `reclog:alpha=1,beta=0`,
/// each with an optional `x0=`.
pub fn parse_family(s: &str) -> Result<SlowlyVaryingSpec, String> {
    let (head, kv) = split_kv(s)?;
    reject_unknown(&kv, &["alpha", "beta", "x0"])?;
    let get = |key: &str, default: f64| -> Result<f64, String> {
        kv.iter().find(|(k, _)| *k == key).map_or(Ok(default), |(_, v)| num(key, v))
    };
    let spec = match head {
        "const" | "constant" => SlowlyVaryingSpec::constant(),
        "log" => SlowlyVaryingSpec::log_pow(get("alpha", 1.0)?),
        "loglog" => SlowlyVaryingSpec::log_log_pow(get("alpha", 1.0)?, get("beta", 1.0)?),
        "reclog" => SlowlyVaryingSpec::reciprocal_log_pow(get("alpha", 1.0)?, get("beta", 0.0)?),
        other => return Err(format!("unknown b family '{other}' (const, log, loglog, reclog)")),
    };
    match kv.iter().find(|(k, _)| *k == "x0") {
        Some((_, v)) => spec.with_x0(num("x0", v)?).map_err(|e| e.to_string()),
        None => Ok(spec),
    }
}

/// A linear process: `iid`, `lacunary:kmax=24`, `geometric:rho=0.5`,
/// `table:a=0.5/0.25/0.125`; all accept `sigma=`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum ProcessArg {
    Iid { sigma: f64 },
    Lacunary { kmax: u32, sigma: f64 },
    Geometric { rho: f64, sigma: f64 },
    Table { coeffs: Vec<f64>, sigma: f64 },
}

impl ProcessArg {
    pub fn build(&self) -> ergolab_core::Result<LinearProcessSpec> {
        match self {
            ProcessArg::Iid { sigma } => LinearProcessSpec::iid(*sigma),
            ProcessArg::Lacunary { kmax, sigma } => LinearProcessSpec::lacunary(*kmax, *sigma),
            ProcessArg::Geometric { rho, sigma } => LinearProcessSpec::geometric(*rho, *sigma),
            ProcessArg::Table { coeffs, sigma } => LinearProcessSpec::user_table(coeffs.clone(), *sigma),
        }
    }
}

pub fn parse_process(s: &str) -> Result<ProcessArg, String> {
    let (head, kv) = split_kv(s)?;
    let get = |key: &str| kv.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
    let sigma = get("sigma").map_or(Ok(1.0), |v| num("sigma", v))?;
    let arg = match head {
        "iid" => {
            reject_unknown(&kv, &["sigma"])?;
            ProcessArg::Iid { sigma }
        }
        "lacunary" => {
            reject_unknown(&kv, &["kmax", "sigma"])?;
            let kmax = num("kmax", get("kmax").ok_or("lacunary needs kmax=")?)?;
            ProcessArg::Lacunary { kmax, sigma }
        }
        "geometric" => {
            reject_unknown(&kv, &["rho", "sigma"])?;
            let rho = num("rho", get("rho").ok_or("geometric needs rho=")?)?;
            ProcessArg::Geometric { rho, sigma }
        }
        "table" => {
            reject_unknown(&kv, &["a", "sigma"])?;
            let coeffs = get("a")
                .ok_or("table needs a=a0/a1/…")?
                .split('/')
                .map(|v| num("a", v))
                .collect::<Result<Vec<f64>, _>>()?;
            ProcessArg::Table { coeffs, sigma }
        }
        other => return Err(format!("unknown process '{other}' (iid, lacunary, geometric, table)")),
    };
    arg.build().map_err(|e| e.to_string())?;
    Ok(arg)
}

/// The rotation chain: `rotation:lmax=7[,rule=literal]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelArg {
    pub lmax: u32,
    pub rule: CoeffRule,
}

impl ModelArg {
    pub fn build(&self) -> ergolab_core::Result<FourierDiagonalModel> {
        FourierDiagonalModel::rotation(self.lmax, self.rule)
    }
}

pub fn parse_model(s: &str) -> Result<ModelArg, String> {
    let (head, kv) = split_kv(s)?;
    if head != "rotation" {
        return Err(format!("unknown model '{head}' (rotation)"));
    }
    reject_unknown(&kv, &["lmax", "rule"])?;
    let mut arg = ModelArg { lmax: 7, rule: CoeffRule::FactorialIndex };
    for (k, v) in kv {
        match k {
            "lmax" => arg.lmax = num("lmax", v)?,
            _ => {
                arg.rule = match v {
                    "factorial" => CoeffRule::FactorialIndex,
                    "literal" => CoeffRule::LiteralFrequency,
                    other => return Err(format!("unknown rule '{other}' (factorial, literal)")),
                }
            }
        }
    }
    arg.build().map_err(|e| e.to_string())?;
    Ok(arg)
}

/// A builtin measure name or a CSV file with columns `r,theta,weight`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum MeasureArg {
    Builtin { name: String },
    File { path: PathBuf },
}

pub fn parse_measure(s: &str) -> Result<MeasureArg, String> {
    if builtin_measure(s).is_some() {
        return Ok(MeasureArg::Builtin { name: s.to_string() });
    }
    let path = PathBuf::from(s);
    if !path.exists() {
        return Err(format!("'{s}' is neither a builtin measure nor an existing file"));
    }
    // absolute, so that a manifest re-run does not depend on the working directory
    let path = std::fs::canonicalize(&path).map_err(|e| format!("{s}: {e}"))?;
    Ok(MeasureArg::File { path })
}

/// Reads a measure CSV with a header row naming `r`, `theta` and `weight`.
pub fn read_measure_csv(path: &std::path::Path) -> anyhow::Result<AtomicSpectralMeasure> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<(f64, f64, f64)>().enumerate() {
        let rec = rec.map_err(|e| anyhow::anyhow!("{}: row {}: {e}", path.display(), i + 1))?;
        rows.push(rec);
    }
    if rows.is_empty() {
        anyhow::bail!("{}: no atoms", path.display());
    }
    Ok(AtomicSpectralMeasure::from_rows(&rows)?)
}

/// `0.3` or `stationary`.
pub fn parse_start(s: &str) -> Result<Start, String> {
    if s == "stationary" {
        return Ok(Start::Stationary);
    }
    let x0: f64 = num("start", s)?;
    if !x0.is_finite() {
        return Err("start must be finite".into());
    }
    Ok(Start::Fixed { x0 })
}

/// Evaluation points of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid(pub Vec<u64>);

/// `16..4096` (powers of two in range) or a comma list `100,1000`.
pub fn parse_grid(s: &str) -> Result<Grid, String> {
    let grid: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (num("grid", a)?, num("grid", b)?);
        if a == 0 || a > b {
            return Err(format!("empty grid '{s}'"));
        }
        let mut v = Vec::new();
        let mut p = a.next_power_of_two();
        while p <= b {
            v.push(p);
            p *= 2;
        }
        v
    } else {
        s.split(',').map(|v| parse_count(v.trim())).collect::<Result<_, _>>()?
    };
    if grid.is_empty() || grid.contains(&0) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(format!("grid '{s}' must be increasing and positive"));
    }
    Ok(Grid(grid))
}

/// A count, accepting `1e6` and `2^20` as well as plain integers.
pub fn parse_count(s: &str) -> Result<u64, String> {
    if let Some((b, e)) = s.split_once('^') {
        let (b, e): (u64, u32) = (num("count", b)?, num("count", e)?);
        return b.checked_pow(e).ok_or_else(|| format!("'{s}' overflows"));
    }
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = num("count", s)?;
    if f >= 0.0 && f.fract() == 0.0 && f < 1.8e19 {
        Ok(f as u64)
    } else {
        Err(format!("'{s}' is not a nonnegative integer"))
    }
}
