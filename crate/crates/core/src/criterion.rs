//! Finite-truncation classification of convergence conditions.
//!
//! Sum-type conditions are condensed into dyadic blocks `B_j = Σ_{2^j ≤ n < 2^{j+1}} t_n`;
//! the series converges iff `Σ_j B_j` does, and the fitted exponent of
//! `B_j ~ j^s` over the last blocks decides the verdict. Sup-type conditions
//! fit `q_n ~ (log n)^s` instead.

use serde::{Deserialize, Serialize};

use crate::numerics::ls_slope;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Verdict {
    Converges,
    Diverges,
    Inconclusive,
}

pub const DEFAULT_SLOPE_MARGIN: f64 = 0.15;

/// Number of trailing dyadic blocks used in the fit (about two decades of n).
pub const FIT_BLOCKS: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedQuantity {
    pub name: String,
    /// Truncated value of the series, integral or running sup.
    pub value: f64,
    pub tail_slope: f64,
    pub verdict: Verdict,
    /// Per-block increments (sum-type) or dyadic samples (sup-type).
    pub blocks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub criterion: String,
    pub quantities: Vec<NamedQuantity>,
    pub truncation_n: u64,
    /// Fitted exponent of the last (series-side) quantity.
    pub tail_slope: f64,
    pub verdict: Verdict,
    pub slope_margin: f64,
    /// Whether every quantity received the same verdict.
    pub consistent: bool,
    /// Informational curves that do not enter the verdict.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<NamedQuantity>,
}

impl CriterionReport {
    pub fn from_quantities(criterion: &str, quantities: Vec<NamedQuantity>, truncation_n: u64, margin: f64) -> Self {
        let first = quantities[0].verdict;
        let consistent = quantities.iter().all(|q| q.verdict == first);
        let last = quantities.last().expect("at least one quantity");
        CriterionReport {
            criterion: criterion.to_string(),
            tail_slope: last.tail_slope,
            verdict: if consistent { first } else { Verdict::Inconclusive },
            truncation_n,
            slope_margin: margin,
            consistent,
            quantities,
            diagnostics: Vec::new(),
        }
    }

    pub fn quantity(&self, name: &str) -> Option<&NamedQuantity> {
        self.quantities.iter().find(|q| q.name == name)
    }
}

/// Classifies a sum from its dyadic block increments (`blocks[j]` covers
/// `[2^j, 2^{j+1})`). Returns the fitted exponent and the verdict.
pub fn classify_blocks(blocks: &[f64], margin: f64) -> (f64, Verdict) {
    if blocks.iter().any(|b| b.is_infinite()) {
        return (f64::INFINITY, Verdict::Diverges);
    }
    let len = blocks.len();
    let start = len.saturating_sub(FIT_BLOCKS).max(1);
    let window: Vec<(f64, f64)> = (start..len)
        .filter(|&j| blocks[j] > 0.0)
        .map(|j| ((j as f64).ln(), blocks[j].ln()))
        .collect();
    if blocks.last().map_or(true, |b| *b <= 0.0) || window.len() < 2 {
        return (f64::NEG_INFINITY, Verdict::Converges);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = window.into_iter().unzip();
    let s = ls_slope(&xs, &ys);
    (s, verdict_from_slope(s, margin))
}

pub fn verdict_from_slope(s: f64, margin: f64) -> Verdict {
    if s < -1.0 - margin {
        Verdict::Converges
    } else if s > -1.0 + margin {
        Verdict::Diverges
    } else {
        Verdict::Inconclusive
    }
}

/// Classifies `sup_n q_n < ∞` from samples `q` at `n = 2^j`, `j = 0..`:
/// fits `ln q` against `ln ln n` on the trailing samples. A slope above
/// `margin` reads as unbounded growth (condition fails, reported as
/// `Diverges`); below `margin/2` as bounded (`Converges`).
pub fn classify_growth(samples: &[f64], margin: f64) -> (f64, Verdict) {
    if samples.iter().any(|q| q.is_infinite()) {
        return (f64::INFINITY, Verdict::Diverges);
    }
    let len = samples.len();
    let start = len.saturating_sub(FIT_BLOCKS).max(2);
    let pts: Vec<(f64, f64)> = (start..len)
        .filter(|&j| samples[j] > 0.0)
        .map(|j| (((j as f64) * std::f64::consts::LN_2).ln(), samples[j].ln()))
        .collect();
    if pts.len() < 2 {
        return (f64::NEG_INFINITY, Verdict::Converges);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let s = ls_slope(&xs, &ys);
    let v = if s >= margin {
        Verdict::Diverges
    } else if s <= margin / 2.0 {
        Verdict::Converges
    } else {
        Verdict::Inconclusive
    };
    (s, v)
}

/// Builds a sum-type quantity from per-block increments.
pub fn sum_quantity(name: &str, blocks: Vec<f64>, margin: f64) -> NamedQuantity {
    let (tail_slope, verdict) = classify_blocks(&blocks, margin);
    let value = crate::numerics::compensated_sum(blocks.iter().copied());
    NamedQuantity { name: name.to_string(), value, tail_slope, verdict, blocks }
}

/// Builds a sup-type quantity from dyadic samples.
pub fn sup_quantity(name: &str, samples: Vec<f64>, margin: f64) -> NamedQuantity {
    let (tail_slope, verdict) = classify_growth(&samples, margin);
    let value = samples.iter().copied().fold(0.0, f64::max);
    NamedQuantity { name: name.to_string(), value, tail_slope, verdict, blocks: samples }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_blocks() {
        let conv: Vec<f64> = (0..20).map(|j| (j.max(1) as f64).powf(-2.0)).collect();
        assert_eq!(classify_blocks(&conv, 0.15).1, Verdict::Converges);
        let div: Vec<f64> = (0..20).map(|j| (j.max(1) as f64).powf(-0.5)).collect();
        assert_eq!(classify_blocks(&div, 0.15).1, Verdict::Diverges);
        let edge: Vec<f64> = (0..20).map(|j| 1.0 / j.max(1) as f64).collect();
        assert_eq!(classify_blocks(&edge, 0.15).1, Verdict::Inconclusive);
    }

    #[test]
    fn degenerate_blocks() {
        assert_eq!(classify_blocks(&[1.0, 0.5, 0.0, 0.0], 0.15).1, Verdict::Converges);
        assert_eq!(classify_blocks(&[1.0, f64::INFINITY], 0.15).1, Verdict::Diverges);
    }

    #[test]
    fn growth_samples() {
        let grow: Vec<f64> = (0..21).map(|j| (j.max(1) as f64).powf(0.5)).collect();
        assert_eq!(classify_growth(&grow, 0.15).1, Verdict::Diverges);
        let flat: Vec<f64> = (0..21).map(|j| 2.0 + 1.0 / (j + 1) as f64).collect();
        assert_eq!(classify_growth(&flat, 0.15).1, Verdict::Converges);
    }
}
