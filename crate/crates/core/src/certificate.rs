//! Certified bounds and bound curves shared by every certifier.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    Mean,
    CdfCurve,
    FdivMean,
    FdivCdf,
    WassMean,
}

impl BoundKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundKind::Mean => "mean",
            BoundKind::CdfCurve => "cdf-curve",
            BoundKind::FdivMean => "fdiv-mean",
            BoundKind::FdivCdf => "fdiv-cdf",
            BoundKind::WassMean => "wass-mean",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertStatus {
    /// Every sub-solver reported an exact or optimal answer.
    Exact,
    /// A convex program met its constraints only to the post-hoc tolerance.
    Tolerance,
    /// Some client query used an inner solver without an exactness
    /// guarantee; the bound may be optimistic.
    Approximate,
}

impl CertStatus {
    pub fn worst(self, other: CertStatus) -> CertStatus {
        use CertStatus::*;
        match (self, other) {
            (Approximate, _) | (_, Approximate) => Approximate,
            (Tolerance, _) | (_, Tolerance) => Tolerance,
            _ => Exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Named {
    pub name: String,
    pub value: f64,
}

pub fn named(name: &str, value: f64) -> Named {
    Named { name: name.to_string(), value }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub k: usize,
    pub n: Vec<usize>,
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub divergence: Option<String>,
    /// Constants the bound depends on (caps, concentration constants).
    #[serde(default)]
    pub constants: Vec<Named>,
}

impl BoundParams {
    pub fn new(n: &[usize], delta: f64) -> Self {
        BoundParams { k: n.len(), n: n.to_vec(), delta, epsilon: None, lambda: None, divergence: None, constants: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifiedBound {
    pub kind: BoundKind,
    /// `min(raw_value, 1)`, never below 0.
    pub value: f64,
    pub raw_value: f64,
    /// Empirical part of the bound (sample mean, program optimum, …).
    pub program_value: f64,
    pub slack: Vec<Named>,
    pub params: BoundParams,
    pub status: CertStatus,
    /// Whether slack terms were zeroed for testing.
    pub zero_slack: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
    /// Certificate-specific witness (reweighting vector or radius allocation).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<serde_json::Value>,
}

impl CertifiedBound {
    pub fn assemble(kind: BoundKind, program_value: f64, slack: Vec<Named>, params: BoundParams, zero_slack: bool) -> Self {
        let raw_value = program_value + slack.iter().map(|s| s.value).sum::<f64>();
        CertifiedBound {
            kind,
            value: raw_value.clamp(0.0, 1.0),
            raw_value,
            program_value,
            slack,
            params,
            status: CertStatus::Exact,
            zero_slack,
            notes: Vec::new(),
            witness: None,
        }
    }

    pub fn total_slack(&self) -> f64 {
        self.slack.iter().map(|s| s.value).sum()
    }

    pub fn slack_term(&self, name: &str) -> Option<f64> {
        self.slack.iter().find(|s| s.name == name).map(|s| s.value)
    }
}

/// Upper bound on the survival function `λ ↦ P(R ≥ λ)`, nonincreasing in λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfCurve {
    pub kind: BoundKind,
    pub lambda: Vec<f64>,
    pub bound: Vec<f64>,
    /// Program output before padding, when the certifier has one.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub program: Option<Vec<f64>>,
    pub slack: Vec<Named>,
    pub params: BoundParams,
    pub status: CertStatus,
    pub zero_slack: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

impl CdfCurve {
    /// Bound valid at any `λ`: the value at the largest grid point not above
    /// `λ`, or 1 below the grid.
    pub fn upper_at(&self, lambda: f64) -> f64 {
        match self.lambda.partition_point(|&l| l <= lambda) {
            0 => 1.0,
            i => self.bound[i - 1],
        }
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.bound.windows(2).all(|w| w[1] <= w[0])
    }

    /// `lambda,bound` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,bound\n");
        for (l, b) in self.lambda.iter().zip(&self.bound) {
            out.push_str(&format!("{l},{b}\n"));
        }
        out
    }
}

pub(crate) fn validate_inputs(qv: &[f64], n: &[usize], delta: f64) -> Result<()> {
    if qv.is_empty() {
        return Err(invalid("need at least one client"));
    }
    if qv.len() != n.len() {
        return Err(invalid(format!("{} query values but {} sample counts", qv.len(), n.len())));
    }
    if let Some(q) = qv.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(invalid(format!("query value {q} outside [0, 1]")));
    }
    if n.contains(&0) {
        return Err(invalid("every client needs at least one sample"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// Sorted, deduplicated union of a user grid and extra breakpoints.
pub(crate) fn merge_grid(grid: &[f64], extra: impl IntoIterator<Item = f64>) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(invalid("lambda grid must be nonempty"));
    }
    if grid.iter().any(|l| !l.is_finite()) {
        return Err(invalid("lambda grid must be finite"));
    }
    let mut all: Vec<f64> = grid.iter().copied().chain(extra).collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    Ok(all)
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assemble_clips() {
        let b = CertifiedBound::assemble(BoundKind::Mean, 0.8, vec![named("meta", 0.5)], BoundParams::new(&[1], 0.1), false);
        assert_eq!(b.value, 1.0);
        assert!((b.raw_value - 1.3).abs() < 1e-15);
    }

    #[test]
    fn upper_at_steps() {
        let c = CdfCurve {
            kind: BoundKind::CdfCurve,
            lambda: vec![0.0, 0.5],
            bound: vec![0.9, 0.3],
            program: None,
            slack: vec![],
            params: BoundParams::new(&[1], 0.1),
            status: CertStatus::Exact,
            zero_slack: false,
            notes: vec![],
        };
        assert_eq!(c.upper_at(-1.0), 1.0);
        assert_eq!(c.upper_at(0.2), 0.9);
        assert_eq!(c.upper_at(0.5), 0.3);
        assert_eq!(c.to_csv(), "lambda,bound\n0,0.9\n0.5,0.3\n");
    }
}
