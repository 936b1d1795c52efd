//! Experiment configuration: one JSON document drives every subcommand.

use std::fs;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};

use fedrobust::fdiv::DivergenceName;
use fedrobust::oracle::{BoundRequest, TargetShift};
use fedrobust::wass::WassOptions;
use fedrobust::{Hypothesis, LossFn, MetaConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: MetaConfig,
    pub model: ModelRef,
    #[serde(default)]
    pub loss: LossFn,
    /// Number of source clients `K`.
    pub clients: NonZeroUsize,
    /// Samples per source client.
    pub samples: NonZeroUsize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Queries each client answers before refusing.
    #[serde(default = "default_max_queries")]
    pub max_queries: usize,
    #[serde(default)]
    pub requests: Vec<BoundRequest>,
    #[serde(default)]
    pub wass: WassOptions,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub plots: PlotSpec,
    /// Overrides `world.seed` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_delta() -> f64 {
    0.1
}

fn default_max_queries() -> usize {
    64
}

/// A hypothesis given inline or as a path to a JSON file, relative to the
/// configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    File { path: PathBuf },
    Inline(Hypothesis),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    pub trials: usize,
    pub target_clients: usize,
    /// Shift applied to every request; when absent each request is checked
    /// against the worst shift it claims to cover.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift: Option<TargetShift>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tightness: Option<TightnessSpec>,
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec { trials: 20, target_clients: 500, shift: None, tightness: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TightnessSpec {
    pub divergence: DivergenceName,
    pub epsilon: f64,
    /// `[K, n]` pairs, increasing in `K`.
    pub schedule: Vec<(usize, usize)>,
    pub trials: usize,
    #[serde(default = "default_probe_targets")]
    pub target_clients: usize,
}

fn default_probe_targets() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotSpec {
    /// Size of the target network behind the empirical curves.
    pub target_clients: usize,
}

impl Default for PlotSpec {
    fn default() -> Self {
        PlotSpec { target_clients: 2000 }
    }
}

/// Worst shift a request claims to cover.
pub fn declared_shift(request: &BoundRequest) -> TargetShift {
    match request {
        BoundRequest::Mean | BoundRequest::Cdf { .. } => TargetShift::None,
        BoundRequest::FdivMean { divergence, epsilon } | BoundRequest::FdivCdf { divergence, epsilon, .. } => {
            TargetShift::Fdiv { divergence: *divergence, epsilon: *epsilon }
        }
        BoundRequest::WassMean { epsilon } => TargetShift::Wass { budget: *epsilon, adversarial: true },
    }
}

impl ExperimentConfig {
    /// Parses JSON text; syntax and type errors carry line and column.
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| CliError::Usage(format!("{}:{}:{}: {e}", origin.display(), e.line(), e.column())))?;
        cfg.validate(text, origin)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text, path)?;
        if let ModelRef::File { path: model } = &cfg.model {
            let resolved = path.parent().unwrap_or(Path::new(".")).join(model);
            let text = fs::read_to_string(&resolved)
                .map_err(|e| CliError::Usage(format!("cannot read model {}: {e}", resolved.display())))?;
            let h: Hypothesis = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}:{}:{}: {e}", resolved.display(), e.line(), e.column())))?;
            cfg.model = ModelRef::Inline(h);
        }
        Ok(cfg)
    }

    /// Semantic checks serde cannot express; messages point at the line of
    /// the offending key.
    fn validate(&self, text: &str, origin: &Path) -> Result<(), CliError> {
        let fail = |key: &str, msg: String| {
            let line = line_of_key(text, key).map_or(String::new(), |l| format!("{l}:"));
            CliError::Usage(format!("{}:{line} {msg}", origin.display()))
        };
        self.world.validate().map_err(|e| fail("world", e.to_string()))?;
        if let ModelRef::Inline(h) = &self.model {
            h.validate().map_err(|e| fail("model", e.to_string()))?;
            if h.input_dim() != self.world.dim {
                return Err(fail("model", format!("model input dimension {} differs from world dim {}", h.input_dim(), self.world.dim)));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(fail("delta", format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.max_queries == 0 {
            return Err(fail("max_queries", "max_queries must be at least 1".into()));
        }
        for r in &self.requests {
            let eps = match r {
                BoundRequest::FdivMean { epsilon, .. } | BoundRequest::FdivCdf { epsilon, .. } => Some(*epsilon),
                BoundRequest::WassMean { epsilon } => Some(*epsilon),
                _ => None,
            };
            if let Some(e) = eps {
                if !(e >= 0.0) || !e.is_finite() {
                    return Err(fail("epsilon", format!("epsilon must be finite and nonnegative, got {e}")));
                }
            }
            if let Some(g) = r.grid() {
                if g.is_empty() || g.iter().any(|v| !v.is_finite()) {
                    return Err(fail("grid", "lambda grids must be nonempty and finite".into()));
                }
            }
        }
        if self.verify.trials == 0 || self.verify.target_clients == 0 {
            return Err(fail("verify", "verify.trials and verify.target_clients must be at least 1".into()));
        }
        if self.plots.target_clients == 0 {
            return Err(fail("plots", "plots.target_clients must be at least 1".into()));
        }
        Ok(())
    }

    pub fn hypothesis(&self) -> &Hypothesis {
        match &self.model {
            ModelRef::Inline(h) => h,
            ModelRef::File { .. } => unreachable!("file models are resolved on load"),
        }
    }

    /// World configuration with the seed override applied.
    pub fn world(&self) -> MetaConfig {
        let mut w = self.world.clone();
        if let Some(s) = self.seed {
            w.seed = s;
        }
        w
    }
}

/// 1-based line of the first `"key":` occurrence.
fn line_of_key(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}
