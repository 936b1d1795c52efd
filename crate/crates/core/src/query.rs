//! Client-side query engine.
//!
//! A client answers `(h, ρ)` with the worst-case empirical loss of `h` over
//! the Wasserstein ball of radius `ρ` around its private empirical
//! distribution, computed through the dual
//!
//! ```text
//! QV(h, ρ) = min_{γ ∈ [0, 1/ρ]}  γρ + (1/n) Σ_i φ_γ(z_i),
//! φ_γ(z)   = sup_{z'} ℓ(z') − γ c(z', z)
//! ```
//!
//! Labels never move (label changes carry infinite cost). The upper limit
//! `1/ρ` on `γ` holds because the loss is 1-bounded: any larger `γ` gives a
//! dual value above 1, while `γ = 0` already gives at most 1.
//!
//! [`Client`] is the only type the server side talks to; it exposes scalar
//! query values and the sample count, never samples or gradients.

use std::sync::Mutex;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{self, Hypothesis, LossFn, Model, ProjectedLoss, Sample};
use crate::rng;
use crate::sim::LocalDataset;

const GOLDEN: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportCost {
    /// `½‖x − x'‖²` on features; 1-strongly convex in its first argument.
    #[default]
    HalfSquaredL2,
    /// `‖x − x'‖` on features.
    L2,
}

impl TransportCost {
    /// Cost of moving a feature vector by Euclidean distance `r`.
    pub fn of_distance(self, r: f64) -> f64 {
        match self {
            TransportCost::HalfSquaredL2 => 0.5 * r * r,
            TransportCost::L2 => r,
        }
    }

    /// Distance whose cost equals `c`.
    pub fn distance_for(self, c: f64) -> f64 {
        match self {
            TransportCost::HalfSquaredL2 => (2.0 * c.max(0.0)).sqrt(),
            TransportCost::L2 => c.max(0.0),
        }
    }

    pub fn feature_cost(self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        match self {
            TransportCost::HalfSquaredL2 => 0.5 * d2,
            TransportCost::L2 => d2.sqrt(),
        }
    }

    /// Full cost between samples; infinite when labels differ.
    pub fn cost(self, a: &Sample, b: &Sample) -> f64 {
        if a.label != b.label {
            return f64::INFINITY;
        }
        self.feature_cost(&a.features, &b.features)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverStatus {
    /// Every inner problem was solved exactly (closed form, exhaustive
    /// search, 1-D search, or ascent in the strongly concave regime).
    Exact,
    /// Some inner maximization may have stopped at a local optimum; the
    /// reported value may understate the true worst case.
    Approximate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryValue {
    /// Worst-case empirical loss, clipped into `[0, 1]`.
    pub value: f64,
    /// Dual objective at `gamma_star` before clipping.
    pub raw_value: f64,
    pub rho: f64,
    pub gamma_star: f64,
    pub inner_iterations: u64,
    pub status: SolverStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerConfig {
    /// Gradient-ascent steps per restart.
    pub steps: usize,
    /// Extra random starting points besides the sample itself.
    pub restarts: usize,
    /// Relative width at which the γ search stops.
    pub gamma_tol: f64,
    pub gamma_max_iter: usize,
    /// Grid resolution of the 1-D search used for rank-one models.
    pub scan_points: usize,
    pub seed: u64,
}

impl Default for InnerConfig {
    fn default() -> Self {
        InnerConfig { steps: 100, restarts: 3, gamma_tol: 1e-6, gamma_max_iter: 200, scan_points: 64, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryConfig {
    pub loss: LossFn,
    pub cost: TransportCost,
    pub inner: InnerConfig,
}

impl Default for LossFn {
    fn default() -> Self {
        LossFn::ZeroOne
    }
}

impl QueryConfig {
    pub fn new(loss: LossFn) -> Self {
        QueryConfig { loss, ..Default::default() }
    }

    pub fn with_cost(mut self, cost: TransportCost) -> Self {
        self.cost = cost;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiValue {
    pub value: f64,
    pub exact: bool,
    pub iterations: u64,
}

/// Per-sample state reused across every `γ` the dual search visits.
enum Prepared {
    Constant(f64),
    /// Zero-one loss on a linear model: the sup is either the current loss
    /// or 1 reached at distance `dist`.
    Flip { base: f64, flip_cost: f64 },
    /// Exhaustive candidates `(loss, cost)`; a lookup table's sample space
    /// is its declared points.
    Candidates(Vec<(f64, f64)>),
    /// Loss depends on `x` only through `u = a·x`. `side` is the only
    /// direction in which the loss can grow, when there is one.
    Line { proj: ProjectedLoss, u0: f64, scale: f64, base: f64, side: Option<f64> },
    Ascent { z: Sample },
}

struct PhiContext<'a> {
    h: &'a Hypothesis,
    loss: LossFn,
    cost: TransportCost,
    inner: InnerConfig,
    beta: f64,
}

impl<'a> PhiContext<'a> {
    fn new(h: &'a Hypothesis, cost: TransportCost, loss: LossFn, inner: InnerConfig) -> Self {
        PhiContext { h, loss, cost, inner, beta: model::curvature_bound(loss, h) }
    }

    fn prepare(&self, z: &Sample) -> Result<Prepared> {
        let base = model::loss(self.loss, self.h, z)?;
        if let Model::LookupTable { points, .. } = &self.h.model {
            let mut cands = vec![(base, 0.0)];
            for p in points {
                cands.push((model::loss_at(self.loss, self.h, p, z.label)?, self.cost.feature_cost(p, &z.features)));
            }
            return Ok(Prepared::Candidates(cands));
        }
        if self.loss == LossFn::ZeroOne {
            let d = model::distance_to_error(self.h, z)?;
            return Ok(if d.is_finite() {
                Prepared::Flip { base, flip_cost: self.cost.of_distance(d) }
            } else {
                Prepared::Constant(base)
            });
        }
        if let Some(proj) = ProjectedLoss::new(self.loss, self.h, z.label)? {
            let scale = proj.direction_norm();
            if scale == 0.0 {
                return Ok(Prepared::Constant(base));
            }
            let u0: f64 = proj.direction.iter().zip(&z.features).map(|(a, x)| a * x).sum();
            // cross-entropy is monotone in the score: label 1 gains by lowering it
            let side = match self.loss {
                LossFn::ClippedCrossEntropy => Some(if z.label == 1.0 { -1.0 } else { 1.0 }),
                _ => None,
            };
            return Ok(Prepared::Line { proj, u0, scale, base, side });
        }
        Ok(Prepared::Ascent { z: z.clone() })
    }

    /// `φ_γ` as `max_j (a_j − γ b_j)` when it is piecewise linear in `γ`.
    fn lines(prep: &Prepared) -> Option<Vec<(f64, f64)>> {
        match prep {
            Prepared::Constant(v) => Some(vec![(*v, 0.0)]),
            Prepared::Flip { base, flip_cost } => Some(vec![(*base, 0.0), (1.0, *flip_cost)]),
            Prepared::Candidates(c) => Some(c.clone()),
            Prepared::Line { .. } | Prepared::Ascent { .. } => None,
        }
    }

    fn phi(&self, prep: &Prepared, gamma: f64, label: f64) -> Result<PhiValue> {
        let exact = |value| PhiValue { value, exact: true, iterations: 0 };
        Ok(match prep {
            Prepared::Constant(v) => exact(*v),
            Prepared::Flip { base, flip_cost } => exact(base.max(1.0 - gamma * flip_cost)),
            Prepared::Candidates(c) => {
                exact(c.iter().map(|&(l, k)| if k == 0.0 { l } else { l - gamma * k }).fold(f64::MIN, f64::max))
            }
            Prepared::Line { .. } | Prepared::Ascent { .. } if gamma == 0.0 => {
                exact(model::loss_supremum(self.loss, self.h, label)?)
            }
            Prepared::Line { proj, u0, scale, base, side } => self.line_search(proj, *u0, *scale, *base, *side, gamma),
            Prepared::Ascent { z } => self.ascent(z, gamma)?,
        })
    }

    /// Global 1-D maximization of `ℓ(u0 + s·t) − γ c(|t|)` over `t`.
    fn line_search(&self, proj: &ProjectedLoss, u0: f64, scale: f64, base: f64, side: Option<f64>, gamma: f64) -> PhiValue {
        // beyond this distance the cost alone exceeds 1
        let reach = self.cost.distance_for(1.0 / gamma);
        let g = |t: f64| proj.eval(u0 + scale * t) - gamma * self.cost.of_distance(t.abs());
        let n = self.inner.scan_points.max(8);
        let step = 2.0 * reach / n as f64;
        let mut best = (0.0, base);
        let mut evals = 1u64;
        let (start, count) = match side {
            Some(s) if s < 0.0 => (-reach, n / 2),
            Some(_) => (0.0, n / 2),
            None => (-reach, n),
        };
        for i in 0..=count {
            let t = start + step * i as f64;
            let v = g(t);
            evals += 1;
            if v > best.1 {
                best = (t, v);
            }
        }
        let (mut lo, mut hi) = (best.0 - step, best.0 + step);
        let mut x1 = hi - GOLDEN * (hi - lo);
        let mut x2 = lo + GOLDEN * (hi - lo);
        let (mut f1, mut f2) = (g(x1), g(x2));
        for _ in 0..60 {
            if hi - lo <= 1e-10 * reach {
                break;
            }
            if f1 >= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - GOLDEN * (hi - lo);
                f1 = g(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + GOLDEN * (hi - lo);
                f2 = g(x2);
            }
            evals += 1;
        }
        let value = best.1.max(f1).max(f2);
        PhiValue { value, exact: true, iterations: evals }
    }

    /// Multi-start gradient ascent on `ℓ(x') − γ c(x', x)`.
    fn ascent(&self, z: &Sample, gamma: f64) -> Result<PhiValue> {
        let x = &z.features;
        let d = x.len();
        let step = 1.0 / (gamma + self.beta);
        let radius = self.cost.distance_for(1.0 / gamma);
        let mut rng = rng::rng_from(rng::derive(self.inner.seed, rng::stream::RESTART, 0));
        let mut starts = vec![x.clone()];
        for _ in 0..self.inner.restarts {
            let dir: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            let r = radius * rng.random::<f64>();
            starts.push(x.iter().zip(&dir).map(|(xi, di)| xi + r * di / n).collect());
        }
        let objective = |xp: &[f64]| -> Result<f64> {
            Ok(model::loss_at(self.loss, self.h, xp, z.label)? - gamma * self.cost.feature_cost(xp, x))
        };
        let mut best = objective(x)?;
        let mut best_grad = f64::INFINITY;
        let mut iterations = 0u64;
        for start in starts {
            let mut xp = start;
            let mut grad_norm = f64::INFINITY;
            for k in 0..self.inner.steps {
                let gl = model::gradient_at(self.loss, self.h, &xp, z.label)?;
                let delta: Vec<f64> = xp.iter().zip(x).map(|(a, b)| a - b).collect();
                let dn = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
                let grad: Vec<f64> = match self.cost {
                    TransportCost::HalfSquaredL2 => gl.iter().zip(&delta).map(|(g, e)| g - gamma * e).collect(),
                    TransportCost::L2 if dn > 0.0 => gl.iter().zip(&delta).map(|(g, e)| g - gamma * e / dn).collect(),
                    TransportCost::L2 => gl.clone(),
                };
                grad_norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
                iterations += 1;
                if grad_norm < 1e-10 {
                    break;
                }
                let eta = match self.cost {
                    TransportCost::HalfSquaredL2 => step,
                    TransportCost::L2 => step / (1.0 + k as f64).sqrt(),
                };
                for (xi, gi) in xp.iter_mut().zip(&grad) {
                    *xi += eta * gi;
                }
            }
            let v = objective(&xp)?;
            if v > best {
                best = v;
                best_grad = grad_norm;
            } else if best_grad.is_infinite() {
                best_grad = grad_norm;
            }
        }
        let concave = self.cost == TransportCost::HalfSquaredL2 && gamma > self.beta;
        Ok(PhiValue { value: best, exact: concave && best_grad < 1e-6, iterations })
    }
}

/// `φ_γ(z) = sup_{z'} ℓ(z') − γ c(z', z)` with the label held fixed.
pub fn phi_gamma(
    h: &Hypothesis,
    gamma: f64,
    z: &Sample,
    cost: TransportCost,
    loss_fn: LossFn,
    inner: &InnerConfig,
) -> Result<PhiValue> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(invalid(format!("gamma must be a finite nonnegative number, got {gamma}")));
    }
    let ctx = PhiContext::new(h, cost, loss_fn, *inner);
    let prep = ctx.prepare(z)?;
    ctx.phi(&prep, gamma, z.label)
}

/// Plain empirical risk, the answer to a `ρ = 0` query.
pub fn empirical_risk(h: &Hypothesis, data: &LocalDataset, loss_fn: LossFn) -> Result<QueryValue> {
    if data.samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for z in &data.samples {
        total += model::loss(loss_fn, h, z)?;
    }
    let value = total / data.samples.len() as f64;
    Ok(QueryValue {
        value,
        raw_value: value,
        rho: 0.0,
        gamma_star: 0.0,
        inner_iterations: 0,
        status: SolverStatus::Exact,
    })
}

/// Worst-case empirical risk over the Wasserstein ball of radius `rho`.
pub fn adversarial_risk(h: &Hypothesis, data: &LocalDataset, rho: f64, cfg: &QueryConfig) -> Result<QueryValue> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(invalid(format!("adversarial_risk needs a positive radius, got {rho}")));
    }
    if data.samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let ctx = PhiContext::new(h, cfg.cost, cfg.loss, cfg.inner);
    let prepared = data
        .samples
        .iter()
        .map(|z| ctx.prepare(z).map(|p| (p, z.label)))
        .collect::<Result<Vec<_>>>()?;
    let n = prepared.len() as f64;
    let lines: Option<Vec<Vec<(f64, f64)>>> = prepared.iter().map(|(p, _)| PhiContext::lines(p)).collect();
    if let Some(lines) = lines {
        return Ok(piecewise_linear_dual(&lines, rho));
    }

    let mut iterations = 0u64;
    let mut exact = true;
    let mut dual = |gamma: f64| -> Result<f64> {
        let mut sum = 0.0;
        for (p, label) in &prepared {
            let v = ctx.phi(p, gamma, *label)?;
            iterations += v.iterations;
            exact &= v.exact;
            sum += v.value;
        }
        Ok(gamma * rho + sum / n)
    };

    let upper = 1.0 / rho;
    let mut best = (0.0, dual(0.0)?);
    let at_upper = dual(upper)?;
    if at_upper < best.1 {
        best = (upper, at_upper);
    }
    let (mut lo, mut hi) = (0.0, upper);
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let (mut f1, mut f2) = (dual(x1)?, dual(x2)?);
    let tol = cfg.inner.gamma_tol * upper;
    for _ in 0..cfg.inner.gamma_max_iter {
        if hi - lo <= tol {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = dual(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = dual(x2)?;
        }
    }
    for (g, f) in [(x1, f1), (x2, f2)] {
        if f < best.1 {
            best = (g, f);
        }
    }
    Ok(QueryValue {
        value: best.1.clamp(0.0, 1.0),
        raw_value: best.1,
        rho,
        gamma_star: best.0,
        inner_iterations: iterations,
        status: if exact { SolverStatus::Exact } else { SolverStatus::Approximate },
    })
}

/// Exact minimum of `γρ + (1/n) Σ_i max_j (a_ij − γ b_ij)` over `[0, 1/ρ]`.
/// The objective is convex and piecewise linear, so it is minimized at a
/// breakpoint; values at sorted breakpoints form a convex sequence.
fn piecewise_linear_dual(lines: &[Vec<(f64, f64)>], rho: f64) -> QueryValue {
    let upper = 1.0 / rho;
    let n = lines.len() as f64;
    let mut knots = vec![0.0, upper];
    for ls in lines {
        for (i, &(a1, b1)) in ls.iter().enumerate() {
            for &(a2, b2) in &ls[i + 1..] {
                if b1 != b2 {
                    let g = (a1 - a2) / (b1 - b2);
                    if g > 0.0 && g < upper {
                        knots.push(g);
                    }
                }
            }
        }
    }
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut evals = 0u64;
    let mut dual = |g: f64| {
        evals += 1;
        g * rho + lines.iter().map(|ls| ls.iter().map(|&(a, b)| if b == 0.0 { a } else { a - g * b }).fold(f64::MIN, f64::max)).sum::<f64>() / n
    };
    // first knot whose successor is not lower
    let (mut lo, mut hi) = (0usize, knots.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if dual(knots[mid + 1]) < dual(knots[mid]) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let value = dual(knots[lo]);
    QueryValue {
        value: value.clamp(0.0, 1.0),
        raw_value: value,
        rho,
        gamma_star: knots[lo],
        inner_iterations: evals,
        status: SolverStatus::Exact,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryBudget {
    pub max: usize,
    pub used: usize,
}

impl QueryBudget {
    pub fn new(max: usize) -> Self {
        QueryBudget { max, used: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.max - self.used
    }
}

/// One client of the federation. Holds its dataset privately and answers
/// scalar queries until its budget runs out.
pub struct Client {
    id: usize,
    data: LocalDataset,
    budget: Mutex<QueryBudget>,
}

impl Client {
    pub fn new(data: LocalDataset, max_queries: usize) -> Result<Self> {
        if data.samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Client { id: data.client, data, budget: Mutex::new(QueryBudget::new(max_queries)) })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn sample_count(&self) -> usize {
        self.data.samples.len()
    }

    pub fn budget(&self) -> QueryBudget {
        *self.budget.lock().expect("budget lock poisoned")
    }

    /// Answers `(h, ρ)`: ordinary risk at `ρ = 0`, adversarial risk above.
    pub fn query(&self, h: &Hypothesis, rho: f64, cfg: &QueryConfig) -> Result<QueryValue> {
        {
            let mut b = self.budget.lock().expect("budget lock poisoned");
            if b.used >= b.max {
                return Err(Error::BudgetExceeded { client: self.id, max: b.max });
            }
            b.used += 1;
        }
        if rho == 0.0 {
            empirical_risk(h, &self.data, cfg.loss)
        } else {
            adversarial_risk(h, &self.data, rho, cfg)
        }
    }
}

impl std::fmt::Debug for Client {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Client")
            .field("id", &self.id)
            .field("samples", &self.data.samples.len())
            .field("budget", &self.budget())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryLogEntry {
    pub client: usize,
    pub rho: f64,
    pub value: f64,
    pub gamma_star: f64,
    pub status: SolverStatus,
}

/// Append-only audit log of answered queries, exported as JSON lines.
#[derive(Debug, Default)]
pub struct QueryLog {
    entries: Mutex<Vec<QueryLogEntry>>,
}

impl QueryLog {
    pub fn record(&self, client: usize, qv: &QueryValue) {
        self.entries.lock().expect("log lock poisoned").push(QueryLogEntry {
            client,
            rho: qv.rho,
            value: qv.value,
            gamma_star: qv.gamma_star,
            status: qv.status,
        });
    }

    /// Entries sorted by `(client, rho)` so concurrent recording does not
    /// change the exported bytes.
    pub fn entries(&self) -> Vec<QueryLogEntry> {
        let mut v = self.entries.lock().expect("log lock poisoned").clone();
        v.sort_by(|a, b| a.client.cmp(&b.client).then(a.rho.total_cmp(&b.rho)));
        v
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in self.entries() {
            out.push_str(&serde_json::to_string(&e)?);
            out.push('\n');
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dataset(samples: Vec<Sample>) -> LocalDataset {
        LocalDataset { client: 0, samples }
    }

    #[test]
    fn empirical_risk_basics() {
        let h = Hypothesis::logistic(vec![1.0], 0.0).unwrap();
        let data = dataset(vec![Sample::new(vec![1.0], 1.0), Sample::new(vec![-1.0], 0.0)]);
        assert_eq!(empirical_risk(&h, &data, LossFn::ZeroOne).unwrap().value, 0.0);
        assert!(matches!(empirical_risk(&h, &dataset(vec![]), LossFn::ZeroOne), Err(Error::EmptyDataset)));
    }

    #[test]
    fn empirical_risk_is_arithmetic_mean() {
        // lookup outputs 0.5 ± √0.1 / √0.3 give squared losses 0.1 and 0.3
        let h = Hypothesis::lookup(vec![vec![0.0], vec![1.0]], vec![0.5 + 0.1f64.sqrt(), 0.5 + 0.3f64.sqrt()], 2)
            .unwrap();
        let data = dataset(vec![Sample::new(vec![0.0], 0.5), Sample::new(vec![1.0], 0.5)]);
        assert_abs_diff_eq!(empirical_risk(&h, &data, LossFn::ClippedSquared).unwrap().value, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn phi_limits() {
        let h = Hypothesis::logistic(vec![2.0], 0.0).unwrap();
        let z = Sample::new(vec![0.4], 1.0);
        let inner = InnerConfig::default();
        let base = model::loss(LossFn::ClippedCrossEntropy, &h, &z).unwrap();
        let big = phi_gamma(&h, 1e9, &z, TransportCost::HalfSquaredL2, LossFn::ClippedCrossEntropy, &inner).unwrap();
        assert_abs_diff_eq!(big.value, base, epsilon = 1e-6);
        let zero = phi_gamma(&h, 0.0, &z, TransportCost::HalfSquaredL2, LossFn::ClippedCrossEntropy, &inner).unwrap();
        assert_eq!(zero.value, 1.0);
        assert!(phi_gamma(&h, -1.0, &z, TransportCost::HalfSquaredL2, LossFn::ZeroOne, &inner).is_err());
    }

    #[test]
    fn phi_matches_closed_form_quadratic() {
        // regressor ŷ = x, target 0: ℓ(x') = x'² (below the clip), cost ½(x'−x)²
        // sup x'² − γ(x'−x)²/2 at x' = γx/(γ−2), value γx²/(γ−2) for γ > 2
        let h = Hypothesis::linear(1, 1, vec![1.0], vec![0.0]).unwrap();
        let inner = InnerConfig::default();
        for &(x, gamma) in &[(0.1, 4.0), (0.2, 6.0), (-0.15, 3.0)] {
            let z = Sample::new(vec![x], 0.0);
            let xs: f64 = gamma * x / (gamma - 2.0);
            assert!(xs * xs < 1.0);
            let expected = gamma * x * x / (gamma - 2.0);
            let got = phi_gamma(&h, gamma, &z, TransportCost::HalfSquaredL2, LossFn::ClippedSquared, &inner).unwrap();
            assert_abs_diff_eq!(got.value, expected, epsilon = 1e-6);
        }
    }

    #[test]
    fn multiclass_ascent_agrees_with_brute_force() {
        let h = Hypothesis::linear(3, 2, vec![1.0, 0.0, -0.5, 0.8, -0.5, -0.8], vec![0.0; 3]).unwrap();
        let z = Sample::new(vec![0.6, 0.1], 0.0);
        let gamma = 4.0;
        let got = phi_gamma(&h, gamma, &z, TransportCost::HalfSquaredL2, LossFn::ClippedCrossEntropy, &InnerConfig::default())
            .unwrap();
        let mut brute = f64::MIN;
        for i in -300..=300 {
            for j in -300..=300 {
                let xp = [0.6 + i as f64 * 0.004, 0.1 + j as f64 * 0.004];
                let v = model::loss_at(LossFn::ClippedCrossEntropy, &h, &xp, 0.0).unwrap()
                    - gamma * TransportCost::HalfSquaredL2.feature_cost(&xp, &z.features);
                brute = brute.max(v);
            }
        }
        assert!(got.value >= brute - 1e-6, "{} < {}", got.value, brute);
        assert!(got.value <= brute + 1e-4);
    }

    #[test]
    fn adversarial_risk_requires_positive_radius() {
        let h = Hypothesis::logistic(vec![1.0], 0.0).unwrap();
        let data = dataset(vec![Sample::new(vec![1.0], 1.0)]);
        assert!(adversarial_risk(&h, &data, 0.0, &QueryConfig::default()).is_err());
    }

    #[test]
    fn adversarial_risk_continuity_and_saturation() {
        let h = Hypothesis::logistic(vec![1.0], 0.0).unwrap();
        let data = dataset(vec![
            Sample::new(vec![1.0], 1.0),
            Sample::new(vec![2.0], 1.0),
            Sample::new(vec![-0.5], 0.0),
        ]);
        let cfg = QueryConfig::new(LossFn::ZeroOne);
        let small = adversarial_risk(&h, &data, 1e-7, &cfg).unwrap();
        assert_abs_diff_eq!(small.value, 0.0, epsilon = 1e-3);
        // moving every sample across the boundary costs ½·(1 + 4 + 0.25)/3
        let big = adversarial_risk(&h, &data, 1.0, &cfg).unwrap();
        assert_abs_diff_eq!(big.value, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn budget_is_enforced() {
        let h = Hypothesis::logistic(vec![1.0], 0.0).unwrap();
        let client = Client::new(dataset(vec![Sample::new(vec![1.0], 1.0)]), 5).unwrap();
        let cfg = QueryConfig::default();
        let first = client.query(&h, 0.0, &cfg).unwrap();
        assert_eq!(first.value, 0.0);
        assert_eq!(client.budget().used, 1);
        for _ in 0..4 {
            client.query(&h, 0.1, &cfg).unwrap();
        }
        let err = client.query(&h, 0.0, &cfg).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { client: 0, max: 5 }));
    }

    #[test]
    fn repeated_queries_are_identical() {
        let h = Hypothesis::linear(3, 1, vec![1.0, 0.0, -1.0], vec![0.0, 0.2, 0.0]).unwrap();
        let data = dataset((0..10).map(|i| Sample::new(vec![i as f64 * 0.2 - 1.0], (i % 3) as f64)).collect());
        let client = Client::new(data, 10).unwrap();
        let cfg = QueryConfig::new(LossFn::ClippedCrossEntropy);
        let a = client.query(&h, 0.05, &cfg).unwrap();
        let b = client.query(&h, 0.05, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn log_is_sorted_jsonl() {
        let log = QueryLog::default();
        let qv = QueryValue { value: 0.5, raw_value: 0.5, rho: 0.1, gamma_star: 2.0, inner_iterations: 3, status: SolverStatus::Exact };
        log.record(2, &qv);
        log.record(1, &qv);
        let text = log.to_jsonl().unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["client"], 1);
        assert_eq!(first["status"], "exact");
    }
}
