//! Mean-loss bound under Wasserstein shifts of the meta-distribution.
//!
//! The server looks for the largest average of per-client query values
//! `QV_k(h, ρ_k)` over radius allocations with `ρ_k ≥ ε/K` and
//! `mean(ρ) ≤ B`, bisecting on the certificate level. Each client is queried
//! on a fixed radius grid once; the resulting profiles are replaced by
//! concave, nondecreasing upper envelopes, which turns every feasibility
//! check into exact water-filling.
//!
//! The default envelope is the minimum of the dual tangent lines
//! `ρ ↦ raw_i + γ_i (ρ − ρ_i)`: weak duality makes each line an upper bound
//! on `QV(ρ)` at every radius, so the envelope dominates the true profile
//! between grid points too. The concave hull of the sampled points is
//! available for comparison but only dominates the samples.

use serde::{Deserialize, Serialize};

use crate::certificate::{named, BoundKind, BoundParams, CertStatus, CertifiedBound};
use crate::error::{invalid, Result};
use crate::exec::{self, Execution};
use crate::model::Hypothesis;
use crate::query::{Client, QueryConfig, QueryLog, QueryValue, SolverStatus};

/// Concave piecewise-linear function given by its breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl PiecewiseLinear {
    /// Linear interpolation; constant beyond the ends.
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.xs.partition_point(|&v| v <= x);
        if i == 0 {
            return self.ys[0];
        }
        if i == self.xs.len() {
            return *self.ys.last().unwrap();
        }
        let (x0, x1, y0, y1) = (self.xs[i - 1], self.xs[i], self.ys[i - 1], self.ys[i]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// `(slope, length)` of each segment, left to right.
    pub fn segments(&self) -> Vec<(f64, f64)> {
        self.xs
            .windows(2)
            .zip(self.ys.windows(2))
            .map(|(x, y)| ((y[1] - y[0]) / (x[1] - x[0]), x[1] - x[0]))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub at: f64,
    pub value: f64,
    pub slope: f64,
}

impl Line {
    fn eval(&self, x: f64) -> f64 {
        self.value + self.slope * (x - self.at)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvelopeKind {
    #[default]
    Tangent,
    Hull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Envelope {
    /// `min(1, min_i line_i)`, optionally pinned at `ρ = 0` to the plain risk.
    Tangent { lines: Vec<Line>, at_zero: Option<f64> },
    /// Least concave majorant of the sampled points.
    Hull { points: PiecewiseLinear },
}

impl Envelope {
    /// Upper concave hull of `points` (any order), made nondecreasing.
    pub fn hull(points: &[(f64, f64)]) -> Result<Envelope> {
        if points.is_empty() {
            return Err(invalid("hull needs at least one point"));
        }
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut hull: Vec<(f64, f64)> = Vec::new();
        for p in pts {
            if let Some(last) = hull.last() {
                if last.0 == p.0 {
                    hull.pop();
                }
            }
            while hull.len() >= 2 {
                let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                // drop b when it lies on or below the chord a→p
                if (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        // past the maximum a concave majorant of a nondecreasing profile is flat
        let top = hull.iter().map(|p| p.1).fold(f64::MIN, f64::max);
        let cut = hull.iter().position(|p| p.1 == top).unwrap();
        let mut xs: Vec<f64> = hull[..=cut].iter().map(|p| p.0).collect();
        let mut ys: Vec<f64> = hull[..=cut].iter().map(|p| p.1).collect();
        if cut + 1 < hull.len() {
            xs.push(hull.last().unwrap().0);
            ys.push(top);
        }
        Ok(Envelope::Hull { points: PiecewiseLinear { xs, ys } })
    }

    pub fn eval(&self, rho: f64) -> f64 {
        match self {
            Envelope::Tangent { lines, at_zero } => {
                let v = lines.iter().map(|l| l.eval(rho)).fold(1.0, f64::min);
                match at_zero {
                    Some(z) if rho <= 0.0 => v.min(*z),
                    _ => v,
                }
            }
            Envelope::Hull { points } => points.eval(rho),
        }
    }

    /// The envelope restricted to `[lo, hi]` as explicit breakpoints.
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<PiecewiseLinear> {
        if !(hi >= lo) {
            return Err(invalid(format!("empty interval [{lo}, {hi}]")));
        }
        match self {
            Envelope::Hull { points } => {
                let (first, last) = (points.xs[0], *points.xs.last().unwrap());
                if lo < first - 1e-12 || hi > last + 1e-12 {
                    return Err(invalid(format!("hull envelope covers [{first}, {last}], asked for [{lo}, {hi}]")));
                }
                let mut xs = vec![lo];
                xs.extend(points.xs.iter().copied().filter(|&x| x > lo && x < hi));
                if hi > lo {
                    xs.push(hi);
                }
                let ys = xs.iter().map(|&x| points.eval(x)).collect();
                Ok(PiecewiseLinear { xs, ys })
            }
            Envelope::Tangent { lines, .. } => {
                let cap = Line { at: 0.0, value: 1.0, slope: 0.0 };
                let all: Vec<Line> = lines.iter().copied().chain(std::iter::once(cap)).collect();
                let mut xs = vec![lo, hi];
                for (i, a) in all.iter().enumerate() {
                    for b in &all[i + 1..] {
                        if a.slope != b.slope {
                            let x = (b.value - b.slope * b.at - a.value + a.slope * a.at) / (a.slope - b.slope);
                            if x > lo && x < hi {
                                xs.push(x);
                            }
                        }
                    }
                }
                xs.sort_by(f64::total_cmp);
                xs.dedup();
                let ys = xs.iter().map(|&x| self.eval(x)).collect();
                Ok(PiecewiseLinear { xs, ys })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub rho: f64,
    /// Query value made nondecreasing along the grid.
    pub value: f64,
    pub raw_value: f64,
    pub gamma_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvProfile {
    pub client: usize,
    pub points: Vec<ProfilePoint>,
    pub envelope: Envelope,
    pub status: SolverStatus,
}

impl QvProfile {
    /// Profile from query answers on an increasing radius grid.
    pub fn from_queries(client: usize, answers: &[QueryValue], kind: EnvelopeKind) -> Result<QvProfile> {
        if answers.is_empty() {
            return Err(invalid("profile needs at least one query"));
        }
        if answers.windows(2).any(|w| w[1].rho <= w[0].rho) {
            return Err(invalid("profile radii must be strictly increasing"));
        }
        let mut running = 0.0f64;
        let points: Vec<ProfilePoint> = answers
            .iter()
            .map(|a| {
                running = running.max(a.value);
                ProfilePoint { rho: a.rho, value: running, raw_value: a.raw_value, gamma_star: a.gamma_star }
            })
            .collect();
        let envelope = match kind {
            EnvelopeKind::Hull => Envelope::hull(&points.iter().map(|p| (p.rho, p.value)).collect::<Vec<_>>())?,
            EnvelopeKind::Tangent => Envelope::Tangent {
                lines: answers
                    .iter()
                    .filter(|a| a.rho > 0.0)
                    .map(|a| Line { at: a.rho, value: a.raw_value, slope: a.gamma_star })
                    .collect(),
                at_zero: answers.iter().find(|a| a.rho == 0.0).map(|a| a.value),
            },
        };
        let status = if answers.iter().all(|a| a.status == SolverStatus::Exact) {
            SolverStatus::Exact
        } else {
            SolverStatus::Approximate
        };
        Ok(QvProfile { client, points, envelope, status })
    }

    /// Profile of a client whose query value is the same constant at every radius.
    pub fn constant(client: usize, rhos: &[f64], q: f64) -> Result<QvProfile> {
        let answers: Vec<QueryValue> = rhos
            .iter()
            .map(|&rho| QueryValue { value: q, raw_value: q, rho, gamma_star: 0.0, inner_iterations: 0, status: SolverStatus::Exact })
            .collect();
        QvProfile::from_queries(client, &answers, EnvelopeKind::Tangent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WassConstants {
    /// Multiplies `√(ln((K+2)/δ)/K)` in the radius budget.
    pub c1: f64,
    /// Multiplies each client's `√(ln((K+2) n_k/(εδ))/n_k)` slack term.
    pub c2: f64,
}

impl Default for WassConstants {
    fn default() -> Self {
        WassConstants { c1: std::f64::consts::FRAC_1_SQRT_2, c2: 1.0 }
    }
}

/// Per-client lower limit and mean budget of the radius program.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusBudget {
    pub floor: f64,
    pub mean: f64,
}

impl RadiusBudget {
    /// `ρ_k ≥ ε/K`, `mean(ρ) ≤ ε(1 + 1/K) + c₁ √(ln((K+2)/δ)/K)`; the
    /// `c₁` term is dropped when `zero_slack` is set.
    pub fn new(epsilon: f64, delta: f64, k: usize, c1: f64, zero_slack: bool) -> Self {
        let kf = k as f64;
        let conc = if zero_slack { 0.0 } else { c1 * (((kf + 2.0) / delta).ln() / kf).sqrt() };
        RadiusBudget { floor: epsilon / kf, mean: epsilon * (1.0 + 1.0 / kf) + conc }
    }

    /// Largest radius any single client can receive.
    pub fn max_radius(&self, k: usize) -> f64 {
        let kf = k as f64;
        (kf * self.mean - (kf - 1.0) * self.floor).max(self.floor)
    }

    /// `size` radii from the floor to the largest reachable radius, log-spaced
    /// (with a zero floor, zero followed by a log grid down to 1e-3 of the top).
    pub fn grid(&self, k: usize, size: usize) -> Vec<f64> {
        let (lo, hi) = (self.floor, self.max_radius(k));
        if size <= 1 || hi <= lo {
            return vec![lo];
        }
        let log_grid = |a: f64, b: f64, m: usize| -> Vec<f64> {
            if m == 1 {
                return vec![b];
            }
            (0..m).map(|i| (a.ln() + (b.ln() - a.ln()) * i as f64 / (m - 1) as f64).exp()).collect()
        };
        let mut g = if lo == 0.0 {
            let mut g = vec![0.0];
            g.extend(log_grid(hi * 1e-3, hi, size - 1));
            g
        } else {
            log_grid(lo, hi, size)
        };
        g[0] = lo;
        *g.last_mut().unwrap() = hi;
        g.dedup();
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusAllocation {
    pub rho: Vec<f64>,
    pub mean_rho: f64,
    pub qv_at_rho: Vec<f64>,
    /// `(1/K) Σ envelope_k(ρ_k)`.
    pub objective: f64,
}

/// Maximizes `(1/K) Σ env_k(ρ_k)` over `ρ_k ≥ floor`, `mean(ρ) ≤ budget.mean`
/// by spending the budget on envelope segments in order of decreasing slope.
pub fn water_fill(profiles: &[QvProfile], budget: &RadiusBudget) -> Result<RadiusAllocation> {
    let k = profiles.len();
    if k == 0 {
        return Err(invalid("no profiles"));
    }
    let hi = budget.max_radius(k);
    let curves = profiles.iter().map(|p| p.envelope.restrict(budget.floor, hi)).collect::<Result<Vec<_>>>()?;
    let mut segs: Vec<(f64, usize, usize, f64)> = Vec::new();
    for (c, curve) in curves.iter().enumerate() {
        for (s, (slope, len)) in curve.segments().into_iter().enumerate() {
            segs.push((slope, c, s, len));
        }
    }
    // concavity keeps each client's segments in order under this sort
    segs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut rho = vec![budget.floor; k];
    let mut remaining = (k as f64 * budget.mean - k as f64 * budget.floor).max(0.0);
    for (slope, c, _, len) in segs {
        if slope <= 0.0 || remaining <= 0.0 {
            break;
        }
        let take = len.min(remaining);
        rho[c] += take;
        remaining -= take;
    }
    let qv_at_rho: Vec<f64> = curves.iter().zip(&rho).map(|(curve, &r)| curve.eval(r)).collect();
    let objective = qv_at_rho.iter().sum::<f64>() / k as f64;
    Ok(RadiusAllocation { mean_rho: rho.iter().sum::<f64>() / k as f64, rho, qv_at_rho, objective })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Feasibility {
    Feasible(RadiusAllocation),
    Infeasible { best: f64 },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }
}

/// Is there an allocation whose average envelope value reaches `t`?
pub fn feasibility_check(t: f64, profiles: &[QvProfile], budget: &RadiusBudget) -> Result<Feasibility> {
    let alloc = water_fill(profiles, budget)?;
    Ok(if alloc.objective >= t { Feasibility::Feasible(alloc) } else { Feasibility::Infeasible { best: alloc.objective } })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BisectionStep {
    pub a: f64,
    pub b: f64,
    pub t: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BisectionTrace {
    pub steps: Vec<BisectionStep>,
    pub final_width: f64,
}

/// Bisection on the certificate level: returns the upper end `b` once
/// `b − a ≤ Δ`, together with the last feasible witness.
pub fn bisection_certificate(
    profiles: &[QvProfile],
    budget: &RadiusBudget,
    tol: f64,
) -> Result<(f64, BisectionTrace, RadiusAllocation)> {
    if !(tol > 0.0) {
        return Err(invalid(format!("bisection tolerance must be positive, got {tol}")));
    }
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut trace = BisectionTrace::default();
    let mut witness = match feasibility_check(0.0, profiles, budget)? {
        Feasibility::Feasible(w) => w,
        Feasibility::Infeasible { .. } => unreachable!("levels are nonnegative"),
    };
    while b - a > tol {
        let t = 0.5 * (a + b);
        let check = feasibility_check(t, profiles, budget)?;
        let feasible = check.is_feasible();
        trace.steps.push(BisectionStep { a, b, t, feasible });
        if let Feasibility::Feasible(w) = check {
            a = t;
            witness = w;
        } else {
            b = t;
        }
    }
    trace.final_width = b - a;
    Ok((b, trace, witness))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WassOptions {
    pub grid_size: usize,
    /// Bisection tolerance `Δ`.
    pub tol: f64,
    pub constants: WassConstants,
    pub envelope: EnvelopeKind,
    /// Zero the slack and the concentration part of the radius budget
    /// (testing only).
    pub zero_slack: bool,
    pub query: QueryConfig,
    pub exec: Execution,
}

impl Default for WassOptions {
    fn default() -> Self {
        WassOptions {
            grid_size: 16,
            tol: 1e-3,
            constants: WassConstants::default(),
            envelope: EnvelopeKind::Tangent,
            zero_slack: false,
            query: QueryConfig::default(),
            exec: Execution::default(),
        }
    }
}

/// Queries every client on `rhos`; errors carry the failing client.
pub fn build_profiles(
    clients: &[Client],
    h: &Hypothesis,
    rhos: &[f64],
    opts: &WassOptions,
    log: Option<&QueryLog>,
) -> Result<Vec<QvProfile>> {
    if rhos.is_empty() {
        return Err(invalid("radius grid must be nonempty"));
    }
    exec::try_map(opts.exec, clients, |c| {
        let answers = rhos
            .iter()
            .map(|&r| {
                let qv = c.query(h, r, &opts.query)?;
                if let Some(log) = log {
                    log.record(c.id(), &qv);
                }
                Ok(qv)
            })
            .collect::<Result<Vec<_>>>()?;
        QvProfile::from_queries(c.id(), &answers, opts.envelope)
    })
}

/// Per-client slack `(1/K) Σ c₂ √(ln((K+2) n_k/(εδ))/n_k)` and meta slack
/// `√(ln((K+2)/δ)/(2K))`.
fn slack_terms(n: &[usize], epsilon: f64, delta: f64, c2: f64) -> Result<(f64, f64)> {
    let k = n.len() as f64;
    if epsilon <= 0.0 {
        return Err(invalid("the per-client slack is unbounded at epsilon = 0; use a positive epsilon"));
    }
    let meta = (((k + 2.0) / delta).ln() / (2.0 * k)).sqrt();
    let per = n.iter().map(|&nk| c2 * (((k + 2.0) * nk as f64 / (epsilon * delta)).ln() / nk as f64).sqrt()).sum::<f64>() / k;
    Ok((meta, per))
}

/// Certificate from already-built profiles.
pub fn wass_bound_from_profiles(
    profiles: &[QvProfile],
    n: &[usize],
    epsilon: f64,
    delta: f64,
    opts: &WassOptions,
) -> Result<(CertifiedBound, BisectionTrace)> {
    if profiles.len() != n.len() || profiles.is_empty() {
        return Err(invalid("need one sample count per profile"));
    }
    if !(delta > 0.0 && delta < 1.0) || !(epsilon >= 0.0) {
        return Err(invalid("need epsilon ≥ 0 and delta in (0, 1)"));
    }
    let budget = RadiusBudget::new(epsilon, delta, profiles.len(), opts.constants.c1, opts.zero_slack);
    let (value, trace, witness) = bisection_certificate(profiles, &budget, opts.tol)?;
    let (meta, per) = if opts.zero_slack { (0.0, 0.0) } else { slack_terms(n, epsilon, delta, opts.constants.c2)? };
    let mut params = BoundParams::new(n, delta);
    params.epsilon = Some(epsilon);
    params.constants = vec![
        named("c1", opts.constants.c1),
        named("c2", opts.constants.c2),
        named("radius-floor", budget.floor),
        named("radius-budget", budget.mean),
        named("bisection-tol", opts.tol),
    ];
    let mut b = CertifiedBound::assemble(
        BoundKind::WassMean,
        value,
        vec![named("meta", meta), named("per-client", per)],
        params,
        opts.zero_slack,
    );
    if profiles.iter().any(|p| p.status != SolverStatus::Exact) {
        b.status = CertStatus::Approximate;
    }
    b.witness = Some(serde_json::to_value(&witness)?);
    Ok((b, trace))
}

/// End-to-end bound: query each client on the radius grid, then bisect.
pub fn wass_mean_bound(
    clients: &[Client],
    h: &Hypothesis,
    epsilon: f64,
    delta: f64,
    opts: &WassOptions,
) -> Result<(CertifiedBound, BisectionTrace)> {
    if clients.is_empty() {
        return Err(invalid("need at least one client"));
    }
    if opts.grid_size < 2 {
        return Err(invalid("grid_size must be at least 2"));
    }
    if !(epsilon >= 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("need epsilon ≥ 0 and delta in (0, 1)"));
    }
    let budget = RadiusBudget::new(epsilon, delta, clients.len(), opts.constants.c1, opts.zero_slack);
    let rhos = budget.grid(clients.len(), opts.grid_size);
    let profiles = build_profiles(clients, h, &rhos, opts, None)?;
    let n: Vec<usize> = clients.iter().map(Client::sample_count).collect();
    wass_bound_from_profiles(&profiles, &n, epsilon, delta, opts)
}
