//! Independent verifiers.
//!
//! Nothing here reuses the certifiers' solvers: the reweighting oracle
//! enumerates a grid, the Wasserstein-ball oracle solves the primal
//! transport LP with its own simplex, and the coverage experiment measures
//! violation frequencies against population-level target statistics.

use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::certificate::{BoundKind, CdfCurve};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::fdiv::{self, DivergenceName, DivergenceSpec, FdivOptions};
use crate::model::{self, Hypothesis, LossFn, Sample};
use crate::nonrobust;
use crate::query::{Client, TransportCost};
use crate::rng::{self, stream};
use crate::sim::{self, MetaConfig};
use crate::wass::{self, WassOptions};

/// Best objective of the reweighting program over the grid
/// `{0, step, 2·step, …} ∩ [0, Λ]` in each coordinate. Requires `1/step`
/// to be an integer so the mean constraint is checked exactly.
pub fn grid_reweight_oracle(q: &[f64], spec: &DivergenceSpec, eps_budget: f64, band: f64, step: f64) -> Result<f64> {
    let k = q.len();
    if k == 0 || k > 3 {
        return Err(Error::OracleRefused(format!("grid enumeration supports 1 to 3 clients, got {k}")));
    }
    let per_unit = (1.0 / step).round();
    if !(step > 0.0) || (per_unit * step - 1.0).abs() > 1e-9 {
        return Err(Error::OracleRefused(format!("1/step must be an integer, got step {step}")));
    }
    let top = (spec.lambda_cap * per_unit + 1e-9).floor() as i64;
    // independent evaluation of the generator
    let f = |t: f64| match spec.name {
        DivergenceName::Kl => {
            if t == 0.0 {
                0.0
            } else {
                t * t.ln()
            }
        }
        DivergenceName::ChiSquare => (t - 1.0).powi(2),
    };
    let table: Vec<f64> = (0..=top).map(|i| f(i as f64 / per_unit)).collect();
    let i_min = (0..=top as usize).min_by(|&a, &b| table[a].total_cmp(&table[b])).unwrap() as i64;
    let kf = k as f64;
    let sum_lo = (kf * per_unit * (1.0 - band) - 1e-9).ceil() as i64;
    let sum_hi = (kf * per_unit * (1.0 + band) + 1e-9).floor() as i64;
    let f_cap = kf * eps_budget + 1e-12;
    let qk = q[k - 1];

    // largest index in [lo, hi] with table value ≤ r, using that the table
    // decreases up to i_min and increases after it
    let largest_within = |lo: i64, hi: i64, r: f64| -> Option<i64> {
        if lo > hi {
            return None;
        }
        if table[hi as usize] <= r {
            return Some(hi);
        }
        if hi <= i_min {
            return None;
        }
        let start = lo.max(i_min);
        if table[start as usize] > r {
            return None;
        }
        let (mut good, mut bad) = (start, hi);
        while bad - good > 1 {
            let mid = (good + bad) / 2;
            if table[mid as usize] <= r {
                good = mid;
            } else {
                bad = mid;
            }
        }
        Some(good)
    };

    let mut best = f64::NEG_INFINITY;
    let mut prefix = vec![0i64; k - 1];
    loop {
        let used: i64 = prefix.iter().sum();
        let used_f: f64 = prefix.iter().map(|&i| table[i as usize]).sum();
        let obj: f64 = prefix.iter().zip(q).map(|(&i, qi)| i as f64 / per_unit * qi).sum();
        let lo = (sum_lo - used).max(0);
        let hi = (sum_hi - used).min(top);
        if let Some(last) = largest_within(lo, hi, f_cap - used_f) {
            best = best.max((obj + last as f64 / per_unit * qk) / kf);
        }
        // odometer over the prefix coordinates
        let mut pos = 0;
        loop {
            if pos == prefix.len() {
                return Ok(best);
            }
            prefix[pos] += 1;
            if prefix[pos] <= top {
                break;
            }
            prefix[pos] = 0;
            pos += 1;
        }
    }
}

pub mod lp {
    //! Dense two-phase tableau simplex with Bland's rule, for the small
    //! programs the oracles need.

    use crate::error::{Error, Result};

    const TOL: f64 = 1e-10;

    #[derive(Debug, Clone, PartialEq)]
    pub struct LpSolution {
        pub value: f64,
        pub x: Vec<f64>,
    }

    struct Tableau {
        rows: Vec<Vec<f64>>,
        basis: Vec<usize>,
        width: usize,
    }

    impl Tableau {
        fn pivot(&mut self, r: usize, c: usize) {
            let p = self.rows[r][c];
            for v in self.rows[r].iter_mut() {
                *v /= p;
            }
            let pivot_row = self.rows[r].clone();
            for (i, row) in self.rows.iter_mut().enumerate() {
                if i != r {
                    let m = row[c];
                    if m != 0.0 {
                        for (v, pv) in row.iter_mut().zip(&pivot_row) {
                            *v -= m * pv;
                        }
                    }
                }
            }
            self.basis[r] = c;
        }

        /// Maximizes `cost·x` from the current basic feasible solution.
        fn optimize(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool) -> Result<()> {
            let rhs = self.width;
            for _ in 0..50_000 {
                let reduced = |j: usize| -> f64 {
                    self.rows.iter().zip(&self.basis).map(|(row, &b)| cost[b] * row[j]).sum::<f64>() - cost[j]
                };
                let Some(enter) = (0..self.width).find(|&j| allowed(j) && !self.basis.contains(&j) && reduced(j) < -TOL)
                else {
                    return Ok(());
                };
                let mut leave: Option<(usize, f64)> = None;
                for (i, row) in self.rows.iter().enumerate() {
                    if row[enter] > TOL {
                        let ratio = row[rhs] / row[enter];
                        leave = match leave {
                            None => Some((i, ratio)),
                            Some((li, lr)) => {
                                if ratio < lr - TOL || (ratio <= lr + TOL && self.basis[i] < self.basis[li]) {
                                    Some((i, ratio))
                                } else {
                                    Some((li, lr))
                                }
                            }
                        };
                    }
                }
                let Some((r, _)) = leave else {
                    return Err(Error::OracleRefused("linear program is unbounded".into()));
                };
                self.pivot(r, enter);
            }
            Err(Error::OracleRefused("simplex iteration limit reached".into()))
        }
    }

    /// `max c·x` s.t. `a_le x ≤ b_le`, `a_eq x = b_eq`, `x ≥ 0`, with
    /// nonnegative right-hand sides.
    pub fn maximize(c: &[f64], a_le: &[Vec<f64>], b_le: &[f64], a_eq: &[Vec<f64>], b_eq: &[f64]) -> Result<LpSolution> {
        let n = c.len();
        if b_le.iter().chain(b_eq).any(|&b| b < 0.0) {
            return Err(Error::OracleRefused("right-hand sides must be nonnegative".into()));
        }
        let (m_le, m_eq) = (a_le.len(), a_eq.len());
        let width = n + m_le + m_eq;
        let mut rows = Vec::new();
        let mut basis = Vec::new();
        for (i, (a, &b)) in a_le.iter().zip(b_le).enumerate() {
            let mut row = vec![0.0; width + 1];
            row[..n].copy_from_slice(a);
            row[n + i] = 1.0;
            row[width] = b;
            rows.push(row);
            basis.push(n + i);
        }
        for (i, (a, &b)) in a_eq.iter().zip(b_eq).enumerate() {
            let mut row = vec![0.0; width + 1];
            row[..n].copy_from_slice(a);
            row[n + m_le + i] = 1.0;
            row[width] = b;
            rows.push(row);
            basis.push(n + m_le + i);
        }
        let mut t = Tableau { rows, basis, width };
        let is_art = |j: usize| j >= n + m_le;
        let mut phase1 = vec![0.0; width];
        for v in phase1.iter_mut().skip(n + m_le) {
            *v = -1.0;
        }
        t.optimize(&phase1, &|_| true)?;
        let infeas: f64 = t.rows.iter().zip(&t.basis).filter(|(_, &b)| is_art(b)).map(|(r, _)| r[width]).sum();
        if infeas > 1e-9 {
            return Err(Error::OracleRefused("linear program is infeasible".into()));
        }
        for r in 0..t.rows.len() {
            if is_art(t.basis[r]) {
                if let Some(c) = (0..n + m_le).find(|&j| t.rows[r][j].abs() > TOL) {
                    t.pivot(r, c);
                }
            }
        }
        let mut phase2 = vec![0.0; width];
        phase2[..n].copy_from_slice(c);
        t.optimize(&phase2, &|j| !is_art(j))?;
        let mut x = vec![0.0; n];
        for (row, &b) in t.rows.iter().zip(&t.basis) {
            if b < n {
                x[b] = row[width];
            }
        }
        let value = c.iter().zip(&x).map(|(a, b)| a * b).sum();
        Ok(LpSolution { value, x })
    }

    #[cfg(test)]
    mod tests {
        use super::*;

        #[test]
        fn textbook_program() {
            // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → 36 at (2, 6)
            let s = maximize(
                &[3.0, 5.0],
                &[vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
                &[4.0, 12.0, 18.0],
                &[],
                &[],
            )
            .unwrap();
            assert!((s.value - 36.0).abs() < 1e-9);
            assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
        }

        #[test]
        fn equality_and_infeasibility() {
            let s = maximize(&[1.0, 2.0], &[], &[], &[vec![1.0, 1.0]], &[1.0]).unwrap();
            assert!((s.value - 2.0).abs() < 1e-12);
            assert!(maximize(&[1.0], &[vec![1.0]], &[1.0], &[vec![1.0]], &[2.0]).is_err());
        }
    }
}

/// `sup Σ_j m_j ℓ_j` over transport plans from the source masses with
/// total cost at most `rho`. `cost[i][j]` may be infinite (forbidden move).
pub fn wass_ball_lp_oracle(masses: &[f64], losses: &[f64], rho: f64, cost: &[Vec<f64>]) -> Result<f64> {
    if losses.len() > 20 {
        return Err(Error::OracleRefused(format!("support of {} points exceeds 20", losses.len())));
    }
    if cost.len() != masses.len() || cost.iter().any(|r| r.len() != losses.len()) {
        return Err(Error::DimensionMismatch { expected: masses.len(), got: cost.len() });
    }
    let mut vars = Vec::new();
    for (i, row) in cost.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c.is_finite() {
                vars.push((i, j, c));
            }
        }
    }
    let obj: Vec<f64> = vars.iter().map(|&(_, j, _)| losses[j]).collect();
    let budget_row: Vec<f64> = vars.iter().map(|&(_, _, c)| c).collect();
    let a_eq: Vec<Vec<f64>> = (0..masses.len())
        .map(|i| vars.iter().map(|&(s, _, _)| if s == i { 1.0 } else { 0.0 }).collect())
        .collect();
    Ok(lp::maximize(&obj, &[budget_row], &[rho.max(0.0)], &a_eq, masses)?.value)
}

/// Moves every sample along a random direction, splitting a random total
/// cost at most `n·rho` among samples. Labels are unchanged.
pub fn random_feasible_perturbation(samples: &[Sample], rho: f64, cost: TransportCost, seed: u64) -> Vec<Sample> {
    let mut r = rng::rng_from(seed);
    let total = rho * samples.len() as f64 * r.random::<f64>();
    let shares: Vec<f64> = samples.iter().map(|_| Exp1.sample(&mut r)).collect();
    let share_sum: f64 = shares.iter().sum();
    samples
        .iter()
        .zip(&shares)
        .map(|(z, s)| {
            let dir: Vec<f64> = z.features.iter().map(|_| StandardNormal.sample(&mut r)).collect();
            let norm = dir.iter().map(|v: &f64| v * v).sum::<f64>().sqrt().max(1e-300);
            let dist = cost.distance_for(total * s / share_sum);
            let features = z.features.iter().zip(&dir).map(|(x, d)| x + dist * d / norm).collect();
            Sample::new(features, z.label)
        })
        .collect()
}

pub fn mean_loss(h: &Hypothesis, samples: &[Sample], loss_fn: LossFn) -> Result<f64> {
    let mut total = 0.0;
    for z in samples {
        total += model::loss(loss_fn, h, z)?;
    }
    Ok(total / samples.len() as f64)
}

/// Population risks of a fresh network drawn from `cfg`.
pub fn network_risks(
    cfg: &MetaConfig,
    k: usize,
    base_seed: u64,
    h: &Hypothesis,
    loss_fn: LossFn,
    exec: Execution,
) -> Result<Vec<f64>> {
    let specs = sim::sample_network(cfg, k, base_seed)?;
    exec::try_map(exec, &specs, |s| sim::population_risk(s, cfg, h, loss_fn))
}

/// Fraction of risks at or above `lambda`.
pub fn survival(risks: &[f64], lambda: f64) -> f64 {
    risks.iter().filter(|&&r| r >= lambda).count() as f64 / risks.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundRequest {
    Mean,
    Cdf { grid: Vec<f64> },
    FdivMean { divergence: DivergenceName, epsilon: f64 },
    FdivCdf { divergence: DivergenceName, epsilon: f64, grid: Vec<f64> },
    WassMean { epsilon: f64 },
}

impl BoundRequest {
    pub fn kind(&self) -> BoundKind {
        match self {
            BoundRequest::Mean => BoundKind::Mean,
            BoundRequest::Cdf { .. } => BoundKind::CdfCurve,
            BoundRequest::FdivMean { .. } => BoundKind::FdivMean,
            BoundRequest::FdivCdf { .. } => BoundKind::FdivCdf,
            BoundRequest::WassMean { .. } => BoundKind::WassMean,
        }
    }

    pub fn grid(&self) -> Option<&[f64]> {
        match self {
            BoundRequest::Cdf { grid } | BoundRequest::FdivCdf { grid, .. } => Some(grid),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetShift {
    #[default]
    None,
    /// Exponential tilt of the archetype weights to divergence exactly `epsilon`.
    Fdiv { divergence: DivergenceName, epsilon: f64 },
    /// Every client translated at transport cost exactly `budget`.
    Wass {
        budget: f64,
        #[serde(default)]
        adversarial: bool,
    },
}

/// Rejects shift/bound pairs whose bound does not claim to cover the shift.
pub fn check_compatible(bound: &BoundRequest, shift: &TargetShift) -> Result<()> {
    let mismatch = |m: String| Err(Error::ConfigMismatch(m));
    match (shift, bound) {
        (TargetShift::None, _) => Ok(()),
        (TargetShift::Fdiv { epsilon, .. }, _) if *epsilon == 0.0 => Ok(()),
        (TargetShift::Wass { budget, .. }, _) if *budget == 0.0 => Ok(()),
        (
            TargetShift::Fdiv { divergence, epsilon },
            BoundRequest::FdivMean { divergence: d, epsilon: e } | BoundRequest::FdivCdf { divergence: d, epsilon: e, .. },
        ) => {
            if d != divergence {
                mismatch(format!("shift uses {divergence} but the bound certifies {d}"))
            } else if epsilon > e {
                mismatch(format!("shift divergence {epsilon} exceeds the certified epsilon {e}"))
            } else {
                Ok(())
            }
        }
        (TargetShift::Wass { budget, .. }, BoundRequest::WassMean { epsilon }) => {
            if budget > epsilon {
                mismatch(format!("shift cost {budget} exceeds the certified epsilon {epsilon}"))
            } else {
                Ok(())
            }
        }
        (s, b) => mismatch(format!("a {} bound does not cover a {} shift", b.kind().name(), shift_name(s))),
    }
}

fn shift_name(s: &TargetShift) -> &'static str {
    match s {
        TargetShift::None => "none",
        TargetShift::Fdiv { .. } => "f-divergence",
        TargetShift::Wass { .. } => "wasserstein",
    }
}

/// Target meta-distribution for a shift; f-divergence tilts first score
/// archetypes by risk so the tilt moves mass toward harder clients.
pub fn shifted_world(cfg: &MetaConfig, shift: &TargetShift, h: &Hypothesis, loss_fn: LossFn) -> Result<MetaConfig> {
    match shift {
        TargetShift::None => Ok(cfg.clone()),
        TargetShift::Fdiv { divergence, epsilon } => {
            let scored = sim::score_archetypes_by_risk(cfg, h, loss_fn)?;
            Ok(sim::tilt_to_divergence(&scored, *divergence, *epsilon)?.config)
        }
        TargetShift::Wass { budget, adversarial } => {
            let cost = TransportCost::HalfSquaredL2;
            if *adversarial {
                let dirs = sim::adversarial_directions(h, loss_fn, cfg.classes)?;
                let r = cost.distance_for(*budget);
                let m = cfg.effective_archetypes().len();
                Ok(sim::shift_meta_wass_radii(cfg, &vec![r; m], &dirs, cost)?.config)
            } else {
                Ok(sim::shift_meta_wass(cfg, *budget, cost)?.config)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageConfig {
    pub world: MetaConfig,
    pub model: Hypothesis,
    pub loss: LossFn,
    pub clients: usize,
    pub samples: usize,
    pub delta: f64,
    pub bound: BoundRequest,
    #[serde(default)]
    pub shift: TargetShift,
    pub trials: usize,
    #[serde(default = "default_target_clients")]
    pub target_clients: usize,
    #[serde(default)]
    pub wass: WassOptions,
}

fn default_target_clients() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRate {
    pub lambda: f64,
    pub violations: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub trials: usize,
    /// For curves, a trial violates when any grid point does.
    pub violations: usize,
    pub violation_rate: f64,
    pub delta: f64,
    pub bound_kind: BoundKind,
    pub config_digest: String,
    /// `δ + 3 √(δ(1−δ)/trials)`.
    pub rate_ceiling: f64,
    pub mean_bound: f64,
    pub mean_target: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub per_lambda: Vec<LambdaRate>,
}

impl CoverageReport {
    pub fn within_delta(&self) -> bool {
        self.violation_rate <= self.delta
    }

    pub fn within_ceiling(&self) -> bool {
        self.violation_rate <= self.rate_ceiling
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bound_kind,trials,violations,violation_rate,delta,rate_ceiling,mean_bound,mean_target\n");
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            self.bound_kind.name(),
            self.trials,
            self.violations,
            self.violation_rate,
            self.delta,
            self.rate_ceiling,
            self.mean_bound,
            self.mean_target
        ));
        out
    }
}

pub fn digest<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Violation guard band: a bound counts as violated only when the target
/// exceeds it by more than this.
pub const GUARD: f64 = 1e-9;

enum TrialBound {
    Scalar(f64),
    Curve(CdfCurve),
}

/// Source network for `trial`, answered through clients with exactly the
/// budget the request needs.
fn trial_clients(cfg: &CoverageConfig, trial: usize) -> Result<Vec<Client>> {
    let base = rng::derive(cfg.world.seed, stream::TRIAL, trial as u64);
    let specs = sim::sample_network(&cfg.world, cfg.clients, base)?;
    let queries = match cfg.bound {
        BoundRequest::WassMean { .. } => cfg.wass.grid_size.max(1),
        _ => 1,
    };
    specs
        .iter()
        .map(|s| Client::new(sim::generate_dataset(s, cfg.samples, &cfg.world)?, queries))
        .collect()
}

/// Certifies one source network with the requested bound.
pub fn certify_request(
    request: &BoundRequest,
    clients: &[Client],
    h: &Hypothesis,
    loss_fn: LossFn,
    delta: f64,
    wass_opts: &WassOptions,
    exec: Execution,
) -> Result<(Option<crate::certificate::CertifiedBound>, Option<CdfCurve>)> {
    let n: Vec<usize> = clients.iter().map(Client::sample_count).collect();
    let plain = || -> Result<Vec<f64>> {
        let cfg = crate::query::QueryConfig { loss: loss_fn, ..wass_opts.query };
        exec::try_map(exec, clients, |c| c.query(h, 0.0, &cfg).map(|v| v.value))
    };
    let fopts = FdivOptions { exec, ..Default::default() };
    Ok(match request {
        BoundRequest::Mean => (Some(nonrobust::mean_bound(&plain()?, &n, delta)?), None),
        BoundRequest::Cdf { grid } => (None, Some(nonrobust::cdf_bound(&plain()?, &n, delta, grid)?)),
        BoundRequest::FdivMean { divergence, epsilon } => {
            (Some(fdiv::fdiv_mean_bound_with(&plain()?, &n, delta, *epsilon, *divergence, &fopts)?), None)
        }
        BoundRequest::FdivCdf { divergence, epsilon, grid } => {
            (None, Some(fdiv::fdiv_cdf_bound_with(&plain()?, &n, delta, *epsilon, *divergence, grid, &fopts)?))
        }
        BoundRequest::WassMean { epsilon } => {
            let mut opts = *wass_opts;
            opts.query.loss = loss_fn;
            opts.exec = exec;
            (Some(wass::wass_mean_bound(clients, h, *epsilon, delta, &opts)?.0), None)
        }
    })
}

/// Repeated-world coverage measurement. Each trial draws an independent
/// source network and an independent target network from the (possibly
/// shifted) meta-distribution, and compares the bound with the target's
/// population-level statistic.
pub fn coverage_experiment(cfg: &CoverageConfig, exec: Execution) -> Result<CoverageReport> {
    if cfg.trials == 0 {
        return Err(crate::error::invalid("trials must be at least 1"));
    }
    if cfg.target_clients == 0 {
        return Err(crate::error::invalid("target_clients must be at least 1"));
    }
    check_compatible(&cfg.bound, &cfg.shift)?;
    let target_world = shifted_world(&cfg.world, &cfg.shift, &cfg.model, cfg.loss)?;
    let grid: Vec<f64> = cfg.bound.grid().map(<[f64]>::to_vec).unwrap_or_default();

    let outcomes = exec::map_range(exec, cfg.trials, |t| -> Result<(f64, f64, Vec<bool>)> {
        let clients = trial_clients(cfg, t)?;
        let (scalar, curve) =
            certify_request(&cfg.bound, &clients, &cfg.model, cfg.loss, cfg.delta, &cfg.wass, Execution::Sequential)?;
        let bound = match (scalar, curve) {
            (Some(b), _) => TrialBound::Scalar(b.value),
            (_, Some(c)) => TrialBound::Curve(c),
            _ => unreachable!(),
        };
        let target_seed = rng::derive(cfg.world.seed, stream::TARGET, t as u64);
        let risks = network_risks(&target_world, cfg.target_clients, target_seed, &cfg.model, cfg.loss, Execution::Sequential)?;
        Ok(match bound {
            TrialBound::Scalar(b) => {
                let target = risks.iter().sum::<f64>() / risks.len() as f64;
                (b, target, vec![target > b + GUARD])
            }
            TrialBound::Curve(c) => {
                let flags: Vec<bool> = grid.iter().map(|&l| survival(&risks, l) > c.upper_at(l) + GUARD).collect();
                let avg_bound = grid.iter().map(|&l| c.upper_at(l)).sum::<f64>() / grid.len() as f64;
                let avg_target = grid.iter().map(|&l| survival(&risks, l)).sum::<f64>() / grid.len() as f64;
                (avg_bound, avg_target, flags)
            }
        })
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let trials = cfg.trials;
    let violations = outcomes.iter().filter(|o| o.2.iter().any(|&v| v)).count();
    let per_lambda = grid
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let v = outcomes.iter().filter(|o| o.2[i]).count();
            LambdaRate { lambda, violations: v, rate: v as f64 / trials as f64 }
        })
        .collect();
    let tf = trials as f64;
    Ok(CoverageReport {
        trials,
        violations,
        violation_rate: violations as f64 / tf,
        delta: cfg.delta,
        bound_kind: cfg.bound.kind(),
        config_digest: digest(cfg)?,
        rate_ceiling: cfg.delta + 3.0 * (cfg.delta * (1.0 - cfg.delta) / tf).sqrt(),
        mean_bound: outcomes.iter().map(|o| o.0).sum::<f64>() / tf,
        mean_target: outcomes.iter().map(|o| o.1).sum::<f64>() / tf,
        per_lambda,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub world: MetaConfig,
    pub model: Hypothesis,
    pub loss: LossFn,
    pub delta: f64,
    pub divergence: DivergenceName,
    pub epsilon: f64,
    /// `(K, n)` pairs, increasing in `K`.
    pub schedule: Vec<(usize, usize)>,
    pub trials: usize,
    #[serde(default = "default_probe_targets")]
    pub target_clients: usize,
}

fn default_probe_targets() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub k: usize,
    pub n: usize,
    pub median_gap: f64,
    /// Standard error of the median, `1.2533 · sd / √trials`.
    pub se: f64,
    pub median_meta_slack: f64,
    pub median_per_client_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessTable {
    /// Mean risk of the worst constructed shift (tilt to exactly ε).
    pub target: f64,
    pub rows: Vec<ProbeRow>,
}

impl TightnessTable {
    /// Each gap is below the previous one up to twice the combined
    /// standard error of the two medians.
    pub fn decreasing_within_noise(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].median_gap - w[0].median_gap < 2.0 * (w[0].se.powi(2) + w[1].se.powi(2)).sqrt())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,n,median_gap,se,median_meta_slack,median_per_client_slack\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.k, r.n, r.median_gap, r.se, r.median_meta_slack, r.median_per_client_slack
            ));
        }
        out
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Gap between the f-divergence mean certificate (unclipped) and the mean
/// risk under the tilt that spends the whole budget, across network sizes.
pub fn tightness_probe(cfg: &ProbeConfig, exec: Execution) -> Result<TightnessTable> {
    if cfg.schedule.is_empty() || cfg.trials == 0 {
        return Err(crate::error::invalid("probe needs a nonempty schedule and at least one trial"));
    }
    if cfg.schedule.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(crate::error::invalid("probe schedule must be increasing in K"));
    }
    let shift = TargetShift::Fdiv { divergence: cfg.divergence, epsilon: cfg.epsilon };
    let target_world = shifted_world(&cfg.world, &shift, &cfg.model, cfg.loss)?;
    let target_seed = rng::derive(cfg.world.seed, stream::TARGET, u64::MAX);
    let risks = network_risks(&target_world, cfg.target_clients, target_seed, &cfg.model, cfg.loss, exec)?;
    let target = risks.iter().sum::<f64>() / risks.len() as f64;
    let request = BoundRequest::FdivMean { divergence: cfg.divergence, epsilon: cfg.epsilon };
    let mut rows = Vec::new();
    for (stage, &(k, n)) in cfg.schedule.iter().enumerate() {
        let runs = exec::map_range(exec, cfg.trials, |t| -> Result<(f64, f64, f64)> {
            let base = rng::derive(rng::derive(cfg.world.seed, stream::TRIAL, t as u64), stream::TRIAL, stage as u64);
            let specs = sim::sample_network(&cfg.world, k, base)?;
            let clients = specs
                .iter()
                .map(|s| Client::new(sim::generate_dataset(s, n, &cfg.world)?, 1))
                .collect::<Result<Vec<_>>>()?;
            let (b, _) =
                certify_request(&request, &clients, &cfg.model, cfg.loss, cfg.delta, &WassOptions::default(), Execution::Sequential)?;
            let b = b.expect("mean request yields a scalar bound");
            Ok((b.raw_value - target, b.slack_term("meta").unwrap_or(0.0), b.slack_term("per-client").unwrap_or(0.0)))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let mut gaps: Vec<f64> = runs.iter().map(|r| r.0).collect();
        let tf = gaps.len() as f64;
        let mean = gaps.iter().sum::<f64>() / tf;
        let sd = if gaps.len() > 1 { (gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (tf - 1.0)).sqrt() } else { 0.0 };
        rows.push(ProbeRow {
            k,
            n,
            median_gap: median(&mut gaps),
            se: 1.2533 * sd / tf.sqrt(),
            median_meta_slack: median(&mut runs.iter().map(|r| r.1).collect::<Vec<_>>()),
            median_per_client_slack: median(&mut runs.iter().map(|r| r.2).collect::<Vec<_>>()),
        });
    }
    Ok(TightnessTable { target, rows })
}
