//! Bounds under f-divergence shifts of the meta-distribution.
//!
//! The empirical part is the reweighting program
//!
//! ```text
//! max (1/K) Σ α_k q_k   s.t.  α ∈ [0, Λ]^K,  |mean(α) − 1| ≤ band,  mean f(α) ≤ B
//! ```
//!
//! solved through its Lagrangian dual. For multipliers `τ` (mean band) and
//! `η ≥ 0` (divergence budget) each `α_k` has a closed-form maximizer, and
//!
//! ```text
//! g(τ, η) = (1/K) Σ max_{α∈[0,Λ]} [α(q_k − τ) − η f(α)] + τ + |τ|·band + η·B
//! ```
//!
//! upper-bounds the program for every `(τ, η)`. Certificates use `g` at the
//! returned multipliers, so they stay valid even when the primal iterate is
//! only approximately optimal.

use serde::{Deserialize, Serialize};

use crate::certificate::{merge_grid, named, validate_inputs, BoundKind, BoundParams, CdfCurve, CertStatus, CertifiedBound};
use crate::error::{invalid, Result};
use crate::exec::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DivergenceName {
    Kl,
    ChiSquare,
}

impl DivergenceName {
    pub fn name(self) -> &'static str {
        match self {
            DivergenceName::Kl => "kl",
            DivergenceName::ChiSquare => "chi-square",
        }
    }

    /// Generator `f`, with `f(0) = lim_{t→0+} f(t)`.
    pub fn f(self, t: f64) -> f64 {
        match self {
            DivergenceName::Kl if t <= 0.0 => 0.0,
            DivergenceName::Kl => t * t.ln(),
            DivergenceName::ChiSquare => (t - 1.0) * (t - 1.0),
        }
    }

    pub fn derivative(self, t: f64) -> f64 {
        match self {
            DivergenceName::Kl => t.ln() + 1.0,
            DivergenceName::ChiSquare => 2.0 * (t - 1.0),
        }
    }

    /// Unconstrained minimizer of `f`.
    fn argmin(self) -> f64 {
        match self {
            DivergenceName::Kl => (-1.0f64).exp(),
            DivergenceName::ChiSquare => 1.0,
        }
    }

    /// `argmax_{α ∈ [0, cap]} α·s − η f(α)` for `η > 0`.
    fn best_alpha(self, s: f64, eta: f64, cap: f64) -> f64 {
        let a = match self {
            DivergenceName::Kl => ((s / eta) - 1.0).exp(),
            DivergenceName::ChiSquare => 1.0 + s / (2.0 * eta),
        };
        a.clamp(0.0, cap)
    }
}

impl std::fmt::Display for DivergenceName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceSpec {
    pub name: DivergenceName,
    /// Cap `Λ` on the density ratio.
    pub lambda_cap: f64,
    pub c1: f64,
    pub c2: f64,
}

impl DivergenceSpec {
    /// Spec with a hand-picked cap; constants follow from the cap.
    pub fn with_cap(name: DivergenceName, lambda_cap: f64) -> Result<Self> {
        if !(lambda_cap >= 1.0) || !lambda_cap.is_finite() {
            return Err(invalid(format!("cap must be finite and at least 1, got {lambda_cap}")));
        }
        let l = lambda_cap;
        let (lo, hi) = (1.0 / l, l);
        let fmax = name.f(lo).max(name.f(hi));
        let fmin = name.f(name.argmin().clamp(lo, hi));
        Ok(DivergenceSpec {
            name,
            lambda_cap: l,
            c1: (l - 1.0 / l) / std::f64::consts::SQRT_2,
            c2: (fmax - fmin) / std::f64::consts::SQRT_2,
        })
    }

    pub fn f(&self, t: f64) -> f64 {
        self.name.f(t)
    }
}

/// `Λ = max{t ≥ 1 : f(t) ≤ ε/δ}` by bisection, then the concentration
/// constants `c₁ = (Λ − 1/Λ)/√2`, `c₂ = BW(f, Λ)/√2`.
pub fn make_divergence(name: DivergenceName, epsilon: f64, delta: f64) -> Result<DivergenceSpec> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(invalid(format!("epsilon must be finite and nonnegative, got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    let level = epsilon / delta;
    if level == 0.0 {
        return DivergenceSpec::with_cap(name, 1.0);
    }
    let mut hi = 2.0;
    while name.f(hi) <= level {
        hi *= 2.0;
    }
    let mut lo = 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if name.f(mid) <= level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // the upper end enlarges the box by at most one ulp; that is the safe side
    DivergenceSpec::with_cap(name, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReweightStatus {
    Optimal,
    Tolerance,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReweightSolution {
    pub alpha: Vec<f64>,
    /// `(1/K) Σ α_k q_k` at the returned `alpha`.
    pub objective: f64,
    /// Dual value at the returned multipliers; never below the optimum.
    pub dual_bound: f64,
    pub tau: f64,
    pub eta: f64,
    pub status: ReweightStatus,
}

/// Distinct `q` values with their frequency; optimal weights are equal
/// within a group, so the solver works on groups.
struct Groups {
    q: Vec<f64>,
    w: Vec<f64>,
    index: Vec<usize>,
}

impl Groups {
    fn new(q: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..q.len()).collect();
        order.sort_by(|&a, &b| q[b].total_cmp(&q[a]));
        let (mut gq, mut gw, mut index) = (Vec::new(), Vec::new(), vec![0; q.len()]);
        let unit = 1.0 / q.len() as f64;
        for i in order {
            if gq.last() != Some(&q[i]) {
                gq.push(q[i]);
                gw.push(0.0);
            }
            *gw.last_mut().unwrap() += unit;
            index[i] = gq.len() - 1;
        }
        Groups { q: gq, w: gw, index }
    }

    fn mean(&self, levels: &[f64]) -> f64 {
        self.w.iter().zip(levels).map(|(w, a)| w * a).sum()
    }

    fn objective(&self, levels: &[f64]) -> f64 {
        self.w.iter().zip(levels).zip(&self.q).map(|((w, a), q)| w * a * q).sum()
    }

    fn mean_f(&self, spec: &DivergenceSpec, levels: &[f64]) -> f64 {
        self.w.iter().zip(levels).map(|(w, a)| w * spec.f(*a)).sum()
    }

    fn expand(&self, levels: &[f64]) -> Vec<f64> {
        self.index.iter().map(|&g| levels[g]).collect()
    }
}

struct Problem<'a> {
    g: &'a Groups,
    spec: &'a DivergenceSpec,
    budget: f64,
    band: f64,
}

impl Problem<'_> {
    fn levels(&self, tau: f64, eta: f64) -> Vec<f64> {
        let cap = self.spec.lambda_cap;
        self.g.q.iter().map(|q| self.spec.name.best_alpha(q - tau, eta, cap)).collect()
    }

    /// `g(τ, η)`; at `η = 0` the inner maxima are those of the box LP.
    fn dual(&self, tau: f64, eta: f64) -> f64 {
        let cap = self.spec.lambda_cap;
        let inner: f64 = self
            .g
            .q
            .iter()
            .zip(&self.g.w)
            .map(|(q, w)| {
                let s = q - tau;
                let v = if eta == 0.0 {
                    cap * s.max(0.0)
                } else {
                    let a = self.spec.name.best_alpha(s, eta, cap);
                    a * s - eta * self.spec.f(a)
                };
                w * v
            })
            .sum();
        inner + tau + tau.abs() * self.band + eta * self.budget
    }

    /// Best dual value of the box LP, minimized over `τ ∈ {0} ∪ {q_g}`.
    fn lp_dual(&self) -> (f64, f64) {
        std::iter::once(0.0)
            .chain(self.g.q.iter().copied())
            .map(|t| (t, self.dual(t, 0.0)))
            .fold((0.0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
    }

    /// Box-LP optimum with the least divergence among LP optima: saturate
    /// the largest positive `q`, share the marginal level within a tie
    /// group, and put the zero-`q` group as close to `argmin f` as the band
    /// allows.
    fn lp_solution(&self) -> Option<Vec<f64>> {
        let cap = self.spec.lambda_cap;
        let (lower, upper) = (1.0 - self.band, 1.0 + self.band);
        let mut levels = vec![0.0; self.g.q.len()];
        let mut used = 0.0;
        let mut zero_group = None;
        for (i, (&q, &w)) in self.g.q.iter().zip(&self.g.w).enumerate() {
            if q <= 0.0 {
                zero_group = Some(i);
                continue;
            }
            let level = ((upper - used) / w).clamp(0.0, cap);
            levels[i] = level;
            used += w * level;
        }
        if let Some(z) = zero_group {
            let w = self.g.w[z];
            let lo = ((lower - used) / w).max(0.0);
            let hi = ((upper - used) / w).min(cap);
            if lo > hi + 1e-12 {
                return None;
            }
            levels[z] = self.spec.name.argmin().clamp(lo, hi.max(lo));
        }
        let mean = self.g.mean(&levels);
        (mean >= lower - 1e-12 && mean <= upper + 1e-12).then_some(levels)
    }

    /// `τ` that moves `mean α` into the band for a fixed `η > 0`, taking
    /// the feasible end of the final bracket.
    fn tau_for(&self, eta: f64) -> f64 {
        let (lower, upper) = (1.0 - self.band, 1.0 + self.band);
        let mean_at = |tau: f64| self.g.mean(&self.levels(tau, eta));
        let m0 = mean_at(0.0);
        if m0 >= lower && m0 <= upper {
            return 0.0;
        }
        // mean α is nonincreasing in τ
        let (target, sign) = if m0 > upper { (upper, 1.0) } else { (lower, -1.0) };
        let ok = |tau: f64| if sign > 0.0 { mean_at(tau) <= target } else { mean_at(tau) >= target };
        let mut far = sign;
        while !ok(far) {
            far *= 2.0;
            if far.abs() > 1e12 {
                break;
            }
        }
        let (mut near, mut far) = (0.0, far);
        for _ in 0..100 {
            let mid = 0.5 * (near + far);
            if mid == near || mid == far {
                break;
            }
            if ok(mid) {
                far = mid;
            } else {
                near = mid;
            }
        }
        far
    }
}

/// Maximizes `(1/K) Σ α_k q_k` over `α ∈ [0, Λ]^K` with
/// `|mean(α) − 1| ≤ band` and `mean f(α) ≤ eps_budget`.
pub fn solve_reweight(q: &[f64], spec: &DivergenceSpec, eps_budget: f64, band: f64) -> Result<ReweightSolution> {
    if q.is_empty() {
        return Err(invalid("reweighting needs at least one value"));
    }
    if let Some(v) = q.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(invalid(format!("reweighting values must lie in [0, 1], got {v}")));
    }
    if !(eps_budget >= 0.0) || !(band >= 0.0) || !eps_budget.is_finite() || !band.is_finite() {
        return Err(invalid("budget and band must be finite and nonnegative"));
    }
    let k = q.len() as f64;
    if eps_budget == 0.0 && band == 0.0 {
        let mean = q.iter().sum::<f64>() / k;
        return Ok(ReweightSolution {
            alpha: vec![1.0; q.len()],
            objective: mean,
            dual_bound: mean,
            tau: 0.0,
            eta: 0.0,
            status: ReweightStatus::Optimal,
        });
    }
    let groups = Groups::new(q);
    let p = Problem { g: &groups, spec, budget: eps_budget, band };
    let (lp_tau, lp_dual) = p.lp_dual();

    let finish = |levels: Vec<f64>, tau: f64, eta: f64, dual: f64| {
        let objective = groups.objective(&levels);
        let mean = groups.mean(&levels);
        let feasible = (mean - 1.0).abs() <= band + 1e-6 && groups.mean_f(spec, &levels) <= eps_budget + 1e-6;
        let dual_bound = dual.max(objective);
        ReweightSolution {
            alpha: groups.expand(&levels),
            objective,
            dual_bound,
            tau,
            eta,
            status: if feasible && dual_bound - objective <= 1e-5 { ReweightStatus::Optimal } else { ReweightStatus::Tolerance },
        }
    };

    if let Some(levels) = p.lp_solution() {
        if groups.mean_f(spec, &levels) <= eps_budget {
            return Ok(finish(levels, lp_tau, 0.0, lp_dual));
        }
    }

    // divergence budget binds: η > 0
    let feasible_at = |eta: f64| {
        let tau = p.tau_for(eta);
        groups.mean_f(spec, &p.levels(tau, eta)) <= eps_budget
    };
    let mut hi = 1.0;
    while !feasible_at(hi) && hi < 1e12 {
        hi *= 2.0;
    }
    let mut lo = hi / 2.0;
    while feasible_at(lo) && lo > 1e-14 {
        hi = lo;
        lo /= 2.0;
    }
    for _ in 0..100 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi || hi / lo < 1.0 + 1e-12 {
            break;
        }
        if feasible_at(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let eta = hi;
    let tau = p.tau_for(eta);
    let levels = p.levels(tau, eta);
    let dual = p.dual(tau, eta).min(lp_dual);
    Ok(finish(levels, tau, eta, dual))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FdivOptions {
    /// Zero every slack term (testing only).
    pub zero_slack: bool,
    /// Constant multiplying `√(ln(K/δ)/K)` in the survival-curve padding.
    pub cdf_constant: f64,
    /// Include the reweighting vector in mean-bound certificates.
    pub include_alpha: bool,
    pub exec: Execution,
}

impl Default for FdivOptions {
    fn default() -> Self {
        FdivOptions { zero_slack: false, cdf_constant: 1.0, include_alpha: false, exec: Execution::default() }
    }
}

fn params_for(n: &[usize], delta: f64, epsilon: f64, spec: &DivergenceSpec) -> BoundParams {
    let mut p = BoundParams::new(n, delta);
    p.epsilon = Some(epsilon);
    p.divergence = Some(spec.name.name().to_string());
    p.constants = vec![named("lambda-cap", spec.lambda_cap), named("c1", spec.c1), named("c2", spec.c2)];
    p
}

fn status_of(s: ReweightStatus) -> CertStatus {
    match s {
        ReweightStatus::Optimal => CertStatus::Exact,
        _ => CertStatus::Tolerance,
    }
}

pub fn fdiv_mean_bound(qv: &[f64], n: &[usize], delta: f64, epsilon: f64, name: DivergenceName) -> Result<CertifiedBound> {
    fdiv_mean_bound_with(qv, n, delta, epsilon, name, &FdivOptions::default())
}

pub fn fdiv_mean_bound_with(
    qv: &[f64],
    n: &[usize],
    delta: f64,
    epsilon: f64,
    name: DivergenceName,
    opts: &FdivOptions,
) -> Result<CertifiedBound> {
    validate_inputs(qv, n, delta)?;
    let spec = make_divergence(name, epsilon, delta)?;
    let k = qv.len() as f64;
    let root = ((1.0 / delta).ln() / k).sqrt();
    let sol = solve_reweight(qv, &spec, epsilon + spec.c2 * root, spec.c1 * root)?;
    let (meta, per_client) = if opts.zero_slack {
        (0.0, 0.0)
    } else {
        let log = ((k + 3.0) / delta).ln();
        let per: f64 = n.iter().map(|&nk| (log / (2.0 * nk as f64)).sqrt()).sum::<f64>() / k;
        (spec.lambda_cap * (log / (2.0 * k)).sqrt(), per)
    };
    let mut b = CertifiedBound::assemble(
        BoundKind::FdivMean,
        sol.dual_bound,
        vec![named("meta", meta), named("per-client", per_client)],
        params_for(n, delta, epsilon, &spec),
        opts.zero_slack,
    );
    b.status = status_of(sol.status);
    b.params.constants.extend([named("tau", sol.tau), named("eta", sol.eta), named("primal-objective", sol.objective)]);
    if opts.include_alpha {
        b.witness = Some(serde_json::json!({ "alpha": sol.alpha }));
    }
    Ok(b)
}

pub fn fdiv_cdf_bound(
    qv: &[f64],
    n: &[usize],
    delta: f64,
    epsilon: f64,
    name: DivergenceName,
    grid: &[f64],
) -> Result<CdfCurve> {
    fdiv_cdf_bound_with(qv, n, delta, epsilon, name, grid, &FdivOptions::default())
}

pub fn fdiv_cdf_bound_with(
    qv: &[f64],
    n: &[usize],
    delta: f64,
    epsilon: f64,
    name: DivergenceName,
    grid: &[f64],
    opts: &FdivOptions,
) -> Result<CdfCurve> {
    validate_inputs(qv, n, delta)?;
    let spec = make_divergence(name, epsilon, delta)?;
    let k = qv.len() as f64;
    let shifts: Vec<f64> = if opts.zero_slack {
        vec![0.0; qv.len()]
    } else {
        let log = ((k + 2.0) / delta).ln();
        n.iter().map(|&nk| (log / (2.0 * nk as f64)).sqrt()).collect()
    };
    let root = ((k / delta).ln() / k).sqrt();
    let (budget, band) = (epsilon + spec.c2 * root, spec.c1 * root);
    let pad = if opts.zero_slack {
        0.0
    } else {
        opts.cdf_constant * root + ((2.0 * (k + 2.0) / delta).ln() / (2.0 * k)).sqrt()
    };
    let lambda = merge_grid(grid, qv.iter().zip(&shifts).map(|(q, s)| q + s))?;

    // the program depends on λ only through how many indicators are on
    let counts: Vec<usize> =
        lambda.iter().map(|&l| qv.iter().zip(&shifts).filter(|(q, s)| **q >= l - **s).count()).collect();
    let mut distinct = counts.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let solved = exec::try_map(opts.exec, &distinct, |&m| {
        let b: Vec<f64> = (0..qv.len()).map(|i| if i < m { 1.0 } else { 0.0 }).collect();
        solve_reweight(&b, &spec, budget, band)
    })?;
    let mut status = CertStatus::Exact;
    let mut program = Vec::with_capacity(lambda.len());
    let mut running = f64::INFINITY;
    for m in &counts {
        let sol = &solved[distinct.binary_search(m).expect("count was solved")];
        status = status.worst(status_of(sol.status));
        // the exact program is nonincreasing in λ, so a running minimum of
        // valid upper bounds is still a valid upper bound
        running = running.min(sol.dual_bound);
        program.push(running);
    }
    let bound = program.iter().map(|p| (p + pad).clamp(0.0, 1.0)).collect();
    let mut params = params_for(n, delta, epsilon, &spec);
    params.constants.push(named("cdf-constant", opts.cdf_constant));
    Ok(CdfCurve {
        kind: BoundKind::FdivCdf,
        lambda,
        bound,
        program: Some(program),
        slack: vec![named("pad", pad), named("max-per-client-shift", shifts.iter().copied().fold(0.0, f64::max))],
        params,
        status,
        zero_slack: opts.zero_slack,
        notes: vec![format!("padding constant C = {} is a configurable stand-in for an unnamed constant", opts.cdf_constant)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_epsilon_gives_unit_cap() {
        for name in [DivergenceName::Kl, DivergenceName::ChiSquare] {
            let s = make_divergence(name, 0.0, 0.1).unwrap();
            assert_eq!((s.lambda_cap, s.c1, s.c2), (1.0, 0.0, 0.0));
        }
    }

    #[test]
    fn kl_cap_solves_t_log_t() {
        let s = make_divergence(DivergenceName::Kl, 0.1, 0.1).unwrap();
        assert_abs_diff_eq!(s.lambda_cap, 1.76322, epsilon = 1e-5);
        assert_abs_diff_eq!(s.lambda_cap * s.lambda_cap.ln(), 1.0, epsilon = 1e-12);
        let chi = make_divergence(DivergenceName::ChiSquare, 0.2, 0.05).unwrap();
        assert_abs_diff_eq!(chi.lambda_cap, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn constants_from_cap() {
        let s = DivergenceSpec::with_cap(DivergenceName::ChiSquare, 2.0).unwrap();
        assert_abs_diff_eq!(s.c1, 1.06066, epsilon = 1e-5);
        // chi-square on [1/2, 2]: max f = 1, min f = 0
        assert_abs_diff_eq!(s.c2, 1.0 / std::f64::consts::SQRT_2, epsilon = 1e-12);
        let kl = DivergenceSpec::with_cap(DivergenceName::Kl, 4.0).unwrap();
        let expected = (4.0 * 4f64.ln() + (-1.0f64).exp()) / std::f64::consts::SQRT_2;
        assert_abs_diff_eq!(kl.c2, expected, epsilon = 1e-12);
    }

    #[test]
    fn generator_is_convex_with_f1_zero() {
        for name in [DivergenceName::Kl, DivergenceName::ChiSquare] {
            assert_eq!(name.f(1.0), 0.0);
            for i in 1..200 {
                let t = i as f64 * 0.05;
                let mid = name.f(t);
                assert!(name.f(t - 0.01) + name.f(t + 0.01) >= 2.0 * mid - 1e-12);
            }
        }
    }

    #[test]
    fn no_budget_means_unit_weights() {
        let spec = make_divergence(DivergenceName::Kl, 0.3, 0.1).unwrap();
        let s = solve_reweight(&[0.1, 0.5, 0.9], &spec, 0.0, 0.0).unwrap();
        assert_eq!(s.alpha, vec![1.0; 3]);
        assert_abs_diff_eq!(s.objective, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn two_client_chi_square() {
        let spec = DivergenceSpec::with_cap(DivergenceName::ChiSquare, 10.0).unwrap();
        let s = solve_reweight(&[0.2, 0.8], &spec, 0.5, 0.0).unwrap();
        let expected = 0.5 + 0.5f64.sqrt() * 0.3;
        assert_abs_diff_eq!(s.objective, expected, epsilon = 1e-6);
        assert_abs_diff_eq!(s.dual_bound, expected, epsilon = 1e-6);
        assert_abs_diff_eq!(s.alpha[0], 1.0 - 0.5f64.sqrt(), epsilon = 1e-5);
        assert_eq!(s.status, ReweightStatus::Optimal);
    }

    #[test]
    fn three_client_indicator() {
        let spec = DivergenceSpec::with_cap(DivergenceName::ChiSquare, 10.0).unwrap();
        let s = solve_reweight(&[1.0, 0.0, 0.0], &spec, 0.5, 0.0).unwrap();
        assert_abs_diff_eq!(s.dual_bound, 2.0 / 3.0, epsilon = 1e-6);
        assert_abs_diff_eq!(s.alpha[1], s.alpha[2], epsilon = 1e-12);
    }

    #[test]
    fn kkt_conditions_hold() {
        let spec = make_divergence(DivergenceName::Kl, 0.2, 0.1).unwrap();
        let q = [0.05, 0.3, 0.31, 0.7, 0.9];
        let (budget, band) = (0.2, 0.05);
        let s = solve_reweight(&q, &spec, budget, band).unwrap();
        assert!(s.eta > 0.0);
        for (a, qk) in s.alpha.iter().zip(&q) {
            let closed = DivergenceName::Kl.best_alpha(qk - s.tau, s.eta, spec.lambda_cap);
            assert!((a - closed).abs() < 1e-6);
        }
        let mean_f: f64 = s.alpha.iter().map(|a| spec.f(*a)).sum::<f64>() / 5.0;
        assert!((s.eta * (budget - mean_f)).abs() < 1e-5);
        let mean: f64 = s.alpha.iter().sum::<f64>() / 5.0;
        assert!(mean <= 1.0 + band + 1e-6 && mean >= 1.0 - band - 1e-6);
        if s.tau.abs() > 1e-9 {
            assert!(((mean - 1.0).abs() - band).abs() < 1e-5);
        }
        assert!(s.dual_bound - s.objective < 1e-5);
    }

    #[test]
    fn zero_epsilon_reduces_to_mean() {
        let opts = FdivOptions { zero_slack: true, ..Default::default() };
        let b = fdiv_mean_bound_with(&[0.2, 0.4, 0.9], &[10; 3], 0.1, 0.0, DivergenceName::ChiSquare, &opts).unwrap();
        assert_abs_diff_eq!(b.value, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn cdf_extremes() {
        let qv = [0.2, 0.4, 0.6];
        let c = fdiv_cdf_bound(&qv, &[50; 3], 0.1, 0.1, DivergenceName::Kl, &[-5.0, 5.0]).unwrap();
        let prog = c.program.as_ref().unwrap();
        assert_abs_diff_eq!(*prog.last().unwrap(), 0.0, epsilon = 1e-12);
        assert_eq!(c.bound[0], 1.0);
        assert!(c.is_nonincreasing());
    }
}
