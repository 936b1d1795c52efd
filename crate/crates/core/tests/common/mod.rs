//! Frozen, seeded instance corpora shared by the oracle and acceptance suites.
#![allow(dead_code)]

use fedrobust::fdiv::{make_divergence, DivergenceName, DivergenceSpec};
use fedrobust::model::{self, Hypothesis, LossFn, Sample};
use fedrobust::query::{QueryConfig, TransportCost};
use fedrobust::sim::LocalDataset;
use fedrobust::wass::{EnvelopeKind, QvProfile, RadiusBudget};
use fedrobust::QueryValue;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const POINTS: [f64; 5] = [0.0, 0.5, 1.0, 1.5, 2.0];

pub struct DiscreteInstance {
    pub h: Hypothesis,
    pub data: LocalDataset,
    pub rho: f64,
    pub cfg: QueryConfig,
}

/// One-dimensional five-point spaces with three samples each.
pub fn discrete_instances(count: usize, seed: u64) -> Vec<DiscreteInstance> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let loss = [LossFn::ZeroOne, LossFn::ClippedCrossEntropy, LossFn::ClippedSquared][i % 3];
            let outputs: Vec<f64> = POINTS
                .iter()
                .map(|_| if loss == LossFn::ZeroOne { f64::from(r.random_range(0..2u8)) } else { r.random::<f64>() })
                .collect();
            let h = Hypothesis::lookup(POINTS.iter().map(|&p| vec![p]).collect(), outputs, 2).unwrap();
            let samples = (0..3)
                .map(|_| Sample::new(vec![POINTS[r.random_range(0..5)]], f64::from(r.random_range(0..2u8))))
                .collect();
            let cost = if i % 2 == 0 { TransportCost::HalfSquaredL2 } else { TransportCost::L2 };
            DiscreteInstance {
                h,
                data: LocalDataset { client: 0, samples },
                rho: 0.01 + 1.5 * r.random::<f64>(),
                cfg: QueryConfig::new(loss).with_cost(cost),
            }
        })
        .collect()
}

/// Primal transport LP for a discrete instance: each sample may move to any
/// point with its own label.
pub fn lp_value(inst: &DiscreteInstance) -> f64 {
    let n = inst.data.samples.len() as f64;
    let targets: Vec<(f64, f64)> = [0.0, 1.0].iter().flat_map(|&y| POINTS.iter().map(move |&p| (p, y))).collect();
    let losses: Vec<f64> =
        targets.iter().map(|&(p, y)| model::loss_at(inst.cfg.loss, &inst.h, &[p], y).unwrap()).collect();
    let cost: Vec<Vec<f64>> = inst
        .data
        .samples
        .iter()
        .map(|z| {
            targets
                .iter()
                .map(|&(p, y)| if y == z.label { inst.cfg.cost.feature_cost(&[p], &z.features) } else { f64::INFINITY })
                .collect()
        })
        .collect();
    fedrobust::oracle::wass_ball_lp_oracle(&vec![1.0 / n; inst.data.samples.len()], &losses, inst.rho, &cost).unwrap()
}

pub struct ReweightInstance {
    pub q: Vec<f64>,
    pub spec: DivergenceSpec,
    pub budget: f64,
    pub band: f64,
}

pub fn reweight_instances(count: usize, seed: u64) -> Vec<ReweightInstance> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let k = 2 + i % 2;
            let name = if i % 4 < 2 { DivergenceName::Kl } else { DivergenceName::ChiSquare };
            let eps = 0.01 + 0.3 * r.random::<f64>();
            let delta = 0.05 + 0.25 * r.random::<f64>();
            let spec = make_divergence(name, eps, delta).unwrap();
            let q = (0..k)
                .map(|_| if r.random::<f64>() < 0.2 { f64::from(r.random_range(0..2u8)) } else { r.random::<f64>() })
                .collect();
            let band = if i % 3 == 0 { 0.0 } else { 0.2 * r.random::<f64>() };
            ReweightInstance { q, spec, budget: eps + 0.3 * r.random::<f64>(), band }
        })
        .collect()
}

pub struct TwoClientInstance {
    pub profiles: Vec<QvProfile>,
    pub budget: RadiusBudget,
}

/// Two clients with concave piecewise-linear profiles given by their hull points.
pub fn two_client_instances(count: usize, seed: u64) -> Vec<TwoClientInstance> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let eps = 0.05 + 0.3 * r.random::<f64>();
            let budget = RadiusBudget::new(eps, 0.1, 2, 0.3 * r.random::<f64>(), false);
            let grid = budget.grid(2, 6);
            let profiles = (0..2)
                .map(|c| {
                    let mut v = 0.6 * r.random::<f64>();
                    let mut slope = 0.2 + 2.0 * r.random::<f64>();
                    let answers: Vec<QueryValue> = grid
                        .iter()
                        .enumerate()
                        .map(|(i, &rho)| {
                            if i > 0 {
                                v += slope * (rho - grid[i - 1]);
                                slope *= 0.3 + 0.6 * r.random::<f64>();
                            }
                            let val = v.min(1.0);
                            QueryValue { value: val, raw_value: val, rho, gamma_star: 0.0, inner_iterations: 0, status: fedrobust::query::SolverStatus::Exact }
                        })
                        .collect();
                    QvProfile::from_queries(c, &answers, EnvelopeKind::Hull).unwrap()
                })
                .collect();
            TwoClientInstance { profiles, budget }
        })
        .collect()
}

/// Exhaustive split of the radius budget between two clients, step budget/2000.
pub fn two_client_grid_optimum(inst: &TwoClientInstance) -> f64 {
    let b = &inst.budget;
    let spare = 2.0 * b.mean - 2.0 * b.floor;
    let hi = b.max_radius(2);
    let mut best = f64::MIN;
    for i in 0..=2000 {
        let r1 = (b.floor + spare * i as f64 / 2000.0).min(hi);
        let r2 = (b.floor + spare - (r1 - b.floor)).clamp(b.floor, hi);
        let v = 0.5 * (inst.profiles[0].envelope.eval(r1) + inst.profiles[1].envelope.eval(r2));
        best = best.max(v);
    }
    best
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn unit_interval(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

/// One fuzzed instance of the monotonicity and range checks. Returns the
/// first violated property.
pub fn fuzz_monotonicity(seed: u64) -> Result<(), String> {
    use fedrobust::fdiv::{fdiv_cdf_bound, fdiv_mean_bound};
    use fedrobust::nonrobust::{cdf_bound, mean_bound};
    use fedrobust::query::{adversarial_risk, empirical_risk, Client};
    use fedrobust::wass::{build_profiles, wass_bound_from_profiles, WassOptions};

    const TOL: f64 = 1e-7;
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let k = r.random_range(2..=8usize);
    let q: Vec<f64> = (0..k)
        .map(|_| match r.random_range(0..5u8) {
            0 => 0.0,
            1 => 1.0,
            _ => r.random::<f64>(),
        })
        .collect();
    let n: Vec<usize> = (0..k).map(|_| r.random_range(5..300)).collect();
    let delta = 0.01 + 0.4 * r.random::<f64>();
    let mut eps = [0.001 + 0.5 * r.random::<f64>(), 0.001 + 0.5 * r.random::<f64>()];
    eps.sort_by(f64::total_cmp);
    let name = if seed % 2 == 0 { DivergenceName::Kl } else { DivergenceName::ChiSquare };
    let grid = fedrobust::certificate::linspace(0.0, 1.0, 21);
    let e = |err: fedrobust::Error| err.to_string();

    let m = mean_bound(&q, &n, delta).map_err(e)?;
    check(unit_interval(m.value), || format!("mean bound {} outside [0, 1]", m.value))?;
    let c = cdf_bound(&q, &n, delta, &grid).map_err(e)?;
    check(c.is_nonincreasing(), || "survival bound increases in lambda".into())?;
    check(c.bound.iter().all(|&v| unit_interval(v)), || "survival bound outside [0, 1]".into())?;

    let fm: Vec<_> = eps.iter().map(|&ep| fdiv_mean_bound(&q, &n, delta, ep, name)).collect::<Result<_, _>>().map_err(e)?;
    check(fm.iter().all(|b| unit_interval(b.value)), || "f-divergence mean bound outside [0, 1]".into())?;
    check(fm[1].raw_value >= fm[0].raw_value - TOL, || {
        format!("{name} mean bound decreases in epsilon: {} -> {}", fm[0].raw_value, fm[1].raw_value)
    })?;
    let fc: Vec<_> =
        eps.iter().map(|&ep| fdiv_cdf_bound(&q, &n, delta, ep, name, &grid)).collect::<Result<_, _>>().map_err(e)?;
    for curve in &fc {
        check(curve.is_nonincreasing(), || format!("{name} survival bound increases in lambda"))?;
        check(curve.bound.iter().all(|&v| unit_interval(v)), || "f-divergence survival bound outside [0, 1]".into())?;
    }
    check(fc[0].lambda == fc[1].lambda, || "survival grids differ across epsilon".into())?;
    for (i, (a, b)) in fc[0].bound.iter().zip(&fc[1].bound).enumerate() {
        check(*b >= a - TOL, || format!("{name} survival bound decreases in epsilon at {}: {a} -> {b}", fc[0].lambda[i]))?;
    }

    // query values along a radius grid
    let loss = [LossFn::ZeroOne, LossFn::ClippedCrossEntropy, LossFn::ClippedSquared][r.random_range(0..3)];
    let h = Hypothesis::logistic(vec![4.0 * r.random::<f64>() - 2.0, 4.0 * r.random::<f64>() - 2.0], r.random::<f64>() - 0.5).unwrap();
    let sample = |r: &mut ChaCha8Rng| {
        Sample::new(vec![2.0 * r.random::<f64>() - 1.0, 2.0 * r.random::<f64>() - 1.0], f64::from(r.random_range(0..2u8)))
    };
    let cost = if r.random::<bool>() { TransportCost::HalfSquaredL2 } else { TransportCost::L2 };
    let cfg = QueryConfig::new(loss).with_cost(cost);
    let kw = r.random_range(2..=4usize);
    let datasets: Vec<LocalDataset> =
        (0..kw).map(|c| LocalDataset { client: c, samples: (0..4).map(|_| sample(&mut r)).collect() }).collect();
    let rhos = [0.003, 0.02, 0.08, 0.25, 0.7, 2.0];
    let d0 = &datasets[0];
    let mut prev = empirical_risk(&h, d0, loss).map_err(e)?.value;
    for &rho in &rhos {
        let v = adversarial_risk(&h, d0, rho, &cfg).map_err(e)?.value;
        check(unit_interval(v), || format!("query value {v} outside [0, 1]"))?;
        check(v >= prev - 1e-9, || format!("query value decreases in rho: {prev} -> {v} at {rho}"))?;
        prev = v;
    }

    let opts = WassOptions { query: cfg, ..WassOptions::default() };
    let clients: Vec<Client> = datasets.into_iter().map(|d| Client::new(d, 100).unwrap()).collect();
    let profiles = build_profiles(&clients, &h, &rhos, &opts, None).map_err(e)?;
    let nw = vec![4usize; kw];
    let wb: Vec<_> = eps
        .iter()
        .map(|&ep| wass_bound_from_profiles(&profiles, &nw, ep, delta, &opts).map(|(b, _)| b))
        .collect::<Result<_, _>>()
        .map_err(e)?;
    check(wb.iter().all(|b| unit_interval(b.value)), || "Wasserstein bound outside [0, 1]".into())?;
    check(wb[1].program_value >= wb[0].program_value - TOL, || {
        format!("Wasserstein program decreases in epsilon: {} -> {}", wb[0].program_value, wb[1].program_value)
    })?;
    Ok(())
}

/// Largest relative error between the analytic feature gradient and central
/// finite differences over `points` random unclipped points.
pub fn gradient_check(points: usize, seed: u64) -> f64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < points {
        let d = r.random_range(1..=4usize);
        let vec_of = |m: usize, s: f64, r: &mut ChaCha8Rng| -> Vec<f64> { (0..m).map(|_| s * (2.0 * r.random::<f64>() - 1.0)).collect() };
        let loss = if r.random::<bool>() { LossFn::ClippedCrossEntropy } else { LossFn::ClippedSquared };
        let ce = loss == LossFn::ClippedCrossEntropy;
        let (h, label) = match (r.random::<bool>(), ce) {
            (true, true) => {
                let c = 3;
                (Hypothesis::linear(c, d, vec_of(c * d, 1.0, &mut r), vec_of(c, 0.5, &mut r)).unwrap(), f64::from(r.random_range(0..3u8)))
            }
            (true, false) => (Hypothesis::linear(1, d, vec_of(d, 0.5, &mut r), vec_of(1, 0.2, &mut r)).unwrap(), r.random::<f64>()),
            (false, true) => (Hypothesis::logistic(vec_of(d, 1.5, &mut r), 0.3).unwrap(), f64::from(r.random_range(0..2u8))),
            (false, false) => (Hypothesis::logistic(vec_of(d, 1.5, &mut r), 0.3).unwrap(), r.random::<f64>()),
        };
        let x = vec_of(d, 1.0, &mut r);
        if model::loss_at(loss, &h, &x, label).unwrap() > 0.9 {
            continue;
        }
        let g = model::gradient_at(loss, &h, &x, label).unwrap();
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < 1e-3 {
            continue;
        }
        let step = 1e-5;
        let fd: Vec<f64> = (0..d)
            .map(|i| {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[i] += step;
                xm[i] -= step;
                (model::loss_at(loss, &h, &xp, label).unwrap() - model::loss_at(loss, &h, &xm, label).unwrap()) / (2.0 * step)
            })
            .collect();
        let err = g.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / gnorm;
        worst = worst.max(err);
        done += 1;
    }
    worst
}
