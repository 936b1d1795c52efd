//! Property tests for the invariants every solver and bound must satisfy.

mod common;

use fedrobust::fdiv::{solve_reweight, DivergenceName, DivergenceSpec};
use fedrobust::model::{self, Hypothesis, LossFn, Sample};
use fedrobust::query::{phi_gamma, InnerConfig, TransportCost};
use fedrobust::sim::{generate_dataset, reweight_archetypes, sample_clients, Archetype, MetaConfig, ShiftMode};
use fedrobust::wass::Envelope;
use proptest::prelude::*;

fn loss_strategy() -> impl Strategy<Value = LossFn> {
    prop_oneof![Just(LossFn::ZeroOne), Just(LossFn::ClippedCrossEntropy), Just(LossFn::ClippedSquared)]
}

fn logistic() -> impl Strategy<Value = Hypothesis> {
    (prop::collection::vec(-3.0..3.0f64, 2), -1.0..1.0f64).prop_map(|(w, b)| Hypothesis::logistic(w, b).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn losses_lie_in_unit_interval(
        loss in loss_strategy(),
        h in logistic(),
        x in prop::collection::vec(-50.0..50.0f64, 2),
        label in 0u8..2,
    ) {
        let v = model::loss_at(loss, &h, &x, f64::from(label)).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn phi_is_nonincreasing_in_gamma(
        loss in loss_strategy(),
        h in logistic(),
        x in prop::collection::vec(-2.0..2.0f64, 2),
        label in 0u8..2,
        mut gammas in prop::collection::vec(0.0..20.0f64, 2..6),
        l2 in any::<bool>(),
    ) {
        gammas.sort_by(f64::total_cmp);
        let z = Sample::new(x, f64::from(label));
        let cost = if l2 { TransportCost::L2 } else { TransportCost::HalfSquaredL2 };
        let inner = InnerConfig::default();
        let vals: Vec<f64> = gammas.iter().map(|&g| phi_gamma(&h, g, &z, cost, loss, &inner).unwrap().value).collect();
        for w in vals.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9, "{:?}", vals);
        }
        // φ dominates the loss and is capped by the loss supremum
        let base = model::loss(loss, &h, &z).unwrap();
        prop_assert!(vals.iter().all(|&v| v >= base - 1e-12 && v <= 1.0 + 1e-12));
    }

    #[test]
    fn hull_envelope_dominates_and_is_concave(
        pts in prop::collection::vec((0.0..5.0f64, 0.0..1.0f64), 1..12),
    ) {
        let mut pts = pts;
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-6);
        let env = Envelope::hull(&pts).unwrap();
        for &(x, y) in &pts {
            prop_assert!(env.eval(x) >= y - 1e-12);
        }
        let (lo, hi) = (pts[0].0, pts[pts.len() - 1].0);
        let xs: Vec<f64> = (0..=40).map(|i| lo + (hi - lo) * i as f64 / 40.0).collect();
        for w in xs.windows(3) {
            let mid = env.eval(w[1]);
            prop_assert!(mid >= 0.5 * (env.eval(w[0]) + env.eval(w[2])) - 1e-12);
        }
    }

    #[test]
    fn label_proportions_lie_on_the_simplex(seed in any::<u64>(), alpha in 0.05..5.0f64, classes in 2usize..6) {
        let mut cfg = MetaConfig::binary_gaussian(1, 1.0, 1.0, seed);
        cfg.classes = classes;
        cfg.class_means = vec![vec![0.0]; classes];
        cfg.shift_mode = ShiftMode::Label;
        cfg.dirichlet_alpha = alpha;
        for s in sample_clients(&cfg, 8).unwrap() {
            prop_assert!(s.proportions.iter().all(|&p| p >= 0.0));
            prop_assert!((s.proportions.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn simulation_is_deterministic(seed in any::<u64>(), n in 1usize..40) {
        let mut cfg = MetaConfig::binary_gaussian(2, 2.0, 1.0, seed);
        cfg.shift_mode = ShiftMode::Both;
        cfg.sigma_affine = 0.1;
        cfg.sigma_shift = 0.3;
        let a = sample_clients(&cfg, 3).unwrap();
        let b = sample_clients(&cfg, 3).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(generate_dataset(&a[1], n, &cfg).unwrap(), generate_dataset(&b[1], n, &cfg).unwrap());
    }

    #[test]
    fn archetype_divergences_match_direct_sums(
        raw in prop::collection::vec(0.05..1.0f64, 2..6),
        tilt in prop::collection::vec(0.05..1.0f64, 6),
    ) {
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let t: Vec<f64> = tilt[..w.len()].to_vec();
        let tt: f64 = t.iter().sum();
        let w2: Vec<f64> = t.iter().map(|v| v / tt).collect();
        let mut cfg = MetaConfig::binary_gaussian(1, 1.0, 1.0, 0);
        cfg.archetypes = w.iter().map(|&weight| Archetype { weight, score: 0.0, class_shift: Vec::new() }).collect();
        let shift = reweight_archetypes(&cfg, &w2).unwrap();
        let kl: f64 = w2.iter().zip(&w).map(|(p, q)| p * (p / q).ln()).sum();
        let chi: f64 = w2.iter().zip(&w).map(|(p, q)| (p - q) * (p - q) / q).sum();
        prop_assert!((shift.kl - kl).abs() < 1e-10);
        prop_assert!((shift.chi_square - chi).abs() < 1e-10);
    }

    #[test]
    fn reweighting_respects_constraints(
        q in prop::collection::vec(0.0..1.0f64, 1..12),
        cap in 1.05..4.0f64,
        budget in 0.0..0.6f64,
        band in 0.0..0.3f64,
        chi in any::<bool>(),
    ) {
        let name = if chi { DivergenceName::ChiSquare } else { DivergenceName::Kl };
        let spec = DivergenceSpec::with_cap(name, cap).unwrap();
        let s = solve_reweight(&q, &spec, budget, band).unwrap();
        let k = q.len() as f64;
        prop_assert!(s.alpha.iter().all(|&a| (-1e-12..=cap + 1e-12).contains(&a)));
        prop_assert!((s.alpha.iter().sum::<f64>() / k - 1.0).abs() <= band + 1e-6);
        prop_assert!(s.alpha.iter().map(|&a| name.f(a)).sum::<f64>() / k <= budget + 1e-6);
        prop_assert!(s.objective <= s.dual_bound + 1e-9);
        let mean: f64 = q.iter().sum::<f64>() / k;
        prop_assert!(s.dual_bound >= mean - 1e-9);
    }
}

#[test]
fn gradients_match_finite_differences() {
    let err = common::gradient_check(100, 17);
    assert!(err <= 1e-5, "relative error {err}");
}

#[test]
fn fuzzed_monotonicity() {
    for seed in 0..200 {
        if let Err(msg) = common::fuzz_monotonicity(seed) {
            panic!("instance {seed}: {msg}");
        }
    }
}
