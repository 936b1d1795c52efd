use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fedrobust::oracle::{coverage_experiment, BoundRequest, CoverageConfig, TargetShift};
use fedrobust::sim::{generate_datasets, sample_clients, MetaConfig, ShiftMode};
use fedrobust::wass::{build_profiles, RadiusBudget, WassOptions};
use fedrobust::{Client, Execution, Hypothesis, LossFn, QueryConfig};

fn world() -> MetaConfig {
    let mut w = MetaConfig::binary_gaussian(2, 2.0, 1.0, 11);
    w.shift_mode = ShiftMode::Both;
    w.sigma_affine = 0.1;
    w.sigma_shift = 0.3;
    w
}

fn profiles(c: &mut Criterion) {
    let w = world();
    let k = 32;
    let specs = sample_clients(&w, k).unwrap();
    let data = generate_datasets(Execution::Sequential, &specs, &vec![100; k], &w).unwrap();
    let h = Hypothesis::logistic(vec![1.5, 0.0], 0.0).unwrap();
    let rhos = RadiusBudget::new(0.05, 0.1, k, std::f64::consts::FRAC_1_SQRT_2, false).grid(k, 8);
    let mut group = c.benchmark_group("build_profiles");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let opts = WassOptions { query: QueryConfig::new(LossFn::ClippedCrossEntropy), exec, ..WassOptions::default() };
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, _| {
            b.iter(|| {
                // budgets are consumed, so every iteration needs fresh clients
                let clients: Vec<Client> = data.iter().map(|d| Client::new(d.clone(), rhos.len()).unwrap()).collect();
                build_profiles(&clients, &h, &rhos, &opts, None).unwrap()
            })
        });
    }
    group.finish();
}

fn coverage(c: &mut Criterion) {
    let cfg = CoverageConfig {
        world: world(),
        model: Hypothesis::logistic(vec![1.5, 0.0], 0.0).unwrap(),
        loss: LossFn::ClippedCrossEntropy,
        clients: 20,
        samples: 50,
        delta: 0.1,
        bound: BoundRequest::Mean,
        shift: TargetShift::None,
        trials: 8,
        target_clients: 100,
        wass: WassOptions::default(),
    };
    let mut group = c.benchmark_group("coverage_trials");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| coverage_experiment(&cfg, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, profiles, coverage);
criterion_main!(benches);
