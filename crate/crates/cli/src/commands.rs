//! The four subcommands. Every file they write is a deterministic function
//! of the resolved configuration.

use std::fs;
use std::path::{Path, PathBuf};

use fedrobust::certificate::{CdfCurve, CertifiedBound};
use fedrobust::oracle::{
    check_compatible, coverage_experiment, network_risks, shifted_world, survival, tightness_probe, BoundRequest,
    CoverageConfig, CoverageReport, ProbeConfig, TightnessTable, GUARD,
};
use fedrobust::query::{Client, QueryConfig, QueryLog};
use fedrobust::rng::{self, stream};
use fedrobust::sim::World;
use fedrobust::wass::{build_profiles, wass_bound_from_profiles, RadiusBudget};
use fedrobust::{fdiv, nonrobust, Execution};
use serde::Serialize;

use crate::config::{declared_shift, ExperimentConfig, ModelRef};
use crate::CliError;

/// Target networks behind plotted curves use indices far from the trial range.
const PLOT_TARGET_INDEX: u64 = 1 << 40;

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

fn mkdir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
    text.push('\n');
    write(path, &text)
}

/// `NN-kind`, the stem shared by every file about one request.
fn stem(index: usize, request: &BoundRequest) -> String {
    format!("{index:02}-{}", request.kind().name())
}

/// Configuration as it was actually run: seed override folded into the
/// world, model inlined.
fn resolved(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut r = cfg.clone();
    r.world = cfg.world();
    r.seed = None;
    r.out = None;
    r.model = ModelRef::Inline(cfg.hypothesis().clone());
    r
}

fn generate_world(cfg: &ExperimentConfig, exec: Execution) -> Result<World, CliError> {
    let k = cfg.clients.get();
    Ok(World::generate(&cfg.world(), k, &vec![cfg.samples.get(); k], exec)?)
}

pub fn simulate(cfg: &ExperimentConfig, out: &Path, exec: Execution) -> Result<(), CliError> {
    let world = generate_world(cfg, exec)?;
    let dir = out.join("world");
    world.write_dir(&dir)?;
    println!("wrote {} clients to {}", world.clients.len(), dir.display());
    Ok(())
}

/// Reuses `out/world` when it was simulated from the same configuration.
fn load_or_generate(cfg: &ExperimentConfig, out: &Path, exec: Execution) -> Result<World, CliError> {
    let dir = out.join("world");
    if dir.join("manifest.json").exists() {
        let world = World::read_dir(&dir)?;
        let k = cfg.clients.get();
        if world.config != cfg.world() || world.sample_counts() != vec![cfg.samples.get(); k] {
            return Err(CliError::Usage(format!(
                "{} was simulated from a different configuration; remove it or use another --out",
                dir.display()
            )));
        }
        return Ok(world);
    }
    let world = generate_world(cfg, exec)?;
    world.write_dir(&dir)?;
    Ok(world)
}

enum Certificate {
    Scalar(CertifiedBound),
    Curve(CdfCurve),
}

fn certify_one(
    cfg: &ExperimentConfig,
    request: &BoundRequest,
    clients: &[Client],
    log: &QueryLog,
    exec: Execution,
) -> Result<Certificate, CliError> {
    let h = cfg.hypothesis();
    let n: Vec<usize> = clients.iter().map(Client::sample_count).collect();
    let query = QueryConfig { loss: cfg.loss, ..cfg.wass.query };
    let plain = || -> Result<Vec<f64>, fedrobust::Error> {
        let answers = fedrobust::exec::try_map(exec, clients, |c| c.query(h, 0.0, &query))?;
        for (c, a) in clients.iter().zip(&answers) {
            log.record(c.id(), a);
        }
        Ok(answers.iter().map(|a| a.value).collect())
    };
    let fopts = fdiv::FdivOptions { exec, ..Default::default() };
    let delta = cfg.delta;
    Ok(match request {
        BoundRequest::Mean => Certificate::Scalar(nonrobust::mean_bound(&plain()?, &n, delta)?),
        BoundRequest::Cdf { grid } => Certificate::Curve(nonrobust::cdf_bound(&plain()?, &n, delta, grid)?),
        BoundRequest::FdivMean { divergence, epsilon } => {
            Certificate::Scalar(fdiv::fdiv_mean_bound_with(&plain()?, &n, delta, *epsilon, *divergence, &fopts)?)
        }
        BoundRequest::FdivCdf { divergence, epsilon, grid } => {
            Certificate::Curve(fdiv::fdiv_cdf_bound_with(&plain()?, &n, delta, *epsilon, *divergence, grid, &fopts)?)
        }
        BoundRequest::WassMean { epsilon } => {
            let mut opts = cfg.wass;
            opts.query = query;
            opts.exec = exec;
            if opts.grid_size < 2 {
                return Err(CliError::Usage("wass.grid_size must be at least 2".into()));
            }
            let budget = RadiusBudget::new(*epsilon, delta, clients.len(), opts.constants.c1, opts.zero_slack);
            let rhos = budget.grid(clients.len(), opts.grid_size);
            let profiles = build_profiles(clients, h, &rhos, &opts, Some(log))?;
            Certificate::Scalar(wass_bound_from_profiles(&profiles, &n, *epsilon, delta, &opts)?.0)
        }
    })
}

pub fn certify(cfg: &ExperimentConfig, out: &Path, exec: Execution) -> Result<(), CliError> {
    if cfg.requests.is_empty() {
        return Err(CliError::Usage("the configuration has no bound requests".into()));
    }
    let world = load_or_generate(cfg, out, exec)?;
    let clients = world
        .datasets
        .into_iter()
        .map(|d| Client::new(d, cfg.max_queries))
        .collect::<Result<Vec<_>, _>>()?;
    let log = QueryLog::default();
    let (cert_dir, curve_dir) = (out.join("certificates"), out.join("curves"));
    mkdir(&cert_dir)?;
    mkdir(&curve_dir)?;
    write_json(&out.join("config.json"), &resolved(cfg))?;
    for (i, request) in cfg.requests.iter().enumerate() {
        let name = stem(i, request);
        match certify_one(cfg, request, &clients, &log, exec)? {
            Certificate::Scalar(b) => {
                println!("{name}: {:.6} (program {:.6}, slack {:.6})", b.value, b.program_value, b.total_slack());
                write_json(&cert_dir.join(format!("{name}.json")), &b)?;
            }
            Certificate::Curve(c) => {
                println!("{name}: {} points", c.lambda.len());
                write_json(&cert_dir.join(format!("{name}.json")), &c)?;
                write(&curve_dir.join(format!("{name}.csv")), &c.to_csv())?;
            }
        }
    }
    write(&out.join("queries.jsonl"), &log.to_jsonl()?)?;
    Ok(())
}

#[derive(Serialize)]
struct VerifySummary {
    passed: bool,
    failures: Vec<String>,
}

pub fn verify(cfg: &ExperimentConfig, out: &Path, exec: Execution) -> Result<(), CliError> {
    if cfg.requests.is_empty() && cfg.verify.tightness.is_none() {
        return Err(CliError::Usage("nothing to verify: no requests and no tightness probe".into()));
    }
    let world = cfg.world();
    let h = cfg.hypothesis();
    // reject every mismatched pair before spending time on any trial
    let plans: Vec<CoverageConfig> = cfg
        .requests
        .iter()
        .map(|request| {
            let shift = cfg.verify.shift.clone().unwrap_or_else(|| declared_shift(request));
            check_compatible(request, &shift)?;
            Ok(CoverageConfig {
                world: world.clone(),
                model: h.clone(),
                loss: cfg.loss,
                clients: cfg.clients.get(),
                samples: cfg.samples.get(),
                delta: cfg.delta,
                bound: request.clone(),
                shift,
                trials: cfg.verify.trials,
                target_clients: cfg.verify.target_clients,
                wass: cfg.wass,
            })
        })
        .collect::<Result<_, fedrobust::Error>>()?;
    let dir = out.join("verify");
    mkdir(&dir)?;
    let mut failures = Vec::new();
    for (i, plan) in plans.iter().enumerate() {
        let name = stem(i, &plan.bound);
        let report: CoverageReport = coverage_experiment(plan, exec)?;
        println!(
            "{name}: {}/{} violations (rate {:.3}, delta {})",
            report.violations, report.trials, report.violation_rate, report.delta
        );
        write_json(&dir.join(format!("{name}.json")), &report)?;
        write(&dir.join(format!("{name}.csv")), &report.to_csv())?;
        if !report.within_delta() {
            failures.push(format!("{name}: violation rate {} exceeds delta {}", report.violation_rate, report.delta));
        }
    }
    if let Some(t) = &cfg.verify.tightness {
        let probe = ProbeConfig {
            world: world.clone(),
            model: h.clone(),
            loss: cfg.loss,
            delta: cfg.delta,
            divergence: t.divergence,
            epsilon: t.epsilon,
            schedule: t.schedule.clone(),
            trials: t.trials,
            target_clients: t.target_clients,
        };
        let table: TightnessTable = tightness_probe(&probe, exec)?;
        for r in &table.rows {
            println!("tightness K={} n={}: median gap {:.4} (se {:.4})", r.k, r.n, r.median_gap, r.se);
        }
        write_json(&dir.join("tightness.json"), &table)?;
        write(&dir.join("tightness.csv"), &table.to_csv())?;
        if !table.decreasing_within_noise() {
            failures.push("tightness: median gap does not decrease across the schedule".into());
        }
    }
    let passed = failures.is_empty();
    write_json(&dir.join("summary.json"), &VerifySummary { passed, failures: failures.clone() })?;
    if passed {
        Ok(())
    } else {
        Err(CliError::Verification(failures.join("; ")))
    }
}

/// Header of every per-curve plot file; `empirical_cdf` is the fraction of
/// target clients whose risk is at least `lambda`.
pub const PLOT_HEADER: &str = "lambda,empirical_cdf,bound,kind";
pub const MEANS_HEADER: &str = "kind,empirical_mean,bound";

pub fn emit_plots(results: &Path, exec: Execution) -> Result<(), CliError> {
    let config_path = results.join("config.json");
    if !config_path.is_file() {
        return Err(CliError::Usage(format!("missing inputs: {}", config_path.display())));
    }
    let text = fs::read_to_string(&config_path).map_err(|e| io(&config_path, e))?;
    let cfg = ExperimentConfig::parse(&text, &config_path)?;
    let cert_dir = results.join("certificates");
    let files: Vec<PathBuf> =
        cfg.requests.iter().enumerate().map(|(i, r)| cert_dir.join(format!("{}.json", stem(i, r)))).collect();
    let missing: Vec<&PathBuf> = files.iter().filter(|p| !p.is_file()).collect();
    if cfg.requests.is_empty() {
        return Err(CliError::Usage(format!("{} lists no requests", config_path.display())));
    }
    if !missing.is_empty() {
        let list: Vec<String> = missing.iter().map(|p| p.display().to_string()).collect();
        return Err(CliError::Usage(format!("missing inputs: {}", list.join(", "))));
    }

    let h = cfg.hypothesis();
    let plot_dir = results.join("plots");
    mkdir(&plot_dir)?;
    let mut means = String::from(MEANS_HEADER);
    means.push('\n');
    let mut violations = Vec::new();
    for (i, (request, file)) in cfg.requests.iter().zip(&files).enumerate() {
        let name = stem(i, request);
        let kind = request.kind().name();
        let target = shifted_world(&cfg.world, &declared_shift(request), h, cfg.loss)?;
        let seed = rng::derive(cfg.world.seed, stream::TARGET, PLOT_TARGET_INDEX + i as u64);
        let risks = network_risks(&target, cfg.plots.target_clients, seed, h, cfg.loss, exec)?;
        let body = fs::read_to_string(file).map_err(|e| io(file, e))?;
        let bad = |e: serde_json::Error| CliError::Usage(format!("{}: {e}", file.display()));
        if request.grid().is_some() {
            let curve: CdfCurve = serde_json::from_str(&body).map_err(bad)?;
            let mut csv = String::from(PLOT_HEADER);
            csv.push('\n');
            for (&l, &b) in curve.lambda.iter().zip(&curve.bound) {
                let e = survival(&risks, l);
                if e > b + GUARD {
                    violations.push(format!("{name} at lambda {l}: empirical {e} above bound {b}"));
                }
                csv.push_str(&format!("{l},{e},{b},{kind}\n"));
            }
            write(&plot_dir.join(format!("{name}.csv")), &csv)?;
        } else {
            let bound: CertifiedBound = serde_json::from_str(&body).map_err(bad)?;
            let e = risks.iter().sum::<f64>() / risks.len() as f64;
            if e > bound.value + GUARD {
                violations.push(format!("{name}: empirical mean {e} above bound {}", bound.value));
            }
            means.push_str(&format!("{kind},{e},{}\n", bound.value));
        }
    }
    write(&plot_dir.join("means.csv"), &means)?;
    println!("wrote plot tables to {}", plot_dir.display());
    if violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(violations.join("; ")))
    }
}
