//! Federated world simulator.
//!
//! Client distributions are Gaussian class-conditional mixtures pushed
//! through a per-client affine map,
//!
//! ```text
//! X̃ = (I + Λ) X + δ + s_c,   X | y = c ~ N(m_c, σ² I),   y ~ π
//! ```
//!
//! where `Λ, δ` are drawn per client (feature shift), `π` is drawn from a
//! symmetric Dirichlet (label shift), and `s_c` is the class shift of the
//! client's archetype. Archetypes form a finite mixture, so divergences
//! and transport costs between a meta-distribution and its shifted copies
//! are available in closed form.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::{self, Execution};
use crate::fdiv::DivergenceName;
use crate::model::{self, Hypothesis, LossFn, Model, ProjectedLoss, Sample};
use crate::query::TransportCost;
use crate::rng::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftMode {
    #[default]
    None,
    Feature,
    Label,
    Both,
}

impl ShiftMode {
    fn feature(self) -> bool {
        matches!(self, ShiftMode::Feature | ShiftMode::Both)
    }

    fn label(self) -> bool {
        matches!(self, ShiftMode::Label | ShiftMode::Both)
    }
}

/// One client type in a finite mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Archetype {
    pub weight: f64,
    /// Exponent used by [`shift_meta_fdiv`]; larger scores gain weight
    /// under a positive tilt.
    #[serde(default)]
    pub score: f64,
    /// Per-class translation (`classes × dim`); empty means zero.
    #[serde(default)]
    pub class_shift: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaConfig {
    pub dim: usize,
    pub classes: usize,
    /// Class-conditional means (`classes × dim`).
    pub class_means: Vec<Vec<f64>>,
    #[serde(default = "one")]
    pub noise_std: f64,
    #[serde(default)]
    pub sigma_affine: f64,
    #[serde(default)]
    pub sigma_shift: f64,
    #[serde(default = "one")]
    pub dirichlet_alpha: f64,
    #[serde(default)]
    pub shift_mode: ShiftMode,
    /// Empty means a single archetype with no class shift.
    #[serde(default)]
    pub archetypes: Vec<Archetype>,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl MetaConfig {
    /// Two symmetric classes at `∓separation/2` along the first axis.
    pub fn binary_gaussian(dim: usize, separation: f64, noise_std: f64, seed: u64) -> Self {
        let mean = |s: f64| {
            let mut m = vec![0.0; dim];
            m[0] = s * separation / 2.0;
            m
        };
        MetaConfig {
            dim,
            classes: 2,
            class_means: vec![mean(-1.0), mean(1.0)],
            noise_std,
            sigma_affine: 0.0,
            sigma_shift: 0.0,
            dirichlet_alpha: 1.0,
            shift_mode: ShiftMode::None,
            archetypes: Vec::new(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(invalid("dim must be at least 1"));
        }
        if self.classes < 2 {
            return Err(invalid("classes must be at least 2"));
        }
        let matrix_ok = |m: &Vec<Vec<f64>>| {
            m.len() == self.classes && m.iter().all(|r| r.len() == self.dim && r.iter().all(|v| v.is_finite()))
        };
        if !matrix_ok(&self.class_means) {
            return Err(invalid(format!("class_means must be a finite {}×{} matrix", self.classes, self.dim)));
        }
        for (name, v) in [("noise_std", self.noise_std), ("sigma_affine", self.sigma_affine), ("sigma_shift", self.sigma_shift)]
        {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if !(self.dirichlet_alpha > 0.0) || !self.dirichlet_alpha.is_finite() {
            return Err(invalid(format!("dirichlet_alpha must be positive, got {}", self.dirichlet_alpha)));
        }
        if !self.archetypes.is_empty() {
            let mut total = 0.0;
            for (m, a) in self.archetypes.iter().enumerate() {
                if !(a.weight >= 0.0) || !a.score.is_finite() {
                    return Err(invalid(format!("archetype {m} needs a nonnegative weight and finite score")));
                }
                if !a.class_shift.is_empty() && !matrix_ok(&a.class_shift) {
                    return Err(invalid(format!("archetype {m} class_shift must be {}×{}", self.classes, self.dim)));
                }
                total += a.weight;
            }
            if (total - 1.0).abs() > 1e-9 {
                return Err(invalid(format!("archetype weights sum to {total}, expected 1")));
            }
        }
        Ok(())
    }

    /// Archetype list with the implicit single archetype made explicit.
    pub fn effective_archetypes(&self) -> Vec<Archetype> {
        if self.archetypes.is_empty() {
            vec![Archetype { weight: 1.0, score: 0.0, class_shift: Vec::new() }]
        } else {
            self.archetypes.clone()
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.effective_archetypes().iter().map(|a| a.weight).collect()
    }
}

/// True distribution of one client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSpec {
    pub id: usize,
    /// Seed of the client's data stream.
    pub seed: u64,
    pub archetype: usize,
    /// `Λ`, row-major `dim × dim`.
    pub affine: Vec<f64>,
    pub shift: Vec<f64>,
    pub proportions: Vec<f64>,
    /// Per-class translation inherited from the archetype (`classes × dim`).
    pub class_shift: Vec<Vec<f64>>,
}

impl ClientSpec {
    fn dim(&self) -> usize {
        self.shift.len()
    }

    /// `(I + Λ) v`.
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|i| v[i] + (0..d).map(|j| self.affine[i * d + j] * v[j]).sum::<f64>()).collect()
    }

    /// `(I + Λ)ᵀ v`.
    fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|j| v[j] + (0..d).map(|i| self.affine[i * d + j] * v[i]).sum::<f64>()).collect()
    }

    /// Mean of `X̃` given class `c`.
    pub fn class_mean(&self, cfg: &MetaConfig, c: usize) -> Vec<f64> {
        let mut m = self.apply(&cfg.class_means[c]);
        for (i, v) in m.iter_mut().enumerate() {
            *v += self.shift[i] + self.class_shift.get(c).map_or(0.0, |s| s[i]);
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalDataset {
    pub client: usize,
    pub samples: Vec<Sample>,
}

fn pick(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // rounding can leave u just above the last partial sum
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn draw_spec(cfg: &MetaConfig, archetypes: &[Archetype], base_seed: u64, k: usize) -> Result<ClientSpec> {
    let d = cfg.dim;
    let mut r = rng::rng_from(rng::derive(base_seed, stream::CLIENT_PARAMS, k as u64));
    let weights: Vec<f64> = archetypes.iter().map(|a| a.weight).collect();
    let archetype = pick(&weights, r.random::<f64>());
    let mut gauss = |sd: f64| -> f64 {
        let z: f64 = StandardNormal.sample(&mut r);
        sd * z
    };
    let (affine, shift) = if cfg.shift_mode.feature() {
        ((0..d * d).map(|_| gauss(cfg.sigma_affine)).collect(), (0..d).map(|_| gauss(cfg.sigma_shift)).collect())
    } else {
        (vec![0.0; d * d], vec![0.0; d])
    };
    let proportions = if cfg.shift_mode.label() {
        let gamma = Gamma::new(cfg.dirichlet_alpha, 1.0).map_err(|e| invalid(e.to_string()))?;
        let raw: Vec<f64> = (0..cfg.classes).map(|_| gamma.sample(&mut r)).collect();
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            raw.iter().map(|g| g / total).collect()
        } else {
            // every gamma draw underflowed; the limit is a vertex of the simplex
            let mut p = vec![0.0; cfg.classes];
            p[r.random_range(0..cfg.classes)] = 1.0;
            p
        }
    } else {
        vec![1.0 / cfg.classes as f64; cfg.classes]
    };
    let class_shift = if archetypes[archetype].class_shift.is_empty() {
        vec![vec![0.0; d]; cfg.classes]
    } else {
        archetypes[archetype].class_shift.clone()
    };
    Ok(ClientSpec {
        id: k,
        seed: rng::derive(base_seed, stream::CLIENT_DATA, k as u64),
        archetype,
        affine,
        shift,
        proportions,
        class_shift,
    })
}

/// Draws `k` client distributions from the meta-distribution.
pub fn sample_clients(cfg: &MetaConfig, k: usize) -> Result<Vec<ClientSpec>> {
    sample_network(cfg, k, cfg.seed)
}

/// Like [`sample_clients`] but from an arbitrary base seed, so independent
/// networks (source, target, trials) come from one configuration.
pub fn sample_network(cfg: &MetaConfig, k: usize, base_seed: u64) -> Result<Vec<ClientSpec>> {
    cfg.validate()?;
    if k == 0 {
        return Err(invalid("client count must be at least 1"));
    }
    let archetypes = cfg.effective_archetypes();
    (0..k).map(|i| draw_spec(cfg, &archetypes, base_seed, i)).collect()
}

pub fn generate_dataset(spec: &ClientSpec, n: usize, cfg: &MetaConfig) -> Result<LocalDataset> {
    if n == 0 {
        return Err(invalid("dataset size must be at least 1"));
    }
    if spec.dim() != cfg.dim || spec.proportions.len() != cfg.classes {
        return Err(Error::DimensionMismatch { expected: cfg.dim, got: spec.dim() });
    }
    let mut r = rng::rng_from(spec.seed);
    let samples = (0..n)
        .map(|_| {
            let c = pick(&spec.proportions, r.random::<f64>());
            let x: Vec<f64> = cfg.class_means[c]
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(&mut r);
                    m + cfg.noise_std * z
                })
                .collect();
            let mut xt = spec.apply(&x);
            for (i, v) in xt.iter_mut().enumerate() {
                *v += spec.shift[i] + spec.class_shift[c][i];
            }
            Sample::new(xt, c as f64)
        })
        .collect();
    Ok(LocalDataset { client: spec.id, samples })
}

/// Source network of `specs.len()` clients with the given sample counts.
pub fn generate_datasets(exec: Execution, specs: &[ClientSpec], n: &[usize], cfg: &MetaConfig) -> Result<Vec<LocalDataset>> {
    if n.len() != specs.len() {
        return Err(Error::DimensionMismatch { expected: specs.len(), got: n.len() });
    }
    let pairs: Vec<(&ClientSpec, usize)> = specs.iter().zip(n.iter().copied()).collect();
    exec::try_map(exec, &pairs, |(s, nk)| generate_dataset(s, *nk, cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdivShift {
    pub config: MetaConfig,
    pub kl: f64,
    pub chi_square: f64,
}

impl FdivShift {
    pub fn divergence(&self, name: DivergenceName) -> f64 {
        match name {
            DivergenceName::Kl => self.kl,
            DivergenceName::ChiSquare => self.chi_square,
        }
    }
}

/// Replaces the archetype weights and reports `D_f(μ'‖μ)` over them.
pub fn reweight_archetypes(cfg: &MetaConfig, new_weights: &[f64]) -> Result<FdivShift> {
    cfg.validate()?;
    let mut archetypes = cfg.effective_archetypes();
    if new_weights.len() != archetypes.len() {
        return Err(Error::DimensionMismatch { expected: archetypes.len(), got: new_weights.len() });
    }
    if new_weights.iter().any(|w| !(*w >= 0.0)) || (new_weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(invalid("new archetype weights must be a probability vector"));
    }
    let (mut kl, mut chi) = (0.0, 0.0);
    for (a, &wp) in archetypes.iter().zip(new_weights) {
        if a.weight == 0.0 {
            if wp > 0.0 {
                return Err(invalid("shifted weights put mass on an archetype of weight zero"));
            }
            continue;
        }
        let t = wp / a.weight;
        kl += a.weight * if t > 0.0 { t * t.ln() } else { 0.0 };
        chi += a.weight * (t - 1.0) * (t - 1.0);
    }
    for (a, &wp) in archetypes.iter_mut().zip(new_weights) {
        a.weight = wp;
    }
    let mut config = cfg.clone();
    if !cfg.archetypes.is_empty() {
        config.archetypes = archetypes;
    }
    Ok(FdivShift { config, kl: kl.max(0.0), chi_square: chi })
}

/// Exponential tilt `w'_m ∝ w_m e^{tilt·s_m}`.
pub fn shift_meta_fdiv(cfg: &MetaConfig, tilt: f64) -> Result<FdivShift> {
    if !tilt.is_finite() {
        return Err(invalid("tilt must be finite"));
    }
    let archetypes = cfg.effective_archetypes();
    let top = archetypes.iter().map(|a| tilt * a.score).fold(f64::MIN, f64::max);
    let raw: Vec<f64> = archetypes.iter().map(|a| a.weight * (tilt * a.score - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    let w: Vec<f64> = raw.iter().map(|r| r / total).collect();
    reweight_archetypes(cfg, &w)
}

/// Smallest nonnegative tilt whose divergence reaches `epsilon`.
pub fn tilt_to_divergence(cfg: &MetaConfig, name: DivergenceName, epsilon: f64) -> Result<FdivShift> {
    if !(epsilon >= 0.0) {
        return Err(invalid("divergence target must be nonnegative"));
    }
    if epsilon == 0.0 {
        return shift_meta_fdiv(cfg, 0.0);
    }
    let mut hi = 1.0;
    loop {
        if shift_meta_fdiv(cfg, hi)?.divergence(name) >= epsilon {
            break;
        }
        hi *= 2.0;
        if hi > 1e6 {
            return Err(invalid(format!("no tilt reaches divergence {epsilon}; scores cannot separate further")));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if shift_meta_fdiv(cfg, mid)?.divergence(name) >= epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // the upper end keeps the achieved divergence at or just above target;
    // step back to the lower end when it overshoots by more than rounding
    let upper = shift_meta_fdiv(cfg, hi)?;
    if upper.divergence(name) <= epsilon * (1.0 + 1e-12) {
        Ok(upper)
    } else {
        shift_meta_fdiv(cfg, lo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WassShift {
    pub config: MetaConfig,
    /// `Σ_m w_m c(r_m)`; bounds the meta-level transport cost from above.
    pub cost: f64,
    pub radii: Vec<f64>,
}

/// Translates every class of every archetype by distance `r` along the first
/// axis, with `r` chosen so that each client moves at cost `budget`.
pub fn shift_meta_wass(cfg: &MetaConfig, budget: f64, cost: TransportCost) -> Result<WassShift> {
    let mut e1 = vec![0.0; cfg.dim];
    e1[0] = 1.0;
    let directions = vec![e1; cfg.classes];
    let r = cost.distance_for(budget);
    if !(budget >= 0.0) {
        return Err(invalid(format!("transport budget must be nonnegative, got {budget}")));
    }
    let m = cfg.effective_archetypes().len();
    shift_meta_wass_radii(cfg, &vec![r; m], &directions, cost)
}

/// Translates archetype `m`'s class `c` by `radii[m] · directions[c]`.
/// Directions are normalized here.
pub fn shift_meta_wass_radii(
    cfg: &MetaConfig,
    radii: &[f64],
    directions: &[Vec<f64>],
    cost: TransportCost,
) -> Result<WassShift> {
    cfg.validate()?;
    let mut archetypes = cfg.effective_archetypes();
    if radii.len() != archetypes.len() {
        return Err(Error::DimensionMismatch { expected: archetypes.len(), got: radii.len() });
    }
    if directions.len() != cfg.classes || directions.iter().any(|d| d.len() != cfg.dim) {
        return Err(invalid(format!("directions must be {}×{}", cfg.classes, cfg.dim)));
    }
    if radii.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
        return Err(invalid("radii must be finite and nonnegative"));
    }
    let units: Vec<Vec<f64>> = directions
        .iter()
        .map(|d| {
            let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                Ok(d.iter().map(|v| v / n).collect())
            } else {
                Err(invalid("shift directions must be nonzero"))
            }
        })
        .collect::<Result<_>>()?;
    let mut achieved = 0.0;
    for (a, &r) in archetypes.iter_mut().zip(radii) {
        achieved += a.weight * cost.of_distance(r);
        if a.class_shift.is_empty() {
            a.class_shift = vec![vec![0.0; cfg.dim]; cfg.classes];
        }
        for (row, u) in a.class_shift.iter_mut().zip(&units) {
            for (s, ui) in row.iter_mut().zip(u) {
                *s += r * ui;
            }
        }
    }
    let mut config = cfg.clone();
    if radii.iter().any(|&r| r > 0.0) {
        config.archetypes = archetypes;
    }
    Ok(WassShift { config, cost: achieved, radii: radii.to_vec() })
}

/// Per-class unit directions that push samples of each class toward the
/// decision boundary of a binary rank-one model.
pub fn adversarial_directions(h: &Hypothesis, loss_fn: LossFn, classes: usize) -> Result<Vec<Vec<f64>>> {
    if classes != 2 {
        return Err(invalid("adversarial directions are defined for binary worlds"));
    }
    let proj = ProjectedLoss::new(loss_fn, h, 1.0)?
        .ok_or_else(|| invalid("adversarial directions need a rank-one model"))?;
    let a = proj.direction.clone();
    if proj.direction_norm() == 0.0 {
        return Err(invalid("model direction is zero"));
    }
    // class 1 loses when its score drops, class 0 when it rises
    Ok(vec![a.clone(), a.iter().map(|v| -v).collect()])
}

const QUAD_INTERVALS: usize = 400;
const QUAD_WIDTH: f64 = 10.0;
const MC_SAMPLES: usize = 20_000;

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `E[g(U)]` for `U ~ N(mean, sd²)`, splitting the range at `kink`.
fn gaussian_expectation(g: &dyn Fn(f64) -> f64, mean: f64, sd: f64, kink: Option<f64>) -> f64 {
    if sd == 0.0 {
        return g(mean);
    }
    let density = |u: f64| {
        let z = (u - mean) / sd;
        (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
    };
    let f = |u: f64| g(u) * density(u);
    let (lo, hi) = (mean - QUAD_WIDTH * sd, mean + QUAD_WIDTH * sd);
    match kink {
        Some(k) if k > lo && k < hi => {
            // evaluate each side from the interior so the jump is not sampled
            let eps = 1e-12 * (1.0 + k.abs());
            let left = |u: f64| g(u.min(k - eps)) * density(u);
            let right = |u: f64| g(u.max(k + eps)) * density(u);
            simpson(&left, lo, k, QUAD_INTERVALS) + simpson(&right, k, hi, QUAD_INTERVALS)
        }
        _ => simpson(&f, lo, hi, QUAD_INTERVALS),
    }
}

/// Expected loss of `h` under the client's true distribution. Exact up to
/// quadrature error for rank-one models; Monte-Carlo otherwise.
pub fn population_risk(spec: &ClientSpec, cfg: &MetaConfig, h: &Hypothesis, loss_fn: LossFn) -> Result<f64> {
    if h.input_dim() != cfg.dim {
        return Err(Error::DimensionMismatch { expected: cfg.dim, got: h.input_dim() });
    }
    let rank_one = !matches!(h.model, Model::LookupTable { .. })
        && ProjectedLoss::new(loss_fn, h, 0.0).ok().flatten().is_some();
    if !rank_one {
        return population_risk_mc(spec, cfg, h, loss_fn, MC_SAMPLES);
    }
    let mut risk = 0.0;
    for c in 0..cfg.classes {
        let pi = spec.proportions[c];
        if pi == 0.0 {
            continue;
        }
        let proj = ProjectedLoss::new(loss_fn, h, c as f64)?.expect("rank-one checked above");
        let mu = spec.class_mean(cfg, c);
        let mean: f64 = proj.direction.iter().zip(&mu).map(|(a, m)| a * m).sum();
        let at = spec.apply_transpose(&proj.direction);
        let sd = cfg.noise_std * at.iter().map(|v| v * v).sum::<f64>().sqrt();
        risk += pi * gaussian_expectation(&|u| proj.eval(u), mean, sd, proj.breakpoint());
    }
    Ok(risk.clamp(0.0, 1.0))
}

/// Monte-Carlo estimate of the population risk on an independent stream.
pub fn population_risk_mc(spec: &ClientSpec, cfg: &MetaConfig, h: &Hypothesis, loss_fn: LossFn, samples: usize) -> Result<f64> {
    let probe = ClientSpec { seed: rng::derive(spec.seed, stream::POPULATION, 0), ..spec.clone() };
    let data = generate_dataset(&probe, samples, cfg)?;
    let mut total = 0.0;
    for z in &data.samples {
        total += model::loss(loss_fn, h, z)?;
    }
    Ok(total / samples as f64)
}

/// Sets each archetype's score to the population risk of its typical client
/// (no feature or label shift), so a positive tilt moves mass toward
/// harder client types.
pub fn score_archetypes_by_risk(cfg: &MetaConfig, h: &Hypothesis, loss_fn: LossFn) -> Result<MetaConfig> {
    cfg.validate()?;
    let mut out = cfg.clone();
    let d = cfg.dim;
    let mut archetypes = cfg.effective_archetypes();
    for a in archetypes.iter_mut() {
        let spec = ClientSpec {
            id: 0,
            seed: 0,
            archetype: 0,
            affine: vec![0.0; d * d],
            shift: vec![0.0; d],
            proportions: vec![1.0 / cfg.classes as f64; cfg.classes],
            class_shift: if a.class_shift.is_empty() { vec![vec![0.0; d]; cfg.classes] } else { a.class_shift.clone() },
        };
        a.score = population_risk(&spec, cfg, h, loss_fn)?;
    }
    if !cfg.archetypes.is_empty() {
        out.archetypes = archetypes;
    }
    Ok(out)
}

/// A materialized network: client distributions plus their private data.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub config: MetaConfig,
    pub clients: Vec<ClientSpec>,
    pub datasets: Vec<LocalDataset>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: String,
    pub config: MetaConfig,
    pub clients: Vec<ClientSpec>,
    pub sample_counts: Vec<usize>,
    pub files: Vec<String>,
}

impl World {
    pub fn generate(cfg: &MetaConfig, k: usize, n: &[usize], exec: Execution) -> Result<World> {
        let clients = sample_clients(cfg, k)?;
        let datasets = generate_datasets(exec, &clients, n, cfg)?;
        Ok(World { config: cfg.clone(), clients, datasets })
    }

    pub fn sample_counts(&self) -> Vec<usize> {
        self.datasets.iter().map(|d| d.samples.len()).collect()
    }

    /// Writes `manifest.json` and one `client_XXXX.csv` per client.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let mut files = Vec::new();
        for d in &self.datasets {
            let name = format!("client_{:04}.csv", d.client);
            write_csv(&dir.join(&name), d, self.config.dim)?;
            files.push(name);
        }
        let manifest = Manifest {
            generator: rng::GENERATOR.to_string(),
            config: self.config.clone(),
            clients: self.clients.clone(),
            sample_counts: self.sample_counts(),
            files,
        };
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| io_err(&path, e))
    }

    pub fn read_dir(dir: &Path) -> Result<World> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.display().to_string(), message: e.to_string() })?;
        let datasets = manifest
            .files
            .iter()
            .zip(&manifest.clients)
            .map(|(f, c)| read_csv(&dir.join(f), c.id))
            .collect::<Result<Vec<_>>>()?;
        Ok(World { config: manifest.config, clients: manifest.clients, datasets })
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Parse { path: path.display().to_string(), message: e.to_string() }
}

/// Header `x0,…,x{d-1},label`.
pub fn write_csv(path: &Path, data: &LocalDataset, dim: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for s in &data.samples {
        let mut row: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
        row.push(s.label.to_string());
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a dataset whose last column is the label and all others features.
pub fn read_csv(path: &Path, client: usize) -> Result<LocalDataset> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let width = r.headers().map_err(|e| csv_err(path, e))?.len();
    if width < 2 {
        return Err(csv_err(path, "need at least one feature column and a label column"));
    }
    let mut samples = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let vals = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| csv_err(path, format!("row {}: {e}", line + 2)))?;
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(csv_err(path, format!("row {}: non-finite value", line + 2)));
        }
        let (features, label) = vals.split_at(width - 1);
        samples.push(Sample::new(features.to_vec(), label[0]));
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(LocalDataset { client, samples })
}

/// External CSV datasets as a fixed pool of clients, numbered in order.
pub fn ingest_csv_pool(paths: &[&Path]) -> Result<Vec<LocalDataset>> {
    paths.iter().enumerate().map(|(k, p)| read_csv(p, k)).collect()
}
