//! Hypotheses and 1-bounded losses.
//!
//! Every loss is clipped into `[0, 1]`, so the concentration arguments behind
//! the certificates apply without further assumptions on the model.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// One labelled observation. Class labels are stored as integral reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: f64,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: f64) -> Self {
        Sample { features, label }
    }

    pub fn class(&self) -> Result<usize> {
        let y = self.label;
        if y.is_finite() && y >= 0.0 && y.fract() == 0.0 {
            Ok(y as usize)
        } else {
            Err(invalid(format!("label {y} is not a class id")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub input: usize,
    pub classes: usize,
}

/// The scoring rule behind a hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Model {
    /// Multiclass linear scores `W x + b`, `W` stored row-major (`classes × input`).
    LinearClassifier {
        dims: Dims,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    /// Binary logistic model, `P(y = 1 | x) = σ(w·x + b)`.
    Logistic {
        dims: Dims,
        weights: Vec<f64>,
        bias: f64,
    },
    /// Table over a finite sample space. Inputs are mapped to the nearest
    /// declared point; outputs are class ids, probabilities of class 1, or
    /// regression targets depending on the loss.
    LookupTable {
        dims: Dims,
        points: Vec<Vec<f64>>,
        outputs: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    #[serde(flatten)]
    pub model: Model,
    #[serde(default)]
    pub metadata: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossFn {
    ZeroOne,
    ClippedCrossEntropy,
    ClippedSquared,
}

impl LossFn {
    pub fn name(self) -> &'static str {
        match self {
            LossFn::ZeroOne => "zero-one",
            LossFn::ClippedCrossEntropy => "clipped-cross-entropy",
            LossFn::ClippedSquared => "clipped-squared",
        }
    }

    pub fn is_differentiable(self) -> bool {
        !matches!(self, LossFn::ZeroOne)
    }
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl Hypothesis {
    pub fn new(model: Model) -> Result<Self> {
        let h = Hypothesis { model, metadata: String::new() };
        h.validate()?;
        Ok(h)
    }

    pub fn logistic(weights: Vec<f64>, bias: f64) -> Result<Self> {
        let dims = Dims { input: weights.len(), classes: 2 };
        Self::new(Model::Logistic { dims, weights, bias })
    }

    pub fn linear(classes: usize, input: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        Self::new(Model::LinearClassifier { dims: Dims { input, classes }, weights, bias })
    }

    pub fn lookup(points: Vec<Vec<f64>>, outputs: Vec<f64>, classes: usize) -> Result<Self> {
        let input = points.first().map_or(0, Vec::len);
        Self::new(Model::LookupTable { dims: Dims { input, classes }, points, outputs })
    }

    pub fn with_metadata(mut self, metadata: impl Into<String>) -> Self {
        self.metadata = metadata.into();
        self
    }

    pub fn dims(&self) -> Dims {
        match &self.model {
            Model::LinearClassifier { dims, .. }
            | Model::Logistic { dims, .. }
            | Model::LookupTable { dims, .. } => *dims,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.dims().input
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        if dims.input == 0 {
            return Err(invalid("hypothesis input dimension must be at least 1"));
        }
        match &self.model {
            Model::LinearClassifier { weights, bias, .. } => {
                if dims.classes == 0 {
                    return Err(invalid("linear classifier needs at least one output"));
                }
                if weights.len() != dims.classes * dims.input || bias.len() != dims.classes {
                    return Err(invalid("linear classifier weights do not match dims"));
                }
                if !all_finite(weights) || !all_finite(bias) {
                    return Err(invalid("hypothesis weights must be finite"));
                }
            }
            Model::Logistic { weights, bias, .. } => {
                if dims.classes != 2 || weights.len() != dims.input {
                    return Err(invalid("logistic weights do not match dims"));
                }
                if !all_finite(weights) || !bias.is_finite() {
                    return Err(invalid("hypothesis weights must be finite"));
                }
            }
            Model::LookupTable { points, outputs, .. } => {
                if points.is_empty() || points.len() != outputs.len() {
                    return Err(invalid("lookup table needs one output per declared point"));
                }
                if points.iter().any(|p| p.len() != dims.input || !all_finite(p)) {
                    return Err(invalid("lookup table points must be finite and match dims"));
                }
                if !all_finite(outputs) {
                    return Err(invalid("hypothesis weights must be finite"));
                }
            }
        }
        Ok(())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        let expected = self.input_dim();
        if x.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: x.len() });
        }
        Ok(())
    }

    fn row(&self, c: usize) -> &[f64] {
        match &self.model {
            Model::LinearClassifier { dims, weights, .. } => &weights[c * dims.input..(c + 1) * dims.input],
            Model::Logistic { weights, .. } => weights,
            Model::LookupTable { .. } => &[],
        }
    }

    /// Index of the declared point closest to `x` (lookup tables only).
    pub fn nearest_point(&self, x: &[f64]) -> Option<usize> {
        let Model::LookupTable { points, .. } = &self.model else {
            return None;
        };
        let mut best = (0, f64::INFINITY);
        for (j, p) in points.iter().enumerate() {
            let d: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 {
                best = (j, d);
            }
        }
        Some(best.0)
    }

    /// Raw linear scores (linear classifier) or the single logit (logistic).
    fn linear_scores(&self, x: &[f64]) -> Vec<f64> {
        match &self.model {
            Model::LinearClassifier { dims, bias, .. } => {
                (0..dims.classes).map(|c| dot(self.row(c), x) + bias[c]).collect()
            }
            Model::Logistic { weights, bias, .. } => vec![dot(weights, x) + bias],
            Model::LookupTable { .. } => Vec::new(),
        }
    }

    /// Predicted class; ties go to the lowest index.
    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        self.check_dim(x)?;
        Ok(match &self.model {
            Model::LinearClassifier { .. } => argmax(&self.linear_scores(x)),
            Model::Logistic { .. } => usize::from(self.linear_scores(x)[0] >= 0.0),
            Model::LookupTable { outputs, .. } => {
                let j = self.nearest_point(x).unwrap_or(0);
                outputs[j].round().max(0.0) as usize
            }
        })
    }

    /// Real-valued prediction used by the squared loss.
    pub fn predict_value(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match &self.model {
            Model::LinearClassifier { .. } => self.linear_scores(x)[0],
            Model::Logistic { .. } => sigmoid(self.linear_scores(x)[0]),
            Model::LookupTable { outputs, .. } => outputs[self.nearest_point(x).unwrap_or(0)],
        })
    }

}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Unclipped cross-entropy `-ln p_y` for the given hypothesis.
fn cross_entropy(h: &Hypothesis, x: &[f64], label: f64) -> Result<f64> {
    match &h.model {
        Model::LinearClassifier { dims, .. } => {
            let y = class_of(label, dims.classes)?;
            let s = h.linear_scores(x);
            let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            Ok(lse - s[y])
        }
        Model::Logistic { .. } => {
            let y = class_of(label, 2)?;
            let s = h.linear_scores(x)[0];
            Ok(if y == 1 { softplus(-s) } else { softplus(s) })
        }
        Model::LookupTable { outputs, .. } => {
            let y = class_of(label, 2)?;
            let p1 = outputs[h.nearest_point(x).unwrap_or(0)].clamp(0.0, 1.0);
            let py = if y == 1 { p1 } else { 1.0 - p1 };
            Ok(if py <= 0.0 { f64::INFINITY } else { -py.ln() })
        }
    }
}

fn class_of(label: f64, classes: usize) -> Result<usize> {
    let y = Sample::new(Vec::new(), label).class()?;
    if y >= classes {
        return Err(invalid(format!("class {y} outside label space of {classes} classes")));
    }
    Ok(y)
}

/// Loss of `h` on `z`, clipped into `[0, 1]`.
pub fn loss(loss_fn: LossFn, h: &Hypothesis, z: &Sample) -> Result<f64> {
    loss_at(loss_fn, h, &z.features, z.label)
}

/// Loss evaluated at an arbitrary feature vector with a fixed label.
pub fn loss_at(loss_fn: LossFn, h: &Hypothesis, x: &[f64], label: f64) -> Result<f64> {
    h.check_dim(x)?;
    let raw = match loss_fn {
        LossFn::ZeroOne => {
            let y = class_of(label, h.dims().classes.max(2))?;
            if h.predict_class(x)? == y {
                0.0
            } else {
                1.0
            }
        }
        LossFn::ClippedCrossEntropy => cross_entropy(h, x, label)?,
        LossFn::ClippedSquared => {
            let d = h.predict_value(x)? - label;
            d * d
        }
    };
    Ok(if raw.is_nan() { 1.0 } else { raw.clamp(0.0, 1.0) })
}

/// Gradient of the clipped loss with respect to the features.
///
/// In the clipped region the gradient is zero. Lookup tables are piecewise
/// constant, so their gradient is zero everywhere.
pub fn loss_gradient(loss_fn: LossFn, h: &Hypothesis, z: &Sample) -> Result<Vec<f64>> {
    gradient_at(loss_fn, h, &z.features, z.label)
}

pub fn gradient_at(loss_fn: LossFn, h: &Hypothesis, x: &[f64], label: f64) -> Result<Vec<f64>> {
    if !loss_fn.is_differentiable() {
        return Err(Error::UnsupportedGradient(loss_fn.name()));
    }
    h.check_dim(x)?;
    let d = h.input_dim();
    let mut g = vec![0.0; d];
    match (&h.model, loss_fn) {
        (Model::LookupTable { .. }, _) => {}
        (Model::LinearClassifier { dims, .. }, LossFn::ClippedCrossEntropy) => {
            if cross_entropy(h, x, label)? < 1.0 {
                let y = class_of(label, dims.classes)?;
                let p = softmax(&h.linear_scores(x));
                for (c, pc) in p.iter().enumerate() {
                    let coef = pc - if c == y { 1.0 } else { 0.0 };
                    for (gi, wi) in g.iter_mut().zip(h.row(c)) {
                        *gi += coef * wi;
                    }
                }
            }
        }
        (Model::Logistic { weights, .. }, LossFn::ClippedCrossEntropy) => {
            if cross_entropy(h, x, label)? < 1.0 {
                let y = class_of(label, 2)? as f64;
                let coef = sigmoid(h.linear_scores(x)[0]) - y;
                for (gi, wi) in g.iter_mut().zip(weights) {
                    *gi = coef * wi;
                }
            }
        }
        (Model::LinearClassifier { .. }, LossFn::ClippedSquared) => {
            let r = h.predict_value(x)? - label;
            if r * r < 1.0 {
                for (gi, wi) in g.iter_mut().zip(h.row(0)) {
                    *gi = 2.0 * r * wi;
                }
            }
        }
        (Model::Logistic { weights, .. }, LossFn::ClippedSquared) => {
            let p = sigmoid(h.linear_scores(x)[0]);
            let r = p - label;
            if r * r < 1.0 {
                let coef = 2.0 * r * p * (1.0 - p);
                for (gi, wi) in g.iter_mut().zip(weights) {
                    *gi = coef * wi;
                }
            }
        }
        (_, LossFn::ZeroOne) => unreachable!(),
    }
    Ok(g)
}

/// Upper bound `β` on the largest Hessian eigenvalue of the (unclipped) loss
/// as a function of the features. The inner maximization is strongly
/// concave under the half-squared cost once `γ > β`.
pub fn curvature_bound(loss_fn: LossFn, h: &Hypothesis) -> f64 {
    match (&h.model, loss_fn) {
        (Model::LookupTable { .. }, _) | (_, LossFn::ZeroOne) => 0.0,
        (Model::LinearClassifier { weights, .. }, LossFn::ClippedCrossEntropy) => {
            0.5 * dot(weights, weights)
        }
        (Model::Logistic { weights, .. }, LossFn::ClippedCrossEntropy) => 0.25 * dot(weights, weights),
        (Model::LinearClassifier { .. }, LossFn::ClippedSquared) => 2.0 * dot(h.row(0), h.row(0)),
        // sup |d²/ds² (σ(s) - y)²| over s and y ∈ [0, 1] is below 0.318
        (Model::Logistic { weights, .. }, LossFn::ClippedSquared) => 0.32 * dot(weights, weights),
    }
}

/// `sup_x loss(x, label)` over the whole feature space.
pub fn loss_supremum(loss_fn: LossFn, h: &Hypothesis, label: f64) -> Result<f64> {
    if let Model::LookupTable { points, .. } = &h.model {
        let mut best: f64 = 0.0;
        for p in points {
            best = best.max(loss_at(loss_fn, h, p, label)?);
        }
        return Ok(best);
    }
    let origin = vec![0.0; h.input_dim()];
    let at_origin = loss_at(loss_fn, h, &origin, label)?;
    let movable = match &h.model {
        Model::LinearClassifier { dims, .. } if loss_fn == LossFn::ClippedSquared || dims.classes == 1 => {
            norm(h.row(0)) > 0.0
        }
        Model::LinearClassifier { dims, .. } => {
            let y = class_of(label, dims.classes)?;
            (0..dims.classes).any(|c| c != y && h.row(c) != h.row(y))
        }
        Model::Logistic { weights, .. } => norm(weights) > 0.0,
        Model::LookupTable { .. } => unreachable!(),
    };
    if !movable {
        return Ok(at_origin);
    }
    Ok(match loss_fn {
        LossFn::ZeroOne | LossFn::ClippedCrossEntropy => 1.0,
        LossFn::ClippedSquared => match &h.model {
            // σ ranges over (0, 1); the supremum is approached at an end
            Model::Logistic { .. } => label.powi(2).max((1.0 - label).powi(2)).min(1.0),
            _ => 1.0,
        },
    })
}

/// Euclidean distance from `z` to the closure of the region where the
/// zero-one loss equals 1, for linear and logistic models. Zero when `z` is
/// already misclassified, infinite when no feature change flips the label.
pub fn distance_to_error(h: &Hypothesis, z: &Sample) -> Result<f64> {
    h.check_dim(&z.features)?;
    if loss_at(LossFn::ZeroOne, h, &z.features, z.label)? >= 1.0 {
        return Ok(0.0);
    }
    let x = &z.features;
    match &h.model {
        Model::Logistic { weights, .. } => {
            let wn = norm(weights);
            if wn == 0.0 {
                return Ok(f64::INFINITY);
            }
            let s = h.linear_scores(x)[0];
            Ok(s.abs() / wn)
        }
        Model::LinearClassifier { dims, bias, .. } => {
            let y = class_of(z.label, dims.classes)?;
            let mut best = f64::INFINITY;
            for c in (0..dims.classes).filter(|&c| c != y) {
                let a: Vec<f64> = h.row(c).iter().zip(h.row(y)).map(|(p, q)| p - q).collect();
                let an = norm(&a);
                if an == 0.0 {
                    continue;
                }
                let margin = -(dot(&a, x) + bias[c] - bias[y]);
                best = best.min(margin.max(0.0) / an);
            }
            Ok(best)
        }
        Model::LookupTable { .. } => Err(invalid("distance_to_error is not defined for lookup tables")),
    }
}

/// How the scalar `u = a·x` enters the loss of a rank-one model.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Link {
    /// Logistic model, logit `u + bias`.
    Logit { bias: f64 },
    /// Two-class linear model, score difference `u + offset` (class 1 minus class 0).
    Difference { offset: f64 },
    /// Regression output `u + offset`.
    Identity { offset: f64 },
}

/// A loss that depends on the features only through one linear functional
/// `a·x`, for a fixed label. Lets integrals and inner maximizations run in 1-D.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedLoss {
    pub direction: Vec<f64>,
    loss_fn: LossFn,
    label: f64,
    link: Link,
}

impl ProjectedLoss {
    /// Returns `None` when the model is not rank-one for this loss.
    pub fn new(loss_fn: LossFn, h: &Hypothesis, label: f64) -> Result<Option<Self>> {
        let link_and_dir = match (&h.model, loss_fn) {
            (Model::Logistic { weights, bias, .. }, _) => {
                if loss_fn != LossFn::ClippedSquared {
                    class_of(label, 2)?;
                }
                Some((Link::Logit { bias: *bias }, weights.clone()))
            }
            (Model::LinearClassifier { bias, .. }, LossFn::ClippedSquared) => {
                Some((Link::Identity { offset: bias[0] }, h.row(0).to_vec()))
            }
            (Model::LinearClassifier { dims, bias, .. }, _) if dims.classes == 2 => {
                class_of(label, 2)?;
                let a = h.row(1).iter().zip(h.row(0)).map(|(p, q)| p - q).collect();
                Some((Link::Difference { offset: bias[1] - bias[0] }, a))
            }
            _ => None,
        };
        Ok(link_and_dir.map(|(link, direction)| ProjectedLoss { direction, loss_fn, label, link }))
    }

    /// Loss at any `x` with `a·x = u`.
    pub fn eval(&self, u: f64) -> f64 {
        let y = self.label;
        let raw = match (self.link, self.loss_fn) {
            (Link::Logit { bias }, LossFn::ZeroOne) => {
                let pred = if u + bias >= 0.0 { 1.0 } else { 0.0 };
                f64::from(u8::from(pred != y))
            }
            (Link::Difference { offset }, LossFn::ZeroOne) => {
                let pred = if u + offset > 0.0 { 1.0 } else { 0.0 };
                f64::from(u8::from(pred != y))
            }
            (Link::Logit { bias: o } | Link::Difference { offset: o }, LossFn::ClippedCrossEntropy) => {
                let s = u + o;
                if y == 1.0 {
                    softplus(-s)
                } else {
                    softplus(s)
                }
            }
            (Link::Logit { bias }, LossFn::ClippedSquared) => (sigmoid(u + bias) - y).powi(2),
            (Link::Identity { offset }, LossFn::ClippedSquared) => (u + offset - y).powi(2),
            // never constructed
            (Link::Identity { .. }, _) | (Link::Difference { .. }, LossFn::ClippedSquared) => 1.0,
        };
        if raw.is_nan() {
            1.0
        } else {
            raw.clamp(0.0, 1.0)
        }
    }

    /// Location of the jump of the zero-one loss in `u`, if any.
    pub fn breakpoint(&self) -> Option<f64> {
        match (self.link, self.loss_fn) {
            (Link::Logit { bias }, LossFn::ZeroOne) => Some(-bias),
            (Link::Difference { offset }, LossFn::ZeroOne) => Some(-offset),
            _ => None,
        }
    }

    pub fn direction_norm(&self) -> f64 {
        norm(&self.direction)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fd_gradient(loss_fn: LossFn, h: &Hypothesis, x: &[f64], label: f64, step: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut hi = x.to_vec();
                let mut lo = x.to_vec();
                hi[i] += step;
                lo[i] -= step;
                (loss_at(loss_fn, h, &hi, label).unwrap() - loss_at(loss_fn, h, &lo, label).unwrap())
                    / (2.0 * step)
            })
            .collect()
    }

    #[test]
    fn zero_one_hits_and_misses() {
        let h = Hypothesis::logistic(vec![1.0], 0.0).unwrap();
        assert_eq!(loss(LossFn::ZeroOne, &h, &Sample::new(vec![2.0], 1.0)).unwrap(), 0.0);
        assert_eq!(loss(LossFn::ZeroOne, &h, &Sample::new(vec![2.0], 0.0)).unwrap(), 1.0);
    }

    #[test]
    fn clipped_squared_identity_is_zero() {
        let h = Hypothesis::lookup(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5], 2).unwrap();
        assert_eq!(loss(LossFn::ClippedSquared, &h, &Sample::new(vec![0.0], 0.5)).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let h = Hypothesis::logistic(vec![1.0, 2.0], 0.0).unwrap();
        let err = loss(LossFn::ZeroOne, &h, &Sample::new(vec![1.0], 0.0)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, got: 1 }));
    }

    #[test]
    fn non_finite_weights_rejected() {
        assert!(Hypothesis::logistic(vec![f64::NAN], 0.0).is_err());
        assert!(Hypothesis::lookup(vec![vec![0.0]], vec![], 2).is_err());
    }

    #[test]
    fn zero_one_has_no_gradient() {
        let h = Hypothesis::logistic(vec![1.0], 0.0).unwrap();
        let err = loss_gradient(LossFn::ZeroOne, &h, &Sample::new(vec![0.3], 1.0)).unwrap_err();
        assert!(matches!(err, Error::UnsupportedGradient(_)));
    }

    #[test]
    fn squared_gradient_vanishes_at_minimizer() {
        // linear regressor y = 2x: minimizer of (2x - 1)² at x = 0.5
        let h = Hypothesis::linear(1, 1, vec![2.0], vec![0.0]).unwrap();
        let g = loss_gradient(LossFn::ClippedSquared, &h, &Sample::new(vec![0.5], 1.0)).unwrap();
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn constant_lookup_has_zero_gradient() {
        let h = Hypothesis::lookup(vec![vec![0.0], vec![1.0]], vec![0.3, 0.3], 2).unwrap();
        let g = loss_gradient(LossFn::ClippedSquared, &h, &Sample::new(vec![0.2], 0.0)).unwrap();
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn logistic_gradient_matches_central_differences() {
        // -ln σ(1.5·0.2 - 0.1) = softplus(-0.2) ≈ 0.598; unclipped region
        let h = Hypothesis::logistic(vec![1.5], -0.1).unwrap();
        let z = Sample::new(vec![0.2], 1.0);
        let g = loss_gradient(LossFn::ClippedCrossEntropy, &h, &z).unwrap();
        let fd = fd_gradient(LossFn::ClippedCrossEntropy, &h, &z.features, 1.0, 1e-5);
        assert_abs_diff_eq!(g[0], fd[0], epsilon = 1e-6);
        // hand value: (σ(0.2) - 1)·1.5
        assert_abs_diff_eq!(g[0], (sigmoid(0.2) - 1.0) * 1.5, epsilon = 1e-12);
    }

    #[test]
    fn multiclass_gradient_matches_central_differences() {
        let h = Hypothesis::linear(3, 2, vec![0.4, -0.2, 0.1, 0.3, -0.5, 0.2], vec![0.0, 0.1, -0.1]).unwrap();
        for &(x0, x1, y) in &[(0.1, 0.2, 0.0), (-0.3, 0.5, 1.0), (0.7, -0.4, 2.0)] {
            let x = [x0, x1];
            let g = gradient_at(LossFn::ClippedCrossEntropy, &h, &x, y).unwrap();
            let fd = fd_gradient(LossFn::ClippedCrossEntropy, &h, &x, y, 1e-5);
            for i in 0..2 {
                assert_abs_diff_eq!(g[i], fd[i], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn suprema_of_clipped_losses() {
        let h = Hypothesis::logistic(vec![1.0], 0.0).unwrap();
        assert_eq!(loss_supremum(LossFn::ClippedCrossEntropy, &h, 1.0).unwrap(), 1.0);
        assert_eq!(loss_supremum(LossFn::ZeroOne, &h, 0.0).unwrap(), 1.0);
        let flat = Hypothesis::logistic(vec![0.0], 5.0).unwrap();
        assert_eq!(loss_supremum(LossFn::ZeroOne, &flat, 1.0).unwrap(), 0.0);
        let table = Hypothesis::lookup(vec![vec![0.0], vec![1.0]], vec![0.0, 1.0], 2).unwrap();
        assert_eq!(loss_supremum(LossFn::ZeroOne, &table, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn distance_to_error_for_linear_models() {
        let h = Hypothesis::logistic(vec![3.0, 4.0], -5.0).unwrap();
        // score at (3, 4) is 20; boundary distance 20 / 5
        let d = distance_to_error(&h, &Sample::new(vec![3.0, 4.0], 1.0)).unwrap();
        assert_abs_diff_eq!(d, 4.0, epsilon = 1e-12);
        assert_eq!(distance_to_error(&h, &Sample::new(vec![3.0, 4.0], 0.0)).unwrap(), 0.0);
        let lin = Hypothesis::linear(2, 1, vec![1.0, -1.0], vec![0.0, 0.0]).unwrap();
        // class 0 wins while x > 0; flips at x = 0
        let d = distance_to_error(&lin, &Sample::new(vec![0.75], 0.0)).unwrap();
        assert_abs_diff_eq!(d, 0.75, epsilon = 1e-12);
    }

    #[test]
    fn hypothesis_json_shape() {
        let h = Hypothesis::logistic(vec![1.0, -2.0], 0.5).unwrap();
        let v: serde_json::Value = serde_json::to_value(&h).unwrap();
        assert_eq!(v["kind"], "logistic");
        assert_eq!(v["dims"]["input"], 2);
        assert_eq!(v["weights"][1], -2.0);
        let back: Hypothesis = serde_json::from_value(v).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn projected_loss_agrees_with_direct_evaluation() {
        let cases = vec![
            (Hypothesis::logistic(vec![0.8, -1.3], 0.2).unwrap(), vec![0.0, 1.0]),
            (Hypothesis::linear(2, 2, vec![0.5, 0.1, -0.4, 0.9], vec![0.3, -0.2]).unwrap(), vec![0.0, 1.0]),
        ];
        for (h, labels) in cases {
            for loss_fn in [LossFn::ZeroOne, LossFn::ClippedCrossEntropy] {
                for &y in &labels {
                    let p = ProjectedLoss::new(loss_fn, &h, y).unwrap().unwrap();
                    for i in -20..=20 {
                        let x = [0.13 * i as f64, -0.07 * i as f64 + 0.4];
                        let u = dot(&p.direction, &x);
                        assert_abs_diff_eq!(p.eval(u), loss_at(loss_fn, &h, &x, y).unwrap(), epsilon = 1e-12);
                    }
                }
            }
        }
        let reg = Hypothesis::linear(1, 1, vec![2.0], vec![0.1]).unwrap();
        let p = ProjectedLoss::new(LossFn::ClippedSquared, &reg, 0.4).unwrap().unwrap();
        assert_abs_diff_eq!(p.eval(2.0 * 0.3), loss_at(LossFn::ClippedSquared, &reg, &[0.3], 0.4).unwrap());
        let multi = Hypothesis::linear(3, 1, vec![1.0, 0.0, -1.0], vec![0.0; 3]).unwrap();
        assert!(ProjectedLoss::new(LossFn::ZeroOne, &multi, 0.0).unwrap().is_none());
    }
}
