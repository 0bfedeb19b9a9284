//! Soft dice, binary cross-entropy, their weighted combination, and the
//! deep-supervision aggregation, each with an analytic gradient with
//! respect to the predicted probabilities.
//!
//! Predictions and targets are class-major `C x N` arrays of f64. Every
//! entry of the prediction is treated as an independent variable, which is
//! what the gradients (and the finite-difference checks) refer to.

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum_by;
use crate::volume::{LabelVolume, ProbabilityMap};

/// Log clamp: probabilities are clipped to `[DELTA, 1 - DELTA]` before `ln`.
pub const LOG_CLAMP: f64 = 1e-7;

/// Default dice smoothing.
pub const DEFAULT_EPSILON: f64 = 1.0;

/// Predictions `p`, one-hot targets `g` and smoothing `epsilon`.
#[derive(Debug, Clone)]
pub struct LossInput {
    predictions: Vec<f64>,
    targets: Vec<f64>,
    num_classes: usize,
    epsilon: f64,
}

impl LossInput {
    pub fn new(predictions: Vec<f64>, targets: Vec<f64>, num_classes: usize, epsilon: f64) -> Result<Self> {
        if num_classes == 0 || predictions.is_empty() {
            return Err(Error::Shape("loss input must hold at least one class and voxel".into()));
        }
        if predictions.len() != targets.len() || !predictions.len().is_multiple_of(num_classes) {
            return Err(Error::Shape(format!(
                "predictions hold {} values, targets {}, for {num_classes} classes",
                predictions.len(),
                targets.len()
            )));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::Parameter(format!("epsilon {epsilon} must be >= 0")));
        }
        if targets.iter().any(|&g| g != 0.0 && g != 1.0) {
            return Err(Error::Parameter("targets must be binary".into()));
        }
        let n = predictions.len() / num_classes;
        if num_classes > 1 {
            for i in 0..n {
                let ones = (0..num_classes).filter(|&c| targets[c * n + i] == 1.0).count();
                if ones != 1 {
                    return Err(Error::Parameter(format!(
                        "target at voxel {i} is not one-hot ({ones} active classes)"
                    )));
                }
            }
        }
        Ok(Self {
            predictions,
            targets,
            num_classes,
            epsilon,
        })
    }

    pub fn from_maps(pred: &ProbabilityMap, target: &LabelVolume, epsilon: f64) -> Result<Self> {
        if pred.dims() != target.dims() {
            return Err(Error::Shape(format!(
                "prediction dims {:?} != target dims {:?}",
                pred.dims(),
                target.dims()
            )));
        }
        Self::new(pred.to_f64(), target.one_hot(pred.num_classes()), pred.num_classes(), epsilon)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn voxels(&self) -> usize {
        self.predictions.len() / self.num_classes
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn predictions(&self) -> &[f64] {
        &self.predictions
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Copy with different predictions (same shape).
    pub fn with_predictions(&self, predictions: Vec<f64>) -> Result<Self> {
        if predictions.len() != self.predictions.len() {
            return Err(Error::Shape("prediction length changed".into()));
        }
        Ok(Self {
            predictions,
            ..self.clone()
        })
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.predictions.clone(), self.targets.clone(), self.num_classes, epsilon)
    }
}

/// A loss value and its gradient (class-major, same layout as predictions).
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub gradient: Vec<f64>,
}

/// `-(2/C) * sum_c (sum_i p g + eps) / (sum_i p + sum_i g + eps)`.
///
/// With `eps = 0` a class whose prediction and target are both empty counts
/// as perfectly predicted (ratio 1) and receives zero gradient.
pub fn dice_loss(input: &LossInput) -> LossOutput {
    let c_count = input.num_classes;
    let n = input.voxels();
    let p = &input.predictions;
    let g = &input.targets;
    let eps = input.epsilon;
    let scale = -2.0 / c_count as f64;

    let mut value_terms = Vec::with_capacity(c_count);
    let mut gradient = vec![0.0; p.len()];
    for c in 0..c_count {
        let off = c * n;
        let inter = pairwise_sum_by(n, &|i| p[off + i] * g[off + i]);
        let sum_p = pairwise_sum_by(n, &|i| p[off + i]);
        let sum_g = pairwise_sum_by(n, &|i| g[off + i]);
        let num = inter + eps;
        let den = sum_p + sum_g + eps;
        if den == 0.0 {
            value_terms.push(1.0);
            continue;
        }
        value_terms.push(num / den);
        let den2 = den * den;
        for i in 0..n {
            gradient[off + i] = scale * (g[off + i] * den - num) / den2;
        }
    }
    let value = scale * pairwise_sum_by(value_terms.len(), &|k| value_terms[k]);
    LossOutput { value, gradient }
}

/// Cross-entropy value in both normalisations.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossEntropy {
    /// Sum over classes and voxels, as written.
    pub raw: f64,
    /// `raw` divided by the voxel count; this is the loss value.
    pub mean: f64,
    /// Gradient of `mean`.
    pub gradient: Vec<f64>,
}

/// Binary cross-entropy applied per class and summed over classes and voxels:
/// `sum -g ln p - (1 - g) ln(1 - p)`, with `p` clamped to `[1e-7, 1 - 1e-7]`.
pub fn cross_entropy(input: &LossInput) -> CrossEntropy {
    let p = &input.predictions;
    let g = &input.targets;
    let n = input.voxels();
    let lo = LOG_CLAMP;
    let hi = 1.0 - LOG_CLAMP;
    let term = |j: usize| {
        let q = p[j].clamp(lo, hi);
        -g[j] * q.ln() - (1.0 - g[j]) * (1.0 - q).ln()
    };
    let raw = pairwise_sum_by(p.len(), &term);
    let inv_n = 1.0 / n as f64;
    let gradient = p
        .iter()
        .zip(g)
        .map(|(&pj, &gj)| {
            if pj < lo || pj > hi {
                0.0
            } else {
                (-gj / pj + (1.0 - gj) / (1.0 - pj)) * inv_n
            }
        })
        .collect();
    CrossEntropy {
        raw,
        mean: raw * inv_n,
        gradient,
    }
}

/// Voxel-mean cross-entropy as a loss output.
pub fn cross_entropy_loss(input: &LossInput) -> LossOutput {
    let ce = cross_entropy(input);
    LossOutput {
        value: ce.mean,
        gradient: ce.gradient,
    }
}

/// Weights of the two components of [`combined_loss`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub dice: f64,
    pub ce: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { dice: 1.0, ce: 1.0 }
    }
}

/// `w_dice * dice + w_ce * cross_entropy`.
pub fn combined_loss(input: &LossInput, weights: LossWeights) -> Result<LossOutput> {
    if !(weights.dice >= 0.0 && weights.ce >= 0.0) {
        return Err(Error::Parameter(format!("loss weights {weights:?} must be >= 0")));
    }
    let d = dice_loss(input);
    let ce = cross_entropy_loss(input);
    let mix = |a: f64, b: f64| {
        // keep exact projections when one weight is zero
        match (weights.dice == 0.0, weights.ce == 0.0) {
            (true, true) => 0.0,
            (false, true) => weights.dice * a,
            (true, false) => weights.ce * b,
            (false, false) => weights.dice * a + weights.ce * b,
        }
    };
    Ok(LossOutput {
        value: mix(d.value, ce.value),
        gradient: d
            .gradient
            .iter()
            .zip(&ce.gradient)
            .map(|(&a, &b)| mix(a, b))
            .collect(),
    })
}

/// Deep-supervision weighting: level `k` (0 = full resolution) gets weight
/// proportional to `2^-k`, normalised to sum 1. With `exclude_deepest` the
/// coarsest level is dropped (ignored for a single level).
pub fn deep_supervision_weights(num_levels: usize, exclude_deepest: bool) -> Result<Vec<f64>> {
    if num_levels == 0 {
        return Err(Error::Parameter("deep supervision needs at least one level".into()));
    }
    let mut w: Vec<f64> = (0..num_levels).map(|k| 0.5f64.powi(k as i32)).collect();
    if exclude_deepest && num_levels > 1 {
        w[num_levels - 1] = 0.0;
    }
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

pub fn deep_supervision_aggregate(losses_per_level: &[f64], num_levels: usize, exclude_deepest: bool) -> Result<f64> {
    if losses_per_level.len() != num_levels {
        return Err(Error::Shape(format!(
            "{} level losses for {num_levels} levels",
            losses_per_level.len()
        )));
    }
    let w = deep_supervision_weights(num_levels, exclude_deepest)?;
    Ok(w.iter().zip(losses_per_level).map(|(a, b)| a * b).sum())
}
