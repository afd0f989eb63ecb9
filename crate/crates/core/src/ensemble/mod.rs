//! Strategies that combine per-task feature spaces into one encoder input.
//!
//! * [`average_embeddings`]: dimension-wise mean of all task matrices.
//! * [`weighted_average`] with [`power_weights`]: convex combination whose
//!   weights grow as the `p`-th power of each task's validation accuracy.
//! * [`fit_dynamic_weights`]: simplex weights learned by Adam against the
//!   MSE of a ridge encoder refitted every epoch.
//! * [`stack_pca`] / [`stack_average`]: inputs for a second-stage ridge
//!   meta-learner.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::AsMatrix;
use crate::error::{Error, Result};

mod dynamic;
mod stacking;

pub use dynamic::{
    dynamic_losses, fit_dynamic_weights, inner_split, DynamicLosses, DynamicWeightConfig,
    DynamicWeightFit,
};
pub use stacking::{stack_average, stack_pca, stack_pca_with, StackedPca};

/// Tolerance on `sum(w) = 1` for normalized weights.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// Nonnegative per-task weights, in manifest task order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    weights: Vec<f64>,
    normalized: bool,
}

impl WeightVector {
    /// Weights that must already sum to one.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        check_nonnegative(&weights)?;
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::UnnormalizedWeights(sum));
        }
        Ok(Self {
            weights,
            normalized: true,
        })
    }

    /// Rescales nonnegative weights to sum to one.
    pub fn from_unnormalized(weights: Vec<f64>) -> Result<Self> {
        check_nonnegative(&weights)?;
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::Domain(format!("weights sum to {sum}")));
        }
        Ok(Self {
            weights: weights.into_iter().map(|w| w / sum).collect(),
            normalized: true,
        })
    }

    /// Nonnegative weights without a normalization constraint.
    pub fn raw(weights: Vec<f64>) -> Result<Self> {
        check_nonnegative(&weights)?;
        Ok(Self {
            weights,
            normalized: false,
        })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
            normalized: true,
        }
    }

    pub fn one_hot(n: usize, index: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[index] = 1.0;
        Self {
            weights,
            normalized: true,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.weights
    }
}

fn check_nonnegative(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::EmptyList);
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(Error::Domain(format!(
            "weight {w} is not a finite nonnegative number"
        )));
    }
    Ok(())
}

/// Which metric produced the per-task accuracies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccuracyMetric {
    #[default]
    TwoVTwo,
    Pearson,
}

/// Per-(subject, ROI) validation accuracies of each task, in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskAccuracyTable {
    pub metric: AccuracyMetric,
    entries: BTreeMap<(String, String), Vec<f64>>,
}

impl TaskAccuracyTable {
    pub fn new(metric: AccuracyMetric) -> Self {
        Self {
            metric,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, subject: &str, roi: &str, scores: Vec<f64>) -> Result<()> {
        if let Some(x) = scores.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::Domain(format!("task accuracy {x} outside [0, 1]")));
        }
        self.entries
            .insert((subject.to_string(), roi.to_string()), scores);
        Ok(())
    }

    pub fn get(&self, subject: &str, roi: &str) -> Option<&[f64]> {
        self.entries
            .get(&(subject.to_string(), roi.to_string()))
            .map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Replaces every entry with `value` for all tasks.
    pub fn with_uniform_scores(&self, value: f64) -> Result<Self> {
        let mut out = Self::new(self.metric);
        for ((s, r), scores) in &self.entries {
            out.insert(s, r, vec![value; scores.len()])?;
        }
        Ok(out)
    }
}

fn check_shapes<M: AsMatrix>(tasks: &[M]) -> Result<(usize, usize)> {
    let first = tasks.first().ok_or(Error::EmptyList)?.as_matrix().shape();
    for (i, t) in tasks.iter().enumerate() {
        if t.as_matrix().shape() != first {
            return Err(Error::ShapeMismatch(format!(
                "task {i} is {:?}, expected {:?}",
                t.as_matrix().shape(),
                first
            )));
        }
    }
    Ok(first)
}

/// Dimension-wise mean `(1/n) * sum_i u_i`.
pub fn average_embeddings<M: AsMatrix>(tasks: &[M]) -> Result<DMatrix<f64>> {
    let (rows, cols) = check_shapes(tasks)?;
    let mut sum = DMatrix::zeros(rows, cols);
    for t in tasks {
        sum += t.as_matrix();
    }
    Ok(sum / tasks.len() as f64)
}

/// Convex combination `sum_i w_i u_i` with normalized weights.
pub fn weighted_average<M: AsMatrix>(tasks: &[M], w: &WeightVector) -> Result<DMatrix<f64>> {
    let sum: f64 = w.as_slice().iter().sum();
    if !w.is_normalized() || (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::UnnormalizedWeights(sum));
    }
    weighted_sum(tasks, w.as_slice(), 1.0)
}

/// `sum_i w_i u_i / n` for arbitrary nonnegative weights, the unnormalized
/// form used with [`literal_power_mean`].
pub fn literal_weighted_average<M: AsMatrix>(
    tasks: &[M],
    w: &WeightVector,
) -> Result<DMatrix<f64>> {
    weighted_sum(tasks, w.as_slice(), tasks.len() as f64)
}

fn weighted_sum<M: AsMatrix>(tasks: &[M], w: &[f64], divisor: f64) -> Result<DMatrix<f64>> {
    let (rows, cols) = check_shapes(tasks)?;
    if w.len() != tasks.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} tasks",
            w.len(),
            tasks.len()
        )));
    }
    let mut sum = DMatrix::zeros(rows, cols);
    for (t, &wi) in tasks.iter().zip(w) {
        sum += t.as_matrix() * wi;
    }
    if divisor != 1.0 {
        sum /= divisor;
    }
    Ok(sum)
}

fn check_power_inputs(x: &[f64], p: f64) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptyList);
    }
    if p == 0.0 || !p.is_finite() {
        return Err(Error::Domain(format!(
            "power p must be finite and nonzero, got {p}"
        )));
    }
    if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("accuracy {v} outside [0, 1]")));
    }
    if p < 0.0 && x.contains(&0.0) {
        return Err(Error::Domain("zero accuracy with a negative power".into()));
    }
    Ok(())
}

/// Normalized power weighting `w_i = x_i^p / sum_j x_j^p`.
pub fn power_weights(x: &[f64], p: f64) -> Result<WeightVector> {
    check_power_inputs(x, p)?;
    // scale by the entry with the largest x^p so nothing overflows
    let pivot = if p > 0.0 {
        x.iter().copied().fold(f64::MIN, f64::max)
    } else {
        x.iter().copied().fold(f64::MAX, f64::min)
    };
    if pivot == 0.0 {
        return Err(Error::Domain("all accuracies are zero".into()));
    }
    let raw: Vec<f64> = x.iter().map(|&xi| (xi / pivot).powf(p)).collect();
    WeightVector::from_unnormalized(raw)
}

/// The power mean `((1/n) sum_i x_i^p)^(1/p)` assigned to every task, with
/// no normalization. Every task receives the same weight.
pub fn literal_power_mean(x: &[f64], p: f64) -> Result<WeightVector> {
    check_power_inputs(x, p)?;
    let n = x.len() as f64;
    let mean = (x.iter().map(|xi| xi.powf(p)).sum::<f64>() / n).powf(1.0 / p);
    WeightVector::raw(vec![mean; x.len()])
}
