//! Learned simplex weights for the weighted-average feature space.
//!
//! The weights are the softmax of free logits. Each epoch refits a ridge
//! encoder on `u_f(w) = sum_i w_i u_i` (closed form), then takes one Adam
//! step on the logits through the training MSE of that fixed encoder.
//! Early stopping watches the MSE on an inner validation fold carved out of
//! the rows passed in, which must already exclude any test rows.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{weighted_average, WeightVector};
use crate::data::{select_rows, AsMatrix};
use crate::error::{Error, Result};
use crate::regression::{fit_ridge, RidgeModel};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicWeightConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    /// Ridge strength of the encoder refitted every epoch.
    pub lambda: f64,
}

impl Default for DynamicWeightConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            max_epochs: 200,
            patience: 20,
            validation_fraction: 0.2,
            seed: 0,
            lambda: 1.0,
        }
    }
}

impl DynamicWeightConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config(
                "max_epochs and patience must be positive".into(),
            ));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 0.5) {
            return Err(Error::Config(format!(
                "validation_fraction {} must lie in (0, 0.5)",
                self.validation_fraction
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda {} must be positive",
                self.lambda
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicWeightFit {
    pub weights: WeightVector,
    /// False when the epoch limit was reached before validation loss plateaued.
    pub converged: bool,
    pub epochs: usize,
    pub validation_mse: f64,
    pub train_mse: f64,
}

/// Training and validation MSE at one weight vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicLosses {
    pub train_mse: f64,
    pub validation_mse: f64,
}

/// Seeded split of `0..n` into (fit, validation) rows; both sorted.
pub fn inner_split(
    n: usize,
    validation_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 3 {
        return Err(Error::TooFewSamples(format!(
            "an inner validation split needs at least 3 rows, got {n}"
        )));
    }
    let n_val = ((n as f64 * validation_fraction).round() as usize).clamp(1, n - 2);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut val = order[..n_val].to_vec();
    let mut fit = order[n_val..].to_vec();
    val.sort_unstable();
    fit.sort_unstable();
    Ok((fit, val))
}

struct Problem {
    fit_tasks: Vec<DMatrix<f64>>,
    val_tasks: Vec<DMatrix<f64>>,
    y_fit: DMatrix<f64>,
    y_val: DMatrix<f64>,
    lambda: f64,
}

impl Problem {
    fn new<M: AsMatrix>(tasks: &[M], y: &DMatrix<f64>, cfg: &DynamicWeightConfig) -> Result<Self> {
        cfg.validate()?;
        let shape = super::check_shapes(tasks)?;
        if shape.0 != y.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "task rows {} but response rows {}",
                shape.0,
                y.nrows()
            )));
        }
        let (fit, val) = inner_split(y.nrows(), cfg.validation_fraction, cfg.seed)?;
        Ok(Self {
            fit_tasks: tasks
                .iter()
                .map(|t| select_rows(t.as_matrix(), &fit))
                .collect(),
            val_tasks: tasks
                .iter()
                .map(|t| select_rows(t.as_matrix(), &val))
                .collect(),
            y_fit: select_rows(y, &fit),
            y_val: select_rows(y, &val),
            lambda: cfg.lambda,
        })
    }

    fn evaluate(&self, w: &WeightVector) -> Result<(RidgeModel, DMatrix<f64>, DynamicLosses)> {
        let combined = weighted_average(&self.fit_tasks, w)?;
        let model = fit_ridge(&combined, &self.y_fit, self.lambda)?;
        let residual = model.predict(&combined)? - &self.y_fit;
        let val_residual = model.predict(&weighted_average(&self.val_tasks, w)?)? - &self.y_val;
        let losses = DynamicLosses {
            train_mse: residual.norm_squared() / residual.len() as f64,
            validation_mse: val_residual.norm_squared() / val_residual.len() as f64,
        };
        Ok((model, residual, losses))
    }

    /// d(train MSE)/d(w_i) with the encoder held fixed.
    fn weight_gradient(&self, model: &RidgeModel, residual: &DMatrix<f64>) -> Vec<f64> {
        let scale = 2.0 / residual.len() as f64;
        let stds = &model.scaler().stds;
        self.fit_tasks
            .iter()
            .map(|u| {
                let mut scaled = u.clone();
                for (j, mut col) in scaled.column_iter_mut().enumerate() {
                    col /= stds[j];
                }
                let back = scaled.transpose() * residual;
                scale * back.dot(model.weights())
            })
            .collect()
    }
}

/// Training/validation losses of the dynamic-weight objective at `w`.
pub fn dynamic_losses<M: AsMatrix>(
    tasks: &[M],
    y: &DMatrix<f64>,
    w: &WeightVector,
    cfg: &DynamicWeightConfig,
) -> Result<DynamicLosses> {
    Problem::new(tasks, y, cfg)?.evaluate(w).map(|(_, _, l)| l)
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::MIN, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Learns simplex weights over the task feature spaces.
///
/// Starts from uniform weights and returns the best validation iterate whose
/// training loss does not exceed the uniform starting point.
pub fn fit_dynamic_weights<M: AsMatrix>(
    tasks: &[M],
    y: &DMatrix<f64>,
    cfg: &DynamicWeightConfig,
) -> Result<DynamicWeightFit> {
    let problem = Problem::new(tasks, y, cfg)?;
    let n = tasks.len();

    let uniform = WeightVector::uniform(n);
    let (_, _, start) = problem.evaluate(&uniform)?;
    let mut best = DynamicWeightFit {
        weights: uniform,
        converged: true,
        epochs: 0,
        validation_mse: start.validation_mse,
        train_mse: start.train_mse,
    };
    if n == 1 {
        best.weights = WeightVector::one_hot(1, 0);
        return Ok(best);
    }

    let mut logits = vec![0.0; n];
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut stale = 0;
    let mut converged = false;
    let mut epochs = 0;

    for epoch in 1..=cfg.max_epochs {
        epochs = epoch;
        let w = softmax(&logits);
        let weights = WeightVector::from_unnormalized(w.clone())?;
        let (model, residual, losses) = problem.evaluate(&weights)?;

        if losses.validation_mse < best.validation_mse && losses.train_mse <= start.train_mse {
            best.weights = weights;
            best.validation_mse = losses.validation_mse;
            best.train_mse = losses.train_mse;
            stale = 0;
        } else if epoch > 1 {
            stale += 1;
            if stale >= cfg.patience {
                converged = true;
                break;
            }
        }

        let grad_w = problem.weight_gradient(&model, &residual);
        let mean: f64 = grad_w.iter().zip(&w).map(|(g, wi)| g * wi).sum();
        let t = epoch as i32;
        for j in 0..n {
            let g = w[j] * (grad_w[j] - mean);
            m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g;
            v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = m[j] / (1.0 - ADAM_BETA1.powi(t));
            let v_hat = v[j] / (1.0 - ADAM_BETA2.powi(t));
            logits[j] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    if !converged {
        log::debug!("dynamic weights hit the {} epoch limit", cfg.max_epochs);
    }
    best.converged = converged;
    best.epochs = epochs;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn single_task_gets_full_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random(30, 4, &mut rng);
        let y = random(30, 3, &mut rng);
        let fit = fit_dynamic_weights(&[u], &y, &DynamicWeightConfig::default()).unwrap();
        assert_eq!(fit.weights.as_slice(), &[1.0]);
    }

    #[test]
    fn identical_tasks_stay_on_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random(40, 5, &mut rng);
        let y = random(40, 3, &mut rng);
        let fit =
            fit_dynamic_weights(&[u.clone(), u], &y, &DynamicWeightConfig::default()).unwrap();
        let sum: f64 = fit.weights.as_slice().iter().sum();
        assert!((sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tasks: Vec<_> = (0..3).map(|_| random(25, 4, &mut rng)).collect();
        let y = random(25, 2, &mut rng);
        let cfg = DynamicWeightConfig::default();
        let problem = Problem::new(&tasks, &y, &cfg).unwrap();
        let w = WeightVector::normalized(vec![0.5, 0.3, 0.2]).unwrap();
        let combined = weighted_average(&problem.fit_tasks, &w).unwrap();
        let model = fit_ridge(&combined, &problem.y_fit, cfg.lambda).unwrap();
        let residual = model.predict(&combined).unwrap() - &problem.y_fit;
        let grad = problem.weight_gradient(&model, &residual);

        // loss with the encoder (weights, bias, scaler) frozen
        let loss = |wv: &[f64]| {
            let mut c = DMatrix::zeros(combined.nrows(), combined.ncols());
            for (t, wi) in problem.fit_tasks.iter().zip(wv) {
                c += t * *wi;
            }
            let r = model.predict(&c).unwrap() - &problem.y_fit;
            r.norm_squared() / r.len() as f64
        };
        let h = 1e-6;
        for i in 0..3 {
            let mut up = w.as_slice().to_vec();
            let mut down = up.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (loss(&up) - loss(&down)) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() < 1e-6 * (1.0 + fd.abs()),
                "{fd} vs {}",
                grad[i]
            );
        }
    }

    #[test]
    fn config_validation() {
        let bad = DynamicWeightConfig {
            validation_fraction: 0.5,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn inner_split_partitions() {
        let (fit, val) = inner_split(50, 0.2, 9).unwrap();
        assert_eq!(val.len(), 10);
        let mut all: Vec<usize> = fit.iter().chain(&val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
    }
}
