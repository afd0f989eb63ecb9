//! Multi-output ridge regression on standardized features.
//!
//! Features are standardized with statistics from the training rows and
//! targets are column-centered; the bias restores the target means. All
//! voxels of one model share a single regularization strength.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::npy;

/// Lower clamp for feature standard deviations.
pub const STD_EPSILON: f64 = 1e-8;

/// `{1e-3, 1e-2, ..., 1e3}`.
pub fn default_lambda_grid() -> Vec<f64> {
    (-3..=3).map(|e| 10f64.powi(e)).collect()
}

pub const DEFAULT_CV_FOLDS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl StandardScaler {
    /// Column means and population standard deviations of `x`.
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let (means, stds) = x
            .column_iter()
            .map(|col| {
                let mean = col.sum() / n;
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                (mean, var.sqrt().max(STD_EPSILON))
            })
            .unzip();
        Self { means, stds }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} feature columns, got {}",
                self.dim(),
                x.ncols()
            )));
        }
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.means[j], self.stds[j]);
            col.apply(|v| *v = (*v - m) / s);
        }
        Ok(out)
    }
}

/// A fitted linear encoder `standardize(X) * W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    weights: DMatrix<f64>,
    bias: DVector<f64>,
    lambda: f64,
    scaler: StandardScaler,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    lambda: f64,
    scaler: StandardScaler,
}

impl RidgeModel {
    pub fn from_parts(
        weights: DMatrix<f64>,
        bias: DVector<f64>,
        lambda: f64,
        scaler: StandardScaler,
    ) -> Result<Self> {
        if weights.nrows() != scaler.dim() || weights.ncols() != bias.len() {
            return Err(Error::ShapeMismatch(format!(
                "weights {}x{}, scaler dim {}, bias len {}",
                weights.nrows(),
                weights.ncols(),
                scaler.dim(),
                bias.len()
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("ridge parameters must be finite".into()));
        }
        Ok(Self {
            weights,
            bias,
            lambda,
            scaler,
        })
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &DVector<f64> {
        &self.bias
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn scaler(&self) -> &StandardScaler {
        &self.scaler
    }

    pub fn n_inputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = self.scaler.transform(x)? * &self.weights;
        for mut row in out.row_iter_mut() {
            row += self.bias.transpose();
        }
        Ok(out)
    }

    /// Writes `<stem>.weights.npy`, `<stem>.bias.npy` (a `1 x V` tensor)
    /// and the `<stem>.json` sidecar holding lambda and scaler statistics.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        npy::write_tensor(&dir.join(format!("{stem}.weights.npy")), &self.weights)?;
        npy::write_tensor(&dir.join(format!("{stem}.bias.npy")), &self.bias_row())?;
        let path = dir.join(format!("{stem}.json"));
        fs::write(&path, self.sidecar_json()).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let weights = npy::read_tensor(&dir.join(format!("{stem}.weights.npy")))?;
        let bias = npy::read_tensor(&dir.join(format!("{stem}.bias.npy")))?;
        if bias.nrows() != 1 {
            return Err(Error::ShapeMismatch("bias tensor must have one row".into()));
        }
        let path = dir.join(format!("{stem}.json"));
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let sidecar: Sidecar = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_parts(
            weights,
            bias.row(0).transpose(),
            sidecar.lambda,
            sidecar.scaler,
        )
    }

    /// The exact bytes [`RidgeModel::save`] would write, concatenated.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = npy::encode(&self.weights);
        out.extend(npy::encode(&self.bias_row()));
        out.extend(self.sidecar_json().into_bytes());
        out
    }

    fn bias_row(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, self.bias.len(), self.bias.as_slice())
    }

    fn sidecar_json(&self) -> String {
        serde_json::to_string(&Sidecar {
            lambda: self.lambda,
            scaler: self.scaler.clone(),
        })
        .expect("sidecar serializes")
    }
}

/// Standardized normal equations for one training set, reusable across
/// regularization strengths.
struct NormalEquations {
    scaler: StandardScaler,
    y_means: DVector<f64>,
    xs: DMatrix<f64>,
    yc: DMatrix<f64>,
    gram: DMatrix<f64>,
    xty: DMatrix<f64>,
}

impl NormalEquations {
    fn new(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "X has {} rows but Y has {}",
                x.nrows(),
                y.nrows()
            )));
        }
        if x.nrows() < 2 {
            return Err(Error::TooFewSamples(format!(
                "ridge needs at least 2 training rows, got {}",
                x.nrows()
            )));
        }
        if x.ncols() == 0 || y.ncols() == 0 {
            return Err(Error::ShapeMismatch("empty feature or target axis".into()));
        }
        let scaler = StandardScaler::fit(x);
        let xs = scaler.transform(x)?;
        let n = y.nrows() as f64;
        let y_means = DVector::from_iterator(y.ncols(), y.column_iter().map(|c| c.sum() / n));
        let mut yc = y.clone();
        for (j, mut col) in yc.column_iter_mut().enumerate() {
            col.add_scalar_mut(-y_means[j]);
        }
        let xst = xs.transpose();
        let gram = &xst * &xs;
        let xty = &xst * &yc;
        Ok(Self {
            scaler,
            y_means,
            xs,
            yc,
            gram,
            xty,
        })
    }

    fn solve(&self, lambda: f64) -> Result<RidgeModel> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        let weights = if lambda > 0.0 {
            let mut a = self.gram.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += lambda;
            }
            let chol = a.cholesky().ok_or_else(|| {
                Error::SingularSystem(format!("X'X + {lambda} I is not positive definite"))
            })?;
            chol.solve(&self.xty)
        } else {
            // minimum-norm least squares; exact whenever the system is consistent
            let svd = self.xs.clone().svd(true, true);
            let tol = svd.singular_values.max()
                * (self.xs.nrows().max(self.xs.ncols()) as f64)
                * f64::EPSILON;
            svd.solve(&self.yc, tol)
                .map_err(|e| Error::SingularSystem(e.to_string()))?
        };
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem(format!(
                "non-finite ridge solution at lambda {lambda}"
            )));
        }
        RidgeModel::from_parts(weights, self.y_means.clone(), lambda, self.scaler.clone())
    }
}

/// Fits `min ||Yc - Xs W||^2 + lambda ||W||^2` on standardized `X`.
///
/// Positive `lambda` uses a Cholesky solve of the regularized normal
/// equations; `lambda = 0` falls back to the minimum-norm least-squares
/// solution via SVD.
pub fn fit_ridge(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<RidgeModel> {
    NormalEquations::new(x, y)?.solve(lambda)
}

/// `||(Xs'Xs + lambda I) W - Xs'Yc||_inf / (1 + ||Xs'Yc||_inf)` for a model
/// fitted on `(x, y)`.
pub fn normal_equation_residual(
    model: &RidgeModel,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> Result<f64> {
    let eq = NormalEquations::new(x, y)?;
    let mut lhs = &eq.gram * model.weights();
    lhs += model.weights() * model.lambda();
    let resid = (lhs - &eq.xty).abs().max();
    Ok(resid / (1.0 + eq.xty.abs().max()))
}

/// Contiguous fold boundaries `[start, end)` for `folds` folds of `n` rows.
pub fn fold_bounds(n: usize, folds: usize) -> Vec<(usize, usize)> {
    (0..folds)
        .map(|f| (f * n / folds, (f + 1) * n / folds))
        .collect()
}

/// Picks the grid value with the lowest mean held-out squared error over
/// `folds` contiguous folds. Ties go to the larger lambda.
pub fn select_lambda(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    grid: &[f64],
    folds: usize,
) -> Result<f64> {
    let scores = cv_scores(x, y, grid, folds)?;
    let mut best = (grid[0], scores[0]);
    for (&lambda, &score) in grid.iter().zip(&scores).skip(1) {
        if score < best.1 || (score == best.1 && lambda > best.0) {
            best = (lambda, score);
        }
    }
    Ok(best.0)
}

/// Mean held-out squared error for each grid value.
pub fn cv_scores(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    grid: &[f64],
    folds: usize,
) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::Config("lambda grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(Error::Config(format!(
            "lambda grid value {bad} is not a finite nonnegative number"
        )));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "X has {} rows but Y has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    let n = x.nrows();
    if folds < 2 || folds > n || n - n.div_ceil(folds) < 2 {
        return Err(Error::TooFewSamples(format!(
            "{folds}-fold cross-validation on {n} rows"
        )));
    }

    let mut totals = vec![0.0; grid.len()];
    for (start, end) in fold_bounds(n, folds) {
        let train: Vec<usize> = (0..start).chain(end..n).collect();
        let held: Vec<usize> = (start..end).collect();
        let eq = NormalEquations::new(
            &crate::data::select_rows(x, &train),
            &crate::data::select_rows(y, &train),
        )?;
        let x_held = crate::data::select_rows(x, &held);
        let y_held = crate::data::select_rows(y, &held);
        for (total, &lambda) in totals.iter_mut().zip(grid) {
            let pred = eq.solve(lambda)?.predict(&x_held)?;
            *total += (pred - &y_held).norm_squared();
        }
    }
    let denom = (n * y.ncols()) as f64;
    Ok(totals.into_iter().map(|t| t / denom).collect())
}
