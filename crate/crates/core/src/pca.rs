//! Deterministic PCA via the SVD of the centered data matrix.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::npy;

/// Principal axes fitted on a set of rows.
///
/// `components` holds one unit-norm principal axis per row, ordered by
/// decreasing explained variance. Each axis is signed so that its
/// largest-magnitude entry is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: DVector<f64>,
    components: DMatrix<f64>,
    explained_variance: Vec<f64>,
    rank_deficient: bool,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    explained_variance: Vec<f64>,
    rank_deficient: bool,
}

impl PcaModel {
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    /// Per-component variance of the projected training rows (`1/(N-1)` normalization).
    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    /// True when `k` exceeded the numerical rank of the training data; the
    /// trailing components then carry (near-)zero variance.
    pub fn rank_deficient(&self) -> bool {
        self.rank_deficient
    }

    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn dim(&self) -> usize {
        self.components.ncols()
    }

    /// `(X - mean) * components^T`.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "PCA expects {} columns, got {}",
                self.dim(),
                x.ncols()
            )));
        }
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        Ok(centered * self.components.transpose())
    }

    /// Maps scores back to the input space.
    pub fn inverse_transform(&self, scores: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if scores.ncols() != self.n_components() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} score columns, got {}",
                self.n_components(),
                scores.ncols()
            )));
        }
        let mut out = scores * &self.components;
        for mut row in out.row_iter_mut() {
            row += self.mean.transpose();
        }
        Ok(out)
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        npy::write_tensor(
            &dir.join(format!("{stem}.components.npy")),
            &self.components,
        )?;
        npy::write_tensor(&dir.join(format!("{stem}.mean.npy")), &self.mean_row())?;
        let path = dir.join(format!("{stem}.json"));
        fs::write(&path, self.sidecar_json()).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let components = npy::read_tensor(&dir.join(format!("{stem}.components.npy")))?;
        let mean = npy::read_tensor(&dir.join(format!("{stem}.mean.npy")))?;
        let path = dir.join(format!("{stem}.json"));
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let sidecar: Sidecar = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if mean.nrows() != 1
            || mean.ncols() != components.ncols()
            || sidecar.explained_variance.len() != components.nrows()
        {
            return Err(Error::ShapeMismatch(format!(
                "inconsistent PCA files for {stem}"
            )));
        }
        Ok(Self {
            mean: mean.row(0).transpose(),
            components,
            explained_variance: sidecar.explained_variance,
            rank_deficient: sidecar.rank_deficient,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = npy::encode(&self.components);
        out.extend(npy::encode(&self.mean_row()));
        out.extend(self.sidecar_json().into_bytes());
        out
    }

    fn mean_row(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, self.mean.len(), self.mean.as_slice())
    }

    fn sidecar_json(&self) -> String {
        serde_json::to_string(&Sidecar {
            explained_variance: self.explained_variance.clone(),
            rank_deficient: self.rank_deficient,
        })
        .expect("sidecar serializes")
    }
}

/// Fits the top `k` principal axes of `x` (all rows are treated as training rows).
pub fn fit_pca(x: &DMatrix<f64>, k: usize) -> Result<PcaModel> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::TooFewSamples(format!(
            "PCA needs at least 2 rows, got {n}"
        )));
    }
    let max_k = (n - 1).min(d);
    if k == 0 || k > max_k {
        return Err(Error::InvalidComponents(format!(
            "k = {k} outside 1..={max_k} for a {n}x{d} matrix"
        )));
    }

    let mean = DVector::from_iterator(d, x.column_iter().map(|c| c.sum() / n as f64));
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }

    let svd = centered.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sv = &svd.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));

    let tol = sv.max() * (n.max(d) as f64) * f64::EPSILON;
    let rank = sv.iter().filter(|&&s| s > tol).count();
    let rank_deficient = k > rank;
    if rank_deficient {
        log::warn!(
            "PCA: k = {k} exceeds numerical rank {rank}; trailing components carry no variance"
        );
    }

    let mut components = DMatrix::zeros(k, d);
    let mut explained_variance = Vec::with_capacity(k);
    for (row, &idx) in order.iter().take(k).enumerate() {
        let mut axis = v_t.row(idx).into_owned();
        let pivot = axis
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (j, v)| {
                if v.abs() > best.1 {
                    (j, v.abs())
                } else {
                    best
                }
            })
            .0;
        if axis[pivot] < 0.0 {
            axis.neg_mut();
        }
        components.row_mut(row).copy_from(&axis);
        explained_variance.push(sv[idx] * sv[idx] / (n - 1) as f64);
    }

    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        rank_deficient,
    })
}
