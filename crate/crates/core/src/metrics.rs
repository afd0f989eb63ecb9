//! Encoding evaluation metrics: pairwise 2v2 accuracy and sample-wise
//! Pearson correlation between measured and predicted voxel patterns.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores of one (subject, ROI, method, hyperparameter) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub subject: String,
    pub roi: String,
    pub method: String,
    /// Power used for weighted-average weights, if any.
    #[serde(default)]
    pub p: Option<f64>,
    pub pearson: f64,
    pub two_v_two: f64,
    pub lambda: f64,
    pub n_test: usize,
    pub v_voxels: usize,
    /// Task weights used to build the feature space, in manifest task order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// For learned weights: whether validation loss plateaued before the epoch limit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
}

/// `1 - a.b / (|a| |b|)`, in `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm("cosine distance of a zero vector".into()));
    }
    Ok(distance_with_norms(a, b, na, nb))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn distance_with_norms(a: &[f64], b: &[f64], na: f64, nb: f64) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn check_same_shape(y: &DMatrix<f64>, yhat: &DMatrix<f64>) -> Result<()> {
    if y.shape() != yhat.shape() {
        return Err(Error::ShapeMismatch(format!(
            "Y is {:?} but Yhat is {:?}",
            y.shape(),
            yhat.shape()
        )));
    }
    Ok(())
}

/// Fraction of unordered sample pairs `(i, j)` for which the matched
/// cosine distances beat the mismatched ones:
/// `D(Yi, Ŷi) + D(Yj, Ŷj) < D(Yi, Ŷj) + D(Yj, Ŷi)`. Ties score zero.
pub fn two_v_two(y: &DMatrix<f64>, yhat: &DMatrix<f64>) -> Result<f64> {
    check_same_shape(y, yhat)?;
    let n = y.nrows();
    if n < 2 {
        return Err(Error::TooFewSamples(format!(
            "2v2 needs at least 2 samples, got {n}"
        )));
    }
    let truth = rows(y);
    let pred = rows(yhat);
    let truth_norms: Vec<f64> = truth.iter().map(|r| norm(r)).collect();
    let pred_norms: Vec<f64> = pred.iter().map(|r| norm(r)).collect();
    if let Some(i) = truth_norms.iter().position(|&v| v == 0.0) {
        return Err(Error::ZeroNorm(format!("row {i} of Y")));
    }
    if let Some(i) = pred_norms.iter().position(|&v| v == 0.0) {
        return Err(Error::ZeroNorm(format!("row {i} of Yhat")));
    }

    // dist[i][j] = D(Y_i, Ŷ_j)
    let dist: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| distance_with_norms(&truth[i], &pred[j], truth_norms[i], pred_norms[j]))
                .collect()
        })
        .collect();

    let mut hits: u64 = 0;
    for i in 0..n - 1 {
        for j in i + 1..n {
            if dist[i][i] + dist[j][j] < dist[i][j] + dist[j][i] {
                hits += 1;
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(hits as f64 / pairs)
}

/// Pearson correlation of two equal-length vectors, `None` when either has
/// zero variance.
pub fn correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Mean over samples of the correlation between the measured and predicted
/// voxel vectors. Rows where either vector is constant count as zero.
pub fn pearson_metric(y: &DMatrix<f64>, yhat: &DMatrix<f64>) -> Result<f64> {
    check_same_shape(y, yhat)?;
    if y.nrows() == 0 {
        return Err(Error::TooFewSamples("no samples".into()));
    }
    if y.ncols() < 2 {
        return Err(Error::ShapeMismatch(format!(
            "sample-wise correlation needs at least 2 voxels, got {}",
            y.ncols()
        )));
    }
    let truth = rows(y);
    let pred = rows(yhat);
    mean_correlation(truth.iter().zip(&pred), "rows")
}

/// Mean over voxels of the correlation across samples.
pub fn pearson_per_voxel(y: &DMatrix<f64>, yhat: &DMatrix<f64>) -> Result<f64> {
    check_same_shape(y, yhat)?;
    if y.nrows() < 2 {
        return Err(Error::TooFewSamples(format!(
            "voxel-wise correlation needs at least 2 samples, got {}",
            y.nrows()
        )));
    }
    let cols = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
        m.column_iter()
            .map(|c| c.iter().copied().collect())
            .collect()
    };
    let truth = cols(y);
    let pred = cols(yhat);
    mean_correlation(truth.iter().zip(&pred), "voxels")
}

fn mean_correlation<'a>(
    pairs: impl ExactSizeIterator<Item = (&'a Vec<f64>, &'a Vec<f64>)>,
    what: &str,
) -> Result<f64> {
    let count = pairs.len();
    let mut degenerate = 0;
    let total: f64 = pairs
        .map(|(a, b)| {
            correlation(a, b).unwrap_or_else(|| {
                degenerate += 1;
                0.0
            })
        })
        .sum();
    if degenerate > 0 {
        log::warn!("{degenerate} of {count} {what} have zero variance; counted as correlation 0");
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_distance_basics() {
        let v = [1.0, 2.0, -3.0];
        let neg = [-1.0, -2.0, 3.0];
        assert!(cosine_distance(&v, &v).unwrap().abs() < 1e-15);
        assert!((cosine_distance(&v, &neg).unwrap() - 2.0).abs() < 1e-15);
        assert!((cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            cosine_distance(&v, &[0.0; 3]),
            Err(Error::ZeroNorm(_))
        ));
    }

    #[test]
    fn two_v_two_perfect_and_swapped() {
        let y = DMatrix::from_row_slice(
            4,
            3,
            &[
                1.0, 0.2, 0.0, //
                0.0, 1.0, 0.3, //
                0.4, 0.0, 1.0, //
                1.0, 1.0, -1.0,
            ],
        );
        assert_eq!(two_v_two(&y, &y).unwrap(), 1.0);
    }

    #[test]
    fn two_v_two_tie_scores_zero() {
        // every prediction equals the same vector: matched and mismatched sums tie
        let y = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let yhat = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(two_v_two(&y, &yhat).unwrap(), 0.0);
    }

    #[test]
    fn two_v_two_errors() {
        let y = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(two_v_two(&y, &y), Err(Error::ZeroNorm(_))));
        let one = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(matches!(
            two_v_two(&one, &one),
            Err(Error::TooFewSamples(_))
        ));
        let other = DMatrix::from_element(2, 3, 1.0);
        assert!(matches!(
            two_v_two(&y, &other),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn pearson_negation() {
        let y = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 4.0, -1.0, 0.0, 3.0]);
        assert!((pearson_metric(&y, &(-&y)).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_constant_row_counts_zero() {
        let y = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 4.0, -1.0, 0.0, 3.0]);
        let mut yhat = y.clone();
        yhat.row_mut(1).fill(5.0);
        assert!((pearson_metric(&y, &yhat).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pearson_needs_two_voxels() {
        let y = DMatrix::from_element(3, 1, 1.0);
        assert!(matches!(
            pearson_metric(&y, &y),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn per_voxel_variant() {
        let y = DMatrix::from_row_slice(3, 2, &[1.0, 3.0, 2.0, 1.0, 3.0, 2.0]);
        let yhat = DMatrix::from_row_slice(3, 2, &[2.0, -3.0, 4.0, -1.0, 6.0, -2.0]);
        assert!((pearson_per_voxel(&y, &yhat).unwrap() - 0.0).abs() < 1e-12);
    }
}
