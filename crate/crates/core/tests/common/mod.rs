//! Independent reference implementations. Everything here works on plain
//! `Vec<Vec<f64>>` with textbook loops so it shares no code with the crate.
#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rows = Vec<Vec<f64>>;

pub fn rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

pub fn matrix(rows: &Rows) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |r, c| rows[r][c])
}

/// Uniform entries with per-column scale and offset so standardization matters.
pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    let scales: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..5.0)).collect();
    let offsets: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
    DMatrix::from_fn(n, d, |_, c| {
        offsets[c] + scales[c] * rng.random_range(-1.0..1.0)
    })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &Rows, b: &Rows) -> Rows {
    let n = a.len();
    let m = b[0].len();
    let mut aug: Rows = a
        .iter()
        .zip(b)
        .map(|(ar, br)| ar.iter().chain(br).copied().collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))
            .unwrap();
        aug.swap(col, pivot);
        for row in col + 1..n {
            let f = aug[row][col] / aug[col][col];
            for k in col..n + m {
                aug[row][k] -= f * aug[col][k];
            }
        }
    }
    let mut x = vec![vec![0.0; m]; n];
    for row in (0..n).rev() {
        for j in 0..m {
            let mut s = aug[row][n + j];
            for k in row + 1..n {
                s -= aug[row][k] * x[k][j];
            }
            x[row][j] = s / aug[row][row];
        }
    }
    x
}

pub fn column_means(x: &Rows) -> Vec<f64> {
    let n = x.len() as f64;
    (0..x[0].len())
        .map(|c| x.iter().map(|r| r[c]).sum::<f64>() / n)
        .collect()
}

/// Ridge on z-scored features (population std) and centered targets.
/// Returns `(W, intercept)` in the standardized feature space.
pub fn ridge_oracle(x: &Rows, y: &Rows, lambda: f64) -> (Rows, Vec<f64>) {
    let n = x.len();
    let d = x[0].len();
    let mx = column_means(x);
    let sd: Vec<f64> = (0..d)
        .map(|c| {
            let v = x.iter().map(|r| (r[c] - mx[c]).powi(2)).sum::<f64>() / n as f64;
            v.sqrt().max(1e-8)
        })
        .collect();
    let xs: Rows = x
        .iter()
        .map(|r| (0..d).map(|c| (r[c] - mx[c]) / sd[c]).collect())
        .collect();
    let my = column_means(y);
    let yc: Rows = y
        .iter()
        .map(|r| r.iter().zip(&my).map(|(v, m)| v - m).collect())
        .collect();
    let mut gram = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            gram[i][j] = (0..n).map(|k| xs[k][i] * xs[k][j]).sum();
        }
        gram[i][i] += lambda;
    }
    let v = y[0].len();
    let xty: Rows = (0..d)
        .map(|i| {
            (0..v)
                .map(|j| (0..n).map(|k| xs[k][i] * yc[k][j]).sum())
                .collect()
        })
        .collect();
    (gauss_solve(&gram, &xty), my)
}

fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 - dot / (na * nb)
}

/// Double loop over unordered pairs, distances recomputed each time.
pub fn two_v_two_oracle(y: &Rows, yhat: &Rows) -> f64 {
    let n = y.len();
    let mut wins = 0usize;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            pairs += 1;
            let matched = cosine_distance(&y[i], &yhat[i]) + cosine_distance(&y[j], &yhat[j]);
            let crossed = cosine_distance(&y[i], &yhat[j]) + cosine_distance(&y[j], &yhat[i]);
            if matched < crossed {
                wins += 1;
            }
        }
    }
    wins as f64 / pairs as f64
}

/// Two-pass sample correlation.
pub fn pearson_oracle(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

pub fn rowwise_pearson_oracle(y: &Rows, yhat: &Rows) -> f64 {
    y.iter()
        .zip(yhat)
        .map(|(a, b)| pearson_oracle(a, b))
        .sum::<f64>()
        / y.len() as f64
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(a: &Rows) -> Vec<f64> {
    let n = a.len();
    let mut a = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    eig
}

/// Population covariance `Xc' Xc / N`.
pub fn covariance(x: &Rows) -> Rows {
    let n = x.len();
    let d = x[0].len();
    let m = column_means(x);
    let mut c = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            c[i][j] = (0..n)
                .map(|k| (x[k][i] - m[i]) * (x[k][j] - m[j]))
                .sum::<f64>()
                / n as f64;
        }
    }
    c
}

pub fn max_abs_diff(a: &Rows, b: &Rows) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &Rows) -> f64 {
    a.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max)
}
