//! On-disk cache of fitted ridge and PCA models keyed by a SHA-256 of the
//! training inputs and hyperparameters.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pca::{fit_pca, PcaModel};
use crate::regression::{fit_ridge, RidgeModel};

#[derive(Debug, Clone)]
pub struct ModelCache {
    dir: PathBuf,
}

fn hash_matrix(hasher: &mut Sha256, m: &DMatrix<f64>) {
    hasher.update((m.nrows() as u64).to_le_bytes());
    hasher.update((m.ncols() as u64).to_le_bytes());
    for v in m.iter() {
        hasher.update(v.to_le_bytes());
    }
}

impl ModelCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn ridge(&self, x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<RidgeModel> {
        let mut h = Sha256::new();
        h.update(b"ridge-v1");
        hash_matrix(&mut h, x);
        hash_matrix(&mut h, y);
        h.update(lambda.to_le_bytes());
        let stem = format!("ridge-{}", hex::encode(h.finalize()));
        if self.dir.join(format!("{stem}.json")).exists() {
            if let Ok(model) = RidgeModel::load(&self.dir, &stem) {
                return Ok(model);
            }
            log::warn!("cache entry {stem} unreadable, refitting");
        }
        let model = fit_ridge(x, y, lambda)?;
        model.save(&self.dir, &stem)?;
        Ok(model)
    }

    pub fn pca(&self, x: &DMatrix<f64>, k: usize) -> Result<PcaModel> {
        let mut h = Sha256::new();
        h.update(b"pca-v1");
        hash_matrix(&mut h, x);
        h.update((k as u64).to_le_bytes());
        let stem = format!("pca-{}", hex::encode(h.finalize()));
        if self.dir.join(format!("{stem}.json")).exists() {
            if let Ok(model) = PcaModel::load(&self.dir, &stem) {
                return Ok(model);
            }
            log::warn!("cache entry {stem} unreadable, refitting");
        }
        let model = fit_pca(x, k)?;
        model.save(&self.dir, &stem)?;
        Ok(model)
    }
}

/// Fits directly or through the cache when one is configured.
pub(crate) fn ridge(
    cache: Option<&ModelCache>,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    lambda: f64,
) -> Result<RidgeModel> {
    match cache {
        Some(c) => c.ridge(x, y, lambda),
        None => fit_ridge(x, y, lambda),
    }
}

pub(crate) fn pca(cache: Option<&ModelCache>, x: &DMatrix<f64>, k: usize) -> Result<PcaModel> {
    match cache {
        Some(c) => c.pca(x, k),
        None => fit_pca(x, k),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cached_fit_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ModelCache::new(dir.path()).unwrap();
        let x = DMatrix::from_fn(12, 3, |r, c| ((r * 7 + c * 3) % 5) as f64 + 0.1 * r as f64);
        let y = DMatrix::from_fn(12, 2, |r, c| (r as f64).sin() + c as f64);
        let first = cache.ridge(&x, &y, 0.5).unwrap();
        let second = cache.ridge(&x, &y, 0.5).unwrap();
        assert_eq!(first.encode(), second.encode());
        assert_eq!(first.encode(), fit_ridge(&x, &y, 0.5).unwrap().encode());
        let entries = fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(entries, 3);

        let p1 = cache.pca(&x, 2).unwrap();
        assert_eq!(p1, cache.pca(&x, 2).unwrap());
    }
}
