//! Synthetic multi-task feature and voxel datasets with known ground truth.
//!
//! All randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(cfg.seed)`, a portable counter-based stream cipher
//! generator. Gaussian draws use the Box-Muller transform on its uniform
//! `f64` output, so fixtures are reproducible across platforms.
//!
//! Two generators are provided:
//!
//! * [`generate_shared_latent`]: a latent `Z` drives both the task features
//!   (`u_i = Z A_i + noise`, with `A_i` a shared mixing matrix plus a per-task
//!   perturbation) and the voxels (`Y = Z B + noise`).
//! * [`generate_planted_weights`]: independent Gaussian task features and
//!   `Y = (sum_i w*_i u_i) B + noise` for a planted simplex vector `w*`.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingMatrix, ResponseEntry, SplitSource, TaskEntry, VoxelMatrix};
use crate::error::{Error, Result};
use crate::npy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_samples: usize,
    pub dim: usize,
    pub n_tasks: usize,
    pub n_voxels: usize,
    pub latent_dim: usize,
    pub task_noise_sigma: f64,
    pub voxel_noise_sigma: f64,
    /// Scale of each task's deviation from the shared mixing matrix.
    pub task_spread: f64,
    pub planted_weights: Option<Vec<f64>>,
    pub subjects: usize,
    pub rois: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_samples: 200,
            dim: 96,
            n_tasks: 5,
            n_voxels: 300,
            latent_dim: 16,
            task_noise_sigma: 1.0,
            voxel_noise_sigma: 1.0,
            task_spread: 0.5,
            planted_weights: None,
            subjects: 1,
            rois: 1,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_samples < 5 || self.dim == 0 || self.n_tasks == 0 || self.n_voxels < 2 {
            return bad(format!(
                "need n_samples >= 5, dim >= 1, n_tasks >= 1, n_voxels >= 2 (got {}, {}, {}, {})",
                self.n_samples, self.dim, self.n_tasks, self.n_voxels
            ));
        }
        if self.latent_dim == 0 || self.latent_dim > self.dim {
            return bad(format!(
                "latent_dim {} must lie in 1..={}",
                self.latent_dim, self.dim
            ));
        }
        for (name, v) in [
            ("task_noise_sigma", self.task_noise_sigma),
            ("voxel_noise_sigma", self.voxel_noise_sigma),
            ("task_spread", self.task_spread),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if self.subjects == 0 || self.rois == 0 {
            return bad("subjects and rois must be positive".into());
        }
        if let Some(w) = &self.planted_weights {
            if w.len() != self.n_tasks {
                return bad(format!(
                    "{} planted weights for {} tasks",
                    w.len(),
                    self.n_tasks
                ));
            }
            let sum: f64 = w.iter().sum();
            if w.iter().any(|x| x.is_nan() || *x < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return bad("planted weights must lie on the simplex".into());
            }
        }
        Ok(())
    }

    pub fn task_ids(&self) -> Vec<String> {
        (1..=self.n_tasks).map(|i| format!("task-{i:02}")).collect()
    }

    pub fn subject_ids(&self) -> Vec<String> {
        (1..=self.subjects).map(|i| format!("sub-{i:02}")).collect()
    }

    pub fn roi_ids(&self) -> Vec<String> {
        (1..=self.rois).map(|i| format!("roi-{i:02}")).collect()
    }
}

/// What the generator planted.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `N x latent_dim` for the shared-latent generator; the planted
    /// combination `sum_i w*_i u_i` for the planted-weight generator.
    pub latent: DMatrix<f64>,
    /// One linear voxel map per response, in response order.
    pub voxel_maps: Vec<DMatrix<f64>>,
    pub planted_weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub tasks: Vec<EmbeddingMatrix>,
    /// One response per (subject, roi), subjects outermost.
    pub responses: Vec<VoxelMatrix>,
    pub truth: GroundTruth,
}

/// Standard normal draws via Box-Muller on a ChaCha8 stream.
pub struct GaussianStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - U lies in (0, 1], keeping ln finite
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        self.spare = Some(radius * s);
        radius * c
    }

    /// Matrix filled row by row with `scale * N(0, 1)`.
    pub fn matrix(&mut self, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
        let values: Vec<f64> = (0..rows * cols).map(|_| scale * self.sample()).collect();
        DMatrix::from_row_slice(rows, cols, &values)
    }
}

fn responses(
    cfg: &SyntheticConfig,
    signal: &DMatrix<f64>,
    g: &mut GaussianStream,
) -> Result<(Vec<VoxelMatrix>, Vec<DMatrix<f64>>)> {
    let map_scale = 1.0 / (signal.ncols() as f64).sqrt();
    let mut out = Vec::new();
    let mut maps = Vec::new();
    for subject in cfg.subject_ids() {
        for roi in cfg.roi_ids() {
            let map = g.matrix(signal.ncols(), cfg.n_voxels, map_scale);
            let y = signal * &map + g.matrix(cfg.n_samples, cfg.n_voxels, cfg.voxel_noise_sigma);
            out.push(VoxelMatrix::new(subject.clone(), roi, y)?);
            maps.push(map);
        }
    }
    Ok((out, maps))
}

/// Task features and voxels driven by a shared latent factor.
pub fn generate_shared_latent(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let mut g = GaussianStream::new(cfg.seed);
    let l = cfg.latent_dim;
    let mix_scale = 1.0 / (l as f64).sqrt();

    let latent = g.matrix(cfg.n_samples, l, 1.0);
    let shared = g.matrix(l, cfg.dim, mix_scale);
    let tasks = cfg
        .task_ids()
        .into_iter()
        .map(|id| {
            let mixing = &shared + g.matrix(l, cfg.dim, cfg.task_spread * mix_scale);
            let u = &latent * mixing + g.matrix(cfg.n_samples, cfg.dim, cfg.task_noise_sigma);
            EmbeddingMatrix::new(id, u)
        })
        .collect::<Result<Vec<_>>>()?;
    let (responses, voxel_maps) = responses(cfg, &latent, &mut g)?;
    Ok(SyntheticDataset {
        tasks,
        responses,
        truth: GroundTruth {
            latent,
            voxel_maps,
            planted_weights: None,
        },
    })
}

/// Independent task features with voxels generated from a planted convex
/// combination of them.
pub fn generate_planted_weights(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let planted = cfg
        .planted_weights
        .clone()
        .ok_or_else(|| Error::Config("planted_weights missing".into()))?;
    let mut g = GaussianStream::new(cfg.seed);
    let raw: Vec<DMatrix<f64>> = (0..cfg.n_tasks)
        .map(|_| g.matrix(cfg.n_samples, cfg.dim, 1.0))
        .collect();
    let mut combined = DMatrix::zeros(cfg.n_samples, cfg.dim);
    for (u, w) in raw.iter().zip(&planted) {
        combined += u * *w;
    }
    let (responses, voxel_maps) = responses(cfg, &combined, &mut g)?;
    let tasks = cfg
        .task_ids()
        .into_iter()
        .zip(raw)
        .map(|(id, u)| EmbeddingMatrix::new(id, u))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticDataset {
        tasks,
        responses,
        truth: GroundTruth {
            latent: combined,
            voxel_maps,
            planted_weights: Some(planted),
        },
    })
}

/// Generates with whichever generator the config selects.
pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    if cfg.planted_weights.is_some() {
        generate_planted_weights(cfg)
    } else {
        generate_shared_latent(cfg)
    }
}

/// Writes tensors and a manifest under `dir`; returns the manifest path.
///
/// Consecutive groups of four sentences share a passage id so the fixture
/// also works with passage-grouped splits.
pub fn write_fixture(dir: &Path, data: &SyntheticDataset, split_seed: u64) -> Result<PathBuf> {
    for sub in ["features", "responses"] {
        let path = dir.join(sub);
        fs::create_dir_all(&path).map_err(|e| Error::io(&path, e))?;
    }
    let mut tasks = Vec::new();
    for t in &data.tasks {
        let rel = PathBuf::from("features").join(format!("{}.npy", t.task_id()));
        npy::write_tensor(&dir.join(&rel), t.data())?;
        tasks.push(TaskEntry {
            id: t.task_id().to_string(),
            path: rel,
        });
    }
    let mut responses = Vec::new();
    for r in &data.responses {
        let rel = PathBuf::from("responses").join(format!("{}_{}.npy", r.subject_id(), r.roi_id()));
        npy::write_tensor(&dir.join(&rel), r.data())?;
        responses.push(ResponseEntry {
            subject: r.subject_id().to_string(),
            roi: r.roi_id().to_string(),
            path: rel,
            voxels: Some(r.n_voxels()),
        });
    }
    let first = data.tasks.first().ok_or(Error::EmptyList)?;
    let n = first.n_samples();
    let manifest = crate::data::DatasetManifest {
        stimulus_count: n,
        dim: first.dim(),
        tasks,
        responses,
        split: SplitSource::Seeded {
            seed: split_seed,
            ratio: "4:1".into(),
        },
        passage_ids: Some((0..n as i64).map(|i| i / 4).collect()),
        base_dir: dir.to_path_buf(),
    };
    let path = dir.join("manifest.json");
    fs::write(&path, manifest.to_json()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
