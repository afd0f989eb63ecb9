//! In-memory data model, the JSON manifest, and train/test splits.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::npy;

/// Anything that exposes a dense `f64` matrix.
pub trait AsMatrix {
    fn as_matrix(&self) -> &DMatrix<f64>;
}

impl AsMatrix for DMatrix<f64> {
    fn as_matrix(&self) -> &DMatrix<f64> {
        self
    }
}

impl<T: AsMatrix + ?Sized> AsMatrix for &T {
    fn as_matrix(&self) -> &DMatrix<f64> {
        (**self).as_matrix()
    }
}

impl AsMatrix for EmbeddingMatrix {
    fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }
}

impl AsMatrix for VoxelMatrix {
    fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }
}

/// One task model's stimulus representations, `samples x dims`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    task_id: String,
    data: DMatrix<f64>,
}

impl EmbeddingMatrix {
    pub fn new(task_id: impl Into<String>, data: DMatrix<f64>) -> Result<Self> {
        check_matrix(&data)?;
        Ok(Self {
            task_id: task_id.into(),
            data,
        })
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }
}

/// Measured responses for one (subject, ROI), `samples x voxels`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelMatrix {
    subject_id: String,
    roi_id: String,
    data: DMatrix<f64>,
}

impl VoxelMatrix {
    pub fn new(
        subject_id: impl Into<String>,
        roi_id: impl Into<String>,
        data: DMatrix<f64>,
    ) -> Result<Self> {
        check_matrix(&data)?;
        Ok(Self {
            subject_id: subject_id.into(),
            roi_id: roi_id.into(),
            data,
        })
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn roi_id(&self) -> &str {
        &self.roi_id
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_voxels(&self) -> usize {
        self.data.ncols()
    }
}

fn check_matrix(data: &DMatrix<f64>) -> Result<()> {
    if data.nrows() == 0 || data.ncols() == 0 {
        return Err(Error::ShapeMismatch(format!(
            "matrix has an empty axis ({}, {})",
            data.nrows(),
            data.ncols()
        )));
    }
    // nalgebra storage is column-major
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue {
            row: pos % data.nrows(),
            col: pos / data.nrows(),
        });
    }
    Ok(())
}

/// Loads a 2-D tensor file. Shorthand for [`npy::read_tensor`].
pub fn load_tensor(path: &Path) -> Result<DMatrix<f64>> {
    npy::read_tensor(path)
}

pub fn write_tensor(path: &Path, matrix: &DMatrix<f64>) -> Result<()> {
    npy::write_tensor(path, matrix)
}

/// Copies the given rows, in order, into a new matrix.
pub fn select_rows(matrix: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), matrix.ncols(), |r, c| matrix[(rows[r], c)])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn n_samples(&self) -> usize {
        self.train_indices.len() + self.test_indices.len()
    }

    /// Checks that train and test partition `0..n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train_indices.iter().chain(&self.test_indices) {
            if i >= n {
                return Err(Error::Parse(format!("split index {i} out of range 0..{n}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Parse(format!("split index {i} appears twice")));
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Parse(format!(
                "split does not cover index {missing}"
            )));
        }
        if self.train_indices.is_empty() || self.test_indices.is_empty() {
            return Err(Error::Parse("split has an empty side".into()));
        }
        Ok(())
    }
}

/// Number of held-out rows for the 4:1 split.
pub fn test_size(n_samples: usize) -> usize {
    // n/5 never has a .5 fractional part, so this is round-to-nearest
    (n_samples + 2) / 5
}

/// Seeded random sentence-level 4:1 split.
pub fn make_split(n_samples: usize, seed: u64) -> Result<SplitSpec> {
    if n_samples < 5 {
        return Err(Error::TooFewSamples(format!(
            "a 4:1 split needs at least 5 samples, got {n_samples}"
        )));
    }
    let mut order: Vec<usize> = (0..n_samples).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = test_size(n_samples);
    let mut test_indices = order[..n_test].to_vec();
    let mut train_indices = order[n_test..].to_vec();
    test_indices.sort_unstable();
    train_indices.sort_unstable();
    Ok(SplitSpec {
        train_indices,
        test_indices,
        seed,
    })
}

/// 4:1 split that keeps every passage entirely on one side.
///
/// Passages are shuffled and assigned to the test side until it holds at
/// least `round(n/5)` rows, so the test size can overshoot by up to one
/// passage.
pub fn make_passage_split(passage_ids: &[i64], seed: u64) -> Result<SplitSpec> {
    let n = passage_ids.len();
    if n < 5 {
        return Err(Error::TooFewSamples(format!(
            "a 4:1 split needs at least 5 samples, got {n}"
        )));
    }
    let mut passages: Vec<i64> = Vec::new();
    let mut seen = HashSet::new();
    for &p in passage_ids {
        if seen.insert(p) {
            passages.push(p);
        }
    }
    if passages.len() < 2 {
        return Err(Error::TooFewSamples(
            "passage-grouped split needs at least two passages".into(),
        ));
    }
    passages.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let target = test_size(n);
    let mut test_passages = HashSet::new();
    let mut n_test = 0;
    for p in &passages[..passages.len() - 1] {
        if n_test >= target {
            break;
        }
        test_passages.insert(*p);
        n_test += passage_ids.iter().filter(|&&q| q == *p).count();
    }
    let (test_indices, train_indices): (Vec<usize>, Vec<usize>) =
        (0..n).partition(|&i| test_passages.contains(&passage_ids[i]));
    Ok(SplitSpec {
        train_indices,
        test_indices,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseEntry {
    pub subject: String,
    pub roi: String,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voxels: Option<usize>,
}

/// How the manifest asks for the train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitSource {
    Explicit {
        train: Vec<usize>,
        test: Vec<usize>,
        #[serde(default)]
        seed: u64,
    },
    Seeded {
        seed: u64,
        #[serde(default = "default_ratio")]
        ratio: String,
    },
}

fn default_ratio() -> String {
    "4:1".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    stimulus_count: usize,
    dim: usize,
    tasks: Vec<TaskEntry>,
    responses: Vec<ResponseEntry>,
    split: SplitSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    passage_ids: Option<Vec<i64>>,
}

/// A validated dataset manifest. Task order fixes the task index used
/// throughout the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub stimulus_count: usize,
    pub dim: usize,
    pub tasks: Vec<TaskEntry>,
    pub responses: Vec<ResponseEntry>,
    pub split: SplitSource,
    pub passage_ids: Option<Vec<i64>>,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Resolves the split, optionally grouping by passage.
    pub fn split_spec(
        &self,
        group_by_passage: bool,
        seed_override: Option<u64>,
    ) -> Result<SplitSpec> {
        match &self.split {
            SplitSource::Explicit { train, test, seed } => {
                if group_by_passage {
                    return Err(Error::Config(
                        "--group-by-passage conflicts with an explicit split".into(),
                    ));
                }
                let mut spec = SplitSpec {
                    train_indices: train.clone(),
                    test_indices: test.clone(),
                    seed: seed_override.unwrap_or(*seed),
                };
                spec.train_indices.sort_unstable();
                spec.test_indices.sort_unstable();
                spec.validate(self.stimulus_count)?;
                Ok(spec)
            }
            SplitSource::Seeded { seed, .. } => {
                let seed = seed_override.unwrap_or(*seed);
                if group_by_passage {
                    let ids = self.passage_ids.as_ref().ok_or_else(|| {
                        Error::Config("--group-by-passage needs passage_ids in the manifest".into())
                    })?;
                    make_passage_split(ids, seed)
                } else {
                    make_split(self.stimulus_count, seed)
                }
            }
        }
    }

    /// Loads every referenced tensor into memory.
    pub fn load_data(&self) -> Result<Dataset> {
        let tasks = self
            .tasks
            .iter()
            .map(|t| EmbeddingMatrix::new(t.id.clone(), load_tensor(&self.resolve(&t.path))?))
            .collect::<Result<Vec<_>>>()?;
        let responses = self
            .responses
            .iter()
            .map(|r| {
                VoxelMatrix::new(
                    r.subject.clone(),
                    r.roi.clone(),
                    load_tensor(&self.resolve(&r.path))?,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let dataset = Dataset { tasks, responses };
        dataset.check_alignment()?;
        Ok(dataset)
    }

    pub fn to_json(&self) -> String {
        let raw = RawManifest {
            stimulus_count: self.stimulus_count,
            dim: self.dim,
            tasks: self.tasks.clone(),
            responses: self.responses.clone(),
            split: self.split.clone(),
            passage_ids: self.passage_ids.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("manifest serializes")
    }
}

/// Parses and validates a manifest, checking every tensor header.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&text, base_dir)
}

pub fn parse_manifest(text: &str, base_dir: PathBuf) -> Result<DatasetManifest> {
    let raw: RawManifest =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("manifest: {e}")))?;
    if raw.stimulus_count == 0 || raw.dim == 0 {
        return Err(Error::Parse(
            "stimulus_count and dim must be positive".into(),
        ));
    }
    if raw.tasks.is_empty() {
        return Err(Error::Parse("manifest has no tasks".into()));
    }
    let mut ids = HashSet::new();
    for t in &raw.tasks {
        if !ids.insert(t.id.as_str()) {
            return Err(Error::Parse(format!("duplicate task id {}", t.id)));
        }
    }
    let mut keys = HashSet::new();
    for r in &raw.responses {
        if !keys.insert((r.subject.as_str(), r.roi.as_str())) {
            return Err(Error::Parse(format!(
                "duplicate response entry ({}, {})",
                r.subject, r.roi
            )));
        }
    }
    if let SplitSource::Seeded { ratio, .. } = &raw.split {
        if ratio != "4:1" {
            return Err(Error::Parse(format!("unsupported split ratio {ratio}")));
        }
    }
    if let Some(p) = &raw.passage_ids {
        if p.len() != raw.stimulus_count {
            return Err(Error::Parse(format!(
                "passage_ids has {} entries, expected {}",
                p.len(),
                raw.stimulus_count
            )));
        }
    }

    let manifest = DatasetManifest {
        stimulus_count: raw.stimulus_count,
        dim: raw.dim,
        tasks: raw.tasks,
        responses: raw.responses,
        split: raw.split,
        passage_ids: raw.passage_ids,
        base_dir,
    };

    if let SplitSource::Explicit { train, test, seed } = &manifest.split {
        SplitSpec {
            train_indices: train.clone(),
            test_indices: test.clone(),
            seed: *seed,
        }
        .validate(manifest.stimulus_count)?;
    }

    for t in &manifest.tasks {
        let h = npy::read_header(&manifest.resolve(&t.path))?;
        if (h.rows, h.cols) != (manifest.stimulus_count, manifest.dim) {
            return Err(Error::ShapeMismatch(format!(
                "task {} has shape ({}, {}), manifest declares ({}, {})",
                t.id, h.rows, h.cols, manifest.stimulus_count, manifest.dim
            )));
        }
    }
    for r in &manifest.responses {
        let h = npy::read_header(&manifest.resolve(&r.path))?;
        if h.rows != manifest.stimulus_count {
            return Err(Error::ShapeMismatch(format!(
                "response ({}, {}) has {} rows, manifest declares {}",
                r.subject, r.roi, h.rows, manifest.stimulus_count
            )));
        }
        if let Some(v) = r.voxels {
            if v != h.cols {
                return Err(Error::ShapeMismatch(format!(
                    "response ({}, {}) has {} voxels, manifest declares {v}",
                    r.subject, r.roi, h.cols
                )));
            }
        }
    }
    Ok(manifest)
}

/// All task features and voxel responses of one manifest.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub tasks: Vec<EmbeddingMatrix>,
    pub responses: Vec<VoxelMatrix>,
}

impl Dataset {
    pub fn n_samples(&self) -> usize {
        self.tasks.first().map_or(0, EmbeddingMatrix::n_samples)
    }

    pub fn check_alignment(&self) -> Result<()> {
        let first = self.tasks.first().ok_or(Error::EmptyList)?;
        let (n, d) = (first.n_samples(), first.dim());
        for t in &self.tasks {
            if (t.n_samples(), t.dim()) != (n, d) {
                return Err(Error::ShapeMismatch(format!(
                    "task {} is {}x{}, expected {n}x{d}",
                    t.task_id(),
                    t.n_samples(),
                    t.dim()
                )));
            }
        }
        for r in &self.responses {
            if r.n_samples() != n {
                return Err(Error::ShapeMismatch(format!(
                    "response ({}, {}) has {} rows, expected {n}",
                    r.subject_id(),
                    r.roi_id(),
                    r.n_samples()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_for_pereira_count() {
        let s = make_split(627, 7).unwrap();
        assert_eq!((s.train_indices.len(), s.test_indices.len()), (502, 125));
        s.validate(627).unwrap();
    }

    #[test]
    fn minimal_split() {
        let s = make_split(5, 3).unwrap();
        assert_eq!((s.train_indices.len(), s.test_indices.len()), (4, 1));
    }

    #[test]
    fn split_rejects_too_few() {
        assert!(matches!(make_split(4, 0), Err(Error::TooFewSamples(_))));
    }

    #[test]
    fn split_is_deterministic_and_seed_dependent() {
        assert_eq!(make_split(100, 11).unwrap(), make_split(100, 11).unwrap());
        assert_ne!(make_split(100, 11).unwrap(), make_split(100, 12).unwrap());
    }

    #[test]
    fn passage_split_keeps_passages_together() {
        let ids: Vec<i64> = (0..40).map(|i| i / 4).collect();
        let s = make_passage_split(&ids, 5).unwrap();
        s.validate(40).unwrap();
        let test: HashSet<i64> = s.test_indices.iter().map(|&i| ids[i]).collect();
        for &i in &s.train_indices {
            assert!(!test.contains(&ids[i]));
        }
        assert_eq!(s.test_indices.len(), 8);
    }

    #[test]
    fn split_validation_catches_overlap_and_gaps() {
        let overlap = SplitSpec {
            train_indices: vec![0, 1, 2],
            test_indices: vec![2, 3],
            seed: 0,
        };
        assert!(overlap.validate(4).is_err());
        let gap = SplitSpec {
            train_indices: vec![0, 1],
            test_indices: vec![3],
            seed: 0,
        };
        assert!(gap.validate(4).is_err());
    }

    #[test]
    fn embedding_rejects_non_finite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, f64::INFINITY, 0.0, 0.0]);
        assert!(matches!(
            EmbeddingMatrix::new("t", m),
            Err(Error::NonFiniteValue { row: 0, col: 1 })
        ));
    }

    #[test]
    fn select_rows_preserves_order() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let s = select_rows(&m, &[2, 0]);
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[5.0, 6.0, 1.0, 2.0]));
    }
}
