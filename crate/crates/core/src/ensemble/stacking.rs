use nalgebra::DMatrix;

use super::average_embeddings;
use crate::data::{select_rows, AsMatrix, SplitSpec};
use crate::error::{Error, Result};
use crate::pca::{fit_pca, PcaModel};

/// Concatenated per-task PCA scores and the fitted reductions.
#[derive(Debug, Clone)]
pub struct StackedPca {
    /// `N x (n * k)`, task blocks in input order.
    pub features: DMatrix<f64>,
    pub models: Vec<PcaModel>,
}

/// Reduces each task to `k` principal components fitted on the training
/// rows only, then concatenates the scores of all rows.
pub fn stack_pca<M: AsMatrix>(tasks: &[M], k: usize, split: &SplitSpec) -> Result<StackedPca> {
    stack_pca_with(tasks, k, split, fit_pca)
}

/// [`stack_pca`] with a custom PCA fitter, e.g. a cached one.
pub fn stack_pca_with<M, F>(tasks: &[M], k: usize, split: &SplitSpec, fit: F) -> Result<StackedPca>
where
    M: AsMatrix,
    F: Fn(&DMatrix<f64>, usize) -> Result<PcaModel>,
{
    let (rows, _) = super::check_shapes(tasks)?;
    if split.n_samples() != rows {
        return Err(Error::ShapeMismatch(format!(
            "split covers {} rows, tasks have {rows}",
            split.n_samples()
        )));
    }
    let mut features = DMatrix::zeros(rows, tasks.len() * k);
    let mut models = Vec::with_capacity(tasks.len());
    for (i, task) in tasks.iter().enumerate() {
        let u = task.as_matrix();
        let model = fit(&select_rows(u, &split.train_indices), k)?;
        let scores = model.transform(u)?;
        features.columns_mut(i * k, k).copy_from(&scores);
        models.push(model);
    }
    Ok(StackedPca { features, models })
}

/// Same matrix as [`average_embeddings`]; the pipeline gives the encoder on
/// top of it its own regularization search as the stacking meta-learner.
pub fn stack_average<M: AsMatrix>(tasks: &[M]) -> Result<DMatrix<f64>> {
    average_embeddings(tasks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_split;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn block_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let tasks: Vec<DMatrix<f64>> = (0..2)
            .map(|_| DMatrix::from_fn(20, 10, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let split = make_split(20, 1).unwrap();
        let stacked = stack_pca(&tasks, 3, &split).unwrap();
        assert_eq!(stacked.features.shape(), (20, 6));
        let first = stacked.models[0].transform(&tasks[0]).unwrap();
        assert_eq!(stacked.features.columns(0, 3), first);
    }

    #[test]
    fn split_size_must_match() {
        let tasks = vec![DMatrix::from_element(10, 3, 1.0)];
        let split = make_split(12, 1).unwrap();
        assert!(matches!(
            stack_pca(&tasks, 1, &split),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
