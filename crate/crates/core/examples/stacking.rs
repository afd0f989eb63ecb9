//! Stack per-task PCA reductions and feed them to a ridge meta-learner.

use brain_ensemble::data::{make_split, select_rows};
use brain_ensemble::ensemble::stack_pca;
use brain_ensemble::metrics::pearson_metric;
use brain_ensemble::regression::{default_lambda_grid, fit_ridge, select_lambda};
use brain_ensemble::synthetic::{generate, SyntheticConfig};

fn main() -> brain_ensemble::Result<()> {
    let data = generate(&SyntheticConfig::default())?;
    let tasks: Vec<_> = data.tasks.iter().map(|t| t.data().clone()).collect();
    let y = data.responses[0].data();
    let split = make_split(y.nrows(), 1)?;

    for k in [2, 8, 16, 32] {
        let stacked = stack_pca(&tasks, k, &split)?;
        let x_train = select_rows(&stacked.features, &split.train_indices);
        let y_train = select_rows(y, &split.train_indices);
        let lambda = select_lambda(&x_train, &y_train, &default_lambda_grid(), 4)?;
        let model = fit_ridge(&x_train, &y_train, lambda)?;
        let pred = model.predict(&select_rows(&stacked.features, &split.test_indices))?;
        let pc = pearson_metric(&select_rows(y, &split.test_indices), &pred)?;
        let kept: f64 = stacked.models[0].explained_variance().iter().sum();
        println!("k = {k:>2}: {} stacked dims, lambda {lambda}, test PC {pc:.4}, task-01 explained variance {kept:.2}",
            stacked.features.ncols());
    }
    Ok(())
}
