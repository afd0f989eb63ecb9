//! Fit a ridge encoder with a cross-validated regularization strength and
//! score it on held-out rows.

use brain_ensemble::data::{make_split, select_rows};
use brain_ensemble::metrics::{pearson_metric, two_v_two};
use brain_ensemble::regression::{
    default_lambda_grid, fit_ridge, normal_equation_residual, select_lambda,
};
use brain_ensemble::synthetic::{generate, SyntheticConfig};

fn main() -> brain_ensemble::Result<()> {
    let data = generate(&SyntheticConfig {
        n_tasks: 1,
        ..Default::default()
    })?;
    let x = data.tasks[0].data();
    let y = data.responses[0].data();
    let split = make_split(x.nrows(), 0)?;

    let (x_train, y_train) = (
        select_rows(x, &split.train_indices),
        select_rows(y, &split.train_indices),
    );
    let lambda = select_lambda(&x_train, &y_train, &default_lambda_grid(), 4)?;
    let model = fit_ridge(&x_train, &y_train, lambda)?;
    println!("selected lambda {lambda}");
    println!(
        "normal-equation residual {:.2e}",
        normal_equation_residual(&model, &x_train, &y_train)?
    );

    let pred = model.predict(&select_rows(x, &split.test_indices))?;
    let y_test = select_rows(y, &split.test_indices);
    println!("test PC  {:.4}", pearson_metric(&y_test, &pred)?);
    println!("test 2v2 {:.4}", two_v_two(&y_test, &pred)?);

    let dir = std::env::temp_dir().join("brain-ensemble-ridge-example");
    std::fs::create_dir_all(&dir).map_err(|e| brain_ensemble::Error::Config(e.to_string()))?;
    model.save(&dir, "encoder")?;
    let back = brain_ensemble::regression::RidgeModel::load(&dir, "encoder")?;
    assert_eq!(back.encode(), model.encode());
    println!("saved and reloaded from {}", dir.display());
    Ok(())
}
