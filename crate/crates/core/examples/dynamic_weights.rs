//! Learn simplex task weights jointly with the encoder and compare them to
//! the weights that generated the data.

use brain_ensemble::ensemble::{
    dynamic_losses, fit_dynamic_weights, DynamicWeightConfig, WeightVector,
};
use brain_ensemble::synthetic::{generate, SyntheticConfig};

fn main() -> brain_ensemble::Result<()> {
    let planted = vec![0.7, 0.2, 0.1];
    let data = generate(&SyntheticConfig {
        n_tasks: 3,
        dim: 16,
        latent_dim: 16,
        n_voxels: 50,
        voxel_noise_sigma: 0.01,
        planted_weights: Some(planted.clone()),
        ..Default::default()
    })?;
    let tasks: Vec<_> = data.tasks.iter().map(|t| t.data().clone()).collect();
    let y = data.responses[0].data();

    let cfg = DynamicWeightConfig::default();
    let fit = fit_dynamic_weights(&tasks, y, &cfg)?;
    println!("planted {planted:?}");
    println!("learned {:?}", fit.weights.as_slice());
    println!(
        "epochs {}, early-stopped {}, train MSE {:.5}, validation MSE {:.5}",
        fit.epochs, fit.converged, fit.train_mse, fit.validation_mse
    );

    let uniform = dynamic_losses(&tasks, y, &WeightVector::uniform(3), &cfg)?;
    println!("uniform weights: train MSE {:.5}", uniform.train_mse);
    Ok(())
}
