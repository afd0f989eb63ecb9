//! 2v2 accuracy and Pearson correlation on a toy prediction.

use brain_ensemble::metrics::{pearson_metric, pearson_per_voxel, two_v_two};
use nalgebra::DMatrix;

fn main() -> brain_ensemble::Result<()> {
    let y = DMatrix::from_row_slice(
        4,
        3,
        &[
            1.0, 0.2, -0.5, -0.3, 1.1, 0.4, 0.6, -0.9, 1.2, -1.0, 0.1, 0.3,
        ],
    );
    let noise = DMatrix::from_fn(4, 3, |r, c| 0.3 * (((r * 3 + c) as f64) * 1.7).sin());
    let yhat = &y + noise;

    println!("2v2 (perfect)      {}", two_v_two(&y, &y)?);
    println!("2v2 (noisy)        {}", two_v_two(&y, &yhat)?);
    println!("PC over samples    {:.4}", pearson_metric(&y, &yhat)?);
    println!("PC over voxels     {:.4}", pearson_per_voxel(&y, &yhat)?);

    let mut swapped = yhat.clone();
    swapped.swap_rows(0, 1);
    println!("2v2 (rows 0, 1 swapped) {:.4}", two_v_two(&y, &swapped)?);
    Ok(())
}
