//! Read and write the NPY tensors the manifest points at.

use brain_ensemble::npy::{self, Dtype};
use nalgebra::DMatrix;

fn main() -> brain_ensemble::Result<()> {
    let dir = std::env::temp_dir().join("brain-ensemble-npy-example");
    std::fs::create_dir_all(&dir).map_err(|e| brain_ensemble::Error::Config(e.to_string()))?;
    let m = DMatrix::from_fn(3, 4, |r, c| r as f64 + c as f64 / 10.0);

    let f8 = dir.join("features.f8.npy");
    let f4 = dir.join("features.f4.npy");
    npy::write_tensor(&f8, &m)?;
    npy::write_tensor_as(&f4, &m, Dtype::F4)?;

    for path in [&f8, &f4] {
        let header = npy::read_header(path)?;
        let back = npy::read_tensor(path)?;
        println!(
            "{}: {:?} {} x {}, max round-trip error {:.1e}",
            path.display(),
            header.dtype,
            header.rows,
            header.cols,
            (&back - &m).abs().max()
        );
    }
    Ok(())
}
