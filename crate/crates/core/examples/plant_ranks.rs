//! Controllability, observability and closed-loop stability of a small
//! plant, then one noisy trajectory as CSV.

use mirrorwyner::plant::{plant_report, simulate, LinearPlant};
use nalgebra::{DMatrix, DVector};

fn main() -> mirrorwyner::Result<()> {
    let plant = LinearPlant::new(
        DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.0, 0.8]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DMatrix::from_row_slice(1, 1, &[-0.3]),
        DMatrix::identity(2, 2) * 0.01,
        DMatrix::identity(1, 1) * 0.01,
    )?;
    let r = plant_report(&plant)?;
    eprintln!(
        "controllable rank {} ({}), observable rank {} ({}), spectral radius {:.4}",
        r.controllability.rank, r.controllability.full, r.observability.rank, r.observability.full, r.spectral_radius
    );
    let t = simulate(&plant, &DVector::from_vec(vec![1.0, -1.0]), 20, 42)?;
    t.write_csv(std::io::stdout())
}
