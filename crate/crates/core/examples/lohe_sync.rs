//! Two qubit-like Lohe oscillators under dissipative coupling drift into
//! phase-aligned states.

use mirrorwyner::nonstationary::{lohe_integrate, sync_order, LoheSystem};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn main() -> mirrorwyner::Result<()> {
    let h = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, -0.5), c(0.0, 0.5), c(-1.0, 0.0)]);
    let r = 0.5f64.sqrt();
    let sys = LoheSystem {
        states: vec![DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]), DVector::from_vec(vec![c(r, 0.0), c(0.0, r)])],
        hamiltonians: vec![h.clone(), h],
        hbar: 1.0,
        alpha: c(0.0, -1.0),
        beta: DMatrix::from_element(2, 2, 0.5),
    };
    let traj = lohe_integrate(&sys, 0.01, 600)?;
    for (k, snap) in traj.iter().enumerate().step_by(100) {
        println!("t = {:4.1}  sync_order = {:.6}", k as f64 * 0.01, sync_order(snap));
    }
    Ok(())
}
