//! Coupled HJB / Fokker-Planck fixed point on a 1-D grid. The field CSV
//! goes to stdout; convergence and drift diagnostics to stderr.

use mirrorwyner::nonstationary::mfg::InitialDensity;
use mirrorwyner::nonstationary::{kl_drift_profile, mfg_solve, KlEntry, MfgConfig};

fn main() -> mirrorwyner::Result<()> {
    let cfg = MfgConfig {
        x_min: -3.0,
        x_max: 3.0,
        n_x: 61,
        horizon: 1.0,
        n_t: 200,
        sigma: 0.3,
        mu: Some(vec![0.3; 200]),
        control_max: 1.0,
        control_levels: 11,
        reward_linear: 0.5,
        reward_quadratic: -1.0,
        congestion: 0.5,
        initial: InitialDensity::Gaussian { mean: -1.0, std: 0.5 },
    };
    let sol = mfg_solve(&cfg, 1e-6, 200, 0.5)?;
    sol.write_csv(std::io::stdout())?;
    eprintln!(
        "converged={} after {} sweeps, final residual {:.2e}, mass error {:.2e}",
        sol.converged,
        sol.sweeps(),
        sol.residuals.last().copied().unwrap_or(f64::NAN),
        sol.mass_error()
    );
    let kl = kl_drift_profile(&sol.density, &[50, 100, 150, 199])?;
    for (k, e) in kl.checkpoints.iter().zip(&kl.entries) {
        match e {
            KlEntry::Finite(v) => eprintln!("KL(P(0) || P({k})) = {v:.6}"),
            KlEntry::Infinite => eprintln!("KL(P(0) || P({k})) = inf"),
        }
    }
    Ok(())
}
