//! Dogleg trust-region minimization of the Rosenbrock function; the
//! iteration trace goes to stdout as CSV.

use mirrorwyner::solvers::{trust_region_solve, ObjectiveFn, TrustRegionConfig};

fn main() -> mirrorwyner::Result<()> {
    let f = ObjectiveFn::new(2, |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2))?
        .with_gradient(|x| {
            vec![
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ]
        });
    let (sol, trace) = trust_region_solve(&f, &[-1.2, 1.0], &TrustRegionConfig::default())?;
    trace.write_csv(std::io::stdout())?;
    eprintln!(
        "x* = ({:.8}, {:.8}) after {} iterations, |grad| = {:.2e}",
        sol.x[0], sol.x[1], sol.iterations, sol.grad_norm
    );
    Ok(())
}
