//! Drives the batch runners from code: a utility/leakage frontier at two
//! uncertainty levels and the relaxed-versus-strict convergence CDF.

use mirrorwyner::harness::{
    parse_config, reference_instance, run_convergence_cdf, run_mi_tradeoff, seed_list, ConvergenceConfig, TradeoffConfig,
};

fn main() -> mirrorwyner::Result<()> {
    let cfg = TradeoffConfig {
        instance: reference_instance(),
        magnitudes: vec![0.1, 0.5],
        leakage_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        samples: 32,
        resolution: 16,
    };
    let rows = run_mi_tradeoff(&cfg, &[0])?;
    for r in rows.iter().filter(|r| r.q == 0) {
        println!("|B| = {:.1}  leak <= {:.2}·I(S;X)  utility {:?}", r.magnitude, r.leakage_norm, r.utility);
    }

    let cdf = run_convergence_cdf(&parse_config::<ConvergenceConfig>("{}")?, &seed_list(0, 30))?;
    cdf.write_csv(std::io::stdout())?;
    if let Some(d) = cdf.dominance {
        eprintln!("D+ = {:.3}, D- = {:.3}, dominance p = {:.2e}", d.d_plus, d.d_minus, d.p_dominance);
    }
    Ok(())
}
