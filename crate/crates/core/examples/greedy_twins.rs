//! Greedy search for twin assignments with and without the ε relaxation.

use mirrorwyner::harness::reference_instance;
use mirrorwyner::mirror_game::{MirrorGameInstance, UncertaintyModel};
use mirrorwyner::solvers::{greedy_solve, GreedyConfig};

fn main() -> mirrorwyner::Result<()> {
    let inst = MirrorGameInstance::new(reference_instance())?;
    let cfg = GreedyConfig::default();
    for seed in 0..5 {
        let u = UncertaintyModel::new(0.1, seed)?;
        let relaxed = greedy_solve(&inst, &u, true, &cfg, seed)?;
        let strict = greedy_solve(&inst, &u, false, &cfg, seed)?;
        println!(
            "seed {seed}: relaxed converged={} in {:2} iterations (merit {:.3e}); strict converged={} (merit {:.3e})",
            relaxed.converged, relaxed.iterations, relaxed.merit, strict.converged, strict.merit
        );
    }
    Ok(())
}
