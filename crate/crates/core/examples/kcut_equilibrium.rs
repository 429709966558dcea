//! Best-response dynamics on a random same-color K-cut game, followed by
//! an exhaustive Nash check.

use mirrorwyner::equilibrium::{best_response_dynamics, verify_nash, KCutGame, StrategyProfile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mirrorwyner::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let game = KCutGame::random_symmetric(8, 3, 10, &mut rng)?;
    let start = StrategyProfile::random(8, 3, &mut rng);
    let out = best_response_dynamics(&game, &start, 100)?;
    for s in &out.switches {
        println!(
            "round {} player {} {} -> {} gain {:.3} potential {:.3}",
            s.round, s.player, s.from, s.to, s.gain, s.potential_after
        );
    }
    let nash = verify_nash(&game, &out.profile)?;
    println!(
        "profile {:?}: converged={} is_nash={} ({} deviations checked)",
        out.profile.colors, out.converged, nash.is_nash, nash.deviations_checked
    );
    Ok(())
}
