//! Leader/follower game on a random 20 × 20 grid, solved once and then
//! re-solved over stages while the leader law drifts.

use mirrorwyner::harness::random_stackelberg;
use mirrorwyner::nonstationary::{stackelberg_schedule, stackelberg_solve};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mirrorwyner::Result<()> {
    let mut inst = random_stackelberg(20, &mut ChaCha8Rng::seed_from_u64(11))?;
    let s = stackelberg_solve(&inst)?;
    println!(
        "leader law {} / follower action {}: leader gets {:.4}, follower {:.4} ({} laws examined)",
        s.leader, s.follower, s.value, s.follower_value, s.evaluations_to_optimum
    );

    inst.drift = Some((0..20).map(|u| if u < 10 { 0.2 } else { -0.2 }).collect());
    for (t, s) in stackelberg_schedule(&inst, 5)?.iter().enumerate() {
        println!("stage {t}: leader {:2} follower {:2} value {:.4}", s.leader, s.follower, s.value);
    }
    Ok(())
}
