//! Recasts the twin problem as chance constraints, floors the strict
//! conditions and estimates every slot's probability at one assignment.

use mirrorwyner::harness::reference_instance;
use mirrorwyner::mirror_game::{
    assemble_p1, chance_relax, epsilon_floor, EpsilonFloors, MirrorGameInstance, TwinAssignment, UncertaintyModel,
};
use mirrorwyner::prob::PrivacyMapping;
use mirrorwyner::solvers::estimate_chance;
use rand::Rng;

fn main() -> mirrorwyner::Result<()> {
    let inst = MirrorGameInstance::new(reference_instance())?;
    let u = UncertaintyModel::new(0.3, 7)?;
    let strict = chance_relax(&inst, &assemble_p1(&inst), &u)?;
    let floored = epsilon_floor(&strict, EpsilonFloors::new([0.002, 0.002, 0.02]))?;

    let asg = TwinAssignment {
        original: vec![PrivacyMapping::bsc(0.2)?, PrivacyMapping::bsc(0.2)?],
        virtual_: vec![PrivacyMapping::bsc(0.35)?, PrivacyMapping::bsc(0.35)?],
    };
    for (name, p) in [("strict", &strict), ("floored", &floored)] {
        let e = p.evaluate(&inst, &asg, 200)?;
        let probs: Vec<String> = e.achievable.iter().map(|v| format!("{v:.3}")).collect();
        println!("{name:8} feasible={} Pr per slot = [{}]", e.feasible, probs.join(", "));
    }

    let est = estimate_chance(|b, rng| rng.random_range(-b..=b) < 0.1, &u, 10_000)?;
    println!("Pr{{u < 0.1}}, u ~ U(-0.3, 0.3): {:.4} ± {:.4}", est.probability, est.half_width);
    Ok(())
}
