//! A random-walk mean, its split onto a three-vector control basis, and
//! two relaxations of the walk into a smooth drift.

use mirrorwyner::nonstationary::{
    decompose_control, fuzzy_cluster_relax, mean_value_reduce, random_walk_mean, ClusterMode, ControlBasis,
    Innovation, NonstationaryInput,
};

fn main() -> mirrorwyner::Result<()> {
    let input = NonstationaryInput { mu0: 0.0, innovation: Innovation::Gaussian { scale: 0.1 }, horizon: 40 };
    let mu = random_walk_mean(&input, 5)?;
    println!("mu(40) = {:.4}", mu[40]);

    let basis = ControlBasis::standard(3)?;
    let d = decompose_control(&[0.4, -1.0, 2.5], &basis)?;
    println!("control coefficients {:?}", d.coefficients);

    for mode in [ClusterMode::Deterministic, ClusterMode::Fuzzy] {
        let r = fuzzy_cluster_relax(&mu, 3, mode, 1.0)?;
        println!("{mode:?}: centers {:?}, objective {:.4}", r.centers, r.objective);
    }

    let p = vec![1.0 / 41.0; 41];
    let mv = mean_value_reduce(&p, &mu, 1.0)?;
    println!("∫ mu dk = {:.4}, mean-value point t0 = {} (residual {:.2e})", mv.mu_prime, mv.t0, mv.residual);
    Ok(())
}
