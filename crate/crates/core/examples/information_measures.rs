//! Entropy, mutual information, KL divergence and the data-processing
//! inequality on a binary symmetric chain.

use mirrorwyner::prob::{
    conditional_mutual_information, entropy, kl_divergence, markov_compose, mutual_information, JointPmf2, Pmf,
    PrivacyMapping,
};

fn main() -> mirrorwyner::Result<()> {
    let s = Pmf::uniform(2)?;
    let bsc = PrivacyMapping::bsc(0.1)?;
    let sx = JointPmf2::from_channel(&s, &bsc)?;
    println!("H(S)            = {:.6} bits", entropy(&s));
    println!("I(S; X)         = {:.6} bits", mutual_information(&sx));

    // a second BSC after X: S -> X -> Y
    let chain = markov_compose(&sx, &PrivacyMapping::bsc(0.2)?)?;
    let sy = chain.marginal_pair(1);
    println!("I(S; Y)         = {:.6} bits  (never above I(S; X))", mutual_information(&sy));
    println!("I(S; Y | X)     = {:.6} bits", conditional_mutual_information(&chain.permute([0, 2, 1])));

    let p = Pmf::bernoulli(0.3)?;
    let q = Pmf::bernoulli(0.5)?;
    println!("D(B(.3)||B(.5)) = {:.6} bits", kl_divergence(&p, &q)?);
    Ok(())
}
