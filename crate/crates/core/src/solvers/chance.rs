use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mirror_game::UncertaintyModel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChanceEstimate {
    pub probability: f64,
    /// 95% normal-approximation half-width.
    pub half_width: f64,
    pub samples: usize,
}

/// Monte Carlo frequency of `predicate` over `n` draws of the uncertainty.
///
/// The predicate receives `|B|` and the model's seeded generator and must
/// draw its own world from them.
pub fn estimate_chance<F>(mut predicate: F, u: &UncertaintyModel, n: usize) -> Result<ChanceEstimate>
where
    F: FnMut(f64, &mut ChaCha8Rng) -> bool,
{
    if n == 0 {
        return Err(Error::validation("n: sample count must be >= 1"));
    }
    u.validate()?;
    let mut rng = u.rng();
    let hits = (0..n).filter(|_| predicate(u.magnitude, &mut rng)).count();
    let p = hits as f64 / n as f64;
    Ok(ChanceEstimate {
        probability: p,
        half_width: 1.96 * (p * (1.0 - p) / n as f64).sqrt(),
        samples: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn always_true() {
        let e = estimate_chance(|_, _| true, &UncertaintyModel::new(0.3, 1).unwrap(), 500).unwrap();
        assert_eq!(e.probability, 1.0);
        assert_eq!(e.half_width, 0.0);
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(estimate_chance(|_, _| true, &UncertaintyModel::none(), 0).is_err());
    }

    #[test]
    fn certain_world_is_binary() {
        let u = UncertaintyModel::none();
        for (cut, want) in [(0.3, 1.0), (0.5, 0.0)] {
            let e = estimate_chance(|b, rng| 0.4 + b * rng.random_range(-1.0..1.0) > cut, &u, 50).unwrap();
            assert_eq!(e.probability, want);
        }
    }

    #[test]
    fn fair_coin_within_three_half_widths() {
        for seed in 0..20 {
            let u = UncertaintyModel::new(1.0, seed).unwrap();
            let e = estimate_chance(|b, rng| b * rng.random_range(-1.0..1.0) > 0.0, &u, 2000).unwrap();
            assert!((e.probability - 0.5).abs() <= 3.0 * e.half_width, "{e:?}");
        }
    }
}
