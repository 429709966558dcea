use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHO_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "law")]
pub enum Innovation {
    Gaussian { scale: f64 },
    /// Uniform on `[-scale, scale]`.
    Uniform { scale: f64 },
}

impl Innovation {
    fn scale(&self) -> f64 {
        match *self {
            Innovation::Gaussian { scale } | Innovation::Uniform { scale } => scale,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonstationaryInput {
    pub mu0: f64,
    pub innovation: Innovation,
    pub horizon: usize,
}

impl NonstationaryInput {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::validation("horizon: must be >= 1"));
        }
        let s = self.innovation.scale();
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::validation(format!("innovation.scale: {s} must be >= 0")));
        }
        if !self.mu0.is_finite() {
            return Err(Error::validation("mu0: must be finite"));
        }
        Ok(())
    }
}

/// `μ(k+1) = μ(k) + ξ(k)`, `horizon + 1` values starting at `mu0`.
pub fn random_walk_mean(input: &NonstationaryInput, seed: u64) -> Result<Vec<f64>> {
    input.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut path = Vec::with_capacity(input.horizon + 1);
    let mut mu = input.mu0;
    path.push(mu);
    let scale = input.innovation.scale();
    for _ in 0..input.horizon {
        let step = if scale == 0.0 {
            0.0
        } else {
            match input.innovation {
                Innovation::Gaussian { .. } => Normal::new(0.0, scale).expect("scale > 0").sample(&mut rng),
                Innovation::Uniform { .. } => Uniform::new_inclusive(-scale, scale)
                    .expect("scale > 0")
                    .sample(&mut rng),
            }
        };
        mu += step;
        path.push(mu);
    }
    Ok(path)
}

/// Three orthonormal directions for the leader, estimate and power parts
/// of a control vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[Vec<f64>; 3]", into = "[Vec<f64>; 3]")]
pub struct ControlBasis {
    vectors: [Vec<f64>; 3],
}

impl TryFrom<[Vec<f64>; 3]> for ControlBasis {
    type Error = Error;

    fn try_from(v: [Vec<f64>; 3]) -> Result<Self> {
        ControlBasis::new(v)
    }
}

impl From<ControlBasis> for [Vec<f64>; 3] {
    fn from(b: ControlBasis) -> Self {
        b.vectors
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl ControlBasis {
    pub fn new(vectors: [Vec<f64>; 3]) -> Result<Self> {
        let n = vectors[0].len();
        if n < 3 || vectors.iter().any(|v| v.len() != n) {
            return Err(Error::validation(
                "basis: need three vectors of one common dimension >= 3",
            ));
        }
        for i in 0..3 {
            for j in i..3 {
                let d = dot(&vectors[i], &vectors[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                if (d - want).abs() > ORTHO_TOL {
                    return Err(Error::validation(format!(
                        "basis: <e{i}, e{j}> = {d}, expected {want}"
                    )));
                }
            }
        }
        Ok(ControlBasis { vectors })
    }

    /// The first three standard unit vectors of `R^n`.
    pub fn standard(n: usize) -> Result<Self> {
        let e = |i: usize| (0..n).map(|k| if k == i { 1.0 } else { 0.0 }).collect::<Vec<_>>();
        ControlBasis::new([e(0), e(1), e(2)])
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn vectors(&self) -> &[Vec<f64>; 3] {
        &self.vectors
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Decomposition {
    /// Coefficients on the leader, estimate and power directions.
    pub coefficients: [f64; 3],
    /// `u` minus its projection on the basis span.
    pub residual: Vec<f64>,
}

impl Decomposition {
    pub fn reconstruct(&self, basis: &ControlBasis) -> Vec<f64> {
        (0..basis.dim())
            .map(|k| (0..3).map(|i| self.coefficients[i] * basis.vectors[i][k]).sum())
            .collect()
    }
}

pub fn decompose_control(u: &[f64], basis: &ControlBasis) -> Result<Decomposition> {
    if u.len() != basis.dim() {
        return Err(Error::validation(format!(
            "u: dimension {} does not match basis dimension {}",
            u.len(),
            basis.dim()
        )));
    }
    let coefficients = [0, 1, 2].map(|i| dot(u, &basis.vectors[i]));
    let mut d = Decomposition {
        coefficients,
        residual: Vec::new(),
    };
    let proj = d.reconstruct(basis);
    d.residual = u.iter().zip(&proj).map(|(a, b)| a - b).collect();
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_walk_without_innovation() {
        let input = NonstationaryInput {
            mu0: 1.5,
            innovation: Innovation::Gaussian { scale: 0.0 },
            horizon: 20,
        };
        let p = random_walk_mean(&input, 3).unwrap();
        assert_eq!(p.len(), 21);
        assert!(p.iter().all(|&m| m == 1.5));
    }

    #[test]
    fn walk_is_seeded() {
        let input = NonstationaryInput {
            mu0: 0.0,
            innovation: Innovation::Uniform { scale: 0.5 },
            horizon: 100,
        };
        assert_eq!(random_walk_mean(&input, 9).unwrap(), random_walk_mean(&input, 9).unwrap());
        assert_ne!(random_walk_mean(&input, 9).unwrap(), random_walk_mean(&input, 10).unwrap());
        let p = random_walk_mean(&input, 9).unwrap();
        assert!(p.windows(2).all(|w| (w[1] - w[0]).abs() <= 0.5));
    }

    #[test]
    fn rejects_bad_input() {
        let mut input = NonstationaryInput {
            mu0: 0.0,
            innovation: Innovation::Gaussian { scale: -1.0 },
            horizon: 3,
        };
        assert!(random_walk_mean(&input, 0).is_err());
        input.innovation = Innovation::Gaussian { scale: 1.0 };
        input.horizon = 0;
        assert!(random_walk_mean(&input, 0).is_err());
    }

    #[test]
    fn aligned_and_orthogonal_vectors() {
        let b = ControlBasis::standard(4).unwrap();
        let d = decompose_control(&[2.0, 0.0, 0.0, 0.0], &b).unwrap();
        assert_eq!(d.coefficients, [2.0, 0.0, 0.0]);
        assert!(d.residual.iter().all(|&r| r == 0.0));
        let d = decompose_control(&[0.0, 0.0, 0.0, 3.0], &b).unwrap();
        assert_eq!(d.coefficients, [0.0; 3]);
        assert_eq!(d.residual, vec![0.0, 0.0, 0.0, 3.0]);
    }

    #[test]
    fn non_orthonormal_rejected() {
        let v = vec![1.0, 0.0, 0.0];
        assert!(ControlBasis::new([v.clone(), v.clone(), vec![0.0, 0.0, 1.0]]).is_err());
        assert!(ControlBasis::new([vec![2.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).is_err());
        assert!(ControlBasis::standard(2).is_err());
    }
}
