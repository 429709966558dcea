//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the library's numerics.

#![allow(dead_code)]

use mirrorwyner::nonstationary::StackelbergInstance;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// `I(A; B)` straight from the definition, natural log converted to bits.
pub fn brute_mi(flat: &[f64], rows: usize, cols: usize) -> f64 {
    let pa: Vec<f64> = (0..rows).map(|a| (0..cols).map(|b| flat[a * cols + b]).sum()).collect();
    let pb: Vec<f64> = (0..cols).map(|b| (0..rows).map(|a| flat[a * cols + b]).sum()).collect();
    let mut acc = 0.0;
    for a in 0..rows {
        for b in 0..cols {
            let p = flat[a * cols + b];
            if p > 0.0 {
                acc += p * (p / (pa[a] * pb[b])).ln();
            }
        }
    }
    acc / std::f64::consts::LN_2
}

pub fn brute_entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>() / std::f64::consts::LN_2
}

/// `H(A | B) = Σ_b P(b) H(A | B = b)`.
pub fn brute_conditional_entropy(flat: &[f64], rows: usize, cols: usize) -> f64 {
    (0..cols)
        .map(|b| {
            let col: Vec<f64> = (0..rows).map(|a| flat[a * cols + b]).collect();
            let pb: f64 = col.iter().sum();
            if pb <= 0.0 {
                0.0
            } else {
                pb * brute_entropy(&col.iter().map(|v| v / pb).collect::<Vec<_>>())
            }
        })
        .sum()
}

/// `I(X; Y | Z)` for a row-major `(x, y, z)` table via entropies.
pub fn brute_cmi(flat: &[f64], dims: [usize; 3]) -> f64 {
    let [nx, ny, nz] = dims;
    let idx = |x: usize, y: usize, z: usize| (x * ny + y) * nz + z;
    let mut h_xz = vec![0.0; nx * nz];
    let mut h_yz = vec![0.0; ny * nz];
    let mut h_z = vec![0.0; nz];
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                let p = flat[idx(x, y, z)];
                h_xz[x * nz + z] += p;
                h_yz[y * nz + z] += p;
                h_z[z] += p;
            }
        }
    }
    brute_entropy(&h_xz) + brute_entropy(&h_yz) - brute_entropy(flat) - brute_entropy(&h_z)
}

/// Binary entropy in bits.
pub fn h2(p: f64) -> f64 {
    brute_entropy(&[p, 1.0 - p])
}

/// Exact rank of an integer matrix by fraction-free elimination.
pub fn bareiss_rank(m: &[Vec<i128>]) -> usize {
    let mut a: Vec<Vec<i128>> = m.to_vec();
    let rows = a.len();
    if rows == 0 {
        return 0;
    }
    let cols = a[0].len();
    let mut rank = 0;
    let mut prev = 1i128;
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let Some(p) = (rank..rows).find(|&r| a[r][c] != 0) else {
            continue;
        };
        a.swap(rank, p);
        for r in rank + 1..rows {
            for k in c + 1..cols {
                a[r][k] = (a[r][k] * a[rank][c] - a[r][c] * a[rank][k]) / prev;
            }
            a[r][c] = 0;
        }
        prev = a[rank][c];
        rank += 1;
    }
    rank
}

pub fn int_matmul(a: &[Vec<i128>], b: &[Vec<i128>]) -> Vec<Vec<i128>> {
    let (n, m, p) = (a.len(), b.len(), b[0].len());
    (0..n)
        .map(|i| (0..p).map(|j| (0..m).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

/// `[B, AB, …, A^{n−1}B]` in exact integer arithmetic.
pub fn int_controllability(a: &[Vec<i128>], b: &[Vec<i128>]) -> Vec<Vec<i128>> {
    let n = a.len();
    let mut blocks = vec![b.to_vec()];
    for _ in 1..n {
        let next = int_matmul(a, blocks.last().unwrap());
        blocks.push(next);
    }
    (0..n).map(|i| blocks.iter().flat_map(|blk| blk[i].iter().copied()).collect()).collect()
}

pub fn int_transpose(a: &[Vec<i128>]) -> Vec<Vec<i128>> {
    if a.is_empty() {
        return vec![];
    }
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn to_f64(a: &[Vec<i128>]) -> DMatrix<f64> {
    let (r, c) = (a.len(), a.first().map_or(0, Vec::len));
    DMatrix::from_fn(r, c, |i, j| a[i][j] as f64)
}

/// Density of `N(mean, var)` at `x`.
pub fn gaussian(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// `exp(−i H t / ħ) ψ` by Padé scaling and squaring.
pub fn unitary_evolve(h: &DMatrix<Complex64>, psi: &DVector<Complex64>, t: f64, hbar: f64) -> DVector<Complex64> {
    (h * Complex64::new(0.0, -t / hbar)).exp() * psi
}

/// Bilevel enumeration: every leader law, every follower action, lowest
/// index on ties at both levels.
pub fn brute_stackelberg(inst: &StackelbergInstance) -> (usize, usize, f64) {
    let mut best: Option<(usize, usize, f64)> = None;
    for (i, law) in inst.leader_laws.iter().enumerate() {
        let p = law.probs();
        let values: Vec<f64> =
            inst.follower_payoff.iter().map(|row| row.iter().zip(p).map(|(a, b)| a * b).sum()).collect();
        let top = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let a = values.iter().position(|&v| v == top).unwrap();
        let lv: f64 = inst.leader_payoff[a].iter().zip(p).map(|(x, y)| x * y).sum();
        if best.is_none_or(|b| lv > b.2) {
            best = Some((i, a, lv));
        }
    }
    best.unwrap()
}
