use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanValue {
    /// Grid index with `P(t0)·μ'` closest to `∫ P μ dk`.
    pub t0: usize,
    /// `∫ μ dk` (trapezoid).
    pub mu_prime: f64,
    /// `|P(t0)·μ' − ∫ P μ dk|`.
    pub residual: f64,
    pub integral: f64,
}

fn trapezoid(v: impl Iterator<Item = f64>, dk: f64) -> f64 {
    let v: Vec<f64> = v.collect();
    if v.len() < 2 {
        return 0.0;
    }
    let inner: f64 = v[1..v.len() - 1].iter().sum();
    dk * (inner + 0.5 * (v[0] + v[v.len() - 1]))
}

/// Mean-value reduction `∫ P(k) μ_k dk ≈ P(t0) ∫ μ_k dk` on a uniform grid.
/// Among equally good grid points the first is returned.
pub fn mean_value_reduce(p: &[f64], mu: &[f64], dk: f64) -> Result<MeanValue> {
    if p.len() != mu.len() || p.len() < 2 {
        return Err(Error::validation(format!(
            "p/mu: need two aligned grids of >= 2 samples, got {} and {}",
            p.len(),
            mu.len()
        )));
    }
    if !(dk > 0.0 && dk.is_finite()) {
        return Err(Error::validation("dk: grid spacing must be positive"));
    }
    if p.iter().chain(mu).any(|v| !v.is_finite()) {
        return Err(Error::validation("p/mu: samples must be finite"));
    }
    let mu_prime = trapezoid(mu.iter().copied(), dk);
    if mu_prime == 0.0 {
        return Err(Error::DegenerateIntegral("integral of mu is zero".into()));
    }
    let integral = trapezoid(p.iter().zip(mu).map(|(a, b)| a * b), dk);
    let res: Vec<f64> = p.iter().map(|&pk| (pk * mu_prime - integral).abs()).collect();
    let best = res.iter().cloned().fold(f64::INFINITY, f64::min);
    let slack = 1e-12 * integral.abs().max(mu_prime.abs()).max(1.0);
    let t0 = res.iter().position(|&r| r <= best + slack).expect("non-empty");
    Ok(MeanValue {
        t0,
        mu_prime,
        residual: res[t0],
        integral,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMode {
    /// Hard assignments `γ_v(k) ∈ {0, 1}` with free cluster centers.
    Deterministic,
    /// Soft assignments between equally spaced centers.
    Fuzzy,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterRelax {
    /// `gamma[k][v]`, each row on the simplex.
    pub gamma: Vec<Vec<f64>>,
    pub centers: Vec<f64>,
    /// `m(k) = Σ_v γ_v(k) c_v`.
    pub smoothed: Vec<f64>,
    pub objective: f64,
}

/// `Σ_k (m(k+1) − m(k))² + w Σ_k (m(k) − obs(k))²`.
pub fn relax_objective(smoothed: &[f64], observed: &[f64], data_weight: f64) -> f64 {
    let rough: f64 = smoothed.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    let fit: f64 = smoothed.iter().zip(observed).map(|(m, o)| (m - o).powi(2)).sum();
    rough + data_weight * fit
}

fn finish(gamma: Vec<Vec<f64>>, centers: Vec<f64>, observed: &[f64], w: f64) -> ClusterRelax {
    let smoothed: Vec<f64> = gamma
        .iter()
        .map(|g| g.iter().zip(&centers).map(|(a, c)| a * c).sum())
        .collect();
    let objective = relax_objective(&smoothed, observed, w);
    ClusterRelax {
        gamma,
        centers,
        smoothed,
        objective,
    }
}

/// Solves `(L + wI) m = w·obs` for the path Laplacian `L` (Thomas algorithm).
fn smooth(obs: &[f64], w: f64) -> Vec<f64> {
    let n = obs.len();
    if n == 1 {
        return obs.to_vec();
    }
    let diag: Vec<f64> = (0..n)
        .map(|k| w + if k == 0 || k == n - 1 { 1.0 } else { 2.0 })
        .collect();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = -1.0 / diag[0];
    d[0] = w * obs[0] / diag[0];
    for k in 1..n {
        let m = diag[k] + c[k - 1];
        c[k] = -1.0 / m;
        d[k] = (w * obs[k] + d[k - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for k in (0..n - 1).rev() {
        x[k] = d[k] - c[k] * x[k + 1];
    }
    x
}

fn fuzzy(obs: &[f64], v: usize, w: f64) -> ClusterRelax {
    let lo = obs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = obs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = obs.iter().sum::<f64>() / obs.len() as f64;
    let centers: Vec<f64> = if v == 1 {
        vec![mean]
    } else {
        (0..v).map(|i| lo + (hi - lo) * i as f64 / (v - 1) as f64).collect()
    };
    let path = if v == 1 || w == 0.0 || hi == lo {
        vec![if hi == lo { lo } else { mean }; obs.len()]
    } else {
        smooth(obs, w)
    };
    let gamma = path
        .iter()
        .map(|&m| {
            let mut g = vec![0.0; v];
            if v == 1 || hi == lo {
                g[0] = 1.0;
                return g;
            }
            let m = m.clamp(lo, hi);
            let pos = (m - lo) / (hi - lo) * (v - 1) as f64;
            let j = (pos.floor() as usize).min(v - 2);
            let lam = (m - centers[j]) / (centers[j + 1] - centers[j]);
            let lam = lam.clamp(0.0, 1.0);
            g[j] = 1.0 - lam;
            g[j + 1] = lam;
            g
        })
        .collect();
    finish(gamma, centers, obs, w)
}

/// Exact best assignment for fixed centers (Viterbi over the path).
fn assign(obs: &[f64], centers: &[f64], w: f64) -> Vec<usize> {
    let (k, v) = (obs.len(), centers.len());
    let mut cost: Vec<f64> = (0..v).map(|j| w * (centers[j] - obs[0]).powi(2)).collect();
    let mut back = vec![vec![0usize; v]; k];
    for t in 1..k {
        let mut next = vec![f64::INFINITY; v];
        for j in 0..v {
            for i in 0..v {
                let c = cost[i] + (centers[j] - centers[i]).powi(2);
                if c < next[j] {
                    next[j] = c;
                    back[t][j] = i;
                }
            }
            next[j] += w * (centers[j] - obs[t]).powi(2);
        }
        cost = next;
    }
    let mut j = (0..v)
        .min_by(|&a, &b| cost[a].total_cmp(&cost[b]))
        .expect("v >= 1");
    let mut out = vec![0; k];
    for t in (0..k).rev() {
        out[t] = j;
        j = back[t][j];
    }
    out
}

/// Optimal centers for a fixed assignment; unused clusters keep `prev`.
pub(crate) fn centers_for(obs: &[f64], labels: &[usize], v: usize, w: f64, prev: &[f64]) -> Vec<f64> {
    let mut count = vec![0.0; v];
    let mut sum = vec![0.0; v];
    for (&l, &o) in labels.iter().zip(obs) {
        count[l] += 1.0;
        sum[l] += o;
    }
    let used: Vec<usize> = (0..v).filter(|&j| count[j] > 0.0).collect();
    let idx = |j: usize| used.iter().position(|&u| u == j).expect("used");
    let n = used.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for (r, &j) in used.iter().enumerate() {
        a[(r, r)] += w * count[j];
        b[r] = w * sum[j];
    }
    for t in labels.windows(2) {
        if t[0] != t[1] {
            let (i, j) = (idx(t[0]), idx(t[1]));
            a[(i, i)] += 1.0;
            a[(j, j)] += 1.0;
            a[(i, j)] -= 1.0;
            a[(j, i)] -= 1.0;
        }
    }
    let mut out = prev.to_vec();
    if let Some(x) = a.lu().solve(&b) {
        for (r, &j) in used.iter().enumerate() {
            out[j] = x[r];
        }
    }
    out
}

fn deterministic(obs: &[f64], v: usize, w: f64) -> ClusterRelax {
    let k = obs.len();
    let one_hot = |labels: &[usize]| {
        labels
            .iter()
            .map(|&l| (0..v).map(|j| if j == l { 1.0 } else { 0.0 }).collect())
            .collect::<Vec<Vec<f64>>>()
    };
    let mean = obs.iter().sum::<f64>() / k as f64;
    if w == 0.0 || v == 1 {
        let mut centers = vec![mean; v];
        if v > 1 {
            let lo = obs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = obs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for (j, c) in centers.iter_mut().enumerate().skip(1) {
                *c = lo + (hi - lo) * j as f64 / (v - 1) as f64;
            }
        }
        let labels = vec![0; k];
        let centers = if w == 0.0 { centers } else { centers_for(obs, &labels, v, w, &centers) };
        return finish(one_hot(&labels), centers, obs, w);
    }
    let lo = obs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = obs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sorted = obs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut inits: Vec<Vec<f64>> = vec![
        (0..v).map(|j| lo + (hi - lo) * j as f64 / (v - 1) as f64).collect(),
        (0..v)
            .map(|j| {
                let a = j * k / v;
                let b = ((j + 1) * k / v).max(a + 1).min(k);
                sorted[a.min(k - 1)..b].iter().sum::<f64>() / (b - a.min(k - 1)) as f64
            })
            .collect(),
    ];
    // a contiguous segmentation seeds a piecewise-constant path
    let segments: Vec<usize> = (0..k).map(|t| (t * v / k).min(v - 1)).collect();
    inits.push(centers_for(obs, &segments, v, w, &inits[0]));

    let mut best: Option<ClusterRelax> = None;
    for init in inits {
        let mut centers = init;
        let mut labels = assign(obs, &centers, w);
        for _ in 0..200 {
            centers = centers_for(obs, &labels, v, w, &centers);
            let next = assign(obs, &centers, w);
            if next == labels {
                break;
            }
            labels = next;
        }
        let r = finish(one_hot(&labels), centers, obs, w);
        if best.as_ref().is_none_or(|b| r.objective < b.objective) {
            best = Some(r);
        }
    }
    best.expect("at least one initialization")
}

/// Smooths a mean path by clustering its values into `v` groups.
///
/// Minimizes `Σ_k (m(k+1) − m(k))² + w Σ_k (m(k) − obs(k))²` where
/// `m(k) = Σ_v γ_v(k) c_v`. With `w = 0` every constant path is optimal and
/// the observed mean is returned.
pub fn fuzzy_cluster_relax(path: &[f64], v: usize, mode: ClusterMode, data_weight: f64) -> Result<ClusterRelax> {
    if path.is_empty() {
        return Err(Error::validation("path: must be non-empty"));
    }
    if v == 0 {
        return Err(Error::validation("v: need at least one cluster"));
    }
    if !(data_weight >= 0.0 && data_weight.is_finite()) {
        return Err(Error::validation(format!("data_weight: {data_weight} must be >= 0")));
    }
    if path.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation("path: samples must be finite"));
    }
    Ok(match mode {
        ClusterMode::Fuzzy => fuzzy(path, v, data_weight),
        ClusterMode::Deterministic => deterministic(path, v, data_weight),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_p_first_index() {
        let p = vec![2.0; 11];
        let mu: Vec<f64> = (0..11).map(|k| 1.0 + k as f64 * 0.1).collect();
        let r = mean_value_reduce(&p, &mu, 0.1).unwrap();
        assert_eq!(r.t0, 0);
        assert!(r.residual < 1e-12);
    }

    #[test]
    fn linear_p_hits_midpoint() {
        let n = 101;
        let dk = 1.0 / (n - 1) as f64;
        let p: Vec<f64> = (0..n).map(|k| k as f64 * dk).collect();
        let r = mean_value_reduce(&p, &vec![1.0; n], dk).unwrap();
        assert_eq!(r.t0, 50);
        assert!(r.residual <= dk);
    }

    #[test]
    fn zero_mu_is_degenerate() {
        let err = mean_value_reduce(&[1.0, 2.0, 3.0], &[1.0, 0.0, -1.0], 1.0).unwrap_err();
        assert!(matches!(err, Error::DegenerateIntegral(_)));
    }

    #[test]
    fn constant_path_is_free() {
        for mode in [ClusterMode::Fuzzy, ClusterMode::Deterministic] {
            let r = fuzzy_cluster_relax(&[3.0; 8], 3, mode, 1.0).unwrap();
            assert!(r.objective.abs() < 1e-20);
            assert!(r.smoothed.iter().all(|&m| (m - 3.0).abs() < 1e-12));
        }
    }

    #[test]
    fn unweighted_objective_flattens() {
        let path = [0.0, 1.0, 4.0, 2.0, -1.0];
        for mode in [ClusterMode::Fuzzy, ClusterMode::Deterministic] {
            let r = fuzzy_cluster_relax(&path, 3, mode, 0.0).unwrap();
            assert_eq!(r.objective, 0.0);
            assert!(r.smoothed.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn fuzzy_weights_on_simplex() {
        let path = [0.0, 0.2, 1.5, 0.7, 2.0, 1.1];
        let r = fuzzy_cluster_relax(&path, 4, ClusterMode::Fuzzy, 2.0).unwrap();
        for g in &r.gamma {
            assert!(g.iter().all(|&x| x >= 0.0));
            assert!((g.iter().sum::<f64>() - 1.0).abs() <= f64::EPSILON);
        }
        let direct = smooth(&path, 2.0);
        for (a, b) in r.smoothed.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_arguments() {
        assert!(fuzzy_cluster_relax(&[], 2, ClusterMode::Fuzzy, 1.0).is_err());
        assert!(fuzzy_cluster_relax(&[1.0], 0, ClusterMode::Fuzzy, 1.0).is_err());
        assert!(fuzzy_cluster_relax(&[1.0], 2, ClusterMode::Fuzzy, -1.0).is_err());
    }
}
