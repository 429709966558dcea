//! Finite-difference mean-field game on `[x_min, x_max] × [0, T]`.
//!
//! Backward (value) equation, with control `P ∈ [0, P_max]`:
//!
//! `−∂_k J = sup_P { r(x) + ∂_x J · P · μ_k } − c · P_df + σ² ∂²_x J`,
//! `J(T, ·) = 0`, `r(x) = a x + b x²`.
//!
//! Forward (density) equation with the drift reduced by the mean-value step:
//!
//! `∂_k P_df = σ² ∂²_x P_df − ∂_x (P_df A)`, `A(x) = P*(t0(x), x) · ∫ μ_k dk`.
//!
//! Both are stepped explicitly: central differences for diffusion, upwind
//! for transport, zero-flux walls. The pair is solved by damped Picard
//! iteration on the density.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::relax::mean_value_reduce;
use crate::error::{Error, Result};
use crate::prob::{kl_divergence, Pmf};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitialDensity {
    Gaussian { mean: f64, std: f64 },
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfgConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub horizon: f64,
    pub n_t: usize,
    pub sigma: f64,
    /// `μ_k` per time node; zeros when absent.
    #[serde(default)]
    pub mu: Option<Vec<f64>>,
    #[serde(default = "default_control_max")]
    pub control_max: f64,
    #[serde(default = "default_control_levels")]
    pub control_levels: usize,
    #[serde(default)]
    pub reward_linear: f64,
    #[serde(default)]
    pub reward_quadratic: f64,
    /// Weight `c` of the congestion cost `c · P_df`.
    #[serde(default)]
    pub congestion: f64,
    pub initial: InitialDensity,
}

fn default_control_max() -> f64 {
    1.0
}

fn default_control_levels() -> usize {
    11
}

impl MfgConfig {
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_x - 1) as f64
    }

    pub fn dk(&self) -> f64 {
        self.horizon / (self.n_t - 1) as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n_x).map(|i| self.x_min + i as f64 * self.dx()).collect()
    }

    pub fn mu_values(&self) -> Vec<f64> {
        self.mu.clone().unwrap_or_else(|| vec![0.0; self.n_t])
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x < 3 || self.n_t < 2 {
            return Err(Error::validation("n_x/n_t: need n_x >= 3 and n_t >= 2"));
        }
        if !(self.x_max > self.x_min) || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return Err(Error::validation("x_min/x_max: need a finite interval"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::validation("horizon: must be positive"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::validation("sigma: must be >= 0"));
        }
        if let Some(mu) = &self.mu {
            if mu.len() != self.n_t || mu.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("mu: need {} finite values", self.n_t)));
            }
        }
        if !(self.control_max >= 0.0 && self.control_max.is_finite()) || self.control_levels < 1 {
            return Err(Error::validation("control_max/control_levels: need a bounded non-empty grid"));
        }
        for (name, v) in [
            ("reward_linear", self.reward_linear),
            ("reward_quadratic", self.reward_quadratic),
            ("congestion", self.congestion),
        ] {
            if !v.is_finite() {
                return Err(Error::validation(format!("{name}: must be finite")));
            }
        }
        if let InitialDensity::Gaussian { std, mean } = self.initial {
            if !(std > 0.0) || !mean.is_finite() {
                return Err(Error::validation("initial.std: must be positive"));
            }
        }
        Ok(())
    }

    /// Explicit-scheme stability: `σ²Δk/Δx² ≤ 1/2` and, with the transport
    /// bound, `2σ²Δk/Δx² + |A|_max Δk/Δx ≤ 1`.
    pub fn check_cfl(&self) -> Result<()> {
        let (dx, dk) = (self.dx(), self.dk());
        let diff = self.sigma * self.sigma * dk / (dx * dx);
        if diff > 0.5 {
            return Err(Error::Config(format!(
                "CFL violated: sigma^2 dk / dx^2 = {diff:.4} > 0.5"
            )));
        }
        let mu_max = self.mu_values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let a_max = self.control_max * mu_max * self.horizon.max(1.0);
        let total = 2.0 * diff + a_max * dk / dx;
        if total > 1.0 {
            return Err(Error::Config(format!(
                "CFL violated: 2 sigma^2 dk/dx^2 + |A| dk/dx = {total:.4} > 1"
            )));
        }
        Ok(())
    }

    pub fn initial_density(&self) -> Vec<f64> {
        let xs = self.xs();
        let raw: Vec<f64> = match self.initial {
            InitialDensity::Uniform => vec![1.0; self.n_x],
            InitialDensity::Gaussian { mean, std } => xs
                .iter()
                .map(|x| (-(x - mean).powi(2) / (2.0 * std * std)).exp())
                .collect(),
        };
        let mass: f64 = raw.iter().sum::<f64>() * self.dx();
        raw.into_iter().map(|v| v / mass).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MfgSolution {
    pub xs: Vec<f64>,
    pub dk: f64,
    /// `j[k][i]`.
    pub j: Vec<Vec<f64>>,
    /// `density[k][i]`.
    pub density: Vec<Vec<f64>>,
    pub control: Vec<Vec<f64>>,
    pub drift: Vec<f64>,
    /// Sup-norm density change per Picard sweep.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

impl MfgSolution {
    pub fn sweeps(&self) -> usize {
        self.residuals.len()
    }

    /// Largest `|Σ_x P_df Δx − 1|` over all slices.
    pub fn mass_error(&self) -> f64 {
        let dx = self.xs[1] - self.xs[0];
        self.density
            .iter()
            .map(|row| (row.iter().sum::<f64>() * dx - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// One row per `(k, x)`: `k,x,J,P_df`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "x", "J", "P_df"])?;
        for (k, (jrow, prow)) in self.j.iter().zip(&self.density).enumerate() {
            for (i, x) in self.xs.iter().enumerate() {
                out.write_record([
                    format!("{:.12e}", k as f64 * self.dk),
                    format!("{x:.12e}"),
                    format!("{:.12e}", jrow[i]),
                    format!("{:.12e}", prow[i]),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

struct Hjb {
    j: Vec<Vec<f64>>,
    control: Vec<Vec<f64>>,
}

fn solve_hjb(cfg: &MfgConfig, density: &[Vec<f64>], mu: &[f64]) -> Hjb {
    let (nx, nt, dx, dk) = (cfg.n_x, cfg.n_t, cfg.dx(), cfg.dk());
    let s2 = cfg.sigma * cfg.sigma;
    let xs = cfg.xs();
    let levels: Vec<f64> = if cfg.control_levels == 1 {
        vec![0.0]
    } else {
        (0..cfg.control_levels)
            .map(|l| cfg.control_max * l as f64 / (cfg.control_levels - 1) as f64)
            .collect()
    };
    let mut j = vec![vec![0.0; nx]; nt];
    let mut control = vec![vec![0.0; nx]; nt];
    for k in (0..nt - 1).rev() {
        let next = j[k + 1].clone();
        for i in 0..nx {
            let left = if i == 0 { next[1] } else { next[i - 1] };
            let right = if i == nx - 1 { next[nx - 2] } else { next[i + 1] };
            let jxx = (right - 2.0 * next[i] + left) / (dx * dx);
            let dp = if i == nx - 1 { 0.0 } else { (next[i + 1] - next[i]) / dx };
            let dm = if i == 0 { 0.0 } else { (next[i] - next[i - 1]) / dx };
            let mut best = (0.0, f64::NEG_INFINITY);
            for &p in &levels {
                let b = p * mu[k];
                let v = b * if b > 0.0 { dp } else { dm };
                if v > best.1 {
                    best = (p, v);
                }
            }
            let x = xs[i];
            let reward = cfg.reward_linear * x + cfg.reward_quadratic * x * x;
            j[k][i] = next[i] + dk * (reward + best.1 - cfg.congestion * density[k][i] + s2 * jxx);
            control[k][i] = best.0;
        }
    }
    Hjb { j, control }
}

fn drift(cfg: &MfgConfig, control: &[Vec<f64>], mu: &[f64]) -> Result<Vec<f64>> {
    let dk = cfg.dk();
    let mu_int: f64 = mu.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dk).sum();
    if mu_int == 0.0 {
        return Ok(vec![0.0; cfg.n_x]);
    }
    (0..cfg.n_x)
        .map(|i| {
            let p: Vec<f64> = control.iter().map(|row| row[i]).collect();
            let mv = mean_value_reduce(&p, mu, dk)?;
            Ok(p[mv.t0] * mv.mu_prime)
        })
        .collect()
}

fn solve_fpk(cfg: &MfgConfig, p0: &[f64], a: &[f64]) -> Result<Vec<Vec<f64>>> {
    let (nx, nt, dx, dk) = (cfg.n_x, cfg.n_t, cfg.dx(), cfg.dk());
    let s2 = cfg.sigma * cfg.sigma;
    let mut out = Vec::with_capacity(nt);
    out.push(p0.to_vec());
    let mut flux = vec![0.0; nx + 1];
    for step in 1..nt {
        let p = out.last().expect("non-empty");
        for i in 0..nx - 1 {
            let af = 0.5 * (a[i] + a[i + 1]);
            let adv = if af > 0.0 { af * p[i] } else { af * p[i + 1] };
            flux[i + 1] = -s2 * (p[i + 1] - p[i]) / dx + adv;
        }
        let mut next: Vec<f64> = (0..nx).map(|i| p[i] - dk / dx * (flux[i + 1] - flux[i])).collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step });
        }
        if next.iter().any(|&v| v < 0.0) {
            let mass: f64 = next.iter().sum();
            next.iter_mut().for_each(|v| *v = v.max(0.0));
            let clipped: f64 = next.iter().sum();
            if clipped > 0.0 {
                next.iter_mut().for_each(|v| *v *= mass / clipped);
            }
        }
        out.push(next);
    }
    Ok(out)
}

/// Damped Picard iteration between the value and density sweeps. Stops once
/// the sup-norm change of the density drops below `tol` or after
/// `max_sweeps`.
pub fn mfg_solve(cfg: &MfgConfig, tol: f64, max_sweeps: usize, damping: f64) -> Result<MfgSolution> {
    cfg.validate()?;
    if !(tol > 0.0) {
        return Err(Error::validation("tol: must be positive"));
    }
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::validation("damping: must lie in (0, 1]"));
    }
    if max_sweeps == 0 {
        return Err(Error::validation("max_sweeps: must be >= 1"));
    }
    cfg.check_cfl()?;
    let mu = cfg.mu_values();
    let p0 = cfg.initial_density();
    let mut guess = vec![p0.clone(); cfg.n_t];
    let mut residuals = Vec::new();
    let mut last = None;
    for _ in 0..max_sweeps {
        let hjb = solve_hjb(cfg, &guess, &mu);
        let a = drift(cfg, &hjb.control, &mu)?;
        let fresh = solve_fpk(cfg, &p0, &a)?;
        let res = guess
            .iter()
            .zip(&fresh)
            .flat_map(|(g, f)| g.iter().zip(f).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        for (g, f) in guess.iter_mut().zip(&fresh) {
            for (x, y) in g.iter_mut().zip(f) {
                *x = (1.0 - damping) * *x + damping * y;
            }
        }
        residuals.push(res);
        last = Some((hjb, a, fresh));
        if res < tol {
            break;
        }
    }
    let (hjb, a, density) = last.expect("at least one sweep");
    let converged = residuals.last().is_some_and(|&r| r < tol);
    Ok(MfgSolution {
        xs: cfg.xs(),
        dk: cfg.dk(),
        j: hjb.j,
        density,
        control: hjb.control,
        drift: a,
        residuals,
        converged,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "bits")]
pub enum KlEntry {
    Finite(f64),
    Infinite,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KlProfile {
    pub checkpoints: Vec<usize>,
    /// `KL(P_df(0) ‖ P_df(k0))` per checkpoint.
    pub entries: Vec<KlEntry>,
    /// Checkpoint with the smallest finite divergence (first on ties).
    pub argmin: Option<usize>,
}

pub fn kl_drift_profile(density: &[Vec<f64>], checkpoints: &[usize]) -> Result<KlProfile> {
    let Some(first) = density.first() else {
        return Err(Error::validation("density: empty trajectory"));
    };
    let p0 = Pmf::normalized(first.clone())?;
    let mut entries = Vec::with_capacity(checkpoints.len());
    for &c in checkpoints {
        let row = density
            .get(c)
            .ok_or_else(|| Error::validation(format!("checkpoint {c} beyond horizon {}", density.len())))?;
        let pk = Pmf::normalized(row.clone())?;
        entries.push(match kl_divergence(&p0, &pk) {
            Ok(v) => KlEntry::Finite(v),
            Err(Error::InfiniteDivergence) => KlEntry::Infinite,
            Err(e) => return Err(e),
        });
    }
    let mut argmin: Option<(usize, f64)> = None;
    for (&c, e) in checkpoints.iter().zip(&entries) {
        if let KlEntry::Finite(v) = *e {
            if argmin.is_none_or(|(_, b)| v < b) {
                argmin = Some((c, v));
            }
        }
    }
    Ok(KlProfile {
        checkpoints: checkpoints.to_vec(),
        entries,
        argmin: argmin.map(|a| a.0),
    })
}
