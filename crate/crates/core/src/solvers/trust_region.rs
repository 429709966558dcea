use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance of the `‖ζ‖ = Δ` boundary test, relative to `max(1, Δ)`.
const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrustRegionConfig {
    pub eta1: f64,
    pub eta2: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub delta0: f64,
    pub eps_th: f64,
    pub max_iter: usize,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        TrustRegionConfig {
            eta1: 0.1,
            eta2: 0.75,
            theta1: 0.5,
            theta2: 2.0,
            delta0: 1.0,
            eps_th: 1e-8,
            max_iter: 500,
        }
    }
}

impl TrustRegionConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |c: bool, msg: &str| if c { Ok(()) } else { Err(Error::validation(msg.to_string())) };
        ok(0.0 < self.eta1 && self.eta1 < self.eta2 && self.eta2 < 1.0, "eta1/eta2: need 0 < eta1 < eta2 < 1")?;
        ok(0.0 < self.theta1 && self.theta1 < 1.0, "theta1: need 0 < theta1 < 1")?;
        ok(self.theta2 > 1.0 && self.theta2.is_finite(), "theta2: need theta2 > 1")?;
        ok(self.delta0 > 0.0 && self.delta0.is_finite(), "delta0: need a positive initial radius")?;
        ok(self.eps_th > 0.0, "eps_th: need a positive gradient tolerance")?;
        ok(self.max_iter > 0, "max_iter: need at least one iteration")
    }
}

type Eval = dyn Fn(&[f64]) -> f64 + Send + Sync;
type Grad = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A scalar objective on `R^n` with an optional analytic gradient.
/// Without one, central differences with step `h` are used.
pub struct ObjectiveFn {
    f: Box<Eval>,
    grad: Option<Box<Grad>>,
    dim: usize,
    h: f64,
}

impl std::fmt::Debug for ObjectiveFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ObjectiveFn")
            .field("dim", &self.dim)
            .field("h", &self.h)
            .field("analytic_gradient", &self.grad.is_some())
            .finish()
    }
}

impl ObjectiveFn {
    pub fn new(dim: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Result<Self> {
        if dim == 0 {
            return Err(Error::validation("dim: objective needs at least one variable"));
        }
        Ok(ObjectiveFn {
            f: Box::new(f),
            grad: None,
            dim,
            h: 1e-5,
        })
    }

    pub fn with_gradient(mut self, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad = Some(Box::new(g));
        self
    }

    pub fn with_step(mut self, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::validation(format!("h: finite-difference step {h} must be > 0")));
        }
        self.h = h;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        if let Some(g) = &self.grad {
            return g(x);
        }
        let mut xp = x.to_vec();
        (0..self.dim)
            .map(|i| {
                let xi = x[i];
                xp[i] = xi + self.h;
                let fp = (self.f)(&xp);
                xp[i] = xi - self.h;
                let fm = (self.f)(&xp);
                xp[i] = xi;
                (fp - fm) / (2.0 * self.h)
            })
            .collect()
    }

    /// Central differences of the gradient, symmetrized.
    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        let mut hm = DMatrix::zeros(n, n);
        let mut xp = x.to_vec();
        for j in 0..n {
            let xj = x[j];
            xp[j] = xj + self.h;
            let gp = self.gradient(&xp);
            xp[j] = xj - self.h;
            let gm = self.gradient(&xp);
            xp[j] = xj;
            for i in 0..n {
                hm[(i, j)] = (gp[i] - gm[i]) / (2.0 * self.h);
            }
        }
        (&hm + hm.transpose()) * 0.5
    }
}

/// One trust-region iteration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveStep {
    /// Iterate `ξ_m` at which the model was built.
    pub point: Vec<f64>,
    pub objective: f64,
    pub grad_norm: f64,
    /// `Δ_m`.
    pub radius: f64,
    /// `τ_m`.
    pub ratio: f64,
    pub accepted: bool,
    /// `‖ζ_m‖`.
    pub step_norm: f64,
    /// Whether `‖ζ_m‖ = Δ_m` within tolerance.
    pub on_boundary: bool,
    /// `Δ_{m+1}`.
    pub next_radius: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SolveTrace {
    pub steps: Vec<SolveStep>,
}

impl SolveTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn accepted_count(&self) -> usize {
        self.steps.iter().filter(|s| s.accepted).count()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["iter", "objective", "grad_norm", "radius", "ratio", "accepted"])?;
        for (i, s) in self.steps.iter().enumerate() {
            out.write_record([
                i.to_string(),
                format!("{:.12e}", s.objective),
                format!("{:.12e}", s.grad_norm),
                format!("{:.12e}", s.radius),
                format_ratio(s.ratio),
                s.accepted.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn format_ratio(r: f64) -> String {
    if r.is_finite() {
        format!("{r:.12e}")
    } else if r > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrustRegionSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// Stopped on the gradient test rather than the iteration cap.
    pub converged: bool,
}

fn norm(v: &DVector<f64>) -> f64 {
    v.norm()
}

/// `argmin_{‖ζ‖ ≤ Δ} gᵀζ + ½ ζᵀBζ` along the dogleg path.
fn dogleg(g: &DVector<f64>, b: &DMatrix<f64>, delta: f64) -> DVector<f64> {
    let gnorm = norm(g);
    let gbg = g.dot(&(b * g));
    let steepest_to_boundary = || -g * (delta / gnorm);
    let cauchy = if gbg > 0.0 {
        let t = gnorm * gnorm / gbg;
        let pu = -g * t;
        if norm(&pu) >= delta {
            return steepest_to_boundary();
        }
        pu
    } else {
        return steepest_to_boundary();
    };

    // Newton point, shifted to positive definiteness when needed.
    let eig = b.clone().symmetric_eigen();
    let lmin = eig.eigenvalues.min();
    let shift = if lmin > 1e-12 { 0.0 } else { -lmin + 1e-8 * lmin.abs().max(1.0) };
    let shifted = b + DMatrix::identity(b.nrows(), b.ncols()) * shift;
    let pb = match shifted.cholesky() {
        Some(c) => -c.solve(g),
        None => return cauchy,
    };
    if norm(&pb) <= delta {
        return pb;
    }
    // ‖pu + s (pb - pu)‖ = Δ for s ∈ [0, 1]
    let d = &pb - &cauchy;
    let a = d.dot(&d);
    let bq = 2.0 * cauchy.dot(&d);
    let c = cauchy.dot(&cauchy) - delta * delta;
    let disc = (bq * bq - 4.0 * a * c).max(0.0);
    let s = ((-bq + disc.sqrt()) / (2.0 * a)).clamp(0.0, 1.0);
    let p = &cauchy + d * s;
    // land exactly on the sphere
    let pn = norm(&p);
    if pn > 0.0 {
        p * (delta / pn)
    } else {
        p
    }
}

fn model(g: &DVector<f64>, b: &DMatrix<f64>, z: &DVector<f64>) -> f64 {
    g.dot(z) + 0.5 * z.dot(&(b * z))
}

/// Dogleg trust-region minimization.
///
/// A step is accepted iff `τ > η1`. The radius then becomes `θ1‖ζ‖` when
/// `τ ≤ η1`, `θ2Δ` when `τ > η2` and the step hit the boundary, and is kept
/// otherwise. Iteration stops once `‖∇ψ‖ < eps_th` or after `max_iter`
/// steps.
pub fn trust_region_solve(
    f: &ObjectiveFn,
    x0: &[f64],
    cfg: &TrustRegionConfig,
) -> Result<(TrustRegionSolution, SolveTrace)> {
    cfg.validate()?;
    if x0.len() != f.dim() {
        return Err(Error::validation(format!(
            "x0: dimension {} does not match objective dimension {}",
            x0.len(),
            f.dim()
        )));
    }
    let mut trace = SolveTrace::default();
    let mut x = x0.to_vec();
    let mut fx = f.value(&x);
    let mut g = DVector::from_vec(f.gradient(&x));
    let mut delta = cfg.delta0;
    let mut converged = false;
    for m in 0..=cfg.max_iter {
        if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                iteration: m,
                trace: Box::new(trace),
            });
        }
        let gn = norm(&g);
        if gn < cfg.eps_th {
            converged = true;
            break;
        }
        if m == cfg.max_iter {
            break;
        }
        let b = f.hessian(&x);
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                iteration: m,
                trace: Box::new(trace),
            });
        }
        let mut z = dogleg(&g, &b, delta);
        let mut pred = model(&g, &b, &z);
        if !(pred < 0.0) {
            z = -&g * (delta / gn);
            pred = model(&g, &b, &z);
        }
        let zn = norm(&z);
        let trial: Vec<f64> = x.iter().zip(z.iter()).map(|(a, b)| a + b).collect();
        let ft = f.value(&trial);
        let ratio = if ft.is_finite() && pred < 0.0 {
            (ft - fx) / pred
        } else {
            f64::NEG_INFINITY
        };
        let on_boundary = (zn - delta).abs() <= BOUNDARY_TOL * delta.max(1.0);
        let accepted = ratio > cfg.eta1;
        let next = if ratio <= cfg.eta1 {
            cfg.theta1 * zn
        } else if ratio > cfg.eta2 && on_boundary {
            cfg.theta2 * delta
        } else {
            delta
        };
        trace.steps.push(SolveStep {
            point: x.clone(),
            objective: fx,
            grad_norm: gn,
            radius: delta,
            ratio,
            accepted,
            step_norm: zn,
            on_boundary,
            next_radius: next,
        });
        if accepted {
            x = trial;
            fx = ft;
            g = DVector::from_vec(f.gradient(&x));
        }
        delta = next;
        if !(delta > 0.0) {
            // step collapsed to zero length; nothing left to try
            break;
        }
    }
    let grad_norm = norm(&g);
    Ok((
        TrustRegionSolution {
            x,
            objective: fx,
            grad_norm,
            iterations: trace.len(),
            converged,
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bowl() -> ObjectiveFn {
        ObjectiveFn::new(2, |x| x[0] * x[0] + x[1] * x[1]).unwrap()
    }

    #[test]
    fn config_ordering_enforced() {
        let mut c = TrustRegionConfig::default();
        c.eta1 = 0.8;
        assert!(c.validate().is_err());
        let mut c = TrustRegionConfig::default();
        c.theta2 = 0.9;
        assert!(c.validate().is_err());
        assert!(ObjectiveFn::new(0, |_| 0.0).is_err());
    }

    #[test]
    fn bowl_in_one_newton_step() {
        let cfg = TrustRegionConfig {
            delta0: 100.0,
            ..Default::default()
        };
        let (sol, trace) = trust_region_solve(&bowl(), &[1.0, 1.0], &cfg).unwrap();
        assert!(sol.grad_norm < 1e-8);
        assert!(trace.len() <= 2);
        // model is exact up to finite-difference rounding in the Hessian
        assert!((trace.steps[0].ratio - 1.0).abs() < 1e-4);
    }

    #[test]
    fn tolerance_above_entry_gradient_returns_start() {
        let cfg = TrustRegionConfig {
            eps_th: 10.0,
            ..Default::default()
        };
        let (sol, trace) = trust_region_solve(&bowl(), &[1.0, 1.0], &cfg).unwrap();
        assert_eq!(sol.x, vec![1.0, 1.0]);
        assert_eq!(trace.accepted_count(), 0);
        assert!(sol.converged);
    }

    #[test]
    fn non_finite_start_carries_trace() {
        let f = ObjectiveFn::new(1, |x| if x[0] > 0.5 { f64::NAN } else { x[0] * x[0] }).unwrap();
        match trust_region_solve(&f, &[1.0], &TrustRegionConfig::default()) {
            Err(Error::NonFinite { iteration, trace }) => {
                assert_eq!(iteration, 0);
                assert!(trace.is_empty());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nan_trial_is_rejected_not_fatal() {
        let f = ObjectiveFn::new(1, |x| if x[0] < -0.5 { f64::NAN } else { (x[0] + 0.4).powi(2) })
            .unwrap()
            .with_gradient(|x| vec![2.0 * (x[0] + 0.4)]);
        let cfg = TrustRegionConfig {
            delta0: 10.0,
            ..Default::default()
        };
        let (sol, _) = trust_region_solve(&f, &[2.0], &cfg).unwrap();
        assert!((sol.x[0] + 0.4).abs() < 1e-6);
    }

    #[test]
    fn csv_header() {
        let (_, trace) = trust_region_solve(&bowl(), &[1.0, 1.0], &TrustRegionConfig::default()).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("iter,objective,grad_norm,radius,ratio,accepted\n"));
    }
}
