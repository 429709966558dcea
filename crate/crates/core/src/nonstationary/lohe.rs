//! Lohe (non-Abelian Kuramoto) oscillators on the unit sphere of `C^d`:
//!
//! `iℏ dψ_q/dk = H_q ψ_q + α Σ_{q'} β_{qq'} (ψ_q − ψ_{q'} ⟨ψ_q|ψ_{q'}⟩)`
//!
//! A purely imaginary `α = −iκℏ` with `κ > 0` makes the coupling
//! dissipative and drives the states together; a real `α` only rotates
//! them.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type State = DVector<Complex64>;

const NORM_TOL: f64 = 1e-8;
const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct LoheSystem {
    pub states: Vec<State>,
    pub hamiltonians: Vec<DMatrix<Complex64>>,
    pub hbar: f64,
    pub alpha: Complex64,
    /// `β_{qq'}`, `q × q`.
    pub beta: DMatrix<f64>,
}

impl LoheSystem {
    pub fn validate(&self) -> Result<()> {
        let q = self.states.len();
        if q == 0 {
            return Err(Error::validation("states: need at least one oscillator"));
        }
        let d = self.states[0].len();
        if d == 0 {
            return Err(Error::validation("states: dimension must be >= 1"));
        }
        for (i, s) in self.states.iter().enumerate() {
            if s.len() != d {
                return Err(Error::validation(format!("states[{i}]: dimension {} != {d}", s.len())));
            }
            let n = s.norm();
            if (n - 1.0).abs() > NORM_TOL {
                return Err(Error::validation(format!("states[{i}]: norm {n} is not 1")));
            }
        }
        if self.hamiltonians.len() != q {
            return Err(Error::validation(format!(
                "hamiltonians: {} for {q} oscillators",
                self.hamiltonians.len()
            )));
        }
        for (i, h) in self.hamiltonians.iter().enumerate() {
            if h.nrows() != d || h.ncols() != d {
                return Err(Error::validation(format!("hamiltonians[{i}]: expected {d}x{d}")));
            }
            let dev = (h - h.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            if dev > HERMITIAN_TOL {
                return Err(Error::validation(format!("hamiltonians[{i}]: not Hermitian ({dev:e})")));
            }
        }
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(Error::validation("hbar: must be positive"));
        }
        if self.beta.nrows() != q || self.beta.ncols() != q {
            return Err(Error::validation(format!("beta: expected {q}x{q}")));
        }
        if !self.alpha.re.is_finite() || !self.alpha.im.is_finite() {
            return Err(Error::validation("alpha: must be finite"));
        }
        Ok(())
    }

    fn rhs(&self, psi: &[State]) -> Vec<State> {
        let scale = Complex64::new(0.0, -1.0 / self.hbar);
        psi.iter()
            .enumerate()
            .map(|(q, pq)| {
                let mut acc = &self.hamiltonians[q] * pq;
                if self.alpha != Complex64::new(0.0, 0.0) {
                    let mut coupling = State::zeros(pq.len());
                    for (p, pp) in psi.iter().enumerate() {
                        let b = self.beta[(q, p)];
                        if p == q || b == 0.0 {
                            continue;
                        }
                        let overlap = pq.dotc(pp);
                        coupling += (pq - pp * overlap) * Complex64::new(b, 0.0);
                    }
                    acc += coupling * self.alpha;
                }
                acc * scale
            })
            .collect()
    }
}

fn axpy(base: &[State], k: &[State], h: f64) -> Vec<State> {
    base.iter().zip(k).map(|(b, d)| b + d * Complex64::new(h, 0.0)).collect()
}

/// Classical RK4 with every state renormalized after each step. Returns
/// `steps + 1` snapshots, the first being the initial states.
pub fn lohe_integrate(sys: &LoheSystem, dt: f64, steps: usize) -> Result<Vec<Vec<State>>> {
    sys.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::validation(format!("dt: {dt} must be positive")));
    }
    let mut traj = Vec::with_capacity(steps + 1);
    let mut psi = sys.states.clone();
    traj.push(psi.clone());
    for step in 1..=steps {
        let k1 = sys.rhs(&psi);
        let k2 = sys.rhs(&axpy(&psi, &k1, dt / 2.0));
        let k3 = sys.rhs(&axpy(&psi, &k2, dt / 2.0));
        let k4 = sys.rhs(&axpy(&psi, &k3, dt));
        let mut next = Vec::with_capacity(psi.len());
        for q in 0..psi.len() {
            let inc = (&k1[q] + &k2[q] * Complex64::new(2.0, 0.0) + &k3[q] * Complex64::new(2.0, 0.0) + &k4[q])
                * Complex64::new(dt / 6.0, 0.0);
            let mut s = &psi[q] + inc;
            let n = s.norm();
            if !n.is_finite() || n == 0.0 {
                return Err(Error::NonFiniteState { step });
            }
            s /= Complex64::new(n, 0.0);
            next.push(s);
        }
        psi = next;
        traj.push(psi.clone());
    }
    Ok(traj)
}

/// Norm of the mean state after rotating each state's global phase onto the
/// first one. 1 exactly when all states agree up to phase.
pub fn sync_order(states: &[State]) -> f64 {
    let Some(first) = states.first() else {
        return 0.0;
    };
    let mut mean = State::zeros(first.len());
    for s in states {
        let overlap = first.dotc(s);
        let phase = if overlap.norm() > 0.0 {
            overlap.conj() / overlap.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        mean += s * phase;
    }
    (mean.norm() / states.len() as f64).min(1.0)
}
