//! Discrete-time stochastic linear plant with static output feedback:
//!
//! `x(k+1) = A1 x(k) + A2 u(k) + n1(k)`, `y(k) = A3 x(k) + n2(k)`, `u(k) = A4 y(k)`.
//!
//! Plus the Kalman rank tests and the closed-loop spectral radius.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PSD_TOL: f64 = 1e-10;
const RANK_REL_TOL: f64 = 1e-10;

/// Row-major nested form, the JSON shape of every plant matrix.
type Rows = Vec<Vec<f64>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlantRows", into = "PlantRows")]
pub struct LinearPlant {
    a1: DMatrix<f64>,
    a2: DMatrix<f64>,
    a3: DMatrix<f64>,
    a4: DMatrix<f64>,
    process_noise: DMatrix<f64>,
    observation_noise: DMatrix<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct PlantRows {
    a1: Rows,
    a2: Rows,
    a3: Rows,
    a4: Rows,
    #[serde(default)]
    process_noise: Option<Rows>,
    #[serde(default)]
    observation_noise: Option<Rows>,
}

fn to_matrix(name: &str, rows: &Rows, cols_hint: usize) -> Result<DMatrix<f64>> {
    let cols = rows.first().map_or(cols_hint, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != cols) {
        return Err(Error::validation(format!("{name}[{i}]: ragged row")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::validation(format!("{name}: non-finite entry")));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), cols, rows.iter().flatten().copied()))
}

fn to_rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl TryFrom<PlantRows> for LinearPlant {
    type Error = Error;

    fn try_from(r: PlantRows) -> Result<Self> {
        let a1 = to_matrix("a1", &r.a1, 0)?;
        let n = a1.nrows();
        let a2 = to_matrix("a2", &r.a2, 0)?;
        let a3 = to_matrix("a3", &r.a3, n)?;
        let j = a3.nrows();
        let a4 = to_matrix("a4", &r.a4, j)?;
        let pn = match &r.process_noise {
            Some(rows) => to_matrix("process_noise", rows, n)?,
            None => DMatrix::zeros(n, n),
        };
        let on = match &r.observation_noise {
            Some(rows) => to_matrix("observation_noise", rows, j)?,
            None => DMatrix::zeros(j, j),
        };
        LinearPlant::new(a1, a2, a3, a4, pn, on)
    }
}

impl From<LinearPlant> for PlantRows {
    fn from(p: LinearPlant) -> Self {
        PlantRows {
            a1: to_rows(&p.a1),
            a2: to_rows(&p.a2),
            a3: to_rows(&p.a3),
            a4: to_rows(&p.a4),
            process_noise: Some(to_rows(&p.process_noise)),
            observation_noise: Some(to_rows(&p.observation_noise)),
        }
    }
}

fn check_psd(name: &str, m: &DMatrix<f64>) -> Result<()> {
    let asym = (m - m.transpose()).amax();
    if asym > PSD_TOL {
        return Err(Error::validation(format!("{name}: not symmetric ({asym:e})")));
    }
    if m.nrows() > 0 {
        let min = m.clone().symmetric_eigen().eigenvalues.min();
        if min < -PSD_TOL {
            return Err(Error::validation(format!("{name}: negative eigenvalue {min:e}")));
        }
    }
    Ok(())
}

/// Square root `L` with `L Lᵀ = m` for a symmetric PSD `m`.
fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 {
        return m.clone();
    }
    let eig = m.clone().symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

impl LinearPlant {
    /// `a1: n×n`, `a2: n×m`, `a3: j×n`, `a4: m×j`, covariances `n×n` and `j×j`.
    pub fn new(
        a1: DMatrix<f64>,
        a2: DMatrix<f64>,
        a3: DMatrix<f64>,
        a4: DMatrix<f64>,
        process_noise: DMatrix<f64>,
        observation_noise: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a1.nrows();
        if n == 0 || a1.ncols() != n {
            return Err(Error::validation(format!("a1: {}x{} is not square", a1.nrows(), a1.ncols())));
        }
        if a2.nrows() != n {
            return Err(Error::validation(format!("a2: {} rows, expected {n}", a2.nrows())));
        }
        if a3.ncols() != n {
            return Err(Error::validation(format!("a3: {} columns, expected {n}", a3.ncols())));
        }
        let (m, j) = (a2.ncols(), a3.nrows());
        if a4.nrows() != m || a4.ncols() != j {
            return Err(Error::validation(format!(
                "a4: {}x{}, expected {m}x{j}",
                a4.nrows(),
                a4.ncols()
            )));
        }
        if process_noise.shape() != (n, n) {
            return Err(Error::validation(format!("process_noise: expected {n}x{n}")));
        }
        if observation_noise.shape() != (j, j) {
            return Err(Error::validation(format!("observation_noise: expected {j}x{j}")));
        }
        check_psd("process_noise", &process_noise)?;
        check_psd("observation_noise", &observation_noise)?;
        Ok(LinearPlant { a1, a2, a3, a4, process_noise, observation_noise })
    }

    /// Noise-free plant.
    pub fn deterministic(a1: DMatrix<f64>, a2: DMatrix<f64>, a3: DMatrix<f64>, a4: DMatrix<f64>) -> Result<Self> {
        let (n, j) = (a1.nrows(), a3.nrows());
        Self::new(a1, a2, a3, a4, DMatrix::zeros(n, n), DMatrix::zeros(j, j))
    }

    pub fn states(&self) -> usize {
        self.a1.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.a2.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.a3.nrows()
    }

    pub fn a1(&self) -> &DMatrix<f64> {
        &self.a1
    }

    pub fn a2(&self) -> &DMatrix<f64> {
        &self.a2
    }

    pub fn a3(&self) -> &DMatrix<f64> {
        &self.a3
    }

    pub fn a4(&self) -> &DMatrix<f64> {
        &self.a4
    }

    /// `A1 + A2 A4 A3`.
    pub fn closed_loop(&self) -> DMatrix<f64> {
        &self.a1 + &self.a2 * &self.a4 * &self.a3
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// `horizon + 1` states, starting at `x0`.
    pub states: Vec<DVector<f64>>,
    pub observations: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    /// Header `k,x0..,y0..,u0..`; the final row carries the state only.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let (n, j, m) = (
            self.states[0].len(),
            self.observations.first().map_or(0, |v| v.len()),
            self.controls.first().map_or(0, |v| v.len()),
        );
        let mut header = vec!["k".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..j).map(|i| format!("y{i}")));
        header.extend((0..m).map(|i| format!("u{i}")));
        out.write_record(&header)?;
        for (k, x) in self.states.iter().enumerate() {
            let mut rec = vec![k.to_string()];
            rec.extend(x.iter().map(|v| format!("{v:.12e}")));
            match (self.observations.get(k), self.controls.get(k)) {
                (Some(y), Some(u)) => {
                    rec.extend(y.iter().map(|v| format!("{v:.12e}")));
                    rec.extend(u.iter().map(|v| format!("{v:.12e}")));
                }
                _ => rec.extend(std::iter::repeat_n(String::new(), j + m)),
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn gaussian(factor: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let z = DVector::from_fn(factor.ncols(), |_, _| StandardNormal.sample(rng));
    factor * z
}

pub fn simulate(p: &LinearPlant, x0: &DVector<f64>, horizon: usize, seed: u64) -> Result<Trajectory> {
    if x0.len() != p.states() {
        return Err(Error::validation(format!("x0: length {}, expected {}", x0.len(), p.states())));
    }
    if horizon == 0 {
        return Err(Error::validation("horizon: must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (l1, l2) = (psd_factor(&p.process_noise), psd_factor(&p.observation_noise));
    let mut t = Trajectory {
        states: Vec::with_capacity(horizon + 1),
        observations: Vec::with_capacity(horizon),
        controls: Vec::with_capacity(horizon),
    };
    let mut x = x0.clone();
    for step in 0..horizon {
        let y = &p.a3 * &x + gaussian(&l2, &mut rng);
        let u = &p.a4 * &y;
        let next = &p.a1 * &x + &p.a2 * &u + gaussian(&l1, &mut rng);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: step + 1 });
        }
        t.states.push(std::mem::replace(&mut x, next));
        t.observations.push(y);
        t.controls.push(u);
    }
    t.states.push(x);
    Ok(t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RankTest {
    pub rank: usize,
    pub full: bool,
}

/// Rank by singular values above `1e-10 · σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_REL_TOL * max).count()
}

/// `[A2, A1 A2, …, A1^{n−1} A2]`.
pub fn controllability_matrix(a1: &DMatrix<f64>, a2: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = (a1.nrows(), a2.ncols());
    let mut out = DMatrix::zeros(n, n * m);
    let mut block = a2.clone();
    for k in 0..n {
        out.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a1 * block;
    }
    out
}

/// `[A3; A3 A1; …; A3 A1^{n−1}]`.
pub fn observability_matrix(a1: &DMatrix<f64>, a3: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, j) = (a1.nrows(), a3.nrows());
    let mut out = DMatrix::zeros(n * j, n);
    let mut block = a3.clone();
    for k in 0..n {
        out.view_mut((k * j, 0), (j, n)).copy_from(&block);
        block = block * a1;
    }
    out
}

fn check_square(a1: &DMatrix<f64>) -> Result<usize> {
    if a1.nrows() != a1.ncols() {
        return Err(Error::validation(format!("a1: {}x{} is not square", a1.nrows(), a1.ncols())));
    }
    Ok(a1.nrows())
}

pub fn controllability_rank(a1: &DMatrix<f64>, a2: &DMatrix<f64>) -> Result<RankTest> {
    let n = check_square(a1)?;
    if a2.nrows() != n {
        return Err(Error::validation(format!("a2: {} rows, expected {n}", a2.nrows())));
    }
    let rank = numerical_rank(&controllability_matrix(a1, a2));
    Ok(RankTest { rank, full: rank == n })
}

pub fn observability_rank(a1: &DMatrix<f64>, a3: &DMatrix<f64>) -> Result<RankTest> {
    let n = check_square(a1)?;
    if a3.ncols() != n {
        return Err(Error::validation(format!("a3: {} columns, expected {n}", a3.ncols())));
    }
    let rank = numerical_rank(&observability_matrix(a1, a3));
    Ok(RankTest { rank, full: rank == n })
}

pub fn closed_loop_spectral_radius(p: &LinearPlant) -> f64 {
    p.closed_loop().complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PlantReport {
    pub states: usize,
    pub controllability: RankTest,
    pub observability: RankTest,
    pub spectral_radius: f64,
    pub stable: bool,
}

pub fn plant_report(p: &LinearPlant) -> Result<PlantReport> {
    let rho = closed_loop_spectral_radius(p);
    Ok(PlantReport {
        states: p.states(),
        controllability: controllability_rank(&p.a1, &p.a2)?,
        observability: observability_rank(&p.a1, &p.a3)?,
        spectral_radius: rho,
        stable: rho < 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    #[test]
    fn zero_plant_stays_at_rest() {
        let p = LinearPlant::deterministic(m(2, 2, &[0.3, 1.0, 0.0, 0.2]), m(2, 1, &[1.0, 0.0]), m(1, 2, &[1.0, 1.0]), m(1, 1, &[-0.1]))
            .unwrap();
        let t = simulate(&p, &DVector::zeros(2), 20, 3).unwrap();
        assert_eq!(t.states.len(), 21);
        assert!(t.states.iter().all(|x| x.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn geometric_decay() {
        let p = LinearPlant::deterministic(m(1, 1, &[0.5]), m(1, 1, &[0.0]), m(1, 1, &[0.0]), m(1, 1, &[0.0])).unwrap();
        let t = simulate(&p, &DVector::from_element(1, 1.0), 30, 0).unwrap();
        for (k, x) in t.states.iter().enumerate() {
            assert_eq!(x[0], 0.5f64.powi(k as i32));
        }
    }

    #[test]
    fn feedback_stabilizes() {
        let p = LinearPlant::deterministic(m(1, 1, &[1.1]), m(1, 1, &[1.0]), m(1, 1, &[1.0]), m(1, 1, &[-0.6])).unwrap();
        assert!((closed_loop_spectral_radius(&p) - 0.5).abs() < 1e-12);
        let t = simulate(&p, &DVector::from_element(1, 1.0), 1000, 0).unwrap();
        assert!(t.states.iter().all(|x| x.norm() <= 1.0));
    }

    #[test]
    fn rank_examples() {
        let r = controllability_rank(&DMatrix::identity(2, 2), &m(2, 1, &[1.0, 0.0])).unwrap();
        assert_eq!(r, RankTest { rank: 1, full: false });
        let companion = m(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -0.2, 0.1, 0.4]);
        assert!(controllability_rank(&companion, &m(3, 1, &[0.0, 0.0, 1.0])).unwrap().full);
        assert!(observability_rank(&companion, &DMatrix::identity(3, 3)).unwrap().full);
        assert_eq!(observability_rank(&companion, &DMatrix::zeros(1, 3)).unwrap().rank, 0);
    }

    #[test]
    fn spectra() {
        let p = LinearPlant::deterministic(m(2, 2, &[0.2, 0.0, 0.0, 0.3]), m(2, 1, &[0.0, 0.0]), m(1, 2, &[0.0, 0.0]), m(1, 1, &[0.0]))
            .unwrap();
        assert!((closed_loop_spectral_radius(&p) - 0.3).abs() < 1e-14);
        let nil = LinearPlant::deterministic(m(2, 2, &[0.0, 1.0, 0.0, 0.0]), m(2, 1, &[0.0, 0.0]), m(1, 2, &[0.0, 0.0]), m(1, 1, &[0.0]))
            .unwrap();
        assert!(closed_loop_spectral_radius(&nil) < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(LinearPlant::deterministic(m(2, 2, &[0.0; 4]), m(1, 1, &[0.0]), m(1, 2, &[0.0; 2]), m(1, 1, &[0.0])).is_err());
        let bad_cov = LinearPlant::new(
            m(1, 1, &[0.0]),
            m(1, 1, &[0.0]),
            m(1, 1, &[0.0]),
            m(1, 1, &[0.0]),
            m(1, 1, &[-1.0]),
            m(1, 1, &[0.0]),
        );
        assert!(bad_cov.is_err());
        let json = r#"{"a1":[[0.5]],"a2":[[1.0]],"a3":[[1.0]],"a4":[[0.0]],"process_noise":[[0.01]]}"#;
        let p: LinearPlant = serde_json::from_str(json).unwrap();
        assert_eq!(p.states(), 1);
        assert!(serde_json::from_str::<LinearPlant>(r#"{"a1":[[0.5,1.0]],"a2":[[1.0]],"a3":[[1.0]],"a4":[[0.0]]}"#).is_err());
    }

    #[test]
    fn noisy_runs_repeat() {
        let json = r#"{"a1":[[0.9,0.1],[0.0,0.8]],"a2":[[1.0],[0.5]],"a3":[[1.0,0.0]],"a4":[[-0.2]],
            "process_noise":[[0.01,0.0],[0.0,0.02]],"observation_noise":[[0.05]]}"#;
        let p: LinearPlant = serde_json::from_str(json).unwrap();
        let x0 = DVector::from_vec(vec![1.0, -1.0]);
        let a = simulate(&p, &x0, 50, 11).unwrap();
        assert_eq!(a, simulate(&p, &x0, 50, 11).unwrap());
        assert_ne!(a, simulate(&p, &x0, 50, 12).unwrap());
    }
}
