//! Diagnostics on a latent four-way model `(X, Y, Z, M)`: the per-`z` split of
//! `I(X;Y|Z)`, the log-ratio field between `P(Y|Z)` and `P(X|Z)`, and the
//! equivocation-constrained maximization of `I(X;Y|Z)` over a reweighting of
//! the accessible `z` slices.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{entropy_of, kl_of, mi_of, SUM_TOL};
use crate::solvers::{trust_region_solve, ObjectiveFn, TrustRegionConfig};

/// Slack on the equivocation band of a reported optimum.
pub const BAND_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatentRaw", into = "LatentRaw")]
pub struct LatentModel {
    dims: [usize; 4],
    table: Vec<f64>,
    theta: [f64; 4],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct LatentRaw {
    /// `[|X|, |Y|, |Z|, |M|]`.
    dims: [usize; 4],
    /// Row-major `P(x, y, z, m)`.
    table: Vec<f64>,
    #[serde(default = "unit_theta")]
    theta: [f64; 4],
}

fn unit_theta() -> [f64; 4] {
    [1.0; 4]
}

impl TryFrom<LatentRaw> for LatentModel {
    type Error = Error;

    fn try_from(r: LatentRaw) -> Result<Self> {
        LatentModel::new(r.dims, r.table, r.theta)
    }
}

impl From<LatentModel> for LatentRaw {
    fn from(m: LatentModel) -> Self {
        LatentRaw { dims: m.dims, table: m.table, theta: m.theta }
    }
}

impl LatentModel {
    pub fn new(dims: [usize; 4], table: Vec<f64>, theta: [f64; 4]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::validation("dims: every alphabet must be non-empty"));
        }
        let len: usize = dims.iter().product();
        if table.len() != len {
            return Err(Error::validation(format!("table: {} entries, expected {len}", table.len())));
        }
        if let Some(i) = table.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::validation(format!("table[{i}]: not a probability")));
        }
        let sum: f64 = table.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::validation(format!("table: sums to {sum}")));
        }
        if let Some(i) = theta.iter().position(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::validation(format!("theta[{i}]: must be >= 0")));
        }
        Ok(LatentModel { dims, table, theta })
    }

    pub fn normalized(dims: [usize; 4], weights: Vec<f64>, theta: [f64; 4]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::validation("weights: need a positive finite total"));
        }
        Self::new(dims, weights.into_iter().map(|w| w / sum).collect(), theta)
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn theta(&self) -> [f64; 4] {
        self.theta
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.table
    }

    pub fn get(&self, x: usize, y: usize, z: usize, m: usize) -> f64 {
        let [_, ny, nz, nm] = self.dims;
        self.table[((x * ny + y) * nz + z) * nm + m]
    }

    fn margin(&self, keep: &[usize]) -> Vec<f64> {
        let shape: Vec<usize> = keep.iter().map(|&a| self.dims[a]).collect();
        let mut out = vec![0.0; shape.iter().product()];
        let [nx, ny, nz, nm] = self.dims;
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    for m in 0..nm {
                        let idx = [x, y, z, m];
                        let flat = keep.iter().zip(&shape).fold(0, |acc, (&a, &s)| acc * s + idx[a]);
                        out[flat] += self.get(x, y, z, m);
                    }
                }
            }
        }
        out
    }

    pub fn z_marginal(&self) -> Vec<f64> {
        self.margin(&[2])
    }

    /// `P(x, y, z)` as a flat `[x][y][z]` table.
    pub fn xyz_margin(&self) -> Vec<f64> {
        self.margin(&[0, 1, 2])
    }

    /// Roles of `X` and `Y` exchanged.
    pub fn swap_xy(&self) -> LatentModel {
        let [nx, ny, nz, nm] = self.dims;
        let mut table = Vec::with_capacity(self.table.len());
        for y in 0..ny {
            for x in 0..nx {
                for z in 0..nz {
                    for m in 0..nm {
                        table.push(self.get(x, y, z, m));
                    }
                }
            }
        }
        let [t0, t1, t2, t3] = self.theta;
        LatentModel { dims: [ny, nx, nz, nm], table, theta: [t0, t2, t1, t3] }
    }

    /// Replace `P(z)` by `weights`, keeping every `P(x, y, m | z)`.
    pub fn reweight_z(&self, weights: &[f64]) -> Result<LatentModel> {
        let [nx, ny, nz, nm] = self.dims;
        if weights.len() != nz {
            return Err(Error::validation(format!("weights: {} entries, expected {nz}", weights.len())));
        }
        let pz = self.z_marginal();
        for (z, (&w, &p)) in weights.iter().zip(&pz).enumerate() {
            if w > 0.0 && p == 0.0 {
                return Err(Error::validation(format!("weights[{z}]: slice has no conditional law")));
            }
        }
        let mut table = self.table.clone();
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    for m in 0..nm {
                        let i = ((x * ny + y) * nz + z) * nm + m;
                        table[i] = if pz[z] > 0.0 { self.table[i] / pz[z] * weights[z] } else { 0.0 };
                    }
                }
            }
        }
        LatentModel::new(self.dims, table, self.theta)
    }

    /// `I(X;Y|Z=z)` and `H(M|Z=z)` per slice, zero on empty slices.
    fn slice_stats(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let [nx, ny, nz, _] = self.dims;
        let pz = self.z_marginal();
        let xyz = self.xyz_margin();
        let zm = self.margin(&[2, 3]);
        let nm = self.dims[3];
        let mut info = vec![0.0; nz];
        let mut equiv = vec![0.0; nz];
        for z in 0..nz {
            if pz[z] == 0.0 {
                continue;
            }
            let slice: Vec<f64> = (0..nx * ny).map(|i| xyz[i * nz + z] / pz[z]).collect();
            info[z] = mi_of(&slice, nx, ny);
            let mz: Vec<f64> = zm[z * nm..(z + 1) * nm].iter().map(|v| v / pz[z]).collect();
            equiv[z] = entropy_of(&mz);
        }
        (pz, info, equiv)
    }

    /// `H(M|Z)` in bits.
    pub fn equivocation(&self) -> f64 {
        let (pz, _, h) = self.slice_stats();
        pz.iter().zip(&h).map(|(p, h)| p * h).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SliceContribution {
    pub z: usize,
    pub p_z: f64,
    /// `P(z) · D(P(X,Y|z) ‖ P(X|z) P(Y|z))`.
    pub contribution: f64,
    /// `P(z) · D(Σ_y P(X,y|z) ‖ Σ_y P(X|z) P(y|z))`: the sum over `y` moved
    /// inside both arguments.
    pub summed_inside: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecompositionReport {
    pub slices: Vec<SliceContribution>,
    pub total: f64,
}

impl DecompositionReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["z", "p_z", "contribution", "summed_inside"])?;
        for s in &self.slices {
            out.write_record([
                s.z.to_string(),
                format!("{:.12e}", s.p_z),
                format!("{:.12e}", s.contribution),
                format!("{:.12e}", s.summed_inside),
            ])?;
        }
        out.write_record(["total".into(), String::new(), format!("{:.12e}", self.total), String::new()])?;
        out.flush()?;
        Ok(())
    }
}

pub fn cmi_decomposition_report(m: &LatentModel) -> DecompositionReport {
    let [nx, ny, nz, _] = m.dims;
    let xyz = m.xyz_margin();
    let pz = m.z_marginal();
    let mut slices = Vec::with_capacity(nz);
    for z in 0..nz {
        let (mut contribution, mut summed_inside) = (0.0, 0.0);
        if pz[z] > 0.0 {
            let p = |x: usize, y: usize| xyz[(x * ny + y) * nz + z] / pz[z];
            let px: Vec<f64> = (0..nx).map(|x| (0..ny).map(|y| p(x, y)).sum()).collect();
            let py: Vec<f64> = (0..ny).map(|y| (0..nx).map(|x| p(x, y)).sum()).collect();
            let mut d = 0.0;
            for x in 0..nx {
                for y in 0..ny {
                    let v = p(x, y);
                    if v > 0.0 {
                        d += v * (v / (px[x] * py[y])).log2();
                    }
                }
            }
            contribution = pz[z] * d;
            // Σ_y P(x,y|z) = P(x|z) and Σ_y P(x|z) P(y|z) = P(x|z)
            let outer: Vec<f64> = (0..nx).map(|x| (0..ny).map(|y| px[x] * py[y]).sum()).collect();
            summed_inside = pz[z] * kl_of(&px, &outer).unwrap_or(f64::INFINITY);
        }
        slices.push(SliceContribution { z, p_z: pz[z], contribution, summed_inside });
    }
    let total = slices.iter().map(|s| s.contribution).sum();
    DecompositionReport { slices, total }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FieldCell {
    pub y: usize,
    pub x: usize,
    pub z: usize,
    /// `log2 P(y|z) − log2 P(x|z)`; `None` when either side vanishes.
    pub log_ratio: Option<f64>,
    /// `θ1 D(P(M|y) ‖ P(M|z)) / θ2 D(P(M|x) ‖ P(M|z))`; `None` when the
    /// denominator is zero or either divergence is undefined.
    pub kl_ratio: Option<f64>,
}

impl FieldCell {
    pub fn defined(&self) -> bool {
        self.log_ratio.is_some() && self.kl_ratio.is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    NonDecreasing,
    NonIncreasing,
}

/// Maximal run of cells `x_start..=x_end` at fixed `(z, y)` along which both
/// fields move the same way.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SameDirectionRun {
    pub z: usize,
    pub y: usize,
    pub x_start: usize,
    pub x_end: usize,
    pub direction: Direction,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogRatioField {
    pub dims: [usize; 3],
    /// Ordered by `(z, y, x)`.
    pub cells: Vec<FieldCell>,
    pub runs: Vec<SameDirectionRun>,
}

impl LogRatioField {
    pub fn cell(&self, y: usize, x: usize, z: usize) -> &FieldCell {
        let [nx, ny, _] = self.dims;
        &self.cells[(z * ny + y) * nx + x]
    }

    pub fn undefined_count(&self) -> usize {
        self.cells.iter().filter(|c| !c.defined()).count()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let tag = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.12e}"));
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["y", "x", "z", "log_ratio", "kl_ratio"])?;
        for c in &self.cells {
            out.write_record([c.y.to_string(), c.x.to_string(), c.z.to_string(), tag(c.log_ratio), tag(c.kl_ratio)])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn step_direction(d1: f64, d2: f64) -> Option<Option<Direction>> {
    match (d1 >= 0.0 && d2 >= 0.0, d1 <= 0.0 && d2 <= 0.0) {
        (true, true) => Some(None),
        (true, false) => Some(Some(Direction::NonDecreasing)),
        (false, true) => Some(Some(Direction::NonIncreasing)),
        (false, false) => None,
    }
}

fn scan_runs(cells: &[FieldCell], z: usize, y: usize, out: &mut Vec<SameDirectionRun>) {
    let mut open: Option<(usize, Option<Direction>)> = None;
    let close = |start: usize, end: usize, dir: Option<Direction>, out: &mut Vec<SameDirectionRun>| {
        if end > start {
            out.push(SameDirectionRun {
                z,
                y,
                x_start: start,
                x_end: end,
                direction: dir.unwrap_or(Direction::NonDecreasing),
            });
        }
    };
    for x in 1..cells.len() {
        let (a, b) = (&cells[x - 1], &cells[x]);
        let step = match (a.log_ratio, a.kl_ratio, b.log_ratio, b.kl_ratio) {
            (Some(l0), Some(k0), Some(l1), Some(k1)) => step_direction(l1 - l0, k1 - k0),
            _ => None,
        };
        match (open, step) {
            (Some((s, dir)), Some(d)) if d.is_none() || dir.is_none() || d == dir => {
                open = Some((s, dir.or(d)));
            }
            (prev, step) => {
                if let Some((s, dir)) = prev {
                    close(s, x - 1, dir, out);
                }
                open = step.map(|d| (x - 1, d));
            }
        }
    }
    if let Some((s, dir)) = open {
        close(s, cells.len() - 1, dir, out);
    }
}

pub fn log_ratio_field(m: &LatentModel) -> Result<LogRatioField> {
    let [t1, t2] = [m.theta[1], m.theta[2]];
    if !(t2 > 0.0) {
        return Err(Error::validation("theta[2]: must be positive"));
    }
    let [nx, ny, nz, nm] = m.dims;
    let pz = m.z_marginal();
    let xz = m.margin(&[0, 2]);
    let yz = m.margin(&[1, 2]);
    let conditional = |joint: Vec<f64>, rows: usize| -> Vec<Option<Vec<f64>>> {
        (0..rows)
            .map(|r| {
                let row = &joint[r * nm..(r + 1) * nm];
                let s: f64 = row.iter().sum();
                (s > 0.0).then(|| row.iter().map(|v| v / s).collect())
            })
            .collect()
    };
    let m_given_x = conditional(m.margin(&[0, 3]), nx);
    let m_given_y = conditional(m.margin(&[1, 3]), ny);
    let m_given_z = conditional(m.margin(&[2, 3]), nz);
    let mut cells = Vec::with_capacity(nx * ny * nz);
    let mut runs = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            let start = cells.len();
            for x in 0..nx {
                let (log_ratio, kl_ratio) = if pz[z] > 0.0 {
                    // P(z) cancels; leaving it out keeps the swap exact
                    let (py, px) = (yz[y * nz + z], xz[x * nz + z]);
                    let lr = (py > 0.0 && px > 0.0).then(|| py.log2() - px.log2());
                    let kr = match (&m_given_y[y], &m_given_x[x], &m_given_z[z]) {
                        (Some(my), Some(mx), Some(mz)) => match (kl_of(my, mz), kl_of(mx, mz)) {
                            (Ok(num), Ok(den)) if den > 0.0 => Some(t1 * num / (t2 * den)),
                            _ => None,
                        },
                        _ => None,
                    };
                    (lr, kr)
                } else {
                    (None, None)
                };
                cells.push(FieldCell { y, x, z, log_ratio, kl_ratio });
            }
            scan_runs(&cells[start..], z, y, &mut runs);
        }
    }
    Ok(LogRatioField { dims: [nx, ny, nz], cells, runs })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct AccessMask {
    accessible: Vec<usize>,
}

impl TryFrom<Vec<usize>> for AccessMask {
    type Error = Error;

    fn try_from(mut accessible: Vec<usize>) -> Result<Self> {
        let n = accessible.len();
        accessible.sort_unstable();
        accessible.dedup();
        if accessible.len() != n {
            return Err(Error::validation("accessible: duplicate index"));
        }
        Ok(AccessMask { accessible })
    }
}

impl From<AccessMask> for Vec<usize> {
    fn from(m: AccessMask) -> Self {
        m.accessible
    }
}

impl AccessMask {
    pub fn new(accessible: Vec<usize>) -> Result<Self> {
        Self::try_from(accessible)
    }

    pub fn all(nz: usize) -> Self {
        AccessMask { accessible: (0..nz).collect() }
    }

    pub fn accessible(&self) -> &[usize] {
        &self.accessible
    }

    /// Complement within `0..nz`.
    pub fn inaccessible(&self, nz: usize) -> Vec<usize> {
        (0..nz).filter(|z| !self.accessible.contains(z)).collect()
    }

    pub fn validate(&self, nz: usize) -> Result<()> {
        match self.accessible.iter().find(|&&z| z >= nz) {
            Some(z) => Err(Error::validation(format!("accessible: index {z} outside 0..{nz}"))),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum CmiMaxOutcome {
    Optimal {
        /// Full `P'(z)`, inaccessible entries unchanged.
        weights: Vec<f64>,
        cmi: f64,
        equivocation: f64,
        /// Best feasible point on the simplex grid.
        grid_cmi: Option<f64>,
        grid_resolution: usize,
    },
    /// No reweighting reaches the band; the reachable equivocation range.
    Infeasible { min_equivocation: f64, max_equivocation: f64 },
}

impl CmiMaxOutcome {
    pub fn cmi(&self) -> Option<f64> {
        match self {
            CmiMaxOutcome::Optimal { cmi, .. } => Some(*cmi),
            CmiMaxOutcome::Infeasible { .. } => None,
        }
    }
}

const GRID_RESOLUTION: usize = 64;
const GRID_CAP: usize = 250_000;

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Compositions of `total` into `parts` non-negative integers.
fn compositions(total: usize, parts: usize, f: &mut impl FnMut(&[usize])) {
    fn go(rest: usize, slot: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if slot + 1 == cur.len() {
            cur[slot] = rest;
            f(cur);
            return;
        }
        for v in 0..=rest {
            cur[slot] = v;
            go(rest - v, slot + 1, cur, f);
        }
    }
    let mut cur = vec![0; parts];
    go(total, 0, &mut cur, f);
}

struct Lin {
    mass: f64,
    info: Vec<f64>,
    equiv: Vec<f64>,
    base_info: f64,
    base_equiv: f64,
}

impl Lin {
    fn eval(&self, w: &[f64]) -> (f64, f64) {
        let i = self.base_info + w.iter().zip(&self.info).map(|(a, b)| a * b).sum::<f64>();
        let e = self.base_equiv + w.iter().zip(&self.equiv).map(|(a, b)| a * b).sum::<f64>();
        (i, e)
    }
}

/// Maximize `I(X;Y|Z)` over `P(z)` on the accessible slices (their total mass
/// kept, inaccessible slices frozen) subject to `g1 ≤ H(M|Z) ≤ g2`.
///
/// Grid search, a trust-region polish on a softmax chart, then the vertices
/// of the feasible polytope; the best feasible point wins.
pub fn constrained_cmi_max(m: &LatentModel, mask: &AccessMask, g1: f64, g2: f64) -> Result<CmiMaxOutcome> {
    let nz = m.dims[2];
    mask.validate(nz)?;
    if !(g1.is_finite() && g2.is_finite() && g1 <= g2) {
        return Err(Error::validation(format!("g1/g2: need finite g1 <= g2, got [{g1}, {g2}]")));
    }
    let (pz, info, equiv) = m.slice_stats();
    let free: Vec<usize> = mask.accessible.iter().copied().filter(|&z| pz[z] > 0.0).collect();
    let mut lin = Lin { mass: 0.0, info: Vec::new(), equiv: Vec::new(), base_info: 0.0, base_equiv: 0.0 };
    for z in 0..nz {
        if free.contains(&z) {
            lin.mass += pz[z];
            lin.info.push(info[z]);
            lin.equiv.push(equiv[z]);
        } else {
            lin.base_info += pz[z] * info[z];
            lin.base_equiv += pz[z] * equiv[z];
        }
    }
    let d = free.len();
    let feasible = |e: f64| e >= g1 - BAND_TOL && e <= g2 + BAND_TOL;
    let mut best: Option<(Vec<f64>, f64, f64)> = None;
    let offer = |w: Vec<f64>, best: &mut Option<(Vec<f64>, f64, f64)>| {
        let (i, e) = lin.eval(&w);
        if feasible(e) && best.as_ref().is_none_or(|b| i > b.1) {
            *best = Some((w, i, e));
        }
    };

    if d == 0 {
        let (i, e) = lin.eval(&[]);
        return Ok(if feasible(e) {
            CmiMaxOutcome::Optimal { weights: pz, cmi: i, equivocation: e, grid_cmi: Some(i), grid_resolution: 0 }
        } else {
            CmiMaxOutcome::Infeasible { min_equivocation: e, max_equivocation: e }
        });
    }

    let mut res = GRID_RESOLUTION;
    while res > 1 && binomial(res + d - 1, d - 1) > GRID_CAP {
        res /= 2;
    }
    let mut grid_best: Option<(Vec<f64>, f64, f64)> = None;
    compositions(res, d, &mut |c| {
        let w: Vec<f64> = c.iter().map(|&k| lin.mass * k as f64 / res as f64).collect();
        offer(w, &mut grid_best);
    });
    let grid_cmi = grid_best.as_ref().map(|b| b.1);
    best.clone_from(&grid_best);

    if d > 1 {
        if let Some((w0, _, _)) = &grid_best {
            let t0: Vec<f64> = w0.iter().map(|w| (w / lin.mass).max(1e-6).ln()).collect();
            let mass = lin.mass;
            let chart = move |t: &[f64]| -> Vec<f64> {
                let mx = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = t.iter().map(|v| (v - mx).exp()).collect();
                let s: f64 = e.iter().sum();
                e.iter().map(|v| mass * v / s).collect()
            };
            let (li, le, bi, be) = (lin.info.clone(), lin.equiv.clone(), lin.base_info, lin.base_equiv);
            let chart_f = chart.clone();
            let f = ObjectiveFn::new(d, move |t| {
                let w = chart_f(t);
                let i = bi + w.iter().zip(&li).map(|(a, b)| a * b).sum::<f64>();
                let e = be + w.iter().zip(&le).map(|(a, b)| a * b).sum::<f64>();
                let v = (g1 - e).max(0.0) + (e - g2).max(0.0);
                -i + 1e3 * v * v
            })?;
            let cfg = TrustRegionConfig { max_iter: 200, ..TrustRegionConfig::default() };
            if let Ok((sol, _)) = trust_region_solve(&f, &t0, &cfg) {
                offer(chart(&sol.x), &mut best);
            }
        }
    }

    // vertices of {scaled simplex} ∩ {g1 ≤ equivocation ≤ g2}
    let corner = |i: usize| {
        let mut w = vec![0.0; d];
        w[i] = lin.mass;
        w
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..d {
        let e = lin.eval(&corner(i)).1;
        lo = lo.min(e);
        hi = hi.max(e);
        offer(corner(i), &mut best);
        for j in i + 1..d {
            let (ei, ej) = (lin.eval(&corner(i)).1, lin.eval(&corner(j)).1);
            if ei == ej {
                continue;
            }
            for g in [g1, g2] {
                let t = (g - ei) / (ej - ei);
                if (0.0..=1.0).contains(&t) {
                    let mut w = vec![0.0; d];
                    w[i] = lin.mass * (1.0 - t);
                    w[j] = lin.mass * t;
                    offer(w, &mut best);
                }
            }
        }
    }

    Ok(match best {
        Some((w, cmi, e)) => {
            let mut weights = pz.clone();
            for &z in &mask.accessible {
                weights[z] = 0.0;
            }
            for (&z, v) in free.iter().zip(&w) {
                weights[z] = *v;
            }
            CmiMaxOutcome::Optimal { weights, cmi, equivocation: e, grid_cmi, grid_resolution: res }
        }
        None => CmiMaxOutcome::Infeasible { min_equivocation: lo, max_equivocation: hi },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{conditional_mutual_information, JointPmf3};

    fn cmi_oracle(m: &LatentModel) -> f64 {
        let [nx, ny, nz, _] = m.dims();
        conditional_mutual_information(&JointPmf3::from_flat([nx, ny, nz], m.xyz_margin()).unwrap())
    }

    fn sample() -> LatentModel {
        let w: Vec<f64> = (0..2 * 2 * 3 * 2).map(|i| 1.0 + ((i * 7 + 3) % 11) as f64).collect();
        LatentModel::normalized([2, 2, 3, 2], w, [1.0, 1.0, 2.0, 1.0]).unwrap()
    }

    #[test]
    fn decomposition_matches_cmi() {
        let m = sample();
        let r = cmi_decomposition_report(&m);
        assert!((r.total - cmi_oracle(&m)).abs() < 1e-12);
        assert!(r.slices.iter().all(|s| s.summed_inside.abs() < 1e-12));
    }

    #[test]
    fn independent_slices_contribute_nothing() {
        // P(x,y,z,m) = P(z) P(x|z) P(y|z) / 2
        let mut w = Vec::new();
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..2 {
                    for _ in 0..2 {
                        w.push([0.3, 0.7][x] * [0.6, 0.4][y] * [0.5, 0.5][z]);
                    }
                }
            }
        }
        let m = LatentModel::normalized([2, 2, 2, 2], w, [1.0; 4]).unwrap();
        let field = log_ratio_field(&m).unwrap();
        assert_eq!(field.undefined_count(), field.cells.len());
        for s in cmi_decomposition_report(&m).slices {
            assert!(s.contribution.abs() < 1e-15);
        }
    }

    #[test]
    fn swap_negates_log_ratio() {
        let m = sample();
        let (a, b) = (log_ratio_field(&m).unwrap(), log_ratio_field(&m.swap_xy()).unwrap());
        for c in &a.cells {
            let d = b.cell(c.x, c.y, c.z);
            assert_eq!(c.log_ratio.map(|v| -v), d.log_ratio);
        }
    }

    #[test]
    fn runs_scan() {
        let cell = |x, l: f64, k: f64| FieldCell { y: 0, x, z: 0, log_ratio: Some(l), kl_ratio: Some(k) };
        let cells = [cell(0, 0.0, 0.0), cell(1, 1.0, 1.0), cell(2, 2.0, 1.0), cell(3, 1.0, 2.0), cell(4, 0.0, 1.0)];
        let mut out = Vec::new();
        scan_runs(&cells, 0, 0, &mut out);
        assert_eq!(out.len(), 2);
        assert_eq!((out[0].x_start, out[0].x_end, out[0].direction), (0, 2, Direction::NonDecreasing));
        assert_eq!((out[1].x_start, out[1].x_end, out[1].direction), (3, 4, Direction::NonIncreasing));
    }

    #[test]
    fn single_accessible_slice_is_trivial() {
        let m = sample();
        let out = constrained_cmi_max(&m, &AccessMask::new(vec![1]).unwrap(), 0.0, 10.0).unwrap();
        assert!((out.cmi().unwrap() - cmi_oracle(&m)).abs() < 1e-12);
    }

    #[test]
    fn incumbent_stays_feasible() {
        let m = sample();
        let e = m.equivocation();
        let out = constrained_cmi_max(&m, &AccessMask::all(3), e, e).unwrap();
        let CmiMaxOutcome::Optimal { cmi, equivocation, weights, .. } = out else {
            panic!("infeasible")
        };
        assert!(cmi >= cmi_oracle(&m) - 1e-9);
        assert!((equivocation - e).abs() <= BAND_TOL);
        assert!((cmi_oracle(&m.reweight_z(&weights).unwrap()) - cmi).abs() < 1e-9);
    }

    #[test]
    fn empty_band_is_typed() {
        let out = constrained_cmi_max(&sample(), &AccessMask::all(3), 5.0, 6.0).unwrap();
        assert!(matches!(out, CmiMaxOutcome::Infeasible { .. }));
        assert!(constrained_cmi_max(&sample(), &AccessMask::all(3), 1.0, 0.5).is_err());
        assert!(AccessMask::new(vec![0, 0]).is_err());
    }
}
