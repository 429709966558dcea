//! Batch experiment runners behind the `mirrorwyner` binary.
//!
//! Every runner takes a typed config plus a seed list and returns rows that
//! serialize to CSV with a header. Runs over seeds go through rayon; rows
//! are always emitted in `(seed, grid index)` order, so a fixed config and
//! seed list give byte-identical output.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::divergence::{
    cmi_decomposition_report, constrained_cmi_max, log_ratio_field, AccessMask, CmiMaxOutcome, LatentModel,
};
use crate::equilibrium::{best_response_dynamics, verify_nash, KCutGame, PayoffMode, StrategyProfile};
use crate::error::{Error, Result};
use crate::mirror_game::{
    bernoulli_joint, world_values, EpsilonFloors, Kernels, MirrorGameInstance, MirrorGameSpec, TwinAssignment,
    UncertaintyModel, World, COMPARE_TOL, NULL_TOL, SLOTS,
};
use crate::nonstationary::{
    kl_drift_profile, lohe_integrate, mfg_solve, stackelberg_schedule, stackelberg_solve, sync_order, KlEntry,
    LoheSystem, MfgConfig, StackelbergInstance,
};
use crate::plant::{plant_report, simulate, LinearPlant};
use crate::prob::{entropy, mutual_information, Pmf, PrivacyMapping};
use crate::solvers::{greedy_solve, GreedyConfig};

/// Fewest seeds a convergence CDF is built from.
pub const MIN_CDF_SEEDS: usize = 30;
/// Largest mapping grid enumerated per Bob.
pub const MAX_GRID_POINTS: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Subcommand {
    MiTradeoff,
    SecrecyGap,
    ConvergenceCdf,
    Mfg,
    Lohe,
    Stackelberg,
    Nash,
    Plant,
    Divergence,
}

impl Subcommand {
    pub const ALL: [Subcommand; 9] = [
        Subcommand::MiTradeoff,
        Subcommand::SecrecyGap,
        Subcommand::ConvergenceCdf,
        Subcommand::Mfg,
        Subcommand::Lohe,
        Subcommand::Stackelberg,
        Subcommand::Nash,
        Subcommand::Plant,
        Subcommand::Divergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::MiTradeoff => "mi-tradeoff",
            Subcommand::SecrecyGap => "secrecy-gap",
            Subcommand::ConvergenceCdf => "convergence-cdf",
            Subcommand::Mfg => "mfg",
            Subcommand::Lohe => "lohe",
            Subcommand::Stackelberg => "stackelberg",
            Subcommand::Nash => "nash",
            Subcommand::Plant => "plant",
            Subcommand::Divergence => "divergence",
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subcommand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Subcommand::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown subcommand `{s}`")))
    }
}

/// `base, base + 1, …` with `repetitions` entries.
pub fn seed_list(base: u64, repetitions: usize) -> Vec<u64> {
    (0..repetitions as u64).map(|i| base.wrapping_add(i)).collect()
}

/// Deserializes `text`, reporting the path of the first bad field.
pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Payload { path, message: e.into_inner().to_string() }
    })
}

/// Finite values in scientific notation; infinities and NaN spelled out.
pub fn cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.12e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn opt_cell(v: Option<f64>, tag: &str) -> String {
    v.map_or_else(|| tag.to_string(), cell)
}

/// Generic long-format record: `run,seed,metric,value,meta`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub run: usize,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
    pub meta: String,
}

impl ResultRow {
    fn new(run: usize, seed: u64, metric: impl Into<String>, value: f64, meta: impl Into<String>) -> Self {
        ResultRow { run, seed, metric: metric.into(), value, meta: meta.into() }
    }
}

pub fn write_result_rows<W: Write>(rows: &[ResultRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["run", "seed", "metric", "value", "meta"])?;
    for r in rows {
        out.write_record([r.run.to_string(), r.seed.to_string(), r.metric.clone(), cell(r.value), r.meta.clone()])?;
    }
    out.flush()?;
    Ok(())
}

/// The binary two-Bob instance used by the convergence and trade-off
/// defaults: uniform `S` observed through BSC(0.1) and BSC(0.2).
pub fn reference_instance() -> MirrorGameSpec {
    MirrorGameSpec {
        joints: vec![
            bernoulli_joint(0.5, 0.1).expect("valid crossover"),
            bernoulli_joint(0.5, 0.2).expect("valid crossover"),
        ],
        gamma0: vec![0.5; 2],
        gamma1: vec![1.0; 2],
        gamma2: 0.05,
        gamma3: 0.1,
        theta_levels: [0.8; SLOTS],
        original_alphabet: None,
        virtual_alphabet: 2,
        symbol_values: None,
        extra_conditions: false,
    }
}

/// Every `inputs × outputs` channel whose entries are multiples of
/// `1/resolution`.
pub fn mapping_grid(inputs: usize, outputs: usize, resolution: usize) -> Result<Vec<PrivacyMapping>> {
    if resolution == 0 || inputs == 0 || outputs == 0 {
        return Err(Error::validation("resolution: grid needs positive resolution and alphabets"));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut cur = vec![0usize; outputs];
    fn go(rest: usize, slot: usize, cur: &mut Vec<usize>, res: usize, out: &mut Vec<Vec<f64>>) {
        if slot + 1 == cur.len() {
            cur[slot] = rest;
            out.push(cur.iter().map(|&k| k as f64 / res as f64).collect());
            return;
        }
        for v in 0..=rest {
            cur[slot] = v;
            go(rest - v, slot + 1, cur, res, out);
        }
    }
    go(resolution, 0, &mut cur, resolution, &mut rows);
    let total = (rows.len() as f64).powi(inputs as i32);
    if total > MAX_GRID_POINTS as f64 {
        return Err(Error::validation(format!(
            "resolution: {total} channels exceed the grid cap {MAX_GRID_POINTS}"
        )));
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut idx = vec![0usize; inputs];
    loop {
        let flat: Vec<f64> = idx.iter().flat_map(|&i| rows[i].iter().copied()).collect();
        out.push(PrivacyMapping::from_flat(inputs, outputs, flat)?);
        let mut d = inputs;
        loop {
            if d == 0 {
                return Ok(out);
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < rows.len() {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// Assignment with Bob `q` on `(o, v)` and every other Bob on constant
/// channels. Used to read one Bob's terms off the shared evaluators.
fn probe(inst: &MirrorGameInstance, q: usize, o: &PrivacyMapping, v: &PrivacyMapping) -> TwinAssignment {
    let nq = inst.q_count();
    TwinAssignment {
        original: (0..nq)
            .map(|p| {
                if p == q {
                    o.clone()
                } else {
                    PrivacyMapping::constant(inst.x_alphabet(p), inst.original_alphabet(p), 0).expect("non-empty")
                }
            })
            .collect(),
        virtual_: (0..nq)
            .map(|p| {
                if p == q {
                    v.clone()
                } else {
                    PrivacyMapping::constant(inst.x_alphabet(p), inst.virtual_alphabet(), 0).expect("non-empty")
                }
            })
            .collect(),
    }
}

/// `(utility, leakage)` of Bob `q` in each world of the uncertainty sample.
fn bob_worlds(
    inst: &MirrorGameInstance,
    q: usize,
    o: &PrivacyMapping,
    u: &UncertaintyModel,
    samples: usize,
) -> Vec<(f64, f64)> {
    let v = PrivacyMapping::constant(inst.x_alphabet(q), inst.virtual_alphabet(), 0).expect("non-empty");
    let asg = probe(inst, q, o, &v);
    let kernels = Kernels::new(inst, &asg);
    let nominal = World::nominal(inst, &asg);
    let worlds: Vec<World> = if u.is_certain() {
        vec![nominal]
    } else {
        let mut rng = u.rng();
        (0..samples)
            .map(|_| World::perturbed(inst, &asg, &nominal, u.magnitude, &mut rng))
            .collect()
    };
    worlds
        .iter()
        .map(|w| {
            let vals = world_values(inst, &asg, &kernels, w);
            (vals.utility[q], vals.leakage[q])
        })
        .collect()
}

fn fraction(values: &[(f64, f64)], pred: impl Fn(&(f64, f64)) -> bool) -> f64 {
    values.iter().filter(|v| pred(v)).count() as f64 / values.len() as f64
}

fn default_samples() -> usize {
    32
}

fn default_resolution() -> usize {
    16
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradeoffConfig {
    #[serde(default = "reference_instance")]
    pub instance: MirrorGameSpec,
    /// Uncertainty magnitudes `|B|`, one frontier each.
    pub magnitudes: Vec<f64>,
    /// Leakage bounds as fractions of `I(S; X_q)`.
    pub leakage_grid: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

/// One solved frontier point: the original channel maximizing expected
/// utility while `Pr{I(S; Y^(o)_q) ≤ γ0} ≥ ϑ2`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TradeoffRow {
    pub seed: u64,
    pub magnitude: f64,
    pub q: usize,
    pub grid_index: usize,
    pub leakage_norm: f64,
    pub gamma0: f64,
    pub utility: Option<f64>,
    pub utility_norm: Option<f64>,
    pub leakage: Option<f64>,
    pub leakage_prob: Option<f64>,
}

impl TradeoffRow {
    pub fn feasible(&self) -> bool {
        self.utility.is_some()
    }
}

pub fn write_tradeoff<W: Write>(rows: &[TradeoffRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "seed",
        "magnitude",
        "q",
        "grid_index",
        "leakage_norm",
        "gamma0",
        "utility",
        "utility_norm",
        "leakage",
        "leakage_prob",
        "status",
    ])?;
    for r in rows {
        out.write_record([
            r.seed.to_string(),
            cell(r.magnitude),
            r.q.to_string(),
            r.grid_index.to_string(),
            cell(r.leakage_norm),
            cell(r.gamma0),
            opt_cell(r.utility, ""),
            opt_cell(r.utility_norm, ""),
            opt_cell(r.leakage, ""),
            opt_cell(r.leakage_prob, ""),
            if r.feasible() { "solved" } else { "infeasible" }.into(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn check_magnitudes(ms: &[f64]) -> Result<()> {
    if ms.is_empty() {
        return Err(Error::validation("magnitudes: need at least one |B|"));
    }
    for m in ms {
        UncertaintyModel::new(*m, 0)?;
    }
    Ok(())
}

pub fn run_mi_tradeoff(cfg: &TradeoffConfig, seeds: &[u64]) -> Result<Vec<TradeoffRow>> {
    let inst = MirrorGameInstance::new(cfg.instance.clone())?;
    if cfg.leakage_grid.len() < 2 {
        return Err(Error::validation("leakage_grid: need at least two points"));
    }
    if cfg.leakage_grid.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::validation("leakage_grid: entries must be >= 0"));
    }
    check_magnitudes(&cfg.magnitudes)?;
    if cfg.samples == 0 {
        return Err(Error::validation("samples: need at least one world"));
    }
    let grids = (0..inst.q_count())
        .map(|q| mapping_grid(inst.x_alphabet(q), inst.original_alphabet(q), cfg.resolution))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(u64, f64)> = seeds.iter().flat_map(|&s| cfg.magnitudes.iter().map(move |&m| (s, m))).collect();
    let per_job: Vec<Vec<TradeoffRow>> = jobs
        .par_iter()
        .map(|&(seed, magnitude)| {
            let u = UncertaintyModel::new(magnitude, seed).expect("checked");
            let mut rows = Vec::new();
            for q in 0..inst.q_count() {
                let worlds: Vec<Vec<(f64, f64)>> =
                    grids[q].iter().map(|o| bob_worlds(&inst, q, o, &u, cfg.samples)).collect();
                let h_x = entropy(inst.x_marginal(q));
                let ceiling = mutual_information(inst.joint(q));
                for (gi, &norm) in cfg.leakage_grid.iter().enumerate() {
                    let gamma0 = norm * ceiling;
                    let mut best: Option<(f64, f64, f64)> = None;
                    for w in &worlds {
                        let p = fraction(w, |v| v.1 <= gamma0 + COMPARE_TOL);
                        if p < inst.theta(2) {
                            continue;
                        }
                        let util = w.iter().map(|v| v.0).sum::<f64>() / w.len() as f64;
                        if best.is_none_or(|b| util > b.0 + COMPARE_TOL) {
                            let leak = w.iter().map(|v| v.1).sum::<f64>() / w.len() as f64;
                            best = Some((util, leak, p));
                        }
                    }
                    rows.push(TradeoffRow {
                        seed,
                        magnitude,
                        q,
                        grid_index: gi,
                        leakage_norm: norm,
                        gamma0,
                        utility: best.map(|b| b.0),
                        utility_norm: best.map(|b| if h_x > 0.0 { b.0 / h_x } else { 0.0 }),
                        leakage: best.map(|b| b.1),
                        leakage_prob: best.map(|b| b.2),
                    });
                }
            }
            rows
        })
        .collect();
    Ok(per_job.into_iter().flatten().collect())
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecrecyGapConfig {
    #[serde(default = "reference_instance")]
    pub instance: MirrorGameSpec,
    pub magnitudes: Vec<f64>,
    /// Virtual power budgets as fractions of the largest symbol energy.
    pub budget_grid: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Enforce the floored twin conditions `I(Y^(v)_q; X_{q'}) > ε2` and
    /// `I(Y^(v)_q; Y^(o)_q) ≤ ε3`.
    #[serde(default = "default_true")]
    pub twin_conditions: bool,
    /// Admit input-independent twins regardless of the twin conditions.
    #[serde(default = "default_true")]
    pub silent_twin: bool,
    #[serde(default = "default_floors")]
    pub floors: EpsilonFloors,
}

fn default_floors() -> EpsilonFloors {
    GreedyConfig::default().floors
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SecrecyGapRow {
    pub seed: u64,
    pub magnitude: f64,
    pub grid_index: usize,
    pub budget_norm: f64,
    pub gamma1: f64,
    /// Average over Bobs of `I(X_q; Y^(o)_q) − I(X_q; Y^(tot)_{q'})`.
    pub gap: Option<f64>,
    pub gap_norm: Option<f64>,
    pub utility: Option<f64>,
    pub cross_leakage: Option<f64>,
}

pub fn write_secrecy_gap<W: Write>(rows: &[SecrecyGapRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "seed",
        "magnitude",
        "grid_index",
        "budget_norm",
        "gamma1",
        "gap",
        "gap_norm",
        "utility",
        "cross_leakage",
        "status",
    ])?;
    for r in rows {
        out.write_record([
            r.seed.to_string(),
            cell(r.magnitude),
            r.grid_index.to_string(),
            cell(r.budget_norm),
            cell(r.gamma1),
            opt_cell(r.gap, ""),
            opt_cell(r.gap_norm, ""),
            opt_cell(r.utility, ""),
            opt_cell(r.cross_leakage, ""),
            if r.gap.is_some() { "solved" } else { "infeasible" }.into(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// A twin independent of its input carries nothing to anyone, so the
/// twin conditions do not apply to it; it is the zero-budget fallback.
fn is_silent(v: &PrivacyMapping) -> bool {
    (1..v.inputs()).all(|x| v.row(x).iter().zip(v.row(0)).all(|(a, b)| (a - b).abs() <= NULL_TOL))
}

/// A per-Bob candidate `(O_b, V_b)` of the secrecy-gap sweep.
#[derive(Clone, Copy)]
struct GapCandidate {
    utility: f64,
    cross: f64,
    power: f64,
}

/// Candidates for Bob `b`, budget excluded. The Bob-coupled terms are
/// separable: `O_b, V_b` enter only Bob `b`'s utility and the cross
/// leakage of every other Bob towards `b`, read on the nominal source.
fn gap_candidates(
    inst: &MirrorGameInstance,
    cfg: &SecrecyGapConfig,
    b: usize,
    u: &UncertaintyModel,
    originals: &[PrivacyMapping],
    virtuals: &[PrivacyMapping],
) -> Vec<GapCandidate> {
    let spec = inst.spec();
    let nq = inst.q_count();
    let mut out = Vec::new();
    for o in originals {
        let w = bob_worlds(inst, b, o, u, cfg.samples);
        let util_p = fraction(&w, |v| v.0 >= spec.gamma2 - COMPARE_TOL);
        let leak_p = fraction(&w, |v| v.1 <= spec.gamma0[b] + COMPARE_TOL);
        if util_p < inst.theta(1) || leak_p < inst.theta(2) {
            continue;
        }
        let utility = w.iter().map(|v| v.0).sum::<f64>() / w.len() as f64;
        for v in virtuals {
            let asg = probe(inst, b, o, v);
            let kernels = Kernels::new(inst, &asg);
            let vals = world_values(inst, &asg, &kernels, &World::nominal(inst, &asg));
            let others = (0..nq).filter(|&q| q != b);
            if cfg.twin_conditions && !(cfg.silent_twin && is_silent(v)) {
                let informative = others.clone().all(|q| vals.twin_src[q][b] > cfg.floors.eps[1]);
                if !informative || vals.own_null[b] > cfg.floors.eps[2] {
                    continue;
                }
            }
            let cross = others.map(|q| vals.cross[q][b]).sum::<f64>() / (nq - 1) as f64;
            out.push(GapCandidate { utility, cross, power: vals.power[b] });
        }
    }
    out
}

pub fn run_secrecy_gap(cfg: &SecrecyGapConfig, seeds: &[u64]) -> Result<Vec<SecrecyGapRow>> {
    let inst = MirrorGameInstance::new(cfg.instance.clone())?;
    let nq = inst.q_count();
    if nq < 2 {
        return Err(Error::validation("instance.joints: the secrecy gap needs at least two Bobs"));
    }
    if cfg.budget_grid.len() < 2 {
        return Err(Error::validation("budget_grid: need at least two points"));
    }
    if cfg.budget_grid.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::validation("budget_grid: entries must be >= 0"));
    }
    check_magnitudes(&cfg.magnitudes)?;
    if cfg.samples == 0 {
        return Err(Error::validation("samples: need at least one world"));
    }
    let max_energy = inst.symbol_values().iter().map(|v| v * v).fold(0.0, f64::max);
    let grids = (0..nq)
        .map(|q| {
            Ok((
                mapping_grid(inst.x_alphabet(q), inst.original_alphabet(q), cfg.resolution)?,
                mapping_grid(inst.x_alphabet(q), inst.virtual_alphabet(), cfg.resolution)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let h_x: f64 = (0..nq).map(|q| entropy(inst.x_marginal(q))).sum::<f64>() / nq as f64;
    let jobs: Vec<(u64, f64, usize)> = seeds
        .iter()
        .flat_map(|&s| cfg.magnitudes.iter().flat_map(move |&m| (0..nq).map(move |b| (s, m, b))))
        .collect();
    let cands: Vec<Vec<GapCandidate>> = jobs
        .par_iter()
        .map(|&(seed, m, b)| {
            let u = UncertaintyModel::new(m, seed).expect("checked");
            gap_candidates(&inst, cfg, b, &u, &grids[b].0, &grids[b].1)
        })
        .collect();
    let mut rows = Vec::new();
    for (ji, chunk) in cands.chunks(nq).enumerate() {
        let (seed, magnitude, _) = jobs[ji * nq];
        for (gi, &norm) in cfg.budget_grid.iter().enumerate() {
            let gamma1 = norm * max_energy;
            let mut total = Some((0.0, 0.0, 0.0));
            for per_bob in chunk {
                let best = per_bob
                    .iter()
                    .filter(|c| c.power <= gamma1 + COMPARE_TOL)
                    .map(|c| (c.utility - c.cross, c.utility, c.cross))
                    .fold(None, |acc: Option<(f64, f64, f64)>, c| match acc {
                        Some(a) if a.0 >= c.0 => Some(a),
                        _ => Some(c),
                    });
                total = match (total, best) {
                    (Some(t), Some(b)) => Some((t.0 + b.0, t.1 + b.1, t.2 + b.2)),
                    _ => None,
                };
            }
            let avg = total.map(|t| (t.0 / nq as f64, t.1 / nq as f64, t.2 / nq as f64));
            rows.push(SecrecyGapRow {
                seed,
                magnitude,
                grid_index: gi,
                budget_norm: norm,
                gamma1,
                gap: avg.map(|a| a.0),
                gap_norm: avg.map(|a| if h_x > 0.0 { a.0 / h_x } else { 0.0 }),
                utility: avg.map(|a| a.1),
                cross_leakage: avg.map(|a| a.2),
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CdfMode {
    /// Greedy solver with and without the relaxation.
    #[default]
    Greedy,
    /// Lohe steps to synchrony, Stackelberg evaluations to optimum and MFG
    /// Picard sweeps.
    Nonstationary,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    #[serde(default)]
    pub mode: CdfMode,
    #[serde(default = "reference_instance")]
    pub instance: MirrorGameSpec,
    #[serde(default = "default_magnitude")]
    pub magnitude: f64,
    #[serde(default)]
    pub greedy: GreedyConfig,
    #[serde(default)]
    pub nonstationary: NonstationaryCdfConfig,
}

fn default_magnitude() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonstationaryCdfConfig {
    pub lohe_oscillators: usize,
    pub lohe_dimension: usize,
    pub lohe_dt: f64,
    pub lohe_max_steps: usize,
    pub sync_threshold: f64,
    pub stackelberg_size: usize,
    pub mfg_max_sweeps: usize,
    pub mfg_tol: f64,
    pub mfg_damping: f64,
}

impl Default for NonstationaryCdfConfig {
    fn default() -> Self {
        NonstationaryCdfConfig {
            lohe_oscillators: 3,
            lohe_dimension: 2,
            lohe_dt: 0.01,
            lohe_max_steps: 5000,
            sync_threshold: 0.99,
            stackelberg_size: 20,
            mfg_max_sweeps: 200,
            mfg_tol: 1e-6,
            mfg_damping: 0.5,
        }
    }
}

/// One run of a convergence experiment; `iterations` is `None` when the
/// run hit its cap and `error` is set when it failed outright.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub series: String,
    pub iterations: Option<usize>,
    pub error: Option<String>,
}

/// Two-sample one-sided Kolmogorov-Smirnov comparison of the first series
/// against the second.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Dominance {
    /// `max_t F_a(t) − F_b(t)`.
    pub d_plus: f64,
    /// `max_t F_b(t) − F_a(t)`.
    pub d_minus: f64,
    /// Asymptotic p-value of `d_plus` under equal laws.
    pub p_dominance: f64,
    /// Asymptotic p-value of `d_minus` under equal laws.
    pub p_violation: f64,
    pub pointwise: bool,
    /// No significant violation at level 0.05.
    pub passed: bool,
}

/// `exp(−2 D² nm/(n+m))`.
pub fn ks_one_sided_p(d: f64, n: usize, m: usize) -> f64 {
    if n == 0 || m == 0 {
        return 1.0;
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    (-2.0 * d.max(0.0).powi(2) * ne).exp().min(1.0)
}

pub fn dominance(a: &[f64], b: &[f64], n: usize, m: usize) -> Dominance {
    let d_plus = a.iter().zip(b).map(|(x, y)| x - y).fold(0.0, f64::max);
    let d_minus = a.iter().zip(b).map(|(x, y)| y - x).fold(0.0, f64::max);
    let p_violation = ks_one_sided_p(d_minus, n, m);
    Dominance {
        d_plus,
        d_minus,
        p_dominance: ks_one_sided_p(d_plus, n, m),
        p_violation,
        pointwise: d_minus <= 0.0,
        passed: p_violation >= 0.05,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CdfReport {
    pub series: Vec<String>,
    /// `t = 1..=horizon`.
    pub horizon: usize,
    /// `cdf[s][t-1]`: fraction of completed runs converged within `t`.
    pub cdf: Vec<Vec<f64>>,
    pub runs: Vec<RunRecord>,
    pub completed: Vec<usize>,
    pub failed: Vec<usize>,
    /// First series against the second.
    pub dominance: Option<Dominance>,
}

impl CdfReport {
    fn build(series: Vec<String>, runs: Vec<RunRecord>, horizon: usize) -> CdfReport {
        let mut cdf: Vec<Vec<f64>> = Vec::new();
        let mut completed = Vec::new();
        let mut failed = Vec::new();
        for s in &series {
            let mine: Vec<&RunRecord> = runs.iter().filter(|r| &r.series == s).collect();
            let done: Vec<&&RunRecord> = mine.iter().filter(|r| r.error.is_none()).collect();
            completed.push(done.len());
            failed.push(mine.len() - done.len());
            let n = done.len().max(1) as f64;
            cdf.push(
                (1..=horizon)
                    .map(|t| done.iter().filter(|r| r.iterations.is_some_and(|i| i <= t)).count() as f64 / n)
                    .collect(),
            );
        }
        let dominance = (series.len() >= 2).then(|| dominance(&cdf[0], &cdf[1], completed[0], completed[1]));
        CdfReport { series, horizon, cdf, runs, completed, failed, dominance }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["iterations".to_string()];
        header.extend(self.series.iter().map(|s| format!("cdf_{s}")));
        out.write_record(&header)?;
        for t in 0..self.horizon {
            let mut rec = vec![(t + 1).to_string()];
            rec.extend(self.cdf.iter().map(|c| cell(c[t])));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn run_convergence_cdf(cfg: &ConvergenceConfig, seeds: &[u64]) -> Result<CdfReport> {
    if seeds.len() < MIN_CDF_SEEDS {
        return Err(Error::validation(format!(
            "seeds: {} given, the CDF needs at least {MIN_CDF_SEEDS}",
            seeds.len()
        )));
    }
    match cfg.mode {
        CdfMode::Greedy => greedy_cdf(cfg, seeds),
        CdfMode::Nonstationary => nonstationary_cdf(&cfg.nonstationary, seeds),
    }
}

fn greedy_cdf(cfg: &ConvergenceConfig, seeds: &[u64]) -> Result<CdfReport> {
    let inst = MirrorGameInstance::new(cfg.instance.clone())?;
    cfg.greedy.validate()?;
    UncertaintyModel::new(cfg.magnitude, 0)?;
    let jobs: Vec<(bool, u64)> = [true, false].iter().flat_map(|&r| seeds.iter().map(move |&s| (r, s))).collect();
    let runs: Vec<RunRecord> = jobs
        .par_iter()
        .map(|&(relaxed, seed)| {
            let series = if relaxed { "relaxed" } else { "unrelaxed" }.to_string();
            let u = UncertaintyModel::new(cfg.magnitude, seed).expect("checked");
            match greedy_solve(&inst, &u, relaxed, &cfg.greedy, seed) {
                Ok(o) => RunRecord { seed, series, iterations: o.converged.then_some(o.iterations), error: None },
                Err(e) => RunRecord { seed, series, iterations: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    Ok(CdfReport::build(vec!["relaxed".into(), "unrelaxed".into()], runs, cfg.greedy.budget))
}

fn random_state(rng: &mut ChaCha8Rng, d: usize) -> DVector<Complex64> {
    let v = DVector::from_fn(d, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let n = v.norm();
    v / Complex64::new(n, 0.0)
}

/// Steps of a dissipatively coupled Lohe system (shared Hamiltonian) until
/// the order parameter passes the threshold.
fn lohe_steps(c: &NonstationaryCdfConfig, rng: &mut ChaCha8Rng) -> Result<Option<usize>> {
    let d = c.lohe_dimension;
    let a = DMatrix::from_fn(d, d, |_, _| Complex64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)));
    let h = (&a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let q = c.lohe_oscillators;
    let sys = LoheSystem {
        states: (0..q).map(|_| random_state(rng, d)).collect(),
        hamiltonians: vec![h; q],
        hbar: 1.0,
        alpha: Complex64::new(0.0, -1.0),
        beta: DMatrix::from_element(q, q, 1.0 / q as f64),
    };
    let mut sys = sys;
    for step in 1..=c.lohe_max_steps {
        let traj = lohe_integrate(&sys, c.lohe_dt, 1)?;
        sys.states = traj.into_iter().last().expect("two snapshots");
        if sync_order(&sys.states) > c.sync_threshold {
            return Ok(Some(step));
        }
    }
    Ok(None)
}

fn random_pmf(rng: &mut ChaCha8Rng, n: usize) -> Result<Pmf> {
    Pmf::normalized((0..n).map(|_| rng.random_range(0.01..1.0)).collect())
}

/// Random `n × n` instance: `n` leader laws over `n` outcomes, `n`
/// follower actions, payoffs uniform on `[0, 1)`.
pub fn random_stackelberg(n: usize, rng: &mut ChaCha8Rng) -> Result<StackelbergInstance> {
    let table = |rng: &mut ChaCha8Rng| (0..n).map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    Ok(StackelbergInstance {
        leader_laws: (0..n).map(|_| random_pmf(rng, n)).collect::<Result<_>>()?,
        follower_payoff: table(rng),
        leader_payoff: table(rng),
        drift: None,
    })
}

fn mfg_sweeps(c: &NonstationaryCdfConfig, rng: &mut ChaCha8Rng) -> Result<Option<usize>> {
    let n_t = 60;
    let cfg = MfgConfig {
        x_min: -2.0,
        x_max: 2.0,
        n_x: 41,
        horizon: 0.5,
        n_t,
        sigma: 0.3,
        mu: Some(vec![rng.random_range(0.0..0.5); n_t]),
        control_max: 1.0,
        control_levels: 5,
        reward_linear: rng.random_range(-1.0..1.0),
        reward_quadratic: -1.0,
        congestion: rng.random_range(0.0..1.0),
        initial: crate::nonstationary::mfg::InitialDensity::Gaussian { mean: rng.random_range(-0.5..0.5), std: 0.4 },
    };
    let s = mfg_solve(&cfg, c.mfg_tol, c.mfg_max_sweeps, c.mfg_damping)?;
    Ok(s.converged.then(|| s.sweeps()))
}

fn nonstationary_cdf(c: &NonstationaryCdfConfig, seeds: &[u64]) -> Result<CdfReport> {
    if c.lohe_oscillators == 0 || c.lohe_dimension == 0 || c.stackelberg_size == 0 {
        return Err(Error::validation("nonstationary: sizes must be positive"));
    }
    let series = ["lohe", "stackelberg", "mfg"];
    let per_seed: Vec<Vec<RunRecord>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let outcomes = [
                lohe_steps(c, &mut rng),
                random_stackelberg(c.stackelberg_size, &mut rng)
                    .and_then(|i| stackelberg_solve(&i))
                    .map(|s| Some(s.evaluations_to_optimum)),
                mfg_sweeps(c, &mut rng),
            ];
            series
                .iter()
                .zip(outcomes)
                .map(|(s, o)| match o {
                    Ok(it) => RunRecord { seed, series: s.to_string(), iterations: it, error: None },
                    Err(e) => RunRecord { seed, series: s.to_string(), iterations: None, error: Some(e.to_string()) },
                })
                .collect()
        })
        .collect();
    let runs: Vec<RunRecord> = per_seed.into_iter().flatten().collect();
    let horizon = runs.iter().filter_map(|r| r.iterations).max().unwrap_or(1);
    let mut report = CdfReport::build(series.iter().map(|s| s.to_string()).collect(), runs, horizon);
    report.dominance = None;
    Ok(report)
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MfgRunConfig {
    pub grid: MfgConfig,
    #[serde(default = "default_mfg_tol")]
    pub tol: f64,
    #[serde(default = "default_mfg_sweeps")]
    pub max_sweeps: usize,
    #[serde(default = "default_damping")]
    pub damping: f64,
    /// Time indices at which `KL(P_df(0) ‖ P_df(k))` is reported.
    #[serde(default)]
    pub kl_checkpoints: Vec<usize>,
}

fn default_mfg_tol() -> f64 {
    1e-6
}

fn default_mfg_sweeps() -> usize {
    200
}

fn default_damping() -> f64 {
    0.5
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoheRunConfig {
    /// Each state as `[re, im]` pairs.
    pub states: Vec<Vec<[f64; 2]>>,
    pub hamiltonians: Vec<Vec<Vec<[f64; 2]>>>,
    #[serde(default = "one")]
    pub hbar: f64,
    pub alpha: [f64; 2],
    pub beta: Vec<Vec<f64>>,
    pub dt: f64,
    pub steps: usize,
    /// Emit every `every`-th snapshot.
    #[serde(default = "one_usize")]
    pub every: usize,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

impl LoheRunConfig {
    pub fn system(&self) -> Result<LoheSystem> {
        let c = |p: &[f64; 2]| Complex64::new(p[0], p[1]);
        let hamiltonians = self
            .hamiltonians
            .iter()
            .enumerate()
            .map(|(i, h)| {
                let d = h.len();
                if h.iter().any(|r| r.len() != d) {
                    return Err(Error::validation(format!("hamiltonians[{i}]: not square")));
                }
                Ok(DMatrix::from_fn(d, d, |r, k| c(&h[r][k])))
            })
            .collect::<Result<Vec<_>>>()?;
        let q = self.beta.len();
        if self.beta.iter().any(|r| r.len() != q) {
            return Err(Error::validation("beta: not square"));
        }
        Ok(LoheSystem {
            states: self.states.iter().map(|s| DVector::from_iterator(s.len(), s.iter().map(c))).collect(),
            hamiltonians,
            hbar: self.hbar,
            alpha: c(&self.alpha),
            beta: DMatrix::from_fn(q, q, |r, k| self.beta[r][k]),
        })
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomGrid {
    pub size: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackelbergRunConfig {
    /// Fixed instance; when absent a random `size × size` one is drawn per seed.
    #[serde(default)]
    pub instance: Option<StackelbergInstance>,
    #[serde(default)]
    pub random: Option<RandomGrid>,
    #[serde(default = "one_usize")]
    pub stages: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomGame {
    pub players: usize,
    pub colors: usize,
    #[serde(default = "default_levels")]
    pub levels: u32,
}

fn default_levels() -> u32 {
    10
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NashRunConfig {
    #[serde(default)]
    pub game: Option<KCutGame>,
    #[serde(default)]
    pub random: Option<RandomGame>,
    #[serde(default)]
    pub mode: Option<PayoffMode>,
    #[serde(default = "default_rounds")]
    pub max_rounds: usize,
}

fn default_rounds() -> usize {
    1000
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantRunConfig {
    pub plant: LinearPlant,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub horizon: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceTable {
    #[default]
    Decomposition,
    Field,
    CmiMax,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergenceRunConfig {
    pub model: LatentModel,
    #[serde(default)]
    pub table: DivergenceTable,
    /// Accessible `z` indices; all of them when absent.
    #[serde(default)]
    pub accessible: Option<AccessMask>,
    /// Equivocation band `[g1, g2]` in bits; vacuous when absent.
    #[serde(default)]
    pub band: Option<[f64; 2]>,
}

/// CSV bytes plus a JSON summary of one invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub csv: Vec<u8>,
    pub summary: serde_json::Value,
}

fn need_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::validation("seeds: need at least one seed"));
    }
    Ok(())
}

/// Parses `config` for `sub`, runs it over `seeds` and renders the CSV.
pub fn run(sub: Subcommand, config: &str, seeds: &[u64]) -> Result<RunOutput> {
    need_seeds(seeds)?;
    let mut csv = Vec::new();
    let summary = match sub {
        Subcommand::MiTradeoff => {
            let cfg: TradeoffConfig = parse_config(config)?;
            let rows = run_mi_tradeoff(&cfg, seeds)?;
            write_tradeoff(&rows, &mut csv)?;
            let infeasible = rows.iter().filter(|r| !r.feasible()).count();
            json!({ "rows": rows.len(), "infeasible": infeasible })
        }
        Subcommand::SecrecyGap => {
            let cfg: SecrecyGapConfig = parse_config(config)?;
            let rows = run_secrecy_gap(&cfg, seeds)?;
            write_secrecy_gap(&rows, &mut csv)?;
            let infeasible = rows.iter().filter(|r| r.gap.is_none()).count();
            json!({ "rows": rows.len(), "infeasible": infeasible })
        }
        Subcommand::ConvergenceCdf => {
            let cfg: ConvergenceConfig = parse_config(config)?;
            let report = run_convergence_cdf(&cfg, seeds)?;
            report.write_csv(&mut csv)?;
            json!({
                "series": report.series,
                "completed": report.completed,
                "failed": report.failed,
                "dominance": report.dominance,
            })
        }
        Subcommand::Mfg => {
            let cfg: MfgRunConfig = parse_config(config)?;
            let sol = mfg_solve(&cfg.grid, cfg.tol, cfg.max_sweeps, cfg.damping)?;
            sol.write_csv(&mut csv)?;
            let kl = kl_drift_profile(&sol.density, &cfg.kl_checkpoints)?;
            let entries: Vec<String> = kl
                .entries
                .iter()
                .map(|e| match e {
                    KlEntry::Finite(v) => cell(*v),
                    KlEntry::Infinite => "inf".into(),
                })
                .collect();
            json!({
                "sweeps": sol.sweeps(),
                "converged": sol.converged,
                "final_residual": sol.residuals.last().copied().map(cell),
                "mass_error": cell(sol.mass_error()),
                "kl_checkpoints": kl.checkpoints,
                "kl": entries,
                "kl_argmin": kl.argmin,
            })
        }
        Subcommand::Lohe => {
            let cfg: LoheRunConfig = parse_config(config)?;
            let sys = cfg.system()?;
            if cfg.every == 0 {
                return Err(Error::validation("every: must be >= 1"));
            }
            let traj = lohe_integrate(&sys, cfg.dt, cfg.steps)?;
            let mut out = csv::Writer::from_writer(&mut csv);
            out.write_record(["step", "t", "q", "d", "re", "im", "sync_order"])?;
            for (k, snap) in traj.iter().enumerate().filter(|(k, _)| k % cfg.every == 0 || *k == cfg.steps) {
                let r = sync_order(snap);
                for (q, s) in snap.iter().enumerate() {
                    for (d, z) in s.iter().enumerate() {
                        out.write_record([
                            k.to_string(),
                            cell(k as f64 * cfg.dt),
                            q.to_string(),
                            d.to_string(),
                            cell(z.re),
                            cell(z.im),
                            cell(r),
                        ])?;
                    }
                }
            }
            out.flush()?;
            drop(out);
            let last = traj.last().expect("initial snapshot");
            json!({ "snapshots": traj.len(), "final_sync_order": cell(sync_order(last)) })
        }
        Subcommand::Stackelberg => {
            let cfg: StackelbergRunConfig = parse_config(config)?;
            if cfg.stages == 0 {
                return Err(Error::validation("stages: must be >= 1"));
            }
            let instances: Vec<(u64, StackelbergInstance)> = match (&cfg.instance, &cfg.random) {
                (Some(i), None) => vec![(seeds[0], i.clone())],
                (None, Some(r)) => seeds
                    .iter()
                    .map(|&s| Ok((s, random_stackelberg(r.size, &mut ChaCha8Rng::seed_from_u64(s))?)))
                    .collect::<Result<_>>()?,
                _ => return Err(Error::validation("instance/random: give exactly one")),
            };
            let solved: Vec<Result<Vec<_>>> =
                instances.par_iter().map(|(_, i)| stackelberg_schedule(i, cfg.stages)).collect();
            let mut out = csv::Writer::from_writer(&mut csv);
            out.write_record(["seed", "stage", "leader", "follower", "value", "follower_value", "evaluations"])?;
            let mut n = 0;
            for ((seed, _), sched) in instances.iter().zip(solved) {
                for (t, s) in sched?.iter().enumerate() {
                    n += 1;
                    out.write_record([
                        seed.to_string(),
                        t.to_string(),
                        s.leader.to_string(),
                        s.follower.to_string(),
                        cell(s.value),
                        cell(s.follower_value),
                        s.evaluations_to_optimum.to_string(),
                    ])?;
                }
            }
            out.flush()?;
            json!({ "rows": n })
        }
        Subcommand::Nash => {
            let cfg: NashRunConfig = parse_config(config)?;
            let runs: Vec<Result<(u64, Vec<String>, bool)>> = seeds
                .par_iter()
                .map(|&seed| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let game = match (&cfg.game, &cfg.random) {
                        (Some(g), None) => g.clone(),
                        (None, Some(r)) => KCutGame::random_symmetric(r.players, r.colors, r.levels, &mut rng)?,
                        _ => return Err(Error::validation("game/random: give exactly one")),
                    };
                    let game = match cfg.mode {
                        Some(m) => game.with_mode(m),
                        None => game,
                    };
                    let init = StrategyProfile::random(game.players(), game.colors(), &mut rng);
                    let out = best_response_dynamics(&game, &init, cfg.max_rounds)?;
                    let nash = verify_nash(&game, &out.profile)?;
                    let colors: Vec<String> = out.profile.colors.iter().map(|c| c.to_string()).collect();
                    Ok((
                        seed,
                        vec![
                            seed.to_string(),
                            out.rounds.to_string(),
                            out.converged.to_string(),
                            out.switches.len().to_string(),
                            cell(game.potential(&out.profile)),
                            nash.is_nash.to_string(),
                            nash.deviations_checked.to_string(),
                            colors.join(" "),
                        ],
                        nash.is_nash,
                    ))
                })
                .collect();
            let mut out = csv::Writer::from_writer(&mut csv);
            out.write_record([
                "seed",
                "rounds",
                "converged",
                "switches",
                "potential",
                "is_nash",
                "deviations_checked",
                "profile",
            ])?;
            let mut all_nash = true;
            for r in runs {
                let (_, rec, nash) = r?;
                all_nash &= nash;
                out.write_record(&rec)?;
            }
            out.flush()?;
            json!({ "runs": seeds.len(), "all_nash": all_nash })
        }
        Subcommand::Plant => {
            let cfg: PlantRunConfig = parse_config(config)?;
            let rep = plant_report(&cfg.plant)?;
            let seed = seeds[0];
            let mut rows = vec![
                ResultRow::new(0, seed, "controllability_rank", rep.controllability.rank as f64, ""),
                ResultRow::new(0, seed, "controllable", f64::from(u8::from(rep.controllability.full)), ""),
                ResultRow::new(0, seed, "observability_rank", rep.observability.rank as f64, ""),
                ResultRow::new(0, seed, "observable", f64::from(u8::from(rep.observability.full)), ""),
                ResultRow::new(0, seed, "spectral_radius", rep.spectral_radius, ""),
                ResultRow::new(0, seed, "stable", f64::from(u8::from(rep.stable)), ""),
            ];
            match (&cfg.x0, cfg.horizon) {
                (Some(x0), Some(h)) => {
                    for (run, &s) in seeds.iter().enumerate() {
                        let t = simulate(&cfg.plant, &DVector::from_vec(x0.clone()), h, s)?;
                        for (k, x) in t.states.iter().enumerate() {
                            for (i, v) in x.iter().enumerate() {
                                rows.push(ResultRow::new(run, s, format!("x{i}"), *v, format!("k={k}")));
                            }
                        }
                    }
                }
                (None, None) => {}
                _ => return Err(Error::validation("x0/horizon: give both or neither")),
            }
            write_result_rows(&rows, &mut csv)?;
            json!({ "report": rep, "rows": rows.len() })
        }
        Subcommand::Divergence => {
            let cfg: DivergenceRunConfig = parse_config(config)?;
            match cfg.table {
                DivergenceTable::Decomposition => {
                    let r = cmi_decomposition_report(&cfg.model);
                    r.write_csv(&mut csv)?;
                    json!({ "total": cell(r.total) })
                }
                DivergenceTable::Field => {
                    let f = log_ratio_field(&cfg.model)?;
                    f.write_csv(&mut csv)?;
                    json!({ "cells": f.cells.len(), "undefined": f.undefined_count(), "runs": f.runs.len() })
                }
                DivergenceTable::CmiMax => {
                    let nz = cfg.model.dims()[2];
                    let mask = cfg.accessible.clone().unwrap_or_else(|| AccessMask::all(nz));
                    let nm = cfg.model.dims()[3] as f64;
                    let [g1, g2] = cfg.band.unwrap_or([0.0, nm.log2()]);
                    let out = constrained_cmi_max(&cfg.model, &mask, g1, g2)?;
                    let seed = seeds[0];
                    let rows = match &out {
                        CmiMaxOutcome::Optimal { weights, cmi, equivocation, grid_cmi, .. } => {
                            let mut rows = vec![
                                ResultRow::new(0, seed, "cmi", *cmi, "optimal"),
                                ResultRow::new(0, seed, "equivocation", *equivocation, "optimal"),
                                ResultRow::new(0, seed, "grid_cmi", grid_cmi.unwrap_or(f64::NEG_INFINITY), "grid"),
                            ];
                            rows.extend(
                                weights
                                    .iter()
                                    .enumerate()
                                    .map(|(z, w)| ResultRow::new(0, seed, "weight", *w, format!("z={z}"))),
                            );
                            rows
                        }
                        CmiMaxOutcome::Infeasible { min_equivocation, max_equivocation } => vec![
                            ResultRow::new(0, seed, "min_equivocation", *min_equivocation, "infeasible"),
                            ResultRow::new(0, seed, "max_equivocation", *max_equivocation, "infeasible"),
                        ],
                    };
                    write_result_rows(&rows, &mut csv)?;
                    json!({ "outcome": out })
                }
            }
        }
    };
    Ok(RunOutput { csv, summary: json!({ "subcommand": sub.name(), "seeds": seeds.len(), "result": summary }) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        assert_eq!(mapping_grid(2, 2, 16).unwrap().len(), 289);
        assert_eq!(mapping_grid(1, 3, 2).unwrap().len(), 6);
        assert!(mapping_grid(4, 4, 64).is_err());
    }

    #[test]
    fn subcommand_names_round_trip() {
        for s in Subcommand::ALL {
            assert_eq!(s.name().parse::<Subcommand>().unwrap(), s);
        }
        assert!("bogus".parse::<Subcommand>().is_err());
    }

    #[test]
    fn payload_errors_name_the_field() {
        let e = parse_config::<MfgRunConfig>(r#"{"grid": {"x_min": "a"}}"#).unwrap_err();
        assert_eq!(e.field().as_deref(), Some("grid.x_min"));
        assert!(e.is_input_error());
    }

    #[test]
    fn cells_are_tagged() {
        assert_eq!(cell(f64::INFINITY), "inf");
        assert_eq!(cell(f64::NAN), "nan");
        assert_eq!(cell(0.5), "5.000000000000e-1");
    }

    #[test]
    fn ks_tail() {
        assert_eq!(ks_one_sided_p(0.0, 10, 10), 1.0);
        assert!(ks_one_sided_p(0.5, 100, 100) < 1e-5);
        let d = dominance(&[0.5, 1.0], &[0.0, 0.5], 50, 50);
        assert!(d.pointwise && d.passed);
        assert_eq!(d.d_plus, 0.5);
    }
}
