//! The multi-receiver mirror game: Alice releases to every Bob `q` an
//! original message `Y^(o)_q` and a virtual twin `Y^(v)_q`, both drawn from
//! channels on Bob `q`'s source `X_q`. The twin should be statistically
//! nulled for its own Bob while still carrying information for the others.
//!
//! All Bobs share the private variable `S`; their sources are conditionally
//! independent given `S`, so `P(s, x_1, …, x_Q) = P(s) Π_q P(x_q | s)`.
//!
//! The seven feasibility conditions, indexed as `ϑ0..ϑ6` throughout:
//!
//! | slot | condition | test |
//! |------|-----------|------|
//! | 0 | cross leakage `I(X_q; Y^(tot)_{q'})` (objective) | `≤ γ3` |
//! | 1 | utility `I(X_q; Y^(o)_q)` | `≥ γ2` |
//! | 2 | leakage `I(Y^(o)_q; S)` | `≤ γ0^(q)` |
//! | 3 | twin power `E‖Y^(v)_q‖²` | `≤ γ1^(q)` |
//! | 4 | `I(Y^(v)_{q'}; Y^(o)_q)` | `> 0` |
//! | 5 | `I(Y^(v)_{q'}; X_q)` | `> 0` |
//! | 6 | `I(Y^(v)_q; Y^(o)_q)` | `= 0` |
//!
//! "Zero" and "positive" are separated by [`NULL_TOL`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{
    self, entropy_of, mi_of, JointPmf2, JointPmf3, Pmf, PrivacyMapping,
};

/// Mutual information at or below this is treated as zero.
pub const NULL_TOL: f64 = 1e-9;

/// Slack on `≥` / `≤` threshold comparisons.
pub const COMPARE_TOL: f64 = 1e-12;

/// Number of feasibility slots (`ϑ0..ϑ6`).
pub const SLOTS: usize = 7;

/// Plain serialized form of [`MirrorGameInstance`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MirrorGameSpec {
    /// Per-Bob joint `P(S, X_q)`, rows indexed by `s`.
    pub joints: Vec<JointPmf2>,
    pub gamma0: Vec<f64>,
    pub gamma1: Vec<f64>,
    pub gamma2: f64,
    pub gamma3: f64,
    pub theta_levels: [f64; SLOTS],
    /// Size of each original-message alphabet; defaults to `|X_q|`.
    #[serde(default)]
    pub original_alphabet: Option<usize>,
    #[serde(default = "default_virtual_alphabet")]
    pub virtual_alphabet: usize,
    /// Real embedding of the virtual alphabet used for power; defaults to
    /// the symbol index.
    #[serde(default)]
    pub symbol_values: Option<Vec<f64>>,
    /// Adds the optional `I(X_q; Y^(v)_q) = 0` slot to condition reports.
    #[serde(default)]
    pub extra_conditions: bool,
}

fn default_virtual_alphabet() -> usize {
    2
}

#[derive(Clone, Debug)]
struct BobModel {
    ns: usize,
    nx: usize,
    /// `P(x | s)`, row-major `ns × nx`.
    x_given_s: PrivacyMapping,
    s_given_x: PrivacyMapping,
    p_x: Pmf,
}

/// A validated multi-Bob instance.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "MirrorGameSpec", into = "MirrorGameSpec")]
pub struct MirrorGameInstance {
    spec: MirrorGameSpec,
    bobs: Vec<BobModel>,
    p_s: Pmf,
    symbol_values: Vec<f64>,
}

impl TryFrom<MirrorGameSpec> for MirrorGameInstance {
    type Error = Error;

    fn try_from(spec: MirrorGameSpec) -> Result<Self> {
        MirrorGameInstance::new(spec)
    }
}

impl From<MirrorGameInstance> for MirrorGameSpec {
    fn from(inst: MirrorGameInstance) -> Self {
        inst.spec
    }
}

fn check_threshold(name: &str, v: f64) -> Result<()> {
    if v.is_nan() || v < 0.0 {
        return Err(Error::validation(format!("{name}: threshold {v} must be >= 0")));
    }
    Ok(())
}

impl MirrorGameInstance {
    pub fn new(spec: MirrorGameSpec) -> Result<Self> {
        let q = spec.joints.len();
        if q < 2 {
            return Err(Error::validation(format!(
                "joints: mirror game needs at least 2 Bobs, got {q}"
            )));
        }
        if spec.gamma0.len() != q || spec.gamma1.len() != q {
            return Err(Error::validation(format!(
                "gamma0/gamma1: expected {q} per-Bob thresholds, got {}/{}",
                spec.gamma0.len(),
                spec.gamma1.len()
            )));
        }
        for (i, g) in spec.gamma0.iter().enumerate() {
            check_threshold(&format!("gamma0[{i}]"), *g)?;
        }
        for (i, g) in spec.gamma1.iter().enumerate() {
            check_threshold(&format!("gamma1[{i}]"), *g)?;
        }
        check_threshold("gamma2", spec.gamma2)?;
        check_threshold("gamma3", spec.gamma3)?;
        for (i, t) in spec.theta_levels.iter().enumerate() {
            if !(0.0..=1.0).contains(t) {
                return Err(Error::validation(format!(
                    "theta_levels[{i}]: {t} not in [0,1]"
                )));
            }
        }
        if spec.virtual_alphabet == 0 {
            return Err(Error::validation("virtual_alphabet: must be >= 1"));
        }
        if spec.original_alphabet == Some(0) {
            return Err(Error::validation("original_alphabet: must be >= 1"));
        }
        let symbol_values = match &spec.symbol_values {
            Some(v) if v.len() != spec.virtual_alphabet => {
                return Err(Error::validation(format!(
                    "symbol_values: {} embeddings for a virtual alphabet of {}",
                    v.len(),
                    spec.virtual_alphabet
                )))
            }
            Some(v) if v.iter().any(|x| !x.is_finite()) => {
                return Err(Error::validation("symbol_values: embeddings must be finite"))
            }
            Some(v) => v.clone(),
            None => (0..spec.virtual_alphabet).map(|i| i as f64).collect(),
        };
        let p_s = spec.joints[0].marginal_a();
        let mut bobs = Vec::with_capacity(q);
        for (i, j) in spec.joints.iter().enumerate() {
            let ps = j.marginal_a();
            if ps.alphabet_size() != p_s.alphabet_size() {
                return Err(Error::validation(format!(
                    "joints[{i}]: S alphabet {} differs from joints[0] ({})",
                    ps.alphabet_size(),
                    p_s.alphabet_size()
                )));
            }
            let drift = ps
                .probs()
                .iter()
                .zip(p_s.probs())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if drift > 1e-9 {
                return Err(Error::validation(format!(
                    "joints[{i}]: S marginal differs from joints[0] by {drift:e}; Bobs share one private source"
                )));
            }
            bobs.push(BobModel {
                ns: j.rows(),
                nx: j.cols(),
                x_given_s: j.conditional_b_given_a(),
                s_given_x: j.transpose().conditional_b_given_a(),
                p_x: j.marginal_b(),
            });
        }
        Ok(MirrorGameInstance {
            spec,
            bobs,
            p_s,
            symbol_values,
        })
    }

    pub fn spec(&self) -> &MirrorGameSpec {
        &self.spec
    }

    pub fn q_count(&self) -> usize {
        self.bobs.len()
    }

    pub fn s_alphabet(&self) -> usize {
        self.p_s.alphabet_size()
    }

    pub fn x_alphabet(&self, q: usize) -> usize {
        self.bobs[q].nx
    }

    pub fn original_alphabet(&self, q: usize) -> usize {
        self.spec.original_alphabet.unwrap_or(self.bobs[q].nx)
    }

    pub fn virtual_alphabet(&self) -> usize {
        self.spec.virtual_alphabet
    }

    pub fn symbol_values(&self) -> &[f64] {
        &self.symbol_values
    }

    pub fn joint(&self, q: usize) -> &JointPmf2 {
        &self.spec.joints[q]
    }

    pub fn x_marginal(&self, q: usize) -> &Pmf {
        &self.bobs[q].p_x
    }

    pub fn s_given_x(&self, q: usize) -> &PrivacyMapping {
        &self.bobs[q].s_given_x
    }

    pub fn x_given_s(&self, q: usize) -> &PrivacyMapping {
        &self.bobs[q].x_given_s
    }

    pub fn theta(&self, slot: usize) -> f64 {
        self.spec.theta_levels[slot]
    }

    /// Ordered pairs `(q, q')` with `q ≠ q'`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.q_count();
        (0..n)
            .flat_map(|q| (0..n).filter(move |&p| p != q).map(move |p| (q, p)))
            .collect()
    }

    /// Checks that `asg` fits this instance's alphabets.
    pub fn check_assignment(&self, asg: &TwinAssignment) -> Result<()> {
        let q = self.q_count();
        if asg.original.len() != q || asg.virtual_.len() != q {
            return Err(Error::validation(format!(
                "assignment: expected {q} original and virtual mappings, got {} and {}",
                asg.original.len(),
                asg.virtual_.len()
            )));
        }
        for i in 0..q {
            let (o, v) = (&asg.original[i], &asg.virtual_[i]);
            if o.inputs() != self.bobs[i].nx || o.outputs() != self.original_alphabet(i) {
                return Err(Error::validation(format!(
                    "original[{i}]: shape {}x{}, expected {}x{}",
                    o.inputs(),
                    o.outputs(),
                    self.bobs[i].nx,
                    self.original_alphabet(i)
                )));
            }
            if v.inputs() != self.bobs[i].nx || v.outputs() != self.virtual_alphabet() {
                return Err(Error::validation(format!(
                    "virtual[{i}]: shape {}x{}, expected {}x{}",
                    v.inputs(),
                    v.outputs(),
                    self.bobs[i].nx,
                    self.virtual_alphabet()
                )));
            }
        }
        Ok(())
    }
}

/// `P(S, X)` for `S ~ Bernoulli(p_s)` observed through a binary symmetric
/// channel with crossover `flip`.
pub fn bernoulli_joint(p_s: f64, flip: f64) -> Result<JointPmf2> {
    let s = Pmf::bernoulli(p_s)?;
    JointPmf2::from_channel(&s, &PrivacyMapping::bsc(flip)?)
}

/// Per-Bob original and virtual channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwinAssignment {
    pub original: Vec<PrivacyMapping>,
    #[serde(rename = "virtual")]
    pub virtual_: Vec<PrivacyMapping>,
}

/// Where the uncertainty `B` acts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationSite {
    /// Each entry of `P(S | Y^(o)_q)` is scaled by `1 + |B|·u`,
    /// `u ~ Uniform(-1, 1)`, and the column renormalized.
    #[default]
    PosteriorSGivenY,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyModel {
    pub magnitude: f64,
    pub seed: u64,
    #[serde(default)]
    pub target: PerturbationSite,
}

impl UncertaintyModel {
    pub fn new(magnitude: f64, seed: u64) -> Result<Self> {
        let u = UncertaintyModel {
            magnitude,
            seed,
            target: PerturbationSite::PosteriorSGivenY,
        };
        u.validate()?;
        Ok(u)
    }

    pub fn none() -> Self {
        UncertaintyModel {
            magnitude: 0.0,
            seed: 0,
            target: PerturbationSite::PosteriorSGivenY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.magnitude) {
            return Err(Error::validation(format!(
                "uncertainty magnitude {} not in [0,1]",
                self.magnitude
            )));
        }
        Ok(())
    }

    pub fn is_certain(&self) -> bool {
        self.magnitude == 0.0
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// One realization of the per-Bob joints `P(s, x_q, y^(o)_q)`.
#[derive(Clone, Debug)]
pub(crate) struct World {
    joints: Vec<Vec<f64>>,
}

impl World {
    pub(crate) fn nominal(inst: &MirrorGameInstance, asg: &TwinAssignment) -> World {
        let joints = (0..inst.q_count())
            .map(|q| {
                prob::markov_compose(inst.joint(q), &asg.original[q])
                    .expect("assignment checked against instance")
                    .as_flat()
                    .to_vec()
            })
            .collect();
        World { joints }
    }

    /// Applies one draw of the posterior perturbation to a nominal world.
    pub(crate) fn perturbed<R: Rng>(
        inst: &MirrorGameInstance,
        asg: &TwinAssignment,
        nominal: &World,
        magnitude: f64,
        rng: &mut R,
    ) -> World {
        let mut joints = Vec::with_capacity(nominal.joints.len());
        for (q, w) in nominal.joints.iter().enumerate() {
            let (ns, nx, no) = (inst.bobs[q].ns, inst.bobs[q].nx, asg.original[q].outputs());
            let mut p_sy = vec![0.0; ns * no];
            for s in 0..ns {
                for x in 0..nx {
                    for y in 0..no {
                        p_sy[s * no + y] += w[(s * nx + x) * no + y];
                    }
                }
            }
            let mut factor = vec![0.0; ns * no];
            for y in 0..no {
                let mut z = 0.0;
                let py: f64 = (0..ns).map(|s| p_sy[s * no + y]).sum();
                for s in 0..ns {
                    let u: f64 = rng.random_range(-1.0..1.0);
                    let f = 1.0 + magnitude * u;
                    factor[s * no + y] = f;
                    if py > 0.0 {
                        z += p_sy[s * no + y] / py * f;
                    }
                }
                for s in 0..ns {
                    factor[s * no + y] = if z > 0.0 { factor[s * no + y] / z } else { 1.0 };
                }
            }
            let mut out = w.clone();
            for s in 0..ns {
                for x in 0..nx {
                    for y in 0..no {
                        out[(s * nx + x) * no + y] *= factor[s * no + y];
                    }
                }
            }
            joints.push(out);
        }
        World { joints }
    }
}

/// Every condition value of one world.
#[derive(Clone, Debug)]
pub(crate) struct WorldValues {
    pub utility: Vec<f64>,
    pub leakage: Vec<f64>,
    pub power: Vec<f64>,
    pub own_null: Vec<f64>,
    pub source_to_twin: Vec<f64>,
    /// `[q][q']`, diagonal unused.
    pub cross: Vec<Vec<f64>>,
    pub twin_orig: Vec<Vec<f64>>,
    pub twin_src: Vec<Vec<f64>>,
}

/// Channels from `S` used by the cross-Bob terms.
pub(crate) struct Kernels {
    /// `S → Y^(v)_{q}` through `X_q`.
    virt: Vec<PrivacyMapping>,
    /// `S → (Y^(o)_q, Y^(v)_q)` through `X_q`.
    total: Vec<PrivacyMapping>,
}

impl Kernels {
    pub(crate) fn new(inst: &MirrorGameInstance, asg: &TwinAssignment) -> Kernels {
        let mut virt = Vec::new();
        let mut total = Vec::new();
        for q in 0..inst.q_count() {
            let xs = inst.x_given_s(q);
            virt.push(xs.then(&asg.virtual_[q]).expect("checked"));
            let tot = asg.original[q].tensor(&asg.virtual_[q]).expect("checked");
            total.push(xs.then(&tot).expect("checked"));
        }
        Kernels { virt, total }
    }
}

/// `Σ_s A(s, t) K(s, o)` as a `|T| × |O|` table.
fn through_s(a: &[f64], ns: usize, nt: usize, k: &PrivacyMapping) -> Vec<f64> {
    let no = k.outputs();
    let mut out = vec![0.0; nt * no];
    for s in 0..ns {
        let krow = k.row(s);
        for t in 0..nt {
            let v = a[s * nt + t];
            if v == 0.0 {
                continue;
            }
            for (o, &kv) in krow.iter().enumerate() {
                out[t * no + o] += v * kv;
            }
        }
    }
    out
}

pub(crate) fn world_values(
    inst: &MirrorGameInstance,
    asg: &TwinAssignment,
    kernels: &Kernels,
    world: &World,
) -> WorldValues {
    let nq = inst.q_count();
    let nv = inst.virtual_alphabet();
    let mut vals = WorldValues {
        utility: vec![0.0; nq],
        leakage: vec![0.0; nq],
        power: vec![0.0; nq],
        own_null: vec![0.0; nq],
        source_to_twin: vec![0.0; nq],
        cross: vec![vec![0.0; nq]; nq],
        twin_orig: vec![vec![0.0; nq]; nq],
        twin_src: vec![vec![0.0; nq]; nq],
    };
    for q in 0..nq {
        let (ns, nx) = (inst.bobs[q].ns, inst.bobs[q].nx);
        let no = asg.original[q].outputs();
        let w = &world.joints[q];
        let mut s_yo = vec![0.0; ns * no];
        let mut s_x = vec![0.0; ns * nx];
        let mut x_yo = vec![0.0; nx * no];
        for s in 0..ns {
            for x in 0..nx {
                for y in 0..no {
                    let v = w[(s * nx + x) * no + y];
                    s_yo[s * no + y] += v;
                    s_x[s * nx + x] += v;
                    x_yo[x * no + y] += v;
                }
            }
        }
        vals.utility[q] = mi_of(&x_yo, nx, no);
        vals.leakage[q] = mi_of(&s_yo, ns, no);

        let vq = &asg.virtual_[q];
        let mut p_x = vec![0.0; nx];
        for x in 0..nx {
            p_x[x] = (0..no).map(|y| x_yo[x * no + y]).sum();
        }
        let mut power = 0.0;
        for v in 0..nv {
            let pv: f64 = (0..nx).map(|x| p_x[x] * vq.get(x, v)).sum();
            power += pv * inst.symbol_values[v] * inst.symbol_values[v];
        }
        vals.power[q] = power;

        let mut yo_yv = vec![0.0; no * nv];
        for x in 0..nx {
            for y in 0..no {
                let m = x_yo[x * no + y];
                for v in 0..nv {
                    yo_yv[y * nv + v] += m * vq.get(x, v);
                }
            }
        }
        vals.own_null[q] = mi_of(&yo_yv, no, nv);
        let x_yv: Vec<f64> = (0..nx)
            .flat_map(|x| (0..nv).map(move |v| (x, v)))
            .map(|(x, v)| p_x[x] * vq.get(x, v))
            .collect();
        vals.source_to_twin[q] = mi_of(&x_yv, nx, nv);

        for p in (0..nq).filter(|&p| p != q) {
            let kv = &kernels.virt[p];
            let kt = &kernels.total[p];
            let t = through_s(&s_yo, ns, no, kv);
            vals.twin_orig[q][p] = mi_of(&t, no, kv.outputs());
            let t = through_s(&s_x, ns, nx, kv);
            vals.twin_src[q][p] = mi_of(&t, nx, kv.outputs());
            let t = through_s(&s_x, ns, nx, kt);
            vals.cross[q][p] = mi_of(&t, nx, kt.outputs());
        }
    }
    vals
}

/// Values and pass flags of conditions (i)–(vii) for one Bob.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BobConditions {
    pub q: usize,
    /// (i) `I(X_q; Y^(o)_q)`.
    pub utility: f64,
    pub utility_pass: bool,
    /// (ii) `I(Y^(o)_q; S)`.
    pub leakage: f64,
    pub leakage_pass: bool,
    /// (iii) `I(X_q; Y^(tot)_{q'})` per `q'`, in increasing `q'` order skipping `q`.
    pub cross_leakage: Vec<f64>,
    pub cross_leakage_pass: bool,
    /// (iv) `E‖Y^(v)_q‖²`.
    pub virtual_power: f64,
    pub virtual_power_pass: bool,
    /// (v) `I(Y^(v)_{q'}; Y^(o)_q)` per `q'`.
    pub twin_to_original: Vec<f64>,
    pub twin_to_original_pass: bool,
    /// (vi) `I(Y^(v)_{q'}; X_q)` per `q'`.
    pub twin_to_source: Vec<f64>,
    pub twin_to_source_pass: bool,
    /// (vii) `I(Y^(v)_q; Y^(o)_q)`.
    pub own_twin: f64,
    pub own_twin_pass: bool,
    /// Optional `I(X_q; Y^(v)_q)`, present when extra conditions are enabled.
    pub source_to_own_twin: Option<f64>,
    pub source_to_own_twin_pass: Option<bool>,
}

impl BobConditions {
    pub fn all_pass(&self) -> bool {
        self.utility_pass
            && self.leakage_pass
            && self.cross_leakage_pass
            && self.virtual_power_pass
            && self.twin_to_original_pass
            && self.twin_to_source_pass
            && self.own_twin_pass
            && self.source_to_own_twin_pass.unwrap_or(true)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionReport {
    pub bobs: Vec<BobConditions>,
    pub feasible: bool,
}

impl ConditionReport {
    pub const CSV_HEADER: [&'static str; 17] = [
        "q",
        "i_utility",
        "i_pass",
        "ii_leakage",
        "ii_pass",
        "iii_cross_leakage_max",
        "iii_pass",
        "iv_power",
        "iv_pass",
        "v_min",
        "v_pass",
        "vi_min",
        "vi_pass",
        "vii_value",
        "vii_pass",
        "bob_pass",
        "feasible",
    ];

    /// One CSV record per Bob.
    pub fn csv_records(&self) -> Vec<Vec<String>> {
        let f = |v: f64| format!("{v:.12e}");
        self.bobs
            .iter()
            .map(|b| {
                vec![
                    b.q.to_string(),
                    f(b.utility),
                    b.utility_pass.to_string(),
                    f(b.leakage),
                    b.leakage_pass.to_string(),
                    f(b.cross_leakage.iter().cloned().fold(0.0, f64::max)),
                    b.cross_leakage_pass.to_string(),
                    f(b.virtual_power),
                    b.virtual_power_pass.to_string(),
                    f(b.twin_to_original.iter().cloned().fold(f64::INFINITY, f64::min)),
                    b.twin_to_original_pass.to_string(),
                    f(b.twin_to_source.iter().cloned().fold(f64::INFINITY, f64::min)),
                    b.twin_to_source_pass.to_string(),
                    f(b.own_twin),
                    b.own_twin_pass.to_string(),
                    b.all_pass().to_string(),
                    self.feasible.to_string(),
                ]
            })
            .collect()
    }
}

/// Evaluates conditions (i)–(vii) on the nominal (uncertainty-free) joints.
pub fn evaluate_conditions(
    inst: &MirrorGameInstance,
    asg: &TwinAssignment,
) -> Result<ConditionReport> {
    inst.check_assignment(asg)?;
    let kernels = Kernels::new(inst, asg);
    let vals = world_values(inst, asg, &kernels, &World::nominal(inst, asg));
    let nq = inst.q_count();
    let mut bobs = Vec::with_capacity(nq);
    for q in 0..nq {
        let others: Vec<usize> = (0..nq).filter(|&p| p != q).collect();
        let cross: Vec<f64> = others.iter().map(|&p| vals.cross[q][p]).collect();
        let t_orig: Vec<f64> = others.iter().map(|&p| vals.twin_orig[q][p]).collect();
        let t_src: Vec<f64> = others.iter().map(|&p| vals.twin_src[q][p]).collect();
        let spec = inst.spec();
        let extra = spec.extra_conditions.then_some(vals.source_to_twin[q]);
        bobs.push(BobConditions {
            q,
            utility: vals.utility[q],
            utility_pass: vals.utility[q] >= spec.gamma2 - COMPARE_TOL,
            leakage: vals.leakage[q],
            leakage_pass: vals.leakage[q] <= spec.gamma0[q] + COMPARE_TOL,
            cross_leakage_pass: cross.iter().all(|&v| v <= spec.gamma3 + COMPARE_TOL),
            cross_leakage: cross,
            virtual_power: vals.power[q],
            virtual_power_pass: vals.power[q] <= spec.gamma1[q] + COMPARE_TOL,
            twin_to_original_pass: t_orig.iter().all(|&v| v > NULL_TOL),
            twin_to_original: t_orig,
            twin_to_source_pass: t_src.iter().all(|&v| v > NULL_TOL),
            twin_to_source: t_src,
            own_twin: vals.own_null[q],
            own_twin_pass: vals.own_null[q] <= NULL_TOL,
            source_to_own_twin: extra,
            source_to_own_twin_pass: extra.map(|v| v <= NULL_TOL),
        });
    }
    let feasible = bobs.iter().all(BobConditions::all_pass);
    Ok(ConditionReport { bobs, feasible })
}

/// `E‖Y^(v)‖² = Σ_y P(y) value(y)²` with `P(y)` the push-forward of `x_marginal`.
pub fn virtual_power(map: &PrivacyMapping, x_marginal: &Pmf, symbol_values: &[f64]) -> Result<f64> {
    if symbol_values.len() < map.outputs() {
        return Err(Error::validation(format!(
            "symbol_values: {} embeddings for {} output symbols",
            symbol_values.len(),
            map.outputs()
        )));
    }
    let py = map.push_forward(x_marginal)?;
    Ok(py
        .probs()
        .iter()
        .zip(symbol_values)
        .map(|(p, v)| p * v * v)
        .sum())
}

/// The comparison a single constraint instantiation applies to its value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "test", content = "bound")]
pub enum Test {
    AtLeast(f64),
    AtMost(f64),
    /// Strictly above the bound (never below [`NULL_TOL`]).
    GreaterThan(f64),
    /// Within the band `[0, bound]` (never tighter than [`NULL_TOL`]).
    NullBand(f64),
}

impl Test {
    pub fn holds(&self, v: f64) -> bool {
        match *self {
            Test::AtLeast(t) => v >= t - COMPARE_TOL,
            Test::AtMost(t) => v <= t + COMPARE_TOL,
            Test::GreaterThan(t) => v > t.max(NULL_TOL),
            Test::NullBand(t) => v <= t.max(NULL_TOL),
        }
    }

    /// Distance by which `v` misses the test, zero when it holds.
    pub fn hinge(&self, v: f64) -> f64 {
        match *self {
            Test::AtLeast(t) => (t - v).max(0.0),
            Test::AtMost(t) => (v - t).max(0.0),
            Test::GreaterThan(t) => (t.max(NULL_TOL) - v).max(0.0),
            Test::NullBand(t) => (v - t.max(NULL_TOL)).max(0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    CrossLeakage,
    Utility,
    Leakage,
    Power,
    TwinToOriginal,
    TwinToSource,
    TwinNulling,
}

impl ConstraintKind {
    pub const ALL: [ConstraintKind; SLOTS] = [
        ConstraintKind::CrossLeakage,
        ConstraintKind::Utility,
        ConstraintKind::Leakage,
        ConstraintKind::Power,
        ConstraintKind::TwinToOriginal,
        ConstraintKind::TwinToSource,
        ConstraintKind::TwinNulling,
    ];

    pub fn slot(self) -> usize {
        self as usize
    }

    fn per_pair(self) -> bool {
        matches!(
            self,
            ConstraintKind::CrossLeakage | ConstraintKind::TwinToOriginal | ConstraintKind::TwinToSource
        )
    }

    fn value(self, vals: &WorldValues, q: usize, p: Option<usize>) -> f64 {
        match (self, p) {
            (ConstraintKind::CrossLeakage, Some(p)) => vals.cross[q][p],
            (ConstraintKind::TwinToOriginal, Some(p)) => vals.twin_orig[q][p],
            (ConstraintKind::TwinToSource, Some(p)) => vals.twin_src[q][p],
            (ConstraintKind::Utility, _) => vals.utility[q],
            (ConstraintKind::Leakage, _) => vals.leakage[q],
            (ConstraintKind::Power, _) => vals.power[q],
            (ConstraintKind::TwinNulling, _) => vals.own_null[q],
            _ => unreachable!("pair constraint without q'"),
        }
    }
}

/// One concrete use of a constraint: Bob `q`, optionally against `q'`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instantiation {
    pub q: usize,
    pub q_prime: Option<usize>,
    pub test: Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSlot {
    pub kind: ConstraintKind,
    pub instances: Vec<Instantiation>,
}

impl ConstraintSlot {
    fn holds(&self, vals: &WorldValues) -> bool {
        self.instances
            .iter()
            .all(|i| i.test.holds(self.kind.value(vals, i.q, i.q_prime)))
    }

    fn hinge(&self, vals: &WorldValues) -> f64 {
        self.instances
            .iter()
            .map(|i| i.test.hinge(self.kind.value(vals, i.q, i.q_prime)))
            .sum()
    }
}

/// Problem P1: minimize cross leakage subject to six constraints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationProblem {
    /// `(q, q')` pairs whose `I(X_q; Y^(tot)_{q'})` is minimized.
    pub objective: Vec<(usize, usize)>,
    /// Slots in order (i), (ii), (iv), (v), (vi), (vii).
    pub constraints: Vec<ConstraintSlot>,
}

fn instantiate(inst: &MirrorGameInstance, kind: ConstraintKind, test: impl Fn(usize) -> Test) -> ConstraintSlot {
    let instances = if kind.per_pair() {
        inst.pairs()
            .into_iter()
            .map(|(q, p)| Instantiation {
                q,
                q_prime: Some(p),
                test: test(q),
            })
            .collect()
    } else {
        (0..inst.q_count())
            .map(|q| Instantiation {
                q,
                q_prime: None,
                test: test(q),
            })
            .collect()
    };
    ConstraintSlot { kind, instances }
}

/// Integrates the seven conditions into P1.
pub fn assemble_p1(inst: &MirrorGameInstance) -> OptimizationProblem {
    let s = inst.spec();
    let constraints = vec![
        instantiate(inst, ConstraintKind::Utility, |_| Test::AtLeast(s.gamma2)),
        instantiate(inst, ConstraintKind::Leakage, |q| Test::AtMost(s.gamma0[q])),
        instantiate(inst, ConstraintKind::Power, |q| Test::AtMost(s.gamma1[q])),
        instantiate(inst, ConstraintKind::TwinToOriginal, |_| Test::GreaterThan(0.0)),
        instantiate(inst, ConstraintKind::TwinToSource, |_| Test::GreaterThan(0.0)),
        instantiate(inst, ConstraintKind::TwinNulling, |_| Test::NullBand(0.0)),
    ];
    OptimizationProblem {
        objective: inst.pairs(),
        constraints,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChanceConstraint {
    pub slot: ConstraintSlot,
    /// Required probability `ϑ` (or `ϑ'` after flooring).
    pub target: f64,
}

/// How condition (vii) is relaxed by [`epsilon_floor`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullingForm {
    /// `I ≤ ε3⁺`: the equality widened to a band.
    #[default]
    Band,
    /// `I ≥ ε3⁺`, the direction as printed in the relaxation step. This
    /// contradicts the nulling requirement and is kept for comparison.
    FlooredAsPrinted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonFloors {
    pub eps: [f64; 3],
    /// `ϑ'4, ϑ'5, ϑ'6`; `None` reuses the instance's `ϑ4..ϑ6`.
    #[serde(default)]
    pub targets: Option<[f64; 3]>,
    #[serde(default)]
    pub nulling: NullingForm,
}

impl EpsilonFloors {
    pub fn new(eps: [f64; 3]) -> Self {
        EpsilonFloors {
            eps,
            targets: None,
            nulling: NullingForm::Band,
        }
    }
}

/// P1 recast with every slot (objective included) as `Pr_B{·} ≥ ϑ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChanceConstrainedProblem {
    /// Indexed by slot `0..7`; slot 0 is the objective `Pr{cross ≤ γ3} ≥ ϑ0`.
    pub slots: Vec<ChanceConstraint>,
    pub uncertainty: UncertaintyModel,
    pub floors: Option<EpsilonFloors>,
}

/// Worst-case chance recast of P1 under the uncertainty model.
pub fn chance_relax(
    inst: &MirrorGameInstance,
    p1: &OptimizationProblem,
    u: &UncertaintyModel,
) -> Result<ChanceConstrainedProblem> {
    u.validate()?;
    let objective = ConstraintSlot {
        kind: ConstraintKind::CrossLeakage,
        instances: p1
            .objective
            .iter()
            .map(|&(q, p)| Instantiation {
                q,
                q_prime: Some(p),
                test: Test::AtMost(inst.spec().gamma3),
            })
            .collect(),
    };
    let mut slots = vec![ChanceConstraint {
        slot: objective,
        target: inst.theta(0),
    }];
    for c in &p1.constraints {
        slots.push(ChanceConstraint {
            slot: c.clone(),
            target: inst.theta(c.kind.slot()),
        });
    }
    slots.sort_by_key(|c| c.slot.kind.slot());
    Ok(ChanceConstrainedProblem {
        slots,
        uncertainty: *u,
        floors: None,
    })
}

/// Replaces the strict tests of conditions (v)–(vii) with ε⁺ floors.
pub fn epsilon_floor(
    ccp: &ChanceConstrainedProblem,
    floors: EpsilonFloors,
) -> Result<ChanceConstrainedProblem> {
    for (i, e) in floors.eps.iter().enumerate() {
        if !e.is_finite() || *e <= 0.0 {
            return Err(Error::validation(format!(
                "eps[{i}]: floor {e} must be a positive real"
            )));
        }
    }
    if let Some(t) = floors.targets {
        for (i, v) in t.iter().enumerate() {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::validation(format!("targets[{i}]: {v} not in [0,1]")));
            }
        }
    }
    let mut out = ccp.clone();
    for c in out.slots.iter_mut() {
        let k = match c.slot.kind {
            ConstraintKind::TwinToOriginal => 0,
            ConstraintKind::TwinToSource => 1,
            ConstraintKind::TwinNulling => 2,
            _ => continue,
        };
        let eps = floors.eps[k];
        let test = match (c.slot.kind, floors.nulling) {
            (ConstraintKind::TwinNulling, NullingForm::Band) => Test::NullBand(eps),
            (ConstraintKind::TwinNulling, NullingForm::FlooredAsPrinted) => Test::AtLeast(eps),
            _ => Test::GreaterThan(eps),
        };
        c.slot.instances.iter_mut().for_each(|i| i.test = test);
        if let Some(t) = floors.targets {
            c.target = t[k];
        }
    }
    out.floors = Some(floors);
    Ok(out)
}

/// Monte Carlo view of a chance-constrained problem at one assignment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChanceEvaluation {
    /// Estimated `Pr{slot holds}`: the achievable `ϑ` per slot.
    pub achievable: [f64; SLOTS],
    /// 95% normal-approximation half-widths.
    pub half_width: [f64; SLOTS],
    pub pass: [bool; SLOTS],
    /// Mean hinge violation per slot (units of the slot's value).
    pub hinge: [f64; SLOTS],
    pub samples: usize,
    pub feasible: bool,
}

impl ChanceEvaluation {
    /// `Σ_i λ_i (shortfall_i + hinge_i)` over failing slots, shortfall being
    /// `ϑ_i - Pr̂_i`. Zero exactly when every slot passes.
    pub fn merit(&self, targets: &[f64; SLOTS], weights: &[f64; SLOTS]) -> f64 {
        (0..SLOTS)
            .filter(|&i| !self.pass[i])
            .map(|i| weights[i] * ((targets[i] - self.achievable[i]).max(0.0) + self.hinge[i]))
            .sum::<f64>()
            + 0.0
    }
}

impl ChanceConstrainedProblem {
    pub fn targets(&self) -> [f64; SLOTS] {
        let mut t = [0.0; SLOTS];
        for c in &self.slots {
            t[c.slot.kind.slot()] = c.target;
        }
        t
    }

    /// Draws the world sample used by [`Self::evaluate`]. With `|B| = 0`
    /// only the nominal world is returned.
    pub(crate) fn sample_worlds(
        &self,
        inst: &MirrorGameInstance,
        asg: &TwinAssignment,
        n: usize,
    ) -> Vec<World> {
        let nominal = World::nominal(inst, asg);
        if self.uncertainty.is_certain() {
            return vec![nominal];
        }
        let mut rng = self.uncertainty.rng();
        (0..n)
            .map(|_| World::perturbed(inst, asg, &nominal, self.uncertainty.magnitude, &mut rng))
            .collect()
    }

    /// Estimates every slot's probability over `n` worlds drawn from the
    /// uncertainty model's seed (common random numbers across assignments).
    pub fn evaluate(
        &self,
        inst: &MirrorGameInstance,
        asg: &TwinAssignment,
        n: usize,
    ) -> Result<ChanceEvaluation> {
        if n == 0 {
            return Err(Error::validation("samples: need at least one world"));
        }
        inst.check_assignment(asg)?;
        let kernels = Kernels::new(inst, asg);
        let values: Vec<WorldValues> = self
            .sample_worlds(inst, asg, n)
            .iter()
            .map(|w| world_values(inst, asg, &kernels, w))
            .collect();
        Ok(self.evaluate_values(&values))
    }

    pub(crate) fn evaluate_values(&self, values: &[WorldValues]) -> ChanceEvaluation {
        let m = values.len() as f64;
        let mut achievable = [1.0; SLOTS];
        let mut half_width = [0.0; SLOTS];
        let mut hinge = [0.0; SLOTS];
        let mut pass = [true; SLOTS];
        for c in &self.slots {
            let i = c.slot.kind.slot();
            let hits = values.iter().filter(|v| c.slot.holds(v)).count() as f64;
            let p = hits / m;
            achievable[i] = p;
            half_width[i] = 1.96 * (p * (1.0 - p) / m).sqrt();
            hinge[i] = values.iter().map(|v| c.slot.hinge(v)).sum::<f64>() / m;
            pass[i] = p >= c.target;
        }
        ChanceEvaluation {
            achievable,
            half_width,
            pass,
            hinge,
            samples: values.len(),
            feasible: pass.iter().all(|&b| b),
        }
    }
}

/// Posterior `P(x | y) ∝ P(x) exp(-ω D(P(S|y) ‖ P(S|x)))`, returned with one
/// row per `y`.
///
/// The weights are not shifted before exponentiation, so an inverse
/// temperature large enough to zero every weight of some `y` is reported as
/// [`Error::NumericUnderflow`].
pub fn boltzmann_posterior(
    p_x: &Pmf,
    p_s_given_x: &PrivacyMapping,
    p_s_given_y: &PrivacyMapping,
    omega: f64,
) -> Result<PrivacyMapping> {
    if !omega.is_finite() || omega < 0.0 {
        return Err(Error::validation(format!("omega: {omega} must be >= 0")));
    }
    let nx = p_x.alphabet_size();
    if p_s_given_x.inputs() != nx {
        return Err(Error::validation(format!(
            "p_s_given_x: {} rows for an X alphabet of {nx}",
            p_s_given_x.inputs()
        )));
    }
    if p_s_given_y.outputs() != p_s_given_x.outputs() {
        return Err(Error::validation("p_s_given_y: S alphabet differs from p_s_given_x"));
    }
    let ny = p_s_given_y.inputs();
    let mut rows = Vec::with_capacity(ny * nx);
    for y in 0..ny {
        let mut weights = Vec::with_capacity(nx);
        for x in 0..nx {
            let w = if omega == 0.0 {
                p_x.get(x)
            } else {
                match prob::kl_of(p_s_given_y.row(y), p_s_given_x.row(x)) {
                    Ok(d) => p_x.get(x) * (-omega * d).exp(),
                    Err(Error::InfiniteDivergence) => 0.0,
                    Err(e) => return Err(e),
                }
            };
            weights.push(w);
        }
        let z: f64 = weights.iter().sum();
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::NumericUnderflow(format!(
                "partition function vanished for y = {y} at omega = {omega}"
            )));
        }
        rows.extend(weights.into_iter().map(|w| w / z));
    }
    // row sums of derived weights can drift by an ulp
    PrivacyMapping::normalized_flat(ny, nx, rows)
}

/// Result of the information-bottleneck pair search.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum BottleneckOutcome {
    Found {
        gamma2_star: f64,
        vtheta1_star: f64,
        /// `I(S; X_q) - I(Y^(o)_q; S)` on the nominal chain.
        gap: f64,
    },
    Infeasible {
        gap: f64,
    },
}

/// Grid resolution of [`bottleneck_pair_search`].
pub const BOTTLENECK_GRID: usize = 64;

/// Largest `γ2` on a 64-point grid over `[0, H(X_q)]` whose empirical
/// `Pr{I(X_q; Y^(o)_q) ≥ γ2}` reaches `vtheta_target`.
pub fn bottleneck_pair_search(
    inst: &MirrorGameInstance,
    asg: &TwinAssignment,
    u: &UncertaintyModel,
    vtheta_target: f64,
    q: usize,
    samples: usize,
) -> Result<BottleneckOutcome> {
    if q >= inst.q_count() {
        return Err(Error::validation(format!("q: Bob {q} out of range")));
    }
    if samples == 0 {
        return Err(Error::validation("samples: need at least one world"));
    }
    u.validate()?;
    inst.check_assignment(asg)?;
    let nominal = World::nominal(inst, asg);
    let utilities: Vec<f64> = if u.is_certain() {
        vec![utility_of(inst, asg, &nominal, q)]
    } else {
        let mut rng = u.rng();
        (0..samples)
            .map(|_| {
                let w = World::perturbed(inst, asg, &nominal, u.magnitude, &mut rng);
                utility_of(inst, asg, &w, q)
            })
            .collect()
    };
    let gap = bottleneck_gap(inst, asg, q);
    Ok(pair_from_utilities(
        &utilities,
        entropy_of(inst.x_marginal(q).probs()),
        vtheta_target,
        gap,
    ))
}

pub(crate) fn pair_from_utilities(
    utilities: &[f64],
    h_x: f64,
    vtheta_target: f64,
    gap: f64,
) -> BottleneckOutcome {
    let m = utilities.len() as f64;
    for j in (0..BOTTLENECK_GRID).rev() {
        let g = h_x * j as f64 / (BOTTLENECK_GRID - 1) as f64;
        let p = utilities.iter().filter(|&&v| v >= g - COMPARE_TOL).count() as f64 / m;
        if p >= vtheta_target {
            return BottleneckOutcome::Found {
                gamma2_star: g,
                vtheta1_star: p,
                gap,
            };
        }
    }
    BottleneckOutcome::Infeasible { gap }
}

fn utility_of(inst: &MirrorGameInstance, asg: &TwinAssignment, w: &World, q: usize) -> f64 {
    let (ns, nx, no) = (inst.bobs[q].ns, inst.bobs[q].nx, asg.original[q].outputs());
    let mut x_yo = vec![0.0; nx * no];
    for s in 0..ns {
        for x in 0..nx {
            for y in 0..no {
                x_yo[x * no + y] += w.joints[q][(s * nx + x) * no + y];
            }
        }
    }
    mi_of(&x_yo, nx, no)
}

pub(crate) fn bottleneck_gap(inst: &MirrorGameInstance, asg: &TwinAssignment, q: usize) -> f64 {
    let chain = prob::markov_compose(inst.joint(q), &asg.original[q]).expect("checked");
    prob::mutual_information(inst.joint(q)) - prob::mutual_information(&chain.marginal_pair(1))
}

/// The two chain-rule terms of `I(X_q; (Y^(o)_{q'}, Y^(v)_{q'}))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ObjectiveTerms {
    /// `I(X_q; Y^(o)_{q'})`.
    pub i_xo: f64,
    /// `I(X_q; Y^(v)_{q'} | Y^(o)_{q'})`.
    pub i_xv_given_o: f64,
    /// `I(X_q; Y^(tot)_{q'})` computed directly on the product alphabet.
    pub direct: f64,
}

/// Joint `P(x_q, y^(o)_{q'}, y^(v)_{q'})` on the nominal chain.
pub fn cross_joint(
    inst: &MirrorGameInstance,
    asg: &TwinAssignment,
    q: usize,
    q_prime: usize,
) -> Result<JointPmf3> {
    inst.check_assignment(asg)?;
    let n = inst.q_count();
    if q >= n || q_prime >= n {
        return Err(Error::validation("q/q_prime: Bob index out of range"));
    }
    let total = asg.original[q_prime].tensor(&asg.virtual_[q_prime])?;
    let kernel = inst.x_given_s(q_prime).then(&total)?;
    let j = inst.joint(q);
    let t = through_s(j.as_flat(), j.rows(), j.cols(), &kernel);
    JointPmf3::normalized_flat(
        [j.cols(), asg.original[q_prime].outputs(), asg.virtual_[q_prime].outputs()],
        t,
    )
}

pub fn objective_decompose(
    inst: &MirrorGameInstance,
    asg: &TwinAssignment,
    q: usize,
    q_prime: usize,
) -> Result<ObjectiveTerms> {
    if q == q_prime {
        return Err(Error::validation("objective_decompose: q and q' must differ"));
    }
    let j = cross_joint(inst, asg, q, q_prime)?;
    let i_xo = prob::mutual_information(&j.marginal_pair(2));
    // (x, yv, yo): condition on the last axis.
    let i_xv_given_o = prob::conditional_mutual_information(&j.permute([0, 2, 1]));
    let direct = prob::mutual_information(&j.group_bc());
    Ok(ObjectiveTerms {
        i_xo,
        i_xv_given_o,
        direct,
    })
}
