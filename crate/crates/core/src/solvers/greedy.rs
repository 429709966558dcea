use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mirror_game::{
    assemble_p1, boltzmann_posterior, bottleneck_pair_search, chance_relax, epsilon_floor,
    BottleneckOutcome, ChanceConstrainedProblem, ChanceEvaluation, ConstraintKind, EpsilonFloors,
    MirrorGameInstance, Test, TwinAssignment, UncertaintyModel, BOTTLENECK_GRID, COMPARE_TOL, SLOTS,
};
use crate::prob::{self, entropy_of, PrivacyMapping};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GreedyConfig {
    /// Iteration cap.
    pub budget: usize,
    /// Worlds drawn per merit evaluation (ignored when `|B| = 0`).
    pub samples: usize,
    /// Inverse temperature of the Boltzmann update of the originals.
    pub omega: f64,
    pub step0: f64,
    pub step_min: f64,
    /// `λ_0..λ_6`.
    pub weights: [f64; SLOTS],
    /// Also move the original channels (otherwise they stay at their start).
    pub update_original: bool,
    /// Floors used in relaxed mode.
    pub floors: EpsilonFloors,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig {
            budget: 60,
            samples: 16,
            omega: 1.0,
            step0: 0.25,
            step_min: 1.0 / 64.0,
            weights: [1.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0],
            update_original: true,
            floors: EpsilonFloors::new([0.002, 0.002, 0.02]),
        }
    }
}

impl GreedyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::validation("budget: need at least one iteration"));
        }
        if self.samples == 0 {
            return Err(Error::validation("samples: need at least one world"));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(Error::validation("omega: must be a finite non-negative real"));
        }
        if !(0.0 < self.step_min && self.step_min <= self.step0 && self.step0 <= 1.0) {
            return Err(Error::validation("step0/step_min: need 0 < step_min <= step0 <= 1"));
        }
        if self.weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::validation("weights: every lambda must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GreedyStep {
    pub iteration: usize,
    /// Best merit so far.
    pub merit: f64,
    /// Merit of the assignment being moved.
    pub current_merit: f64,
    pub step: f64,
    pub feasible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GreedyOutcome {
    pub assignment: TwinAssignment,
    pub merit: f64,
    pub feasible: bool,
    /// Reached zero merit before the budget ran out.
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<GreedyStep>,
    pub evaluation: ChanceEvaluation,
    /// Per-Bob bottleneck pair of the returned originals (relaxed runs only).
    pub bottleneck: Vec<BottleneckOutcome>,
}

struct Merit<'a> {
    inst: &'a MirrorGameInstance,
    problem: ChanceConstrainedProblem,
    targets: [f64; SLOTS],
    weights: [f64; SLOTS],
    samples: usize,
}

impl Merit<'_> {
    fn eval(&self, asg: &TwinAssignment) -> (f64, ChanceEvaluation) {
        let e = self
            .problem
            .evaluate(self.inst, asg, self.samples)
            .expect("assignment shapes fixed by the solver");
        (e.merit(&self.targets, &self.weights), e)
    }
}

/// Smallest bottleneck grid point at or above `gamma2`.
fn grid_ceiling(gamma2: f64, h_x: f64) -> f64 {
    let steps = (BOTTLENECK_GRID - 1) as f64;
    if h_x <= 0.0 {
        return gamma2;
    }
    let j = (gamma2 / h_x * steps - COMPARE_TOL).ceil().max(0.0);
    if j > steps {
        gamma2
    } else {
        h_x * j / steps
    }
}

fn build_problem(
    inst: &MirrorGameInstance,
    u: &UncertaintyModel,
    relaxed: bool,
    floors: EpsilonFloors,
) -> Result<ChanceConstrainedProblem> {
    let strict = chance_relax(inst, &assemble_p1(inst), u)?;
    if !relaxed {
        return Ok(strict);
    }
    let mut p = epsilon_floor(&strict, floors)?;
    // Utility tests are read off the bottleneck grid: γ2 is rounded up to
    // the next grid threshold, so a pass certifies a grid pair (γ2*, ϑ1*).
    for c in p.slots.iter_mut().filter(|c| c.slot.kind == ConstraintKind::Utility) {
        for i in c.slot.instances.iter_mut() {
            if let Test::AtLeast(g) = i.test {
                let h = entropy_of(inst.x_marginal(i.q).probs());
                i.test = Test::AtLeast(grid_ceiling(g, h));
            }
        }
    }
    Ok(p)
}

fn random_row<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let z: f64 = w.iter().sum();
    if z > 0.0 {
        w.into_iter().map(|v| v / z).collect()
    } else {
        vec![1.0 / n as f64; n]
    }
}

fn random_mapping<R: Rng>(rng: &mut R, nin: usize, nout: usize) -> PrivacyMapping {
    let w: Vec<f64> = (0..nin).flat_map(|_| random_row(rng, nout)).collect();
    PrivacyMapping::normalized_flat(nin, nout, w).expect("positive rows")
}

/// Near-diagonal start for an original channel.
fn informative_mapping<R: Rng>(rng: &mut R, nin: usize, nout: usize) -> PrivacyMapping {
    let mut w = Vec::with_capacity(nin * nout);
    for x in 0..nin {
        let a: f64 = rng.random_range(0.0..0.5);
        let r = random_row(rng, nout);
        for (y, v) in r.into_iter().enumerate() {
            let diag = if y == x % nout { 1.0 } else { 0.0 };
            w.push((1.0 - a) * diag + a * v);
        }
    }
    PrivacyMapping::normalized_flat(nin, nout, w).expect("positive rows")
}

/// All single-row moves `row_x ← (1-δ) row_x + δ e_y`.
fn moves(m: &PrivacyMapping, delta: f64) -> Vec<PrivacyMapping> {
    let (nin, nout) = (m.inputs(), m.outputs());
    let mut out = Vec::new();
    for x in 0..nin {
        for y in 0..nout {
            if m.get(x, y) >= 1.0 {
                continue;
            }
            let mut w = m.as_flat().to_vec();
            for k in 0..nout {
                let e = if k == y { 1.0 } else { 0.0 };
                w[x * nout + k] = (1.0 - delta) * w[x * nout + k] + delta * e;
            }
            out.push(PrivacyMapping::normalized_flat(nin, nout, w).expect("convex combination"));
        }
    }
    out
}

/// Self-consistent Boltzmann re-derivation of Bob `q`'s original channel.
fn boltzmann_update(
    inst: &MirrorGameInstance,
    asg: &TwinAssignment,
    q: usize,
    omega: f64,
) -> Option<PrivacyMapping> {
    let o = &asg.original[q];
    let chain = prob::markov_compose(inst.joint(q), o).ok()?;
    let y_s = chain.marginal_pair(1).transpose();
    let p_y = y_s.marginal_a();
    let s_given_y = y_s.conditional_b_given_a();
    let post = boltzmann_posterior(inst.x_marginal(q), inst.s_given_x(q), &s_given_y, omega).ok()?;
    let (nx, ny) = (o.inputs(), o.outputs());
    let mut w = vec![0.0; nx * ny];
    for x in 0..nx {
        let z: f64 = (0..ny).map(|y| post.get(y, x) * p_y.get(y)).sum();
        for y in 0..ny {
            w[x * ny + y] = if z > 0.0 { post.get(y, x) * p_y.get(y) } else { o.get(x, y) };
        }
    }
    PrivacyMapping::normalized_flat(nx, ny, w).ok()
}

const IMPROVE_TOL: f64 = 1e-15;

/// Greedy coordinate search over twin assignments.
///
/// Each iteration visits every Bob: a Boltzmann re-derivation of the original
/// channel and the best single-row move on the original and virtual channels
/// are each kept only if they lower the merit. The step halves after an
/// iteration without improvement; below `step_min` the virtual channels are
/// redrawn. The run ends once the merit is zero (every chance slot passes)
/// or the budget is spent.
///
/// With `relaxed`, conditions (v)–(vii) use the ε floors of `cfg` and the
/// utility threshold is read off the bottleneck grid.
pub fn greedy_solve(
    inst: &MirrorGameInstance,
    u: &UncertaintyModel,
    relaxed: bool,
    cfg: &GreedyConfig,
    seed: u64,
) -> Result<GreedyOutcome> {
    cfg.validate()?;
    let problem = build_problem(inst, u, relaxed, cfg.floors)?;
    let merit = Merit {
        inst,
        targets: problem.targets(),
        problem,
        weights: cfg.weights,
        samples: cfg.samples,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nq = inst.q_count();
    let mut cur = TwinAssignment {
        original: (0..nq)
            .map(|q| informative_mapping(&mut rng, inst.x_alphabet(q), inst.original_alphabet(q)))
            .collect(),
        virtual_: (0..nq)
            .map(|q| random_mapping(&mut rng, inst.x_alphabet(q), inst.virtual_alphabet()))
            .collect(),
    };
    let (mut cur_m, mut cur_e) = merit.eval(&cur);
    let (mut best, mut best_m, mut best_e) = (cur.clone(), cur_m, cur_e.clone());
    let mut delta = cfg.step0;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = cfg.budget;

    for it in 1..=cfg.budget {
        if best_m <= 0.0 {
            trace.push(GreedyStep {
                iteration: it,
                merit: best_m,
                current_merit: cur_m,
                step: delta,
                feasible: best_e.feasible,
            });
            converged = true;
            iterations = it;
            break;
        }
        let mut improved = false;
        for q in 0..nq {
            let mut candidates: Vec<(bool, PrivacyMapping)> = Vec::new();
            if cfg.update_original {
                if let Some(o) = boltzmann_update(inst, &cur, q, cfg.omega) {
                    candidates.push((true, o));
                }
                candidates.extend(moves(&cur.original[q], delta).into_iter().map(|m| (true, m)));
            }
            candidates.extend(moves(&cur.virtual_[q], delta).into_iter().map(|m| (false, m)));
            let mut pick: Option<(TwinAssignment, f64, ChanceEvaluation)> = None;
            for (is_orig, m) in candidates {
                let mut trial = cur.clone();
                if is_orig {
                    trial.original[q] = m;
                } else {
                    trial.virtual_[q] = m;
                }
                let (tm, te) = merit.eval(&trial);
                let bar = pick.as_ref().map_or(cur_m, |p| p.1);
                if tm < bar - IMPROVE_TOL {
                    pick = Some((trial, tm, te));
                }
            }
            if let Some((a, m, e)) = pick {
                cur = a;
                cur_m = m;
                cur_e = e;
                improved = true;
            }
            if cur_m < best_m {
                best = cur.clone();
                best_m = cur_m;
                best_e = cur_e.clone();
            }
            if best_m <= 0.0 {
                break;
            }
        }
        if !improved {
            delta /= 2.0;
            if delta < cfg.step_min {
                for q in 0..nq {
                    cur.virtual_[q] = random_mapping(&mut rng, inst.x_alphabet(q), inst.virtual_alphabet());
                }
                (cur_m, cur_e) = merit.eval(&cur);
                delta = cfg.step0;
            }
        }
        trace.push(GreedyStep {
            iteration: it,
            merit: best_m,
            current_merit: cur_m,
            step: delta,
            feasible: best_e.feasible,
        });
    }
    if !converged && best_m <= 0.0 {
        converged = true;
    }
    let bottleneck = if relaxed {
        (0..nq)
            .map(|q| bottleneck_pair_search(inst, &best, u, inst.theta(1), q, cfg.samples))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(GreedyOutcome {
        feasible: best_e.feasible,
        assignment: best,
        merit: best_m,
        converged,
        iterations,
        trace,
        evaluation: best_e,
        bottleneck,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_ceiling_rounds_up() {
        let h = 1.0;
        assert_eq!(grid_ceiling(0.0, h), 0.0);
        assert!((grid_ceiling(1.0 / 63.0, h) - 1.0 / 63.0).abs() < 1e-15);
        assert!((grid_ceiling(0.5, h) - 32.0 / 63.0).abs() < 1e-15);
        assert_eq!(grid_ceiling(2.0, h), 2.0);
    }

    #[test]
    fn moves_stay_stochastic() {
        let m = PrivacyMapping::bsc(0.3).unwrap();
        let ms = moves(&m, 0.25);
        assert_eq!(ms.len(), 4);
        assert!((ms[0].get(0, 0) - 0.775).abs() < 1e-15);
        let c = PrivacyMapping::constant(2, 2, 0).unwrap();
        assert_eq!(moves(&c, 0.5).len(), 2);
    }

    #[test]
    fn config_validation() {
        let mut c = GreedyConfig::default();
        c.step_min = 0.5;
        assert!(c.validate().is_err());
        let mut c = GreedyConfig::default();
        c.weights[2] = 0.0;
        assert!(c.validate().is_err());
    }
}
