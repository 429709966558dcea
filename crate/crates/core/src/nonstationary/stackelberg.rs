//! Two-stage leader/follower game over finite grids.
//!
//! The leader commits to a law over its outcomes `U0`; the follower answers
//! with the action maximizing its expected payoff under that law; the
//! leader picks the law whose induced answer is best for itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::Pmf;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackelbergInstance {
    /// Candidate leader laws over `U0` outcomes.
    pub leader_laws: Vec<Pmf>,
    /// `follower_payoff[a][u]`.
    pub follower_payoff: Vec<Vec<f64>>,
    /// `leader_payoff[a][u]`.
    pub leader_payoff: Vec<Vec<f64>>,
    /// Per-stage log-drift of the leader law: at stage `t` the law is
    /// reweighted by `exp(t · drift[u])`.
    #[serde(default)]
    pub drift: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StackelbergSolution {
    pub leader: usize,
    pub follower: usize,
    /// Leader's expected payoff.
    pub value: f64,
    pub follower_value: f64,
    /// Number of leader laws examined when the final choice was first reached.
    pub evaluations_to_optimum: usize,
}

impl StackelbergInstance {
    pub fn validate(&self) -> Result<()> {
        if self.leader_laws.is_empty() || self.follower_payoff.is_empty() {
            return Err(Error::validation("leader_laws/follower_payoff: grids must be non-empty"));
        }
        let m = self.leader_laws[0].alphabet_size();
        if let Some(i) = self.leader_laws.iter().position(|l| l.alphabet_size() != m) {
            return Err(Error::validation(format!("leader_laws[{i}]: outcome count differs")));
        }
        if self.leader_payoff.len() != self.follower_payoff.len() {
            return Err(Error::validation("leader_payoff: one row per follower action required"));
        }
        for (name, t) in [("follower_payoff", &self.follower_payoff), ("leader_payoff", &self.leader_payoff)] {
            for (a, row) in t.iter().enumerate() {
                if row.len() != m {
                    return Err(Error::validation(format!("{name}[{a}]: {} entries, expected {m}", row.len())));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::validation(format!("{name}[{a}]: non-finite payoff")));
                }
            }
        }
        if let Some(d) = &self.drift {
            if d.len() != m || d.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("drift: need {m} finite entries")));
            }
        }
        Ok(())
    }

    fn law_at(&self, i: usize, stage: usize) -> Result<Pmf> {
        let l = &self.leader_laws[i];
        match &self.drift {
            Some(d) if stage > 0 => Pmf::normalized(
                l.probs()
                    .iter()
                    .zip(d)
                    .map(|(p, g)| p * (stage as f64 * g).exp())
                    .collect(),
            ),
            _ => Ok(l.clone()),
        }
    }
}

fn expect(row: &[f64], law: &Pmf) -> f64 {
    row.iter().zip(law.probs()).map(|(v, p)| v * p).sum()
}

/// Follower's best action under `law`, lowest index on ties.
fn follower_response(inst: &StackelbergInstance, law: &Pmf) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (a, row) in inst.follower_payoff.iter().enumerate() {
        let v = expect(row, law);
        if v > best.1 {
            best = (a, v);
        }
    }
    best
}

fn solve_stage(inst: &StackelbergInstance, stage: usize) -> Result<StackelbergSolution> {
    let mut best: Option<StackelbergSolution> = None;
    for i in 0..inst.leader_laws.len() {
        let law = inst.law_at(i, stage)?;
        let (a, fv) = follower_response(inst, &law);
        let v = expect(&inst.leader_payoff[a], &law);
        if best.as_ref().is_none_or(|b| v > b.value) {
            best = Some(StackelbergSolution {
                leader: i,
                follower: a,
                value: v,
                follower_value: fv,
                evaluations_to_optimum: i + 1,
            });
        }
    }
    Ok(best.expect("non-empty leader grid"))
}

/// Exhaustive leader enumeration with the follower's best response inside;
/// ties go to the lowest index at both levels.
pub fn stackelberg_solve(inst: &StackelbergInstance) -> Result<StackelbergSolution> {
    inst.validate()?;
    solve_stage(inst, 0)
}

/// One solution per stage `0..stages` under the leader drift.
pub fn stackelberg_schedule(inst: &StackelbergInstance, stages: usize) -> Result<Vec<StackelbergSolution>> {
    inst.validate()?;
    (0..stages).map(|t| solve_stage(inst, t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell() {
        let inst = StackelbergInstance {
            leader_laws: vec![Pmf::point(1, 0).unwrap()],
            follower_payoff: vec![vec![2.0]],
            leader_payoff: vec![vec![5.0]],
            drift: None,
        };
        let s = stackelberg_solve(&inst).unwrap();
        assert_eq!((s.leader, s.follower, s.value), (0, 0, 5.0));
    }

    #[test]
    fn indifferent_follower_takes_first_action() {
        let inst = StackelbergInstance {
            leader_laws: vec![Pmf::point(2, 0).unwrap(), Pmf::point(2, 1).unwrap()],
            follower_payoff: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            leader_payoff: vec![vec![0.0, 3.0], vec![9.0, 9.0]],
            drift: None,
        };
        let s = stackelberg_solve(&inst).unwrap();
        assert_eq!((s.leader, s.follower, s.value), (1, 0, 3.0));
    }

    #[test]
    fn drift_moves_the_leader() {
        let inst = StackelbergInstance {
            leader_laws: vec![Pmf::new(vec![0.5, 0.5]).unwrap()],
            follower_payoff: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            leader_payoff: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            drift: Some(vec![0.0, 1.0]),
        };
        let sched = stackelberg_schedule(&inst, 3).unwrap();
        assert_eq!(sched[0].follower, 0);
        assert_eq!(sched[1].follower, 1);
        assert!(sched[2].value > sched[1].value);
    }

    #[test]
    fn rejects_ragged_tables() {
        let inst = StackelbergInstance {
            leader_laws: vec![Pmf::uniform(2).unwrap()],
            follower_payoff: vec![vec![1.0]],
            leader_payoff: vec![vec![1.0, 2.0]],
            drift: None,
        };
        assert!(stackelberg_solve(&inst).is_err());
    }
}
