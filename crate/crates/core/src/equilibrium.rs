//! A K-color coalition game on a weighted directed graph.
//!
//! Player `i` picks a color; by default its payoff is the total weight
//! `w_{i→j}` towards players sharing its color. The classical max-K-cut
//! payoff (weight towards *other* colors) is available as
//! [`PayoffMode::AcrossCut`]. With symmetric weights both are potential
//! games, so sequential best responses terminate in a pure Nash equilibrium.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mirror_game::UncertaintyModel;

/// Payoff gains at or below this are not improvements.
pub const GAIN_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffMode {
    #[default]
    SameColor,
    AcrossCut,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct KCutGameSpec {
    weights: Vec<Vec<f64>>,
    k: usize,
    #[serde(default)]
    mode: PayoffMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KCutGameSpec", into = "KCutGameSpec")]
pub struct KCutGame {
    n: usize,
    k: usize,
    weights: Vec<f64>,
    mode: PayoffMode,
}

impl TryFrom<KCutGameSpec> for KCutGame {
    type Error = Error;

    fn try_from(s: KCutGameSpec) -> Result<Self> {
        KCutGame::new(s.weights, s.k).map(|g| g.with_mode(s.mode))
    }
}

impl From<KCutGame> for KCutGameSpec {
    fn from(g: KCutGame) -> Self {
        KCutGameSpec {
            weights: g.weights.chunks(g.n.max(1)).map(|r| r.to_vec()).collect(),
            k: g.k,
            mode: g.mode,
        }
    }
}

impl KCutGame {
    pub fn new(weights: Vec<Vec<f64>>, k: usize) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::validation("weights: need at least one player"));
        }
        if k < 2 {
            return Err(Error::validation(format!("k: need at least 2 colors, got {k}")));
        }
        let mut flat = Vec::with_capacity(n * n);
        for (i, row) in weights.iter().enumerate() {
            if row.len() != n {
                return Err(Error::validation(format!(
                    "weights[{i}]: row has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &w) in row.iter().enumerate() {
                if !w.is_finite() {
                    return Err(Error::validation(format!("weights[{i}][{j}]: not finite")));
                }
                if i == j && w != 0.0 {
                    return Err(Error::validation(format!("weights[{i}][{i}]: diagonal must be 0")));
                }
            }
            flat.extend_from_slice(row);
        }
        Ok(KCutGame {
            n,
            k,
            weights: flat,
            mode: PayoffMode::SameColor,
        })
    }

    pub fn with_mode(mut self, mode: PayoffMode) -> Self {
        self.mode = mode;
        self
    }

    /// Symmetric weights drawn uniformly from `{0, 1/levels, …, 1}`.
    pub fn random_symmetric<R: Rng>(n: usize, k: usize, levels: u32, rng: &mut R) -> Result<Self> {
        let mut w = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = rng.random_range(0..=levels) as f64 / levels.max(1) as f64;
                w[i][j] = v;
                w[j][i] = v;
            }
        }
        KCutGame::new(w, k)
    }

    pub fn players(&self) -> usize {
        self.n
    }

    pub fn colors(&self) -> usize {
        self.k
    }

    pub fn mode(&self) -> PayoffMode {
        self.mode
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.weight(i, j) == self.weight(j, i)))
    }

    fn check(&self, p: &StrategyProfile) -> Result<()> {
        if p.colors.len() != self.n {
            return Err(Error::validation(format!(
                "profile: {} colors for {} players",
                p.colors.len(),
                self.n
            )));
        }
        if let Some((i, c)) = p.colors.iter().enumerate().find(|(_, &c)| c >= self.k) {
            return Err(Error::validation(format!("profile[{i}]: color {c} >= k = {}", self.k)));
        }
        Ok(())
    }

    /// Payoff of player `i` if it played `color` against `p`.
    fn payoff_as(&self, p: &StrategyProfile, i: usize, color: usize) -> f64 {
        (0..self.n)
            .filter(|&j| j != i)
            .filter(|&j| match self.mode {
                PayoffMode::SameColor => p.colors[j] == color,
                PayoffMode::AcrossCut => p.colors[j] != color,
            })
            .map(|j| self.weight(i, j))
            .sum()
    }

    /// `Φ = Σ_{i<j counted} (w_{i→j} + w_{j→i}) / 2` over pairs the mode rewards.
    pub fn potential(&self, p: &StrategyProfile) -> f64 {
        let mut phi = 0.0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let same = p.colors[i] == p.colors[j];
                let counted = match self.mode {
                    PayoffMode::SameColor => same,
                    PayoffMode::AcrossCut => !same,
                };
                if counted {
                    phi += 0.5 * (self.weight(i, j) + self.weight(j, i));
                }
            }
        }
        phi
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StrategyProfile {
    pub colors: Vec<usize>,
}

impl StrategyProfile {
    pub fn new(colors: Vec<usize>) -> Self {
        StrategyProfile { colors }
    }

    pub fn random<R: Rng>(n: usize, k: usize, rng: &mut R) -> Self {
        StrategyProfile {
            colors: (0..n).map(|_| rng.random_range(0..k)).collect(),
        }
    }
}

pub fn payoff(g: &KCutGame, p: &StrategyProfile, i: usize) -> Result<f64> {
    g.check(p)?;
    if i >= g.n {
        return Err(Error::validation(format!("player {i} out of range (n = {})", g.n)));
    }
    Ok(g.payoff_as(p, i, p.colors[i]))
}

/// Lowest-index color strictly better than the current one, with its gain.
fn best_response(g: &KCutGame, p: &StrategyProfile, i: usize) -> Option<(usize, f64)> {
    let now = g.payoff_as(p, i, p.colors[i]);
    let mut best: Option<(usize, f64)> = None;
    for c in (0..g.k).filter(|&c| c != p.colors[i]) {
        let gain = g.payoff_as(p, i, c) - now;
        if gain > GAIN_TOL && best.is_none_or(|(_, b)| gain > b + GAIN_TOL) {
            best = Some((c, gain));
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Switch {
    pub round: usize,
    pub player: usize,
    pub from: usize,
    pub to: usize,
    pub gain: f64,
    pub potential_after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BestResponseOutcome {
    pub profile: StrategyProfile,
    /// Sweeps performed, including the final quiet one when converged.
    pub rounds: usize,
    pub converged: bool,
    pub switches: Vec<Switch>,
}

/// Sequential best-response sweeps in player order until a sweep changes
/// nothing or `max_rounds` sweeps have run.
pub fn best_response_dynamics(
    g: &KCutGame,
    init: &StrategyProfile,
    max_rounds: usize,
) -> Result<BestResponseOutcome> {
    g.check(init)?;
    let mut p = init.clone();
    let mut switches = Vec::new();
    for round in 1..=max_rounds {
        let mut changed = false;
        for i in 0..g.n {
            if let Some((c, gain)) = best_response(g, &p, i) {
                let from = p.colors[i];
                p.colors[i] = c;
                changed = true;
                switches.push(Switch {
                    round,
                    player: i,
                    from,
                    to: c,
                    gain,
                    potential_after: g.potential(&p),
                });
            }
        }
        if !changed {
            return Ok(BestResponseOutcome {
                profile: p,
                rounds: round,
                converged: true,
                switches,
            });
        }
    }
    Ok(BestResponseOutcome {
        profile: p,
        rounds: max_rounds,
        converged: false,
        switches,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Deviation {
    pub player: usize,
    pub from: usize,
    pub to: usize,
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NashReport {
    pub is_nash: bool,
    /// The largest strictly improving unilateral deviation, if any.
    pub worst: Option<Deviation>,
    pub deviations_checked: usize,
}

/// Tries all `n·(K−1)` unilateral deviations.
pub fn verify_nash(g: &KCutGame, p: &StrategyProfile) -> Result<NashReport> {
    g.check(p)?;
    let mut worst: Option<Deviation> = None;
    let mut checked = 0;
    for i in 0..g.n {
        let now = g.payoff_as(p, i, p.colors[i]);
        for c in (0..g.k).filter(|&c| c != p.colors[i]) {
            checked += 1;
            let gain = g.payoff_as(p, i, c) - now;
            if gain > GAIN_TOL && worst.is_none_or(|w| gain > w.gain) {
                worst = Some(Deviation {
                    player: i,
                    from: p.colors[i],
                    to: c,
                    gain,
                });
            }
        }
    }
    Ok(NashReport {
        is_nash: worst.is_none(),
        worst,
        deviations_checked: checked,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusBand {
    pub rho1: f64,
    pub rho2: f64,
    pub phi1: f64,
    pub phi2: f64,
}

impl TorusBand {
    pub fn new(rho1: f64, rho2: f64, phi1: f64, phi2: f64) -> Result<Self> {
        let b = TorusBand { rho1, rho2, phi1, phi2 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.rho1 && self.rho1 < self.rho2) {
            return Err(Error::validation("rho1/rho2: need 0 < rho1 < rho2"));
        }
        if self.phi1.is_nan() || self.phi2.is_nan() || self.phi1 > self.phi2 {
            return Err(Error::validation("phi1/phi2: need phi1 <= phi2"));
        }
        Ok(())
    }
}

/// Fraction of same-color weights `|w_{i→j}(1 + |B|u)|` inside `[φ1, φ2]`,
/// averaged over `n_samples` draws (one evaluation when `|B| = 0`). An empty
/// same-color set yields 0.
pub fn torus_band_check(
    g: &KCutGame,
    p: &StrategyProfile,
    band: &TorusBand,
    u: &UncertaintyModel,
    n_samples: usize,
) -> Result<f64> {
    g.check(p)?;
    band.validate()?;
    u.validate()?;
    if n_samples == 0 {
        return Err(Error::validation("n_samples: need at least one draw"));
    }
    let active: Vec<f64> = (0..g.n)
        .flat_map(|i| (0..g.n).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && p.colors[i] == p.colors[j])
        .map(|(i, j)| g.weight(i, j))
        .collect();
    if active.is_empty() {
        return Ok(0.0);
    }
    let inside = |w: f64| (band.phi1..=band.phi2).contains(&w.abs());
    if u.is_certain() {
        return Ok(active.iter().filter(|&&w| inside(w)).count() as f64 / active.len() as f64);
    }
    let mut rng = u.rng();
    let mut hits = 0usize;
    for _ in 0..n_samples {
        for &w in &active {
            let f = 1.0 + u.magnitude * rng.random_range(-1.0..1.0);
            if inside(w * f) {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / (n_samples * active.len()) as f64)
}

/// Per-player payoff with a flag for lying strictly inside `(ρ1, ρ2)`.
pub fn torus_payoff_report(g: &KCutGame, p: &StrategyProfile, band: &TorusBand) -> Result<Vec<(f64, bool)>> {
    band.validate()?;
    (0..g.n)
        .map(|i| payoff(g, p, i).map(|v| (v, band.rho1 < v.abs() && v.abs() < band.rho2)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_player_has_no_payoff() {
        let g = KCutGame::new(vec![vec![0.0]], 2).unwrap();
        assert_eq!(payoff(&g, &StrategyProfile::new(vec![1]), 0).unwrap(), 0.0);
    }

    #[test]
    fn two_players_same_color() {
        let g = KCutGame::new(vec![vec![0.0, 3.0], vec![1.0, 0.0]], 2).unwrap();
        let p = StrategyProfile::new(vec![0, 0]);
        assert_eq!(payoff(&g, &p, 0).unwrap(), 3.0);
        assert_eq!(payoff(&g, &p, 1).unwrap(), 1.0);
        assert!(payoff(&g, &p, 2).is_err());
        assert!(payoff(&g, &StrategyProfile::new(vec![0, 2]), 0).is_err());
    }

    #[test]
    fn rejects_bad_games() {
        assert!(KCutGame::new(vec![vec![1.0]], 2).is_err());
        assert!(KCutGame::new(vec![vec![0.0, 1.0]], 2).is_err());
        assert!(KCutGame::new(vec![vec![0.0]], 1).is_err());
    }

    #[test]
    fn zero_game_is_settled_after_one_sweep() {
        let g = KCutGame::new(vec![vec![0.0; 4]; 4], 3).unwrap();
        let init = StrategyProfile::new(vec![0, 2, 1, 2]);
        let out = best_response_dynamics(&g, &init, 10).unwrap();
        assert_eq!(out.profile, init);
        assert_eq!(out.rounds, 1);
        assert!(out.converged);
    }

    #[test]
    fn mutual_pair_coordinates() {
        let g = KCutGame::new(vec![vec![0.0, 2.0], vec![2.0, 0.0]], 2).unwrap();
        let p = StrategyProfile::new(vec![0, 1]);
        let rep = verify_nash(&g, &p).unwrap();
        assert!(!rep.is_nash);
        assert_eq!(rep.worst.unwrap().gain, 2.0);
        let out = best_response_dynamics(&g, &p, 10).unwrap();
        assert_eq!(out.profile.colors[0], out.profile.colors[1]);
        assert!(verify_nash(&g, &out.profile).unwrap().is_nash);
    }

    #[test]
    fn across_cut_mode_separates() {
        let g = KCutGame::new(vec![vec![0.0, 2.0], vec![2.0, 0.0]], 2)
            .unwrap()
            .with_mode(PayoffMode::AcrossCut);
        let out = best_response_dynamics(&g, &StrategyProfile::new(vec![0, 0]), 10).unwrap();
        assert_ne!(out.profile.colors[0], out.profile.colors[1]);
    }

    #[test]
    fn band_extremes() {
        let g = KCutGame::new(vec![vec![0.0, 5.0], vec![5.0, 0.0]], 2).unwrap();
        let p = StrategyProfile::new(vec![1, 1]);
        let u = UncertaintyModel::none();
        let open = TorusBand::new(1.0, 2.0, 0.0, f64::INFINITY).unwrap();
        assert_eq!(torus_band_check(&g, &p, &open, &u, 1).unwrap(), 1.0);
        let narrow = TorusBand::new(1.0, 2.0, 1.0, 2.0).unwrap();
        assert_eq!(torus_band_check(&g, &p, &narrow, &u, 1).unwrap(), 0.0);
        assert!(torus_band_check(&g, &p, &narrow, &u, 0).is_err());
        assert!(TorusBand::new(2.0, 1.0, 0.0, 1.0).is_err());
        assert!(TorusBand::new(1.0, 2.0, 3.0, 1.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let g = KCutGame::new(vec![vec![0.0, 1.5], vec![0.5, 0.0]], 3).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"weights":[[0.0,1.5],[0.5,0.0]],"k":3,"mode":"same_color"}"#);
        let back: KCutGame = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<KCutGame>(r#"{"weights":[[1.0]],"k":2}"#).is_err());
    }
}
