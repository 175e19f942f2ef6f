//! Schedule search: light taboo search (LTS), plain taboo search (TS),
//! simulated annealing (SA), adaptive SA (ASA) and an exhaustive oracle.
//!
//! A solution is a [`Schedule`]. Every candidate is scored by [`evaluate`]:
//! the allocation is finalized (latency floor, then capacity repair) and the
//! total energy returned, with `+∞` for anything that cannot be evaluated.
//! Moves change one UE's association; the moved UE's allocation is reset to
//! the default for its new location and then perturbed.

mod anneal;
mod oracle;
mod taboo;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use anneal::{asa, sa, temperature_steps, AnnealConfig};
pub use oracle::{exhaustive_oracle, OracleResult, ORACLE_BUDGET};
pub use taboo::{lts, ts, TabooConfig};

use crate::channel::ChannelSet;
use crate::env::{default_fraction, finalize_allocation, total_energy, Scenario, Schedule, MIN_FRACTION};

/// How allocation fractions are explored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AllocationDomain {
    /// Multiplicative perturbation by a factor in `[1 - step, 1 + step]`.
    Continuous { relative_step: f64 },
    /// Fractions `k / levels`, `k = 1..=levels`; perturbation moves one level.
    Grid { levels: usize },
}

impl Default for AllocationDomain {
    fn default() -> Self {
        AllocationDomain::Continuous { relative_step: 0.1 }
    }
}

impl AllocationDomain {
    /// Largest grid point not above `f` (at least the first level).
    fn snap(&self, f: f64) -> f64 {
        match *self {
            AllocationDomain::Continuous { .. } => f.clamp(MIN_FRACTION, 1.0),
            AllocationDomain::Grid { levels } => {
                let g = levels.max(1) as f64;
                ((f * g + 1e-9).floor().clamp(1.0, g)) / g
            }
        }
    }

    fn perturb<R: Rng + ?Sized>(&self, f: f64, rng: &mut R) -> f64 {
        match *self {
            AllocationDomain::Continuous { relative_step } => {
                let factor = 1.0 + rng.gen_range(-relative_step..=relative_step);
                (f * factor).clamp(MIN_FRACTION, 1.0)
            }
            AllocationDomain::Grid { levels } => {
                let g = levels.max(1) as i64;
                let k = (f * g as f64).round() as i64 + rng.gen_range(-1..=1);
                k.clamp(1, g) as f64 / g as f64
            }
        }
    }
}

/// One association change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Move {
    pub ue: usize,
    pub from: usize,
    pub to: usize,
}

impl Move {
    /// Taboo signature: the UE and its target.
    pub fn signature(&self) -> (usize, usize) {
        (self.ue, self.to)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub current: f64,
    pub best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// Finalized best schedule.
    pub best: Schedule,
    pub energy: f64,
    /// Entry 0 is the start point.
    pub trace: Vec<TracePoint>,
    pub evaluations: usize,
    /// Longest taboo list observed (0 for annealing).
    pub max_taboo_len: usize,
}

impl SearchResult {
    /// First iteration whose best-so-far is within `rel` of the final value.
    pub fn iterations_to_within(&self, rel: f64) -> usize {
        let target = self.energy * (1.0 + rel);
        self.trace
            .iter()
            .find(|p| p.best <= target)
            .map_or(0, |p| p.iteration)
    }
}

/// Scenario, channels and allocation domain shared by every search.
#[derive(Debug, Clone, Copy)]
pub struct SearchProblem<'a> {
    pub scenario: &'a Scenario,
    pub channels: &'a ChannelSet,
    pub domain: AllocationDomain,
}

impl<'a> SearchProblem<'a> {
    pub fn new(scenario: &'a Scenario, channels: &'a ChannelSet, domain: AllocationDomain) -> Self {
        Self { scenario, channels, domain }
    }

    pub fn evaluate(&self, x: &Schedule) -> f64 {
        evaluate(x, self.scenario, self.channels)
    }

    pub fn finalize(&self, x: &Schedule) -> Schedule {
        finalize_allocation(self.scenario, self.channels, x)
    }

    /// Default allocation for UE `i` at `assoc`, mapped into the domain.
    pub fn default_fraction(&self, i: usize, assoc: usize) -> f64 {
        self.domain.snap(default_fraction(self.scenario, self.channels, i, assoc))
    }

    /// Every UE at its default allocation for the given associations.
    pub fn with_default_allocation(&self, association: Vec<usize>) -> Schedule {
        let allocation = association.iter().enumerate().map(|(i, &a)| self.default_fraction(i, a)).collect();
        Schedule { association, allocation }
    }

    fn apply_move<R: Rng + ?Sized>(&self, x: &Schedule, ue: usize, to: usize, rng: &mut R) -> (Schedule, Move) {
        let mut y = x.clone();
        let from = y.association[ue];
        y.association[ue] = to;
        y.allocation[ue] = self.domain.perturb(self.default_fraction(ue, to), rng);
        (y, Move { ue, from, to })
    }
}

/// Energy of the finalized schedule; `+∞` if it cannot be evaluated.
pub fn evaluate(x: &Schedule, scenario: &Scenario, channels: &ChannelSet) -> f64 {
    if x.len() != scenario.n_ues() {
        return f64::INFINITY;
    }
    let fin = finalize_allocation(scenario, channels, x);
    match total_energy(scenario, &fin, channels) {
        Ok(e) if e.total_j.is_finite() => e.total_j,
        _ => f64::INFINITY,
    }
}

/// `size` neighbours of `x_c`, each moving one random UE to a uniformly
/// chosen different location.
pub fn generate_neighborhood<R: Rng + ?Sized>(
    problem: &SearchProblem,
    x_c: &Schedule,
    size: usize,
    rng: &mut R,
) -> Vec<(Schedule, Move)> {
    let n = x_c.len();
    let m = problem.scenario.active_uav_count;
    if n == 0 || m == 0 {
        return Vec::new();
    }
    (0..size)
        .map(|_| {
            let ue = rng.gen_range(0..n);
            let current = x_c.association[ue].min(m);
            // uniform over {0..=m} \ {current}
            let mut to = rng.gen_range(0..m);
            if to >= current {
                to += 1;
            }
            problem.apply_move(x_c, ue, to, rng)
        })
        .collect()
}

/// Moves UE `ue` to the active UAV with the highest gain (lowest index on
/// ties). Only the association changes.
pub fn light_move(x: &Schedule, ue: usize, channels: &ChannelSet, m: usize) -> Schedule {
    let mut y = x.clone();
    y.association[ue] = channels.best_uav(ue, m);
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_scenario, local_energy, ScenarioConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize, m: usize) -> (Scenario, ChannelSet) {
        let s = generate_scenario(4, n, m, &ScenarioConfig::default()).unwrap();
        let c = ChannelSet::build(&s).unwrap();
        (s, c)
    }

    #[test]
    fn all_local_matches_hand_sum() {
        let (s, c) = setup(3, 1);
        let x = Schedule::all_local(3, 0.9);
        // local UEs run exactly at the deadline: f = cycles / 2 s
        let hand: f64 = s.ues.iter().map(|u| local_energy(u.task.cycles / 2.0, &u.task, &s.constants)).sum();
        assert!((evaluate(&x, &s, &c) - hand).abs() <= 1e-12 * hand);
    }

    #[test]
    fn zero_rate_is_infinite() {
        let (s, _) = setup(2, 1);
        let x = Schedule::new(vec![1, 0], vec![0.5, 0.5]).unwrap();
        let mut dead = s.clone();
        dead.constants.tx_power_w = 1e-300;
        dead.constants.noise_power_w = 1.0;
        let dc = ChannelSet::build(&dead).unwrap();
        assert_eq!(dc.rate(0, 0), 0.0);
        assert_eq!(evaluate(&x, &dead, &dc), f64::INFINITY);
    }

    #[test]
    fn over_capacity_is_evaluated_repaired() {
        let (s, c) = setup(2, 1);
        let x = Schedule::new(vec![1, 1], vec![1.0, 1.0]).unwrap();
        let repaired = finalize_allocation(&s, &c, &x);
        assert_eq!(evaluate(&x, &s, &c), total_energy(&s, &repaired, &c).unwrap().total_j);
    }

    #[test]
    fn neighborhood_rules() {
        let (s, c) = setup(5, 1);
        let p = SearchProblem::new(&s, &c, AllocationDomain::default());
        let x = p.with_default_allocation(vec![0; 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let one = generate_neighborhood(&p, &x, 1, &mut rng);
        assert_eq!(one.len(), 1);
        let diff = one[0].0.association.iter().zip(&x.association).filter(|(a, b)| a != b).count();
        assert_eq!(diff, 1);
        for (y, mv) in generate_neighborhood(&p, &x, 50, &mut rng) {
            assert!(y.association.iter().all(|&a| a <= 1));
            assert_ne!(mv.from, mv.to);
        }
        let a = generate_neighborhood(&p, &x, 20, &mut ChaCha8Rng::seed_from_u64(9));
        let b = generate_neighborhood(&p, &x, 20, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn light_move_goes_to_best_gain() {
        let (_, c) = setup(6, 2);
        let x = Schedule::all_local(6, 0.5);
        for ue in 0..6 {
            let y = light_move(&x, ue, &c, 2);
            let j = y.association[ue];
            assert!(c.gain(ue, j - 1) >= c.gain(ue, 2 - j));
            assert_eq!(light_move(&y, ue, &c, 2), y);
        }
    }

    #[test]
    fn grid_snapping() {
        let d = AllocationDomain::Grid { levels: 8 };
        assert_eq!(d.snap(0.02), 0.125);
        assert_eq!(d.snap(0.56), 0.5);
        assert_eq!(d.snap(0.5), 0.5);
        assert_eq!(d.snap(1.7), 1.0);
    }
}
