use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{generate_neighborhood, SearchProblem, SearchResult, TracePoint};
use crate::env::Schedule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealConfig {
    pub t_max: f64,
    pub t_min: f64,
    pub cooling: f64,
    /// Window of recent proposals used by the adaptive variant.
    pub window: usize,
    /// Acceptance ratio below which the adaptive variant reheats.
    pub min_acceptance: f64,
    pub reheat: f64,
    pub seed: u64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self { t_max: 100.0, t_min: 1.0, cooling: 0.95, window: 10, min_acceptance: 0.05, reheat: 1.05, seed: 0 }
    }
}

/// Number of temperatures `t_max·cooling^k` strictly above `t_min`.
pub fn temperature_steps(cfg: &AnnealConfig) -> usize {
    if !(cfg.t_max > cfg.t_min && cfg.cooling > 0.0 && cfg.cooling < 1.0) {
        return 0;
    }
    let mut t = cfg.t_max;
    let mut k = 0;
    while t > cfg.t_min {
        k += 1;
        t *= cfg.cooling;
    }
    k
}

/// Simulated annealing with one proposal per temperature.
pub fn sa(problem: &SearchProblem, x0: &Schedule, cfg: &AnnealConfig) -> SearchResult {
    anneal(problem, x0, cfg, false)
}

/// Simulated annealing whose acceptance temperature is multiplied by
/// `reheat` whenever the acceptance ratio over the last `window` proposals
/// drops below `min_acceptance`.
pub fn asa(problem: &SearchProblem, x0: &Schedule, cfg: &AnnealConfig) -> SearchResult {
    anneal(problem, x0, cfg, true)
}

fn anneal(problem: &SearchProblem, x0: &Schedule, cfg: &AnnealConfig, adaptive: bool) -> SearchResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = x0.clone();
    let mut fx = problem.evaluate(&x);
    let (mut x_b, mut f_b) = (x.clone(), fx);
    let mut trace = vec![TracePoint { iteration: 0, current: fx, best: f_b }];
    let mut evaluations = 1;
    let mut recent: VecDeque<bool> = VecDeque::new();
    let mut boost = 1.0;
    let mut t = cfg.t_max;

    for step in 1..=temperature_steps(cfg) {
        let Some((y, _)) = generate_neighborhood(problem, &x, 1, &mut rng).pop() else {
            break;
        };
        let fy = problem.evaluate(&y);
        evaluations += 1;
        let delta = fy - fx;
        let accept = if delta <= 0.0 {
            true
        } else if fy.is_finite() {
            rng.gen::<f64>() < (-delta / (t * boost)).exp()
        } else {
            false
        };
        if accept {
            x = y;
            fx = fy;
        }
        if fx < f_b {
            x_b = x.clone();
            f_b = fx;
        }
        if adaptive {
            recent.push_back(accept);
            if recent.len() > cfg.window {
                recent.pop_front();
            }
            if recent.len() == cfg.window {
                let ratio = recent.iter().filter(|&&a| a).count() as f64 / cfg.window as f64;
                if ratio < cfg.min_acceptance {
                    boost *= cfg.reheat;
                }
            }
        }
        trace.push(TracePoint { iteration: step, current: fx, best: f_b });
        t *= cfg.cooling;
    }

    let best = problem.finalize(&x_b);
    SearchResult { best, energy: f_b, trace, evaluations, max_taboo_len: 0 }
}
