use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{generate_neighborhood, light_move, Move, SearchProblem, SearchResult, TracePoint};
use crate::env::Schedule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TabooConfig {
    pub max_iter: usize,
    pub taboo_len: usize,
    pub neighborhood: usize,
    pub seed: u64,
}

impl Default for TabooConfig {
    fn default() -> Self {
        Self { max_iter: 10, taboo_len: 5, neighborhood: 20, seed: 0 }
    }
}

struct TabooList {
    cap: usize,
    items: VecDeque<(usize, usize)>,
    longest: usize,
}

impl TabooList {
    fn contains(&self, mv: &Move) -> bool {
        self.items.contains(&mv.signature())
    }

    fn push(&mut self, mv: &Move) {
        if self.cap == 0 {
            return;
        }
        if self.items.len() == self.cap {
            self.items.pop_front();
        }
        self.items.push_back(mv.signature());
        self.longest = self.longest.max(self.items.len());
    }
}

/// Light taboo search: the random neighbourhood is augmented with the
/// light move (best-gain UAV) of every UE it touches.
pub fn lts(problem: &SearchProblem, x0: &Schedule, cfg: &TabooConfig) -> SearchResult {
    taboo_search(problem, x0, cfg, true)
}

/// Taboo search over the random neighbourhood only.
pub fn ts(problem: &SearchProblem, x0: &Schedule, cfg: &TabooConfig) -> SearchResult {
    taboo_search(problem, x0, cfg, false)
}

fn taboo_search(problem: &SearchProblem, x0: &Schedule, cfg: &TabooConfig, light: bool) -> SearchResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m = problem.scenario.active_uav_count;
    let mut evaluations = 1;
    let mut x_c = x0.clone();
    let mut f_c = problem.evaluate(&x_c);
    let (mut x_b, mut f_b) = (x_c.clone(), f_c);
    let mut taboo = TabooList { cap: cfg.taboo_len, items: VecDeque::new(), longest: 0 };
    let mut trace = vec![TracePoint { iteration: 0, current: f_c, best: f_b }];

    for iter in 1..=cfg.max_iter {
        let mut candidates = generate_neighborhood(problem, &x_c, cfg.neighborhood, &mut rng);
        if light {
            let mut seen = Vec::new();
            let touched: Vec<usize> = candidates.iter().map(|(_, mv)| mv.ue).collect();
            for ue in touched {
                if seen.contains(&ue) {
                    continue;
                }
                seen.push(ue);
                let mut y = light_move(&x_c, ue, problem.channels, m);
                let to = y.association[ue];
                if to == x_c.association[ue] {
                    continue;
                }
                y.allocation[ue] = problem.default_fraction(ue, to);
                candidates.push((y, Move { ue, from: x_c.association[ue], to }));
            }
        }
        if candidates.is_empty() {
            break;
        }
        let mut scored: Vec<(f64, usize)> =
            candidates.iter().enumerate().map(|(k, (y, _))| (problem.evaluate(y), k)).collect();
        evaluations += scored.len();
        // stable: equal energies keep generation order
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (f1, k1) = scored[0];
        let (f2, k2) = *scored.get(1).unwrap_or(&scored[0]);
        let p1 = candidates[k1].1;

        if taboo.contains(&p1) {
            if f1 < f_b {
                x_c = candidates[k1].0.clone();
                f_c = f1;
            } else {
                x_c = candidates[k2].0.clone();
                f_c = f2;
                taboo.push(&candidates[k2].1);
            }
        } else {
            taboo.push(&p1);
            x_c = candidates[k1].0.clone();
            f_c = f1;
        }
        if f_c < f_b {
            x_b = x_c.clone();
            f_b = f_c;
        }
        trace.push(TracePoint { iteration: iter, current: f_c, best: f_b });
    }

    let best = problem.finalize(&x_b);
    SearchResult { best, energy: f_b, trace, evaluations, max_taboo_len: taboo.longest }
}
