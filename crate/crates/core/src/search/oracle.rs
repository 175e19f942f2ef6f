use serde::{Deserialize, Serialize};

use super::{evaluate, SearchProblem};
use crate::env::Schedule;
use crate::{Error, Result};

/// Largest number of schedules the oracle will enumerate.
pub const ORACLE_BUDGET: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Finalized optimum.
    pub best: Schedule,
    /// The grid point that produced it, before finalization.
    pub raw: Schedule,
    pub energy: f64,
    pub evaluations: usize,
}

/// Exhaustive minimum of [`evaluate`] over every association and every
/// allocation `k / levels`, `k = 1..=levels`. The first optimum in
/// lexicographic order wins ties.
pub fn exhaustive_oracle(problem: &SearchProblem, levels: usize) -> Result<OracleResult> {
    let n = problem.scenario.n_ues();
    let m = problem.scenario.active_uav_count;
    if levels == 0 || n == 0 {
        return Err(Error::Config("oracle needs at least one UE and one grid level".into()));
    }
    let per_ue = ((m + 1) * levels) as u128;
    let total = (0..n).try_fold(1u128, |acc, _| acc.checked_mul(per_ue)).unwrap_or(u128::MAX);
    if total > ORACLE_BUDGET {
        return Err(Error::Budget(format!(
            "{total} schedules exceed the oracle budget of {ORACLE_BUDGET}"
        )));
    }

    let choice = |code: usize| -> (usize, f64) {
        let assoc = code / levels;
        let k = code % levels + 1;
        (assoc, k as f64 / levels as f64)
    };
    let mut digits = vec![0usize; n];
    let mut x = Schedule { association: vec![0; n], allocation: vec![0.0; n] };
    let mut best: Option<(f64, Schedule)> = None;
    let mut evaluations = 0;
    loop {
        for (i, &d) in digits.iter().enumerate() {
            let (a, f) = choice(d);
            x.association[i] = a;
            x.allocation[i] = f;
        }
        let e = evaluate(&x, problem.scenario, problem.channels);
        evaluations += 1;
        if best.as_ref().is_none_or(|(fb, _)| e < *fb) {
            best = Some((e, x.clone()));
        }
        // odometer increment, last UE fastest
        let mut pos = n;
        loop {
            if pos == 0 {
                let (energy, raw) = best.unwrap();
                return Ok(OracleResult { best: problem.finalize(&raw), raw, energy, evaluations });
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < per_ue as usize {
                break;
            }
            digits[pos] = 0;
        }
    }
}
