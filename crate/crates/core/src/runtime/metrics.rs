use serde::{Deserialize, Serialize};

use super::SlotRecord;

/// Per-slot averages across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub energy: Vec<f64>,
    pub reward: Vec<f64>,
    /// Mean multi-task loss over the runs that trained in that slot.
    pub loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub runs: usize,
    /// Mean over runs of each run's mean per-slot total energy.
    pub mean_energy: f64,
    /// Population standard deviation of the per-run means.
    pub std_energy: f64,
    pub mean_reward: f64,
    pub curves: Curves,
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Summarizes runs on matched seeds; the spread is across runs.
pub fn aggregate_metrics(runs: &[Vec<SlotRecord>]) -> MethodSummary {
    let run_means: Vec<f64> = runs
        .iter()
        .filter(|r| !r.is_empty())
        .map(|r| mean(&r.iter().map(|x| x.total_j).collect::<Vec<_>>()))
        .collect();
    let mean_energy = mean(&run_means);
    let std_energy = if run_means.is_empty() {
        f64::NAN
    } else {
        (run_means.iter().map(|e| (e - mean_energy).powi(2)).sum::<f64>() / run_means.len() as f64).sqrt()
    };
    let rewards: Vec<f64> = runs.iter().flatten().map(|r| r.reward).collect();

    let slots = runs.iter().map(Vec::len).max().unwrap_or(0);
    let column = |slot: usize, f: &dyn Fn(&SlotRecord) -> f64| {
        let v: Vec<f64> = runs.iter().filter_map(|r| r.get(slot)).map(f).filter(|x| !x.is_nan()).collect();
        mean(&v)
    };
    let curves = Curves {
        energy: (0..slots).map(|s| column(s, &|r| r.total_j)).collect(),
        reward: (0..slots).map(|s| column(s, &|r| r.reward)).collect(),
        loss: (0..slots).map(|s| column(s, &|r| r.l_mt)).collect(),
    };
    MethodSummary { runs: runs.len(), mean_energy, std_energy, mean_reward: mean(&rewards), curves }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(slot: usize, total: f64) -> SlotRecord {
        SlotRecord {
            slot,
            m: 1,
            local_j: total,
            transmit_j: 0.0,
            remote_j: 0.0,
            hover_j: 0.0,
            total_j: total,
            reward: 1.0 / total,
            agent_total_j: total,
            agent_reward: 1.0 / total,
            offloaded: 0,
            refined: false,
            trained: false,
            l_ce: f64::NAN,
            l_mse: f64::NAN,
            l_mt: f64::NAN,
            evaluations: 0,
            violations: 0,
            wall_time_s: 0.0,
        }
    }

    #[test]
    fn single_record_has_zero_spread() {
        let s = aggregate_metrics(&[vec![rec(0, 5.0)]]);
        assert_eq!(s.mean_energy, 5.0);
        assert_eq!(s.std_energy, 0.0);
    }

    #[test]
    fn single_run_has_zero_spread() {
        let s = aggregate_metrics(&[vec![rec(0, 5.0), rec(1, 9.0)]]);
        assert_eq!(s.mean_energy, 7.0);
        assert_eq!(s.std_energy, 0.0);
    }

    #[test]
    fn population_std() {
        let s = aggregate_metrics(&[vec![rec(0, 10.0)], vec![rec(0, 14.0)]]);
        assert_eq!(s.mean_energy, 12.0);
        assert_eq!(s.std_energy, 2.0);
        assert_eq!(s.curves.energy, vec![12.0]);
    }

    #[test]
    fn curves_have_one_point_per_slot() {
        let run: Vec<SlotRecord> = (0..7).map(|t| rec(t, 1.0 + t as f64)).collect();
        let s = aggregate_metrics(&[run.clone(), run]);
        assert_eq!(s.curves.energy.len(), 7);
        assert_eq!(s.curves.reward.len(), 7);
        assert!(s.curves.loss.iter().all(|l| l.is_nan()));
    }
}
