use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::env::{Scenario, TaskRanges};

/// Affine map from gain in dB to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainRange {
    pub min_db: f64,
    pub max_db: f64,
}

impl Default for GainRange {
    fn default() -> Self {
        Self { min_db: -140.0, max_db: -40.0 }
    }
}

impl GainRange {
    pub fn normalise(&self, gain: f64) -> f64 {
        if !(gain > 0.0) {
            return 0.0;
        }
        let db = 10.0 * gain.log10();
        ((db - self.min_db) / (self.max_db - self.min_db)).clamp(0.0, 1.0)
    }
}

/// Per-UE agent input: normalised task size and channel gains towards every
/// UAV slot, zero for inactive UAVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedState {
    pub data_norm: f64,
    pub cycles_norm: f64,
    /// Length `max_uavs`.
    pub gains: Vec<f64>,
}

impl EncodedState {
    /// `[data_norm, cycles_norm, g_1, …, g_Mmax]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.gains.len() + 2);
        v.push(self.data_norm);
        v.push(self.cycles_norm);
        v.extend_from_slice(&self.gains);
        v
    }

    pub fn dim(&self) -> usize {
        self.gains.len() + 2
    }
}

fn min_max(x: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.5
    }
}

pub fn encode_state(
    scenario: &Scenario,
    channels: &ChannelSet,
    ue: usize,
    range: &GainRange,
) -> EncodedState {
    let task = scenario.ues[ue].task;
    let r: &TaskRanges = &scenario.task_ranges;
    let m = scenario.active_uav_count.min(channels.n_uavs());
    let gains = (0..scenario.max_uavs)
        .map(|j| if j < m { range.normalise(channels.gain(ue, j)) } else { 0.0 })
        .collect();
    EncodedState {
        data_norm: min_max(task.data_bits, r.data_bits_min(), r.data_bits_max()),
        cycles_norm: min_max(task.cycles, r.cycles_min, r.cycles_max),
        gains,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_scenario, ScenarioConfig, Task};

    #[test]
    fn gain_endpoints() {
        let r = GainRange::default();
        assert_eq!(r.normalise(1e-4), 1.0);
        assert_eq!(r.normalise(1e-14), 0.0);
        assert_eq!(r.normalise(1e-16), 0.0);
        assert!((r.normalise(1e-9) - 0.5).abs() < 1e-12);
        assert_eq!(r.normalise(0.0), 0.0);
    }

    #[test]
    fn midpoint_task_and_padding() {
        let mut s = generate_scenario(2, 6, 2, &ScenarioConfig::default()).unwrap();
        s.ues[0].task = Task { data_bits: 20.0 * 8e6, cycles: 1e9 };
        let ch = ChannelSet::build(&s).unwrap();
        let e = encode_state(&s, &ch, 0, &GainRange::default());
        assert!((e.data_norm - 0.5).abs() < 1e-12);
        assert!((e.cycles_norm - 0.5).abs() < 1e-12);
        assert_eq!(e.gains.len(), 5);
        assert_eq!(&e.gains[2..], &[0.0, 0.0, 0.0]);
        assert_eq!(e.to_vec().len(), 7);
    }
}
