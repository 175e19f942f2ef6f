use serde::{Deserialize, Serialize};

use super::{PhysicalConstants, Scenario, Schedule, Task};
use crate::channel::ChannelSet;
use crate::{Error, Result};

/// Energy of every component of the objective for one schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub local_j: Vec<f64>,
    pub transmit_j: Vec<f64>,
    pub remote_j: Vec<f64>,
    /// Per active UAV, unweighted.
    pub hover_j: Vec<f64>,
    pub total_j: f64,
}

impl EnergyBreakdown {
    pub fn local_sum(&self) -> f64 {
        self.local_j.iter().sum()
    }

    pub fn transmit_sum(&self) -> f64 {
        self.transmit_j.iter().sum()
    }

    pub fn remote_sum(&self) -> f64 {
        self.remote_j.iter().sum()
    }

    pub fn hover_sum(&self) -> f64 {
        self.hover_j.iter().sum()
    }
}

/// `nu1 * alloc^(tau1 - 1) * cycles`.
pub fn local_energy(alloc: f64, task: &Task, c: &PhysicalConstants) -> f64 {
    if alloc <= 0.0 {
        return 0.0;
    }
    c.nu1 * alloc.powf(c.tau1 - 1.0) * task.cycles
}

/// `tx_power * data_bits / rate`.
pub fn transmit_energy(tx_power: f64, data_bits: f64, rate: f64) -> Result<f64> {
    if data_bits <= 0.0 {
        return Ok(0.0);
    }
    if !(rate > 0.0) {
        return Err(Error::InfeasibleLink { ue: usize::MAX, uav: usize::MAX });
    }
    Ok(tx_power * data_bits / rate)
}

/// `nu2 * alloc^(tau2 - 1) * cycles`; a zero allocation never completes.
pub fn remote_energy(alloc: f64, task: &Task, c: &PhysicalConstants) -> Result<f64> {
    if !(alloc > 0.0) {
        return Err(Error::InvalidAllocation {
            ue: usize::MAX,
            reason: format!("remote allocation {alloc} never completes"),
        });
    }
    Ok(c.nu2 * alloc.powf(c.tau2 - 1.0) * task.cycles)
}

/// Hover power times the longest transmit+execute time among the UEs
/// assigned to `uav` (1-based). `times[i]` is `(T^t, T^e)` for UE `i`.
pub fn hover_energy(
    uav: usize,
    schedule: &Schedule,
    times: &[Option<(f64, f64)>],
    c: &PhysicalConstants,
) -> f64 {
    let longest = schedule
        .assigned_to(uav)
        .filter_map(|i| times.get(i).copied().flatten())
        .map(|(t_tx, t_exec)| t_tx + t_exec)
        .fold(0.0_f64, f64::max);
    c.hover_power_w * longest
}

/// Evaluates the objective for `schedule` as given (no repair).
pub fn total_energy(
    scenario: &Scenario,
    schedule: &Schedule,
    channels: &ChannelSet,
) -> Result<EnergyBreakdown> {
    let n = scenario.n_ues();
    let m = scenario.active_uav_count;
    if schedule.len() != n {
        return Err(Error::Shape(format!("schedule for {} UEs, scenario has {n}", schedule.len())));
    }
    if channels.n_ues() != n || channels.n_uavs() < m {
        return Err(Error::Shape("channel set does not cover the active UAVs".into()));
    }
    let c = &scenario.constants;
    let mut local_j = vec![0.0; n];
    let mut transmit_j = vec![0.0; n];
    let mut remote_j = vec![0.0; n];
    let mut times = vec![None; n];

    for (i, ue) in scenario.ues.iter().enumerate() {
        let assoc = schedule.association[i];
        let freq = schedule.allocation[i]
            * if assoc == 0 { c.local_cap_cycles_per_s } else { c.uav_cap_cycles_per_s };
        if assoc == 0 {
            local_j[i] = local_energy(freq, &ue.task, c);
            continue;
        }
        if assoc > m {
            return Err(Error::Shape(format!("UE {i} associated with inactive UAV {assoc}")));
        }
        let rate = channels.rate(i, assoc - 1);
        transmit_j[i] = transmit_energy(c.tx_power_w, ue.task.data_bits, rate)
            .map_err(|_| Error::InfeasibleLink { ue: i, uav: assoc })?;
        remote_j[i] = remote_energy(freq, &ue.task, c).map_err(|e| match e {
            Error::InvalidAllocation { reason, .. } => Error::InvalidAllocation { ue: i, reason },
            other => other,
        })?;
        times[i] = Some((ue.task.data_bits / rate, ue.task.cycles / freq));
    }

    let hover_j: Vec<f64> = (1..=m).map(|j| hover_energy(j, schedule, &times, c)).collect();
    let total_j = local_j.iter().sum::<f64>()
        + transmit_j.iter().sum::<f64>()
        + remote_j.iter().sum::<f64>()
        + c.hover_weight * hover_j.iter().sum::<f64>();
    Ok(EnergyBreakdown { local_j, transmit_j, remote_j, hover_j, total_j })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{LatencyModel, Position3D, TaskRanges, UserEquipment};

    fn task(cycles: f64) -> Task {
        Task { data_bits: 8e6, cycles }
    }

    #[test]
    fn local_energy_examples() {
        let c = PhysicalConstants::default();
        assert_eq!(local_energy(0.0, &task(1e9), &c), 0.0);
        assert!((local_energy(1e9, &task(1e9), &c) - 1.0).abs() < 1e-12);
        assert!((local_energy(1e9, &task(2e9), &c) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn transmit_energy_examples() {
        assert_eq!(transmit_energy(1.0, 0.0, 0.0).unwrap(), 0.0);
        assert!((transmit_energy(1.0, 8e6, 1e6).unwrap() - 8.0).abs() < 1e-12);
        assert!(matches!(transmit_energy(1.0, 8e6, 0.0), Err(Error::InfeasibleLink { .. })));
    }

    #[test]
    fn remote_energy_examples() {
        let c = PhysicalConstants::default();
        assert!((remote_energy(1e9, &task(1e9), &c).unwrap() - 1.0).abs() < 1e-12);
        let linear = PhysicalConstants { tau2: 1.0, ..c };
        let a = remote_energy(1e9, &task(1e9), &linear).unwrap();
        let b = remote_energy(5e9, &task(1e9), &linear).unwrap();
        assert_eq!(a, b);
        assert!((a - linear.nu2 * 1e9).abs() < 1e-30);
        assert!(remote_energy(0.0, &task(1e9), &c).is_err());
    }

    #[test]
    fn hover_energy_examples() {
        let c = PhysicalConstants::default();
        let s = Schedule::new(vec![0, 0], vec![0.5, 0.5]).unwrap();
        assert_eq!(hover_energy(1, &s, &[None, None], &c), 0.0);

        let s = Schedule::new(vec![1], vec![0.1]).unwrap();
        assert_eq!(hover_energy(1, &s, &[Some((2.0, 3.0))], &c), 5.0);

        let s = Schedule::new(vec![1, 1], vec![0.1, 0.1]).unwrap();
        assert_eq!(hover_energy(1, &s, &[Some((1.0, 3.0)), Some((4.0, 1.0))], &c), 5.0);
    }

    fn one_pair() -> (Scenario, ChannelSet) {
        let scenario = Scenario {
            ues: vec![UserEquipment {
                position: Position3D::new(10.0, 10.0, 0.0),
                task: Task { data_bits: 20.0 * 8e6, cycles: 1e9 },
            }],
            uavs: vec![Position3D::new(12.0, 15.0, 30.0)],
            irss: vec![Position3D::new(11.0, 12.0, 15.0)],
            constants: PhysicalConstants::default(),
            active_uav_count: 1,
            max_uavs: 5,
            latency: LatencyModel::default(),
            task_ranges: TaskRanges::default(),
            rng_seed: 0,
        };
        let channels = ChannelSet::build(&scenario).unwrap();
        (scenario, channels)
    }

    #[test]
    fn all_local_has_no_offload_terms() {
        let (scenario, channels) = one_pair();
        let s = Schedule::all_local(1, 0.5);
        let e = total_energy(&scenario, &s, &channels).unwrap();
        assert_eq!(e.transmit_sum(), 0.0);
        assert_eq!(e.remote_sum(), 0.0);
        assert_eq!(e.hover_sum(), 0.0);
        assert!((e.total_j - 0.25).abs() < 1e-12);
    }

    #[test]
    fn single_offload_matches_hand_sum() {
        let (scenario, channels) = one_pair();
        let c = scenario.constants;
        let s = Schedule::new(vec![1], vec![0.05]).unwrap();
        let e = total_energy(&scenario, &s, &channels).unwrap();

        let rate = channels.rate(0, 0);
        let t = scenario.ues[0].task;
        let f = 0.05 * c.uav_cap_cycles_per_s;
        let tx = t.data_bits / rate;
        let rem = 1e-27 * f * f * t.cycles;
        let hover = tx + t.cycles / f;
        let hand = tx + rem + hover;
        assert!((e.total_j - hand).abs() <= 1e-12 * hand);

        let mut no_hover = scenario.clone();
        no_hover.constants.hover_weight = 0.0;
        let e0 = total_energy(&no_hover, &s, &channels).unwrap();
        assert!((e0.total_j - (tx + rem)).abs() <= 1e-12 * hand);
        assert!(e0.hover_sum() > 0.0);
    }
}
