use serde::{Deserialize, Serialize};

use super::{LatencyModel, PhysicalConstants, Scenario, Schedule, MIN_FRACTION};
use crate::channel::ChannelSet;

/// Relative slack on deadline checks; capacity checks are exact.
const DEADLINE_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalCapViolation {
    pub ue: usize,
    pub excess_cycles_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityViolation {
    /// 1-based UAV index.
    pub uav: usize,
    pub load_cycles_per_s: f64,
    pub excess_cycles_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadlineViolation {
    pub ue: usize,
    pub completion_s: f64,
    pub deadline_s: f64,
}

/// Per-constraint findings for one schedule. Empty lists mean satisfied.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    /// UEs whose association points at an inactive UAV.
    pub invalid_association: Vec<usize>,
    /// UEs with a non-positive or non-finite allocation.
    pub invalid_allocation: Vec<usize>,
    pub local_cap: Vec<LocalCapViolation>,
    pub uav_cap: Vec<CapacityViolation>,
    pub deadline: Vec<DeadlineViolation>,
}

impl ViolationReport {
    /// Association, allocation sign and both capacity constraints hold.
    pub fn capacity_ok(&self) -> bool {
        self.invalid_association.is_empty()
            && self.invalid_allocation.is_empty()
            && self.local_cap.is_empty()
            && self.uav_cap.is_empty()
    }

    pub fn is_feasible(&self) -> bool {
        self.capacity_ok() && self.deadline.is_empty()
    }
}

/// Summed cycles/s requested from UAV `uav` (1-based), in UE order.
pub fn uav_load(scenario: &Scenario, schedule: &Schedule, uav: usize) -> f64 {
    let cap = scenario.constants.uav_cap_cycles_per_s;
    schedule.assigned_to(uav).map(|i| schedule.allocation[i] * cap).sum()
}

/// Checks one-hot validity, local and UAV capacity, and (when `channels` is
/// supplied for offloaded UEs) the completion deadline.
pub fn check_constraints(
    scenario: &Scenario,
    channels: Option<&ChannelSet>,
    schedule: &Schedule,
) -> ViolationReport {
    let c = &scenario.constants;
    let m = scenario.active_uav_count;
    let mut report = ViolationReport::default();

    for (i, (&assoc, &frac)) in schedule.association.iter().zip(&schedule.allocation).enumerate() {
        if assoc > m {
            report.invalid_association.push(i);
            continue;
        }
        if !(frac > 0.0 && frac.is_finite()) {
            report.invalid_allocation.push(i);
            continue;
        }
        if assoc == 0 {
            let freq = frac * c.local_cap_cycles_per_s;
            if freq > c.local_cap_cycles_per_s {
                report.local_cap.push(LocalCapViolation {
                    ue: i,
                    excess_cycles_per_s: freq - c.local_cap_cycles_per_s,
                });
            }
        }
    }

    for uav in 1..=m {
        let load = uav_load(scenario, schedule, uav);
        if load > c.uav_cap_cycles_per_s {
            report.uav_cap.push(CapacityViolation {
                uav,
                load_cycles_per_s: load,
                excess_cycles_per_s: load - c.uav_cap_cycles_per_s,
            });
        }
    }

    if let LatencyModel::Deadline { seconds } = scenario.latency {
        for (i, ue) in scenario.ues.iter().enumerate().take(schedule.len()) {
            let assoc = schedule.association[i];
            let frac = schedule.allocation[i];
            if assoc > m || !(frac > 0.0) {
                continue;
            }
            let completion = if assoc == 0 {
                ue.task.cycles / (frac * c.local_cap_cycles_per_s)
            } else if let Some(ch) = channels {
                let rate = ch.rate(i, assoc - 1);
                ue.task.data_bits / rate + ue.task.cycles / (frac * c.uav_cap_cycles_per_s)
            } else {
                continue;
            };
            if completion > seconds * (1.0 + DEADLINE_RTOL) {
                report.deadline.push(DeadlineViolation {
                    ue: i,
                    completion_s: completion,
                    deadline_s: seconds,
                });
            }
        }
    }
    report
}

/// Clamps local allocations to capacity and proportionally shrinks every
/// over-subscribed UAV so that its load is at most its capacity exactly.
/// Associations to inactive UAVs fall back to local execution.
pub fn repair_allocation(scenario: &Scenario, schedule: &Schedule) -> Schedule {
    let c = &scenario.constants;
    let m = scenario.active_uav_count;
    let mut out = schedule.clone();
    for (assoc, frac) in out.association.iter_mut().zip(out.allocation.iter_mut()) {
        if *assoc > m {
            *assoc = 0;
        }
        if !(*frac > 0.0 && frac.is_finite()) {
            *frac = MIN_FRACTION;
        }
        if *assoc == 0 && *frac > 1.0 {
            *frac = 1.0;
        }
    }

    let cap = c.uav_cap_cycles_per_s;
    for uav in 1..=m {
        let load = uav_load(scenario, &out, uav);
        if load <= cap {
            continue;
        }
        let members: Vec<usize> = out.assigned_to(uav).collect();
        let original: Vec<f64> = members.iter().map(|&i| out.allocation[i]).collect();
        let mut scale = cap / load;
        let mut nudge = f64::EPSILON;
        loop {
            for (&i, &f) in members.iter().zip(&original) {
                out.allocation[i] = f * scale;
            }
            if uav_load(scenario, &out, uav) <= cap {
                break;
            }
            scale *= 1.0 - nudge;
            nudge *= 2.0;
        }
    }
    out
}

/// Smallest local fraction that finishes UE `i` within the deadline, capped
/// at 1. `None` when no deadline applies.
pub fn local_deadline_floor(scenario: &Scenario, i: usize) -> Option<f64> {
    let seconds = scenario.latency.deadline()?;
    let need = scenario.ues[i].task.cycles / (seconds * scenario.constants.local_cap_cycles_per_s);
    Some(need.min(1.0))
}

/// Smallest remote fraction that meets the deadline after transmission, if
/// transmission alone does not already exceed it.
fn remote_deadline_floor(scenario: &Scenario, channels: &ChannelSet, i: usize, uav: usize) -> Option<f64> {
    let seconds = scenario.latency.deadline()?;
    let task = scenario.ues[i].task;
    let rate = channels.rate(i, uav - 1);
    if !(rate > 0.0) {
        return None;
    }
    let slack = seconds - task.data_bits / rate;
    if slack <= 0.0 {
        return None;
    }
    Some(task.cycles / (slack * scenario.constants.uav_cap_cycles_per_s))
}

/// Frequency minimising remote compute plus weighted hover energy for a UE
/// that sets its UAV's hover time.
pub fn remote_energy_optimal_frequency(c: &PhysicalConstants) -> f64 {
    if c.tau2 <= 1.0 {
        return c.uav_cap_cycles_per_s;
    }
    let f = (c.hover_weight * c.hover_power_w / ((c.tau2 - 1.0) * c.nu2)).powf(1.0 / c.tau2);
    f.min(c.uav_cap_cycles_per_s)
}

/// Energy-minimal allocation under the latency model for UE `i` at `assoc`:
/// the deadline floor locally, and the larger of the deadline floor and the
/// hover-balanced optimum remotely.
pub fn default_fraction(scenario: &Scenario, channels: &ChannelSet, i: usize, assoc: usize) -> f64 {
    let c = &scenario.constants;
    if assoc == 0 {
        return match scenario.latency {
            LatencyModel::FixedLocalMax => 1.0,
            LatencyModel::Deadline { .. } => local_deadline_floor(scenario, i).unwrap_or(1.0),
        };
    }
    let optimum = remote_energy_optimal_frequency(c) / c.uav_cap_cycles_per_s;
    let floor = remote_deadline_floor(scenario, channels, i, assoc).unwrap_or(0.0);
    optimum.max(floor).clamp(MIN_FRACTION, 1.0)
}

/// Turns requested fractions into an executable schedule: local UEs get the
/// allocation fixed by the latency model, offloaded UEs are raised to their
/// deadline floor, then capacity is repaired.
pub fn finalize_allocation(scenario: &Scenario, channels: &ChannelSet, schedule: &Schedule) -> Schedule {
    let m = scenario.active_uav_count;
    let mut out = schedule.clone();
    for i in 0..out.len() {
        if out.association[i] > m {
            out.association[i] = 0;
        }
        let frac = out.allocation[i];
        let mut frac = if frac > 0.0 && frac.is_finite() { frac } else { MIN_FRACTION };
        let assoc = out.association[i];
        if assoc == 0 {
            // local energy grows with the allocation, so the latency model
            // alone fixes it
            frac = match scenario.latency {
                LatencyModel::FixedLocalMax => 1.0,
                LatencyModel::Deadline { .. } => local_deadline_floor(scenario, i).unwrap_or(frac),
            };
        } else if let Some(floor) = remote_deadline_floor(scenario, channels, i, assoc) {
            frac = frac.max(floor);
        }
        out.allocation[i] = frac.min(1.0);
    }
    repair_allocation(scenario, &out)
}
