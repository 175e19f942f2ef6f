//! World state, the energy model and the scheduling objective.
//!
//! Allocations are stored as fractions of the relevant capacity: a local
//! fraction scales `local_cap_cycles_per_s`, a remote fraction scales
//! `uav_cap_cycles_per_s`. Association index `0` means local execution and
//! `j >= 1` means UAV `j` (1-based), so a [`Schedule`] is one-hot by
//! construction.

mod constraints;
mod energy;
mod scenario;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use constraints::{
    check_constraints, default_fraction, finalize_allocation, local_deadline_floor,
    remote_energy_optimal_frequency, repair_allocation, uav_load, CapacityViolation,
    DeadlineViolation, LocalCapViolation, ViolationReport,
};
pub use energy::{
    hover_energy, local_energy, remote_energy, total_energy, transmit_energy, EnergyBreakdown,
};
pub use scenario::{generate_scenario, ScenarioConfig};

/// Bits per megabyte (10^6 bytes).
pub const BITS_PER_MB: f64 = 8.0e6;

/// Smallest allocation fraction produced by search and inference.
pub const MIN_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position3D {
    #[serde(rename = "x_m")]
    pub x: f64,
    #[serde(rename = "y_m")]
    pub y: f64,
    #[serde(rename = "z_m")]
    pub z: f64,
}

impl Position3D {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

/// Euclidean distance in meters.
pub fn distance(p: &Position3D, q: &Position3D) -> f64 {
    let (dx, dy, dz) = (p.x - q.x, p.y - q.y, p.z - q.z);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// One computation task: bits to upload and CPU cycles to execute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub data_bits: f64,
    pub cycles: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalConstants {
    pub bandwidth_hz: f64,
    pub noise_power_w: f64,
    pub tx_power_w: f64,
    pub hover_power_w: f64,
    /// Path loss at the 1 m reference distance.
    pub epsilon_ref_loss: f64,
    /// Path-loss exponent of the UE→IRS link.
    pub alpha_ue_irs: f64,
    /// Effective switched capacitance of UE processors.
    pub nu1: f64,
    /// Effective switched capacitance of UAV processors.
    pub nu2: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub local_cap_cycles_per_s: f64,
    pub uav_cap_cycles_per_s: f64,
    /// Weight of UAV hover energy in the objective.
    pub hover_weight: f64,
    pub carrier_wavelength_m: f64,
    pub element_spacing_m: f64,
    pub phase_levels: usize,
    pub elements_per_irs: usize,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        let wavelength = 0.125;
        Self {
            bandwidth_hz: 1.0e6,
            noise_power_w: 1.0e-13,
            tx_power_w: 1.0,
            hover_power_w: 1.0,
            epsilon_ref_loss: 1.0e-3,
            alpha_ue_irs: 2.8,
            nu1: 1.0e-27,
            nu2: 1.0e-27,
            tau1: 3.0,
            tau2: 3.0,
            local_cap_cycles_per_s: 1.0e9,
            uav_cap_cycles_per_s: 3.0e10,
            hover_weight: 1.0,
            carrier_wavelength_m: wavelength,
            element_spacing_m: wavelength / 2.0,
            phase_levels: 8,
            elements_per_irs: 16,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("noise_power_w", self.noise_power_w),
            ("tx_power_w", self.tx_power_w),
            ("hover_power_w", self.hover_power_w),
            ("epsilon_ref_loss", self.epsilon_ref_loss),
            ("alpha_ue_irs", self.alpha_ue_irs),
            ("nu1", self.nu1),
            ("nu2", self.nu2),
            ("local_cap_cycles_per_s", self.local_cap_cycles_per_s),
            ("uav_cap_cycles_per_s", self.uav_cap_cycles_per_s),
            ("carrier_wavelength_m", self.carrier_wavelength_m),
            ("element_spacing_m", self.element_spacing_m),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if self.tau1 < 1.0 || self.tau2 < 1.0 {
            return Err(Error::Config("tau1 and tau2 must be >= 1".into()));
        }
        if !(self.hover_weight >= 0.0) {
            return Err(Error::Config("hover_weight must be >= 0".into()));
        }
        if self.phase_levels == 0 || self.elements_per_irs == 0 {
            return Err(Error::Config(
                "phase_levels and elements_per_irs must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// How local execution time is constrained.
///
/// The objective has no latency term, so without a deadline a local
/// allocation would collapse towards zero. `Deadline` applies a per-task
/// completion limit; `FixedLocalMax` pins local execution to full capacity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatencyModel {
    Deadline { seconds: f64 },
    FixedLocalMax,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel::Deadline { seconds: 2.0 }
    }
}

impl LatencyModel {
    pub fn deadline(&self) -> Option<f64> {
        match *self {
            LatencyModel::Deadline { seconds } => Some(seconds),
            LatencyModel::FixedLocalMax => None,
        }
    }
}

/// Sampling ranges for per-slot task generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskRanges {
    pub cycles_min: f64,
    pub cycles_max: f64,
    pub data_mb_min: f64,
    pub data_mb_max: f64,
    pub bits_per_mb: f64,
}

impl Default for TaskRanges {
    fn default() -> Self {
        Self {
            cycles_min: 0.95e9,
            cycles_max: 1.05e9,
            data_mb_min: 19.0,
            data_mb_max: 21.0,
            bits_per_mb: BITS_PER_MB,
        }
    }
}

impl TaskRanges {
    pub fn data_bits_min(&self) -> f64 {
        self.data_mb_min * self.bits_per_mb
    }

    pub fn data_bits_max(&self) -> f64 {
        self.data_mb_max * self.bits_per_mb
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Task {
        let cycles = uniform(rng, self.cycles_min, self.cycles_max);
        let data_bits = uniform(rng, self.data_bits_min(), self.data_bits_max());
        Task { data_bits, cycles }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cycles_min > 0.0 && self.cycles_max >= self.cycles_min) {
            return Err(Error::Config("invalid cycles range".into()));
        }
        if !(self.data_mb_min > 0.0 && self.data_mb_max >= self.data_mb_min) {
            return Err(Error::Config("invalid data-size range".into()));
        }
        if !(self.bits_per_mb > 0.0) {
            return Err(Error::Config("bits_per_mb must be positive".into()));
        }
        Ok(())
    }
}

fn uniform<R: rand::Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserEquipment {
    pub position: Position3D,
    pub task: Task,
}

/// Full world state for one deployment.
///
/// `uavs` may hold more positions than `active_uav_count`; only the first
/// `active_uav_count` take part in scheduling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub ues: Vec<UserEquipment>,
    pub uavs: Vec<Position3D>,
    pub irss: Vec<Position3D>,
    pub constants: PhysicalConstants,
    pub active_uav_count: usize,
    pub max_uavs: usize,
    pub latency: LatencyModel,
    pub task_ranges: TaskRanges,
    pub rng_seed: u64,
}

impl Scenario {
    pub fn n_ues(&self) -> usize {
        self.ues.len()
    }

    pub fn active_uavs(&self) -> &[Position3D] {
        &self.uavs[..self.active_uav_count.min(self.uavs.len())]
    }

    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        self.task_ranges.validate()?;
        if self.active_uav_count == 0 || self.active_uav_count > self.max_uavs {
            return Err(Error::Config(format!(
                "active UAV count {} outside [1, {}]",
                self.active_uav_count, self.max_uavs
            )));
        }
        if self.uavs.len() < self.active_uav_count {
            return Err(Error::Config(format!(
                "{} UAV positions for {} active UAVs",
                self.uavs.len(),
                self.active_uav_count
            )));
        }
        if self.irss.is_empty() {
            return Err(Error::Config("at least one IRS is required".into()));
        }
        for (i, ue) in self.ues.iter().enumerate() {
            if !(ue.task.data_bits > 0.0 && ue.task.cycles > 0.0) {
                return Err(Error::Config(format!("UE {i} has a non-positive task")));
            }
        }
        if let LatencyModel::Deadline { seconds } = self.latency {
            if !(seconds > 0.0) {
                return Err(Error::Config("deadline must be positive".into()));
            }
        }
        Ok(())
    }

    /// Draws a fresh task for every UE from the configured ranges.
    pub fn resample_tasks<R: rand::Rng + ?Sized>(&mut self, rng: &mut R) {
        for ue in &mut self.ues {
            ue.task = self.task_ranges.sample(rng);
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }
}

/// A joint association/allocation decision for every UE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// `0` = local, `j` = UAV `j` (1-based).
    pub association: Vec<usize>,
    /// Fraction of local or UAV capacity requested by each UE.
    pub allocation: Vec<f64>,
}

impl Schedule {
    pub fn new(association: Vec<usize>, allocation: Vec<f64>) -> Result<Self> {
        if association.len() != allocation.len() {
            return Err(Error::Shape(format!(
                "{} associations vs {} allocations",
                association.len(),
                allocation.len()
            )));
        }
        Ok(Self { association, allocation })
    }

    pub fn all_local(n: usize, fraction: f64) -> Self {
        Self { association: vec![0; n], allocation: vec![fraction; n] }
    }

    pub fn len(&self) -> usize {
        self.association.len()
    }

    pub fn is_empty(&self) -> bool {
        self.association.is_empty()
    }

    /// Indices of UEs offloaded to UAV `uav` (1-based).
    pub fn assigned_to(&self, uav: usize) -> impl Iterator<Item = usize> + '_ {
        self.association
            .iter()
            .enumerate()
            .filter(move |(_, &a)| a == uav)
            .map(|(i, _)| i)
    }

    /// Allocated cycles/s for UE `i`.
    pub fn frequency(&self, i: usize, constants: &PhysicalConstants) -> f64 {
        let cap = if self.association[i] == 0 {
            constants.local_cap_cycles_per_s
        } else {
            constants.uav_cap_cycles_per_s
        };
        self.allocation[i] * cap
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_examples() {
        let o = Position3D::new(0.0, 0.0, 0.0);
        assert_eq!(distance(&o, &o), 0.0);
        assert_eq!(distance(&o, &Position3D::new(3.0, 4.0, 0.0)), 5.0);
        assert_eq!(
            distance(&Position3D::new(1.0, 2.0, 3.0), &Position3D::new(4.0, 6.0, 3.0)),
            5.0
        );
    }

    #[test]
    fn default_constants_validate() {
        let c = PhysicalConstants::default();
        c.validate().unwrap();
        assert_eq!(c.element_spacing_m, c.carrier_wavelength_m / 2.0);
        assert_eq!(c.phase_levels, 8);
        assert_eq!(c.elements_per_irs, 16);
    }

    #[test]
    fn rejects_bad_constants() {
        let c = PhysicalConstants { tau2: 0.5, ..Default::default() };
        assert!(c.validate().is_err());
        let c = PhysicalConstants { phase_levels: 0, ..Default::default() };
        assert!(c.validate().is_err());
        let c = PhysicalConstants { hover_weight: 0.0, ..Default::default() };
        assert!(c.validate().is_ok());
    }

    #[test]
    fn schedule_shape_checked() {
        assert!(Schedule::new(vec![0, 1], vec![0.5]).is_err());
        let s = Schedule::new(vec![0, 1, 1], vec![0.5, 0.1, 0.2]).unwrap();
        assert_eq!(s.assigned_to(1).collect::<Vec<_>>(), vec![1, 2]);
    }
}
