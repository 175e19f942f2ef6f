use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LatencyModel, PhysicalConstants, Position3D, Scenario, TaskRanges, UserEquipment};
use crate::placement::{place_uavs, PlacementConfig};
use crate::{Error, Result};

/// Everything needed to generate a [`Scenario`] besides the seed and counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub constants: PhysicalConstants,
    pub task_ranges: TaskRanges,
    pub latency: LatencyModel,
    pub area_x_m: f64,
    pub area_y_m: f64,
    pub uav_altitude_m: f64,
    pub irs_altitude_m: f64,
    /// Number of IRSs; defaults to the number of UEs.
    pub irs_count: Option<usize>,
    pub max_uavs: usize,
    pub placement: PlacementConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            constants: PhysicalConstants::default(),
            task_ranges: TaskRanges::default(),
            latency: LatencyModel::default(),
            area_x_m: 100.0,
            area_y_m: 100.0,
            uav_altitude_m: 30.0,
            irs_altitude_m: 15.0,
            irs_count: None,
            max_uavs: 5,
            placement: PlacementConfig::default(),
        }
    }
}

impl ScenarioConfig {
    /// Small-instance profile in which offloading is competitive: smaller
    /// payloads, a costlier local processor, a lighter hover draw and a UAV
    /// capacity that the 8-level allocation grid resolves.
    pub fn desk() -> Self {
        let mut cfg = Self::default();
        cfg.task_ranges.data_mb_min = 0.2;
        cfg.task_ranges.data_mb_max = 0.3;
        cfg.constants.nu1 = 7.0e-27;
        cfg.constants.hover_power_w = 0.2;
        cfg.constants.uav_cap_cycles_per_s = 4.0e9;
        cfg.area_x_m = 250.0;
        cfg.area_y_m = 250.0;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        self.task_ranges.validate()?;
        if !(self.area_x_m > 0.0 && self.area_y_m > 0.0) {
            return Err(Error::Config("simulation area must be positive".into()));
        }
        if !(self.uav_altitude_m >= 0.0 && self.irs_altitude_m >= 0.0) {
            return Err(Error::Config("altitudes must be non-negative".into()));
        }
        if self.max_uavs == 0 {
            return Err(Error::Config("max_uavs must be >= 1".into()));
        }
        if self.irs_count == Some(0) {
            return Err(Error::Config("irs_count must be >= 1".into()));
        }
        self.placement.validate()
    }

    pub fn check_uav_count(&self, m: usize) -> Result<()> {
        if m == 0 || m > self.max_uavs {
            return Err(Error::Config(format!(
                "UAV count {m} outside [1, {}] (maximum number of UAVs)",
                self.max_uavs
            )));
        }
        Ok(())
    }
}

/// Samples UE/IRS positions and tasks and places `m_uavs` UAVs by path-loss
/// fuzzy c-means. Deterministic in `seed`.
pub fn generate_scenario(
    seed: u64,
    n_ues: usize,
    m_uavs: usize,
    config: &ScenarioConfig,
) -> Result<Scenario> {
    config.validate()?;
    if n_ues == 0 {
        return Err(Error::Config("at least one UE is required".into()));
    }
    config.check_uav_count(m_uavs)?;
    if m_uavs > n_ues {
        return Err(Error::Config(format!("{m_uavs} UAVs for only {n_ues} UEs")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ues: Vec<UserEquipment> = (0..n_ues)
        .map(|_| {
            let position = Position3D::new(
                rng.gen_range(0.0..config.area_x_m),
                rng.gen_range(0.0..config.area_y_m),
                0.0,
            );
            UserEquipment { position, task: config.task_ranges.sample(&mut rng) }
        })
        .collect();
    let irss: Vec<Position3D> = (0..config.irs_count.unwrap_or(n_ues))
        .map(|_| {
            Position3D::new(
                rng.gen_range(0.0..config.area_x_m),
                rng.gen_range(0.0..config.area_y_m),
                config.irs_altitude_m,
            )
        })
        .collect();

    let ue_positions: Vec<Position3D> = ues.iter().map(|u| u.position).collect();
    let uavs = place_uavs(&ue_positions, m_uavs, config.uav_altitude_m, &config.placement, seed)?;

    let scenario = Scenario {
        ues,
        uavs,
        irss,
        constants: config.constants,
        active_uav_count: m_uavs,
        max_uavs: config.max_uavs,
        latency: config.latency,
        task_ranges: config.task_ranges,
        rng_seed: seed,
    };
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_in_seed() {
        let cfg = ScenarioConfig::default();
        let a = generate_scenario(7, 12, 3, &cfg).unwrap();
        let b = generate_scenario(7, 12, 3, &cfg).unwrap();
        assert_eq!(a, b);
        let c = generate_scenario(8, 12, 3, &cfg).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn irs_count_matches_ues_by_default() {
        let s = generate_scenario(1, 50, 3, &ScenarioConfig::default()).unwrap();
        assert_eq!(s.ues.len(), 50);
        assert_eq!(s.irss.len(), 50);
        assert!(s.irss.iter().all(|p| p.z == 15.0));
        assert!(s.uavs.iter().all(|p| p.z == 30.0));
    }

    #[test]
    fn too_many_uavs_rejected() {
        let err = generate_scenario(1, 50, 6, &ScenarioConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn tasks_within_ranges() {
        let s = generate_scenario(3, 40, 2, &ScenarioConfig::default()).unwrap();
        for ue in &s.ues {
            assert!((0.95e9..=1.05e9).contains(&ue.task.cycles));
            assert!((19.0 * 8e6..=21.0 * 8e6).contains(&ue.task.data_bits));
            assert!((0.0..100.0).contains(&ue.position.x));
        }
    }

    #[test]
    fn json_round_trip() {
        let s = generate_scenario(5, 6, 2, &ScenarioConfig::default()).unwrap();
        let text = s.to_json().unwrap();
        assert!(text.contains("\"data_bits\""));
        assert!(text.contains("\"x_m\""));
        assert_eq!(Scenario::from_json(&text).unwrap(), s);
    }
}
