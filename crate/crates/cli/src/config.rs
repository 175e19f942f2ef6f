use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fres_core::agent::AgentConfig;
use fres_core::env::ScenarioConfig;
use fres_core::runtime::{BaselineConfig, EpisodeConfig, Experiment, Method};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_VAR: &str = "FRES_OUTPUT_ROOT";
const DEFAULT_OUTPUT_ROOT: &str = "fres-runs";

/// Limits for `oracle-check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub qpb_geometries: usize,
    /// Largest element count and phase-level count enumerated.
    pub qpb_max_elements: usize,
    pub qpb_max_levels: usize,
    pub lts_instances: usize,
    /// Instances cycle through `2..=max_ues` UEs and `1..=max_uavs` UAVs.
    pub max_ues: usize,
    pub max_uavs: usize,
    pub grid_levels: usize,
    pub lts_max_iter: usize,
    pub gradient_draws: usize,
    pub gradient_tolerance: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            qpb_geometries: 200,
            qpb_max_elements: 3,
            qpb_max_levels: 4,
            lts_instances: 20,
            max_ues: 3,
            max_uavs: 2,
            grid_levels: 8,
            lts_max_iter: 30,
            gradient_draws: 50,
            gradient_tolerance: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    /// Methods run by `compare`.
    pub methods: Vec<Method>,
    pub output_dir: Option<PathBuf>,
    pub scenario: ScenarioConfig,
    pub agent: AgentConfig,
    pub episode: EpisodeConfig,
    pub baselines: BaselineConfig,
    pub oracle: OracleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let exp = Experiment::default();
        Self {
            seeds: vec![0],
            methods: vec![Method::Fres, Method::Random, Method::Local, Method::Remote, Method::Ts],
            output_dir: None,
            scenario: exp.scenario,
            agent: exp.agent,
            episode: exp.episode,
            baselines: exp.baselines,
            oracle: OracleConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("invalid config file {}", path.display()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn experiment(&self) -> Experiment {
        Experiment {
            scenario: self.scenario.clone(),
            agent: self.agent.clone(),
            episode: self.episode.clone(),
            baselines: self.baselines,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("at least one seed is required");
        }
        self.experiment().validate()?;
        Ok(())
    }

    /// First 12 hex digits of the SHA-256 of the serialized config.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(hex::encode(digest)[..12].to_string())
    }

    /// `explicit`, else `output_dir`, else `$FRES_OUTPUT_ROOT`, else `fres-runs`.
    pub fn output_dir(&self, explicit: Option<&Path>) -> PathBuf {
        if let Some(p) = explicit {
            return p.to_path_buf();
        }
        if let Some(p) = &self.output_dir {
            return p.clone();
        }
        std::env::var_os(OUTPUT_ROOT_VAR)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
    }
}
