//! The scheduling agent.
//!
//! A multi-task network maps one UE's [`EncodedState`] to an association
//! class (softmax head, masked to the active UAVs) and an allocation fraction
//! (sigmoid head). It is trained supervised on refined actions drawn from a
//! per-UAV-count [`ReplayPool`] with prioritized sampling.
//!
//! When the UAV count grows past what the network was built for, every layer
//! gains a new slice and all earlier slices are frozen. When it shrinks, the
//! extra slices are masked. Returning to an earlier count therefore
//! reproduces the earlier agent exactly.

mod replay;
mod state;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use replay::{ReplayBuffer, ReplayPool, Transition};
pub use state::{encode_state, EncodedState, GainRange};

use crate::env::MIN_FRACTION;
use crate::nn::{
    batch_backward, Activation, Adam, AdamConfig, HeadSpec, HeadTarget, Network, NetworkSpec,
};
use crate::{Error, Result};

pub const AGENT_CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentVariant {
    /// Shared trunk with an association head and an allocation head.
    MultiTask,
    /// One sigmoid output vector `[one-hot association, fraction]` trained
    /// with squared error only.
    SingleTask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub variant: AgentVariant,
    pub max_uavs: usize,
    pub shared_widths: Vec<usize>,
    pub head_widths: Vec<usize>,
    pub single_task_widths: Vec<usize>,
    pub growth_units: usize,
    pub growth_init_scale: f64,
    pub adam: AdamConfig,
    pub xi: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub priority_exponent: f64,
    pub priority_epsilon: f64,
    pub gain_range: GainRange,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            variant: AgentVariant::MultiTask,
            max_uavs: 5,
            shared_widths: vec![64, 128],
            head_widths: vec![32],
            single_task_widths: vec![64, 128, 64],
            growth_units: 16,
            growth_init_scale: 0.1,
            adam: AdamConfig::default(),
            xi: 1.0,
            batch_size: 64,
            buffer_capacity: 1024,
            priority_exponent: 0.6,
            priority_epsilon: 1e-6,
            gain_range: GainRange::default(),
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_uavs == 0 {
            return Err(Error::Config("max_uavs must be >= 1".into()));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return Err(Error::Config("batch_size and buffer_capacity must be >= 1".into()));
        }
        if !(self.xi >= 0.0) || !(self.priority_exponent >= 0.0) || !(self.priority_epsilon > 0.0) {
            return Err(Error::Config("xi and priority exponent must be >= 0, epsilon > 0".into()));
        }
        if self.growth_units == 0 {
            return Err(Error::Config("growth_units must be >= 1".into()));
        }
        Ok(())
    }
}

/// Association class (0 = local, j = UAV j) and allocation fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentAction {
    pub association: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub l_ce: f64,
    pub l_mse: f64,
    pub l_mt: f64,
    pub batch: usize,
}

/// What [`MultiTaskAgent::progressive_adjust`] did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjustOutcome {
    pub previous: usize,
    pub current: usize,
    /// Slices added by this call.
    pub grown: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTaskAgent {
    pub config: AgentConfig,
    pub network: Network,
    pub optimizer: Adam,
    /// UAV count the base slice was built for.
    base_uavs: usize,
    active_uavs: usize,
}

#[derive(Serialize, Deserialize)]
struct AgentCheckpoint {
    version: u32,
    agent: MultiTaskAgent,
    pool_sizes: BTreeMap<usize, usize>,
}

#[derive(Deserialize)]
struct Header {
    version: u32,
}

fn clamp_fraction(f: f64) -> f64 {
    f.clamp(MIN_FRACTION, 1.0 - MIN_FRACTION)
}

impl MultiTaskAgent {
    /// Builds an agent whose base slice serves `initial_uavs` UAVs.
    pub fn new(config: AgentConfig, initial_uavs: usize) -> Result<Self> {
        config.validate()?;
        if initial_uavs == 0 || initial_uavs > config.max_uavs {
            return Err(Error::Config(format!(
                "initial UAV count {initial_uavs} outside [1, {}]",
                config.max_uavs
            )));
        }
        let classes = config.max_uavs + 1;
        let (trunk, heads) = match config.variant {
            AgentVariant::MultiTask => (
                config.shared_widths.clone(),
                vec![
                    HeadSpec { hidden: config.head_widths.clone(), outputs: classes, activation: Activation::Softmax },
                    HeadSpec { hidden: config.head_widths.clone(), outputs: 1, activation: Activation::Sigmoid },
                ],
            ),
            AgentVariant::SingleTask => (
                config.single_task_widths.clone(),
                vec![HeadSpec { hidden: vec![], outputs: classes + 1, activation: Activation::Sigmoid }],
            ),
        };
        let spec = NetworkSpec {
            inputs: 2 + initial_uavs,
            trunk,
            heads,
            growth_units: config.growth_units,
            max_slices: config.max_uavs - initial_uavs + 1,
            growth_init_scale: config.growth_init_scale,
        };
        let network = Network::new(spec, config.seed)?;
        let optimizer = Adam::new(config.adam, &network);
        let mut agent = Self { config, network, optimizer, base_uavs: initial_uavs, active_uavs: initial_uavs };
        agent.refresh_class_mask();
        Ok(agent)
    }

    pub fn active_uavs(&self) -> usize {
        self.active_uavs
    }

    pub fn base_uavs(&self) -> usize {
        self.base_uavs
    }

    /// Largest UAV count the built slices cover.
    pub fn built_uavs(&self) -> usize {
        self.base_uavs + self.network.slices() - 1
    }

    fn refresh_class_mask(&mut self) {
        if self.config.variant == AgentVariant::MultiTask {
            self.network.head_valid[0] = self.active_uavs + 1;
        }
    }

    fn input(&self, state: &EncodedState) -> Vec<f64> {
        let mut x = state.to_vec();
        x.resize(self.network.input_width(), 0.0);
        x
    }

    /// Raw head outputs for `state`.
    pub fn outputs(&self, state: &EncodedState) -> Result<Vec<Vec<f64>>> {
        Ok(self.network.forward(&self.input(state))?.heads)
    }

    /// Greedy action for `m` active UAVs. Ties in the association go to the
    /// lowest class.
    pub fn infer(&self, state: &EncodedState, m: usize) -> Result<AgentAction> {
        if m == 0 || m > self.active_uavs {
            return Err(Error::AdjustRequired { supported: self.active_uavs, requested: m });
        }
        let heads = self.outputs(state)?;
        let scores = &heads[0];
        let mut association = 0;
        for k in 1..=m {
            if scores[k] > scores[association] {
                association = k;
            }
        }
        let fraction = match self.config.variant {
            AgentVariant::MultiTask => heads[1][0],
            AgentVariant::SingleTask => heads[0][self.config.max_uavs + 1],
        };
        Ok(AgentAction { association, fraction: clamp_fraction(fraction) })
    }

    fn targets(&self, action: &AgentAction) -> Vec<HeadTarget> {
        match self.config.variant {
            AgentVariant::MultiTask => {
                vec![HeadTarget::Class(action.association), HeadTarget::Values(vec![action.fraction])]
            }
            AgentVariant::SingleTask => {
                let mut v = vec![0.0; self.config.max_uavs + 2];
                v[action.association] = 1.0;
                v[self.config.max_uavs + 1] = action.fraction;
                vec![HeadTarget::Values(v)]
            }
        }
    }

    /// One optimizer step on `L_ce + xi·L_mse` over `batch`. Returns the
    /// report and the per-sample losses.
    pub fn train_on(&mut self, batch: &[(EncodedState, AgentAction)]) -> Result<(TrainReport, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Shape("empty training batch".into()));
        }
        for (_, a) in batch {
            if a.association > self.active_uavs {
                return Err(Error::Shape(format!(
                    "label {} for {} active UAVs",
                    a.association, self.active_uavs
                )));
            }
        }
        let inputs: Vec<Vec<f64>> = batch.iter().map(|(s, _)| self.input(s)).collect();
        let targets: Vec<Vec<HeadTarget>> = batch.iter().map(|(_, a)| self.targets(a)).collect();
        let loss = batch_backward(&self.network, &inputs, &targets, self.config.xi)?;
        self.optimizer.step(&mut self.network, &loss.grads)?;
        let report = TrainReport { l_ce: loss.ce, l_mse: loss.mse, l_mt: loss.total, batch: batch.len() };
        Ok((report, loss.per_sample))
    }

    /// Samples a prioritized batch from the buffer for the active UAV count,
    /// trains on it and refreshes the sampled priorities. `None` when the
    /// buffer is empty.
    pub fn train_step<R: Rng + ?Sized>(&mut self, pool: &mut ReplayPool, rng: &mut R) -> Result<Option<TrainReport>> {
        let m = self.active_uavs;
        let buffer = pool.select(m);
        let Some(indices) = buffer.sample(self.config.batch_size, self.config.priority_exponent, rng) else {
            return Ok(None);
        };
        let batch: Vec<(EncodedState, AgentAction)> = indices
            .iter()
            .map(|&i| {
                let t = buffer.get(i).unwrap();
                (t.state.clone(), t.action)
            })
            .collect();
        let (report, per_sample) = self.train_on(&batch)?;
        let buffer = pool.select(m);
        for (&i, &l) in indices.iter().zip(&per_sample) {
            buffer.set_priority(i, l + self.config.priority_epsilon);
        }
        Ok(Some(report))
    }

    /// Adapts the structure to `m_new` active UAVs and selects its buffer.
    ///
    /// Growing past the built slices freezes everything built so far and
    /// appends one slice per extra UAV. Shrinking masks slices (never the
    /// base slice; counts below the base only mask output classes).
    pub fn progressive_adjust(&mut self, m_new: usize, pool: &mut ReplayPool) -> Result<AdjustOutcome> {
        if m_new == 0 || m_new > self.config.max_uavs {
            return Err(Error::Config(format!(
                "UAV count {m_new} outside [1, {}]",
                self.config.max_uavs
            )));
        }
        let previous = self.active_uavs;
        let mut grown = 0;
        if m_new != previous {
            let target = m_new.saturating_sub(self.base_uavs) + 1;
            if target > self.network.slices() {
                let built = self.network.slices();
                self.network.set_active_slices(built)?;
                while self.network.slices() < target {
                    for s in 0..self.network.slices() {
                        self.network.set_frozen(s, true);
                    }
                    self.network.grow(1)?;
                    grown += 1;
                }
            } else {
                self.network.set_active_slices(target)?;
            }
            self.active_uavs = m_new;
            self.refresh_class_mask();
        }
        pool.select(m_new);
        Ok(AdjustOutcome { previous, current: m_new, grown })
    }

    pub fn save(&self, pool: Option<&ReplayPool>) -> Result<Vec<u8>> {
        let ckpt = AgentCheckpoint {
            version: AGENT_CHECKPOINT_VERSION,
            agent: self.clone(),
            pool_sizes: pool.map(ReplayPool::sizes).unwrap_or_default(),
        };
        Ok(serde_json::to_vec(&ckpt)?)
    }

    /// Restores an agent and the per-UAV-count buffer sizes it was saved
    /// with.
    pub fn load(bytes: &[u8]) -> Result<(Self, BTreeMap<usize, usize>)> {
        let header: Header =
            serde_json::from_slice(bytes).map_err(|e| Error::CorruptPayload(e.to_string()))?;
        if header.version != AGENT_CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch { found: header.version, expected: AGENT_CHECKPOINT_VERSION });
        }
        let ckpt: AgentCheckpoint =
            serde_json::from_slice(bytes).map_err(|e| Error::CorruptPayload(e.to_string()))?;
        Ok((ckpt.agent, ckpt.pool_sizes))
    }
}
