//! Timeslot loop: redeploy on UAV-count changes, infer, refine with LTS,
//! store and train. Baselines run on the same scenarios and task draws.

mod metrics;
mod output;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{aggregate_metrics, Curves, MethodSummary};
pub use output::{records_to_csv, CSV_COLUMNS};

use crate::agent::{encode_state, AgentAction, AgentVariant, AgentConfig, MultiTaskAgent, ReplayPool, TrainReport};
use crate::channel::ChannelSet;
use crate::env::{
    check_constraints, distance, finalize_allocation, generate_scenario, total_energy, Scenario, ScenarioConfig,
    Schedule, MIN_FRACTION,
};
use crate::placement::place_uavs;
use crate::search::{asa, lts, sa, ts, AllocationDomain, AnnealConfig, SearchProblem, TabooConfig, TracePoint};
use crate::{Error, Result};

const TASK_STREAM: u64 = 1;
const AGENT_STREAM: u64 = 2;
const SEARCH_STREAM: u64 = 3;
const TRAIN_STREAM: u64 = 4;
const FADING_STREAM: u64 = 5;
const INIT_STREAM: u64 = 6;

/// Independent 64-bit seed for `(seed, stream, index)`.
pub fn sub_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(index as u128 * 2);
    rng.next_u64()
}

/// When the agent's action is refined by LTS (and the agent trained).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RefineMode {
    /// Only when the agent's schedule violates a constraint.
    OnViolation,
    Always,
    /// On slots divisible by `k`.
    EveryK { k: usize },
}

impl FromStr for RefineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "on-violation" => Ok(RefineMode::OnViolation),
            "always" => Ok(RefineMode::Always),
            _ => match s.strip_prefix("every-") {
                Some(k) => k
                    .parse()
                    .ok()
                    .filter(|&k| k > 0)
                    .map(|k| RefineMode::EveryK { k })
                    .ok_or_else(|| Error::Config(format!("bad refine mode {s:?}"))),
                None => Err(Error::Config(format!(
                    "unknown refine mode {s:?} (on-violation, always, every-<k>)"
                ))),
            },
        }
    }
}

impl fmt::Display for RefineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RefineMode::OnViolation => write!(f, "on-violation"),
            RefineMode::Always => write!(f, "always"),
            RefineMode::EveryK { k } => write!(f, "every-{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub slots: usize,
    pub ues: usize,
    /// `(slot, m)` pairs; the first must be at slot 0.
    pub uav_schedule: Vec<(usize, usize)>,
    pub refine: RefineMode,
    pub train_per_slot: usize,
    /// LTS budget used to refine the agent's actions.
    pub refine_search: TabooConfig,
    pub domain: AllocationDomain,
    /// Redraw unit-mean fading on every slot.
    pub fading: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            slots: 100,
            ues: 10,
            uav_schedule: vec![(0, 2)],
            refine: RefineMode::Always,
            train_per_slot: 1,
            refine_search: TabooConfig::default(),
            domain: AllocationDomain::default(),
            fading: false,
        }
    }
}

/// Parses `"0:3,1000:4,1500:3"`.
pub fn parse_uav_schedule(text: &str) -> Result<Vec<(usize, usize)>> {
    text.split(',')
        .map(|part| {
            let (slot, m) = part
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("schedule entry {part:?} is not slot:count")))?;
            let parse = |v: &str| {
                v.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad number {v:?} in schedule")))
            };
            Ok((parse(slot)?, parse(m)?))
        })
        .collect()
}

impl EpisodeConfig {
    pub fn validate(&self, max_uavs: usize) -> Result<()> {
        let Some(&(first, _)) = self.uav_schedule.first() else {
            return Err(Error::Config("uav_schedule is empty".into()));
        };
        if first != 0 {
            return Err(Error::Config("uav_schedule must start at slot 0".into()));
        }
        if self.uav_schedule.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Config("uav_schedule slots must be strictly increasing".into()));
        }
        for &(_, m) in &self.uav_schedule {
            if m == 0 || m > max_uavs || m > self.ues {
                return Err(Error::Config(format!(
                    "UAV count {m} outside [1, {}]",
                    max_uavs.min(self.ues)
                )));
            }
        }
        if self.ues == 0 {
            return Err(Error::Config("at least one UE is required".into()));
        }
        if let RefineMode::EveryK { k: 0 } = self.refine {
            return Err(Error::Config("every-k needs k >= 1".into()));
        }
        Ok(())
    }

    fn uavs_at(&self, slot: usize) -> usize {
        self.uav_schedule.iter().take_while(|&&(s, _)| s <= slot).last().map_or(1, |&(_, m)| m)
    }
}

/// Budgets of the search baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub taboo: TabooConfig,
    pub anneal: AnnealConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { taboo: TabooConfig { max_iter: 90, ..TabooConfig::default() }, anneal: AnnealConfig::default() }
    }
}

/// Everything a run needs besides the method and the seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment {
    pub scenario: ScenarioConfig,
    pub agent: AgentConfig,
    pub episode: EpisodeConfig,
    pub baselines: BaselineConfig,
}

impl Experiment {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.agent.validate()?;
        self.episode.validate(self.scenario.max_uavs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Multi-task agent refined by LTS.
    Fres,
    /// Same loop with the single-head, squared-error agent.
    FresSingle,
    Random,
    Local,
    Remote,
    Ts,
    Lts,
    Sa,
    Asa,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Fres,
        Method::FresSingle,
        Method::Random,
        Method::Local,
        Method::Remote,
        Method::Ts,
        Method::Lts,
        Method::Sa,
        Method::Asa,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Fres => "fres",
            Method::FresSingle => "fres-single",
            Method::Random => "random",
            Method::Local => "local",
            Method::Remote => "remote",
            Method::Ts => "ts",
            Method::Lts => "lts",
            Method::Sa => "sa",
            Method::Asa => "asa",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub m: usize,
    pub local_j: f64,
    pub transmit_j: f64,
    pub remote_j: f64,
    /// Unweighted hover energy summed over active UAVs.
    pub hover_j: f64,
    pub total_j: f64,
    /// `1 / total_j`.
    pub reward: f64,
    /// Energy of the agent's own (finalized) action; equals `total_j` for
    /// methods without an agent.
    pub agent_total_j: f64,
    pub agent_reward: f64,
    pub offloaded: usize,
    pub refined: bool,
    pub trained: bool,
    pub l_ce: f64,
    pub l_mse: f64,
    pub l_mt: f64,
    pub evaluations: usize,
    /// Constraint violations of the executed schedule.
    pub violations: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reconfiguration {
    pub slot: usize,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub method: Method,
    pub seed: u64,
    pub records: Vec<SlotRecord>,
    /// Schedule actually executed in every slot.
    pub executed: Vec<Schedule>,
    pub reconfigurations: Vec<Reconfiguration>,
    pub placements: usize,
    pub channel_builds: usize,
    /// Search trace of the first slot, if the method searches.
    pub first_trace: Vec<TracePoint>,
    pub agent: Option<MultiTaskAgent>,
    pub pool: Option<ReplayPool>,
}

fn reward_of(total: f64) -> f64 {
    if total > 0.0 && total.is_finite() {
        1.0 / total
    } else {
        0.0
    }
}

fn violation_count(scenario: &Scenario, x: &Schedule) -> usize {
    let r = check_constraints(scenario, None, x);
    r.invalid_association.len() + r.invalid_allocation.len() + r.local_cap.len() + r.uav_cap.len()
}

/// Nearest active UAV by 3-D distance, lowest index on ties (1-based).
pub fn nearest_uav(scenario: &Scenario, ue: usize) -> usize {
    let p = &scenario.ues[ue].position;
    let mut best = 1;
    let mut best_d = f64::INFINITY;
    for (j, q) in scenario.active_uavs().iter().enumerate() {
        let d = distance(p, q);
        if d < best_d {
            best_d = d;
            best = j + 1;
        }
    }
    best
}

/// Baseline schedule with the minimal requested allocation, so that
/// finalization lands every UE exactly on its deadline floor.
fn floor_schedule(association: Vec<usize>) -> Schedule {
    let n = association.len();
    Schedule { association, allocation: vec![MIN_FRACTION; n] }
}

struct World {
    scenario: Scenario,
    channels: ChannelSet,
    base_channels: ChannelSet,
    placements: usize,
    channel_builds: usize,
}

impl World {
    fn new(exp: &Experiment, seed: u64) -> Result<Self> {
        let m0 = exp.episode.uav_schedule[0].1;
        let scenario = generate_scenario(seed, exp.episode.ues, m0, &exp.scenario)?;
        let base_channels = ChannelSet::build(&scenario)?;
        Ok(Self { channels: base_channels.clone(), base_channels, scenario, placements: 1, channel_builds: 1 })
    }

    fn redeploy(&mut self, exp: &Experiment, m: usize) -> Result<()> {
        let positions: Vec<_> = self.scenario.ues.iter().map(|u| u.position).collect();
        let cfg = &exp.scenario;
        self.scenario.uavs = place_uavs(&positions, m, cfg.uav_altitude_m, &cfg.placement, self.scenario.rng_seed)?;
        self.scenario.active_uav_count = m;
        self.placements += 1;
        self.base_channels = ChannelSet::build(&self.scenario)?;
        self.channel_builds += 1;
        self.channels = self.base_channels.clone();
        Ok(())
    }
}

/// Runs `method` for one seed.
pub fn run(method: Method, exp: &Experiment, seed: u64) -> Result<EpisodeOutcome> {
    exp.validate()?;
    let ep = &exp.episode;
    let mut world = World::new(exp, seed)?;
    let mut task_rng = ChaCha8Rng::seed_from_u64(seed);
    task_rng.set_stream(TASK_STREAM);
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    init_rng.set_stream(INIT_STREAM);
    let mut train_rng = ChaCha8Rng::seed_from_u64(seed);
    train_rng.set_stream(TRAIN_STREAM);

    let m0 = ep.uav_schedule[0].1;
    let mut learner = match method {
        Method::Fres | Method::FresSingle => {
            let mut cfg = exp.agent.clone();
            cfg.max_uavs = exp.scenario.max_uavs;
            cfg.seed = sub_seed(seed, AGENT_STREAM, cfg.seed);
            if method == Method::FresSingle {
                cfg.variant = AgentVariant::SingleTask;
            }
            let pool = ReplayPool::new(cfg.buffer_capacity);
            let mut agent = MultiTaskAgent::new(cfg, m0)?;
            let mut pool = pool;
            agent.progressive_adjust(m0, &mut pool)?;
            Some((agent, pool))
        }
        _ => None,
    };

    let mut records = Vec::with_capacity(ep.slots);
    let mut executed_log = Vec::with_capacity(ep.slots);
    let mut reconfigurations = Vec::new();
    let mut first_trace = Vec::new();
    for slot in 0..ep.slots {
        let started = Instant::now();
        let m = ep.uavs_at(slot);
        if m != world.scenario.active_uav_count {
            reconfigurations.push(Reconfiguration { slot, from: world.scenario.active_uav_count, to: m });
            if let Some((agent, pool)) = learner.as_mut() {
                agent.progressive_adjust(m, pool)?;
            }
            world.redeploy(exp, m)?;
        }
        world.scenario.resample_tasks(&mut task_rng);
        if ep.fading {
            world.channels =
                world.base_channels.with_fading(sub_seed(seed, FADING_STREAM, slot as u64), &world.scenario.constants);
        }
        let scenario = &world.scenario;
        let channels = &world.channels;
        let problem = SearchProblem::new(scenario, channels, ep.domain);
        let n = scenario.n_ues();
        let search_seed = sub_seed(seed, SEARCH_STREAM, slot as u64);

        let mut refined = false;
        let mut trained = false;
        let mut losses: Option<TrainReport> = None;
        let mut evaluations = 0;
        let mut trace = Vec::new();
        let mut agent_energy = None;

        let executed = match method {
            Method::Local => finalize_allocation(scenario, channels, &floor_schedule(vec![0; n])),
            Method::Remote => {
                let assoc = (0..n).map(|i| nearest_uav(scenario, i)).collect();
                finalize_allocation(scenario, channels, &floor_schedule(assoc))
            }
            Method::Random => {
                let assoc = (0..n).map(|_| init_rng.gen_range(0..=m)).collect();
                finalize_allocation(scenario, channels, &floor_schedule(assoc))
            }
            Method::Ts | Method::Lts | Method::Sa | Method::Asa => {
                let assoc = (0..n).map(|_| init_rng.gen_range(0..=m)).collect();
                let x0 = problem.with_default_allocation(assoc);
                let result = match method {
                    Method::Ts => ts(&problem, &x0, &TabooConfig { seed: search_seed, ..exp.baselines.taboo }),
                    Method::Lts => lts(&problem, &x0, &TabooConfig { seed: search_seed, ..exp.baselines.taboo }),
                    Method::Sa => sa(&problem, &x0, &AnnealConfig { seed: search_seed, ..exp.baselines.anneal }),
                    _ => asa(&problem, &x0, &AnnealConfig { seed: search_seed, ..exp.baselines.anneal }),
                };
                evaluations = result.evaluations;
                trace = result.trace;
                result.best
            }
            Method::Fres | Method::FresSingle => {
                let (agent, pool) = learner.as_mut().expect("agent exists for learning methods");
                let states: Vec<_> =
                    (0..n).map(|i| encode_state(scenario, channels, i, &agent.config.gain_range)).collect();
                let actions: Vec<AgentAction> = {
                    let agent = &*agent;
                    states.par_iter().map(|s| agent.infer(s, m)).collect::<Result<_>>()?
                };
                let raw = Schedule {
                    association: actions.iter().map(|a| a.association).collect(),
                    allocation: actions.iter().map(|a| a.fraction).collect(),
                };
                let agent_exec = finalize_allocation(scenario, channels, &raw);
                agent_energy = Some(problem.evaluate(&raw));
                let refine = match ep.refine {
                    RefineMode::Always => true,
                    RefineMode::EveryK { k } => slot % k == 0,
                    RefineMode::OnViolation => !check_constraints(scenario, Some(channels), &raw).is_feasible(),
                };
                if refine {
                    refined = true;
                    let result = lts(&problem, &raw, &TabooConfig { seed: search_seed, ..ep.refine_search });
                    evaluations = result.evaluations;
                    trace = result.trace;
                    for (i, state) in states.into_iter().enumerate() {
                        let label = AgentAction {
                            association: result.best.association[i],
                            fraction: result.best.allocation[i].clamp(MIN_FRACTION, 1.0),
                        };
                        pool.store(m, state, label);
                    }
                    for _ in 0..ep.train_per_slot {
                        if let Some(report) = agent.train_step(pool, &mut train_rng)? {
                            trained = true;
                            losses = Some(report);
                        }
                    }
                    result.best
                } else {
                    agent_exec
                }
            }
        };

        let breakdown = total_energy(scenario, &executed, channels);
        let (local_j, transmit_j, remote_j, hover_j, total_j) = match &breakdown {
            Ok(b) => (b.local_sum(), b.transmit_sum(), b.remote_sum(), b.hover_sum(), b.total_j),
            Err(_) => (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::INFINITY),
        };
        let agent_total_j = agent_energy.unwrap_or(total_j);
        if slot == 0 {
            first_trace = trace;
        }
        records.push(SlotRecord {
            slot,
            m,
            local_j,
            transmit_j,
            remote_j,
            hover_j,
            total_j,
            reward: reward_of(total_j),
            agent_total_j,
            agent_reward: reward_of(agent_total_j),
            offloaded: executed.association.iter().filter(|&&a| a > 0).count(),
            refined,
            trained,
            l_ce: losses.map_or(f64::NAN, |l| l.l_ce),
            l_mse: losses.map_or(f64::NAN, |l| l.l_mse),
            l_mt: losses.map_or(f64::NAN, |l| l.l_mt),
            evaluations,
            violations: violation_count(scenario, &executed),
            wall_time_s: started.elapsed().as_secs_f64(),
        });
        executed_log.push(executed);
    }

    let (agent, pool) = match learner {
        Some((a, p)) => (Some(a), Some(p)),
        None => (None, None),
    };
    Ok(EpisodeOutcome {
        method,
        seed,
        records,
        executed: executed_log,
        reconfigurations,
        placements: world.placements,
        channel_builds: world.channel_builds,
        first_trace,
        agent,
        pool,
    })
}

/// Runs every seed in parallel; results keep the order of `seeds`.
pub fn run_seeds(method: Method, exp: &Experiment, seeds: &[u64]) -> Result<Vec<EpisodeOutcome>> {
    seeds.par_iter().map(|&s| run(method, exp, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::LatencyModel;

    fn small(slots: usize) -> Experiment {
        let mut exp = Experiment { scenario: ScenarioConfig::desk(), ..Default::default() };
        exp.episode.slots = slots;
        exp.episode.ues = 4;
        exp.agent.batch_size = 8;
        exp.agent.shared_widths = vec![8, 8];
        exp.agent.head_widths = vec![4];
        exp.agent.single_task_widths = vec![8, 8, 8];
        exp.agent.growth_units = 2;
        exp.baselines.taboo.max_iter = 5;
        exp
    }

    #[test]
    fn refine_mode_parsing() {
        for text in ["on-violation", "always", "every-3"] {
            assert_eq!(text.parse::<RefineMode>().unwrap().to_string(), text);
        }
        assert!("every-0".parse::<RefineMode>().is_err());
        assert!("sometimes".parse::<RefineMode>().is_err());
    }

    #[test]
    fn schedule_parsing_and_validation() {
        let s = parse_uav_schedule("0:3,1000:4,1500:3").unwrap();
        assert_eq!(s, vec![(0, 3), (1000, 4), (1500, 3)]);
        assert!(parse_uav_schedule("0-3").is_err());
        let mut ep = EpisodeConfig { uav_schedule: s, ..Default::default() };
        assert!(ep.validate(5).is_ok());
        assert_eq!(ep.uavs_at(999), 3);
        assert_eq!(ep.uavs_at(1000), 4);
        assert_eq!(ep.uavs_at(5000), 3);
        ep.uav_schedule = vec![(0, 2), (5, 3), (5, 2)];
        assert!(ep.validate(5).is_err());
        ep.uav_schedule = vec![(1, 2)];
        assert!(ep.validate(5).is_err());
        ep.uav_schedule = vec![(0, 6)];
        assert!(ep.validate(5).is_err());
    }

    #[test]
    fn empty_episode() {
        for method in Method::ALL {
            let out = run(method, &small(0), 1).unwrap();
            assert!(out.records.is_empty());
        }
    }

    #[test]
    fn local_baseline_spends_nothing_remotely() {
        let out = run(Method::Local, &small(3), 2).unwrap();
        for r in &out.records {
            assert_eq!((r.transmit_j, r.remote_j, r.hover_j), (0.0, 0.0, 0.0));
            assert_eq!(r.reward, 1.0 / r.total_j);
        }
    }

    #[test]
    fn remote_with_one_uav_offloads_everyone() {
        let mut exp = small(2);
        exp.episode.uav_schedule = vec![(0, 1)];
        let out = run(Method::Remote, &exp, 3).unwrap();
        assert!(out.records.iter().all(|r| r.offloaded == 4));
    }

    #[test]
    fn deterministic_per_seed() {
        let exp = small(4);
        for method in [Method::Random, Method::Lts, Method::Fres] {
            let a = run(method, &exp, 5).unwrap();
            let b = run(method, &exp, 5).unwrap();
            assert_eq!(records_to_csv(&a.records), records_to_csv(&b.records));
        }
    }

    #[test]
    fn on_violation_with_feasible_agent_never_trains() {
        let mut exp = small(5);
        exp.episode.ues = 1;
        exp.episode.uav_schedule = vec![(0, 1)];
        exp.episode.refine = RefineMode::OnViolation;
        exp.scenario.latency = LatencyModel::FixedLocalMax;
        let out = run(Method::Fres, &exp, 6).unwrap();
        assert!(out.records.iter().all(|r| !r.refined && !r.trained));
        assert_eq!(out.pool.unwrap().sizes().values().sum::<usize>(), 0);
    }

    #[test]
    fn uav_change_triggers_one_redeploy_each() {
        let mut exp = small(6);
        exp.episode.uav_schedule = vec![(0, 2), (2, 3), (4, 2)];
        let out = run(Method::Fres, &exp, 7).unwrap();
        assert_eq!(out.reconfigurations.len(), 2);
        assert_eq!(out.placements, 3);
        assert_eq!(out.channel_builds, 3);
        let ms: Vec<usize> = out.records.iter().map(|r| r.m).collect();
        assert_eq!(ms, vec![2, 2, 3, 3, 2, 2]);
        let agent = out.agent.unwrap();
        assert_eq!(agent.active_uavs(), 2);
        assert_eq!(agent.built_uavs(), 3);
        assert!(out.records.iter().all(|r| r.violations == 0));
    }

    #[test]
    fn seeds_run_in_order() {
        let exp = small(2);
        let outs = run_seeds(Method::Random, &exp, &[3, 1, 2]).unwrap();
        let seeds: Vec<u64> = outs.iter().map(|o| o.seed).collect();
        assert_eq!(seeds, vec![3, 1, 2]);
        assert_eq!(records_to_csv(&outs[1].records), records_to_csv(&run(Method::Random, &exp, 1).unwrap().records));
    }
}
