//! Self-checks run by `fres oracle-check`: QPB against enumeration, LTS
//! against the exhaustive optimum and back-propagation against finite
//! differences.

use std::f64::consts::TAU;

use anyhow::{bail, Result};
use fres_core::channel::{irs_uav_channel, qpb_phase, ue_irs_channel, ChannelSet};
use fres_core::env::{generate_scenario, PhysicalConstants, Position3D, ScenarioConfig};
use fres_core::nn::{batch_backward, Activation, HeadSpec, HeadTarget, Network, NetworkSpec};
use fres_core::search::{exhaustive_oracle, lts, AllocationDomain, SearchProblem, TabooConfig, ORACLE_BUDGET};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::OracleConfig;

/// Relative gap below which a search result counts as the optimum.
const EXACT_RTOL: f64 = 1e-9;
const QPB_RTOL: f64 = 1e-9;
const LTS_MAX_GAP: f64 = 0.01;
/// Share of LTS instances that must hit the optimum exactly.
const LTS_EXACT_SHARE: f64 = 0.9;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub cases: usize,
    pub failures: usize,
    pub worst_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub pass: bool,
    pub checks: Vec<CheckResult>,
}

/// Test hooks for negative controls.
#[derive(Debug, Clone, Copy, Default)]
pub struct Faults {
    /// Perturb every analytic gradient entry before comparing.
    pub corrupt_gradient: bool,
}

fn instance_shape(idx: usize, cfg: &OracleConfig) -> (usize, usize) {
    let ues = 2.min(cfg.max_ues) + idx % (cfg.max_ues.saturating_sub(2) + 1);
    let uavs = 1 + (idx / 2) % cfg.max_uavs;
    (ues, uavs.min(ues))
}

/// Fails before any work when the largest instance exceeds the oracle budget.
pub fn check_budget(cfg: &OracleConfig) -> Result<()> {
    if cfg.max_ues == 0 || cfg.max_uavs == 0 || cfg.grid_levels == 0 {
        bail!("oracle limits must be >= 1");
    }
    let per_ue = ((cfg.max_uavs + 1) * cfg.grid_levels) as u128;
    let mut total: u128 = 1;
    for _ in 0..cfg.max_ues {
        total = total.saturating_mul(per_ue);
        if total > ORACLE_BUDGET {
            bail!(
                "budget exceeded: {} UEs x {} UAVs x {} levels needs more than {ORACLE_BUDGET} evaluations",
                cfg.max_ues,
                cfg.max_uavs,
                cfg.grid_levels
            );
        }
    }
    Ok(())
}

pub fn run_checks(cfg: &OracleConfig, scenario: &ScenarioConfig, faults: Faults) -> Result<OracleReport> {
    check_budget(cfg)?;
    let checks = vec![qpb_check(cfg), lts_check(cfg, scenario)?, gradient_check(cfg, faults)];
    Ok(OracleReport { pass: checks.iter().all(|c| c.pass), checks })
}

fn qpb_check(cfg: &OracleConfig) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..cfg.qpb_geometries {
        let c = PhysicalConstants {
            elements_per_irs: rng.gen_range(1..=cfg.qpb_max_elements.max(1)),
            phase_levels: rng.gen_range(1..=cfg.qpb_max_levels.max(1)),
            ..PhysicalConstants::default()
        };
        let mut pos = |z: f64| Position3D::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0), z);
        let (ue, irs, uav) = (pos(0.0), pos(15.0), pos(30.0));
        let (Ok(h_ur), Ok(h_rv)) = (ue_irs_channel(&ue, &irs, &c), irs_uav_channel(&irs, &uav, &c)) else {
            continue;
        };
        let amp2 = (h_ur.amplitude * h_rv.amplitude).powi(2);
        let gain = |thetas: &[f64]| {
            let (mut re, mut im) = (0.0, 0.0);
            for (k, t) in thetas.iter().enumerate() {
                let phi = h_ur.phases[k] + t + h_rv.phases[k];
                re += phi.cos();
                im += phi.sin();
            }
            amp2 * (re * re + im * im)
        };
        let (k, n_p) = (c.elements_per_irs, c.phase_levels);
        let mut best = 0.0f64;
        let mut thetas = vec![0.0; k];
        for code in 0..n_p.pow(k as u32) {
            let mut rest = code;
            for t in thetas.iter_mut() {
                *t = TAU * (rest % n_p) as f64 / n_p as f64;
                rest /= n_p;
            }
            best = best.max(gain(&thetas));
        }
        let got = gain(&qpb_phase(&h_ur, &h_rv, n_p).thetas);
        let rel = (best - got).abs() / best;
        worst = worst.max(rel);
        if rel > QPB_RTOL {
            failures += 1;
        }
    }
    CheckResult {
        name: "qpb_enumeration",
        pass: failures == 0,
        cases: cfg.qpb_geometries,
        failures,
        worst_rel_error: worst,
    }
}

fn lts_check(cfg: &OracleConfig, scenario: &ScenarioConfig) -> Result<CheckResult> {
    let domain = AllocationDomain::Grid { levels: cfg.grid_levels };
    let mut worst = 0.0f64;
    let mut inexact = 0;
    for idx in 0..cfg.lts_instances {
        let seed = cfg.seed + idx as u64;
        let (n, m) = instance_shape(idx, cfg);
        let s = generate_scenario(seed, n, m, scenario)?;
        let c = ChannelSet::build(&s)?;
        let p = SearchProblem::new(&s, &c, domain);
        let oracle = exhaustive_oracle(&p, cfg.grid_levels)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = p.with_default_allocation((0..n).map(|_| rng.gen_range(0..=m)).collect());
        let r = lts(&p, &x0, &TabooConfig { max_iter: cfg.lts_max_iter, seed, ..TabooConfig::default() });
        let rel = (r.energy - oracle.energy) / oracle.energy;
        worst = worst.max(rel);
        if rel > EXACT_RTOL {
            inexact += 1;
        }
    }
    let exact = cfg.lts_instances - inexact;
    let pass = worst <= LTS_MAX_GAP && exact as f64 >= LTS_EXACT_SHARE * cfg.lts_instances as f64;
    Ok(CheckResult { name: "lts_vs_oracle", pass, cases: cfg.lts_instances, failures: inexact, worst_rel_error: worst })
}

fn random_network(rng: &mut ChaCha8Rng, seed: u64) -> Result<Network> {
    let inputs = rng.gen_range(2..=5);
    let trunk: Vec<usize> = (0..rng.gen_range(1..=2)).map(|_| rng.gen_range(3..=8)).collect();
    let classes = rng.gen_range(2..=4);
    let spec = NetworkSpec {
        inputs,
        trunk,
        heads: vec![
            HeadSpec { hidden: vec![rng.gen_range(2..=5)], outputs: classes, activation: Activation::Softmax },
            HeadSpec { hidden: vec![rng.gen_range(2..=5)], outputs: 1, activation: Activation::Sigmoid },
        ],
        growth_units: rng.gen_range(1..=3),
        max_slices: 2,
        growth_init_scale: 1.0,
    };
    let mut net = Network::new(spec, seed)?;
    if rng.gen_bool(0.5) {
        net.grow(1)?;
    }
    net.head_valid[0] = rng.gen_range(2..=classes);
    Ok(net)
}

fn gradient_check(cfg: &OracleConfig, faults: Faults) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let h = 1e-4;
    let mut worst = 0.0f64;
    let mut failures = 0;
    let mut draws = 0;
    let mut attempts = 0u64;
    while draws < cfg.gradient_draws {
        attempts += 1;
        let Ok(net) = random_network(&mut rng, attempts) else {
            continue;
        };
        let batch = rng.gen_range(1..=4);
        let inputs: Vec<Vec<f64>> =
            (0..batch).map(|_| (0..net.input_width()).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let targets: Vec<Vec<HeadTarget>> = (0..batch)
            .map(|_| {
                vec![
                    HeadTarget::Class(rng.gen_range(0..net.head_valid[0])),
                    HeadTarget::Values(vec![rng.gen_range(0.0..1.0)]),
                ]
            })
            .collect();
        let xi = rng.gen_range(0.0..2.0);

        // finite differences straddling a ReLU kink are meaningless
        let near_kink = inputs.iter().any(|x| {
            net.forward(x).is_ok_and(|fwd| {
                fwd.pre_activations().iter().zip(net.layers()).any(|(z, layer)| {
                    layer.activation == Activation::Relu && z[..layer.active_out()].iter().any(|v| v.abs() < 1e-2)
                })
            })
        });
        if near_kink {
            continue;
        }
        let Ok(loss) = batch_backward(&net, &inputs, &targets, xi) else {
            continue;
        };
        let mut analytic = loss.grads.flatten();
        if faults.corrupt_gradient {
            for g in &mut analytic {
                *g = *g * 1.01 + 1e-3;
            }
        }

        let params = net.flat_params();
        let mut probe = net.clone();
        let mut loss_at = |p: usize, value: f64| {
            let mut shifted = params.clone();
            shifted[p] = value;
            if probe.set_flat_params(&shifted).is_err() {
                return f64::NAN;
            }
            batch_backward(&probe, &inputs, &targets, xi).map_or(f64::NAN, |l| l.total)
        };
        let mut draw_worst = 0.0f64;
        for (p, &a) in analytic.iter().enumerate() {
            let mut d = |step: f64| (loss_at(p, params[p] + step) - loss_at(p, params[p] - step)) / (2.0 * step);
            let numeric = (4.0 * d(h / 2.0) - d(h)) / 3.0;
            let scale = a.abs().max(numeric.abs()).max(1e-7);
            let rel = (a - numeric).abs() / scale;
            draw_worst = if rel.is_nan() { f64::INFINITY } else { draw_worst.max(rel) };
        }
        if draw_worst >= cfg.gradient_tolerance {
            failures += 1;
        }
        worst = worst.max(draw_worst);
        draws += 1;
    }
    CheckResult {
        name: "gradient",
        pass: failures == 0,
        cases: cfg.gradient_draws,
        failures,
        worst_rel_error: worst,
    }
}
