//! Cascaded UE→IRS→UAV channels and quantized passive beamforming (QPB).
//!
//! Each IRS is a uniform linear array of `K` elements. Element `k` (0-based)
//! of a link contributes the propagation phase `-(2π/λ)·k·d·φ`, where `φ` is
//! the direction cosine `|Δx| / distance`. The per-element phase shifts of
//! the IRS are drawn from `Ψ = {2πi/N_p}`; [`qpb_phase`] picks them so that
//! the reflected contributions add as coherently as the grid allows.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{distance, PhysicalConstants, Position3D, Scenario};
use crate::{Error, Result};

/// Distances below this are treated as coincident points.
const MIN_DISTANCE_M: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringVector {
    /// `sqrt(ε / d^exponent)`.
    pub amplitude: f64,
    /// Per-element propagation phase in radians.
    pub phases: Vec<f64>,
}

impl SteeringVector {
    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMatrix {
    /// Diagonal phase shifts in `[0, 2π)`.
    pub thetas: Vec<f64>,
}

fn steering(from: &Position3D, to: &Position3D, exponent: f64, c: &PhysicalConstants) -> Result<SteeringVector> {
    let dist = distance(from, to);
    if dist < MIN_DISTANCE_M {
        return Err(Error::DegenerateGeometry(format!(
            "coincident endpoints at ({}, {}, {})",
            from.x, from.y, from.z
        )));
    }
    let amplitude = (c.epsilon_ref_loss / dist.powf(exponent)).sqrt();
    let cosine = (from.x - to.x).abs() / dist;
    let step = -TAU / c.carrier_wavelength_m * c.element_spacing_m * cosine;
    let phases = (0..c.elements_per_irs).map(|k| step * k as f64).collect();
    Ok(SteeringVector { amplitude, phases })
}

/// UE→IRS response with path-loss exponent `alpha_ue_irs`.
pub fn ue_irs_channel(ue: &Position3D, irs: &Position3D, c: &PhysicalConstants) -> Result<SteeringVector> {
    steering(ue, irs, c.alpha_ue_irs, c)
}

/// IRS→UAV response with free-space exponent 2.
pub fn irs_uav_channel(irs: &Position3D, uav: &Position3D, c: &PhysicalConstants) -> Result<SteeringVector> {
    steering(irs, uav, 2.0, c)
}

/// `|Σ_k a_UR·a_RV·e^{j(ψ^UR_k + θ_k + ψ^RV_k)}|²`.
pub fn cascaded_gain(h_ur: &SteeringVector, theta: &PhaseMatrix, h_rv: &SteeringVector) -> Result<f64> {
    let k = h_ur.len();
    if h_rv.len() != k || theta.thetas.len() != k {
        return Err(Error::Shape(format!(
            "element counts differ: UE-IRS {k}, phases {}, IRS-UAV {}",
            theta.thetas.len(),
            h_rv.len()
        )));
    }
    let sum: Complex64 = (0..k)
        .map(|i| Complex64::from_polar(1.0, h_ur.phases[i] + theta.thetas[i] + h_rv.phases[i]))
        .sum();
    let amp = h_ur.amplitude * h_rv.amplitude;
    Ok(amp * amp * sum.norm_sqr())
}

fn wrap_phase(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Nearest level of `Ψ = {2πi/n_p}` to `target` on the circle; ties go to
/// the smaller level.
pub fn quantize_phase(target: f64, n_p: usize) -> f64 {
    let n_p = n_p.max(1);
    let x = wrap_phase(target) * n_p as f64 / TAU;
    let lower = (x.floor() as usize).min(n_p - 1);
    let upper = (lower + 1) % n_p;
    let level = |i: usize| TAU * i as f64 / n_p as f64;
    let d_lo = circular_distance(level(lower), target);
    let d_hi = circular_distance(level(upper), target);
    let pick = if d_hi < d_lo || (d_hi == d_lo && upper < lower) { upper } else { lower };
    level(pick)
}

/// Compensating phase targets `ω^UR_k + ω^RV_k`, each term wrapped to
/// `[0, 2π)`.
fn compensation_targets(h_ur: &SteeringVector, h_rv: &SteeringVector) -> Vec<f64> {
    h_ur.phases
        .iter()
        .zip(&h_rv.phases)
        .map(|(&ur, &rv)| wrap_phase(-ur) + wrap_phase(-rv))
        .collect()
}

/// Element-wise rounding of the compensating phases onto the grid.
pub fn qpb_per_element(h_ur: &SteeringVector, h_rv: &SteeringVector, n_p: usize) -> PhaseMatrix {
    let thetas = compensation_targets(h_ur, h_rv)
        .into_iter()
        .map(|t| quantize_phase(t, n_p))
        .collect();
    PhaseMatrix { thetas }
}

/// Quantized passive beamforming.
///
/// Rounds every element's compensating phase onto `Ψ` relative to a common
/// reference phase `μ`. `μ = 0` is the plain element-wise rule; the other
/// candidates are one point inside each interval between the `K·N_p`
/// rounding breakpoints, which is enough to reach the best achievable
/// `|Σ e^{j(·)}|` over `Ψ^K`. The element-wise result is kept unless another
/// reference is strictly better.
pub fn qpb_phase(h_ur: &SteeringVector, h_rv: &SteeringVector, n_p: usize) -> PhaseMatrix {
    let n_p = n_p.max(1);
    let base = qpb_per_element(h_ur, h_rv, n_p);
    if n_p == 1 || h_ur.len() <= 1 || h_ur.len() != h_rv.len() {
        return base;
    }
    let targets = compensation_targets(h_ur, h_rv);
    let coherence = |thetas: &[f64]| -> f64 {
        let s: Complex64 = (0..thetas.len())
            .map(|k| Complex64::from_polar(1.0, h_ur.phases[k] + thetas[k] + h_rv.phases[k]))
            .sum();
        s.norm_sqr()
    };

    let half_step = std::f64::consts::PI / n_p as f64;
    let mut breakpoints: Vec<f64> = targets
        .iter()
        .flat_map(|&t| (0..n_p).map(move |i| wrap_phase((2 * i + 1) as f64 * half_step - t)))
        .collect();
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();

    let mut best = base.thetas.clone();
    let mut best_value = coherence(&best);
    let mut candidate = vec![0.0; targets.len()];
    for (idx, &lo) in breakpoints.iter().enumerate() {
        let hi = breakpoints.get(idx + 1).copied().unwrap_or(breakpoints[0] + TAU);
        let mu = 0.5 * (lo + hi);
        for (slot, &t) in candidate.iter_mut().zip(&targets) {
            *slot = quantize_phase(t + mu, n_p);
        }
        let value = coherence(&candidate);
        if value > best_value * (1.0 + 1e-12) {
            best_value = value;
            best.copy_from_slice(&candidate);
        }
    }
    PhaseMatrix { thetas: best }
}

/// Index of the IRS with the largest ideal coherent gain
/// `K²·(ε/d_UR^α)·(ε/d_RV²)`; ties go to the lowest index.
pub fn select_irs(ue: &Position3D, uav: &Position3D, irss: &[Position3D], c: &PhysicalConstants) -> Result<usize> {
    let k2 = (c.elements_per_irs * c.elements_per_irs) as f64;
    let mut best: Option<(usize, f64)> = None;
    for (l, irs) in irss.iter().enumerate() {
        let d_ur = distance(ue, irs);
        let d_rv = distance(irs, uav);
        if d_ur < MIN_DISTANCE_M || d_rv < MIN_DISTANCE_M {
            continue;
        }
        let score = k2 * (c.epsilon_ref_loss / d_ur.powf(c.alpha_ue_irs)) * (c.epsilon_ref_loss / (d_rv * d_rv));
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((l, score));
        }
    }
    best.map(|(l, _)| l)
        .ok_or_else(|| Error::DegenerateGeometry("no usable IRS for this UE/UAV pair".into()))
}

/// `B·log2(1 + P·gain/σ²)` in bit/s.
pub fn data_rate(effective_gain: f64, c: &PhysicalConstants) -> f64 {
    c.bandwidth_hz * (1.0 + c.tx_power_w * effective_gain / c.noise_power_w).log2()
}

/// One reflected UE→UAV link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub irs: usize,
    pub phases: PhaseMatrix,
    /// Linear power gain after beamforming.
    pub gain: f64,
    pub rate_bps: f64,
}

/// Links for every (UE, active UAV) pair, indexed `[ue][uav - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    links: Vec<Vec<Link>>,
}

impl ChannelSet {
    pub fn build(scenario: &Scenario) -> Result<Self> {
        let c = &scenario.constants;
        let links = scenario
            .ues
            .iter()
            .map(|ue| {
                scenario
                    .active_uavs()
                    .iter()
                    .map(|uav| {
                        let irs = select_irs(&ue.position, uav, &scenario.irss, c)?;
                        let h_ur = ue_irs_channel(&ue.position, &scenario.irss[irs], c)?;
                        let h_rv = irs_uav_channel(&scenario.irss[irs], uav, c)?;
                        let phases = qpb_phase(&h_ur, &h_rv, c.phase_levels);
                        let gain = cascaded_gain(&h_ur, &phases, &h_rv)?;
                        Ok(Link { irs, phases, gain, rate_bps: data_rate(gain, c) })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { links })
    }

    pub fn n_ues(&self) -> usize {
        self.links.len()
    }

    pub fn n_uavs(&self) -> usize {
        self.links.first().map_or(0, Vec::len)
    }

    pub fn link(&self, ue: usize, uav_index: usize) -> &Link {
        &self.links[ue][uav_index]
    }

    /// Gain towards the UAV at 0-based `uav_index`.
    pub fn gain(&self, ue: usize, uav_index: usize) -> f64 {
        self.links[ue][uav_index].gain
    }

    pub fn rate(&self, ue: usize, uav_index: usize) -> f64 {
        self.links[ue][uav_index].rate_bps
    }

    /// 1-based UAV with the highest gain for `ue` among the first `m`;
    /// ties go to the lowest index.
    pub fn best_uav(&self, ue: usize, m: usize) -> usize {
        let mut best = 0;
        for j in 1..m.min(self.n_uavs()) {
            if self.links[ue][j].gain > self.links[ue][best].gain {
                best = j;
            }
        }
        best + 1
    }

    /// Copy with every gain scaled by an independent unit-mean exponential
    /// (Rayleigh power) factor.
    pub fn with_fading(&self, seed: u64, c: &PhysicalConstants) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let links = self
            .links
            .iter()
            .map(|row| {
                row.iter()
                    .map(|link| {
                        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                        let gain = link.gain * -u.ln();
                        Link { gain, rate_bps: data_rate(gain, c), ..link.clone() }
                    })
                    .collect()
            })
            .collect();
        Self { links }
    }

    /// Debug export: gains in dB, phases in radians.
    pub fn to_debug_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Entry<'a> {
            ue: usize,
            uav: usize,
            irs: usize,
            gain_db: f64,
            rate_bps: f64,
            phases_rad: &'a [f64],
        }
        let entries: Vec<Entry> = self
            .links
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.iter().enumerate().map(move |(j, l)| Entry {
                    ue: i,
                    uav: j + 1,
                    irs: l.irs,
                    gain_db: 10.0 * l.gain.log10(),
                    rate_bps: l.rate_bps,
                    phases_rad: &l.phases.thetas,
                })
            })
            .collect();
        Ok(serde_json::to_string_pretty(&entries)?)
    }
}
