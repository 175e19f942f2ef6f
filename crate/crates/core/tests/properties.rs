use std::f64::consts::TAU;

use fres_core::agent::{AgentConfig, EncodedState, MultiTaskAgent, ReplayBuffer};
use fres_core::channel::{
    cascaded_gain, data_rate, irs_uav_channel, qpb_phase, ue_irs_channel, ChannelSet,
};
use fres_core::env::{
    check_constraints, generate_scenario, local_energy, remote_energy, repair_allocation,
    total_energy, transmit_energy, PhysicalConstants, Position3D, Scenario, ScenarioConfig,
    Schedule, Task,
};
use fres_core::nn::softmax;
use fres_core::placement::{ls_fcm, PlacementConfig};
use fres_core::runtime::Experiment;
use fres_core::search::{asa, lts, sa, ts, AllocationDomain, AnnealConfig, SearchProblem, TabooConfig};
use proptest::prelude::*;

fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn world(seed: u64, n: usize, m: usize) -> (Scenario, ChannelSet) {
    let s = generate_scenario(seed, n, m, &ScenarioConfig::desk()).unwrap();
    let ch = ChannelSet::build(&s).unwrap();
    (s, ch)
}

fn schedule_strategy(n: usize, m: usize) -> impl Strategy<Value = Schedule> {
    (prop::collection::vec(0..=m, n), prop::collection::vec(1e-3..1.0f64, n))
        .prop_map(|(a, f)| Schedule::new(a, f).unwrap())
}

fn point() -> impl Strategy<Value = [f64; 2]> {
    (0.0..100.0f64, 0.0..100.0f64).prop_map(|(x, y)| [x, y])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn total_energy_is_sum_of_parts(seed in 0u64..1000, x in schedule_strategy(6, 2)) {
        let (s, ch) = world(seed, 6, 2);
        let b = total_energy(&s, &x, &ch).unwrap();
        let c = &s.constants;
        let sum = b.local_sum() + b.transmit_sum() + b.remote_sum() + c.hover_weight * b.hover_sum();
        prop_assert!(rel_close(b.total_j, sum, 1e-9));

        // rebuild each term from the schedule
        let mut manual = 0.0;
        let mut longest = [0.0f64; 2];
        for (i, ue) in s.ues.iter().enumerate() {
            let j = x.association[i];
            if j == 0 {
                manual += c.nu1 * (x.allocation[i] * c.local_cap_cycles_per_s).powi(2) * ue.task.cycles;
            } else {
                let f = x.allocation[i] * c.uav_cap_cycles_per_s;
                let rate = ch.rate(i, j - 1);
                manual += c.tx_power_w * ue.task.data_bits / rate + c.nu2 * f * f * ue.task.cycles;
                longest[j - 1] = longest[j - 1].max(ue.task.data_bits / rate + ue.task.cycles / f);
            }
        }
        manual += c.hover_weight * c.hover_power_w * longest.iter().sum::<f64>();
        prop_assert!(rel_close(b.total_j, manual, 1e-9));
    }

    #[test]
    fn compute_energy_increases_with_frequency(
        cycles in 1e8..5e9f64,
        f in 1e6..1e10f64,
        scale in 1.001..10.0f64,
    ) {
        let c = PhysicalConstants::default();
        let task = Task { data_bits: 1e6, cycles };
        prop_assert!(local_energy(f * scale, &task, &c) > local_energy(f, &task, &c));
        prop_assert!(remote_energy(f * scale, &task, &c).unwrap() > remote_energy(f, &task, &c).unwrap());
    }

    #[test]
    fn transmit_energy_decreases_with_rate(bits in 1e3..1e9f64, rate in 1e3..1e9f64, scale in 1.001..10.0f64) {
        let slow = transmit_energy(0.1, bits, rate).unwrap();
        let fast = transmit_energy(0.1, bits, rate * scale).unwrap();
        prop_assert!(fast < slow);
    }

    #[test]
    fn repair_is_safe_and_idempotent(seed in 0u64..1000, a in prop::collection::vec(0usize..=4, 8), f in prop::collection::vec(-0.5..3.0f64, 8)) {
        let (mut s, _) = world(seed, 8, 3);
        s.constants.uav_cap_cycles_per_s = 1e9;
        let x = Schedule::new(a, f).unwrap();
        let once = repair_allocation(&s, &x);
        let report = check_constraints(&s, None, &once);
        prop_assert!(report.capacity_ok(), "{report:?}");
        prop_assert!(report.invalid_association.is_empty());
        prop_assert!(report.invalid_allocation.is_empty());
        prop_assert!(once.association.iter().all(|&j| j <= 3));
        let twice = repair_allocation(&s, &once);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn data_rate_strictly_increasing(g in 1e-16..1e-6f64, scale in 1.01..100.0f64, b in 1e5..1e8f64) {
        let c = PhysicalConstants { bandwidth_hz: b, ..PhysicalConstants::default() };
        prop_assert!(data_rate(g * scale, &c) > data_rate(g, &c));
        let wider = PhysicalConstants { bandwidth_hz: b * scale, ..c };
        prop_assert!(data_rate(g, &wider) > data_rate(g, &c));
    }

    #[test]
    fn qpb_gain_monotone_when_levels_double(
        k in 1usize..=3,
        n_p in 1usize..=8,
        ue in point(), irs in point(), uav in point(),
    ) {
        let c = PhysicalConstants { elements_per_irs: k, ..PhysicalConstants::default() };
        let ue = Position3D::new(ue[0], ue[1], 0.0);
        let irs = Position3D::new(irs[0], irs[1], 15.0);
        let uav = Position3D::new(uav[0], uav[1], 30.0);
        let h_ur = ue_irs_channel(&ue, &irs, &c).unwrap();
        let h_rv = irs_uav_channel(&irs, &uav, &c).unwrap();
        let coarse = cascaded_gain(&h_ur, &qpb_phase(&h_ur, &h_rv, n_p), &h_rv).unwrap();
        let fine = cascaded_gain(&h_ur, &qpb_phase(&h_ur, &h_rv, 2 * n_p), &h_rv).unwrap();
        prop_assert!(fine >= coarse * (1.0 - 1e-9), "{fine} < {coarse}");
    }

    #[test]
    fn fine_phases_reach_coherent_limit(k in 1usize..=16, ue in point(), irs in point(), uav in point()) {
        let c = PhysicalConstants { elements_per_irs: k, ..PhysicalConstants::default() };
        let ue = Position3D::new(ue[0], ue[1], 0.0);
        let irs = Position3D::new(irs[0], irs[1], 15.0);
        let uav = Position3D::new(uav[0], uav[1], 30.0);
        let h_ur = ue_irs_channel(&ue, &irs, &c).unwrap();
        let h_rv = irs_uav_channel(&irs, &uav, &c).unwrap();
        let g = cascaded_gain(&h_ur, &qpb_phase(&h_ur, &h_rv, 1024), &h_rv).unwrap();
        let ideal = (k as f64 * h_ur.amplitude * h_rv.amplitude).powi(2);
        prop_assert!(rel_close(g, ideal, 5e-3), "{g} vs {ideal}");
    }

    #[test]
    fn fcm_rows_sum_to_one_and_objective_descends(
        pts in prop::collection::vec(point(), 3..30),
        m in 1usize..=3,
        seed in 0u64..100,
    ) {
        let r = ls_fcm(&pts, m, &PlacementConfig::default(), seed).unwrap();
        for row in &r.membership {
            prop_assert_eq!(row.len(), m);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        for w in r.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-9, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn fcm_ignores_input_order(
        pts in prop::collection::vec(point(), 3..20),
        m in 1usize..=3,
        seed in 0u64..100,
        rot in 0usize..20,
    ) {
        let mut shuffled = pts.clone();
        shuffled.reverse();
        let len = shuffled.len();
        shuffled.rotate_left(rot % len);
        let a = ls_fcm(&pts, m, &PlacementConfig::default(), seed).unwrap();
        let b = ls_fcm(&shuffled, m, &PlacementConfig::default(), seed).unwrap();
        prop_assert_eq!(a.centers, b.centers);
    }

    #[test]
    fn softmax_is_a_distribution(z in prop::collection::vec(-500.0..500.0f64, 1..12)) {
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn buffer_keeps_newest_in_order(cap in 1usize..20, pushes in 0usize..60) {
        let mut b = ReplayBuffer::new(cap);
        for t in 0..pushes {
            let s = EncodedState { data_norm: t as f64, cycles_norm: 0.0, gains: vec![] };
            b.push(s, fres_core::agent::AgentAction { association: 0, fraction: 0.5 });
        }
        prop_assert_eq!(b.len(), pushes.min(cap));
        let kept: Vec<f64> = b.iter().map(|t| t.state.data_norm).collect();
        let expect: Vec<f64> = (pushes.saturating_sub(cap)..pushes).map(|t| t as f64).collect();
        prop_assert_eq!(kept, expect);
    }

    #[test]
    fn inference_stays_on_active_uavs(
        m in 1usize..=4,
        data in 0.0..1.0f64,
        cycles in 0.0..1.0f64,
        gains in prop::collection::vec(0.0..1.0f64, 4),
        seed in 0u64..50,
    ) {
        let cfg = AgentConfig {
            max_uavs: 4,
            shared_widths: vec![8],
            head_widths: vec![4],
            growth_units: 2,
            seed,
            ..AgentConfig::default()
        };
        let agent = MultiTaskAgent::new(cfg, m).unwrap();
        let state = EncodedState { data_norm: data, cycles_norm: cycles, gains };
        let a = agent.infer(&state, m).unwrap();
        prop_assert!(a.association <= m);
        prop_assert!(a.fraction > 0.0 && a.fraction < 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn searches_never_lose_the_start(seed in 0u64..1000, assoc in prop::collection::vec(0usize..=2, 5)) {
        let (s, ch) = world(seed, 5, 2);
        let p = SearchProblem::new(&s, &ch, AllocationDomain::default());
        let x0 = p.with_default_allocation(assoc);
        let start = p.evaluate(&x0);
        let tc = TabooConfig { max_iter: 15, seed, ..TabooConfig::default() };
        let ac = AnnealConfig { seed, ..AnnealConfig::default() };
        for r in [lts(&p, &x0, &tc), ts(&p, &x0, &tc), sa(&p, &x0, &ac), asa(&p, &x0, &ac)] {
            prop_assert!(r.energy <= start * (1.0 + 1e-12));
            prop_assert!(rel_close(r.energy, p.evaluate(&r.best), 1e-12));
            prop_assert!(r.trace.windows(2).all(|w| w[1].best <= w[0].best));
            prop_assert!(r.max_taboo_len <= tc.taboo_len);
        }
    }
}

#[test]
fn experiment_survives_json_round_trip() {
    let mut exp = Experiment::default();
    exp.episode.uav_schedule = vec![(0, 2), (7, 3)];
    exp.scenario.constants.phase_levels = 8;
    let text = serde_json::to_string(&exp).unwrap();
    let back: Experiment = serde_json::from_str(&text).unwrap();
    assert_eq!(back, exp);
}

#[test]
fn phase_levels_are_on_the_grid() {
    let c = PhysicalConstants::default();
    let ue = Position3D::new(10.0, 20.0, 0.0);
    let irs = Position3D::new(40.0, 70.0, 15.0);
    let uav = Position3D::new(60.0, 30.0, 30.0);
    let h_ur = ue_irs_channel(&ue, &irs, &c).unwrap();
    let h_rv = irs_uav_channel(&irs, &uav, &c).unwrap();
    for n_p in [2usize, 3, 4, 8] {
        for t in qpb_phase(&h_ur, &h_rv, n_p).thetas {
            let idx = t * n_p as f64 / TAU;
            assert!((idx - idx.round()).abs() < 1e-9);
        }
    }
}
