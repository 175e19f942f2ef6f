use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fres_core::channel::{irs_uav_channel, ue_irs_channel, ChannelSet};
use fres_core::env::generate_scenario;
use fres_core::placement::ls_fcm;
use fres_core::runtime::{aggregate_metrics, records_to_csv, run_seeds, EpisodeOutcome, Method, MethodSummary};
use serde::Serialize;

use crate::config::RunConfig;
use crate::oracle::{self, Faults};

/// 9 significant digits, as in the record CSVs.
fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else {
        x.to_string()
    }
}

/// Output directory plus the config hash used in every file name.
struct Sink {
    dir: PathBuf,
    hash: String,
}

impl Sink {
    /// Creates the directory and echoes the effective config into it.
    fn open(cfg: &RunConfig, command: &str, explicit: Option<&Path>) -> Result<Self> {
        let dir = cfg.output_dir(explicit);
        fs::create_dir_all(&dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        let sink = Self { dir, hash: cfg.hash()? };
        sink.write(&format!("{command}-{}.toml", sink.hash), &cfg.to_toml()?)?;
        Ok(sink)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }

    fn write_bytes(&self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}

#[derive(Serialize)]
struct RunSummary<'a> {
    method: Method,
    seed: u64,
    config_hash: &'a str,
    placements: usize,
    channel_builds: usize,
    reconfigurations: &'a [fres_core::runtime::Reconfiguration],
    violations: usize,
    summary: MethodSummary,
}

fn run_summary<'a>(out: &'a EpisodeOutcome, hash: &'a str) -> RunSummary<'a> {
    RunSummary {
        method: out.method,
        seed: out.seed,
        config_hash: hash,
        placements: out.placements,
        channel_builds: out.channel_builds,
        reconfigurations: &out.reconfigurations,
        violations: out.records.iter().map(|r| r.violations).sum(),
        summary: aggregate_metrics(std::slice::from_ref(&out.records)),
    }
}

pub fn train(cfg: &RunConfig, method: Method, out: Option<&Path>) -> Result<()> {
    if !matches!(method, Method::Fres | Method::FresSingle) {
        bail!("train runs an agent: use fres or fres-single, not {method}");
    }
    let sink = Sink::open(cfg, "train", out)?;
    let outcomes = run_seeds(method, &cfg.experiment(), &cfg.seeds)?;
    for o in &outcomes {
        let stem = format!("train-{method}-seed{}-{}", o.seed, sink.hash);
        let csv = sink.write(&format!("{stem}.csv"), &records_to_csv(&o.records))?;
        let summary = run_summary(o, &sink.hash);
        sink.write(&format!("{stem}.json"), &serde_json::to_string_pretty(&summary)?)?;
        if let Some(agent) = &o.agent {
            sink.write_bytes(&format!("{stem}.ckpt"), &agent.save(o.pool.as_ref())?)?;
        }
        println!(
            "{method} seed {}: mean energy {} J over {} slots, {} violations -> {}",
            o.seed,
            num(summary.summary.mean_energy),
            o.records.len(),
            summary.violations,
            csv.display()
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct MethodRow {
    method: Method,
    summary: MethodSummary,
}

#[derive(Serialize)]
struct CompareSummary<'a> {
    config_hash: &'a str,
    seeds: &'a [u64],
    methods: Vec<MethodRow>,
}

pub fn compare(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let mut methods = cfg.methods.clone();
    methods.dedup();
    if methods.len() < 2 {
        bail!("compare needs at least two methods, got {}", methods.len());
    }
    let sink = Sink::open(cfg, "compare", out)?;
    let exp = cfg.experiment();

    let mut rows = Vec::new();
    let mut table = String::from("method,runs,mean_energy_j,std_energy_j,mean_reward\n");
    let mut traces = String::from("method,seed,iteration,current_j,best_j\n");
    for &method in &methods {
        let outcomes = run_seeds(method, &exp, &cfg.seeds)?;
        for o in &outcomes {
            sink.write(&format!("compare-{method}-seed{}-{}.csv", o.seed, sink.hash), &records_to_csv(&o.records))?;
            for t in &o.first_trace {
                let _ = writeln!(traces, "{method},{},{},{},{}", o.seed, t.iteration, num(t.current), num(t.best));
            }
        }
        let runs: Vec<_> = outcomes.into_iter().map(|o| o.records).collect();
        let summary = aggregate_metrics(&runs);
        let _ = writeln!(
            table,
            "{method},{},{},{},{}",
            summary.runs,
            num(summary.mean_energy),
            num(summary.std_energy),
            num(summary.mean_reward)
        );
        println!(
            "{:<12} mean {} J  std {} J  ({} runs)",
            method.name(),
            num(summary.mean_energy),
            num(summary.std_energy),
            summary.runs
        );
        rows.push(MethodRow { method, summary });
    }
    let summary = CompareSummary { config_hash: &sink.hash, seeds: &cfg.seeds, methods: rows };
    sink.write(&format!("compare-{}-summary.json", sink.hash), &serde_json::to_string_pretty(&summary)?)?;
    sink.write(&format!("compare-{}-summary.csv", sink.hash), &table)?;
    sink.write(&format!("compare-{}-traces.csv", sink.hash), &traces)?;
    Ok(())
}

/// Prints the JSON report; `Ok(false)` when a check fails.
pub fn oracle_check(cfg: &RunConfig, faults: Faults, out: Option<&Path>) -> Result<bool> {
    oracle::check_budget(&cfg.oracle)?;
    let sink = Sink::open(cfg, "oracle-check", out)?;
    let report = oracle::run_checks(&cfg.oracle, &cfg.scenario, faults)?;
    let text = serde_json::to_string_pretty(&report)?;
    sink.write(&format!("oracle-check-{}.json", sink.hash), &text)?;
    println!("{text}");
    Ok(report.pass)
}

#[derive(Serialize)]
struct PlacementReport {
    seed: u64,
    ue_xy: Vec<[f64; 2]>,
    uavs: Vec<[f64; 3]>,
    membership: Vec<Vec<f64>>,
    objective_trace: Vec<f64>,
    iterations: usize,
}

fn initial_uavs(cfg: &RunConfig) -> usize {
    cfg.episode.uav_schedule.first().map_or(1, |&(_, m)| m)
}

pub fn placement(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let sink = Sink::open(cfg, "placement", out)?;
    let m = initial_uavs(cfg);
    for &seed in &cfg.seeds {
        let s = generate_scenario(seed, cfg.episode.ues, m, &cfg.scenario)?;
        let ue_xy: Vec<[f64; 2]> = s.ues.iter().map(|u| [u.position.x, u.position.y]).collect();
        let fcm = ls_fcm(&ue_xy, m, &cfg.scenario.placement, seed)?;
        let uavs = fcm.centers.iter().map(|c| [c[0], c[1], cfg.scenario.uav_altitude_m]).collect();
        let report = PlacementReport {
            seed,
            ue_xy,
            uavs,
            membership: fcm.membership,
            objective_trace: fcm.objective_trace,
            iterations: fcm.iterations,
        };
        sink.write(&format!("placement-seed{seed}-{}.json", sink.hash), &serde_json::to_string_pretty(&report)?)?;
        println!("seed {seed}: {} iterations", report.iterations);
        for (j, p) in report.uavs.iter().enumerate() {
            println!("  uav {}: ({:.3}, {:.3}, {:.3})", j + 1, p[0], p[1], p[2]);
        }
    }
    Ok(())
}

pub fn qpb_demo(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let sink = Sink::open(cfg, "qpb-demo", out)?;
    let m = initial_uavs(cfg);
    for &seed in &cfg.seeds {
        let s = generate_scenario(seed, cfg.episode.ues, m, &cfg.scenario)?;
        let ch = ChannelSet::build(&s)?;
        let c = &s.constants;
        let mut csv = String::from("ue,uav,irs,gain,coherent_gain,ratio,rate_bps\n");
        for (i, ue) in s.ues.iter().enumerate() {
            for (j, uav) in s.active_uavs().iter().enumerate() {
                let link = ch.link(i, j);
                let irs = &s.irss[link.irs];
                let a = ue_irs_channel(&ue.position, irs, c)?.amplitude * irs_uav_channel(irs, uav, c)?.amplitude;
                let coherent = (c.elements_per_irs as f64 * a).powi(2);
                let _ = writeln!(
                    csv,
                    "{i},{},{},{},{},{},{}",
                    j + 1,
                    link.irs,
                    num(link.gain),
                    num(coherent),
                    num(link.gain / coherent),
                    num(link.rate_bps)
                );
            }
        }
        let path = sink.write(&format!("qpb-demo-seed{seed}-{}.csv", sink.hash), &csv)?;
        println!("seed {seed}: {} links, K={} N_p={} -> {}", s.n_ues() * m, c.elements_per_irs, c.phase_levels, path.display());
        print!("{csv}");
    }
    Ok(())
}
