use std::fmt::Write;

use super::SlotRecord;

/// Column order of [`records_to_csv`]. Wall time is left out so that reruns
/// are byte-identical.
pub const CSV_COLUMNS: [&str; 18] = [
    "slot",
    "m",
    "local_j",
    "transmit_j",
    "remote_j",
    "hover_j",
    "total_j",
    "reward",
    "agent_total_j",
    "agent_reward",
    "offloaded",
    "refined",
    "trained",
    "l_ce",
    "l_mse",
    "l_mt",
    "evaluations",
    "violations",
];

/// 9 significant digits.
fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else {
        x.to_string()
    }
}

pub fn records_to_csv(records: &[SlotRecord]) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.slot,
            r.m,
            num(r.local_j),
            num(r.transmit_j),
            num(r.remote_j),
            num(r.hover_j),
            num(r.total_j),
            num(r.reward),
            num(r.agent_total_j),
            num(r.agent_reward),
            r.offloaded,
            u8::from(r.refined),
            u8::from(r.trained),
            num(r.l_ce),
            num(r.l_mse),
            num(r.l_mt),
            r.evaluations,
            r.violations,
        );
    }
    out
}
