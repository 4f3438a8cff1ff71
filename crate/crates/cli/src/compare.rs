//! Paired runs of several modes over a generated suite.
//!
//! CSV columns, in order: `instance, mode, verdict, expected, visited_states,
//! splits, propagations, prune_hits, lp_solves, learned, refinements,
//! wall_ms`. The JSON report carries the same rows under `rows`.

use std::io::Write;
use std::time::Duration;

use rayon::prelude::*;
use resinet::suite::Instance;
use resinet::{run, CegarError, Mode, RunConfig, VerdictKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Runs finishing within this many seconds of each other count as ties.
pub const TIE_WINDOW_SECS: f64 = 5.0;

pub const CSV_COLUMNS: [&str; 12] = [
    "instance",
    "mode",
    "verdict",
    "expected",
    "visited_states",
    "splits",
    "propagations",
    "prune_hits",
    "lp_solves",
    "learned",
    "refinements",
    "wall_ms",
];

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("{instance} ({mode}): {source}")]
    Run {
        instance: String,
        mode: Mode,
        source: CegarError,
    },
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareConfig {
    pub modes: Vec<Mode>,
    pub max_states: Option<u64>,
    pub timeout: Option<Duration>,
    /// Worker threads; 0 picks the rayon default.
    pub workers: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            modes: vec![Mode::Ar, Mode::Ar4],
            max_states: None,
            timeout: None,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub instance: String,
    pub mode: Mode,
    pub verdict: VerdictKind,
    pub expected: VerdictKind,
    pub visited_states: u64,
    pub splits: u64,
    pub propagations: u64,
    pub prune_hits: u64,
    pub lp_solves: u64,
    pub learned: u64,
    pub refinements: usize,
    /// Learned clauses before the first refinement (not in the CSV).
    #[serde(skip)]
    pub learned_before_refinement: u64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: Option<Mode>,
    pub solved: usize,
    pub timeouts: usize,
    pub visited_states: u64,
    pub splits: u64,
    pub propagations: u64,
    pub prune_hits: u64,
    pub wall_ms: f64,
}

/// Which of two modes solved each instance first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub first: Option<Mode>,
    pub second: Option<Mode>,
    pub first_faster: usize,
    pub second_faster: usize,
    pub ties: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<Row>,
    pub summary: Vec<ModeSummary>,
    pub tallies: Vec<Tally>,
    pub failures: Vec<String>,
}

impl CompareReport {
    pub fn rows_for(&self, mode: Mode) -> impl Iterator<Item = &Row> + '_ {
        self.rows.iter().filter(move |r| r.mode == mode)
    }
}

fn run_one(inst: &Instance, mode: Mode, config: &CompareConfig) -> Result<Row, CompareError> {
    let rc = RunConfig {
        mode,
        max_states: config.max_states,
        timeout: config.timeout,
        ..RunConfig::default()
    };
    let out = run(&inst.network, &inst.query, &rc).map_err(|source| CompareError::Run {
        instance: inst.name.clone(),
        mode,
        source,
    })?;
    let r = out.report;
    Ok(Row {
        instance: inst.name.clone(),
        mode,
        verdict: r.verdict,
        expected: inst.expected,
        visited_states: r.stats.visited_states,
        splits: r.stats.splits,
        propagations: r.stats.propagations,
        prune_hits: r.stats.prune_hits,
        lp_solves: r.stats.lp_solves,
        learned: r.stats.learned,
        refinements: r.refinements,
        learned_before_refinement: r.learned_before_refinement,
        wall_ms: r.elapsed_ms,
    })
}

fn failures(rows: &[Row], modes: usize) -> Vec<String> {
    let mut out = Vec::new();
    for group in rows.chunks(modes) {
        let decided: Vec<&Row> = group.iter().filter(|r| r.verdict != VerdictKind::Timeout).collect();
        let Some(first) = decided.first() else { continue };
        if decided.iter().any(|r| r.verdict != first.verdict) {
            let verdicts: Vec<String> = group.iter().map(|r| format!("{}={}", r.mode, r.verdict)).collect();
            out.push(format!(
                "FAILURE {}: modes disagree ({})",
                first.instance,
                verdicts.join(", ")
            ));
        } else if first.verdict != first.expected {
            out.push(format!(
                "FAILURE {}: verdict {} but the oracle says {}",
                first.instance, first.verdict, first.expected
            ));
        }
    }
    out
}

fn summarize(rows: &[Row], mode: Mode) -> ModeSummary {
    let mut s = ModeSummary {
        mode: Some(mode),
        ..Default::default()
    };
    for r in rows.iter().filter(|r| r.mode == mode) {
        if r.verdict == VerdictKind::Timeout {
            s.timeouts += 1;
        } else {
            s.solved += 1;
        }
        s.visited_states += r.visited_states;
        s.splits += r.splits;
        s.propagations += r.propagations;
        s.prune_hits += r.prune_hits;
        s.wall_ms += r.wall_ms;
    }
    s
}

fn tally(rows: &[Row], modes: &[Mode], a: usize, b: usize) -> Tally {
    let mut t = Tally {
        first: Some(modes[a]),
        second: Some(modes[b]),
        ..Default::default()
    };
    let secs = |r: &Row| (r.verdict != VerdictKind::Timeout).then_some(r.wall_ms / 1e3);
    for group in rows.chunks(modes.len()) {
        match (secs(&group[a]), secs(&group[b])) {
            (None, None) => {}
            (Some(_), None) => t.first_faster += 1,
            (None, Some(_)) => t.second_faster += 1,
            (Some(x), Some(y)) if (x - y).abs() <= TIE_WINDOW_SECS => t.ties += 1,
            (Some(x), Some(y)) if x < y => t.first_faster += 1,
            _ => t.second_faster += 1,
        }
    }
    t
}

/// Runs every mode on every instance. Rows are ordered by instance, then by
/// the order of `config.modes`.
pub fn compare(instances: &[Instance], config: &CompareConfig) -> Result<CompareReport, CompareError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.workers).build()?;
    let jobs: Vec<(&Instance, Mode)> = instances
        .iter()
        .flat_map(|i| config.modes.iter().map(move |&m| (i, m)))
        .collect();
    let rows = pool.install(|| {
        jobs.par_iter()
            .map(|(inst, mode)| run_one(inst, *mode, config))
            .collect::<Result<Vec<Row>, CompareError>>()
    })?;
    let n = config.modes.len().max(1);
    let summary = config.modes.iter().map(|&m| summarize(&rows, m)).collect();
    let mut tallies = Vec::new();
    for a in 0..config.modes.len() {
        for b in a + 1..config.modes.len() {
            tallies.push(tally(&rows, &config.modes, a, b));
        }
    }
    Ok(CompareReport {
        failures: failures(&rows, n),
        rows,
        summary,
        tallies,
    })
}

pub fn write_csv(report: &CompareReport, out: impl Write) -> Result<(), CompareError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in &report.rows {
        w.write_record([
            r.instance.clone(),
            r.mode.to_string(),
            r.verdict.to_string(),
            r.expected.to_string(),
            r.visited_states.to_string(),
            r.splits.to_string(),
            r.propagations.to_string(),
            r.prune_hits.to_string(),
            r.lp_solves.to_string(),
            r.learned.to_string(),
            r.refinements.to_string(),
            format!("{:.3}", r.wall_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Human-readable aggregate table.
pub fn write_table(report: &CompareReport, mut out: impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "{:<6} {:>7} {:>9} {:>15} {:>10} {:>13} {:>11} {:>12}",
        "mode", "solved", "timeouts", "visited_states", "splits", "propagations", "prune_hits", "wall_ms"
    )?;
    for s in &report.summary {
        let mode = s.mode.map(|m| m.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{:<6} {:>7} {:>9} {:>15} {:>10} {:>13} {:>11} {:>12.1}",
            mode, s.solved, s.timeouts, s.visited_states, s.splits, s.propagations, s.prune_hits, s.wall_ms
        )?;
    }
    for t in &report.tallies {
        let name = |m: Option<Mode>| m.map(|m| m.to_string()).unwrap_or_default();
        writeln!(
            out,
            "faster: {} {}, {} {}, ties {}",
            name(t.first),
            t.first_faster,
            name(t.second),
            t.second_faster,
            t.ties
        )?;
    }
    for f in &report.failures {
        writeln!(out, "{f}")?;
    }
    Ok(())
}
