//! Run traces (JSON lines) and their independent replay.
//!
//! [`validate_trace`] rebuilds the chain of networks a run searched and
//! re-checks every learned clause, every propagation and every witness.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::{AbstractionRecord, LabeledNetwork, MergePolicy, MergeTriple};
use crate::cegar::{is_real_sat, prepare, CegarError, Mode, Prepared};
use crate::lp::{encode, solve, LpError, LpOutcome, Tableau};
use crate::network::{Network, NeuronId};
use crate::property::{check_witness, Query, VerdictKind};
use crate::residual::{guard_holds, Branch, Clause, GammaContext, LiteralStatus, Phase, PhaseLiteral};
use crate::search::{check_success, initial_branch, node_tableau, pick_split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Start {
        mode: Mode,
        policy: MergePolicy,
    },
    Iteration {
        index: usize,
        widths: Vec<usize>,
        pending_merges: usize,
    },
    Split {
        neuron: NeuronId,
        phase: Phase,
        depth: usize,
    },
    Propagate {
        literal: PhaseLiteral,
        clause: Clause,
        guarded: bool,
        /// Phases fixed before this propagation pass.
        branch: Vec<(NeuronId, Phase)>,
    },
    Conflict {
        clause: Clause,
        branch: Vec<(NeuronId, Phase)>,
    },
    Failure {
        depth: usize,
        record: Vec<PhaseLiteral>,
    },
    Learned {
        clause: Clause,
    },
    /// LP witness of the searched network, in its shifted input coordinates.
    Success {
        witness: Vec<f64>,
    },
    /// Witness in original coordinates that failed on the original network.
    Spurious {
        witness: Vec<f64>,
    },
    Refine {
        undone: MergeTriple,
        gamma: Vec<Clause>,
    },
    Verdict {
        verdict: VerdictKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        witness: Option<Vec<f64>>,
    },
}

/// Collects events when enabled; otherwise never builds them.
#[derive(Debug, Default)]
pub struct Tracer {
    events: Option<Vec<TraceEvent>>,
}

impl Tracer {
    pub fn enabled() -> Self {
        Tracer {
            events: Some(Vec::new()),
        }
    }

    pub fn disabled() -> Self {
        Tracer { events: None }
    }

    pub fn is_enabled(&self) -> bool {
        self.events.is_some()
    }

    pub fn emit(&mut self, event: impl FnOnce() -> TraceEvent) {
        if let Some(events) = &mut self.events {
            events.push(event());
        }
    }

    pub fn into_events(self) -> Vec<TraceEvent> {
        self.events.unwrap_or_default()
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("trace does not begin with a start event")]
    MissingStart,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Setup(#[from] CegarError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

pub fn write_trace(events: &[TraceEvent], mut out: impl Write) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace(input: impl BufRead) -> Result<Vec<TraceEvent>, TraceError> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| TraceError::Syntax {
            line: i + 1,
            message: e.to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub events: usize,
    pub iterations: usize,
    pub learned_checked: usize,
    pub propagations_checked: usize,
    pub successes_checked: usize,
    /// Replays abandoned because they exceeded the LP budget.
    pub unchecked: usize,
    pub violations: Vec<String>,
}

impl TraceReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// LP budget for proving one phase region empty.
const REPLAY_BUDGET: usize = 20_000;

fn point_clears(net: &LabeledNetwork, query: &Query, t: &Tableau, alpha: &[f64]) -> bool {
    let x: Vec<f64> = t
        .input_vars()
        .map(|v| alpha[v].clamp(query.input_lower[v], query.input_upper[v]))
        .collect();
    check_witness(net.network(), query, &x).unwrap_or(false)
}

/// Decides whether no point satisfies the query with the phases in `fixed`,
/// by splitting the remaining phases until every LP is infeasible. Regions
/// blocked by a clause in `verified` count as empty.
/// Returns `None` when the budget runs out.
fn region_empty(
    base: &Tableau,
    net: &LabeledNetwork,
    query: &Query,
    verified: &[Clause],
    fixed: &Branch,
    budget: &mut usize,
) -> Result<Option<bool>, LpError> {
    let blocked = |c: &Clause| c.literals().iter().all(|l| l.status(fixed) == LiteralStatus::False);
    if verified.iter().any(blocked) {
        return Ok(Some(true));
    }
    if *budget == 0 {
        return Ok(None);
    }
    *budget -= 1;
    let t = node_tableau(base, net, fixed);
    let alpha = match solve(&t)? {
        LpOutcome::Infeasible(cert) => {
            // A certificate that does not check leaves the region undecided.
            return Ok(cert.check(&t).then_some(true));
        }
        LpOutcome::Feasible(alpha) => alpha,
    };
    let consistent = check_success(&t, &alpha);
    if consistent && point_clears(net, query, &t, &alpha) {
        return Ok(Some(false));
    }
    let Some(v) = pick_split(net, fixed, &t) else {
        // Same rule as the search: a consistent point short of the threshold closes the region.
        return Ok(consistent.then_some(true));
    };
    for phase in [Phase::Active, Phase::Inactive] {
        let mut next = fixed.clone();
        next.insert(v, phase);
        match region_empty(base, net, query, verified, &next, budget)? {
            Some(true) => {}
            other => return Ok(other),
        }
    }
    Ok(Some(true))
}

struct Replay {
    prep: Prepared,
    mode: Mode,
    record: AbstractionRecord,
    current: LabeledNetwork,
    base: Tableau,
    ctx: GammaContext,
    /// Clauses proved by replay on the current network.
    verified: Vec<Clause>,
    report: TraceReport,
    /// Last split seen at each depth.
    last_split: Vec<Option<(NeuronId, Phase)>>,
}

impl Replay {
    fn violation(&mut self, message: String) {
        self.report.violations.push(message);
    }

    /// Checks that the phases in `fixed` admit no solution on the current network.
    fn expect_empty(&mut self, what: &str, fixed: Branch) -> Result<bool, TraceError> {
        let mut region = initial_branch(&self.base, &self.current);
        for (k, v) in fixed {
            if region.get(&k).is_some_and(|&p| p != v) {
                // Contradicts the box bounds: trivially empty.
                return Ok(true);
            }
            region.insert(k, v);
        }
        let mut budget = REPLAY_BUDGET;
        match region_empty(
            &self.base,
            &self.current,
            &self.prep.search_query,
            &self.verified,
            &region,
            &mut budget,
        )? {
            Some(true) => return Ok(true),
            Some(false) => self.violation(format!("{what}: blocked region has a solution")),
            None => self.report.unchecked += 1,
        }
        Ok(false)
    }

    fn known_clause(&self, clause: &Clause) -> bool {
        self.ctx.gamma().contains(clause)
    }

    fn on_event(&mut self, index: usize, event: &TraceEvent) -> Result<(), TraceError> {
        match event {
            TraceEvent::Start { .. } => self.violation(format!("event {index}: repeated start")),
            TraceEvent::Iteration { widths, .. } => {
                self.report.iterations += 1;
                self.last_split.clear();
                if *widths != self.current.network().widths() {
                    self.violation(format!(
                        "event {index}: iteration widths {widths:?} do not match the replayed network"
                    ));
                }
            }
            TraceEvent::Split { neuron, phase, depth } => {
                if self.last_split.len() <= *depth {
                    self.last_split.resize(depth + 1, None);
                }
                if *phase == Phase::Inactive && self.last_split[*depth] != Some((*neuron, Phase::Active)) {
                    self.violation(format!(
                        "event {index}: inactive branch of {neuron} before its active branch"
                    ));
                }
                self.last_split[*depth] = Some((*neuron, *phase));
                self.last_split.truncate(depth + 1);
            }
            TraceEvent::Propagate {
                literal,
                clause,
                guarded,
                branch,
            } => {
                let branch: Branch = branch.iter().copied().collect();
                if !self.known_clause(clause) {
                    self.violation(format!("event {index}: propagation from a clause not in Γ: {clause}"));
                }
                if *guarded != clause.guard().is_some() {
                    self.violation(format!("event {index}: guard flag does not match clause metadata"));
                }
                let unit = literal.status(&branch) == LiteralStatus::Unassigned
                    && clause
                        .literals()
                        .iter()
                        .filter(|l| *l != literal)
                        .all(|l| l.status(&branch) == LiteralStatus::False);
                if !unit || clause.literal_on(literal.neuron) != Some(*literal) {
                    self.violation(format!("event {index}: {literal} is not the unit literal of {clause}"));
                }
                if *guarded && !guard_holds(clause, &branch, &self.current, *literal) {
                    self.violation(format!("event {index}: guard fails for {literal} from {clause}"));
                }
                let mut pruned = branch;
                pruned.insert(literal.neuron, literal.phase().opposite());
                self.expect_empty(&format!("event {index}: propagation of {literal}"), pruned)?;
                self.report.propagations_checked += 1;
            }
            TraceEvent::Conflict { clause, branch } => {
                let branch: Branch = branch.iter().copied().collect();
                if !self.known_clause(clause) {
                    self.violation(format!("event {index}: conflict on a clause not in Γ: {clause}"));
                }
                if clause.satisfied_by(&branch) {
                    self.violation(format!("event {index}: conflict clause {clause} is satisfied"));
                }
            }
            TraceEvent::Failure { .. } => {}
            TraceEvent::Learned { clause } => {
                let blocked: Branch = clause
                    .literals()
                    .iter()
                    .map(|l| (l.neuron, l.phase().opposite()))
                    .collect();
                if clause.literals().iter().any(|l| !self.current.contains(l.neuron)) {
                    self.violation(format!("event {index}: learned clause {clause} names unknown neurons"));
                } else if self.expect_empty(&format!("event {index}: learned {clause}"), blocked)? {
                    self.verified.push(clause.clone());
                }
                self.ctx.add_clause(clause.clone());
                self.report.learned_checked += 1;
            }
            TraceEvent::Success { witness } => {
                self.report.successes_checked += 1;
                match check_witness(self.current.network(), &self.prep.search_query, witness) {
                    Ok(true) => {}
                    _ => self.violation(format!("event {index}: witness fails on the searched network")),
                }
                let pre = match self.current.pre_activations(witness) {
                    Ok(pre) => pre,
                    Err(e) => {
                        self.violation(format!("event {index}: {e}"));
                        return Ok(());
                    }
                };
                let tol = 1e-6;
                for clause in self.ctx.gamma().to_vec() {
                    let holds = clause.literals().iter().any(|l| {
                        let v = pre.get(&l.neuron).copied().unwrap_or(f64::NAN);
                        if l.positive {
                            v >= -tol
                        } else {
                            v <= tol
                        }
                    });
                    if !holds {
                        self.violation(format!("event {index}: witness phases violate {clause}"));
                    }
                }
            }
            TraceEvent::Spurious { witness } => {
                if is_real_sat(&self.prep.network, &self.prep.query, witness) {
                    self.violation(format!("event {index}: witness marked spurious holds on the original"));
                }
            }
            TraceEvent::Refine { undone, gamma } => {
                let (refined, triple) = match self.record.refine_last() {
                    Ok(r) => r,
                    Err(e) => {
                        self.violation(format!("event {index}: {e}"));
                        return Ok(());
                    }
                };
                if triple != *undone {
                    self.violation(format!("event {index}: refined {undone:?}, expected {triple:?}"));
                }
                if self.mode == Mode::Ar4 {
                    self.ctx.rename_after_refinement(triple, &refined);
                } else {
                    self.ctx = GammaContext::default();
                }
                if self.ctx.gamma() != gamma.as_slice() {
                    self.violation(format!("event {index}: Γ after renaming differs from the replay"));
                }
                self.current = refined;
                self.verified.clear();
                self.base = encode(self.current.network(), &self.prep.search_query)?;
            }
            TraceEvent::Verdict { verdict, witness } => {
                if *verdict == VerdictKind::Sat {
                    let ok = witness
                        .as_deref()
                        .is_some_and(|w| is_real_sat(&self.prep.network, &self.prep.query, w));
                    if !ok {
                        self.violation(format!("event {index}: SAT verdict without a valid witness"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Replays a trace against the network and query it was produced for.
pub fn validate_trace(events: &[TraceEvent], original: &Network, q: &Query) -> Result<TraceReport, TraceError> {
    let Some(TraceEvent::Start { mode, policy }) = events.first() else {
        return Err(TraceError::MissingStart);
    };
    let prep = prepare(original, q, *mode, policy)?;
    let current = prep.start.clone();
    let base = encode(current.network(), &prep.search_query)?;
    let mut replay = Replay {
        record: prep.record.clone(),
        current,
        base,
        ctx: GammaContext::default(),
        verified: Vec::new(),
        report: TraceReport {
            events: events.len(),
            ..Default::default()
        },
        last_split: Vec::new(),
        mode: *mode,
        prep,
    };
    for (i, e) in events.iter().enumerate().skip(1) {
        replay.on_event(i, e)?;
    }
    Ok(replay.report)
}
