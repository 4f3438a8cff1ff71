//! Depth-first case splitting over ReLU phases for one network.
//!
//! Every search node rebuilds its LP from the base encoding and the phases
//! fixed on its branch, so two nodes with the same phases solve the same LP.
//! The active branch is explored before the inactive one.

use std::ops::AddAssign;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::LabeledNetwork;
use crate::lp::{encode, solve, BoundKind, LpError, LpOutcome, ReluPair, Tableau};
use crate::network::{NetworkError, NeuronId};
use crate::property::{check_witness, Query, Verdict};
use crate::residual::{Branch, GammaContext, LearnOutcome, Phase, ResidualError};
use crate::trace::{TraceEvent, Tracer};

/// Tolerance of the `post = max(0, pre)` check on an LP assignment.
pub const SUCCESS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Residual(#[from] ResidualError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("every phase is fixed but the LP assignment violates a ReLU")]
    Stuck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchConfig {
    /// Learn blocking clauses on failure.
    pub learning: bool,
    /// Force literals from Γ after every split and failure.
    pub propagation: bool,
}

impl SearchConfig {
    pub const PLAIN: SearchConfig = SearchConfig {
        learning: false,
        propagation: false,
    };
    pub const RESIDUAL: SearchConfig = SearchConfig {
        learning: true,
        propagation: true,
    };
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Limits {
    pub max_states: Option<u64>,
    pub deadline: Option<Instant>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub visited_states: u64,
    pub splits: u64,
    pub propagations: u64,
    pub prune_hits: u64,
    pub lp_solves: u64,
    pub failures: u64,
    pub conflicts: u64,
    pub learned: u64,
}

impl AddAssign for SearchStats {
    fn add_assign(&mut self, o: Self) {
        self.visited_states += o.visited_states;
        self.splits += o.splits;
        self.propagations += o.propagations;
        self.prune_hits += o.prune_hits;
        self.lp_solves += o.lp_solves;
        self.failures += o.failures;
        self.conflicts += o.conflicts;
        self.learned += o.learned;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub verdict: Verdict,
    pub stats: SearchStats,
    /// Phases fixed on the branch that succeeded.
    pub phases: Option<Branch>,
}

/// Phase implied by the current pre-activation bounds, if any.
pub fn determined_phase(t: &Tableau, pair: ReluPair) -> Option<Phase> {
    if t.lower(pair.pre) >= 0.0 {
        Some(Phase::Active)
    } else if t.upper(pair.pre) <= 0.0 {
        Some(Phase::Inactive)
    } else {
        None
    }
}

/// First unfixed pair in topological order whose pre-activation range straddles zero.
pub fn pick_split(net: &LabeledNetwork, branch: &Branch, t: &Tableau) -> Option<NeuronId> {
    t.relu_pairs()
        .iter()
        .find(|&&p| !branch.contains_key(&net.stable_id(p.neuron)) && determined_phase(t, p).is_none())
        .map(|p| net.stable_id(p.neuron))
}

/// Every ReLU pair satisfies `post = max(0, pre)` within [`SUCCESS_TOLERANCE`].
pub fn check_success(t: &Tableau, alpha: &[f64]) -> bool {
    t.relu_pairs()
        .iter()
        .all(|p| (alpha[p.post] - alpha[p.pre].max(0.0)).abs() <= SUCCESS_TOLERANCE)
}

/// Asserts one phase on a tableau: active links `post = pre` over `pre >= 0`,
/// inactive pins both variables at or below zero.
pub fn assert_phase(t: &mut Tableau, pair: ReluPair, phase: Phase) {
    match phase {
        Phase::Active => {
            t.assert_bound(pair.pre, BoundKind::Lower, 0.0);
            t.add_row(vec![(pair.post, 1.0), (pair.pre, -1.0)], 0.0);
        }
        Phase::Inactive => {
            t.assert_bound(pair.pre, BoundKind::Upper, 0.0);
            t.assert_bound(pair.post, BoundKind::Upper, 0.0);
        }
    }
}

/// The base tableau with every branch phase asserted, in topological order.
pub fn node_tableau(base: &Tableau, net: &LabeledNetwork, branch: &Branch) -> Tableau {
    let mut t = base.clone();
    for &pair in base.relu_pairs() {
        if let Some(&phase) = branch.get(&net.stable_id(pair.neuron)) {
            assert_phase(&mut t, pair, phase);
        }
    }
    t
}

/// Phases fixed by the base bounds alone.
pub fn initial_branch(base: &Tableau, net: &LabeledNetwork) -> Branch {
    base.relu_pairs()
        .iter()
        .filter_map(|&p| determined_phase(base, p).map(|ph| (net.stable_id(p.neuron), ph)))
        .collect()
}

fn branch_vec(branch: &Branch) -> Vec<(NeuronId, Phase)> {
    branch.iter().map(|(&k, &v)| (k, v)).collect()
}

enum Node {
    Sat(Vec<f64>, Branch),
    Unsat,
    Timeout,
}

struct Engine<'a> {
    net: &'a LabeledNetwork,
    query: &'a Query,
    base: Tableau,
    ctx: &'a mut GammaContext,
    config: SearchConfig,
    limits: Limits,
    stats: SearchStats,
    tracer: &'a mut Tracer,
}

impl Engine<'_> {
    fn out_of_budget(&self) -> bool {
        self.limits.max_states.is_some_and(|m| self.stats.visited_states >= m)
            || self.limits.deadline.is_some_and(|d| Instant::now() >= d)
    }

    fn explore(&mut self, branch: &mut Branch, depth: usize) -> Result<Node, SearchError> {
        if self.out_of_budget() {
            return Ok(Node::Timeout);
        }
        self.stats.visited_states += 1;
        let saved = branch.clone();
        let record_len = self.ctx.branch_record().len();
        let result = self.explore_node(branch, depth);
        *branch = saved;
        self.ctx.truncate_branch(record_len);
        result
    }

    fn learn(&mut self) {
        if !self.config.learning {
            return;
        }
        if let LearnOutcome::Learned(clause) = self.ctx.learn_on_failure() {
            self.stats.learned += 1;
            self.tracer.emit(|| TraceEvent::Learned { clause });
        }
    }

    /// Applies forced literals until nothing changes. Returns false on conflict.
    fn propagate(&mut self, branch: &mut Branch) -> Result<bool, SearchError> {
        if !self.config.propagation {
            return Ok(true);
        }
        loop {
            let p = self.ctx.propagate(branch, self.net);
            if let Some(clause) = p.conflict {
                self.stats.conflicts += 1;
                let snapshot = branch_vec(branch);
                self.tracer.emit(|| TraceEvent::Conflict {
                    clause,
                    branch: snapshot,
                });
                return Ok(false);
            }
            if p.forced.is_empty() {
                return Ok(true);
            }
            let snapshot = branch_vec(branch);
            for f in p.forced {
                let phase = f.literal.phase();
                branch.insert(f.literal.neuron, phase);
                self.ctx.record_split(f.literal.neuron, phase)?;
                self.stats.propagations += 1;
                if f.guarded {
                    self.stats.prune_hits += 1;
                }
                let snapshot = snapshot.clone();
                self.tracer.emit(|| TraceEvent::Propagate {
                    literal: f.literal,
                    clause: f.clause,
                    guarded: f.guarded,
                    branch: snapshot,
                });
            }
        }
    }

    fn explore_node(&mut self, branch: &mut Branch, depth: usize) -> Result<Node, SearchError> {
        if !self.propagate(branch)? {
            return Ok(Node::Unsat);
        }
        let t = node_tableau(&self.base, self.net, branch);
        self.stats.lp_solves += 1;
        let alpha = match solve(&t)? {
            LpOutcome::Infeasible(_) => {
                self.stats.failures += 1;
                let record = self.ctx.branch_record().to_vec();
                self.tracer.emit(|| TraceEvent::Failure { depth, record });
                self.learn();
                return Ok(Node::Unsat);
            }
            LpOutcome::Feasible(alpha) => alpha,
        };
        let consistent = check_success(&t, &alpha);
        if consistent {
            let witness: Vec<f64> = t
                .input_vars()
                .map(|v| alpha[v].clamp(self.query.input_lower[v], self.query.input_upper[v]))
                .collect();
            if check_witness(self.net.network(), self.query, &witness)? {
                return Ok(Node::Sat(witness, branch.clone()));
            }
        }
        let Some(v) = pick_split(self.net, branch, &t) else {
            if !consistent {
                return Err(SearchError::Stuck);
            }
            // Feasible only within tolerance of the threshold: no point clears it.
            self.stats.failures += 1;
            let record = self.ctx.branch_record().to_vec();
            self.tracer.emit(|| TraceEvent::Failure { depth, record });
            self.learn();
            return Ok(Node::Unsat);
        };
        self.stats.splits += 1;
        let record_len = self.ctx.branch_record().len();
        for phase in [Phase::Active, Phase::Inactive] {
            branch.insert(v, phase);
            self.ctx.record_split(v, phase)?;
            self.tracer.emit(|| TraceEvent::Split {
                neuron: v,
                phase,
                depth: depth + 1,
            });
            match self.explore(branch, depth + 1)? {
                Node::Unsat => {}
                other => return Ok(other),
            }
            branch.remove(&v);
            self.ctx.truncate_branch(record_len);
        }
        // Both children closed, so this node's branch is infeasible too.
        self.learn();
        Ok(Node::Unsat)
    }
}

/// Decides `q` on `net`, reading and extending `ctx`.
pub fn verify(
    net: &LabeledNetwork,
    q: &Query,
    ctx: &mut GammaContext,
    config: SearchConfig,
    limits: Limits,
    tracer: &mut Tracer,
) -> Result<SearchOutcome, SearchError> {
    let base = encode(net.network(), q)?;
    let mut branch = initial_branch(&base, net);
    let mut engine = Engine {
        net,
        query: q,
        base,
        ctx,
        config,
        limits,
        stats: SearchStats::default(),
        tracer,
    };
    let node = engine.explore(&mut branch, 0)?;
    let stats = engine.stats;
    let (verdict, phases) = match node {
        Node::Sat(w, phases) => {
            let witness = w.clone();
            engine.tracer.emit(|| TraceEvent::Success { witness });
            (Verdict::Sat(w), Some(phases))
        }
        Node::Unsat => (Verdict::Unsat, None),
        Node::Timeout => (Verdict::Timeout, None),
    };
    Ok(SearchOutcome { verdict, stats, phases })
}
