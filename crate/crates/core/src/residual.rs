//! Learned phase clauses and their reuse across refinement steps.
//!
//! A literal `r_v` says neuron `v` is active and `¬r_v` says it is inactive.
//! The branch record holds the negation of every phase fixed on the current
//! search branch, so when the branch fails it is exactly the clause that
//! blocks it.
//!
//! After a merge `v = v1 + v2` is undone, clauses mentioning `v` are
//! rewritten in terms of `v1` and `v2` and gain a [`GuardInfo`]. Such clauses
//! only propagate when [`guard_holds`] accepts the current branch.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::{LabeledNetwork, MergeTriple};
use crate::network::NeuronId;
use crate::preprocess::{Classification, Influence};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResidualError {
    #[error("neuron {0} is already split on this branch")]
    DuplicateSplit(NeuronId),
    #[error("a clause needs at least one literal")]
    EmptyClause,
    #[error("clause mentions {0} with both polarities")]
    Contradictory(NeuronId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Active,
    Inactive,
}

impl Phase {
    pub fn opposite(self) -> Phase {
        match self {
            Phase::Active => Phase::Inactive,
            Phase::Inactive => Phase::Active,
        }
    }
}

/// Phases fixed on the current branch, keyed by stable neuron id.
pub type Branch = BTreeMap<NeuronId, Phase>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PhaseLiteral {
    pub neuron: NeuronId,
    /// `true` for `r_v` (active), `false` for `¬r_v` (inactive).
    pub positive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiteralStatus {
    True,
    False,
    Unassigned,
}

impl PhaseLiteral {
    pub fn new(neuron: NeuronId, positive: bool) -> Self {
        PhaseLiteral { neuron, positive }
    }

    /// The literal that is true in `phase`.
    pub fn of_phase(neuron: NeuronId, phase: Phase) -> Self {
        PhaseLiteral::new(neuron, phase == Phase::Active)
    }

    /// The literal blocking `phase`.
    pub fn blocking(neuron: NeuronId, phase: Phase) -> Self {
        PhaseLiteral::new(neuron, phase == Phase::Inactive)
    }

    pub fn negate(self) -> Self {
        PhaseLiteral::new(self.neuron, !self.positive)
    }

    /// Phase that makes this literal true.
    pub fn phase(self) -> Phase {
        if self.positive {
            Phase::Active
        } else {
            Phase::Inactive
        }
    }

    pub fn status(self, branch: &Branch) -> LiteralStatus {
        match branch.get(&self.neuron) {
            None => LiteralStatus::Unassigned,
            Some(&p) if p == self.phase() => LiteralStatus::True,
            Some(_) => LiteralStatus::False,
        }
    }

    /// Safe literals survive refinement of an earlier layer: `¬r` on inc neurons, `r` on dec neurons.
    pub fn is_safe(self, influence: Influence) -> bool {
        match influence {
            Influence::Inc => !self.positive,
            Influence::Dec => self.positive,
        }
    }
}

impl fmt::Display for PhaseLiteral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let neg = if self.positive { "" } else { "¬" };
        write!(f, "{neg}r({},{})", self.neuron.layer, self.neuron.neuron)
    }
}

/// Where a transferred clause came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardInfo {
    /// Earliest layer in which a renamed neuron lives.
    pub min_layer: usize,
    /// Neurons introduced by renaming.
    pub refined: BTreeSet<NeuronId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clause {
    literals: Vec<PhaseLiteral>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    guard: Option<GuardInfo>,
}

impl Clause {
    pub fn new(literals: impl IntoIterator<Item = PhaseLiteral>) -> Result<Self, ResidualError> {
        Self::with_guard(literals, None)
    }

    pub fn with_guard(
        literals: impl IntoIterator<Item = PhaseLiteral>,
        guard: Option<GuardInfo>,
    ) -> Result<Self, ResidualError> {
        let mut literals: Vec<PhaseLiteral> = literals.into_iter().collect();
        literals.sort();
        literals.dedup();
        if literals.is_empty() {
            return Err(ResidualError::EmptyClause);
        }
        if let Some(w) = literals.windows(2).find(|w| w[0].neuron == w[1].neuron) {
            return Err(ResidualError::Contradictory(w[0].neuron));
        }
        Ok(Clause { literals, guard })
    }

    pub fn literals(&self) -> &[PhaseLiteral] {
        &self.literals
    }

    pub fn guard(&self) -> Option<&GuardInfo> {
        self.guard.as_ref()
    }

    pub fn literal_on(&self, neuron: NeuronId) -> Option<PhaseLiteral> {
        self.literals.iter().copied().find(|l| l.neuron == neuron)
    }

    fn subsumes(&self, other: &Clause) -> bool {
        self.literals.iter().all(|l| other.literals.binary_search(l).is_ok())
    }

    /// True when some literal holds in `phases`.
    pub fn satisfied_by(&self, phases: &Branch) -> bool {
        self.literals.iter().any(|l| l.status(phases) == LiteralStatus::True)
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, l) in self.literals.iter().enumerate() {
            if i > 0 {
                write!(f, " ∨ ")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LearnOutcome {
    Learned(Clause),
    /// An existing clause already blocks this branch.
    Subsumed,
    /// The root failed: the query has no solution at all.
    GlobalUnsat,
}

/// A literal forced by unit propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct Forced {
    pub literal: PhaseLiteral,
    pub clause: Clause,
    pub guarded: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Propagation {
    pub forced: Vec<Forced>,
    /// A clause with every literal false, or two clauses forcing opposite phases.
    pub conflict: Option<Clause>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GammaContext {
    gamma: Vec<Clause>,
    branch_record: Vec<PhaseLiteral>,
    abstraction: Vec<MergeTriple>,
}

impl GammaContext {
    pub fn new(abstraction: Vec<MergeTriple>) -> Self {
        GammaContext {
            abstraction,
            ..Default::default()
        }
    }

    pub fn gamma(&self) -> &[Clause] {
        &self.gamma
    }

    pub fn branch_record(&self) -> &[PhaseLiteral] {
        &self.branch_record
    }

    pub fn abstraction(&self) -> &[MergeTriple] {
        &self.abstraction
    }

    /// Appends the blocking literal of `phase` for `neuron`.
    pub fn record_split(&mut self, neuron: NeuronId, phase: Phase) -> Result<(), ResidualError> {
        if self.branch_record.iter().any(|l| l.neuron == neuron) {
            return Err(ResidualError::DuplicateSplit(neuron));
        }
        self.branch_record.push(PhaseLiteral::blocking(neuron, phase));
        Ok(())
    }

    /// Drops record entries past `len` when the search backtracks.
    pub fn truncate_branch(&mut self, len: usize) {
        self.branch_record.truncate(len);
    }

    /// Adds a clause, removing clauses it subsumes. Returns false when an existing clause subsumes it.
    pub fn add_clause(&mut self, clause: Clause) -> bool {
        if self.gamma.iter().any(|c| c.subsumes(&clause)) {
            return false;
        }
        self.gamma.retain(|c| !clause.subsumes(c));
        self.gamma.push(clause);
        true
    }

    /// Turns the failed branch's record into a clause.
    pub fn learn_on_failure(&mut self) -> LearnOutcome {
        if self.branch_record.is_empty() {
            return LearnOutcome::GlobalUnsat;
        }
        let clause = Clause::new(self.branch_record.iter().copied()).expect("record has one literal per neuron");
        if self.add_clause(clause.clone()) {
            LearnOutcome::Learned(clause)
        } else {
            LearnOutcome::Subsumed
        }
    }

    /// Rewrites Γ after `undone` was split back into its two neurons.
    ///
    /// `refined` is the network after the undo. Clauses that would rely on an
    /// unsupported polarity of the merged neuron, or on an unsafe literal in a
    /// later layer, are dropped.
    pub fn rename_after_refinement(&mut self, undone: MergeTriple, refined: &LabeledNetwork) {
        let MergeTriple { merged, left, right } = undone;
        let influence = refined
            .class(left)
            .map(|c| c.influence)
            .expect("refined neurons are classified");
        let classes = refined.classes();
        self.branch_record.clear();
        self.abstraction.retain(|t| *t != undone);
        let old = std::mem::take(&mut self.gamma);
        for clause in old {
            if !later_literals_safe(&clause, merged.layer, classes) {
                continue;
            }
            let Some(lit) = clause.literal_on(merged) else {
                self.gamma.push(clause);
                continue;
            };
            if !lit.is_safe(influence) {
                continue;
            }
            let mut literals: Vec<PhaseLiteral> = clause.literals.iter().copied().filter(|l| *l != lit).collect();
            literals.push(PhaseLiteral::new(left, lit.positive));
            literals.push(PhaseLiteral::new(right, lit.positive));
            let guard = match clause.guard {
                Some(mut g) => {
                    g.min_layer = g.min_layer.min(merged.layer);
                    g.refined.remove(&merged);
                    g.refined.extend([left, right]);
                    g
                }
                None => GuardInfo {
                    min_layer: merged.layer,
                    refined: BTreeSet::from([left, right]),
                },
            };
            let renamed = Clause::with_guard(literals, Some(guard)).expect("renaming keeps the clause consistent");
            self.gamma.push(renamed);
        }
    }

    /// One pass of unit propagation over Γ.
    pub fn propagate(&self, branch: &Branch, net: &LabeledNetwork) -> Propagation {
        let mut out = Propagation::default();
        let mut forced_phase: BTreeMap<NeuronId, Phase> = BTreeMap::new();
        for clause in &self.gamma {
            let mut open = None;
            let mut open_count = 0;
            let mut satisfied = false;
            for &l in &clause.literals {
                match l.status(branch) {
                    LiteralStatus::True => {
                        satisfied = true;
                        break;
                    }
                    LiteralStatus::Unassigned => {
                        open_count += 1;
                        open = Some(l);
                    }
                    LiteralStatus::False => {}
                }
            }
            if satisfied || open_count > 1 {
                continue;
            }
            match (open, &clause.guard) {
                (None, None) => {
                    out.conflict = Some(clause.clone());
                    return out;
                }
                (None, Some(g)) => {
                    if later_layers_covered(clause, g, branch, net) {
                        out.conflict = Some(clause.clone());
                        return out;
                    }
                }
                (Some(l), guard) => {
                    if guard.is_some() && !guard_holds(clause, branch, net, l) {
                        continue;
                    }
                    match forced_phase.get(&l.neuron) {
                        Some(&p) if p != l.phase() => {
                            out.conflict = Some(clause.clone());
                            return out;
                        }
                        Some(_) => {}
                        None => {
                            forced_phase.insert(l.neuron, l.phase());
                            out.forced.push(Forced {
                                literal: l,
                                clause: clause.clone(),
                                guarded: guard.is_some(),
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Every literal on a neuron in a layer after `layer` is safe for that neuron's influence.
fn later_literals_safe(clause: &Clause, layer: usize, classes: &Classification) -> bool {
    clause
        .literals
        .iter()
        .filter(|l| l.neuron.layer > layer)
        .all(|l| classes.get(&l.neuron).is_some_and(|c| l.is_safe(c.influence)))
}

/// Every hidden neuron after the guard's layer is fixed on the branch to the phase its safe literal blocks.
fn later_layers_covered(clause: &Clause, guard: &GuardInfo, branch: &Branch, net: &LabeledNetwork) -> bool {
    net.hidden_ids().filter(|q| q.layer > guard.min_layer).all(|q| {
        let (Some(lit), Some(class)) = (clause.literal_on(q), net.class(q)) else {
            return false;
        };
        lit.is_safe(class.influence) && lit.status(branch) == LiteralStatus::False
    })
}

/// Whether a transferred clause may force `candidate` on the current branch.
///
/// Holds when every other literal is false on the branch (so all learn-time
/// splits in earlier layers and in the refined layer are repeated),
/// `candidate` is an unassigned literal on a renamed neuron, and every
/// neuron after the refined layer is split to its safe phase.
pub fn guard_holds(clause: &Clause, branch: &Branch, net: &LabeledNetwork, candidate: PhaseLiteral) -> bool {
    let Some(guard) = clause.guard() else {
        return false;
    };
    if !guard.refined.contains(&candidate.neuron)
        || candidate.neuron.layer != guard.min_layer
        || clause.literal_on(candidate.neuron) != Some(candidate)
        || candidate.status(branch) != LiteralStatus::Unassigned
    {
        return false;
    }
    let others_false = clause
        .literals
        .iter()
        .filter(|l| **l != candidate)
        .all(|l| l.status(branch) == LiteralStatus::False);
    others_false && later_layers_covered(clause, guard, branch, net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::{abstract_to_saturation, MergePolicy};
    use crate::network::fixtures::running_example;

    fn n(l: usize, j: usize) -> NeuronId {
        NeuronId::new(l, j)
    }

    fn pos(id: NeuronId) -> PhaseLiteral {
        PhaseLiteral::new(id, true)
    }

    fn neg(id: NeuronId) -> PhaseLiteral {
        PhaseLiteral::new(id, false)
    }

    #[test]
    fn record_split_appends_negation() {
        let mut ctx = GammaContext::default();
        ctx.record_split(n(1, 0), Phase::Active).unwrap();
        ctx.record_split(n(1, 1), Phase::Inactive).unwrap();
        assert_eq!(ctx.branch_record(), &[neg(n(1, 0)), pos(n(1, 1))]);
        assert_eq!(
            ctx.record_split(n(1, 0), Phase::Inactive),
            Err(ResidualError::DuplicateSplit(n(1, 0)))
        );
    }

    #[test]
    fn learn_blocking_clause() {
        let mut ctx = GammaContext::default();
        assert_eq!(ctx.learn_on_failure(), LearnOutcome::GlobalUnsat);
        assert!(ctx.gamma().is_empty());
        ctx.record_split(n(1, 0), Phase::Active).unwrap();
        ctx.record_split(n(1, 1), Phase::Inactive).unwrap();
        let LearnOutcome::Learned(c) = ctx.learn_on_failure() else {
            panic!()
        };
        assert_eq!(c.literals(), &[neg(n(1, 0)), pos(n(1, 1))]);
        assert_eq!(ctx.learn_on_failure(), LearnOutcome::Subsumed);
        // A shorter clause replaces the longer one.
        ctx.truncate_branch(1);
        assert!(matches!(ctx.learn_on_failure(), LearnOutcome::Learned(_)));
        assert_eq!(ctx.gamma().len(), 1);
        assert_eq!(ctx.gamma()[0].literals(), &[neg(n(1, 0))]);
    }

    #[test]
    fn clause_validation() {
        assert_eq!(Clause::new([]), Err(ResidualError::EmptyClause));
        assert_eq!(
            Clause::new([pos(n(1, 0)), neg(n(1, 0))]),
            Err(ResidualError::Contradictory(n(1, 0)))
        );
        assert_eq!(Clause::new([pos(n(1, 0)), pos(n(1, 0))]).unwrap().literals().len(), 1);
    }

    fn unguarded_net() -> LabeledNetwork {
        LabeledNetwork::classified(running_example()).unwrap()
    }

    #[test]
    fn unit_propagation_forces_last_literal() {
        let (r1, r2, r3) = (n(1, 0), n(1, 1), n(1, 2));
        let mut ctx = GammaContext::default();
        ctx.add_clause(Clause::new([pos(r1), neg(r2), neg(r3)]).unwrap());
        let branch = Branch::from([(r1, Phase::Inactive), (r2, Phase::Active)]);
        let p = ctx.propagate(&branch, &unguarded_net());
        assert_eq!(p.conflict, None);
        assert_eq!(p.forced.len(), 1);
        assert_eq!(p.forced[0].literal, neg(r3));
        assert!(!p.forced[0].guarded);
    }

    #[test]
    fn empty_gamma_forces_nothing() {
        let ctx = GammaContext::default();
        let p = ctx.propagate(&Branch::new(), &unguarded_net());
        assert_eq!(p, Propagation::default());
    }

    #[test]
    fn falsified_clause_is_conflict() {
        let mut ctx = GammaContext::default();
        ctx.add_clause(Clause::new([pos(n(1, 0)), neg(n(1, 1))]).unwrap());
        let branch = Branch::from([(n(1, 0), Phase::Inactive), (n(1, 1), Phase::Active)]);
        assert!(ctx.propagate(&branch, &unguarded_net()).conflict.is_some());
    }

    #[test]
    fn opposite_forcings_conflict() {
        let mut ctx = GammaContext::default();
        ctx.add_clause(Clause::new([pos(n(1, 0)), neg(n(1, 1))]).unwrap());
        ctx.add_clause(Clause::new([pos(n(1, 0)), pos(n(1, 1))]).unwrap());
        let branch = Branch::from([(n(1, 0), Phase::Inactive)]);
        assert!(ctx.propagate(&branch, &unguarded_net()).conflict.is_some());
    }

    /// The running example merged as (v24,v25) then (v21,v22), refined once; returns (abstract, refined, undone).
    fn refined_example() -> (LabeledNetwork, LabeledNetwork, MergeTriple) {
        let policy = MergePolicy::Explicit(vec![(n(2, 3), n(2, 4)), (n(2, 0), n(2, 1))]);
        let (abs, mut record) = abstract_to_saturation(&unguarded_net(), &policy).unwrap();
        let (refined, undone) = record.refine_last().unwrap();
        (abs, refined, undone)
    }

    #[test]
    fn renaming_inc_clause() {
        let (_, refined, undone) = refined_example();
        let v = undone.merged;
        let mut ctx = GammaContext::default();
        ctx.record_split(v, Phase::Active).unwrap();
        ctx.learn_on_failure();
        assert_eq!(ctx.gamma()[0].literals(), &[neg(v)]);
        ctx.rename_after_refinement(undone, &refined);
        assert!(ctx.branch_record().is_empty());
        let c = &ctx.gamma()[0];
        assert_eq!(c.literals(), &[neg(n(2, 0)), neg(n(2, 1))]);
        assert_eq!(c.guard().unwrap().min_layer, 2);
    }

    #[test]
    fn renaming_keeps_context_and_drops_unsupported() {
        let (_, refined, undone) = refined_example();
        let v = undone.merged;
        let w = n(1, 1);
        let mut ctx = GammaContext::default();
        ctx.add_clause(Clause::new([pos(w), neg(v)]).unwrap());
        ctx.add_clause(Clause::new([pos(v), neg(n(1, 3))]).unwrap());
        ctx.add_clause(Clause::new([pos(n(1, 0)), neg(n(1, 2))]).unwrap());
        ctx.rename_after_refinement(undone, &refined);
        let lits: Vec<_> = ctx.gamma().iter().map(|c| c.literals().to_vec()).collect();
        assert_eq!(
            lits,
            vec![
                vec![pos(w), neg(n(2, 0)), neg(n(2, 1))],
                vec![pos(n(1, 0)), neg(n(1, 2))]
            ]
        );
        assert!(ctx.gamma()[1].guard().is_none());
    }

    #[test]
    fn renaming_dec_clause() {
        // Two dec neurons in the last hidden layer merged by min.
        let net = crate::network::Network::new(vec![
            crate::network::Layer::new(
                vec![vec![1.0], vec![2.0]],
                vec![0.0; 2],
                crate::network::Activation::Relu,
            ),
            crate::network::Layer::new(vec![vec![-1.0, -1.0]], vec![0.0], crate::network::Activation::Identity),
        ])
        .unwrap();
        let lnet = LabeledNetwork::classified(net).unwrap();
        let (abs, mut record) = abstract_to_saturation(&lnet, &MergePolicy::Sequential).unwrap();
        let v = abs.layer_ids(1)[0];
        let (refined, undone) = record.refine_last().unwrap();
        let mut ctx = GammaContext::default();
        ctx.add_clause(Clause::new([pos(v)]).unwrap());
        ctx.rename_after_refinement(undone, &refined);
        assert_eq!(ctx.gamma()[0].literals(), &[pos(n(1, 0)), pos(n(1, 1))]);
        let mut ctx = GammaContext::default();
        ctx.add_clause(Clause::new([neg(v)]).unwrap());
        ctx.rename_after_refinement(undone, &refined);
        assert!(ctx.gamma().is_empty());
    }

    #[test]
    fn guarded_prune_on_running_example() {
        let (_, refined, undone) = refined_example();
        let mut ctx = GammaContext::default();
        ctx.add_clause(Clause::new([neg(undone.merged)]).unwrap());
        ctx.rename_after_refinement(undone, &refined);
        let branch = Branch::from([(n(2, 0), Phase::Active)]);
        let p = ctx.propagate(&branch, &refined);
        assert_eq!(p.forced.len(), 1);
        assert_eq!(p.forced[0].literal, neg(n(2, 1)));
        assert!(p.forced[0].guarded);
        assert!(guard_holds(&ctx.gamma()[0], &branch, &refined, neg(n(2, 1))));
    }

    #[test]
    fn guard_fails_on_mismatched_earlier_split() {
        let (_, refined, undone) = refined_example();
        let mut ctx = GammaContext::default();
        ctx.add_clause(Clause::new([neg(n(1, 1)), neg(undone.merged)]).unwrap());
        ctx.rename_after_refinement(undone, &refined);
        let clause = &ctx.gamma()[0];
        let same = Branch::from([(n(1, 1), Phase::Active), (n(2, 0), Phase::Active)]);
        assert!(guard_holds(clause, &same, &refined, neg(n(2, 1))));
        let flipped = Branch::from([(n(1, 1), Phase::Inactive), (n(2, 0), Phase::Active)]);
        assert!(!guard_holds(clause, &flipped, &refined, neg(n(2, 1))));
        assert!(ctx.propagate(&flipped, &refined).forced.is_empty());
    }

    #[test]
    fn guard_requires_later_layers_split() {
        // Refine a layer-1 merge of the running example so layer 2 lies after the refined layer.
        let net = unguarded_net();
        let policy = MergePolicy::Explicit(vec![(n(1, 0), n(1, 3))]);
        let (abs, mut record) = abstract_to_saturation(&net, &policy).unwrap();
        let v = abs.layer_ids(1)[0];
        let (refined, undone) = record.refine_last().unwrap();
        let layer2: Vec<NeuronId> = refined.layer_ids(2).to_vec();
        let safe: Vec<PhaseLiteral> = layer2
            .iter()
            .map(|&q| PhaseLiteral::new(q, !refined.class(q).unwrap().influence.eq(&Influence::Inc)))
            .collect();
        let mut ctx = GammaContext::default();
        ctx.add_clause(Clause::new(safe.iter().copied().chain([neg(v)])).unwrap());
        ctx.rename_after_refinement(undone, &refined);
        assert_eq!(ctx.gamma().len(), 1);
        let clause = ctx.gamma()[0].clone();
        let mut branch = Branch::from([(n(1, 0), Phase::Active)]);
        assert!(!guard_holds(&clause, &branch, &refined, neg(n(1, 3))));
        for l in &safe {
            branch.insert(l.neuron, l.negate().phase());
        }
        assert!(guard_holds(&clause, &branch, &refined, neg(n(1, 3))));
    }

    #[test]
    fn unsafe_later_literal_dropped() {
        let net = unguarded_net();
        let policy = MergePolicy::Explicit(vec![(n(1, 0), n(1, 3))]);
        let (abs, mut record) = abstract_to_saturation(&net, &policy).unwrap();
        let v = abs.layer_ids(1)[0];
        let (refined, undone) = record.refine_last().unwrap();
        let mut ctx = GammaContext::default();
        // v(2,0) is inc, so r(2,0) is unsafe after a layer-1 refinement.
        ctx.add_clause(Clause::new([pos(n(2, 0)), neg(v)]).unwrap());
        ctx.add_clause(Clause::new([pos(n(2, 0)), neg(n(1, 1))]).unwrap());
        ctx.rename_after_refinement(undone, &refined);
        assert!(ctx.gamma().is_empty());
    }
}
