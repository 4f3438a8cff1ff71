//! Neuron merging and its reverse-order undo.
//!
//! Merging works on a [`LabeledNetwork`]: a network whose hidden neurons
//! carry stable identities that survive the position shifts caused by
//! merges. The merged neuron receives a fresh id in its layer and takes the
//! smaller of the two positions.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Layer, Network, NeuronId};
use crate::preprocess::{classify, Classification, Influence, NeuronClass, PreprocessError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AbstractionError {
    #[error("neurons {0} and {1} cannot be merged")]
    Incompatible(NeuronId, NeuronId),
    #[error("unknown neuron {0}")]
    UnknownNeuron(NeuronId),
    #[error("abstraction record is empty; the network is already fully refined")]
    CannotRefine,
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

/// A network with stable hidden-neuron identities and their classes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledNetwork {
    network: Network,
    /// `ids[l][p]` is the stable id of the neuron at position `p` of hidden layer `l + 1`.
    ids: Vec<Vec<NeuronId>>,
    classes: Classification,
    next_fresh: Vec<usize>,
}

impl LabeledNetwork {
    /// Labels a pure network; ids start out equal to positions.
    pub fn classified(network: Network) -> Result<Self, AbstractionError> {
        let classes = classify(&network)?;
        Ok(Self::with_classes(network, classes))
    }

    /// Labels an arbitrary network without classes. Such a network cannot be merged.
    pub fn unclassified(network: Network) -> Self {
        Self::with_classes(network, Classification::new())
    }

    fn with_classes(network: Network, classes: Classification) -> Self {
        let widths: Vec<usize> = network.layers()[..network.hidden_layers()]
            .iter()
            .map(Layer::width)
            .collect();
        let ids = widths
            .iter()
            .enumerate()
            .map(|(l, &w)| (0..w).map(|p| NeuronId::new(l + 1, p)).collect())
            .collect();
        LabeledNetwork {
            network,
            ids,
            classes,
            next_fresh: widths,
        }
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn classes(&self) -> &Classification {
        &self.classes
    }

    pub fn class(&self, id: NeuronId) -> Option<NeuronClass> {
        self.classes.get(&id).copied()
    }

    /// Stable ids of hidden layer `layer` (1-based), by position.
    pub fn layer_ids(&self, layer: usize) -> &[NeuronId] {
        &self.ids[layer - 1]
    }

    pub fn hidden_layers(&self) -> usize {
        self.ids.len()
    }

    /// All hidden stable ids in topological (layer-major, position-minor) order.
    pub fn hidden_ids(&self) -> impl Iterator<Item = NeuronId> + '_ {
        self.ids.iter().flatten().copied()
    }

    pub fn position(&self, id: NeuronId) -> Option<usize> {
        self.ids.get(id.layer.checked_sub(1)?)?.iter().position(|&x| x == id)
    }

    /// Stable id of the neuron at a positional id.
    pub fn stable_id(&self, positional: NeuronId) -> NeuronId {
        self.ids[positional.layer - 1][positional.neuron]
    }

    /// Positional id of a stable id.
    pub fn positional(&self, id: NeuronId) -> Option<NeuronId> {
        self.position(id).map(|p| NeuronId::new(id.layer, p))
    }

    pub fn contains(&self, id: NeuronId) -> bool {
        self.position(id).is_some()
    }

    /// Evaluates every hidden neuron's pre-activation, keyed by stable id.
    pub fn pre_activations(&self, input: &[f64]) -> Result<BTreeMap<NeuronId, f64>, crate::NetworkError> {
        let trace = self.network.evaluate(input)?;
        Ok(self
            .ids
            .iter()
            .enumerate()
            .flat_map(|(l, layer)| layer.iter().enumerate().map(move |(p, &id)| (l, p, id)))
            .map(|(l, p, id)| (id, trace.pre[l][p]))
            .collect())
    }
}

/// One merge: `merged` replaced `left` and `right`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeTriple {
    pub merged: NeuronId,
    pub left: NeuronId,
    pub right: NeuronId,
}

/// Ordered merges with the labeled network as it was before each one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AbstractionRecord {
    steps: Vec<(MergeTriple, LabeledNetwork)>,
}

impl AbstractionRecord {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn triples(&self) -> impl Iterator<Item = MergeTriple> + '_ {
        self.steps.iter().map(|(t, _)| *t)
    }

    /// Network before the `i`-th merge.
    pub fn snapshot(&self, i: usize) -> &LabeledNetwork {
        &self.steps[i].1
    }

    pub fn push(&mut self, triple: MergeTriple, before: LabeledNetwork) {
        self.steps.push((triple, before));
    }

    /// Undoes the most recent merge.
    pub fn refine_last(&mut self) -> Result<(LabeledNetwork, MergeTriple), AbstractionError> {
        let (triple, before) = self.steps.pop().ok_or(AbstractionError::CannotRefine)?;
        Ok((before, triple))
    }
}

/// Two distinct hidden neurons of the same layer and class.
pub fn can_abstract(net: &LabeledNetwork, v1: NeuronId, v2: NeuronId) -> bool {
    if v1 == v2 || v1.layer != v2.layer || !net.contains(v1) || !net.contains(v2) {
        return false;
    }
    match (net.class(v1), net.class(v2)) {
        (Some(a), Some(b)) => a == b,
        _ => false,
    }
}

pub fn merge_pair(
    net: &LabeledNetwork,
    v1: NeuronId,
    v2: NeuronId,
) -> Result<(LabeledNetwork, MergeTriple), AbstractionError> {
    if !can_abstract(net, v1, v2) {
        for v in [v1, v2] {
            if !net.contains(v) {
                return Err(AbstractionError::UnknownNeuron(v));
            }
        }
        return Err(AbstractionError::Incompatible(v1, v2));
    }
    let class = net.class(v1).expect("checked by can_abstract");
    let (p1, p2) = (net.position(v1).unwrap(), net.position(v2).unwrap());
    let (keep, drop) = (p1.min(p2), p1.max(p2));
    let l = v1.layer - 1;
    let pick = match class.influence {
        Influence::Inc => f64::max,
        Influence::Dec => f64::min,
    };

    let mut layers = net.network.clone().into_layers();
    let current = &mut layers[l];
    let row: Vec<f64> = current.weights[p1]
        .iter()
        .zip(&current.weights[p2])
        .map(|(&a, &b)| pick(a, b))
        .collect();
    let bias = pick(current.biases[p1], current.biases[p2]);
    current.weights[keep] = row;
    current.biases[keep] = bias;
    current.weights.remove(drop);
    current.biases.remove(drop);
    for next_row in &mut layers[l + 1].weights {
        next_row[keep] = next_row[p1] + next_row[p2];
        next_row.remove(drop);
    }
    let network = Network::new(layers).expect("merging preserves structure");

    let merged = NeuronId::new(v1.layer, net.next_fresh[l]);
    let mut out = LabeledNetwork {
        network,
        ids: net.ids.clone(),
        classes: net.classes.clone(),
        next_fresh: net.next_fresh.clone(),
    };
    out.next_fresh[l] += 1;
    out.ids[l][keep] = merged;
    out.ids[l].remove(drop);
    out.classes.remove(&v1);
    out.classes.remove(&v2);
    out.classes.insert(merged, class);
    Ok((
        out,
        MergeTriple {
            merged,
            left: v1,
            right: v2,
        },
    ))
}

/// Order in which compatible pairs are merged.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergePolicy {
    /// Layers left to right; within a layer, the first compatible pair by position, until saturated.
    #[default]
    Sequential,
    /// Uniformly random compatible pair, until saturated.
    Seeded(u64),
    /// Exactly these merges, in order, with no saturation pass.
    Explicit(Vec<(NeuronId, NeuronId)>),
}

fn first_pair_in_layer(net: &LabeledNetwork, layer: usize) -> Option<(NeuronId, NeuronId)> {
    let ids = net.layer_ids(layer);
    for (i, &a) in ids.iter().enumerate() {
        for &b in &ids[i + 1..] {
            if can_abstract(net, a, b) {
                return Some((a, b));
            }
        }
    }
    None
}

fn all_pairs(net: &LabeledNetwork) -> Vec<(NeuronId, NeuronId)> {
    let mut pairs = Vec::new();
    for layer in 1..=net.hidden_layers() {
        let ids = net.layer_ids(layer);
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                if can_abstract(net, a, b) {
                    pairs.push((a, b));
                }
            }
        }
    }
    pairs
}

pub fn abstract_to_saturation(
    net: &LabeledNetwork,
    policy: &MergePolicy,
) -> Result<(LabeledNetwork, AbstractionRecord), AbstractionError> {
    let mut record = AbstractionRecord::default();
    let mut current = net.clone();
    let mut step = |current: &mut LabeledNetwork, a, b| -> Result<(), AbstractionError> {
        let (next, triple) = merge_pair(current, a, b)?;
        record.push(triple, std::mem::replace(current, next));
        Ok(())
    };
    match policy {
        MergePolicy::Sequential => {
            for layer in 1..=current.hidden_layers() {
                while let Some((a, b)) = first_pair_in_layer(&current, layer) {
                    step(&mut current, a, b)?;
                }
            }
        }
        MergePolicy::Seeded(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            loop {
                let pairs = all_pairs(&current);
                let Some(&(a, b)) = pairs.choose(&mut rng) else { break };
                step(&mut current, a, b)?;
            }
        }
        MergePolicy::Explicit(pairs) => {
            for &(a, b) in pairs {
                step(&mut current, a, b)?;
            }
        }
    }
    Ok((current, record))
}

/// Free-function form of [`AbstractionRecord::refine_last`].
pub fn refine_last(record: &mut AbstractionRecord) -> Result<(LabeledNetwork, MergeTriple), AbstractionError> {
    record.refine_last()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::running_example;
    use crate::network::Activation;

    fn n(l: usize, j: usize) -> NeuronId {
        NeuronId::new(l, j)
    }

    fn example_policy() -> MergePolicy {
        MergePolicy::Explicit(vec![(n(2, 3), n(2, 4)), (n(2, 0), n(2, 1))])
    }

    #[test]
    fn can_abstract_example_pairs() {
        let net = LabeledNetwork::classified(running_example()).unwrap();
        assert!(can_abstract(&net, n(2, 0), n(2, 1)));
        assert!(!can_abstract(&net, n(2, 0), n(2, 2)));
        assert!(!can_abstract(&net, n(2, 0), n(2, 0)));
        assert!(!can_abstract(&net, n(1, 0), n(2, 0)));
    }

    #[test]
    fn merged_example_weights() {
        let net = LabeledNetwork::classified(running_example()).unwrap();
        let (abs, record) = abstract_to_saturation(&net, &example_policy()).unwrap();
        let l2 = abs.network().layer(2);
        assert_eq!(
            l2.weights,
            vec![
                vec![3.0, 0.0, -1.0, 0.0],
                vec![0.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 8.0]
            ]
        );
        assert_eq!(abs.network().layer(3).weights, vec![vec![2.0, -4.0, 2.0]]);
        assert_eq!(record.len(), 2);
        assert_eq!(abs.output(&[0.0, 1.0]), 16.0);
        assert_eq!(abs.output(&[3.0, 1.0]), 6.0);
    }

    impl LabeledNetwork {
        fn output(&self, x: &[f64]) -> f64 {
            self.network.output(x).unwrap()
        }
    }

    #[test]
    fn refined_once_after_one_refinement() {
        let net = LabeledNetwork::classified(running_example()).unwrap();
        let (_, mut record) = abstract_to_saturation(&net, &example_policy()).unwrap();
        let (refined, undone) = record.refine_last().unwrap();
        assert_eq!((undone.left, undone.right), (n(2, 0), n(2, 1)));
        assert_eq!(refined.layer_ids(2), &[n(2, 0), n(2, 1), n(2, 2), n(2, 5)]);
        assert_eq!(refined.network().layer(3).weights, vec![vec![1.0, 1.0, -4.0, 2.0]]);
        assert_eq!(refined.output(&[3.0, 1.0]), 1.0);
        let (original, _) = record.refine_last().unwrap();
        assert_eq!(original.network(), &running_example());
        assert_eq!(record.refine_last().unwrap_err(), AbstractionError::CannotRefine);
    }

    #[test]
    fn sequential_saturates_one_neuron_per_class() {
        let net = LabeledNetwork::classified(running_example()).unwrap();
        let (abs, record) = abstract_to_saturation(&net, &MergePolicy::Sequential).unwrap();
        // Layer 1 holds classes (pos,inc), (pos,dec), (neg,dec); layer 2 holds (pos,inc), (neg,dec).
        assert_eq!(abs.network().widths(), vec![2, 3, 2, 1]);
        assert_eq!(record.len(), 4);
        for layer in 1..=2 {
            let ids = abs.layer_ids(layer);
            for (i, &a) in ids.iter().enumerate() {
                assert!(ids[i + 1..].iter().all(|&b| !can_abstract(&abs, a, b)));
            }
        }
    }

    #[test]
    fn k_same_class_neurons_merge_to_one() {
        let k = 5;
        let net = Network::new(vec![
            Layer::new(
                (0..k).map(|i| vec![i as f64 - 2.0]).collect(),
                vec![0.5; k],
                Activation::Relu,
            ),
            Layer::new(vec![vec![1.0; k]], vec![0.0], Activation::Identity),
        ])
        .unwrap();
        let lnet = LabeledNetwork::classified(net).unwrap();
        let (abs, record) = abstract_to_saturation(&lnet, &MergePolicy::Sequential).unwrap();
        assert_eq!(abs.network().widths(), vec![1, 1, 1]);
        assert_eq!(record.len(), k - 1);
    }

    #[test]
    fn distinct_classes_unchanged() {
        let net = Network::new(vec![
            Layer::new(vec![vec![1.0], vec![1.0]], vec![0.0; 2], Activation::Relu),
            Layer::new(vec![vec![1.0, -1.0]], vec![0.0], Activation::Identity),
        ])
        .unwrap();
        let lnet = LabeledNetwork::classified(net.clone()).unwrap();
        for policy in [MergePolicy::Sequential, MergePolicy::Seeded(3)] {
            let (abs, record) = abstract_to_saturation(&lnet, &policy).unwrap();
            assert!(record.is_empty());
            assert_eq!(abs.network(), &net);
        }
    }

    #[test]
    fn identical_neurons_double_outgoing() {
        let net = Network::new(vec![
            Layer::new(vec![vec![2.0, 1.0], vec![2.0, 1.0]], vec![0.5, 0.5], Activation::Relu),
            Layer::new(vec![vec![1.5, 1.5]], vec![0.0], Activation::Identity),
        ])
        .unwrap();
        let lnet = LabeledNetwork::classified(net.clone()).unwrap();
        let (merged, _) = merge_pair(&lnet, n(1, 0), n(1, 1)).unwrap();
        assert_eq!(merged.network().layer(1).weights, vec![vec![2.0, 1.0]]);
        assert_eq!(merged.network().layer(2).weights, vec![vec![3.0]]);
        for x in [[0.0, 0.0], [0.3, 0.9], [1.0, 0.2]] {
            assert_eq!(merged.output(&x), net.output(&x).unwrap());
        }
    }

    #[test]
    fn undo_is_bit_exact() {
        let net = LabeledNetwork::classified(running_example()).unwrap();
        let (merged, triple) = merge_pair(&net, n(2, 3), n(2, 4)).unwrap();
        let mut record = AbstractionRecord::default();
        record.push(triple, net.clone());
        let (restored, _) = record.refine_last().unwrap();
        assert_eq!(restored, net);
        assert_ne!(merged, net);
    }

    #[test]
    fn seeded_policy_is_reproducible() {
        let net = LabeledNetwork::classified(running_example()).unwrap();
        let a = abstract_to_saturation(&net, &MergePolicy::Seeded(7)).unwrap();
        let b = abstract_to_saturation(&net, &MergePolicy::Seeded(7)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0.network().widths(), vec![2, 3, 2, 1]);
    }

    #[test]
    fn incompatible_merge_rejected() {
        let net = LabeledNetwork::classified(running_example()).unwrap();
        assert_eq!(
            merge_pair(&net, n(2, 0), n(2, 2)).unwrap_err(),
            AbstractionError::Incompatible(n(2, 0), n(2, 2))
        );
        assert_eq!(
            merge_pair(&net, n(2, 0), n(2, 9)).unwrap_err(),
            AbstractionError::UnknownNeuron(n(2, 9))
        );
    }
}
