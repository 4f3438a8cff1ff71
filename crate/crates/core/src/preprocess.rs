//! Neuron classification (pos/neg, inc/dec) and purification.
//!
//! A hidden neuron is *inc* when raising its value can only raise the single
//! output, and *dec* when raising it can only lower the output. It is *pos*
//! when all of its outgoing weights are nonnegative and *neg* otherwise. A
//! network is *pure* when every hidden neuron has exactly one such class,
//! which is what neuron merging requires.
//!
//! Zero-weight edges carry no influence and are ignored by both
//! [`classify`] and [`purify`]. A neuron whose outgoing edges are all zero is
//! classified `(pos, inc)`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Activation, Layer, Network, NetworkError, NeuronId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("neuron {0} has no single class; purify the network first")]
    NotPure(NeuronId),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Pos,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Influence {
    Inc,
    Dec,
}

impl Influence {
    pub fn flip(self) -> Self {
        match self {
            Influence::Inc => Influence::Dec,
            Influence::Dec => Influence::Inc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NeuronClass {
    pub sign: Sign,
    pub influence: Influence,
}

impl NeuronClass {
    pub const fn new(sign: Sign, influence: Influence) -> Self {
        NeuronClass { sign, influence }
    }
}

impl fmt::Display for NeuronClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.sign {
            Sign::Pos => "pos",
            Sign::Neg => "neg",
        };
        let i = match self.influence {
            Influence::Inc => "inc",
            Influence::Dec => "dec",
        };
        write!(f, "({s},{i})")
    }
}

pub type Classification = BTreeMap<NeuronId, NeuronClass>;

/// Class an edge of weight `w` into a successor of influence `succ` would impose.
fn edge_class(w: f64, succ: Influence) -> NeuronClass {
    if w >= 0.0 {
        NeuronClass::new(Sign::Pos, succ)
    } else {
        NeuronClass::new(Sign::Neg, succ.flip())
    }
}

const ALL_ZERO_CLASS: NeuronClass = NeuronClass::new(Sign::Pos, Influence::Inc);

/// Classes of the neurons in `layers[index]` given the influences of the next layer.
fn layer_edge_classes(next: &Layer, succ: &[Influence], neuron: usize) -> Vec<NeuronClass> {
    next.weights
        .iter()
        .zip(succ)
        .filter(|(row, _)| row[neuron] != 0.0)
        .map(|(row, &s)| edge_class(row[neuron], s))
        .collect()
}

pub fn classify(net: &Network) -> Result<Classification, PreprocessError> {
    net.ensure_single_output()?;
    let layers = net.layers();
    let mut classes = Classification::new();
    let mut succ = vec![Influence::Inc];
    for index in (0..net.hidden_layers()).rev() {
        let next = &layers[index + 1];
        let mut influences = Vec::with_capacity(layers[index].width());
        for neuron in 0..layers[index].width() {
            let id = NeuronId::new(index + 1, neuron);
            let edge_classes = layer_edge_classes(next, &succ, neuron);
            let class = match edge_classes.split_first() {
                None => ALL_ZERO_CLASS,
                Some((first, rest)) if rest.iter().all(|c| c == first) => *first,
                Some(_) => return Err(PreprocessError::NotPure(id)),
            };
            classes.insert(id, class);
            influences.push(class.influence);
        }
        succ = influences;
    }
    Ok(classes)
}

/// Splits every hidden neuron into at most four copies, one per class, so that
/// the result is pure and computes the same function.
///
/// Layers are processed from last to first. Copy `(s, t)` keeps only the
/// outgoing edges that impose class `(s, t)`; every copy duplicates the full
/// incoming row and bias.
pub fn purify(net: &Network) -> Result<Network, PreprocessError> {
    net.ensure_single_output()?;
    let mut layers = net.layers().to_vec();
    let mut succ = vec![Influence::Inc];
    for index in (0..net.hidden_layers()).rev() {
        let (head, tail) = layers.split_at_mut(index + 1);
        let current = &mut head[index];
        let next = &mut tail[0];

        let mut rows = Vec::new();
        let mut biases = Vec::new();
        let mut influences = Vec::new();
        // Column blocks for the next layer, one per copy.
        let mut columns: Vec<Vec<f64>> = Vec::new();
        for neuron in 0..current.width() {
            let mut buckets: BTreeMap<NeuronClass, Vec<f64>> = BTreeMap::new();
            for (u, row) in next.weights.iter().enumerate() {
                let w = row[neuron];
                if w != 0.0 {
                    let column = buckets
                        .entry(edge_class(w, succ[u]))
                        .or_insert_with(|| vec![0.0; next.width()]);
                    column[u] = w;
                }
            }
            if buckets.is_empty() {
                buckets.insert(ALL_ZERO_CLASS, vec![0.0; next.width()]);
            }
            for (class, column) in buckets {
                rows.push(current.weights[neuron].clone());
                biases.push(current.biases[neuron]);
                influences.push(class.influence);
                columns.push(column);
            }
        }
        *current = Layer::new(rows, biases, Activation::Relu);
        let next_rows = (0..next.width())
            .map(|u| columns.iter().map(|c| c[u]).collect())
            .collect();
        *next = Layer::new(next_rows, next.biases.clone(), next.activation);
        succ = influences;
    }
    Ok(Network::new(layers)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::running_example;

    #[test]
    fn running_example_classes() {
        let classes = classify(&running_example()).unwrap();
        let dec = NeuronClass::new(Sign::Neg, Influence::Dec);
        assert_eq!(classes[&NeuronId::new(2, 2)], dec);
        assert_eq!(classes[&NeuronId::new(2, 0)].influence, Influence::Inc);
        assert_eq!(classes[&NeuronId::new(2, 1)].influence, Influence::Inc);
        assert_eq!(
            classes[&NeuronId::new(1, 1)],
            NeuronClass::new(Sign::Pos, Influence::Dec)
        );
        assert_eq!(
            classes[&NeuronId::new(1, 2)],
            NeuronClass::new(Sign::Neg, Influence::Dec)
        );
    }

    #[test]
    fn running_example_already_pure() {
        assert_eq!(purify(&running_example()).unwrap(), running_example());
    }

    #[test]
    fn positive_single_layer_is_pos_inc() {
        let net = Network::new(vec![
            Layer::new(
                vec![vec![1.0, 2.0], vec![0.5, 0.1], vec![3.0, 1.0]],
                vec![0.0; 3],
                Activation::Relu,
            ),
            Layer::new(vec![vec![1.0, 2.0, 0.5]], vec![0.0], Activation::Identity),
        ])
        .unwrap();
        let classes = classify(&net).unwrap();
        assert!(classes
            .values()
            .all(|c| *c == NeuronClass::new(Sign::Pos, Influence::Inc)));
    }

    fn mixed() -> Network {
        // v(1,0) feeds both inc successors, once positively and once negatively.
        Network::new(vec![
            Layer::new(vec![vec![1.0, -1.0]], vec![0.5], Activation::Relu),
            Layer::new(vec![vec![1.0], vec![-1.0]], vec![0.0, 0.25], Activation::Relu),
            Layer::new(vec![vec![1.0, 2.0]], vec![0.0], Activation::Identity),
        ])
        .unwrap()
    }

    #[test]
    fn mixed_neuron_is_not_pure() {
        assert_eq!(
            classify(&mixed()).unwrap_err(),
            PreprocessError::NotPure(NeuronId::new(1, 0))
        );
    }

    #[test]
    fn mixed_neuron_split_into_two_copies() {
        let pure = purify(&mixed()).unwrap();
        assert_eq!(pure.widths(), vec![2, 2, 2, 1]);
        let classes = classify(&pure).unwrap();
        assert_eq!(
            classes[&NeuronId::new(1, 0)],
            NeuronClass::new(Sign::Pos, Influence::Inc)
        );
        assert_eq!(
            classes[&NeuronId::new(1, 1)],
            NeuronClass::new(Sign::Neg, Influence::Dec)
        );
        // Both copies keep the incoming row; each keeps one outgoing edge.
        assert_eq!(pure.layer(1).weights, vec![vec![1.0, -1.0], vec![1.0, -1.0]]);
        assert_eq!(pure.layer(2).weights, vec![vec![1.0, 0.0], vec![0.0, -1.0]]);
        for x in [[0.0, 0.0], [1.0, 0.3], [0.2, 0.9], [-1.0, 2.0]] {
            assert!((pure.output(&x).unwrap() - mixed().output(&x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn single_hidden_neuron_unchanged() {
        let net = Network::new(vec![
            Layer::new(vec![vec![2.0, -1.0]], vec![1.0], Activation::Relu),
            Layer::new(vec![vec![-3.0]], vec![0.0], Activation::Identity),
        ])
        .unwrap();
        assert_eq!(purify(&net).unwrap(), net);
    }

    #[test]
    fn all_zero_neuron_is_pos_inc() {
        let net = Network::new(vec![
            Layer::new(vec![vec![1.0], vec![1.0]], vec![0.0, 0.0], Activation::Relu),
            Layer::new(vec![vec![0.0, -2.0]], vec![0.0], Activation::Identity),
        ])
        .unwrap();
        let classes = classify(&net).unwrap();
        assert_eq!(classes[&NeuronId::new(1, 0)], ALL_ZERO_CLASS);
        assert_eq!(purify(&net).unwrap(), net);
    }
}
