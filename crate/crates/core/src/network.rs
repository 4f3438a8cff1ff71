//! Feed-forward ReLU networks: construction, evaluation and the JSON format.
//!
//! A [`Network`] is a list of dense layers. The input layer is implicit; its
//! width is the column count of the first weight matrix. Every hidden layer
//! uses ReLU and the final layer is linear (identity).
//!
//! Neurons are addressed by [`NeuronId`], where `layer` counts from 1 for the
//! first hidden layer (layer 0 is the input) and `neuron` is a 0-based index.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("network has no layers")]
    Empty,
    #[error("layer {layer} has no neurons")]
    EmptyLayer { layer: usize },
    #[error("layer {layer}: {rows} weight rows but {biases} biases")]
    BiasMismatch { layer: usize, rows: usize, biases: usize },
    #[error("layers[{layer}].weights[{row}]: expected {expected} columns, found {found}")]
    ColumnMismatch {
        layer: usize,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("layer {layer}: hidden layers must use relu")]
    HiddenNotRelu { layer: usize },
    #[error("output layer must use identity activation")]
    OutputNotIdentity,
    #[error("expected a single output neuron, found {0}")]
    NotSingleOutput(usize),
    #[error("layers[{layer}]: non-finite parameter")]
    NonFinite { layer: usize },
    #[error("input has length {found}, network expects {expected}")]
    InputShape { expected: usize, found: usize },
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("malformed network JSON at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid network: {0}")]
    Invalid(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// One row per neuron of this layer, one column per neuron of the previous layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Vec<Vec<f64>>, biases: Vec<f64>, activation: Activation) -> Self {
        Layer {
            weights,
            biases,
            activation,
        }
    }

    pub fn width(&self) -> usize {
        self.biases.len()
    }

    pub fn fan_in(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn pre_activation(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }
}

/// Position of a neuron. `layer` 0 is the input layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NeuronId {
    pub layer: usize,
    pub neuron: usize,
}

impl NeuronId {
    pub const fn new(layer: usize, neuron: usize) -> Self {
        NeuronId { layer, neuron }
    }
}

impl fmt::Display for NeuronId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v({},{})", self.layer, self.neuron)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalTrace {
    /// `pre[i]` holds the weighted sums of layer `i + 1`.
    pub pre: Vec<Vec<f64>>,
    /// `post[i]` holds the activations of layer `i + 1`.
    pub post: Vec<Vec<f64>>,
    pub output: f64,
}

impl EvalTrace {
    pub fn pre_of(&self, id: NeuronId) -> f64 {
        self.pre[id.layer - 1][id.neuron]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNetwork", into = "RawNetwork")]
pub struct Network {
    layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
struct RawNetwork {
    layers: Vec<Layer>,
}

impl TryFrom<RawNetwork> for Network {
    type Error = NetworkError;

    fn try_from(raw: RawNetwork) -> Result<Self, Self::Error> {
        Network::new(raw.layers)
    }
}

impl From<Network> for RawNetwork {
    fn from(net: Network) -> Self {
        RawNetwork { layers: net.layers }
    }
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self, NetworkError> {
        if layers.is_empty() {
            return Err(NetworkError::Empty);
        }
        let last = layers.len() - 1;
        let mut prev_width = None;
        for (i, layer) in layers.iter().enumerate() {
            if layer.biases.is_empty() {
                return Err(NetworkError::EmptyLayer { layer: i });
            }
            if layer.weights.len() != layer.biases.len() {
                return Err(NetworkError::BiasMismatch {
                    layer: i,
                    rows: layer.weights.len(),
                    biases: layer.biases.len(),
                });
            }
            let expected = prev_width.unwrap_or_else(|| layer.fan_in());
            if expected == 0 {
                return Err(NetworkError::ColumnMismatch {
                    layer: i,
                    row: 0,
                    expected: 1,
                    found: 0,
                });
            }
            for (row, weights) in layer.weights.iter().enumerate() {
                if weights.len() != expected {
                    return Err(NetworkError::ColumnMismatch {
                        layer: i,
                        row,
                        expected,
                        found: weights.len(),
                    });
                }
            }
            let finite = layer
                .biases
                .iter()
                .chain(layer.weights.iter().flatten())
                .all(|v| v.is_finite());
            if !finite {
                return Err(NetworkError::NonFinite { layer: i });
            }
            match (i == last, layer.activation) {
                (true, Activation::Identity) | (false, Activation::Relu) => {}
                (true, Activation::Relu) => return Err(NetworkError::OutputNotIdentity),
                (false, Activation::Identity) => return Err(NetworkError::HiddenNotRelu { layer: i }),
            }
            prev_width = Some(layer.width());
        }
        Ok(Network { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].width()
    }

    /// Number of hidden (ReLU) layers.
    pub fn hidden_layers(&self) -> usize {
        self.layers.len() - 1
    }

    /// Widths of every layer, input first.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_width())
            .chain(self.layers.iter().map(Layer::width))
            .collect()
    }

    pub fn hidden_neuron_count(&self) -> usize {
        self.layers[..self.hidden_layers()].iter().map(Layer::width).sum()
    }

    /// Hidden neurons in layer-major order.
    pub fn hidden_neurons(&self) -> impl Iterator<Item = NeuronId> + '_ {
        self.layers[..self.hidden_layers()]
            .iter()
            .enumerate()
            .flat_map(|(i, l)| (0..l.width()).map(move |j| NeuronId::new(i + 1, j)))
    }

    /// Layer `index` in the 1-based numbering used by [`NeuronId`].
    pub fn layer(&self, index: usize) -> &Layer {
        &self.layers[index - 1]
    }

    pub fn ensure_single_output(&self) -> Result<(), NetworkError> {
        match self.output_width() {
            1 => Ok(()),
            n => Err(NetworkError::NotSingleOutput(n)),
        }
    }

    pub fn evaluate(&self, input: &[f64]) -> Result<EvalTrace, NetworkError> {
        if input.len() != self.input_width() {
            return Err(NetworkError::InputShape {
                expected: self.input_width(),
                found: input.len(),
            });
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut current = input.to_vec();
        for layer in &self.layers {
            let sums = layer.pre_activation(&current);
            current = match layer.activation {
                Activation::Relu => sums.iter().map(|v| v.max(0.0)).collect(),
                Activation::Identity => sums.clone(),
            };
            pre.push(sums);
            post.push(current.clone());
        }
        let output = current[0];
        Ok(EvalTrace { pre, post, output })
    }

    /// Output of the first output neuron.
    pub fn output(&self, input: &[f64]) -> Result<f64, NetworkError> {
        self.evaluate(input).map(|t| t.output)
    }

    pub(crate) fn into_layers(self) -> Vec<Layer> {
        self.layers
    }
}

pub fn parse_network(text: &[u8]) -> Result<Network, ParseError> {
    // Structural checks run after syntax so that dimension problems keep their layer/row location.
    let raw: RawNetwork = serde_json::from_slice(text).map_err(|e| ParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Ok(Network::new(raw.layers)?)
}

/// Compact JSON with shortest round-trip float formatting.
pub fn serialize_network(net: &Network) -> Vec<u8> {
    serde_json::to_vec(net).expect("network serialization is infallible")
}


#[cfg(test)]
mod tests {
    use super::fixtures::running_example;
    use super::*;

    #[test]
    fn running_example_output_at_0_1() {
        let t = running_example().evaluate(&[0.0, 1.0]).unwrap();
        assert_eq!(t.output, 9.0);
        assert_eq!(t.pre[1], vec![-2.0, -4.0, 0.0, 8.0, 1.0]);
        assert_eq!(t.pre[0], vec![0.0, 0.0, 2.0, 1.0]);
    }

    #[test]
    fn running_example_output_at_3_1() {
        assert_eq!(running_example().output(&[3.0, 1.0]).unwrap(), -6.0);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Network::new(vec![
            Layer::new(vec![vec![0.0; 3]; 2], vec![0.0; 2], Activation::Relu),
            Layer::new(vec![vec![0.0; 2]], vec![0.0], Activation::Identity),
        ])
        .unwrap();
        assert_eq!(net.output(&[1.5, -2.0, 7.0]).unwrap(), 0.0);
    }

    #[test]
    fn input_shape_checked() {
        let err = running_example().evaluate(&[1.0]).unwrap_err();
        assert_eq!(err, NetworkError::InputShape { expected: 2, found: 1 });
    }

    #[test]
    fn parse_running_example_widths() {
        let text = serialize_network(&running_example());
        let net = parse_network(&text).unwrap();
        assert_eq!(net.widths(), vec![2, 4, 5, 1]);
        assert_eq!(net, running_example());
    }

    #[test]
    fn serialization_is_deterministic() {
        assert_eq!(
            serialize_network(&running_example()),
            serialize_network(&running_example())
        );
    }

    #[test]
    fn column_mismatch_reports_location() {
        let text = br#"{"layers":[
            {"weights":[[1,2],[3,4]],"biases":[0,0],"activation":"relu"},
            {"weights":[[1,2,3]],"biases":[0],"activation":"identity"}]}"#;
        match parse_network(text).unwrap_err() {
            ParseError::Invalid(NetworkError::ColumnMismatch {
                layer: 1,
                row: 0,
                expected: 2,
                found: 3,
            }) => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_network(b"{\"layers\": [").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { line: 1, .. }), "{err}");
    }

    #[test]
    fn unsupported_activation_rejected() {
        let text = br#"{"layers":[{"weights":[[1]],"biases":[0],"activation":"tanh"}]}"#;
        assert!(matches!(parse_network(text), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn empty_hidden_layer_rejected() {
        let err = Network::new(vec![
            Layer::new(vec![], vec![], Activation::Relu),
            Layer::new(vec![vec![]], vec![0.0], Activation::Identity),
        ])
        .unwrap_err();
        assert_eq!(err, NetworkError::EmptyLayer { layer: 0 });
    }

    #[test]
    fn activation_placement_checked() {
        let err = Network::new(vec![Layer::new(vec![vec![1.0]], vec![0.0], Activation::Relu)]).unwrap_err();
        assert_eq!(err, NetworkError::OutputNotIdentity);
        let err = Network::new(vec![
            Layer::new(vec![vec![1.0]], vec![0.0], Activation::Identity),
            Layer::new(vec![vec![1.0]], vec![0.0], Activation::Identity),
        ])
        .unwrap_err();
        assert_eq!(err, NetworkError::HiddenNotRelu { layer: 0 });
    }
}
