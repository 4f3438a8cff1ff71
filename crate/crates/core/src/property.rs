//! Verification queries: an input box and an output threshold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Activation, Layer, Network, NetworkError};
use crate::EPSILON;

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("malformed query JSON at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("input bounds have lengths {lower} and {upper}")]
    LengthMismatch { lower: usize, upper: usize },
    #[error("input {index}: lower bound {lower} exceeds upper bound {upper}")]
    EmptyBox { index: usize, lower: f64, upper: f64 },
    #[error("query has {found} inputs, network expects {expected}")]
    Width { expected: usize, found: usize },
    #[error("query must give exactly one of output_gt / output_lt")]
    Threshold,
    #[error("non-finite bound or threshold")]
    NonFinite,
}

/// Direction of the output constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputSense {
    /// `y > c`, the canonical form.
    #[default]
    Greater,
    /// `y < c`, reduced to the canonical form by [`canonicalize`].
    Less,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQuery", into = "RawQuery")]
pub struct Query {
    pub input_lower: Vec<f64>,
    pub input_upper: Vec<f64>,
    pub output_threshold: f64,
    pub sense: OutputSense,
}

#[derive(Serialize, Deserialize)]
struct RawQuery {
    input_lower: Vec<f64>,
    input_upper: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_gt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_lt: Option<f64>,
}

impl TryFrom<RawQuery> for Query {
    type Error = QueryError;

    fn try_from(raw: RawQuery) -> Result<Self, QueryError> {
        let (output_threshold, sense) = match (raw.output_gt, raw.output_lt) {
            (Some(c), None) => (c, OutputSense::Greater),
            (None, Some(c)) => (c, OutputSense::Less),
            _ => return Err(QueryError::Threshold),
        };
        let q = Query {
            input_lower: raw.input_lower,
            input_upper: raw.input_upper,
            output_threshold,
            sense,
        };
        q.validate()?;
        Ok(q)
    }
}

impl From<Query> for RawQuery {
    fn from(q: Query) -> Self {
        let (output_gt, output_lt) = match q.sense {
            OutputSense::Greater => (Some(q.output_threshold), None),
            OutputSense::Less => (None, Some(q.output_threshold)),
        };
        RawQuery {
            input_lower: q.input_lower,
            input_upper: q.input_upper,
            output_gt,
            output_lt,
        }
    }
}

impl Query {
    /// A canonical `l <= x <= u, y > c` query.
    pub fn new(input_lower: Vec<f64>, input_upper: Vec<f64>, output_threshold: f64) -> Result<Self, QueryError> {
        let q = Query {
            input_lower,
            input_upper,
            output_threshold,
            sense: OutputSense::Greater,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<(), QueryError> {
        if self.input_lower.len() != self.input_upper.len() {
            return Err(QueryError::LengthMismatch {
                lower: self.input_lower.len(),
                upper: self.input_upper.len(),
            });
        }
        let all = self.input_lower.iter().chain(&self.input_upper);
        if !self.output_threshold.is_finite() || all.into_iter().any(|v| !v.is_finite()) {
            return Err(QueryError::NonFinite);
        }
        for (index, (&lower, &upper)) in self.input_lower.iter().zip(&self.input_upper).enumerate() {
            if lower > upper {
                return Err(QueryError::EmptyBox { index, lower, upper });
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.input_lower.len()
    }

    pub fn check_width(&self, net: &Network) -> Result<(), QueryError> {
        if self.width() != net.input_width() {
            return Err(QueryError::Width {
                expected: net.input_width(),
                found: self.width(),
            });
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.width()
            && x.iter()
                .zip(self.input_lower.iter().zip(&self.input_upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }
}

pub fn parse_query(text: &[u8]) -> Result<Query, QueryError> {
    serde_json::from_slice(text).map_err(|e| QueryError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn serialize_query(q: &Query) -> Vec<u8> {
    serde_json::to_vec(q).expect("query serialization is infallible")
}

/// Rewrites a `y < c` query as `-y > -c` by negating the output layer.
/// Canonical queries are returned unchanged.
pub fn canonicalize(net: &Network, q: &Query) -> (Network, Query) {
    match q.sense {
        OutputSense::Greater => (net.clone(), q.clone()),
        OutputSense::Less => {
            let mut layers = net.layers().to_vec();
            let out = layers.last_mut().expect("network has an output layer");
            let negated = Layer::new(
                out.weights.iter().map(|r| r.iter().map(|w| -w).collect()).collect(),
                out.biases.iter().map(|b| -b).collect(),
                Activation::Identity,
            );
            *out = negated;
            let net = Network::new(layers).expect("negation preserves structure");
            let q = Query {
                output_threshold: -q.output_threshold,
                sense: OutputSense::Greater,
                ..q.clone()
            };
            (net, q)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "witness", rename_all = "UPPERCASE")]
pub enum Verdict {
    Unsat,
    Sat(Vec<f64>),
    Timeout,
}

impl Verdict {
    pub fn kind(&self) -> VerdictKind {
        match self {
            Verdict::Unsat => VerdictKind::Unsat,
            Verdict::Sat(_) => VerdictKind::Sat,
            Verdict::Timeout => VerdictKind::Timeout,
        }
    }

    pub fn witness(&self) -> Option<&[f64]> {
        match self {
            Verdict::Sat(w) => Some(w),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum VerdictKind {
    Sat,
    Unsat,
    Timeout,
}

impl std::fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VerdictKind::Sat => "SAT",
            VerdictKind::Unsat => "UNSAT",
            VerdictKind::Timeout => "TIMEOUT",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WitnessStatus {
    Holds,
    /// Output within tolerance of the threshold.
    Boundary,
    Violated,
    OutsideBox,
}

pub fn classify_witness(net: &Network, q: &Query, x: &[f64]) -> Result<WitnessStatus, NetworkError> {
    let y = net.output(x)?;
    if !q.contains(x) {
        return Ok(WitnessStatus::OutsideBox);
    }
    let margin = match q.sense {
        OutputSense::Greater => y - q.output_threshold,
        OutputSense::Less => q.output_threshold - y,
    };
    Ok(if margin > EPSILON {
        WitnessStatus::Holds
    } else if margin < -EPSILON {
        WitnessStatus::Violated
    } else {
        WitnessStatus::Boundary
    })
}

/// True iff `x` lies in the box and the output strictly clears the threshold.
pub fn check_witness(net: &Network, q: &Query, x: &[f64]) -> Result<bool, NetworkError> {
    Ok(classify_witness(net, q, x)? == WitnessStatus::Holds)
}
