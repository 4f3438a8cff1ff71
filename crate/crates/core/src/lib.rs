//! Verification of feed-forward ReLU networks by neuron-merging abstraction
//! refinement, with learned phase clauses carried across refinement steps.
//!
//! The pipeline for one query is: [`canonicalize`] the property, shift the
//! input box so it starts at zero, [`purify`] the network, merge neurons to
//! saturation ([`abstract_to_saturation`]), then alternate case-splitting
//! search ([`verify`]) with single-step refinement ([`refine_last`]) until a
//! verdict holds for the original network. [`run`] drives the whole loop.

pub mod abstraction;
pub mod cegar;
pub mod lp;
pub mod network;
pub mod oracle;
pub mod preprocess;
pub mod property;
pub mod residual;
pub mod search;
pub mod suite;
pub mod trace;

/// Comparison tolerance for strict sign and threshold tests.
pub const EPSILON: f64 = 1e-8;

/// Margin used to encode the strict output bound `y > c` as `y >= c + DELTA`.
pub const DELTA: f64 = 1e-6;

pub use abstraction::{
    abstract_to_saturation, can_abstract, merge_pair, refine_last, AbstractionError, AbstractionRecord, LabeledNetwork,
    MergePolicy, MergeTriple,
};
pub use cegar::{is_real_sat, run, shift_inputs, CegarError, Mode, RunConfig, RunOutput, RunReport};
pub use lp::{encode, solve, BoundKind, BoundStatus, Certificate, LpError, LpOutcome, Tableau};
pub use network::{
    parse_network, serialize_network, Activation, EvalTrace, Layer, Network, NetworkError, NeuronId, ParseError,
};
pub use oracle::{brute_force_verify, grid_search, OracleError};
pub use preprocess::{classify, purify, Classification, Influence, NeuronClass, PreprocessError, Sign};
pub use property::{
    canonicalize, check_witness, classify_witness, parse_query, serialize_query, OutputSense, Query, QueryError,
    Verdict, VerdictKind, WitnessStatus,
};
pub use residual::{Branch, Clause, GammaContext, GuardInfo, Phase, PhaseLiteral, ResidualError};
pub use search::{check_success, pick_split, verify, Limits, SearchConfig, SearchError, SearchOutcome, SearchStats};
pub use trace::{validate_trace, TraceEvent, TraceReport, Tracer};
