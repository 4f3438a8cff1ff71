//! The abstraction-refinement loop.
//!
//! `plain` searches the original network once. `ar` and `ar4` merge the
//! purified network to saturation, search it, and on a spurious witness undo
//! the most recent merge and search again. `ar4` additionally keeps the
//! learned clauses across refinements.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::{abstract_to_saturation, AbstractionError, AbstractionRecord, LabeledNetwork, MergePolicy};
use crate::network::{Layer, Network, NetworkError};
use crate::preprocess::{purify, PreprocessError};
use crate::property::{canonicalize, check_witness, Query, QueryError, Verdict, VerdictKind};
use crate::residual::{Clause, GammaContext};
use crate::search::{verify, Limits, SearchConfig, SearchError, SearchStats};
use crate::trace::{TraceEvent, Tracer};

#[derive(Debug, Error)]
pub enum CegarError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Abstraction(#[from] AbstractionError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("the fully refined network produced a witness that fails on the original")]
    SpuriousOnOriginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Plain,
    Ar,
    #[default]
    Ar4,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Plain, Mode::Ar, Mode::Ar4];
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Plain => "plain",
            Mode::Ar => "ar",
            Mode::Ar4 => "ar4",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(Mode::Plain),
            "ar" => Ok(Mode::Ar),
            "ar4" => Ok(Mode::Ar4),
            other => Err(format!("unknown mode {other:?} (expected plain, ar or ar4)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub policy: MergePolicy,
    /// Per-iteration cap on visited search states.
    pub max_states: Option<u64>,
    /// Wall-clock budget shared by all iterations.
    pub timeout: Option<Duration>,
    pub trace: bool,
}

impl RunConfig {
    pub fn new(mode: Mode) -> Self {
        RunConfig {
            mode,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub index: usize,
    pub hidden_neurons: usize,
    pub verdict: VerdictKind,
    pub spurious: bool,
    pub stats: SearchStats,
    pub gamma_size: usize,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: Mode,
    pub verdict: VerdictKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<f64>>,
    pub merges: usize,
    pub refinements: usize,
    pub learned_before_refinement: u64,
    pub stats: SearchStats,
    pub iterations: Vec<IterationReport>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub verdict: Verdict,
    pub report: RunReport,
    /// Γ when the run ended.
    pub gamma: Vec<Clause>,
    pub trace: Vec<TraceEvent>,
}

/// Moves the box so every lower bound is at least zero by folding the
/// offset into the first layer's biases. Returns the offset to add back.
pub fn shift_inputs(net: &Network, q: &Query) -> (Network, Query, Vec<f64>) {
    let offset: Vec<f64> = q.input_lower.iter().map(|&l| l.min(0.0)).collect();
    if offset.iter().all(|&o| o == 0.0) {
        return (net.clone(), q.clone(), offset);
    }
    let mut layers = net.layers().to_vec();
    let first = &layers[0];
    let biases = first
        .weights
        .iter()
        .zip(&first.biases)
        .map(|(row, b)| b + row.iter().zip(&offset).map(|(w, o)| w * o).sum::<f64>())
        .collect();
    layers[0] = Layer::new(first.weights.clone(), biases, first.activation);
    let shifted = Network::new(layers).expect("shifting keeps structure");
    let query = Query {
        input_lower: q.input_lower.iter().zip(&offset).map(|(l, o)| l - o).collect(),
        input_upper: q.input_upper.iter().zip(&offset).map(|(u, o)| u - o).collect(),
        ..q.clone()
    };
    (shifted, query, offset)
}

/// Everything the loop needs before the first search.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Original network in canonical `y > c` form.
    pub network: Network,
    pub query: Query,
    /// Query over the shifted box that every searched network uses.
    pub search_query: Query,
    pub offset: Vec<f64>,
    pub start: LabeledNetwork,
    pub record: AbstractionRecord,
}

impl Prepared {
    pub fn unshift(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.offset)
            .zip(self.query.input_lower.iter().zip(&self.query.input_upper))
            .map(|((v, o), (l, u))| (v + o).clamp(*l, *u))
            .collect()
    }
}

pub fn prepare(original: &Network, q: &Query, mode: Mode, policy: &MergePolicy) -> Result<Prepared, CegarError> {
    original.ensure_single_output()?;
    q.check_width(original)?;
    let (network, query) = canonicalize(original, q);
    if mode == Mode::Plain {
        return Ok(Prepared {
            start: LabeledNetwork::unclassified(network.clone()),
            search_query: query.clone(),
            offset: vec![0.0; query.width()],
            network,
            query,
            record: AbstractionRecord::default(),
        });
    }
    let (shifted, search_query, offset) = shift_inputs(&network, &query);
    let pure = LabeledNetwork::classified(purify(&shifted)?)?;
    let (start, record) = abstract_to_saturation(&pure, policy)?;
    Ok(Prepared {
        network,
        query,
        search_query,
        offset,
        start,
        record,
    })
}

/// Whether an abstract witness also violates the property on the original network.
pub fn is_real_sat(original: &Network, q: &Query, witness: &[f64]) -> bool {
    check_witness(original, q, witness).unwrap_or(false)
}

pub fn run(original: &Network, q: &Query, config: &RunConfig) -> Result<RunOutput, CegarError> {
    let started = Instant::now();
    let deadline = config.timeout.map(|t| started + t);
    let mut tracer = if config.trace {
        Tracer::enabled()
    } else {
        Tracer::disabled()
    };
    tracer.emit(|| TraceEvent::Start {
        mode: config.mode,
        policy: config.policy.clone(),
    });
    let prep = prepare(original, q, config.mode, &config.policy)?;
    let merges = prep.record.len();
    let mut record = prep.record.clone();
    let mut current = prep.start.clone();
    let mut ctx = GammaContext::new(record.triples().collect());
    let search_config = match config.mode {
        Mode::Ar => SearchConfig::PLAIN,
        Mode::Plain | Mode::Ar4 => SearchConfig::RESIDUAL,
    };
    let limits = Limits {
        max_states: config.max_states,
        deadline,
    };

    let mut iterations = Vec::new();
    let mut total = SearchStats::default();
    let verdict = loop {
        let index = iterations.len();
        let widths = current.network().widths();
        let pending = record.len();
        tracer.emit(|| TraceEvent::Iteration {
            index,
            widths,
            pending_merges: pending,
        });
        tracing::debug!(mode = %config.mode, index, hidden = current.network().hidden_neuron_count(), "searching");
        let iter_start = Instant::now();
        let out = verify(
            &current,
            &prep.search_query,
            &mut ctx,
            search_config,
            limits,
            &mut tracer,
        )?;
        total += out.stats;
        let mut report = IterationReport {
            index,
            hidden_neurons: current.network().hidden_neuron_count(),
            verdict: out.verdict.kind(),
            spurious: false,
            stats: out.stats,
            gamma_size: ctx.gamma().len(),
            elapsed_ms: 0.0,
        };
        let finish = |mut report: IterationReport, iterations: &mut Vec<IterationReport>| {
            report.elapsed_ms = iter_start.elapsed().as_secs_f64() * 1e3;
            iterations.push(report);
        };
        match out.verdict {
            Verdict::Unsat | Verdict::Timeout => {
                finish(report, &mut iterations);
                break out.verdict;
            }
            Verdict::Sat(w) => {
                let x = prep.unshift(&w);
                if is_real_sat(&prep.network, &prep.query, &x) {
                    finish(report, &mut iterations);
                    break Verdict::Sat(x);
                }
                tracing::debug!(index, gamma = ctx.gamma().len(), "spurious witness");
                report.spurious = true;
                finish(report, &mut iterations);
                let spurious = x.clone();
                tracer.emit(|| TraceEvent::Spurious { witness: spurious });
                if record.is_empty() {
                    return Err(CegarError::SpuriousOnOriginal);
                }
                let (refined, undone) = record.refine_last()?;
                if config.mode == Mode::Ar4 {
                    ctx.rename_after_refinement(undone, &refined);
                } else {
                    ctx = GammaContext::new(record.triples().collect());
                }
                let gamma = ctx.gamma().to_vec();
                tracer.emit(|| TraceEvent::Refine { undone, gamma });
                current = refined;
            }
        }
    };
    let witness = verdict.witness().map(<[f64]>::to_vec);
    let kind = verdict.kind();
    let w = witness.clone();
    tracer.emit(|| TraceEvent::Verdict {
        verdict: kind,
        witness: w,
    });
    let report = RunReport {
        mode: config.mode,
        verdict: kind,
        witness,
        merges,
        refinements: iterations.len() - 1,
        learned_before_refinement: if iterations.len() > 1 {
            iterations[0].stats.learned
        } else {
            0
        },
        stats: total,
        iterations,
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    Ok(RunOutput {
        verdict,
        report,
        gamma: ctx.gamma().to_vec(),
        trace: tracer.into_events(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::running_example;
    use crate::network::{Activation, NeuronId};
    use crate::residual::PhaseLiteral;

    fn above_14() -> Query {
        Query::new(vec![0.0, 0.0], vec![1.0, 1.0], 14.0).unwrap()
    }

    fn example_config(mode: Mode) -> RunConfig {
        let n = NeuronId::new;
        RunConfig {
            mode,
            policy: MergePolicy::Explicit(vec![(n(2, 3), n(2, 4)), (n(2, 0), n(2, 1))]),
            trace: true,
            ..Default::default()
        }
    }

    #[test]
    fn running_example_all_modes_unsat() {
        for mode in Mode::ALL {
            let out = run(&running_example(), &above_14(), &example_config(mode)).unwrap();
            assert_eq!(out.verdict, Verdict::Unsat, "{mode}");
        }
    }

    #[test]
    fn running_example_first_iteration_spurious() {
        let out = run(&running_example(), &above_14(), &example_config(Mode::Ar4)).unwrap();
        let r = &out.report;
        assert_eq!(r.merges, 2);
        assert!(r.iterations[0].spurious);
        assert_eq!(r.iterations[0].hidden_neurons, 7);
        assert!(r.refinements >= 1 && r.refinements <= 2);
        let spurious = out.trace.iter().find_map(|e| match e {
            TraceEvent::Spurious { witness } => Some(witness.clone()),
            _ => None,
        });
        let x = spurious.unwrap();
        assert!(!is_real_sat(&running_example(), &above_14(), &x));
    }

    #[test]
    fn running_example_clause_transfer() {
        let out = run(&running_example(), &above_14(), &example_config(Mode::Ar4)).unwrap();
        let n = NeuronId::new;
        let refine = out.trace.iter().find_map(|e| match e {
            TraceEvent::Refine { gamma, .. } => Some(gamma.clone()),
            _ => None,
        });
        let gamma = refine.unwrap();
        let expected = [PhaseLiteral::new(n(2, 0), false), PhaseLiteral::new(n(2, 1), false)];
        assert!(gamma.iter().any(|c| c.literals() == expected));
        assert!(out.report.stats.prune_hits >= 1);
    }

    #[test]
    fn less_than_query() {
        let q = crate::property::parse_query(br#"{"input_lower":[0,0],"input_upper":[1,1],"output_lt":-2}"#).unwrap();
        for mode in Mode::ALL {
            let out = run(&running_example(), &q, &RunConfig::new(mode)).unwrap();
            let w = out.verdict.witness().expect("N(1,0) = -3").to_vec();
            assert!(check_witness(&running_example(), &q, &w).unwrap());
        }
    }

    #[test]
    fn negative_box_is_shifted() {
        let q = Query::new(vec![-1.0, -1.0], vec![1.0, 1.0], 8.5).unwrap();
        let (shifted, sq, offset) = shift_inputs(&running_example(), &q);
        assert_eq!(offset, vec![-1.0, -1.0]);
        assert_eq!(sq.input_lower, vec![0.0, 0.0]);
        for x in [[0.0, 0.0], [1.3, 0.2], [2.0, 2.0]] {
            let y = [x[0] - 1.0, x[1] - 1.0];
            assert!((shifted.output(&x).unwrap() - running_example().output(&y).unwrap()).abs() < 1e-12);
        }
        let verdicts: Vec<VerdictKind> = Mode::ALL
            .iter()
            .map(|&m| run(&running_example(), &q, &RunConfig::new(m)).unwrap().verdict.kind())
            .collect();
        assert!(verdicts.windows(2).all(|w| w[0] == w[1]), "{verdicts:?}");
    }

    #[test]
    fn class_distinct_network_has_no_merges() {
        let net = Network::new(vec![
            Layer::new(vec![vec![1.0], vec![1.0]], vec![0.0; 2], Activation::Relu),
            Layer::new(vec![vec![1.0, -1.0]], vec![0.0], Activation::Identity),
        ])
        .unwrap();
        let q = Query::new(vec![0.0], vec![1.0], 0.5).unwrap();
        let ar = run(&net, &q, &RunConfig::new(Mode::Ar)).unwrap();
        let plain = run(&net, &q, &RunConfig::new(Mode::Plain)).unwrap();
        assert_eq!(ar.report.merges, 0);
        assert_eq!(ar.report.refinements, 0);
        assert_eq!(ar.verdict, plain.verdict);
    }

    #[test]
    fn report_json_round_trip() {
        let out = run(&running_example(), &above_14(), &RunConfig::new(Mode::Ar4)).unwrap();
        let text = serde_json::to_string(&out.report).unwrap();
        let back: RunReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, out.report);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("ar4".parse::<Mode>().unwrap(), Mode::Ar4);
        assert!("fast".parse::<Mode>().is_err());
        assert_eq!(Mode::Plain.to_string(), "plain");
    }
}
