//! Seeded random benchmark suites with oracle-calibrated thresholds.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{parse_network, serialize_network, Activation, Layer, Network, ParseError};
use crate::oracle::{brute_force_verify, OracleError};
use crate::preprocess::purify;
use crate::property::{parse_query, serialize_query, Query, QueryError, VerdictKind};

/// Gap around the threshold inside which the oracle verdict must not change.
pub const CALIBRATION_MARGIN: f64 = 0.02;
const CALIBRATION_SAMPLES: usize = 256;
const MAX_ATTEMPTS: usize = 64;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("invalid suite parameters: {0}")]
    Params(String),
    #[error("instance {0}: no calibrated instance after {MAX_ATTEMPTS} attempts")]
    Calibration(usize),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteParams {
    pub count: usize,
    pub min_inputs: usize,
    pub max_inputs: usize,
    pub min_hidden_layers: usize,
    pub max_hidden_layers: usize,
    pub max_width: usize,
    /// Cap on hidden neurons of the generated network.
    pub max_relus: usize,
    /// Cap on hidden neurons after purification.
    pub max_purified: usize,
    pub weight_range: f64,
    pub bias_range: f64,
    /// Fixed widths, input to output. Overrides the shape ranges.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<usize>>,
}

impl Default for SuiteParams {
    fn default() -> Self {
        SuiteParams {
            count: 100,
            min_inputs: 1,
            max_inputs: 4,
            min_hidden_layers: 1,
            max_hidden_layers: 3,
            max_width: 8,
            max_relus: 10,
            max_purified: 24,
            weight_range: 4.0,
            bias_range: 1.0,
            shape: None,
        }
    }
}

impl SuiteParams {
    fn validate(&self) -> Result<(), SuiteError> {
        let bad = |m: &str| Err(SuiteError::Params(m.to_string()));
        if let Some(shape) = &self.shape {
            if shape.len() < 2 || shape.contains(&0) || shape.last() != Some(&1) {
                return bad("shape needs at least two nonzero widths ending in 1");
            }
            let hidden: usize = shape[1..shape.len() - 1].iter().sum();
            if hidden > crate::oracle::MAX_ORACLE_RELUS {
                return bad("shape has too many hidden neurons for the oracle");
            }
            return Ok(());
        }
        if self.min_inputs == 0 || self.min_inputs > self.max_inputs {
            return bad("input range is empty");
        }
        if self.min_hidden_layers > self.max_hidden_layers {
            return bad("hidden layer range is empty");
        }
        if self.max_width == 0 || self.max_relus < self.max_hidden_layers.max(1) {
            return bad("width or ReLU cap too small for the layer count");
        }
        if self.max_relus > crate::oracle::MAX_ORACLE_RELUS {
            return bad("ReLU cap exceeds the oracle bound");
        }
        if !(self.weight_range >= 0.0 && self.bias_range >= 0.0) {
            return bad("ranges must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub name: String,
    pub network: Network,
    pub query: Query,
    pub expected: VerdictKind,
}

fn sample_shape(rng: &mut ChaCha8Rng, p: &SuiteParams) -> Vec<usize> {
    if let Some(shape) = &p.shape {
        return shape.clone();
    }
    let inputs = rng.random_range(p.min_inputs..=p.max_inputs);
    let depth = rng.random_range(p.min_hidden_layers..=p.max_hidden_layers);
    let mut budget = p.max_relus;
    let mut widths = vec![inputs];
    for i in 0..depth {
        // Leave at least one neuron for each remaining layer.
        let cap = (budget - (depth - i - 1)).min(p.max_width);
        let w = rng.random_range(1..=cap);
        budget -= w;
        widths.push(w);
    }
    widths.push(1);
    widths
}

fn sample_network(rng: &mut ChaCha8Rng, widths: &[usize], p: &SuiteParams) -> Network {
    let mut layers = Vec::with_capacity(widths.len() - 1);
    for (k, pair) in widths.windows(2).enumerate() {
        let (fan_in, width) = (pair[0], pair[1]);
        let mut uniform = |r: f64| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
        let weights = (0..width)
            .map(|_| (0..fan_in).map(|_| uniform(p.weight_range)).collect())
            .collect();
        let biases = (0..width).map(|_| uniform(p.bias_range)).collect();
        let activation = if k + 2 == widths.len() {
            Activation::Identity
        } else {
            Activation::Relu
        };
        layers.push(Layer::new(weights, biases, activation));
    }
    Network::new(layers).expect("generated widths are consistent")
}

fn oracle_kind(net: &Network, q: &Query) -> Result<VerdictKind, OracleError> {
    Ok(brute_force_verify(net, q)?.kind())
}

fn generate_one(seed: u64, index: usize, p: &SuiteParams) -> Result<Instance, SuiteError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    for _ in 0..MAX_ATTEMPTS {
        let widths = sample_shape(&mut rng, p);
        let network = sample_network(&mut rng, &widths, p);
        if p.shape.is_none() {
            let purified = purify(&network).map_err(|e| SuiteError::Params(e.to_string()))?;
            if purified.hidden_neuron_count() > p.max_purified {
                continue;
            }
        }
        let d = widths[0];
        let mut best = f64::NEG_INFINITY;
        let mut lowest = f64::INFINITY;
        for _ in 0..CALIBRATION_SAMPLES {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..=1.0)).collect();
            let y = network.output(&x).expect("sample has input width");
            best = best.max(y);
            lowest = lowest.min(y);
        }
        let spread = (best - lowest).max(0.1);
        // Even indices aim below the sampled maximum, odd ones above it.
        let offset = rng.random_range(0.05..=0.5) * spread;
        let c = if index.is_multiple_of(2) {
            best - offset
        } else {
            best + offset
        };
        let query = Query::new(vec![0.0; d], vec![1.0; d], c).expect("unit box is valid");
        let expected = oracle_kind(&network, &query)?;
        let shifted = match expected {
            VerdictKind::Sat => c + CALIBRATION_MARGIN,
            _ => c - CALIBRATION_MARGIN,
        };
        let probe = Query::new(vec![0.0; d], vec![1.0; d], shifted).expect("unit box is valid");
        if oracle_kind(&network, &probe)? != expected {
            continue;
        }
        return Ok(Instance {
            name: format!("inst{index:04}"),
            network,
            query,
            expected,
        });
    }
    Err(SuiteError::Calibration(index))
}

/// Generates `params.count` instances; instance `i` depends only on `seed` and `i`.
pub fn generate(seed: u64, params: &SuiteParams) -> Result<Vec<Instance>, SuiteError> {
    params.validate()?;
    (0..params.count)
        .into_par_iter()
        .map(|i| generate_one(seed, i, params))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub expected: VerdictKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub params: SuiteParams,
    pub instances: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SuiteError + '_ {
    move |source| SuiteError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn network_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.net.json"))
}

pub fn query_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.query.json"))
}

/// Writes one network and one query file per instance plus the manifest.
pub fn write_suite(dir: &Path, seed: u64, params: &SuiteParams, instances: &[Instance]) -> Result<(), SuiteError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for inst in instances {
        let p = network_path(dir, &inst.name);
        fs::write(&p, serialize_network(&inst.network)).map_err(io_err(&p))?;
        let p = query_path(dir, &inst.name);
        fs::write(&p, serialize_query(&inst.query)).map_err(io_err(&p))?;
    }
    let manifest = Manifest {
        seed,
        params: params.clone(),
        instances: instances
            .iter()
            .map(|i| ManifestEntry {
                name: i.name.clone(),
                expected: i.expected,
            })
            .collect(),
    };
    let p = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    text.push(b'\n');
    fs::write(&p, text).map_err(io_err(&p))
}

fn format_err(path: &Path, e: impl std::fmt::Display) -> SuiteError {
    SuiteError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn read_suite(dir: &Path) -> Result<(Manifest, Vec<Instance>), SuiteError> {
    let p = dir.join(MANIFEST_FILE);
    let text = fs::read(&p).map_err(io_err(&p))?;
    let manifest: Manifest = serde_json::from_slice(&text).map_err(|e| format_err(&p, e))?;
    let mut instances = Vec::with_capacity(manifest.instances.len());
    for entry in &manifest.instances {
        let p = network_path(dir, &entry.name);
        let bytes = fs::read(&p).map_err(io_err(&p))?;
        let network = parse_network(&bytes).map_err(|e: ParseError| format_err(&p, e))?;
        let p = query_path(dir, &entry.name);
        let bytes = fs::read(&p).map_err(io_err(&p))?;
        let query = parse_query(&bytes).map_err(|e: QueryError| format_err(&p, e))?;
        instances.push(Instance {
            name: entry.name.clone(),
            network,
            query,
            expected: entry.expected,
        });
    }
    Ok((manifest, instances))
}
