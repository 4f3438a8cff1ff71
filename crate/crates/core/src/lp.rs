//! Linear feasibility over equalities and variable bounds.
//!
//! [`encode`] turns a network and a canonical query into a [`Tableau`]; the
//! ReLU pairs are recorded but ignored by [`solve`], which only decides the
//! linear part. Infeasible answers carry a [`Certificate`] that can be
//! checked against the raw rows without trusting the solver.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Network, NeuronId};
use crate::property::{OutputSense, Query};
use crate::{DELTA, EPSILON};

/// Largest bound violation a basic variable may have and still count as feasible.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;
/// Entries smaller than this are never pivoted on.
const PIVOT_TOLERANCE: f64 = 1e-9;
/// Row residual accepted for a returned assignment.
pub const RESIDUAL_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("query has {found} inputs, network expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("query must be canonical (y > c) before encoding")]
    NotCanonical,
    #[error("simplex exceeded {0} iterations")]
    IterationLimit(usize),
    #[error("assignment violates row {row} by {residual:e}")]
    Numerical { row: usize, residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundStatus {
    Ok,
    Failed,
}

/// `Σ coeff·x = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// Variables of one hidden neuron: `post = max(0, pre)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReluPair {
    /// Positional id in the encoded network.
    pub neuron: NeuronId,
    pub pre: usize,
    pub post: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tableau {
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Row>,
    pairs: Vec<ReluPair>,
    /// Index of the first pair of each hidden layer.
    layer_offsets: Vec<usize>,
    inputs: usize,
    output: usize,
    failed: Option<usize>,
}

impl Tableau {
    pub fn num_vars(&self) -> usize {
        self.lower.len()
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn lower(&self, var: usize) -> f64 {
        self.lower[var]
    }

    pub fn upper(&self, var: usize) -> f64 {
        self.upper[var]
    }

    pub fn relu_pairs(&self) -> &[ReluPair] {
        &self.pairs
    }

    pub fn input_vars(&self) -> Range<usize> {
        0..self.inputs
    }

    pub fn output_var(&self) -> usize {
        self.output
    }

    /// The pair of a positional neuron id.
    pub fn pair(&self, id: NeuronId) -> ReluPair {
        self.pairs[self.layer_offsets[id.layer - 1] + id.neuron]
    }

    /// Variable whose bounds crossed, if any assertion failed.
    pub fn failed(&self) -> Option<usize> {
        self.failed
    }

    /// Tightens one bound; never loosens.
    pub fn assert_bound(&mut self, var: usize, kind: BoundKind, value: f64) -> BoundStatus {
        match kind {
            BoundKind::Lower => self.lower[var] = self.lower[var].max(value),
            BoundKind::Upper => self.upper[var] = self.upper[var].min(value),
        }
        if self.failed.is_none() && self.lower[var] > self.upper[var] + EPSILON {
            self.failed = Some(var);
        }
        if self.failed.is_some() {
            BoundStatus::Failed
        } else {
            BoundStatus::Ok
        }
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(Row { coeffs, rhs });
    }

    /// Largest row residual and bound violation of an assignment.
    pub fn violation(&self, values: &[f64]) -> (f64, f64) {
        let residual = self
            .rows
            .iter()
            .map(|r| (r.coeffs.iter().map(|&(v, c)| c * values[v]).sum::<f64>() - r.rhs).abs())
            .fold(0.0, f64::max);
        let bounds = values
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (l, u))| (l - x).max(x - u).max(0.0))
            .fold(0.0, f64::max);
        (residual, bounds)
    }
}

/// Variables: inputs, then `(pre, post)` per hidden neuron in layer-major
/// order, then the output. Rows: one per hidden pre-activation plus the output.
///
/// First-layer pre-activations are bounded by their exact range over the
/// input box; every other pre-activation starts unbounded.
pub fn encode(net: &Network, q: &Query) -> Result<Tableau, LpError> {
    if q.sense != OutputSense::Greater {
        return Err(LpError::NotCanonical);
    }
    if q.width() != net.input_width() {
        return Err(LpError::Dimension {
            expected: net.input_width(),
            found: q.width(),
        });
    }
    let inputs = net.input_width();
    let hidden = net.hidden_neuron_count();
    let n = inputs + 2 * hidden + 1;
    let mut lower = vec![f64::NEG_INFINITY; n];
    let mut upper = vec![f64::INFINITY; n];
    lower[..inputs].copy_from_slice(&q.input_lower);
    upper[..inputs].copy_from_slice(&q.input_upper);

    let mut rows = Vec::new();
    let mut pairs = Vec::new();
    let mut layer_offsets = Vec::new();
    let mut prev: Vec<usize> = (0..inputs).collect();
    for (l, layer) in net.layers().iter().enumerate() {
        let hidden_layer = l < net.hidden_layers();
        if hidden_layer {
            layer_offsets.push(pairs.len());
        }
        let mut outs = Vec::with_capacity(layer.width());
        for (j, (weights, &bias)) in layer.weights.iter().zip(&layer.biases).enumerate() {
            let target = if hidden_layer { inputs + 2 * pairs.len() } else { n - 1 };
            let mut coeffs = vec![(target, 1.0)];
            coeffs.extend(
                prev.iter()
                    .zip(weights)
                    .filter(|(_, &w)| w != 0.0)
                    .map(|(&v, &w)| (v, -w)),
            );
            rows.push(Row { coeffs, rhs: bias });
            if hidden_layer {
                if l == 0 {
                    let (lo, hi) = weights
                        .iter()
                        .zip(q.input_lower.iter().zip(&q.input_upper))
                        .fold((bias, bias), |(lo, hi), (&w, (&a, &b))| {
                            (lo + (w * a).min(w * b), hi + (w * a).max(w * b))
                        });
                    lower[target] = lo;
                    upper[target] = hi;
                }
                lower[target + 1] = 0.0;
                pairs.push(ReluPair {
                    neuron: NeuronId::new(l + 1, j),
                    pre: target,
                    post: target + 1,
                });
                outs.push(target + 1);
            }
        }
        prev = outs;
    }
    lower[n - 1] = q.output_threshold + DELTA;
    Ok(Tableau {
        lower,
        upper,
        rows,
        pairs,
        layer_offsets,
        inputs,
        output: n - 1,
        failed: None,
    })
}

/// Proof that a tableau has no solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certificate {
    /// A variable whose lower bound exceeds its upper bound.
    Bounds { var: usize },
    /// Row multipliers `λ`: the implied equality `λᵀA·x = λᵀb` cannot hold within the bounds.
    Farkas { multipliers: Vec<f64> },
}

impl Certificate {
    /// Independent check against the raw rows and bounds.
    pub fn check(&self, t: &Tableau) -> bool {
        match self {
            Certificate::Bounds { var } => *var < t.num_vars() && t.lower[*var] > t.upper[*var],
            Certificate::Farkas { multipliers } => {
                if multipliers.len() != t.rows.len() {
                    return false;
                }
                let mut c = vec![0.0; t.num_vars()];
                let mut e = 0.0;
                for (row, &lambda) in t.rows.iter().zip(multipliers) {
                    for &(v, a) in &row.coeffs {
                        c[v] += lambda * a;
                    }
                    e += lambda * row.rhs;
                }
                let (mut lo, mut hi) = (0.0, 0.0);
                for (v, &cv) in c.iter().enumerate() {
                    let (l, u) = (t.lower[v], t.upper[v]);
                    if cv == 0.0 || (cv.abs() < PIVOT_TOLERANCE && !(l.is_finite() && u.is_finite())) {
                        continue;
                    }
                    let (a, b) = if cv > 0.0 { (cv * l, cv * u) } else { (cv * u, cv * l) };
                    lo += a;
                    hi += b;
                }
                let tol = 1e-10 * (1.0 + e.abs());
                e > hi + tol || e < lo - tol
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Feasible(Vec<f64>),
    Infeasible(Certificate),
}

impl LpOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, LpOutcome::Feasible(_))
    }
}

/// Bounded-variable simplex with Bland's rule, started from the all-slack basis.
pub fn solve(t: &Tableau) -> Result<LpOutcome, LpError> {
    if let Some(var) = t.failed {
        return Ok(LpOutcome::Infeasible(Certificate::Bounds { var }));
    }
    if let Some(var) = (0..t.num_vars()).find(|&v| t.lower[v] > t.upper[v] + EPSILON) {
        return Ok(LpOutcome::Infeasible(Certificate::Bounds { var }));
    }
    Simplex::new(t).run(t)
}

struct Simplex {
    n: usize,
    m: usize,
    width: usize,
    tab: Vec<f64>,
    basic: Vec<usize>,
    row_of: Vec<Option<usize>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
}

impl Simplex {
    fn new(t: &Tableau) -> Self {
        let n = t.num_vars();
        let m = t.rows.len();
        let width = n + m;
        let mut lo = t.lower.clone();
        let mut hi: Vec<f64> = t.upper.iter().zip(&t.lower).map(|(&u, &l)| u.max(l)).collect();
        let mut tab = vec![0.0; m * width];
        for (i, row) in t.rows.iter().enumerate() {
            for &(v, a) in &row.coeffs {
                tab[i * width + v] += a;
            }
            lo.push(row.rhs);
            hi.push(row.rhs);
        }
        let x = (0..width)
            .map(|v| {
                if v >= n {
                    0.0
                } else if lo[v].is_finite() {
                    lo[v]
                } else if hi[v].is_finite() {
                    hi[v]
                } else {
                    0.0
                }
            })
            .collect();
        let mut row_of = vec![None; width];
        for i in 0..m {
            row_of[n + i] = Some(i);
        }
        let mut s = Simplex {
            n,
            m,
            width,
            tab,
            basic: (n..width).collect(),
            row_of,
            lo,
            hi,
            x,
        };
        s.recompute_basics();
        s
    }

    fn entry(&self, i: usize, k: usize) -> f64 {
        self.tab[i * self.width + k]
    }

    fn recompute_basics(&mut self) {
        for i in 0..self.m {
            let row = &self.tab[i * self.width..(i + 1) * self.width];
            let value = row
                .iter()
                .zip(&self.x)
                .enumerate()
                .filter(|&(k, (a, _))| *a != 0.0 && self.row_of[k].is_none())
                .map(|(_, (a, x))| a * x)
                .sum();
            self.x[self.basic[i]] = value;
        }
    }

    fn run(mut self, t: &Tableau) -> Result<LpOutcome, LpError> {
        let cap = 20_000 + 100 * self.width;
        for _ in 0..cap {
            let violated = (0..self.m)
                .map(|i| (self.basic[i], i))
                .filter(|&(b, _)| {
                    self.x[b] < self.lo[b] - FEASIBILITY_TOLERANCE || self.x[b] > self.hi[b] + FEASIBILITY_TOLERANCE
                })
                .min();
            let Some((b, i)) = violated else {
                return self.finish(t);
            };
            let increase = self.x[b] < self.lo[b];
            let entering = (0..self.width).find(|&k| {
                if self.row_of[k].is_some() {
                    return false;
                }
                let a = self.entry(i, k);
                let can_up = self.x[k] < self.hi[k];
                let can_down = self.x[k] > self.lo[k];
                if increase {
                    (a > PIVOT_TOLERANCE && can_up) || (a < -PIVOT_TOLERANCE && can_down)
                } else {
                    (a > PIVOT_TOLERANCE && can_down) || (a < -PIVOT_TOLERANCE && can_up)
                }
            });
            let Some(k) = entering else {
                return Ok(LpOutcome::Infeasible(self.certificate(i)));
            };
            self.pivot(i, k);
            self.x[b] = if increase { self.lo[b] } else { self.hi[b] };
            self.recompute_basics();
        }
        Err(LpError::IterationLimit(cap))
    }

    fn pivot(&mut self, i: usize, k: usize) {
        let w = self.width;
        let b = self.basic[i];
        let a = self.entry(i, k);
        let mut pivot_row: Vec<f64> = self.tab[i * w..(i + 1) * w].iter().map(|v| -v / a).collect();
        pivot_row[k] = 0.0;
        pivot_row[b] = 1.0 / a;
        for r in 0..self.m {
            if r == i {
                continue;
            }
            let c = self.tab[r * w + k];
            if c == 0.0 {
                continue;
            }
            self.tab[r * w + k] = 0.0;
            for (dst, &p) in self.tab[r * w..(r + 1) * w].iter_mut().zip(&pivot_row) {
                if p != 0.0 {
                    *dst += c * p;
                }
            }
        }
        self.tab[i * w..(i + 1) * w].copy_from_slice(&pivot_row);
        self.basic[i] = k;
        self.row_of[k] = Some(i);
        self.row_of[b] = None;
    }

    fn certificate(&self, i: usize) -> Certificate {
        let b = self.basic[i];
        let multipliers = (0..self.m)
            .map(|r| {
                let slack = self.n + r;
                if slack == b {
                    1.0
                } else if self.row_of[slack].is_none() {
                    -self.entry(i, slack)
                } else {
                    0.0
                }
            })
            .collect();
        Certificate::Farkas { multipliers }
    }

    fn finish(self, t: &Tableau) -> Result<LpOutcome, LpError> {
        let values = self.x[..self.n].to_vec();
        for (row, r) in t.rows.iter().enumerate() {
            let residual = (r.coeffs.iter().map(|&(v, c)| c * values[v]).sum::<f64>() - r.rhs).abs();
            if residual > RESIDUAL_TOLERANCE * (1.0 + r.rhs.abs()) {
                return Err(LpError::Numerical { row, residual });
            }
        }
        Ok(LpOutcome::Feasible(values))
    }
}
