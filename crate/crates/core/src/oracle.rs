//! Ground truth for small networks: one LP per phase pattern, plus grid search.
//!
//! The phase assertions here are written out independently of the search
//! engine so that a bug there cannot hide itself.

use rayon::prelude::*;
use thiserror::Error;

use crate::lp::{encode, solve, BoundKind, BoundStatus, LpError, LpOutcome};
use crate::network::{Network, NetworkError};
use crate::property::{canonicalize, check_witness, Query, Verdict};

pub const MAX_ORACLE_RELUS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{0} ReLUs exceed the enumeration bound of {MAX_ORACLE_RELUS}")]
    TooManyRelus(usize),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Enumerates all `2^k` phase patterns in lexicographic order (active = 0,
/// first hidden neuron most significant) and returns the first feasible one.
pub fn brute_force_verify(net: &Network, q: &Query) -> Result<Verdict, OracleError> {
    net.ensure_single_output()?;
    let (net, q) = canonicalize(net, q);
    let base = encode(&net, &q)?;
    let k = base.relu_pairs().len();
    if k > MAX_ORACLE_RELUS {
        return Err(OracleError::TooManyRelus(k));
    }
    let found = (0..1u64 << k).into_par_iter().find_map_first(|pattern| {
        let mut t = base.clone();
        for (i, pair) in base.relu_pairs().iter().enumerate() {
            let inactive = (pattern >> (k - 1 - i)) & 1 == 1;
            let status = if inactive {
                t.assert_bound(pair.pre, BoundKind::Upper, 0.0);
                t.assert_bound(pair.post, BoundKind::Upper, 0.0)
            } else {
                t.add_row(vec![(pair.pre, 1.0), (pair.post, -1.0)], 0.0);
                t.assert_bound(pair.pre, BoundKind::Lower, 0.0)
            };
            if status == BoundStatus::Failed {
                return None;
            }
        }
        match solve(&t) {
            Err(e) => Some(Err(e)),
            Ok(LpOutcome::Infeasible(_)) => None,
            Ok(LpOutcome::Feasible(alpha)) => {
                let consistent = base
                    .relu_pairs()
                    .iter()
                    .all(|p| (alpha[p.post] - alpha[p.pre].max(0.0)).abs() <= 1e-6);
                let x: Vec<f64> = t
                    .input_vars()
                    .map(|v| alpha[v].clamp(q.input_lower[v], q.input_upper[v]))
                    .collect();
                // A pattern that is feasible only up to tolerance does not count.
                (consistent && check_witness(&net, &q, &x).unwrap_or(false)).then_some(Ok(x))
            }
        }
    });
    match found {
        None => Ok(Verdict::Unsat),
        Some(Ok(w)) => Ok(Verdict::Sat(w)),
        Some(Err(e)) => Err(e.into()),
    }
}

/// First point of a `resolution^d` grid over the box that is a witness.
/// With resolution 1 only the lower corner is tried.
pub fn grid_search(net: &Network, q: &Query, resolution: usize) -> Option<Vec<f64>> {
    let d = q.width();
    let r = resolution.max(1);
    let total = r.checked_pow(d as u32)?;
    let coord = |axis: usize, i: usize| {
        let (l, u) = (q.input_lower[axis], q.input_upper[axis]);
        if r == 1 {
            l
        } else if i == r - 1 {
            u
        } else {
            l + (u - l) * i as f64 / (r - 1) as f64
        }
    };
    (0..total).find_map(|mut index| {
        let mut x = vec![0.0; d];
        for axis in (0..d).rev() {
            x[axis] = coord(axis, index % r);
            index /= r;
        }
        check_witness(net, q, &x).ok()?.then_some(x)
    })
}
