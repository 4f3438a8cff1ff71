//! Fixed inputs shared by the benchmarks.

use resinet::suite::{generate, Instance, SuiteParams};
use resinet::{Activation, Layer, Network, Query};

/// The 2-4-5-1 running example.
pub fn running_example() -> Network {
    Network::new(vec![
        Layer::new(
            vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![0.0, 2.0], vec![0.0, 1.0]],
            vec![0.0; 4],
            Activation::Relu,
        ),
        Layer::new(
            vec![
                vec![3.0, 0.0, -1.0, 0.0],
                vec![2.0, 0.0, -2.0, 0.0],
                vec![0.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 8.0],
                vec![0.0, 0.0, 0.0, 1.0],
            ],
            vec![0.0; 5],
            Activation::Relu,
        ),
        Layer::new(vec![vec![1.0, 1.0, -4.0, 1.0, 1.0]], vec![0.0], Activation::Identity),
    ])
    .expect("widths are consistent")
}

/// `y > 14` over the unit square.
pub fn running_query() -> Query {
    Query::new(vec![0.0, 0.0], vec![1.0, 1.0], 14.0).expect("valid box")
}

/// A small seeded suite for throughput measurements.
pub fn small_suite(count: usize) -> Vec<Instance> {
    generate(
        17,
        &SuiteParams {
            count,
            ..SuiteParams::default()
        },
    )
    .expect("suite generation")
}
