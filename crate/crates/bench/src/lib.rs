//! Deterministic fixtures shared by the benchmarks.

use plrs::spline::{GeneRecord, KnotSet};

/// A gene with `n` samples spread over the four states, with a monotone
/// piecewise response and deterministic jitter.
pub fn four_state_gene(n: usize) -> (GeneRecord, KnotSet) {
    let mut x = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let u = (i as f64 + 0.5) / n as f64;
        let (state, xi) = match i % 4 {
            0 => (-1, -1.0 + 0.6 * u),
            1 => (0, -0.2 + 0.4 * u),
            2 => (1, 0.3 + 0.5 * u),
            _ => (2, 1.0 + 0.8 * u),
        };
        let jitter = ((i * 7919) % 97) as f64 / 97.0 - 0.5;
        x.push(xi);
        s.push(state);
        y.push(2.0 + 0.3 * xi + if xi > 0.25 { 0.4 + 0.9 * (xi - 0.25) } else { 0.0 } + 0.2 * jitter);
    }
    let record = GeneRecord::from_vectors("bench", y, x, s).expect("valid fixture");
    let knots = KnotSet::new(vec![-0.3, 0.25, 0.9], vec![-1, 0, 1, 2]).expect("valid knots");
    (record, knots)
}
