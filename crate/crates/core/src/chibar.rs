//! Level probabilities `w(p, h)` of the chi-bar-square and E-bar-square
//! mixtures for the cone `{C theta >= 0}` in the metric `G = X^T X`.
//!
//! `h` counts the constraints that do *not* bind at the projection of a
//! `N(0, G^{-1})` draw, so `h = p` is the probability that the draw already lies
//! in the cone.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::cqp::ConeProjector;
use crate::error::{PlrsError, Result};

pub const DEFAULT_SCREEN_DRAWS: usize = 10_000;
pub const DEFAULT_ACCEPTANCE_DRAWS: usize = 100_000;
pub const MIN_DRAWS: usize = 1_000;

/// Draws handled by one RNG stream; fixes the partition of work so results do
/// not depend on the thread count.
const BLOCK: usize = 2_048;

#[derive(Debug, Clone, PartialEq)]
pub struct ChibarWeights {
    /// Number of inequality constraints.
    pub p: usize,
    /// `w[h]`, `h = 0..=p`.
    pub w: Vec<f64>,
    pub n_draws: usize,
    /// Largest binomial standard error over the entries (zero when exact).
    pub mc_se: f64,
    pub exact: bool,
}

impl ChibarWeights {
    /// The trivial mixture for an unconstrained model.
    pub fn unconstrained() -> Self {
        ChibarWeights { p: 0, w: vec![1.0], n_draws: 0, mc_se: 0.0, exact: true }
    }

    /// `sum_h w(p, h) (k - p + h)`, the expected dimension of the projected
    /// estimator.
    pub fn expected_dimension(&self, k: usize) -> f64 {
        self.w
            .iter()
            .enumerate()
            .map(|(h, w)| w * (k as f64 - self.p as f64 + h as f64))
            .sum()
    }

    /// Per-entry Monte Carlo standard errors.
    pub fn standard_errors(&self) -> Vec<f64> {
        if self.exact || self.n_draws == 0 {
            return vec![0.0; self.w.len()];
        }
        self.w
            .iter()
            .map(|w| (w * (1.0 - w) / self.n_draws as f64).sqrt())
            .collect()
    }
}

/// Monte Carlo level probabilities. Reproducible bit-for-bit given the inputs
/// and `seed`, independent of how many threads evaluate the blocks.
pub fn weights_mc(c: &DMatrix<f64>, gram: &DMatrix<f64>, n_draws: usize, seed: u64) -> Result<ChibarWeights> {
    if n_draws < MIN_DRAWS {
        return Err(PlrsError::InvalidInput(format!("need at least {MIN_DRAWS} draws, got {n_draws}")));
    }
    let projector = ConeProjector::new(gram, c)?;
    let p = c.nrows();
    let k = gram.nrows();
    let blocks = n_draws.div_ceil(BLOCK);

    let counts: Vec<Vec<u64>> = (0..blocks)
        .into_par_iter()
        .map(|b| -> Result<Vec<u64>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let mut counts = vec![0u64; p + 1];
            let len = BLOCK.min(n_draws - b * BLOCK);
            let l = projector.metric_factor();
            let mut z = vec![0.0; k];
            for _ in 0..len {
                for zi in z.iter_mut() {
                    *zi = StandardNormal.sample(&mut rng);
                }
                // z <- L^{-T} u has covariance G^{-1}.
                for i in (0..k).rev() {
                    let mut s = z[i];
                    for j in (i + 1)..k {
                        s -= l[(j, i)] * z[j];
                    }
                    z[i] = s / l[(i, i)];
                }
                let active = match projector.active_count(&z) {
                    Ok(a) => a,
                    Err(_) => projector
                        .active_count(&z)
                        .map_err(|e| PlrsError::DrawFailed(e.to_string()))?,
                };
                counts[p - active.min(p)] += 1;
            }
            Ok(counts)
        })
        .collect::<Result<_>>()?;

    let mut total = vec![0u64; p + 1];
    for block in counts {
        for (t, c) in total.iter_mut().zip(block) {
            *t += c;
        }
    }
    let n = n_draws as f64;
    let w: Vec<f64> = total.iter().map(|c| *c as f64 / n).collect();
    let sum: f64 = w.iter().sum();
    let w: Vec<f64> = w.into_iter().map(|v| v / sum).collect();
    let mc_se = w.iter().map(|v| (v * (1.0 - v) / n).sqrt()).fold(0.0, f64::max);
    Ok(ChibarWeights { p, w, n_draws, mc_se, exact: false })
}

/// Closed-form level probabilities for at most two constraints.
pub fn weights_exact_small(c: &DMatrix<f64>, gram: &DMatrix<f64>) -> Result<ChibarWeights> {
    let p = c.nrows();
    let w = match p {
        0 => vec![1.0],
        1 => vec![0.5, 0.5],
        2 => {
            let projector = ConeProjector::new(gram, c)?;
            let v = projector.constraint_covariance();
            let rho = (v[1] / (v[0] * v[3]).sqrt()).clamp(-1.0, 1.0);
            let none_bind = 0.5 - rho.acos() / (2.0 * std::f64::consts::PI);
            vec![0.5 - none_bind, 0.5, none_bind]
        }
        _ => return Err(PlrsError::ExactWeightsUnavailable(p)),
    };
    Ok(ChibarWeights { p, w, n_draws: 0, mc_se: 0.0, exact: true })
}

/// Exact weights when available, Monte Carlo otherwise.
pub fn weights_for(c: &DMatrix<f64>, gram: &DMatrix<f64>, n_draws: usize, seed: u64) -> Result<ChibarWeights> {
    if c.nrows() <= 2 {
        weights_exact_small(c, gram)
    } else {
        weights_mc(c, gram, n_draws, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_space() {
        let g = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, -2.0]);
        let w = weights_mc(&c, &g, 20_000, 7).unwrap();
        assert!((w.w[0] - 0.5).abs() < 3.0 * w.mc_se);
        assert_eq!(weights_exact_small(&c, &g).unwrap().w, vec![0.5, 0.5]);
    }

    #[test]
    fn orthogonal_pair() {
        let g = DMatrix::identity(3, 3);
        let c = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let exact = weights_exact_small(&c, &g).unwrap();
        for (a, b) in exact.w.iter().zip([0.25, 0.5, 0.25]) {
            assert!((a - b).abs() < 1e-15);
        }
        let mc = weights_mc(&c, &g, 40_000, 11).unwrap();
        for (a, b) in mc.w.iter().zip(&exact.w) {
            assert!((a - b).abs() < 3.0 * mc.mc_se);
        }
    }

    #[test]
    fn reproducible_and_normalised() {
        let g = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let c = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, -1.0]);
        let a = weights_mc(&c, &g, 5_000, 3).unwrap();
        let b = weights_mc(&c, &g, 5_000, 3).unwrap();
        assert_eq!(a, b);
        assert!((a.w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(a.w.len(), 4);
    }

    #[test]
    fn too_few_draws() {
        let g = DMatrix::identity(1, 1);
        let c = DMatrix::identity(1, 1);
        assert!(weights_mc(&c, &g, 10, 0).is_err());
        assert!(weights_exact_small(&DMatrix::identity(3, 3), &DMatrix::identity(3, 3)).is_err());
    }
}
