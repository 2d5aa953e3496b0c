//! Testing `H0: C theta = 0` against `H1: C theta >= 0` (at least one strict)
//! with the E-bar-square statistic and its beta-mixture null, plus
//! Benjamini-Hochberg q-values.

use statrs::function::beta::beta_reg;

use crate::chibar::{weights_for, ChibarWeights};
use crate::cqp::{fit_equality, fit_inequality, fit_unconstrained, FitResult};
use crate::error::{PlrsError, Result};
use crate::spline::{build_design, design_from_covariate, DesignSystem, GeneRecord, KnotSet, SplineSpec};

/// Which beta mixture to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixtureVariant {
    /// Null of the screening test: `Beta(h/2, (n-k)/2)`, `h = 0` a point mass at zero.
    Test,
    /// Confidence region including the intercept: `Beta((h+1)/2, (n-k)/2)`.
    Band,
}

/// `sum_h w(p, h) Beta(a_h, (n - k)/2)`.
#[derive(Debug, Clone)]
pub struct BetaMixture {
    weights: Vec<f64>,
    first_shapes: Vec<f64>,
    second_shape: f64,
}

impl BetaMixture {
    pub fn new(weights: &ChibarWeights, n: usize, k: usize, variant: MixtureVariant) -> Result<Self> {
        if n <= k {
            return Err(PlrsError::InsufficientObservations { n, k });
        }
        let first_shapes = (0..weights.w.len())
            .map(|h| match variant {
                MixtureVariant::Test => h as f64 / 2.0,
                MixtureVariant::Band => (h as f64 + 1.0) / 2.0,
            })
            .collect();
        Ok(BetaMixture {
            weights: weights.w.clone(),
            first_shapes,
            second_shape: (n - k) as f64 / 2.0,
        })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        self.weights
            .iter()
            .zip(&self.first_shapes)
            .map(|(w, &a)| if a == 0.0 { *w } else { w * beta_reg(a, self.second_shape, x) })
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    /// Upper tail probability; the p-value of an observed statistic.
    pub fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        if x >= 1.0 {
            return 0.0;
        }
        self.weights
            .iter()
            .zip(&self.first_shapes)
            .map(|(w, &a)| {
                if a == 0.0 {
                    0.0
                } else {
                    w * beta_reg(self.second_shape, a, 1.0 - x)
                }
            })
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    /// Smallest `x` with `cdf(x) >= level`, by bisection.
    pub fn quantile(&self, level: f64) -> Result<f64> {
        if !(level > 0.0 && level < 1.0) {
            return Err(PlrsError::QuantileNotBracketed(level));
        }
        if self.cdf(0.0) >= level {
            return Ok(0.0);
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) >= level {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

pub fn mixture_pvalue(ebar: f64, weights: &ChibarWeights, n: usize, k: usize, variant: MixtureVariant) -> Result<f64> {
    Ok(BetaMixture::new(weights, n, k, variant)?.sf(ebar))
}

pub fn mixture_quantile(level: f64, weights: &ChibarWeights, n: usize, k: usize, variant: MixtureVariant) -> Result<f64> {
    BetaMixture::new(weights, n, k, variant)?.quantile(level)
}

/// The three fits behind the statistic and the statistic itself.
#[derive(Debug, Clone)]
pub struct EbarStatistic {
    pub ebar: f64,
    /// `min_{C theta = 0} RSS - min_{C theta >= 0} RSS`.
    pub lr: f64,
    /// `(inequality - equality)^T X^T X (inequality - equality)`.
    pub delta: f64,
    pub inequality: FitResult,
    pub equality: FitResult,
    pub unconstrained: FitResult,
}

pub fn ebar_statistic(d: &DesignSystem, y: &[f64]) -> Result<EbarStatistic> {
    let (n, k) = (d.n(), d.k());
    if n <= k {
        return Err(PlrsError::InsufficientObservations { n, k });
    }
    let inequality = fit_inequality(d, y)?;
    let equality = fit_equality(d, y)?;
    let unconstrained = fit_unconstrained(d, y)?;
    let diff = &inequality.theta - &equality.theta;
    let delta = (&d.gram * &diff).dot(&diff).max(0.0);
    let denom = delta + unconstrained.rss;
    let ebar = if denom > 0.0 { (delta / denom).clamp(0.0, 1.0) } else { 0.0 };
    let lr = equality.rss - inequality.rss;
    Ok(EbarStatistic { ebar, lr, delta, inequality, equality, unconstrained })
}

#[derive(Debug, Clone)]
pub struct TestResult {
    pub lr: f64,
    pub ebar: f64,
    pub pvalue: f64,
    pub weights_used: ChibarWeights,
    pub df_residual: usize,
    pub statistic: EbarStatistic,
}

/// PLRS test of the full model for one gene.
pub fn plrs_test(record: &GeneRecord, knotset: &KnotSet, mc_draws: usize, seed: u64) -> Result<TestResult> {
    let spec = SplineSpec::full(knotset.clone());
    let d = build_design(record, &spec)?;
    test_design(&d, &record.y, mc_draws, seed)
}

pub fn test_design(d: &DesignSystem, y: &[f64], mc_draws: usize, seed: u64) -> Result<TestResult> {
    let statistic = ebar_statistic(d, y)?;
    let weights = weights_for(&d.c, &d.gram, mc_draws, seed)?;
    let pvalue = mixture_pvalue(statistic.ebar, &weights, d.n(), d.k(), MixtureVariant::Test)?;
    Ok(TestResult {
        lr: statistic.lr,
        ebar: statistic.ebar,
        pvalue,
        weights_used: weights,
        df_residual: d.n() - d.k(),
        statistic,
    })
}

/// F-test of the intercept-only model against unconstrained simple linear
/// regression.
pub fn lm_test(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = y.len();
    if n <= 2 {
        return Err(PlrsError::InsufficientObservations { n, k: 2 });
    }
    let spec = SplineSpec::new(KnotSet::single(0), vec![true, true])?;
    let d = design_from_covariate(x, &spec)?;
    let full = fit_unconstrained(&d, y)?;
    let mean = y.iter().sum::<f64>() / n as f64;
    let rss0: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let df2 = (n - 2) as f64;
    if full.rss <= 0.0 {
        return Ok(if rss0 > 0.0 { 0.0 } else { 1.0 });
    }
    let f = ((rss0 - full.rss).max(0.0)) / (full.rss / df2);
    Ok(beta_reg(df2 / 2.0, 0.5, df2 / (df2 + f)))
}

/// Benjamini-Hochberg adjusted p-values, returned in input order.
pub fn bh_qvalues(pvalues: &[f64]) -> Vec<f64> {
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]).then(a.cmp(&b)));
    let mut q = vec![0.0; m];
    let mut running = f64::INFINITY;
    for (rank, &i) in order.iter().enumerate().rev() {
        let candidate = pvalues[i] * m as f64 / (rank + 1) as f64;
        running = running.min(candidate);
        q[i] = running.min(1.0);
    }
    q
}
