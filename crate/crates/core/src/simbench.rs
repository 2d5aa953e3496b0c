//! Simulation drivers: slope estimation bias and variance, simultaneous band
//! coverage, and screening-test power over a few association shapes.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::bands::{band_for_region, equispaced, region_params};
use crate::chibar::{weights_for, DEFAULT_SCREEN_DRAWS};
use crate::cqp::{fit_inequality, fit_unconstrained};
use crate::error::{PlrsError, Result};
use crate::inference::{lm_test, plrs_test};
use crate::knots::{estimate_knots, KnotMethod};
use crate::pipeline::Dataset;
use crate::seed::mix_seed;
use crate::spline::{design_from_covariate, predict, GeneRecord, KnotSet, SplineSpec};

/// Knot used by the fixed-knot simulations.
pub const SIM_KNOT: f64 = 0.5;

fn rng_for(seed: u64, cell: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, cell as u64));
    rng.set_stream(rep as u64);
    rng
}

fn normal_noise(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma.max(0.0)).expect("finite sigma")
}

fn two_state_knots() -> KnotSet {
    KnotSet::new(vec![SIM_KNOT], vec![0, 1]).expect("valid knot")
}

fn hinge(x: f64) -> f64 {
    (x - SIM_KNOT).max(0.0)
}

// ---------------------------------------------------------------------------
// Point estimation

/// Generating model of the slope-estimation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlopeModel {
    /// `y = 1 + a2 (x - 0.5)_+`
    Kink,
    /// `y = 1 + 0.5 x + (a2 - 0.5)(x - 0.5)_+`
    SlopeChange,
}

impl SlopeModel {
    pub const ALL: [SlopeModel; 2] = [SlopeModel::Kink, SlopeModel::SlopeChange];

    pub fn number(self) -> usize {
        match self {
            SlopeModel::Kink => 1,
            SlopeModel::SlopeChange => 2,
        }
    }

    pub fn mean(self, a2: f64, x: f64) -> f64 {
        match self {
            SlopeModel::Kink => 1.0 + a2 * hinge(x),
            SlopeModel::SlopeChange => 1.0 + 0.5 * x + (a2 - 0.5) * hinge(x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointEstimationConfig {
    pub a2_grid: Vec<f64>,
    pub sigma_grid: Vec<f64>,
    pub n: usize,
    pub reps: usize,
    /// Draw the covariate once per generating model and reuse it in every
    /// replicate; otherwise redraw it each replicate.
    pub fixed_design: bool,
    pub seed: u64,
}

impl Default for PointEstimationConfig {
    fn default() -> Self {
        PointEstimationConfig {
            a2_grid: vec![0.0, 0.5, 1.0, 2.0, 5.0],
            sigma_grid: vec![0.1, 0.25, 0.5, 0.75, 1.0],
            n: 80,
            reps: 1000,
            fixed_design: true,
            seed: 1,
        }
    }
}

/// Squared bias and variance of one slope estimator.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BiasVariance {
    pub bias2: f64,
    pub variance: f64,
}

impl BiasVariance {
    fn from_estimates(est: &[f64], truth: f64) -> Self {
        let m = est.len() as f64;
        let mean = est.iter().sum::<f64>() / m;
        let variance = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / m;
        BiasVariance { bias2: (mean - truth).powi(2), variance }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimationCell {
    pub model: SlopeModel,
    pub a2: f64,
    pub sigma: f64,
    pub linear: BiasVariance,
    pub piecewise: BiasVariance,
    pub linear_unconstrained: BiasVariance,
    pub piecewise_unconstrained: BiasVariance,
}

/// Slope estimates `(linear, piecewise, linear unconstrained, piecewise
/// unconstrained)` for one simulated data set.
fn slope_estimates(xs: &[f64], ys: &[f64]) -> Result<[f64; 4]> {
    let knots = two_state_knots();
    let linear = SplineSpec::new(knots.clone(), vec![true, true, false, false])?;
    let full = SplineSpec::full(knots);
    let dl = design_from_covariate(xs, &linear)?;
    let dp = design_from_covariate(xs, &full)?;
    let lc = fit_inequality(&dl, ys)?.theta;
    let pc = fit_inequality(&dp, ys)?.theta;
    let lu = fit_unconstrained(&dl, ys)?.theta;
    let pu = fit_unconstrained(&dp, ys)?.theta;
    Ok([lc[1], pc[1] + pc[3], lu[1], pu[1] + pu[3]])
}

fn draw_uniform_sample(rng: &mut ChaCha8Rng, n: usize, need_both_sides: usize) -> Vec<f64> {
    loop {
        let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let above = xs.iter().filter(|&&x| x > SIM_KNOT).count();
        if above >= need_both_sides && n - above >= need_both_sides {
            return xs;
        }
    }
}

pub fn sim_point_estimation(cfg: &PointEstimationConfig) -> Result<Vec<PointEstimationCell>> {
    let mut cells = Vec::new();
    for model in SlopeModel::ALL {
        for &a2 in &cfg.a2_grid {
            for &sigma in &cfg.sigma_grid {
                cells.push((model, a2, sigma));
            }
        }
    }
    let designs: Vec<Vec<f64>> = SlopeModel::ALL
        .iter()
        .map(|m| draw_uniform_sample(&mut rng_for(cfg.seed, usize::MAX - m.number(), 0), cfg.n, 2))
        .collect();
    cells
        .par_iter()
        .enumerate()
        .map(|(ci, &(model, a2, sigma))| {
            let est: Vec<[f64; 4]> = (0..cfg.reps)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = rng_for(cfg.seed, ci, rep);
                    let xs = if cfg.fixed_design {
                        designs[model.number() - 1].clone()
                    } else {
                        draw_uniform_sample(&mut rng, cfg.n, 2)
                    };
                    let noise = normal_noise(sigma);
                    let ys: Vec<f64> = xs.iter().map(|&x| model.mean(a2, x) + noise.sample(&mut rng)).collect();
                    slope_estimates(&xs, &ys)
                })
                .collect::<Result<_>>()?;
            let column = |j: usize| BiasVariance::from_estimates(&est.iter().map(|e| e[j]).collect::<Vec<_>>(), a2);
            Ok(PointEstimationCell {
                model,
                a2,
                sigma,
                linear: column(0),
                piecewise: column(1),
                linear_unconstrained: column(2),
                piecewise_unconstrained: column(3),
            })
        })
        .collect()
}

pub fn point_estimation_tsv(cells: &[PointEstimationCell]) -> String {
    let mut out = String::from(
        "model\ta2\tsigma\tlinear_bias2\tlinear_var\tpiecewise_bias2\tpiecewise_var\t\
         linear_unc_bias2\tlinear_unc_var\tpiecewise_unc_bias2\tpiecewise_unc_var\n",
    );
    for c in cells {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            c.model.number(),
            c.a2,
            c.sigma,
            c.linear.bias2,
            c.linear.variance,
            c.piecewise.bias2,
            c.piecewise.variance,
            c.linear_unconstrained.bias2,
            c.linear_unconstrained.variance,
            c.piecewise_unconstrained.bias2,
            c.piecewise_unconstrained.variance,
        );
    }
    out
}

// ---------------------------------------------------------------------------
// Band coverage

/// True coefficients of `y = 1 + (x - 0.5)^0_+ + (x - 0.5)^1_+`.
pub const COVERAGE_THETA: [f64; 4] = [1.0, 0.0, 1.0, 1.0];

#[derive(Debug, Clone)]
pub struct CoverageConfig {
    pub n_grid: Vec<usize>,
    pub sigma_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub reps: usize,
    pub grid_points: usize,
    pub mc_draws: usize,
    pub seed: u64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        CoverageConfig {
            n_grid: vec![20, 40, 80],
            sigma_grid: vec![0.5, 1.0],
            alpha_grid: vec![0.05, 0.1],
            reps: 2000,
            grid_points: 10,
            mc_draws: DEFAULT_SCREEN_DRAWS,
            seed: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageCell {
    pub n: usize,
    pub sigma: f64,
    pub alpha: f64,
    pub coverage: f64,
    pub reps: usize,
}

/// Whether each alpha's band covers the truth at every grid point, for one
/// simulated data set.
fn coverage_replicate(n: usize, sigma: f64, cfg: &CoverageConfig, cell: usize, rep: usize) -> Result<Vec<bool>> {
    let mut rng = rng_for(cfg.seed, cell, rep);
    let xs = draw_uniform_sample(&mut rng, n, 2);
    let spec = SplineSpec::full(two_state_knots());
    let noise = normal_noise(sigma);
    let truth_at = |x: f64| predict(&spec, &COVERAGE_THETA, &[x]).map(|v| v[0]);
    let mut ys = Vec::with_capacity(n);
    for &x in &xs {
        ys.push(truth_at(x)? + noise.sample(&mut rng));
    }
    let d = design_from_covariate(&xs, &spec)?;
    let weights = weights_for(&d.c, &d.gram, cfg.mc_draws, rng.random())?;
    let grid = equispaced(0.0, 1.0, cfg.grid_points);
    let truth = predict(&spec, &COVERAGE_THETA, &grid)?;
    cfg.alpha_grid
        .iter()
        .map(|&alpha| {
            let region = region_params(&d, &ys, &weights, alpha)?;
            let band = band_for_region(&spec, &region, &grid, 1.0 - alpha)?;
            Ok(truth
                .iter()
                .zip(band.lower.iter().zip(&band.upper))
                .all(|(t, (lo, hi))| lo - 1e-9 <= *t && *t <= hi + 1e-9))
        })
        .collect()
}

pub fn sim_coverage(cfg: &CoverageConfig) -> Result<Vec<CoverageCell>> {
    let mut setups = Vec::new();
    for &n in &cfg.n_grid {
        for &sigma in &cfg.sigma_grid {
            setups.push((n, sigma));
        }
    }
    let mut cells = Vec::new();
    for (ci, &(n, sigma)) in setups.iter().enumerate() {
        let hits: Vec<Vec<bool>> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| coverage_replicate(n, sigma, cfg, ci, rep))
            .collect::<Result<_>>()?;
        for (ai, &alpha) in cfg.alpha_grid.iter().enumerate() {
            let covered = hits.iter().filter(|h| h[ai]).count();
            cells.push(CoverageCell { n, sigma, alpha, coverage: covered as f64 / cfg.reps.max(1) as f64, reps: cfg.reps });
        }
    }
    Ok(cells)
}

pub fn coverage_tsv(cells: &[CoverageCell]) -> String {
    let mut out = String::from("n\tsigma\talpha\tcoverage\treps\n");
    for c in cells {
        let _ = writeln!(out, "{}\t{}\t{}\t{:.4}\t{}", c.n, c.sigma, c.alpha, c.coverage, c.reps);
    }
    out
}

// ---------------------------------------------------------------------------
// Screening-test power

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeFamily {
    /// No association.
    Null,
    /// `effect * x` across all states.
    Linear,
    /// A level shift of `effect` per state step, flat within states.
    PiecewiseLevel,
    /// A slope of `effect` inside the gain state only.
    PartialEffect,
}

impl ShapeFamily {
    pub const ALL: [ShapeFamily; 4] =
        [ShapeFamily::Null, ShapeFamily::Linear, ShapeFamily::PiecewiseLevel, ShapeFamily::PartialEffect];

    pub fn as_str(self) -> &'static str {
        match self {
            ShapeFamily::Null => "null",
            ShapeFamily::Linear => "linear",
            ShapeFamily::PiecewiseLevel => "piecewise-level",
            ShapeFamily::PartialEffect => "partial",
        }
    }
}

impl std::str::FromStr for ShapeFamily {
    type Err = PlrsError;
    fn from_str(s: &str) -> Result<Self> {
        ShapeFamily::ALL
            .into_iter()
            .find(|f| f.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| PlrsError::InvalidInput(format!("unknown shape family {s:?}")))
    }
}

/// Covariate ranges of the simulated loss / normal / gain states.
const STATE_RANGES: [(i8, f64, f64); 3] = [(-1, -1.0, -0.25), (0, -0.15, 0.15), (1, 0.25, 1.0)];
const STATE_PROBS: [f64; 3] = [0.2, 0.5, 0.3];
const GAIN_START: f64 = 0.25;

/// A three-state gene with calls separable in `x`.
pub fn three_state_covariate(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<i8>) {
    let mut xs = Vec::with_capacity(n);
    let mut ss = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let idx = if u < STATE_PROBS[0] {
            0
        } else if u < STATE_PROBS[0] + STATE_PROBS[1] {
            1
        } else {
            2
        };
        let (s, lo, hi) = STATE_RANGES[idx];
        xs.push(lo + (hi - lo) * rng.random::<f64>());
        ss.push(s);
    }
    (xs, ss)
}

pub fn shape_mean(shape: ShapeFamily, effect: f64, x: f64, s: i8) -> f64 {
    match shape {
        ShapeFamily::Null => 0.0,
        ShapeFamily::Linear => effect * x,
        ShapeFamily::PiecewiseLevel => effect * s as f64,
        ShapeFamily::PartialEffect => {
            if s == 1 {
                effect * (x - GAIN_START)
            } else {
                0.0
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShapeConfig {
    pub shape: ShapeFamily,
    pub effect: f64,
    pub n: usize,
    pub sigma: f64,
    pub reps: usize,
    pub alphas: Vec<f64>,
    pub mc_draws: usize,
    /// Minimum observations per state before knots are placed.
    pub min_obs: usize,
    pub seed: u64,
}

impl Default for ShapeConfig {
    fn default() -> Self {
        ShapeConfig {
            shape: ShapeFamily::Null,
            effect: 1.0,
            n: 80,
            sigma: 0.5,
            reps: 500,
            alphas: vec![0.01, 0.05, 0.1],
            mc_draws: DEFAULT_SCREEN_DRAWS,
            min_obs: 5,
            seed: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapePower {
    pub alpha: f64,
    pub plrs: f64,
    pub lm: f64,
}

#[derive(Debug, Clone)]
pub struct ShapeRun {
    pub shape: ShapeFamily,
    pub effect: f64,
    pub plrs_pvalues: Vec<f64>,
    pub lm_pvalues: Vec<f64>,
    pub power: Vec<ShapePower>,
}

/// PLRS and LM p-values for one simulated gene.
pub fn shape_replicate(cfg: &ShapeConfig, rep: usize) -> Result<(f64, f64)> {
    let mut rng = rng_for(cfg.seed, 0, rep);
    let (xs, ss) = three_state_covariate(&mut rng, cfg.n);
    let noise = normal_noise(cfg.sigma);
    let ys: Vec<f64> = xs
        .iter()
        .zip(&ss)
        .map(|(&x, &s)| shape_mean(cfg.shape, cfg.effect, x, s) + noise.sample(&mut rng))
        .collect();
    let rec = GeneRecord::from_vectors(format!("sim{rep}"), ys, xs, ss)?;
    let (knots, _) = estimate_knots(&rec, KnotMethod::Midpoint, cfg.min_obs)?;
    let test = plrs_test(&rec, &knots, cfg.mc_draws, rng.random())?;
    Ok((test.pvalue, lm_test(&rec.x, &rec.y)?))
}

pub fn sim_test_shapes(cfg: &ShapeConfig) -> Result<ShapeRun> {
    let pv: Vec<(f64, f64)> = (0..cfg.reps).into_par_iter().map(|rep| shape_replicate(cfg, rep)).collect::<Result<_>>()?;
    let reps = cfg.reps.max(1) as f64;
    let power = cfg
        .alphas
        .iter()
        .map(|&alpha| ShapePower {
            alpha,
            plrs: pv.iter().filter(|p| p.0 <= alpha).count() as f64 / reps,
            lm: pv.iter().filter(|p| p.1 <= alpha).count() as f64 / reps,
        })
        .collect();
    Ok(ShapeRun {
        shape: cfg.shape,
        effect: cfg.effect,
        plrs_pvalues: pv.iter().map(|p| p.0).collect(),
        lm_pvalues: pv.iter().map(|p| p.1).collect(),
        power,
    })
}

pub fn shapes_tsv(runs: &[ShapeRun]) -> String {
    let mut out = String::from("shape\teffect\talpha\tplrs_rejection\tlm_rejection\n");
    for r in runs {
        for p in &r.power {
            let _ = writeln!(out, "{}\t{}\t{}\t{:.4}\t{:.4}", r.shape.as_str(), r.effect, p.alpha, p.plrs, p.lm);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Screening corpus

/// Generating shape of each corpus gene, cycled in this order.
pub const CORPUS_SHAPES: [ShapeFamily; 5] = [
    ShapeFamily::Null,
    ShapeFamily::Linear,
    ShapeFamily::PiecewiseLevel,
    ShapeFamily::PartialEffect,
    ShapeFamily::Null,
];

/// A matched dataset of `n_genes` genes over `n_samples` shared samples. Every
/// tenth gene has a single normal state; the rest have loss, normal and gain.
pub fn simulate_corpus(n_genes: usize, n_samples: usize, seed: u64) -> Result<Dataset> {
    let samples: Vec<String> = (0..n_samples).map(|i| format!("sample{:03}", i + 1)).collect();
    let genes = (0..n_genes)
        .map(|g| {
            let mut rng = rng_for(seed, g, 0);
            let shape = CORPUS_SHAPES[g % CORPUS_SHAPES.len()];
            let (xs, ss) = if g % 10 == 9 {
                let (lo, hi) = (STATE_RANGES[1].1, STATE_RANGES[1].2);
                ((0..n_samples).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect(), vec![0; n_samples])
            } else {
                three_state_covariate(&mut rng, n_samples)
            };
            let effect = 0.5 + 1.5 * rng.random::<f64>();
            let noise = normal_noise(0.3);
            let ys = xs
                .iter()
                .zip(&ss)
                .map(|(&x, &s)| 5.0 + shape_mean(shape, effect, x, s) + noise.sample(&mut rng))
                .collect();
            GeneRecord::new(format!("gene{:04}", g + 1), samples.clone(), ys, xs, ss, None)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { samples, genes, dropped: Vec::new() })
}

/// Kolmogorov-Smirnov distance between a sample and the uniform law on `[0, 1]`.
pub fn ks_uniform(sample: &[f64]) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &p)| {
            let p = p.clamp(0.0, 1.0);
            (((i + 1) as f64 / m) - p).max(p - i as f64 / m)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_estimates_are_exact() {
        let cfg = PointEstimationConfig {
            a2_grid: vec![0.5, 2.0],
            sigma_grid: vec![0.0],
            n: 30,
            reps: 5,
            fixed_design: false,
            seed: 9,
        };
        for cell in sim_point_estimation(&cfg).unwrap() {
            assert!(cell.piecewise.bias2 < 1e-18, "{cell:?}");
            assert!(cell.piecewise.variance < 1e-18);
            // The linear model is correct only for model 2 with a2 = 0.5.
            if cell.model == SlopeModel::SlopeChange && cell.a2 == 0.5 {
                assert!(cell.linear.bias2 < 1e-18);
            }
        }
    }

    #[test]
    fn point_estimation_reproducible() {
        let cfg = PointEstimationConfig { a2_grid: vec![1.0], sigma_grid: vec![0.5], n: 40, reps: 20, fixed_design: true, seed: 4 };
        assert_eq!(sim_point_estimation(&cfg).unwrap(), sim_point_estimation(&cfg).unwrap());
    }

    #[test]
    fn ks_distance() {
        assert!((ks_uniform(&[0.5]) - 0.5).abs() < 1e-15);
        let even: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_uniform(&even) - 0.005).abs() < 1e-12);
    }

    #[test]
    fn coverage_collapses_near_alpha_one() {
        let cfg = CoverageConfig {
            n_grid: vec![20],
            sigma_grid: vec![0.5],
            alpha_grid: vec![0.999_999],
            reps: 20,
            mc_draws: 2000,
            ..CoverageConfig::default()
        };
        let cells = sim_coverage(&cfg).unwrap();
        assert_eq!(cells[0].coverage, 0.0);
    }

    #[test]
    fn shapes_parse() {
        for f in ShapeFamily::ALL {
            assert_eq!(f.as_str().parse::<ShapeFamily>().unwrap(), f);
        }
        assert!("cubic".parse::<ShapeFamily>().is_err());
    }
}
