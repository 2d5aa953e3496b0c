//! Scoring every submodel with OSAIC, AIC and BIC and picking the winner.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::chibar::{weights_for, ChibarWeights, DEFAULT_SCREEN_DRAWS};
use crate::cqp::{fit_inequality, FitResult};
use crate::error::{PlrsError, Result};
use crate::seed::mix_seed;
use crate::spline::{build_design, enumerate_submodels, GeneRecord, KnotSet, ModelClass, SplineSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Criterion {
    #[default]
    Osaic,
    Aic,
    Bic,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Osaic, Criterion::Aic, Criterion::Bic];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Osaic => "osaic",
            Criterion::Aic => "aic",
            Criterion::Bic => "bic",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Criterion {
    type Err = PlrsError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "osaic" => Ok(Criterion::Osaic),
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            other => Err(PlrsError::InvalidInput(format!("unknown criterion {other:?}"))),
        }
    }
}

/// One-sided AIC: `-loglik + sum_h w(p, h) (k - p + h)`.
pub fn osaic(fit: &FitResult, weights: &ChibarWeights, k: usize) -> Result<f64> {
    if weights.p != fit.q || weights.w.len() != weights.p + 1 {
        return Err(PlrsError::DimensionMismatch { what: "level probabilities", expected: fit.q + 1, found: weights.w.len() });
    }
    if k != fit.k() {
        return Err(PlrsError::DimensionMismatch { what: "coefficient count", expected: fit.k(), found: k });
    }
    Ok(-fit.loglik + weights.expected_dimension(k))
}

pub fn aic(fit: &FitResult, k: usize) -> f64 {
    -fit.loglik + k as f64
}

pub fn bic(fit: &FitResult, k: usize, n: usize) -> f64 {
    -2.0 * fit.loglik + (n as f64).ln() * k as f64
}

#[derive(Debug, Clone)]
pub struct SelectOptions {
    pub mc_draws: usize,
    pub seed: u64,
}

impl Default for SelectOptions {
    fn default() -> Self {
        SelectOptions { mc_draws: DEFAULT_SCREEN_DRAWS, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct ScoredFit {
    pub fit: FitResult,
    pub weights: ChibarWeights,
    pub osaic: f64,
    pub aic: f64,
    pub bic: f64,
}

impl ScoredFit {
    pub fn score(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::Osaic => self.osaic,
            Criterion::Aic => self.aic,
            Criterion::Bic => self.bic,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Submodel {
    pub spec: SplineSpec,
    /// `Err` when the submodel cannot be fitted on this gene (empty segment,
    /// rank deficiency, or a cone with an implicit equality).
    pub scored: std::result::Result<ScoredFit, PlrsError>,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub submodels: Vec<Submodel>,
    pub criterion: Criterion,
    pub winner: usize,
}

impl Selection {
    pub fn best(&self) -> (&SplineSpec, &ScoredFit) {
        let sm = &self.submodels[self.winner];
        (&sm.spec, sm.scored.as_ref().expect("winner is admissible"))
    }

    pub fn class(&self) -> ModelClass {
        self.submodels[self.winner].spec.class()
    }

    /// Index of the minimiser under `criterion`: ties go to fewer coefficients,
    /// then to the earlier mask.
    pub fn winner_for(&self, criterion: Criterion) -> Option<usize> {
        self.submodels
            .iter()
            .enumerate()
            .filter_map(|(i, sm)| sm.scored.as_ref().ok().map(|s| (i, s.score(criterion), sm.spec.k())))
            .filter(|(_, s, _)| !s.is_nan())
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.2.cmp(&b.2)).then(a.0.cmp(&b.0)))
            .map(|(i, _, _)| i)
    }
}

fn score_submodel(record: &GeneRecord, spec: &SplineSpec, opts: &SelectOptions) -> std::result::Result<ScoredFit, PlrsError> {
    let d = build_design(record, spec)?;
    let fit = fit_inequality(&d, &record.y)?;
    let weights = weights_for(&d.c, &d.gram, opts.mc_draws, mix_seed(opts.seed, spec.mask_index() as u64))?;
    let k = spec.k();
    Ok(ScoredFit {
        osaic: osaic(&fit, &weights, k)?,
        aic: aic(&fit, k),
        bic: bic(&fit, k, record.n()),
        fit,
        weights,
    })
}

fn is_structural(e: &PlrsError) -> bool {
    matches!(
        e,
        PlrsError::DegenerateCone
            | PlrsError::EmptySegment { .. }
            | PlrsError::RankDeficientDesign { .. }
            | PlrsError::InsufficientObservations { .. }
            | PlrsError::NotPositiveDefinite(_)
    )
}

/// Fits and scores every submodel of `knotset` on `record`.
pub fn select(record: &GeneRecord, knotset: &KnotSet, criterion: Criterion, opts: &SelectOptions) -> Result<Selection> {
    let submodels: Vec<Submodel> = enumerate_submodels(knotset)
        .into_par_iter()
        .map(|spec| {
            let scored = score_submodel(record, &spec, opts);
            Submodel { spec, scored }
        })
        .collect();
    if let Some(err) = submodels.iter().find_map(|sm| sm.scored.as_ref().err().filter(|e| !is_structural(e))) {
        return Err(err.clone());
    }
    let mut selection = Selection { submodels, criterion, winner: 0 };
    selection.winner = selection
        .winner_for(criterion)
        .ok_or_else(|| PlrsError::InvalidInput(format!("no admissible submodel for gene {}", record.id)))?;
    Ok(selection)
}
