//! The PLRS model family: truncated power basis, design and constraint
//! matrices, and submodel enumeration for up to four copy number states.
//!
//! Coefficients are always stored in canonical order
//! `(1, x, (x-a1)^0, (x-a1)^1, (x-a2)^0, (x-a2)^1, (x-a3)^0, (x-a3)^1)`,
//! truncated to `2S` entries for `S` states. A submodel is a boolean mask over
//! that order with the intercept always present.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{PlrsError, Result};

/// Copy number state codes in their natural order.
pub const STATE_CODES: [i8; 4] = [-1, 0, 1, 2];

pub const MAX_STATES: usize = 4;

/// Column of the membership-probability matrix for a state code.
pub fn state_column(state: i8) -> Option<usize> {
    STATE_CODES.iter().position(|&c| c == state)
}

pub fn state_name(state: i8) -> &'static str {
    match state {
        -1 => "loss",
        0 => "normal",
        1 => "gain",
        2 => "amp",
        _ => "unknown",
    }
}

/// Matched observations for one gene.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneRecord {
    pub id: String,
    pub sample_ids: Vec<String>,
    /// Response (log2 expression).
    pub y: Vec<f64>,
    /// Segmented copy number (log2 ratio).
    pub x: Vec<f64>,
    /// Called states, each in `{-1, 0, 1, 2}`.
    pub s: Vec<i8>,
    /// Optional membership probabilities, columns ordered loss/normal/gain/amp.
    pub callprobs: Option<Vec<[f64; 4]>>,
}

impl GeneRecord {
    pub fn new(
        id: impl Into<String>,
        sample_ids: Vec<String>,
        y: Vec<f64>,
        x: Vec<f64>,
        s: Vec<i8>,
        callprobs: Option<Vec<[f64; 4]>>,
    ) -> Result<Self> {
        let rec = GeneRecord {
            id: id.into(),
            sample_ids,
            y,
            x,
            s,
            callprobs,
        };
        rec.validate()?;
        Ok(rec)
    }

    /// Convenience constructor with generated sample ids and no probabilities.
    pub fn from_vectors(id: impl Into<String>, y: Vec<f64>, x: Vec<f64>, s: Vec<i8>) -> Result<Self> {
        let ids = (0..y.len()).map(|i| format!("s{}", i + 1)).collect();
        Self::new(id, ids, y, x, s, None)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if n == 0 {
            return Err(PlrsError::InvalidInput(format!("gene {} has no observations", self.id)));
        }
        for (what, len) in [
            ("x", self.x.len()),
            ("s", self.s.len()),
            ("sample_ids", self.sample_ids.len()),
        ] {
            if len != n {
                return Err(PlrsError::DimensionMismatch { what, expected: n, found: len });
            }
        }
        if let Some(p) = &self.callprobs {
            if p.len() != n {
                return Err(PlrsError::DimensionMismatch { what: "callprobs", expected: n, found: p.len() });
            }
            for (i, row) in p.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-6 || row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(PlrsError::InvalidInput(format!(
                        "call probabilities of sample {} do not form a distribution (sum {sum})",
                        i + 1
                    )));
                }
            }
        }
        if self.y.iter().chain(&self.x).any(|v| !v.is_finite()) {
            return Err(PlrsError::InvalidInput(format!("gene {} has non-finite values", self.id)));
        }
        if let Some(bad) = self.s.iter().find(|s| state_column(**s).is_none()) {
            return Err(PlrsError::InvalidInput(format!("invalid state code {bad}")));
        }
        check_contiguous(&self.states_present())
    }

    /// Sorted distinct states that occur in the calls.
    pub fn states_present(&self) -> Vec<i8> {
        states_present(&self.s)
    }
}

pub fn states_present(s: &[i8]) -> Vec<i8> {
    let mut v: Vec<i8> = s.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

pub(crate) fn check_contiguous(states: &[i8]) -> Result<()> {
    if states.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(PlrsError::NonContiguousStates(states.to_vec()));
    }
    Ok(())
}

/// Knots separating consecutive (possibly merged) states.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotSet {
    knots: Vec<f64>,
    states: Vec<i8>,
    reference: usize,
}

impl KnotSet {
    /// `states` holds one label per segment in increasing order; there must be
    /// exactly one more label than knots.
    pub fn new(knots: Vec<f64>, states: Vec<i8>) -> Result<Self> {
        if states.is_empty() || states.len() > MAX_STATES || knots.len() + 1 != states.len() {
            return Err(PlrsError::InvalidKnots {
                expected: states.len().saturating_sub(1),
                found: knots,
            });
        }
        if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PlrsError::InvalidKnots { expected: states.len() - 1, found: knots });
        }
        if states.windows(2).any(|w| w[0] >= w[1]) || states.iter().any(|s| state_column(*s).is_none()) {
            return Err(PlrsError::InvalidInput(format!("segment labels {states:?} must be increasing state codes")));
        }
        // Reference segment: the normal state, or the one closest to it.
        let reference = states
            .iter()
            .enumerate()
            .min_by_key(|(_, s)| s.unsigned_abs())
            .map(|(i, _)| i)
            .unwrap_or(0);
        Ok(KnotSet { knots, states, reference })
    }

    pub fn single(state: i8) -> Self {
        KnotSet::new(Vec::new(), vec![state]).expect("a single valid state always forms a knot set")
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn states(&self) -> &[i8] {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    /// Index of the segment whose slope the others are compared against.
    pub fn reference(&self) -> usize {
        self.reference
    }

    /// Segment index of `x`: the number of knots strictly below it.
    pub fn segment_of(&self, x: f64) -> usize {
        self.knots.iter().take_while(|&&a| x > a).count()
    }

    /// Constraint rows over all `2S` canonical coefficients, in the order:
    /// reference slope, slopes of segments above the reference, slopes of
    /// segments below it, then every jump.
    pub fn full_constraint_rows(&self) -> Vec<Vec<f64>> {
        let s = self.n_states();
        let width = 2 * s;
        let r = self.reference;
        let hinge = |j: usize| 3 + 2 * j;
        let mut rows = Vec::with_capacity(2 * s - 1);

        let mut reference = vec![0.0; width];
        reference[1] = 1.0;
        for j in 0..r {
            reference[hinge(j)] = 1.0;
        }
        rows.push(reference);
        for m in (r + 1)..s {
            let mut row = vec![0.0; width];
            for j in r..m {
                row[hinge(j)] = 1.0;
            }
            rows.push(row);
        }
        for m in (0..r).rev() {
            let mut row = vec![0.0; width];
            for j in m..r {
                row[hinge(j)] = -1.0;
            }
            rows.push(row);
        }
        for j in 0..s - 1 {
            let mut row = vec![0.0; width];
            row[2 + 2 * j] = 1.0;
            rows.push(row);
        }
        rows
    }
}

/// One of the `2S` canonical basis functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisFn {
    Intercept,
    Linear,
    /// `(x - a_j)^0_+`, zero-based knot index.
    Step(usize),
    /// `(x - a_j)^1_+`, zero-based knot index.
    Hinge(usize),
}

impl BasisFn {
    pub fn from_index(i: usize) -> Self {
        match i {
            0 => BasisFn::Intercept,
            1 => BasisFn::Linear,
            i if i % 2 == 0 => BasisFn::Step((i - 2) / 2),
            i => BasisFn::Hinge((i - 3) / 2),
        }
    }

    pub fn eval(self, x: f64, knots: &[f64]) -> f64 {
        match self {
            BasisFn::Intercept => 1.0,
            BasisFn::Linear => x,
            BasisFn::Step(j) => {
                if x > knots[j] {
                    1.0
                } else {
                    0.0
                }
            }
            BasisFn::Hinge(j) => (x - knots[j]).max(0.0),
        }
    }

    pub fn label(self) -> String {
        match self {
            BasisFn::Intercept => "theta0".into(),
            BasisFn::Linear => "theta1".into(),
            BasisFn::Step(j) => format!("theta{}_0", j + 1),
            BasisFn::Hinge(j) => format!("theta{}_1", j + 1),
        }
    }
}

/// Coarse shape of a submodel, as tabulated when summarising selections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelClass {
    Intercept,
    SimpleLinear,
    PiecewiseLevel,
    PiecewiseLinear,
}

impl ModelClass {
    pub const ALL: [ModelClass; 4] = [
        ModelClass::Intercept,
        ModelClass::SimpleLinear,
        ModelClass::PiecewiseLevel,
        ModelClass::PiecewiseLinear,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelClass::Intercept => "intercept",
            ModelClass::SimpleLinear => "simple-linear",
            ModelClass::PiecewiseLevel => "piecewise-level",
            ModelClass::PiecewiseLinear => "piecewise-linear",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            ModelClass::Intercept => "Intercept",
            ModelClass::SimpleLinear => "Simple linear",
            ModelClass::PiecewiseLevel => "Piecewise level",
            ModelClass::PiecewiseLinear => "Piecewise linear",
        }
    }

    /// Classifies a canonical mask. Any hinge term, or a slope combined with a
    /// jump, counts as piecewise linear.
    pub fn of_mask(mask: &[bool]) -> Self {
        let linear = mask.get(1).copied().unwrap_or(false);
        let any_step = mask.iter().enumerate().skip(2).any(|(i, &m)| m && i % 2 == 0);
        let any_hinge = mask.iter().enumerate().skip(2).any(|(i, &m)| m && i % 2 == 1);
        match (linear, any_step, any_hinge) {
            (false, false, false) => ModelClass::Intercept,
            (true, false, false) => ModelClass::SimpleLinear,
            (false, true, false) => ModelClass::PiecewiseLevel,
            _ => ModelClass::PiecewiseLinear,
        }
    }
}

impl fmt::Display for ModelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelClass {
    type Err = PlrsError;
    fn from_str(s: &str) -> Result<Self> {
        ModelClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| PlrsError::InvalidInput(format!("unknown model class {s:?}")))
    }
}

/// A submodel: knots plus the subset of basis functions it includes.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineSpec {
    pub knotset: KnotSet,
    mask: Vec<bool>,
}

impl SplineSpec {
    pub fn new(knotset: KnotSet, mask: Vec<bool>) -> Result<Self> {
        let width = 2 * knotset.n_states();
        if mask.len() != width {
            return Err(PlrsError::DimensionMismatch { what: "basis mask", expected: width, found: mask.len() });
        }
        if !mask[0] {
            return Err(PlrsError::InvalidInput("the intercept must be included".into()));
        }
        Ok(SplineSpec { knotset, mask })
    }

    /// All `2S` basis functions.
    pub fn full(knotset: KnotSet) -> Self {
        let width = 2 * knotset.n_states();
        SplineSpec { knotset, mask: vec![true; width] }
    }

    pub fn intercept_only(knotset: KnotSet) -> Self {
        let mut mask = vec![false; 2 * knotset.n_states()];
        mask[0] = true;
        SplineSpec { knotset, mask }
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Number of included coefficients.
    pub fn k(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn included(&self) -> impl Iterator<Item = BasisFn> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(i, _)| BasisFn::from_index(i))
    }

    pub fn class(&self) -> ModelClass {
        ModelClass::of_mask(&self.mask)
    }

    /// Position of the mask in [`enumerate_masks`] order.
    pub fn mask_index(&self) -> usize {
        self.mask
            .iter()
            .skip(1)
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(i, _)| 1usize << i)
            .sum()
    }

    pub fn mask_string(&self) -> String {
        self.mask.iter().map(|m| if *m { '1' } else { '0' }).collect()
    }

    pub fn coefficient_labels(&self) -> Vec<String> {
        self.included().map(BasisFn::label).collect()
    }

    /// Included basis functions evaluated at `x`.
    pub fn basis_row(&self, x: f64) -> Vec<f64> {
        let knots = self.knotset.knots();
        self.included().map(|b| b.eval(x, knots)).collect()
    }

    /// Constraint rows restricted to the included coefficients. Rows that
    /// become zero are dropped and duplicates removed; a restricted system that
    /// is not of full row rank implies an equality and is rejected.
    pub fn constraint_matrix(&self) -> Result<DMatrix<f64>> {
        let cols: Vec<usize> = (0..self.mask.len()).filter(|&i| self.mask[i]).collect();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for full in self.knotset.full_constraint_rows() {
            let row: Vec<f64> = cols.iter().map(|&c| full[c]).collect();
            if row.iter().all(|v| *v == 0.0) || rows.contains(&row) {
                continue;
            }
            rows.push(row);
        }
        let k = cols.len();
        let c = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
        if !rows.is_empty() {
            let rank = (&c * c.transpose()).rank(1e-9);
            if rank < rows.len() {
                return Err(PlrsError::DegenerateCone);
            }
        }
        Ok(c)
    }
}

/// Design, constraint and Gram matrices for one gene under one submodel.
#[derive(Debug, Clone)]
pub struct DesignSystem {
    /// `n x k` design matrix.
    pub x: DMatrix<f64>,
    /// `q x k` constraint matrix for `C theta >= 0`.
    pub c: DMatrix<f64>,
    /// `X^T X`.
    pub gram: DMatrix<f64>,
}

impl DesignSystem {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.c.nrows()
    }
}

pub fn build_design(record: &GeneRecord, spec: &SplineSpec) -> Result<DesignSystem> {
    design_from_covariate(&record.x, spec)
}

pub fn design_from_covariate(xs: &[f64], spec: &SplineSpec) -> Result<DesignSystem> {
    let n = xs.len();
    let k = spec.k();
    if n < k {
        return Err(PlrsError::InsufficientObservations { n, k });
    }
    let knots = spec.knotset.knots();
    let basis: Vec<(usize, BasisFn)> = spec
        .mask
        .iter()
        .enumerate()
        .filter(|(_, m)| **m)
        .map(|(i, _)| (i, BasisFn::from_index(i)))
        .collect();
    let x = DMatrix::from_fn(n, k, |i, j| basis[j].1.eval(xs[i], knots));
    for (j, (canon, b)) in basis.iter().enumerate() {
        if let BasisFn::Step(knot) | BasisFn::Hinge(knot) = b {
            if x.column(j).iter().all(|v| *v == 0.0) {
                return Err(PlrsError::EmptySegment { column: *canon, knot: knot + 1 });
            }
        }
    }
    let sv = x.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let rank = sv.iter().filter(|s| **s > 1e-10 * smax.max(1e-300)).count();
    if rank < k || smax == 0.0 {
        return Err(PlrsError::RankDeficientDesign { rank, k });
    }
    let c = spec.constraint_matrix()?;
    let gram = x.transpose() * &x;
    Ok(DesignSystem { x, c, gram })
}

/// Evaluates the spline with coefficients `theta` at every point of `xs`.
pub fn predict(spec: &SplineSpec, theta: &[f64], xs: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != spec.k() {
        return Err(PlrsError::DimensionMismatch { what: "theta", expected: spec.k(), found: theta.len() });
    }
    Ok(xs
        .iter()
        .map(|&x| spec.basis_row(x).iter().zip(theta).map(|(b, t)| b * t).sum())
        .collect())
}

/// All `2^(2S-1)` masks with the intercept fixed on, in binary counting order
/// over the non-intercept positions.
pub fn enumerate_masks(n_states: usize) -> Vec<Vec<bool>> {
    assert!((1..=MAX_STATES).contains(&n_states), "state count must be in 1..=4");
    let free = 2 * n_states - 1;
    (0..1usize << free)
        .map(|m| {
            let mut mask = vec![true; free + 1];
            for (i, slot) in mask.iter_mut().skip(1).enumerate() {
                *slot = m >> i & 1 == 1;
            }
            mask
        })
        .collect()
}

pub fn enumerate_submodels(knotset: &KnotSet) -> Vec<SplineSpec> {
    enumerate_masks(knotset.n_states())
        .into_iter()
        .map(|mask| SplineSpec { knotset: knotset.clone(), mask })
        .collect()
}
