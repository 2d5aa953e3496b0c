//! Constrained piecewise linear regression splines relating a gene's
//! expression to its DNA copy number.
//!
//! The model is fitted in the truncated power basis with knots between
//! adjacent copy number states, under shape constraints that make the fitted
//! curve nondecreasing with convex-like slope ordering away from the normal
//! state. The crate covers knot placement, constrained fitting, model
//! selection by one-sided AIC, the E-bar-square screening test, uniform
//! confidence bands, a genome-wide screening pipeline and simulation drivers.

pub mod bands;
pub mod chibar;
pub mod cqp;
mod dense;
pub mod error;
pub mod inference;
pub mod knots;
pub mod pipeline;
pub mod seed;
pub mod selection;
pub mod simbench;
pub mod spline;

pub use bands::{band_at, band_grid, region_params, BandGrid, BandInterval, Region};
pub use chibar::{weights_exact_small, weights_for, weights_mc, ChibarWeights};
pub use cqp::{fit_equality, fit_inequality, fit_unconstrained, project_cone, FitResult};
pub use error::{PlrsError, Result};
pub use inference::{bh_qvalues, ebar_statistic, lm_test, plrs_test, MixtureVariant, TestResult};
pub use knots::{estimate_knots, KnotMethod};
pub use selection::{select, Criterion, SelectOptions, Selection};
pub use spline::{build_design, predict, DesignSystem, GeneRecord, KnotSet, ModelClass, SplineSpec};
