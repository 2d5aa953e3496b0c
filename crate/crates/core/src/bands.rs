//! Uniform confidence bands from the E-bar-square confidence region
//! `{theta : C theta >= 0, (theta - center)^T X^T X (theta - center) <= lambda}`.
//!
//! The support of a linear functional over that region is computed with a
//! log-barrier interior-point method on the conic form (linear inequalities
//! plus one convex quadratic). Each bound comes with the Lagrange dual value
//! built from the barrier's implied multipliers, which certifies it.

use nalgebra::{DMatrix, DVector};

use crate::chibar::ChibarWeights;
use crate::cqp::{fit_inequality, fit_unconstrained};
use crate::error::{PlrsError, Result};
use crate::inference::{mixture_quantile, MixtureVariant};
use crate::spline::{design_from_covariate, predict, DesignSystem, SplineSpec};

/// Relative duality-gap target for each bound.
pub const GAP_TOL: f64 = 1e-7;
const CENTERING_TOL: f64 = 1e-9;
const GROWTH: f64 = 10.0;
const MAX_NEWTON: usize = 5_000;

/// Parameters of the confidence region.
#[derive(Debug, Clone)]
pub struct Region {
    /// Inequality-constrained estimate, the region's centre.
    pub center: DVector<f64>,
    /// Upper-triangular factor with `M^T M = X^T X`.
    pub m: DMatrix<f64>,
    pub lambda: f64,
    /// `(1 - alpha)` quantile of the band mixture.
    pub quantile: f64,
    pub rss_unconstrained: f64,
    gram: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl Region {
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn constraints(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// Builds a region directly from its geometry.
    pub fn from_parts(center: DVector<f64>, gram: DMatrix<f64>, c: DMatrix<f64>, lambda: f64) -> Result<Self> {
        let chol = gram.clone().cholesky().ok_or(PlrsError::NotPositiveDefinite("X^T X"))?;
        Ok(Region { center, m: chol.l().transpose(), lambda, quantile: f64::NAN, rss_unconstrained: f64::NAN, gram, c })
    }
}

pub fn region_params(d: &DesignSystem, y: &[f64], weights: &ChibarWeights, alpha: f64) -> Result<Region> {
    let (n, k) = (d.n(), d.k());
    if n <= k {
        return Err(PlrsError::InsufficientObservations { n, k });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(PlrsError::QuantileNotBracketed(1.0 - alpha));
    }
    let center = fit_inequality(d, y)?.theta;
    let rss = fit_unconstrained(d, y)?.rss;
    let quantile = mixture_quantile(1.0 - alpha, weights, n, k, MixtureVariant::Band)?;
    let lambda = if rss <= 0.0 || quantile <= 0.0 { 0.0 } else { rss * quantile / (1.0 - quantile) };
    let mut region = Region::from_parts(center, d.gram.clone(), d.c.clone(), lambda)?;
    region.quantile = quantile;
    region.rss_unconstrained = rss;
    Ok(region)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandInterval {
    pub lo: f64,
    pub hi: f64,
    /// Dual lower bound on the true minimum (`<= lo`).
    pub lo_certificate: f64,
    /// Dual upper bound on the true maximum (`>= hi`).
    pub hi_certificate: f64,
}

/// Minimum and maximum of `xrow^T theta` over the region.
pub fn band_at(xrow: &[f64], region: &Region) -> Result<BandInterval> {
    let k = region.center.len();
    if xrow.len() != k {
        return Err(PlrsError::DimensionMismatch { what: "basis row", expected: k, found: xrow.len() });
    }
    let x = DVector::from_column_slice(xrow);
    let mid = x.dot(&region.center);
    if region.lambda <= 0.0 {
        return Ok(BandInterval { lo: mid, hi: mid, lo_certificate: mid, hi_certificate: mid });
    }
    if region.c.nrows() == 0 {
        let half = ellipsoid_half_width(&x, region)?;
        return Ok(BandInterval { lo: mid - half, hi: mid + half, lo_certificate: mid - half, hi_certificate: mid + half });
    }
    let lo = minimize_linear(&x, region)?;
    let hi = minimize_linear(&(-&x), region)?;
    Ok(BandInterval {
        lo: lo.value,
        hi: -hi.value,
        lo_certificate: lo.dual_bound,
        hi_certificate: -hi.dual_bound,
    })
}

/// `sqrt(lambda x^T G^{-1} x)`, the support of the bare ellipsoid.
pub fn ellipsoid_half_width(x: &DVector<f64>, region: &Region) -> Result<f64> {
    let chol = region.gram.clone().cholesky().ok_or(PlrsError::NotPositiveDefinite("X^T X"))?;
    Ok((region.lambda * x.dot(&chol.solve(x))).max(0.0).sqrt())
}

#[derive(Debug, Clone)]
pub struct BarrierSolution {
    pub theta: DVector<f64>,
    pub value: f64,
    pub dual_bound: f64,
    pub newton_steps: usize,
}

/// The support problem in normalized coordinates `theta = center + sqrt(lambda) u`:
/// `min obj^T u` subject to `b + C u >= 0` and `u^T G u <= 1`, where
/// `b = C center / sqrt(lambda)` (clipped at zero).
struct Scaled<'a> {
    obj: &'a DVector<f64>,
    gram: &'a DMatrix<f64>,
    gram_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    c: &'a DMatrix<f64>,
    b: DVector<f64>,
}

/// Slacks and quadratic slack at a point, `None` outside the domain.
struct State {
    s: DVector<f64>,
    e: f64,
    g_u: DVector<f64>,
}

impl<'a> Scaled<'a> {
    fn new(obj: &'a DVector<f64>, region: &'a Region) -> Result<Self> {
        let gram_chol = region.gram.clone().cholesky().ok_or(PlrsError::NotPositiveDefinite("X^T X"))?;
        let root = region.lambda.sqrt();
        let b = (&region.c * &region.center).map(|v| v.max(0.0) / root);
        Ok(Scaled { obj, gram: &region.gram, gram_chol, c: &region.c, b })
    }

    fn state(&self, u: &DVector<f64>) -> Option<State> {
        let s = &self.b + self.c * u;
        if s.iter().any(|v| *v <= 0.0) {
            return None;
        }
        let g_u = self.gram * u;
        let e = 1.0 - u.dot(&g_u);
        (e > 0.0).then_some(State { s, e, g_u })
    }

    /// Strictly feasible start: a step from the centre that raises every
    /// constraint equally, to half the ellipsoid radius.
    fn start(&self) -> Result<DVector<f64>> {
        let q = self.c.nrows();
        let ginv_ct = self.gram_chol.solve(&self.c.transpose());
        let v = self.c * &ginv_ct;
        let coeffs = v
            .cholesky()
            .ok_or(PlrsError::RankDeficientConstraints { rows: q, rank: q.saturating_sub(1) })?
            .solve(&DVector::from_element(q, 1.0));
        let dir = &ginv_ct * coeffs;
        let norm2 = (self.gram * &dir).dot(&dir);
        Ok(dir * (0.5 / norm2.sqrt()))
    }

    /// Lagrange dual value at the multipliers implied by the barrier.
    fn dual_bound(&self, st: &State, t: f64) -> f64 {
        let w = st.s.map(|v| 1.0 / (t * v));
        let we = 1.0 / (t * st.e);
        let r = self.c.transpose() * &w - self.obj;
        -w.dot(&self.b) - r.dot(&self.gram_chol.solve(&r)) / (4.0 * we) - we
    }
}

/// `min obj^T theta` over the region by a path-following barrier method.
pub fn minimize_linear(obj: &DVector<f64>, region: &Region) -> Result<BarrierSolution> {
    let root = region.lambda.sqrt();
    let base = obj.dot(&region.center);
    if !(root > 0.0) {
        return Ok(BarrierSolution { theta: region.center.clone(), value: base, dual_bound: base, newton_steps: 0 });
    }
    let p = Scaled::new(obj, region)?;
    let c = p.c;
    let mut u = p.start()?;
    let mut t = 1.0;
    let mut steps = 0usize;
    loop {
        // Centering by damped Newton.
        loop {
            let st = p.state(&u).expect("iterates stay strictly feasible");
            let inv_s = st.s.map(|v| 1.0 / v);
            let grad = obj * t - c.transpose() * &inv_s + &st.g_u * (2.0 / st.e);
            let mut hess = p.gram * (2.0 / st.e) + (&st.g_u * st.g_u.transpose()) * (4.0 / (st.e * st.e));
            for i in 0..c.nrows() {
                let row = c.row(i).transpose();
                hess += (&row * row.transpose()) * (inv_s[i] * inv_s[i]);
            }
            let step = match hess.clone().cholesky() {
                Some(ch) => -ch.solve(&grad),
                None => -hess
                    .lu()
                    .solve(&grad)
                    .ok_or(PlrsError::BarrierNotConverged { iterations: steps, gap: f64::NAN })?,
            };
            let decrement2 = -grad.dot(&step);
            steps += 1;
            if decrement2 / 2.0 <= CENTERING_TOL || steps > MAX_NEWTON {
                break;
            }
            // Barrier change along the step, evaluated as a difference so it
            // stays accurate when the barrier value itself is large.
            let c_step = c * &step;
            let lin = t * obj.dot(&step);
            let cross = 2.0 * st.g_u.dot(&step);
            let curv = step.dot(&(p.gram * &step));
            let change = |a: f64| -> Option<f64> {
                let mut d = lin * a;
                for i in 0..st.s.len() {
                    let r = a * c_step[i] * inv_s[i];
                    if r <= -1.0 {
                        return None;
                    }
                    d -= r.ln_1p();
                }
                let re = -(a * cross + a * a * curv) / st.e;
                if re <= -1.0 {
                    return None;
                }
                Some(d - re.ln_1p())
            };
            let mut a = 1.0;
            let accepted = loop {
                if change(a).is_some_and(|dv| dv <= -0.25 * a * decrement2) {
                    let cand = &u + &step * a;
                    if p.state(&cand).is_some() {
                        break Some(cand);
                    }
                }
                a *= 0.5;
                if a < 1e-16 {
                    break None;
                }
            };
            match accepted {
                Some(cand) => u = cand,
                None => break,
            }
        }
        let st = p.state(&u).expect("strictly feasible");
        let value = base + root * obj.dot(&u);
        let dual = base + root * p.dual_bound(&st, t);
        let gap = value - dual;
        if gap <= GAP_TOL * (1.0 + value.abs()) {
            let theta = &region.center + &u * root;
            return Ok(BarrierSolution { theta, value, dual_bound: dual, newton_steps: steps });
        }
        if steps > MAX_NEWTON {
            return Err(PlrsError::BarrierNotConverged { iterations: steps, gap });
        }
        t *= GROWTH;
    }
}

#[derive(Debug, Clone)]
pub struct BandGrid {
    pub xs: Vec<f64>,
    pub fitted: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Confidence level `1 - alpha`.
    pub level: f64,
    pub lambda: f64,
}

pub fn equispaced(lo: f64, hi: f64, n_points: usize) -> Vec<f64> {
    match n_points {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        n => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Band of the full model over an equispaced grid spanning the observed
/// covariate range.
pub fn band_grid(
    spec: &SplineSpec,
    xs: &[f64],
    y: &[f64],
    weights: &ChibarWeights,
    alpha: f64,
    n_points: usize,
) -> Result<BandGrid> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    band_on(spec, xs, y, weights, alpha, &equispaced(lo, hi, n_points))
}

/// Band of the full model at the given grid points.
pub fn band_on(
    spec: &SplineSpec,
    xs: &[f64],
    y: &[f64],
    weights: &ChibarWeights,
    alpha: f64,
    grid: &[f64],
) -> Result<BandGrid> {
    let d = design_from_covariate(xs, spec)?;
    let region = region_params(&d, y, weights, alpha)?;
    band_for_region(spec, &region, grid, 1.0 - alpha)
}

pub fn band_for_region(spec: &SplineSpec, region: &Region, grid: &[f64], level: f64) -> Result<BandGrid> {
    let fitted = predict(spec, region.center.as_slice(), grid)?;
    let mut lower = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    // The centre is feasible, so its value bounds each extremum.
    for (&g, &f) in grid.iter().zip(&fitted) {
        let iv = band_at(&spec.basis_row(g), region)?;
        lower.push(iv.lo.min(f));
        upper.push(iv.hi.max(f));
    }
    Ok(BandGrid { xs: grid.to_vec(), fitted, lower, upper, level, lambda: region.lambda })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_region(lambda: f64) -> Region {
        let gram = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let c = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        Region::from_parts(DVector::from_column_slice(&[1.0, 0.0]), gram, c, lambda).unwrap()
    }

    #[test]
    fn zero_lambda_collapses() {
        let iv = band_at(&[1.0, 2.0], &toy_region(0.0)).unwrap();
        assert_eq!((iv.lo, iv.hi), (1.0, 1.0));
    }

    #[test]
    fn barrier_matches_ellipsoid_when_constraint_slack() {
        // Constraint theta_1 >= -10 never binds: compare with the closed form.
        let gram = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let c = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let center = DVector::from_column_slice(&[1.0, 10.0]);
        let region = Region::from_parts(center, gram.clone(), c, 0.5).unwrap();
        let x = DVector::from_column_slice(&[1.0, 0.4]);
        let half = ellipsoid_half_width(&x, &region).unwrap();
        let iv = band_at(x.as_slice(), &region).unwrap();
        let mid = x.dot(&region.center);
        assert!((iv.lo - (mid - half)).abs() < 1e-6, "{} vs {}", iv.lo, mid - half);
        assert!((iv.hi - (mid + half)).abs() < 1e-6);
        assert!(iv.lo_certificate <= iv.lo + 1e-12 && iv.hi_certificate >= iv.hi - 1e-12);
    }

    #[test]
    fn constraint_cuts_lower_side() {
        let region = toy_region(1.0);
        // Objective theta_1 is bounded below by the constraint at zero.
        let iv = band_at(&[0.0, 1.0], &region).unwrap();
        assert!(iv.lo.abs() < 1e-6, "{}", iv.lo);
        let half = ellipsoid_half_width(&DVector::from_column_slice(&[0.0, 1.0]), &region).unwrap();
        assert!((iv.hi - half).abs() < 1e-6);
    }

    #[test]
    fn grid_is_equispaced() {
        assert_eq!(equispaced(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
        assert_eq!(equispaced(2.0, 4.0, 1), vec![3.0]);
    }
}
