//! Least squares under homogeneous linear inequality (or equality)
//! constraints, and projection onto a polyhedral cone in a quadratic metric.
//!
//! Every constrained fit reduces to projecting the unconstrained estimate onto
//! `{C theta >= 0}` in the `X^T X` metric. The projector runs a primal
//! active-set iteration entirely in constraint space: iterates are kept in the
//! form `theta = z + G^{-1} C^T l`, so each working-set subproblem is a solve
//! with a principal submatrix of `V = C G^{-1} C^T`.

use nalgebra::{DMatrix, DVector};

use crate::dense::{cholesky_in_place, cholesky_solve};
use crate::error::{PlrsError, Result};
use crate::spline::DesignSystem;

pub const TOL_FEAS: f64 = 1e-9;
pub const TOL_ACTIVE: f64 = 1e-8;
pub const TOL_KKT: f64 = 1e-8;

/// Relative pivot threshold used when testing working sets for independence.
const PIVOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta: DVector<f64>,
    pub rss: f64,
    /// Constraint rows with `|c_i theta| <= TOL_ACTIVE * |c_i|`.
    pub active: Vec<usize>,
    /// Lagrange multipliers, one per constraint row.
    pub multipliers: Vec<f64>,
    pub loglik: f64,
    pub kkt_residual: f64,
    pub n: usize,
    /// Number of inequality rows in the system that was solved.
    pub q: usize,
}

impl FitResult {
    pub fn k(&self) -> usize {
        self.theta.len()
    }
}

/// Gaussian log-likelihood with the error variance profiled out.
pub fn profile_loglik(rss: f64, n: usize) -> f64 {
    let n = n as f64;
    -0.5 * n * ((2.0 * std::f64::consts::PI * rss / n).ln() + 1.0)
}

fn residual_ss(d: &DesignSystem, y: &DVector<f64>, theta: &DVector<f64>) -> f64 {
    (y - &d.x * theta).norm_squared()
}

fn check_response(d: &DesignSystem, y: &[f64]) -> Result<DVector<f64>> {
    if y.len() != d.n() {
        return Err(PlrsError::DimensionMismatch { what: "response", expected: d.n(), found: y.len() });
    }
    Ok(DVector::from_column_slice(y))
}

fn finish(d: &DesignSystem, y: &DVector<f64>, proj: ConeProjection) -> FitResult {
    let rss = residual_ss(d, y, &proj.point);
    FitResult {
        theta: proj.point,
        rss,
        active: proj.active,
        multipliers: proj.multipliers,
        loglik: profile_loglik(rss, d.n()),
        kkt_residual: proj.kkt_residual,
        n: d.n(),
        q: d.q(),
    }
}

/// Ordinary least squares via a QR factorisation of the design.
pub fn fit_unconstrained(d: &DesignSystem, y: &[f64]) -> Result<FitResult> {
    let yv = check_response(d, y)?;
    let theta = ols(&d.x, &yv)?;
    let rss = residual_ss(d, &yv, &theta);
    Ok(FitResult {
        theta,
        rss,
        active: Vec::new(),
        multipliers: vec![0.0; d.q()],
        loglik: profile_loglik(rss, d.n()),
        kkt_residual: 0.0,
        n: d.n(),
        q: d.q(),
    })
}

pub(crate) fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let k = x.ncols();
    if x.nrows() < k {
        return Err(PlrsError::InsufficientObservations { n: x.nrows(), k });
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let rmax = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if r.diagonal().iter().any(|v| v.abs() <= 1e-12 * rmax) || rmax == 0.0 {
        return Err(PlrsError::NotPositiveDefinite("X^T X"));
    }
    let qty = qr.q().transpose() * y;
    r.solve_upper_triangular(&qty)
        .ok_or(PlrsError::NotPositiveDefinite("X^T X"))
}

/// Least squares subject to `C theta >= 0`.
pub fn fit_inequality(d: &DesignSystem, y: &[f64]) -> Result<FitResult> {
    let yv = check_response(d, y)?;
    let unc = ols(&d.x, &yv)?;
    let proj = ConeProjector::new(&d.gram, &d.c)?.project(unc.as_slice())?;
    Ok(finish(d, &yv, proj))
}

/// Least squares subject to `C theta = 0`.
pub fn fit_equality(d: &DesignSystem, y: &[f64]) -> Result<FitResult> {
    let yv = check_response(d, y)?;
    let unc = ols(&d.x, &yv)?;
    let projector = ConeProjector::new(&d.gram, &d.c)?;
    let q = d.q();
    if projector.independent_rows.len() < q {
        return Err(PlrsError::RankDeficientConstraints { rows: q, rank: projector.independent_rows.len() });
    }
    let all: Vec<usize> = (0..q).collect();
    let v = projector.constraint_values(unc.as_slice());
    let lambda = projector.working_set_multipliers(&all, &v)?;
    let point = projector.point_from(unc.as_slice(), &lambda);
    let proj = projector.summarize(unc.as_slice(), point, lambda, false);
    Ok(finish(d, &yv, proj))
}

/// Outcome of a cone projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeProjection {
    pub point: DVector<f64>,
    pub active_count: usize,
    pub active: Vec<usize>,
    pub multipliers: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// `argmin_{C theta >= 0} (theta - z)^T G (theta - z)`.
pub fn project_cone(z: &[f64], gram: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<ConeProjection> {
    ConeProjector::new(gram, c)?.project(z)
}

/// Precomputed factors for repeated projections onto one cone in one metric.
#[derive(Debug, Clone)]
pub struct ConeProjector {
    k: usize,
    q: usize,
    gram: DMatrix<f64>,
    c: DMatrix<f64>,
    /// `G^{-1} C^T`, `k x q`.
    ginv_ct: DMatrix<f64>,
    /// `C G^{-1} C^T`, row-major `q x q`.
    v: Vec<f64>,
    row_norms: Vec<f64>,
    /// Maximal independent subset of rows, greedily in index order.
    independent_rows: Vec<usize>,
    /// Lower Cholesky factor of the metric.
    chol_l: DMatrix<f64>,
    max_iter: usize,
}

impl ConeProjector {
    pub fn new(gram: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<Self> {
        let k = gram.nrows();
        if gram.ncols() != k {
            return Err(PlrsError::DimensionMismatch { what: "metric columns", expected: k, found: gram.ncols() });
        }
        if c.ncols() != k {
            return Err(PlrsError::DimensionMismatch { what: "constraint columns", expected: k, found: c.ncols() });
        }
        let chol = gram.clone().cholesky().ok_or(PlrsError::NotPositiveDefinite("metric"))?;
        let q = c.nrows();
        let ginv_ct = chol.solve(&c.transpose());
        let vm = c * &ginv_ct;
        let mut v = vec![0.0; q * q];
        for i in 0..q {
            for j in 0..q {
                v[i * q + j] = 0.5 * (vm[(i, j)] + vm[(j, i)]);
            }
        }
        let row_norms = (0..q).map(|i| c.row(i).norm()).collect();
        let mut projector = ConeProjector {
            k,
            q,
            gram: gram.clone(),
            c: c.clone(),
            ginv_ct,
            v,
            row_norms,
            independent_rows: Vec::new(),
            chol_l: chol.l(),
            max_iter: 100 * k.max(q).max(1),
        };
        let mut rows = Vec::new();
        for i in 0..q {
            rows.push(i);
            if projector.factor_working_set(&rows).is_none() {
                rows.pop();
            }
        }
        projector.independent_rows = rows;
        Ok(projector)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Lower Cholesky factor `L` with `L L^T = G`.
    pub fn metric_factor(&self) -> &DMatrix<f64> {
        &self.chol_l
    }

    /// `C G^{-1} C^T`, row-major.
    pub fn constraint_covariance(&self) -> &[f64] {
        &self.v
    }

    pub fn constraint_values(&self, z: &[f64]) -> Vec<f64> {
        (0..self.q)
            .map(|i| (0..self.k).map(|j| self.c[(i, j)] * z[j]).sum())
            .collect()
    }

    fn factor_working_set(&self, w: &[usize]) -> Option<Vec<f64>> {
        let m = w.len();
        let mut a = vec![0.0; m * m];
        for (r, &i) in w.iter().enumerate() {
            for (s, &j) in w.iter().enumerate() {
                a[r * m + s] = self.v[i * self.q + j];
            }
        }
        cholesky_in_place(&mut a, m, PIVOT_TOL).then_some(a)
    }

    /// Multipliers placing every row of `w` exactly on its boundary:
    /// `l_W = -V_WW^{-1} v_W`, zero elsewhere.
    fn working_set_multipliers(&self, w: &[usize], v: &[f64]) -> Result<Vec<f64>> {
        let mut lambda = vec![0.0; self.q];
        if w.is_empty() {
            return Ok(lambda);
        }
        let l = self
            .factor_working_set(w)
            .ok_or(PlrsError::RankDeficientConstraints { rows: w.len(), rank: w.len() - 1 })?;
        let mut rhs: Vec<f64> = w.iter().map(|&i| -v[i]).collect();
        cholesky_solve(&l, w.len(), &mut rhs);
        for (&i, val) in w.iter().zip(rhs) {
            lambda[i] = val;
        }
        Ok(lambda)
    }

    fn point_from(&self, z: &[f64], lambda: &[f64]) -> DVector<f64> {
        let mut x = DVector::from_column_slice(z);
        for (j, &l) in lambda.iter().enumerate() {
            if l != 0.0 {
                x.axpy(l, &self.ginv_ct.column(j), 1.0);
            }
        }
        x
    }

    /// Slack `s = C theta` for the iterate with multipliers `lambda`.
    fn slack(&self, v: &[f64], lambda: &[f64]) -> Vec<f64> {
        (0..self.q)
            .map(|i| v[i] + (0..self.q).map(|j| self.v[i * self.q + j] * lambda[j]).sum::<f64>())
            .collect()
    }

    /// Only the number of binding rows, skipping the KKT audit.
    pub fn active_count(&self, z: &[f64]) -> Result<usize> {
        let (lambda, _) = self.solve_multipliers(z)?;
        let v = self.constraint_values(z);
        let s = self.slack(&v, &lambda);
        Ok(self.active_rows(&s).len())
    }

    pub fn project(&self, z: &[f64]) -> Result<ConeProjection> {
        if z.len() != self.k {
            return Err(PlrsError::DimensionMismatch { what: "point", expected: self.k, found: z.len() });
        }
        let (lambda, iterations) = self.solve_multipliers(z)?;
        let point = if lambda.iter().all(|l| *l == 0.0) {
            DVector::from_column_slice(z)
        } else {
            self.point_from(z, &lambda)
        };
        let mut proj = self.summarize(z, point, lambda, true);
        proj.iterations = iterations;
        Ok(proj)
    }

    fn active_rows(&self, s: &[f64]) -> Vec<usize> {
        (0..self.q)
            .filter(|&i| s[i].abs() <= TOL_ACTIVE * self.row_norms[i])
            .collect()
    }

    fn solve_multipliers(&self, z: &[f64]) -> Result<(Vec<f64>, usize)> {
        let q = self.q;
        let v = self.constraint_values(z);
        if (0..q).all(|i| v[i] >= -TOL_FEAS * self.row_norms[i]) {
            return Ok((vec![0.0; q], 0));
        }

        // Feasible start: projection onto the subspace where every row binds.
        let mut working: Vec<usize> = self.independent_rows.clone();
        let mut lambda = self.working_set_multipliers(&working, &v)?;
        let mut s = self.slack(&v, &lambda);

        for iter in 1..=self.max_iter {
            let target = self.working_set_multipliers(&working, &v)?;
            let s_target = self.slack(&v, &target);
            let step: Vec<f64> = (0..q).map(|i| s_target[i] - s[i]).collect();
            let scale = (0..q).map(|i| step[i].abs() / self.row_norms[i]).fold(0.0, f64::max);

            let mut alpha = 1.0;
            let mut blocking = None;
            for i in 0..q {
                if working.contains(&i) || step[i] / self.row_norms[i] >= -1e-12 * scale {
                    continue;
                }
                let ratio = (s[i].max(0.0)) / -step[i];
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(i);
                }
            }

            match blocking {
                None => {
                    lambda = target;
                    s = s_target;
                    let lmax = working.iter().map(|&i| lambda[i].abs()).fold(0.0, f64::max);
                    let drop = working
                        .iter()
                        .copied()
                        .filter(|&i| lambda[i] < -1e-11 * (1.0 + lmax))
                        .min_by(|&a, &b| lambda[a].total_cmp(&lambda[b]).then(a.cmp(&b)));
                    match drop {
                        None => {
                            for i in 0..q {
                                if !working.contains(&i) {
                                    lambda[i] = 0.0;
                                }
                            }
                            return Ok((lambda, iter));
                        }
                        Some(i) => working.retain(|&r| r != i),
                    }
                }
                Some(b) => {
                    for i in 0..q {
                        lambda[i] += alpha * (target[i] - lambda[i]);
                        s[i] += alpha * step[i];
                    }
                    s[b] = 0.0;
                    working.push(b);
                    working.sort_unstable();
                }
            }
        }
        Err(PlrsError::IterationCap(self.max_iter))
    }

    fn summarize(&self, z: &[f64], point: DVector<f64>, multipliers: Vec<f64>, inequality: bool) -> ConeProjection {
        let zv = DVector::from_column_slice(z);
        let s = &self.c * &point;
        let active = self.active_rows(s.as_slice());
        let lam = DVector::from_column_slice(&multipliers);
        let grad = &self.gram * (&point - &zv);
        let stationarity = (&grad - self.c.transpose() * &lam).amax();
        let scale = 1.0 + (&self.gram * &zv).amax();
        let mut kkt = stationarity / scale;
        for i in 0..self.q {
            let si = s[i] / self.row_norms[i];
            if inequality {
                kkt = kkt.max(-si).max(-multipliers[i] / scale);
                kkt = kkt.max((multipliers[i] * si).abs() / scale);
            } else {
                kkt = kkt.max(si.abs());
            }
        }
        ConeProjection {
            point,
            active_count: active.len(),
            active,
            multipliers,
            kkt_residual: kkt.max(0.0),
            iterations: 0,
        }
    }
}
