//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random symmetric positive definite matrix `A^T A + 0.1 I`.
pub fn random_spd(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k + 2, k, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    a.transpose() * a + DMatrix::identity(k, k) * 0.1
}

/// Random `q x k` matrix with full row rank (`q <= k`).
pub fn random_constraints(rng: &mut ChaCha8Rng, q: usize, k: usize) -> DMatrix<f64> {
    loop {
        let c = DMatrix::from_fn(q, k, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        if q == 0 || c.clone().svd(false, false).singular_values.min() > 0.05 {
            return c;
        }
    }
}

/// `min (theta - z)^T G (theta - z)` subject to `C theta >= 0`, by trying every
/// active set: each candidate solves the equality-constrained problem through
/// its KKT system, and the best feasible candidate wins.
pub fn enumerate_projection(z: &DVector<f64>, gram: &DMatrix<f64>, c: &DMatrix<f64>) -> (DVector<f64>, f64) {
    let (q, k) = (c.nrows(), c.ncols());
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0u32..(1 << q) {
        let rows: Vec<usize> = (0..q).filter(|i| mask >> i & 1 == 1).collect();
        let m = rows.len();
        let mut kkt = DMatrix::zeros(k + m, k + m);
        kkt.view_mut((0, 0), (k, k)).copy_from(&(gram * 2.0));
        for (j, &r) in rows.iter().enumerate() {
            for col in 0..k {
                kkt[(k + j, col)] = c[(r, col)];
                kkt[(col, k + j)] = c[(r, col)];
            }
        }
        let mut rhs = DVector::zeros(k + m);
        rhs.rows_mut(0, k).copy_from(&(gram * z * 2.0));
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let theta = sol.rows(0, k).into_owned();
        if (c * &theta).iter().any(|v| *v < -1e-10) {
            continue;
        }
        let d = &theta - z;
        let obj = (gram * &d).dot(&d);
        if best.as_ref().is_none_or(|(_, b)| obj < *b) {
            best = Some((theta, obj));
        }
    }
    best.expect("the origin is always feasible")
}

/// Simpson's rule with `m` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Beta CDF by quadrature after substituting `x = v^2`, which removes the
/// singularity of the density at zero when `a < 1`.
pub fn beta_cdf_quadrature(a: f64, b: f64, x: f64) -> f64 {
    let integrand = |v: f64| 2.0 * v.powf(2.0 * a - 1.0) * (1.0 - v * v).max(0.0).powf(b - 1.0);
    let total = simpson(integrand, 0.0, 1.0, 40_000);
    simpson(integrand, 0.0, x.sqrt(), 40_000) / total
}

/// Mixture CDF `sum_h w_h F_{Beta(a_h, b)}(x)` with point mass for `a_h = 0`.
pub fn mixture_cdf_quadrature(weights: &[f64], shapes: &[f64], b: f64, x: f64) -> f64 {
    weights
        .iter()
        .zip(shapes)
        .map(|(w, &a)| if a == 0.0 { *w } else { w * beta_cdf_quadrature(a, b, x) })
        .sum()
}

pub fn bisect(f: impl Fn(f64) -> f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Extremes of `x^T theta` over `{theta in R^2 : C theta >= 0, (theta - c)^T G
/// (theta - c) <= lambda}` on a `side x side` grid over the bounding box.
pub fn grid_band_2d(
    x: [f64; 2],
    center: [f64; 2],
    gram: &DMatrix<f64>,
    c: &DMatrix<f64>,
    lambda: f64,
    side: usize,
) -> Option<(f64, f64, f64)> {
    let ginv = gram.clone().try_inverse().unwrap();
    let half = [(lambda * ginv[(0, 0)]).sqrt(), (lambda * ginv[(1, 1)]).sqrt()];
    let step = [2.0 * half[0] / (side - 1) as f64, 2.0 * half[1] / (side - 1) as f64];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..side {
        let t0 = center[0] - half[0] + i as f64 * step[0];
        for j in 0..side {
            let t1 = center[1] - half[1] + j as f64 * step[1];
            let d = [t0 - center[0], t1 - center[1]];
            let quad = gram[(0, 0)] * d[0] * d[0] + 2.0 * gram[(0, 1)] * d[0] * d[1] + gram[(1, 1)] * d[1] * d[1];
            if quad > lambda {
                continue;
            }
            if (0..c.nrows()).any(|r| c[(r, 0)] * t0 + c[(r, 1)] * t1 < 0.0) {
                continue;
            }
            let v = x[0] * t0 + x[1] * t1;
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let resolution = x[0].abs() * step[0] + x[1].abs() * step[1];
    lo.is_finite().then_some((lo, hi, resolution))
}
