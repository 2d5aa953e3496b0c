mod common;

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use common::*;
use plrs::bands::{band_at, ellipsoid_half_width, region_params, Region};
use plrs::chibar::{weights_exact_small, weights_mc, ChibarWeights};
use plrs::cqp::{fit_equality, fit_inequality, project_cone};
use plrs::inference::{bh_qvalues, ebar_statistic, mixture_pvalue, mixture_quantile, BetaMixture, MixtureVariant};
use plrs::spline::{design_from_covariate, KnotSet, SplineSpec};

#[test]
fn projection_matches_active_set_enumeration() {
    let mut r = rng(11);
    for _ in 0..300 {
        let k = r.random_range(1..=4);
        let q = r.random_range(0..=k.min(4));
        let gram = random_spd(&mut r, k);
        let c = random_constraints(&mut r, q, k);
        let z = DVector::from_fn(k, |_, _| r.random::<f64>() * 4.0 - 2.0);
        let got = project_cone(z.as_slice(), &gram, &c).unwrap();
        let (_, best) = enumerate_projection(&z, &gram, &c);
        let d = &got.point - &z;
        let obj = (&gram * &d).dot(&d);
        assert!((obj - best).abs() <= 1e-6 * (1.0 + best), "objective {obj} vs oracle {best}");
        assert!(got.kkt_residual <= 1e-8);
    }
}

#[test]
fn equality_fit_solves_lagrange_system() {
    let mut r = rng(5);
    let xs: Vec<f64> = (0..40).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
    let s_knots = KnotSet::new(vec![-0.3, 0.4], vec![-1, 0, 1]).unwrap();
    let spec = SplineSpec::full(s_knots);
    let d = design_from_covariate(&xs, &spec).unwrap();
    let y: Vec<f64> = xs.iter().map(|x| 0.3 * x + r.random::<f64>()).collect();
    let fit = fit_equality(&d, &y).unwrap();
    // [2G C^T; C 0] [theta; mu] = [2 X^T y; 0]
    let (k, q) = (d.k(), d.q());
    let mut kkt = DMatrix::zeros(k + q, k + q);
    kkt.view_mut((0, 0), (k, k)).copy_from(&(&d.gram * 2.0));
    kkt.view_mut((0, k), (k, q)).copy_from(&d.c.transpose());
    kkt.view_mut((k, 0), (q, k)).copy_from(&d.c);
    let mut rhs = DVector::zeros(k + q);
    rhs.rows_mut(0, k).copy_from(&(d.x.transpose() * DVector::from_column_slice(&y) * 2.0));
    let sol = kkt.lu().solve(&rhs).unwrap();
    for i in 0..k {
        assert!((fit.theta[i] - sol[i]).abs() < 1e-9);
    }
}

#[test]
fn inequality_fit_matches_enumeration_on_data() {
    let mut r = rng(8);
    for _ in 0..100 {
        let xs: Vec<f64> = (0..25).map(|_| r.random::<f64>()).collect();
        let spec = SplineSpec::full(KnotSet::new(vec![0.5], vec![0, 1]).unwrap());
        let Ok(d) = design_from_covariate(&xs, &spec) else { continue };
        let y: Vec<f64> = xs.iter().map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
        let fit = fit_inequality(&d, &y).unwrap();
        let ols = d.gram.clone().cholesky().unwrap().solve(&(d.x.transpose() * DVector::from_column_slice(&y)));
        let (theta, _) = enumerate_projection(&ols, &d.gram, &d.c);
        let rss = |t: &DVector<f64>| (DVector::from_column_slice(&y) - &d.x * t).norm_squared();
        assert!((fit.rss - rss(&theta)).abs() < 1e-6 * (1.0 + fit.rss));
    }
}

#[test]
fn ebar_statistic_from_first_principles() {
    let mut r = rng(21);
    let xs: Vec<f64> = (0..30).map(|_| r.random::<f64>()).collect();
    let spec = SplineSpec::full(KnotSet::new(vec![0.5], vec![0, 1]).unwrap());
    let d = design_from_covariate(&xs, &spec).unwrap();
    let y: Vec<f64> = xs.iter().map(|x| x + 0.3 * r.random::<f64>()).collect();
    let st = ebar_statistic(&d, &y).unwrap();
    let yv = DVector::from_column_slice(&y);
    let ols = d.gram.clone().cholesky().unwrap().solve(&(d.x.transpose() * &yv));
    let (ineq, _) = enumerate_projection(&ols, &d.gram, &d.c);
    // Under C theta = 0 with this C only the intercept survives.
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let eq = DVector::from_column_slice(&[mean, 0.0, 0.0, 0.0]);
    let diff = &ineq - &eq;
    let delta = (&d.gram * &diff).dot(&diff);
    let rss_unc = (&yv - &d.x * &ols).norm_squared();
    assert_relative_eq!(st.ebar, delta / (delta + rss_unc), max_relative = 1e-8);
    let rss = |t: &DVector<f64>| (&yv - &d.x * t).norm_squared();
    assert_relative_eq!(st.lr, rss(&eq) - rss(&ineq), max_relative = 1e-8);
}

#[test]
fn band_quantile_matches_quadrature() {
    let mut r = rng(40);
    let k = 4;
    let gram = random_spd(&mut r, k);
    let c = random_constraints(&mut r, 3, k);
    let w = weights_mc(&c, &gram, 20_000, 9).unwrap();
    let (n, b) = (40usize, (40.0 - 4.0) / 2.0);
    let shapes: Vec<f64> = (0..w.w.len()).map(|h| (h as f64 + 1.0) / 2.0).collect();
    let oracle = bisect(|x| mixture_cdf_quadrature(&w.w, &shapes, b, x), 0.95);
    let got = mixture_quantile(0.95, &w, n, k, MixtureVariant::Band).unwrap();
    assert!((got - oracle).abs() < 1e-8, "{got} vs {oracle}");
}

#[test]
fn test_pvalue_matches_quadrature() {
    let w = ChibarWeights { p: 3, w: vec![0.15, 0.4, 0.3, 0.15], n_draws: 0, mc_se: 0.0, exact: true };
    let shapes = [0.0, 0.5, 1.0, 1.5];
    for x in [0.01, 0.1, 0.3, 0.7] {
        let oracle = 1.0 - mixture_cdf_quadrature(&w.w, &shapes, 13.0, x);
        let got = mixture_pvalue(x, &w, 30, 4, MixtureVariant::Test).unwrap();
        assert!((got - oracle).abs() < 1e-9, "x={x}: {got} vs {oracle}");
        let mix = BetaMixture::new(&w, 30, 4, MixtureVariant::Test).unwrap();
        assert!((mix.cdf(x) + mix.sf(x) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn exact_pair_weights_match_mc() {
    let mut r = rng(3);
    for _ in 0..10 {
        let gram = random_spd(&mut r, 3);
        let c = random_constraints(&mut r, 2, 3);
        let exact = weights_exact_small(&c, &gram).unwrap();
        let mc = weights_mc(&c, &gram, 40_000, r.random()).unwrap();
        for (e, m) in exact.w.iter().zip(mc.standard_errors().iter().zip(&mc.w)) {
            assert!((e - m.1).abs() <= 4.0 * m.0.max(1e-4), "{exact:?} vs {mc:?}");
        }
    }
}

#[test]
fn bh_matches_brute_force() {
    let mut r = rng(77);
    for m in [1usize, 2, 5, 40] {
        let p: Vec<f64> = (0..m).map(|_| r.random::<f64>().powi(3)).collect();
        let q = bh_qvalues(&p);
        let mut sorted = p.clone();
        sorted.sort_by(f64::total_cmp);
        for i in 0..m {
            let rank = sorted.iter().position(|v| *v == p[i]).unwrap();
            let brute = (rank..m).map(|j| sorted[j] * m as f64 / (j + 1) as f64).fold(f64::INFINITY, f64::min).min(1.0);
            assert!((q[i] - brute).abs() < 1e-15);
        }
    }
}

fn k2_region(r: &mut rand_chacha::ChaCha8Rng) -> Region {
    let n = 15;
    let xs: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    let slope = r.random::<f64>() * 2.0 - 1.0;
    let y: Vec<f64> = xs.iter().map(|x| slope * x + 0.5 * (r.random::<f64>() - 0.5)).collect();
    let spec = SplineSpec::full(KnotSet::single(0));
    let d = design_from_covariate(&xs, &spec).unwrap();
    let w = ChibarWeights { p: 1, w: vec![0.5, 0.5], n_draws: 0, mc_se: 0.0, exact: true };
    region_params(&d, &y, &w, 0.05 + 0.2 * r.random::<f64>()).unwrap()
}

#[test]
fn k2_band_matches_dense_grid() {
    let mut r = rng(2024);
    for _ in 0..25 {
        let region = k2_region(&mut r);
        let x = [1.0, r.random::<f64>() * 1.4 - 0.2];
        let iv = band_at(&x, &region).unwrap();
        let center = [region.center[0], region.center[1]];
        let (lo, hi, res) = grid_band_2d(x, center, region.gram(), region.constraints(), region.lambda, 1000).unwrap();
        assert!(iv.lo <= lo + 1e-9 && lo - iv.lo <= 2.0 * res, "lo {} vs grid {lo} (res {res})", iv.lo);
        assert!(iv.hi >= hi - 1e-9 && iv.hi - hi <= 2.0 * res, "hi {} vs grid {hi} (res {res})", iv.hi);
    }
}

#[test]
fn ellipsoid_without_constraints_closed_form() {
    let mut r = rng(6);
    let gram = random_spd(&mut r, 3);
    let center = DVector::from_column_slice(&[0.2, -0.1, 0.4]);
    let region = Region::from_parts(center.clone(), gram.clone(), DMatrix::zeros(0, 3), 0.7).unwrap();
    let x = DVector::from_column_slice(&[1.0, 0.3, -0.5]);
    let iv = band_at(x.as_slice(), &region).unwrap();
    let half = (0.7 * x.dot(&(gram.clone().try_inverse().unwrap() * &x))).sqrt();
    assert_relative_eq!(iv.hi - x.dot(&center), half, max_relative = 1e-12);
    assert_relative_eq!(x.dot(&center) - iv.lo, half, max_relative = 1e-12);
    // The barrier route agrees when the single constraint is far from binding.
    let c = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
    let shifted = Region::from_parts(&center + DVector::from_column_slice(&[50.0, 0.0, 0.0]), gram, c, 0.7).unwrap();
    let ivb = band_at(x.as_slice(), &shifted).unwrap();
    let half_b = ellipsoid_half_width(&x, &shifted).unwrap();
    let mid = x.dot(&shifted.center);
    assert!((ivb.lo - (mid - half_b)).abs() < 1e-6 && (ivb.hi - (mid + half_b)).abs() < 1e-6);
}

#[test]
fn band_certificates_bracket_bounds() {
    let mut r = rng(31);
    for _ in 0..20 {
        let region = k2_region(&mut r);
        let iv = band_at(&[1.0, r.random::<f64>()], &region).unwrap();
        assert!(iv.lo_certificate <= iv.lo && iv.lo - iv.lo_certificate <= 1e-6 * (1.0 + iv.lo.abs()));
        assert!(iv.hi_certificate >= iv.hi && iv.hi_certificate - iv.hi <= 1e-6 * (1.0 + iv.hi.abs()));
    }
}

#[test]
fn method2_knot_maximises_scan_objective() {
    use plrs::knots::knots_method2;
    let mut r = rng(13);
    for _ in 0..50 {
        let n = 30;
        let x: Vec<f64> = (0..n).map(|_| (r.random::<f64>() * 40.0).round() / 20.0 - 1.0).collect();
        let probs: Vec<[f64; 4]> = x
            .iter()
            .map(|&xi| {
                let gain = (1.0 / (1.0 + (-6.0 * xi).exp()) + 0.3 * (r.random::<f64>() - 0.5)).clamp(0.0, 1.0);
                [0.0, 1.0 - gain, gain, 0.0]
            })
            .collect();
        let ks = knots_method2(&x, &probs, &[0, 1]).unwrap();
        let score = |t: f64| -> f64 {
            x.iter().zip(&probs).map(|(&xi, p)| if xi <= t { p[1] } else { p[2] }).sum()
        };
        let mut cands: Vec<f64> = x.clone();
        cands.sort_by(f64::total_cmp);
        cands.dedup();
        let mut best = score(cands[0] - 1.0);
        for w in cands.windows(2) {
            best = best.max(score(0.5 * (w[0] + w[1])));
        }
        best = best.max(score(cands[cands.len() - 1]));
        assert!((score(ks.knots()[0]) - best).abs() < 1e-9);
    }
}

#[test]
fn two_state_design_rows() {
    let spec = SplineSpec::full(KnotSet::new(vec![0.5], vec![0, 1]).unwrap());
    assert_eq!(spec.basis_row(0.2), vec![1.0, 0.2, 0.0, 0.0]);
    assert_eq!(spec.basis_row(0.5), vec![1.0, 0.5, 0.0, 0.0]);
    let row = spec.basis_row(0.8);
    assert_eq!(&row[..3], &[1.0, 0.8, 1.0]);
    assert!((row[3] - 0.3).abs() < 1e-15);
    let c = spec.constraint_matrix().unwrap();
    assert_eq!(c, DMatrix::from_row_slice(3, 4, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0]));
}
