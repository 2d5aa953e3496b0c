mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use plrs::bands::band_on;
use plrs::chibar::weights_for;
use plrs::cqp::project_cone;
use plrs::knots::{knots_method1, knots_method2};
use plrs::spline::{design_from_covariate, enumerate_masks, predict, KnotSet, SplineSpec};

fn knotset(n_states: usize) -> KnotSet {
    let (knots, states) = match n_states {
        1 => (vec![], vec![0]),
        2 => (vec![0.3], vec![0, 1]),
        3 => (vec![-0.3, 0.3], vec![-1, 0, 1]),
        _ => (vec![-0.3, 0.3, 0.9], vec![-1, 0, 1, 2]),
    };
    KnotSet::new(knots, states).unwrap()
}

fn spec_strategy() -> impl Strategy<Value = SplineSpec> {
    (1usize..=4).prop_flat_map(|s| {
        let free = 2 * s - 1;
        (Just(s), 0usize..(1 << free)).prop_map(|(s, m)| {
            let mut mask = vec![true; 2 * s];
            for (i, slot) in mask.iter_mut().skip(1).enumerate() {
                *slot = m >> i & 1 == 1;
            }
            SplineSpec::new(knotset(s), mask).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn predict_is_design_times_theta(spec in spec_strategy(), seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let xs: Vec<f64> = (0..60).map(|i| -1.0 + 2.5 * i as f64 / 59.0).collect();
        let Ok(d) = design_from_covariate(&xs, &spec) else { return Ok(()) };
        let theta: Vec<f64> = (0..spec.k()).map(|_| rand::Rng::random::<f64>(&mut r) - 0.5).collect();
        let direct = &d.x * DVector::from_column_slice(&theta);
        let via = predict(&spec, &theta, &xs).unwrap();
        for (a, b) in direct.iter().zip(&via) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn projected_full_fit_is_monotone_with_ordered_slopes(s in 1usize..=4, raw in prop::collection::vec(-2.0f64..2.0, 8)) {
        let ks = knotset(s);
        let spec = SplineSpec::full(ks.clone());
        let c = spec.constraint_matrix().unwrap();
        let k = spec.k();
        let proj = project_cone(&raw[..k], &DMatrix::identity(k, k), &c).unwrap();
        let theta = proj.point.as_slice();
        prop_assert!((&c * &proj.point).iter().all(|v| *v >= -1e-10));
        let grid: Vec<f64> = (0..400).map(|i| -1.5 + 3.0 * i as f64 / 399.0).collect();
        let f = predict(&spec, theta, &grid).unwrap();
        prop_assert!(f.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        let slope = |seg: usize| theta[1] + (0..seg).map(|j| theta[3 + 2 * j]).sum::<f64>();
        let r = ks.reference();
        prop_assert!(slope(r) >= -1e-10);
        for seg in 0..s {
            prop_assert!(slope(seg) >= slope(r) - 1e-10);
        }
    }

    #[test]
    fn projection_is_feasible_and_idempotent(seed in any::<u64>(), k in 1usize..=5, qfrac in 0.0f64..1.0) {
        let mut r = common::rng(seed);
        let q = ((k as f64) * qfrac).round() as usize;
        let gram = common::random_spd(&mut r, k);
        let c = common::random_constraints(&mut r, q, k);
        let z: Vec<f64> = (0..k).map(|_| rand::Rng::random::<f64>(&mut r) * 4.0 - 2.0).collect();
        let once = project_cone(&z, &gram, &c).unwrap();
        prop_assert!((&c * &once.point).iter().all(|v| *v >= -1e-9));
        let twice = project_cone(once.point.as_slice(), &gram, &c).unwrap();
        prop_assert!((&twice.point - &once.point).amax() < 1e-9);
    }

    #[test]
    fn constraint_count_bounded(spec in spec_strategy()) {
        let c = match spec.constraint_matrix() {
            Ok(c) => c,
            Err(plrs::PlrsError::DegenerateCone) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let s = spec.knotset.n_states();
        prop_assert!(c.nrows() <= 2 * s - 1);
        prop_assert!(c.nrows() <= spec.k());
        prop_assert_eq!(c.ncols(), spec.k());
    }

    #[test]
    fn method1_ignores_sample_order(seed in any::<u64>(), n in 8usize..40) {
        let mut r = common::rng(seed);
        let mut obs: Vec<(f64, i8)> = (0..n)
            .map(|i| {
                let s = [-1i8, 0, 1][i % 3];
                (s as f64 * 0.6 + 0.25 * rand::Rng::random::<f64>(&mut r), s)
            })
            .collect();
        let (x, s): (Vec<f64>, Vec<i8>) = obs.iter().copied().unzip();
        let a = knots_method1(&x, &s).unwrap();
        use rand::seq::SliceRandom;
        obs.shuffle(&mut r);
        let (x2, s2): (Vec<f64>, Vec<i8>) = obs.into_iter().unzip();
        let b = knots_method1(&x2, &s2).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn methods_agree_on_separated_hard_calls(seed in any::<u64>(), n in 6usize..40) {
        let mut r = common::rng(seed);
        let s: Vec<i8> = (0..n).map(|i| [-1i8, 0, 1][i % 3]).collect();
        let x: Vec<f64> = s.iter().map(|&si| si as f64 + 0.4 * rand::Rng::random::<f64>(&mut r)).collect();
        let probs: Vec<[f64; 4]> = s
            .iter()
            .map(|&si| {
                let mut p = [0.0; 4];
                p[(si + 1) as usize] = 1.0;
                p
            })
            .collect();
        let one = knots_method1(&x, &s).unwrap();
        let two = knots_method2(&x, &probs, &[-1, 0, 1]).unwrap();
        for (a, b) in one.knots().iter().zip(two.knots()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn masks_are_distinct_with_intercept() {
    for s in 1..=4 {
        let masks = enumerate_masks(s);
        assert_eq!(masks.len(), 1 << (2 * s - 1));
        let mut seen = std::collections::HashSet::new();
        for m in &masks {
            assert!(m[0]);
            assert!(seen.insert(m.clone()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn bands_nest_and_contain_fit(seed in any::<u64>(), a1 in 0.01f64..0.2, gap in 0.05f64..0.4) {
        let mut r = common::rng(seed);
        let n = 30;
        let xs: Vec<f64> = (0..n).map(|_| rand::Rng::random::<f64>(&mut r)).collect();
        let s: Vec<i8> = xs.iter().map(|&x| if x > 0.5 { 1 } else { 0 }).collect();
        if s.iter().filter(|v| **v == 1).count() < 3 || s.iter().filter(|v| **v == 0).count() < 3 {
            return Ok(());
        }
        let y: Vec<f64> = xs.iter().map(|&x| x + if x > 0.5 { 0.5 + (x - 0.5) } else { 0.0 } + 0.5 * (rand::Rng::random::<f64>(&mut r) - 0.5)).collect();
        let ks = knots_method1(&xs, &s).unwrap();
        let spec = SplineSpec::full(ks);
        let d = design_from_covariate(&xs, &spec).unwrap();
        let w = weights_for(&d.c, &d.gram, 4000, seed).unwrap();
        let grid: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
        let wide = band_on(&spec, &xs, &y, &w, a1, &grid).unwrap();
        let narrow = band_on(&spec, &xs, &y, &w, (a1 + gap).min(0.9), &grid).unwrap();
        for i in 0..grid.len() {
            prop_assert!(wide.lower[i] <= wide.fitted[i] && wide.fitted[i] <= wide.upper[i]);
            prop_assert!(wide.lower[i] <= narrow.lower[i] + 1e-7);
            prop_assert!(wide.upper[i] >= narrow.upper[i] - 1e-7);
        }
    }
}
