use plrs::simbench::{sim_test_shapes, ShapeConfig, ShapeFamily};

fn run(shape: ShapeFamily, effect: f64, reps: usize) -> plrs::simbench::ShapeRun {
    let cfg = ShapeConfig { shape, effect, reps, alphas: vec![0.05], mc_draws: 1000, seed: 44, ..ShapeConfig::default() };
    sim_test_shapes(&cfg).unwrap()
}

#[test]
fn null_rejection_rate_is_nominal() {
    let reps = 300;
    let run = run(ShapeFamily::Null, 0.0, reps);
    let se = (0.05f64 * 0.95 / reps as f64).sqrt();
    for rate in [run.power[0].plrs, run.power[0].lm] {
        assert!((rate - 0.05).abs() <= 3.0 * se, "rate {rate}");
    }
    assert!(run.plrs_pvalues.iter().all(|p| (0.0..=1.0).contains(p)));
}

#[test]
fn partial_effect_favours_plrs() {
    let run = run(ShapeFamily::PartialEffect, 0.6, 200);
    assert!(run.power[0].plrs >= run.power[0].lm, "{:?}", run.power);
}

#[test]
fn strong_linear_effect_detected_by_both() {
    let run = run(ShapeFamily::Linear, 1.5, 100);
    assert!(run.power[0].plrs > 0.9 && run.power[0].lm > 0.9, "{:?}", run.power);
}
