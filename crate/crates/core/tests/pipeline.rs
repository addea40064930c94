//! Cross-module checks of the sampling, fitting and evaluation pipeline
//! against closed forms derived from the SEM equations.

use mbib_core::eval::{metrics, mb_invariance_diagnostic, GaussianBnImputer};
use mbib_core::gib::{fit_gib, fit_gib_population, GibConfig};
use mbib_core::numstats::Ridge;
use mbib_core::rng::derive_seed;
use mbib_core::sem::{preset, PresetName, PresetParams};
use mbib_core::Imputer;

#[test]
fn motivating_blanket_gib_reaches_the_bayes_r2_on_the_target() {
    let p = preset(PresetName::Motivating, &PresetParams::default()).unwrap();
    let blanket = p.dag.markov_blanket("T").unwrap();
    assert_eq!(blanket, ["C1", "C2", "C3"]);
    // T = 2 C1 + C2 + C3 + ε with unit variances: Bayes R² = 6 / 7.
    let bayes_r2 = 6.0 / 7.0;
    let mut r2 = 0.0;
    for seed in 0..5 {
        let source = p.source.sample(2000, derive_seed(seed, "source")).unwrap();
        let target = p.target.sample(2000, derive_seed(seed, "target")).unwrap();
        let model = fit_gib(&source, &blanket, "T", GibConfig::default()).unwrap();
        let m = metrics(&target.column("T").unwrap(), &model.predict(&target).unwrap()).unwrap();
        r2 += m.r2 / 5.0;
        let inv = mb_invariance_diagnostic(&model, &source, &target).unwrap();
        assert!(!inv.flagged, "seed {seed}: {inv:?}");
    }
    assert!(r2 >= 0.7);
    assert!((r2 - bayes_r2).abs() < 0.03, "{r2}");
}

#[test]
fn population_fit_recovers_the_structural_weights() {
    let p = preset(PresetName::Motivating, &PresetParams::default()).unwrap();
    let blanket = p.dag.markov_blanket("T").unwrap();
    let moments = p.source.implied_moments().unwrap();
    let model = fit_gib_population(&moments, &blanket, "T", GibConfig { ridge: Ridge::NONE, ..Default::default() })
        .unwrap()
        .affine();
    for (got, want) in model.coefficients.iter().zip([2.0, 1.0, 1.0]) {
        assert!((got - want).abs() < 1e-9, "{:?}", model.coefficients);
    }
    assert!(model.intercept.abs() < 1e-9);
    let target = p.target.sample(500, 3).unwrap();
    let pred = model.predict(&target).unwrap();
    for (i, y) in pred.iter().enumerate() {
        let c = target.row(i);
        assert!((y - (2.0 * c[0] + c[1] + c[2])).abs() < 1e-8);
    }
}

#[test]
fn bayes_network_matches_blanket_gib_under_covariate_shift() {
    let p = preset(PresetName::SevenNodeCovariate, &PresetParams::default()).unwrap();
    let blanket = p.dag.markov_blanket("T").unwrap();
    let source = p.source.sample(2000, 1).unwrap();
    let target = p.target.sample(2000, 2).unwrap();
    let truth = target.column("T").unwrap();
    let gib = fit_gib(&source, &blanket, "T", GibConfig::default()).unwrap();
    let bn = GaussianBnImputer::fit(&source, "T", Ridge::default()).unwrap();
    let rg = metrics(&truth, &gib.predict(&target).unwrap()).unwrap().r2;
    let rb = metrics(&truth, &bn.predict(&target).unwrap()).unwrap().r2;
    assert!(rg > 0.95 && (rg - rb).abs() < 0.1, "{rg} vs {rb}");
}

#[test]
fn target_shift_is_flagged_by_the_invariance_diagnostic() {
    let p = preset(PresetName::SevenNodeTargetShift, &PresetParams::default()).unwrap();
    assert!(p.target_mechanism_shifted);
    let blanket = p.dag.markov_blanket("T").unwrap();
    let source = p.source.sample(2000, 4).unwrap();
    let target = p.target.sample(2000, 5).unwrap();
    let gib = fit_gib(&source, &blanket, "T", GibConfig::default()).unwrap();
    let inv = mb_invariance_diagnostic(&gib, &source, &target).unwrap();
    assert!(inv.flagged, "{inv:?}");
}
