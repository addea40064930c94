//! Experiment-level behaviour of runs and sweeps through the library API.

use mbib::config::{ExperimentConfig, Method, Scope};
use mbib::core::sem::PresetName;
use mbib::runner::execute;
use mbib::sweep::{execute_sweep, GridAxis, SweepGrid};

fn grid(specs: &[&str]) -> SweepGrid {
    SweepGrid { axes: specs.iter().map(|s| GridAxis::parse(s).unwrap()).collect() }
}

#[test]
fn motivating_blanket_gib_meets_the_r2_floor() {
    let out = execute(&ExperimentConfig::default()).unwrap();
    let r2 = out.aggregate.target.unwrap().r2;
    assert_eq!(r2.n, 5);
    assert!(r2.mean >= 0.7, "{r2:?}");
    assert_eq!(out.aggregate.invariance_flags, 0);
}

#[test]
fn stretch_raises_error_at_every_missing_rate() {
    let config = ExperimentConfig { seeds: vec![0, 1, 2], ..ExperimentConfig::preset(PresetName::SevenNodeCovariate) };
    let out = execute_sweep(&config, &grid(&["missing_rate=0,0.25,0.5", "stretch=1,1.5,2"]), 1).unwrap();
    for row in out.report.cells.chunks(3) {
        let rmse: Vec<f64> = row.iter().map(|c| c.target.rmse.mean).collect();
        let inversions = rmse.windows(2).filter(|w| w[1] < w[0]).count();
        assert!(inversions <= 1, "missing rate {}: {rmse:?}", row[0].values[0]);
    }
    // Masking must cost accuracy once features are stretched.
    let at = |m: f64, s: f64| {
        out.report.cells.iter().find(|c| c.values == [m, s]).map(|c| c.target.rmse.mean).unwrap()
    };
    assert!(at(0.5, 2.0) > at(0.0, 2.0));
}

#[test]
fn vib_capacity_and_compression_grid_has_nine_cells() {
    let mut config = ExperimentConfig {
        method: Method::Vib,
        seeds: vec![0],
        ..ExperimentConfig::preset(PresetName::SevenNodeCovariate)
    };
    config.vib.max_epochs = 5;
    config.vib.hidden = vec![16];
    let out = execute_sweep(&config, &grid(&["z_dim=4,8,16", "beta=0.001,0.003,0.01"]), 0).unwrap();
    assert_eq!(out.report.cells.len(), 9);
    for ((cell_config, _), summary) in out.cells.iter().zip(&out.report.cells) {
        assert_eq!(cell_config.vib.latent_dim as f64, summary.values[0]);
        assert_eq!(cell_config.vib.beta, summary.values[1]);
        assert!(summary.target.rmse.mean.is_finite());
    }
}

#[test]
fn parents_scope_is_narrower_than_the_blanket() {
    let base = ExperimentConfig { seeds: vec![0], ..ExperimentConfig::preset(PresetName::SevenNodeCovariate) };
    let parents = execute(&ExperimentConfig { scope: Scope::Parents, ..base.clone() }).unwrap();
    let blanket = execute(&base).unwrap();
    assert_eq!(parents.seeds[0].report.features, ["C1", "Z", "X"]);
    // Children of T carry information the parents lack.
    let (rp, rb) = (parents.aggregate.target.unwrap().r2.mean, blanket.aggregate.target.unwrap().r2.mean);
    assert!(rb > rp, "{rb} vs {rp}");
}
