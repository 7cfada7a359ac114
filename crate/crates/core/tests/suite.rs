//! Estimator suite on reduced scenarios.

use cfep::sim::{aggregate, mmse_genie, nmse, run_estimator_suite, run_job, Estimator, Instance};
use cfep::RunConfig;

fn small() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.scenario.ap_grid = 2;
    cfg.scenario.num_uts = 4;
    cfg.scenario.pilot_length = 3;
    cfg.scenario.realizations = 3;
    cfg.algorithm.damping = 0.7;
    cfg.sweep.tx_power_dbm = vec![0.0, 10.0, 20.0];
    cfg
}

#[test]
fn known_symbol_mmse_is_exact_without_noise() {
    let mut cfg = small();
    cfg.scenario.noise_dbm = -260.0;
    let inst = Instance::build(&cfg, 10.0, 0).unwrap();
    let est = mmse_genie(&inst.realization, &inst.model, inst.params.noise_var).unwrap();
    assert!(nmse(&est, &inst.realization.channels).unwrap() < 1e-9);
}

#[test]
fn genie_ep_tracks_known_symbol_mmse() {
    let cfg = small();
    for r in 0..3 {
        let recs = run_job(&cfg, 20.0, r).unwrap();
        let get = |e: Estimator| recs.iter().find(|x| x.estimator == e).unwrap().nmse;
        let (mmse, genie) = (get(Estimator::MmseGenie), get(Estimator::GenieEp));
        assert!(genie < 1.5 * mmse, "realization {r}: {genie} vs {mmse}");
    }
}

#[test]
fn summary_has_four_curves_over_the_sweep() {
    let cfg = small();
    let suite = run_estimator_suite(&cfg).unwrap();
    assert!(suite.failures.is_empty());
    assert_eq!(suite.records.len(), 4 * 3 * 3);
    let rows = aggregate(&suite.records).unwrap();
    assert_eq!(rows.len(), 4 * 3);
    for row in &rows {
        assert_eq!(row.realizations, 3);
        assert!(row.mean_nmse.is_finite() && row.mean_nmse > 0.0);
        assert_eq!(row.mean_ser.is_none(), row.estimator == Estimator::PilotOnly);
    }
}
