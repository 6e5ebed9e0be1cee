//! The closed-form limit of the beamforming SINR should be approached by
//! the fading-averaged empirical ratio as the AP count grows.

use gfra_core::experiments::{run_asymptotic, ExperimentConfig};

#[test]
fn dense_grid_matches_the_limit_within_fifteen_percent() {
    let mut cfg = ExperimentConfig::default();
    cfg.asym_grid_sizes = vec![400];
    cfg.asym_fading_draws = 1000;
    let report = run_asymptotic(&cfg, 5).unwrap();
    assert!(report.note.is_none());
    let point = &report.points[0];
    assert_eq!(point.m, 400);
    assert!(
        point.rel_err() < 0.15,
        "m=400: empirical {} vs limit {} (rel err {})",
        point.empirical_sinr,
        point.asymptotic_sinr,
        point.rel_err()
    );
}

#[test]
fn every_default_grid_size_lands_near_the_limit() {
    let cfg = ExperimentConfig::default();
    let report = run_asymptotic(&cfg, 6).unwrap();
    assert_eq!(report.points.len(), cfg.asym_grid_sizes.len());
    for point in &report.points {
        assert!(
            point.rel_err() < 0.15,
            "m={}: empirical {} vs limit {} (rel err {})",
            point.m,
            point.empirical_sinr,
            point.asymptotic_sinr,
            point.rel_err()
        );
    }
    let csv = report.to_csv_string();
    assert!(csv.starts_with("m,empirical_sinr,asymptotic_sinr,rel_err\n"));
    assert_eq!(csv.trim_end().lines().count(), 1 + report.points.len());
}
