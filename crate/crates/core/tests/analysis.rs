use std::fs;

use layersolve::analysis::{
    convergence_study, double_mesh_error, parse_report_csv, ManufacturedProblem, StudyConfig,
};
use layersolve::mesh::{layer_params, SpatialMesh, ThetaVariant, TimeGrid};
use layersolve::problem::{derive_regime, PerturbationParams, PiecewiseField};
use layersolve::{march, registry, CheckPolicy, Error};

fn oracle(name: &str) -> Vec<(usize, f64)> {
    let path = format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (n, e) = l.split_once(',').unwrap();
            (n.parse().unwrap(), e.parse().unwrap())
        })
        .collect()
}

fn check_against_oracle(example: &str, eps: f64, mu: f64, fixture: &str) {
    let spec = registry::lookup(example)
        .unwrap()
        .with_params(PerturbationParams::new(eps, mu).unwrap());
    let report = convergence_study(&spec, &StudyConfig::new(64, 64, 4)).unwrap();
    let expected = oracle(fixture);
    assert_eq!(report.levels.len(), expected.len());
    for (rec, (n, e)) in report.levels.iter().zip(expected) {
        assert_eq!(rec.n, n);
        assert_eq!(rec.m, n);
        assert!((rec.e - e).abs() <= 1e-9 * e, "N={n}: {} vs {e}", rec.e);
    }
}

#[test]
fn example1_double_mesh_errors_match_oracle() {
    check_against_oracle("example1", 1e-8, 1e-6, "double_mesh_example1_eps1e-8_mu1e-6.csv");
}

#[test]
fn example2_double_mesh_errors_match_oracle() {
    check_against_oracle("example2", 1e-12, 1e-8, "double_mesh_example2_eps1e-12_mu1e-8.csv");
}

#[test]
fn study_is_deterministic_and_report_round_trips() {
    let spec = registry::lookup("example2").unwrap();
    let a = convergence_study(&spec, &StudyConfig::new(32, 16, 3)).unwrap();
    let b = convergence_study(&spec, &StudyConfig::new(32, 16, 3)).unwrap();
    assert_eq!(a.render_csv(), b.render_csv());
    assert_eq!(parse_report_csv(&a.render_csv()).unwrap(), a.levels);
    assert!(a.levels.last().unwrap().r.is_none());
    assert!(a.levels[..2].iter().all(|r| r.r.is_some()));
}

#[test]
fn independent_m_ladder() {
    let spec = registry::lookup("example1").unwrap();
    let report = convergence_study(&spec, &StudyConfig::new(32, 8, 2)).unwrap();
    let nm: Vec<(usize, usize)> = report.levels.iter().map(|r| (r.n, r.m)).collect();
    assert_eq!(nm, [(32, 8), (64, 16)]);
}

#[test]
fn case_two_needs_the_experimental_variant() {
    let spec = registry::lookup("example1")
        .unwrap()
        .with_params(PerturbationParams::new(1e-8, 0.5).unwrap());
    let err = convergence_study(&spec, &StudyConfig::new(64, 64, 2)).unwrap_err();
    assert_eq!(err.kind(), "UnsupportedRegime");
}

#[test]
fn layers_overlap_at_base_level() {
    let spec = registry::lookup("example1")
        .unwrap()
        .with_params(PerturbationParams::new(1e-2, 1e-3).unwrap());
    let err = convergence_study(&spec, &StudyConfig::new(64, 64, 2)).unwrap_err();
    assert_eq!(err.kind(), "LayersOverlap");
}

#[test]
fn double_mesh_error_is_zero_for_zero_source() {
    let mut spec = registry::lookup("example1").unwrap();
    spec.f = PiecewiseField::new("f", 0.5, |_, _| 0.0, |_, _| 0.0);
    let regime = derive_regime(&spec, 101).unwrap();
    let layer = layer_params(&regime, spec.params, ThetaVariant::Asymmetric).unwrap();
    let mesh = SpatialMesh::layer_adapted(&layer, 64, 0.5).unwrap();
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let coarse = march(&spec, &mesh, &grid, CheckPolicy::Strict).unwrap();
    let fine = march(&spec, &mesh.bisect(), &grid.refine(), CheckPolicy::Strict).unwrap();
    assert_eq!(double_mesh_error(&coarse, &fine).unwrap().e, 0.0);
    assert!(matches!(double_mesh_error(&fine, &coarse), Err(Error::MeshMismatch(_))));
}

#[test]
fn temporal_study_reaches_second_order_before_the_floor() {
    let p = ManufacturedProblem::sine_decay(PerturbationParams::new(1.0, 1.0).unwrap());
    let report = layersolve::analysis::temporal_order_study(&p, 512, &[4, 8], CheckPolicy::Strict)
        .unwrap();
    let q = report.records[1].temporal_ratio.unwrap();
    assert!(q > 3.4, "{q}");
}
