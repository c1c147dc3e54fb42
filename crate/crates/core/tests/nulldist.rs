mod common;

use common::simulated;
use flatsurv::contrast::{ClassSpec, ExposureGrid};
use flatsurv::nulldist::{covariance, draw_null_sup, p_value, run_test, NullSampler};
use flatsurv::sim::SettingKind;
use flatsurv::{ClassKind, Dataset, NuisanceFit, OneStepEstimator, TestConfig};
use nalgebra::{DMatrix, SymmetricEigen};

fn small_config(kind: ClassKind) -> TestConfig {
    TestConfig { class_kind: kind, kappa: 8, num_null_draws: 200, seed: 17, ..TestConfig::default() }
}

#[test]
fn covariance_is_psd_and_order_free() {
    let ds = simulated(SettingKind::A, 200, 31);
    let (fit, _) = NuisanceFit::fit(&ds, &TestConfig::default()).unwrap();
    let spec = ClassSpec::new(ClassKind::BoxOnly, flatsurv::contrast::build_grid(&ds, 10).unwrap().0, None).unwrap();
    let gens = spec.generators();
    let psi = OneStepEstimator::new(&fit, &ds, 25.0).psi_onestep_batch(&gens);
    let cov = covariance(&psi.eif.centered);
    assert_eq!(cov, cov.transpose());
    let eig = SymmetricEigen::new(cov.clone());
    assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-10));

    let mut rows = ds.observations().to_vec();
    rows.rotate_left(57);
    let permuted = Dataset::new(rows).unwrap();
    let (pfit, _) = NuisanceFit::fit(&permuted, &TestConfig::default()).unwrap();
    let ppsi = OneStepEstimator::new(&pfit, &permuted, 25.0).psi_onestep_batch(&gens);
    let pcov = covariance(&ppsi.eif.centered);
    assert!((cov - pcov).amax() < 1e-12);
}

#[test]
fn scalar_covariance_is_mean_square() {
    let col = DMatrix::from_column_slice(4, 1, &[1.0, -2.0, 0.5, 0.5]);
    let cov = covariance(&col);
    assert!((cov[(0, 0)] - (1.0 + 4.0 + 0.25 + 0.25) / 4.0).abs() < 1e-15);
}

#[test]
fn box_only_draw_is_l1_of_gaussian() {
    let grid = ExposureGrid { thresholds: vec![0.0, 1.0, 2.0, 3.0], bin_masses: vec![0.3, 0.3, 0.4] };
    let spec = ClassSpec::new(ClassKind::BoxOnly, grid, None).unwrap();
    let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 2.0, 0.1, 0.0, 0.1, 0.5]);
    let sampler = NullSampler::from_covariance(cov, 4).unwrap();
    for u in 0..50 {
        let xi = sampler.draw(u);
        let m = draw_null_sup(&sampler, &spec, u);
        assert_eq!(m.value, xi.iter().map(|v| v.abs()).sum::<f64>());
    }
}

#[test]
fn p_value_decreases_with_statistic() {
    let draws: Vec<f64> = (0..100).map(|i| (i as f64 * 0.731).sin().abs()).collect();
    let mut prev = f64::INFINITY;
    for k in 0..=120 {
        let p = p_value(k as f64 / 100.0, &draws);
        assert!(p > 0.0 && p <= 1.0);
        assert!(p <= prev);
        prev = p;
    }
    assert_eq!(p_value(2.0, &draws), 1.0 / 101.0);
}

#[test]
fn seed_changes_draws_only() {
    let ds = simulated(SettingKind::B, 200, 32);
    let a = run_test(&ds, &small_config(ClassKind::Indicator)).unwrap();
    let b = run_test(&ds, &TestConfig { seed: 99, ..small_config(ClassKind::Indicator) }).unwrap();
    assert_eq!(a.statistic, b.statistic);
    assert_ne!(a.draws, b.draws);
    assert!((a.p_value - b.p_value).abs() < 0.1);
    assert_eq!(a.reject, a.p_value <= a.alpha);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let ds = simulated(SettingKind::C, 150, 33);
    for kind in [ClassKind::Indicator, ClassKind::BoxTv, ClassKind::MonotoneVariance, ClassKind::BoxOnly] {
        let config = small_config(kind);
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| serde_json::to_string(&run_test(&ds, &config).unwrap()).unwrap())
        };
        assert_eq!(run(1), run(4), "{kind}");
    }
}

#[test]
fn every_class_kind_runs_end_to_end() {
    let ds = simulated(SettingKind::B, 200, 34);
    for kind in [ClassKind::Indicator, ClassKind::BoxTv, ClassKind::MonotoneVariance, ClassKind::BoxOnly] {
        let r = run_test(&ds, &small_config(kind)).unwrap();
        assert_eq!(r.draws.len(), 200);
        assert!(r.statistic >= 0.0 && r.draws.iter().all(|&m| m >= 0.0));
        assert_eq!(r.p_value, p_value(r.statistic, &r.draws));
        assert_eq!(r.diagnostics.draw_status.exact, 200);
        assert!(r.diagnostics.jitter <= 1e-6);
    }
}

#[test]
fn run_test_labels_the_failing_stage() {
    let ds = simulated(SettingKind::A, 100, 35);
    let err = run_test(&ds, &TestConfig { t: 1e6, ..TestConfig::default() }).unwrap_err();
    assert!(err.is_input_error());
    assert!(err.to_string().starts_with("validation"), "{err}");
}
