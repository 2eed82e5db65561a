use diffcoef::model::{DiffusionModel, Term};
use diffcoef::regression::{build_regression, decompose_residuals, write_regression_csv};
use diffcoef::risk::mean_se;
use diffcoef::simulate::{simulate_sample, simulate_sample_with, PathSample, SimOptions};
use proptest::prelude::*;

fn fine(model: &DiffusionModel, n_paths: usize, n: usize, seed: u64) -> PathSample {
    let opts = SimOptions { substeps: 32, keep_fine: true, ..Default::default() };
    simulate_sample_with(model, n_paths, n, &opts, seed).unwrap()
}

#[test]
fn responses_estimate_constant_sigma_squared() {
    let s = simulate_sample(&DiffusionModel::constant(2.0), 2000, 20, 1, 8).unwrap();
    let d = build_regression(&s).unwrap();
    let (m, se) = mean_se(&d.u);
    assert!((m - 4.0).abs() <= 3.0 * se, "{m} (se {se})");
}

#[test]
fn driftless_models_have_no_drift_terms() {
    let m = DiffusionModel::custom(vec![], vec![Term::Const { c: 1.0 }, Term::Sin { a: 0.3, w: 1.0 }], None).unwrap();
    let dec = decompose_residuals(&fine(&m, 10, 16, 2), &m).unwrap();
    assert!(dec.r1.iter().all(|&v| v == 0.0));
    assert!(dec.r2.iter().all(|&v| v == 0.0));
    assert!(dec.zeta3.iter().all(|&v| v == 0.0));
    assert!(dec.zeta2.iter().any(|&v| v != 0.0));
    // Phi keeps (sigma'' sigma + sigma'^2) sigma^2 without b, so r3 only
    // vanishes when sigma is constant as well.
    assert!(dec.r3.iter().any(|&v| v != 0.0));
    let bm = DiffusionModel::constant_unit();
    let dec = decompose_residuals(&fine(&bm, 10, 16, 2), &bm).unwrap();
    for v in [&dec.r1, &dec.r2, &dec.r3, &dec.zeta2, &dec.zeta3] {
        assert!(v.iter().all(|&t| t == 0.0));
    }
}

#[test]
fn constant_sigma_has_no_second_martingale_term() {
    let m = DiffusionModel::custom(vec![Term::Tanh { a: -1.0, s: 1.0 }], vec![Term::Const { c: 0.7 }], None).unwrap();
    let dec = decompose_residuals(&fine(&m, 10, 16, 3), &m).unwrap();
    assert!(dec.zeta2.iter().all(|&v| v == 0.0));
}

#[test]
fn decomposition_reconstructs_the_responses() {
    let m = DiffusionModel::example();
    let s = fine(&m, 50, 32, 4);
    let d = build_regression(&s).unwrap();
    let dec = decompose_residuals(&s, &m).unwrap();
    assert!(dec.reconstruction_error(&d, &m) < 1e-3);
}

#[test]
fn martingale_terms_are_centered_per_time_step() {
    let m = DiffusionModel::example();
    let s = fine(&m, 200, 50, 5);
    let dec = decompose_residuals(&s, &m).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let z: Vec<f64> = (0..200).map(|j| dec.zeta_sum(j * 50 + k)).collect();
        let (mean, se) = mean_se(&z);
        worst = worst.max((mean / se).abs());
    }
    // 50 dependent tests: the largest of 50 normal z-scores rarely exceeds 3.5.
    assert!(worst <= 3.5, "{worst}");
}

#[test]
fn first_martingale_term_has_bounded_second_moment() {
    let m = DiffusionModel::example();
    let kappa1 = m.kappa1;
    for n in [16, 64, 256] {
        let dec = decompose_residuals(&fine(&m, 50, n, 6), &m).unwrap();
        let sq: Vec<f64> = dec.zeta1.iter().map(|v| v * v).collect();
        let (mean, _) = mean_se(&sq);
        // For Gaussian increments E[zeta1^2] is 2 sigma^4, so 3 kappa1^4 is a loose cap.
        assert!(mean <= 3.0 * kappa1.powi(4), "n = {n}: {mean}");
    }
}

#[test]
fn csv_export_has_one_row_per_pair() {
    let s = simulate_sample(&DiffusionModel::example(), 3, 5, 2, 1).unwrap();
    let d = build_regression(&s).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.csv");
    write_regression_csv(&d, &p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("j,k,x,u"));
    assert_eq!(lines.count(), 15);
}

proptest! {
    #[test]
    fn responses_ignore_a_common_shift(shift in -100.0f64..100.0, rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 6), 1..4)) {
        let base = PathSample::from_rows(&rows, 0).unwrap();
        let moved: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| x + shift).collect()).collect();
        let moved = PathSample::from_rows(&moved, 0).unwrap();
        let a = build_regression(&base).unwrap();
        let b = build_regression(&moved).unwrap();
        for (ua, ub) in a.u.iter().zip(&b.u) {
            prop_assert!((ua - ub).abs() <= 1e-9 * (1.0 + shift.abs()).powi(2));
        }
    }
}
