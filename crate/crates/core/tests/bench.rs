use diffcoef::bench::{fit_slope, run_ladder, write_ladder_csv, write_plot_data, Coupling, RateLadder, Regime};
use diffcoef::model::DiffusionModel;
use diffcoef::risk::BasisFamily;
use diffcoef::rng::stream;
use diffcoef::Error;
use rand_distr::{Distribution, Normal};

fn ladder(regime: Regime, seed: u64) -> RateLadder {
    RateLadder {
        regime,
        rungs: vec![8, 16, 32, 64],
        coupling: Coupling::Linear,
        beta: 1.0,
        c: 1.0,
        fixed_dimension: None,
        family: BasisFamily::Spline,
        degree: 2,
        a: -1.0,
        b: 1.0,
        growth: 1.0,
        constraint: true,
        replicates: 20,
        eval_paths: 200,
        substeps: 2,
        seed,
    }
}

#[test]
fn noiseless_power_law_is_fitted_exactly() {
    let pts: Vec<(f64, f64, f64)> =
        (0..6).map(|i| 2.0 + i as f64).map(|x| (x, 1.3 - 0.8 * x, 1.0 + x)).collect();
    let fit = fit_slope(&pts).unwrap();
    assert!((fit.slope + 0.8).abs() < 1e-12);
    assert!((fit.intercept - 1.3).abs() < 1e-12);
    assert!(fit.se < 1e-12);
    assert!((fit.r_squared - 1.0).abs() < 1e-12);
}

#[test]
fn noisy_lines_cover_their_slope() {
    let noise = Normal::new(0.0, 0.05).unwrap();
    let trials = 300;
    let mut covered = 0;
    for t in 0..trials {
        let mut rng = stream(t, 0x71, 0);
        let pts: Vec<(f64, f64, f64)> =
            (0..8).map(|i| 3.0 + 0.7 * i as f64).map(|x| (x, 0.4 - 0.66 * x + noise.sample(&mut rng), 1.0)).collect();
        let fit = fit_slope(&pts).unwrap();
        covered += usize::from((fit.slope + 0.66).abs() <= 3.0 * fit.se);
    }
    // A t distribution with 6 degrees of freedom puts about 97.6% within 3 SE.
    assert!(covered as f64 / trials as f64 >= 0.94, "{covered}/{trials}");
}

#[test]
fn slope_fit_rejects_bad_inputs() {
    assert!(matches!(fit_slope(&[(1.0, 1.0, 1.0), (2.0, 2.0, 1.0)]), Err(Error::TooFewPoints(2))));
    assert!(matches!(
        fit_slope(&[(1.0, 1.0, 1.0), (1.0, 2.0, 1.0), (2.0, 0.0, 1.0)]),
        Err(Error::DegenerateAbscissae)
    ));
}

#[test]
fn theoretical_slopes() {
    assert!((ladder(Regime::CompactRepeated, 0).theoretical_slope() + 2.0 / 3.0).abs() < 1e-15);
    assert!((ladder(Regime::RealLine, 0).theoretical_slope() + 0.5).abs() < 1e-15);
}

#[test]
fn couplings_set_the_rung_sizes() {
    let mut l = ladder(Regime::CompactRepeated, 0);
    assert_eq!(l.sizes(16), (16, 16));
    l.coupling = Coupling::Quadratic;
    assert_eq!(l.sizes(16), (16, 256));
    assert_eq!(ladder(Regime::CompactSinglePath, 0).sizes(16), (1, 16));
}

#[test]
fn short_ladders_are_refused() {
    let mut l = ladder(Regime::CompactRepeated, 0);
    l.rungs.truncate(3);
    assert!(matches!(
        run_ladder(&DiffusionModel::example(), &l),
        Err(Error::InsufficientRungs { required: 4, got: 3 })
    ));
}

#[test]
fn ladder_output_is_byte_deterministic() {
    let model = DiffusionModel::example();
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for run in 0..2 {
        let result = run_ladder(&model, &ladder(Regime::CompactRepeated, 42)).unwrap();
        let csv = dir.path().join(format!("ladder{run}.csv"));
        let plot = dir.path().join(format!("plot{run}.dat"));
        write_ladder_csv(&result, &csv).unwrap();
        write_plot_data(&result, &plot).unwrap();
        bytes.push((std::fs::read(csv).unwrap(), std::fs::read(plot).unwrap()));
    }
    assert_eq!(bytes[0], bytes[1]);
    let text = String::from_utf8(bytes[0].0.clone()).unwrap();
    assert!(text.starts_with("rung,N,n,m,A_N,mean_risk,se\n"));
    assert_eq!(text.lines().count(), 5);
}
