use diffcoef::density::{
    exit_probability, occupation_density, sandwich_constant, transition_density, BridgeMethod, BridgeOptions,
    DensityTransforms,
};
use diffcoef::minimax::{HypothesisConfig, HypothesisSet};
use diffcoef::model::DiffusionModel;
use diffcoef::rng::stream;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use std::f64::consts::PI;
use std::sync::Arc;

#[test]
fn brownian_density_is_the_standard_normal() {
    let (p, se) = transition_density(&DiffusionModel::constant_unit(), 0.0, 1.0, 0.0, 1.0, 100, 16, 1).unwrap();
    assert!((p - 0.24197).abs() < 1e-5, "{p}");
    assert_eq!(se, 0.0);
}

#[test]
fn example_density_has_a_sane_log_value() {
    let (p, se) = transition_density(&DiffusionModel::example(), 0.0, 0.5, 0.0, 0.3, 2000, 32, 2).unwrap();
    assert!(p > 0.0 && se < 0.1 * p);
    assert!((-10.0..=2.0).contains(&p.ln()), "{p}");
}

#[test]
fn brownian_occupation_density_has_a_closed_form() {
    let n = 12;
    let (v, _) = occupation_density(&DiffusionModel::constant_unit(), n, 0.0, 100, 16, 3).unwrap();
    let oracle: f64 = (1..n).map(|k| 1.0 / (2.0 * PI * k as f64 / n as f64).sqrt()).sum::<f64>() / n as f64;
    assert!((v - oracle).abs() < 1e-12, "{v} vs {oracle}");
}

#[test]
fn occupation_density_vanishes_far_out() {
    let (v, _) = occupation_density(&DiffusionModel::example(), 10, 8.0, 200, 32, 4).unwrap();
    assert!(v < 1e-8, "{v}");
}

#[test]
fn two_steps_give_a_single_term() {
    let model = DiffusionModel::example();
    let tr = DensityTransforms::new(&model).unwrap();
    let opts = BridgeOptions { bridges: 500, steps: 32, method: BridgeMethod::MonteCarlo };
    let (v, _) = diffcoef::density::occupation_density_with(&tr, 2, 0.4, &opts, 5).unwrap();
    let mut rng = stream(5, diffcoef::rng::domain::BRIDGE, 1);
    let (p, _) = tr.density(0.5, 0.0, 0.4, &opts, &mut rng);
    assert!((v - 0.5 * p).abs() < 1e-15, "{v} vs {p}");
}

#[test]
fn exit_probability_at_zero_threshold_is_one() {
    let e = exit_probability(&DiffusionModel::example(), 0.0, 500, 4, 20, 6).unwrap();
    assert_eq!(e.value, 1.0);
}

#[test]
fn brownian_exit_probability_is_the_gaussian_tail() {
    // Two grid times keep the maximum over times from picking up upward noise.
    let e = exit_probability(&DiffusionModel::constant_unit(), 2.0, 20_000, 1, 2, 7).unwrap();
    let gauss = 2.0 * (1.0 - Normal::standard().cdf(2.0));
    assert_eq!(e.t_argmax, 1.0);
    assert!((e.value - gauss).abs() <= 3.0 * e.se, "{} vs {gauss}", e.value);
}

#[test]
fn chapman_kolmogorov_holds() {
    let model = DiffusionModel::example();
    let (y, s, t) = (0.4, 0.3, 0.7);
    let (direct, _) = transition_density(&model, 0.0, t, 0.0, y, 4000, 32, 8).unwrap();
    let dz = 0.05;
    let zs: Vec<f64> = (0..=240).map(|i| -6.0 + i as f64 * dz).collect();
    let vals: Vec<f64> = zs
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let (a, _) = transition_density(&model, 0.0, s, 0.0, z, 300, 16, 100 + i as u64).unwrap();
            let (b, _) = transition_density(&model, s, t, z, y, 300, 16, 1000 + i as u64).unwrap();
            a * b
        })
        .collect();
    let composed = dz * (vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[vals.len() - 1]));
    assert!((composed - direct).abs() < 0.02, "{composed} vs {direct}");
}

#[test]
fn brownian_sandwich_constant_is_one() {
    let probes: Vec<(f64, f64, f64)> = [(0.1, 0.0), (0.5, 1.0), (1.0, -2.0)]
        .iter()
        .map(|&(t, y)| (t, y, Normal::new(0.0, f64::sqrt(t)).unwrap().pdf(y)))
        .collect();
    assert!((sandwich_constant(1.0, &probes) - 1.0).abs() < 1e-12);
}

#[test]
fn example_sandwich_constant_is_finite() {
    let model = DiffusionModel::example();
    let probes: Vec<(f64, f64, f64)> = [(0.2, 0.0), (0.5, 0.5), (1.0, -1.0), (1.0, 2.0)]
        .iter()
        .enumerate()
        .map(|(i, &(t, y))| (t, y, transition_density(&model, 0.0, t, 0.0, y, 1000, 32, 20 + i as u64).unwrap().0))
        .collect();
    let c = sandwich_constant(2.0, &probes);
    assert!((1.0..10.0).contains(&c), "{c}");
}

fn hypothesis_mass(beta: f64, bridge_steps: usize) -> f64 {
    let cfg = HypothesisConfig::new(beta, 16.0, 1.5, -1.0, 1.0, 8);
    let set = Arc::new(HypothesisSet::from_codewords(cfg, vec![vec![1, 0, 1, 1, 0, 0, 1, 0]]).unwrap());
    let model = set.model(1).unwrap();
    let tr = DensityTransforms::new(&model).unwrap();
    let opts = BridgeOptions { bridges: 400, steps: bridge_steps, method: BridgeMethod::MonteCarlo };
    let mut rng = stream(30, 0x63, 0);
    let dy = 0.02;
    let vals: Vec<f64> = (0..=1000).map(|i| tr.density(0.5, 0.0, -10.0 + i as f64 * dy, &opts, &mut rng).0).collect();
    dy * (vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[1000]))
}

#[test]
fn hypothesis_density_integrates_to_one() {
    let total = hypothesis_mass(2.0, 32);
    assert!((total - 1.0).abs() < 0.01, "{total}");
}

#[test]
fn rough_hypotheses_need_finer_bridges() {
    // beta = 1 bumps have steep sigma'' and are resolved only by long bridges.
    let coarse = hypothesis_mass(1.0, 32);
    let fine = hypothesis_mass(1.0, 512);
    assert!((fine - 1.0).abs() < 0.01, "{fine}");
    assert!((coarse - 1.0).abs() > (fine - 1.0).abs(), "{coarse} vs {fine}");
}
