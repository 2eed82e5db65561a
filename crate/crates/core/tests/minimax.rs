use diffcoef::density::BridgeMethod;
use diffcoef::minimax::{
    analytic_holder_quotient, build_codebook, build_hypotheses, holder_membership, kl_budget, pairwise_separation,
    tsybakov_bound, BumpKernel, HypothesisConfig, HypothesisSet, KlOptions,
};
use diffcoef::model::ProbeGrid;
use proptest::prelude::*;

fn simpson(lo: f64, hi: f64, cells: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (hi - lo) / cells as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..cells {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * h);
    }
    s * h / 3.0
}

fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

#[test]
fn small_codebook_has_three_words() {
    let words = build_codebook(8, 2, 1).unwrap();
    assert_eq!(words.len(), 3);
    assert!(words[0].iter().all(|&b| b == 0));
    for i in 0..3 {
        for j in 0..i {
            assert!(hamming(&words[i], &words[j]) >= 1);
        }
    }
}

#[test]
fn infeasible_codebook_is_refused() {
    assert!(build_codebook(8, 3, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn codebooks_meet_their_distance(m in 8usize..=32, frac in 0.0f64..1.0, seed in 0u64..1000) {
        let cap = 2f64.powf(m as f64 / 8.0).floor() as usize;
        let target = 1 + ((cap - 1) as f64 * frac) as usize;
        let words = build_codebook(m, target, seed).unwrap();
        prop_assert_eq!(words.len(), target + 1);
        let d = m.div_ceil(8);
        for i in 0..words.len() {
            prop_assert_eq!(words[i].len(), m);
            for j in 0..i {
                prop_assert!(hamming(&words[i], &words[j]) >= d);
            }
        }
    }
}

#[test]
fn bumps_have_disjoint_supports() {
    let set = build_hypotheses(HypothesisConfig::new(2.0, 16.0, 1.5, -1.0, 1.0, 16), 4, 2).unwrap();
    for i in 0..=20_000 {
        let x = -1.0 + i as f64 / 10_000.0;
        let active = (0..16).filter(|&k| set.eta(k, x) != 0.0).count();
        assert!(active <= 1, "x = {x}");
    }
}

#[test]
fn kernel_norm_matches_quadrature() {
    let k = BumpKernel::new(1.3).unwrap();
    let oracle = simpson(-0.5, 0.5, 20_000, |u| {
        let q = 1.0 - 4.0 * u * u;
        if q > 0.0 {
            (1.3 * (-1.0 / q).exp()).powi(2)
        } else {
            0.0
        }
    });
    assert!((k.l2_norm_sq().unwrap() - oracle).abs() < 1e-10 * oracle);
    assert!((k.sup_norm() - 1.3 / std::f64::consts::E).abs() < 1e-15);
}

#[test]
fn single_bit_distance_has_a_closed_form() {
    let cfg = HypothesisConfig::new(2.0, 16.0, 1.5, -1.0, 1.0, 8);
    let mut word = vec![0u8; 8];
    word[3] = 1;
    let set = HypothesisSet::from_codewords(cfg, vec![word]).unwrap();
    let rep = pairwise_separation(&set, 1.0, 4, 16).unwrap();
    // Bump 3 lives on [-1 + 3/4, -1 + 4/4].
    let oracle = simpson(-0.25, 0.0, 20_000, |x| (set.sigma_sq(1, x) - 1.0).powi(2)).sqrt();
    assert!((rep.single_bit_distance - oracle).abs() < 1e-8 * oracle, "{} vs {oracle}", rep.single_bit_distance);
    assert!((rep.pairs[0].quadrature - oracle).abs() < 1e-8 * oracle);
}

#[test]
fn distances_respect_the_hamming_floor() {
    let set = build_hypotheses(HypothesisConfig::new(2.0, 16.0, 1.5, -1.0, 1.0, 24), 7, 3).unwrap();
    let rep = pairwise_separation(&set, 1.0, 8, 64).unwrap();
    assert!(rep.min_distance >= rep.hamming_floor * (1.0 - 1e-8));
    assert!(rep.max_rel_error < 1e-8, "{}", rep.max_rel_error);
}

#[test]
fn collapsed_family_has_zero_holder_quotient() {
    let mut cfg = HypothesisConfig::new(2.0, 16.0, 1.5, -1.0, 1.0, 8);
    cfg.gamma_scale = 0.0;
    let set = build_hypotheses(cfg, 1, 4).unwrap();
    let rep = holder_membership(&set, &ProbeGrid::new(-1.0, 1.0, 801)).unwrap();
    assert_eq!(rep.max_quotient, 0.0);
    assert!(rep.within);
}

#[test]
fn inflated_gamma_leaves_the_class() {
    let mut cfg = HypothesisConfig::new(2.0, 16.0, 1.5f64.sqrt(), -1.0, 1.0, 8);
    let calibrated = holder_membership(&build_hypotheses(cfg, 1, 5).unwrap(), &ProbeGrid::new(-1.0, 1.0, 2001)).unwrap();
    assert!(calibrated.within, "{}", calibrated.max_quotient);
    cfg.gamma_scale = 2.0;
    let set = build_hypotheses(cfg, 1, 5).unwrap();
    let rep = holder_membership(&set, &ProbeGrid::new(-1.0, 1.0, 2001)).unwrap();
    assert!(rep.max_quotient > cfg.r && !rep.within, "{}", rep.max_quotient);
    let analytic = analytic_holder_quotient(&set, 20_000);
    assert!((rep.max_quotient - analytic).abs() < 0.02 * analytic, "{} vs {analytic}", rep.max_quotient);
}

#[test]
fn kl_grows_with_the_number_of_steps() {
    let mut word = vec![0u8; 8];
    word[4] = 1;
    let set = HypothesisSet::from_codewords(HypothesisConfig::new(1.0, 16.0, 2.0, -4.0, 4.0, 8), vec![word]).unwrap();
    let opts = KlOptions { substeps: 16, bridges: 100, bridge_steps: 32, method: BridgeMethod::FirstOrder };
    let kls: Vec<(f64, f64)> = [16usize, 32, 64]
        .iter()
        .map(|&n| {
            let r = kl_budget(&set, 1, n, 4000, &opts, 6).unwrap();
            (r.average, r.average_se)
        })
        .collect();
    for w in kls.windows(2) {
        assert!(w[1].0 > w[0].0, "{kls:?}");
    }
}

#[test]
fn small_experiments_stay_within_the_kl_budget() {
    let set = build_hypotheses(HypothesisConfig::new(2.0, 16.0, 1.5, -1.0, 1.0, 16), 4, 7).unwrap();
    let opts = KlOptions { substeps: 16, bridges: 200, bridge_steps: 32, method: BridgeMethod::MonteCarlo };
    let rep = kl_budget(&set, 2, 4, 200, &opts, 8).unwrap();
    assert_eq!(rep.kl_null, 0.0);
    assert!(rep.within_budget, "{} vs {}", rep.average, rep.budget);
}

#[test]
fn tsybakov_bound_arithmetic() {
    let alpha = 1.0 / 16.0;
    let expected = 2.0 / 3.0 * (1.0 - 2.0 * alpha - (2.0 * alpha / 4f64.ln()).sqrt());
    assert!((tsybakov_bound(4, alpha).unwrap() - expected).abs() < 1e-15);
    assert!(tsybakov_bound(4, alpha).unwrap() > 0.0);
    assert!(tsybakov_bound(1, alpha).is_none());
}
