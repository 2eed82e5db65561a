//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every criterion prints exactly one PASS/FAIL line; the process fails if
//! any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use diffcoef::basis::BasisSpec;
use diffcoef::bench::{fit_slope, run_ladder, Coupling, RateLadder, Regime};
use diffcoef::density::{exit_probability, transition_density, BridgeMethod, BridgeOptions, DensityTransforms};
use diffcoef::estimator::{design, fit_design, ridge_norm_sq, ConstraintBall, DimensionRegime};
use diffcoef::gram::{gram_condition_sweep, ConditionSweep};
use diffcoef::minimax::{
    build_codebook, build_hypotheses, holder_membership, kl_budget, pairwise_separation, HypothesisConfig,
    HypothesisSet, KlOptions,
};
use diffcoef::model::{DiffusionModel, ProbeGrid, Term};
use diffcoef::quadrature::{trapezoid, GaussLegendre};
use diffcoef::regression::{build_regression, decompose_residuals};
use diffcoef::risk::{BasisFamily, BasisRule, DimensionChoice};
use diffcoef::rng::{derive_seed, stream};
use diffcoef::simulate::{simulate_sample, simulate_sample_with, SimOptions};

struct Outcome {
    pass: bool,
    detail: String,
}

/// Name, check and time limit.
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gaussian(mean: f64, var: f64, y: f64) -> f64 {
    (-(y - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn ac1_basis() -> Outcome {
    let mut worst_pou: f64 = 0.0;
    for knots in [4, 8, 16] {
        for degree in [1, 2, 3] {
            let spec = BasisSpec::spline(knots, degree, -1.3, 2.1).unwrap();
            let mut ev = spec.evaluator().unwrap();
            for x in ProbeGrid::new(-1.3, 2.1, 10_000).points() {
                worst_pou = worst_pou.max((ev.eval(x).iter().sum::<f64>() - 1.0).abs());
            }
        }
    }
    // The unscaled trigonometric system is orthonormal on [0, 1]; the
    // normalized one on any interval.
    let gl = GaussLegendre::new(24);
    let mut worst_gram: f64 = 0.0;
    for d in 0..=16 {
        for spec in [
            BasisSpec::fourier(d, 0.0, 1.0).unwrap(),
            BasisSpec::fourier(d, -1.5, 2.5).unwrap().normalized(true),
        ] {
            let m = spec.dim();
            let mut ev = spec.evaluator().unwrap();
            let mut gram = vec![0.0; m * m];
            let panels = 4 * (d + 1);
            let width = spec.width() / panels as f64;
            for p in 0..panels {
                let lo = spec.a + p as f64 * width;
                for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                    let v = ev.eval(lo + 0.5 * width * (x + 1.0));
                    for i in 0..m {
                        for j in 0..m {
                            gram[i * m + j] += 0.5 * width * w * v[i] * v[j];
                        }
                    }
                }
            }
            for i in 0..m {
                for j in 0..m {
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst_gram = worst_gram.max((gram[i * m + j] - target).abs());
                }
            }
        }
    }
    outcome(
        worst_pou <= 1e-12 && worst_gram <= 1e-8,
        format!("partition of unity {worst_pou:.1e} (<= 1e-12), Fourier Gram {worst_gram:.1e} (<= 1e-8)"),
    )
}

/// Minimum of the design contrast over the ball by lattice search with
/// successive refinement around the incumbent.
fn lattice_minimum(contrast: impl Fn(&[f64]) -> f64, radius_sq: f64) -> f64 {
    let r = radius_sq.sqrt();
    let mut best = f64::INFINITY;
    let mut center = [0.0; 3];
    let mut half = r;
    let points = 40;
    for _ in 0..12 {
        let step = 2.0 * half / points as f64;
        let mut next = center;
        for i in 0..=points {
            for j in 0..=points {
                for k in 0..=points {
                    let a = [
                        center[0] - half + i as f64 * step,
                        center[1] - half + j as f64 * step,
                        center[2] - half + k as f64 * step,
                    ];
                    if a.iter().map(|v| v * v).sum::<f64>() > radius_sq {
                        continue;
                    }
                    let c = contrast(&a);
                    if c < best {
                        best = c;
                        next = a;
                    }
                }
            }
        }
        center = next;
        half = 4.0 * step;
    }
    best
}

fn ac2_estimator() -> Outcome {
    let mut worst_gap: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    let mut active = 0;
    let mut undercut = false;
    for inst in 0..20u64 {
        let mut rng = stream(2024, 0xAC2, inst);
        let sigma = rng.random_range(0.5..2.0);
        let model = if inst % 2 == 0 { DiffusionModel::constant(sigma) } else { DiffusionModel::example() };
        let sample = simulate_sample(&model, 5, 10, 8, derive_seed(2024, 0xAC2, 100 + inst)).unwrap();
        let data = build_regression(&sample).unwrap();
        let lo = data.x.iter().cloned().fold(f64::INFINITY, f64::min) - 0.05;
        let hi = data.x.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 0.05;
        let spec = if inst % 4 < 2 {
            BasisSpec::spline(1, 2, lo, hi).unwrap()
        } else {
            BasisSpec::fourier(1, lo, hi).unwrap().normalized(true)
        };
        let d = design(&data, &spec).unwrap();
        let mut ball = ConstraintBall::for_data(&spec, &data);
        ball.radius_sq = ridge_norm_sq(&d, 0.0) * rng.random_range(0.3..1.5);
        let est = fit_design(&d, &spec, Some(&ball)).unwrap();
        let lattice = lattice_minimum(|a| d.contrast(a), ball.radius_sq);
        worst_gap = worst_gap.max((est.contrast - lattice).abs());
        undercut |= lattice < est.contrast - 1e-9;
        let grad = d.gradient(&est.coeffs);
        let kkt = if est.active {
            active += 1;
            let norm_sq: f64 = est.coeffs.iter().map(|c| c * c).sum();
            let stationarity = grad.iter().zip(&est.coeffs).map(|(g, a)| (g + 2.0 * est.lambda * a).powi(2)).sum::<f64>();
            let scale = grad.norm().max(1.0);
            let lambda_ok = if est.lambda > 0.0 { 0.0 } else { f64::INFINITY };
            ((norm_sq - ball.radius_sq).abs() / ball.radius_sq).max(stationarity.sqrt() / scale).max(lambda_ok)
        } else {
            grad.norm()
        };
        worst_kkt = worst_kkt.max(kkt);
    }
    outcome(
        worst_gap <= 1e-3 && worst_kkt <= 1e-8 && !undercut,
        format!("max contrast gap {worst_gap:.1e} (<= 1e-3), max KKT residual {worst_kkt:.1e} (<= 1e-8), {active}/20 active"),
    )
}

fn ac3_regression() -> Outcome {
    let model = DiffusionModel::example();
    let mut worst_z: f64 = 0.0;
    let mut pts = Vec::new();
    for (i, &n) in [32usize, 64, 128, 256].iter().enumerate() {
        let opts = SimOptions { substeps: 64, keep_fine: true, ..Default::default() };
        let s = simulate_sample_with(&model, 200, n, &opts, derive_seed(31, 0xAC3, i as u64)).unwrap();
        let d = build_regression(&s).unwrap();
        let dec = decompose_residuals(&s, &model).unwrap();
        let len = d.len() as f64;
        for v in [&dec.zeta1, &dec.zeta2, &dec.zeta3] {
            let mean = v.iter().sum::<f64>() / len;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (len - 1.0)).sqrt();
            worst_z = worst_z.max((mean / (sd / len.sqrt())).abs());
        }
        let r2 = (0..d.len()).map(|k| dec.remainder(k).powi(2)).sum::<f64>() / len;
        pts.push(((1.0 / n as f64).ln(), r2.ln(), 1.0));
    }
    let slope = fit_slope(&pts).unwrap().slope;
    outcome(
        worst_z <= 3.0 && (slope - 2.0).abs() <= 0.3,
        format!("max |zeta z-score| {worst_z:.2} (<= 3), R^2 slope {slope:.3} (2 +- 0.3)"),
    )
}

fn compact_ladder(fixed: Option<usize>, seed: u64) -> RateLadder {
    RateLadder {
        regime: Regime::CompactRepeated,
        rungs: vec![16, 32, 64, 128, 256],
        coupling: Coupling::Linear,
        beta: 2.0,
        c: 1.0,
        fixed_dimension: fixed,
        family: BasisFamily::Spline,
        degree: 3,
        a: -1.0,
        b: 1.0,
        growth: 1.0,
        constraint: true,
        replicates: 30,
        eval_paths: 200,
        substeps: 16,
        seed,
    }
}

fn ac4_rate() -> Outcome {
    let config = HypothesisConfig::new(2.0, 16.0, 1.5f64.sqrt(), -1.0, 1.0, 8);
    let set = Arc::new(HypothesisSet::from_codewords(config, vec![vec![1; 8]]).unwrap());
    let truth = set.model(1).unwrap();
    let result = run_ladder(&truth, &compact_ladder(None, 7)).unwrap();
    let dims: Vec<usize> = result.rows.iter().map(|r| r.m).collect();
    let slope = result.fit.slope;
    outcome(
        (slope + 0.8).abs() <= 0.15,
        format!("slope {slope:.3} +- {:.3} (-0.80 +- 0.15), m = {dims:?}", result.fit.se),
    )
}

fn ac5_parametric() -> Outcome {
    let result = run_ladder(&DiffusionModel::constant(1.2), &compact_ladder(Some(5), 8)).unwrap();
    let slope = result.fit.slope;
    outcome((slope + 1.0).abs() <= 0.15, format!("slope {slope:.3} +- {:.3} (-1.0 +- 0.15)", result.fit.se))
}

fn ac6_density() -> Outcome {
    let times = [0.1, 0.25, 0.5, 0.75, 1.0];
    let ys = [-2.0, -0.5, 0.3, 1.7];
    let mu = 0.4;
    let drifted = DiffusionModel::custom(vec![Term::Const { c: mu }], vec![Term::Const { c: 1.0 }], None).unwrap();
    let tabulated = DensityTransforms::new(&drifted).unwrap();
    let opts = BridgeOptions { bridges: 500, steps: 32, method: BridgeMethod::MonteCarlo };
    let mut rng = stream(6, 0xAC6, 0);
    // Without MC error the standard error is 0 and the comparison is exact
    // up to rounding.
    let within = |p: f64, se: f64, target: f64| (p - target).abs() <= (3.0 * se).max(1e-9 * target);
    let mut brownian_ok = true;
    let mut worst: f64 = 0.0;
    for (i, &t) in times.iter().enumerate() {
        for (k, &y) in ys.iter().enumerate() {
            let (p, se) = transition_density(&DiffusionModel::constant_unit(), 0.0, t, 0.0, y, 200, 16, (i * 4 + k) as u64)
                .unwrap();
            let target = gaussian(0.0, t, y);
            brownian_ok &= within(p, se, target);
            worst = worst.max((p - target).abs() / target);
            let (p, se) = tabulated.density(t, 0.0, y, &opts, &mut rng);
            let target = gaussian(mu * t, t, y);
            brownian_ok &= within(p, se, target);
            worst = worst.max((p - target).abs() / target);
        }
    }
    let example = DensityTransforms::new(&DiffusionModel::example()).unwrap();
    let opts = BridgeOptions { bridges: 2000, steps: 64, method: BridgeMethod::MonteCarlo };
    let h = 0.05;
    let grid: Vec<f64> = (0..=400).map(|i| -10.0 + h * i as f64).collect();
    let mut worst_norm: f64 = 0.0;
    for (i, &t) in [0.25, 0.5, 1.0].iter().enumerate() {
        let mut rng = stream(6, 0xAC6, 1 + i as u64);
        let vals: Vec<f64> = grid.iter().map(|&y| example.density(t, 0.0, y, &opts, &mut rng).0).collect();
        worst_norm = worst_norm.max((trapezoid(&vals, h) - 1.0).abs());
    }
    let exit = exit_probability(&DiffusionModel::constant_unit(), 3.0, 200_000, 1, 100, 5).unwrap();
    let target = 2.0 * (1.0 - Normal::standard().cdf(3.0));
    let exit_ok = (exit.value - target).abs() <= 3.0 * exit.se;
    outcome(
        brownian_ok && worst_norm <= 0.01 && exit_ok,
        format!(
            "Brownian max rel error {worst:.1e} over 2x20 pairs, normalization error {worst_norm:.1e} (<= 0.01), \
             exit {:.5} vs {target:.5} ({:.2} SE)",
            exit.value,
            (exit.value - target).abs() / exit.se
        ),
    )
}

fn ac7_gram() -> Outcome {
    let beta = 8.0;
    let sweep = ConditionSweep {
        basis: BasisRule {
            family: BasisFamily::Spline,
            degree: 3,
            dimension: DimensionChoice::Rule { beta, c: 1.0, regime: DimensionRegime::GrowingInterval },
            normalized: false,
        },
        n_list: vec![64, 128, 256, 512],
        growth: (3.0 * beta / (2.0 * beta + 1.0)).sqrt(),
        mc_paths: 20_000,
        substeps: 16,
        bound_c: 1.0,
        bound_small_c: 1.0,
    };
    let rows = gram_condition_sweep(&DiffusionModel::example(), &sweep, 1).unwrap();
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let diverging = ratios.windows(2).all(|w| w[1] > w[0]);
    let finite = ratios.iter().all(|r| r.is_finite()) && rows.iter().all(|r| !r.rank_deficient);
    outcome(
        !diverging && finite,
        format!("ratios {:?}", ratios.iter().map(|r| (r * 10.0).round() / 10.0).collect::<Vec<_>>()),
    )
}

fn ac8_lower_bound() -> Outcome {
    let m = 16;
    let words = build_codebook(m, 4, 1).unwrap();
    let mut min_hamming = usize::MAX;
    for i in 0..words.len() {
        for j in (i + 1)..words.len() {
            min_hamming = min_hamming.min(words[i].iter().zip(&words[j]).filter(|(a, b)| a != b).count());
        }
    }
    let size = words.len();
    let gv = words[0].iter().all(|&b| b == 0)
        && size as f64 >= 2f64.powf(m as f64 / 8.0)
        && min_hamming as f64 >= m as f64 / 8.0;

    let cfg = HypothesisConfig::new(2.0, 16.0, 1.5f64.sqrt(), -1.0, 1.0, m);
    let set = build_hypotheses(cfg, 4, 1).unwrap();
    let c0 = m as f64 / 64f64.powf(0.2);
    let sep = pairwise_separation(&set, c0, 4, 16).unwrap();
    let holder = holder_membership(&set, &ProbeGrid::new(-1.0, 1.0, 4000)).unwrap();
    let kl = kl_budget(&set, 4, 16, 500, &KlOptions::default(), 3).unwrap();
    let mut flat = cfg;
    flat.gamma_scale = 0.0;
    let flat_set = build_hypotheses(flat, 4, 1).unwrap();
    let flat_kl = kl_budget(&flat_set, 4, 16, 500, &KlOptions::default(), 3).unwrap();
    let report_ok = kl.rows.len() == kl.alternatives
        && kl.average.is_finite()
        && (kl.budget - (kl.alternatives as f64).ln() / 16.0).abs() < 1e-15;
    let null_ok = kl.kl_null == 0.0;
    let flat_ok = flat_kl.average.abs() <= 3.0 * flat_kl.average_se || flat_kl.average == 0.0;
    outcome(
        gv && sep.max_rel_error <= 1e-6 && holder.max_quotient <= 1.05 * 16.0 && report_ok && null_ok && flat_ok,
        format!(
            "M = {size}, min Hamming {}, distance rel error {:.1e}, Hoelder quotient {:.2} (<= 16.8), \
             average KL {:.2e} +- {:.1e} vs budget {:.3}, KL(P0,P0) = {}, Gamma = 0 KL {:.1e}",
            min_hamming,
            sep.max_rel_error,
            holder.max_quotient,
            kl.average,
            kl.average_se,
            kl.budget,
            kl.kl_null,
            flat_kl.average
        ),
    )
}

fn run_cli(command: &str, config: &Path, out: &Path, threads: usize) -> bool {
    Command::new(env!("CARGO_BIN_EXE_diffcoef"))
        .arg(command)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--threads")
        .arg(threads.to_string())
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn ac9_determinism() -> Outcome {
    let configs = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs");
    let tmp = tempfile::tempdir().unwrap();
    let mut failures = Vec::new();
    let commands = ["simulate", "estimate", "gram", "rates", "lowerbound", "density", "check-assumptions"];
    for command in commands {
        let config = configs.join(format!("{command}.toml"));
        let runs: Vec<PathBuf> = [(1, "a"), (1, "b"), (8, "c")]
            .iter()
            .map(|&(threads, tag)| {
                let out = tmp.path().join(format!("{command}-{tag}"));
                if !run_cli(command, &config, &out, threads) {
                    failures.push(format!("{command} exited with an error"));
                }
                out
            })
            .collect();
        let first = dir_contents(&runs[0]);
        if first.is_empty() || runs[1..].iter().any(|r| dir_contents(r) != first) {
            failures.push(format!("{command} outputs differ"));
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} subcommands identical across reruns and 1 vs 8 threads", commands.len())
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("AC1 basis correctness", ac1_basis, Duration::from_secs(5)),
        ("AC2 estimator oracle", ac2_estimator, Duration::from_secs(30)),
        ("AC3 regression diagnostics", ac3_regression, Duration::from_secs(120)),
        ("AC4 rate reproduction", ac4_rate, Duration::from_secs(600)),
        ("AC5 parametric control", ac5_parametric, Duration::from_secs(300)),
        ("AC6 density validation", ac6_density, Duration::from_secs(120)),
        ("AC7 Gram conditioning", ac7_gram, Duration::from_secs(600)),
        ("AC8 lower-bound premises", ac8_lower_bound, Duration::from_secs(600)),
        ("AC9 determinism", ac9_determinism, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (name, check, limit) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed <= limit;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {name}: {} [{:.1}s, limit {}s]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} of 9 acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 9 acceptance criteria passed");
}
