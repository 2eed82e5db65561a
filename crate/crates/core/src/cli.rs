//! Command-line front end. Every subcommand reads one TOML config, writes
//! the resolved config next to its outputs, and produces the same bytes for
//! the same config and seed regardless of the thread count.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Config, SampleFormat};
use crate::density::{exit_probability, BridgeMethod, BridgeOptions, DensityTransforms};
use crate::error::{Error, Result};
use crate::gram::{
    estimate_gram, gram_condition_sweep, norm_equivalence_with, write_condition_csv, write_event_csv,
    ConditionSweep,
};
use crate::minimax::{analytic_holder_quotient, holder_membership, kl_budget, pairwise_separation, write_kl_csv};
use crate::model::{check_assumptions, ProbeGrid};
use crate::regression::build_regression;
use crate::risk::estimation_risk;
use crate::rng::{derive_seed, domain, stream};
use crate::simulate::{read_binary, read_csv, simulate_sample_with, write_binary, write_csv, PathSample, SimOptions};
use crate::{bench, model::AssumptionReport};

#[derive(Debug, Parser)]
#[command(name = "diffcoef", version, about = "Projection estimators of the squared diffusion coefficient")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides sample.seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Simulate N paths and write them with summary statistics.
    Simulate,
    /// Fit the projection estimator to a simulated or loaded sample.
    Estimate,
    /// Monte Carlo Gram matrix, conditioning sweep and norm-equivalence monitor.
    Gram,
    /// Convergence-rate ladder with a log-log slope fit.
    Rates,
    /// Hypothesis family, separation, Hoelder membership and Kullback budget.
    Lowerbound,
    /// Transition densities on a probe grid and exit probabilities.
    Density,
    /// Numerical checks of the assumptions on the model coefficients.
    CheckAssumptions,
}

/// Parses `std::env::args`, runs the command and returns the exit code.
pub fn main_with_args() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = Config::from_file(path)?;
    if let Some(seed) = cli.seed {
        cfg.sample.seed = seed;
    }
    match cli.threads {
        Some(t) if t > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {t} threads: {e}")))?;
            pool.install(|| execute(cli.command, &cfg, &cli.out))
        }
        Some(_) => Err(Error::Config("--threads must be positive".into())),
        None => execute(cli.command, &cfg, &cli.out),
    }
}

/// Runs one subcommand with an already parsed config.
pub fn execute(command: Command, cfg: &Config, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("resolved.toml"), cfg.to_toml()?)?;
    match command {
        Command::Simulate => cmd_simulate(cfg, out),
        Command::Estimate => cmd_estimate(cfg, out),
        Command::Gram => cmd_gram(cfg, out),
        Command::Rates => cmd_rates(cfg, out),
        Command::Lowerbound => cmd_lowerbound(cfg, out),
        Command::Density => cmd_density(cfg, out),
        Command::CheckAssumptions => cmd_check_assumptions(cfg, out),
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn simulate_configured(cfg: &Config) -> Result<PathSample> {
    let model = cfg.model()?;
    let s = &cfg.sample;
    let opts = SimOptions { substeps: s.substeps, scheme: s.scheme, keep_fine: false };
    simulate_sample_with(&model, s.n_paths, s.n, &opts, s.seed)
}

#[derive(Serialize)]
struct SampleSummary {
    model: String,
    #[serde(rename = "N")]
    n_paths: usize,
    n: usize,
    delta: f64,
    substeps: usize,
    seed: u64,
    terminal_mean: f64,
    terminal_variance: f64,
    min: f64,
    max: f64,
    /// Mean of U_k = (X_{k+1} - X_k)^2 / delta over all pairs.
    mean_u: f64,
}

fn summarize(sample: &PathSample, model: &str) -> Result<SampleSummary> {
    let terminals: Vec<f64> = (0..sample.n_paths).map(|j| sample.path(j)[sample.n]).collect();
    let (mean, _) = crate::risk::mean_se(&terminals);
    let var = if terminals.len() > 1 {
        terminals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (terminals.len() - 1) as f64
    } else {
        0.0
    };
    let data = build_regression(sample)?;
    Ok(SampleSummary {
        model: model.to_string(),
        n_paths: sample.n_paths,
        n: sample.n,
        delta: sample.delta,
        substeps: sample.substeps,
        seed: sample.seed,
        terminal_mean: mean,
        terminal_variance: var,
        min: sample.values.iter().cloned().fold(f64::INFINITY, f64::min),
        max: sample.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        mean_u: data.u.iter().sum::<f64>() / data.len() as f64,
    })
}

fn cmd_simulate(cfg: &Config, out: &Path) -> Result<()> {
    let model = cfg.model()?;
    let sample = simulate_configured(cfg)?;
    match cfg.sample.format {
        SampleFormat::Binary => write_binary(&sample, &out.join("sample.bin"))?,
        SampleFormat::Csv => write_csv(&sample, &out.join("sample.csv"))?,
    }
    write_json(&summarize(&sample, &model.name)?, &out.join("summary.json"))
}

/// Reads a sample written by `simulate`; the format follows the extension.
pub fn load_sample(path: &Path) -> Result<PathSample> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_csv(path),
        _ => read_binary(path),
    }
}

#[derive(Serialize)]
struct EstimateOutput<'a> {
    #[serde(rename = "N")]
    n_paths: usize,
    n: usize,
    m: usize,
    #[serde(rename = "A")]
    a: f64,
    #[serde(rename = "B")]
    b: f64,
    estimate: &'a crate::estimator::Estimate,
}

fn cmd_estimate(cfg: &Config, out: &Path) -> Result<()> {
    let sample = match &cfg.sample.load {
        Some(p) => load_sample(p)?,
        None => simulate_configured(cfg)?,
    };
    let mut exp = cfg.experiment()?;
    exp.n_paths = sample.n_paths;
    exp.n = sample.n;
    let est = exp.fit(&sample)?;
    let (a, b) = exp.bounds();
    write_json(
        &EstimateOutput { n_paths: sample.n_paths, n: sample.n, m: est.coeffs.len(), a, b, estimate: &est },
        &out.join("estimate.json"),
    )?;
    let model = match &cfg.model {
        Some(_) => Some(cfg.model()?.centered()),
        None => None,
    };
    let mut ev = est.evaluator()?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(out.join("curve.csv"))?);
    writeln!(w, "x,estimate,truth")?;
    for x in ProbeGrid::new(a, b, 201).points() {
        let truth = model.as_ref().map(|m| m.sigma_sq(x).to_string()).unwrap_or_default();
        writeln!(w, "{},{},{}", x, ev.eval(x), truth)?;
    }
    w.flush()?;
    if let Some(r) = cfg.risk {
        let model = cfg.model()?;
        let report = estimation_risk(&model, &exp, r.replicates, cfg.sample.seed)?;
        write_json(&report, &out.join("risk.json"))?;
    }
    Ok(())
}

fn cmd_gram(cfg: &Config, out: &Path) -> Result<()> {
    let model = cfg.model()?;
    let g = cfg.gram.clone().ok_or_else(|| Error::Config("missing required key `gram`".into()))?;
    let seed = cfg.sample.seed;
    let spec = cfg.experiment()?.basis_spec()?;
    let report = estimate_gram(&model, &spec, cfg.sample.n, g.mc_paths, seed)?;
    write_json(&report, &out.join("gram.json"))?;
    if let Some(sw) = &g.sweep {
        let sweep = ConditionSweep {
            basis: cfg.require_basis()?.rule()?,
            n_list: sw.n_list.clone(),
            growth: sw.growth,
            mc_paths: g.mc_paths,
            substeps: 16,
            bound_c: sw.bound_c,
            bound_small_c: sw.bound_small_c,
        };
        let rows = gram_condition_sweep(&model, &sweep, seed)?;
        write_condition_csv(&rows, &out.join("condition.csv"))?;
        write_json(&rows, &out.join("condition.json"))?;
    }
    if g.monitor_samples > 0 {
        let s = &cfg.sample;
        let opts = SimOptions { substeps: s.substeps, scheme: s.scheme, keep_fine: false };
        let samples = (0..g.monitor_samples)
            .map(|i| simulate_sample_with(&model, s.n_paths, s.n, &opts, derive_seed(seed, domain::PROBE, i as u64)))
            .collect::<Result<Vec<_>>>()?;
        let event = norm_equivalence_with(&samples, &spec, &report)?;
        write_event_csv(&event, &out.join("event.csv"))?;
        write_json(&event, &out.join("event.json"))?;
    }
    Ok(())
}

fn cmd_rates(cfg: &Config, out: &Path) -> Result<()> {
    let model = cfg.model()?;
    let ladder = cfg.ladder()?;
    let result = bench::run_ladder(&model, &ladder)?;
    bench::write_ladder_csv(&result, &out.join("ladder.csv"))?;
    bench::write_plot_data(&result, &out.join("ladder.dat"))?;
    #[derive(Serialize)]
    struct Slope<'a> {
        regime: bench::Regime,
        coupling: &'a str,
        beta: f64,
        x_axis: &'a str,
        fit: bench::SlopeFit,
        theoretical_slope: f64,
    }
    write_json(
        &Slope {
            regime: result.regime,
            coupling: result.coupling,
            beta: result.beta,
            x_axis: result.x_axis,
            fit: result.fit,
            theoretical_slope: result.theoretical_slope,
        },
        &out.join("slope.json"),
    )
}

fn cmd_lowerbound(cfg: &Config, out: &Path) -> Result<()> {
    let lb = cfg.lowerbound.clone().ok_or_else(|| Error::Config("missing required key `lowerbound`".into()))?;
    let seed = cfg.sample.seed;
    let set = lb.build(seed)?;
    write_json(&set, &out.join("hypotheses.json"))?;
    let sep = pairwise_separation(&set, lb.c0(), lb.n_paths, lb.n)?;
    write_json(&sep, &out.join("separation.json"))?;
    let probe = ProbeGrid::new(lb.a, lb.b, lb.holder_probe);
    #[derive(Serialize)]
    struct Holder {
        #[serde(flatten)]
        report: crate::minimax::HolderReport,
        /// Fine-probe limit of the quotient of one bump (integer beta).
        analytic_quotient: f64,
    }
    let report = holder_membership(&set, &probe)?;
    write_json(&Holder { report, analytic_quotient: analytic_holder_quotient(&set, 100_000) }, &out.join("holder.json"))?;
    let kl = kl_budget(&set, lb.n_paths, lb.n, lb.mc_paths, &lb.kl.options(), seed)?;
    write_kl_csv(&kl, &out.join("kl.csv"))?;
    write_json(&kl, &out.join("kl.json"))
}

fn cmd_density(cfg: &Config, out: &Path) -> Result<()> {
    let model = cfg.model()?;
    let dc = cfg.density.clone().unwrap_or_default();
    let seed = cfg.sample.seed;
    if dc.times.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return Err(Error::Config("density.times must lie in (0, 1]".into()));
    }
    let tr = DensityTransforms::new(&model)?;
    let opts = BridgeOptions { bridges: dc.bridges, steps: dc.bridge_steps, method: BridgeMethod::MonteCarlo };
    let ys: Vec<f64> = dc.y.points().collect();
    let mut w = std::io::BufWriter::new(std::fs::File::create(out.join("density.csv"))?);
    writeln!(w, "t,y,density,se")?;
    for (ti, &t) in dc.times.iter().enumerate() {
        // Common random numbers across y: every y reuses the stream of its t.
        let vals: Vec<(f64, f64)> = ys
            .par_iter()
            .map(|&y| {
                let mut rng = stream(seed, domain::BRIDGE, ti as u64);
                tr.density(t, dc.x_start, y, &opts, &mut rng)
            })
            .collect();
        for (y, (p, se)) in ys.iter().zip(vals) {
            writeln!(w, "{t},{y},{p},{se}")?;
        }
    }
    w.flush()?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(out.join("exit.csv"))?);
    writeln!(w, "threshold,probability,se,t_argmax")?;
    for &a in &dc.exit_thresholds {
        let e = exit_probability(&model, a, dc.exit_paths, dc.exit_substeps, dc.exit_grid, seed)?;
        writeln!(w, "{},{},{},{}", a, e.value, e.se, e.t_argmax)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_check_assumptions(cfg: &Config, out: &Path) -> Result<()> {
    let model = cfg.model()?;
    let probe = cfg.assumptions.map(|a| a.probe).unwrap_or_default();
    let report: AssumptionReport = check_assumptions(&model, &probe)?;
    write_json(&report, &out.join("assumptions.json"))
}
