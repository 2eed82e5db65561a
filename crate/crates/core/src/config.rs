//! TOML experiment configuration and the model registry.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bench::{Coupling, RateLadder, Regime};
use crate::density::BridgeMethod;
use crate::error::{Error, Result};
use crate::estimator::DimensionRegime;
use crate::minimax::{build_hypotheses, HypothesisConfig, HypothesisSet, KlOptions};
use crate::model::{DiffusionModel, IntervalKind, ProbeGrid, Term};
use crate::risk::{BasisFamily, BasisRule, DimensionChoice, ExperimentSpec};
use crate::simulate::Scheme;

/// One run's configuration. Every section is optional at parse time; each
/// subcommand checks for the sections it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub sample: SampleConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<BasisConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<IntervalKind>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub risk: Option<RiskConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ladder: Option<LadderConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gram: Option<GramConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lowerbound: Option<LowerBoundConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assumptions: Option<AssumptionsConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// constant_unit, constant, example_2_4, hypothesis:<j> or custom.
    pub name: String,
    /// sigma for the `constant` model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Terms of b for `custom`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub drift: Vec<Term>,
    /// Terms of sigma for `custom`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diffusion: Vec<Term>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa1: Option<f64>,
    #[serde(default)]
    pub x0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleFormat {
    #[default]
    Binary,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    #[serde(rename = "N", default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_steps")]
    pub n: usize,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default)]
    pub format: SampleFormat,
    /// Load this sample instead of simulating one (estimate only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub load: Option<PathBuf>,
}

fn default_paths() -> usize {
    100
}
fn default_steps() -> usize {
    100
}
fn default_substeps() -> usize {
    64
}
fn default_scheme() -> Scheme {
    Scheme::Euler
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            n_paths: default_paths(),
            n: default_steps(),
            substeps: default_substeps(),
            seed: 0,
            scheme: Scheme::Euler,
            format: SampleFormat::Binary,
            load: None,
        }
    }
}

/// Basis family with either a fixed dimension `m` or a `rule`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub family: BasisFamily,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<RuleConfig>,
    #[serde(default)]
    pub normalized: bool,
}

fn default_degree() -> usize {
    3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleConfig {
    pub beta: f64,
    #[serde(default = "one")]
    pub c: f64,
    pub regime: DimensionRegime,
}

fn one() -> f64 {
    1.0
}

impl BasisConfig {
    pub fn rule(&self) -> Result<BasisRule> {
        let dimension = match (self.m, self.rule) {
            (Some(m), None) => DimensionChoice::Fixed { m },
            (None, Some(r)) => DimensionChoice::Rule { beta: r.beta, c: r.c, regime: r.regime },
            _ => return Err(Error::Config("basis needs exactly one of `m` and `rule`".into())),
        };
        Ok(BasisRule { family: self.family, degree: self.degree, dimension, normalized: self.normalized })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default = "yes")]
    pub constraint: bool,
    #[serde(default)]
    pub truncation: bool,
}

fn yes() -> bool {
    true
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { constraint: true, truncation: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskConfig {
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_eval_paths")]
    pub eval_paths: usize,
}

fn default_replicates() -> usize {
    30
}
fn default_eval_paths() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    pub regime: Regime,
    pub rungs: Vec<usize>,
    #[serde(default)]
    pub coupling: Coupling,
    pub beta: f64,
    #[serde(default = "one")]
    pub c: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_dimension: Option<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_eval_paths")]
    pub eval_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GramConfig {
    #[serde(default = "default_gram_paths")]
    pub mc_paths: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    /// Number of independent samples (of the [sample] shape) to run through
    /// the norm-equivalence monitor; 0 disables it.
    #[serde(default)]
    pub monitor_samples: usize,
}

fn default_gram_paths() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(rename = "N_list")]
    pub n_list: Vec<usize>,
    /// A_N = growth sqrt(log N).
    pub growth: f64,
    #[serde(default = "one")]
    pub bound_c: f64,
    #[serde(default = "one")]
    pub bound_small_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowerBoundConfig {
    #[serde(default = "default_lb_beta")]
    pub beta: f64,
    #[serde(rename = "R", default = "default_lb_r")]
    pub r: f64,
    #[serde(default = "default_lb_kappa1")]
    pub kappa1: f64,
    #[serde(rename = "A", default = "minus_one")]
    pub a: f64,
    #[serde(rename = "B", default = "one")]
    pub b: f64,
    #[serde(default = "default_lb_m")]
    pub m: usize,
    #[serde(rename = "M_target", default = "default_lb_words")]
    pub m_target: usize,
    /// Separation constant; by default the one that ties m to (N, n).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(rename = "N", default = "default_lb_paths")]
    pub n_paths: usize,
    #[serde(default = "default_lb_steps")]
    pub n: usize,
    #[serde(default = "default_lb_mc")]
    pub mc_paths: usize,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub dilation: f64,
    #[serde(default = "one")]
    pub gamma_scale: f64,
    #[serde(default)]
    pub real_line: bool,
    #[serde(default = "default_holder_probe")]
    pub holder_probe: usize,
    #[serde(default)]
    pub kl: KlConfig,
}

fn default_lb_beta() -> f64 {
    2.0
}
fn default_lb_r() -> f64 {
    16.0
}
fn default_lb_kappa1() -> f64 {
    1.5f64.sqrt()
}
fn minus_one() -> f64 {
    -1.0
}
fn default_lb_m() -> usize {
    16
}
fn default_lb_words() -> usize {
    4
}
fn default_lb_paths() -> usize {
    4
}
fn default_lb_steps() -> usize {
    16
}
fn default_lb_mc() -> usize {
    500
}
fn default_holder_probe() -> usize {
    4000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KlConfig {
    #[serde(default = "default_kl_substeps")]
    pub substeps: usize,
    #[serde(default = "default_kl_bridges")]
    pub bridges: usize,
    #[serde(default = "default_bridge_steps")]
    pub bridge_steps: usize,
    #[serde(default)]
    pub method: BridgeMethod,
}

fn default_kl_substeps() -> usize {
    KlOptions::default().substeps
}
fn default_kl_bridges() -> usize {
    KlOptions::default().bridges
}
fn default_bridge_steps() -> usize {
    KlOptions::default().bridge_steps
}

impl Default for KlConfig {
    fn default() -> Self {
        let k = KlOptions::default();
        Self { substeps: k.substeps, bridges: k.bridges, bridge_steps: k.bridge_steps, method: k.method }
    }
}

impl KlConfig {
    pub fn options(&self) -> KlOptions {
        KlOptions { substeps: self.substeps, bridges: self.bridges, bridge_steps: self.bridge_steps, method: self.method }
    }
}

impl LowerBoundConfig {
    pub fn hypothesis_config(&self) -> HypothesisConfig {
        HypothesisConfig {
            beta: self.beta,
            r: self.r,
            kappa1: self.kappa1,
            a: self.a,
            b: self.b,
            m: self.m,
            amplitude: self.amplitude,
            dilation: self.dilation,
            gamma_scale: self.gamma_scale,
            real_line: self.real_line,
        }
    }

    pub fn build(&self, seed: u64) -> Result<HypothesisSet> {
        build_hypotheses(self.hypothesis_config(), self.m_target, seed)
    }

    /// c0 such that m = c0 (Nn)^(1 / (2 beta + 1)) unless set explicitly.
    pub fn c0(&self) -> f64 {
        self.c0
            .unwrap_or_else(|| self.m as f64 / ((self.n_paths * self.n) as f64).powf(1.0 / (2.0 * self.beta + 1.0)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    /// Observation times t (with s = 0 and x = x_start).
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    #[serde(default = "default_y_grid")]
    pub y: ProbeGrid,
    #[serde(default)]
    pub x_start: f64,
    #[serde(default = "default_density_bridges")]
    pub bridges: usize,
    #[serde(default = "default_density_bridge_steps")]
    pub bridge_steps: usize,
    #[serde(default = "default_thresholds")]
    pub exit_thresholds: Vec<f64>,
    #[serde(default = "default_exit_paths")]
    pub exit_paths: usize,
    #[serde(default = "default_exit_grid")]
    pub exit_grid: usize,
    #[serde(default = "default_exit_substeps")]
    pub exit_substeps: usize,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            times: default_times(),
            y: default_y_grid(),
            x_start: 0.0,
            bridges: default_density_bridges(),
            bridge_steps: default_density_bridge_steps(),
            exit_thresholds: default_thresholds(),
            exit_paths: default_exit_paths(),
            exit_grid: default_exit_grid(),
            exit_substeps: default_exit_substeps(),
        }
    }
}

fn default_times() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}
fn default_y_grid() -> ProbeGrid {
    ProbeGrid::new(-4.0, 4.0, 81)
}
fn default_density_bridges() -> usize {
    2000
}
fn default_density_bridge_steps() -> usize {
    64
}
fn default_thresholds() -> Vec<f64> {
    vec![1.0, 2.0, 3.0]
}
fn default_exit_paths() -> usize {
    100_000
}
fn default_exit_grid() -> usize {
    100
}
fn default_exit_substeps() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumptionsConfig {
    #[serde(default)]
    pub probe: ProbeGrid,
}

impl Config {
    /// Parses TOML text. Errors carry the parser's line and column.
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn require_model(&self) -> Result<&ModelConfig> {
        self.model.as_ref().ok_or_else(|| missing("model"))
    }

    pub fn require_basis(&self) -> Result<&BasisConfig> {
        self.basis.as_ref().ok_or_else(|| missing("basis"))
    }

    pub fn require_interval(&self) -> Result<IntervalKind> {
        self.interval.ok_or_else(|| missing("interval"))
    }

    /// The model named in [model], with hypotheses built from [lowerbound].
    pub fn model(&self) -> Result<DiffusionModel> {
        let mc = self.require_model()?;
        resolve_model(mc, self.lowerbound.as_ref(), self.sample.seed)
    }

    /// Estimation experiment from [sample], [basis], [interval], [estimator] and [risk].
    pub fn experiment(&self) -> Result<ExperimentSpec> {
        let basis = self.require_basis()?.rule()?;
        Ok(ExperimentSpec {
            n_paths: self.sample.n_paths,
            n: self.sample.n,
            substeps: self.sample.substeps,
            basis,
            interval: self.require_interval()?,
            constraint: self.estimator.constraint,
            truncation: self.estimator.truncation,
            eval_paths: self.risk.map(|r| r.eval_paths).unwrap_or_else(default_eval_paths),
        })
    }

    /// Rate ladder from [ladder], [basis] and [interval].
    pub fn ladder(&self) -> Result<RateLadder> {
        let l = self.ladder.as_ref().ok_or_else(|| missing("ladder"))?;
        let basis = self.require_basis()?;
        let (a, b, growth) = match self.require_interval()? {
            IntervalKind::Compact { a, b } => (a, b, 1.0),
            IntervalKind::Growing { a } | IntervalKind::RealLine { a } => (-1.0, 1.0, a),
        };
        Ok(RateLadder {
            regime: l.regime,
            rungs: l.rungs.clone(),
            coupling: l.coupling,
            beta: l.beta,
            c: l.c,
            fixed_dimension: l.fixed_dimension,
            family: basis.family,
            degree: basis.degree,
            a,
            b,
            growth,
            constraint: self.estimator.constraint,
            replicates: l.replicates,
            eval_paths: l.eval_paths,
            substeps: self.sample.substeps,
            seed: self.sample.seed,
        })
    }
}

fn missing(key: &str) -> Error {
    Error::Config(format!("missing required key `{key}`"))
}

/// Looks up a model by registry name.
pub fn resolve_model(mc: &ModelConfig, lowerbound: Option<&LowerBoundConfig>, seed: u64) -> Result<DiffusionModel> {
    let model = match mc.name.as_str() {
        "constant_unit" => DiffusionModel::constant_unit(),
        "constant" => {
            let s = mc.sigma.ok_or_else(|| missing("model.sigma"))?;
            if !(s > 0.0) {
                return Err(Error::Config(format!("model.sigma must be positive (got {s})")));
            }
            DiffusionModel::constant(s)
        }
        "example_2_4" => DiffusionModel::example(),
        "custom" => {
            if mc.diffusion.is_empty() {
                return Err(missing("model.diffusion"));
            }
            let kappa = match (mc.kappa0, mc.kappa1) {
                (Some(a), Some(b)) => Some((a, b)),
                (None, None) => None,
                _ => return Err(Error::Config("give both kappa0 and kappa1 or neither".into())),
            };
            DiffusionModel::custom(mc.drift.clone(), mc.diffusion.clone(), kappa)
                .map_err(|e| Error::Config(e.to_string()))?
        }
        name => match name.strip_prefix("hypothesis:") {
            Some(j) => {
                let j: usize = j.parse().map_err(|_| Error::Config(format!("bad hypothesis index in `{name}`")))?;
                let lb = lowerbound.ok_or_else(|| missing("lowerbound"))?;
                Arc::new(lb.build(seed)?).model(j)?
            }
            None => return Err(Error::Config(format!("unknown model `{name}`"))),
        },
    };
    Ok(model.with_x0(mc.x0))
}
