//! Empirical and expected norms along paths, and Monte Carlo estimation risk.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{invalid, Error, Result};
use crate::estimator::{self, ConstraintBall, DimensionRegime, Estimate};
use crate::model::{DiffusionModel, IntervalKind};
use crate::regression::build_regression;
use crate::rng::{derive_seed, domain};
use crate::simulate::{simulate_sample, PathSample};

/// (1/Nn) sum_j sum_{k<n} f(X^j_k)^2.
pub fn empirical_norm_sq(f: impl Fn(f64) -> f64, sample: &PathSample) -> f64 {
    let mut s = 0.0;
    for j in 0..sample.n_paths {
        for &x in &sample.path(j)[..sample.n] {
            let v = f(x);
            s += v * v;
        }
    }
    s / (sample.n_paths * sample.n) as f64
}

/// Trapezoid approximation of (1/N) sum_j int_0^1 f(X^j_t)^2 dt on the
/// observation grid.
pub fn time_integral_norm_sq(f: impl Fn(f64) -> f64, sample: &PathSample) -> f64 {
    let mut s = 0.0;
    for j in 0..sample.n_paths {
        let vals: Vec<f64> = sample.path(j).iter().map(|&x| f(x).powi(2)).collect();
        s += crate::quadrature::trapezoid(&vals, sample.delta);
    }
    s / sample.n_paths as f64
}

/// Paths used only to evaluate expectations, never for fitting.
#[derive(Debug, Clone)]
pub struct EvalPaths {
    pub sample: PathSample,
}

impl EvalPaths {
    pub fn simulate(model: &DiffusionModel, n: usize, paths: usize, substeps: usize, seed: u64) -> Result<Self> {
        let seed = derive_seed(seed, domain::EVALUATION, n as u64);
        Ok(Self { sample: simulate_sample(model, paths, n, substeps, seed)? })
    }

    /// Per-path values of (1/n) sum_{k<n} f(X_k)^2.
    pub fn per_path(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let s = &self.sample;
        (0..s.n_paths)
            .map(|j| s.path(j)[..s.n].iter().map(|&x| f(x).powi(2)).sum::<f64>() / s.n as f64)
            .collect()
    }

    /// Observation points X^j_k, k < n, in (j, k) order.
    pub fn points(&self) -> Vec<f64> {
        let s = &self.sample;
        (0..s.n_paths).flat_map(|j| s.path(j)[..s.n].to_vec()).collect()
    }

    /// (mean, standard error) of ||f||_n^2 over the paths.
    pub fn norm_sq(&self, f: impl Fn(f64) -> f64) -> (f64, f64) {
        mean_se(&self.per_path(f))
    }
}

pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo estimate of ||f||_n^2 = E[(1/n) sum_{k<n} f(X_k)^2], k = 0 included.
pub fn theoretical_norm_sq(
    f: impl Fn(f64) -> f64,
    model: &DiffusionModel,
    n: usize,
    mc_paths: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if mc_paths < 100 {
        return Err(invalid(format!("theoretical_norm_sq needs >= 100 paths (got {mc_paths})")));
    }
    let eval = EvalPaths::simulate(model, n, mc_paths, 64, seed)?;
    Ok(eval.norm_sq(f))
}

/// What the estimate is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetKind {
    /// sigma^2 restricted to a fixed [A, B].
    Compact {
        #[serde(rename = "A")]
        a: f64,
        #[serde(rename = "B")]
        b: f64,
    },
    /// sigma^2 restricted to [-A_N, A_N].
    Growing { half_width: f64 },
    /// sigma^2 on the whole line.
    Full,
}

impl TargetKind {
    pub fn value(&self, model: &DiffusionModel, x: f64) -> f64 {
        let inside = match *self {
            TargetKind::Compact { a, b } => x >= a && x <= b,
            TargetKind::Growing { half_width } => x.abs() <= half_width,
            TargetKind::Full => true,
        };
        if inside {
            model.sigma_sq(x)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisFamily {
    Spline,
    Fourier,
}

/// How the basis dimension is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DimensionChoice {
    /// Fixed dimension m (splines: K = m - degree; Fourier: D = (m - 1) / 2).
    Fixed { m: usize },
    /// The rate rule with calibration constant c.
    Rule { beta: f64, c: f64, regime: DimensionRegime },
}

/// Basis family plus dimension choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisRule {
    pub family: BasisFamily,
    pub degree: usize,
    pub dimension: DimensionChoice,
    #[serde(default)]
    pub normalized: bool,
}

impl BasisRule {
    /// The basis for N paths of n steps on [a, b]. The compact rules give the
    /// dimension m; the growing rule gives the knot count K_N.
    pub fn spec(&self, n_paths: usize, n: usize, a: f64, b: f64) -> Result<BasisSpec> {
        let (value, is_knots) = match self.dimension {
            DimensionChoice::Fixed { m } => (m, false),
            DimensionChoice::Rule { beta, c, regime } => {
                let v = estimator::dimension_rule(n_paths, n, beta, regime, c)?;
                (v, regime == DimensionRegime::GrowingInterval)
            }
        };
        let spec = match self.family {
            BasisFamily::Spline => {
                let k = if is_knots { value } else { value.saturating_sub(self.degree).max(1) };
                BasisSpec::spline(k, self.degree, a, b)?
            }
            BasisFamily::Fourier => {
                let d = if is_knots { value } else { value.saturating_sub(1) / 2 };
                BasisSpec::fourier(d, a, b)?.normalized(self.normalized)
            }
        };
        Ok(spec)
    }
}

/// Whether the risk is squared or first power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormPower {
    Squared,
    First,
}

/// One estimation experiment at fixed (N, n).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(rename = "N")]
    pub n_paths: usize,
    pub n: usize,
    pub substeps: usize,
    pub basis: BasisRule,
    pub interval: IntervalKind,
    pub constraint: bool,
    pub truncation: bool,
    pub eval_paths: usize,
}

impl ExperimentSpec {
    pub fn bounds(&self) -> (f64, f64) {
        self.interval.bounds(self.n_paths)
    }

    pub fn target(&self) -> TargetKind {
        let (a, b) = self.bounds();
        match self.interval {
            IntervalKind::Compact { .. } => TargetKind::Compact { a, b },
            IntervalKind::Growing { .. } => TargetKind::Growing { half_width: b },
            IntervalKind::RealLine { .. } => TargetKind::Full,
        }
    }

    pub fn basis_spec(&self) -> Result<BasisSpec> {
        let (a, b) = self.bounds();
        self.basis.spec(self.n_paths, self.n, a, b)
    }

    /// Fits one sample according to the experiment.
    pub fn fit(&self, sample: &PathSample) -> Result<Estimate> {
        let spec = self.basis_spec()?;
        let data = build_regression(sample)?;
        let ball = ConstraintBall::for_data(&spec, &data);
        let est = estimator::fit(&data, &spec, self.constraint.then_some(&ball))?;
        if self.truncation {
            estimator::truncate(&est, self.n_paths.max(3))
        } else {
            Ok(est)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RiskReport {
    /// Mean of ||est - target||_n^2 over replicates.
    pub risk_n_sq: f64,
    pub se_sq: f64,
    /// Mean of ||est - target||_n over replicates.
    pub risk_n: f64,
    pub se_n: f64,
    pub replicates: usize,
    pub skipped_singular: usize,
    pub target_kind: TargetKind,
    pub m: usize,
    pub a: f64,
    pub b: f64,
    /// Per-replicate squared norms (skipped replicates omitted).
    pub per_replicate: Vec<f64>,
}

impl RiskReport {
    pub fn value(&self, power: NormPower) -> (f64, f64) {
        match power {
            NormPower::Squared => (self.risk_n_sq, self.se_sq),
            NormPower::First => (self.risk_n, self.se_n),
        }
    }
}

/// ||g - target||_n^2 on evaluation paths, given the target values at the
/// evaluation points (in `EvalPaths::points` order).
pub fn squared_distance(eval: &EvalPaths, target: &[f64], g: impl FnMut(f64) -> f64) -> f64 {
    let pts = eval.points();
    let mut g = g;
    let s: f64 = pts.iter().zip(target).map(|(&x, t)| (g(x) - t).powi(2)).sum();
    s / pts.len() as f64
}

/// Monte Carlo risk of the experiment's estimator against `model`'s sigma^2.
pub fn estimation_risk(
    model: &DiffusionModel,
    exp: &ExperimentSpec,
    replicates: usize,
    seed: u64,
) -> Result<RiskReport> {
    if replicates < 1 {
        return Err(invalid("replicates must be >= 1"));
    }
    let eval = EvalPaths::simulate(model, exp.n, exp.eval_paths, exp.substeps, seed)?;
    estimation_risk_with(model, exp, replicates, seed, &eval)
}

/// As [`estimation_risk`] with caller-provided evaluation paths.
pub fn estimation_risk_with(
    model: &DiffusionModel,
    exp: &ExperimentSpec,
    replicates: usize,
    seed: u64,
    eval: &EvalPaths,
) -> Result<RiskReport> {
    let target_kind = exp.target();
    let centered = model.centered();
    let points = eval.points();
    let target: Vec<f64> = points.iter().map(|&x| target_kind.value(&centered, x)).collect();
    let spec = exp.basis_spec()?;
    let results: Vec<Result<Option<f64>>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let s = derive_seed(seed, domain::REPLICATE, r as u64);
            let sample = simulate_sample(model, exp.n_paths, exp.n, exp.substeps, s)?;
            match exp.fit(&sample) {
                Ok(est) => {
                    let mut ev = est.evaluator()?;
                    Ok(Some(squared_distance(eval, &target, |x| ev.eval(x))))
                }
                Err(Error::SingularDesign { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut per_replicate = Vec::with_capacity(replicates);
    let mut skipped = 0;
    for r in results {
        match r? {
            Some(v) => per_replicate.push(v),
            None => skipped += 1,
        }
    }
    let (risk_n_sq, se_sq) = mean_se(&per_replicate);
    let roots: Vec<f64> = per_replicate.iter().map(|v| v.sqrt()).collect();
    let (risk_n, se_n) = mean_se(&roots);
    let m = spec.dim();
    Ok(RiskReport {
        risk_n_sq,
        se_sq,
        risk_n,
        se_n,
        replicates,
        skipped_singular: skipped,
        target_kind,
        m,
        a: spec.a,
        b: spec.b,
        per_replicate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisKind;

    #[test]
    fn constant_functions_have_exact_norms() {
        let s = crate::simulate::simulate_sample(&DiffusionModel::example(), 3, 10, 2, 1).unwrap();
        assert_eq!(empirical_norm_sq(|_| 1.0, &s), 1.0);
        assert_eq!(empirical_norm_sq(|_| 0.0, &s), 0.0);
        let (v, _) = theoretical_norm_sq(|_| 2.0, &DiffusionModel::example(), 10, 100, 3).unwrap();
        assert_eq!(v, 4.0);
    }

    #[test]
    fn fixed_dimension_maps_to_knots() {
        let rule = BasisRule {
            family: BasisFamily::Spline,
            degree: 3,
            dimension: DimensionChoice::Fixed { m: 7 },
            normalized: false,
        };
        let s = rule.spec(10, 10, -1.0, 1.0).unwrap();
        assert_eq!(s.dim(), 7);
        assert_eq!(s.kind, BasisKind::Spline { knots: 4, degree: 3 });
    }
}
