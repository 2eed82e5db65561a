//! Convergence-rate ladders and log-log slope fits.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimator::DimensionRegime;
use crate::model::{DiffusionModel, IntervalKind};
use crate::risk::{estimation_risk, BasisFamily, BasisRule, DimensionChoice, ExperimentSpec, NormPower};
use crate::rng::{derive_seed, domain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope from the weighted residuals.
    pub se: f64,
    pub r_squared: f64,
}

/// Weighted least-squares line through (x, y, weight) points.
pub fn fit_slope(points: &[(f64, f64, f64)]) -> Result<SlopeFit> {
    for (i, p) in points.iter().enumerate() {
        if points[..i].iter().any(|q| q.0 == p.0) {
            return Err(Error::DegenerateAbscissae);
        }
    }
    if points.len() < 3 {
        return Err(Error::TooFewPoints(points.len()));
    }
    if points.iter().any(|p| !(p.2 > 0.0) || !p.0.is_finite() || !p.1.is_finite()) {
        return Err(invalid("slope fit needs finite points and positive weights"));
    }
    let w: f64 = points.iter().map(|p| p.2).sum();
    let mx = points.iter().map(|p| p.2 * p.0).sum::<f64>() / w;
    let my = points.iter().map(|p| p.2 * p.1).sum::<f64>() / w;
    let sxx: f64 = points.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| p.2 * (p.1 - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateAbscissae);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points.iter().map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2)).sum();
    let dof = (points.len() - 2) as f64;
    let se = (sse / dof / sxx).sqrt();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(SlopeFit { slope, intercept, se, r_squared })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    CompactSinglePath,
    CompactRepeated,
    GrowingInterval,
    RealLine,
}

/// How n grows with N on a ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// n = N: the coupling of the upper bounds.
    #[default]
    Linear,
    /// n = N^2: the coupling required by the repeated-path lower bound.
    Quadratic,
}

impl Coupling {
    pub fn label(&self) -> &'static str {
        match self {
            Coupling::Linear => "n = N (upper-bound coupling)",
            Coupling::Quadratic => "n = N^2 (lower-bound coupling)",
        }
    }
}

/// A ladder of (N, n) rungs with everything needed to estimate risk at each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateLadder {
    pub regime: Regime,
    /// N per rung (n per rung for the single-path regime).
    pub rungs: Vec<usize>,
    #[serde(default)]
    pub coupling: Coupling,
    pub beta: f64,
    /// Calibration constant of the dimension rule.
    pub c: f64,
    /// Overrides the rule with a fixed dimension.
    pub fixed_dimension: Option<usize>,
    pub family: BasisFamily,
    pub degree: usize,
    /// [A, B] for compact regimes.
    pub a: f64,
    pub b: f64,
    /// A_N = growth sqrt(log N) for the growing and real-line regimes.
    pub growth: f64,
    pub constraint: bool,
    pub replicates: usize,
    pub eval_paths: usize,
    pub substeps: usize,
    pub seed: u64,
}

impl RateLadder {
    pub fn theoretical_slope(&self) -> f64 {
        let b = self.beta;
        match self.regime {
            Regime::RealLine => -3.0 * b / (2.0 * (2.0 * b + 1.0)),
            _ => -2.0 * b / (2.0 * b + 1.0),
        }
    }

    pub fn norm_power(&self) -> NormPower {
        match self.regime {
            Regime::RealLine => NormPower::First,
            _ => NormPower::Squared,
        }
    }

    /// (N, n) for a rung value.
    pub fn sizes(&self, rung: usize) -> (usize, usize) {
        match self.regime {
            Regime::CompactSinglePath => (1, rung),
            _ => match self.coupling {
                Coupling::Linear => (rung, rung),
                Coupling::Quadratic => (rung, rung * rung),
            },
        }
    }

    pub fn experiment(&self, rung: usize) -> ExperimentSpec {
        let (n_paths, n) = self.sizes(rung);
        let regime = match self.regime {
            Regime::CompactSinglePath => DimensionRegime::CompactSinglePath,
            Regime::CompactRepeated => DimensionRegime::CompactRepeated,
            Regime::GrowingInterval | Regime::RealLine => DimensionRegime::GrowingInterval,
        };
        let dimension = match self.fixed_dimension {
            Some(m) => DimensionChoice::Fixed { m },
            None => DimensionChoice::Rule { beta: self.beta, c: self.c, regime },
        };
        let interval = match self.regime {
            Regime::CompactSinglePath | Regime::CompactRepeated => IntervalKind::Compact { a: self.a, b: self.b },
            Regime::GrowingInterval => IntervalKind::Growing { a: self.growth },
            Regime::RealLine => IntervalKind::RealLine { a: self.growth },
        };
        ExperimentSpec {
            n_paths,
            n,
            substeps: self.substeps,
            basis: BasisRule { family: self.family, degree: self.degree, dimension, normalized: false },
            interval,
            constraint: self.constraint,
            truncation: self.regime == Regime::RealLine,
            eval_paths: self.eval_paths,
        }
    }

    /// Abscissa of the log-log fit: log N for the real line, log(Nn) otherwise.
    pub fn log_size(&self, n_paths: usize, n: usize) -> f64 {
        match self.regime {
            Regime::RealLine => (n_paths as f64).ln(),
            _ => ((n_paths * n) as f64).ln(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LadderRow {
    pub rung: usize,
    #[serde(rename = "N")]
    pub n_paths: usize,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "A_N")]
    pub half_width: f64,
    pub mean_risk: f64,
    pub se: f64,
    pub skipped: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct LadderResult {
    pub regime: Regime,
    pub coupling: &'static str,
    pub beta: f64,
    pub rows: Vec<LadderRow>,
    pub fit: SlopeFit,
    pub theoretical_slope: f64,
    pub x_axis: &'static str,
}

pub fn run_ladder(model: &DiffusionModel, ladder: &RateLadder) -> Result<LadderResult> {
    if ladder.rungs.len() < 4 {
        return Err(Error::InsufficientRungs { required: 4, got: ladder.rungs.len() });
    }
    if ladder.replicates < 20 {
        return Err(invalid(format!("ladders need >= 20 replicates per rung (got {})", ladder.replicates)));
    }
    let power = ladder.norm_power();
    let mut rows = Vec::with_capacity(ladder.rungs.len());
    let mut points = Vec::with_capacity(ladder.rungs.len());
    for (i, &rung) in ladder.rungs.iter().enumerate() {
        let exp = ladder.experiment(rung);
        let seed = derive_seed(ladder.seed, domain::RUNG, i as u64);
        let report = estimation_risk(model, &exp, ladder.replicates, seed)?;
        let (mean, se) = report.value(power);
        rows.push(LadderRow {
            rung: i,
            n_paths: exp.n_paths,
            n: exp.n,
            m: report.m,
            half_width: report.b,
            mean_risk: mean,
            se,
            skipped: report.skipped_singular,
        });
        if mean > 0.0 && mean.is_finite() {
            let rel = (se / mean).max(1e-6);
            points.push((ladder.log_size(exp.n_paths, exp.n), mean.ln(), 1.0 / (rel * rel)));
        }
    }
    let fit = fit_slope(&points)?;
    Ok(LadderResult {
        regime: ladder.regime,
        coupling: ladder.coupling.label(),
        beta: ladder.beta,
        rows,
        fit,
        theoretical_slope: ladder.theoretical_slope(),
        x_axis: if ladder.regime == Regime::RealLine { "log N" } else { "log(Nn)" },
    })
}

/// Columns rung, N, n, m, A_N, mean_risk, se.
pub fn write_ladder_csv(result: &LadderResult, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "rung,N,n,m,A_N,mean_risk,se")?;
    for r in &result.rows {
        writeln!(w, "{},{},{},{},{},{},{}", r.rung, r.n_paths, r.n, r.m, r.half_width, r.mean_risk, r.se)?;
    }
    w.flush()?;
    Ok(())
}

/// Whitespace-separated columns: log size, log risk, relative SE.
pub fn write_plot_data(result: &LadderResult, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# {} log_risk rel_se", result.x_axis.replace(' ', "_"))?;
    for r in &result.rows {
        let size = if result.regime == Regime::RealLine {
            (r.n_paths as f64).ln()
        } else {
            ((r.n_paths * r.n) as f64).ln()
        };
        writeln!(w, "{} {} {}", size, r.mean_risk.ln(), r.se / r.mean_risk)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let pts: Vec<_> = (0..5).map(|i| (i as f64, -0.8 * i as f64 + 1.0, 1.0)).collect();
        let f = fit_slope(&pts).unwrap();
        assert!((f.slope + 0.8).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(fit_slope(&[(1.0, 0.0, 1.0), (1.0, 2.0, 1.0)]), Err(Error::DegenerateAbscissae)));
        assert!(matches!(fit_slope(&[(1.0, 0.0, 1.0), (2.0, 2.0, 1.0)]), Err(Error::TooFewPoints(2))));
    }

    #[test]
    fn theoretical_slopes() {
        let mut l = RateLadder {
            regime: Regime::CompactRepeated,
            rungs: vec![16, 32, 64, 128],
            coupling: Coupling::Linear,
            beta: 2.0,
            c: 1.0,
            fixed_dimension: None,
            family: BasisFamily::Spline,
            degree: 3,
            a: -1.0,
            b: 1.0,
            growth: 1.0,
            constraint: true,
            replicates: 20,
            eval_paths: 200,
            substeps: 64,
            seed: 1,
        };
        assert!((l.theoretical_slope() + 0.8).abs() < 1e-15);
        l.beta = 1.0;
        assert!((l.theoretical_slope() + 2.0 / 3.0).abs() < 1e-15);
        l.regime = Regime::RealLine;
        l.beta = 2.0;
        assert!((l.theoretical_slope() + 0.6).abs() < 1e-15);
    }
}
