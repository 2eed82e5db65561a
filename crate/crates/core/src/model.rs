//! Diffusion models dX = b(X) dt + sigma(X) dW and numerical checks of the
//! standing assumptions on their coefficients.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature;

/// A smooth scalar coefficient with its first two derivatives.
pub trait Coefficient: Send + Sync + fmt::Debug {
    /// (f(x), f'(x), f''(x)).
    fn eval(&self, x: f64) -> [f64; 3];

    fn value(&self, x: f64) -> f64 {
        self.eval(x)[0]
    }
}

/// Building blocks for coefficients given in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Term {
    /// c
    Const { c: f64 },
    /// a x
    Linear { a: f64 },
    /// a / (c + x^2)
    Rational { a: f64, c: f64 },
    /// a / (c + cos x)
    CosRatio { a: f64, c: f64 },
    /// a tanh(s x)
    Tanh { a: f64, s: f64 },
    /// a sin(w x)
    Sin { a: f64, w: f64 },
    /// a exp(-x^2 / (2 s^2))
    Gaussian { a: f64, s: f64 },
}

impl Term {
    /// f(x) alone; the simulation hot path only needs values.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Term::Const { c } => c,
            Term::Linear { a } => a * x,
            Term::Rational { a, c } => a / (c + x * x),
            Term::CosRatio { a, c } => a / (c + x.cos()),
            Term::Tanh { a, s } => a * (s * x).tanh(),
            Term::Sin { a, w } => a * (w * x).sin(),
            Term::Gaussian { a, s } => a * (-x * x / (2.0 * s * s)).exp(),
        }
    }

    pub fn eval(&self, x: f64) -> [f64; 3] {
        // a / q with q, q', q'' given.
        fn ratio(a: f64, q: f64, q1: f64, q2: f64) -> [f64; 3] {
            let v = a / q;
            let d1 = -a * q1 / (q * q);
            let d2 = a * (2.0 * q1 * q1 / (q * q * q) - q2 / (q * q));
            [v, d1, d2]
        }
        match *self {
            Term::Const { c } => [c, 0.0, 0.0],
            Term::Linear { a } => [a * x, a, 0.0],
            Term::Rational { a, c } => ratio(a, c + x * x, 2.0 * x, 2.0),
            Term::CosRatio { a, c } => ratio(a, c + x.cos(), -x.sin(), -x.cos()),
            Term::Tanh { a, s } => {
                let t = (s * x).tanh();
                let sech2 = 1.0 - t * t;
                [a * t, a * s * sech2, -2.0 * a * s * s * t * sech2]
            }
            Term::Sin { a, w } => {
                let (sn, cs) = (w * x).sin_cos();
                [a * sn, a * w * cs, -a * w * w * sn]
            }
            Term::Gaussian { a, s } => {
                let s2 = s * s;
                let v = a * (-x * x / (2.0 * s2)).exp();
                [v, -x / s2 * v, (x * x / (s2 * s2) - 1.0 / s2) * v]
            }
        }
    }
}

/// Sum of terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermSum(pub Vec<Term>);

impl Coefficient for TermSum {
    #[inline]
    fn value(&self, x: f64) -> f64 {
        self.0.iter().map(|t| t.value(x)).sum()
    }

    fn eval(&self, x: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for t in &self.0 {
            let v = t.eval(x);
            out[0] += v[0];
            out[1] += v[1];
            out[2] += v[2];
        }
        out
    }
}

/// `inner(x + shift)`; used to move the initial value to the origin.
#[derive(Debug)]
struct Shifted {
    inner: Arc<dyn Coefficient>,
    shift: f64,
}

impl Coefficient for Shifted {
    fn eval(&self, x: f64) -> [f64; 3] {
        self.inner.eval(x + self.shift)
    }

    fn value(&self, x: f64) -> f64 {
        self.inner.value(x + self.shift)
    }
}

/// The pair (b, sigma) with derivatives and the ellipticity band.
#[derive(Clone)]
pub struct DiffusionModel {
    pub name: String,
    drift: Arc<dyn Coefficient>,
    diffusion: Arc<dyn Coefficient>,
    pub kappa0: f64,
    pub kappa1: f64,
    pub x0: f64,
    /// Set when sigma is known to satisfy sup |sigma| <= 1.
    pub sup_bounded_by_one: bool,
    driftless: bool,
    constant_sigma: Option<f64>,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("name", &self.name)
            .field("kappa0", &self.kappa0)
            .field("kappa1", &self.kappa1)
            .field("x0", &self.x0)
            .finish()
    }
}

impl DiffusionModel {
    pub fn new(
        name: impl Into<String>,
        drift: Arc<dyn Coefficient>,
        diffusion: Arc<dyn Coefficient>,
        kappa0: f64,
        kappa1: f64,
    ) -> Self {
        Self {
            name: name.into(),
            drift,
            diffusion,
            kappa0,
            kappa1,
            x0: 0.0,
            sup_bounded_by_one: kappa1 <= 1.0,
            driftless: false,
            constant_sigma: None,
        }
    }

    /// Marks b as identically zero, which enables closed forms downstream.
    pub fn with_zero_drift(mut self) -> Self {
        self.drift = Arc::new(TermSum(vec![]));
        self.driftless = true;
        self
    }

    pub fn with_x0(mut self, x0: f64) -> Self {
        self.x0 = x0;
        self
    }

    /// b = 0, sigma = 1.
    pub fn constant_unit() -> Self {
        Self::constant(1.0).named("constant_unit")
    }

    /// b = 0, sigma = c.
    pub fn constant(c: f64) -> Self {
        let mut m = Self::new(
            "constant",
            Arc::new(TermSum(vec![])),
            Arc::new(TermSum(vec![Term::Const { c }])),
            c.abs(),
            c.abs(),
        )
        .with_zero_drift();
        m.constant_sigma = Some(c);
        m
    }

    /// b(x) = 1 / (2 + cos x), sigma(x) = sqrt(4/5) + 1 / (4 pi + x^2).
    pub fn example() -> Self {
        let base = (0.8f64).sqrt();
        let mut m = Self::new(
            "example_2_4",
            Arc::new(TermSum(vec![Term::CosRatio { a: 1.0, c: 2.0 }])),
            Arc::new(TermSum(vec![
                Term::Const { c: base },
                Term::Rational { a: 1.0, c: 4.0 * PI },
            ])),
            base,
            base + 1.0 / (4.0 * PI),
        );
        m.sup_bounded_by_one = true;
        m
    }

    /// A model from term sums. `kappa0`/`kappa1` are taken from a probe of
    /// [-10, 10] unless provided.
    pub fn custom(
        drift: Vec<Term>,
        sigma: Vec<Term>,
        kappa: Option<(f64, f64)>,
    ) -> Result<Self> {
        let driftless = drift.is_empty();
        let diffusion = TermSum(sigma);
        let (k0, k1) = match kappa {
            Some(k) => k,
            None => {
                let grid = ProbeGrid::default();
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for x in grid.points() {
                    let s = diffusion.value(x);
                    lo = lo.min(s);
                    hi = hi.max(s);
                }
                (lo, hi)
            }
        };
        if !(k0 > 0.0) {
            return Err(invalid(format!("custom sigma is not bounded below by a positive constant (min {k0})")));
        }
        let mut m = Self::new("custom", Arc::new(TermSum(drift)), Arc::new(diffusion), k0, k1);
        if driftless {
            m = m.with_zero_drift();
        }
        Ok(m)
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// The model seen from the origin: coefficients evaluated at x + x0.
    pub fn centered(&self) -> Self {
        if self.x0 == 0.0 {
            return self.clone();
        }
        let mut m = self.clone();
        m.drift = Arc::new(Shifted { inner: self.drift.clone(), shift: self.x0 });
        m.diffusion = Arc::new(Shifted { inner: self.diffusion.clone(), shift: self.x0 });
        m.x0 = 0.0;
        m
    }

    #[inline]
    pub fn b(&self, x: f64) -> f64 {
        if self.driftless {
            0.0
        } else {
            self.drift.value(x)
        }
    }

    #[inline]
    pub fn b_prime(&self, x: f64) -> f64 {
        if self.driftless {
            0.0
        } else {
            self.drift.eval(x)[1]
        }
    }

    pub fn drift_eval(&self, x: f64) -> [f64; 3] {
        if self.driftless {
            [0.0; 3]
        } else {
            self.drift.eval(x)
        }
    }

    #[inline]
    pub fn sigma(&self, x: f64) -> f64 {
        match self.constant_sigma {
            Some(c) => c,
            None => self.diffusion.value(x),
        }
    }

    pub fn sigma_prime(&self, x: f64) -> f64 {
        self.diffusion.eval(x)[1]
    }

    pub fn sigma_double_prime(&self, x: f64) -> f64 {
        self.diffusion.eval(x)[2]
    }

    /// (sigma, sigma', sigma'').
    pub fn sigma_eval(&self, x: f64) -> [f64; 3] {
        self.diffusion.eval(x)
    }

    pub fn sigma_sq(&self, x: f64) -> f64 {
        let s = self.sigma(x);
        s * s
    }

    pub fn is_driftless(&self) -> bool {
        self.driftless
    }

    pub fn constant_sigma(&self) -> Option<f64> {
        self.constant_sigma
    }
}

/// Smoothness class description: beta, the Hoelder constant and the domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderClassSpec {
    pub beta: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub interval: IntervalKind,
}

impl HolderClassSpec {
    pub fn new(beta: f64, r: f64, interval: IntervalKind) -> Result<Self> {
        if !(beta >= 1.0) {
            return Err(invalid(format!("beta must be >= 1 (got {beta})")));
        }
        if !(r > 0.0) {
            return Err(invalid(format!("R must be positive (got {r})")));
        }
        Ok(Self { beta, r, interval })
    }

    /// Order of the derivative that carries the Hoelder condition: the largest
    /// integer strictly below beta, so that the exponent beta - d is in (0, 1].
    pub fn d(&self) -> usize {
        holder_order(self.beta)
    }
}

pub fn holder_order(beta: f64) -> usize {
    (beta.ceil() as usize).saturating_sub(1)
}

/// Where the estimation happens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntervalKind {
    Compact {
        #[serde(rename = "A")]
        a: f64,
        #[serde(rename = "B")]
        b: f64,
    },
    /// [-A_N, A_N] with A_N = a sqrt(log N).
    Growing { a: f64 },
    /// Estimation on [-A_N, A_N] as above, but judged against sigma^2 on the
    /// whole line.
    RealLine { a: f64 },
}

impl IntervalKind {
    /// The interval used for N paths.
    pub fn bounds(&self, n_paths: usize) -> (f64, f64) {
        match *self {
            IntervalKind::Compact { a, b } => (a, b),
            IntervalKind::Growing { a } | IntervalKind::RealLine { a } => {
                let an = growing_half_width(a, n_paths);
                (-an, an)
            }
        }
    }
}

/// A_N = a sqrt(log N).
pub fn growing_half_width(a: f64, n_paths: usize) -> f64 {
    a * (n_paths as f64).ln().max(0.0).sqrt()
}

/// Uniform probe points on [lo, hi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for ProbeGrid {
    fn default() -> Self {
        Self { lo: -10.0, hi: 10.0, points: 2001 }
    }
}

impl ProbeGrid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Self {
        Self { lo, hi, points }
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.points.max(2);
        let step = (self.hi - self.lo) / (n - 1) as f64;
        (0..n).map(move |i| if i + 1 == n { self.hi } else { self.lo + i as f64 * step })
    }
}

/// Outcome of [`check_assumptions`].
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub model: String,
    /// Largest slope between consecutive probe points, over b and sigma.
    pub lipschitz_estimate: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// min sigma - kappa0.
    pub ellipticity_margin: f64,
    pub within_band: bool,
    /// Least-squares exponent of log(|sigma'| + |sigma''|) against log(1 + |x|).
    pub growth_exponent: f64,
    pub growth_bounded: bool,
    pub b_sup: f64,
    pub b_prime_sup: f64,
    /// Whether exp(-S(A)^2/2) <= exp(-A^2/2) at both grid endpoints.
    pub exit_condition: bool,
    pub exit_condition_values: Vec<ExitConditionRow>,
    /// Worst relative mismatch between analytic and finite-difference derivatives.
    pub derivative_mismatch: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExitConditionRow {
    pub a: f64,
    pub lhs: f64,
    pub rhs: f64,
}

impl AssumptionReport {
    pub fn passes(&self) -> bool {
        self.lipschitz_estimate.is_finite()
            && self.within_band
            && self.growth_bounded
            && self.b_sup.is_finite()
            && self.b_prime_sup.is_finite()
    }
}

/// Probes the standing assumptions on a grid.
pub fn check_assumptions(model: &DiffusionModel, grid: &ProbeGrid) -> Result<AssumptionReport> {
    if grid.points < 100 || grid.lo > -10.0 || grid.hi < 10.0 {
        return Err(invalid("probe grid needs >= 100 points spanning [-10, 10]"));
    }
    let xs: Vec<f64> = grid.points().collect();
    let mut sigma_min = f64::INFINITY;
    let mut sigma_max = f64::NEG_INFINITY;
    let mut lip: f64 = 0.0;
    let mut b_sup: f64 = 0.0;
    let mut bp_sup: f64 = 0.0;
    let mut mismatch: f64 = 0.0;
    let mut prev: Option<(f64, f64, f64)> = None;
    let mut growth_pts = Vec::with_capacity(xs.len());
    let mut bad: Option<(f64, f64)> = None;
    for &x in &xs {
        let s = model.sigma_eval(x);
        if !(s[0] > 0.0) {
            // Report the violation closest to the starting point.
            if bad.is_none_or(|(bx, _): (f64, f64)| x.abs() < bx.abs()) {
                bad = Some((x, s[0]));
            }
            continue;
        }
        let b = model.drift_eval(x);
        sigma_min = sigma_min.min(s[0]);
        sigma_max = sigma_max.max(s[0]);
        b_sup = b_sup.max(b[0].abs());
        bp_sup = bp_sup.max(b[1].abs());
        if let Some((px, pb, ps)) = prev {
            let dx = x - px;
            lip = lip.max(((b[0] - pb) / dx).abs()).max(((s[0] - ps) / dx).abs());
        }
        prev = Some((x, b[0], s[0]));
        mismatch = mismatch.max(derivative_mismatch(model, x));
        growth_pts.push((x.abs().ln_1p(), (s[1].abs() + s[2].abs()).max(1e-300).ln()));
    }
    if let Some((x, value)) = bad {
        return Err(Error::NonPositiveSigma { x, value });
    }
    let growth_exponent = growth_slope(&growth_pts);
    let exit_condition_values = [grid.lo, grid.hi]
        .iter()
        .map(|&a| {
            let s_a = quadrature::adaptive(0.0, a, 1e-12, 1e-12, 2000, |u| 1.0 / model.sigma(u))?;
            Ok(ExitConditionRow { a, lhs: (-0.5 * s_a * s_a).exp(), rhs: (-0.5 * a * a).exp() })
        })
        .collect::<Result<Vec<_>>>()?;
    let exit_condition = exit_condition_values.iter().all(|r| r.lhs <= r.rhs * (1.0 + 1e-12));
    let tol = 1e-9 * model.kappa1.max(1.0);
    Ok(AssumptionReport {
        model: model.name.clone(),
        lipschitz_estimate: lip,
        sigma_min,
        sigma_max,
        ellipticity_margin: sigma_min - model.kappa0,
        within_band: sigma_min >= model.kappa0 - tol && sigma_max <= model.kappa1 + tol,
        growth_exponent,
        growth_bounded: growth_exponent.is_finite(),
        b_sup,
        b_prime_sup: bp_sup,
        exit_condition,
        exit_condition_values,
        derivative_mismatch: mismatch,
    })
}

/// Central-difference check of sigma' and sigma'' at step 1e-5 (1e-3 for the
/// second derivative, where cancellation dominates at smaller steps).
pub fn derivative_mismatch(model: &DiffusionModel, x: f64) -> f64 {
    let h = 1e-5;
    let s = model.sigma_eval(x);
    let d1 = (model.sigma(x + h) - model.sigma(x - h)) / (2.0 * h);
    let h2 = 1e-3;
    let d2 = (model.sigma_prime(x + h2) - model.sigma_prime(x - h2)) / (2.0 * h2);
    let e1 = (d1 - s[1]).abs() / (1.0 + s[1].abs());
    let e2 = (d2 - s[2]).abs() / (1.0 + s[2].abs());
    e1.max(e2)
}

fn growth_slope(pts: &[(f64, f64)]) -> f64 {
    // Only the tails say anything about polynomial growth.
    let tail: Vec<(f64, f64)> = pts.iter().copied().filter(|p| p.0 > 1.0).collect();
    let use_pts = if tail.len() >= 3 { &tail[..] } else { pts };
    let n = use_pts.len() as f64;
    let mx = use_pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = use_pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = use_pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = use_pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}
