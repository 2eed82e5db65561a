//! Transition density through the Lamperti transform and a Brownian-bridge
//! expectation, plus occupation densities and exit probabilities.
//!
//! With S(x) = int_0^x du / sigma(u), f = b / sigma - sigma' / 2 and
//! H(x) = int_0^x f(v) / sigma(v) dv,
//!
//! p(s, t, x, y) = exp(-(S(y) - S(x))^2 / (2 tau) + H(y) - H(x)) / sqrt(2 pi tau sigma(y)^2)
//!                 * E[exp(tau int_0^1 G((1-u) S(x) + u S(y) + sqrt(tau) B_u) du)]
//!
//! where tau = t - s, B is a standard Brownian bridge on [0, 1] and
//! G(z) = -(f^2 + sigma f') / 2 evaluated at S^-1(z).

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::DiffusionModel;
use crate::quadrature;
use crate::rng::{domain, stream};
use crate::simulate::simulate_sample;

/// Table layout for the transforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityOptions {
    /// Tables cover [-half_range, half_range].
    pub half_range: f64,
    /// Number of table cells.
    pub cells: usize,
}

impl Default for DensityOptions {
    fn default() -> Self {
        Self { half_range: 12.0, cells: 24_000 }
    }
}

/// How the bridge expectation is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BridgeMethod {
    /// Monte Carlo over sampled bridges.
    #[default]
    MonteCarlo,
    /// 1 + tau int_0^1 G along the straight line from S(x) to S(y).
    FirstOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeOptions {
    pub bridges: usize,
    pub steps: usize,
    pub method: BridgeMethod,
}

impl Default for BridgeOptions {
    fn default() -> Self {
        Self { bridges: 10_000, steps: 64, method: BridgeMethod::MonteCarlo }
    }
}

#[derive(Debug, Clone)]
struct Tables {
    lo: f64,
    step: f64,
    s: Vec<f64>,
    h: Vec<f64>,
    ds: Vec<f64>,
    dh: Vec<f64>,
    z_lo: f64,
    z_step: f64,
    x_of_z: Vec<f64>,
    dx_of_z: Vec<f64>,
    g: Vec<f64>,
    /// Smallest interval in z outside of which G vanishes; `None` if G == 0.
    g_support: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
enum Kind {
    /// b = 0 and constant sigma: everything in closed form.
    Constant(f64),
    Tabulated(Box<Tables>),
}

/// S, H, S^-1 and G for one model.
#[derive(Debug, Clone)]
pub struct DensityTransforms {
    model: DiffusionModel,
    kind: Kind,
}

/// Cubic Hermite interpolation on cell [x0, x0 + h].
#[inline]
fn hermite(t: f64, h: f64, y0: f64, y1: f64, d0: f64, d1: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * h * d0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * h * d1
}

fn h_integrand(model: &DiffusionModel, v: f64) -> f64 {
    let s = model.sigma_eval(v);
    model.b(v) / (s[0] * s[0]) - s[1] / (2.0 * s[0])
}

/// G at a point in the original coordinates.
pub fn g_at_x(model: &DiffusionModel, x: f64) -> f64 {
    let s = model.sigma_eval(x);
    let b = model.drift_eval(x);
    let f = b[0] / s[0] - 0.5 * s[1];
    let fp = (b[1] * s[0] - b[0] * s[1]) / (s[0] * s[0]) - 0.5 * s[2];
    -0.5 * (f * f + s[0] * fp)
}

impl DensityTransforms {
    pub fn new(model: &DiffusionModel) -> Result<Self> {
        Self::with_options(model, &DensityOptions::default())
    }

    pub fn with_options(model: &DiffusionModel, opts: &DensityOptions) -> Result<Self> {
        let model = model.centered();
        if let (Some(c), true) = (model.constant_sigma(), model.is_driftless()) {
            return Ok(Self { model, kind: Kind::Constant(c) });
        }
        if opts.cells < 2 || opts.cells % 2 != 0 || !(opts.half_range > 0.0) {
            return Err(invalid("density tables need an even cell count >= 2 and a positive range"));
        }
        let cells = opts.cells;
        let lo = -opts.half_range;
        let step = 2.0 * opts.half_range / cells as f64;
        let xs: Vec<f64> = (0..=cells).map(|i| if i == cells / 2 { 0.0 } else { lo + i as f64 * step }).collect();
        let mid = cells / 2;
        let inv_sigma = |u: f64| 1.0 / model.sigma(u);
        let hi_fn = |u: f64| h_integrand(&model, u);
        let mut s = vec![0.0; cells + 1];
        let mut h = vec![0.0; cells + 1];
        for i in mid..cells {
            s[i + 1] = s[i] + quadrature::adaptive(xs[i], xs[i + 1], 1e-15, 1e-13, 200, inv_sigma)?;
            h[i + 1] = h[i] + quadrature::adaptive(xs[i], xs[i + 1], 1e-15, 1e-13, 200, hi_fn)?;
        }
        for i in (0..mid).rev() {
            s[i] = s[i + 1] - quadrature::adaptive(xs[i], xs[i + 1], 1e-15, 1e-13, 200, inv_sigma)?;
            h[i] = h[i + 1] - quadrature::adaptive(xs[i], xs[i + 1], 1e-15, 1e-13, 200, hi_fn)?;
        }
        let ds: Vec<f64> = xs.iter().map(|&x| inv_sigma(x)).collect();
        let dh: Vec<f64> = xs.iter().map(|&x| hi_fn(x)).collect();
        let mut t = Tables {
            lo,
            step,
            s,
            h,
            ds,
            dh,
            z_lo: 0.0,
            z_step: 0.0,
            x_of_z: vec![],
            dx_of_z: vec![],
            g: vec![],
            g_support: None,
        };
        let z_lo = t.s[0];
        let z_hi = t.s[cells];
        let z_step = (z_hi - z_lo) / cells as f64;
        let mut x_of_z = Vec::with_capacity(cells + 1);
        for i in 0..=cells {
            let z = if i == cells { z_hi } else { z_lo + i as f64 * z_step };
            x_of_z.push(invert_table(&t, z, cells));
        }
        let dx_of_z: Vec<f64> = x_of_z.iter().map(|&x| model.sigma(x)).collect();
        let g: Vec<f64> = x_of_z.iter().map(|&x| g_at_x(&model, x)).collect();
        let nz: Vec<usize> = (0..=cells).filter(|&i| g[i] != 0.0).collect();
        // G vanishes exactly between nodes only if it vanishes at both ends of
        // the cell, so widen the support by one cell on each side.
        t.g_support = match (nz.first(), nz.last()) {
            (Some(&a), Some(&b)) => Some((z_lo + (a as f64 - 1.0) * z_step, z_lo + (b as f64 + 1.0) * z_step)),
            _ => None,
        };
        t.z_lo = z_lo;
        t.z_step = z_step;
        t.x_of_z = x_of_z;
        t.dx_of_z = dx_of_z;
        t.g = g;
        Ok(Self { model, kind: Kind::Tabulated(Box::new(t)) })
    }

    pub fn model(&self) -> &DiffusionModel {
        &self.model
    }

    /// True when G vanishes identically.
    pub fn g_is_zero(&self) -> bool {
        match &self.kind {
            Kind::Constant(_) => true,
            Kind::Tabulated(t) => t.g_support.is_none(),
        }
    }

    /// S(x) = int_0^x du / sigma(u).
    pub fn s(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Constant(c) => x / c,
            Kind::Tabulated(t) => match cell(t.lo, t.step, t.s.len() - 1, x) {
                Some((i, u)) => hermite(u, t.step, t.s[i], t.s[i + 1], t.ds[i], t.ds[i + 1]),
                None => {
                    let (edge, idx) = if x < t.lo { (t.lo, 0) } else { (t.lo + t.step * (t.s.len() - 1) as f64, t.s.len() - 1) };
                    t.s[idx]
                        + quadrature::adaptive(edge, x, 1e-14, 1e-12, 2000, |u| 1.0 / self.model.sigma(u))
                            .unwrap_or(f64::NAN)
                }
            },
        }
    }

    /// H(x) = int_0^x (b / sigma^2 - sigma' / (2 sigma)).
    pub fn h(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Constant(_) => 0.0,
            Kind::Tabulated(t) => match cell(t.lo, t.step, t.h.len() - 1, x) {
                Some((i, u)) => hermite(u, t.step, t.h[i], t.h[i + 1], t.dh[i], t.dh[i + 1]),
                None => {
                    let (edge, idx) = if x < t.lo { (t.lo, 0) } else { (t.lo + t.step * (t.h.len() - 1) as f64, t.h.len() - 1) };
                    t.h[idx]
                        + quadrature::adaptive(edge, x, 1e-14, 1e-12, 2000, |u| h_integrand(&self.model, u))
                            .unwrap_or(f64::NAN)
                }
            },
        }
    }

    /// H(y) - H(x) for b = 0 in closed form: log sqrt(sigma(x) / sigma(y)).
    pub fn h_diff_driftless(&self, x: f64, y: f64) -> f64 {
        0.5 * (self.model.sigma(x) / self.model.sigma(y)).ln()
    }

    /// S^-1(z).
    pub fn s_inv(&self, z: f64) -> f64 {
        match &self.kind {
            Kind::Constant(c) => z * c,
            Kind::Tabulated(t) => match cell(t.z_lo, t.z_step, t.x_of_z.len() - 1, z) {
                Some((i, u)) => hermite(u, t.z_step, t.x_of_z[i], t.x_of_z[i + 1], t.dx_of_z[i], t.dx_of_z[i + 1]),
                None => {
                    // Outside the tables: bisection on S.
                    let (mut a, mut b) = if z < t.z_lo { (t.lo - 1.0, t.lo) } else { (-t.lo, -t.lo + 1.0) };
                    while self.s(a) > z {
                        a -= b - a;
                    }
                    while self.s(b) < z {
                        b += b - a;
                    }
                    bisect(|x| self.s(x) - z, a, b)
                }
            },
        }
    }

    /// G in Lamperti coordinates (linear interpolation of the table).
    #[inline]
    pub fn g(&self, z: f64) -> f64 {
        match &self.kind {
            Kind::Constant(_) => 0.0,
            Kind::Tabulated(t) => match cell(t.z_lo, t.z_step, t.g.len() - 1, z) {
                Some((i, u)) => t.g[i] + u * (t.g[i + 1] - t.g[i]),
                None => g_at_x(&self.model, self.s_inv(z)),
            },
        }
    }

    /// log of the closed-form part of the density.
    pub fn log_prefactor(&self, tau: f64, x: f64, y: f64) -> f64 {
        let dz = self.s(y) - self.s(x);
        let sy = self.model.sigma(y);
        -0.5 * (2.0 * PI * tau * sy * sy).ln() - dz * dz / (2.0 * tau) + self.h(y) - self.h(x)
    }

    /// As `log_prefactor`, with H(y) - H(x) replaced by its b = 0 closed form.
    pub fn log_prefactor_driftless(&self, tau: f64, x: f64, y: f64) -> f64 {
        let dz = self.s(y) - self.s(x);
        let sy = self.model.sigma(y);
        -0.5 * (2.0 * PI * tau * sy * sy).ln() - dz * dz / (2.0 * tau) + self.h_diff_driftless(x, y)
    }

    /// True when a bridge between zx and zy cannot reach the support of G
    /// (distance above 8 sqrt(tau); the neglected probability is below 1e-55).
    fn bridge_misses_support(&self, tau: f64, zx: f64, zy: f64) -> bool {
        match &self.kind {
            Kind::Constant(_) => true,
            Kind::Tabulated(t) => match t.g_support {
                None => true,
                Some((a, b)) => {
                    let margin = 8.0 * tau.sqrt();
                    zx.max(zy) + margin < a || zx.min(zy) - margin > b
                }
            },
        }
    }

    /// Estimate of E[exp(tau int G)] and its standard error.
    pub fn bridge_factor<R: Rng + ?Sized>(
        &self,
        tau: f64,
        x: f64,
        y: f64,
        opts: &BridgeOptions,
        rng: &mut R,
    ) -> (f64, f64) {
        let zx = self.s(x);
        let zy = self.s(y);
        if self.bridge_misses_support(tau, zx, zy) {
            return (1.0, 0.0);
        }
        let steps = opts.steps.max(1);
        let du = 1.0 / steps as f64;
        match opts.method {
            BridgeMethod::FirstOrder => {
                let vals: Vec<f64> = (0..=steps)
                    .map(|i| {
                        let u = i as f64 * du;
                        self.g((1.0 - u) * zx + u * zy)
                    })
                    .collect();
                (1.0 + tau * quadrature::trapezoid(&vals, du), 0.0)
            }
            BridgeMethod::MonteCarlo => {
                let sq = tau.sqrt();
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                let count = opts.bridges.max(1);
                for _ in 0..count {
                    let mut bval = 0.0f64;
                    let mut integral = 0.5 * self.g(zx);
                    for i in 0..steps {
                        let u = i as f64 * du;
                        let rem = 1.0 - u;
                        let next = if i + 1 == steps {
                            0.0
                        } else {
                            let mean = bval * (1.0 - du / rem);
                            let var = du * (rem - du) / rem;
                            let z: f64 = rng.sample(StandardNormal);
                            mean + var.sqrt() * z
                        };
                        bval = next;
                        let un = (i + 1) as f64 * du;
                        let w = if i + 1 == steps { 0.5 } else { 1.0 };
                        integral += w * self.g((1.0 - un) * zx + un * zy + sq * bval);
                    }
                    let v = (tau * integral * du).exp();
                    sum += v;
                    sum_sq += v * v;
                }
                let n = count as f64;
                let mean = sum / n;
                let var = if count > 1 { ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
                (mean, (var / n).sqrt())
            }
        }
    }

    /// (density, standard error) at (tau, x, y).
    pub fn density<R: Rng + ?Sized>(&self, tau: f64, x: f64, y: f64, opts: &BridgeOptions, rng: &mut R) -> (f64, f64) {
        let pre = self.log_prefactor(tau, x, y).exp();
        let (f, se) = self.bridge_factor(tau, x, y, opts, rng);
        (pre * f, pre * se)
    }

    /// log density using the b = 0 closed form for H. Only valid for
    /// driftless models.
    pub fn log_density_driftless<R: Rng + ?Sized>(
        &self,
        tau: f64,
        x: f64,
        y: f64,
        opts: &BridgeOptions,
        rng: &mut R,
    ) -> f64 {
        let (f, _) = self.bridge_factor(tau, x, y, opts, rng);
        self.log_prefactor_driftless(tau, x, y) + f.ln()
    }
}

/// Cell index and local coordinate in [0, 1], or `None` outside the table.
#[inline]
fn cell(lo: f64, step: f64, cells: usize, x: f64) -> Option<(usize, f64)> {
    let p = (x - lo) / step;
    if !(p >= 0.0) || p > cells as f64 {
        return None;
    }
    let i = (p.floor() as usize).min(cells - 1);
    Some((i, p - i as f64))
}

fn invert_table(t: &Tables, z: f64, cells: usize) -> f64 {
    // Locate the cell by binary search on the monotone node values, then
    // bisect the Hermite interpolant inside it.
    let idx = t.s.partition_point(|&v| v <= z).clamp(1, cells) - 1;
    let x0 = t.lo + idx as f64 * t.step;
    let f = |x: f64| {
        let u = ((x - t.lo) / t.step - idx as f64).clamp(0.0, 1.0);
        hermite(u, t.step, t.s[idx], t.s[idx + 1], t.ds[idx], t.ds[idx + 1]) - z
    };
    bisect(f, x0, x0 + t.step)
}

/// Bisection to 1e-13 absolute on a sign-changing bracket.
fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    if fa == 0.0 {
        return a;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 || (b - a) < 1e-13 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Density of X_t given X_s = x, with its Monte Carlo standard error.
#[allow(clippy::too_many_arguments)]
pub fn transition_density(
    model: &DiffusionModel,
    s: f64,
    t: f64,
    x: f64,
    y: f64,
    bridges: usize,
    bridge_steps: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(0.0 <= s && s < t && t <= 1.0) {
        return Err(invalid("need 0 <= s < t <= 1"));
    }
    if bridges < 100 {
        return Err(invalid("need at least 100 bridges"));
    }
    let tr = DensityTransforms::new(model)?;
    let mut rng = stream(seed, domain::BRIDGE, 0);
    let opts = BridgeOptions { bridges, steps: bridge_steps, method: BridgeMethod::MonteCarlo };
    Ok(tr.density(t - s, x, y, &opts, &mut rng))
}

/// f_n(y) = (1/n) sum_{k=1}^{n-1} p(0, k/n, 0, y), with a standard error
/// that treats the terms as independent.
pub fn occupation_density(
    model: &DiffusionModel,
    n: usize,
    y: f64,
    bridges: usize,
    bridge_steps: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(invalid("n must be >= 2"));
    }
    let tr = DensityTransforms::new(model)?;
    let opts = BridgeOptions { bridges, steps: bridge_steps, method: BridgeMethod::MonteCarlo };
    occupation_density_with(&tr, n, y, &opts, seed)
}

pub fn occupation_density_with(
    tr: &DensityTransforms,
    n: usize,
    y: f64,
    opts: &BridgeOptions,
    seed: u64,
) -> Result<(f64, f64)> {
    let terms: Vec<(f64, f64)> = (1..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, domain::BRIDGE, k as u64);
            tr.density(k as f64 / n as f64, 0.0, y, opts, &mut rng)
        })
        .collect();
    let v = terms.iter().map(|t| t.0).sum::<f64>() / n as f64;
    let se = terms.iter().map(|t| t.1 * t.1).sum::<f64>().sqrt() / n as f64;
    Ok((v, se))
}

#[derive(Debug, Clone, Serialize)]
pub struct ExitEstimate {
    pub value: f64,
    pub se: f64,
    /// Time at which the exceedance frequency peaks.
    pub t_argmax: f64,
}

/// sup over grid times k / grid (k >= 1) of the Monte Carlo frequency of
/// |X_t| > a, with the binomial standard error at the maximizing time.
pub fn exit_probability(
    model: &DiffusionModel,
    a: f64,
    mc_paths: usize,
    substeps: usize,
    grid: usize,
    seed: u64,
) -> Result<ExitEstimate> {
    if !(a >= 0.0) {
        return Err(invalid("threshold must be >= 0"));
    }
    let sample = simulate_sample(model, mc_paths, grid.max(2), substeps, crate::rng::derive_seed(seed, domain::EXIT, 0))?;
    let n = sample.n;
    let mut counts = vec![0usize; n + 1];
    for j in 0..mc_paths {
        for (k, &x) in sample.path(j).iter().enumerate() {
            if x.abs() > a {
                counts[k] += 1;
            }
        }
    }
    let (k, c) = counts.iter().enumerate().skip(1).fold((1, 0), |acc, (k, &c)| if c > acc.1 { (k, c) } else { acc });
    let p = c as f64 / mc_paths as f64;
    Ok(ExitEstimate { value: p, se: (p * (1.0 - p) / mc_paths as f64).sqrt(), t_argmax: k as f64 / n as f64 })
}

/// Smallest constant C with g(t / c, y) / C <= p(t, y) <= C g(c t, y) on the
/// given probe values, where g(t, .) is the centered Gaussian density with
/// variance t.
pub fn sandwich_constant(c: f64, probes: &[(f64, f64, f64)]) -> f64 {
    let g = |t: f64, y: f64| (-y * y / (2.0 * t)).exp() / (2.0 * PI * t).sqrt();
    probes.iter().fold(1.0f64, |acc, &(t, y, p)| {
        let upper = p / g(c * t, y);
        let lower = g(t / c, y) / p;
        acc.max(upper).max(lower)
    })
}
