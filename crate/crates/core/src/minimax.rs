//! Lower-bound hypothesis families built from bump functions, and numerical
//! checks of the three premises of the Tsybakov reduction: separation,
//! membership in the Hoelder class, and the Kullback budget.

use std::f64::consts::{E, PI};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{BridgeMethod, BridgeOptions, DensityTransforms};
use crate::error::{invalid, Error, Result};
use crate::jet::Jet;
use crate::model::{holder_order, Coefficient, DiffusionModel, ProbeGrid};
use crate::quadrature;
use crate::rng::{derive_seed, domain, stream};
use crate::simulate::simulate_sample;

/// K(u) = a K0(2u) with K0(x) = exp(-1 / (1 - x^2)) on (-1, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpKernel {
    pub a: f64,
}

/// Below this value of 1 - v^2 the kernel and all its coded derivatives are
/// smaller than exp(-1000) times a polynomial, so they are returned as 0.
const EDGE_CUTOFF: f64 = 1e-3;

impl BumpKernel {
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(invalid("kernel amplitude must be positive"));
        }
        Ok(Self { a })
    }

    /// K0 composed with a jet.
    pub fn k0_jet(v: Jet) -> Jet {
        let q = Jet::constant(1.0) - v * v;
        if !(q.value() > EDGE_CUTOFF) {
            return Jet::constant(0.0);
        }
        (-q.recip()).exp()
    }

    /// K as a jet in u.
    pub fn jet(&self, u: f64) -> Jet {
        Self::k0_jet(Jet::variable(u).scale(2.0)).scale(self.a)
    }

    pub fn value(&self, u: f64) -> f64 {
        let v = 2.0 * u;
        let q = 1.0 - v * v;
        if q <= 0.0 {
            0.0
        } else {
            self.a * (-1.0 / q).exp()
        }
    }

    /// K^(k)(u) for k <= 5.
    pub fn derivative(&self, u: f64, k: usize) -> f64 {
        self.jet(u).derivative(k)
    }

    /// ||K||_inf = a / e, attained at 0.
    pub fn sup_norm(&self) -> f64 {
        self.a / E
    }

    /// ||K||^2 = int K^2 over (-1/2, 1/2).
    pub fn l2_norm_sq(&self) -> Result<f64> {
        quadrature::adaptive(-0.5, 0.5, 1e-18, 1e-14, 500, |u| self.value(u).powi(2))
    }

    /// sup |K^(k)| on a dense probe of (-1/2, 1/2).
    pub fn derivative_sup(&self, k: usize, points: usize) -> f64 {
        (0..=points)
            .map(|i| -0.5 + i as f64 / points as f64)
            .map(|u| self.derivative(u, k).abs())
            .fold(0.0, f64::max)
    }
}

/// Everything that defines a hypothesis family except the codewords.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisConfig {
    pub beta: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub kappa1: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    /// Number of bumps; h = 1 / m.
    pub m: usize,
    /// Kernel amplitude.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Multiplies every bump. 1 gives the compact construction; the
    /// real-line construction uses 2.
    #[serde(default = "one")]
    pub dilation: f64,
    /// Multiplies Gamma. 1 gives the calibrated choice, 0 collapses all
    /// hypotheses onto sigma^2 = 1, values above 1 leave the class.
    #[serde(default = "one")]
    pub gamma_scale: f64,
    /// The family is viewed as living on the whole line.
    #[serde(default)]
    pub real_line: bool,
}

fn default_amplitude() -> f64 {
    1.0
}

fn one() -> f64 {
    1.0
}

impl HypothesisConfig {
    pub fn new(beta: f64, r: f64, kappa1: f64, a: f64, b: f64, m: usize) -> Self {
        Self { beta, r, kappa1, a, b, m, amplitude: 1.0, dilation: 1.0, gamma_scale: 1.0, real_line: false }
    }

    fn validate(&self) -> Result<()> {
        if self.m < 8 {
            return Err(invalid(format!("need m >= 8 bumps (got {})", self.m)));
        }
        if !(self.kappa1 > 1.0) {
            return Err(invalid(format!("kappa1 must exceed 1 (got {})", self.kappa1)));
        }
        if !(self.beta >= 1.0 && self.beta <= 5.0) {
            return Err(invalid(format!("beta must be in [1, 5] (got {})", self.beta)));
        }
        if !(self.r > 0.0 && self.b > self.a && self.amplitude > 0.0 && self.dilation > 0.0 && self.gamma_scale >= 0.0) {
            return Err(invalid("need R > 0, B > A, amplitude > 0, dilation > 0 and gamma_scale >= 0"));
        }
        Ok(())
    }
}

/// sigma_j^2 = 1 + Gamma sum_k w_k^j eta_k with eta_k(x) = phi_k((x - A) / (B - A))
/// and phi_k(t) = dilation R h^beta K((t - x_k) / h).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSet {
    pub config: HypothesisConfig,
    pub h: f64,
    #[serde(rename = "Gamma")]
    pub gamma: f64,
    pub kernel: BumpKernel,
    /// M + 1 words; the first is all zeros.
    pub codewords: Vec<Vec<u8>>,
    /// Required pairwise Hamming distance, ceil(m / 8).
    pub min_hamming: usize,
}

impl HypothesisSet {
    /// A family with explicit codewords. The zero word is prepended when the
    /// first word is not already zero.
    pub fn from_codewords(config: HypothesisConfig, mut codewords: Vec<Vec<u8>>) -> Result<Self> {
        config.validate()?;
        if codewords.iter().any(|w| w.len() != config.m || w.iter().any(|&b| b > 1)) {
            return Err(invalid(format!("codewords must be binary vectors of length {}", config.m)));
        }
        if codewords.first().is_none_or(|w| w.iter().any(|&b| b != 0)) {
            codewords.insert(0, vec![0; config.m]);
        }
        let kernel = BumpKernel::new(config.amplitude)?;
        let gamma = config.gamma_scale * (config.kappa1 * config.kappa1 - 1.0) / (config.r * kernel.sup_norm());
        Ok(Self {
            h: 1.0 / config.m as f64,
            gamma,
            kernel,
            codewords,
            min_hamming: config.m.div_ceil(8),
            config,
        })
    }

    /// M, the number of alternatives.
    pub fn alternatives(&self) -> usize {
        self.codewords.len() - 1
    }

    pub fn m(&self) -> usize {
        self.config.m
    }

    pub fn width(&self) -> f64 {
        self.config.b - self.config.a
    }

    /// Center of bump k (0-based) in the unit interval.
    pub fn center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.h
    }

    /// Height factor dilation R h^beta.
    fn bump_scale(&self) -> f64 {
        self.config.dilation * self.config.r * self.h.powf(self.config.beta)
    }

    /// eta_k as a jet in x.
    pub fn eta_jet(&self, k: usize, x: f64) -> Jet {
        let w = self.width();
        let t = (x - self.config.a) / w;
        let u = (t - self.center(k)) / self.h;
        if u.abs() >= 0.5 {
            return Jet::constant(0.0);
        }
        let mut v = Jet::variable(2.0 * u);
        v.c[1] = 2.0 / (w * self.h);
        BumpKernel::k0_jet(v).scale(self.kernel.a * self.bump_scale())
    }

    pub fn eta(&self, k: usize, x: f64) -> f64 {
        let t = (x - self.config.a) / self.width();
        self.bump_scale() * self.kernel.value((t - self.center(k)) / self.h)
    }

    /// The bump whose support could contain x, if any.
    fn bump_index(&self, x: f64) -> Option<usize> {
        let t = (x - self.config.a) / self.width();
        if !(t > 0.0 && t < 1.0) {
            return None;
        }
        Some(((t * self.config.m as f64).floor() as usize).min(self.config.m - 1))
    }

    /// sigma_j^2 as a jet in x.
    pub fn sigma_sq_jet(&self, j: usize, x: f64) -> Jet {
        match self.bump_index(x) {
            Some(k) if self.codewords[j][k] == 1 && self.gamma != 0.0 => self.eta_jet(k, x).scale(self.gamma) + 1.0,
            _ => Jet::constant(1.0),
        }
    }

    pub fn sigma_sq(&self, j: usize, x: f64) -> f64 {
        match self.bump_index(x) {
            Some(k) if self.codewords[j][k] == 1 => 1.0 + self.gamma * self.eta(k, x),
            _ => 1.0,
        }
    }

    /// True when sigma_j^2 is identically 1.
    pub fn is_trivial(&self, j: usize) -> bool {
        self.gamma == 0.0 || self.codewords[j].iter().all(|&b| b == 0)
    }

    pub fn hamming(&self, j: usize, l: usize) -> usize {
        self.codewords[j].iter().zip(&self.codewords[l]).filter(|(a, b)| a != b).count()
    }

    /// Driftless model with diffusion coefficient sigma_j.
    pub fn model(self: &Arc<Self>, j: usize) -> Result<DiffusionModel> {
        if j >= self.codewords.len() {
            return Err(invalid(format!("hypothesis index {j} out of range (have {})", self.codewords.len())));
        }
        if self.is_trivial(j) {
            return Ok(DiffusionModel::constant_unit().named(format!("hypothesis:{j}")));
        }
        let k1 = (1.0 + self.gamma * self.bump_scale() * self.kernel.sup_norm()).sqrt();
        Ok(DiffusionModel::new(
            format!("hypothesis:{j}"),
            Arc::new(crate::model::TermSum(vec![])),
            Arc::new(HypothesisSigma { set: self.clone(), j }),
            1.0,
            k1,
        )
        .with_zero_drift())
    }
}

/// sigma_j = sqrt(sigma_j^2) as a model coefficient.
#[derive(Debug, Clone)]
pub struct HypothesisSigma {
    pub set: Arc<HypothesisSet>,
    pub j: usize,
}

impl Coefficient for HypothesisSigma {
    fn eval(&self, x: f64) -> [f64; 3] {
        let s = self.set.sigma_sq_jet(self.j, x);
        let v = s.value().sqrt();
        let d1 = s.derivative(1) / (2.0 * v);
        let d2 = (s.derivative(2) - 2.0 * d1 * d1) / (2.0 * v);
        [v, d1, d2]
    }

    fn value(&self, x: f64) -> f64 {
        self.set.sigma_sq(self.j, x).sqrt()
    }
}

/// Builds M_target + 1 codewords with pairwise distance >= ceil(m / 8) by
/// random search, falling back to a greedy sweep of all 2^m words for
/// m <= 24. The result is verified exhaustively before it is returned.
pub fn build_codebook(m: usize, m_target: usize, seed: u64) -> Result<Vec<Vec<u8>>> {
    let d = m.div_ceil(8);
    let guaranteed = 2f64.powf(m as f64 / 8.0);
    let infeasible = Error::CodebookInfeasible { requested: m_target, m, min_distance: d };
    if m_target == 0 || m_target as f64 > guaranteed {
        return Err(infeasible);
    }
    let dist = |a: &[u8], b: &[u8]| a.iter().zip(b).filter(|(x, y)| x != y).count();
    let mut words: Vec<Vec<u8>> = vec![vec![0; m]];
    let mut rng = stream(seed, domain::CODEBOOK, 0);
    let mut attempts = 0usize;
    while words.len() <= m_target && attempts < 10_000 * (m_target + 1) {
        attempts += 1;
        let w: Vec<u8> = (0..m).map(|_| rng.random_range(0..2u8)).collect();
        if words.iter().all(|v| dist(v, &w) >= d) {
            words.push(w);
        }
    }
    if words.len() <= m_target && m <= 24 {
        words.truncate(1);
        for code in 1u32..(1u32 << m) {
            let w: Vec<u8> = (0..m).map(|i| ((code >> (m - 1 - i)) & 1) as u8).collect();
            if words.iter().all(|v| dist(v, &w) >= d) {
                words.push(w);
                if words.len() > m_target {
                    break;
                }
            }
        }
    }
    if words.len() <= m_target {
        return Err(infeasible);
    }
    for i in 0..words.len() {
        for j in 0..i {
            if dist(&words[i], &words[j]) < d {
                return Err(infeasible);
            }
        }
    }
    Ok(words)
}

pub fn build_hypotheses(config: HypothesisConfig, m_target: usize, seed: u64) -> Result<HypothesisSet> {
    config.validate()?;
    let words = build_codebook(config.m, m_target, seed)?;
    HypothesisSet::from_codewords(config, words)
}

#[derive(Debug, Clone, Serialize)]
pub struct PairDistance {
    pub j: usize,
    pub l: usize,
    pub hamming: usize,
    /// ||sigma_j^2 - sigma_l^2|| on [A, B] by adaptive quadrature.
    pub quadrature: f64,
    /// sqrt((B - A) Gamma^2 R^2 dilation^2 ||K||^2 h^(2 beta + 1) hamming).
    pub analytic: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeparationReport {
    pub pairs: Vec<PairDistance>,
    pub min_distance: f64,
    pub min_analytic: f64,
    pub single_bit_distance: f64,
    /// sqrt(ceil(m / 8)) times the single-bit distance.
    pub hamming_floor: f64,
    pub max_rel_error: f64,
    pub kernel_l2_sq: f64,
    pub c0: f64,
    #[serde(rename = "N")]
    pub n_paths: usize,
    pub n: usize,
    pub lambda0: f64,
    /// 2 s with s = Lambda0 (Nn)^(-beta / (2 beta + 1)).
    pub two_s: f64,
    pub separated: bool,
}

/// m = ceil(c0 (Nn)^(1 / (2 beta + 1))), the bump count tied to c0.
pub fn separation_dimension(c0: f64, n_paths: usize, n: usize, beta: f64) -> usize {
    ((c0 * ((n_paths * n) as f64).powf(1.0 / (2.0 * beta + 1.0))) - 1e-9).ceil().max(1.0) as usize
}

pub fn pairwise_separation(set: &HypothesisSet, c0: f64, n_paths: usize, n: usize) -> Result<SeparationReport> {
    let cfg = &set.config;
    let knorm = set.kernel.l2_norm_sq()?;
    let unit = set.width() * (set.gamma * cfg.r * cfg.dilation).powi(2) * knorm * set.h.powf(2.0 * cfg.beta + 1.0);
    let cells: Vec<(f64, f64)> = (0..cfg.m)
        .map(|k| (cfg.a + set.width() * k as f64 * set.h, cfg.a + set.width() * (k + 1) as f64 * set.h))
        .collect();
    let count = set.codewords.len();
    let mut pairs = Vec::new();
    for j in 0..count {
        for l in (j + 1)..count {
            let mut total = 0.0;
            for &(lo, hi) in &cells {
                total += quadrature::adaptive(lo, hi, 1e-30, 1e-12, 2000, |x| {
                    (set.sigma_sq(j, x) - set.sigma_sq(l, x)).powi(2)
                })?;
            }
            let hamming = set.hamming(j, l);
            let quad = total.sqrt();
            let analytic = (unit * hamming as f64).sqrt();
            let rel_error = if analytic > 0.0 { (quad - analytic).abs() / analytic } else { quad };
            pairs.push(PairDistance { j, l, hamming, quadrature: quad, analytic, rel_error });
        }
    }
    let min_distance = pairs.iter().map(|p| p.quadrature).fold(f64::INFINITY, f64::min);
    let min_analytic = pairs.iter().map(|p| p.analytic).fold(f64::INFINITY, f64::min);
    let max_rel_error = pairs.iter().map(|p| p.rel_error).fold(0.0, f64::max);
    let lambda0 = cfg.r * set.gamma * knorm.sqrt() * set.width().sqrt() / (2f64.powf(cfg.beta + 1.0) * c0.powf(cfg.beta));
    let two_s = 2.0 * lambda0 * ((n_paths * n) as f64).powf(-cfg.beta / (2.0 * cfg.beta + 1.0));
    Ok(SeparationReport {
        pairs,
        min_distance,
        min_analytic,
        single_bit_distance: unit.sqrt(),
        hamming_floor: (set.min_hamming as f64 * unit).sqrt(),
        max_rel_error,
        kernel_l2_sq: knorm,
        c0,
        n_paths,
        n,
        lambda0,
        two_s,
        separated: min_distance >= two_s,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HolderReport {
    pub beta: f64,
    pub d: usize,
    pub exponent: f64,
    #[serde(rename = "R")]
    pub r: f64,
    /// Quotient per hypothesis.
    pub quotients: Vec<f64>,
    pub max_quotient: f64,
    /// Quotient limit allowing for probe discreteness.
    pub limit: f64,
    pub within: bool,
}

/// sup over probe pairs of |f^(d)(x) - f^(d)(y)| / |x - y|^(beta - d) for
/// each f = sigma_j^2, with d the largest integer below beta.
pub fn holder_membership(set: &HypothesisSet, probe: &ProbeGrid) -> Result<HolderReport> {
    let beta = set.config.beta;
    let d = holder_order(beta);
    if d > 4 {
        return Err(invalid("derivatives above order 4 are not coded"));
    }
    let exponent = beta - d as f64;
    let xs: Vec<f64> = probe.points().collect();
    let quotients: Vec<f64> = (0..set.codewords.len())
        .into_par_iter()
        .map(|j| {
            if set.is_trivial(j) {
                return 0.0;
            }
            let f: Vec<f64> = xs.iter().map(|&x| set.sigma_sq_jet(j, x).derivative(d)).collect();
            let mut q = 0.0f64;
            for a in 0..xs.len() {
                for b in (a + 1)..xs.len() {
                    let dx = (xs[b] - xs[a]).abs();
                    if dx > 0.0 {
                        q = q.max((f[b] - f[a]).abs() / dx.powf(exponent));
                    }
                }
            }
            q
        })
        .collect();
    let max_quotient = quotients.iter().cloned().fold(0.0, f64::max);
    let limit = 1.05 * set.config.r;
    Ok(HolderReport { beta, d, exponent, r: set.config.r, quotients, max_quotient, limit, within: max_quotient <= limit })
}

/// Limit of the Hoelder quotient of one bump on a fine probe when beta is an
/// integer: Gamma dilation R h^beta sup|K^(beta)| / (h (B - A))^beta. The
/// family is in the class exactly when this is <= R; note that h cancels.
pub fn analytic_holder_quotient(set: &HypothesisSet, points: usize) -> f64 {
    let cfg = &set.config;
    let d = holder_order(cfg.beta) + 1;
    let sup = set.kernel.derivative_sup(d, points);
    set.gamma * set.bump_scale() * sup / (set.h * set.width()).powi(d as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KlOptions {
    /// Euler sub-steps per observation interval for the paths under P_j.
    #[serde(default = "default_kl_substeps")]
    pub substeps: usize,
    #[serde(default = "default_kl_bridges")]
    pub bridges: usize,
    #[serde(default = "default_kl_bridge_steps")]
    pub bridge_steps: usize,
    #[serde(default)]
    pub method: BridgeMethod,
}

fn default_kl_substeps() -> usize {
    64
}
fn default_kl_bridges() -> usize {
    2000
}
fn default_kl_bridge_steps() -> usize {
    32
}

impl Default for KlOptions {
    fn default() -> Self {
        Self {
            substeps: default_kl_substeps(),
            bridges: default_kl_bridges(),
            bridge_steps: default_kl_bridge_steps(),
            method: BridgeMethod::MonteCarlo,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KlRow {
    pub j: usize,
    /// Estimate of KL(P_j^N, P_0^N).
    pub kl: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KlReport {
    #[serde(rename = "N")]
    pub n_paths: usize,
    pub n: usize,
    pub mc_paths: usize,
    pub method: BridgeMethod,
    pub rows: Vec<KlRow>,
    /// (1/M) sum_j KL_j and its standard error.
    pub average: f64,
    pub average_se: f64,
    /// KL(P_0, P_0) through the same evaluator.
    pub kl_null: f64,
    #[serde(rename = "M")]
    pub alternatives: usize,
    /// (1/16) log M.
    pub budget: f64,
    pub within_budget: bool,
    /// Tsybakov's lower bound on the testing error probability with alpha = 1/16.
    pub tsybakov_bound: Option<f64>,
}

/// sqrt(M) / (1 + sqrt(M)) (1 - 2 alpha - sqrt(2 alpha / log M)) for M >= 2.
pub fn tsybakov_bound(m: usize, alpha: f64) -> Option<f64> {
    if m < 2 {
        return None;
    }
    let s = (m as f64).sqrt();
    Some(s / (1.0 + s) * (1.0 - 2.0 * alpha - (2.0 * alpha / (m as f64).ln()).sqrt()))
}

fn log_gauss(tau: f64, x: f64, y: f64) -> f64 {
    -0.5 * (2.0 * PI * tau).ln() - (y - x).powi(2) / (2.0 * tau)
}

/// Estimate of KL(P_j, P_0) for one path, with its standard error, from
/// `mc_paths` paths simulated under P_j.
fn kl_single(
    set: &Arc<HypothesisSet>,
    j: usize,
    n: usize,
    mc_paths: usize,
    opts: &KlOptions,
    seed: u64,
) -> Result<(f64, f64)> {
    let model = set.model(j)?;
    let sample = simulate_sample(&model, mc_paths, n, opts.substeps, derive_seed(seed, domain::KL, j as u64))?;
    let tau = sample.delta;
    let trivial = set.is_trivial(j);
    let transforms = if trivial { None } else { Some(DensityTransforms::new(&model)?) };
    let bridge = BridgeOptions { bridges: opts.bridges, steps: opts.bridge_steps, method: opts.method };
    let bridge_seed = derive_seed(seed, domain::BRIDGE, j as u64);
    let ratios: Vec<f64> = (0..mc_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(bridge_seed, domain::BRIDGE, i as u64);
            let p = sample.path(i);
            let mut total = 0.0;
            for k in 0..n {
                let (x, y) = (p[k], p[k + 1]);
                let lj = match &transforms {
                    Some(t) => t.log_density_driftless(tau, x, y, &bridge, &mut rng),
                    None => log_gauss(tau, x, y),
                };
                total += lj - log_gauss(tau, x, y);
            }
            total
        })
        .collect();
    Ok(crate::risk::mean_se(&ratios))
}

/// Monte Carlo estimate of KL(P_j^N, P_0^N) = N KL(P_j, P_0) for every
/// alternative, evaluated with transition densities from the density module.
pub fn kl_budget(
    set: &HypothesisSet,
    n_paths: usize,
    n: usize,
    mc_paths: usize,
    opts: &KlOptions,
    seed: u64,
) -> Result<KlReport> {
    if n_paths == 0 || n < 1 || mc_paths < 2 {
        return Err(invalid("need N >= 1, n >= 1 and at least 2 Monte Carlo paths"));
    }
    let set = Arc::new(set.clone());
    let nf = n_paths as f64;
    let estimates: Vec<Result<(f64, f64)>> =
        (0..set.codewords.len()).into_par_iter().map(|j| kl_single(&set, j, n, mc_paths, opts, seed)).collect();
    let mut per = Vec::with_capacity(estimates.len());
    for e in estimates {
        per.push(e?);
    }
    let rows: Vec<KlRow> =
        per.iter().enumerate().skip(1).map(|(j, &(k, se))| KlRow { j, kl: nf * k, se: nf * se }).collect();
    let alternatives = set.alternatives();
    let mf = alternatives.max(1) as f64;
    let average = rows.iter().map(|r| r.kl).sum::<f64>() / mf;
    let average_se = rows.iter().map(|r| r.se * r.se).sum::<f64>().sqrt() / mf;
    let budget = (alternatives as f64).ln() / 16.0;
    Ok(KlReport {
        n_paths,
        n,
        mc_paths,
        method: opts.method,
        rows,
        average,
        average_se,
        kl_null: nf * per[0].0,
        alternatives,
        budget,
        within_budget: average <= budget + 3.0 * average_se,
        tsybakov_bound: tsybakov_bound(alternatives, 1.0 / 16.0),
    })
}

/// Columns j, kl, se.
pub fn write_kl_csv(report: &KlReport, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "j,kl,se")?;
    for r in &report.rows {
        writeln!(w, "{},{},{}", r.j, r.kl, r.se)?;
    }
    w.flush()?;
    Ok(())
}
