//! Monte Carlo estimates of the Gram matrix Psi_m, its conditioning along
//! growing intervals, and the norm-equivalence event.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{basis_norms, default_probe, BasisSpec};
use crate::error::{invalid, Result};
use crate::model::{growing_half_width, DiffusionModel};
use crate::quadrature;
use crate::risk::BasisRule;
use crate::rng::{derive_seed, domain};
use crate::simulate::{simulate_sample, PathSample};

const BATCH: usize = 1000;

#[derive(Debug, Clone, Serialize)]
pub struct GramReport {
    pub m: usize,
    pub n: usize,
    pub mc_paths: usize,
    /// Row-major m x m estimate.
    pub psi: Vec<Vec<f64>>,
    /// Entrywise Monte Carlo standard errors.
    pub se: Vec<Vec<f64>>,
    pub min_eig: f64,
    pub max_eig: f64,
    pub op_norm_inverse: f64,
    #[serde(rename = "L_m")]
    pub l_m: f64,
    pub product: f64,
    pub rank_deficient: bool,
}

impl GramReport {
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.m, |i, j| self.psi[i][j])
    }
}

/// Per-path matrix (1/n) sum_{k<n} phi(X_k) phi(X_k)^T, accumulated into `out`.
fn path_gram(spec: &BasisSpec, path: &[f64], n: usize, out: &mut [f64]) -> Result<()> {
    let m = spec.dim();
    let mut ev = spec.evaluator()?;
    let mut vals = Vec::new();
    out.iter_mut().for_each(|v| *v = 0.0);
    let w = 1.0 / n as f64;
    for &x in &path[..n] {
        if let Some(start) = ev.nonzero(x, &mut vals) {
            for (a, va) in vals.iter().enumerate() {
                if *va == 0.0 {
                    continue;
                }
                let row = (start + a) * m;
                for (b, vb) in vals.iter().enumerate() {
                    out[row + start + b] += w * va * vb;
                }
            }
        }
    }
    Ok(())
}

/// Sample Gram matrix (1/(Nn)) sum_j sum_{k<n} phi(X^j_k) phi(X^j_k)^T.
pub fn sample_gram(spec: &BasisSpec, sample: &PathSample) -> Result<DMatrix<f64>> {
    let m = spec.dim();
    let mut total = vec![0.0; m * m];
    let mut buf = vec![0.0; m * m];
    for j in 0..sample.n_paths {
        path_gram(spec, sample.path(j), sample.n, &mut buf)?;
        total.iter_mut().zip(&buf).for_each(|(t, b)| *t += b);
    }
    let nf = sample.n_paths as f64;
    Ok(DMatrix::from_row_slice(m, m, &total).map(|v| v / nf))
}

/// Psi_m = E[(1/n) sum_k phi(X_k) phi(X_k)^T] from `mc_paths` simulated paths.
pub fn estimate_gram(
    model: &DiffusionModel,
    spec: &BasisSpec,
    n: usize,
    mc_paths: usize,
    seed: u64,
) -> Result<GramReport> {
    estimate_gram_with(model, spec, n, mc_paths, 16, seed)
}

pub fn estimate_gram_with(
    model: &DiffusionModel,
    spec: &BasisSpec,
    n: usize,
    mc_paths: usize,
    substeps: usize,
    seed: u64,
) -> Result<GramReport> {
    if mc_paths < 2 {
        return Err(invalid("need at least 2 Monte Carlo paths"));
    }
    spec.validate()?;
    let m = spec.dim();
    let mut sum = vec![0.0; m * m];
    let mut sum_sq = vec![0.0; m * m];
    let batches = mc_paths.div_ceil(BATCH);
    for b in 0..batches {
        let count = BATCH.min(mc_paths - b * BATCH);
        let sample = simulate_sample(model, count, n, substeps, derive_seed(seed, domain::GRAM, b as u64))?;
        let per: Vec<Result<Vec<f64>>> = (0..count)
            .into_par_iter()
            .map(|j| {
                let mut buf = vec![0.0; m * m];
                path_gram(spec, sample.path(j), n, &mut buf)?;
                Ok(buf)
            })
            .collect();
        for p in per {
            let p = p?;
            for ((s, q), v) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(&p) {
                *s += v;
                *q += v * v;
            }
        }
    }
    let nf = mc_paths as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let se: Vec<f64> = sum_sq
        .iter()
        .zip(&mean)
        .map(|(q, mu)| (((q - nf * mu * mu) / (nf - 1.0)).max(0.0) / nf).sqrt())
        .collect();
    let mat = DMatrix::from_fn(m, m, |i, j| 0.5 * (mean[i * m + j] + mean[j * m + i]));
    let eig = SymmetricEigen::new(mat.clone());
    let min_eig = eig.eigenvalues.min();
    let max_eig = eig.eigenvalues.max();
    let (l_m, _) = basis_norms(spec, &default_probe(spec))?;
    let op_norm_inverse = 1.0 / min_eig;
    let rows = |v: &[f64]| (0..m).map(|i| v[i * m..(i + 1) * m].to_vec()).collect::<Vec<_>>();
    Ok(GramReport {
        m,
        n,
        mc_paths,
        psi: (0..m).map(|i| (0..m).map(|j| mat[(i, j)]).collect()).collect(),
        se: rows(&se),
        min_eig,
        max_eig,
        op_norm_inverse,
        l_m,
        product: l_m * op_norm_inverse,
        rank_deficient: !(min_eig > 1e-12 * max_eig),
    })
}

/// A Gram-conditioning sweep over N with n = N, A_N = growth sqrt(log N)
/// and the basis given by `basis` on [-A_N, A_N].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSweep {
    pub basis: BasisRule,
    #[serde(rename = "N_list")]
    pub n_list: Vec<usize>,
    pub growth: f64,
    pub mc_paths: usize,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    /// Constants C and c of the conditioning bound, both unknown; 1 by default.
    #[serde(default = "one")]
    pub bound_c: f64,
    #[serde(default = "one")]
    pub bound_small_c: f64,
}

fn default_substeps() -> usize {
    16
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionRow {
    #[serde(rename = "N")]
    pub n_paths: usize,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "A_N")]
    pub half_width: f64,
    #[serde(rename = "L_m")]
    pub l_m: f64,
    pub min_eig: f64,
    pub op_norm_inverse: f64,
    pub product: f64,
    /// C (m log N / A_N) exp(S(A_N)^2 / (2 (1 - 1/log N)) + c A_N).
    pub bound_rhs: f64,
    /// product / (N / log^2 N).
    pub ratio: f64,
    pub rank_deficient: bool,
}

/// max(S(A), -S(-A)) = the larger of int_0^{+-A} du / sigma(u).
pub fn lamperti_half_width(model: &DiffusionModel, a: f64) -> Result<f64> {
    let m = model.centered();
    let right = quadrature::adaptive(0.0, a, 1e-14, 1e-12, 2000, |u| 1.0 / m.sigma(u))?;
    let left = quadrature::adaptive(-a, 0.0, 1e-14, 1e-12, 2000, |u| 1.0 / m.sigma(u))?;
    Ok(right.max(left))
}

pub fn bound_rhs(model: &DiffusionModel, m: usize, n_paths: usize, a_n: f64, c: f64, small_c: f64) -> Result<f64> {
    let log_n = (n_paths as f64).ln();
    let s = lamperti_half_width(model, a_n)?;
    Ok(c * m as f64 * log_n / a_n * (s * s / (2.0 * (1.0 - 1.0 / log_n)) + small_c * a_n).exp())
}

pub fn gram_condition_sweep(model: &DiffusionModel, sweep: &ConditionSweep, seed: u64) -> Result<Vec<ConditionRow>> {
    if sweep.n_list.windows(2).any(|w| w[0] >= w[1]) || sweep.n_list.iter().any(|&n| n < 3) {
        return Err(invalid("N_list must be increasing with every N >= 3"));
    }
    let mut rows = Vec::with_capacity(sweep.n_list.len());
    for (i, &n_paths) in sweep.n_list.iter().enumerate() {
        let n = n_paths;
        let a_n = growing_half_width(sweep.growth, n_paths);
        let spec = sweep.basis.spec(n_paths, n, -a_n, a_n)?;
        let g = estimate_gram_with(
            model,
            &spec,
            n,
            sweep.mc_paths,
            sweep.substeps,
            derive_seed(seed, domain::GRAM, 1_000_000 + i as u64),
        )?;
        let log_n = (n_paths as f64).ln();
        rows.push(ConditionRow {
            n_paths,
            n,
            m: g.m,
            half_width: a_n,
            l_m: g.l_m,
            min_eig: g.min_eig,
            op_norm_inverse: g.op_norm_inverse,
            product: g.product,
            bound_rhs: bound_rhs(model, g.m, n_paths, a_n, sweep.bound_c, sweep.bound_small_c)?,
            ratio: g.product / (n_paths as f64 / (log_n * log_n)),
            rank_deficient: g.rank_deficient,
        });
    }
    Ok(rows)
}

/// Columns N, n, m, A_N, L_m, min_eig, op_norm_inverse, product, bound_rhs, ratio.
pub fn write_condition_csv(rows: &[ConditionRow], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "N,n,m,A_N,L_m,min_eig,op_norm_inverse,product,bound_rhs,ratio")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.n_paths, r.n, r.m, r.half_width, r.l_m, r.min_eig, r.op_norm_inverse, r.product, r.bound_rhs, r.ratio
        )?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct EventReport {
    /// sup over the coefficient sphere of | ||h||_{n,N}^2 / ||h||_n^2 - 1 | per sample.
    pub deviations: Vec<f64>,
    pub violations: usize,
    pub violation_fraction: f64,
}

/// Deviation of each sample's Gram matrix from Psi_m in the Psi_m metric:
/// the spectral norm of Psi^-1/2 (Psi_sample - Psi) Psi^-1/2.
pub fn norm_equivalence_with(samples: &[PathSample], spec: &BasisSpec, gram: &GramReport) -> Result<EventReport> {
    if gram.rank_deficient {
        return Err(crate::error::Error::RankDeficient { min_eig: gram.min_eig, max_eig: gram.max_eig });
    }
    let eig = SymmetricEigen::new(gram.matrix());
    let inv_sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()))
        * eig.eigenvectors.transpose();
    let psi = gram.matrix();
    let deviations: Vec<f64> = samples
        .par_iter()
        .map(|s| {
            let d = sample_gram(spec, s)? - &psi;
            let t = &inv_sqrt * d * &inv_sqrt;
            let t = 0.5 * (&t + t.transpose());
            Ok(SymmetricEigen::new(t).eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs())))
        })
        .collect::<Result<_>>()?;
    let violations = deviations.iter().filter(|&&d| d > 0.5).count();
    Ok(EventReport { violation_fraction: violations as f64 / deviations.len().max(1) as f64, deviations, violations })
}

/// As `norm_equivalence_with`, estimating Psi_m from `mc_paths` fresh paths.
pub fn norm_equivalence_monitor(
    samples: &[PathSample],
    spec: &BasisSpec,
    model: &DiffusionModel,
    mc_paths: usize,
    seed: u64,
) -> Result<EventReport> {
    let n = samples.first().ok_or_else(|| invalid("no samples to monitor"))?.n;
    let gram = estimate_gram(model, spec, n, mc_paths, seed)?;
    norm_equivalence_with(samples, spec, &gram)
}

/// Columns sample, deviation, violated.
pub fn write_event_csv(report: &EventReport, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "sample,deviation,violated")?;
    for (i, d) in report.deviations.iter().enumerate() {
        writeln!(w, "{},{},{}", i, d, u8::from(*d > 0.5))?;
    }
    w.flush()?;
    Ok(())
}
