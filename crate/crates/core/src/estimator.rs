//! Least-squares projection estimator over an l2-ball of coefficients.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisEval, BasisSpec};
use crate::error::{invalid, Error, Result};
use crate::regression::RegressionData;

/// The coefficient ball sum a^2 <= m (B - A)^2 log(Nn).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintBall {
    pub radius_sq: f64,
    pub m: usize,
    #[serde(rename = "N")]
    pub n_paths: usize,
    pub n: usize,
}

impl ConstraintBall {
    pub fn new(spec: &BasisSpec, n_paths: usize, n: usize) -> Self {
        let m = spec.dim();
        let total = (n_paths * n) as f64;
        Self { radius_sq: m as f64 * spec.width().powi(2) * total.ln(), m, n_paths, n }
    }

    pub fn for_data(spec: &BasisSpec, data: &RegressionData) -> Self {
        Self::new(spec, data.n_paths, data.n)
    }
}

/// Fitted coefficients with everything needed to evaluate them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub basis: BasisSpec,
    pub coeffs: Vec<f64>,
    /// `None` when fitted without the ball constraint.
    pub constraint: Option<ConstraintBall>,
    pub active: bool,
    pub lambda: f64,
    pub truncation_level: Option<f64>,
    /// Display option: clip negative values at 0. Off by default.
    #[serde(default)]
    pub floor_at_zero: bool,
    /// Value of the least-squares contrast at the solution.
    pub contrast: f64,
    /// Basis functions with no data; their coefficients are 0.
    #[serde(default)]
    pub empty_columns: Vec<usize>,
}

impl Estimate {
    /// Zero coefficients on a basis.
    pub fn zero(basis: BasisSpec) -> Self {
        Self {
            basis,
            coeffs: vec![0.0; basis.dim()],
            constraint: None,
            active: false,
            lambda: 0.0,
            truncation_level: None,
            floor_at_zero: false,
            contrast: f64::NAN,
            empty_columns: vec![],
        }
    }

    pub fn evaluator(&self) -> Result<EstimateEval<'_>> {
        Ok(EstimateEval { est: self, basis: self.basis.evaluator()?, scratch: Vec::new() })
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        match self.evaluator() {
            Ok(mut e) => e.eval(x),
            Err(_) => f64::NAN,
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }
}

/// Reusable evaluator of an estimate (holds basis scratch space).
pub struct EstimateEval<'a> {
    est: &'a Estimate,
    basis: BasisEval,
    scratch: Vec<f64>,
}

impl EstimateEval<'_> {
    /// Raw sum of coefficients times basis values; 0 outside [A, B].
    pub fn raw(&mut self, x: f64) -> f64 {
        if !self.est.basis.contains(x) {
            return 0.0;
        }
        crate::basis::combine(&mut self.basis, &self.est.coeffs, x, &mut self.scratch)
    }

    pub fn eval(&mut self, x: f64) -> f64 {
        let mut v = self.raw(x);
        if let Some(t) = self.est.truncation_level {
            v = v.min(t);
        }
        if self.est.floor_at_zero {
            v = v.max(0.0);
        }
        v
    }
}

pub fn evaluate(est: &Estimate, x: f64) -> f64 {
    est.evaluate(x)
}

/// Clipped copy: evaluation is capped from above at log N.
pub fn truncate(est: &Estimate, n_paths: usize) -> Result<Estimate> {
    if n_paths < 3 {
        return Err(invalid(format!("truncation needs N >= 3 (got {n_paths})")));
    }
    let mut out = est.clone();
    out.truncation_level = Some((n_paths as f64).ln());
    Ok(out)
}

/// Empirical design: G = Phi^T Phi / (Nn), r = Phi^T u / (Nn). Rows with x
/// outside [A, B] contribute nothing but still count in Nn.
#[derive(Debug, Clone)]
pub struct Design {
    pub g: DMatrix<f64>,
    pub r: DVector<f64>,
    /// mean of u^2, so that contrast(a) = mean_u_sq - 2 a.r + a.G.a
    pub mean_u_sq: f64,
    pub rows: usize,
}

pub fn design(data: &RegressionData, spec: &BasisSpec) -> Result<Design> {
    if data.is_empty() {
        return Err(invalid("regression data is empty"));
    }
    let m = spec.dim();
    let mut ev = spec.evaluator()?;
    let mut g = vec![0.0; m * m];
    let mut r = vec![0.0; m];
    let mut vals = Vec::with_capacity(m);
    let mut usq = 0.0;
    for (&x, &u) in data.x.iter().zip(&data.u) {
        usq += u * u;
        if !spec.contains(x) {
            continue;
        }
        let Some(start) = ev.nonzero(x, &mut vals) else { continue };
        for (a, va) in vals.iter().enumerate() {
            r[start + a] += va * u;
            let row = (start + a) * m + start;
            for (b, vb) in vals.iter().enumerate().skip(a) {
                g[row + b] += va * vb;
            }
        }
    }
    let total = data.len() as f64;
    let mut gm = DMatrix::from_row_slice(m, m, &g);
    for i in 0..m {
        for j in i..m {
            let v = gm[(i, j)] / total;
            gm[(i, j)] = v;
            gm[(j, i)] = v;
        }
    }
    Ok(Design { g: gm, r: DVector::from_vec(r) / total, mean_u_sq: usq / total, rows: data.len() })
}

/// gamma(h) = (1/Nn) sum (U - h(X))^2 for h = sum a_l phi_l on [A, B], 0 outside.
pub fn contrast(data: &RegressionData, spec: &BasisSpec, coeffs: &[f64]) -> Result<f64> {
    let mut ev = spec.evaluator()?;
    let mut scratch = Vec::new();
    let mut s = 0.0;
    for (&x, &u) in data.x.iter().zip(&data.u) {
        let h = if spec.contains(x) { crate::basis::combine(&mut ev, coeffs, x, &mut scratch) } else { 0.0 };
        s += (u - h) * (u - h);
    }
    Ok(s / data.len() as f64)
}

impl Design {
    pub fn contrast(&self, a: &[f64]) -> f64 {
        let a = DVector::from_column_slice(a);
        self.mean_u_sq - 2.0 * a.dot(&self.r) + (a.transpose() * &self.g * &a)[(0, 0)]
    }

    /// Gradient of the contrast, 2 (G a - r).
    pub fn gradient(&self, a: &[f64]) -> DVector<f64> {
        let a = DVector::from_column_slice(a);
        (&self.g * a - &self.r) * 2.0
    }
}

/// Eigen-decomposed reduced problem over the non-empty columns.
struct Reduced {
    active_cols: Vec<usize>,
    vectors: DMatrix<f64>,
    values: Vec<f64>,
    /// Q^T r with null-space components removed.
    proj: Vec<f64>,
    max_eig: f64,
    min_eig: f64,
}

impl Reduced {
    fn new(d: &Design) -> Self {
        let m = d.g.nrows();
        let active_cols: Vec<usize> = (0..m).filter(|&i| d.g[(i, i)] > 0.0).collect();
        let k = active_cols.len();
        let sub = DMatrix::from_fn(k, k, |i, j| d.g[(active_cols[i], active_cols[j])]);
        let rsub = DVector::from_fn(k, |i, _| d.r[active_cols[i]]);
        let eig = SymmetricEigen::new(sub);
        let values: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
        let max_eig = values.iter().cloned().fold(0.0, f64::max);
        let min_eig = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let thresh = 1e-14 * max_eig;
        let proj_full = eig.eigenvectors.transpose() * rsub;
        let proj = proj_full
            .iter()
            .zip(&values)
            .map(|(c, &l)| if l > thresh { *c } else { 0.0 })
            .collect();
        Self { active_cols, vectors: eig.eigenvectors, values, proj, max_eig, min_eig }
    }

    fn singular(&self) -> bool {
        self.min_eig <= 1e-14 * self.max_eig
    }

    fn norm_sq(&self, lambda: f64) -> f64 {
        self.proj
            .iter()
            .zip(&self.values)
            .map(|(c, l)| if *c == 0.0 { 0.0 } else { (c / (l + lambda)).powi(2) })
            .sum()
    }

    fn solve(&self, lambda: f64, m: usize) -> Vec<f64> {
        let k = self.active_cols.len();
        let w = DVector::from_fn(k, |i, _| {
            let c = self.proj[i];
            if c == 0.0 {
                0.0
            } else {
                c / (self.values[i] + lambda)
            }
        });
        let a = &self.vectors * w;
        let mut out = vec![0.0; m];
        for (i, &col) in self.active_cols.iter().enumerate() {
            out[col] = a[i];
        }
        out
    }
}

/// ||a(lambda)||^2 for the ridge path a(lambda) = (G + lambda I)^-1 r on the
/// non-empty columns.
pub fn ridge_norm_sq(d: &Design, lambda: f64) -> f64 {
    Reduced::new(d).norm_sq(lambda)
}

/// Minimizes the contrast over the ball (or without it when `constraint` is `None`).
pub fn fit(data: &RegressionData, spec: &BasisSpec, constraint: Option<&ConstraintBall>) -> Result<Estimate> {
    let d = design(data, spec)?;
    fit_design(&d, spec, constraint)
}

pub fn fit_design(d: &Design, spec: &BasisSpec, constraint: Option<&ConstraintBall>) -> Result<Estimate> {
    let m = spec.dim();
    let red = Reduced::new(d);
    let empty_columns: Vec<usize> = (0..m).filter(|i| !red.active_cols.contains(i)).collect();
    let mut est = Estimate {
        basis: *spec,
        coeffs: vec![0.0; m],
        constraint: constraint.copied(),
        active: false,
        lambda: 0.0,
        truncation_level: None,
        floor_at_zero: false,
        contrast: d.mean_u_sq,
        empty_columns,
    };
    if red.active_cols.is_empty() || red.proj.iter().all(|&c| c == 0.0) {
        // No data in the support or zero response: the minimum-norm minimizer is 0.
        return Ok(est);
    }
    let radius = constraint.map(|c| c.radius_sq).unwrap_or(f64::INFINITY);
    let free_norm = red.norm_sq(0.0);
    if free_norm <= radius {
        if red.singular() {
            return Err(Error::SingularDesign { min_eig: red.min_eig, max_eig: red.max_eig });
        }
        est.coeffs = red.solve(0.0, m);
    } else {
        let mut hi = 1.0;
        let mut doublings = 0;
        while red.norm_sq(hi) > radius {
            hi *= 2.0;
            doublings += 1;
            if doublings > 2000 {
                return Err(invalid("ridge bracket did not close"));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let nm = red.norm_sq(mid);
            if nm > radius {
                lo = mid;
            } else {
                hi = mid;
                if radius - nm <= 1e-12 * radius {
                    break;
                }
            }
            if hi - lo <= 1e-16 * hi {
                break;
            }
        }
        est.coeffs = red.solve(hi, m);
        est.active = true;
        est.lambda = hi;
    }
    est.contrast = d.contrast(&est.coeffs);
    Ok(est)
}

/// Regimes of the dimension rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionRegime {
    /// m = c n^(1/(2 beta + 1)), N = 1.
    CompactSinglePath,
    /// m = c (Nn)^(1/(2 beta + 1)).
    CompactRepeated,
    /// K_N = c N^(2/(2 beta + 1)) / log^(5/2) N.
    GrowingInterval,
}

/// The unrounded rule value.
pub fn dimension_rule_raw(n_paths: f64, n: f64, beta: f64, regime: DimensionRegime, c: f64) -> f64 {
    let e = 1.0 / (2.0 * beta + 1.0);
    match regime {
        DimensionRegime::CompactSinglePath => c * n.powf(e),
        DimensionRegime::CompactRepeated => c * (n_paths * n).powf(e),
        DimensionRegime::GrowingInterval => c * n_paths.powf(2.0 * e) / n_paths.ln().powf(2.5),
    }
}

/// Ceiling of the rule value, at least 2. Values within 1e-9 above an
/// integer are treated as that integer so that exact powers are not bumped
/// by rounding.
pub fn dimension_rule(n_paths: usize, n: usize, beta: f64, regime: DimensionRegime, c: f64) -> Result<usize> {
    if !(beta >= 1.0) {
        return Err(invalid(format!("beta must be >= 1 (got {beta})")));
    }
    if regime == DimensionRegime::GrowingInterval && n_paths < 3 {
        return Err(invalid("the growing-interval rule needs N >= 3"));
    }
    let v = dimension_rule_raw(n_paths as f64, n as f64, beta, regime, c);
    Ok(((v - 1e-9).ceil().max(2.0)) as usize)
}
