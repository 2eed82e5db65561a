//! B-spline and trigonometric bases on [A, B].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::ProbeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BasisKind {
    /// Degree-`degree` B-splines on `knots` equal knot intervals.
    Spline {
        #[serde(rename = "K")]
        knots: usize,
        degree: usize,
    },
    /// 1, f_1..f_D, g_1..g_D.
    Fourier {
        #[serde(rename = "D")]
        frequencies: usize,
    },
}

/// A finite basis (phi_0, ..., phi_{m-1}) on [A, B].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    #[serde(flatten)]
    pub kind: BasisKind,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    /// Fourier only: use the L2-orthonormal scaling 1/sqrt(B-A) instead of
    /// the 1/(B-A) factor.
    #[serde(default)]
    pub normalized: bool,
}

impl BasisSpec {
    pub fn spline(knots: usize, degree: usize, a: f64, b: f64) -> Result<Self> {
        let s = Self { kind: BasisKind::Spline { knots, degree }, a, b, normalized: false };
        s.validate()?;
        Ok(s)
    }

    pub fn fourier(frequencies: usize, a: f64, b: f64) -> Result<Self> {
        let s = Self { kind: BasisKind::Fourier { frequencies }, a, b, normalized: false };
        s.validate()?;
        Ok(s)
    }

    pub fn normalized(mut self, on: bool) -> Self {
        self.normalized = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a < self.b) || !self.a.is_finite() || !self.b.is_finite() {
            return Err(invalid(format!("basis interval needs A < B (got [{}, {}])", self.a, self.b)));
        }
        if let BasisKind::Spline { knots, .. } = self.kind {
            if knots < 1 {
                return Err(Error::DegenerateKnots(knots));
            }
        }
        Ok(())
    }

    /// Dimension m.
    pub fn dim(&self) -> usize {
        match self.kind {
            BasisKind::Spline { knots, degree } => knots + degree,
            BasisKind::Fourier { frequencies } => 2 * frequencies + 1,
        }
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.a && x <= self.b
    }

    /// Number of spline knot intervals (1 for Fourier).
    pub fn intervals(&self) -> usize {
        match self.kind {
            BasisKind::Spline { knots, .. } => knots,
            BasisKind::Fourier { .. } => 1,
        }
    }

    /// Spline knot vector u_{-M}, ..., u_{K+M}.
    pub fn knot_vector(&self) -> Vec<f64> {
        match self.kind {
            BasisKind::Spline { knots, degree } => (0..=knots + 2 * degree)
                .map(|i| {
                    if i <= degree {
                        self.a
                    } else if i >= knots + degree {
                        self.b
                    } else {
                        self.a + (i - degree) as f64 * self.width() / knots as f64
                    }
                })
                .collect(),
            BasisKind::Fourier { .. } => vec![self.a, self.b],
        }
    }

    /// Builds a reusable evaluator.
    pub fn evaluator(&self) -> Result<BasisEval> {
        self.validate()?;
        Ok(BasisEval::new(*self))
    }
}

/// Evaluates a basis with preallocated scratch space. Not `Sync`-shared:
/// clone one per thread.
#[derive(Debug, Clone)]
pub struct BasisEval {
    spec: BasisSpec,
    knots: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl BasisEval {
    fn new(spec: BasisSpec) -> Self {
        let deg = match spec.kind {
            BasisKind::Spline { degree, .. } => degree,
            BasisKind::Fourier { .. } => 0,
        };
        Self { spec, knots: spec.knot_vector(), left: vec![0.0; deg + 1], right: vec![0.0; deg + 1] }
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// Span index s with u[s] <= x < u[s+1] (last interval closed).
    fn span(&self, x: f64, knots: usize, degree: usize) -> usize {
        let t = &self.knots;
        let lo = degree;
        let hi = degree + knots - 1;
        let guess = ((x - self.spec.a) / self.spec.width() * knots as f64).floor();
        let mut s = if guess.is_finite() && guess > 0.0 { (guess as usize + degree).min(hi) } else { lo };
        while s > lo && x < t[s] {
            s -= 1;
        }
        while s < hi && x >= t[s + 1] {
            s += 1;
        }
        s
    }

    /// Nonzero B-spline values of degree `p` at span s into `out[0..=p]`
    /// (basis indices s - p ..= s).
    fn spline_values(&mut self, x: f64, s: usize, p: usize, out: &mut [f64]) {
        let Self { knots: t, left, right, .. } = self;
        out[0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[s + 1 - j];
            right[j] = t[s + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom != 0.0 { out[r] / denom } else { 0.0 };
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
    }

    /// Writes the potentially nonzero values at x into `vals` and returns the
    /// index of the first one; `None` when x is outside [A, B] for splines.
    pub fn nonzero(&mut self, x: f64, vals: &mut Vec<f64>) -> Option<usize> {
        vals.clear();
        match self.spec.kind {
            BasisKind::Spline { knots, degree } => {
                if !self.spec.contains(x) {
                    return None;
                }
                let s = self.span(x, knots, degree);
                vals.resize(degree + 1, 0.0);
                self.spline_values(x, s, degree, vals);
                Some(s - degree)
            }
            BasisKind::Fourier { frequencies } => {
                vals.resize(2 * frequencies + 1, 0.0);
                self.fourier_values(x, frequencies, vals);
                Some(0)
            }
        }
    }

    fn fourier_scales(&self) -> (f64, f64) {
        let w = self.spec.width();
        if self.spec.normalized {
            (1.0 / w.sqrt(), (2.0 / w).sqrt())
        } else {
            (1.0, 2f64.sqrt() / w)
        }
    }

    fn fourier_values(&self, x: f64, d: usize, out: &mut [f64]) {
        let (c0, c) = self.fourier_scales();
        let theta = 2.0 * PI * (x - self.spec.a) / self.spec.width();
        out[0] = c0;
        for l in 1..=d {
            let (sn, cs) = (l as f64 * theta).sin_cos();
            out[l] = c * cs;
            out[d + l] = c * sn;
        }
    }

    /// (phi_0(x), ..., phi_{m-1}(x)).
    pub fn eval(&mut self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out);
        out
    }

    pub fn eval_into(&mut self, x: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut vals = Vec::new();
        if let Some(start) = self.nonzero(x, &mut vals) {
            out[start..start + vals.len()].copy_from_slice(&vals);
        }
    }

    /// (phi_0'(x), ..., phi_{m-1}'(x)).
    pub fn eval_derivative(&mut self, x: f64) -> Vec<f64> {
        let m = self.dim();
        let mut out = vec![0.0; m];
        match self.spec.kind {
            BasisKind::Spline { knots, degree } => {
                if !self.spec.contains(x) || degree == 0 {
                    return out;
                }
                let s = self.span(x, knots, degree);
                let mut low = vec![0.0; degree];
                self.spline_values(x, s, degree - 1, &mut low);
                // low[r] is B_{s-degree+1+r, degree-1}.
                let t = &self.knots;
                let p = degree as f64;
                let first = s + 1 - degree;
                let term = |idx: usize| if idx >= first && idx <= s { low[idx - first] } else { 0.0 };
                for i in s - degree..=s {
                    let d1 = t[i + degree] - t[i];
                    let d2 = t[i + degree + 1] - t[i + 1];
                    let a = if d1 > 0.0 { term(i) / d1 } else { 0.0 };
                    let b = if d2 > 0.0 { term(i + 1) / d2 } else { 0.0 };
                    out[i] = p * (a - b);
                }
            }
            BasisKind::Fourier { frequencies } => {
                let (_, c) = self.fourier_scales();
                let w = self.spec.width();
                let theta = 2.0 * PI * (x - self.spec.a) / w;
                for l in 1..=frequencies {
                    let k = 2.0 * PI * l as f64 / w;
                    let (sn, cs) = (l as f64 * theta).sin_cos();
                    out[l] = -c * k * sn;
                    out[frequencies + l] = c * k * cs;
                }
            }
        }
        out
    }
}

/// (phi_0(x), ..., phi_{m-1}(x)).
pub fn eval_basis(spec: &BasisSpec, x: f64) -> Result<Vec<f64>> {
    Ok(spec.evaluator()?.eval(x))
}

/// (phi_0'(x), ..., phi_{m-1}'(x)).
pub fn eval_basis_derivative(spec: &BasisSpec, x: f64) -> Result<Vec<f64>> {
    Ok(spec.evaluator()?.eval_derivative(x))
}

/// The default probe for L(m), R(m): 64 points per knot interval, and at
/// least 2049 points overall.
pub fn default_probe(spec: &BasisSpec) -> ProbeGrid {
    let pts = (64 * spec.intervals() + 1).max(2049).max(64 * spec.dim());
    ProbeGrid::new(spec.a, spec.b, pts)
}

/// (L(m), R(m)): sup over the probe of sum phi^2 and sum phi'^2.
pub fn basis_norms(spec: &BasisSpec, probe: &ProbeGrid) -> Result<(f64, f64)> {
    let mut ev = spec.evaluator()?;
    let mut l: f64 = 0.0;
    let mut r: f64 = 0.0;
    for x in probe.points() {
        l = l.max(ev.eval(x).iter().map(|v| v * v).sum());
        r = r.max(ev.eval_derivative(x).iter().map(|v| v * v).sum());
    }
    Ok((l, r))
}

/// Sum of coefficient-weighted basis functions.
pub fn combine(ev: &mut BasisEval, coeffs: &[f64], x: f64, scratch: &mut Vec<f64>) -> f64 {
    match ev.nonzero(x, scratch) {
        None => 0.0,
        Some(start) => scratch.iter().zip(&coeffs[start..]).map(|(p, c)| p * c).sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourier_values_and_derivatives() {
        let s = BasisSpec::fourier(1, 0.0, 1.0).unwrap();
        let v = eval_basis(&s, 0.25).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-15);
        assert!(v[1].abs() < 1e-15);
        assert!((v[2] - 2f64.sqrt()).abs() < 1e-15);
        let d = eval_basis_derivative(&s, 0.0).unwrap();
        assert_eq!(d[0], 0.0);
        assert!(d[1].abs() < 1e-15);
        assert!((d[2] - 2.0 * PI * 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn spline_endpoint_and_outside() {
        let s = BasisSpec::spline(4, 3, -1.0, 2.0).unwrap();
        let v = eval_basis(&s, -1.0).unwrap();
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(v[0], 1.0);
        let v = eval_basis(&s, 2.0).unwrap();
        assert_eq!(v[s.dim() - 1], 1.0);
        assert!(eval_basis(&s, 2.0 + 1e-12).unwrap().iter().all(|&x| x == 0.0));
        assert!(eval_basis(&s, -1.5).unwrap().iter().all(|&x| x == 0.0));
        assert!(matches!(BasisSpec::spline(0, 3, 0.0, 1.0), Err(Error::DegenerateKnots(0))));
    }

    #[test]
    fn knot_vector_layout() {
        let s = BasisSpec::spline(4, 2, 0.0, 1.0).unwrap();
        assert_eq!(s.knot_vector(), vec![0.0, 0.0, 0.0, 0.25, 0.5, 0.75, 1.0, 1.0, 1.0]);
        assert_eq!(s.dim(), 6);
    }

    #[test]
    fn constant_basis_norm() {
        let s = BasisSpec::fourier(0, 0.0, 4.0).unwrap();
        let (l, r) = basis_norms(&s, &default_probe(&s)).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(r, 0.0);
        let n = s.normalized(true);
        let (l, _) = basis_norms(&n, &default_probe(&n)).unwrap();
        assert_eq!(l, 0.25);
    }

    #[test]
    fn serde_layout() {
        let s = BasisSpec::spline(4, 3, -1.0, 1.0).unwrap();
        let j = serde_json::to_value(s).unwrap();
        assert_eq!(j["kind"], "spline");
        assert_eq!(j["K"], 4);
        assert_eq!(j["degree"], 3);
        assert_eq!(j["A"], -1.0);
        let back: BasisSpec = serde_json::from_value(j).unwrap();
        assert_eq!(back, s);
    }
}
