//! Regression pairs (X_k, U_k) with U_k = (X_{k+1} - X_k)^2 / delta, and the
//! decomposition of U_k - sigma^2(X_k) into martingale and remainder terms.

use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::DiffusionModel;
use crate::simulate::PathSample;

/// Nn pairs laid out (j, k) row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub n_paths: usize,
    pub n: usize,
    pub delta: f64,
}

impl RegressionData {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Same predictors, new responses.
    pub fn with_responses(&self, u: Vec<f64>) -> Result<Self> {
        if u.len() != self.x.len() {
            return Err(invalid("response length does not match the predictors"));
        }
        Ok(Self { u, ..self.clone() })
    }

    /// Builds data directly from pairs (for tests and external input).
    pub fn from_pairs(x: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        if x.len() != u.len() || x.is_empty() {
            return Err(invalid("x and u must be nonempty and of equal length"));
        }
        let n = x.len();
        Ok(Self { x, u, n_paths: 1, n, delta: 1.0 / n as f64 })
    }
}

pub fn build_regression(sample: &PathSample) -> Result<RegressionData> {
    if sample.n < 2 {
        return Err(invalid("n must be >= 2"));
    }
    let n = sample.n;
    let mut x = Vec::with_capacity(sample.n_paths * n);
    let mut u = Vec::with_capacity(sample.n_paths * n);
    for j in 0..sample.n_paths {
        let p = sample.path(j);
        for k in 0..n {
            x.push(p[k]);
            let d = p[k + 1] - p[k];
            u.push(d * d / sample.delta);
        }
    }
    Ok(RegressionData { x, u, n_paths: sample.n_paths, n, delta: sample.delta })
}

/// Columns j, k, x, u.
pub fn write_regression_csv(data: &RegressionData, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "j,k,x,u")?;
    for (i, (x, u)) in data.x.iter().zip(&data.u).enumerate() {
        writeln!(w, "{},{},{},{}", i / data.n, i % data.n, x, u)?;
    }
    w.flush()?;
    Ok(())
}

/// U - sigma^2(X) = zeta1 + zeta2 + zeta3 + r1 + r2 + r3, each of length Nn.
///
/// * zeta1 = ((int sigma dW)^2 - int sigma^2 ds) / delta
/// * zeta2 = (2 / delta) int ((k+1) delta - s) sigma' sigma^2 dW
/// * zeta3 = 2 b(X_k) int sigma dW
/// * r1 = (int b ds)^2 / delta
/// * r2 = (2 / delta) int (b(X_s) - b(X_k)) ds * int sigma dW
/// * r3 = (1 / delta) int ((k+1) delta - s) Phi(X_s) ds,
///   Phi = 2 b sigma' sigma + (sigma'' sigma + sigma'^2) sigma^2
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualDecomposition {
    pub zeta1: Vec<f64>,
    pub zeta2: Vec<f64>,
    pub zeta3: Vec<f64>,
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub r3: Vec<f64>,
    /// Phi at the left end point X_k of each interval.
    pub phi_values: Vec<f64>,
}

impl ResidualDecomposition {
    pub fn zeta_sum(&self, i: usize) -> f64 {
        self.zeta1[i] + self.zeta2[i] + self.zeta3[i]
    }

    pub fn remainder(&self, i: usize) -> f64 {
        self.r1[i] + self.r2[i] + self.r3[i]
    }

    /// ||sum of terms - (u - sigma^2(x))|| / ||u - sigma^2(x)|| in the
    /// Euclidean norm over all Nn entries.
    pub fn reconstruction_error(&self, data: &RegressionData, model: &DiffusionModel) -> f64 {
        let model = model.centered();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..data.len() {
            let target = data.u[i] - model.sigma_sq(data.x[i]);
            let diff = self.zeta_sum(i) + self.remainder(i) - target;
            num += diff * diff;
            den += target * target;
        }
        (num / den).sqrt()
    }
}

/// Phi = 2 b sigma' sigma + (sigma'' sigma + sigma'^2) sigma^2, the generator
/// applied to sigma^2.
pub fn phi(model: &DiffusionModel, x: f64) -> f64 {
    let s = model.sigma_eval(x);
    let b = model.b(x);
    2.0 * b * s[1] * s[0] + (s[2] * s[0] + s[1] * s[1]) * s[0] * s[0]
}

/// Fine-grid evaluation of the terms. Stochastic integrals are left-point
/// sums over the simulation's own increments; the time weight of fine step i
/// inside an interval of s steps is h (s - 1 - i), which is what summing the
/// discrete Ito expansion of sigma^2 produces.
pub fn decompose_residuals(sample: &PathSample, model: &DiffusionModel) -> Result<ResidualDecomposition> {
    if sample.fine.is_none() {
        return Err(Error::MissingFineGrid);
    }
    let model = model.centered();
    let n = sample.n;
    let s = sample.substeps;
    let delta = sample.delta;
    let h = delta / s as f64;
    let per_path: Vec<[Vec<f64>; 7]> = (0..sample.n_paths)
        .into_par_iter()
        .map(|j| {
            let (fx, fdw) = sample.fine_path(j).expect("fine grid present");
            let mut out: [Vec<f64>; 7] = std::array::from_fn(|_| Vec::with_capacity(n));
            for k in 0..n {
                let base = k * s;
                let x0 = fx[base];
                let b0 = model.b(x0);
                let mut int_sigma_dw = 0.0;
                let mut int_sigma2 = 0.0;
                let mut int_b = 0.0;
                let mut int_db = 0.0;
                let mut z2 = 0.0;
                let mut r3 = 0.0;
                for i in 0..s {
                    let x = fx[base + i];
                    let dw = fdw[base + i];
                    let sg = model.sigma_eval(x);
                    let b = model.b(x);
                    let w = h * (s - 1 - i) as f64;
                    int_sigma_dw += sg[0] * dw;
                    int_sigma2 += sg[0] * sg[0] * h;
                    int_b += b * h;
                    int_db += (b - b0) * h;
                    z2 += w * sg[1] * sg[0] * sg[0] * dw;
                    r3 += w * phi(&model, x) * h;
                }
                out[0].push((int_sigma_dw * int_sigma_dw - int_sigma2) / delta);
                out[1].push(2.0 * z2 / delta);
                out[2].push(2.0 * b0 * int_sigma_dw);
                out[3].push(int_b * int_b / delta);
                out[4].push(2.0 * int_db * int_sigma_dw / delta);
                out[5].push(r3 / delta);
                out[6].push(phi(&model, x0));
            }
            out
        })
        .collect();
    let mut parts: [Vec<f64>; 7] = std::array::from_fn(|_| Vec::with_capacity(sample.n_paths * n));
    for p in per_path {
        for (dst, src) in parts.iter_mut().zip(p) {
            dst.extend(src);
        }
    }
    let [zeta1, zeta2, zeta3, r1, r2, r3, phi_values] = parts;
    Ok(ResidualDecomposition { zeta1, zeta2, zeta3, r1, r2, r3, phi_values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_pairs() {
        let s = PathSample::from_rows(&[vec![0.0, 1.0, 1.0]], 0).unwrap();
        let d = build_regression(&s).unwrap();
        assert_eq!(d.u, vec![2.0, 0.0]);
        assert_eq!(d.x, vec![0.0, 1.0]);
    }

    #[test]
    fn missing_fine_grid_is_reported() {
        let s = PathSample::from_rows(&[vec![0.0, 1.0, 1.0]], 0).unwrap();
        assert!(matches!(
            decompose_residuals(&s, &DiffusionModel::constant_unit()),
            Err(Error::MissingFineGrid)
        ));
    }
}
