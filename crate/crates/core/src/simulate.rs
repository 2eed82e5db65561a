//! Euler-Maruyama simulation of N independent paths on [0, 1], observed at
//! step 1/n.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::fit_slope;
use crate::error::{invalid, Error, Result};
use crate::model::DiffusionModel;
use crate::rng::{domain, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Euler,
    Milstein,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    pub substeps: usize,
    pub scheme: Scheme,
    /// Keep the fine grid and its Brownian increments (needed by the residual
    /// decomposition).
    pub keep_fine: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { substeps: 64, scheme: Scheme::Euler, keep_fine: false }
    }
}

/// Fine-grid states and increments, row-major by path.
#[derive(Debug, Clone, PartialEq)]
pub struct FineGrid {
    /// N x (n * substeps + 1) states.
    pub x: Vec<f64>,
    /// N x (n * substeps) Brownian increments.
    pub dw: Vec<f64>,
}

/// N paths observed at times k / n, k = 0..=n.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub n_paths: usize,
    pub n: usize,
    pub delta: f64,
    pub seed: u64,
    pub substeps: usize,
    /// N x (n + 1), row-major.
    pub values: Vec<f64>,
    pub fine: Option<FineGrid>,
}

impl PathSample {
    pub fn path(&self, j: usize) -> &[f64] {
        &self.values[j * (self.n + 1)..(j + 1) * (self.n + 1)]
    }

    pub fn fine_path(&self, j: usize) -> Option<(&[f64], &[f64])> {
        let f = self.fine.as_ref()?;
        let steps = self.n * self.substeps;
        Some((&f.x[j * (steps + 1)..(j + 1) * (steps + 1)], &f.dw[j * steps..(j + 1) * steps]))
    }

    /// Builds a sample from given rows (each of length n + 1).
    pub fn from_rows(rows: &[Vec<f64>], seed: u64) -> Result<Self> {
        let n_paths = rows.len();
        if n_paths == 0 {
            return Err(invalid("sample needs at least one path"));
        }
        let len = rows[0].len();
        if len < 3 || rows.iter().any(|r| r.len() != len) {
            return Err(invalid("rows must share a length of at least 3"));
        }
        let n = len - 1;
        Ok(Self {
            n_paths,
            n,
            delta: 1.0 / n as f64,
            seed,
            substeps: 1,
            values: rows.concat(),
            fine: None,
        })
    }

    /// Drops the fine grid (keeps only the observations).
    pub fn without_fine(mut self) -> Self {
        self.fine = None;
        self
    }
}

fn check_shape(n_paths: usize, n: usize, substeps: usize) -> Result<()> {
    if n_paths < 1 {
        return Err(invalid("N must be >= 1"));
    }
    if n < 2 {
        return Err(invalid("n must be >= 2"));
    }
    if substeps < 1 {
        return Err(invalid("substeps must be >= 1"));
    }
    Ok(())
}

/// Euler-Maruyama sample with the default scheme and no retained fine grid.
pub fn simulate_sample(
    model: &DiffusionModel,
    n_paths: usize,
    n: usize,
    substeps: usize,
    seed: u64,
) -> Result<PathSample> {
    simulate_sample_with(
        model,
        n_paths,
        n,
        &SimOptions { substeps, ..SimOptions::default() },
        seed,
    )
}

pub fn simulate_sample_with(
    model: &DiffusionModel,
    n_paths: usize,
    n: usize,
    opts: &SimOptions,
    seed: u64,
) -> Result<PathSample> {
    check_shape(n_paths, n, opts.substeps)?;
    let model = model.centered();
    let s = opts.substeps;
    let mut values = vec![0.0; n_paths * (n + 1)];
    let mut fine = opts.keep_fine.then(|| FineGrid {
        x: vec![0.0; n_paths * (n * s + 1)],
        dw: vec![0.0; n_paths * n * s],
    });
    let results: Vec<Result<()>> = match fine.as_mut() {
        None => values
            .par_chunks_mut(n + 1)
            .enumerate()
            .map(|(j, row)| {
                let mut rng = stream(seed, domain::SIMULATION, j as u64);
                simulate_path_into(&model, n, s, opts.scheme, &mut rng, row, None).map_err(|e| at_path(e, j))
            })
            .collect(),
        Some(f) => values
            .par_chunks_mut(n + 1)
            .zip(f.x.par_chunks_mut(n * s + 1))
            .zip(f.dw.par_chunks_mut(n * s))
            .enumerate()
            .map(|(j, ((row, fx), fdw))| {
                let mut rng = stream(seed, domain::SIMULATION, j as u64);
                simulate_path_into(&model, n, s, opts.scheme, &mut rng, row, Some((fx, fdw)))
                    .map_err(|e| at_path(e, j))
            })
            .collect(),
    };
    results.into_iter().collect::<Result<()>>()?;
    Ok(PathSample { n_paths, n, delta: 1.0 / n as f64, seed, substeps: s, values, fine })
}

fn at_path(e: Error, j: usize) -> Error {
    match e {
        Error::SimulationDiverged { step, .. } => Error::SimulationDiverged { path: j, step },
        other => other,
    }
}

/// Simulates one path from 0 into `out` (length n + 1). If `fine` is given,
/// the fine states and increments are stored there as well.
pub fn simulate_path_into<R: Rng + ?Sized>(
    model: &DiffusionModel,
    n: usize,
    substeps: usize,
    scheme: Scheme,
    rng: &mut R,
    out: &mut [f64],
    mut fine: Option<(&mut [f64], &mut [f64])>,
) -> Result<()> {
    let h = 1.0 / (n * substeps) as f64;
    let sqrt_h = h.sqrt();
    let mut x = 0.0;
    out[0] = x;
    if let Some((fx, _)) = fine.as_mut() {
        fx[0] = x;
    }
    let mut step = 0;
    for k in 0..n {
        for _ in 0..substeps {
            let z: f64 = rng.sample(StandardNormal);
            let dw = sqrt_h * z;
            x = match scheme {
                Scheme::Euler => x + model.b(x) * h + model.sigma(x) * dw,
                Scheme::Milstein => {
                    let s = model.sigma_eval(x);
                    x + model.b(x) * h + s[0] * dw + 0.5 * s[0] * s[1] * (dw * dw - h)
                }
            };
            if !x.is_finite() {
                return Err(Error::SimulationDiverged { path: 0, step });
            }
            step += 1;
            if let Some((fx, fdw)) = fine.as_mut() {
                fx[step] = x;
                fdw[step - 1] = dw;
            }
        }
        out[k + 1] = x;
    }
    Ok(())
}

/// One row of the strong-error table: RMS distance between the terminal
/// values of two consecutive refinement levels driven by the same noise.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorRow {
    pub substeps_coarse: usize,
    pub substeps_fine: usize,
    /// Step size of the coarse level.
    pub step: f64,
    pub rms: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorTable {
    pub n: usize,
    pub replicates: usize,
    pub rows: Vec<ErrorRow>,
    /// Slope of log rms against log step; `None` when some level pair agrees exactly.
    pub slope: Option<f64>,
    pub slope_se: Option<f64>,
}

/// Self-refinement strong-error probe of the Euler scheme.
pub fn strong_error_probe(
    model: &DiffusionModel,
    n: usize,
    substeps_list: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<ErrorTable> {
    if replicates < 100 {
        return Err(invalid(format!("strong_error_probe needs >= 100 replicates (got {replicates})")));
    }
    if substeps_list.len() < 2 || substeps_list.windows(2).any(|w| w[0] >= w[1]) || substeps_list[0] < 1 {
        return Err(invalid("substeps_list must be increasing with at least two entries"));
    }
    let finest = *substeps_list.last().unwrap();
    if substeps_list.iter().any(|s| finest % s != 0) {
        return Err(invalid("every substeps entry must divide the finest one"));
    }
    if n < 1 {
        return Err(invalid("n must be >= 1"));
    }
    let model = model.centered();
    let levels = substeps_list.len();
    let terminals: Vec<Result<Vec<f64>>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, domain::SIMULATION, r as u64);
            let total = n * finest;
            let hf = 1.0 / total as f64;
            let dw: Vec<f64> = (0..total).map(|_| hf.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
            substeps_list
                .iter()
                .map(|&s| {
                    let block = finest / s;
                    let h = 1.0 / (n * s) as f64;
                    let mut x = 0.0f64;
                    for (i, chunk) in dw.chunks_exact(block).enumerate() {
                        let w: f64 = chunk.iter().sum();
                        x += model.b(x) * h + model.sigma(x) * w;
                        if !x.is_finite() {
                            return Err(Error::SimulationDiverged { path: r, step: i });
                        }
                    }
                    Ok(x)
                })
                .collect()
        })
        .collect();
    let terminals = terminals.into_iter().collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(levels - 1);
    for l in 0..levels - 1 {
        // Level pairs that differ only by the summation order of the shared
        // increments count as exact.
        let sq: Vec<f64> = terminals
            .iter()
            .map(|t| {
                let d = t[l] - t[l + 1];
                if d.abs() <= 1e-13 * t[l].abs().max(1.0) {
                    0.0
                } else {
                    d * d
                }
            })
            .collect();
        let mean = sq.iter().sum::<f64>() / replicates as f64;
        let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (replicates - 1) as f64;
        let rms = mean.sqrt();
        // Delta method for the square root.
        let se = if rms > 0.0 { (var / replicates as f64).sqrt() / (2.0 * rms) } else { 0.0 };
        rows.push(ErrorRow {
            substeps_coarse: substeps_list[l],
            substeps_fine: substeps_list[l + 1],
            step: 1.0 / (n * substeps_list[l]) as f64,
            rms,
            se,
        });
    }
    let (slope, slope_se) = if rows.len() >= 3 && rows.iter().all(|r| r.rms > 0.0) {
        let pts: Vec<(f64, f64, f64)> = rows
            .iter()
            .map(|r| {
                let rel = (r.se / r.rms).max(1e-12);
                (r.step.ln(), r.rms.ln(), 1.0 / (rel * rel))
            })
            .collect();
        let fit = fit_slope(&pts)?;
        (Some(fit.slope), Some(fit.se))
    } else {
        (None, None)
    };
    Ok(ErrorTable { n, replicates, rows, slope, slope_se })
}

const MAGIC: &[u8; 4] = b"DCPS";
const VERSION: u32 = 1;

/// Binary layout, all little-endian:
/// magic `DCPS`, u32 version, u64 N, u64 n, f64 delta, u64 seed, u64 substeps,
/// then N * (n + 1) f64 values row-major by path.
pub fn write_binary(sample: &PathSample, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(sample.n_paths as u64).to_le_bytes())?;
    w.write_all(&(sample.n as u64).to_le_bytes())?;
    w.write_all(&sample.delta.to_le_bytes())?;
    w.write_all(&sample.seed.to_le_bytes())?;
    w.write_all(&(sample.substeps as u64).to_le_bytes())?;
    for v in &sample.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary(path: &Path) -> Result<PathSample> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a path sample file".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) != VERSION {
        return Err(Error::Format("unsupported path sample version".into()));
    }
    let mut b8 = [0u8; 8];
    let mut next = |r: &mut BufReader<std::fs::File>| -> Result<[u8; 8]> {
        r.read_exact(&mut b8)?;
        Ok(b8)
    };
    let n_paths = u64::from_le_bytes(next(&mut r)?) as usize;
    let n = u64::from_le_bytes(next(&mut r)?) as usize;
    let delta = f64::from_le_bytes(next(&mut r)?);
    let seed = u64::from_le_bytes(next(&mut r)?);
    let substeps = u64::from_le_bytes(next(&mut r)?) as usize;
    let count = n_paths
        .checked_mul(n + 1)
        .ok_or_else(|| Error::Format("sample dimensions overflow".into()))?;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(f64::from_le_bytes(next(&mut r)?));
    }
    check_shape(n_paths, n, substeps.max(1)).map_err(|e| Error::Format(e.to_string()))?;
    Ok(PathSample { n_paths, n, delta, seed, substeps, values, fine: None })
}

/// CSV layout: a header line `N,n,delta,seed,substeps`, one line with those
/// values, then one line per path with its n + 1 values.
pub fn write_csv(sample: &PathSample, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "N,n,delta,seed,substeps")?;
    writeln!(w, "{},{},{},{},{}", sample.n_paths, sample.n, sample.delta, sample.seed, sample.substeps)?;
    for j in 0..sample.n_paths {
        let row: Vec<String> = sample.path(j).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<PathSample> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut lines = r.lines();
    let bad = |m: &str| Error::Format(m.to_string());
    let header = lines.next().ok_or_else(|| bad("empty file"))??;
    if header.trim() != "N,n,delta,seed,substeps" {
        return Err(bad("unexpected CSV header"));
    }
    let meta = lines.next().ok_or_else(|| bad("missing metadata line"))??;
    let fields: Vec<&str> = meta.trim().split(',').collect();
    if fields.len() != 5 {
        return Err(bad("metadata line needs 5 fields"));
    }
    let parse_u = |s: &str| s.parse::<u64>().map_err(|_| bad("bad integer in metadata"));
    let n_paths = parse_u(fields[0])? as usize;
    let n = parse_u(fields[1])? as usize;
    let delta: f64 = fields[2].parse().map_err(|_| bad("bad delta"))?;
    let seed = parse_u(fields[3])?;
    let substeps = parse_u(fields[4])? as usize;
    let mut values = Vec::with_capacity(n_paths * (n + 1));
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let before = values.len();
        for v in line.split(',') {
            values.push(v.trim().parse::<f64>().map_err(|_| bad("bad value"))?);
        }
        if values.len() - before != n + 1 {
            return Err(bad("path row has the wrong length"));
        }
    }
    if values.len() != n_paths * (n + 1) {
        return Err(bad("path count does not match the header"));
    }
    Ok(PathSample { n_paths, n, delta, seed, substeps, values, fine: None })
}
