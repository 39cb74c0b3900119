//! Stationary, isotropic, mean-zero Gaussian random potentials on periodic
//! boxes, with C² pointwise evaluation.

mod correlation;
mod spline;

pub use correlation::{Correlation, CorrelationKind, CorrelationModel, RadialValue};
pub use spline::QuinticSpline;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::OnceLock;

use crate::envelope::{self, EnvelopeHeader};
use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, Point};
use crate::potential::{FieldSample, Potential};
use crate::seeds::rng_from_seed;
use crate::spectral::SpectralOps;
use crate::stats::{mean_stderr, MeanStderr};

/// Largest grid (total points) evaluated by the exact trigonometric sum;
/// larger grids use the quintic spline.
pub const TRIG_EVAL_LIMIT: usize = 4096;

/// Boxes must be at least this many correlation lengths wide.
pub const MIN_BOX_RATIO: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthesisMethod {
    Spectral,
    MovingAverage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMethod {
    Trigonometric,
    Spline,
}

/// Summary written next to every synthesized field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMetadata {
    pub model: CorrelationModel,
    pub dim: usize,
    #[serde(rename = "L")]
    pub len: f64,
    #[serde(rename = "M")]
    pub points: usize,
    pub seed: u64,
    pub synthesis: SynthesisMethod,
    pub evaluation: EvalMethod,
    #[serde(rename = "supV")]
    pub sup_v: f64,
    #[serde(rename = "supGradV")]
    pub sup_grad_v: f64,
    #[serde(rename = "supHessV")]
    pub sup_hess_v: f64,
    pub sample_mean: f64,
    pub sample_variance: f64,
}

#[derive(Clone, Debug)]
enum Evaluator {
    /// Nonzero Fourier modes as (signed multi-index, coefficient).
    Trig(Vec<([i32; 3], Complex64)>),
    Spline(QuinticSpline),
}

/// One periodic realization `V̄` on `[0, L)^N`.
///
/// The grid samples define the field; off-grid values come from the
/// trigonometric interpolant (small grids) or a periodic quintic spline.
#[derive(Clone, Debug)]
pub struct FieldRealization {
    grid: Grid,
    model: CorrelationModel,
    seed: u64,
    method: SynthesisMethod,
    samples: Vec<f64>,
    /// Unnormalized DFT of the samples.
    spectrum: Vec<Complex64>,
    evaluator: Evaluator,
    meta: OnceLock<FieldMetadata>,
}

fn check_box(model: &CorrelationModel, grid: &Grid) -> Result<()> {
    let l = model.length_scale();
    if grid.len < MIN_BOX_RATIO * l {
        return Err(Error::AssumptionViolated {
            assumption: "box at least 20 correlation lengths",
            detail: format!("L = {} but correlation length is {}", grid.len, l),
        });
    }
    Ok(())
}

/// Draws one realization with the given method.
pub fn synthesize(corr: &Correlation, grid: Grid, seed: u64, method: SynthesisMethod) -> Result<FieldRealization> {
    match method {
        SynthesisMethod::Spectral => synthesize_spectral(corr, grid, seed),
        SynthesisMethod::MovingAverage => synthesize_moving_average(corr, grid, seed),
    }
}

/// Draws one realization by Fourier filtering of white noise.
///
/// Mode `k` receives amplitude `sqrt(S(k)/L^N)`, where `S` is the spectral
/// density of `R/4`; the mean and Nyquist modes are zeroed so the field is
/// exactly mean-free and its trigonometric interpolant is real.
pub fn synthesize_spectral(corr: &Correlation, grid: Grid, seed: u64) -> Result<FieldRealization> {
    let model = *corr.model();
    check_dims(corr, &grid)?;
    check_box(&model, &grid)?;
    let ops = SpectralOps::new(grid);
    let density = spectral_density_on_grid(corr, &grid, &ops)?;
    let mut rng = rng_from_seed(seed);
    let n = grid.total();
    let mut noise: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();
    ops.forward(&mut noise);
    let vol = grid.volume();
    let half = grid.points / 2;
    for (f, z) in noise.iter_mut().enumerate() {
        let idx = grid.multi_index(f);
        let zeroed = f == 0 || (0..grid.dim).any(|a| idx[a] == half);
        if zeroed {
            *z = Complex64::default();
        } else {
            // ξ̂ has variance n per mode and the stored spectrum is n c_k
            // with E|c_k|^2 = S(k)/L^N
            *z *= (n as f64 * density[f] / vol).sqrt();
        }
    }
    let mut samples_c = noise.clone();
    ops.inverse(&mut samples_c);
    let samples: Vec<f64> = samples_c.iter().map(|z| z.re).collect();
    Ok(FieldRealization::assemble(grid, model, seed, SynthesisMethod::Spectral, samples, noise, &ops))
}

/// Draws one realization as `V = K ⋆ W` with `W` grid white noise of
/// variance `1/ΔV` per cell, so that `E[V V] = (K⋆K)` exactly on the grid.
pub fn synthesize_moving_average(corr: &Correlation, grid: Grid, seed: u64) -> Result<FieldRealization> {
    let model = *corr.model();
    if model.kind != CorrelationKind::CompactKernel {
        return Err(invalid("moving-average synthesis needs the compact-kernel model"));
    }
    check_dims(corr, &grid)?;
    check_box(&model, &grid)?;
    let rho0 = model.rho0.expect("validated");
    if rho0 >= grid.len / 4.0 {
        return Err(Error::AssumptionViolated {
            assumption: "kernel radius below L/4",
            detail: format!("rho0 = {rho0}, L = {}", grid.len),
        });
    }
    if rho0 < 2.0 * grid.dx() {
        return Err(invalid(format!(
            "kernel radius {rho0} is not resolved by grid spacing {}",
            grid.dx()
        )));
    }
    let ops = SpectralOps::new(grid);
    let kernel = kernel_on_grid(corr, &grid);
    let mut khat = correlation_to_complex(&kernel);
    ops.forward(&mut khat);
    let mut rng = rng_from_seed(seed);
    let n = grid.total();
    let scale = grid.cell_volume().sqrt();
    let mut spec: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new({ let z: f64 = StandardNormal.sample(&mut rng); scale * z }, 0.0))
        .collect();
    ops.forward(&mut spec);
    spec.iter_mut().zip(&khat).for_each(|(z, k)| *z *= k);
    let mut samples_c = spec.clone();
    ops.inverse(&mut samples_c);
    let samples: Vec<f64> = samples_c.iter().map(|z| z.re).collect();
    Ok(FieldRealization::assemble(grid, model, seed, SynthesisMethod::MovingAverage, samples, spec, &ops))
}

fn check_dims(corr: &Correlation, grid: &Grid) -> Result<()> {
    if corr.dim() != grid.dim {
        return Err(invalid(format!(
            "correlation built for dimension {} but grid has {}",
            corr.dim(),
            grid.dim
        )));
    }
    Ok(())
}

fn correlation_to_complex(v: &[f64]) -> Vec<Complex64> {
    v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

/// Kernel `K` sampled at the periodic displacement of every grid point
/// from the origin.
fn kernel_on_grid(corr: &Correlation, grid: &Grid) -> Vec<f64> {
    let rho0 = corr.model().rho0.expect("compact model");
    let a = corr.kernel_amplitude();
    (0..grid.total())
        .map(|f| {
            let idx = grid.multi_index(f);
            let mut r2 = 0.0;
            for &i in idx.iter().take(grid.dim) {
                let d = grid.wrap_displacement(i as f64 * grid.dx());
                r2 += d * d;
            }
            a * correlation::bump(r2.sqrt() / rho0).0
        })
        .collect()
}

/// Spectral density of `R/4` at every grid wavevector.
///
/// Continuous density for the Gaussian bell; for the compact model the
/// discrete transform of the sampled covariance, which must be nonnegative.
fn spectral_density_on_grid(corr: &Correlation, grid: &Grid, ops: &SpectralOps) -> Result<Vec<f64>> {
    if let Some(_) = corr.spectral_density(0.0) {
        return Ok(ops
            .k_squared()
            .iter()
            .map(|&k2| corr.spectral_density(k2).expect("continuous density"))
            .collect());
    }
    if corr.support_radius() >= 0.5 * grid.len {
        return Err(Error::AssumptionViolated {
            assumption: "correlation support below L/2",
            detail: format!("support {} with L = {}", corr.support_radius(), grid.len),
        });
    }
    let cov: Vec<f64> = (0..grid.total())
        .map(|f| {
            let idx = grid.multi_index(f);
            let mut r2 = 0.0;
            for &i in idx.iter().take(grid.dim) {
                let d = grid.wrap_displacement(i as f64 * grid.dx());
                r2 += d * d;
            }
            0.25 * corr.radial(r2.sqrt()).r
        })
        .collect();
    density_from_covariance(&cov, grid, ops)
}

/// `S(k) = ΔV Σ_x C(x) e^{-ikx}` with a negativity check.
pub fn density_from_covariance(cov: &[f64], grid: &Grid, ops: &SpectralOps) -> Result<Vec<f64>> {
    let mut c = correlation_to_complex(cov);
    ops.forward(&mut c);
    let dv = grid.cell_volume();
    let s: Vec<f64> = c.iter().map(|z| z.re * dv).collect();
    let max = s.iter().cloned().fold(0.0, f64::max);
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-8 * max.max(1e-300) {
        return Err(Error::InvalidCovariance(format!(
            "spectral density has negative value {min:.3e} (max {max:.3e})"
        )));
    }
    Ok(s.into_iter().map(|v| v.max(0.0)).collect())
}

impl FieldRealization {
    fn assemble(
        grid: Grid,
        model: CorrelationModel,
        seed: u64,
        method: SynthesisMethod,
        samples: Vec<f64>,
        spectrum: Vec<Complex64>,
        ops: &SpectralOps,
    ) -> Self {
        let evaluator = if grid.total() <= TRIG_EVAL_LIMIT {
            Evaluator::Trig(trig_modes(&grid, &spectrum))
        } else {
            Evaluator::Spline(QuinticSpline::from_sample_spectrum(ops, &spectrum))
        };
        Self {
            grid,
            model,
            seed,
            method,
            samples,
            spectrum,
            evaluator,
            meta: OnceLock::new(),
        }
    }

    /// Rebuilds a realization from stored samples.
    pub fn from_samples(grid: Grid, model: CorrelationModel, seed: u64, method: SynthesisMethod, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.total() {
            return Err(invalid(format!(
                "expected {} samples, got {}",
                grid.total(),
                samples.len()
            )));
        }
        let ops = SpectralOps::new(grid);
        let spectrum = ops.to_spectrum(&correlation_to_complex(&samples));
        Ok(Self::assemble(grid, model, seed, method, samples, spectrum, &ops))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn model(&self) -> &CorrelationModel {
        &self.model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn eval_method(&self) -> EvalMethod {
        match self.evaluator {
            Evaluator::Trig(_) => EvalMethod::Trigonometric,
            Evaluator::Spline(_) => EvalMethod::Spline,
        }
    }

    /// Sample at grid multi-index (periodic).
    pub fn sample_at(&self, idx: [i64; 3]) -> f64 {
        let m = self.grid.points as i64;
        let mut w = [0usize; 3];
        for a in 0..self.grid.dim {
            w[a] = idx[a].rem_euclid(m) as usize;
        }
        self.samples[self.grid.flat_index(w)]
    }

    pub fn metadata(&self) -> &FieldMetadata {
        self.meta.get_or_init(|| self.compute_metadata())
    }

    fn compute_metadata(&self) -> FieldMetadata {
        let g = &self.grid;
        let ops = SpectralOps::new(*g);
        let n = g.total() as f64;
        let mut grads = Vec::new();
        for a in 0..g.dim {
            grads.push(ops.derivative_from_spectrum(&self.spectrum, a));
        }
        let mut sup_grad: f64 = 0.0;
        for f in 0..g.total() {
            let s: f64 = grads.iter().map(|v| v[f].re * v[f].re).sum();
            sup_grad = sup_grad.max(s.sqrt());
        }
        // Hessian operator norm bounded by Frobenius norm on the grid
        let mut hess = Vec::new();
        for a in 0..g.dim {
            for b in a..g.dim {
                let h: Vec<Complex64> = self
                    .spectrum
                    .iter()
                    .enumerate()
                    .map(|(f, z)| {
                        let k = g.wavevector(f);
                        z * (-k[a] * k[b])
                    })
                    .collect();
                let h = ops.from_spectrum(&h);
                hess.push((a == b, h));
            }
        }
        let mut sup_hess: f64 = 0.0;
        for f in 0..g.total() {
            let s: f64 = hess
                .iter()
                .map(|(diag, v)| if *diag { v[f].re.powi(2) } else { 2.0 * v[f].re.powi(2) })
                .sum();
            sup_hess = sup_hess.max(s.sqrt());
        }
        let mean = self.samples.iter().sum::<f64>() / n;
        let var = self.samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        FieldMetadata {
            model: self.model,
            dim: g.dim,
            len: g.len,
            points: g.points,
            seed: self.seed,
            synthesis: self.method,
            evaluation: self.eval_method(),
            sup_v: self.samples.iter().fold(0.0, |m, v| m.max(v.abs())),
            sup_grad_v: sup_grad,
            sup_hess_v: sup_hess,
            sample_mean: mean,
            sample_variance: var,
        }
    }

    /// Writes the samples in the shared binary envelope.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let header = EnvelopeHeader {
            dim: self.grid.dim,
            points: self.grid.points,
            len: self.grid.len,
            seed: self.seed,
            reserved: 0.0,
        };
        envelope::write_envelope_file(path, header, &self.samples)
    }

    pub fn read_binary(path: &Path, model: CorrelationModel) -> Result<Self> {
        let (h, payload) = envelope::read_envelope_file(path)?;
        let grid = Grid::unit_cell(h.dim, h.len, h.points)?;
        Self::from_samples(grid, model, h.seed, SynthesisMethod::Spectral, payload)
    }

    pub fn write_metadata(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(f, self.metadata())?;
        Ok(())
    }
}

fn trig_modes(grid: &Grid, spectrum: &[Complex64]) -> Vec<([i32; 3], Complex64)> {
    let n = grid.total() as f64;
    let m = grid.points as i32;
    let max = spectrum.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    spectrum
        .iter()
        .enumerate()
        .filter(|(_, z)| z.norm() > 1e-15 * max && max > 0.0)
        .map(|(f, z)| {
            let idx = grid.multi_index(f);
            let mut sig = [0i32; 3];
            for a in 0..grid.dim {
                let j = idx[a] as i32;
                sig[a] = if j < m / 2 { j } else { j - m };
            }
            (sig, z / n)
        })
        .collect()
}

fn trig_eval(grid: &Grid, modes: &[([i32; 3], Complex64)], x: &Point) -> FieldSample {
    let m = grid.points as i32;
    let half = m / 2;
    let base = 2.0 * std::f64::consts::PI / grid.len;
    // per-axis tables of e^{i j θ_a} for j in [-M/2, M/2)
    let mut tables: [Vec<Complex64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for a in 0..grid.dim {
        let theta = base * (x[a] - grid.origin);
        let w = Complex64::from_polar(1.0, theta);
        let mut t = vec![Complex64::default(); m as usize];
        t[half as usize] = Complex64::new(1.0, 0.0);
        for j in 1..=half as usize {
            if half as usize + j < m as usize {
                t[half as usize + j] = t[half as usize + j - 1] * w;
            }
            t[half as usize - j] = t[half as usize - j + 1] * w.conj();
        }
        tables[a] = t;
    }
    let mut s = FieldSample::default();
    for (sig, c) in modes {
        let mut e = *c;
        for a in 0..grid.dim {
            e *= tables[a][(sig[a] + half) as usize];
        }
        let mut k = [0.0; 3];
        for a in 0..grid.dim {
            k[a] = base * sig[a] as f64;
        }
        s.value += e.re;
        for a in 0..grid.dim {
            s.grad[a] -= k[a] * e.im;
            for b in 0..grid.dim {
                s.hess[a][b] -= k[a] * k[b] * e.re;
            }
        }
    }
    s
}

impl Potential for FieldRealization {
    fn dim(&self) -> usize {
        self.grid.dim
    }

    fn period(&self) -> Option<f64> {
        Some(self.grid.len)
    }

    fn eval(&self, x: &Point) -> FieldSample {
        match &self.evaluator {
            Evaluator::Trig(modes) => trig_eval(&self.grid, modes, x),
            Evaluator::Spline(sp) => sp.eval(x),
        }
    }
}

/// Ensemble estimate of `R(r)` at lags along the first axis.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub lags: Vec<f64>,
    pub estimates: Vec<MeanStderr>,
    pub realizations: usize,
    /// Set when fewer than 30 realizations were averaged.
    pub few_realizations: bool,
}

/// Estimates `R(r) = 4 E[V(x+r) V(x)]` from the spatial average of each
/// realization, then the mean and standard error over realizations.
pub fn empirical_correlation(fields: &[FieldRealization], lags: &[usize]) -> Result<CorrelationEstimate> {
    let first = fields.first().ok_or_else(|| invalid("no realizations given"))?;
    let g = *first.grid();
    for f in fields {
        if !f.grid().same_layout(&g) {
            return Err(invalid("realizations use different grids"));
        }
    }
    let mut estimates = Vec::with_capacity(lags.len());
    for &lag in lags {
        let per: Vec<f64> = fields
            .iter()
            .map(|field| {
                let mut acc = 0.0;
                for f in 0..g.total() {
                    let idx = g.multi_index(f);
                    let v = field.sample_at([idx[0] as i64 + lag as i64, idx[1] as i64, idx[2] as i64]);
                    acc += v * field.samples[f];
                }
                4.0 * acc / g.total() as f64
            })
            .collect();
        estimates.push(mean_stderr(&per));
    }
    Ok(CorrelationEstimate {
        lags: lags.iter().map(|&l| l as f64 * g.dx()).collect(),
        estimates,
        realizations: fields.len(),
        few_realizations: fields.len() < 30,
    })
}

/// Estimates `4 E[V(x0) V(x0 + lag e_1)]` at one base point from the
/// ensemble only (no spatial averaging), for stationarity checks.
pub fn pointwise_correlation(fields: &[FieldRealization], base: [i64; 3], lag: i64) -> MeanStderr {
    let per: Vec<f64> = fields
        .iter()
        .map(|f| 4.0 * f.sample_at(base) * f.sample_at([base[0] + lag, base[1], base[2]]))
        .collect();
    mean_stderr(&per)
}
