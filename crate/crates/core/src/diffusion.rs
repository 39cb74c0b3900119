//! Limit objects of the kinetic and diffusive regimes: the momentum
//! diffusion matrix, Brownian motion on the energy sphere, the cell
//! problem for spatial diffusion, and the statistical comparisons with
//! classical ensembles.

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;
use std::f64::consts::PI;
use std::path::Path;

use crate::classical::{fit_decay_rate, EnsembleSummary};
use crate::error::{invalid, Error, Result};
use crate::quad::integrate_pieces;
use crate::randfield::{Correlation, CorrelationKind, CorrelationModel};
use crate::seeds::rng_from_seed;
use crate::grid::Point;
use crate::stats::{chi_square, fit_line, mean_stderr, ChiSquareTest, MeanStderr};

/// Tolerance for `D k̂ = 0` and for negative eigenvalues.
const NULL_TOL: f64 = 1e-12;

/// Diffusion coefficients derived from one correlation model.
#[derive(Clone, Debug)]
pub struct DiffusionLaw {
    corr: Correlation,
}

impl DiffusionLaw {
    /// Fails unless `∫_0^∞ R'(s)/s ds < 0`, which makes the transverse
    /// diffusion positive.
    pub fn new(model: CorrelationModel, dim: usize) -> Result<Self> {
        let corr = Correlation::new(model, dim)?;
        let q = corr.dr_over_r_integral();
        if !(q < 0.0) {
            return Err(Error::AssumptionViolated {
                assumption: "positive transverse diffusion",
                detail: format!("integral of R'(s)/s is {q:e}"),
            });
        }
        Ok(Self { corr })
    }

    pub fn dim(&self) -> usize {
        self.corr.dim()
    }

    pub fn model(&self) -> &CorrelationModel {
        self.corr.model()
    }

    /// `D_ij(k) = -(1/(2|k|)) ∫ ∂_i∂_j R(s k̂) ds` by adaptive quadrature of
    /// the Hessian along the line, symmetrized and checked for `D k̂ = 0`
    /// and positive semidefiniteness.
    pub fn matrix(&self, k: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if k.len() != n {
            return Err(invalid(format!("k has {} components, expected {n}", k.len())));
        }
        let kn = k.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(kn > 0.0 && kn.is_finite()) {
            return Err(invalid("the diffusion matrix is defined for k != 0 only"));
        }
        let mut khat = [0.0; 3];
        for i in 0..n {
            khat[i] = k[i] / kn;
        }
        let breaks = self.breaks();
        let m = self.model();
        let floor = 1e-16 * m.r0.abs() / m.length_scale() / breaks.len() as f64;
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let f = |s: f64| self.corr.hessian(&khat.map(|c| c * s))[i][j];
                // the integrand is even in s
                let half = integrate_pieces(f, &breaks, 1e-13, floor);
                let v = -half / kn;
                d[(i, j)] = v;
                d[(j, i)] = v;
            }
        }
        let kv = nalgebra::DVector::from_iterator(n, khat[..n].iter().copied());
        let along = (&d * &kv).norm();
        if along > NULL_TOL {
            return Err(invalid(format!("|D k̂| = {along:e} exceeds {NULL_TOL:e}")));
        }
        let eig = SymmetricEigen::new(d.clone());
        if eig.eigenvalues.iter().any(|&e| e < -NULL_TOL) {
            return Err(invalid("diffusion matrix has a negative eigenvalue"));
        }
        Ok(d)
    }

    fn breaks(&self) -> Vec<f64> {
        let s = self.corr.support_radius();
        let pieces = match self.model().kind {
            CorrelationKind::GaussianBell => 24,
            // the compact correlation is tabulated on 256 radial intervals
            CorrelationKind::CompactKernel => 256,
        };
        (0..=pieces).map(|i| s * i as f64 / pieces as f64).collect()
    }

    /// Transverse eigenvalue `D(k) = -(1/k) ∫_0^∞ R'(s)/s ds`.
    pub fn scalar(&self, k: f64) -> Result<f64> {
        if !(k > 0.0) {
            return Err(invalid("the diffusion coefficient is defined for |k| > 0 only"));
        }
        Ok(-self.corr.dr_over_r_integral() / k)
    }

    /// Decay rate `(N-1) D(k) / k²` of `E[v̂(t)·v̂(0)]` on the sphere.
    pub fn autocorrelation_rate(&self, k: f64) -> Result<f64> {
        Ok((self.dim() as f64 - 1.0) * self.scalar(k)? / (k * k))
    }

    /// Closed-form cell problem for a radial law: `χ_j = c k̂_j` with
    /// `c = k³/((N-1)D(k))` and `d_ij = δ_ij k⁴/(N(N-1)D(k))`.
    pub fn cell_problem(&self, k: f64) -> Result<CellSolution> {
        let n = self.dim();
        if n < 3 {
            return Err(Error::AssumptionViolated {
                assumption: "spatial diffusion needs N >= 3",
                detail: format!("N = {n}"),
            });
        }
        let d = self.scalar(k)?;
        let nm1 = n as f64 - 1.0;
        let c = k.powi(3) / (nm1 * d);
        let ds = k.powi(4) / (n as f64 * nm1 * d);
        Ok(CellSolution {
            k,
            c,
            d_scalar: ds,
            d_tensor: DMatrix::identity(n, n) * ds,
        })
    }

    /// Applies `Σ ∂_i(D_ij(k) ∂_j ·)` to `χ_j = c k_j/|k|` at `points`
    /// directions on the sphere of radius `k` (fourth-order differences of
    /// the flux) and returns `max |Lχ_j + k k̂_j| / k`.
    pub fn cell_residual(&self, k: f64, c: f64, points: usize) -> Result<f64> {
        let n = self.dim();
        let h = 1e-2 * k;
        let dirs = sphere_points(n, points);
        let mut worst: f64 = 0.0;
        for dir in &dirs {
            let x: Vec<f64> = dir.iter().map(|u| u * k).collect();
            for j in 0..n {
                let mut div = 0.0;
                for i in 0..n {
                    let flux = |t: f64| -> Result<f64> {
                        let mut y = x.clone();
                        y[i] += t;
                        let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                        let d = self.matrix(&y)?;
                        // ∂_l (c y_j / |y|) = c (δ_lj - ŷ_l ŷ_j) / |y|
                        let mut f = 0.0;
                        for l in 0..n {
                            let delta = if l == j { 1.0 } else { 0.0 };
                            f += d[(i, l)] * c * (delta - y[l] * y[j] / (r * r)) / r;
                        }
                        Ok(f)
                    };
                    div += (-flux(2.0 * h)? + 8.0 * flux(h)? - 8.0 * flux(-h)? + flux(-2.0 * h)?) / (12.0 * h);
                }
                worst = worst.max((div + k * dir[j]).abs() / k);
            }
        }
        Ok(worst)
    }
}

/// Deterministic, roughly uniform directions on the unit sphere in `dim`
/// dimensions (Fibonacci lattice for `N = 3`, equal angles for `N = 2`).
pub fn sphere_points(dim: usize, count: usize) -> Vec<Vec<f64>> {
    match dim {
        2 => (0..count)
            .map(|i| {
                let t = 2.0 * PI * (i as f64 + 0.5) / count as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let t = golden * i as f64;
                    vec![r * t.cos(), r * t.sin(), z]
                })
                .collect()
        }
        _ => vec![vec![1.0]; count.min(1)],
    }
}

/// Closed-form solution of the isotropic cell problem.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSolution {
    pub k: f64,
    /// Amplitude `c` in `χ_j = c k̂_j`.
    pub c: f64,
    pub d_scalar: f64,
    pub d_tensor: DMatrix<f64>,
}

impl CellSolution {
    /// Predicted slope `2 tr(d)` of the spatial mean-square displacement.
    pub fn msd_slope(&self) -> f64 {
        2.0 * self.d_tensor.trace()
    }
}

/// Statistics of simulated Brownian paths on the sphere `|v| = |v0|`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SphereDiffusion {
    pub t: Vec<f64>,
    /// `E[v̂(t)·v̂(0)]`.
    pub autocorr: Vec<MeanStderr>,
    /// `E|∫_0^t v|^2`.
    pub msd: Vec<MeanStderr>,
    /// `max_t ||v(t)| - |v0|| / |v0|` over all paths.
    pub max_speed_deviation: f64,
    pub fitted_rate: f64,
    /// Half-width of the 95% interval of the fitted rate.
    pub rate_ci: f64,
}

/// Geodesic Euler-Maruyama: tangent Gaussian increment with covariance
/// `2 D dt (I - v̂v̂ᵀ)`, then re-projection onto the sphere. Paths use seeds
/// `seed + i` and are reduced in path order. The decay rate is fitted on
/// `log E[v̂·v̂0] > log(fit_floor)`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_sphere_diffusion(
    d: f64,
    v0: &[f64],
    horizon: f64,
    dt: f64,
    samples: usize,
    seed: u64,
    count: usize,
    fit_floor: f64,
) -> Result<SphereDiffusion> {
    let n = v0.len();
    let speed = v0.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(speed > 0.0) || n < 2 {
        return Err(invalid("sphere diffusion needs N >= 2 and |v0| > 0"));
    }
    if !(d >= 0.0 && horizon > 0.0 && dt > 0.0) || samples == 0 || count == 0 {
        return Err(invalid("sphere diffusion needs D >= 0 and positive horizon, dt, samples, count"));
    }
    let per_sample = ((horizon / samples as f64) / dt).ceil() as usize;
    let step = horizon / (samples * per_sample) as f64;
    let vhat0: Vec<f64> = v0.iter().map(|x| x / speed).collect();
    let amp = (2.0 * d * step).sqrt();
    let paths: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..count)
        .into_par_iter()
        .map(|p| {
            let mut rng = rng_from_seed(seed.wrapping_add(p as u64));
            let mut v = v0.to_vec();
            let mut x = vec![0.0; n];
            let mut ac = vec![1.0];
            let mut sq = vec![0.0];
            let mut dev: f64 = 0.0;
            for _ in 0..samples {
                for _ in 0..per_sample {
                    let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let vh: Vec<f64> = v.iter().map(|c| c / speed).collect();
                    let zp: f64 = z.iter().zip(&vh).map(|(a, b)| a * b).sum();
                    let old = v.clone();
                    for i in 0..n {
                        v[i] += amp * (z[i] - zp * vh[i]);
                    }
                    let r = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                    v.iter_mut().for_each(|c| *c *= speed / r);
                    for i in 0..n {
                        x[i] += 0.5 * step * (old[i] + v[i]);
                    }
                    let r = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                    dev = dev.max((r - speed).abs() / speed);
                }
                ac.push(v.iter().zip(&vhat0).map(|(a, b)| a * b).sum::<f64>() / speed);
                sq.push(x.iter().map(|c| c * c).sum());
            }
            (ac, sq, dev)
        })
        .collect();
    let t: Vec<f64> = (0..=samples).map(|k| horizon * k as f64 / samples as f64).collect();
    let col = |k: usize, which: usize| -> MeanStderr {
        let xs: Vec<f64> = paths.iter().map(|p| if which == 0 { p.0[k] } else { p.1[k] }).collect();
        mean_stderr(&xs)
    };
    let autocorr: Vec<MeanStderr> = (0..=samples).map(|k| col(k, 0)).collect();
    let msd: Vec<MeanStderr> = (0..=samples).map(|k| col(k, 1)).collect();
    let means: Vec<f64> = autocorr.iter().map(|m| m.mean).collect();
    let (fitted_rate, rate_ci) = match fit_decay_rate(&t, &means, fit_floor) {
        Some(fit) => (fit.slope, rate_interval(&t, &autocorr, fit_floor)),
        None => (f64::NAN, f64::NAN),
    };
    Ok(SphereDiffusion {
        t,
        autocorr,
        msd,
        max_speed_deviation: paths.iter().fold(0.0, |m, p| m.max(p.2)),
        fitted_rate,
        rate_ci,
    })
}

/// 95% half-width of a decay rate from the standard error of the last
/// fitted autocorrelation point (delta method on `-log C(t)/t`).
pub fn rate_interval(t: &[f64], c: &[MeanStderr], floor: f64) -> f64 {
    let last = t
        .iter()
        .zip(c)
        .filter(|(t, c)| **t > 0.0 && c.mean > floor)
        .last();
    match last {
        Some((t, c)) => 1.96 * c.stderr / (c.mean * t),
        None => f64::NAN,
    }
}

/// Slope of the rescaled mean-square displacement against the cell-problem
/// prediction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MsdTest {
    pub t0: f64,
    pub slope: f64,
    /// Half-width of the 95% interval (from the member-to-member scatter of
    /// per-member slopes).
    pub slope_ci: f64,
    pub predicted: f64,
    pub relative_error: f64,
    /// The interval is wider than a tenth of the prediction.
    pub ci_too_wide: bool,
}

impl MsdTest {
    pub fn within(&self, rel: f64) -> bool {
        self.relative_error <= rel
    }
}

/// Fits the ensemble MSD on `[t0, T]`, `t0 = T/5`, against `2 tr(d)`.
pub fn spatial_msd_test(summary: &EnsembleSummary, predicted: f64) -> Result<MsdTest> {
    let t_end = *summary.tbar.last().ok_or_else(|| invalid("empty ensemble summary"))?;
    let t0 = t_end / 5.0;
    let idx: Vec<usize> = (0..summary.tbar.len()).filter(|&i| summary.tbar[i] >= t0 - 1e-12).collect();
    if idx.len() < 3 {
        return Err(invalid("MSD fit needs at least 3 samples in [T/5, T]"));
    }
    let x: Vec<f64> = idx.iter().map(|&i| summary.tbar[i]).collect();
    let per_member: Vec<f64> = summary
        .member_sq_disp
        .iter()
        .map(|sq| {
            let y: Vec<f64> = idx.iter().map(|&i| sq[i]).collect();
            fit_line(&x, &y).slope
        })
        .collect();
    let stats = mean_stderr(&per_member);
    let slope = stats.mean;
    let slope_ci = 1.96 * stats.stderr;
    Ok(MsdTest {
        t0,
        slope,
        slope_ci,
        predicted,
        relative_error: (slope - predicted).abs() / predicted,
        ci_too_wide: slope_ci > 0.1 * predicted,
    })
}

/// Writes `t, msd, stderr, predictedSlope`.
pub fn write_msd_csv(path: &Path, t: &[f64], msd: &[MeanStderr], predicted_slope: f64) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "msd", "stderr", "predictedSlope"])?;
    for (t, m) in t.iter().zip(msd) {
        w.write_record(&[t.to_string(), m.mean.to_string(), m.stderr.to_string(), predicted_slope.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Density at `x` of the heat kernel `∂_t u = Σ d_ij ∂_i∂_j u` started from
/// a centered Gaussian of variance `initial_variance` per axis (a point
/// when zero): covariance `2 d t + initial_variance I`.
pub fn heat_profile(d: &DMatrix<f64>, t: f64, x: &[f64], initial_variance: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(invalid("heat profile needs t > 0"));
    }
    let n = d.nrows();
    let cov = d * (2.0 * t) + DMatrix::identity(n, n) * initial_variance;
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| invalid("heat-kernel covariance is not positive definite"))?;
    let xv = nalgebra::DVector::from_column_slice(x);
    let sol = chol.solve(&xv);
    let quad = xv.dot(&sol);
    let det = cov.determinant();
    Ok((-0.5 * quad).exp() / ((2.0 * PI).powi(n as i32) * det).sqrt())
}

/// `P(|X| <= r)` for the isotropic heat kernel with per-axis variance
/// `2 d t + initial_variance`.
pub fn heat_radial_cdf(dim: usize, d_scalar: f64, t: f64, r: f64, initial_variance: f64) -> f64 {
    let var = 2.0 * d_scalar * t + initial_variance;
    if r <= 0.0 {
        return 0.0;
    }
    gamma_lr(0.5 * dim as f64, r * r / (2.0 * var))
}

/// χ² test of final radial distances against the isotropic heat kernel,
/// using `bins` cells of equal predicted probability.
pub fn radial_chi_square(
    positions: &[Point],
    dim: usize,
    d_scalar: f64,
    t: f64,
    initial_variance: f64,
    bins: usize,
) -> ChiSquareTest {
    let mut observed = vec![0usize; bins];
    for p in positions {
        let r = p[..dim].iter().map(|x| x * x).sum::<f64>().sqrt();
        let u = heat_radial_cdf(dim, d_scalar, t, r, initial_variance);
        let b = ((u * bins as f64) as usize).min(bins - 1);
        observed[b] += 1;
    }
    let expected = vec![positions.len() as f64 / bins as f64; bins];
    chi_square(&observed, &expected, 0)
}

/// Diffusion report written by the theory experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiffusionReport {
    pub k: Vec<f64>,
    #[serde(rename = "Dmatrix")]
    pub d_matrix: Vec<Vec<f64>>,
    #[serde(rename = "Dscalar")]
    pub d_scalar: f64,
    #[serde(rename = "cellC")]
    pub cell_c: Option<f64>,
    #[serde(rename = "dTensor")]
    pub d_tensor: Option<Vec<Vec<f64>>>,
    #[serde(rename = "fitRates")]
    pub fit_rates: Vec<f64>,
    #[serde(rename = "CIs")]
    pub cis: Vec<f64>,
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl DiffusionReport {
    pub fn build(law: &DiffusionLaw, k: &[f64]) -> Result<Self> {
        let d = law.matrix(k)?;
        let kn = k.iter().map(|x| x * x).sum::<f64>().sqrt();
        let cell = if law.dim() >= 3 {
            Some(law.cell_problem(kn)?)
        } else {
            None
        };
        Ok(Self {
            k: k.to_vec(),
            d_matrix: matrix_rows(&d),
            d_scalar: law.scalar(kn)?,
            cell_c: cell.as_ref().map(|c| c.c),
            d_tensor: cell.as_ref().map(|c| matrix_rows(&c.d_tensor)),
            fit_rates: Vec::new(),
            cis: Vec::new(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bell(dim: usize) -> DiffusionLaw {
        DiffusionLaw::new(CorrelationModel::gaussian_bell(1.0, 1.0), dim).unwrap()
    }

    #[test]
    fn gaussian_bell_matrix() {
        let law = bell(2);
        let d = law.matrix(&[1.0, 0.0]).unwrap();
        let s = (PI / 2.0).sqrt();
        assert!(d[(0, 0)].abs() < 1e-12);
        assert!(d[(0, 1)].abs() < 1e-12);
        assert!((d[(1, 1)] - s).abs() < 1e-8);
        let d2 = law.matrix(&[2.0, 0.0]).unwrap();
        assert!((d2[(1, 1)] - 0.5 * s).abs() < 1e-8);
        assert!(law.matrix(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn direct_two_dimensional_oracle() {
        // D_11 for k = (1, 0) from the line integral of -∂_1∂_1 R
        // written out for the Gaussian bell, by an independent quadrature
        let law = bell(2);
        let d = law.matrix(&[0.0, 1.0]).unwrap();
        let f = |s: f64| (-0.5 * s * s).exp();
        let direct = crate::quad::integrate(f, 0.0, 40.0, 1e-14, 0.0);
        assert!((d[(0, 0)] - direct).abs() < 1e-10);
    }

    #[test]
    fn rotation_covariance() {
        let law = bell(2);
        let d = law.matrix(&[1.3, 0.0]).unwrap();
        let th: f64 = 0.7;
        let rot = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let k = &rot * nalgebra::DVector::from_column_slice(&[1.3, 0.0]);
        let dr = law.matrix(k.as_slice()).unwrap();
        let expect = &rot * d * rot.transpose();
        assert!((dr - expect).abs().max() < 1e-10);
    }

    #[test]
    fn scalar_scalings() {
        let law = bell(3);
        assert!((law.scalar(1.0).unwrap() - (PI / 2.0).sqrt()).abs() < 1e-14);
        let doubled = DiffusionLaw::new(CorrelationModel::gaussian_bell(2.0, 1.0), 3).unwrap();
        assert!((doubled.scalar(1.0).unwrap() - 2.0 * law.scalar(1.0).unwrap()).abs() < 1e-14);
        let wide = DiffusionLaw::new(CorrelationModel::gaussian_bell(1.0, 2.0), 3).unwrap();
        assert!((wide.scalar(1.0).unwrap() - 0.5 * law.scalar(1.0).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn compact_kernel_matrix_is_transverse() {
        let law = DiffusionLaw::new(CorrelationModel::compact_kernel(1.0, 1.0), 3).unwrap();
        let k = [0.3, -0.4, 1.2];
        let d = law.matrix(&k).unwrap();
        let kn = 1.3;
        let eig = SymmetricEigen::new(d.clone());
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let s = law.scalar(kn).unwrap();
        assert!(ev[0].abs() < 1e-12);
        assert!((ev[1] - s).abs() < 1e-9 * s && (ev[2] - s).abs() < 1e-9 * s);
    }

    #[test]
    fn cell_problem_closed_form() {
        let law = bell(3);
        let c = law.cell_problem(1.0).unwrap();
        let s = (PI / 2.0).sqrt();
        assert!((c.c - 1.0 / (2.0 * s)).abs() < 1e-14);
        assert!((c.d_scalar - 1.0 / (6.0 * s)).abs() < 1e-14);
        assert!((c.d_scalar - 0.13298).abs() < 1e-5);
        let c2 = law.cell_problem(2.0).unwrap();
        assert!((c2.d_scalar / c.d_scalar - 32.0).abs() < 1e-12);
        assert!(bell(2).cell_problem(1.0).is_err());
        // the cell function c k̂_j averages to zero over the sphere
        let pts = sphere_points(3, 2000);
        for j in 0..3 {
            let m: f64 = pts.iter().map(|p| c.c * p[j]).sum::<f64>() / 2000.0;
            assert!(m.abs() < 1e-3);
        }
    }

    #[test]
    fn cell_problem_numerical_verifier() {
        let law = bell(3);
        for k in [0.5, 1.0, 2.0] {
            let c = law.cell_problem(k).unwrap();
            assert!(law.cell_residual(k, c.c, 6).unwrap() < 1e-6, "k = {k}");
        }
        let c = law.cell_problem(1.0).unwrap();
        // a wrong amplitude is detected
        assert!(law.cell_residual(1.0, 1.1 * c.c, 6).unwrap() > 1e-2);
    }

    #[test]
    fn frozen_sphere_paths() {
        let r = simulate_sphere_diffusion(0.0, &[0.0, 1.0, 0.0], 1.0, 0.01, 10, 1, 5, 0.1).unwrap();
        assert!(r.autocorr.iter().all(|m| (m.mean - 1.0).abs() < 1e-15));
        assert!((r.msd[10].mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_autocorrelation_rate() {
        let s = (PI / 2.0).sqrt();
        let r = simulate_sphere_diffusion(s, &[1.0, 0.0, 0.0], 0.8, 1e-3, 16, 5, 2000, 0.1).unwrap();
        assert!(r.max_speed_deviation < 1e-14);
        let want = 2.0 * s;
        assert!((r.fitted_rate - want).abs() < 0.1 * want, "rate {}", r.fitted_rate);
    }

    #[test]
    fn heat_kernel_moments() {
        let d = DMatrix::identity(3, 3) * 0.2;
        let p0 = heat_profile(&d, 1.5, &[0.0, 0.0, 0.0], 0.0).unwrap();
        assert!((p0 - (2.0 * PI * 0.6).powf(-1.5)).abs() < 1e-12);
        assert!(heat_profile(&d, 0.0, &[0.0; 3], 0.0).is_err());
        // E|X|^2 = 2 tr(d) t + N s0^2 from the radial law
        let (t, s0) = (1.5, 0.1);
        let mut m2 = 0.0;
        let steps = 20000;
        let rmax = 12.0;
        for i in 0..steps {
            let (a, b) = (rmax * i as f64 / steps as f64, rmax * (i + 1) as f64 / steps as f64);
            let p = heat_radial_cdf(3, 0.2, t, b, s0) - heat_radial_cdf(3, 0.2, t, a, s0);
            m2 += p * (0.5 * (a + b)).powi(2);
        }
        assert!((m2 - (2.0 * 0.6 * t + 3.0 * s0)).abs() < 1e-3);
    }

    #[test]
    fn chi_square_accepts_matching_samples() {
        let mut rng = rng_from_seed(3);
        let var: f64 = 2.0 * 0.2 * 1.5;
        let pts: Vec<[f64; 3]> = (0..4000)
            .map(|_| {
                let mut p = [0.0; 3];
                for c in &mut p {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *c = var.sqrt() * z;
                }
                p
            })
            .collect();
        assert!(radial_chi_square(&pts, 3, 0.2, 1.5, 0.0, 10).passes(0.01));
        assert!(!radial_chi_square(&pts, 3, 0.3, 1.5, 0.0, 10).passes(0.01));
    }

    #[test]
    fn report_round_trip() {
        let law = bell(3);
        let r = DiffusionReport::build(&law, &[1.0, 0.0, 0.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("report.json");
        r.write(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"Dmatrix\"") && text.contains("\"cellC\""));
    }
}
