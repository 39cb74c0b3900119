//! Soliton states `η_σ = e^{i(½v·(x-a)+γ)} η_μ(x-a)`, their tangent
//! vectors, the induced symplectic matrix and zero-mode diagnostics.

mod profile;

pub use profile::{check_exponent, profile_1d_cubic, profile_petviashvili, Profile, ProfileHeader, MU_STEP};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, Point};
use crate::spectral::{l2_norm, real_inner, SpectralOps};

/// Modulation parameters `σ = (a, v, γ, μ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonParams {
    pub a: Point,
    pub v: Point,
    pub gamma: f64,
    pub mu: f64,
}

/// Reduces a phase into `[0, 2π)`.
pub fn reduce_phase(g: f64) -> f64 {
    g.rem_euclid(2.0 * PI)
}

impl SolitonParams {
    pub fn new(a: Point, v: Point, gamma: f64, mu: f64) -> Self {
        Self {
            a,
            v,
            gamma: reduce_phase(gamma),
            mu,
        }
    }

    pub fn at_rest(mu: f64) -> Self {
        Self::new([0.0; 3], [0.0; 3], 0.0, mu)
    }

    pub fn speed_sq(&self) -> f64 {
        crate::grid::dot(&self.v, &self.v)
    }

    /// Exact free motion: `a + v t`, `γ + μ t + |v|^2 t / 4`.
    pub fn free_evolution(&self, t: f64) -> Self {
        let mut a = self.a;
        for (ai, vi) in a.iter_mut().zip(&self.v) {
            *ai += vi * t;
        }
        Self::new(a, self.v, self.gamma + self.mu * t + 0.25 * self.speed_sq() * t, self.mu)
    }

    /// Flattened `[a.., v.., γ, μ]` of length `2N + 2`.
    pub fn to_vec(&self, dim: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * dim + 2);
        out.extend_from_slice(&self.a[..dim]);
        out.extend_from_slice(&self.v[..dim]);
        out.push(self.gamma);
        out.push(self.mu);
        out
    }

    /// Inverse of [`SolitonParams::to_vec`]; the phase is not reduced.
    pub fn from_vec(dim: usize, x: &[f64]) -> Self {
        let mut a = [0.0; 3];
        let mut v = [0.0; 3];
        a[..dim].copy_from_slice(&x[..dim]);
        v[..dim].copy_from_slice(&x[dim..2 * dim]);
        Self {
            a,
            v,
            gamma: x[2 * dim],
            mu: x[2 * dim + 1],
        }
    }
}

/// A soliton sampled on a grid.
#[derive(Clone, Debug)]
pub struct SolitonField {
    pub field: Vec<Complex64>,
    /// Set when the soliton center is within `6/sqrt(μ)` of the box edge.
    pub near_edge: bool,
}

fn check_profile(sigma: &SolitonParams, profile: &Profile, grid: &Grid) -> Result<()> {
    if (profile.mu() - sigma.mu).abs() > 1e-12 * sigma.mu.abs().max(1.0) {
        return Err(invalid(format!(
            "profile has mu = {} but parameters have mu = {}",
            profile.mu(),
            sigma.mu
        )));
    }
    if profile.dim() != grid.dim {
        return Err(invalid("profile and grid dimensions differ"));
    }
    Ok(())
}

/// Samples `η_σ` on the grid with periodic wrapping of `x - a`.
pub fn build_soliton(sigma: &SolitonParams, profile: &Profile, grid: &Grid) -> Result<SolitonField> {
    check_profile(sigma, profile, grid)?;
    let field = (0..grid.total())
        .map(|f| {
            let p = grid.point(f);
            let mut r2 = 0.0;
            let mut phase = sigma.gamma;
            for ax in 0..grid.dim {
                let d = grid.wrap_displacement(p[ax] - sigma.a[ax]);
                r2 += d * d;
                phase += 0.5 * sigma.v[ax] * d;
            }
            Complex64::from_polar(profile.value(r2.sqrt()), phase)
        })
        .collect();
    let margin = 6.0 / sigma.mu.sqrt();
    let near_edge = (0..grid.dim).any(|ax| {
        let c = grid.wrap_coord(sigma.a[ax]);
        let lo = c - grid.origin;
        let hi = grid.origin + grid.len - c;
        lo.min(hi) < margin
    });
    Ok(SolitonField { field, near_edge })
}

/// `∂_μ η_σ` by a centered difference of rescaled profiles.
pub fn mu_derivative(sigma: &SolitonParams, profile: &Profile, grid: &Grid) -> Result<Vec<Complex64>> {
    let eps = MU_STEP * sigma.mu;
    let mut up = *sigma;
    up.mu += eps;
    let mut dn = *sigma;
    dn.mu -= eps;
    let fu = build_soliton(&up, &profile.rescaled(up.mu)?, grid)?.field;
    let fd = build_soliton(&dn, &profile.rescaled(dn.mu)?, grid)?.field;
    Ok(fu.iter().zip(&fd).map(|(a, b)| (a - b) / (2.0 * eps)).collect())
}

/// The `2N + 2` tangent vectors `e_α η_σ`:
/// `-∂_j η_σ`, `i x_j η_σ`, `i η_σ`, `∂_μ η_σ`.
///
/// `x_j` is the absolute coordinate `a_j + wrap(x_j - a_j)`, which makes
/// the Gram matrix reproduce the `a m'(μ)` entries of the symplectic matrix.
pub fn tangent_vectors(sigma: &SolitonParams, profile: &Profile, ops: &SpectralOps) -> Result<Vec<Vec<Complex64>>> {
    Ok(tangent_frame(sigma, profile, ops)?.1)
}

/// `η_σ` together with its tangent vectors.
pub fn tangent_frame(
    sigma: &SolitonParams,
    profile: &Profile,
    ops: &SpectralOps,
) -> Result<(Vec<Complex64>, Vec<Vec<Complex64>>)> {
    let grid = *ops.grid();
    let eta = build_soliton(sigma, profile, &grid)?.field;
    let spec = ops.to_spectrum(&eta);
    let mut out = Vec::with_capacity(2 * grid.dim + 2);
    for ax in 0..grid.dim {
        let d = ops.derivative_from_spectrum(&spec, ax);
        out.push(d.into_iter().map(|z| -z).collect());
    }
    for ax in 0..grid.dim {
        out.push(
            eta.iter()
                .enumerate()
                .map(|(f, z)| {
                    let x = sigma.a[ax] + grid.wrap_displacement(grid.point(f)[ax] - sigma.a[ax]);
                    z * Complex64::new(0.0, x)
                })
                .collect(),
        );
    }
    out.push(eta.iter().map(|z| z * Complex64::i()).collect());
    out.push(mu_derivative(sigma, profile, &grid)?);
    Ok((eta, out))
}

/// Analytic symplectic matrix `Ξ_σ = (⟨e_α η_σ, i e_β η_σ⟩)`, ordered
/// `(a, v, γ, μ)`.
pub fn symplectic_matrix(dim: usize, sigma: &SolitonParams, m: f64, mp: f64) -> Result<DMatrix<f64>> {
    if mp <= 0.0 {
        return Err(Error::AssumptionViolated {
            assumption: "orbital stability m'(mu) > 0",
            detail: format!("m' = {mp:e}"),
        });
    }
    let n = 2 * dim + 2;
    let g = 2 * dim;
    let mu = g + 1;
    let mut x = DMatrix::zeros(n, n);
    for j in 0..dim {
        x[(j, dim + j)] = -m;
        x[(dim + j, j)] = m;
        x[(j, mu)] = -0.5 * sigma.v[j] * mp;
        x[(mu, j)] = 0.5 * sigma.v[j] * mp;
        x[(dim + j, mu)] = sigma.a[j] * mp;
        x[(mu, dim + j)] = -sigma.a[j] * mp;
    }
    x[(g, mu)] = mp;
    x[(mu, g)] = -mp;
    let det = x.determinant();
    if !(det.abs() > 0.0) {
        return Err(invalid("symplectic matrix is singular"));
    }
    Ok(x)
}

/// Numerical Gram matrix `⟨e_α, i e_β⟩` of given tangent vectors.
pub fn gram_matrix(vectors: &[Vec<Complex64>], dv: f64) -> DMatrix<f64> {
    let n = vectors.len();
    let ie: Vec<Vec<Complex64>> = vectors
        .iter()
        .map(|v| v.iter().map(|z| z * Complex64::i()).collect())
        .collect();
    DMatrix::from_fn(n, n, |a, b| real_inner(&vectors[a], &ie[b], dv))
}

/// Zero-mode diagnostics of `ℒ_μ = -Δ + μ - f'(η_μ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroModeReport {
    /// `max_j ‖ℒ ∂_j η‖ / ‖∂_j η‖`.
    pub translation: f64,
    /// `‖ℒ (iη)‖ / ‖η‖`.
    pub gauge: f64,
    /// `max_j ‖ℒ(i x_j η)‖ / ‖∂_j η‖` (informational).
    pub boost_ratio: f64,
    /// Relative least-squares residual of `ℒ(i x_j η) ∥ i ∂_j η`.
    pub boost_parallel_residual: f64,
    /// Fitted constant `c` in `ℒ(i x_j η) ≈ c i ∂_j η`.
    pub boost_constant: f64,
    /// `‖ℒ ∂_μ η‖ / ‖η‖` (informational).
    pub scaling_ratio: f64,
    /// Relative residual of `ℒ ∂_μ η ∥ η`.
    pub scaling_parallel_residual: f64,
}

/// Applies `ℒ_μ` around a real profile: `L_+` on the real part and `L_-`
/// on the imaginary part.
pub fn apply_hessian(ops: &SpectralOps, eta: &[f64], mu: f64, s: f64, w: &[Complex64]) -> Vec<Complex64> {
    let mut lap = ops.to_spectrum(w);
    lap.iter_mut()
        .zip(ops.k_squared())
        .for_each(|(z, k2)| *z *= k2 + mu);
    ops.inverse(&mut lap);
    lap.iter()
        .zip(w)
        .zip(eta)
        .map(|((l, z), &e)| {
            let es = e.abs().powf(s);
            Complex64::new(l.re - (s + 1.0) * es * z.re, l.im - es * z.im)
        })
        .collect()
}

pub fn zero_mode_residuals(profile: &Profile, grid: &Grid) -> Result<ZeroModeReport> {
    if (grid.origin + 0.5 * grid.len).abs() > 1e-12 * grid.len {
        return Err(invalid("zero-mode grid must be centered on the origin"));
    }
    let ops = SpectralOps::new(*grid);
    let dv = grid.cell_volume();
    let mu = profile.mu();
    let s = profile.s();
    let eta = profile.samples_on(grid);
    let eta_c: Vec<Complex64> = eta.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let eta_norm = l2_norm(&eta_c, dv);
    let spec = ops.to_spectrum(&eta_c);
    let mut translation: f64 = 0.0;
    let mut boost_ratio: f64 = 0.0;
    let mut boost_res: f64 = 0.0;
    let mut boost_c = 0.0;
    for ax in 0..grid.dim {
        let d = ops.derivative_from_spectrum(&spec, ax);
        let dn = l2_norm(&d, dv);
        let ld = apply_hessian(&ops, &eta, mu, s, &d);
        translation = translation.max(l2_norm(&ld, dv) / dn);
        let xw: Vec<Complex64> = eta
            .iter()
            .enumerate()
            .map(|(f, &e)| Complex64::new(0.0, grid.point(f)[ax] * e))
            .collect();
        let lx = apply_hessian(&ops, &eta, mu, s, &xw);
        let target: Vec<Complex64> = d.iter().map(|z| z * Complex64::i()).collect();
        let c = real_inner(&lx, &target, dv) / (dn * dn);
        let resid: Vec<Complex64> = lx.iter().zip(&target).map(|(a, b)| a - b * c).collect();
        let ln = l2_norm(&lx, dv);
        boost_ratio = boost_ratio.max(ln / dn);
        boost_res = boost_res.max(l2_norm(&resid, dv) / ln);
        boost_c = c;
    }
    let ie: Vec<Complex64> = eta_c.iter().map(|z| z * Complex64::i()).collect();
    let gauge = l2_norm(&apply_hessian(&ops, &eta, mu, s, &ie), dv) / eta_norm;
    let dmu = mu_derivative(&SolitonParams::at_rest(mu), profile, grid)?;
    let lm = apply_hessian(&ops, &eta, mu, s, &dmu);
    let c = real_inner(&lm, &eta_c, dv) / (eta_norm * eta_norm);
    let resid: Vec<Complex64> = lm.iter().zip(&eta_c).map(|(a, b)| a - b * c).collect();
    let lmn = l2_norm(&lm, dv);
    Ok(ZeroModeReport {
        translation,
        gauge,
        boost_ratio,
        boost_parallel_residual: boost_res,
        boost_constant: boost_c,
        scaling_ratio: lmn / eta_norm,
        scaling_parallel_residual: l2_norm(&resid, dv) / lmn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Grid, Profile) {
        (Grid::centered(1, 60.0, 1024).unwrap(), profile_1d_cubic(1.0).unwrap())
    }

    #[test]
    fn rest_soliton_is_real_profile() {
        let (g, p) = setup();
        let s = build_soliton(&SolitonParams::at_rest(1.0), &p, &g).unwrap();
        for (f, z) in s.field.iter().enumerate() {
            assert_eq!(z.im, 0.0);
            assert!((z.re - p.value(g.point(f)[0])).abs() < 1e-15);
        }
        assert!(!s.near_edge);
    }

    #[test]
    fn charge_equals_mass_and_momentum_is_boost() {
        let (g, p) = setup();
        let ops = SpectralOps::new(g);
        let sigma = SolitonParams::new([1.0, 0.0, 0.0], [2.0, 0.0, 0.0], 0.5, 1.0);
        let s = build_soliton(&sigma, &p, &g).unwrap();
        let charge = 0.5 * l2_norm(&s.field, g.dx()).powi(2);
        assert!((charge - p.mass()).abs() < 1e-12);
        let mom = ops.momentum(&s.field);
        assert!((mom[0] - 2.0 * p.mass()).abs() < 1e-10);
    }

    #[test]
    fn gauge_covariance_is_exact() {
        let (g, p) = setup();
        let s0 = SolitonParams::new([0.3, 0.0, 0.0], [0.7, 0.0, 0.0], 0.2, 1.0);
        let mut s1 = s0;
        s1.gamma += 0.9;
        let a = build_soliton(&s0, &p, &g).unwrap().field;
        let b = build_soliton(&s1, &p, &g).unwrap().field;
        let rot = Complex64::from_polar(1.0, 0.9);
        for (x, y) in a.iter().zip(&b) {
            assert!((x * rot - y).norm() < 1e-14);
        }
    }

    #[test]
    fn translation_by_whole_cells() {
        let (g, p) = setup();
        let shift = 7;
        let s0 = SolitonParams::new([0.0; 3], [1.0, 0.0, 0.0], 0.0, 1.0);
        let mut s1 = s0;
        s1.a[0] = shift as f64 * g.dx();
        let a = build_soliton(&s0, &p, &g).unwrap().field;
        let b = build_soliton(&s1, &p, &g).unwrap().field;
        for i in 0..g.total() {
            let j = (i + shift) % g.total();
            assert!((a[i] - b[j]).norm() < 1e-8);
        }
    }

    #[test]
    fn near_edge_flag() {
        let (g, p) = setup();
        let s = SolitonParams::new([27.0, 0.0, 0.0], [0.0; 3], 0.0, 1.0);
        assert!(build_soliton(&s, &p, &g).unwrap().near_edge);
    }

    #[test]
    fn symplectic_matrix_example() {
        let x = symplectic_matrix(1, &SolitonParams::at_rest(1.0), 2.0, 1.0).unwrap();
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[0.0, -2.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, -1.0, 0.0],
        );
        assert_eq!(x, expect);
        assert!((x.determinant() - 4.0).abs() < 1e-12);
        assert!(symplectic_matrix(1, &SolitonParams::at_rest(1.0), 2.0, -1.0).is_err());
    }

    #[test]
    fn gram_matrix_matches_analytic() {
        let (g, p) = setup();
        let ops = SpectralOps::new(g);
        let sigma = SolitonParams::new([1.5, 0.0, 0.0], [0.8, 0.0, 0.0], 1.1, 1.0);
        let e = tangent_vectors(&sigma, &p, &ops).unwrap();
        let gram = gram_matrix(&e, g.dx());
        let exact = symplectic_matrix(1, &sigma, p.mass(), p.mass_prime()).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                assert!(
                    (gram[(a, b)] - exact[(a, b)]).abs() < 1e-6,
                    "entry ({a},{b}): {} vs {}",
                    gram[(a, b)],
                    exact[(a, b)]
                );
            }
        }
    }

    #[test]
    fn closed_form_zero_modes() {
        let (g, p) = setup();
        let r = zero_mode_residuals(&p, &g).unwrap();
        assert!(r.translation < 1e-8, "{r:?}");
        assert!(r.gauge < 1e-8, "{r:?}");
        assert!(r.boost_parallel_residual < 1e-6, "{r:?}");
        assert!(r.scaling_parallel_residual < 1e-5, "{r:?}");
        assert!((r.boost_constant + 2.0).abs() < 1e-6);
    }

    #[test]
    fn free_evolution_laws() {
        let s = SolitonParams::new([0.0; 3], [2.0, 0.0, 0.0], 0.0, 1.0);
        let t = s.free_evolution(0.5);
        assert_eq!(t.a[0], 1.0);
        assert!((t.gamma - 1.0).abs() < 1e-15);
        let v = s.to_vec(1);
        assert_eq!(SolitonParams::from_vec(1, &v), s);
    }
}
