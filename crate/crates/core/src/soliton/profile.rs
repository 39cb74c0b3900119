//! Ground-state profiles `η_μ > 0` solving `(-Δ + μ) η = η^{s+1}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

use crate::envelope::{self, EnvelopeHeader};
use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::hermite::RadialTable;
use crate::spectral::SpectralOps;

/// Relative step in `μ` for finite differences of profiles and masses.
pub const MU_STEP: f64 = 1e-3;

/// Petviashvili stabilizing exponent.
const STABILIZER: f64 = 1.5;

/// Radial nodes per grid cell when tabulating a grid profile.
const TABLE_REFINE: usize = 8;

#[derive(Clone, Debug)]
enum Shape {
    /// `sqrt(2μ) sech(sqrt(μ) r)`, the one-dimensional cubic ground state.
    Sech,
    /// Tabulated profile at `mu0`, mapped to other `μ` by the scaling
    /// symmetry `η_μ(r) = q^{1/s} η_{μ0}(sqrt(q) r)`, `q = μ/μ0`.
    Radial {
        mu0: f64,
        table: Arc<RadialTable>,
        /// Grid samples at `mu0` on the solver grid.
        samples: Arc<Vec<f64>>,
    },
}

#[derive(Clone, Debug)]
pub struct Profile {
    mu: f64,
    s: f64,
    dim: usize,
    mass: f64,
    mass_prime: f64,
    residual: f64,
    source: Option<Grid>,
    shape: Shape,
}

/// JSON header of the profile cache.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProfileHeader {
    pub mu: f64,
    pub s: f64,
    #[serde(rename = "N")]
    pub dim: usize,
    #[serde(rename = "M")]
    pub points: usize,
    #[serde(rename = "L")]
    pub len: f64,
    pub residual: f64,
    pub mass: f64,
    pub mass_prime: f64,
}

/// Closed-form ground state of the one-dimensional cubic equation.
pub fn profile_1d_cubic(mu: f64) -> Result<Profile> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(invalid(format!("mu must be positive, got {mu}")));
    }
    Ok(Profile {
        mu,
        s: 2.0,
        dim: 1,
        mass: 2.0 * mu.sqrt(),
        mass_prime: 1.0 / mu.sqrt(),
        residual: 0.0,
        source: None,
        shape: Shape::Sech,
    })
}

/// Checks `0 < s < 4/N`, the range where ground states are orbitally stable.
pub fn check_exponent(s: f64, dim: usize) -> Result<()> {
    if !(s > 0.0 && s < 4.0 / dim as f64) {
        return Err(Error::AssumptionViolated {
            assumption: "subcritical nonlinearity 0 < s < 4/N",
            detail: format!("s = {s}, N = {dim}"),
        });
    }
    Ok(())
}

/// Ground state on a centered periodic grid by Petviashvili iteration.
///
/// The mass derivative is a centered difference of masses re-solved at
/// `μ(1 ± 1e-3)`.
pub fn profile_petviashvili(mu: f64, s: f64, grid: Grid, max_iter: usize, tol: f64) -> Result<Profile> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(invalid(format!("mu must be positive, got {mu}")));
    }
    check_exponent(s, grid.dim)?;
    if tol < 1e-12 {
        return Err(invalid(format!("tolerance must be >= 1e-12, got {tol}")));
    }
    if (grid.origin + 0.5 * grid.len).abs() > 1e-12 * grid.len {
        return Err(invalid("profile grid must be centered on the origin"));
    }
    let ops = SpectralOps::new(grid);
    let (samples, residual) = petviashvili(&ops, mu, s, max_iter, tol)?;
    let dv = grid.cell_volume();
    let mass_of = |v: &[f64]| 0.5 * v.iter().map(|x| x * x).sum::<f64>() * dv;
    let mass = mass_of(&samples);
    let (plus, _) = petviashvili(&ops, mu * (1.0 + MU_STEP), s, max_iter, tol)?;
    let (minus, _) = petviashvili(&ops, mu * (1.0 - MU_STEP), s, max_iter, tol)?;
    let mass_prime = (mass_of(&plus) - mass_of(&minus)) / (2.0 * MU_STEP * mu);
    if mass_prime <= 0.0 {
        return Err(Error::AssumptionViolated {
            assumption: "orbital stability m'(mu) > 0",
            detail: format!("m'({mu}) = {mass_prime:e}"),
        });
    }
    let table = radial_table(&ops, &samples);
    Ok(Profile {
        mu,
        s,
        dim: grid.dim,
        mass,
        mass_prime,
        residual,
        source: Some(grid),
        shape: Shape::Radial {
            mu0: mu,
            table: Arc::new(table),
            samples: Arc::new(samples),
        },
    })
}

/// One-dimensional ground state for general `s`, used as the initial guess.
fn sech_guess(mu: f64, s: f64, r: f64) -> f64 {
    let amp = (0.5 * (s + 2.0) * mu).powf(1.0 / s);
    amp * (0.5 * s * mu.sqrt() * r).cosh().powf(-2.0 / s)
}

fn petviashvili(ops: &SpectralOps, mu: f64, s: f64, max_iter: usize, tol: f64) -> Result<(Vec<f64>, f64)> {
    let grid = *ops.grid();
    let symbol: Vec<f64> = ops.k_squared().iter().map(|k2| k2 + mu).collect();
    let mut eta: Vec<f64> = (0..grid.total())
        .map(|f| {
            let p = grid.point(f);
            sech_guess(mu, s, crate::grid::norm(&p))
        })
        .collect();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let mut eh: Vec<Complex64> = eta.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let mut nh: Vec<Complex64> = eta
            .iter()
            .map(|&x| Complex64::new(x.abs().powf(s) * x, 0.0))
            .collect();
        ops.forward(&mut eh);
        ops.forward(&mut nh);
        let mut num = 0.0;
        let mut den = 0.0;
        let mut res2 = 0.0;
        let mut norm2 = 0.0;
        for ((e, n), l) in eh.iter().zip(&nh).zip(&symbol) {
            num += l * e.norm_sqr();
            den += (n * e.conj()).re;
            res2 += (e * l - n).norm_sqr();
            norm2 += e.norm_sqr();
        }
        residual = (res2 / norm2).sqrt();
        if !residual.is_finite() || den <= 0.0 {
            return Err(Error::NoConvergence {
                iterations: 0,
                residual,
            });
        }
        if residual <= tol {
            return Ok((eta, residual));
        }
        let factor = (num / den).powf(STABILIZER);
        for (n, l) in nh.iter_mut().zip(&symbol) {
            *n *= factor / l;
        }
        ops.inverse(&mut nh);
        eta = nh.iter().map(|z| z.re).collect();
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Tabulates the grid profile along the first axis through the origin,
/// evaluating its trigonometric interpolant and two derivatives.
fn radial_table(ops: &SpectralOps, samples: &[f64]) -> RadialTable {
    let grid = *ops.grid();
    let m = grid.points;
    let mut spec: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    ops.forward(&mut spec);
    // collapse the other axes at coordinate 0, i.e. offset L/2 from the
    // origin, where e^{i k L/2} = (-1)^j
    let mut line = vec![Complex64::default(); m];
    for (f, z) in spec.iter().enumerate() {
        let idx = grid.multi_index(f);
        let sign: i64 = (1..grid.dim).map(|a| idx[a] as i64).sum();
        let w = if sign % 2 == 0 { 1.0 } else { -1.0 };
        line[idx[0]] += z * w;
    }
    let n = grid.total() as f64;
    let step = grid.dx() / TABLE_REFINE as f64;
    let nodes = TABLE_REFINE * m / 2;
    let half = 0.5 * grid.len;
    let values = (0..=nodes)
        .map(|i| {
            let r = i as f64 * step;
            let mut out = [0.0; 3];
            for (j, c) in line.iter().enumerate() {
                let k = if j == m / 2 { 0.0 } else { grid.wavenumber(j) };
                let e = c * Complex64::from_polar(1.0, grid.wavenumber(j) * (r + half)) / n;
                if j == m / 2 {
                    // Nyquist mode as its symmetric cosine part
                    out[0] += e.re;
                    continue;
                }
                out[0] += e.re;
                out[1] += -k * e.im;
                out[2] += -k * k * e.re;
            }
            out
        })
        .collect();
    RadialTable::new(step, values)
}

impl Profile {
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `m(μ) = ½ ∫ η_μ^2`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn mass_prime(&self) -> f64 {
        self.mass_prime
    }

    /// Relative residual of the profile equation on its solver grid.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// `d ln m / d ln μ = 2/s - N/2`.
    pub fn mass_exponent(&self) -> f64 {
        2.0 / self.s - 0.5 * self.dim as f64
    }

    /// `η_μ(r)`.
    pub fn value(&self, r: f64) -> f64 {
        match &self.shape {
            Shape::Sech => (2.0 * self.mu).sqrt() / (self.mu.sqrt() * r).cosh(),
            Shape::Radial { mu0, table, .. } => {
                let q = self.mu / mu0;
                q.powf(1.0 / self.s) * table.eval(q.sqrt() * r.abs()).0
            }
        }
    }

    /// The profile at another `μ` (exact scaling for the power nonlinearity).
    pub fn rescaled(&self, mu: f64) -> Result<Profile> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(invalid(format!("mu must be positive, got {mu}")));
        }
        if let Shape::Sech = self.shape {
            return profile_1d_cubic(mu);
        }
        let q = mu / self.mu;
        let e = self.mass_exponent();
        Ok(Profile {
            mu,
            mass: self.mass * q.powf(e),
            mass_prime: self.mass_prime * q.powf(e - 1.0),
            ..self.clone()
        })
    }

    /// Inverts `m(μ) = mass` using the scaling law.
    pub fn mu_for_mass(&self, mass: f64) -> Option<f64> {
        let e = self.mass_exponent();
        if mass <= 0.0 || e <= 0.0 {
            return None;
        }
        Some(self.mu * (mass / self.mass).powf(1.0 / e))
    }

    /// `η_μ` sampled on a centered grid. Uses the solver samples when the
    /// grid and `μ` match, the radial interpolant otherwise.
    pub fn samples_on(&self, grid: &Grid) -> Vec<f64> {
        if let Shape::Radial { mu0, samples, .. } = &self.shape {
            if *mu0 == self.mu && self.source.is_some_and(|g| g.same_layout(grid)) {
                return samples.as_ref().clone();
            }
        }
        (0..grid.total())
            .map(|f| {
                let p = grid.point(f);
                let mut r2 = 0.0;
                for c in p.iter().take(grid.dim) {
                    let d = grid.wrap_displacement(*c);
                    r2 += d * d;
                }
                self.value(r2.sqrt())
            })
            .collect()
    }

    /// `‖(-Δ + μ)η - η^{s+1}‖₂ / ‖η‖₂` on a centered grid.
    pub fn residual_on(&self, grid: &Grid) -> f64 {
        let ops = SpectralOps::new(*grid);
        let eta = self.samples_on(grid);
        let mut eh: Vec<Complex64> = eta.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        ops.forward(&mut eh);
        let mut lhs: Vec<Complex64> = eh
            .iter()
            .zip(ops.k_squared())
            .map(|(z, k2)| z * (k2 + self.mu))
            .collect();
        ops.inverse(&mut lhs);
        let mut res = 0.0;
        let mut nrm = 0.0;
        for (l, &x) in lhs.iter().zip(&eta) {
            res += (l.re - x.abs().powf(self.s) * x).powi(2);
            nrm += x * x;
        }
        (res / nrm).sqrt()
    }

    pub fn header(&self) -> ProfileHeader {
        ProfileHeader {
            mu: self.mu,
            s: self.s,
            dim: self.dim,
            points: self.source.map_or(0, |g| g.points),
            len: self.source.map_or(0.0, |g| g.len),
            residual: self.residual,
            mass: self.mass,
            mass_prime: self.mass_prime,
        }
    }

    /// Writes the JSON header and the radial table (values, first and
    /// second derivatives, concatenated) in the binary envelope.
    pub fn write_cache(&self, json_path: &Path, bin_path: &Path) -> Result<()> {
        std::fs::write(json_path, serde_json::to_string_pretty(&self.header())?)?;
        let table = match &self.shape {
            Shape::Radial { mu0, table, .. } if *mu0 == self.mu => table.as_ref().clone(),
            _ => self.sampled_table(),
        };
        let nodes = table.nodes();
        let mut payload = Vec::with_capacity(3 * nodes.len());
        for slot in 0..3 {
            payload.extend(nodes.iter().map(|n| n[slot]));
        }
        let header = EnvelopeHeader {
            dim: self.dim,
            points: nodes.len(),
            len: table.extent(),
            seed: 0,
            reserved: self.mu,
        };
        envelope::write_envelope_file(bin_path, header, &payload)
    }

    pub fn read_cache(json_path: &Path, bin_path: &Path) -> Result<Profile> {
        let header: ProfileHeader = serde_json::from_str(&std::fs::read_to_string(json_path)?)?;
        let (env, payload) = envelope::read_envelope_file(bin_path)?;
        let n = env.points;
        if payload.len() != 3 * n || n < 2 {
            return Err(invalid("profile cache payload has the wrong length"));
        }
        let nodes: Vec<[f64; 3]> = (0..n).map(|i| [payload[i], payload[n + i], payload[2 * n + i]]).collect();
        let table = RadialTable::new(env.len / (n - 1) as f64, nodes);
        let source = if header.points > 0 {
            Some(Grid::centered(header.dim, header.len, header.points)?)
        } else {
            None
        };
        let mut profile = Profile {
            mu: header.mu,
            s: header.s,
            dim: header.dim,
            mass: header.mass,
            mass_prime: header.mass_prime,
            residual: header.residual,
            source,
            shape: Shape::Radial {
                mu0: header.mu,
                table: Arc::new(table),
                samples: Arc::new(Vec::new()),
            },
        };
        if let Some(g) = source {
            let samples = profile.samples_on(&g);
            if let Shape::Radial { samples: s, .. } = &mut profile.shape {
                *s = Arc::new(samples);
            }
        }
        Ok(profile)
    }

    /// Table for closed-form or rescaled profiles, sampled analytically
    /// with finite-difference-free derivatives where available.
    fn sampled_table(&self) -> RadialTable {
        let extent = 40.0 / self.mu.sqrt();
        let nodes = 4096;
        let step = extent / nodes as f64;
        let values = (0..=nodes)
            .map(|i| {
                let r = i as f64 * step;
                match &self.shape {
                    Shape::Sech => {
                        let k = self.mu.sqrt();
                        let a = (2.0 * self.mu).sqrt();
                        let t = (k * r).tanh();
                        let sech = 1.0 / (k * r).cosh();
                        [a * sech, -a * k * sech * t, a * k * k * sech * (2.0 * t * t - 1.0)]
                    }
                    Shape::Radial { mu0, table, .. } => {
                        let q = self.mu / mu0;
                        let amp = q.powf(1.0 / self.s);
                        let (v, d, dd) = table.eval(q.sqrt() * r);
                        [amp * v, amp * q.sqrt() * d, amp * q * dd]
                    }
                }
            })
            .collect();
        RadialTable::new(step, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_closed_form_values() {
        let p = profile_1d_cubic(1.0).unwrap();
        assert!((p.value(0.0) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(p.mass(), 2.0);
        assert_eq!(p.mass_prime(), 1.0);
        let q = profile_1d_cubic(4.0).unwrap();
        let ratio = q.value(5.0) / q.value(4.0);
        assert!((ratio / (-2.0f64).exp() - 1.0).abs() < 0.01);
    }

    #[test]
    fn closed_form_residual_on_grid() {
        let g = Grid::centered(1, 60.0, 1024).unwrap();
        let p = profile_1d_cubic(1.0).unwrap();
        assert!(p.residual_on(&g) < 1e-10);
    }

    #[test]
    fn mass_is_monotone_in_mu() {
        let mut prev = 0.0;
        for mu in [0.25, 0.5, 1.0, 2.0, 4.0] {
            let m = profile_1d_cubic(mu).unwrap().mass();
            assert!(m > prev);
            prev = m;
        }
    }

    #[test]
    fn petviashvili_matches_closed_form() {
        let g = Grid::centered(1, 60.0, 1024).unwrap();
        let p = profile_petviashvili(1.0, 2.0, g, 500, 1e-12).unwrap();
        let exact = profile_1d_cubic(1.0).unwrap();
        let samples = p.samples_on(&g);
        for (f, v) in samples.iter().enumerate() {
            let x = g.point(f)[0];
            assert!((v - exact.value(x)).abs() < 1e-8, "x = {x}");
        }
        assert!((p.mass() - 2.0).abs() < 1e-8);
        assert!((p.mass_prime() - 1.0).abs() < 1e-5);
        // table interpolation off the grid
        assert!((p.value(0.123) - exact.value(0.123)).abs() < 1e-8);
    }

    #[test]
    fn two_dimensional_quadratic_profile() {
        let g = Grid::centered(2, 32.0, 128).unwrap();
        let p = profile_petviashvili(1.0, 1.0, g, 500, 1e-11).unwrap();
        assert!(p.residual() < 1e-10);
        assert!(p.mass_prime() > 0.0);
        // m ∝ μ^{2/s - N/2} = μ, so m' = m/μ
        assert!((p.mass_prime() / p.mass() - 1.0).abs() < 1e-5);
        let samples = p.samples_on(&g);
        assert!(samples.iter().all(|&v| v > 0.0));
        assert!(p.value(0.0) > p.value(0.5) && p.value(0.5) > p.value(2.0));
    }

    #[test]
    fn rejects_supercritical_exponent() {
        let g = Grid::centered(1, 60.0, 256).unwrap();
        assert!(matches!(
            profile_petviashvili(1.0, 5.0, g, 100, 1e-10),
            Err(Error::AssumptionViolated { .. })
        ));
        let g2 = Grid::centered(2, 30.0, 64).unwrap();
        assert!(profile_petviashvili(1.0, 2.0, g2, 100, 1e-10).is_err());
    }

    #[test]
    fn rescaling_follows_scaling_law() {
        let g = Grid::centered(1, 60.0, 1024).unwrap();
        let p = profile_petviashvili(1.0, 2.0, g, 500, 1e-12).unwrap();
        let q = p.rescaled(4.0).unwrap();
        let exact = profile_1d_cubic(4.0).unwrap();
        assert!((q.value(0.3) - exact.value(0.3)).abs() < 1e-7);
        assert!((q.mass() - exact.mass()).abs() < 1e-7);
        assert!((p.mu_for_mass(4.0).unwrap() - 4.0).abs() < 1e-6);
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::centered(2, 32.0, 64).unwrap();
        let p = profile_petviashvili(1.0, 1.0, g, 500, 1e-11).unwrap();
        let (j, b) = (dir.path().join("p.json"), dir.path().join("p.bin"));
        p.write_cache(&j, &b).unwrap();
        let back = Profile::read_cache(&j, &b).unwrap();
        assert_eq!(back.header(), p.header());
        assert!((back.value(0.7) - p.value(0.7)).abs() < 1e-14);
        let c = profile_1d_cubic(1.0).unwrap();
        c.write_cache(&j, &b).unwrap();
        let back = Profile::read_cache(&j, &b).unwrap();
        assert!((back.value(1.3) - c.value(1.3)).abs() < 1e-10);
    }
}
