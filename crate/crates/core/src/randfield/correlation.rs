//! Two-point correlation models `R(r) = 4 E[V(x + r) V(x)]`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::hermite::RadialTable;
use crate::quad;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationKind {
    /// `R(r) = R0 exp(-r^2 / (2 ℓ^2))`.
    GaussianBell,
    /// `R = 4 K⋆K` for the compact C² bump `K(x) = A (1 - |x|^2/ρ0^2)^3_+`.
    CompactKernel,
}

/// Serializable description of the statistical law of the potential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationModel {
    pub kind: CorrelationKind,
    #[serde(rename = "R0")]
    pub r0: f64,
    pub ell: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rho0: Option<f64>,
}

impl CorrelationModel {
    pub fn gaussian_bell(r0: f64, ell: f64) -> Self {
        Self {
            kind: CorrelationKind::GaussianBell,
            r0,
            ell,
            rho0: None,
        }
    }

    /// Compact-kernel model; `ell` is set to the kernel half-width.
    pub fn compact_kernel(r0: f64, rho0: f64) -> Self {
        Self {
            kind: CorrelationKind::CompactKernel,
            r0,
            ell: rho0,
            rho0: Some(rho0),
        }
    }

    /// Length scale used for box-size preconditions.
    pub fn length_scale(&self) -> f64 {
        match self.kind {
            CorrelationKind::GaussianBell => self.ell,
            CorrelationKind::CompactKernel => self.rho0.unwrap_or(self.ell),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r0.is_finite() && self.r0 >= 0.0) {
            return Err(invalid(format!("R0 must be >= 0, got {}", self.r0)));
        }
        let l = self.length_scale();
        if !(l.is_finite() && l > 0.0) {
            return Err(invalid(format!("correlation length must be > 0, got {l}")));
        }
        if self.kind == CorrelationKind::CompactKernel && self.rho0.is_none() {
            return Err(invalid("compact-kernel model needs rho0"));
        }
        Ok(())
    }
}

/// `(R, R', R'')` at a radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialValue {
    pub r: f64,
    pub dr: f64,
    pub d2r: f64,
}

/// The unit C² bump `(1 - r^2)^3` on `[0, 1]` and its first two derivatives.
pub(crate) fn bump(r: f64) -> (f64, f64, f64) {
    if r >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let q = 1.0 - r * r;
    (q * q * q, -6.0 * r * q * q, -6.0 * q * q + 24.0 * r * r * q)
}

/// Evaluation object for a correlation model in a given dimension.
///
/// The compact-kernel self-convolution depends on the dimension; it is
/// tabulated once (values and two derivatives by quadrature) and
/// interpolated with quintic Hermite segments.
#[derive(Clone, Debug)]
pub struct Correlation {
    model: CorrelationModel,
    dim: usize,
    table: Option<RadialTable>,
    kernel_amplitude: f64,
}

impl Correlation {
    pub fn new(model: CorrelationModel, dim: usize) -> Result<Self> {
        model.validate()?;
        if !(1..=3).contains(&dim) {
            return Err(invalid(format!("dimension must be 1..3, got {dim}")));
        }
        let mut out = Self {
            model,
            dim,
            table: None,
            kernel_amplitude: 0.0,
        };
        if model.kind == CorrelationKind::CompactKernel {
            let rho0 = model.rho0.expect("validated");
            let unit = kernel_l2_squared(dim, rho0);
            out.kernel_amplitude = if model.r0 > 0.0 {
                (model.r0 / (4.0 * unit)).sqrt()
            } else {
                0.0
            };
            out.table = Some(tabulate(dim, rho0, out.kernel_amplitude, 256));
        }
        Ok(out)
    }

    pub fn model(&self) -> &CorrelationModel {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Amplitude `A` of the moving-average kernel (compact model only).
    pub fn kernel_amplitude(&self) -> f64 {
        self.kernel_amplitude
    }

    /// Radius beyond which `R` vanishes (or is below 1e-30 relative).
    pub fn support_radius(&self) -> f64 {
        match self.model.kind {
            CorrelationKind::GaussianBell => 12.0 * self.model.ell,
            CorrelationKind::CompactKernel => 2.0 * self.model.rho0.expect("validated"),
        }
    }

    /// `(R, R', R'')` at radius `r >= 0`.
    pub fn radial(&self, r: f64) -> RadialValue {
        let r = r.abs();
        match self.model.kind {
            CorrelationKind::GaussianBell => {
                let l2 = self.model.ell * self.model.ell;
                let e = self.model.r0 * (-0.5 * r * r / l2).exp();
                RadialValue {
                    r: e,
                    dr: -r / l2 * e,
                    d2r: (r * r / l2 - 1.0) / l2 * e,
                }
            }
            CorrelationKind::CompactKernel => {
                let (v, d, dd) = self.table.as_ref().expect("tabulated").eval(r);
                RadialValue { r: v, dr: d, d2r: dd }
            }
        }
    }

    /// `R'(r)/r`, continuous at the origin where it equals `R''(0)`.
    pub fn dr_over_r(&self, r: f64) -> f64 {
        let r = r.abs();
        match self.model.kind {
            CorrelationKind::GaussianBell => {
                let l2 = self.model.ell * self.model.ell;
                -self.model.r0 / l2 * (-0.5 * r * r / l2).exp()
            }
            CorrelationKind::CompactKernel => {
                if r < 1e-12 {
                    self.radial(0.0).d2r
                } else {
                    self.radial(r).dr / r
                }
            }
        }
    }

    /// Hessian `∂_i ∂_j R(y)` of the radial correlation at a point.
    pub fn hessian(&self, y: &[f64; 3]) -> [[f64; 3]; 3] {
        let r = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
        let rv = self.radial(r);
        let q = self.dr_over_r(r);
        let mut h = [[0.0; 3]; 3];
        for i in 0..self.dim {
            for j in 0..self.dim {
                let yy = if r > 0.0 { y[i] * y[j] / (r * r) } else { 0.0 };
                let delta = if i == j { 1.0 } else { 0.0 };
                h[i][j] = if r > 0.0 {
                    rv.d2r * yy + q * (delta - yy)
                } else {
                    rv.d2r * delta
                };
            }
        }
        h
    }

    /// `∫_0^∞ R'(s)/s ds`, the scalar entering the diffusion matrix.
    ///
    /// Closed form for the Gaussian bell; exact piecewise integration of the
    /// Hermite interpolant for the compact kernel.
    pub fn dr_over_r_integral(&self) -> f64 {
        match self.model.kind {
            CorrelationKind::GaussianBell => -self.model.r0 * (PI / 2.0).sqrt() / self.model.ell,
            CorrelationKind::CompactKernel => dr_over_r_integral(self.table.as_ref().expect("tabulated")),
        }
    }

    /// Continuous spectral density of the potential covariance `R/4`
    /// (Gaussian bell only).
    pub fn spectral_density(&self, k_sq: f64) -> Option<f64> {
        match self.model.kind {
            CorrelationKind::GaussianBell => {
                let l = self.model.ell;
                let n = self.dim as i32;
                Some(
                    0.25 * self.model.r0
                        * (2.0 * PI * l * l).powf(0.5 * n as f64)
                        * (-0.5 * k_sq * l * l).exp(),
                )
            }
            CorrelationKind::CompactKernel => None,
        }
    }
}

/// `∫_{R^N} b(|y|/ρ0)^2 dy` for the unit bump.
pub(crate) fn kernel_l2_squared(dim: usize, rho0: f64) -> f64 {
    let surface = match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 4.0 * PI,
    };
    let radial = quad::integrate(
        |r: f64| bump(r).0.powi(2) * r.powi(dim as i32 - 1),
        0.0,
        1.0,
        1e-14,
        1e-300,
    );
    surface * radial * rho0.powi(dim as i32)
}

fn tabulate(dim: usize, rho0: f64, amplitude: f64, intervals: usize) -> RadialTable {
    let step = 2.0 * rho0 / intervals as f64;
    let scale = 4.0 * amplitude * amplitude;
    let values = (0..=intervals)
        .map(|i| self_convolution(dim, rho0, i as f64 * step).map(|v| scale * v))
        .collect();
    RadialTable::new(step, values)
}

/// Segment-wise exact `∫ R'(s)/s ds` of the interpolant.
fn dr_over_r_integral(table: &RadialTable) -> f64 {
    let mut total = 0.0;
    for i in 0..table.segments() {
        // R'(s) on the segment as a polynomial in local t ∈ [0,1]
        let c = table.derivative_poly(i);
        // ∫_0^1 P(t) h / (sa + h t) dt = ∫_0^1 P(t) / (t + sa/h) dt
        let shift = i as f64;
        if i == 0 {
            // P(0) = R'(0) = 0, so P(t)/t is a polynomial
            total += (1..c.len()).map(|k| c[k] / k as f64).sum::<f64>();
        } else {
            // synthetic division of P(t) by (t + shift)
            let deg = c.len() - 1;
            let mut q = vec![0.0; deg];
            let mut carry = c[deg];
            for k in (1..=deg).rev() {
                q[k - 1] = carry;
                carry = c[k - 1] - shift * carry;
            }
            let poly: f64 = q.iter().enumerate().map(|(k, v)| v / (k + 1) as f64).sum();
            total += poly + carry * ((1.0 + shift) / shift).ln();
        }
    }
    total
}

/// `[K⋆K, ∂_r K⋆K, ∂_r^2 K⋆K]` at separation `r e_1` for the unit-amplitude
/// bump of half-width `rho0`.
fn self_convolution(dim: usize, rho0: f64, r: f64) -> [f64; 3] {
    let tol = 1e-13;
    let floor = 1e-18 * rho0.powi(dim as i32);
    let kern = |y: f64| bump(y / rho0);
    // Kernel at z = y + r e_1 and its first two derivatives along e_1, which
    // are polynomials in (z_1, |z|^2) inside the support.
    let shifted = |z1: f64, z: f64| -> [f64; 3] {
        let u2 = (z / rho0).powi(2);
        if u2 >= 1.0 {
            return [0.0; 3];
        }
        let q = 1.0 - u2;
        let w = z1 / rho0;
        let r2 = rho0 * rho0;
        [
            q * q * q,
            -6.0 * q * q * z1 / r2,
            (-6.0 * q * q + 24.0 * w * w * q) / r2,
        ]
    };
    let lo = (-rho0).max(-rho0 - r);
    let hi = rho0.min(rho0 - r);
    if hi <= lo {
        return [0.0; 3];
    }
    let mid = -0.5 * r;
    let breaks: Vec<f64> = if lo < mid && mid < hi {
        vec![lo, mid, hi]
    } else {
        vec![lo, hi]
    };
    let mut out = [0.0; 3];
    for (slot, item) in out.iter_mut().enumerate() {
        *item = match dim {
            1 => quad::integrate_pieces(
                |y: f64| kern(y.abs()).0 * shifted(y + r, (y + r).abs())[slot],
                &breaks,
                tol,
                floor,
            ),
            2 => quad::integrate_pieces(
                |y1: f64| {
                    let rmax = (rho0 * rho0 - y1 * y1)
                        .min(rho0 * rho0 - (y1 + r) * (y1 + r))
                        .max(0.0)
                        .sqrt();
                    // polynomial in y2 of degree <= 12
                    2.0 * quad::gauss_legendre8(
                        |y2: f64| {
                            let a = (y1 * y1 + y2 * y2).sqrt();
                            let z1 = y1 + r;
                            let z = (z1 * z1 + y2 * y2).sqrt();
                            kern(a).0 * shifted(z1, z)[slot]
                        },
                        0.0,
                        rmax,
                    )
                },
                &breaks,
                tol,
                floor,
            ),
            _ => quad::integrate_pieces(
                |y1: f64| {
                    let rmax = (rho0 * rho0 - y1 * y1)
                        .min(rho0 * rho0 - (y1 + r) * (y1 + r))
                        .max(0.0)
                        .sqrt();
                    // polynomial in rho of degree <= 13
                    quad::gauss_legendre8(
                        |rho: f64| {
                            let a = (y1 * y1 + rho * rho).sqrt();
                            let z1 = y1 + r;
                            let z = (z1 * z1 + rho * rho).sqrt();
                            2.0 * PI * rho * kern(a).0 * shifted(z1, z)[slot]
                        },
                        0.0,
                        rmax,
                    )
                },
                &breaks,
                tol,
                floor,
            ),
        };
    }
    out
}
