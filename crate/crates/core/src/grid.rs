//! Uniform periodic grids in one to three dimensions.
//!
//! Samples are stored row-major with the last axis fastest. Every axis has
//! the same length `len` and point count `points`; the grid point with
//! multi-index `(i0, i1, i2)` sits at `origin + i * dx` on each axis.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Result};

/// Points in up to three dimensions. Unused trailing components are zero.
pub type Point = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub len: f64,
    pub points: usize,
    pub origin: f64,
}

impl Grid {
    pub fn new(dim: usize, len: f64, points: usize, origin: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(invalid(format!("grid dimension must be 1..3, got {dim}")));
        }
        if !(len.is_finite() && len > 0.0) {
            return Err(invalid(format!("grid length must be positive, got {len}")));
        }
        if points < 4 || !points.is_power_of_two() {
            return Err(invalid(format!(
                "grid points per dimension must be a power of two >= 4, got {points}"
            )));
        }
        Ok(Self {
            dim,
            len,
            points,
            origin,
        })
    }

    /// Grid on `[-L/2, L/2)^N`, the layout used for wave fields.
    pub fn centered(dim: usize, len: f64, points: usize) -> Result<Self> {
        Self::new(dim, len, points, -0.5 * len)
    }

    /// Grid on `[0, L)^N`, the layout used for potential realizations.
    pub fn unit_cell(dim: usize, len: f64, points: usize) -> Result<Self> {
        Self::new(dim, len, points, 0.0)
    }

    pub fn total(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn dx(&self) -> f64 {
        self.len / self.points as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.len.powi(self.dim as i32)
    }

    /// Coordinate of index `i` along any axis.
    pub fn coord(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.dx()
    }

    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let m = self.points;
        match self.dim {
            1 => [flat, 0, 0],
            2 => [flat / m, flat % m, 0],
            _ => [flat / (m * m), (flat / m) % m, flat % m],
        }
    }

    pub fn flat_index(&self, idx: [usize; 3]) -> usize {
        let m = self.points;
        match self.dim {
            1 => idx[0],
            2 => idx[0] * m + idx[1],
            _ => (idx[0] * m + idx[1]) * m + idx[2],
        }
    }

    pub fn point(&self, flat: usize) -> Point {
        let idx = self.multi_index(flat);
        let mut p = [0.0; 3];
        for (axis, c) in p.iter_mut().enumerate().take(self.dim) {
            *c = self.coord(idx[axis]);
        }
        p
    }

    /// Signed angular wavenumber for FFT index `i` along an axis; the
    /// Nyquist index maps to the negative frequency.
    pub fn wavenumber(&self, i: usize) -> f64 {
        let m = self.points as i64;
        let j = i as i64;
        let signed = if j < m / 2 { j } else { j - m };
        2.0 * PI * signed as f64 / self.len
    }

    /// Wavenumber for odd-order derivatives: zero at the Nyquist index.
    pub fn derivative_wavenumber(&self, i: usize) -> f64 {
        if i == self.points / 2 {
            0.0
        } else {
            self.wavenumber(i)
        }
    }

    pub fn wavevector(&self, flat: usize) -> Point {
        let idx = self.multi_index(flat);
        let mut k = [0.0; 3];
        for (axis, c) in k.iter_mut().enumerate().take(self.dim) {
            *c = self.wavenumber(idx[axis]);
        }
        k
    }

    /// `|k|^2` for every flat index, matching the FFT layout.
    pub fn k_squared(&self) -> Vec<f64> {
        (0..self.total())
            .map(|f| {
                let k = self.wavevector(f);
                k[0] * k[0] + k[1] * k[1] + k[2] * k[2]
            })
            .collect()
    }

    /// Largest `|k|^2` represented on the grid.
    pub fn k_squared_max(&self) -> f64 {
        let kn = PI / self.dx();
        self.dim as f64 * kn * kn
    }

    /// Reduces a displacement to its nearest periodic image.
    pub fn wrap_displacement(&self, d: f64) -> f64 {
        d - self.len * (d / self.len).round()
    }

    /// Maps a coordinate into `[origin, origin + L)`.
    pub fn wrap_coord(&self, x: f64) -> f64 {
        self.origin + (x - self.origin).rem_euclid(self.len)
    }

    pub fn same_layout(&self, other: &Grid) -> bool {
        self.dim == other.dim
            && self.points == other.points
            && (self.len - other.len).abs() <= 1e-12 * self.len
            && (self.origin - other.origin).abs() <= 1e-12 * self.len
    }
}

pub fn norm(p: &Point) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Copies the first `dim` entries of a slice into a padded point.
pub fn point_from_slice(v: &[f64]) -> Point {
    let mut p = [0.0; 3];
    for (dst, src) in p.iter_mut().zip(v) {
        *dst = *src;
    }
    p
}
