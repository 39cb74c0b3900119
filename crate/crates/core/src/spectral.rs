//! Multi-dimensional FFTs on [`Grid`] layouts and the spectral operators
//! built on them (gradients, Laplacian, Parseval sums).

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::grid::Grid;

/// Forward/inverse FFT pair for one grid. Forward is unnormalized; inverse
/// divides by the total number of points.
#[derive(Clone)]
pub struct SpectralOps {
    grid: Grid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    k_sq: Vec<f64>,
}

impl std::fmt::Debug for SpectralOps {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralOps").field("grid", &self.grid).finish()
    }
}

impl SpectralOps {
    pub fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(grid.points);
        let inv = planner.plan_fft_inverse(grid.points);
        let k_sq = grid.k_squared();
        Self {
            grid,
            fwd,
            inv,
            k_sq,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `|k|^2` in FFT order.
    pub fn k_squared(&self) -> &[f64] {
        &self.k_sq
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.fwd);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inv);
        let scale = 1.0 / self.grid.total() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let m = self.grid.points;
        let dim = self.grid.dim;
        assert_eq!(data.len(), self.grid.total(), "buffer does not match grid");
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        // last axis is contiguous
        plan.process_with_scratch(data, &mut scratch);
        if dim == 1 {
            return;
        }
        let mut lines = Vec::new();
        for axis in 0..dim - 1 {
            let stride = m.pow((dim - 1 - axis) as u32);
            let block = stride * m;
            lines.resize(block, Complex64::default());
            for chunk in data.chunks_mut(block) {
                for j in 0..stride {
                    for i in 0..m {
                        lines[j * m + i] = chunk[i * stride + j];
                    }
                }
                plan.process_with_scratch(&mut lines, &mut scratch);
                for j in 0..stride {
                    for i in 0..m {
                        chunk[i * stride + j] = lines[j * m + i];
                    }
                }
            }
        }
    }

    pub fn to_spectrum(&self, field: &[Complex64]) -> Vec<Complex64> {
        let mut out = field.to_vec();
        self.forward(&mut out);
        out
    }

    pub fn from_spectrum(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        let mut out = spectrum.to_vec();
        self.inverse(&mut out);
        out
    }

    /// Spectral partial derivative along `axis` of a field given by its
    /// (unnormalized) spectrum.
    pub fn derivative_from_spectrum(&self, spectrum: &[Complex64], axis: usize) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = spectrum
            .iter()
            .enumerate()
            .map(|(f, z)| {
                let k = self.grid.derivative_wavenumber(self.grid.multi_index(f)[axis]);
                z * Complex64::new(0.0, k)
            })
            .collect();
        self.inverse(&mut out);
        out
    }

    pub fn gradient(&self, field: &[Complex64]) -> Vec<Vec<Complex64>> {
        let spec = self.to_spectrum(field);
        (0..self.grid.dim)
            .map(|axis| self.derivative_from_spectrum(&spec, axis))
            .collect()
    }

    pub fn laplacian(&self, field: &[Complex64]) -> Vec<Complex64> {
        let mut spec = self.to_spectrum(field);
        spec.iter_mut()
            .zip(&self.k_sq)
            .for_each(|(z, k2)| *z *= -k2);
        self.inverse(&mut spec);
        spec
    }

    /// `∫|∇u|^2` and `∫|u|^2` from one transform (Parseval).
    pub fn gradient_and_mass_integrals(&self, field: &[Complex64]) -> (f64, f64) {
        let spec = self.to_spectrum(field);
        let n = self.grid.total() as f64;
        let w = self.grid.volume() / (n * n);
        let mut grad = 0.0;
        let mut mass = 0.0;
        for (z, k2) in spec.iter().zip(&self.k_sq) {
            let p = z.norm_sqr();
            grad += k2 * p;
            mass += p;
        }
        (grad * w, mass * w)
    }

    /// `‖u‖_{H^1} = (∫ (1+|k|^2)|û|^2)^{1/2}`.
    pub fn h1_norm(&self, field: &[Complex64]) -> f64 {
        let (g, m) = self.gradient_and_mass_integrals(field);
        (g + m).sqrt()
    }

    /// Momentum `⟨iu, ∇u⟩ = Re ∫ iu conj(∇u)`, per axis.
    pub fn momentum(&self, field: &[Complex64]) -> [f64; 3] {
        let spec = self.to_spectrum(field);
        let n = self.grid.total() as f64;
        let w = self.grid.volume() / (n * n);
        let mut p = [0.0; 3];
        for (f, z) in spec.iter().enumerate() {
            let idx = self.grid.multi_index(f);
            let pw = z.norm_sqr();
            for (axis, pa) in p.iter_mut().enumerate().take(self.grid.dim) {
                *pa += self.grid.derivative_wavenumber(idx[axis]) * pw;
            }
        }
        p.iter_mut().for_each(|v| *v *= w);
        p
    }
}

pub fn to_complex(re: &[f64]) -> Vec<Complex64> {
    re.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

/// Real inner product `⟨u, v⟩ = Re ∫ u conj(v)` with quadrature weight `dv`.
pub fn real_inner(u: &[Complex64], v: &[Complex64], dv: f64) -> f64 {
    u.iter()
        .zip(v)
        .map(|(a, b)| a.re * b.re + a.im * b.im)
        .sum::<f64>()
        * dv
}

pub fn l2_norm(u: &[Complex64], dv: f64) -> f64 {
    (u.iter().map(|z| z.norm_sqr()).sum::<f64>() * dv).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn round_trip_3d() {
        let g = Grid::centered(3, 4.0, 8).unwrap();
        let ops = SpectralOps::new(g);
        let data: Vec<Complex64> = (0..g.total())
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let back = ops.from_spectrum(&ops.to_spectrum(&data));
        for (a, b) in data.iter().zip(&back) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn derivative_of_single_mode_2d() {
        let g = Grid::unit_cell(2, 2.0 * PI, 16).unwrap();
        let ops = SpectralOps::new(g);
        let f: Vec<Complex64> = (0..g.total())
            .map(|i| {
                let p = g.point(i);
                Complex64::new((2.0 * p[0] + 3.0 * p[1]).sin(), 0.0)
            })
            .collect();
        let grad = ops.gradient(&f);
        for i in 0..g.total() {
            let p = g.point(i);
            let c = (2.0 * p[0] + 3.0 * p[1]).cos();
            assert!((grad[0][i].re - 2.0 * c).abs() < 1e-12);
            assert!((grad[1][i].re - 3.0 * c).abs() < 1e-12);
        }
    }

    #[test]
    fn plane_wave_momentum_and_h1() {
        let g = Grid::unit_cell(1, 2.0 * PI, 32).unwrap();
        let ops = SpectralOps::new(g);
        let k = 3.0;
        let amp = 0.7;
        let f: Vec<Complex64> = (0..32)
            .map(|i| Complex64::from_polar(amp, k * g.coord(i)))
            .collect();
        let p = ops.momentum(&f);
        // ⟨iψ, ∇ψ⟩ = k ∫|ψ|^2
        assert!((p[0] - k * amp * amp * 2.0 * PI).abs() < 1e-12);
        let h1 = ops.h1_norm(&f);
        let expect = amp * (2.0 * PI * (1.0 + k * k)).sqrt();
        assert!((h1 - expect).abs() < 1e-12);
    }
}
