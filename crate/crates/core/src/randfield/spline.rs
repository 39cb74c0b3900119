//! Periodic quintic B-spline interpolation on uniform grids (C⁴).

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::grid::{Grid, Point};
use crate::potential::FieldSample;
use crate::spectral::SpectralOps;

/// Blending weights (and first two derivatives in index units) for the six
/// coefficients `i-2 ..= i+3` at fractional offset `t ∈ [0, 1)`.
fn weights(t: f64) -> ([f64; 6], [f64; 6], [f64; 6]) {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let s = 1.0 - t;
    let w = [
        s.powi(5),
        5.0 * t5 - 20.0 * t4 + 20.0 * t3 + 20.0 * t2 - 50.0 * t + 26.0,
        -10.0 * t5 + 30.0 * t4 - 60.0 * t2 + 66.0,
        10.0 * t5 - 20.0 * t4 - 20.0 * t3 + 20.0 * t2 + 50.0 * t + 26.0,
        -5.0 * t5 + 5.0 * t4 + 10.0 * t3 + 10.0 * t2 + 5.0 * t + 1.0,
        t5,
    ];
    let d = [
        -5.0 * s.powi(4),
        25.0 * t4 - 80.0 * t3 + 60.0 * t2 + 40.0 * t - 50.0,
        -50.0 * t4 + 120.0 * t3 - 120.0 * t,
        50.0 * t4 - 80.0 * t3 - 60.0 * t2 + 40.0 * t + 50.0,
        -25.0 * t4 + 20.0 * t3 + 30.0 * t2 + 20.0 * t + 5.0,
        5.0 * t4,
    ];
    let dd = [
        20.0 * s.powi(3),
        100.0 * t3 - 240.0 * t2 + 120.0 * t + 40.0,
        -200.0 * t3 + 360.0 * t2 - 120.0,
        200.0 * t3 - 240.0 * t2 - 120.0 * t + 40.0,
        -100.0 * t3 + 60.0 * t2 + 60.0 * t + 20.0,
        20.0 * t3,
    ];
    let scale = 1.0 / 120.0;
    (w.map(|v| v * scale), d.map(|v| v * scale), dd.map(|v| v * scale))
}

/// Fourier symbol of sampling the quintic B-spline at the nodes.
fn symbol(theta: f64) -> f64 {
    (66.0 + 52.0 * theta.cos() + 2.0 * (2.0 * theta).cos()) / 120.0
}

#[derive(Clone, Debug)]
pub struct QuinticSpline {
    grid: Grid,
    coeffs: Vec<f64>,
}

impl QuinticSpline {
    /// Interpolates a field given the unnormalized DFT of its samples.
    pub fn from_sample_spectrum(ops: &SpectralOps, spectrum: &[Complex64]) -> Self {
        let grid = *ops.grid();
        let m = grid.points;
        let sym: Vec<f64> = (0..m).map(|i| symbol(2.0 * PI * i as f64 / m as f64)).collect();
        let mut c: Vec<Complex64> = spectrum
            .iter()
            .enumerate()
            .map(|(f, z)| {
                let idx = grid.multi_index(f);
                let s: f64 = (0..grid.dim).map(|a| sym[idx[a]]).product();
                z / s
            })
            .collect();
        ops.inverse(&mut c);
        Self {
            grid,
            coeffs: c.into_iter().map(|z| z.re).collect(),
        }
    }

    pub fn eval(&self, x: &Point) -> FieldSample {
        let g = &self.grid;
        let m = g.points as i64;
        let inv_dx = 1.0 / g.dx();
        let mut base = [0i64; 3];
        let mut w = [[0.0; 6]; 3];
        let mut dw = [[0.0; 6]; 3];
        let mut ddw = [[0.0; 6]; 3];
        for a in 0..g.dim {
            let u = (x[a] - g.origin) * inv_dx;
            let i = u.floor();
            let (w0, w1, w2) = weights(u - i);
            base[a] = i as i64 - 2;
            w[a] = w0;
            dw[a] = w1.map(|v| v * inv_dx);
            ddw[a] = w2.map(|v| v * inv_dx * inv_dx);
        }
        let idx = |a: usize, j: usize| (base[a] + j as i64).rem_euclid(m) as usize;
        let mut s = FieldSample::default();
        match g.dim {
            1 => {
                for j in 0..6 {
                    let c = self.coeffs[idx(0, j)];
                    s.value += w[0][j] * c;
                    s.grad[0] += dw[0][j] * c;
                    s.hess[0][0] += ddw[0][j] * c;
                }
            }
            2 => {
                for j0 in 0..6 {
                    let row = idx(0, j0) * g.points;
                    // partial sums over the fast axis
                    let mut p = [0.0; 3];
                    for j1 in 0..6 {
                        let c = self.coeffs[row + idx(1, j1)];
                        p[0] += w[1][j1] * c;
                        p[1] += dw[1][j1] * c;
                        p[2] += ddw[1][j1] * c;
                    }
                    s.value += w[0][j0] * p[0];
                    s.grad[0] += dw[0][j0] * p[0];
                    s.grad[1] += w[0][j0] * p[1];
                    s.hess[0][0] += ddw[0][j0] * p[0];
                    s.hess[0][1] += dw[0][j0] * p[1];
                    s.hess[1][1] += w[0][j0] * p[2];
                }
                s.hess[1][0] = s.hess[0][1];
            }
            _ => {
                let mm = g.points;
                for j0 in 0..6 {
                    let i0 = idx(0, j0);
                    // q = [v, d1, d2, d11, d12, d22] over axes 1 and 2
                    let mut q = [0.0; 6];
                    for j1 in 0..6 {
                        let row = (i0 * mm + idx(1, j1)) * mm;
                        let mut p = [0.0; 3];
                        for j2 in 0..6 {
                            let c = self.coeffs[row + idx(2, j2)];
                            p[0] += w[2][j2] * c;
                            p[1] += dw[2][j2] * c;
                            p[2] += ddw[2][j2] * c;
                        }
                        q[0] += w[1][j1] * p[0];
                        q[1] += dw[1][j1] * p[0];
                        q[2] += w[1][j1] * p[1];
                        q[3] += ddw[1][j1] * p[0];
                        q[4] += dw[1][j1] * p[1];
                        q[5] += w[1][j1] * p[2];
                    }
                    let (a, b, c) = (w[0][j0], dw[0][j0], ddw[0][j0]);
                    s.value += a * q[0];
                    s.grad[0] += b * q[0];
                    s.grad[1] += a * q[1];
                    s.grad[2] += a * q[2];
                    s.hess[0][0] += c * q[0];
                    s.hess[0][1] += b * q[1];
                    s.hess[0][2] += b * q[2];
                    s.hess[1][1] += a * q[3];
                    s.hess[1][2] += a * q[4];
                    s.hess[2][2] += a * q[5];
                }
                s.hess[1][0] = s.hess[0][1];
                s.hess[2][0] = s.hess[0][2];
                s.hess[2][1] = s.hess[1][2];
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::to_complex;

    #[test]
    fn weights_partition_unity() {
        for &t in &[0.0, 0.3, 0.77] {
            let (w, d, dd) = weights(t);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(d.iter().sum::<f64>().abs() < 1e-13);
            assert!(dd.iter().sum::<f64>().abs() < 1e-12);
        }
        // value at a node is (1, 26, 66, 26, 1)/120 on indices i-2..i+2
        let (w, _, _) = weights(0.0);
        assert!((w[2] - 66.0 / 120.0).abs() < 1e-15);
        assert_eq!(w[5], 0.0);
    }

    #[test]
    fn interpolates_nodes_and_smooth_modes() {
        let g = Grid::unit_cell(2, 2.0 * PI, 32).unwrap();
        let ops = SpectralOps::new(g);
        let f = |x: f64, y: f64| (x + 2.0 * y).sin();
        let samples: Vec<f64> = (0..g.total()).map(|i| {
            let p = g.point(i);
            f(p[0], p[1])
        }).collect();
        let sp = QuinticSpline::from_sample_spectrum(&ops, &ops.to_spectrum(&to_complex(&samples)));
        let node = g.point(37);
        assert!((sp.eval(&node).value - samples[37]).abs() < 1e-12);
        let x = [1.234, 5.678, 0.0];
        let s = sp.eval(&x);
        let c = (x[0] + 2.0 * x[1]).cos();
        assert!((s.value - f(x[0], x[1])).abs() < 1e-6);
        assert!((s.grad[0] - c).abs() < 1e-5);
        assert!((s.grad[1] - 2.0 * c).abs() < 1e-5);
        assert!((s.hess[0][1] + 2.0 * f(x[0], x[1])).abs() < 1e-3);
    }

    #[test]
    fn three_dimensional_mode() {
        let g = Grid::unit_cell(3, 2.0 * PI, 16).unwrap();
        let ops = SpectralOps::new(g);
        let samples: Vec<f64> = (0..g.total()).map(|i| {
            let p = g.point(i);
            (p[0] - p[1] + p[2]).cos()
        }).collect();
        let sp = QuinticSpline::from_sample_spectrum(&ops, &ops.to_spectrum(&to_complex(&samples)));
        let x = [0.4, 2.2, 4.1];
        let s = sp.eval(&x);
        let ph = x[0] - x[1] + x[2];
        assert!((s.value - ph.cos()).abs() < 1e-4);
        assert!((s.grad[2] + ph.sin()).abs() < 1e-3);
        assert!((s.hess[1][2] - ph.cos()).abs() < 1e-2);
    }
}
