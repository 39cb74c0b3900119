//! Scalar potentials with C² pointwise evaluation.

use crate::grid::Point;

/// Value, gradient and Hessian at one point. Components beyond the
/// potential's dimension are zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldSample {
    pub value: f64,
    pub grad: [f64; 3],
    pub hess: [[f64; 3]; 3],
}

pub trait Potential: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &Point) -> FieldSample;

    fn value(&self, x: &Point) -> f64 {
        self.eval(x).value
    }

    /// Spatial period of the potential, if it is periodic.
    fn period(&self) -> Option<f64> {
        None
    }
}

/// `V_h(x) = V(h x)`: the slowly varying potential seen by the wave field.
pub struct Scaled<'a> {
    pub inner: &'a dyn Potential,
    pub h: f64,
}

impl Potential for Scaled<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn period(&self) -> Option<f64> {
        self.inner.period().map(|p| p / self.h)
    }

    fn eval(&self, x: &Point) -> FieldSample {
        let y = [self.h * x[0], self.h * x[1], self.h * x[2]];
        let s = self.inner.eval(&y);
        let mut out = FieldSample {
            value: s.value,
            ..Default::default()
        };
        for i in 0..3 {
            out.grad[i] = self.h * s.grad[i];
            for j in 0..3 {
                out.hess[i][j] = self.h * self.h * s.hess[i][j];
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Constant {
    pub dim: usize,
    pub value: f64,
}

impl Potential for Constant {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, _x: &Point) -> FieldSample {
        FieldSample {
            value: self.value,
            ..Default::default()
        }
    }
}

/// `V(x) = slope · x`.
#[derive(Clone, Copy, Debug)]
pub struct Ramp {
    pub dim: usize,
    pub slope: [f64; 3],
}

impl Potential for Ramp {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &Point) -> FieldSample {
        FieldSample {
            value: (0..self.dim).map(|i| self.slope[i] * x[i]).sum(),
            grad: self.slope,
            ..Default::default()
        }
    }
}

/// `V(x) = ½ c |x|^2`.
#[derive(Clone, Copy, Debug)]
pub struct Quadratic {
    pub dim: usize,
    pub curvature: f64,
}

impl Potential for Quadratic {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &Point) -> FieldSample {
        let mut s = FieldSample::default();
        for i in 0..self.dim {
            s.value += 0.5 * self.curvature * x[i] * x[i];
            s.grad[i] = self.curvature * x[i];
            s.hess[i][i] = self.curvature;
        }
        s
    }
}

/// `V(x) = amplitude · cos(k · x)`.
#[derive(Clone, Copy, Debug)]
pub struct CosineMode {
    pub dim: usize,
    pub amplitude: f64,
    pub k: [f64; 3],
}

impl Potential for CosineMode {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &Point) -> FieldSample {
        let phase: f64 = (0..self.dim).map(|i| self.k[i] * x[i]).sum();
        let (s, c) = phase.sin_cos();
        let mut out = FieldSample {
            value: self.amplitude * c,
            ..Default::default()
        };
        for i in 0..self.dim {
            out.grad[i] = -self.amplitude * s * self.k[i];
            for j in 0..self.dim {
                out.hess[i][j] = -self.amplitude * c * self.k[i] * self.k[j];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_chain_rule() {
        let base = CosineMode {
            dim: 1,
            amplitude: 2.0,
            k: [3.0, 0.0, 0.0],
        };
        let h = 0.1;
        let scaled = Scaled { inner: &base, h };
        let x = [1.3, 0.0, 0.0];
        let s = scaled.eval(&x);
        assert!((s.value - 2.0 * (0.3 * 1.3f64).cos()).abs() < 1e-15);
        assert!((s.grad[0] + 2.0 * 0.3 * (0.3 * 1.3f64).sin()).abs() < 1e-15);
        assert!((s.hess[0][0] + 2.0 * 0.09 * (0.3 * 1.3f64).cos()).abs() < 1e-15);
    }
}
