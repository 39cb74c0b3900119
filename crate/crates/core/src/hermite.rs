//! Quintic Hermite interpolation of radial functions tabulated with their
//! first two derivatives on a uniform grid starting at zero.

#[derive(Clone, Debug)]
pub struct RadialTable {
    step: f64,
    values: Vec<[f64; 3]>,
}

impl RadialTable {
    /// `values[i] = [f, f', f'']` at `r = i * step`; beyond the last node
    /// the function is taken to vanish.
    pub fn new(step: f64, values: Vec<[f64; 3]>) -> Self {
        assert!(values.len() >= 2, "need at least one segment");
        Self { step, values }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn segments(&self) -> usize {
        self.values.len() - 1
    }

    pub fn extent(&self) -> f64 {
        self.step * self.segments() as f64
    }

    pub fn nodes(&self) -> &[[f64; 3]] {
        &self.values
    }

    /// `(f, f', f'')` at `r >= 0`.
    pub fn eval(&self, r: f64) -> (f64, f64, f64) {
        let n = self.segments();
        let u = r / self.step;
        if u >= n as f64 {
            return (0.0, 0.0, 0.0);
        }
        let i = (u.floor() as usize).min(n - 1);
        let t = u - i as f64;
        let c = self.value_poly(i);
        let mut p = 0.0;
        let mut dp = 0.0;
        let mut d2p = 0.0;
        for k in (0..6).rev() {
            p = p * t + c[k];
        }
        for k in (1..6).rev() {
            dp = dp * t + k as f64 * c[k];
        }
        for k in (2..6).rev() {
            d2p = d2p * t + (k * (k - 1)) as f64 * c[k];
        }
        let h = self.step;
        (p, dp / h, d2p / (h * h))
    }

    /// Monomial coefficients in local `t ∈ [0, 1]` of segment `i`.
    pub fn value_poly(&self, i: usize) -> [f64; 6] {
        let h = self.step;
        let (a, b) = (&self.values[i], &self.values[i + 1]);
        let (p0, d0, s0) = (a[0], a[1] * h, a[2] * h * h);
        let (p1, d1, s1) = (b[0], b[1] * h, b[2] * h * h);
        [
            p0,
            d0,
            0.5 * s0,
            10.0 * (p1 - p0) - 6.0 * d0 - 4.0 * d1 - 1.5 * s0 + 0.5 * s1,
            -15.0 * (p1 - p0) + 8.0 * d0 + 7.0 * d1 + 1.5 * s0 - s1,
            6.0 * (p1 - p0) - 3.0 * d0 - 3.0 * d1 - 0.5 * s0 + 0.5 * s1,
        ]
    }

    /// Coefficients in local `t` of the physical derivative `f'` on segment `i`.
    pub fn derivative_poly(&self, i: usize) -> [f64; 5] {
        let c = self.value_poly(i);
        let mut d = [0.0; 5];
        for k in 1..6 {
            d[k - 1] = k as f64 * c[k] / self.step;
        }
        d
    }
}
