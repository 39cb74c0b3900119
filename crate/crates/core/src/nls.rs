//! Strang-split spectral solver for
//! `i ∂_t ψ = (-Δ + λ V_h) ψ - |ψ|^s ψ` on a periodic grid, with the
//! conservation and rate diagnostics used to validate runs.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::envelope::{self, EnvelopeHeader};
use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::potential::{Potential, Scaled};
use crate::spectral::SpectralOps;

/// Complex PDE state.
#[derive(Clone, Debug)]
pub struct WaveField {
    pub grid: Grid,
    pub psi: Vec<Complex64>,
    pub t: f64,
}

impl WaveField {
    pub fn new(grid: Grid, psi: Vec<Complex64>) -> Result<Self> {
        if psi.len() != grid.total() {
            return Err(invalid(format!(
                "field has {} values but grid has {}",
                psi.len(),
                grid.total()
            )));
        }
        Ok(Self { grid, psi, t: 0.0 })
    }

    /// `½ ∫ |ψ|^2`.
    pub fn charge(&self) -> f64 {
        charge(&self.psi, &self.grid)
    }

    pub fn sup_abs(&self) -> f64 {
        self.psi.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Writes `ψ` (interleaved re/im) with the time in the reserved slot.
    pub fn write_checkpoint(&self, path: &Path) -> Result<()> {
        let header = EnvelopeHeader {
            dim: self.grid.dim,
            points: self.grid.points,
            len: self.grid.len,
            seed: 0,
            reserved: self.t,
        };
        let payload: Vec<f64> = self.psi.iter().flat_map(|z| [z.re, z.im]).collect();
        envelope::write_envelope_file(path, header, &payload)
    }

    pub fn read_checkpoint(path: &Path) -> Result<Self> {
        let (h, payload) = envelope::read_envelope_file(path)?;
        let grid = Grid::centered(h.dim, h.len, h.points)?;
        if payload.len() != 2 * grid.total() {
            return Err(invalid("checkpoint payload does not match its grid"));
        }
        let psi = payload.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
        Ok(Self { grid, psi, t: h.reserved })
    }
}

pub fn charge(psi: &[Complex64], grid: &Grid) -> f64 {
    0.5 * psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.cell_volume()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub lambda: f64,
    pub h: f64,
    /// Exponent `s` of the focusing nonlinearity; `None` for the linear
    /// equation.
    pub s: Option<f64>,
    /// Zero modes beyond 2/3 of the Nyquist wavenumber after each step.
    #[serde(default)]
    pub dealias: bool,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(invalid(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if !(self.h > 0.0 && self.h <= 1.0) {
            return Err(invalid(format!("h must lie in (0, 1], got {}", self.h)));
        }
        if let Some(s) = self.s {
            if !(s > 0.0 && s.is_finite()) {
                return Err(invalid(format!("nonlinearity exponent must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

/// Diagnostics at one time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub charge: f64,
    pub hamiltonian: f64,
    /// `⟨iψ, ∇ψ⟩`.
    pub momentum: [f64; 3],
    pub sup_abs_psi: f64,
    /// `λ ∫ ∇V_h |ψ|^2` (the Ehrenfest force is its negative).
    pub force: [f64; 3],
    /// `½ ∫ V_h |ψ|^2`.
    pub potential_energy: f64,
    /// `⟨∇V_h iψ, ∇ψ⟩`, the predicted rate of `potential_energy`.
    pub potential_rate: f64,
}

/// Split-step propagator bound to one grid, configuration and potential.
pub struct Solver {
    grid: Grid,
    ops: SpectralOps,
    cfg: SolverConfig,
    kinetic: Vec<Complex64>,
    /// `V_h` on the grid.
    v_h: Vec<f64>,
    /// `∇V_h` on the grid, one vector per axis.
    grad_v_h: Vec<Vec<f64>>,
    dealias: Option<Vec<bool>>,
    steps_taken: u64,
}

impl std::fmt::Debug for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Solver")
            .field("grid", &self.grid)
            .field("cfg", &self.cfg)
            .field("steps_taken", &self.steps_taken)
            .finish()
    }
}

impl Solver {
    /// `potential` is the unscaled `V̄`; the solver samples `V̄(h x)`.
    pub fn new(grid: Grid, cfg: SolverConfig, potential: Option<&dyn Potential>) -> Result<Self> {
        cfg.validate()?;
        let ops = SpectralOps::new(grid);
        let kinetic = ops
            .k_squared()
            .iter()
            .map(|k2| Complex64::from_polar(1.0, -k2 * cfg.dt))
            .collect();
        let n = grid.total();
        let mut v_h = vec![0.0; n];
        let mut grad_v_h = vec![vec![0.0; n]; grid.dim];
        if let Some(p) = potential {
            if p.dim() != grid.dim {
                return Err(invalid("potential and wave grid dimensions differ"));
            }
            if let Some(period) = p.period() {
                if grid.len * cfg.h > period * (1.0 + 1e-12) {
                    return Err(invalid(format!(
                        "wave box {} scaled by h = {} exceeds the potential box {period}",
                        grid.len, cfg.h
                    )));
                }
            }
            let scaled = Scaled { inner: p, h: cfg.h };
            for f in 0..n {
                let s = scaled.eval(&grid.point(f));
                v_h[f] = s.value;
                for (ax, g) in grad_v_h.iter_mut().enumerate() {
                    g[f] = s.grad[ax];
                }
            }
        }
        let dealias = cfg.dealias.then(|| {
            let cut = (2.0 / 3.0) * std::f64::consts::PI / grid.dx();
            (0..n)
                .map(|f| {
                    let k = grid.wavevector(f);
                    k.iter().take(grid.dim).all(|c| c.abs() <= cut)
                })
                .collect()
        });
        Ok(Self {
            grid,
            ops,
            cfg,
            kinetic,
            v_h,
            grad_v_h,
            dealias,
            steps_taken: 0,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn ops(&self) -> &SpectralOps {
        &self.ops
    }

    pub fn potential_samples(&self) -> &[f64] {
        &self.v_h
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    /// `ψ ← ψ exp(-i τ (λ V_h - |ψ|^s))`; exact for the pointwise flow
    /// because `|ψ|` is invariant under it.
    fn phase(&self, psi: &mut [Complex64], tau: f64) {
        let lam = self.cfg.lambda;
        match self.cfg.s {
            Some(s) => {
                let cubic = s == 2.0;
                for (z, v) in psi.iter_mut().zip(&self.v_h) {
                    let nl = if cubic { z.norm_sqr() } else { z.norm().powf(s) };
                    *z *= Complex64::from_polar(1.0, -tau * (lam * v - nl));
                }
            }
            None => {
                if lam != 0.0 {
                    for (z, v) in psi.iter_mut().zip(&self.v_h) {
                        *z *= Complex64::from_polar(1.0, -tau * lam * v);
                    }
                }
            }
        }
    }

    fn kinetic(&self, psi: &mut [Complex64]) {
        self.ops.forward(psi);
        psi.iter_mut().zip(&self.kinetic).for_each(|(z, k)| *z *= k);
        if let Some(mask) = &self.dealias {
            psi.iter_mut().zip(mask).for_each(|(z, keep)| {
                if !keep {
                    *z = Complex64::default();
                }
            });
        }
        self.ops.inverse(psi);
    }

    fn check_finite(&self, psi: &[Complex64]) -> Result<()> {
        let total: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if !total.is_finite() {
            return Err(Error::Blowup {
                step: self.steps_taken,
            });
        }
        Ok(())
    }

    fn check_grid(&self, wf: &WaveField) -> Result<()> {
        if !wf.grid.same_layout(&self.grid) {
            return Err(invalid("wave field grid does not match the solver grid"));
        }
        Ok(())
    }

    /// One Strang step: half phase, exact kinetic step, half phase.
    pub fn step(&mut self, wf: &mut WaveField) -> Result<()> {
        self.advance(wf, 1)
    }

    /// `n` Strang steps with consecutive half phases fused.
    pub fn advance(&mut self, wf: &mut WaveField, n: u64) -> Result<()> {
        self.check_grid(wf)?;
        if n == 0 {
            return Ok(());
        }
        let dt = self.cfg.dt;
        let start = wf.t;
        self.phase(&mut wf.psi, 0.5 * dt);
        for i in 0..n {
            self.kinetic(&mut wf.psi);
            self.steps_taken += 1;
            let tau = if i + 1 == n { 0.5 * dt } else { dt };
            self.phase(&mut wf.psi, tau);
            self.check_finite(&wf.psi)?;
        }
        wf.t = start + n as f64 * dt;
        Ok(())
    }

    /// `½∫|∇ψ|^2 + (λ/2)∫V_h|ψ|^2 - ∫|ψ|^{s+2}/(s+2)`.
    pub fn hamiltonian(&self, psi: &[Complex64]) -> f64 {
        hamiltonian(&self.ops, psi, &self.v_h, self.cfg.lambda, self.cfg.s)
    }

    pub fn diagnostics(&self, wf: &WaveField) -> TraceRow {
        let g = &self.grid;
        let dv = g.cell_volume();
        let psi = &wf.psi;
        let mut force = [0.0; 3];
        let mut pot = 0.0;
        for (f, z) in psi.iter().enumerate() {
            let d = z.norm_sqr();
            pot += self.v_h[f] * d;
            for (ax, gv) in self.grad_v_h.iter().enumerate() {
                force[ax] += gv[f] * d;
            }
        }
        force.iter_mut().for_each(|v| *v *= self.cfg.lambda * dv);
        // ⟨∇V iψ, ∇ψ⟩ = Re Σ_j ∫ ∂_jV iψ conj(∂_jψ)
        let grads = self.ops.gradient(psi);
        let mut rate = 0.0;
        for (ax, gp) in grads.iter().enumerate() {
            for (f, z) in psi.iter().enumerate() {
                rate += self.grad_v_h[ax][f] * (Complex64::i() * z * gp[f].conj()).re;
            }
        }
        TraceRow {
            t: wf.t,
            charge: charge(psi, g),
            hamiltonian: self.hamiltonian(psi),
            momentum: self.ops.momentum(psi),
            sup_abs_psi: wf.sup_abs(),
            force,
            potential_energy: 0.5 * pot * dv,
            potential_rate: rate * dv,
        }
    }

    /// Runs `steps` steps, recording diagnostics at `t = 0` and every
    /// `stride` steps.
    pub fn run(&mut self, wf: &mut WaveField, steps: u64, stride: u64) -> Result<Vec<TraceRow>> {
        let stride = stride.max(1);
        let mut trace = vec![self.diagnostics(wf)];
        let mut done = 0;
        while done < steps {
            let n = stride.min(steps - done);
            self.advance(wf, n)?;
            done += n;
            trace.push(self.diagnostics(wf));
        }
        Ok(trace)
    }
}

pub fn hamiltonian(ops: &SpectralOps, psi: &[Complex64], v_h: &[f64], lambda: f64, s: Option<f64>) -> f64 {
    let g = ops.grid();
    let dv = g.cell_volume();
    let (grad, _) = ops.gradient_and_mass_integrals(psi);
    let mut pot = 0.0;
    let mut nl = 0.0;
    for (z, v) in psi.iter().zip(v_h) {
        let d = z.norm_sqr();
        pot += v * d;
        if let Some(s) = s {
            nl += d.powf(0.5 * s + 1.0);
        }
    }
    let nl = match s {
        Some(s) => nl / (s + 2.0),
        None => 0.0,
    };
    0.5 * grad + 0.5 * lambda * pot * dv - nl * dv
}

/// `max_t |dP/dt + λ ∫ ∇V_h |ψ|^2|` with centered differences of `P` over
/// uniformly spaced trace rows (interior rows only).
pub fn ehrenfest_residual(trace: &[TraceRow]) -> f64 {
    let mut worst: f64 = 0.0;
    for w in trace.windows(3) {
        let dt = w[2].t - w[0].t;
        for ax in 0..3 {
            let dp = (w[2].momentum[ax] - w[0].momentum[ax]) / dt;
            worst = worst.max((dp + w[1].force[ax]).abs());
        }
    }
    worst
}

/// `max_t |d/dt ½∫V_h|ψ|^2 - ⟨∇V_h iψ, ∇ψ⟩|` by centered differences.
pub fn potential_rate_residual(trace: &[TraceRow]) -> f64 {
    let mut worst: f64 = 0.0;
    for w in trace.windows(3) {
        let dt = w[2].t - w[0].t;
        let lhs = (w[2].potential_energy - w[0].potential_energy) / dt;
        worst = worst.max((lhs - w[1].potential_rate).abs());
    }
    worst
}

/// `max_t |H(t) - H(0)|`.
pub fn hamiltonian_drift(trace: &[TraceRow]) -> f64 {
    let h0 = trace.first().map_or(0.0, |r| r.hamiltonian);
    trace.iter().fold(0.0_f64, |m, r| m.max((r.hamiltonian - h0).abs()))
}

/// `max_t |N(t) - N(0)| / N(0)`.
pub fn charge_drift(trace: &[TraceRow]) -> f64 {
    let c0 = trace.first().map_or(0.0, |r| r.charge);
    trace.iter().fold(0.0_f64, |m, r| m.max((r.charge - c0).abs())) / c0
}

/// Writes the run trace with columns `t, charge, hamiltonian, px, py, pz,
/// supAbsPsi`.
pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "charge", "hamiltonian", "px", "py", "pz", "supAbsPsi"])?;
    for r in trace {
        w.write_record(&[
            r.t.to_string(),
            r.charge.to_string(),
            r.hamiltonian.to_string(),
            r.momentum[0].to_string(),
            r.momentum[1].to_string(),
            r.momentum[2].to_string(),
            r.sup_abs_psi.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{Constant, Ramp};
    use crate::soliton::{build_soliton, profile_1d_cubic, SolitonParams};
    use crate::spectral::l2_norm;

    fn soliton_field(grid: Grid, sigma: &SolitonParams) -> WaveField {
        let p = profile_1d_cubic(sigma.mu).unwrap();
        WaveField::new(grid, build_soliton(sigma, &p, &grid).unwrap().field).unwrap()
    }

    fn cfg(dt: f64, lambda: f64) -> SolverConfig {
        SolverConfig {
            dt,
            lambda,
            h: 1.0,
            s: Some(2.0),
            dealias: false,
        }
    }

    fn free_soliton_error(dt: f64) -> (f64, f64) {
        let g = Grid::centered(1, 60.0, 1024).unwrap();
        let sigma = SolitonParams::new([-3.0, 0.0, 0.0], [0.5, 0.0, 0.0], 0.3, 1.0);
        let mut wf = soliton_field(g, &sigma);
        let mut solver = Solver::new(g, cfg(dt, 0.0), None).unwrap();
        solver.advance(&mut wf, (1.0 / dt).round() as u64).unwrap();
        let exact = soliton_field(g, &sigma.free_evolution(1.0));
        let diff: Vec<Complex64> = wf.psi.iter().zip(&exact.psi).map(|(a, b)| a - b).collect();
        (l2_norm(&diff, g.dx()), l2_norm(&exact.psi, g.dx()))
    }

    #[test]
    fn free_soliton_follows_exact_laws() {
        // absolute error is 1.5e-6 at dt = 1e-3, i.e. 7.7e-7 of the norm
        let (err, norm) = free_soliton_error(1e-3);
        assert!(err / norm < 1e-6, "relative error {}", err / norm);
        let (fine, _) = free_soliton_error(5e-4);
        assert!((err / fine - 4.0).abs() < 0.1);
    }

    #[test]
    fn linear_constant_potential_is_global_phase() {
        let g = Grid::centered(1, 2.0 * std::f64::consts::PI, 64).unwrap();
        let k = 3.0;
        let psi: Vec<Complex64> = (0..64).map(|i| Complex64::from_polar(0.5, k * g.coord(i))).collect();
        let mut wf = WaveField::new(g, psi.clone()).unwrap();
        let c = SolverConfig {
            s: None,
            ..cfg(0.01, 0.5)
        };
        let pot = Constant { dim: 1, value: 2.0 };
        let mut solver = Solver::new(g, c, Some(&pot)).unwrap();
        solver.advance(&mut wf, 100).unwrap();
        let t = 1.0;
        let phase = Complex64::from_polar(1.0, -(k * k + 0.5 * 2.0) * t);
        for (a, b) in wf.psi.iter().zip(&psi) {
            assert!((a - b * phase).norm() < 1e-12);
        }
    }

    #[test]
    fn second_order_self_convergence() {
        let g = Grid::centered(1, 40.0, 512).unwrap();
        let sigma = SolitonParams::new([0.0; 3], [0.5, 0.0, 0.0], 0.0, 1.0);
        let ramp = Ramp {
            dim: 1,
            slope: [0.3, 0.0, 0.0],
        };
        let run = |dt: f64| {
            let mut wf = soliton_field(g, &sigma);
            let mut s = Solver::new(g, cfg(dt, 0.5), Some(&ramp)).unwrap();
            s.advance(&mut wf, (0.5 / dt).round() as u64).unwrap();
            wf.psi
        };
        let a = run(0.02);
        let b = run(0.01);
        let c = run(0.005);
        let e1 = l2_norm(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>(), g.dx());
        let e2 = l2_norm(&b.iter().zip(&c).map(|(x, y)| x - y).collect::<Vec<_>>(), g.dx());
        let ratio = e1 / e2;
        assert!((ratio - 4.0).abs() < 0.5, "ratio {ratio}");
    }

    #[test]
    fn fused_and_single_steps_agree() {
        let g = Grid::centered(1, 40.0, 256).unwrap();
        let sigma = SolitonParams::new([0.0; 3], [0.5, 0.0, 0.0], 0.0, 1.0);
        let mut a = soliton_field(g, &sigma);
        let mut b = a.clone();
        let mut s1 = Solver::new(g, cfg(1e-3, 0.0), None).unwrap();
        let mut s2 = Solver::new(g, cfg(1e-3, 0.0), None).unwrap();
        s1.advance(&mut a, 10).unwrap();
        for _ in 0..10 {
            s2.step(&mut b).unwrap();
        }
        for (x, y) in a.psi.iter().zip(&b.psi) {
            assert!((x - y).norm() < 1e-13);
        }
        assert!((a.t - b.t).abs() < 1e-15);
    }

    #[test]
    fn gauge_equivariance() {
        let g = Grid::centered(1, 40.0, 256).unwrap();
        let sigma = SolitonParams::new([0.0; 3], [0.5, 0.0, 0.0], 0.0, 1.0);
        let mut a = soliton_field(g, &sigma);
        let rot = Complex64::from_polar(1.0, 0.7);
        let mut b = a.clone();
        b.psi.iter_mut().for_each(|z| *z *= rot);
        let ramp = Ramp {
            dim: 1,
            slope: [0.1, 0.0, 0.0],
        };
        let mut s = Solver::new(g, cfg(1e-3, 0.5), Some(&ramp)).unwrap();
        s.advance(&mut a, 200).unwrap();
        s.advance(&mut b, 200).unwrap();
        for (x, y) in a.psi.iter().zip(&b.psi) {
            assert!((x * rot - y).norm() < 1e-12);
        }
    }

    #[test]
    fn plane_wave_hamiltonian() {
        let g = Grid::centered(1, 2.0 * std::f64::consts::PI, 64).unwrap();
        let (amp, k) = (0.8, 2.0);
        let psi: Vec<Complex64> = (0..64).map(|i| Complex64::from_polar(amp, k * g.coord(i))).collect();
        let s = Solver::new(g, cfg(1e-3, 0.0), None).unwrap();
        let l = g.len;
        let exact = 0.5 * l * amp * amp * k * k - l * amp.powi(4) / 4.0;
        assert!((s.hamiltonian(&psi) - exact).abs() < 1e-12);
        assert_eq!(s.hamiltonian(&vec![Complex64::default(); 64]), 0.0);
    }

    #[test]
    fn blowup_is_detected() {
        let g = Grid::centered(1, 10.0, 64).unwrap();
        let mut psi = vec![Complex64::new(1.0, 0.0); 64];
        psi[3] = Complex64::new(f64::NAN, 0.0);
        let mut wf = WaveField::new(g, psi).unwrap();
        let mut s = Solver::new(g, cfg(1e-3, 0.0), None).unwrap();
        assert!(matches!(s.step(&mut wf), Err(Error::Blowup { step: 1 })));
    }

    #[test]
    fn rejects_oversized_wave_box() {
        use crate::randfield::{synthesize_spectral, Correlation, CorrelationModel};
        let corr = Correlation::new(CorrelationModel::gaussian_bell(1.0, 1.0), 1).unwrap();
        let field = synthesize_spectral(&corr, Grid::unit_cell(1, 32.0, 128).unwrap(), 1).unwrap();
        let g = Grid::centered(1, 64.0, 256).unwrap();
        let c = SolverConfig { h: 0.6, ..cfg(1e-3, 0.5) };
        assert!(Solver::new(g, c, Some(&field)).is_err());
        let c = SolverConfig { h: 0.5, ..cfg(1e-3, 0.5) };
        assert!(Solver::new(g, c, Some(&field)).is_ok());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::centered(1, 40.0, 128).unwrap();
        let mut wf = soliton_field(g, &SolitonParams::new([1.0, 0.0, 0.0], [0.3, 0.0, 0.0], 0.1, 1.0));
        wf.t = 2.5;
        let p = dir.path().join("ck.bin");
        wf.write_checkpoint(&p).unwrap();
        let back = WaveField::read_checkpoint(&p).unwrap();
        assert_eq!(back.psi, wf.psi);
        assert_eq!(back.t, 2.5);
    }

    #[test]
    fn free_soliton_trace_has_constant_momentum() {
        let g = Grid::centered(1, 60.0, 512).unwrap();
        let mut wf = soliton_field(g, &SolitonParams::at_rest(1.0));
        let mut s = Solver::new(g, cfg(1e-3, 0.0), None).unwrap();
        let trace = s.run(&mut wf, 100, 10).unwrap();
        assert_eq!(trace.len(), 11);
        for r in &trace {
            assert!(r.momentum[0].abs() < 1e-12);
        }
        assert!(charge_drift(&trace) < 1e-13);
        let dir = tempfile::tempdir().unwrap();
        write_trace_csv(&dir.path().join("trace.csv"), &trace).unwrap();
    }
}
