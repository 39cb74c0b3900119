//! Load-time checks of the modelling hypotheses for one configuration.

use serde::Serialize;

use solitonlab::diffusion::DiffusionLaw;
use solitonlab::randfield::{Correlation, MIN_BOX_RATIO};

use crate::config::{Config, Experiment};

/// Exponent margin `α` in the schedule check `|log h| λ^{p+α} ≥ 1`.
pub const SCHEDULE_MARGIN: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Warn,
    Fail,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub verdict: Verdict,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    fn push(&mut self, name: &str, verdict: Verdict, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            verdict,
            detail: detail.into(),
        });
    }

    fn require(&mut self, name: &str, ok: bool, detail: impl Into<String>) {
        let v = if ok { Verdict::Pass } else { Verdict::Fail };
        self.push(name, v, detail);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.verdict != Verdict::Fail)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| c.verdict == Verdict::Fail).collect()
    }

    pub fn warnings(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| c.verdict == Verdict::Warn)
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let tag = match c.verdict {
                Verdict::Pass => "PASS",
                Verdict::Warn => "WARN",
                Verdict::Fail => "FAIL",
            };
            s.push_str(&format!("{tag}  {}: {}\n", c.name, c.detail));
        }
        s
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Dimension of the random field for this experiment.
pub fn field_dim(cfg: &Config) -> usize {
    if let Some(d) = cfg.field.dim {
        return d;
    }
    match cfg.experiment {
        Experiment::Ensemble | Experiment::SpatialMsd => cfg.ensemble.v0.len(),
        Experiment::DiffusionTheory | Experiment::SphereSim => cfg.diffusion.k.len(),
        _ => cfg.grid.dim,
    }
}

fn uses_soliton(e: Experiment) -> bool {
    matches!(e, Experiment::Profile | Experiment::EvolveTrack | Experiment::Compare)
}

fn uses_field(cfg: &Config) -> bool {
    match cfg.experiment {
        Experiment::SynthField | Experiment::Compare | Experiment::Ensemble | Experiment::SpatialMsd => true,
        Experiment::EvolveTrack => cfg.solver.lambda > 0.0,
        _ => false,
    }
}

fn schedule_check(report: &mut Report, name: &str, lambda: f64, h: f64, power: f64) {
    if !(h > 0.0 && h < 1.0 && lambda > 0.0) {
        return;
    }
    let value = h.ln().abs() * lambda.powf(power + SCHEDULE_MARGIN);
    if value < 1.0 {
        report.push(
            name,
            Verdict::Warn,
            format!(
                "|log h| λ^{} = {value:.3} < 1: the joint limit needs this to grow; \
                 λ = |log h|^(-2/5) = {:.3} is one compliant schedule",
                power + SCHEDULE_MARGIN,
                h.ln().abs().powf(-0.4)
            ),
        );
    } else {
        report.push(name, Verdict::Pass, format!("|log h| λ^{} = {value:.3}", power + SCHEDULE_MARGIN));
    }
}

pub fn validate(cfg: &Config) -> Report {
    let mut r = Report::default();
    let e = cfg.experiment;

    if uses_soliton(e) {
        let n = cfg.grid.dim;
        r.require("dimension", (1..=3).contains(&n), format!("N = {n}"));
        let s = cfg.soliton.s;
        r.require(
            "subcritical nonlinearity 0 < s < 4/N",
            s > 0.0 && s < 4.0 / n as f64,
            format!("s = {s}, N = {n}"),
        );
        let exponent = 2.0 / s - 0.5 * n as f64;
        r.require(
            "stability condition m'(mu) > 0",
            cfg.soliton.mu > 0.0 && exponent > 0.0,
            format!("mu = {}, d ln m / d ln mu = {exponent:.4}", cfg.soliton.mu),
        );
        for (key, v) in [("soliton.a0", &cfg.soliton.a0), ("soliton.v0", &cfg.soliton.v0)] {
            r.require(
                "parameter dimension",
                v.is_empty() || v.len() == n,
                format!("{key} has {} components, grid has {n}", v.len()),
            );
        }
    }

    if matches!(e, Experiment::EvolveTrack | Experiment::Compare) {
        let sv = &cfg.solver;
        r.require("solver step", sv.dt > 0.0, format!("dt = {}", sv.dt));
        r.require("coupling range", (0.0..=1.0).contains(&sv.lambda), format!("lambda = {}", sv.lambda));
        r.require("slowly varying potential", sv.h > 0.0 && sv.h <= 1.0, format!("h = {}", sv.h));
        if uses_field(cfg) {
            let covered = cfg.grid.len * sv.h;
            r.require(
                "potential period covers the grid",
                covered <= cfg.field.len * (1.0 + 1e-12),
                format!("grid length times h = {covered}, field box = {}", cfg.field.len),
            );
        }
        schedule_check(&mut r, "time horizon schedule", sv.lambda, sv.h, 1.5);
    }
    if e == Experiment::Compare {
        r.require("coupling for comparison", cfg.solver.lambda > 0.0, format!("lambda = {}", cfg.solver.lambda));
    }

    if uses_field(cfg) {
        let model = cfg.field.model();
        let dim = field_dim(cfg);
        match model.validate().and_then(|_| Correlation::new(model, dim)) {
            Ok(corr) => {
                r.push("correlation model", Verdict::Pass, format!("{:?} in N = {dim}", model.kind));
                let l = model.length_scale();
                let nonneg = (0..200).all(|i| {
                    let k = 20.0 * i as f64 / (200.0 * l);
                    corr.spectral_density(k * k).map_or(true, |s| s >= 0.0)
                });
                r.require("nonnegative spectral density", nonneg, "sampled on |k| < 20/ell");
                r.require(
                    "field box at least 20 correlation lengths",
                    cfg.field.len >= MIN_BOX_RATIO * l,
                    format!("L = {}, correlation length {l}", cfg.field.len),
                );
            }
            Err(err) => r.push("correlation model", Verdict::Fail, err.to_string()),
        }
    }

    if matches!(e, Experiment::Ensemble | Experiment::SpatialMsd) {
        let en = &cfg.ensemble;
        let v = norm(&en.v0);
        r.require("nonzero initial velocity", v > 0.0, format!("|v0| = {v}"));
        r.require("ensemble size", en.count >= 1, format!("count = {}", en.count));
        if en.count < 30 {
            r.push(
                "ensemble size",
                Verdict::Warn,
                format!("count = {} is too small for meaningful standard errors", en.count),
            );
        }
        r.require(
            "ensemble times",
            en.horizon > 0.0 && en.dt > 0.0 && en.samples > 0,
            format!("horizon = {}, dt = {}, samples = {}", en.horizon, en.dt, en.samples),
        );
        if let Some(h) = en.h {
            let power = if e == Experiment::SpatialMsd { 1.0 } else { 1.5 };
            schedule_check(&mut r, "time horizon schedule", en.lambda, h, power);
        }
    }
    if e == Experiment::SpatialMsd {
        let n = cfg.ensemble.v0.len();
        r.require("spatial diffusion needs N >= 3", n >= 3, format!("N = {n}"));
        r.require("spatial scaling exponent", cfg.ensemble.beta > 0.0, format!("beta = {}", cfg.ensemble.beta));
        r.require("coupling for spatial diffusion", cfg.ensemble.lambda > 0.0, format!("lambda = {}", cfg.ensemble.lambda));
    }

    if matches!(e, Experiment::DiffusionTheory | Experiment::SphereSim | Experiment::SpatialMsd) {
        let dim = field_dim(cfg);
        let k = if e == Experiment::SpatialMsd { norm(&cfg.ensemble.v0) } else { norm(&cfg.diffusion.k) };
        r.require("nonzero initial velocity", k > 0.0, format!("|k| = {k}"));
        match DiffusionLaw::new(cfg.field.model(), dim) {
            Ok(_) => r.push("positive transverse diffusion", Verdict::Pass, "integral of R'(s)/s is negative"),
            Err(err) => r.push("positive transverse diffusion", Verdict::Fail, err.to_string()),
        }
        if e == Experiment::SphereSim {
            let d = &cfg.diffusion;
            r.require(
                "sphere simulation parameters",
                d.paths > 0 && d.horizon > 0.0 && d.dt > 0.0 && d.samples > 0 && dim >= 2,
                format!("paths = {}, horizon = {}, dt = {}, N = {dim}", d.paths, d.horizon, d.dt),
            );
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> Config {
        Config::from_str(text).unwrap()
    }

    #[test]
    fn compliant_profile_passes() {
        let r = validate(&cfg("experiment = \"profile\"\n"));
        assert!(r.passed(), "{}", r.render());
        assert!(r.warnings().is_empty());
    }

    #[test]
    fn supercritical_exponent_fails_stability() {
        let r = validate(&cfg("experiment = \"evolve-track\"\nsoliton.s = 5.0\n"));
        assert!(!r.passed());
        let names: Vec<&str> = r.failures().iter().map(|c| c.name.as_str()).collect();
        assert!(names.contains(&"stability condition m'(mu) > 0"));
        assert!(names.contains(&"subcritical nonlinearity 0 < s < 4/N"));
    }

    #[test]
    fn zero_velocity_fails_for_diffusion() {
        let r = validate(&cfg("experiment = \"ensemble\"\nensemble.v0 = [0.0, 0.0]\n"));
        assert!(r.failures().iter().any(|c| c.name == "nonzero initial velocity"));
        let r = validate(&cfg("experiment = \"sphere-sim\"\ndiffusion.k = [0.0, 0.0, 0.0]\n"));
        assert!(r.failures().iter().any(|c| c.name == "nonzero initial velocity"));
    }

    #[test]
    fn slow_schedule_warns() {
        let r = validate(&cfg(
            "experiment = \"evolve-track\"\nsolver.lambda = 0.1\nsolver.h = 0.05\nfield.len = 64.0\ngrid.len = 60.0\n",
        ));
        assert!(r.passed(), "{}", r.render());
        assert!(r.warnings().iter().any(|w| w.contains("compliant schedule")));
        let r = validate(&cfg(
            "experiment = \"evolve-track\"\nsolver.lambda = 0.9\nsolver.h = 1e-3\nfield.len = 64.0\ngrid.len = 60.0\n",
        ));
        assert!(r.warnings().is_empty(), "{}", r.render());
    }

    #[test]
    fn spatial_msd_requires_three_dimensions() {
        let r = validate(&cfg("experiment = \"spatial-msd\"\nensemble.v0 = [1.0, 0.0]\nensemble.beta = 0.1\n"));
        assert!(r.failures().iter().any(|c| c.name.contains("N >= 3")));
    }
}
