//! Experiment configuration: one TOML file with flat dotted keys.
//!
//! ```toml
//! experiment = "evolve-track"
//! seed = 7
//! grid.dim = 1
//! grid.len = 60.0
//! grid.points = 1024
//! soliton.mu = 1.0
//! soliton.v0 = [0.5]
//! solver.dt = 0.001
//! solver.steps = 1000
//! ```

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use solitonlab::randfield::{CorrelationKind, CorrelationModel, SynthesisMethod};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    SynthField,
    Profile,
    EvolveTrack,
    Compare,
    Ensemble,
    DiffusionTheory,
    SphereSim,
    SpatialMsd,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::SynthField => "synth-field",
            Self::Profile => "profile",
            Self::EvolveTrack => "evolve-track",
            Self::Compare => "compare",
            Self::Ensemble => "ensemble",
            Self::DiffusionTheory => "diffusion-theory",
            Self::SphereSim => "sphere-sim",
            Self::SpatialMsd => "spatial-msd",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub field: FieldConfig,
    #[serde(default)]
    pub soliton: SolitonConfig,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub tracker: TrackerSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub diffusion: DiffusionSection,
}

/// Centered grid for the wave function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub dim: usize,
    pub len: f64,
    pub points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            len: 60.0,
            points: 1024,
        }
    }
}

/// Correlation law and the periodic box `[0, len)^N` of one realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    pub kind: CorrelationKind,
    #[serde(rename = "R0")]
    pub r0: f64,
    pub ell: f64,
    pub rho0: Option<f64>,
    pub dim: Option<usize>,
    pub len: f64,
    pub points: usize,
    pub synthesis: SynthesisMethod,
    /// Also write the raw samples in the binary envelope.
    pub dump: bool,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            kind: CorrelationKind::GaussianBell,
            r0: 1.0,
            ell: 1.0,
            rho0: None,
            dim: None,
            len: 64.0,
            points: 128,
            synthesis: SynthesisMethod::Spectral,
            dump: false,
        }
    }
}

impl FieldConfig {
    pub fn model(&self) -> CorrelationModel {
        match self.kind {
            CorrelationKind::GaussianBell => CorrelationModel::gaussian_bell(self.r0, self.ell),
            CorrelationKind::CompactKernel => CorrelationModel::compact_kernel(self.r0, self.rho0.unwrap_or(self.ell)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolitonConfig {
    /// Nonlinearity exponent in `|ψ|^s ψ`.
    pub s: f64,
    pub mu: f64,
    pub a0: Vec<f64>,
    pub v0: Vec<f64>,
    pub gamma0: f64,
    /// Petviashvili grid (centered) for profiles without a closed form.
    pub profile_len: f64,
    pub profile_points: usize,
}

impl Default for SolitonConfig {
    fn default() -> Self {
        Self {
            s: 2.0,
            mu: 1.0,
            a0: Vec::new(),
            v0: Vec::new(),
            gamma0: 0.0,
            profile_len: 40.0,
            profile_points: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub dt: f64,
    pub lambda: f64,
    pub h: f64,
    pub steps: u64,
    /// Steps between trace rows and tracked samples.
    pub stride: u64,
    pub dealias: bool,
    /// Slow-time horizon of the comparison experiment.
    pub horizon: f64,
    /// Constant `C` of the window `t̄ < C |log h| / λ`.
    pub window_constant: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            lambda: 0.0,
            h: 1.0,
            steps: 1000,
            stride: 50,
            dealias: false,
            horizon: 1.0,
            window_constant: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerSection {
    pub max_iter: usize,
    pub tol: f64,
    pub max_fluctuation: f64,
}

impl Default for TrackerSection {
    fn default() -> Self {
        let d = solitonlab::tracker::TrackerConfig::default();
        Self {
            max_iter: d.max_iter,
            tol: d.tol,
            max_fluctuation: d.max_fluctuation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub count: usize,
    pub lambda: f64,
    pub v0: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub samples: usize,
    pub beta: f64,
    /// Nominal `h` for the schedule check `|log h| λ^{3/2+α} → ∞`.
    pub h: Option<f64>,
    /// Write rescaled trajectories of this many members.
    pub member_csv: usize,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            count: 100,
            lambda: 0.1,
            v0: vec![1.0, 0.0],
            horizon: 2.0,
            dt: 0.05,
            samples: 40,
            beta: 0.0,
            h: None,
            member_csv: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionSection {
    pub k: Vec<f64>,
    pub paths: usize,
    pub horizon: f64,
    pub dt: f64,
    pub samples: usize,
    /// Autocorrelation values below this are excluded from rate fits.
    pub fit_floor: f64,
    /// Radial bins of the heat-kernel χ² test.
    pub bins: usize,
}

impl Default for DiffusionSection {
    fn default() -> Self {
        Self {
            k: vec![1.0, 0.0, 0.0],
            paths: 10_000,
            horizon: 1.0,
            dt: 1e-3,
            samples: 20,
            fit_floor: 0.05,
            bins: 10,
        }
    }
}

impl Config {
    pub fn from_str(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::from_str(&text)
    }

    /// Flattened `key = value` view, sorted by key.
    pub fn flat(&self) -> Vec<(String, serde_json::Value)> {
        let mut out = Vec::new();
        flatten("", &serde_json::to_value(self).expect("config serializes"), &mut out);
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, serde_json::Value)>) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        _ => out.push((prefix.to_string(), v.clone())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys_parse() {
        let c = Config::from_str(
            "experiment = \"ensemble\"\nseed = 3\nfield.ell = 2.0\nensemble.v0 = [0.0, 1.0]\n",
        )
        .unwrap();
        assert_eq!(c.experiment, Experiment::Ensemble);
        assert_eq!(c.field.ell, 2.0);
        assert_eq!(c.ensemble.v0, vec![0.0, 1.0]);
        assert_eq!(c.field.r0, 1.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_str("experiment = \"profile\"\nfield.width = 1.0\n").is_err());
        assert!(Config::from_str("experiment = \"nope\"\n").is_err());
    }

    #[test]
    fn flat_view_is_sorted() {
        let c = Config::from_str("experiment = \"profile\"\n").unwrap();
        let flat = c.flat();
        assert!(flat.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(flat.iter().any(|(k, _)| k == "field.R0"));
    }
}
