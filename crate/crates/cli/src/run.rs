//! Experiment drivers and the run manifest.

use serde::Serialize;
use serde_json::{json, Map, Value};
use std::path::{Path, PathBuf};
use std::time::Instant;

use solitonlab::classical::{
    compare_soliton_classical, fit_decay_rate, rescale, run_ensemble, run_member, scales, ComparisonSpec,
    EnsembleSpec, EnsembleSummary,
};
use solitonlab::diffusion::{
    radial_chi_square, simulate_sphere_diffusion, spatial_msd_test, write_msd_csv, DiffusionLaw, DiffusionReport,
};
use solitonlab::grid::{point_from_slice, Grid};
use solitonlab::nls::{write_trace_csv, Solver, SolverConfig, WaveField};
use solitonlab::potential::Potential;
use solitonlab::randfield::{synthesize, Correlation, FieldRealization};
use solitonlab::seeds::derive_seed;
use solitonlab::soliton::{build_soliton, profile_1d_cubic, profile_petviashvili, zero_mode_residuals, Profile, SolitonParams};
use solitonlab::tracker::{track_run, Tracker, TrackerConfig, TrackingRun};
use solitonlab::{Error, Result};

use crate::config::{Config, Experiment};
use crate::validate::{field_dim, Report};

pub const MANIFEST_SCHEMA: u32 = 1;

/// Seeds of every random component, derived from the base seed.
#[derive(Clone, Debug, Serialize)]
pub struct Seeds {
    pub base: u64,
    pub field: u64,
    pub ensemble: u64,
    pub sphere: u64,
}

impl Seeds {
    pub fn new(base: u64) -> Self {
        Self {
            base,
            field: derive_seed(base, "field", 0),
            ensemble: derive_seed(base, "ensemble", 0),
            sphere: derive_seed(base, "sphere", 0),
        }
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Manifest<'a> {
    schema_version: u32,
    tool: &'static str,
    version: &'static str,
    experiment: &'static str,
    status: String,
    config: Map<String, Value>,
    seeds: &'a Seeds,
    threads: usize,
    wall_time_seconds: f64,
    outputs: &'a [String],
    warnings: &'a [String],
    metadata: &'a Map<String, Value>,
}

/// Files and metadata produced by one experiment.
#[derive(Default)]
pub struct Artifacts {
    pub outputs: Vec<String>,
    pub metadata: Map<String, Value>,
}

impl Artifacts {
    fn file(&mut self, dir: &Path, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        dir.join(name)
    }

    fn meta(&mut self, key: &str, v: impl Serialize) {
        self.metadata.insert(key.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
    }
}

/// Runs the configured experiment into `out` and writes `manifest.json`.
pub fn run(cfg: &Config, out: &Path, report: &Report) -> Result<Artifacts> {
    let start = Instant::now();
    std::fs::create_dir_all(out)?;
    let seeds = Seeds::new(cfg.seed);
    let mut art = Artifacts::default();
    let result = match cfg.experiment {
        Experiment::SynthField => synth_field(cfg, &seeds, out, &mut art),
        Experiment::Profile => profile_experiment(cfg, out, &mut art),
        Experiment::EvolveTrack => evolve_track(cfg, &seeds, out, &mut art),
        Experiment::Compare => compare(cfg, &seeds, out, &mut art),
        Experiment::Ensemble => ensemble(cfg, &seeds, out, &mut art),
        Experiment::DiffusionTheory => diffusion_theory(cfg, out, &mut art),
        Experiment::SphereSim => sphere_sim(cfg, &seeds, out, &mut art),
        Experiment::SpatialMsd => spatial_msd(cfg, &seeds, out, &mut art),
    };
    // the manifest is written for failed runs too
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("failed: {e}"),
    };
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA,
        tool: "solitonlab",
        version: env!("CARGO_PKG_VERSION"),
        experiment: cfg.experiment.name(),
        status,
        config: cfg.flat().into_iter().collect(),
        seeds: &seeds,
        threads: rayon::current_num_threads(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        outputs: &art.outputs,
        warnings: &report.warnings(),
        metadata: &art.metadata,
    };
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    result.map(|_| art)
}

fn field_realization(cfg: &Config, seeds: &Seeds, dim: usize) -> Result<FieldRealization> {
    let corr = Correlation::new(cfg.field.model(), dim)?;
    let grid = Grid::unit_cell(dim, cfg.field.len, cfg.field.points)?;
    synthesize(&corr, grid, seeds.field, cfg.field.synthesis)
}

fn write_field(cfg: &Config, field: &FieldRealization, out: &Path, art: &mut Artifacts) -> Result<()> {
    field.write_metadata(&art.file(out, "field.json"))?;
    if cfg.field.dump {
        field.write_binary(&art.file(out, "field.bin"))?;
    }
    art.meta("field", field.metadata());
    Ok(())
}

fn synth_field(cfg: &Config, seeds: &Seeds, out: &Path, art: &mut Artifacts) -> Result<()> {
    let field = field_realization(cfg, seeds, field_dim(cfg))?;
    write_field(cfg, &field, out, art)
}

fn build_profile(cfg: &Config) -> Result<Profile> {
    let sc = &cfg.soliton;
    let n = cfg.grid.dim;
    if n == 1 && sc.s == 2.0 {
        profile_1d_cubic(sc.mu)
    } else {
        let g = Grid::centered(n, sc.profile_len, sc.profile_points)?;
        profile_petviashvili(sc.mu, sc.s, g, 500, 1e-11)
    }
}

fn profile_experiment(cfg: &Config, out: &Path, art: &mut Artifacts) -> Result<()> {
    let profile = build_profile(cfg)?;
    let json = art.file(out, "profile.json");
    let bin = art.file(out, "profile.bin");
    profile.write_cache(&json, &bin)?;
    let grid = Grid::centered(cfg.grid.dim, cfg.grid.len, cfg.grid.points)?;
    let zero = zero_mode_residuals(&profile, &grid)?;
    std::fs::write(art.file(out, "zero_modes.json"), serde_json::to_string_pretty(&zero)?)?;
    art.meta("profile", profile.header());
    art.meta("zeroModes", zero);
    Ok(())
}

fn initial_params(cfg: &Config) -> SolitonParams {
    let sc = &cfg.soliton;
    SolitonParams::new(point_from_slice(&sc.a0), point_from_slice(&sc.v0), sc.gamma0, sc.mu)
}

fn tracker_config(cfg: &Config) -> TrackerConfig {
    TrackerConfig {
        max_iter: cfg.tracker.max_iter,
        tol: cfg.tracker.tol,
        max_fluctuation: cfg.tracker.max_fluctuation,
    }
}

fn tracking_meta(run: &TrackingRun, art: &mut Artifacts) {
    art.meta("supWH1", run.sup_w_h1());
    art.meta("supC", run.sup_c());
    art.meta("trackedSamples", run.rows.len());
    art.meta("trackingLost", &run.lost);
    art.meta("phaseUnwrapAmbiguous", run.c.as_ref().map(|c| c.unwrap_ambiguous));
    let sup_psi = run.trace.iter().fold(0.0f64, |m, r| m.max(r.sup_abs_psi));
    art.meta("supAbsPsi", sup_psi);
}

fn evolve_track(cfg: &Config, seeds: &Seeds, out: &Path, art: &mut Artifacts) -> Result<()> {
    let grid = Grid::centered(cfg.grid.dim, cfg.grid.len, cfg.grid.points)?;
    let profile = build_profile(cfg)?.rescaled(cfg.soliton.mu)?;
    let sigma = initial_params(cfg);
    let sv = &cfg.solver;
    let field = if sv.lambda > 0.0 {
        let f = field_realization(cfg, seeds, cfg.grid.dim)?;
        write_field(cfg, &f, out, art)?;
        Some(f)
    } else {
        None
    };
    let potential = field.as_ref().map(|f| f as &dyn Potential);
    let solver_cfg = SolverConfig {
        dt: sv.dt,
        lambda: sv.lambda,
        h: sv.h,
        s: Some(cfg.soliton.s),
        dealias: sv.dealias,
    };
    let mut solver = Solver::new(grid, solver_cfg, potential)?;
    let tracker = Tracker::new(grid, profile.clone(), tracker_config(cfg))?;
    let psi = build_soliton(&sigma, &profile, &grid)?.field;
    let mut wf = WaveField::new(grid, psi)?;
    let run = track_run(&mut solver, &mut wf, &tracker, sigma, sv.steps, sv.stride, potential)?;
    run.write_csv(&art.file(out, "track.csv"))?;
    write_trace_csv(&art.file(out, "trace.csv"), &run.trace)?;
    tracking_meta(&run, art);
    if let Some(lost) = &run.lost {
        return Err(Error::TrackingLost {
            t: run.rows.last().map_or(0.0, |r| r.t),
            reason: lost.clone(),
            residuals: Vec::new(),
        });
    }
    Ok(())
}

fn compare(cfg: &Config, seeds: &Seeds, out: &Path, art: &mut Artifacts) -> Result<()> {
    let grid = Grid::centered(cfg.grid.dim, cfg.grid.len, cfg.grid.points)?;
    let profile = build_profile(cfg)?;
    let field = field_realization(cfg, seeds, cfg.grid.dim)?;
    write_field(cfg, &field, out, art)?;
    let sv = &cfg.solver;
    let spec = ComparisonSpec {
        lambda: sv.lambda,
        h: sv.h,
        mu: cfg.soliton.mu,
        v0: point_from_slice(&cfg.soliton.v0),
        horizon: sv.horizon,
        dt: sv.dt,
        stride: sv.stride,
        window_constant: sv.window_constant,
    };
    let cmp = compare_soliton_classical(&field, &profile, grid, &spec)?;
    let mut w = csv::Writer::from_path(art.file(out, "compare.csv"))?;
    w.write_record(["tbar", "positionError", "velocityError"])?;
    for i in 0..cmp.tbar.len() {
        w.write_record(&[
            cmp.tbar[i].to_string(),
            cmp.position_error[i].to_string(),
            cmp.velocity_error[i].to_string(),
        ])?;
    }
    w.flush()?;
    cmp.tracking.write_csv(&art.file(out, "track.csv"))?;
    write_trace_csv(&art.file(out, "trace.csv"), &cmp.tracking.trace)?;
    tracking_meta(&cmp.tracking, art);
    art.meta("supPositionError", cmp.sup_position_error);
    art.meta("supVelocityError", cmp.sup_velocity_error);
    art.meta("truncated", cmp.truncated);
    art.meta("outsideWindow", cmp.outside_window);
    Ok(())
}

fn ensemble_spec(cfg: &Config, seeds: &Seeds) -> EnsembleSpec {
    let en = &cfg.ensemble;
    EnsembleSpec {
        count: en.count,
        base_seed: seeds.ensemble,
        lambda: en.lambda,
        v0: en.v0.clone(),
        horizon: en.horizon,
        dt: en.dt,
        samples: en.samples,
        beta: en.beta,
        model: cfg.field.model(),
        field_len: cfg.field.len,
        field_points: cfg.field.points,
        synthesis: cfg.field.synthesis,
    }
}

fn ensemble_meta(spec: &EnsembleSpec, sum: &EnsembleSummary, art: &mut Artifacts) {
    art.meta("members", sum.members);
    art.meta("failed", sum.failed);
    art.meta("failures", &sum.failures);
    art.meta("wrapped", sum.wrapped);
    art.meta("maxMeanSpeedDrift", sum.max_mean_speed_drift());
    art.meta("maxEnergyDrift", sum.max_energy_drift);
    art.meta("maxSpeedBoundRatio", sum.max_speed_bound_ratio);
    art.meta("suggestedFieldLen", spec.suggested_field_len());
}

/// Writes rescaled trajectories of the first `count` members.
fn member_csvs(spec: &EnsembleSpec, count: usize, out: &Path, art: &mut Artifacts) -> Result<()> {
    let corr = Correlation::new(spec.model, spec.dim())?;
    let (p, q) = scales(spec.lambda, spec.beta);
    for i in 0..count.min(spec.count) {
        let (_, traj) = run_member(spec, &corr, i)?;
        let r = rescale(&traj, p, q, &spec.output_times())?;
        r.write_csv(&art.file(out, &format!("member_{i:05}.csv")))?;
    }
    Ok(())
}

fn ensemble(cfg: &Config, seeds: &Seeds, out: &Path, art: &mut Artifacts) -> Result<()> {
    let spec = ensemble_spec(cfg, seeds);
    let sum = run_ensemble(&spec)?;
    sum.write_csv(&art.file(out, "ensemble.csv"))?;
    ensemble_meta(&spec, &sum, art);
    let means: Vec<f64> = sum.dir_autocorr.iter().map(|m| m.mean).collect();
    if let Some(fit) = fit_decay_rate(&sum.tbar, &means, cfg.diffusion.fit_floor) {
        art.meta("fittedAutocorrRate", fit.slope);
        art.meta("fittedAutocorrRateStderr", fit.slope_stderr);
    }
    let k = spec.v0.iter().map(|x| x * x).sum::<f64>().sqrt();
    if spec.dim() >= 2 {
        if let Ok(law) = DiffusionLaw::new(spec.model, spec.dim()) {
            art.meta("predictedAutocorrRate", law.autocorrelation_rate(k)?);
        }
    }
    member_csvs(&spec, cfg.ensemble.member_csv, out, art)
}

fn diffusion_theory(cfg: &Config, out: &Path, art: &mut Artifacts) -> Result<()> {
    let law = DiffusionLaw::new(cfg.field.model(), cfg.diffusion.k.len())?;
    let report = DiffusionReport::build(&law, &cfg.diffusion.k)?;
    report.write(&art.file(out, "diffusion.json"))?;
    let k = cfg.diffusion.k.iter().map(|x| x * x).sum::<f64>().sqrt();
    if let Some(c) = report.cell_c {
        art.meta("cellResidual", law.cell_residual(k, c, 12)?);
    }
    art.meta("Dscalar", report.d_scalar);
    art.meta("autocorrRate", law.autocorrelation_rate(k)?);
    Ok(())
}

fn sphere_sim(cfg: &Config, seeds: &Seeds, out: &Path, art: &mut Artifacts) -> Result<()> {
    let d = &cfg.diffusion;
    let law = DiffusionLaw::new(cfg.field.model(), d.k.len())?;
    let k = d.k.iter().map(|x| x * x).sum::<f64>().sqrt();
    let sim = simulate_sphere_diffusion(law.scalar(k)?, &d.k, d.horizon, d.dt, d.samples, seeds.sphere, d.paths, d.fit_floor)?;
    let mut w = csv::Writer::from_path(art.file(out, "sphere.csv"))?;
    w.write_record(["t", "dirAutocorr", "dirAutocorrStderr", "msd", "msdStderr"])?;
    for i in 0..sim.t.len() {
        w.write_record(&[
            sim.t[i].to_string(),
            sim.autocorr[i].mean.to_string(),
            sim.autocorr[i].stderr.to_string(),
            sim.msd[i].mean.to_string(),
            sim.msd[i].stderr.to_string(),
        ])?;
    }
    w.flush()?;
    let mut report = DiffusionReport::build(&law, &d.k)?;
    report.fit_rates = vec![sim.fitted_rate];
    report.cis = vec![sim.rate_ci];
    report.write(&art.file(out, "diffusion.json"))?;
    art.meta("fittedRate", sim.fitted_rate);
    art.meta("rateCI", sim.rate_ci);
    art.meta("predictedRate", law.autocorrelation_rate(k)?);
    art.meta("maxSpeedDeviation", sim.max_speed_deviation);
    Ok(())
}

fn spatial_msd(cfg: &Config, seeds: &Seeds, out: &Path, art: &mut Artifacts) -> Result<()> {
    let spec = ensemble_spec(cfg, seeds);
    let law = DiffusionLaw::new(spec.model, spec.dim())?;
    let k = spec.v0.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cell = law.cell_problem(k)?;
    let predicted = cell.msd_slope();
    let sum = run_ensemble(&spec)?;
    sum.write_csv(&art.file(out, "ensemble.csv"))?;
    write_msd_csv(&art.file(out, "msd.csv"), &sum.tbar, &sum.msd, predicted)?;
    let test = spatial_msd_test(&sum, predicted)?;
    let t_end = *sum.tbar.last().unwrap_or(&0.0);
    let chi = radial_chi_square(&sum.final_positions, spec.dim(), cell.d_scalar, t_end, 0.0, cfg.diffusion.bins);
    std::fs::write(
        art.file(out, "msd_test.json"),
        serde_json::to_string_pretty(&json!({
            "msdTest": test,
            "chiSquare": { "statistic": chi.statistic, "dof": chi.dof, "pValue": chi.p_value },
            "cellC": cell.c,
            "dScalar": cell.d_scalar,
        }))?,
    )?;
    ensemble_meta(&spec, &sum, art);
    art.meta("msdSlope", test.slope);
    art.meta("msdSlopeCI", test.slope_ci);
    art.meta("predictedSlope", predicted);
    art.meta("ciTooWide", test.ci_too_wide);
    art.meta("chiSquarePValue", chi.p_value);
    Ok(())
}
