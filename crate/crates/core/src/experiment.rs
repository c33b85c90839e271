//! End-to-end experiments: generate a truth, simulate, measure, invert,
//! forecast and write every artifact to disk.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::annealing::{
    anneal_with, mean_abs_error, write_trace_header, write_trace_row, AnnealingTrace,
    CoolingSchedule, RunOptions, StopRule,
};
use crate::error::{Error, Result};
use crate::fields::{habitat_to_field, ScalarField};
use crate::forecast::{forecast, Forecast};
use crate::functional::Evaluator;
use crate::geometry::{build_grid, region_mask, DomainSpec, Grid, Interval, RegionSpec};
use crate::observation::{
    extract_measurements, Acquisition, MeasurementSet, NoiseSpec, ObservationWindow,
};
use crate::solver::{solve_parabolic, InitialDensity, InitialProfile, SolverParams};
use crate::space::{
    CellPartition, ConfigurationSpace, HabitatBounds, HabitatConfiguration, LevelSet, SpaceSpec,
};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "HABINV_OUT";

/// Names accepted by [`ExperimentConfig::preset`].
pub const PRESETS: &[&str] = &[
    "example1",
    "example2",
    "example3",
    "example4",
    "example3-16",
    "example4-16",
    "mini",
];

/// Observation window in configuration form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub t0: f64,
    pub t1: f64,
    /// Sample spacing in time steps.
    pub stride: usize,
}

/// The true growth rate of a synthetic experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthSpec {
    /// A built-in pattern, resolved against the space (`example1` ...).
    Named { name: String },
    /// One level index per cell.
    Levels { levels: Vec<u16> },
    /// One growth-rate value per cell.
    Values { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub domain: DomainSpec,
    pub nodes: Vec<usize>,
    /// Diffusion coefficient.
    pub d: f64,
    /// Crowding coefficient used to generate the data.
    pub gamma: f64,
    pub dt: f64,
    pub horizon: f64,
    pub window: WindowSpec,
    pub initial: InitialDensity,
    pub space: SpaceSpec,
    pub truth: TruthSpec,
    pub schedule: CoolingSchedule,
    pub stop: StopRule,
    pub seed: u64,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
}

fn space_1d(levels: LevelSet) -> SpaceSpec {
    SpaceSpec {
        partition: CellPartition {
            origin: vec![10.0],
            cell_size: vec![1.0],
            counts: vec![80],
        },
        levels,
        bounds: HabitatBounds {
            m: -1.0,
            big_m: 2.0,
        },
    }
}

fn space_2d(levels: LevelSet, cell: f64, counts: usize) -> SpaceSpec {
    SpaceSpec {
        partition: CellPartition {
            origin: vec![2.0, 2.0],
            cell_size: vec![cell, cell],
            counts: vec![counts, counts],
        },
        levels,
        bounds: HabitatBounds {
            m: -1.0,
            big_m: 2.0,
        },
    }
}

fn domain_1d() -> DomainSpec {
    DomainSpec {
        extent: vec![Interval::new(0.0, 100.0)],
        omega1: vec![Interval::new(10.0, 90.0)],
        obs_region: RegionSpec::Interval { lo: 55.0, hi: 58.0 },
        ball_eps: None,
    }
}

fn domain_2d() -> DomainSpec {
    DomainSpec {
        extent: vec![Interval::new(0.0, 20.0); 2],
        omega1: vec![Interval::new(2.0, 18.0); 2],
        obs_region: RegionSpec::Ball {
            center: vec![7.0, 7.0],
            radius: 3.0,
        },
        ball_eps: None,
    }
}

/// Built-in truth patterns, as one value per cell of `space`.
pub fn named_truth(name: &str, space: &ConfigurationSpace) -> Result<HabitatConfiguration> {
    let part = space.partition();
    let (m, big_m) = (space.bounds().m, space.bounds().big_m);
    let top = (space.n_levels() - 1) as u16;
    let levels: Vec<u16> = match (name, part.dim()) {
        ("example1", 1) => (0..part.n_cells())
            .map(|c| {
                let x = part.origin[0] + (c as f64 + 0.5) * part.cell_size[0];
                let hot = (20.0..32.0).contains(&x)
                    || (45.0..57.0).contains(&x)
                    || (70.0..78.0).contains(&x);
                if hot {
                    top
                } else {
                    0
                }
            })
            .collect(),
        ("example2", 1) => (0..part.n_cells())
            .map(|c| {
                let x = part.origin[0] + (c as f64 + 0.5) * part.cell_size[0];
                let v: f64 = match x {
                    x if x < 22.0 => 0.4,
                    x if x < 36.0 => 1.5,
                    x if x < 50.0 => 2.0,
                    x if x < 62.0 => 0.5,
                    x if x < 76.0 => -1.0,
                    _ => 1.1,
                };
                level_of(v, m, big_m, top)
            })
            .collect(),
        ("example3", 2) => (0..part.n_cells())
            .map(|c| {
                let (x, y) = cell_center(part, c);
                let blob = (x - 12.0).powi(2) + (y - 11.0).powi(2) < 16.0;
                let bar = (4.0..8.0).contains(&x) && (11.0..16.0).contains(&y);
                let patch = (5.0..10.0).contains(&x) && (4.0..7.0).contains(&y);
                if blob || bar || patch {
                    top
                } else {
                    0
                }
            })
            .collect(),
        ("example4", 2) => (0..part.n_cells())
            .map(|c| {
                let (x, y) = cell_center(part, c);
                let hill = 2.0 * (-((x - 12.0).powi(2) + (y - 9.0).powi(2)) / 18.0).exp();
                let ridge = if (4.0..8.0).contains(&x) && y > 11.0 {
                    1.2
                } else {
                    0.0
                };
                let v = (-1.0 + 2.5 * hill + ridge).clamp(m, big_m);
                level_of(v, m, big_m, top)
            })
            .collect(),
        ("mini", 1) => [1u16, 0, 1, 1]
            .iter()
            .map(|&l| l.min(top))
            .take(part.n_cells())
            .collect(),
        _ => {
            return Err(Error::Config(format!(
                "no built-in truth `{name}` for a {}D space",
                part.dim()
            )))
        }
    };
    let config = HabitatConfiguration::from_levels(levels);
    space.check(&config)?;
    Ok(config)
}

fn cell_center(part: &CellPartition, c: usize) -> (f64, f64) {
    let ij = part.cell_coords(c);
    (
        part.origin[0] + (ij[0] as f64 + 0.5) * part.cell_size[0],
        part.origin[1] + (ij[1] as f64 + 0.5) * part.cell_size[1],
    )
}

fn level_of(v: f64, m: f64, big_m: f64, top: u16) -> u16 {
    if top == 0 {
        return 0;
    }
    (((v - m) / (big_m - m)) * top as f64)
        .round()
        .clamp(0.0, top as f64) as u16
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let base_1d = |name: &str, levels, max_iters| Self {
            name: name.to_string(),
            domain: domain_1d(),
            nodes: vec![201],
            d: 1.0,
            gamma: 0.1,
            dt: 5e-4,
            horizon: 0.5,
            window: WindowSpec {
                t0: 0.1,
                t1: 0.4,
                stride: 10,
            },
            initial: InitialDensity::new(InitialProfile::Humps1d, 1.0),
            space: space_1d(levels),
            truth: TruthSpec::Named {
                name: name.to_string(),
            },
            schedule: CoolingSchedule::default(),
            stop: StopRule {
                max_iters,
                quiescence: 500,
            },
            seed: 0,
            noise: None,
        };
        let base_2d = |name: &str, space: SpaceSpec, truth: &str, max_iters| Self {
            name: name.to_string(),
            domain: domain_2d(),
            nodes: vec![101, 101],
            d: 1.0,
            gamma: 0.1,
            dt: 1e-3,
            horizon: 0.5,
            window: WindowSpec {
                t0: 0.1,
                t1: 0.4,
                stride: 10,
            },
            initial: InitialDensity::new(InitialProfile::Humps2d, 1.0),
            space,
            truth: TruthSpec::Named {
                name: truth.to_string(),
            },
            schedule: CoolingSchedule::default(),
            stop: StopRule {
                max_iters,
                quiescence: 500,
            },
            seed: 0,
            noise: None,
        };
        let graded = LevelSet::Graded { count: 21 };
        let mut config = match name {
            "example1" => base_1d(name, LevelSet::Binary, 30_000),
            "example2" => base_1d(name, graded, 40_000),
            "example3" => base_2d(
                name,
                space_2d(LevelSet::Binary, 1.0, 16),
                "example3",
                60_000,
            ),
            "example4" => base_2d(name, space_2d(graded, 1.0, 16), "example4", 80_000),
            "example3-16" => base_2d(name, space_2d(LevelSet::Binary, 4.0, 4), "example3", 60_000),
            "example4-16" => base_2d(name, space_2d(graded, 4.0, 4), "example4", 80_000),
            "mini" => {
                let mut c = base_1d(name, LevelSet::Binary, 5_000);
                c.nodes = vec![101];
                c.dt = 2e-3;
                c.window.stride = 5;
                c.space.partition = CellPartition {
                    origin: vec![10.0],
                    cell_size: vec![20.0],
                    counts: vec![4],
                };
                c
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown preset `{other}` (known: {})",
                    PRESETS.join(", ")
                )))
            }
        };
        // Snapshots list the truth explicitly.
        let space = ConfigurationSpace::new(config.space.clone())?;
        config.truth = TruthSpec::Levels {
            levels: config.resolve_truth(&space)?.levels().to_vec(),
        };
        Ok(config)
    }

    /// Loads a JSON file, or a preset when `source` is a preset name.
    pub fn load(source: &str) -> Result<Self> {
        if PRESETS.contains(&source) {
            return Self::preset(source);
        }
        let text = fs::read_to_string(source)?;
        let config: Self = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if self.nodes.len() != self.domain.dimension() {
            return Err(Error::Config("one node count per axis is required".into()));
        }
        let space = ConfigurationSpace::new(self.space.clone())?;
        space.check_domain(&self.domain)?;
        self.schedule.validate()?;
        self.solver_params()?.validate()?;
        self.observation_window()?;
        self.resolve_truth(&space)?;
        let expected = match self.initial.profile {
            InitialProfile::Humps1d => 1,
            InitialProfile::Humps2d => 2,
        };
        if expected != self.domain.dimension() {
            return Err(Error::Config(
                "initial profile dimension differs from the domain".into(),
            ));
        }
        if self.window.t1 > self.horizon {
            return Err(Error::Config(
                "observation window extends past the horizon".into(),
            ));
        }
        Ok(())
    }

    pub fn observation_window(&self) -> Result<ObservationWindow> {
        ObservationWindow::new(self.window.t0, self.window.t1, self.dt, self.window.stride)
    }

    pub fn solver_params(&self) -> Result<SolverParams> {
        Ok(SolverParams {
            d: self.d,
            gamma: self.gamma,
            dt: self.dt,
            t_end: self.horizon,
            record_times: self.observation_window()?.record_times(),
        })
    }

    pub fn resolve_truth(&self, space: &ConfigurationSpace) -> Result<HabitatConfiguration> {
        let config = match &self.truth {
            TruthSpec::Named { name } => named_truth(name, space)?,
            TruthSpec::Levels { levels } => HabitatConfiguration::from_levels(levels.clone()),
            TruthSpec::Values { values } => space.from_values(values)?,
        };
        space.check(&config)?;
        Ok(config)
    }

    /// Same experiment at another resolution.
    pub fn with_resolution(mut self, nodes: Vec<usize>, dt: f64) -> Self {
        self.nodes = nodes;
        self.dt = dt;
        self
    }
}

/// Everything produced by the forward half of an experiment.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub grid: Grid,
    pub space: ConfigurationSpace,
    pub truth: HabitatConfiguration,
    pub truth_field: ScalarField,
    pub measurements: MeasurementSet,
}

/// Builds the truth, solves the forward problem and extracts the data.
pub fn simulate(config: &ExperimentConfig) -> Result<Simulation> {
    config.validate()?;
    let grid = build_grid(&config.domain, &config.nodes)?;
    let space = ConfigurationSpace::new(config.space.clone())?;
    let truth = config.resolve_truth(&space)?;
    let truth_field = habitat_to_field(&space, &truth, &grid)?;
    let u0 = config.initial.to_field(&grid)?;
    let traj = solve_parabolic(&grid, &truth_field, &u0, &config.solver_params()?)?;
    let omega = region_mask(&grid, &config.domain.obs_region)?;
    let acquisition = Acquisition {
        d: config.d,
        initial: config.initial,
    };
    let mut measurements = extract_measurements(
        &grid,
        &traj,
        &config.observation_window()?,
        &omega,
        acquisition,
    )?;
    if let Some(noise) = config.noise {
        measurements.add_noise(noise)?;
    }
    Ok(Simulation {
        grid,
        space,
        truth,
        truth_field,
        measurements,
    })
}

/// Runs the annealer on measurements, streaming the trace to `trace_out`
/// when given.
pub fn reconstruct(
    ms: &MeasurementSet,
    space: &ConfigurationSpace,
    schedule: CoolingSchedule,
    stop: StopRule,
    seed: u64,
    trace_out: Option<&Path>,
) -> Result<AnnealingTrace> {
    let evaluator = Evaluator::new(ms, space)?;
    match trace_out {
        None => anneal_with(
            &evaluator,
            schedule,
            stop,
            seed,
            RunOptions::default(),
            |_| Ok(()),
        ),
        Some(path) => {
            let mut w = BufWriter::new(fs::File::create(path)?);
            write_trace_header(&mut w)?;
            let result = anneal_with(
                &evaluator,
                schedule,
                stop,
                seed,
                RunOptions::default(),
                |row| write_trace_row(&mut w, row),
            );
            w.flush()?;
            result
        }
    }
}

/// Summary of a finished experiment.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub trace: AnnealingTrace,
    pub mean_abs_error: Option<f64>,
    pub forecast: Forecast,
}

/// Default output root: `$HABINV_OUT`, else `./runs`.
pub fn default_out_root() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Creates a fresh `<root>/<label>-<unix millis>` directory.
pub fn timestamped_dir(root: &Path, label: &str) -> Result<PathBuf> {
    fs::create_dir_all(root)?;
    let millis = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    let mut dir = root.join(format!("{label}-{millis}"));
    let mut k = 1;
    while dir.exists() {
        dir = root.join(format!("{label}-{millis}-{k}"));
        k += 1;
    }
    fs::create_dir(&dir)?;
    Ok(dir)
}

/// The full pipeline. Artifacts written so far are kept on failure.
pub fn run_experiment(config: &ExperimentConfig, dir: &Path) -> Result<RunSummary> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    write_file(dir, "config.json", &mut files, |w| {
        serde_json::to_writer_pretty(&mut *w, config)?;
        writeln!(w)?;
        Ok(())
    })?;
    let sim = simulate(config)?;
    write_file(dir, "truth_mu.csv", &mut files, |w| {
        sim.truth_field.write_csv(&sim.grid, w)
    })?;
    sim.measurements.save(dir.join("measurements.hinv"))?;
    files.push("measurements.hinv".to_string());

    let trace = reconstruct(
        &sim.measurements,
        &sim.space,
        config.schedule,
        config.stop,
        config.seed,
        Some(&dir.join("trace.csv")),
    )?;
    files.push("trace.csv".to_string());
    let estimate = &trace.final_config;
    let mae = mean_abs_error(&sim.space, &sim.truth, estimate, config.domain.measure())?;
    let mu_hat = habitat_to_field(&sim.space, estimate, &sim.grid)?;
    write_estimate(dir, &sim.grid, &sim.space, estimate, &mu_hat, &mut files)?;
    write_file(dir, "mean_abs_error.txt", &mut files, |w| {
        writeln!(w, "{mae:e}")?;
        Ok(())
    })?;
    let fc = forecast(
        &sim.space,
        estimate,
        &sim.grid,
        config.d,
        Some(config.gamma),
    )?;
    write_forecast(dir, &sim.grid, &fc, &mut files)?;
    write_plots(
        dir,
        &sim.grid,
        &[
            ("mu_true", &sim.truth_field),
            ("mu_hat", &mu_hat),
            (
                "snapshot",
                &ScalarField::new(&sim.grid, sim.measurements.snapshot.clone())?,
            ),
        ],
        &mut files,
    )?;

    let evaluator = Evaluator::new(&sim.measurements, &sim.space)?;
    let g_truth = evaluator.evaluate(&sim.truth)?.total;
    write_file(dir, "report.txt", &mut files, |w| {
        writeln!(w, "experiment = {}", config.name)?;
        writeln!(w, "seed = {}", config.seed)?;
        write_trace_report(w, &trace)?;
        writeln!(w, "g_truth = {g_truth:e}")?;
        writeln!(w, "mean_abs_error = {mae:e}")?;
        writeln!(w, "exact_recovery = {}", *estimate == sim.truth)?;
        writeln!(w, "cells_wrong = {}", estimate.hamming(&sim.truth))?;
        Ok(())
    })?;
    write_manifest(dir, &files)?;
    Ok(RunSummary {
        dir: dir.to_path_buf(),
        trace,
        mean_abs_error: Some(mae),
        forecast: fc,
    })
}

/// Blind inversion of saved measurements.
#[allow(clippy::too_many_arguments)]
pub fn run_inversion(
    ms: &MeasurementSet,
    space: &ConfigurationSpace,
    schedule: CoolingSchedule,
    stop: StopRule,
    seed: u64,
    gamma: Option<f64>,
    dir: &Path,
) -> Result<RunSummary> {
    fs::create_dir_all(dir)?;
    let grid = ms.grid()?;
    let mut files = Vec::new();
    let trace = reconstruct(
        ms,
        space,
        schedule,
        stop,
        seed,
        Some(&dir.join("trace.csv")),
    )?;
    files.push("trace.csv".to_string());
    let mu_hat = habitat_to_field(space, &trace.final_config, &grid)?;
    write_estimate(dir, &grid, space, &trace.final_config, &mu_hat, &mut files)?;
    let fc = forecast(space, &trace.final_config, &grid, ms.acquisition.d, gamma)?;
    write_forecast(dir, &grid, &fc, &mut files)?;
    write_plots(dir, &grid, &[("mu_hat", &mu_hat)], &mut files)?;
    write_file(dir, "report.txt", &mut files, |w| {
        writeln!(w, "seed = {seed}")?;
        write_trace_report(w, &trace)
    })?;
    write_manifest(dir, &files)?;
    Ok(RunSummary {
        dir: dir.to_path_buf(),
        trace,
        mean_abs_error: None,
        forecast: fc,
    })
}

/// Resolves a space argument: a preset name or a JSON [`SpaceSpec`] file.
pub fn load_space(source: &str) -> Result<ConfigurationSpace> {
    if PRESETS.contains(&source) {
        return ConfigurationSpace::new(ExperimentConfig::preset(source)?.space);
    }
    let text = fs::read_to_string(source)?;
    ConfigurationSpace::new(serde_json::from_str(&text)?)
}

fn write_trace_report(w: &mut dyn Write, trace: &AnnealingTrace) -> Result<()> {
    writeln!(w, "iterations = {}", trace.iterations())?;
    match trace.last_change {
        Some(n) => writeln!(w, "last_change = {n}")?,
        None => writeln!(w, "last_change = none")?,
    }
    writeln!(w, "stop_reason = {:?}", trace.stop_reason)?;
    writeln!(w, "accepted = {}", trace.accepted())?;
    writeln!(
        w,
        "early_acceptance_rate = {:.3}",
        trace.early_acceptance(100)
    )?;
    writeln!(w, "g_initial = {:e}", trace.g_initial)?;
    writeln!(w, "g_final = {:e}", trace.g_final)?;
    writeln!(w, "elapsed_secs = {:.3}", trace.elapsed_secs)?;
    Ok(())
}

fn write_file(
    dir: &Path,
    name: &str,
    files: &mut Vec<String>,
    body: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(dir.join(name))?);
    body(&mut w)?;
    w.flush()?;
    files.push(name.to_string());
    Ok(())
}

fn write_estimate(
    dir: &Path,
    grid: &Grid,
    space: &ConfigurationSpace,
    estimate: &HabitatConfiguration,
    mu_hat: &ScalarField,
    files: &mut Vec<String>,
) -> Result<()> {
    write_file(dir, "mu_hat.csv", files, |w| mu_hat.write_csv(grid, w))?;
    write_file(dir, "mu_hat_cells.csv", files, |w| {
        let dim = space.partition().dim();
        if dim == 1 {
            writeln!(w, "cell,i,level,value")?;
        } else {
            writeln!(w, "cell,i,j,level,value")?;
        }
        for (c, &level) in estimate.levels().iter().enumerate() {
            let ij = space.partition().cell_coords(c);
            let coords: Vec<String> = ij.iter().map(|v| v.to_string()).collect();
            writeln!(
                w,
                "{c},{},{level},{}",
                coords.join(","),
                space.value(estimate, c)
            )?;
        }
        Ok(())
    })
}

fn write_forecast(dir: &Path, grid: &Grid, fc: &Forecast, files: &mut Vec<String>) -> Result<()> {
    write_file(dir, "forecast.txt", files, |w| {
        w.write_all(fc.summary().as_bytes())?;
        Ok(())
    })?;
    if let Some(p) = &fc.steady_state {
        write_file(dir, "steady_state.csv", files, |w| p.write_csv(grid, w))?;
    }
    Ok(())
}

/// 1D: one profile table; 2D: one matrix per field (rows are y, columns x).
fn write_plots(
    dir: &Path,
    grid: &Grid,
    fields: &[(&str, &ScalarField)],
    files: &mut Vec<String>,
) -> Result<()> {
    if grid.dim() == 1 {
        return write_file(dir, "plot_profiles.csv", files, |w| {
            let names: Vec<&str> = fields.iter().map(|(n, _)| *n).collect();
            writeln!(w, "x,{}", names.join(","))?;
            for k in 0..grid.len() {
                let vals: Vec<String> = fields
                    .iter()
                    .map(|(_, f)| f.values()[k].to_string())
                    .collect();
                writeln!(w, "{},{}", grid.coord(k)[0], vals.join(","))?;
            }
            Ok(())
        });
    }
    let [nx, ny] = grid.nodes();
    for (name, field) in fields {
        write_file(dir, &format!("plot_{name}_grid.csv"), files, |w| {
            for j in 0..ny {
                let row: Vec<String> = (0..nx)
                    .map(|i| field.values()[grid.index(i, j)].to_string())
                    .collect();
                writeln!(w, "{}", row.join(","))?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn write_manifest(dir: &Path, files: &[String]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(dir.join("manifest.txt"))?);
    writeln!(w, "file,bytes,crc32")?;
    for name in files {
        let bytes = fs::read(dir.join(name))?;
        writeln!(w, "{name},{},{:08x}", bytes.len(), crc32fast::hash(&bytes))?;
    }
    w.flush()?;
    Ok(())
}
