//! Misfit functional `G(γ, μ̃)` between measured data and the linear-model
//! prediction `ṽ` for a candidate growth rate `μ̃`:
//!
//! ```text
//! G = ‖∂t u − ∂t ṽ‖²_{L²((t0,t1)×ω)} + ‖Δu(T') − Δṽ(T')‖²_{L²(Ω)} + ‖u(T') − ṽ(T')‖²_{L²(Ω)}
//! ```
//!
//! `ṽ` solves the problem with `γ = 0` from the same initial density, on the
//! same grid and time step as the measurements, and is differentiated in
//! time with the same finite-difference formula.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::laplacian_into;
use crate::geometry::Grid;
use crate::observation::{time_derivative, MeasurementSet};
use crate::solver::{divergence_bound, Stepper};
use crate::space::{CellMap, ConfigurationSpace, HabitatConfiguration};

/// One evaluation of the functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GValue {
    pub total: f64,
    pub term_dtu: f64,
    pub term_laplacian: f64,
    pub term_snapshot: f64,
    /// CRC32 of the candidate's cell levels.
    pub candidate_id: u32,
    pub elapsed_secs: f64,
}

/// Candidate identifier used in [`GValue`].
pub fn candidate_id(config: &HabitatConfiguration) -> u32 {
    let bytes: Vec<u8> = config
        .levels()
        .iter()
        .flat_map(|l| l.to_le_bytes())
        .collect();
    crc32fast::hash(&bytes)
}

/// Evaluates `G` for candidates of one space against one measurement set.
/// The implicit factors and all quadrature weights are built once.
#[derive(Debug, Clone)]
pub struct Evaluator {
    ms: MeasurementSet,
    grid: Grid,
    space: ConfigurationSpace,
    cells: CellMap,
    stepper: Stepper,
    u0: Vec<f64>,
    node_weights: Vec<f64>,
    omega_weights: Vec<f64>,
    time_weights: Vec<f64>,
}

impl Evaluator {
    pub fn new(ms: &MeasurementSet, space: &ConfigurationSpace) -> Result<Self> {
        let grid = ms.grid()?;
        Self::on_grid(ms, space, &grid)
    }

    /// As [`Evaluator::new`], additionally checking that the measurements
    /// were taken on `grid`.
    pub fn on_grid(ms: &MeasurementSet, space: &ConfigurationSpace, grid: &Grid) -> Result<Self> {
        ms.check_grid(grid)?;
        if ms.snapshot.len() != grid.len() || ms.dtu_record.len() != ms.n_samples() * ms.omega.len()
        {
            return Err(Error::GridMismatch(
                "measurement arrays do not match the grid".into(),
            ));
        }
        let cells = CellMap::new(space, grid)?;
        let stepper = Stepper::new(grid, ms.acquisition.d, ms.window.dt)?;
        let u0 = ms.acquisition.initial.to_field(grid)?.into_values();
        let node_weights: Vec<f64> = (0..grid.len()).map(|k| grid.weight(k)).collect();
        let omega_weights = ms.omega.iter().map(|&k| node_weights[k]).collect();
        Ok(Self {
            ms: ms.clone(),
            grid: grid.clone(),
            space: space.clone(),
            cells,
            stepper,
            u0,
            node_weights,
            omega_weights,
            time_weights: ms.window.time_weights(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn space(&self) -> &ConfigurationSpace {
        &self.space
    }

    pub fn measurements(&self) -> &MeasurementSet {
        &self.ms
    }

    pub fn evaluate(&self, config: &HabitatConfiguration) -> Result<GValue> {
        self.space.check(config)?;
        let mut mu = vec![0.0; self.grid.len()];
        self.cells.fill(&self.space, config, &mut mu);
        let mut g = self.evaluate_field(&mu)?;
        g.candidate_id = candidate_id(config);
        Ok(g)
    }

    /// `G` for an arbitrary nodal growth-rate field.
    pub fn evaluate_field(&self, mu: &[f64]) -> Result<GValue> {
        let start = Instant::now();
        let n = self.grid.len();
        if mu.len() != n {
            return Err(Error::GridMismatch(format!(
                "growth field has {} values for {n} nodes",
                mu.len()
            )));
        }
        let w = &self.ms.window;
        let steps = w.sample_steps();
        let last = *steps.last().expect("window has samples");
        let snap_step = w.snapshot_step();
        let omega = &self.ms.omega;
        let mut samples = Vec::with_capacity(steps.len() * omega.len());
        let mut snapshot = Vec::new();
        let mut next = 0;
        let bound = divergence_bound(mu, &self.u0, last as f64 * w.dt);
        self.stepper.march(mu, &self.u0, 0.0, last, bound, |s, u| {
            if next < steps.len() && steps[next] == s {
                samples.extend(omega.iter().map(|&k| u[k]));
                next += 1;
            }
            if s == snap_step {
                snapshot = u.to_vec();
            }
        })?;
        let dtv = time_derivative(&samples, omega.len(), w.sample_spacing());
        let mut lap = vec![0.0; n];
        laplacian_into(&self.grid, &snapshot, &mut lap);

        let width = omega.len();
        let mut term_dtu = 0.0;
        for (k, tw) in self.time_weights.iter().enumerate() {
            let row = k * width..(k + 1) * width;
            let s: f64 = dtv[row.clone()]
                .iter()
                .zip(&self.ms.dtu_record[row])
                .zip(&self.omega_weights)
                .map(|((a, b), wt)| wt * (a - b) * (a - b))
                .sum();
            term_dtu += tw * s;
        }
        let sq = |a: &[f64], b: &[f64]| -> f64 {
            a.iter()
                .zip(b)
                .zip(&self.node_weights)
                .map(|((x, y), wt)| wt * (x - y) * (x - y))
                .sum()
        };
        let term_laplacian = sq(&lap, &self.ms.snapshot_laplacian);
        let term_snapshot = sq(&snapshot, &self.ms.snapshot);
        Ok(GValue {
            total: term_dtu + term_laplacian + term_snapshot,
            term_dtu,
            term_laplacian,
            term_snapshot,
            candidate_id: 0,
            elapsed_secs: start.elapsed().as_secs_f64(),
        })
    }
}

/// One-shot evaluation; builds a fresh [`Evaluator`].
pub fn evaluate_g(
    ms: &MeasurementSet,
    space: &ConfigurationSpace,
    config: &HabitatConfiguration,
) -> Result<GValue> {
    Evaluator::new(ms, space)?.evaluate(config)
}
