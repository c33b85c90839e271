//! Simulated annealing over a configuration space.
//!
//! The loop follows the classical pseudocode: at iteration `n` propose a
//! random neighbour `ν` of the incumbent; accept it outright when
//! `G(ν) ≤ G(incumbent)`; otherwise draw `w` uniformly in `(0, 1)` and accept
//! iff `w < exp((G(incumbent) − G(ν)) / Θ(n))`.
//!
//! Randomness comes from one seed split into three ChaCha8 streams:
//! stream 0 draws the initial configuration, stream 1 the proposals and
//! stream 2 the acceptance draws. Changing how often one of them is used
//! does not shift the others.

use std::io::Write;
use std::time::Instant;

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::Evaluator;
use crate::space::{ConfigurationSpace, HabitatConfiguration};

pub const STREAM_INITIAL: u64 = 0;
pub const STREAM_PROPOSAL: u64 = 1;
pub const STREAM_ACCEPTANCE: u64 = 2;

/// Generator for one of the three streams derived from `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Exponential cooling `Θ(n) = Θ0 αⁿ`. With `α = 0` the temperature is zero
/// from the first iteration on, which turns the search into pure descent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoolingSchedule {
    pub theta0: f64,
    pub alpha: f64,
}

impl Default for CoolingSchedule {
    fn default() -> Self {
        Self {
            theta0: 100.0,
            alpha: 0.99,
        }
    }
}

impl CoolingSchedule {
    pub fn new(theta0: f64, alpha: f64) -> Result<Self> {
        let s = Self { theta0, alpha };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta0 > 0.0) || !self.theta0.is_finite() {
            return Err(Error::InvalidParams(format!(
                "theta0 = {} must be positive",
                self.theta0
            )));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::InvalidParams(format!(
                "alpha = {} must lie in [0, 1)",
                self.alpha
            )));
        }
        Ok(())
    }

    pub fn theta(&self, n: usize) -> f64 {
        if self.alpha == 0.0 {
            return 0.0;
        }
        self.theta0 * self.alpha.powf(n as f64)
    }
}

/// Termination: at most `max_iters` proposals, or `quiescence` consecutive
/// iterations without a change of the incumbent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_iters: usize,
    pub quiescence: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            max_iters: 30_000,
            quiescence: 500,
        }
    }
}

/// Metropolis test for an uphill proposal. Returns the decision and the
/// uniform draw used.
pub fn metropolis_accept<R: Rng + ?Sized>(
    g_incumbent: f64,
    g_candidate: f64,
    theta: f64,
    rng: &mut R,
) -> (bool, f64) {
    let w: f64 = rng.sample(Open01);
    let threshold = if theta > 0.0 {
        ((g_incumbent - g_candidate) / theta).exp()
    } else {
        0.0
    };
    (w < threshold, w)
}

/// Anything that can score configurations of a space.
pub trait Objective {
    fn space(&self) -> &ConfigurationSpace;
    fn value(&mut self, config: &HabitatConfiguration) -> Result<f64>;
}

impl Objective for &Evaluator {
    fn space(&self) -> &ConfigurationSpace {
        Evaluator::space(self)
    }

    fn value(&mut self, config: &HabitatConfiguration) -> Result<f64> {
        Ok(self.evaluate(config)?.total)
    }
}

impl<O: Objective + ?Sized> Objective for &mut O {
    fn space(&self) -> &ConfigurationSpace {
        (**self).space()
    }

    fn value(&mut self, config: &HabitatConfiguration) -> Result<f64> {
        (**self).value(config)
    }
}

/// One iteration of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub n: usize,
    pub g_candidate: f64,
    /// Incumbent value after the decision.
    pub g_incumbent: f64,
    pub theta: f64,
    pub accepted: bool,
    /// Uniform draw, present only for uphill proposals.
    pub w: Option<f64>,
    /// Proposed cell.
    pub cell: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Quiescence,
    MaxIterations,
}

/// Full audit record of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealingTrace {
    pub seed: u64,
    pub schedule: CoolingSchedule,
    pub stop: StopRule,
    pub initial: HabitatConfiguration,
    pub g_initial: f64,
    pub rows: Vec<TraceRow>,
    pub final_config: HabitatConfiguration,
    pub g_final: f64,
    /// Iteration at which the incumbent last changed (`None` if never).
    pub last_change: Option<usize>,
    pub stop_reason: StopReason,
    pub elapsed_secs: f64,
}

impl AnnealingTrace {
    pub fn iterations(&self) -> usize {
        self.rows.len()
    }

    pub fn accepted(&self) -> usize {
        self.rows.iter().filter(|r| r.accepted).count()
    }

    /// Fraction of proposals accepted among the first `k` iterations.
    pub fn early_acceptance(&self, k: usize) -> f64 {
        let head = &self.rows[..k.min(self.rows.len())];
        if head.is_empty() {
            return f64::NAN;
        }
        head.iter().filter(|r| r.accepted).count() as f64 / head.len() as f64
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write_trace_header(&mut w)?;
        for r in &self.rows {
            write_trace_row(&mut w, r)?;
        }
        Ok(())
    }
}

pub fn write_trace_header<W: Write>(w: &mut W) -> Result<()> {
    writeln!(w, "n,G_candidate,G_incumbent,theta,accepted,w,changed_cell")?;
    Ok(())
}

pub fn write_trace_row<W: Write>(w: &mut W, r: &TraceRow) -> Result<()> {
    let draw = r.w.map(|v| format!("{v:e}")).unwrap_or_default();
    let cell = if r.accepted {
        r.cell.to_string()
    } else {
        String::new()
    };
    writeln!(
        w,
        "{},{:e},{:e},{:e},{},{},{}",
        r.n, r.g_candidate, r.g_incumbent, r.theta, r.accepted as u8, draw, cell
    )?;
    Ok(())
}

/// Options of a run beyond the schedule and stop rule.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Starting configuration; drawn uniformly from stream 0 when absent.
    pub start: Option<HabitatConfiguration>,
}

/// Runs the chain and returns its trace (which holds the final incumbent).
pub fn anneal<O: Objective>(
    objective: O,
    schedule: CoolingSchedule,
    stop: StopRule,
    seed: u64,
) -> Result<AnnealingTrace> {
    anneal_with(
        objective,
        schedule,
        stop,
        seed,
        RunOptions::default(),
        |_| Ok(()),
    )
}

/// As [`anneal`], handing every row to `sink` as soon as it is decided. On
/// an evaluation failure the rows produced so far have already been sunk.
pub fn anneal_with<O: Objective>(
    mut objective: O,
    schedule: CoolingSchedule,
    stop: StopRule,
    seed: u64,
    options: RunOptions,
    mut sink: impl FnMut(&TraceRow) -> Result<()>,
) -> Result<AnnealingTrace> {
    schedule.validate()?;
    if stop.quiescence == 0 {
        return Err(Error::InvalidParams("quiescence must be positive".into()));
    }
    let start_time = Instant::now();
    let space = objective.space().clone();
    let mut incumbent = match options.start {
        Some(c) => {
            space.check(&c)?;
            c
        }
        None => space.sample_initial(&mut stream_rng(seed, STREAM_INITIAL)),
    };
    let mut proposals = stream_rng(seed, STREAM_PROPOSAL);
    let mut draws = stream_rng(seed, STREAM_ACCEPTANCE);
    let initial = incumbent.clone();
    let g_initial = objective.value(&incumbent)?;
    let mut g_inc = g_initial;
    let mut rows = Vec::new();
    let mut last_change = None;
    let mut quiet = 0usize;
    let mut stop_reason = StopReason::MaxIterations;

    for n in 0..stop.max_iters {
        let mv = space.random_neighbor(&incumbent, &mut proposals)?;
        let candidate = incumbent.with_move(&mv);
        let g_cand = objective.value(&candidate)?;
        let theta = schedule.theta(n);
        let (accepted, w) = if g_cand <= g_inc {
            (true, None)
        } else {
            let (ok, w) = metropolis_accept(g_inc, g_cand, theta, &mut draws);
            (ok, Some(w))
        };
        if accepted {
            incumbent = candidate;
            g_inc = g_cand;
            last_change = Some(n);
            quiet = 0;
        } else {
            quiet += 1;
        }
        let row = TraceRow {
            n,
            g_candidate: g_cand,
            g_incumbent: g_inc,
            theta,
            accepted,
            w,
            cell: mv.cell,
        };
        sink(&row)?;
        rows.push(row);
        if quiet >= stop.quiescence {
            stop_reason = StopReason::Quiescence;
            break;
        }
    }

    let trace = AnnealingTrace {
        seed,
        schedule,
        stop,
        initial,
        g_initial,
        rows,
        final_config: incumbent,
        g_final: g_inc,
        last_change,
        stop_reason,
        elapsed_secs: start_time.elapsed().as_secs_f64(),
    };
    if trace.rows.len() >= 100 {
        let rate = trace.early_acceptance(100);
        if rate < 0.9 {
            log::warn!(
                "only {:.0}% of the first 100 proposals were accepted; theta0 = {} may be too low",
                100.0 * rate,
                schedule.theta0
            );
        }
    }
    Ok(trace)
}

/// `(1/|Ω|) ∫ |μ − μ̂|`, integrated exactly cell by cell. Both configurations
/// equal `m` outside the cells, so only cells contribute.
pub fn mean_abs_error(
    space: &ConfigurationSpace,
    truth: &HabitatConfiguration,
    estimate: &HabitatConfiguration,
    domain_measure: f64,
) -> Result<f64> {
    mean_abs_error_between(space, truth, space, estimate, domain_measure)
}

/// As [`mean_abs_error`] for configurations of two spaces sharing one cell
/// partition and lower bound `m`.
pub fn mean_abs_error_between(
    truth_space: &ConfigurationSpace,
    truth: &HabitatConfiguration,
    estimate_space: &ConfigurationSpace,
    estimate: &HabitatConfiguration,
    domain_measure: f64,
) -> Result<f64> {
    if truth_space.partition() != estimate_space.partition() {
        return Err(Error::PartitionMismatch(
            "configurations live on different cell partitions".into(),
        ));
    }
    if truth_space.bounds().m != estimate_space.bounds().m {
        return Err(Error::PartitionMismatch(
            "spaces disagree on the value outside the cells".into(),
        ));
    }
    if !(domain_measure > 0.0) {
        return Err(Error::InvalidParams(
            "domain measure must be positive".into(),
        ));
    }
    let to_partition = |e: Error| match e {
        Error::InvalidConfiguration(s) => Error::PartitionMismatch(s),
        other => other,
    };
    truth_space.check(truth).map_err(to_partition)?;
    estimate_space.check(estimate).map_err(to_partition)?;
    let a = truth_space.cell_values(truth);
    let b = estimate_space.cell_values(estimate);
    let sum: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum * truth_space.partition().cell_measure() / domain_measure)
}
