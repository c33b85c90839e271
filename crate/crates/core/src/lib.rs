//! Reconstruction of the spatial growth-rate field of a logistic
//! reaction-diffusion invasion model from partial density measurements, by
//! simulated annealing over finite habitat-configuration spaces, and
//! persistence forecasting from the reconstruction.

// Negated comparisons reject NaN; index loops mirror the stencils.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod annealing;
pub mod error;
pub mod experiment;
pub mod fields;
pub mod forecast;
pub mod functional;
pub mod geometry;
pub mod linalg;
pub mod observation;
pub mod solver;
pub mod space;

pub use annealing::{anneal, mean_abs_error, AnnealingTrace, CoolingSchedule, StopRule};
pub use error::{Error, Result};
pub use experiment::{run_experiment, run_inversion, simulate, ExperimentConfig};
pub use fields::{discrete_laplacian, habitat_to_field, l2_inner, ScalarField};
pub use forecast::{forecast, Forecast, Verdict};
pub use functional::{evaluate_g, Evaluator, GValue};
pub use geometry::{
    build_grid, region_mask, DomainSpec, Grid, GridDescriptor, Interval, NodeMask, RegionSpec,
};
pub use observation::{
    extract_measurements, load_measurements, save_measurements, MeasurementSet, ObservationWindow,
};
pub use solver::{
    principal_eigenvalue, solve_parabolic, solve_steady_state, InitialDensity, InitialProfile,
    SolverParams, Trajectory,
};
pub use space::{ConfigurationSpace, HabitatBounds, HabitatConfiguration, LevelSet, SpaceSpec};
