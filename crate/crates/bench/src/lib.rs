//! Shared fixtures for the benchmarks.

use habinv::experiment::{simulate, ExperimentConfig, Simulation};

/// Simulated data for a preset, optionally at another resolution.
pub fn fixture(preset: &str, resolution: Option<(Vec<usize>, f64)>) -> Simulation {
    let mut config = ExperimentConfig::preset(preset).expect("known preset");
    if let Some((nodes, dt)) = resolution {
        config = config.with_resolution(nodes, dt);
    }
    simulate(&config).expect("fixture simulation")
}
