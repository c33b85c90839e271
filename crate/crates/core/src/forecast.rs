//! Persistence forecast from a growth-rate field: the sign of the principal
//! eigenvalue `λ₁` of `ψ ↦ -DΔψ - μψ` decides between persistence
//! (`λ₁ < 0`) and extinction (`λ₁ ≥ 0`), and when the crowding coefficient
//! is known the long-time density is the nonnegative steady state, positive
//! exactly when `λ₁ < 0`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fields::{habitat_to_field, ScalarField};
use crate::geometry::Grid;
use crate::solver::{
    principal_eigenpair, solve_steady_state, steady_residual, EigenOptions, PERSISTENCE_TOL,
};
use crate::space::{ConfigurationSpace, HabitatConfiguration};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Persistence,
    Extinction,
}

#[derive(Debug, Clone)]
pub struct Forecast {
    pub lambda1: f64,
    pub verdict: Verdict,
    /// Long-time density, present when `γ` was supplied (zero on extinction).
    pub steady_state: Option<ScalarField>,
    pub eigen_residual: f64,
    /// Residual of the steady equation, when a steady state was computed.
    pub steady_residual: Option<f64>,
}

impl Forecast {
    /// Key-value text summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let verdict = match self.verdict {
            Verdict::Persistence => "persistence",
            Verdict::Extinction => "extinction",
        };
        let _ = writeln!(s, "verdict = {verdict}");
        let _ = writeln!(s, "lambda1 = {:.12e}", self.lambda1);
        let _ = writeln!(s, "eigen_residual = {:.3e}", self.eigen_residual);
        let _ = writeln!(s, "persistence_tol = {PERSISTENCE_TOL:e}");
        if let Some(p) = &self.steady_state {
            let _ = writeln!(s, "steady_state_max = {:.12e}", p.max());
        }
        if let Some(r) = self.steady_residual {
            let _ = writeln!(s, "steady_state_residual = {r:.3e}");
        }
        s
    }
}

/// Forecast for a nodal growth-rate field.
pub fn forecast_field(
    grid: &Grid,
    mu: &ScalarField,
    d: f64,
    gamma: Option<f64>,
) -> Result<Forecast> {
    let eig = principal_eigenpair(grid, mu, d, EigenOptions::default())?;
    let verdict = if eig.lambda1 < -PERSISTENCE_TOL {
        Verdict::Persistence
    } else {
        Verdict::Extinction
    };
    let (steady_state, residual) = match gamma {
        Some(gamma) => {
            let p = match verdict {
                Verdict::Persistence => solve_steady_state(grid, mu, gamma, d)?,
                Verdict::Extinction => ScalarField::zeros(grid),
            };
            let r = steady_residual(grid, &p, mu, gamma, d);
            (Some(p), Some(r))
        }
        None => (None, None),
    };
    Ok(Forecast {
        lambda1: eig.lambda1,
        verdict,
        steady_state,
        eigen_residual: eig.residual,
        steady_residual: residual,
    })
}

/// Forecast for a configuration of `space` embedded on `grid`.
pub fn forecast(
    space: &ConfigurationSpace,
    config: &HabitatConfiguration,
    grid: &Grid,
    d: f64,
    gamma: Option<f64>,
) -> Result<Forecast> {
    let mu = habitat_to_field(space, config, grid)?;
    forecast_field(grid, &mu, d, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Interval;
    use crate::space::{CellPartition, HabitatBounds, LevelSet, SpaceSpec};
    use std::f64::consts::PI;

    fn setup() -> (Grid, ConfigurationSpace) {
        let grid = Grid::new(&[Interval::new(0.0, 100.0)], &[201]).unwrap();
        let space = ConfigurationSpace::new(SpaceSpec {
            partition: CellPartition {
                origin: vec![10.0],
                cell_size: vec![1.0],
                counts: vec![80],
            },
            levels: LevelSet::Binary,
            bounds: HabitatBounds::new(-1.0, 2.0).unwrap(),
        })
        .unwrap();
        (grid, space)
    }

    #[test]
    fn hostile_habitat_goes_extinct() {
        let (grid, space) = setup();
        let f = forecast(&space, &space.uniform(0), &grid, 1.0, Some(0.1)).unwrap();
        let exact = PI * PI / 1e4 + 1.0;
        assert!((f.lambda1 - exact).abs() < 1e-3);
        assert_eq!(f.verdict, Verdict::Extinction);
        assert_eq!(f.steady_state.unwrap().max(), 0.0);
    }

    #[test]
    fn favourable_habitat_persists() {
        let (grid, _) = setup();
        let mu = ScalarField::constant(&grid, 2.0);
        let f = forecast_field(&grid, &mu, 1.0, Some(0.1)).unwrap();
        assert!((f.lambda1 - (PI * PI / 1e4 - 2.0)).abs() < 1e-3);
        assert_eq!(f.verdict, Verdict::Persistence);
        let p = f.steady_state.as_ref().unwrap();
        assert!(p.min() >= 0.0);
        assert_eq!(p.values()[0], 0.0);
        assert!(f.steady_residual.unwrap() < 1e-6);
        assert!(f.summary().contains("verdict = persistence"));
    }

    #[test]
    fn verdict_ignores_crowding() {
        let (grid, space) = setup();
        let mut levels = vec![0u16; 80];
        levels[30..50].iter_mut().for_each(|l| *l = 1);
        let c = HabitatConfiguration::from_levels(levels);
        let a = forecast(&space, &c, &grid, 1.0, None).unwrap();
        let b = forecast(&space, &c, &grid, 1.0, Some(0.5)).unwrap();
        let e = forecast(&space, &c, &grid, 1.0, Some(0.05)).unwrap();
        assert_eq!(a.verdict, b.verdict);
        assert_eq!(b.verdict, e.verdict);
        assert_eq!(a.lambda1, b.lambda1);
        assert!(a.steady_state.is_none());
    }
}
