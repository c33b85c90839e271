//! Finite spaces of piecewise-constant habitat configurations and their
//! neighborhood systems.
//!
//! A space partitions the unknown-coefficient box into unit cells and lets
//! every cell take one of a finite, ascending list of growth-rate levels.
//! Two configurations are neighbors when they differ on exactly one cell, by
//! exactly one level step. With two levels this is the binary flip; with the
//! 21-level set it is a change of `(M - m) / 20`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DomainSpec, Grid, Interval};

/// Growth-rate bounds: `m` is the value outside the unknown box, `big_m`
/// bounds the magnitude everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HabitatBounds {
    pub m: f64,
    pub big_m: f64,
}

impl HabitatBounds {
    pub fn new(m: f64, big_m: f64) -> Result<Self> {
        let b = Self { m, big_m };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.big_m > 0.0) || !self.big_m.is_finite() {
            return Err(Error::InvalidSpace(format!(
                "M = {} must be positive",
                self.big_m
            )));
        }
        if !(self.m >= -self.big_m && self.m <= self.big_m) {
            return Err(Error::InvalidSpace(format!(
                "m = {} outside [-M, M]",
                self.m
            )));
        }
        Ok(())
    }
}

/// Regular lattice of cells covering the unknown-coefficient box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPartition {
    pub origin: Vec<f64>,
    pub cell_size: Vec<f64>,
    pub counts: Vec<usize>,
}

impl CellPartition {
    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn n_cells(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn cell_measure(&self) -> f64 {
        self.cell_size.iter().product()
    }

    /// Closed box covered by the partition.
    pub fn bounds(&self) -> Vec<Interval> {
        (0..self.dim())
            .map(|a| {
                Interval::new(
                    self.origin[a],
                    self.origin[a] + self.cell_size[a] * self.counts[a] as f64,
                )
            })
            .collect()
    }

    /// Cell containing `p`, using half-open cells `[left, right)` except that
    /// the last cell on each axis is closed so the partition covers the
    /// closed box.
    pub fn locate(&self, p: &[f64]) -> Option<usize> {
        let mut index = 0;
        let mut stride = 1;
        for a in 0..self.dim() {
            let t = (p[a] - self.origin[a]) / self.cell_size[a];
            let n = self.counts[a];
            let tol = 1e-9;
            if t < -tol || t > n as f64 + tol {
                return None;
            }
            let c = ((t + tol).floor().max(0.0) as usize).min(n - 1);
            index += c * stride;
            stride *= n;
        }
        Some(index)
    }

    /// Per-axis cell coordinates of a flat cell index.
    pub fn cell_coords(&self, index: usize) -> Vec<usize> {
        let mut rest = index;
        self.counts
            .iter()
            .map(|&n| {
                let c = rest % n;
                rest /= n;
                c
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let d = self.counts.len();
        if d == 0 || d > 2 || self.origin.len() != d || self.cell_size.len() != d {
            return Err(Error::InvalidSpace(
                "partition axes are inconsistent".into(),
            ));
        }
        if self.counts.contains(&0) {
            return Err(Error::InvalidSpace("partition has an empty axis".into()));
        }
        if self.cell_size.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidSpace("cell sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Admissible cell values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevelSet {
    /// `{m, M}`.
    Binary,
    /// `count` equally spaced values from `m` to `M`.
    Graded { count: usize },
}

/// Serializable description of a configuration space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub partition: CellPartition,
    pub levels: LevelSet,
    pub bounds: HabitatBounds,
}

/// A finite configuration space `E` with its neighborhood rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigurationSpace {
    spec: SpaceSpec,
    values: Vec<f64>,
}

/// A single-cell change: set `cell` to level `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Move {
    pub cell: usize,
    pub from: u16,
    pub to: u16,
}

/// A member of a configuration space, stored as one level index per cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HabitatConfiguration {
    levels: Vec<u16>,
}

impl HabitatConfiguration {
    pub fn from_levels(levels: Vec<u16>) -> Self {
        Self { levels }
    }

    pub fn levels(&self) -> &[u16] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn apply(&mut self, mv: &Move) {
        debug_assert_eq!(self.levels[mv.cell], mv.from);
        self.levels[mv.cell] = mv.to;
    }

    pub fn with_move(&self, mv: &Move) -> Self {
        let mut next = self.clone();
        next.apply(mv);
        next
    }

    /// Number of cells on which two configurations differ.
    pub fn hamming(&self, other: &Self) -> usize {
        self.levels
            .iter()
            .zip(&other.levels)
            .filter(|(a, b)| a != b)
            .count()
    }
}

impl ConfigurationSpace {
    pub fn new(spec: SpaceSpec) -> Result<Self> {
        spec.bounds.validate()?;
        spec.partition.validate()?;
        let HabitatBounds { m, big_m } = spec.bounds;
        let values = match spec.levels {
            LevelSet::Binary => {
                if m == big_m {
                    vec![m]
                } else {
                    vec![m, big_m]
                }
            }
            LevelSet::Graded { count } => {
                if count == 0 || count > u16::MAX as usize {
                    return Err(Error::InvalidSpace(format!(
                        "unsupported level count {count}"
                    )));
                }
                if count == 1 {
                    vec![m]
                } else {
                    let steps = (count - 1) as f64;
                    (0..count)
                        .map(|j| (big_m - m) * j as f64 / steps + m)
                        .collect()
                }
            }
        };
        Ok(Self { spec, values })
    }

    pub fn spec(&self) -> &SpaceSpec {
        &self.spec
    }

    pub fn partition(&self) -> &CellPartition {
        &self.spec.partition
    }

    pub fn bounds(&self) -> HabitatBounds {
        self.spec.bounds
    }

    pub fn n_cells(&self) -> usize {
        self.spec.partition.n_cells()
    }

    /// Ascending admissible cell values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_levels(&self) -> usize {
        self.values.len()
    }

    pub fn value(&self, config: &HabitatConfiguration, cell: usize) -> f64 {
        self.values[config.levels[cell] as usize]
    }

    /// Per-cell growth rates of a configuration.
    pub fn cell_values(&self, config: &HabitatConfiguration) -> Vec<f64> {
        config
            .levels
            .iter()
            .map(|&l| self.values[l as usize])
            .collect()
    }

    /// Configuration with every cell at level `level`.
    pub fn uniform(&self, level: u16) -> HabitatConfiguration {
        HabitatConfiguration {
            levels: vec![level; self.n_cells()],
        }
    }

    /// Configuration from explicit cell values; each must be one of the
    /// admissible levels (to 1e-9).
    pub fn from_values(&self, values: &[f64]) -> Result<HabitatConfiguration> {
        if values.len() != self.n_cells() {
            return Err(Error::InvalidConfiguration(format!(
                "{} values for {} cells",
                values.len(),
                self.n_cells()
            )));
        }
        let levels = values
            .iter()
            .map(|&v| {
                self.values
                    .iter()
                    .position(|&l| (l - v).abs() <= 1e-9)
                    .map(|p| p as u16)
                    .ok_or_else(|| {
                        Error::InvalidConfiguration(format!("value {v} is not an admissible level"))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(HabitatConfiguration { levels })
    }

    pub fn check(&self, config: &HabitatConfiguration) -> Result<()> {
        if config.levels.len() != self.n_cells() {
            return Err(Error::InvalidConfiguration(format!(
                "{} cells, expected {}",
                config.levels.len(),
                self.n_cells()
            )));
        }
        if let Some(l) = config
            .levels
            .iter()
            .find(|&&l| l as usize >= self.values.len())
        {
            return Err(Error::InvalidConfiguration(format!(
                "level {l} out of range"
            )));
        }
        Ok(())
    }

    /// The partition must cover exactly the unknown-coefficient box of the
    /// domain.
    pub fn check_domain(&self, domain: &DomainSpec) -> Result<()> {
        let bounds = self.spec.partition.bounds();
        if bounds.len() != domain.dimension() {
            return Err(Error::PartitionMismatch(
                "dimension differs from domain".into(),
            ));
        }
        for (a, (p, o)) in bounds.iter().zip(&domain.omega1).enumerate() {
            if (p.lo - o.lo).abs() > 1e-9 || (p.hi - o.hi).abs() > 1e-9 {
                return Err(Error::PartitionMismatch(format!(
                    "axis {a}: cells cover [{}, {}] but omega1 is [{}, {}]",
                    p.lo, p.hi, o.lo, o.hi
                )));
            }
        }
        Ok(())
    }

    /// `log2 |E|`.
    pub fn cardinality_log2(&self) -> f64 {
        self.n_cells() as f64 * (self.n_levels() as f64).log2()
    }

    /// `|E|` when it fits in a `u128`.
    pub fn cardinality(&self) -> Option<u128> {
        let exp = u32::try_from(self.n_cells()).ok()?;
        (self.n_levels() as u128).checked_pow(exp)
    }

    fn moves_of_cell(
        &self,
        config: &HabitatConfiguration,
        cell: usize,
    ) -> impl Iterator<Item = Move> {
        let from = config.levels[cell];
        let top = (self.values.len() - 1) as u16;
        let down = (from > 0).then(|| Move {
            cell,
            from,
            to: from - 1,
        });
        let up = (from < top).then(|| Move {
            cell,
            from,
            to: from + 1,
        });
        down.into_iter().chain(up)
    }

    /// Every valid single-cell move out of `config`.
    pub fn neighbors(&self, config: &HabitatConfiguration) -> Vec<Move> {
        (0..self.n_cells())
            .flat_map(|c| self.moves_of_cell(config, c))
            .collect()
    }

    pub fn are_neighbors(&self, a: &HabitatConfiguration, b: &HabitatConfiguration) -> bool {
        let mut diff = a.levels.iter().zip(&b.levels).filter(|(x, y)| x != y);
        match (diff.next(), diff.next()) {
            (Some((&x, &y)), None) => x.abs_diff(y) == 1,
            _ => false,
        }
    }

    /// Draws each cell independently and uniformly from the level set, which
    /// is the uniform law on the product space.
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> HabitatConfiguration {
        let n = self.values.len() as u16;
        HabitatConfiguration {
            levels: (0..self.n_cells()).map(|_| rng.gen_range(0..n)).collect(),
        }
    }

    /// Uniform draw over the valid `(cell, direction)` pairs, by rejection
    /// from the uniform law on all `2 * n_cells` pairs.
    pub fn random_neighbor<R: Rng + ?Sized>(
        &self,
        config: &HabitatConfiguration,
        rng: &mut R,
    ) -> Result<Move> {
        if self.values.len() < 2 || self.n_cells() == 0 {
            return Err(Error::InvalidSpace(
                "space has no neighbors (fewer than two levels)".into(),
            ));
        }
        let top = (self.values.len() - 1) as u16;
        loop {
            let cell = rng.gen_range(0..self.n_cells());
            let up = rng.gen::<bool>();
            let from = config.levels[cell];
            if up && from < top {
                return Ok(Move {
                    cell,
                    from,
                    to: from + 1,
                });
            }
            if !up && from > 0 {
                return Ok(Move {
                    cell,
                    from,
                    to: from - 1,
                });
            }
        }
    }
}

/// Node-to-cell assignment of a space on a particular grid.
#[derive(Debug, Clone)]
pub struct CellMap {
    node_cell: Vec<Option<u32>>,
    m: f64,
}

impl CellMap {
    /// Fails if some cell contains no grid node, since the embedding would
    /// then not distinguish configurations differing on that cell.
    pub fn new(space: &ConfigurationSpace, grid: &Grid) -> Result<Self> {
        let part = space.partition();
        if part.dim() != grid.dim() {
            return Err(Error::PartitionMismatch(
                "partition and grid dimensions differ".into(),
            ));
        }
        let mut hits = vec![0usize; part.n_cells()];
        let node_cell: Vec<Option<u32>> = (0..grid.len())
            .map(|k| {
                let p = grid.coord(k);
                part.locate(&p[..grid.dim()]).map(|c| {
                    hits[c] += 1;
                    c as u32
                })
            })
            .collect();
        if let Some(empty) = hits.iter().position(|&h| h == 0) {
            return Err(Error::PartitionMismatch(format!(
                "cell {empty} contains no grid node; refine the grid"
            )));
        }
        Ok(Self {
            node_cell,
            m: space.bounds().m,
        })
    }

    pub fn cell_of(&self, node: usize) -> Option<usize> {
        self.node_cell[node].map(|c| c as usize)
    }

    /// Writes the growth-rate field of `config` into `out`.
    pub fn fill(&self, space: &ConfigurationSpace, config: &HabitatConfiguration, out: &mut [f64]) {
        for (v, c) in out.iter_mut().zip(&self.node_cell) {
            *v = match c {
                Some(c) => space.value(config, *c as usize),
                None => self.m,
            };
        }
    }
}
