//! Rectangular domains, their distinguished subregions and the uniform grids
//! that discretize them.
//!
//! Node indices are row-major with `x` varying fastest: node `(i, j)` has
//! index `j * nx + i`. One-dimensional grids use `ny = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]` on one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        !(self.hi > self.lo)
    }

    fn contains_interval(&self, other: &Interval) -> bool {
        other.lo >= self.lo && other.hi <= self.hi
    }
}

/// A closed region used for the observation set and for validation balls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionSpec {
    /// One-dimensional closed interval.
    Interval { lo: f64, hi: f64 },
    /// Axis-aligned closed box, one bound pair per axis.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Closed Euclidean ball.
    Ball { center: Vec<f64>, radius: f64 },
}

impl RegionSpec {
    pub fn dimension(&self) -> usize {
        match self {
            RegionSpec::Interval { .. } => 1,
            RegionSpec::Box { lo, .. } => lo.len(),
            RegionSpec::Ball { center, .. } => center.len(),
        }
    }

    /// Membership with an absolute tolerance `tol` on the boundary.
    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        match self {
            RegionSpec::Interval { lo, hi } => p[0] >= lo - tol && p[0] <= hi + tol,
            RegionSpec::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .zip(p)
                .all(|((&a, &b), &x)| x >= a - tol && x <= b + tol),
            RegionSpec::Ball { center, radius } => {
                let d2: f64 = center.iter().zip(p).map(|(c, x)| (x - c) * (x - c)).sum();
                d2.sqrt() <= radius + tol
            }
        }
    }

    /// Axis-aligned bounding box of the region.
    pub fn bounding_box(&self) -> Vec<Interval> {
        match self {
            RegionSpec::Interval { lo, hi } => vec![Interval::new(*lo, *hi)],
            RegionSpec::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(&a, &b)| Interval::new(a, b))
                .collect(),
            RegionSpec::Ball { center, radius } => center
                .iter()
                .map(|&c| Interval::new(c - radius, c + radius))
                .collect(),
        }
    }

    fn validate_shape(&self) -> Result<()> {
        match self {
            RegionSpec::Interval { lo, hi } if hi < lo => Err(Error::InvalidDomain(format!(
                "interval [{lo}, {hi}] is reversed"
            ))),
            RegionSpec::Box { lo, hi } if lo.len() != hi.len() => Err(Error::InvalidDomain(
                "box bounds have different dimensions".into(),
            )),
            RegionSpec::Box { lo, hi } if lo.iter().zip(hi).any(|(a, b)| b < a) => {
                Err(Error::InvalidDomain("box has a reversed axis".into()))
            }
            RegionSpec::Ball { radius, .. } if !(*radius >= 0.0) => Err(Error::InvalidDomain(
                format!("ball radius {radius} is negative"),
            )),
            _ => Ok(()),
        }
    }
}

/// The continuous domain together with the subregions that matter to the
/// inverse problem: the unknown-coefficient box, the observation set and an
/// optional ball where the initial density is bounded away from zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub extent: Vec<Interval>,
    pub omega1: Vec<Interval>,
    pub obs_region: RegionSpec,
    #[serde(default)]
    pub ball_eps: Option<RegionSpec>,
}

impl DomainSpec {
    pub fn dimension(&self) -> usize {
        self.extent.len()
    }

    /// Total measure of the domain.
    pub fn measure(&self) -> f64 {
        self.extent.iter().map(Interval::len).product()
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dimension();
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidDomain(format!(
                "dimension {dim} not supported"
            )));
        }
        if let Some(axis) = self
            .extent
            .iter()
            .position(|iv| iv.is_empty() || !iv.len().is_finite())
        {
            return Err(Error::InvalidDomain(format!(
                "axis {axis} has non-positive extent"
            )));
        }
        if self.omega1.len() != dim {
            return Err(Error::InvalidDomain(
                "omega1 dimension differs from domain".into(),
            ));
        }
        for (axis, (outer, inner)) in self.extent.iter().zip(&self.omega1).enumerate() {
            if inner.is_empty() {
                return Err(Error::InvalidDomain(format!(
                    "omega1 is empty along axis {axis}"
                )));
            }
            if !(inner.lo > outer.lo && inner.hi < outer.hi) {
                return Err(Error::InvalidDomain(format!(
                    "omega1 must lie strictly inside the domain (axis {axis})"
                )));
            }
        }
        self.obs_region.validate_shape()?;
        if self.obs_region.dimension() != dim {
            return Err(Error::InvalidDomain(
                "observation region dimension differs from domain".into(),
            ));
        }
        if !self.region_within(&self.obs_region, &self.omega1) {
            return Err(Error::InvalidDomain(
                "observation region must lie inside omega1".into(),
            ));
        }
        if let Some(ball) = &self.ball_eps {
            ball.validate_shape()?;
            if ball.dimension() != dim || !self.region_within(ball, &self.omega1) {
                return Err(Error::InvalidDomain(
                    "validation ball must lie inside omega1".into(),
                ));
            }
        }
        Ok(())
    }

    fn region_within(&self, region: &RegionSpec, bounds: &[Interval]) -> bool {
        region
            .bounding_box()
            .iter()
            .zip(bounds)
            .all(|(r, b)| b.contains_interval(r))
    }
}

/// Indices of the grid nodes selected by a region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeMask {
    selected: Vec<bool>,
    indices: Vec<usize>,
}

impl NodeMask {
    pub fn from_indices(n_nodes: usize, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.last().is_some_and(|&i| i >= n_nodes) {
            return Err(Error::InvalidGrid("mask index out of range".into()));
        }
        let mut selected = vec![false; n_nodes];
        for &i in &indices {
            selected[i] = true;
        }
        Ok(Self { selected, indices })
    }

    /// Mask selecting every node of a grid.
    pub fn full(grid: &Grid) -> Self {
        Self {
            selected: vec![true; grid.len()],
            indices: (0..grid.len()).collect(),
        }
    }

    pub fn contains(&self, index: usize) -> bool {
        self.selected.get(index).copied().unwrap_or(false)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn n_nodes(&self) -> usize {
        self.selected.len()
    }

    pub fn is_subset_of(&self, other: &NodeMask) -> bool {
        self.indices.iter().all(|&i| other.contains(i))
    }
}

/// Serializable identity of a grid, compared whenever data produced on one
/// grid is used on another.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub dim: usize,
    pub nodes: [usize; 2],
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl GridDescriptor {
    pub fn spacing(&self) -> [f64; 2] {
        let mut h = [0.0; 2];
        for a in 0..self.dim {
            h[a] = (self.hi[a] - self.lo[a]) / (self.nodes[a] - 1) as f64;
        }
        h
    }
}

/// Uniform tensor-product grid over the domain, boundary nodes included.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    nodes: [usize; 2],
    lo: [f64; 2],
    hi: [f64; 2],
    spacing: [f64; 2],
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Node counts `[nx, ny]` (`ny = 1` in one dimension).
    pub fn nodes(&self) -> [usize; 2] {
        self.nodes
    }

    pub fn nodes_per_axis(&self) -> Vec<usize> {
        self.nodes[..self.dim].to_vec()
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    pub fn lo(&self) -> [f64; 2] {
        self.lo
    }

    pub fn hi(&self) -> [f64; 2] {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.nodes[0] * self.nodes[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `h` in one dimension, `hx * hy` in two.
    pub fn cell_measure(&self) -> f64 {
        self.spacing[..self.dim].iter().product()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nodes[0] + i
    }

    pub fn ij(&self, index: usize) -> (usize, usize) {
        (index % self.nodes[0], index / self.nodes[0])
    }

    fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        let n = self.nodes[axis] - 1;
        (self.lo[axis] * (n - i) as f64 + self.hi[axis] * i as f64) / n as f64
    }

    /// Coordinates of a node; the second entry is 0 in one dimension.
    pub fn coord(&self, index: usize) -> [f64; 2] {
        let (i, j) = self.ij(index);
        let y = if self.dim == 2 {
            self.axis_coord(1, j)
        } else {
            0.0
        };
        [self.axis_coord(0, i), y]
    }

    pub fn is_boundary(&self, index: usize) -> bool {
        let (i, j) = self.ij(index);
        let on_x = i == 0 || i + 1 == self.nodes[0];
        let on_y = self.dim == 2 && (j == 0 || j + 1 == self.nodes[1]);
        on_x || on_y
    }

    pub fn interior_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| !self.is_boundary(k)).collect()
    }

    pub fn boundary_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.is_boundary(k)).collect()
    }

    /// Trapezoidal quadrature weight: the cell measure, halved once per axis
    /// on which the node sits on the boundary of the domain.
    pub fn weight(&self, index: usize) -> f64 {
        let (i, j) = self.ij(index);
        let mut w = self.spacing[0];
        if i == 0 || i + 1 == self.nodes[0] {
            w *= 0.5;
        }
        if self.dim == 2 {
            w *= self.spacing[1];
            if j == 0 || j + 1 == self.nodes[1] {
                w *= 0.5;
            }
        }
        w
    }

    pub fn descriptor(&self) -> GridDescriptor {
        GridDescriptor {
            dim: self.dim,
            nodes: self.nodes,
            lo: self.lo,
            hi: self.hi,
        }
    }

    pub fn from_descriptor(d: &GridDescriptor) -> Result<Self> {
        let extent: Vec<Interval> = (0..d.dim)
            .map(|a| Interval::new(d.lo[a], d.hi[a]))
            .collect();
        Self::new(&extent, &d.nodes[..d.dim])
    }

    /// Grid over the given axis extents.
    pub fn new(extent: &[Interval], nodes_per_axis: &[usize]) -> Result<Self> {
        let dim = extent.len();
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension {dim} not supported")));
        }
        if nodes_per_axis.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "expected {dim} node counts, got {}",
                nodes_per_axis.len()
            )));
        }
        let mut nodes = [1usize; 2];
        let mut lo = [0.0; 2];
        let mut hi = [0.0; 2];
        let mut spacing = [0.0; 2];
        for a in 0..dim {
            if nodes_per_axis[a] < 3 {
                return Err(Error::InvalidGrid(format!(
                    "axis {a} needs at least 3 nodes, got {}",
                    nodes_per_axis[a]
                )));
            }
            if !(extent[a].len() > 0.0) || !extent[a].len().is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "axis {a} has non-positive extent"
                )));
            }
            nodes[a] = nodes_per_axis[a];
            lo[a] = extent[a].lo;
            hi[a] = extent[a].hi;
            spacing[a] = extent[a].len() / (nodes[a] - 1) as f64;
        }
        Ok(Self {
            dim,
            nodes,
            lo,
            hi,
            spacing,
        })
    }

    /// Boundary tolerance used for closed-region membership.
    pub fn membership_tol(&self) -> f64 {
        let h = self.spacing[..self.dim]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        1e-9 * h
    }

    pub fn same_as(&self, other: &Grid) -> Result<()> {
        if self.descriptor() == other.descriptor() {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.descriptor(),
                other.descriptor()
            )))
        }
    }
}

/// Builds the grid discretizing `domain`.
pub fn build_grid(domain: &DomainSpec, nodes_per_axis: &[usize]) -> Result<Grid> {
    domain.validate()?;
    Grid::new(&domain.extent, nodes_per_axis)
}

/// Selects every node lying in the closed region.
pub fn region_mask(grid: &Grid, region: &RegionSpec) -> Result<NodeMask> {
    region
        .validate_shape()
        .map_err(|e| Error::InvalidDomain(e.to_string()))?;
    if region.dimension() != grid.dim() {
        return Err(Error::GridMismatch(
            "region and grid dimensions differ".into(),
        ));
    }
    let tol = grid.membership_tol();
    let inside = region
        .bounding_box()
        .iter()
        .enumerate()
        .all(|(a, b)| b.lo >= grid.lo()[a] - tol && b.hi <= grid.hi()[a] + tol);
    if !inside {
        return Err(Error::InvalidDomain(format!(
            "region {region:?} leaves the domain"
        )));
    }
    let indices: Vec<usize> = (0..grid.len())
        .filter(|&k| region.contains(&grid.coord(k)[..grid.dim()], tol))
        .collect();
    if indices.is_empty() {
        return Err(Error::EmptyMask(format!("{region:?}")));
    }
    NodeMask::from_indices(grid.len(), indices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

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

    #[test]
    fn grid_1d_spacing_and_interior() {
        let g = build_grid(&domain_1d(), &[201]).unwrap();
        assert_eq!(g.spacing()[0], 0.5);
        assert_eq!(g.interior_indices().len(), 199);
        assert_eq!(g.boundary_indices(), vec![0, 200]);
        assert_eq!(g.coord(200)[0], 100.0);
    }

    #[test]
    fn grid_2d_spacing() {
        let g = build_grid(&domain_2d(), &[101, 101]).unwrap();
        for h in g.spacing() {
            assert!((h - 0.2).abs() < 1e-15);
        }
        let [nx, ny] = g.nodes();
        assert!(((nx - 1) as f64 * g.spacing()[0] - 20.0).abs() <= 1e-12 * 20.0);
        assert_eq!(g.boundary_indices().len(), 4 * 100);
        assert_eq!(g.len(), nx * ny);
    }

    #[test]
    fn too_few_nodes_rejected() {
        assert!(matches!(
            build_grid(&domain_1d(), &[2]),
            Err(Error::InvalidGrid(_))
        ));
    }

    #[test]
    fn non_positive_extent_rejected() {
        assert!(Grid::new(&[Interval::new(1.0, 1.0)], &[5]).is_err());
    }

    #[test]
    fn omega1_must_have_margin() {
        let mut d = domain_1d();
        d.omega1 = vec![Interval::new(0.0, 90.0)];
        assert!(d.validate().is_err());
        let mut d = domain_1d();
        d.obs_region = RegionSpec::Interval { lo: 5.0, hi: 8.0 };
        assert!(d.validate().is_err());
    }

    #[test]
    fn interval_mask_counts_nodes() {
        let g = build_grid(&domain_1d(), &[201]).unwrap();
        let m = region_mask(&g, &RegionSpec::Interval { lo: 55.0, hi: 58.0 }).unwrap();
        assert_eq!(m.len(), 7);
        let xs: Vec<f64> = m.indices().iter().map(|&k| g.coord(k)[0]).collect();
        assert_eq!(xs, vec![55.0, 55.5, 56.0, 56.5, 57.0, 57.5, 58.0]);
    }

    #[test]
    fn ball_mask_matches_definition() {
        let g = build_grid(&domain_2d(), &[101, 101]).unwrap();
        let ball = RegionSpec::Ball {
            center: vec![7.0, 7.0],
            radius: 3.0,
        };
        let m = region_mask(&g, &ball).unwrap();
        for k in 0..g.len() {
            let [x, y] = g.coord(k);
            let d2 = (x - 7.0).powi(2) + (y - 7.0).powi(2);
            if (d2 - 9.0).abs() > 1e-9 {
                assert_eq!(m.contains(k), d2 <= 9.0, "node ({x}, {y})");
            }
        }
        // On-boundary nodes such as (10, 7) are included.
        assert!(m.contains(g.index(50, 35)));
    }

    #[test]
    fn degenerate_ball_off_node_is_empty() {
        let g = build_grid(&domain_2d(), &[101, 101]).unwrap();
        let ball = RegionSpec::Ball {
            center: vec![7.1, 7.05],
            radius: 0.0,
        };
        assert!(matches!(region_mask(&g, &ball), Err(Error::EmptyMask(_))));
    }

    #[test]
    fn trapezoid_weights_sum_to_measure() {
        let g = build_grid(&domain_2d(), &[41, 41]).unwrap();
        let total: f64 = (0..g.len()).map(|k| g.weight(k)).sum();
        assert!((total - 400.0).abs() < 1e-10);
    }

    #[test]
    fn refinement_keeps_coarse_nodes() {
        let coarse = build_grid(&domain_1d(), &[51]).unwrap();
        let fine = build_grid(&domain_1d(), &[101]).unwrap();
        let region = RegionSpec::Interval { lo: 55.0, hi: 58.0 };
        let mc = region_mask(&coarse, &region).unwrap();
        let mf = region_mask(&fine, &region).unwrap();
        for k in 0..coarse.len() {
            let kf = 2 * k;
            assert_eq!(coarse.coord(k)[0], fine.coord(kf)[0]);
            assert_eq!(mc.contains(k), mf.contains(kf));
        }
    }

    proptest! {
        #[test]
        fn mask_is_monotone(a in 0.0f64..8.0, b in 0.0f64..8.0, r in 0.4f64..2.0, extra in 0.0f64..2.0) {
            let g = build_grid(&domain_2d(), &[41, 41]).unwrap();
            let small = RegionSpec::Ball { center: vec![5.0 + a, 5.0 + b], radius: r };
            let big = RegionSpec::Ball { center: vec![5.0 + a, 5.0 + b], radius: r + extra };
            let ms = region_mask(&g, &small).unwrap();
            let mb = region_mask(&g, &big).unwrap();
            prop_assert!(ms.is_subset_of(&mb));
        }
    }
}
