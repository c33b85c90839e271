//! Scalar fields on a grid, the discrete operators acting on them and the
//! embedding of habitat configurations as growth-rate fields.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::geometry::{Grid, GridDescriptor, NodeMask};
use crate::space::{CellMap, ConfigurationSpace, HabitatConfiguration};

/// One real value per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridDescriptor,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        Self::from_descriptor(grid.descriptor(), values)
    }

    pub(crate) fn from_descriptor(grid: GridDescriptor, values: Vec<f64>) -> Result<Self> {
        let n = grid.nodes[0] * grid.nodes[1];
        if values.len() != n {
            return Err(Error::GridMismatch(format!(
                "{} values for {n} nodes",
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "non-finite value at node {k}"
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self {
            grid: grid.descriptor(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            grid: grid.descriptor(),
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f(x, y)` at every node (`y = 0` in one dimension).
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = (0..grid.len())
            .map(|k| {
                let [x, y] = grid.coord(k);
                f(x, y)
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &GridDescriptor {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.grid == grid.descriptor() {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "field on {:?}, expected {:?}",
                self.grid,
                grid.descriptor()
            )))
        }
    }

    /// CSV with one row per node: `index,x[,y],value`.
    pub fn write_csv<W: Write>(&self, grid: &Grid, mut w: W) -> Result<()> {
        self.check_grid(grid)?;
        if grid.dim() == 1 {
            writeln!(w, "index,x,value")?;
        } else {
            writeln!(w, "index,x,y,value")?;
        }
        for (k, v) in self.values.iter().enumerate() {
            let [x, y] = grid.coord(k);
            if grid.dim() == 1 {
                writeln!(w, "{k},{x},{v}")?;
            } else {
                writeln!(w, "{k},{x},{y},{v}")?;
            }
        }
        Ok(())
    }

    /// Compact binary form: dimension, node counts, lower bounds, spacings,
    /// upper bounds, then the row-major payload, all little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let g = &self.grid;
        let h = g.spacing();
        w.write_all(&[g.dim as u8])?;
        for a in 0..2 {
            w.write_all(&(g.nodes[a] as u32).to_le_bytes())?;
        }
        for x in [g.lo[0], g.lo[1], h[0], h[1], g.hi[0], g.hi[1]] {
            w.write_all(&x.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b1)?;
        let dim = b1[0] as usize;
        if dim != 1 && dim != 2 {
            return Err(Error::Format(format!("field dimension {dim}")));
        }
        let mut nodes = [0usize; 2];
        for n in &mut nodes {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *n = u32::from_le_bytes(b) as usize;
        }
        let mut f = [0f64; 6];
        for x in &mut f {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *x = f64::from_le_bytes(b);
        }
        let grid = GridDescriptor {
            dim,
            nodes,
            lo: [f[0], f[1]],
            hi: [f[4], f[5]],
        };
        let n = nodes[0] * nodes[1];
        let mut payload = vec![0u8; 8 * n];
        r.read_exact(&mut payload)?;
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Self::from_descriptor(grid, values)
    }
}

/// Trapezoidal quadrature of `f * g` over the masked nodes.
///
/// Node weights are the cell measure, halved on each axis where the node lies
/// on the boundary of the domain, so constants integrate exactly over the full
/// domain.
pub fn l2_inner(grid: &Grid, f: &ScalarField, g: &ScalarField, mask: &NodeMask) -> Result<f64> {
    f.check_grid(grid)?;
    g.check_grid(grid)?;
    if mask.n_nodes() != grid.len() {
        return Err(Error::GridMismatch("mask built on another grid".into()));
    }
    Ok(mask
        .indices()
        .iter()
        .map(|&k| grid.weight(k) * f.values[k] * g.values[k])
        .sum())
}

/// Second-order central Laplacian on interior nodes, written into `out`;
/// boundary entries of `out` are set to zero.
pub(crate) fn laplacian_into(grid: &Grid, f: &[f64], out: &mut [f64]) {
    let [nx, ny] = grid.nodes();
    let [hx, hy] = grid.spacing();
    let cx = 1.0 / (hx * hx);
    out.iter_mut().for_each(|v| *v = 0.0);
    if grid.dim() == 1 {
        for i in 1..nx - 1 {
            out[i] = (f[i - 1] - 2.0 * f[i] + f[i + 1]) * cx;
        }
        return;
    }
    let cy = 1.0 / (hy * hy);
    for j in 1..ny - 1 {
        let row = j * nx;
        for i in 1..nx - 1 {
            let k = row + i;
            out[k] =
                (f[k - 1] - 2.0 * f[k] + f[k + 1]) * cx + (f[k - nx] - 2.0 * f[k] + f[k + nx]) * cy;
        }
    }
}

/// Discrete Laplacian of `f` (three-point in 1D, five-point in 2D).
pub fn discrete_laplacian(grid: &Grid, f: &ScalarField) -> Result<ScalarField> {
    f.check_grid(grid)?;
    let mut out = vec![0.0; grid.len()];
    laplacian_into(grid, &f.values, &mut out);
    ScalarField::new(grid, out)
}

/// Growth-rate field of a configuration: the cell value on nodes inside the
/// unknown box, `m` elsewhere.
pub fn habitat_to_field(
    space: &ConfigurationSpace,
    config: &HabitatConfiguration,
    grid: &Grid,
) -> Result<ScalarField> {
    space.check(config)?;
    let map = CellMap::new(space, grid)?;
    let mut values = vec![0.0; grid.len()];
    map.fill(space, config, &mut values);
    ScalarField::new(grid, values)
}
