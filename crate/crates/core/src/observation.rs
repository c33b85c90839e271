//! The two measurements driving the inversion: a space-time record of `∂u/∂t`
//! on the observation set over `[t0, t1]`, and one full-domain snapshot at
//! `T' = (t0 + t1) / 2` together with its Laplacian.
//!
//! A [`MeasurementSet`] carries everything the inversion is allowed to know:
//! the grid, the window, the diffusion coefficient and the initial profile.
//! It holds neither the true growth rate nor the crowding coefficient.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::laplacian_into;
use crate::geometry::{Grid, GridDescriptor, NodeMask};
use crate::solver::{step_index, InitialDensity, InitialProfile, Trajectory};

/// Time window of the measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationWindow {
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    /// Sample spacing inside the window, in time steps.
    pub stride: usize,
}

impl ObservationWindow {
    pub fn new(t0: f64, t1: f64, dt: f64, stride: usize) -> Result<Self> {
        let w = Self { t0, t1, dt, stride };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0 > 0.0 && self.t1 > self.t0) {
            return Err(Error::InvalidWindow(format!(
                "need 0 < t0 < t1, got [{}, {}]",
                self.t0, self.t1
            )));
        }
        if self.stride == 0 || !(self.dt > 0.0) {
            return Err(Error::InvalidWindow(
                "dt and stride must be positive".into(),
            ));
        }
        let s0 = step_index(self.t0, self.dt).map_err(|e| Error::InvalidWindow(e.to_string()))?;
        let s1 = step_index(self.t1, self.dt).map_err(|e| Error::InvalidWindow(e.to_string()))?;
        if (s1 - s0) % self.stride != 0 {
            return Err(Error::InvalidWindow(format!(
                "window length is not a multiple of the sample spacing ({} steps)",
                self.stride
            )));
        }
        if (s1 - s0) / self.stride < 2 {
            return Err(Error::InvalidWindow(
                "window needs at least three samples".into(),
            ));
        }
        if (s0 + s1) % 2 != 0 {
            return Err(Error::InvalidWindow(
                "snapshot time (t0 + t1)/2 is not a multiple of dt".into(),
            ));
        }
        Ok(())
    }

    /// `T' = (t0 + t1) / 2`.
    pub fn t_prime(&self) -> f64 {
        self.snapshot_step() as f64 * self.dt
    }

    /// Spacing of the window samples.
    pub fn sample_spacing(&self) -> f64 {
        self.stride as f64 * self.dt
    }

    fn first_step(&self) -> usize {
        (self.t0 / self.dt).round() as usize
    }

    fn last_step(&self) -> usize {
        (self.t1 / self.dt).round() as usize
    }

    pub fn n_samples(&self) -> usize {
        (self.last_step() - self.first_step()) / self.stride + 1
    }

    /// Time-step numbers of the window samples.
    pub fn sample_steps(&self) -> Vec<usize> {
        (0..self.n_samples())
            .map(|k| self.first_step() + k * self.stride)
            .collect()
    }

    pub fn snapshot_step(&self) -> usize {
        (self.first_step() + self.last_step()) / 2
    }

    pub fn sample_times(&self) -> Vec<f64> {
        self.sample_steps()
            .iter()
            .map(|&s| s as f64 * self.dt)
            .collect()
    }

    /// Sorted union of the sample steps and the snapshot step.
    pub fn record_steps(&self) -> Vec<usize> {
        let mut steps = self.sample_steps();
        steps.push(self.snapshot_step());
        steps.sort_unstable();
        steps.dedup();
        steps
    }

    pub fn record_times(&self) -> Vec<f64> {
        self.record_steps()
            .iter()
            .map(|&s| s as f64 * self.dt)
            .collect()
    }

    /// Trapezoid weights across the window samples.
    pub fn time_weights(&self) -> Vec<f64> {
        let n = self.n_samples();
        let ds = self.sample_spacing();
        (0..n)
            .map(|k| if k == 0 || k + 1 == n { 0.5 * ds } else { ds })
            .collect()
    }
}

/// Finite-difference time derivative of equally spaced samples: centered in
/// the interior, one-sided second order at both ends. `samples` is
/// sample-major with `width` values per sample.
pub fn time_derivative(samples: &[f64], width: usize, spacing: f64) -> Vec<f64> {
    let n = samples.len() / width;
    let at = |k: usize, i: usize| samples[k * width + i];
    let mut out = vec![0.0; samples.len()];
    let inv2 = 1.0 / (2.0 * spacing);
    for k in 0..n {
        for i in 0..width {
            out[k * width + i] = if k == 0 {
                (-3.0 * at(0, i) + 4.0 * at(1, i) - at(2, i)) * inv2
            } else if k + 1 == n {
                (3.0 * at(n - 1, i) - 4.0 * at(n - 2, i) + at(n - 3, i)) * inv2
            } else {
                (at(k + 1, i) - at(k - 1, i)) * inv2
            };
        }
    }
    out
}

/// What the observer knows about the experiment besides the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    /// Diffusion coefficient.
    pub d: f64,
    pub initial: InitialDensity,
}

/// The measurement data consumed by the inversion.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub grid: GridDescriptor,
    pub window: ObservationWindow,
    pub acquisition: Acquisition,
    /// Observation-set node indices.
    pub omega: Vec<usize>,
    /// `∂u/∂t` on the observation set, sample-major.
    pub dtu_record: Vec<f64>,
    /// `u(T', ·)` on every node.
    pub snapshot: Vec<f64>,
    /// `Δu(T', ·)` on every node (zero on the boundary).
    pub snapshot_laplacian: Vec<f64>,
}

/// Additive Gaussian perturbation of the data (off unless requested).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

/// Samples the window and the snapshot out of a forward trajectory.
pub fn extract_measurements(
    grid: &Grid,
    traj: &Trajectory,
    window: &ObservationWindow,
    omega: &NodeMask,
    acquisition: Acquisition,
) -> Result<MeasurementSet> {
    window.validate()?;
    if omega.n_nodes() != grid.len() || omega.is_empty() {
        return Err(Error::GridMismatch(
            "observation mask does not fit the grid".into(),
        ));
    }
    let lookup = |step: usize| -> Result<&[f64]> {
        let t = step as f64 * window.dt;
        let f = traj.at(t).ok_or_else(|| {
            Error::InvalidWindow(format!("time {t} missing from the trajectory record"))
        })?;
        f.check_grid(grid)?;
        Ok(f.values())
    };
    let width = omega.len();
    let mut samples = Vec::with_capacity(window.n_samples() * width);
    for step in window.sample_steps() {
        let u = lookup(step)?;
        samples.extend(omega.indices().iter().map(|&k| u[k]));
    }
    let dtu_record = time_derivative(&samples, width, window.sample_spacing());
    let snapshot = lookup(window.snapshot_step())?.to_vec();
    let mut snapshot_laplacian = vec![0.0; grid.len()];
    laplacian_into(grid, &snapshot, &mut snapshot_laplacian);
    Ok(MeasurementSet {
        grid: grid.descriptor(),
        window: *window,
        acquisition,
        omega: omega.indices().to_vec(),
        dtu_record,
        snapshot,
        snapshot_laplacian,
    })
}

const MAGIC: &[u8; 4] = b"HINV";
/// Current measurement file version.
pub const FORMAT_VERSION: u16 = 1;

impl MeasurementSet {
    pub fn n_samples(&self) -> usize {
        self.window.n_samples()
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.grid == grid.descriptor() {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "measurements were taken on {:?} (spacing {:?}) but the grid is {:?} (spacing {:?})",
                self.grid,
                self.grid.spacing(),
                grid.descriptor(),
                grid.spacing()
            )))
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::from_descriptor(&self.grid)
    }

    pub fn omega_mask(&self) -> Result<NodeMask> {
        NodeMask::from_indices(self.grid.nodes[0] * self.grid.nodes[1], self.omega.clone())
    }

    /// Adds seeded Gaussian noise to the window record and the snapshot and
    /// recomputes the snapshot Laplacian.
    pub fn add_noise(&mut self, noise: NoiseSpec) -> Result<()> {
        if noise.sigma == 0.0 {
            return Ok(());
        }
        let normal = Normal::new(0.0, noise.sigma)
            .map_err(|e| Error::InvalidParams(format!("noise level: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        let grid = self.grid()?;
        for v in &mut self.dtu_record {
            *v += normal.sample(&mut rng);
        }
        for (k, v) in self.snapshot.iter_mut().enumerate() {
            if !grid.is_boundary(k) {
                *v += normal.sample(&mut rng);
            }
        }
        laplacian_into(&grid, &self.snapshot, &mut self.snapshot_laplacian);
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_from(&bytes[..])
    }

    /// Layout: magic `HINV`, version (u16), then five sections `grid`,
    /// `window`, `dtu`, `snapshot`, `laplacian`. Each section is a 4-byte tag,
    /// a u64 payload length, the payload and the CRC32 of the payload. All
    /// numbers are little-endian; field payloads are 64-bit floats.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;

        let mut grid = Vec::new();
        grid.push(self.grid.dim as u8);
        put_u32(&mut grid, self.grid.nodes[0] as u32);
        put_u32(&mut grid, self.grid.nodes[1] as u32);
        for x in [
            self.grid.lo[0],
            self.grid.lo[1],
            self.grid.hi[0],
            self.grid.hi[1],
        ] {
            put_f64(&mut grid, x);
        }
        write_section(&mut w, b"GRID", &grid)?;

        let mut win = Vec::new();
        for x in [self.window.t0, self.window.t1, self.window.dt] {
            put_f64(&mut win, x);
        }
        put_u32(&mut win, self.window.stride as u32);
        put_f64(&mut win, self.acquisition.d);
        win.push(match self.acquisition.initial.profile {
            InitialProfile::Humps1d => 0,
            InitialProfile::Humps2d => 1,
        });
        put_f64(&mut win, self.acquisition.initial.amplitude);
        put_u32(&mut win, self.omega.len() as u32);
        for &k in &self.omega {
            put_u32(&mut win, k as u32);
        }
        write_section(&mut w, b"WNDW", &win)?;

        let mut dtu = Vec::with_capacity(8 + 8 * self.dtu_record.len());
        put_u32(&mut dtu, self.n_samples() as u32);
        put_u32(&mut dtu, self.omega.len() as u32);
        for &v in &self.dtu_record {
            put_f64(&mut dtu, v);
        }
        write_section(&mut w, b"DTUR", &dtu)?;

        for (tag, data) in [
            (b"SNAP", &self.snapshot),
            (b"LAPL", &self.snapshot_laplacian),
        ] {
            let mut block = Vec::with_capacity(4 + 8 * data.len());
            put_u32(&mut block, data.len() as u32);
            for &v in data {
                put_f64(&mut block, v);
            }
            write_section(&mut w, tag, &block)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "header")?;
        if &magic != MAGIC {
            return Err(Error::Format("not a measurement file (bad magic)".into()));
        }
        let mut ver = [0u8; 2];
        read_exact(&mut r, &mut ver, "header")?;
        let version = u16::from_le_bytes(ver);
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }

        let grid_bytes = read_section(&mut r, b"GRID", "grid")?;
        let mut c = Cursor::new(&grid_bytes, "grid");
        let dim = c.u8()? as usize;
        let nodes = [c.u32()? as usize, c.u32()? as usize];
        let lo = [c.f64()?, c.f64()?];
        let hi = [c.f64()?, c.f64()?];
        let grid = GridDescriptor { dim, nodes, lo, hi };
        let grid_obj = Grid::from_descriptor(&grid)
            .map_err(|e| Error::Format(format!("grid section: {e}")))?;
        let n_nodes = grid_obj.len();

        let win_bytes = read_section(&mut r, b"WNDW", "window")?;
        let mut c = Cursor::new(&win_bytes, "window");
        let (t0, t1, dt) = (c.f64()?, c.f64()?, c.f64()?);
        let stride = c.u32()? as usize;
        let d = c.f64()?;
        let profile = match c.u8()? {
            0 => InitialProfile::Humps1d,
            1 => InitialProfile::Humps2d,
            other => {
                return Err(Error::Format(format!(
                    "window section: unknown initial profile {other}"
                )))
            }
        };
        let amplitude = c.f64()?;
        let n_omega = c.u32()? as usize;
        let omega = (0..n_omega)
            .map(|_| c.u32().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        if omega.iter().any(|&k| k >= n_nodes) {
            return Err(Error::Format(
                "window section: observation node out of range".into(),
            ));
        }
        let window = ObservationWindow::new(t0, t1, dt, stride)?;

        let dtu_bytes = read_section(&mut r, b"DTUR", "dtu")?;
        let mut c = Cursor::new(&dtu_bytes, "dtu");
        let (ns, nw) = (c.u32()? as usize, c.u32()? as usize);
        if ns != window.n_samples() || nw != n_omega {
            return Err(Error::Format(
                "dtu section: shape disagrees with the window".into(),
            ));
        }
        let dtu_record = c.f64_vec(ns * nw)?;

        let mut blocks = Vec::new();
        for (tag, name) in [(b"SNAP", "snapshot"), (b"LAPL", "laplacian")] {
            let bytes = read_section(&mut r, tag, name)?;
            let mut c = Cursor::new(&bytes, name);
            let n = c.u32()? as usize;
            if n != n_nodes {
                return Err(Error::Format(format!(
                    "{name} section: {n} values for {n_nodes} nodes"
                )));
            }
            blocks.push(c.f64_vec(n)?);
        }
        let snapshot_laplacian = blocks.pop().expect("two blocks");
        let snapshot = blocks.pop().expect("two blocks");
        Ok(Self {
            grid,
            window,
            acquisition: Acquisition {
                d,
                initial: InitialDensity { profile, amplitude },
            },
            omega,
            dtu_record,
            snapshot,
            snapshot_laplacian,
        })
    }
}

pub fn save_measurements(ms: &MeasurementSet, path: impl AsRef<Path>) -> Result<()> {
    ms.save(path)
}

pub fn load_measurements(path: impl AsRef<Path>) -> Result<MeasurementSet> {
    MeasurementSet::load(path)
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn write_section<W: Write>(w: &mut W, tag: &[u8; 4], payload: &[u8]) -> Result<()> {
    w.write_all(tag)?;
    w.write_all(&(payload.len() as u64).to_le_bytes())?;
    w.write_all(payload)?;
    w.write_all(&crc32fast::hash(payload).to_le_bytes())?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], section: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => {
            Error::Format(format!("truncated file in section `{section}`"))
        }
        _ => Error::Io(e),
    })
}

fn read_section<R: Read>(r: &mut R, tag: &[u8; 4], name: &'static str) -> Result<Vec<u8>> {
    let mut t = [0u8; 4];
    read_exact(r, &mut t, name)?;
    if &t != tag {
        return Err(Error::Format(format!("expected section `{name}`")));
    }
    let mut len = [0u8; 8];
    read_exact(r, &mut len, name)?;
    let len = u64::from_le_bytes(len);
    if len > (1 << 34) {
        return Err(Error::Format(format!(
            "section `{name}` has implausible length {len}"
        )));
    }
    let mut payload = vec![0u8; len as usize];
    read_exact(r, &mut payload, name)?;
    let mut crc = [0u8; 4];
    read_exact(r, &mut crc, name)?;
    if u32::from_le_bytes(crc) != crc32fast::hash(&payload) {
        return Err(Error::Checksum(name));
    }
    Ok(payload)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    section: &'static str,
}

impl<'a> Cursor<'a> {
    fn new(data: &'a [u8], section: &'static str) -> Self {
        Self {
            data,
            pos: 0,
            section,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Format(format!(
                "section `{}` is too short",
                self.section
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::ScalarField;
    use crate::geometry::{region_mask, Interval, RegionSpec};
    use crate::solver::{solve_parabolic, SolverParams};
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::new(&[Interval::new(0.0, 100.0)], &[101]).unwrap()
    }

    fn acquisition() -> Acquisition {
        Acquisition {
            d: 1.0,
            initial: InitialDensity::new(InitialProfile::Humps1d, 1.0),
        }
    }

    fn measure(dt: f64, stride: usize, mu_const: f64, gamma: f64) -> (MeasurementSet, Grid) {
        let g = grid();
        let window = ObservationWindow::new(0.1, 0.4, dt, stride).unwrap();
        let mu = ScalarField::constant(&g, mu_const);
        let u0 = ScalarField::from_fn(&g, |x, _| (PI * x / 100.0).sin().max(0.0)).unwrap();
        let mut u0 = u0.into_values();
        let n = u0.len();
        u0[0] = 0.0;
        u0[n - 1] = 0.0;
        let u0 = ScalarField::new(&g, u0).unwrap();
        let params = SolverParams {
            d: 1.0,
            gamma,
            dt,
            t_end: 0.4,
            record_times: window.record_times(),
        };
        let traj = solve_parabolic(&g, &mu, &u0, &params).unwrap();
        let omega = region_mask(&g, &RegionSpec::Interval { lo: 55.0, hi: 58.0 }).unwrap();
        (
            extract_measurements(&g, &traj, &window, &omega, acquisition()).unwrap(),
            g,
        )
    }

    #[test]
    fn window_geometry() {
        let w = ObservationWindow::new(0.1, 0.4, 5e-4, 10).unwrap();
        assert_eq!(w.n_samples(), 61);
        assert!((w.t_prime() - 0.25).abs() < 1e-15);
        assert!(w.sample_steps().contains(&w.snapshot_step()));
        let total: f64 = w.time_weights().iter().sum();
        assert!((total - 0.3).abs() < 1e-12);
        assert!(ObservationWindow::new(0.4, 0.1, 5e-4, 10).is_err());
        assert!(ObservationWindow::new(0.1, 0.4, 5e-4, 7).is_err());
    }

    #[test]
    fn zero_trajectory_gives_zero_record() {
        let g = grid();
        let window = ObservationWindow::new(0.1, 0.4, 1e-2, 2).unwrap();
        let params = SolverParams {
            d: 1.0,
            gamma: 0.1,
            dt: 1e-2,
            t_end: 0.5,
            record_times: window.record_times(),
        };
        let traj = solve_parabolic(
            &g,
            &ScalarField::constant(&g, 2.0),
            &ScalarField::zeros(&g),
            &params,
        )
        .unwrap();
        let omega = region_mask(&g, &RegionSpec::Interval { lo: 55.0, hi: 58.0 }).unwrap();
        let ms = extract_measurements(&g, &traj, &window, &omega, acquisition()).unwrap();
        assert!(ms.dtu_record.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_record_time_is_an_error() {
        let g = grid();
        let window = ObservationWindow::new(0.1, 0.4, 1e-2, 2).unwrap();
        let params = SolverParams {
            d: 1.0,
            gamma: 0.0,
            dt: 1e-2,
            t_end: 0.5,
            record_times: vec![0.1, 0.2],
        };
        let u0 = InitialDensity::new(InitialProfile::Humps1d, 1.0)
            .to_field(&g)
            .unwrap();
        let traj = solve_parabolic(&g, &ScalarField::constant(&g, 1.0), &u0, &params).unwrap();
        let omega = region_mask(&g, &RegionSpec::Interval { lo: 55.0, hi: 58.0 }).unwrap();
        assert!(matches!(
            extract_measurements(&g, &traj, &window, &omega, acquisition()),
            Err(Error::InvalidWindow(_))
        ));
    }

    // Analytic derivative of the separable solution, and the second-order
    // decay of the finite-difference error when the sample spacing halves.
    #[test]
    fn time_derivative_is_second_order() {
        let rate = -1.0 - PI * PI / 1e4;
        let err = |stride: usize| {
            let (ms, g) = measure(1e-3, stride, -1.0, 0.0);
            let w = ms.window;
            let width = ms.omega.len();
            let mut worst: f64 = 0.0;
            for (k, t) in w.sample_times().iter().enumerate() {
                for (i, &node) in ms.omega.iter().enumerate() {
                    let x = g.coord(node)[0];
                    let exact = rate * (rate * t).exp() * (PI * x / 100.0).sin();
                    worst = worst.max((ms.dtu_record[k * width + i] - exact).abs());
                }
            }
            worst
        };
        let (coarse, fine) = (err(20), err(10));
        let ratio = coarse / fine;
        assert!(
            (3.3..4.7).contains(&ratio),
            "ratio {ratio} ({coarse:e} / {fine:e})"
        );
    }

    #[test]
    fn file_roundtrip_is_bit_exact() {
        let (ms, _) = measure(1e-2, 2, 1.0, 0.1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.hinv");
        save_measurements(&ms, &path).unwrap();
        let back = load_measurements(&path).unwrap();
        assert_eq!(back, ms);
        for (a, b) in back.snapshot.iter().zip(&ms.snapshot) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn corrupted_payload_names_section() {
        let (ms, _) = measure(1e-2, 2, 1.0, 0.1);
        let mut bytes = Vec::new();
        ms.write_to(&mut bytes).unwrap();
        let n = bytes.len();
        bytes[n - 20] ^= 0x55;
        match MeasurementSet::read_from(&bytes[..]) {
            Err(Error::Checksum(section)) => assert_eq!(section, "laplacian"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_and_wrong_version_rejected() {
        let (ms, _) = measure(1e-2, 2, 1.0, 0.1);
        let mut bytes = Vec::new();
        ms.write_to(&mut bytes).unwrap();
        let cut = &bytes[..bytes.len() / 2];
        assert!(matches!(
            MeasurementSet::read_from(cut),
            Err(Error::Format(_))
        ));
        let mut v = bytes.clone();
        v[4] = 9;
        assert!(matches!(
            MeasurementSet::read_from(&v[..]),
            Err(Error::Version { found: 9, .. })
        ));
    }

    #[test]
    fn other_grid_is_a_mismatch() {
        let (ms, _) = measure(1e-2, 2, 1.0, 0.1);
        let other = Grid::new(&[Interval::new(0.0, 100.0)], &[201]).unwrap();
        assert!(matches!(ms.check_grid(&other), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn noise_is_seeded() {
        let (ms, _) = measure(1e-2, 2, 1.0, 0.1);
        let mut a = ms.clone();
        let mut b = ms.clone();
        a.add_noise(NoiseSpec {
            sigma: 1e-4,
            seed: 5,
        })
        .unwrap();
        b.add_noise(NoiseSpec {
            sigma: 1e-4,
            seed: 5,
        })
        .unwrap();
        assert_eq!(a, b);
        assert_ne!(a, ms);
    }

    // Changing the trajectory away from the observation set leaves the window
    // record untouched.
    #[test]
    fn record_is_local_to_observation_set() {
        let g = grid();
        let window = ObservationWindow::new(0.1, 0.4, 1e-2, 2).unwrap();
        let params = SolverParams {
            d: 1.0,
            gamma: 0.0,
            dt: 1e-2,
            t_end: 0.4,
            record_times: window.record_times(),
        };
        let u0 = InitialDensity::new(InitialProfile::Humps1d, 1.0)
            .to_field(&g)
            .unwrap();
        let traj = solve_parabolic(&g, &ScalarField::constant(&g, 1.0), &u0, &params).unwrap();
        let omega = region_mask(&g, &RegionSpec::Interval { lo: 55.0, hi: 58.0 }).unwrap();
        let base = extract_measurements(&g, &traj, &window, &omega, acquisition()).unwrap();
        let mut edited = traj.clone();
        let snap_t = window.t_prime();
        for (t, f) in edited.times.iter().zip(edited.fields.iter_mut()) {
            let mut v = f.values().to_vec();
            v[10] += 1.0;
            if (t - snap_t).abs() > 1e-12 {
                v[20] += 3.0;
            }
            *f = ScalarField::new(&g, v).unwrap();
        }
        let changed = extract_measurements(&g, &edited, &window, &omega, acquisition()).unwrap();
        assert_eq!(changed.dtu_record, base.dtu_record);
        assert_ne!(changed.snapshot, base.snapshot);
    }
}
