//! Forward solvers with homogeneous Dirichlet conditions: the logistic
//! reaction-diffusion equation `u_t = D Δu + u (μ - γ u)`, its steady state and
//! the principal eigenvalue of `ψ ↦ -D Δψ - μ ψ`.
//!
//! Time stepping is implicit-explicit Crank–Nicolson: diffusion is
//! trapezoidal, the reaction term is extrapolated with second-order
//! Adams–Bashforth (a Heun predictor-corrector starts the recursion). In two
//! dimensions the implicit operator is applied in the approximately
//! factored form `(I - a Lx)(I - a Ly)`, so each step costs two sweeps of
//! tridiagonal solves whose factors are computed once per `(grid, dt)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{laplacian_into, ScalarField};
use crate::geometry::Grid;
use crate::linalg::{solve_symmetric_tridiag, BandCholesky, ConstTridiag};

/// Parameters of a parabolic solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Diffusion coefficient `D`.
    pub d: f64,
    /// Crowding coefficient `γ`.
    pub gamma: f64,
    pub dt: f64,
    pub t_end: f64,
    pub record_times: Vec<f64>,
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d > 0.0) || !self.d.is_finite() {
            return Err(Error::InvalidParams(format!(
                "D = {} must be positive",
                self.d
            )));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidParams(format!(
                "gamma = {} must be nonnegative",
                self.gamma
            )));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParams(format!(
                "dt = {} must be positive",
                self.dt
            )));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidParams(format!(
                "t_end = {} must be nonnegative",
                self.t_end
            )));
        }
        for w in self.record_times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidParams(
                    "record times must be strictly increasing".into(),
                ));
            }
        }
        for &t in &self.record_times {
            if t < 0.0 || t > self.t_end * (1.0 + 1e-12) {
                return Err(Error::InvalidParams(format!(
                    "record time {t} outside [0, {}]",
                    self.t_end
                )));
            }
            step_index(t, self.dt)?;
        }
        step_index(self.t_end, self.dt)?;
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Step number of time `t`, which must be an integer multiple of `dt`.
pub fn step_index(t: f64, dt: f64) -> Result<usize> {
    let s = (t / dt).round();
    if (s * dt - t).abs() > 1e-12 * t.abs().max(dt) * 10.0 {
        return Err(Error::InvalidParams(format!(
            "time {t} is not a multiple of dt = {dt}"
        )));
    }
    Ok(s as usize)
}

/// Closed-form initial profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialProfile {
    /// `0.1 (1 - x/100) sin(πx/25)²`.
    Humps1d,
    /// `0.1 x y / 400 · sin(x/4)² sin(y/4)²`.
    Humps2d,
}

/// Initial density: a base profile scaled by `amplitude`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialDensity {
    pub profile: InitialProfile,
    pub amplitude: f64,
}

impl InitialDensity {
    pub fn new(profile: InitialProfile, amplitude: f64) -> Self {
        Self { profile, amplitude }
    }

    pub fn base(&self, x: f64, y: f64) -> f64 {
        match self.profile {
            InitialProfile::Humps1d => {
                0.1 * (1.0 - x / 100.0) * (std::f64::consts::PI * x / 25.0).sin().powi(2)
            }
            InitialProfile::Humps2d => {
                0.1 * x * y / 400.0 * (x / 4.0).sin().powi(2) * (y / 4.0).sin().powi(2)
            }
        }
    }

    /// Sampled profile with boundary nodes set to zero.
    pub fn to_field(&self, grid: &Grid) -> Result<ScalarField> {
        if !(self.amplitude >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "amplitude {} must be nonnegative",
                self.amplitude
            )));
        }
        let expected_dim = match self.profile {
            InitialProfile::Humps1d => 1,
            InitialProfile::Humps2d => 2,
        };
        if grid.dim() != expected_dim {
            return Err(Error::GridMismatch(format!(
                "{:?} profile needs a {expected_dim}D grid",
                self.profile
            )));
        }
        let values = (0..grid.len())
            .map(|k| {
                if grid.is_boundary(k) {
                    0.0
                } else {
                    let [x, y] = grid.coord(k);
                    self.amplitude * self.base(x, y).max(0.0)
                }
            })
            .collect();
        ScalarField::new(grid, values)
    }
}

/// Fields recorded at the requested times.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub fields: Vec<ScalarField>,
    pub params: SolverParams,
    pub mu: ScalarField,
}

impl Trajectory {
    /// Field recorded at `t` (matched to within 1e-9 relative).
    pub fn at(&self, t: f64) -> Option<&ScalarField> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1e-12))
            .map(|i| &self.fields[i])
    }
}

/// Time stepper whose implicit factors are built once per `(grid, D, dt)`.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: Grid,
    d: f64,
    dt: f64,
    /// `D dt / 2`.
    half: f64,
    fx: ConstTridiag,
    fy: Option<ConstTridiag>,
}

impl Stepper {
    pub fn new(grid: &Grid, d: f64, dt: f64) -> Result<Self> {
        if !(d > 0.0) || !(dt > 0.0) {
            return Err(Error::InvalidParams("D and dt must be positive".into()));
        }
        let half = 0.5 * d * dt;
        let [nx, ny] = grid.nodes();
        let [hx, hy] = grid.spacing();
        let rx = half / (hx * hx);
        let fx = ConstTridiag::new(nx - 2, 1.0 + 2.0 * rx, -rx);
        let fy = (grid.dim() == 2).then(|| {
            let ry = half / (hy * hy);
            ConstTridiag::new(ny - 2, 1.0 + 2.0 * ry, -ry)
        });
        Ok(Self {
            grid: grid.clone(),
            d,
            dt,
            half,
            fx,
            fy,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn diffusion(&self) -> f64 {
        self.d
    }

    /// `out = (I + a Lx)(I + a Ly) u` on interior nodes, zero on the boundary.
    fn explicit_part(&self, u: &[f64], tmp: &mut [f64], out: &mut [f64]) {
        let [nx, ny] = self.grid.nodes();
        let [hx, hy] = self.grid.spacing();
        let rx = self.half / (hx * hx);
        if self.grid.dim() == 1 {
            out[0] = 0.0;
            out[nx - 1] = 0.0;
            for i in 1..nx - 1 {
                out[i] = u[i] + rx * (u[i - 1] - 2.0 * u[i] + u[i + 1]);
            }
            return;
        }
        let ry = self.half / (hy * hy);
        // tmp = (I + a Ly) u on interior rows; boundary rows are zero.
        tmp[..nx].iter_mut().for_each(|v| *v = 0.0);
        tmp[(ny - 1) * nx..].iter_mut().for_each(|v| *v = 0.0);
        for j in 1..ny - 1 {
            let r = j * nx;
            let (below, row, above) = (&u[r - nx..r], &u[r..r + nx], &u[r + nx..r + 2 * nx]);
            let t = &mut tmp[r..r + nx];
            for i in 0..nx {
                t[i] = row[i] + ry * (below[i] - 2.0 * row[i] + above[i]);
            }
        }
        out[..nx].iter_mut().for_each(|v| *v = 0.0);
        out[(ny - 1) * nx..].iter_mut().for_each(|v| *v = 0.0);
        for j in 1..ny - 1 {
            let r = j * nx;
            let t = &tmp[r..r + nx];
            let o = &mut out[r..r + nx];
            o[0] = 0.0;
            o[nx - 1] = 0.0;
            for i in 1..nx - 1 {
                o[i] = t[i] + rx * (t[i - 1] - 2.0 * t[i] + t[i + 1]);
            }
        }
    }

    /// Solves `(I - a Lx)(I - a Ly) u = rhs` in place on interior nodes.
    fn implicit_solve(&self, x: &mut [f64]) {
        let [nx, ny] = self.grid.nodes();
        if self.grid.dim() == 1 {
            self.fx.solve(&mut x[1..nx - 1]);
            return;
        }
        self.fx.solve_rows(x, nx, 1, ny - 2, 1);
        if let Some(fy) = &self.fy {
            fy.solve_columns(x, nx, nx + 1, nx - 2);
        }
    }

    /// Marches `n_steps` steps from `u0`, calling `observe(step, u)` after
    /// every step (and once with step 0 before the first). Aborts if any
    /// value exceeds `bound` in magnitude or becomes non-finite.
    pub fn march(
        &self,
        mu: &[f64],
        u0: &[f64],
        gamma: f64,
        n_steps: usize,
        bound: f64,
        mut observe: impl FnMut(usize, &[f64]),
    ) -> Result<Vec<f64>> {
        let n = self.grid.len();
        if mu.len() != n || u0.len() != n {
            return Err(Error::GridMismatch(
                "field sizes differ from the stepper grid".into(),
            ));
        }
        let dt = self.dt;
        let mut u = u0.to_vec();
        let mut r_prev = vec![0.0; n];
        let mut r_cur = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        let mut bu = vec![0.0; n];
        let reaction = |u: &[f64], out: &mut [f64]| {
            for ((o, &v), &m) in out.iter_mut().zip(u).zip(mu) {
                *o = v * (m - gamma * v);
            }
        };
        let interior_zero = |x: &mut [f64]| {
            // Boundary values of the right-hand side are ignored by the
            // interior solves but must stay zero in the state.
            let [nx, ny] = self.grid.nodes();
            if self.grid.dim() == 1 {
                x[0] = 0.0;
                x[nx - 1] = 0.0;
            } else {
                x[..nx].iter_mut().for_each(|v| *v = 0.0);
                x[(ny - 1) * nx..].iter_mut().for_each(|v| *v = 0.0);
                for j in 1..ny - 1 {
                    x[j * nx] = 0.0;
                    x[j * nx + nx - 1] = 0.0;
                }
            }
        };

        observe(0, &u);
        for step in 0..n_steps {
            reaction(&u, &mut r_cur);
            self.explicit_part(&u, &mut tmp, &mut bu);
            if step == 0 {
                // Heun start: predict with R(u0), correct with the average.
                for k in 0..n {
                    rhs[k] = bu[k] + dt * r_cur[k];
                }
                interior_zero(&mut rhs);
                self.implicit_solve(&mut rhs);
                reaction(&rhs, &mut r_prev);
                for k in 0..n {
                    rhs[k] = bu[k] + 0.5 * dt * (r_cur[k] + r_prev[k]);
                }
            } else {
                for k in 0..n {
                    rhs[k] = bu[k] + dt * (1.5 * r_cur[k] - 0.5 * r_prev[k]);
                }
            }
            interior_zero(&mut rhs);
            self.implicit_solve(&mut rhs);
            std::mem::swap(&mut u, &mut rhs);
            std::mem::swap(&mut r_prev, &mut r_cur);
            if let Some(&bad) = u.iter().find(|&&v| !(v.abs() <= bound)) {
                return Err(Error::Unstable {
                    time: (step + 1) as f64 * dt,
                    value: bad,
                    bound,
                });
            }
            observe(step + 1, &u);
        }
        Ok(u)
    }
}

/// Divergence threshold `10 ū e^{M t}` with `ū = max u0`, `M = max |μ|`.
pub fn divergence_bound(mu: &[f64], u0: &[f64], t_end: f64) -> f64 {
    let ubar = u0.iter().cloned().fold(0.0, f64::max);
    let big_m = mu.iter().map(|v| v.abs()).fold(0.0, f64::max);
    10.0 * ubar * (big_m * t_end).exp()
}

fn check_initial(grid: &Grid, u0: &ScalarField) -> Result<()> {
    u0.check_grid(grid)?;
    if u0.values().iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidParams(
            "initial density must be nonnegative".into(),
        ));
    }
    if grid
        .boundary_indices()
        .iter()
        .any(|&k| u0.values()[k] != 0.0)
    {
        return Err(Error::InvalidParams(
            "initial density must vanish on the boundary".into(),
        ));
    }
    Ok(())
}

/// Solves the logistic reaction-diffusion problem and returns the fields at
/// the requested record times.
pub fn solve_parabolic(
    grid: &Grid,
    mu: &ScalarField,
    u0: &ScalarField,
    params: &SolverParams,
) -> Result<Trajectory> {
    params.validate()?;
    mu.check_grid(grid)?;
    check_initial(grid, u0)?;
    let stepper = Stepper::new(grid, params.d, params.dt)?;
    solve_parabolic_with(&stepper, mu, u0, params)
}

/// As [`solve_parabolic`], reusing a prepared stepper.
pub fn solve_parabolic_with(
    stepper: &Stepper,
    mu: &ScalarField,
    u0: &ScalarField,
    params: &SolverParams,
) -> Result<Trajectory> {
    let grid = stepper.grid();
    if (stepper.dt - params.dt).abs() > 0.0 || stepper.d != params.d {
        return Err(Error::InvalidParams(
            "stepper built for different D or dt".into(),
        ));
    }
    let steps: Vec<usize> = params
        .record_times
        .iter()
        .map(|&t| step_index(t, params.dt))
        .collect::<Result<_>>()?;
    let bound = divergence_bound(mu.values(), u0.values(), params.t_end);
    let mut fields = Vec::with_capacity(steps.len());
    let mut next = 0;
    stepper.march(
        mu.values(),
        u0.values(),
        params.gamma,
        params.n_steps(),
        bound,
        |s, u| {
            while next < steps.len() && steps[next] == s {
                fields.push(u.to_vec());
                next += 1;
            }
        },
    )?;
    let fields = fields
        .into_iter()
        .map(|v| ScalarField::new(grid, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        times: params.record_times.clone(),
        fields,
        params: params.clone(),
        mu: mu.clone(),
    })
}

/// In-place solve with the shifted operator.
type ShiftedSolve = dyn Fn(&mut [f64]) -> Result<()>;

/// Principal eigenpair of `-D Δ - μ` with Dirichlet conditions.
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub lambda1: f64,
    /// Eigenvector on the full grid (zero on the boundary), unit 2-norm.
    pub vector: ScalarField,
    /// `‖𝓛ψ - λψ‖₂ / ‖ψ‖₂`.
    pub residual: f64,
    pub iterations: usize,
}

/// Options for [`principal_eigenpair`].
#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    /// Stop when successive Rayleigh quotients differ by less than this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200_000,
        }
    }
}

/// `λ₁` of `-D Δ - μ`.
pub fn principal_eigenvalue(grid: &Grid, mu: &ScalarField, d: f64) -> Result<f64> {
    principal_eigenpair(grid, mu, d, EigenOptions::default()).map(|e| e.lambda1)
}

/// Inverse power iteration on `𝓛 + σI`, with `σ = max μ + D π² dim / ℓ²`
/// (ℓ the shortest axis extent) so the shifted operator is positive definite.
/// Because `σ` moves with `max μ`, adding a constant to `μ` leaves the
/// iterated matrix unchanged.
pub fn principal_eigenpair(
    grid: &Grid,
    mu: &ScalarField,
    d: f64,
    opts: EigenOptions,
) -> Result<Eigenpair> {
    mu.check_grid(grid)?;
    if !(d > 0.0) {
        return Err(Error::InvalidParams(format!("D = {d} must be positive")));
    }
    let interior = grid.interior_indices();
    let n = interior.len();
    let [nx, _] = grid.nodes();
    let [hx, hy] = grid.spacing();
    let dim = grid.dim();
    let min_extent = (0..dim)
        .map(|a| grid.hi()[a] - grid.lo()[a])
        .fold(f64::INFINITY, f64::min);
    let mu_max = mu.max();
    let sigma = mu_max + d * std::f64::consts::PI.powi(2) * dim as f64 / (min_extent * min_extent);
    let cx = d / (hx * hx);
    let cy = if dim == 2 { d / (hy * hy) } else { 0.0 };
    let diag: Vec<f64> = interior
        .iter()
        .map(|&k| 2.0 * cx + 2.0 * cy - mu.values()[k] + sigma)
        .collect();

    let solver: Box<ShiftedSolve> = if dim == 1 {
        let diag = diag.clone();
        Box::new(move |x: &mut [f64]| solve_symmetric_tridiag(&diag, -cx, x))
    } else {
        let w = nx - 2;
        let chol = BandCholesky::factor(n, w, |i, j| {
            if i == j {
                diag[i]
            } else if i - j == w {
                -cy
            } else if i - j == 1 && i % w != 0 {
                -cx
            } else {
                0.0
            }
        })?;
        Box::new(move |x: &mut [f64]| {
            chol.solve(x);
            Ok(())
        })
    };

    // 𝓛 applied on interior unknowns via the full-grid stencil.
    let mut full = vec![0.0; grid.len()];
    let mut lap = vec![0.0; grid.len()];
    let mut apply_op = |x: &[f64], out: &mut [f64]| {
        for (&k, &v) in interior.iter().zip(x) {
            full[k] = v;
        }
        laplacian_into(grid, &full, &mut lap);
        for ((o, &k), &v) in out.iter_mut().zip(&interior).zip(x) {
            *o = -d * lap[k] - mu.values()[k] * v;
        }
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut lx = vec![0.0; n];
    let mut rq_prev = f64::INFINITY;
    let mut rq = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        solver(&mut x)?;
        let norm = dot(&x, &x).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::NotConverged {
                what: "principal eigenvalue",
                iterations,
                residual: f64::NAN,
            });
        }
        x.iter_mut().for_each(|v| *v /= norm);
        apply_op(&x, &mut lx);
        rq = dot(&x, &lx);
        if (rq - rq_prev).abs() < opts.tol {
            converged = true;
            break;
        }
        rq_prev = rq;
    }
    apply_op(&x, &mut lx);
    let residual = lx
        .iter()
        .zip(&x)
        .map(|(l, v)| (l - rq * v).powi(2))
        .sum::<f64>()
        .sqrt();
    if !converged {
        return Err(Error::NotConverged {
            what: "principal eigenvalue",
            iterations,
            residual,
        });
    }
    if x.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::NotConverged {
            what: "principal eigenvector positivity",
            iterations,
            residual,
        });
    }
    let mut values = vec![0.0; grid.len()];
    for (&k, &v) in interior.iter().zip(&x) {
        values[k] = v;
    }
    Ok(Eigenpair {
        lambda1: rq,
        vector: ScalarField::new(grid, values)?,
        residual,
        iterations,
    })
}

/// Eigenvalues within this margin of zero count as nonnegative.
pub const PERSISTENCE_TOL: f64 = 1e-6;

/// Options for [`solve_steady_state`].
#[derive(Debug, Clone, Copy)]
pub struct SteadyOptions {
    pub dt: f64,
    /// Stop when `‖u^{n+1} - u^n‖₂ / (dt ‖u^{n+1}‖₂)` falls below this.
    pub rate_tol: f64,
    pub max_time: f64,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            dt: 0.05,
            rate_tol: 1e-8,
            max_time: 1e4,
        }
    }
}

/// Nonnegative steady state of the logistic problem.
///
/// Returns the zero field when `λ₁[μ] ≥ -PERSISTENCE_TOL`. Otherwise the
/// parabolic problem is integrated from the constant `max μ / γ` (a
/// supersolution) until the relative change per unit time is below the
/// tolerance, which selects the unique positive solution.
pub fn solve_steady_state(
    grid: &Grid,
    mu: &ScalarField,
    gamma: f64,
    d: f64,
) -> Result<ScalarField> {
    solve_steady_state_with(grid, mu, gamma, d, SteadyOptions::default())
}

pub fn solve_steady_state_with(
    grid: &Grid,
    mu: &ScalarField,
    gamma: f64,
    d: f64,
    opts: SteadyOptions,
) -> Result<ScalarField> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParams(format!(
            "gamma = {gamma} must be positive"
        )));
    }
    let lambda1 = principal_eigenvalue(grid, mu, d)?;
    if lambda1 >= -PERSISTENCE_TOL {
        return Ok(ScalarField::zeros(grid));
    }
    let cap = mu.max() / gamma;
    let u0: Vec<f64> = (0..grid.len())
        .map(|k| if grid.is_boundary(k) { 0.0 } else { cap })
        .collect();
    let stepper = Stepper::new(grid, d, opts.dt)?;
    let chunk = ((1.0 / opts.dt).round() as usize).max(1);
    let max_steps = (opts.max_time / opts.dt).ceil() as usize;
    let mut u = u0;
    let mut taken = 0;
    let mut rate = f64::INFINITY;
    let bound = 10.0 * cap.max(1.0);
    while taken < max_steps {
        let mut last = Vec::new();
        let mut conv = false;
        let mut prev = u.clone();
        // Check the convergence rate after every step of this chunk.
        let end = stepper.march(mu.values(), &u, gamma, chunk, bound, |s, v| {
            if s == 0 || conv {
                return;
            }
            let diff: f64 = v
                .iter()
                .zip(&prev)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let norm: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            rate = if norm > 0.0 {
                diff / (opts.dt * norm)
            } else {
                0.0
            };
            prev.copy_from_slice(v);
            if rate < opts.rate_tol {
                conv = true;
                last = v.to_vec();
            }
        })?;
        taken += chunk;
        if conv {
            return ScalarField::new(grid, last);
        }
        u = end;
    }
    Err(Error::NotConverged {
        what: "steady state",
        iterations: taken,
        residual: rate,
    })
}

/// `‖D Δp + p (μ - γ p)‖₂ / ‖p‖₂` over interior nodes (0 for `p ≡ 0`).
pub fn steady_residual(grid: &Grid, p: &ScalarField, mu: &ScalarField, gamma: f64, d: f64) -> f64 {
    let mut lap = vec![0.0; grid.len()];
    laplacian_into(grid, p.values(), &mut lap);
    let mut num = 0.0;
    let mut den = 0.0;
    for k in grid.interior_indices() {
        let v = p.values()[k];
        num += (d * lap[k] + v * (mu.values()[k] - gamma * v)).powi(2);
        den += v * v;
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}
