//! Time integration of the competition system.
//!
//! The scheme is first-order IMEX Euler: the stiff diffusion terms are
//! treated implicitly (unconditionally stable), the reaction terms
//! explicitly:
//!
//! ```text
//! (I − Δt·d_c·Δ_h) v_c^{m+1} = v_c^m + Δt·F_c(v^m)        for each component c.
//! ```
//!
//! In one dimension each implicit solve is a tridiagonal system; in two the
//! discrete Neumann Laplacian is separable, so the solve is performed
//! exactly in the tensor cosine eigenbasis (per-axis orthonormal mode
//! matrices, precomputed once per grid).
//!
//! Positivity is enforced a posteriori: densities may not drop below
//! `−1e−8·(1 + sup)` component-wise. A violating step is rejected and
//! retried with the step halved, up to 20 times; the driver [`run`] then
//! regrows the step (×1.2 after 8 consecutive clean steps, capped by
//! `dt_max`) so rejections stay episodic. Setting `dt_max = dt_init` pins a
//! fixed step for strict accuracy studies.
//!
//! [`run`] also monitors the absorbing bounds
//! `sup w_i ≤ (λk_i − μω_i)/(μμ_i) + ε` and `sup u ≤ λ/μ + ε`: it records
//! when the flow has entered the ε-inflated box (10 consecutive in-bound
//! samples) and flags any later excursion.
//!
//! For spatially homogeneous data the system reduces to its reaction ODE;
//! [`ode_trajectory`] integrates that ODE with classical RK4 and serves as
//! an oracle for the PDE means. When the diffusive gap beats the reaction
//! Lipschitz bound ([`sigma_criterion`]), gradients decay like `e^{−σ′t}`
//! and [`fitted_decay_rate`] measures the observed rate from a trajectory.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{self, Field, Grid};
use crate::linalg::{fit_line, BandedMatrix};
use crate::model::{LipschitzBound, ModelParams, StatePoint};

/// Relative negativity slack: a component may undershoot zero by at most
/// `POSITIVITY_TOL · (1 + sup)` before the step is rejected.
pub const POSITIVITY_TOL: f64 = 1e-8;

/// Maximum number of step halvings inside [`Stepper::step`].
const MAX_HALVINGS: usize = 20;

/// Consecutive clean steps before the driver regrows the step size.
const GROWTH_PATIENCE: usize = 8;

/// Step growth factor applied after [`GROWTH_PATIENCE`] clean steps.
const GROWTH_FACTOR: f64 = 1.2;

/// Consecutive in-bound samples that mark the end of the entry transient.
const TRANSIENT_RUN: usize = 10;

/// Time-dependent state of the system: one field per component, ordered
/// `(w_1, …, w_N, u)`.
#[derive(Debug, Clone)]
pub struct SystemState {
    /// Current time.
    pub t: f64,
    /// Grid shared by all component fields.
    pub grid: Grid,
    /// Component fields `(w_1, …, w_N, u)`.
    pub fields: Vec<Field>,
}

impl SystemState {
    /// Spatially constant state at time 0.
    pub fn constant(grid: &Grid, point: &StatePoint) -> SystemState {
        let mut fields: Vec<Field> = point.w.iter().map(|&v| Field::constant(grid, v)).collect();
        fields.push(Field::constant(grid, point.u));
        SystemState { t: 0.0, grid: grid.clone(), fields }
    }

    /// Wrap fields, checking shapes. At least two components (one predator
    /// and the prey) are required.
    pub fn from_fields(t: f64, grid: &Grid, fields: Vec<Field>) -> Result<SystemState> {
        if fields.len() < 2 {
            return Err(Error::dimension(format!("a state needs at least 2 components, got {}", fields.len())));
        }
        for f in &fields {
            if f.len() != grid.node_count() {
                return Err(Error::ShapeMismatch { expected: grid.node_count(), got: f.len() });
            }
        }
        Ok(SystemState { t, grid: grid.clone(), fields })
    }

    /// Number of components `N + 1`.
    pub fn ncomp(&self) -> usize {
        self.fields.len()
    }

    /// Number of predator components.
    pub fn n_predators(&self) -> usize {
        self.fields.len() - 1
    }

    /// Prey field (last component).
    pub fn prey(&self) -> &Field {
        self.fields.last().expect("states have at least two components")
    }

    /// All component means `(∫f)/|Ω|`.
    pub fn means(&self) -> Vec<f64> {
        let inv = 1.0 / self.grid.measure();
        self.fields.iter().map(|f| grid::integrate(&self.grid, f) * inv).collect()
    }

    /// All component sup norms.
    pub fn sups(&self) -> Vec<f64> {
        self.fields.iter().map(|f| f.sup_norm()).collect()
    }

    /// All component gradient L² norms.
    pub fn grad_norms(&self) -> Vec<f64> {
        self.fields.iter().map(|f| grid::grad_norm_l2(&self.grid, f)).collect()
    }

    /// True when every component stays above `−POSITIVITY_TOL·(1 + sup)`
    /// and all values are finite.
    pub fn is_physical(&self) -> bool {
        self.fields.iter().all(|f| {
            let sup = f.sup_norm();
            sup.is_finite() && f.min_value() >= -POSITIVITY_TOL * (1.0 + sup)
        })
    }

    /// Node-major packing `(node, component)` used by the steady solvers.
    pub fn pack(&self) -> Vec<f64> {
        let nc = self.ncomp();
        let nn = self.grid.node_count();
        let mut v = vec![0.0; nc * nn];
        for (c, f) in self.fields.iter().enumerate() {
            for (i, &x) in f.as_slice().iter().enumerate() {
                v[i * nc + c] = x;
            }
        }
        v
    }

    /// Inverse of [`SystemState::pack`].
    pub fn unpack(grid: &Grid, ncomp: usize, v: &[f64], t: f64) -> Result<SystemState> {
        let nn = grid.node_count();
        if v.len() != nn * ncomp {
            return Err(Error::ShapeMismatch { expected: nn * ncomp, got: v.len() });
        }
        let mut fields = Vec::with_capacity(ncomp);
        for c in 0..ncomp {
            let vals: Vec<f64> = (0..nn).map(|i| v[i * ncomp + c]).collect();
            fields.push(Field::from_values(grid, vals)?);
        }
        SystemState::from_fields(t, grid, fields)
    }

    /// Joint L² distance `√Σ_c ‖f_c − g_c‖²`.
    pub fn l2_distance(&self, other: &SystemState) -> f64 {
        debug_assert_eq!(self.ncomp(), other.ncomp());
        let mut acc = 0.0;
        for (f, g) in self.fields.iter().zip(&other.fields) {
            let diff: Vec<f64> = f.as_slice().iter().zip(g.as_slice()).map(|(&a, &b)| a - b).collect();
            let d = Field::from_values(&self.grid, diff).expect("same grid");
            acc += grid::inner_product(&self.grid, &d, &d);
        }
        acc.max(0.0).sqrt()
    }

    /// Joint sup distance `max_c ‖f_c − g_c‖_∞`.
    pub fn sup_distance(&self, other: &SystemState) -> f64 {
        let mut acc = 0.0f64;
        for (f, g) in self.fields.iter().zip(&other.fields) {
            for (&a, &b) in f.as_slice().iter().zip(g.as_slice()) {
                acc = acc.max((a - b).abs());
            }
        }
        acc
    }
}

/// Spatially constant state perturbed per node by `amplitude·U(−1, 1)`
/// (clamped at zero), using a seeded ChaCha stream so runs are reproducible
/// across platforms. Draw order is component-major, node-minor.
pub fn perturbed_state(grid: &Grid, point: &StatePoint, amplitude: f64, seed: u64) -> SystemState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = point.to_vec();
    let mut fields = Vec::with_capacity(base.len());
    for &b in &base {
        let vals: Vec<f64> =
            (0..grid.node_count()).map(|_| (b + amplitude * rng.gen_range(-1.0..1.0)).max(0.0)).collect();
        fields.push(Field::from_values(grid, vals).expect("grid-sized vector"));
    }
    SystemState { t: 0.0, grid: grid.clone(), fields }
}

/// Spatially constant state plus `amplitude·mode` on selected components
/// (`weights[c]` scales the bump added to component `c`).
pub fn mode_perturbed_state(
    grid: &Grid,
    point: &StatePoint,
    mode: &Field,
    amplitude: f64,
    weights: &[f64],
) -> Result<SystemState> {
    let base = point.to_vec();
    if weights.len() != base.len() {
        return Err(Error::ShapeMismatch { expected: base.len(), got: weights.len() });
    }
    if mode.len() != grid.node_count() {
        return Err(Error::ShapeMismatch { expected: grid.node_count(), got: mode.len() });
    }
    let mut fields = Vec::with_capacity(base.len());
    for (c, &b) in base.iter().enumerate() {
        let vals: Vec<f64> =
            mode.as_slice().iter().map(|&m| (b + amplitude * weights[c] * m).max(0.0)).collect();
        fields.push(Field::from_values(grid, vals)?);
    }
    Ok(SystemState { t: 0.0, grid: grid.clone(), fields })
}

/// Per-axis cosine transform data for the 2D spectral diffusion solve.
struct AxisModes {
    /// Orthonormal (ℓ²) cosine mode matrix; column `p` is mode `p`.
    c: nalgebra::DMatrix<f64>,
    /// Discrete eigenvalues of `−Δ_h` along this axis.
    gamma: Vec<f64>,
}

fn axis_modes(n: usize) -> AxisModes {
    let mut c = nalgebra::DMatrix::zeros(n, n);
    let mut gamma = Vec::with_capacity(n);
    for p in 0..n {
        let norm = if p == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for i in 0..n {
            c[(i, p)] = norm * (std::f64::consts::PI * p as f64 * (i as f64 + 0.5) / n as f64).cos();
        }
        gamma.push(2.0 * (1.0 - (std::f64::consts::PI * p as f64 / n as f64).cos()));
    }
    AxisModes { c, gamma }
}

/// One IMEX Euler stepper bound to a parameter set and a grid.
pub struct Stepper {
    params: ModelParams,
    grid: Grid,
    /// Test hook: disable the reaction terms to exercise pure diffusion.
    pub reaction_enabled: bool,
    /// 2D only: per-axis cosine data (x then y), eigenvalues scaled by 1/h².
    modes2d: Option<(AxisModes, AxisModes)>,
}

impl Stepper {
    /// Create a stepper; validates parameters and precomputes the 2D
    /// transform data.
    pub fn new(params: &ModelParams, grid: &Grid) -> Result<Stepper> {
        params.validate()?;
        let modes2d = if grid.dim() == 2 {
            Some((axis_modes(grid.n_cells()[0]), axis_modes(grid.n_cells()[1])))
        } else {
            None
        };
        Ok(Stepper { params: params.clone(), grid: grid.clone(), reaction_enabled: true, modes2d })
    }

    fn check_state(&self, state: &SystemState) -> Result<()> {
        if state.grid != self.grid {
            return Err(Error::grid("state grid differs from the stepper grid".to_string()));
        }
        if state.ncomp() != self.params.ncomp() {
            return Err(Error::ShapeMismatch { expected: self.params.ncomp(), got: state.ncomp() });
        }
        Ok(())
    }

    /// Explicit reaction stage: `v + dt·F(v)` pointwise.
    fn reaction_stage(&self, state: &SystemState, dt: f64) -> Vec<Vec<f64>> {
        let nc = state.ncomp();
        let nn = self.grid.node_count();
        let mut out: Vec<Vec<f64>> = state.fields.iter().map(|f| f.as_slice().to_vec()).collect();
        if !self.reaction_enabled {
            return out;
        }
        let mut point = vec![0.0; nc];
        let mut f = vec![0.0; nc];
        for i in 0..nn {
            for (c, o) in out.iter().enumerate() {
                point[c] = o[i];
            }
            self.params.reaction(&point, &mut f);
            for (c, o) in out.iter_mut().enumerate() {
                o[i] += dt * f[c];
            }
        }
        out
    }

    /// Implicit diffusion stage: solve `(I − dt·d_c·Δ_h) x = rhs`.
    fn diffusion_solve(&self, rhs: Vec<f64>, diffusivity: f64, dt: f64) -> Vec<f64> {
        match self.grid.dim() {
            1 => {
                let n = self.grid.n_cells()[0];
                let r = dt * diffusivity / (self.grid.spacing()[0] * self.grid.spacing()[0]);
                let mut m = BandedMatrix::zeros(n, 1, 1);
                for i in 0..n {
                    let mut diag = 1.0;
                    if i > 0 {
                        m.set(i, i - 1, -r);
                        diag += r;
                    }
                    if i + 1 < n {
                        m.set(i, i + 1, -r);
                        diag += r;
                    }
                    m.set(i, i, diag);
                }
                let f = m.factor().expect("strictly diagonally dominant tridiagonal");
                f.solve(&rhs)
            }
            _ => {
                let (mx, my) = self.modes2d.as_ref().expect("2D stepper has mode data");
                let nx = self.grid.n_cells()[0];
                let ny = self.grid.n_cells()[1];
                let ihx2 = 1.0 / (self.grid.spacing()[0] * self.grid.spacing()[0]);
                let ihy2 = 1.0 / (self.grid.spacing()[1] * self.grid.spacing()[1]);
                // Row index = y, column index = x (row-major node order).
                let v = nalgebra::DMatrix::from_row_slice(ny, nx, &rhs);
                let mut vhat = my.c.transpose() * v * &mx.c;
                for q in 0..ny {
                    for p in 0..nx {
                        let g = mx.gamma[p] * ihx2 + my.gamma[q] * ihy2;
                        vhat[(q, p)] /= 1.0 + dt * diffusivity * g;
                    }
                }
                let out = &my.c * vhat * mx.c.transpose();
                let mut flat = vec![0.0; nx * ny];
                for q in 0..ny {
                    for p in 0..nx {
                        flat[q * nx + p] = out[(q, p)];
                    }
                }
                flat
            }
        }
    }

    /// One IMEX attempt at exactly `dt`. Fails with [`Error::Step`] when the
    /// result violates the positivity slack or is non-finite.
    pub fn try_step(&self, state: &SystemState, dt: f64) -> Result<SystemState> {
        self.check_state(state)?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Step { message: format!("step size must be positive, got {dt}") });
        }
        let staged = self.reaction_stage(state, dt);
        let nc = state.ncomp();
        let mut fields = Vec::with_capacity(nc);
        for (c, rhs) in staged.into_iter().enumerate() {
            let diff = if c < nc - 1 { self.params.d[c] } else { self.params.dprey };
            let vals = self.diffusion_solve(rhs, diff, dt);
            let f = Field::from_values(&self.grid, vals)?;
            let sup = f.sup_norm();
            if !sup.is_finite() {
                return Err(Error::Step { message: format!("component {c} became non-finite at dt = {dt:.3e}") });
            }
            if f.min_value() < -POSITIVITY_TOL * (1.0 + sup) {
                return Err(Error::Step {
                    message: format!(
                        "component {c} fell to {:.3e} (limit {:.3e}) at dt = {dt:.3e}",
                        f.min_value(),
                        -POSITIVITY_TOL * (1.0 + sup)
                    ),
                });
            }
            fields.push(f);
        }
        Ok(SystemState { t: state.t + dt, grid: self.grid.clone(), fields })
    }

    /// One step with positivity retries: halves `dt` up to 20 times until an
    /// attempt is accepted. Returns the new state and the step actually used.
    pub fn step(&self, state: &SystemState, dt: f64) -> Result<(SystemState, f64)> {
        let mut trial = dt;
        let mut last_err = None;
        for _ in 0..=MAX_HALVINGS {
            match self.try_step(state, trial) {
                Ok(next) => return Ok((next, trial)),
                Err(e) => {
                    last_err = Some(e);
                    trial *= 0.5;
                }
            }
        }
        Err(last_err.unwrap_or(Error::Step { message: "step size collapsed".to_string() }))
    }
}

/// Driver configuration for [`run`].
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Final time.
    pub t_end: f64,
    /// Sampling interval for trajectory rows.
    pub sample_every: f64,
    /// Initial step; defaults to `0.25·h_min²/max(d, D)`.
    pub dt_init: Option<f64>,
    /// Growth cap for the adaptive step; defaults to `sample_every`.
    /// Set equal to `dt_init` to pin a fixed step.
    pub dt_max: Option<f64>,
    /// Inflation ε of the absorbing bounds monitored along the run.
    pub epsilon: f64,
    /// Keep a full field snapshot every this many samples (None: only the
    /// final state is kept).
    pub snapshot_every: Option<usize>,
}

impl RunConfig {
    /// Defaults: ε = 1e−2, no snapshots, derived dt bounds.
    pub fn new(t_end: f64, sample_every: f64) -> RunConfig {
        RunConfig { t_end, sample_every, dt_init: None, dt_max: None, epsilon: 1e-2, snapshot_every: None }
    }
}

/// One trajectory row.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectorySample {
    /// Sample time.
    pub t: f64,
    /// Component means.
    pub means: Vec<f64>,
    /// Component sup norms.
    pub sups: Vec<f64>,
    /// Component gradient L² norms.
    pub grad_norms: Vec<f64>,
}

/// A monitored-bound excursion after the entry transient.
#[derive(Debug, Clone, Serialize)]
pub struct BoundViolation {
    /// Sample time of the excursion.
    pub t: f64,
    /// Component index.
    pub component: usize,
    /// Observed sup norm.
    pub value: f64,
    /// Violated bound (cap + ε).
    pub bound: f64,
}

/// Result of [`run`].
#[derive(Debug)]
pub struct Trajectory {
    /// Sampled scalar diagnostics, including t = 0 and t = t_end.
    pub samples: Vec<TrajectorySample>,
    /// Optional field snapshots `(sample_index, state)`.
    pub snapshots: Vec<(usize, SystemState)>,
    /// State at `t_end`.
    pub final_state: SystemState,
    /// Monitored sup bounds per component (cap + ε; infinite where no
    /// a-priori bound exists, i.e. μ_i = 0 predators).
    pub monitored_bounds: Vec<f64>,
    /// Time at which the flow had first stayed inside the monitored bounds
    /// for 10 consecutive samples (start of that run), if ever.
    pub transient_end: Option<f64>,
    /// Excursions beyond the bounds after `transient_end`.
    pub violations: Vec<BoundViolation>,
    /// Accepted steps.
    pub steps_taken: usize,
    /// Rejected attempts (positivity halvings).
    pub steps_rejected: usize,
}

/// Monitored sup bounds `cap_c + ε` for the absorbing box (∞ for predators
/// without intraspecies competition).
fn monitor_bounds(params: &ModelParams, epsilon: f64) -> Vec<f64> {
    let n = params.n();
    let mut bounds = Vec::with_capacity(n + 1);
    for i in 0..n {
        if params.mu_self[i] > 0.0 {
            let cap = ((params.lambda * params.kpred[i] - params.mu * params.omega[i])
                / (params.mu * params.mu_self[i]))
                .max(0.0);
            bounds.push(cap + epsilon);
        } else {
            bounds.push(f64::INFINITY);
        }
    }
    bounds.push(params.lambda / params.mu + epsilon);
    bounds
}

/// Integrate from `initial` to `t_end`, sampling diagnostics every
/// `sample_every` and monitoring the absorbing bounds.
pub fn run(params: &ModelParams, initial: &SystemState, config: &RunConfig) -> Result<Trajectory> {
    params.validate()?;
    if !(config.t_end > initial.t) {
        return Err(Error::Step { message: format!("t_end = {} does not exceed the initial time {}", config.t_end, initial.t) });
    }
    if !(config.sample_every > 0.0) {
        return Err(Error::Step { message: "sample_every must be positive".to_string() });
    }
    if !initial.is_physical() {
        return Err(Error::domain("initial state has negative or non-finite values"));
    }
    let stepper = Stepper::new(params, &initial.grid)?;
    let h_min = initial.grid.spacing().iter().cloned().fold(f64::INFINITY, f64::min);
    let dt_init = config.dt_init.unwrap_or(0.25 * h_min * h_min / params.max_diffusivity());
    let dt_max = config.dt_max.unwrap_or(config.sample_every).max(dt_init);
    if !(dt_init > 0.0) {
        return Err(Error::Step { message: format!("dt_init must be positive, got {dt_init}") });
    }

    let bounds = monitor_bounds(params, config.epsilon);
    let mut samples = Vec::new();
    let mut snapshots = Vec::new();
    let mut violations = Vec::new();
    let mut state = initial.clone();
    let mut dt = dt_init;
    let mut clean_streak = 0usize;
    let mut steps_taken = 0usize;
    let mut steps_rejected = 0usize;
    let mut in_bound_run = 0usize;
    let mut transient_end = None;

    // Sample targets: k·sample_every (k ≥ 1) strictly below t_end, then t_end.
    let t0 = initial.t;
    let span = config.t_end - t0;
    let inner = ((span / config.sample_every) - 1e-9).floor().max(0.0) as usize;
    let mut targets: Vec<f64> = (1..=inner).map(|k| t0 + k as f64 * config.sample_every).collect();
    targets.push(config.t_end);

    let record = |state: &SystemState,
                      samples: &mut Vec<TrajectorySample>,
                      snapshots: &mut Vec<(usize, SystemState)>,
                      in_bound_run: &mut usize,
                      transient_end: &mut Option<f64>,
                      violations: &mut Vec<BoundViolation>| {
        let sups = state.sups();
        let idx = samples.len();
        samples.push(TrajectorySample {
            t: state.t,
            means: state.means(),
            sups: sups.clone(),
            grad_norms: state.grad_norms(),
        });
        if let Some(every) = config.snapshot_every {
            if every > 0 && idx % every == 0 {
                snapshots.push((idx, state.clone()));
            }
        }
        let inside = sups.iter().zip(&bounds).all(|(&s, &b)| s <= b);
        if inside {
            *in_bound_run += 1;
            if *in_bound_run == TRANSIENT_RUN && transient_end.is_none() {
                *transient_end = Some(samples[idx + 1 - TRANSIENT_RUN].t);
            }
        } else {
            *in_bound_run = 0;
            if let Some(te) = *transient_end {
                for (c, (&s, &b)) in sups.iter().zip(&bounds).enumerate() {
                    if s > b && state.t > te {
                        violations.push(BoundViolation { t: state.t, component: c, value: s, bound: b });
                    }
                }
            }
        }
    };

    record(&state, &mut samples, &mut snapshots, &mut in_bound_run, &mut transient_end, &mut violations);

    for &target in &targets {
        while state.t < target - 1e-12 * (1.0 + target.abs()) {
            let dt_req = dt.min(target - state.t);
            let (next, dt_used) = stepper.step(&state, dt_req)?;
            state = next;
            steps_taken += 1;
            if dt_used < dt_req {
                // Positivity halvings happened: adopt the safe step.
                steps_rejected += ((dt_req / dt_used).log2().round()) as usize;
                dt = dt_used;
                clean_streak = 0;
            } else if dt_used >= dt {
                clean_streak += 1;
                if clean_streak >= GROWTH_PATIENCE {
                    dt = (dt * GROWTH_FACTOR).min(dt_max);
                    clean_streak = 0;
                }
            }
        }
        state.t = target; // snap away accumulated rounding
        record(&state, &mut samples, &mut snapshots, &mut in_bound_run, &mut transient_end, &mut violations);
    }

    Ok(Trajectory {
        samples,
        snapshots,
        final_state: state,
        monitored_bounds: bounds,
        transient_end,
        violations,
        steps_taken,
        steps_rejected,
    })
}

/// Classical RK4 on the spatially homogeneous reaction ODE
/// `ẏ = F(y)`, sampling every `sample_every`. Fails with [`Error::Step`] if
/// the solution blows past `1e12` or turns non-finite.
pub fn ode_trajectory(
    params: &ModelParams,
    start: &StatePoint,
    t_end: f64,
    dt: f64,
    sample_every: f64,
) -> Result<Vec<(f64, StatePoint)>> {
    params.validate()?;
    if !(dt > 0.0 && t_end > 0.0 && sample_every > 0.0) {
        return Err(Error::Step { message: "ode_trajectory needs positive dt, t_end, sample_every".to_string() });
    }
    let nc = params.ncomp();
    let mut y = start.to_vec();
    if y.len() != nc {
        return Err(Error::ShapeMismatch { expected: nc, got: y.len() });
    }
    let mut out = vec![(0.0, StatePoint::from_slice(&y))];
    let mut k1 = vec![0.0; nc];
    let mut k2 = vec![0.0; nc];
    let mut k3 = vec![0.0; nc];
    let mut k4 = vec![0.0; nc];
    let mut tmp = vec![0.0; nc];

    let inner = ((t_end / sample_every) - 1e-9).floor().max(0.0) as usize;
    let mut targets: Vec<f64> = (1..=inner).map(|k| k as f64 * sample_every).collect();
    targets.push(t_end);

    let mut t = 0.0;
    for &target in &targets {
        while t < target - 1e-12 * (1.0 + target) {
            let h = dt.min(target - t);
            params.reaction(&y, &mut k1);
            for i in 0..nc {
                tmp[i] = y[i] + 0.5 * h * k1[i];
            }
            params.reaction(&tmp, &mut k2);
            for i in 0..nc {
                tmp[i] = y[i] + 0.5 * h * k2[i];
            }
            params.reaction(&tmp, &mut k3);
            for i in 0..nc {
                tmp[i] = y[i] + h * k3[i];
            }
            params.reaction(&tmp, &mut k4);
            for i in 0..nc {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            t += h;
            if y.iter().any(|v| !v.is_finite() || v.abs() > 1e12) {
                return Err(Error::Step { message: format!("reaction ODE blew up near t = {t:.3}") });
            }
        }
        t = target;
        out.push((t, StatePoint::from_slice(&y)));
    }
    Ok(out)
}

/// Homogenization criterion `σ = min(d, D)·γ₁ − L`, where `γ₁` is the first
/// nonzero Neumann eigenvalue of the domain and `L` the certified reaction
/// Lipschitz bound over the absorbing box. If `σ > 0`, gradients decay like
/// `e^{−σ′t}` for every `σ′ < σ` and the means track the reaction ODE up to
/// an `e^{−σ′t}` forcing.
#[derive(Debug, Clone, Serialize)]
pub struct SigmaCriterion {
    /// `min(d, D)·γ₁ − L`.
    pub sigma: f64,
    /// Smallest diffusivity.
    pub dmin: f64,
    /// First nonzero Neumann eigenvalue `(π/L_max)²`.
    pub gamma1: f64,
    /// Certified Lipschitz bound.
    pub lipschitz: LipschitzBound,
    /// `sigma > 0`.
    pub positive: bool,
}

/// Evaluate the homogenization criterion on the rectangle with the given
/// extents.
pub fn sigma_criterion(params: &ModelParams, extents: &[(f64, f64)]) -> Result<SigmaCriterion> {
    if extents.is_empty() || extents.len() > 2 {
        return Err(Error::dimension(format!("extents must have 1 or 2 axes, got {}", extents.len())));
    }
    for &(a, b) in extents {
        if !(b > a) {
            return Err(Error::grid(format!("extent ({a}, {b}) is not increasing")));
        }
    }
    let lmax = extents.iter().map(|&(a, b)| b - a).fold(0.0f64, f64::max);
    let gamma1 = (std::f64::consts::PI / lmax).powi(2);
    let lipschitz = params.lipschitz_bound()?;
    let dmin = params.min_diffusivity();
    let sigma = dmin * gamma1 - lipschitz.bound;
    Ok(SigmaCriterion { sigma, dmin, gamma1, lipschitz, positive: sigma > 0.0 })
}

/// Exponential fit of the summed gradient norms.
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    /// Fitted rate `r` in `Σ_c‖∇f_c‖ ≈ C·e^{r·t}` (negative = decay).
    pub rate: f64,
    /// Fitted `ln C`.
    pub log_intercept: f64,
    /// Samples entering the fit.
    pub samples_used: usize,
}

/// Least-squares decay rate of `ln(Σ_c ‖∇f_c‖)` over the trailing half of
/// the samples (gradient sums below `1e−13` are dropped as rounding floor).
pub fn fitted_decay_rate(trajectory: &Trajectory) -> Result<DecayFit> {
    let n = trajectory.samples.len();
    let tail = &trajectory.samples[n / 2..];
    let mut ts = Vec::new();
    let mut logs = Vec::new();
    for s in tail {
        let g: f64 = s.grad_norms.iter().sum();
        if g > 1e-13 {
            ts.push(s.t);
            logs.push(g.ln());
        }
    }
    if ts.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: ts.len() });
    }
    let (rate, log_intercept) = fit_line(&ts, &logs)?;
    Ok(DecayFit { rate, log_intercept, samples_used: ts.len() })
}

/// Largest discrepancy between a trajectory's component means and the
/// reaction ODE started from the trajectory's initial means, compared at
/// every sample time.
pub fn compare_means_to_ode(params: &ModelParams, trajectory: &Trajectory, dt_ode: f64) -> Result<f64> {
    let samples = &trajectory.samples;
    if samples.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: samples.len() });
    }
    let start = StatePoint::from_slice(&samples[0].means);
    let t_end = samples.last().expect("nonempty").t - samples[0].t;
    // Match the trajectory sampling cadence exactly.
    let dtimes: Vec<f64> = samples.iter().map(|s| s.t - samples[0].t).collect();
    let mut worst = 0.0f64;
    // Integrate once over the whole horizon, stopping at each sample time.
    let nc = params.ncomp();
    let mut y = start.to_vec();
    let mut k1 = vec![0.0; nc];
    let mut k2 = vec![0.0; nc];
    let mut k3 = vec![0.0; nc];
    let mut k4 = vec![0.0; nc];
    let mut tmp = vec![0.0; nc];
    let mut t = 0.0;
    for (s, &target) in samples.iter().zip(&dtimes) {
        while t < target - 1e-12 * (1.0 + t_end) {
            let h = dt_ode.min(target - t);
            params.reaction(&y, &mut k1);
            for i in 0..nc {
                tmp[i] = y[i] + 0.5 * h * k1[i];
            }
            params.reaction(&tmp, &mut k2);
            for i in 0..nc {
                tmp[i] = y[i] + 0.5 * h * k2[i];
            }
            params.reaction(&tmp, &mut k3);
            for i in 0..nc {
                tmp[i] = y[i] + h * k3[i];
            }
            params.reaction(&tmp, &mut k4);
            for i in 0..nc {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            t += h;
        }
        t = target;
        for (c, &m) in s.means.iter().enumerate() {
            worst = worst.max((m - y[c]).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use approx::assert_abs_diff_eq;

    fn logistic_params() -> ModelParams {
        // Single predator kept at zero: the prey follows pure logistic growth.
        ModelParams {
            lambda: 1.0,
            mu: 0.05,
            n_predators: 1,
            omega: vec![1.0],
            kpred: vec![1.0],
            mu_self: vec![0.1],
            d: vec![1.0],
            dprey: 1.0,
            beta: 0.0,
            a: vec![vec![0.0]],
        }
    }

    fn logistic_exact(lambda: f64, mu: f64, u0: f64, t: f64) -> f64 {
        lambda * u0 / (mu * u0 + (lambda - mu * u0) * (-lambda * t).exp())
    }

    #[test]
    fn pure_diffusion_damps_modes_exactly() {
        // With the reaction disabled the IMEX step is exact per discrete
        // mode: one step multiplies mode p by 1/(1 + dt·d·γ_p).
        let g = build_grid(&[(0.0, 1.0)], &[32]).unwrap();
        let p = logistic_params();
        let mut stepper = Stepper::new(&p, &g).unwrap();
        stepper.reaction_enabled = false;

        let spec = grid::neumann_spectrum(&g, 5, grid::SpectrumMethod::Discrete).unwrap();
        let mode = spec.mode(3);
        let gamma = spec.eigenvalues()[3];
        let mut fields = Vec::new();
        for _ in 0..2 {
            let vals: Vec<f64> = mode.as_slice().iter().map(|&v| 1.0 + 0.1 * v).collect();
            fields.push(Field::from_values(&g, vals).unwrap());
        }
        let state = SystemState::from_fields(0.0, &g, fields).unwrap();
        let dt = 0.01;
        let next = stepper.try_step(&state, dt).unwrap();
        let factor = 1.0 / (1.0 + dt * gamma); // d = D = 1
        for c in 0..2 {
            for (i, &v) in next.fields[c].as_slice().iter().enumerate() {
                let expect = 1.0 + 0.1 * factor * mode.as_slice()[i];
                assert_abs_diff_eq!(v, expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pure_diffusion_damps_modes_exactly_2d() {
        let g = build_grid(&[(0.0, 1.0), (0.0, 0.5)], &[12, 8]).unwrap();
        let p = logistic_params();
        let mut stepper = Stepper::new(&p, &g).unwrap();
        stepper.reaction_enabled = false;

        let spec = grid::neumann_spectrum(&g, 7, grid::SpectrumMethod::Discrete).unwrap();
        let mode = spec.mode(5);
        let gamma = spec.eigenvalues()[5];
        let fields = vec![
            Field::from_values(&g, mode.as_slice().iter().map(|&v| 2.0 + 0.05 * v).collect()).unwrap(),
            Field::constant(&g, 1.0),
        ];
        let state = SystemState::from_fields(0.0, &g, fields).unwrap();
        let dt = 0.003;
        let next = stepper.try_step(&state, dt).unwrap();
        let factor = 1.0 / (1.0 + dt * gamma);
        for (i, &v) in next.fields[0].as_slice().iter().enumerate() {
            let expect = 2.0 + 0.05 * factor * mode.as_slice()[i];
            assert_abs_diff_eq!(v, expect, epsilon = 1e-12);
        }
        // Constants are untouched by diffusion.
        assert_abs_diff_eq!(next.fields[1].sup_norm(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn ode_oracle_matches_logistic_closed_form() {
        let p = logistic_params();
        let traj = ode_trajectory(&p, &StatePoint { w: vec![0.0], u: 1.0 }, 5.0, 1e-3, 1.0).unwrap();
        for &(t, ref y) in &traj {
            let exact = logistic_exact(1.0, 0.05, 1.0, t);
            assert_abs_diff_eq!(y.u, exact, epsilon = 1e-9);
            assert_eq!(y.w[0], 0.0);
        }
    }

    #[test]
    fn constant_run_tracks_logistic_within_euler_error() {
        let p = logistic_params();
        let g = build_grid(&[(0.0, 1.0)], &[16]).unwrap();
        let init = SystemState::constant(&g, &StatePoint { w: vec![0.0], u: 1.0 });
        let mut cfg = RunConfig::new(5.0, 0.5);
        cfg.dt_init = Some(1e-3);
        cfg.dt_max = Some(1e-3); // pin a fixed step
        let traj = run(&p, &init, &cfg).unwrap();
        let last = traj.samples.last().unwrap();
        let exact = logistic_exact(1.0, 0.05, 1.0, 5.0);
        // Forward-Euler reaction: first-order error, comfortably below 1e-3.
        assert!((last.means[1] - exact).abs() < 1e-3, "err = {}", (last.means[1] - exact).abs());
        // Constant data stays constant.
        assert!(last.grad_norms.iter().all(|&gn| gn < 1e-12));
        // Fixed-step run: ~5000 steps.
        assert!(traj.steps_taken >= 5000);
    }

    #[test]
    fn compare_means_matches_run_for_constant_data() {
        let p = logistic_params();
        let g = build_grid(&[(0.0, 1.0)], &[8]).unwrap();
        let init = SystemState::constant(&g, &StatePoint { w: vec![0.0], u: 1.0 });
        let mut cfg = RunConfig::new(2.0, 0.25);
        cfg.dt_init = Some(1e-4);
        cfg.dt_max = Some(1e-4);
        let traj = run(&p, &init, &cfg).unwrap();
        let worst = compare_means_to_ode(&p, &traj, 1e-4).unwrap();
        // First-order reaction splitting: discrepancy O(dt), ~3e-4 here.
        assert!(worst < 1e-3, "worst = {worst}");
    }

    #[test]
    fn positivity_rejection_halves_the_step() {
        // With u = 0 a predator decays like ẇ = −ω w; an explicit step with
        // dt·ω > 1 would cross zero, so the stepper must halve.
        let mut p = logistic_params();
        p.omega[0] = 40.0;
        let g = build_grid(&[(0.0, 1.0)], &[8]).unwrap();
        let state = SystemState::constant(&g, &StatePoint { w: vec![1.0], u: 0.0 });
        let stepper = Stepper::new(&p, &g).unwrap();
        let (next, dt_used) = stepper.step(&state, 0.05).unwrap();
        assert!(dt_used < 0.05, "expected at least one halving, used {dt_used}");
        assert!(next.is_physical());
    }

    #[test]
    fn growth_caps_at_dt_max_and_run_reaches_t_end() {
        let p = logistic_params();
        let g = build_grid(&[(0.0, 1.0)], &[8]).unwrap();
        let init = SystemState::constant(&g, &StatePoint { w: vec![0.0], u: 19.0 });
        let mut cfg = RunConfig::new(3.0, 0.1);
        cfg.dt_init = Some(1e-4);
        cfg.dt_max = Some(0.05);
        let traj = run(&p, &init, &cfg).unwrap();
        assert_eq!(traj.samples.len(), 31);
        assert_abs_diff_eq!(traj.samples.last().unwrap().t, 3.0, epsilon = 1e-12);
        // Growth engaged: far fewer steps than the fixed-dt count 30000.
        assert!(traj.steps_taken < 10_000, "steps = {}", traj.steps_taken);
    }

    #[test]
    fn monitors_detect_entry_into_absorbing_box() {
        let p = ModelParams { mu_self: vec![0.5], ..logistic_params() };
        let g = build_grid(&[(0.0, 1.0)], &[8]).unwrap();
        // Start far above the absorbing box: u(0) = 3·λ/μ.
        let init = SystemState::constant(&g, &StatePoint { w: vec![0.5], u: 60.0 });
        let cfg = RunConfig::new(8.0, 0.05);
        let traj = run(&p, &init, &cfg).unwrap();
        let te = traj.transient_end.expect("flow must enter the absorbing box");
        assert!(te > 0.0 && te < 8.0);
        assert!(traj.violations.is_empty(), "violations: {:?}", traj.violations);
        // Prey bound is λ/μ + ε.
        assert_abs_diff_eq!(traj.monitored_bounds[1], 20.0 + 1e-2, epsilon = 1e-12);
        let last = traj.samples.last().unwrap();
        assert!(last.sups[1] <= traj.monitored_bounds[1]);
    }

    #[test]
    fn perturbed_state_is_deterministic_per_seed() {
        let g = build_grid(&[(0.0, 1.0)], &[16]).unwrap();
        let pt = StatePoint { w: vec![0.4, 0.4], u: 2.0 };
        let a = perturbed_state(&g, &pt, 0.1, 42);
        let b = perturbed_state(&g, &pt, 0.1, 42);
        let c = perturbed_state(&g, &pt, 0.1, 43);
        assert_eq!(a.fields, b.fields);
        assert!(a.sup_distance(&c) > 0.0);
        assert!(a.is_physical());
    }

    #[test]
    fn pack_unpack_round_trip() {
        let g = build_grid(&[(0.0, 1.0), (0.0, 1.0)], &[4, 3]).unwrap();
        let pt = StatePoint { w: vec![0.4, 0.2], u: 2.0 };
        let s = perturbed_state(&g, &pt, 0.05, 7);
        let v = s.pack();
        let r = SystemState::unpack(&g, 3, &v, s.t).unwrap();
        assert_eq!(s.fields, r.fields);
    }

    #[test]
    fn decay_fit_recovers_planted_rate() {
        // Synthesize a trajectory whose gradient sum is exactly e^{−1.7t}.
        let g = build_grid(&[(0.0, 1.0)], &[4]).unwrap();
        let state = SystemState::constant(&g, &StatePoint { w: vec![0.0], u: 1.0 });
        let samples: Vec<TrajectorySample> = (0..50)
            .map(|i| {
                let t = i as f64 * 0.1;
                TrajectorySample {
                    t,
                    means: vec![0.0, 1.0],
                    sups: vec![0.0, 1.0],
                    grad_norms: vec![0.5 * (-1.7 * t).exp(), 0.5 * (-1.7 * t).exp()],
                }
            })
            .collect();
        let traj = Trajectory {
            samples,
            snapshots: vec![],
            final_state: state,
            monitored_bounds: vec![f64::INFINITY, 20.01],
            transient_end: Some(0.0),
            violations: vec![],
            steps_taken: 0,
            steps_rejected: 0,
        };
        let fit = fitted_decay_rate(&traj).unwrap();
        assert_abs_diff_eq!(fit.rate, -1.7, epsilon = 1e-9);
    }

    #[test]
    fn sigma_criterion_balances_gap_against_lipschitz() {
        let mut p = logistic_params();
        p.mu_self = vec![0.5];
        // Tiny domain: γ₁ = (π/0.1)² ≈ 987 beats any O(10) Lipschitz bound.
        let crit = sigma_criterion(&p, &[(0.0, 0.1)]).unwrap();
        assert!(crit.positive, "sigma = {}", crit.sigma);
        assert_abs_diff_eq!(crit.gamma1, (std::f64::consts::PI / 0.1).powi(2), epsilon = 1e-9);

        // On the unit interval the same parameters lose the race.
        let crit2 = sigma_criterion(&p, &[(0.0, 1.0)]).unwrap();
        assert!(!crit2.positive, "sigma = {}", crit2.sigma);
    }
}
