//! Pack-count bounds, population accounting, and the pack-number optimizer.
//!
//! How many spatially separated predator packs can a domain support? The
//! linearization of the steady system around a segregated pattern shows that
//! every pack must fit a Neumann eigenfunction whose eigenvalue stays below
//! the spectral budget
//!
//! ```text
//! γ̄ = max_i (λ k_i − μ ω_i) / (d_i μ),
//! ```
//!
//! so the number of packs is bounded by `N̄ = #{ γ : γ < γ̄ }`, counting
//! Neumann eigenvalues of `−Δ` on `Ω` with multiplicity and starting at the
//! constant mode `γ₁ = 0`. Weyl's law turns the count into the closed form
//! `N(γ̄) ≈ ω_n/(2π)^n · |Ω| · γ̄^{n/2}` with `ω_n` the unit-ball volume
//! (`ω₁ = 2`, `ω₂ = π`), which in two dimensions reads `|Ω| γ̄ / (4π)`.
//! [`pack_bound`] evaluates both counts; the exact one is authoritative, the
//! Weyl term is its large-`γ̄` shadow and the two are reconciled by a sweep
//! test.
//!
//! The quantity being optimized is the total predator population
//!
//! ```text
//! P(w₁, …, w_N, u) = ∫_Ω Σ_i w_i.
//! ```
//!
//! For the idealized unsaturated prey (`μ = 0`, identical predators with
//! hunting rate `k` and mortality `ω`) every positive steady state obeys two
//! exact mass identities obtained by integrating the prey equation against
//! `1/u` and the predator equations against `1`:
//!
//! ```text
//! ∫ Σ w_i = (λ/k)|Ω| + (D/k)   ∫ |∇ log u|²,
//! ∫ u     = (ω/k)|Ω| + (1/λ) Σ_i μ_{s,i} ∫ w_i²
//!         + (β/λ) Σ_{i≠j} a_ij ∫ w_i w_j + (ωD/(kλ)) ∫ |∇ log u|².
//! ```
//!
//! The first says segregation *pays*: any spatial structure in the prey
//! (nonzero `∇ log u`) lifts the population above the flat benchmark
//! `(λ/k)|Ω|`. [`verify_identities_mu0`] evaluates both residuals under grid
//! quadrature; they vanish to discretization order on genuine roots and are
//! O(1) on states that do not solve the system, so the pair doubles as an
//! independent audit of any claimed steady state.
//!
//! A single pack occupying the cell `(0, a)` against a wall of its
//! competitor is described by the half-domain system
//!
//! ```text
//! −d w″ = (−ω + k u) w,   −D u″ = (λ − μ u − k w) u,
//! w(0) = 0,  w′(a) = 0,  u′(0) = u′(a) = 0,
//! ```
//!
//! solved by [`solve_half_system_1d`] with an antireflection ghost for the
//! Dirichlet end. Reflecting the root evenly about the Neumann end
//! ([`reflect_even`]) produces the interior pack cell on `(0, 2a)`; because
//! the reflection is a mirror symmetry of the stencil, the reflected state
//! satisfies the pack-cell equations ([`pack_cell_residual_sup`], Dirichlet
//! walls for the predator, no-flux walls for the prey) to round-off, not
//! merely to discretization order.
//!
//! [`optimize_packs`] searches pack counts directly: for each candidate
//! count `N ≤ n_max` and each competition strength `β` it seeds `N`
//! equal-measure blocks at the single-predator amplitude, relaxes them with
//! the stiff time stepper until the motion stalls, polishes with Newton, and
//! reports the population of every candidate together with the physical
//! argmax. Components that end below [`ZERO_COMPONENT_TOL`] in sup norm mark
//! a candidate that collapsed to a lower effective pack count, which is how
//! the bound `N̄` manifests on floating-point data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::equilibria::{
    simple_point, steady_newton, steady_newton_problem, ComponentBc, NewtonConfig, NewtonResult,
    SteadyProblem,
};
use crate::error::{Error, Result};
use crate::evolve::{Stepper, SystemState};
use crate::grid::{build_grid, inner_product, integrate, neumann_spectrum, Field, Grid, Spectrum, SpectrumMethod};
use crate::model::ModelParams;

/// Sup norm below which a predator component counts as extinct when pack
/// candidates are reclassified to a lower effective pack count.
pub const ZERO_COMPONENT_TOL: f64 = 1e-6;

/// Relaxation stops early once the sup-norm change per unit time drops
/// below this rate; the Newton polish then certifies steadiness.
pub const STEADY_RATE_TOL: f64 = 1e-6;

/// Pseudo-time horizon of the attractor-selection phase. Block seeds
/// segregate, doomed packs die, and symmetric saddles are escaped well
/// within this window for the rate scales the optimizer targets; the
/// Newton polish finishes the remaining approach to the root.
const RELAX_T_PHASE: f64 = 300.0;

/// Hard cap on relaxation steps per cell (guards against step-size collapse).
const RELAX_MAX_STEPS: usize = 400_000;

/// Step cap resolving the predator–prey oscillation. The spatially constant
/// spiral mode (frequency ≈ √(k²w̄ū), damping μū/2) is untouched by the
/// implicit diffusion stage, and the explicit reaction stage amplifies it
/// unless `dt · frequency² < 2 · damping`; 5e−3 keeps every template this
/// module sweeps inside that limit with margin (and bounds the neutral
/// μ = 0 drift to a factor ≈ e^{t/400} over the phase horizon).
const OSC_DT_CAP: f64 = 5e-3;

/// Relative amplitude of the deterministic roughness added to block seeds.
/// Exactly symmetric seeds can ride a mirror-invariant manifold into an
/// unstable saddle and stall there; sub-percent roughness breaks the tie
/// without moving the seed off the intended block structure.
const SEED_ROUGHNESS: f64 = 1e-3;

/// Pack-count bound report: the spectral budget and both eigenvalue counts.
#[derive(Debug, Clone, Serialize)]
pub struct PackBoundReport {
    /// Spectral budget `γ̄ = max_i (λk_i − μω_i)/(d_i μ)`.
    pub gamma_bar: f64,
    /// Eigenvalues strictly below `γ̄`, counted with multiplicity and
    /// including the constant mode, so the count is ≥ 1 whenever `γ̄ > 0`.
    pub n_bar_exact: usize,
    /// Weyl principal term `ω_n/(2π)^n · |Ω| · γ̄^{n/2}`.
    pub n_bar_weyl: f64,
    /// Unit-ball volume `ω_n` of the domain dimension (2 in 1D, π in 2D).
    pub unit_ball_volume: f64,
}

/// One optimizer cell: a pack count, a competition strength, and what became
/// of the seeded blocks.
#[derive(Debug, Clone, Serialize)]
pub struct PackCandidate {
    /// Number of predator blocks seeded.
    pub n_packs: usize,
    /// Competition strength of this cell.
    pub beta: f64,
    /// Population `P = ∫ Σ wᵢ` of the relaxed state.
    pub population: f64,
    /// True when every component of the final state is non-negative.
    pub physical: bool,
    /// True when the Newton polish of the relaxed state met its tolerance,
    /// certifying a genuine steady state.
    pub converged: bool,
    /// Final stationary residual sup norm (`NaN` when the polish failed).
    pub residual_sup: f64,
    /// Predator components with sup norm above [`ZERO_COMPONENT_TOL`]; a
    /// count below `n_packs` means the candidate collapsed to a lower
    /// effective pack count.
    pub positive_components: usize,
    /// The relaxed (and, when converged, polished) state.
    #[serde(skip)]
    pub state: SystemState,
}

/// Outcome of an [`optimize_packs`] sweep.
#[derive(Debug, Clone, Serialize)]
pub struct OptimReport {
    /// One entry per `(N, β)` cell, `N` outer and ascending, `β` inner in
    /// the order given.
    pub candidates: Vec<PackCandidate>,
    /// Index of the maximal-population candidate among physical, converged
    /// ones; `None` when no cell qualifies.
    pub best: Option<usize>,
    /// Mass-identity residual pair of the best candidate when the template
    /// has `μ = 0` (the identities do not apply otherwise).
    pub identity_residuals: Option<(f64, f64)>,
}

/// Evaluates the spectral budget `γ̄` and both pack-count estimates.
///
/// The exact count indexes eigenvalues from the constant mode (`γ₁ = 0`)
/// and counts multiplicity, so `n_bar_exact ≥ 1` whenever `γ̄ > 0`. The
/// provided spectrum must reach `γ̄`, otherwise the count would silently
/// truncate and the call fails with [`Error::Spectrum`] instead.
pub fn pack_bound(params: &ModelParams, spectrum: &Spectrum, domain: &Grid) -> Result<PackBoundReport> {
    params.validate()?;
    if params.mu <= 0.0 {
        return Err(Error::param("the spectral budget γ̄ = max_i (λk_i − μω_i)/(d_i μ) needs μ > 0"));
    }
    let hypotheses = params.check_hypotheses();
    if !hypotheses.viable.iter().any(|&v| v) {
        return Err(Error::param("no predator has a positive margin λk_i − μω_i; the pack bound is void"));
    }
    let gamma_bar = (0..params.n_predators)
        .map(|i| hypotheses.margins[i] / (params.d[i] * params.mu))
        .fold(f64::NEG_INFINITY, f64::max);
    let reach = spectrum.eigenvalues().last().copied().unwrap_or(f64::NEG_INFINITY);
    if reach < gamma_bar {
        return Err(Error::Spectrum {
            message: format!(
                "spectrum reaches only γ = {reach:.6e} < γ̄ = {gamma_bar:.6e}; request more modes"
            ),
        });
    }
    let n_bar_exact = spectrum.eigenvalues().iter().take_while(|&&g| g < gamma_bar).count();
    let dim = domain.dim();
    let unit_ball_volume = match dim {
        1 => 2.0,
        2 => std::f64::consts::PI,
        _ => return Err(Error::dimension(format!("pack bounds cover 1 or 2 dimensions, got {dim}"))),
    };
    let n_bar_weyl = unit_ball_volume / (2.0 * std::f64::consts::PI).powi(dim as i32)
        * domain.measure()
        * gamma_bar.powf(dim as f64 / 2.0);
    Ok(PackBoundReport { gamma_bar, n_bar_exact, n_bar_weyl, unit_ball_volume })
}

/// Total predator population `P = ∫_Ω Σ w_i` under midpoint quadrature.
///
/// The last component (the prey) is excluded. The state is taken at face
/// value; callers gate on physicality themselves.
pub fn population(grid: &Grid, state: &SystemState) -> f64 {
    debug_assert_eq!(state.grid, *grid);
    let n = state.fields.len().saturating_sub(1);
    state.fields[..n].iter().map(|w| integrate(grid, w)).sum()
}

/// Evaluates both `μ = 0` mass-identity residuals (left minus right).
///
/// Requires identical predators (`k_i ≡ k`, `ω_i ≡ ω`) and a strictly
/// positive prey, since the derivation divides the prey equation by `u`.
/// `∇ log u` uses central differences on interior nodes and one-sided
/// second-order stencils at the boundary nodes. Residuals are O(h²) on
/// genuine steady states and O(1) otherwise.
pub fn verify_identities_mu0(grid: &Grid, params: &ModelParams, state: &SystemState) -> Result<(f64, f64)> {
    params.validate()?;
    if params.mu != 0.0 {
        return Err(Error::param("the mass identities hold only for the idealized μ = 0 system"));
    }
    let k = params.kpred[0];
    let omega = params.omega[0];
    if params.kpred.iter().any(|&v| v != k) || params.omega.iter().any(|&v| v != omega) {
        return Err(Error::param("the mass identities assume identical predators (equal k_i and equal ω_i)"));
    }
    if state.fields.len() != params.ncomp() {
        return Err(Error::ShapeMismatch { expected: params.ncomp(), got: state.fields.len() });
    }
    if state.grid != *grid {
        return Err(Error::grid("state grid differs from the quadrature grid".to_string()));
    }
    let u = state.fields.last().expect("states carry at least two components");
    let u_min = u.min_value();
    if u_min <= 0.0 {
        return Err(Error::domain(format!(
            "∇ log u needs a strictly positive prey; min u = {u_min:.6e}"
        )));
    }
    let log_grad_sq = log_gradient_sq_integral(grid, u);
    let volume = grid.measure();
    let total_w = population(grid, state);
    let residual_mass = total_w - params.lambda / k * volume - params.dprey / k * log_grad_sq;
    let n = params.n_predators;
    let mut cross = 0.0;
    for i in 0..n {
        for j in 0..n {
            if j != i && params.a[i][j] != 0.0 {
                cross += params.a[i][j] * inner_product(grid, &state.fields[i], &state.fields[j]);
            }
        }
    }
    let mut self_sq = 0.0;
    for i in 0..n {
        if params.mu_self[i] != 0.0 {
            self_sq += params.mu_self[i] * inner_product(grid, &state.fields[i], &state.fields[i]);
        }
    }
    let residual_prey = integrate(grid, u)
        - omega / k * volume
        - self_sq / params.lambda
        - params.beta / params.lambda * cross
        - omega * params.dprey / (k * params.lambda) * log_grad_sq;
    Ok((residual_mass, residual_prey))
}

/// Second-order one-sided/central first derivative of `values` at index `i`.
fn stencil_derivative(values: &[f64], stride: usize, count: usize, i: usize, h: f64) -> f64 {
    let at = |j: usize| values[j * stride];
    match count {
        0 | 1 => 0.0,
        2 => (at(1) - at(0)) / h,
        _ if i == 0 => (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h),
        _ if i + 1 == count => (3.0 * at(count - 1) - 4.0 * at(count - 2) + at(count - 3)) / (2.0 * h),
        _ => (at(i + 1) - at(i - 1)) / (2.0 * h),
    }
}

/// `∫ |∇ log u|²` under midpoint quadrature with per-axis difference
/// stencils (central inside, one-sided second order at the walls).
fn log_gradient_sq_integral(grid: &Grid, u: &Field) -> f64 {
    let logs: Vec<f64> = u.as_slice().iter().map(|&v| v.ln()).collect();
    let nx = grid.n_cells()[0];
    let hx = grid.spacing()[0];
    let mut sq = vec![0.0; logs.len()];
    if grid.dim() == 1 {
        for ix in 0..nx {
            let d = stencil_derivative(&logs, 1, nx, ix, hx);
            sq[ix] += d * d;
        }
    } else {
        let ny = grid.n_cells()[1];
        let hy = grid.spacing()[1];
        for iy in 0..ny {
            let row = &logs[iy * nx..(iy + 1) * nx];
            for ix in 0..nx {
                let d = stencil_derivative(row, 1, nx, ix, hx);
                sq[iy * nx + ix] += d * d;
            }
        }
        for ix in 0..nx {
            let column = &logs[ix..];
            for iy in 0..ny {
                let d = stencil_derivative(column, nx, ny, iy, hy);
                sq[iy * nx + ix] += d * d;
            }
        }
    }
    sq.iter().sum::<f64>() * grid.cell_volume()
}

/// Newton solve of the single-predator half-domain system on `(0, a)`:
/// Dirichlet for the predator at the left end (antireflection ghost),
/// no-flux everywhere else.
///
/// A converged positive root is one half of a two-pack segregated state;
/// [`reflect_even`] produces the full pack cell from it.
pub fn solve_half_system_1d(params: &ModelParams, a: f64, guess: &SystemState) -> Result<NewtonResult> {
    params.validate()?;
    if params.n_predators != 1 {
        return Err(Error::param(format!(
            "the half-domain system has exactly one predator, got n_predators = {}",
            params.n_predators
        )));
    }
    let grid = &guess.grid;
    if grid.dim() != 1 {
        return Err(Error::dimension("the half-domain system is one-dimensional".to_string()));
    }
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::param(format!("half-domain length must be positive, got {a}")));
    }
    let (x0, x1) = grid.extents()[0];
    if ((x1 - x0) - a).abs() > 1e-12 * a.max(1.0) {
        return Err(Error::param(format!(
            "guess grid spans a length-{:.6} interval, expected the half-domain length a = {a:.6}",
            x1 - x0
        )));
    }
    let problem = SteadyProblem::new(params, grid, vec![ComponentBc::DirichletLeft, ComponentBc::Neumann])?;
    steady_newton_problem(&problem, guess, &NewtonConfig::default())
}

/// Even reflection of a 1D state about its right end: `(x₀, x₁)` with `n`
/// cells becomes `(x₀, 2x₁ − x₀)` with `2n` cells and mirrored values.
///
/// Cell-centered grids mirror exactly (node `2n−1−j` is the image of node
/// `j`), so the reflection loses nothing to interpolation.
pub fn reflect_even(state: &SystemState) -> Result<SystemState> {
    let grid = &state.grid;
    if grid.dim() != 1 {
        return Err(Error::dimension("even reflection is implemented for one-dimensional states".to_string()));
    }
    let n = grid.n_cells()[0];
    let (x0, x1) = grid.extents()[0];
    let full = build_grid(&[(x0, x1 + (x1 - x0))], &[2 * n])?;
    let mut fields = Vec::with_capacity(state.fields.len());
    for f in &state.fields {
        let src = f.as_slice();
        let mut vals = Vec::with_capacity(2 * n);
        vals.extend_from_slice(src);
        vals.extend(src.iter().rev());
        fields.push(Field::from_values(&full, vals)?);
    }
    SystemState::from_fields(state.t, &full, fields)
}

/// Sup norm of the steady residual of a 1D pack cell: predators vanish at
/// both walls (antireflection ghosts), the prey satisfies no-flux walls.
///
/// This is the stencil an interior pack of a segregated pattern satisfies;
/// the even reflection of a half-domain root meets it to round-off because
/// mirrored neighbors reproduce both ghost conventions exactly.
pub fn pack_cell_residual_sup(params: &ModelParams, state: &SystemState) -> Result<f64> {
    params.validate()?;
    let grid = &state.grid;
    if grid.dim() != 1 {
        return Err(Error::dimension("pack cells are one-dimensional".to_string()));
    }
    let ncomp = params.ncomp();
    if state.fields.len() != ncomp {
        return Err(Error::ShapeMismatch { expected: ncomp, got: state.fields.len() });
    }
    let n = grid.n_cells()[0];
    let h = grid.spacing()[0];
    let npred = params.n_predators;
    let mut point = vec![0.0; ncomp];
    let mut reaction = vec![0.0; ncomp];
    let mut sup = 0.0_f64;
    for i in 0..n {
        for (c, f) in state.fields.iter().enumerate() {
            point[c] = f.as_slice()[i];
        }
        params.reaction(&point, &mut reaction);
        for (c, f) in state.fields.iter().enumerate() {
            let v = f.as_slice();
            let center = v[i];
            let dirichlet = c < npred;
            let left = if i > 0 {
                v[i - 1]
            } else if dirichlet {
                -center
            } else {
                center
            };
            let right = if i + 1 < n {
                v[i + 1]
            } else if dirichlet {
                -center
            } else {
                center
            };
            let diffusivity = if c < npred { params.d[c] } else { params.dprey };
            let r = diffusivity * (left - 2.0 * center + right) / (h * h) + reaction[c];
            sup = sup.max(r.abs());
        }
    }
    Ok(sup)
}

/// `params` with `n` identical predators copied from the template's first
/// predator and all-ones off-diagonal competition.
fn replicate_predators(template: &ModelParams, n: usize, beta: f64) -> ModelParams {
    let mut a = vec![vec![1.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    ModelParams {
        lambda: template.lambda,
        mu: template.mu,
        n_predators: n,
        omega: vec![template.omega[0]; n],
        kpred: vec![template.kpred[0]; n],
        mu_self: vec![template.mu_self[0]; n],
        d: vec![template.d[0]; n],
        dprey: template.dprey,
        beta,
        a,
    }
}

/// Cosine ramp from 0 at `s ≤ 0` to 1 at `s ≥ 1`.
fn ramp_profile(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        0.5 * (1.0 - (std::f64::consts::PI * s).cos())
    }
}

/// `n` equal-measure blocks along the first axis, each carrying one predator
/// at the single-predator amplitude over a balanced prey.
///
/// Block interiors sit exactly on the single-predator equilibrium, so the
/// only motion the seed excites is local to the seams; those are smoothed
/// by cosine ramps (an eighth of a block, at least two cells) because hard
/// seams superpose both competitors at full amplitude and the resulting
/// `β w_i w_j` spike kicks the whole domain into the weakly damped
/// predator–prey oscillation instead of segregating. Deterministic
/// sub-percent roughness breaks mirror ties between blocks.
fn block_seed(params: &ModelParams, grid: &Grid, rng_seed: u64) -> Result<SystemState> {
    let n = params.n_predators;
    let resident = simple_point(params, 0)?;
    let amplitude = resident.w[0];
    let nx = grid.n_cells()[0];
    let (x0, x1) = grid.extents()[0];
    let block = (x1 - x0) / n as f64;
    let ramp = (block / 8.0).max(2.0 * grid.spacing()[0]);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut fields = Vec::with_capacity(n + 1);
    for i in 0..n {
        let lo = x0 + i as f64 * block;
        let hi = lo + block;
        let mut vals = vec![0.0; grid.node_count()];
        for (idx, v) in vals.iter_mut().enumerate() {
            let x = grid.coord(0, idx % nx);
            let mut shape = 1.0_f64;
            if i > 0 {
                shape = shape.min(ramp_profile((x - lo) / ramp));
            }
            if i + 1 < n {
                shape = shape.min(ramp_profile((hi - x) / ramp));
            }
            if shape > 0.0 {
                *v = amplitude * shape * (1.0 + SEED_ROUGHNESS * rng.gen_range(-1.0..1.0));
            }
        }
        fields.push(Field::from_values(grid, vals)?);
    }
    fields.push(Field::constant(grid, resident.u));
    SystemState::from_fields(0.0, grid, fields)
}

/// Relaxation step-size cap adapted to the current reaction stiffness: the
/// explicit reaction stage must resolve decay rates of order
/// `λ + (k + β max a) · sup(state)` and the constant-mode oscillation
/// ([`OSC_DT_CAP`]); the stepper's positivity retries absorb the rest.
fn relaxation_dt_cap(params: &ModelParams, state: &SystemState) -> f64 {
    let sup = state.sups().into_iter().fold(0.0_f64, f64::max);
    let a_max = params.a.iter().flatten().fold(0.0_f64, |m, &v| m.max(v));
    let k_max = params.kpred.iter().fold(0.0_f64, |m, &v| m.max(v));
    let rate = params.lambda + (k_max + params.beta * a_max) * sup.max(1e-12);
    (1.0 / rate).min(OSC_DT_CAP)
}

/// Relax one `(N, β)` cell: block seed → stiff time stepping over the
/// attractor-selection phase → Newton polish. The dynamics phase decides
/// *which* state wins (doomed packs die, saddles are escaped); the polish
/// certifies it. Solver failures downgrade the candidate to non-converged
/// instead of aborting the sweep.
fn relax_cell(params: &ModelParams, grid: &Grid, n_packs: usize, rng_seed: u64) -> Result<PackCandidate> {
    let stepper = Stepper::new(params, grid)?;
    let mut state = block_seed(params, grid, rng_seed)?;
    let h_min = grid.spacing().iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let mut dt = 0.25 * h_min * h_min / params.max_diffusivity();
    for _ in 0..RELAX_MAX_STEPS {
        if state.t >= RELAX_T_PHASE {
            break;
        }
        let cap = relaxation_dt_cap(params, &state);
        dt = dt.min(cap);
        match stepper.step(&state, dt) {
            Ok((next, used)) => {
                let rate = next.sup_distance(&state) / used;
                state = next;
                dt = (used * 1.25).min(cap);
                if rate <= STEADY_RATE_TOL {
                    break;
                }
            }
            Err(_) => break,
        }
    }
    let (state, converged, residual_sup) = match steady_newton(params, &state, &NewtonConfig::default()) {
        Ok(result) => (result.state, result.converged, result.residual_sup),
        Err(_) => (state, false, f64::NAN),
    };
    let positive_components =
        state.fields[..n_packs].iter().filter(|f| f.sup_norm() > ZERO_COMPONENT_TOL).count();
    Ok(PackCandidate {
        n_packs,
        beta: params.beta,
        population: population(grid, &state),
        physical: state.is_physical(),
        converged,
        residual_sup,
        positive_components,
        state,
    })
}

/// Ascending Neumann spectrum extended until it reaches `target`.
fn spectrum_reaching(grid: &Grid, target: f64) -> Result<Spectrum> {
    let cap: usize = grid.n_cells().iter().product();
    let mut m = 8_usize.min(cap);
    loop {
        let spectrum = neumann_spectrum(grid, m, SpectrumMethod::Analytic)?;
        if spectrum.eigenvalues().last().copied().unwrap_or(f64::NEG_INFINITY) >= target {
            return Ok(spectrum);
        }
        if m == cap {
            return Err(Error::Spectrum {
                message: format!("the grid resolves only {cap} modes and none reaches γ̄ = {target:.3e}"),
            });
        }
        m = (m * 2).min(cap);
    }
}

/// Sweeps pack counts `1..=n_max` against `beta_grid`, relaxing block seeds
/// to steady states and reporting every candidate with the physical argmax
/// of the population.
///
/// The predator template is the first predator of `params_template`,
/// replicated identically; `n_max` may exceed the spectral bound by at most
/// one (the probe that demonstrates the bound). Cells run in parallel and
/// solver failures surface as non-converged candidates, not errors.
pub fn optimize_packs(
    params_template: &ModelParams,
    grid: &Grid,
    n_max: usize,
    beta_grid: &[f64],
) -> Result<OptimReport> {
    params_template.validate()?;
    if n_max == 0 {
        return Err(Error::param("n_max must be at least 1"));
    }
    if beta_grid.is_empty() {
        return Err(Error::param("beta_grid must contain at least one competition strength"));
    }
    for &beta in beta_grid {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::param(format!("beta_grid entries must be non-negative, got {beta}")));
        }
    }
    let single = replicate_predators(params_template, 1, beta_grid[0]);
    if !single.check_hypotheses().all_viable {
        return Err(Error::param("template predator has no positive margin λk − μω"));
    }
    // Saturated prey caps the admissible pack count; the sweep may exceed
    // that bound by at most one (the probe that demonstrates it). The
    // unsaturated μ = 0 budget is infinite, so any n_max is admissible.
    if single.mu > 0.0 {
        let gamma_bar = single.check_hypotheses().margins[0] / (single.d[0] * single.mu);
        let bound = pack_bound(&single, &spectrum_reaching(grid, gamma_bar)?, grid)?;
        if n_max > bound.n_bar_exact + 1 {
            return Err(Error::param(format!(
                "n_max = {n_max} exceeds the probe range N̄ + 1 = {}",
                bound.n_bar_exact + 1
            )));
        }
    }
    let cells: Vec<(usize, f64, u64)> = (1..=n_max)
        .flat_map(|n| {
            beta_grid
                .iter()
                .enumerate()
                .map(move |(j, &beta)| (n, beta, (n as u64) << 32 | j as u64))
        })
        .collect();
    let candidates: Vec<PackCandidate> = cells
        .par_iter()
        .map(|&(n, beta, rng_seed)| relax_cell(&replicate_predators(params_template, n, beta), grid, n, rng_seed))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        if c.physical && c.converged && best.map_or(true, |b| c.population > candidates[b].population) {
            best = Some(i);
        }
    }
    let identity_residuals = match best {
        Some(i) if params_template.mu == 0.0 => {
            let c = &candidates[i];
            verify_identities_mu0(grid, &replicate_predators(params_template, c.n_packs, c.beta), &c.state).ok()
        }
        _ => None,
    };
    Ok(OptimReport { candidates, best, identity_residuals })
}
