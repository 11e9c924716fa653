//! Bifurcation from the symmetric coexistence branch and pseudo-arclength
//! continuation of the non-constant solution branches in β.
//!
//! ## Critical values
//!
//! Along the symmetric two-predator coexistence branch the linearization
//! loses stability to the antisymmetric direction `(ψ_n, −ψ_n, 0)` — `ψ_n`
//! the `n`-th Neumann eigenfunction — exactly where
//!
//! ```text
//! γ(β) = m(aβ − μ_s) / (d(aβμ + 2k² + μμ_s)) = γ_n,     m = λk − μω,
//! ```
//!
//! i.e. at `β_n = (γ_n d(2k² + μμ_s) + μ_s m)/(a(m − γ_n dμ))`. In the
//! reduced setting (`d = a = 1`, `μ_s = 0`) this is the defining relation
//! `β_n m/(μβ_n + 2k²) = γ_n`. Only modes with `γ_n < m/(dμ)` ever
//! destabilize; [`bifurcation_points`] enumerates exactly those, attaching
//! each eigenvalue's multiplicity (odd multiplicity is what the branch
//! theory requires — even-multiplicity points are reported but cannot be
//! switched).
//!
//! ## Switching and continuation
//!
//! [`branch_switch`] seeds a solver guess just past the critical value:
//! the coexistence constant at `β_n(1 + δ)` plus `eps·(ψ_n, −ψ_n, 0)`.
//! The β-offset keeps the steady Jacobian away from its exact kernel at
//! the bifurcation point.
//!
//! The seed cannot simply be handed to plain Newton: the symmetric
//! constant is itself an exact root whose attraction basin swallows any
//! small perturbation (the branch amplitude at the default offsets is an
//! order of magnitude larger than the seed amplitude). [`polish_seed`]
//! therefore locks the component along the seed offset with an arclength
//! constraint and lets β float — the constant violates the constraint, so
//! the corrector lands on the bifurcating branch at the prescribed
//! amplitude.
//!
//! [`continue_branch`] then tracks the branch by pseudo-arclength: secant
//! predictor, Newton corrector on the bordered system (stationary residual
//! plus the arclength constraint, solved by block elimination with two
//! banded solves per iteration), and step-size adaptation targeting 3–5
//! corrector iterations. Runs terminate
//! [`Termination::UnboundedInBeta`] at the β cap (default 500),
//! [`Termination::Reconnected`] when the iterate falls within `1e−6`
//! (L²) of the symmetric constant at the current β, or
//! [`Termination::StepLimit`].
//!
//! ## The zero-count invariant
//!
//! In one dimension the difference `V = w₁ − w₂` of a branch solution has a
//! fixed number of sign changes — the mode index it bifurcated from — all
//! along the branch. [`zero_count`] measures it (ignoring near-zero nodes
//! below `1e−8·‖V‖_∞`), and every accepted branch point records it.

use serde::Serialize;

use crate::equilibria::{self, coexist_symmetric_point, ComponentBc, SteadyProblem};
use crate::error::{Error, Result};
use crate::evolve::SystemState;
use crate::grid::{neumann_spectrum, Grid, Spectrum, SpectrumMethod};
use crate::model::ModelParams;

/// Default relative β-offset of the branch-switch seed.
pub const SWITCH_BETA_OFFSET: f64 = 1e-2;
/// L² distance to the symmetric constant below which a branch counts as
/// reconnected.
pub const RECONNECT_TOL: f64 = 1e-6;
/// Every accepted branch point must satisfy the stationary residual below
/// this sup-norm bound.
pub const BRANCH_RESIDUAL_TOL: f64 = 1e-8;
/// Absolute tolerance at which the threshold denominator `m − γdμ` counts
/// as vanished (resonant mode).
pub const RESONANCE_TOL: f64 = 1e-10;
/// Amplitude below which hitting the β cap is not reported as genuine
/// unboundedness.
const UNBOUNDED_AMPLITUDE_FLOOR: f64 = 1e-3;
/// Relative cutoff for ignoring near-zero nodes in sign-change counting.
const ZERO_COUNT_CUTOFF: f64 = 1e-8;

/// A critical competition strength on the symmetric coexistence branch.
#[derive(Debug, Clone, Serialize)]
pub struct BifurcationPoint {
    /// Mode ordinal `n ≥ 1` (position among distinct eigenvalues,
    /// ascending; 0 is the constant mode).
    pub n: usize,
    /// Neumann eigenvalue `γ_n`.
    pub gamma_n: f64,
    /// Critical strength `β_n`.
    pub beta_n: f64,
    /// Multiplicity of `γ_n` in the provided spectrum.
    pub multiplicity: usize,
    /// Odd multiplicity — the precondition for branch switching.
    pub odd: bool,
}

/// The eigenvalue `γ(β)` destabilized at strength β (inverse of the
/// `β_n` closed form).
pub fn gamma_of_beta(params: &ModelParams, beta: f64) -> Result<f64> {
    let (k, m, a, d, mu_s) = symmetric_pair_data(params)?;
    Ok(m * (a * beta - mu_s) / (d * (a * beta * params.mu + 2.0 * k * k + params.mu * mu_s)))
}

fn symmetric_pair_data(params: &ModelParams) -> Result<(f64, f64, f64, f64, f64)> {
    params.validate()?;
    if !params.is_symmetric_pair() {
        return Err(Error::param("bifurcation analysis requires the symmetric two-predator configuration"));
    }
    let a = params.a[0][1];
    if a <= 0.0 {
        return Err(Error::param("bifurcation analysis requires coupled predators (a_12 = a_21 > 0)"));
    }
    let k = params.kpred[0];
    let m = params.lambda * k - params.mu * params.omega[0];
    if m <= 0.0 {
        return Err(Error::param(format!("predators are not viable (margin {m} ≤ 0)")));
    }
    Ok((k, m, a, params.d[0], params.mu_self[0]))
}

fn beta_of_gamma(params: &ModelParams, gamma: f64) -> Result<Option<f64>> {
    let (k, m, a, d, mu_s) = symmetric_pair_data(params)?;
    let denom = m - gamma * d * params.mu;
    if denom.abs() <= RESONANCE_TOL {
        return Err(Error::Resonance { mode: 0, denominator: denom });
    }
    if denom < 0.0 {
        return Ok(None); // mode never destabilizes
    }
    Ok(Some((gamma * d * (2.0 * k * k + params.mu * mu_s) + mu_s * m) / (a * denom)))
}

/// All critical values `β_n` admitted by the spectrum: one per distinct
/// nonzero eigenvalue with `γ_n < m/(dμ)`, ascending. An eigenvalue at the
/// threshold itself (denominator within `1e−10` of zero) is a
/// [`Error::Resonance`]; eigenvalues beyond it simply end the list.
pub fn bifurcation_points(params: &ModelParams, spectrum: &Spectrum) -> Result<Vec<BifurcationPoint>> {
    let groups = spectrum.grouped();
    if groups.is_empty() || groups[0].eigenvalue.abs() > 1e-12 {
        return Err(Error::Spectrum { message: "spectrum must start at the constant (zero) mode".to_string() });
    }
    let mut out = Vec::new();
    for (n, g) in groups.iter().enumerate().skip(1) {
        match beta_of_gamma(params, g.eigenvalue) {
            Ok(Some(beta)) => out.push(BifurcationPoint {
                n,
                gamma_n: g.eigenvalue,
                beta_n: beta,
                multiplicity: g.multiplicity,
                odd: g.multiplicity % 2 == 1,
            }),
            Ok(None) => break,
            Err(Error::Resonance { denominator, .. }) => {
                return Err(Error::Resonance { mode: n, denominator })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// A branch-switch seed: solver guess plus the β it is valid at.
#[derive(Debug, Clone)]
pub struct BranchSeed {
    /// Coexistence constant at `beta` perturbed along `(ψ_n, −ψ_n, 0)`.
    pub state: SystemState,
    /// `β_n(1 + δ)`.
    pub beta: f64,
}

/// Seed a solver guess on the branch emanating at `bp`: the symmetric
/// constant at `β_n(1 + delta)` plus `eps·(ψ_n, −ψ_n, 0)` with `ψ_n` the
/// L²-normalized eigenfunction sampled on `grid`.
///
/// `eps = 0` degenerates to the constant itself; negative `eps` seeds the
/// mirror branch. Even-multiplicity points carry no single distinguished
/// direction and are rejected.
pub fn branch_switch_with(
    params: &ModelParams,
    grid: &Grid,
    bp: &BifurcationPoint,
    eps: f64,
    delta: f64,
) -> Result<BranchSeed> {
    symmetric_pair_data(params)?;
    if !bp.odd {
        return Err(Error::param(format!(
            "mode {} has even multiplicity {}; no branch-switch direction is distinguished",
            bp.n, bp.multiplicity
        )));
    }
    let beta = bp.beta_n * (1.0 + delta);
    let mut at = params.clone();
    at.beta = beta;
    let point = coexist_symmetric_point(&at)?;
    let psi = mode_field(grid, bp.n, bp.gamma_n)?;
    let mut state = SystemState::constant(grid, &point);
    for (i, &m) in psi.iter().enumerate() {
        state.fields[0].as_mut_slice()[i] += eps * m;
        state.fields[1].as_mut_slice()[i] -= eps * m;
    }
    Ok(BranchSeed { state, beta })
}

/// [`branch_switch_with`] at the default β-offset `δ = 1e−2`.
pub fn branch_switch(params: &ModelParams, grid: &Grid, bp: &BifurcationPoint, eps: f64) -> Result<BranchSeed> {
    branch_switch_with(params, grid, bp, eps, SWITCH_BETA_OFFSET)
}

/// Nodal values of the first eigenfunction in distinct-eigenvalue group
/// `n` on `grid`, matched against `gamma` as a consistency check.
fn mode_field(grid: &Grid, n: usize, gamma: f64) -> Result<Vec<f64>> {
    let mut m = (4 * (n + 1)).min(grid.node_count());
    loop {
        let spec = neumann_spectrum(grid, m, SpectrumMethod::Analytic)?;
        let groups = spec.grouped();
        if groups.len() > n {
            let g = &groups[n];
            if (g.eigenvalue - gamma).abs() > 1e-6 * (1.0 + gamma) {
                return Err(Error::Spectrum {
                    message: format!(
                        "grid mode {n} has eigenvalue {}, bifurcation point expects {gamma}",
                        g.eigenvalue
                    ),
                });
            }
            return Ok(spec.mode(g.index).as_slice().to_vec());
        }
        if m >= grid.node_count() {
            return Err(Error::Spectrum {
                message: format!("grid resolves only {} distinct modes, need {}", groups.len(), n + 1),
            });
        }
        m = (m * 2).min(grid.node_count());
    }
}

/// Sign changes of `V = w₁ − w₂` across adjacent nodes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ZeroCount {
    /// Number of sign changes among retained nodes.
    pub count: usize,
    /// True when `V` vanishes identically (no sign information).
    pub degenerate: bool,
}

/// Count the sign changes of `V = w₁ − w₂` on a one-dimensional grid,
/// ignoring nodes with `|V| < 1e−8·‖V‖_∞`.
pub fn zero_count(state: &SystemState) -> Result<ZeroCount> {
    if state.grid.dim() != 1 {
        return Err(Error::dimension("zero counting is defined on one-dimensional grids only".to_string()));
    }
    if state.n_predators() < 2 {
        return Err(Error::param("zero counting needs at least two predator components"));
    }
    let w0 = state.fields[0].as_slice();
    let w1 = state.fields[1].as_slice();
    let v: Vec<f64> = w0.iter().zip(w1).map(|(&a, &b)| a - b).collect();
    let vmax = v.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    if vmax == 0.0 {
        return Ok(ZeroCount { count: 0, degenerate: true });
    }
    let cutoff = ZERO_COUNT_CUTOFF * vmax;
    let mut count = 0;
    let mut last_sign = 0i8;
    for &x in &v {
        if x.abs() < cutoff {
            continue;
        }
        let sign = if x > 0.0 { 1 } else { -1 };
        if last_sign != 0 && sign != last_sign {
            count += 1;
        }
        last_sign = sign;
    }
    Ok(ZeroCount { count, degenerate: false })
}

/// Sup norm of `w₁ − w₂` (zero exactly on the symmetric branch).
pub fn branch_amplitude(state: &SystemState) -> f64 {
    if state.n_predators() < 2 {
        return 0.0;
    }
    state.fields[0]
        .as_slice()
        .iter()
        .zip(state.fields[1].as_slice())
        .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()))
}

/// One accepted continuation point.
#[derive(Debug, Clone)]
pub struct BranchPoint {
    /// Competition strength.
    pub beta: f64,
    /// The steady state.
    pub state: SystemState,
    /// Stationary residual sup norm.
    pub residual: f64,
    /// Sign changes of `w₁ − w₂` (0 on grids where it is undefined).
    pub zero_count: usize,
    /// `‖w₁ − w₂‖_∞`.
    pub amplitude: f64,
}

/// Why a continuation run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// β reached the cap with the amplitude bounded away from zero.
    UnboundedInBeta,
    /// Returned within `1e−6` (L²) of the symmetric constant; the payload
    /// is the mode ordinal whose critical β is nearest.
    Reconnected(usize),
    /// Step or retry budget exhausted (or β left the admissible range).
    StepLimit,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Termination::UnboundedInBeta => write!(f, "UNBOUNDED_IN_BETA"),
            Termination::Reconnected(m) => write!(f, "RECONNECTED({m})"),
            Termination::StepLimit => write!(f, "STEP_LIMIT"),
        }
    }
}

impl Serialize for Termination {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// A continued solution branch.
#[derive(Debug, Clone)]
pub struct Branch {
    /// The bifurcation point the branch emanates from.
    pub origin: BifurcationPoint,
    /// Accepted points in continuation order.
    pub points: Vec<BranchPoint>,
    /// Why the run stopped.
    pub termination: Termination,
}

/// Pseudo-arclength continuation controls.
#[derive(Debug, Clone)]
pub struct ContinuationConfig {
    /// Initial arclength step.
    pub ds_init: f64,
    /// Giving-up threshold for step halving.
    pub ds_min: f64,
    /// Step growth cap.
    pub ds_max: f64,
    /// β cap (default 500).
    pub beta_max: f64,
    /// Accepted-point budget.
    pub max_steps: usize,
    /// Corrector residual target (sup norm; also the constraint target).
    pub corrector_tol: f64,
    /// Corrector iteration budget per step.
    pub max_corrector_iter: usize,
    /// Predictor retries (step halvings) per step.
    pub max_retries: usize,
    /// Condition-estimate limit for the banded factorizations.
    pub cond_limit: f64,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        ContinuationConfig {
            ds_init: 1e-2,
            ds_min: 1e-9,
            ds_max: 5.0,
            beta_max: 500.0,
            max_steps: 5000,
            corrector_tol: 1e-10,
            max_corrector_iter: 10,
            max_retries: 30,
            cond_limit: 1e12,
        }
    }
}

/// Extended point (state, β) with the dof-scaled inner product
/// `⟨x, y⟩ = (v·v')/dof + ββ'` used for arclength bookkeeping.
#[derive(Clone)]
struct ExtPoint {
    v: Vec<f64>,
    beta: f64,
}

fn scaled_dot(av: &[f64], abeta: f64, bv: &[f64], bbeta: f64) -> f64 {
    let dot: f64 = av.iter().zip(bv).map(|(&x, &y)| x * y).sum();
    dot / av.len() as f64 + abeta * bbeta
}

/// Converges a [`branch_switch`] seed onto the bifurcating branch.
///
/// The symmetric constant is an exact stationary root at every β, and its
/// Newton basin swallows small seeds, so plain [`steady_newton`] collapses
/// them back onto the constant. This corrector instead solves the bordered
/// system with the arclength constraint locked along the seed offset: the
/// constant violates the constraint, so the iterate is forced onto the
/// branch at the seeded amplitude while β floats to the matching point on
/// the bifurcation curve. Returns the converged state and its β.
pub fn polish_seed(params: &ModelParams, seed: &BranchSeed) -> Result<(SystemState, f64)> {
    symmetric_pair_data(params)?;
    if !(seed.beta > 0.0) {
        return Err(Error::param(format!("seed β = {} must be positive", seed.beta)));
    }
    let grid = seed.state.grid.clone();
    let ncomp = params.ncomp();
    let mut at = params.clone();
    at.beta = seed.beta;
    let base_state = SystemState::constant(&grid, &coexist_symmetric_point(&at)?);
    let bv = base_state.pack();
    let sv = seed.state.pack();
    let dv: Vec<f64> = sv.iter().zip(&bv).map(|(&a, &b)| a - b).collect();
    let ds = scaled_dot(&dv, 0.0, &dv, 0.0).sqrt();
    if !(ds > 0.0) {
        return Err(Error::param("seed does not leave the symmetric branch (eps = 0)"));
    }
    let tangent = normalize(dv, 0.0, 1.0)?;
    let base = ExtPoint { v: bv, beta: seed.beta };
    let pred = ExtPoint { v: sv, beta: seed.beta };
    let config = ContinuationConfig::default();
    let mut cond = f64::NAN;
    let (x, _iters) = correct(params, &grid, ncomp, &base, &tangent, ds, pred, &config, &mut cond)?;
    let state = SystemState::unpack(&grid, ncomp, &x.v, 0.0)?;
    Ok((state, x.beta))
}

/// Continue the branch emanating from `origin`, starting from a
/// [`branch_switch`] seed (converged internally via [`polish_seed`]).
/// `direction = ±1` follows or reverses the outgoing secant from the
/// bifurcation point.
pub fn continue_branch(
    params_template: &ModelParams,
    origin: &BifurcationPoint,
    seed: &BranchSeed,
    direction: f64,
    config: &ContinuationConfig,
) -> Result<Branch> {
    symmetric_pair_data(params_template)?;
    if !(direction == 1.0 || direction == -1.0) {
        return Err(Error::param(format!("direction must be ±1, got {direction}")));
    }
    let grid = seed.state.grid.clone();
    let ncomp = params_template.ncomp();

    // Lock the seed onto the branch at its seeded amplitude.
    let (first_state, first_beta) = polish_seed(params_template, seed)?;
    let mut p_first = params_template.clone();
    p_first.beta = first_beta;
    let first_residual = equilibria::stationary_residual_sup(&p_first, &first_state)?;

    let make_point = |state: SystemState, beta: f64, residual: f64| -> Result<BranchPoint> {
        let zc = if state.grid.dim() == 1 { zero_count(&state)?.count } else { 0 };
        let amplitude = branch_amplitude(&state);
        Ok(BranchPoint { beta, state, residual, zero_count: zc, amplitude })
    };

    let mut points = vec![make_point(first_state.clone(), first_beta, first_residual)?];

    // Secant from the bifurcation-point constant to the first branch point;
    // the opening step size matches the seed arclength so the entry region
    // (where the branch curves strongly) is resolved.
    let mut at_origin = params_template.clone();
    at_origin.beta = origin.beta_n;
    let origin_state = SystemState::constant(&grid, &coexist_symmetric_point(&at_origin)?);
    let mut x_curr = ExtPoint { v: first_state.pack(), beta: first_beta };
    let ov = origin_state.pack();
    let dv: Vec<f64> = x_curr.v.iter().zip(&ov).map(|(&a, &b)| a - b).collect();
    let dbeta = x_curr.beta - origin.beta_n;
    let ds_seed = scaled_dot(&dv, dbeta, &dv, dbeta).sqrt();
    let mut tangent = normalize(dv, dbeta, direction)?;

    let mut ds = ds_seed.clamp(config.ds_min, config.ds_init);
    let mut termination = None;
    let mut last_condition = f64::NAN;

    while points.len() < config.max_steps {
        // Predict, correct; halve ds on failure.
        let mut accepted: Option<(ExtPoint, usize)> = None;
        for _retry in 0..=config.max_retries {
            let pred = ExtPoint {
                v: x_curr.v.iter().zip(&tangent.0).map(|(&x, &t)| x + ds * t).collect(),
                beta: x_curr.beta + ds * tangent.1,
            };
            match correct(params_template, &grid, ncomp, &x_curr, &tangent, ds, pred, config, &mut last_condition) {
                Ok((x, iters)) => {
                    accepted = Some((x, iters));
                    break;
                }
                Err(_) => {
                    ds *= 0.5;
                    if ds < config.ds_min {
                        return Err(Error::SingularJacobian { condition: last_condition });
                    }
                }
            }
        }
        let (x_new, iters) = match accepted {
            Some(a) => a,
            None => return Err(Error::SingularJacobian { condition: last_condition }),
        };

        // Step-size adaptation toward 3–5 corrector iterations.
        if iters <= 2 {
            ds = (ds * 1.5).min(config.ds_max);
        } else if iters > 5 {
            ds = (ds * 0.7).max(config.ds_min);
        }

        let state = SystemState::unpack(&grid, ncomp, &x_new.v, 0.0)?;
        let mut p_at = params_template.clone();
        p_at.beta = x_new.beta;
        let residual = equilibria::stationary_residual_sup(&p_at, &state)?;
        let point = make_point(state, x_new.beta, residual)?;

        // Termination tests on the accepted point.
        let mut at = params_template.clone();
        at.beta = x_new.beta;
        let symmetric = SystemState::constant(&grid, &coexist_symmetric_point(&at)?);
        let dist = point.state.l2_distance(&symmetric);
        let amplitude = point.amplitude;
        let beta_new = x_new.beta;

        let new_tangent = {
            let dv: Vec<f64> = x_new.v.iter().zip(&x_curr.v).map(|(&a, &b)| a - b).collect();
            normalize(dv, x_new.beta - x_curr.beta, 1.0)?
        };
        x_curr = x_new;
        tangent = new_tangent;
        points.push(point);

        if dist < RECONNECT_TOL {
            termination = Some(Termination::Reconnected(nearest_mode(params_template, &grid, beta_new, origin.n)));
            break;
        }
        if beta_new >= config.beta_max {
            termination = Some(if amplitude >= UNBOUNDED_AMPLITUDE_FLOOR {
                Termination::UnboundedInBeta
            } else {
                Termination::StepLimit
            });
            break;
        }
        if beta_new <= 0.0 {
            termination = Some(Termination::StepLimit);
            break;
        }
    }

    Ok(Branch { origin: origin.clone(), points, termination: termination.unwrap_or(Termination::StepLimit) })
}

/// Mode ordinal whose critical β is nearest to `beta` (reconnection label).
fn nearest_mode(params: &ModelParams, grid: &Grid, beta: f64, fallback: usize) -> usize {
    let m = 64.min(grid.node_count());
    let Ok(spec) = neumann_spectrum(grid, m, SpectrumMethod::Analytic) else {
        return fallback;
    };
    let Ok(points) = bifurcation_points(params, &spec) else {
        return fallback;
    };
    points
        .iter()
        .min_by(|a, b| (a.beta_n - beta).abs().total_cmp(&(b.beta_n - beta).abs()))
        .map(|bp| bp.n)
        .unwrap_or(fallback)
}

fn normalize(v: Vec<f64>, beta: f64, sign: f64) -> Result<(Vec<f64>, f64)> {
    let norm = scaled_dot(&v, beta, &v, beta).sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::NoConvergence { iterations: 0, residual: norm });
    }
    let s = sign / norm;
    Ok((v.into_iter().map(|x| x * s).collect(), beta * s))
}

/// Newton corrector on the bordered system: stationary residual plus the
/// arclength constraint `⟨x − x_base, t⟩ = ds`. Block elimination: one
/// banded factorization and two solves per iteration.
#[allow(clippy::too_many_arguments)]
fn correct(
    params_template: &ModelParams,
    grid: &Grid,
    ncomp: usize,
    x_base: &ExtPoint,
    tangent: &(Vec<f64>, f64),
    ds: f64,
    mut x: ExtPoint,
    config: &ContinuationConfig,
    last_condition: &mut f64,
) -> Result<(ExtPoint, usize)> {
    let dof = x.v.len();
    let nn = grid.node_count();
    let mut r = vec![0.0; dof];
    let mut rbeta = vec![0.0; dof];
    let mut point = vec![0.0; ncomp];
    let mut db = vec![0.0; ncomp];
    for iter in 0..=config.max_corrector_iter {
        if !(x.beta.is_finite() && x.beta > 0.0) {
            return Err(Error::NoConvergence { iterations: iter, residual: f64::INFINITY });
        }
        let mut p = params_template.clone();
        p.beta = x.beta;
        let problem = SteadyProblem::new(&p, grid, vec![ComponentBc::Neumann; ncomp])?;
        problem.residual(&x.v, &mut r);
        let rsup = r.iter().fold(0.0f64, |m, &y| m.max(y.abs()));
        let dv: Vec<f64> = x.v.iter().zip(&x_base.v).map(|(&a, &b)| a - b).collect();
        let c = scaled_dot(&dv, x.beta - x_base.beta, &tangent.0, tangent.1) - ds;
        if rsup <= config.corrector_tol && c.abs() <= config.corrector_tol.max(1e-12 * ds.abs()) {
            return Ok((x, iter));
        }
        if iter == config.max_corrector_iter {
            break;
        }
        if !rsup.is_finite() {
            return Err(Error::NoConvergence { iterations: iter, residual: rsup });
        }
        let factored = problem.jacobian(&x.v).factor()?;
        *last_condition = factored.condition_estimate();
        if *last_condition > config.cond_limit {
            return Err(Error::SingularJacobian { condition: *last_condition });
        }
        // ∂R/∂β node by node.
        for i in 0..nn {
            for cmp in 0..ncomp {
                point[cmp] = x.v[i * ncomp + cmp];
            }
            params_template.reaction_beta_derivative(&point, &mut db);
            for cmp in 0..ncomp {
                rbeta[i * ncomp + cmp] = db[cmp];
            }
        }
        let y1 = factored.solve(&r);
        let y2 = factored.solve(&rbeta);
        let denom = tangent.1 - scaled_state_dot(&tangent.0, &y2);
        if denom.abs() < 1e-14 {
            return Err(Error::SingularJacobian { condition: *last_condition });
        }
        let dbeta = (-c + scaled_state_dot(&tangent.0, &y1)) / denom;
        for ((xi, &y1i), &y2i) in x.v.iter_mut().zip(&y1).zip(&y2) {
            *xi += -y1i - dbeta * y2i;
        }
        x.beta += dbeta;
    }
    Err(Error::NoConvergence { iterations: config.max_corrector_iter, residual: f64::NAN })
}

fn scaled_state_dot(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
    dot / a.len() as f64
}

/// Five samples of the neutral β = 0 family
/// `s ↦ (ms/k², m(1−s)/k², ω/k)` at `s ∈ {0, ¼, ½, ¾, 1}`.
pub fn segment_family(params: &ModelParams) -> Result<Vec<(f64, crate::model::StatePoint)>> {
    [0.0, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|&s| Ok((s, equilibria::family_segment_point(params, s)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::{constant_residual, steady_newton, NewtonConfig};
    use crate::grid::{build_grid, Field};
    use crate::model::StatePoint;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn reference_pair(beta: f64) -> ModelParams {
        ModelParams {
            lambda: 1.0,
            mu: 0.05,
            n_predators: 2,
            omega: vec![1.0, 1.0],
            kpred: vec![1.0, 1.0],
            mu_self: vec![0.0, 0.0],
            d: vec![1.0, 1.0],
            dprey: 1.0,
            beta,
            a: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        }
    }

    fn pi_grid(n: usize) -> Grid {
        build_grid(&[(0.0, std::f64::consts::PI)], &[n]).unwrap()
    }

    #[test]
    fn critical_betas_match_closed_forms_and_defining_relation() {
        let p = reference_pair(0.0);
        let g = pi_grid(64);
        let spec = neumann_spectrum(&g, 8, SpectrumMethod::Analytic).unwrap();
        let pts = bifurcation_points(&p, &spec).unwrap();
        // n* = 4 on (0, π) at μ = 0.05: γ₅ = 25 > m/μ = 19.
        assert_eq!(pts.len(), 4);
        let expect = [2.0 / 0.9, 8.0 / 0.75, 18.0 / 0.5, 32.0 / 0.15];
        for (bp, &e) in pts.iter().zip(&expect) {
            assert_abs_diff_eq!(bp.beta_n, e, epsilon = 1e-12 * e);
            assert_eq!(bp.multiplicity, 1);
            assert!(bp.odd);
            // Defining relation β_n·m/(μβ_n + 2k²) = γ_n.
            let gamma = gamma_of_beta(&p, bp.beta_n).unwrap();
            assert_abs_diff_eq!(gamma, bp.gamma_n, epsilon = 1e-12 * (1.0 + bp.gamma_n));
        }
    }

    #[test]
    fn no_admissible_modes_gives_empty_list() {
        // m/μ = (1 − 0.9)/0.9 < γ₁ = 1 on (0, π).
        let mut p = reference_pair(0.0);
        p.mu = 0.9;
        let g = pi_grid(32);
        let spec = neumann_spectrum(&g, 6, SpectrumMethod::Analytic).unwrap();
        assert!(bifurcation_points(&p, &spec).unwrap().is_empty());
    }

    #[test]
    fn resonant_eigenvalue_is_an_error() {
        // On (0, π/√19) the first eigenvalue is exactly m/μ = 19.
        let p = reference_pair(0.0);
        let g = build_grid(&[(0.0, std::f64::consts::PI / 19.0f64.sqrt())], &[16]).unwrap();
        let spec = neumann_spectrum(&g, 2, SpectrumMethod::Analytic).unwrap();
        match bifurcation_points(&p, &spec) {
            Err(Error::Resonance { mode: 1, denominator }) => assert!(denominator.abs() <= RESONANCE_TOL),
            other => panic!("expected resonance at mode 1, got {other:?}"),
        }
    }

    #[test]
    fn square_double_eigenvalue_is_reported_but_not_switchable() {
        let p = reference_pair(0.0);
        let g = build_grid(&[(0.0, 1.0), (0.0, 1.0)], &[8, 8]).unwrap();
        let spec = neumann_spectrum(&g, 16, SpectrumMethod::Analytic).unwrap();
        let pts = bifurcation_points(&p, &spec).unwrap();
        // γ₁ = π² (multiplicity 2) is the only eigenvalue below m/μ = 19.
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].multiplicity, 2);
        assert!(!pts[0].odd);
        assert!(matches!(branch_switch(&p, &g, &pts[0], 1e-2), Err(Error::Param { .. })));
    }

    #[test]
    fn mode_crossing_flips_the_stability_eigenvalue() {
        // The antisymmetric eigenvalue of M₁ changes sign across β₁ — the
        // closed form and the matrix eigenvalues agree on the crossing.
        let g = pi_grid(32);
        let spec = neumann_spectrum(&g, 4, SpectrumMethod::Analytic).unwrap();
        let bp = &bifurcation_points(&reference_pair(0.0), &spec).unwrap()[0];
        let min_mode1_eig = |beta: f64| -> f64 {
            let mut p = reference_pair(0.0);
            p.beta = beta;
            let pt = coexist_symmetric_point(&p).unwrap();
            let mut a = DMatrix::zeros(3, 3);
            p.reaction_jacobian(&pt.to_vec(), &mut a);
            let mut m = -a;
            for c in 0..3 {
                m[(c, c)] += bp.gamma_n;
            }
            m.complex_eigenvalues().iter().map(|e| e.re).fold(f64::INFINITY, f64::min)
        };
        let below = min_mode1_eig(bp.beta_n * (1.0 - 1e-3));
        let above = min_mode1_eig(bp.beta_n * (1.0 + 1e-3));
        assert!(below > 0.0 && above < 0.0, "below = {below}, above = {above}");
    }

    #[test]
    fn zero_count_measures_sign_changes() {
        let g = pi_grid(64);
        for n in 1..=3usize {
            let fields = vec![
                Field::from_fn(&g, |x| 1.0 + 0.3 * (n as f64 * x[0]).cos()),
                Field::from_fn(&g, |x| 1.0 - 0.3 * (n as f64 * x[0]).cos()),
                Field::constant(&g, 2.0),
            ];
            let st = SystemState::from_fields(0.0, &g, fields).unwrap();
            assert_eq!(zero_count(&st).unwrap().count, n);
        }
        // Identically symmetric state: degenerate.
        let st = SystemState::constant(&g, &StatePoint { w: vec![1.0, 1.0], u: 2.0 });
        let zc = zero_count(&st).unwrap();
        assert_eq!(zc.count, 0);
        assert!(zc.degenerate);
        // Near-zero plateau nodes are ignored, not counted as crossings.
        let mut vals0 = vec![1.0; 8];
        vals0[3] = 1.0 + 1e-13;
        let fields = vec![
            Field::from_values(&pi_grid(8), vals0).unwrap(),
            Field::from_values(&pi_grid(8), vec![2.0, 2.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap(),
            Field::constant(&pi_grid(8), 2.0),
        ];
        let st = SystemState::from_fields(0.0, &pi_grid(8), fields).unwrap();
        assert_eq!(zero_count(&st).unwrap().count, 1);
        // 2D grids are rejected.
        let g2 = build_grid(&[(0.0, 1.0), (0.0, 1.0)], &[4, 4]).unwrap();
        let st2 = SystemState::constant(&g2, &StatePoint { w: vec![1.0, 2.0], u: 0.5 });
        assert!(matches!(zero_count(&st2), Err(Error::Dimension { .. })));
    }

    #[test]
    fn branch_switch_seeds_converge_to_mode_one_pattern() {
        let p = reference_pair(0.0);
        let g = pi_grid(64);
        let spec = neumann_spectrum(&g, 6, SpectrumMethod::Analytic).unwrap();
        let bp = &bifurcation_points(&p, &spec).unwrap()[0];
        let eps = 1e-2 * 0.45;
        let seed = branch_switch(&p, &g, bp, eps).unwrap();
        assert_abs_diff_eq!(seed.beta, bp.beta_n * 1.01, epsilon = 1e-12);

        let mut at = p.clone();
        at.beta = seed.beta;

        // Plain Newton cannot hold a seed this small: the symmetric
        // constant is an exact root and its basin swallows the offset.
        let res = steady_newton(&at, &seed.state, &NewtonConfig::default()).unwrap();
        assert!(branch_amplitude(&res.state) < 1e-8);

        // The amplitude-locked corrector lands on the mode-one branch.
        let (state, beta) = polish_seed(&p, &seed).unwrap();
        let amp = branch_amplitude(&state);
        assert!(amp > 1e-3, "collapsed to the symmetric state, amplitude {amp}");
        assert_eq!(zero_count(&state).unwrap().count, 1);
        // Entry lands just past the fork of the *discrete* branch, whose
        // critical β sits O(h²) below the exact-spectrum value.
        assert!((beta - bp.beta_n).abs() < 1e-3 && beta < seed.beta, "entry β = {beta}");
        let mut at_entry = p.clone();
        at_entry.beta = beta;
        assert!(equilibria::stationary_residual_sup(&at_entry, &state).unwrap() <= 1e-9);

        // A seed of the order of the branch amplitude lies inside the
        // branch basin, so plain Newton reaches the pattern directly.
        let big = branch_switch(&p, &g, bp, 0.1).unwrap();
        let mut at_big = p.clone();
        at_big.beta = big.beta;
        let res_big = steady_newton(&at_big, &big.state, &NewtonConfig::default()).unwrap();
        assert!(res_big.residual_sup <= 1e-10);
        assert!(branch_amplitude(&res_big.state) > 1e-2);
        assert_eq!(zero_count(&res_big.state).unwrap().count, 1);

        // eps = 0 degenerates to the constant; the locked corrector has
        // nothing to hold onto and refuses it.
        let seed0 = branch_switch(&p, &g, bp, 0.0).unwrap();
        let res0 = steady_newton(&at, &seed0.state, &NewtonConfig::default()).unwrap();
        assert!(branch_amplitude(&res0.state) < 1e-12);
        assert!(matches!(polish_seed(&p, &seed0), Err(Error::Param { .. })));

        // Negative eps lands on the mirror solution.
        let seedm = branch_switch(&p, &g, bp, -eps).unwrap();
        let (statem, betam) = polish_seed(&p, &seedm).unwrap();
        let mut swapped = statem.clone();
        swapped.fields.swap(0, 1);
        assert!(state.sup_distance(&swapped) < 1e-8);
        assert_abs_diff_eq!(beta, betam, epsilon = 1e-8);
    }

    #[test]
    fn continuation_reaches_the_beta_cap_with_constant_zero_count() {
        let p = reference_pair(0.0);
        let g = pi_grid(64);
        let spec = neumann_spectrum(&g, 6, SpectrumMethod::Analytic).unwrap();
        let bp = bifurcation_points(&p, &spec).unwrap()[0].clone();
        let seed = branch_switch(&p, &g, &bp, 1e-2 * 0.45).unwrap();
        let config = ContinuationConfig { beta_max: 8.0, ..ContinuationConfig::default() };
        let branch = continue_branch(&p, &bp, &seed, 1.0, &config).unwrap();
        assert_eq!(branch.termination, Termination::UnboundedInBeta);
        assert!(branch.points.len() > 3);
        assert!(branch.points.last().unwrap().beta >= 8.0);
        for pt in &branch.points {
            assert!(pt.residual < BRANCH_RESIDUAL_TOL, "residual {} at β = {}", pt.residual, pt.beta);
            assert_eq!(pt.zero_count, 1, "zero count broke at β = {}", pt.beta);
        }
        // β increases monotonically here (no fold on this stretch).
        for w in branch.points.windows(2) {
            assert!(w[1].beta > w[0].beta);
        }
    }

    #[test]
    fn reversed_direction_reconnects_to_the_symmetric_branch() {
        let p = reference_pair(0.0);
        let g = pi_grid(64);
        let spec = neumann_spectrum(&g, 6, SpectrumMethod::Analytic).unwrap();
        let bp = bifurcation_points(&p, &spec).unwrap()[0].clone();
        let seed = branch_switch(&p, &g, &bp, 1e-2 * 0.45).unwrap();
        let branch = continue_branch(&p, &bp, &seed, -1.0, &ContinuationConfig::default()).unwrap();
        assert_eq!(branch.termination, Termination::Reconnected(1));
        // Reconnection happens near the origin β.
        let last = branch.points.last().unwrap();
        assert!((last.beta - bp.beta_n).abs() < 0.2, "reconnected at β = {}", last.beta);
    }

    #[test]
    fn mirror_of_a_branch_point_is_a_solution() {
        let p = reference_pair(0.0);
        let g = pi_grid(48);
        let spec = neumann_spectrum(&g, 6, SpectrumMethod::Analytic).unwrap();
        let bp = bifurcation_points(&p, &spec).unwrap()[0].clone();
        let seed = branch_switch(&p, &g, &bp, 1e-2 * 0.45).unwrap();
        let config = ContinuationConfig { beta_max: 5.0, ..ContinuationConfig::default() };
        let branch = continue_branch(&p, &bp, &seed, 1.0, &config).unwrap();
        let mid = &branch.points[branch.points.len() / 2];
        let mut swapped = mid.state.clone();
        swapped.fields.swap(0, 1);
        let mut at = p.clone();
        at.beta = mid.beta;
        let polish = steady_newton(&at, &swapped, &NewtonConfig::default()).unwrap();
        assert!(polish.residual_sup < 1e-10);
        assert!(polish.iterations <= 2);
        assert!(polish.state.sup_distance(&swapped) < 1e-6);
    }

    #[test]
    fn segment_family_samples_are_roots() {
        let p = reference_pair(0.0);
        let fam = segment_family(&p).unwrap();
        assert_eq!(fam.len(), 5);
        for (s, pt) in &fam {
            assert!(constant_residual(&p, pt) < 1e-12, "s = {s}");
        }
        // Endpoints are the simple states.
        assert_abs_diff_eq!(fam[0].1.w[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fam[4].1.w[1], 0.0, epsilon = 1e-15);
        // β ≠ 0 is rejected.
        assert!(segment_family(&reference_pair(0.5)).is_err());
    }
}
