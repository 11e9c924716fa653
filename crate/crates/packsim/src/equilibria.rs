//! Constant equilibria, their linearized stability, bifurcation thresholds,
//! and Newton refinement of non-constant steady states.
//!
//! ## The catalog
//!
//! The reaction system has a small family of spatially constant equilibria:
//!
//! * **zero** — everything extinct, `(0, …, 0, 0)`;
//! * **prey only** — `(0, …, 0, λ/μ)`, prey at carrying capacity;
//! * **simple(i)** — predator `i` alone with the prey,
//!   `w_i = (λk_i − μω_i)/(k_i² + μμ_i)`,
//!   `u = (λμ_i + ω_i k_i)/(k_i² + μμ_i)`, all other predators extinct
//!   (exists when the viability margin `λk_i − μω_i` is positive);
//! * **symmetric coexistence** — for the fully symmetric two-predator
//!   configuration, `w_1 = w_2 = (λk − μω)/(2k² + μ(μ_s + βa))` and
//!   `u = (λ − 2kw)/μ`;
//! * **family segment** (β = 0, μ_i = 0 only) — with the competition off the
//!   coexistence state deforms into the neutral line
//!   `s ↦ (ms/k², m(1−s)/k², ω/k)`, `m = λk − μω`, joining the two simple
//!   states; the catalog samples it at `s ∈ {0, ¼, ½, ¾, 1}`.
//!
//! ## Stability across diffusive modes
//!
//! A constant state is linearly stable iff for every Neumann eigenvalue
//! `γ_h` of the domain all eigenvalues of
//!
//! ```text
//! M_h = γ_h·diag(d_1, …, d_N, D) − A        (A = reaction Jacobian)
//! ```
//!
//! have positive real part (positive = decay in this convention). Only
//! finitely many modes need checking: once `γ_h·min(d) ≥ 2‖A‖₂`, every
//! eigenvalue of `M_h` has real part at least `‖A‖₂`, which can no longer
//! attain the minimum. The *weakly stable* verdict is reserved for minima
//! within `±1e−10` of zero — e.g. the neutral direction along the β = 0
//! coexistence family.
//!
//! ## Thresholds in β
//!
//! The simple state of resident `i` repels invader `j` iff
//! `β ≥ (k_j u_i − ω_j)/(a_ji w_i)` ([`invasion_threshold`]; a negative
//! threshold means `j` can never invade). The full per-`j` vector is
//! [`simple_stability_threshold`], and
//! [`simple_stability_threshold_bisect`] recovers the same number
//! numerically from the mode-wise assessment. (The β at which the
//! *coexistence* state sheds spatial modes lives in the continuation
//! module.)
//!
//! ## Newton refinement
//!
//! [`steady_newton`] drives the stationary residual
//! `diag(d)Δ_h v + F(v)` to `1e−10` (sup norm) by damped Newton with an
//! exact banded Jacobian: unknowns are ordered node-major so the
//! linearization has half-bandwidth `N+1` in 1D (`(N+1)·nx` in 2D) and each
//! iteration costs one banded LU factorization. A pivot-ratio condition
//! estimate above `1e12` aborts with [`Error::SingularJacobian`] — that is
//! the expected failure mode at uncontrolled folds or bifurcation points.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolve::SystemState;
use crate::grid::Grid;
use crate::linalg::{spectral_norm, BandedMatrix};
use crate::model::{ModelParams, StatePoint};

/// Absolute half-width of the weakly-stable band around zero for the
/// minimal real part of the stability matrices.
pub const WEAK_STABILITY_TOL: f64 = 1e-10;

/// Kinds of constant equilibria in the catalog.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EquilibriumKind {
    /// Total extinction.
    Zero,
    /// Prey at carrying capacity, no predators.
    PreyOnly,
    /// Predator `i` alone with the prey.
    Simple(usize),
    /// Symmetric two-predator coexistence.
    CoexistSymmetric,
    /// Point `s` on the neutral β = 0 segment between the simple states.
    FamilySegment(f64),
}

impl std::fmt::Display for EquilibriumKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EquilibriumKind::Zero => write!(f, "zero"),
            EquilibriumKind::PreyOnly => write!(f, "prey_only"),
            EquilibriumKind::Simple(i) => write!(f, "simple_{i}"),
            EquilibriumKind::CoexistSymmetric => write!(f, "coexist_symmetric"),
            EquilibriumKind::FamilySegment(s) => write!(f, "family_segment_{s}"),
        }
    }
}

impl Serialize for EquilibriumKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Stability verdict for a constant state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    /// Minimal real part > 1e−10: perturbations decay in every mode.
    StronglyStable,
    /// Minimal real part within ±1e−10 of zero (neutral direction).
    WeaklyStable,
    /// Minimal real part < −1e−10: some mode grows.
    Unstable,
}

/// Mode-wise stability assessment of a constant state.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityAssessment {
    /// Verdict derived from `min_real_part`.
    pub classification: Stability,
    /// Smallest real part of any eigenvalue of any `M_h` (positive = decay).
    pub min_real_part: f64,
    /// Index `h` (ascending eigenvalue order, 0 = constant mode) attaining
    /// the minimum.
    pub critical_mode: usize,
    /// The matrix eigenvalue `[re, im]` attaining the minimum.
    pub critical_eigenvalue: [f64; 2],
    /// Number of modes inspected before the tail bound took over.
    pub modes_checked: usize,
}

/// One catalog row: a constant equilibrium with its stability verdict.
#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    /// Which equilibrium.
    pub kind: EquilibriumKind,
    /// The state `(w_1, …, w_N, u)`.
    pub point: StatePoint,
    /// Competition strength the catalog was evaluated at.
    pub beta: f64,
    /// Verdict derived from `min_real_part`.
    pub classification: Stability,
    /// Smallest real part across modes (positive = decay).
    pub min_real_part: f64,
    /// Mode index attaining the minimum.
    pub critical_mode: usize,
    /// Sup norm of the reaction terms at the point (must vanish).
    pub residual: f64,
}

/// The all-extinct state.
pub fn zero_point(params: &ModelParams) -> StatePoint {
    StatePoint { w: vec![0.0; params.n()], u: 0.0 }
}

/// Prey at carrying capacity `λ/μ`, no predators.
pub fn prey_only_point(params: &ModelParams) -> StatePoint {
    StatePoint { w: vec![0.0; params.n()], u: params.lambda / params.mu }
}

/// Predator `i` alone with the prey. Requires a positive viability margin
/// `λk_i − μω_i`.
pub fn simple_point(params: &ModelParams, i: usize) -> Result<StatePoint> {
    if i >= params.n() {
        return Err(Error::param(format!("predator index {i} out of range (N = {})", params.n())));
    }
    let margin = params.lambda * params.kpred[i] - params.mu * params.omega[i];
    if margin <= 0.0 {
        return Err(Error::param(format!("predator {i} is not viable (margin {margin} ≤ 0)")));
    }
    let denom = params.kpred[i] * params.kpred[i] + params.mu * params.mu_self[i];
    let mut w = vec![0.0; params.n()];
    w[i] = margin / denom;
    let u = (params.lambda * params.mu_self[i] + params.omega[i] * params.kpred[i]) / denom;
    Ok(StatePoint { w, u })
}

/// Symmetric two-predator coexistence. Requires the fully symmetric pair
/// configuration and a positive viability margin.
pub fn coexist_symmetric_point(params: &ModelParams) -> Result<StatePoint> {
    if !params.is_symmetric_pair() {
        return Err(Error::param("coexistence point requires the symmetric two-predator configuration"));
    }
    if params.mu <= 0.0 {
        return Err(Error::param("the coexistence constant divides by μ; μ must be positive"));
    }
    let k = params.kpred[0];
    let margin = params.lambda * k - params.mu * params.omega[0];
    if margin <= 0.0 {
        return Err(Error::param(format!("predators are not viable (margin {margin} ≤ 0)")));
    }
    let a = params.a[0][1];
    let w = margin / (2.0 * k * k + params.mu * (params.mu_self[0] + params.beta * a));
    let u = (params.lambda - 2.0 * k * w) / params.mu;
    Ok(StatePoint { w: vec![w, w], u })
}

/// Point `s ∈ [0, 1]` on the neutral coexistence segment
/// `(ms/k², m(1−s)/k², ω/k)` that exists when the competition is switched
/// off (β = 0) and the predators have no self-limitation (μ_i = 0).
pub fn family_segment_point(params: &ModelParams, s: f64) -> Result<StatePoint> {
    if !params.is_symmetric_pair() {
        return Err(Error::param("the neutral segment requires the symmetric two-predator configuration"));
    }
    if params.beta != 0.0 || params.mu_self[0] != 0.0 {
        return Err(Error::param("the neutral segment exists only for β = 0 and μ_i = 0"));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::param(format!("segment parameter s = {s} outside [0, 1]")));
    }
    let k = params.kpred[0];
    let margin = params.lambda * k - params.mu * params.omega[0];
    if margin <= 0.0 {
        return Err(Error::param(format!("predators are not viable (margin {margin} ≤ 0)")));
    }
    let w_total = margin / (k * k);
    Ok(StatePoint { w: vec![s * w_total, (1.0 - s) * w_total], u: params.omega[0] / k })
}

/// Sup norm of the reaction terms at a constant state.
pub fn constant_residual(params: &ModelParams, point: &StatePoint) -> f64 {
    let v = point.to_vec();
    let mut out = vec![0.0; v.len()];
    params.reaction(&v, &mut out);
    out.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
}

/// Ascending Neumann eigenvalues of the rectangle with the given extents
/// (continuum values, unbounded — not capped by any grid).
pub(crate) fn domain_gammas(extents: &[(f64, f64)], count: usize) -> Result<Vec<f64>> {
    if extents.is_empty() || extents.len() > 2 {
        return Err(Error::dimension(format!("extents must have 1 or 2 axes, got {}", extents.len())));
    }
    for &(a, b) in extents {
        if !(b > a && (b - a).is_finite()) {
            return Err(Error::grid(format!("extent ({a}, {b}) is not an increasing finite interval")));
        }
    }
    if extents.len() == 1 {
        let l = extents[0].1 - extents[0].0;
        return Ok((0..count).map(|p| (std::f64::consts::PI * p as f64 / l).powi(2)).collect());
    }
    let lx = extents[0].1 - extents[0].0;
    let ly = extents[1].1 - extents[1].0;
    let mut k = (count as f64).sqrt().ceil() as usize + 2;
    loop {
        let mut vals = Vec::with_capacity(k * k);
        for p in 0..k {
            for q in 0..k {
                vals.push(
                    (std::f64::consts::PI * p as f64 / lx).powi(2) + (std::f64::consts::PI * q as f64 / ly).powi(2),
                );
            }
        }
        vals.sort_by(|a, b| a.total_cmp(b));
        // The enumeration p, q < k is complete below this cutoff.
        let complete_below =
            ((std::f64::consts::PI * k as f64 / lx).powi(2)).min((std::f64::consts::PI * k as f64 / ly).powi(2));
        let complete = vals.iter().take_while(|&&v| v < complete_below).count();
        if complete >= count {
            vals.truncate(count);
            return Ok(vals);
        }
        k *= 2;
    }
}

struct ModeScan {
    a: DMatrix<f64>,
    diffusivities: Vec<f64>,
    gamma_stop: f64,
    min_real: f64,
    min_imag: f64,
    critical: usize,
    checked: usize,
}

impl ModeScan {
    fn new(params: &ModelParams, point: &StatePoint) -> Result<ModeScan> {
        params.validate()?;
        let nc = params.ncomp();
        let v = point.to_vec();
        if v.len() != nc {
            return Err(Error::ShapeMismatch { expected: nc, got: v.len() });
        }
        let mut a = DMatrix::zeros(nc, nc);
        params.reaction_jacobian(&v, &mut a);
        let norm_a = spectral_norm(&a);
        // Beyond γ·min(d) > 2‖A‖ every eigenvalue of M_h has ℜ ≥ ‖A‖, which
        // cannot beat the mode-0 minimum (|ℜ| ≤ ‖A‖ there).
        let gamma_stop = 2.0 * norm_a / params.min_diffusivity();
        let mut diffusivities = params.d.clone();
        diffusivities.push(params.dprey);
        Ok(ModeScan {
            a,
            diffusivities,
            gamma_stop,
            min_real: f64::INFINITY,
            min_imag: 0.0,
            critical: 0,
            checked: 0,
        })
    }

    /// Inspect one mode; returns true once no further mode can matter.
    fn push(&mut self, gamma: f64) -> bool {
        let nc = self.a.nrows();
        let mut m = -self.a.clone();
        for c in 0..nc {
            m[(c, c)] += gamma * self.diffusivities[c];
        }
        for e in m.complex_eigenvalues().iter() {
            if e.re < self.min_real {
                self.min_real = e.re;
                self.min_imag = e.im;
                self.critical = self.checked;
            }
        }
        self.checked += 1;
        gamma > self.gamma_stop
    }

    fn finish(self) -> StabilityAssessment {
        let classification = if self.min_real > WEAK_STABILITY_TOL {
            Stability::StronglyStable
        } else if self.min_real >= -WEAK_STABILITY_TOL {
            Stability::WeaklyStable
        } else {
            Stability::Unstable
        };
        StabilityAssessment {
            classification,
            min_real_part: self.min_real,
            critical_mode: self.critical,
            critical_eigenvalue: [self.min_real, self.min_imag],
            modes_checked: self.checked,
        }
    }
}

/// Mode-wise linear stability of a constant state against a caller-provided
/// ascending eigenvalue list (e.g. a discrete spectrum). Fails with
/// [`Error::Spectrum`] if the list is exhausted before the tail bound is
/// reached.
pub fn constant_stability(params: &ModelParams, point: &StatePoint, gammas: &[f64]) -> Result<StabilityAssessment> {
    let mut scan = ModeScan::new(params, point)?;
    for &gamma in gammas {
        if scan.push(gamma) {
            return Ok(scan.finish());
        }
    }
    Err(Error::Spectrum {
        message: format!(
            "need modes up to γ > {:.6e} to certify stability, but only {} were provided",
            scan.gamma_stop,
            gammas.len()
        ),
    })
}

/// Mode-wise linear stability of a constant state on the rectangle with the
/// given extents (continuum eigenvalues, generated as needed).
pub fn assess_constant_stability(
    params: &ModelParams,
    point: &StatePoint,
    extents: &[(f64, f64)],
) -> Result<StabilityAssessment> {
    let mut scan = ModeScan::new(params, point)?;
    let mut count = 32usize;
    loop {
        let gammas = domain_gammas(extents, count)?;
        for &gamma in &gammas[scan.checked..] {
            if scan.push(gamma) {
                return Ok(scan.finish());
            }
        }
        count *= 2;
    }
}

/// Every constant equilibrium the closed forms provide at these parameters:
/// zero, prey-only, each viable simple state, the symmetric coexistence
/// state (symmetric pairs), and — at β = 0 with μ_i = 0 — five samples of
/// the neutral segment.
pub fn constant_points(params: &ModelParams) -> Result<Vec<(EquilibriumKind, StatePoint)>> {
    params.validate()?;
    if params.mu <= 0.0 {
        return Err(Error::param("the constant catalog needs the prey cap λ/μ; μ must be positive"));
    }
    let mut out = vec![
        (EquilibriumKind::Zero, zero_point(params)),
        (EquilibriumKind::PreyOnly, prey_only_point(params)),
    ];
    let hyp = params.check_hypotheses();
    for i in 0..params.n() {
        if hyp.viable[i] {
            out.push((EquilibriumKind::Simple(i), simple_point(params, i)?));
        }
    }
    if params.is_symmetric_pair() && hyp.viable[0] {
        out.push((EquilibriumKind::CoexistSymmetric, coexist_symmetric_point(params)?));
        if params.beta == 0.0 && params.mu_self[0] == 0.0 {
            for s in [0.0, 0.25, 0.5, 0.75, 1.0] {
                out.push((EquilibriumKind::FamilySegment(s), family_segment_point(params, s)?));
            }
        }
    }
    Ok(out)
}

/// Full catalog of constant equilibria on the rectangle with the given
/// extents, each with its mode-wise stability verdict.
pub fn catalog(params: &ModelParams, extents: &[(f64, f64)]) -> Result<Vec<CatalogEntry>> {
    let points = constant_points(params)?;
    let mut entries = Vec::with_capacity(points.len());
    for (kind, point) in points {
        let residual = constant_residual(params, &point);
        let assessment = assess_constant_stability(params, &point, extents)?;
        entries.push(CatalogEntry {
            kind,
            point,
            beta: params.beta,
            classification: assessment.classification,
            min_real_part: assessment.min_real_part,
            critical_mode: assessment.critical_mode,
            residual,
        });
    }
    Ok(entries)
}

/// Signed invasion threshold: the simple state of `resident` repels
/// `invader` exactly for `β ≥ (k_j u_i − ω_j)/(a_ji w_i)`. A non-positive
/// value means the invader cannot grow at any β ≥ 0; `+∞` means it grows
/// but the competition never couples it (`a_ji = 0`).
pub fn invasion_threshold(params: &ModelParams, resident: usize, invader: usize) -> Result<f64> {
    params.validate()?;
    if invader == resident || invader >= params.n() {
        return Err(Error::param(format!("invalid invader index {invader} (resident {resident}, N = {})", params.n())));
    }
    let point = simple_point(params, resident)?;
    let growth = params.kpred[invader] * point.u - params.omega[invader];
    let a_ji = params.a[invader][resident];
    if a_ji == 0.0 {
        return Ok(match growth {
            g if g > 0.0 => f64::INFINITY,
            g if g < 0.0 => f64::NEG_INFINITY,
            _ => 0.0,
        });
    }
    Ok(growth / (a_ji * point.w[resident]))
}

/// Per-invader thresholds `(j, β̄_j)` for the simple state of `resident`:
/// the state is stable at β iff `β ≥ β̄_j` for every `j`.
pub fn simple_stability_threshold(params: &ModelParams, resident: usize) -> Result<Vec<(usize, f64)>> {
    (0..params.n())
        .filter(|&j| j != resident)
        .map(|j| Ok((j, invasion_threshold(params, resident, j)?)))
        .collect()
}

/// Smallest β ≥ 0 above which the simple state of `resident` repels every
/// competitor (the largest per-invader threshold, floored at 0).
pub fn segregation_threshold(params: &ModelParams, resident: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for (_, t) in simple_stability_threshold(params, resident)? {
        worst = worst.max(t);
    }
    Ok(worst)
}

/// Recover the stability threshold of a simple state by bisection on the
/// full mode-wise assessment (the oracle-free counterpart of
/// [`invasion_threshold`]). `lo` must assess unstable and `hi` stable.
pub fn simple_stability_threshold_bisect(
    params: &ModelParams,
    resident: usize,
    extents: &[(f64, f64)],
    lo: f64,
    hi: f64,
    tol_beta: f64,
) -> Result<f64> {
    params.validate()?;
    if !(lo >= 0.0 && hi > lo && tol_beta > 0.0) {
        return Err(Error::param(format!("invalid bisection bracket [{lo}, {hi}] or tolerance {tol_beta}")));
    }
    let stable_at = |beta: f64| -> Result<bool> {
        let mut p = params.clone();
        p.beta = beta;
        let point = simple_point(&p, resident)?;
        let a = assess_constant_stability(&p, &point, extents)?;
        Ok(a.classification != Stability::Unstable)
    };
    let mut lo = lo;
    let mut hi = hi;
    if stable_at(lo)? {
        return Err(Error::param(format!("bracket low end β = {lo} is already stable")));
    }
    if !stable_at(hi)? {
        return Err(Error::param(format!("bracket high end β = {hi} is still unstable")));
    }
    while hi - lo > tol_beta {
        let mid = 0.5 * (lo + hi);
        if stable_at(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

// ---------------------------------------------------------------------------
// Steady-state Newton solver
// ---------------------------------------------------------------------------

/// Boundary condition of one component (per steady problem).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentBc {
    /// No-flux on every wall (reflection ghosts).
    Neumann,
    /// Zero value on the left wall of the first axis, no-flux elsewhere
    /// (antireflection ghost). One-dimensional grids only.
    DirichletLeft,
}

/// Stationary problem `diag(d)Δ_h v + F(v) = 0` with per-component boundary
/// conditions, in node-major packing.
pub(crate) struct SteadyProblem<'a> {
    pub params: &'a ModelParams,
    pub grid: &'a Grid,
    pub bc: Vec<ComponentBc>,
}

impl<'a> SteadyProblem<'a> {
    pub fn new(params: &'a ModelParams, grid: &'a Grid, bc: Vec<ComponentBc>) -> Result<Self> {
        params.validate()?;
        if bc.len() != params.ncomp() {
            return Err(Error::ShapeMismatch { expected: params.ncomp(), got: bc.len() });
        }
        if grid.dim() != 1 && bc.iter().any(|&b| b == ComponentBc::DirichletLeft) {
            return Err(Error::dimension("DirichletLeft boundaries are one-dimensional only".to_string()));
        }
        Ok(SteadyProblem { params, grid, bc })
    }

    pub fn ncomp(&self) -> usize {
        self.params.ncomp()
    }

    pub fn dof(&self) -> usize {
        self.ncomp() * self.grid.node_count()
    }

    /// Half-bandwidth of the node-major Jacobian: the farthest coupling is
    /// the same component at the nearest neighbor in the slowest axis.
    pub fn half_bandwidth(&self) -> usize {
        match self.grid.dim() {
            1 => self.ncomp(),
            _ => self.ncomp() * self.grid.n_cells()[0],
        }
    }

    fn diffusivity(&self, c: usize) -> f64 {
        if c < self.params.n() {
            self.params.d[c]
        } else {
            self.params.dprey
        }
    }

    /// Residual `R(v) = diag(d)Δ_h v + F(v)`, node-major.
    pub fn residual(&self, v: &[f64], out: &mut [f64]) {
        let nc = self.ncomp();
        let nn = self.grid.node_count();
        debug_assert_eq!(v.len(), nc * nn);
        debug_assert_eq!(out.len(), nc * nn);
        let mut point = vec![0.0; nc];
        let mut f = vec![0.0; nc];
        let (nx, ny) = match self.grid.dim() {
            1 => (self.grid.n_cells()[0], 1),
            _ => (self.grid.n_cells()[0], self.grid.n_cells()[1]),
        };
        let ihx2 = 1.0 / (self.grid.spacing()[0] * self.grid.spacing()[0]);
        let ihy2 = if self.grid.dim() == 2 { 1.0 / (self.grid.spacing()[1] * self.grid.spacing()[1]) } else { 0.0 };
        for iy in 0..ny {
            for ix in 0..nx {
                let node = iy * nx + ix;
                for c in 0..nc {
                    point[c] = v[node * nc + c];
                }
                self.params.reaction(&point, &mut f);
                for c in 0..nc {
                    let center = point[c];
                    // x-axis stencil with per-component ghost at the left wall.
                    let left = if ix > 0 {
                        v[(node - 1) * nc + c]
                    } else {
                        match self.bc[c] {
                            ComponentBc::Neumann => center,
                            ComponentBc::DirichletLeft => -center,
                        }
                    };
                    let right = if ix + 1 < nx { v[(node + 1) * nc + c] } else { center };
                    let mut lap = (left - 2.0 * center + right) * ihx2;
                    if self.grid.dim() == 2 {
                        let down = if iy > 0 { v[(node - nx) * nc + c] } else { center };
                        let up = if iy + 1 < ny { v[(node + nx) * nc + c] } else { center };
                        lap += (down - 2.0 * center + up) * ihy2;
                    }
                    out[node * nc + c] = self.diffusivity(c) * lap + f[c];
                }
            }
        }
    }

    /// Exact banded Jacobian of [`SteadyProblem::residual`].
    pub fn jacobian(&self, v: &[f64]) -> BandedMatrix {
        let nc = self.ncomp();
        let nn = self.grid.node_count();
        let hb = self.half_bandwidth();
        let mut m = BandedMatrix::zeros(nc * nn, hb, hb);
        let mut point = vec![0.0; nc];
        let mut jac = DMatrix::zeros(nc, nc);
        let (nx, ny) = match self.grid.dim() {
            1 => (self.grid.n_cells()[0], 1),
            _ => (self.grid.n_cells()[0], self.grid.n_cells()[1]),
        };
        let ihx2 = 1.0 / (self.grid.spacing()[0] * self.grid.spacing()[0]);
        let ihy2 = if self.grid.dim() == 2 { 1.0 / (self.grid.spacing()[1] * self.grid.spacing()[1]) } else { 0.0 };
        for iy in 0..ny {
            for ix in 0..nx {
                let node = iy * nx + ix;
                for c in 0..nc {
                    point[c] = v[node * nc + c];
                }
                self.params.reaction_jacobian(&point, &mut jac);
                for r in 0..nc {
                    let row = node * nc + r;
                    for c in 0..nc {
                        m.add(row, node * nc + c, jac[(r, c)]);
                    }
                    let dc = self.diffusivity(r);
                    // x-axis: each side gives (neighbor +1, center −1)/h²;
                    // Neumann walls cancel, Dirichlet walls double the pull.
                    if ix > 0 {
                        m.add(row, (node - 1) * nc + r, dc * ihx2);
                        m.add(row, row, -dc * ihx2);
                    } else if self.bc[r] == ComponentBc::DirichletLeft {
                        m.add(row, row, -2.0 * dc * ihx2);
                    }
                    if ix + 1 < nx {
                        m.add(row, (node + 1) * nc + r, dc * ihx2);
                        m.add(row, row, -dc * ihx2);
                    }
                    if self.grid.dim() == 2 {
                        if iy > 0 {
                            m.add(row, (node - nx) * nc + r, dc * ihy2);
                            m.add(row, row, -dc * ihy2);
                        }
                        if iy + 1 < ny {
                            m.add(row, (node + nx) * nc + r, dc * ihy2);
                            m.add(row, row, -dc * ihy2);
                        }
                    }
                }
            }
        }
        m
    }
}

/// Damped-Newton configuration for the steady solvers.
#[derive(Debug, Clone)]
pub struct NewtonConfig {
    /// Sup-norm residual target.
    pub tol: f64,
    /// Iteration budget.
    pub max_iter: usize,
    /// Condition-estimate limit before declaring the Jacobian singular.
    pub cond_limit: f64,
    /// Smallest damping factor tried in the line search (2⁻¹⁰).
    pub min_damping: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig { tol: 1e-10, max_iter: 50, cond_limit: 1e12, min_damping: 1.0 / 1024.0 }
    }
}

/// Converged steady state.
#[derive(Debug, Clone)]
pub struct NewtonResult {
    /// The steady state (time label copied from the guess).
    pub state: SystemState,
    /// Final residual sup norm.
    pub residual_sup: f64,
    /// Newton iterations performed.
    pub iterations: usize,
    /// True iff `residual_sup` met the tolerance (always true in `Ok`).
    pub converged: bool,
    /// True iff every component is non-negative (up to −1e−10). Roots with
    /// negative components are legitimate solver output but must be
    /// excluded from any population statistics.
    pub physical: bool,
}

fn is_physical_root(state: &SystemState) -> bool {
    state.fields.iter().all(|f| f.min_value() >= -1e-10)
}

pub(crate) fn steady_newton_problem(
    problem: &SteadyProblem<'_>,
    guess: &SystemState,
    config: &NewtonConfig,
) -> Result<NewtonResult> {
    if guess.ncomp() != problem.ncomp() {
        return Err(Error::ShapeMismatch { expected: problem.ncomp(), got: guess.ncomp() });
    }
    if guess.grid != *problem.grid {
        return Err(Error::grid("guess grid differs from the problem grid".to_string()));
    }
    let dof = problem.dof();
    let mut v = guess.pack();
    let mut r = vec![0.0; dof];
    let mut r_trial = vec![0.0; dof];
    problem.residual(&v, &mut r);
    let mut rsup = sup(&r);
    for iter in 0..config.max_iter {
        if rsup <= config.tol {
            let state = SystemState::unpack(problem.grid, problem.ncomp(), &v, guess.t)?;
            let physical = is_physical_root(&state);
            return Ok(NewtonResult { state, residual_sup: rsup, iterations: iter, converged: true, physical });
        }
        let factored = problem.jacobian(&v).factor()?;
        let cond = factored.condition_estimate();
        if cond > config.cond_limit {
            return Err(Error::SingularJacobian { condition: cond });
        }
        let mut delta = r.clone();
        for x in delta.iter_mut() {
            *x = -*x;
        }
        factored.solve_in_place(&mut delta);
        // Backtracking line search with sufficient decrease (1 − α/4).
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = v.iter().zip(&delta).map(|(&x, &dx)| x + alpha * dx).collect();
            problem.residual(&trial, &mut r_trial);
            let tsup = sup(&r_trial);
            if tsup.is_finite() && tsup <= (1.0 - 0.25 * alpha) * rsup {
                v = trial;
                std::mem::swap(&mut r, &mut r_trial);
                rsup = tsup;
                break;
            }
            alpha *= 0.5;
            if alpha < config.min_damping {
                return Err(Error::NoConvergence { iterations: iter, residual: rsup });
            }
        }
    }
    if rsup <= config.tol {
        let state = SystemState::unpack(problem.grid, problem.ncomp(), &v, guess.t)?;
        let physical = is_physical_root(&state);
        return Ok(NewtonResult {
            state,
            residual_sup: rsup,
            iterations: config.max_iter,
            converged: true,
            physical,
        });
    }
    Err(Error::NoConvergence { iterations: config.max_iter, residual: rsup })
}

/// Refine a steady state of the full no-flux problem by damped Newton.
pub fn steady_newton(params: &ModelParams, guess: &SystemState, config: &NewtonConfig) -> Result<NewtonResult> {
    let bc = vec![ComponentBc::Neumann; params.ncomp()];
    let problem = SteadyProblem::new(params, &guess.grid, bc)?;
    steady_newton_problem(&problem, guess, config)
}

/// Sup norm of the stationary residual of a state (no-flux problem).
pub fn stationary_residual_sup(params: &ModelParams, state: &SystemState) -> Result<f64> {
    let bc = vec![ComponentBc::Neumann; params.ncomp()];
    let problem = SteadyProblem::new(params, &state.grid, bc)?;
    let mut r = vec![0.0; problem.dof()];
    problem.residual(&state.pack(), &mut r);
    Ok(sup(&r))
}

/// Per-component constancy of a state.
///
/// For a genuine two-predator steady state the components are constant all
/// together or not at all; mixed flags on a small-residual state indicate a
/// solver artifact (`consistent = false`). For more than two predators the
/// flags are reported without that law being asserted.
#[derive(Debug, Clone, Serialize)]
pub struct ConstancyReport {
    /// `flags[c]`: oscillation of component `c` is below `tol·(1 + sup)`.
    pub flags: Vec<bool>,
    /// All components constant.
    pub all_constant: bool,
    /// Flags are all-or-none.
    pub consistent: bool,
}

/// Check which components of a state are spatially constant at tolerance
/// `tol` (relative to `1 + sup`).
pub fn constancy_check(state: &SystemState, tol: f64) -> ConstancyReport {
    let flags: Vec<bool> =
        state.fields.iter().map(|f| f.osc() < tol * (1.0 + f.sup_norm())).collect();
    let all_constant = flags.iter().all(|&b| b);
    let consistent = all_constant || flags.iter().all(|&b| !b);
    ConstancyReport { flags, all_constant, consistent }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
}
