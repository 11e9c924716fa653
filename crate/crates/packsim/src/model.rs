//! Model parameters and reaction kinetics for the N-predator / one-prey
//! competition system.
//!
//! The governing equations on a rectangle Ω with no-flux boundaries are
//!
//! ```text
//! ∂w_i/∂t − d_i Δw_i = (−ω_i + k_i u − μ_i w_i − β Σ_{j≠i} a_ij w_j) w_i ,   i = 1..N
//! ∂u/∂t  − D Δu      = (λ − μ u − Σ_i k_i w_i) u
//! ```
//!
//! with predator densities `w_i`, prey density `u`, mortality `ω_i`, hunting
//! rates `k_i`, intraspecies competition `μ_i`, interspecies competition
//! strength `β ≥ 0` with pattern `a_ij ≥ 0` (`a_ii = 0`), prey growth `λ`,
//! prey saturation `μ`, and diffusivities `d_i`, `D`.
//!
//! This module owns:
//!
//! * [`ModelParams`]: validated parameter sets with a strict JSON format
//!   (unknown keys rejected);
//! * pointwise reaction terms, their Jacobian, and the ∂/∂β derivative used
//!   by arclength continuation;
//! * viability margins `λk_i − μω_i` (a predator persists only if its margin
//!   is positive — otherwise it starves even on prey at carrying capacity);
//! * the absorbing box `0 ≤ w_i ≤ (λk_i − μω_i)/(μμ_i)`, `0 ≤ u ≤ λ/μ` that
//!   the flow enters in finite time, and a certified bound for the Lipschitz
//!   constant of the reaction map over that box (the quantity that competes
//!   against the diffusive spectral gap in the homogenization criterion);
//! * the rescaling to unit diffusivities used by the stationary analysis.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::spectral_norm;

/// Parameters of the competition system. See the module docs for the roles.
///
/// The JSON wire format uses exactly these field names and rejects unknown
/// keys. All vector fields must have length `n_predators`; `a` must be an
/// `n_predators × n_predators` matrix with zero diagonal and non-negative
/// entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Prey intrinsic growth rate λ > 0.
    pub lambda: f64,
    /// Prey saturation coefficient μ ≥ 0. The idealized μ = 0 system has
    /// no prey cap: the constant catalog, absorbing box, and pack bound all
    /// require μ > 0 and reject it.
    pub mu: f64,
    /// Number of predator species N ≥ 1.
    pub n_predators: usize,
    /// Predator mortalities ω_i > 0.
    pub omega: Vec<f64>,
    /// Hunting rates k_i > 0.
    pub kpred: Vec<f64>,
    /// Intraspecies competition μ_i ≥ 0.
    pub mu_self: Vec<f64>,
    /// Predator diffusivities d_i > 0.
    pub d: Vec<f64>,
    /// Prey diffusivity D > 0.
    pub dprey: f64,
    /// Interspecies competition strength β ≥ 0.
    pub beta: f64,
    /// Competition pattern a_ij ≥ 0 with zero diagonal.
    pub a: Vec<Vec<f64>>,
}

/// Viability report: the sign of each margin `λk_i − μω_i` decides whether
/// predator `i` can persist at all.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    /// Margins `λk_i − μω_i`.
    pub margins: Vec<f64>,
    /// `margins[i] > 0`.
    pub viable: Vec<bool>,
    /// All predators viable.
    pub all_viable: bool,
}

/// Certified Lipschitz bound of the reaction map over the absorbing box.
#[derive(Debug, Clone, Serialize)]
pub struct LipschitzBound {
    /// Inflated bound `1.05 × raw_sup`, safe against sampling gaps.
    pub bound: f64,
    /// Largest sampled spectral norm of the reaction Jacobian.
    pub raw_sup: f64,
    /// Sample point attaining `raw_sup` (components `w_1..w_N, u`).
    pub argmax: Vec<f64>,
    /// Upper corner of the absorbing box (lower corner is the origin).
    pub box_upper: Vec<f64>,
    /// Samples used per axis on the coarse pass.
    pub samples_per_axis: usize,
}

/// A spatially constant state `(w_1, …, w_N, u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePoint {
    /// Predator densities.
    pub w: Vec<f64>,
    /// Prey density.
    pub u: f64,
}

impl StatePoint {
    /// Pack as `(w_1, …, w_N, u)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.w.clone();
        v.push(self.u);
        v
    }

    /// Unpack from `(w_1, …, w_N, u)`.
    pub fn from_slice(v: &[f64]) -> StatePoint {
        let n = v.len() - 1;
        StatePoint { w: v[..n].to_vec(), u: v[n] }
    }
}

/// Inflation factor applied to the sampled Jacobian sup to cover sampling
/// gaps (the reaction map is quadratic, so its Jacobian varies smoothly and
/// a 5% margin over a ≥50-per-axis grid with two local refinements is ample).
const LIPSCHITZ_SAFETY: f64 = 1.05;

/// Budget for the coarse Lipschitz sampling pass (total points).
const LIPSCHITZ_SAMPLE_BUDGET: usize = 1_000_000;

/// Baseline per-axis sample count for the coarse pass.
const LIPSCHITZ_SAMPLES_PER_AXIS: usize = 50;

impl ModelParams {
    /// Number of predator species.
    pub fn n(&self) -> usize {
        self.n_predators
    }

    /// Number of state components, `N + 1`.
    pub fn ncomp(&self) -> usize {
        self.n_predators + 1
    }

    /// Parse and validate a parameter set from JSON text.
    pub fn from_json(text: &str) -> Result<ModelParams> {
        let p: ModelParams = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    /// Check structural validity; every public operation calls this first.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_predators;
        if n == 0 {
            return Err(Error::param("n_predators must be at least 1"));
        }
        let check_len = |name: &str, len: usize| {
            if len != n {
                Err(Error::param(format!("{name} must have length n_predators = {n}, got {len}")))
            } else {
                Ok(())
            }
        };
        check_len("omega", self.omega.len())?;
        check_len("kpred", self.kpred.len())?;
        check_len("mu_self", self.mu_self.len())?;
        check_len("d", self.d.len())?;
        check_len("a", self.a.len())?;
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(format!("{name} must be positive and finite, got {v}")))
            }
        };
        pos("lambda", self.lambda)?;
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::param(format!("mu must be non-negative and finite, got {}", self.mu)));
        }
        pos("dprey", self.dprey)?;
        for i in 0..n {
            pos(&format!("omega[{i}]"), self.omega[i])?;
            pos(&format!("kpred[{i}]"), self.kpred[i])?;
            pos(&format!("d[{i}]"), self.d[i])?;
            if !(self.mu_self[i].is_finite() && self.mu_self[i] >= 0.0) {
                return Err(Error::param(format!("mu_self[{i}] must be non-negative, got {}", self.mu_self[i])));
            }
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::param(format!("beta must be non-negative, got {}", self.beta)));
        }
        for (i, row) in self.a.iter().enumerate() {
            if row.len() != n {
                return Err(Error::param(format!("a[{i}] must have length {n}, got {}", row.len())));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::param(format!("a[{i}][{j}] must be non-negative and finite, got {v}")));
                }
                if i == j && v != 0.0 {
                    return Err(Error::param(format!("a[{i}][{i}] must be zero (no self-competition), got {v}")));
                }
            }
        }
        Ok(())
    }

    /// True for the fully symmetric two-predator configuration (equal rates,
    /// equal diffusivities, mutual competition pattern `a_12 = a_21`). Exact
    /// float equality on purpose: symmetric configurations are authored with
    /// literally repeated entries, and the symmetry-dependent theory (mirror
    /// branches, crossing-count invariants) holds only for the exact case.
    pub fn is_symmetric_pair(&self) -> bool {
        self.n_predators == 2
            && self.omega[0] == self.omega[1]
            && self.kpred[0] == self.kpred[1]
            && self.mu_self[0] == self.mu_self[1]
            && self.d[0] == self.d[1]
            && self.a[0][1] == self.a[1][0]
    }

    /// Viability margins `λk_i − μω_i` and their signs.
    pub fn check_hypotheses(&self) -> HypothesisReport {
        let margins: Vec<f64> =
            (0..self.n_predators).map(|i| self.lambda * self.kpred[i] - self.mu * self.omega[i]).collect();
        let viable: Vec<bool> = margins.iter().map(|&m| m > 0.0).collect();
        let all_viable = viable.iter().all(|&v| v);
        HypothesisReport { margins, viable, all_viable }
    }

    /// Interaction sum `Σ_{j≠i} a_ij w_j` felt by predator `i`.
    #[inline]
    fn interaction(&self, w: &[f64], i: usize) -> f64 {
        let row = &self.a[i];
        let mut s = 0.0;
        for (j, &wj) in w.iter().enumerate() {
            if j != i {
                s += row[j] * wj;
            }
        }
        s
    }

    /// Pointwise reaction terms at state `(w_1, …, w_N, u)`.
    ///
    /// `out[i] = (−ω_i + k_i u − μ_i w_i − β Σ_{j≠i} a_ij w_j)·w_i` for the
    /// predators and `out[N] = (λ − μu − Σ k_i w_i)·u` for the prey.
    pub fn reaction(&self, state: &[f64], out: &mut [f64]) {
        let n = self.n_predators;
        debug_assert_eq!(state.len(), n + 1);
        debug_assert_eq!(out.len(), n + 1);
        let (w, u) = (&state[..n], state[n]);
        let mut hunted = 0.0;
        for i in 0..n {
            let growth = -self.omega[i] + self.kpred[i] * u - self.mu_self[i] * w[i] - self.beta * self.interaction(w, i);
            out[i] = growth * w[i];
            hunted += self.kpred[i] * w[i];
        }
        out[n] = (self.lambda - self.mu * u - hunted) * u;
    }

    /// Jacobian of [`ModelParams::reaction`] at `state`, written into `jac`
    /// (an `(N+1) × (N+1)` matrix).
    pub fn reaction_jacobian(&self, state: &[f64], jac: &mut DMatrix<f64>) {
        let n = self.n_predators;
        debug_assert_eq!(state.len(), n + 1);
        debug_assert_eq!(jac.nrows(), n + 1);
        debug_assert_eq!(jac.ncols(), n + 1);
        let (w, u) = (&state[..n], state[n]);
        for i in 0..n {
            let inter = self.interaction(w, i);
            for j in 0..n {
                jac[(i, j)] = if i == j {
                    -self.omega[i] + self.kpred[i] * u - 2.0 * self.mu_self[i] * w[i] - self.beta * inter
                } else {
                    -self.beta * self.a[i][j] * w[i]
                };
            }
            jac[(i, n)] = self.kpred[i] * w[i];
            jac[(n, i)] = -self.kpred[i] * u;
        }
        let hunted: f64 = (0..n).map(|i| self.kpred[i] * w[i]).sum();
        jac[(n, n)] = self.lambda - 2.0 * self.mu * u - hunted;
    }

    /// Derivative of the reaction terms with respect to the competition
    /// strength β: `−(Σ_{j≠i} a_ij w_j)·w_i` for predators, 0 for the prey.
    pub fn reaction_beta_derivative(&self, state: &[f64], out: &mut [f64]) {
        let n = self.n_predators;
        let w = &state[..n];
        for i in 0..n {
            out[i] = -self.interaction(w, i) * w[i];
        }
        out[n] = 0.0;
    }

    /// Upper corner of the absorbing box: `w_i ≤ max(0, (λk_i − μω_i)/(μμ_i))`
    /// and `u ≤ λ/μ`. The flow enters any ε-inflation of this box in finite
    /// time regardless of initial data, which is what makes a reaction
    /// Lipschitz bound over the box meaningful for long-time statements.
    ///
    /// Requires `μ_i > 0` for every predator — with `μ_i = 0` no a-priori
    /// predator bound exists and this is a parameter error.
    pub fn invariant_box_upper(&self) -> Result<Vec<f64>> {
        if self.mu <= 0.0 {
            return Err(Error::param(format!(
                "the absorbing box needs a prey cap λ/μ, so μ must be positive (got {})",
                self.mu
            )));
        }
        let n = self.n_predators;
        let mut upper = Vec::with_capacity(n + 1);
        for i in 0..n {
            if self.mu_self[i] <= 0.0 {
                return Err(Error::param(format!(
                    "mu_self[{i}] must be positive to bound the absorbing box (got {})",
                    self.mu_self[i]
                )));
            }
            let margin = self.lambda * self.kpred[i] - self.mu * self.omega[i];
            upper.push((margin / (self.mu * self.mu_self[i])).max(0.0));
        }
        upper.push(self.lambda / self.mu);
        Ok(upper)
    }

    /// Largest spectral norm of the reaction Jacobian over the box
    /// `Π [0, upper_k]`, by dense sampling with two 4× local refinements
    /// around the running argmax. Returns `(sup, argmax, samples_per_axis)`.
    pub fn sup_jacobian_norm_on_box(&self, upper: &[f64]) -> (f64, Vec<f64>, usize) {
        let ncomp = self.ncomp();
        assert_eq!(upper.len(), ncomp, "box dimension mismatch");
        // Keep the coarse pass within the sample budget (50 per axis for
        // small N; reduced uniformly for many predators).
        let mut per_axis = LIPSCHITZ_SAMPLES_PER_AXIS;
        while per_axis > 2 && (per_axis as f64).powi(ncomp as i32) > LIPSCHITZ_SAMPLE_BUDGET as f64 {
            per_axis -= 1;
        }
        let axes: Vec<Vec<f64>> = upper
            .iter()
            .map(|&cap| {
                if cap <= 0.0 {
                    vec![0.0]
                } else {
                    (0..per_axis).map(|i| cap * i as f64 / (per_axis - 1) as f64).collect()
                }
            })
            .collect();
        let (mut sup, mut argmax) = sup_on_product_grid(self, &axes);
        // Two refinement passes: shrink to ±(coarse spacing) around the
        // argmax and sample 4× finer, then repeat.
        let mut half_width: Vec<f64> = upper.iter().map(|&cap| if cap > 0.0 { cap / (per_axis - 1) as f64 } else { 0.0 }).collect();
        for _ in 0..2 {
            let axes: Vec<Vec<f64>> = (0..ncomp)
                .map(|k| {
                    if half_width[k] == 0.0 {
                        vec![argmax[k]]
                    } else {
                        let lo = (argmax[k] - half_width[k]).max(0.0);
                        let hi = (argmax[k] + half_width[k]).min(upper[k]);
                        (0..9).map(|i| lo + (hi - lo) * i as f64 / 8.0).collect()
                    }
                })
                .collect();
            let (s, am) = sup_on_product_grid(self, &axes);
            if s > sup {
                sup = s;
                argmax = am;
            }
            for hw in half_width.iter_mut() {
                *hw /= 4.0;
            }
        }
        (sup, argmax, per_axis)
    }

    /// Certified Lipschitz bound for the reaction map over the absorbing
    /// box: a 5%-inflated sup of the sampled Jacobian spectral norms.
    pub fn lipschitz_bound(&self) -> Result<LipschitzBound> {
        self.validate()?;
        let upper = self.invariant_box_upper()?;
        let (raw_sup, argmax, samples_per_axis) = self.sup_jacobian_norm_on_box(&upper);
        Ok(LipschitzBound { bound: LIPSCHITZ_SAFETY * raw_sup, raw_sup, argmax, box_upper: upper, samples_per_axis })
    }

    /// Rescale to unit diffusivities (`d_i = D = 1`).
    ///
    /// Requires all predator diffusivities equal (`d_i ≡ d`). With
    /// `s = D/d`, the substitution `u → s·u` maps stationary solutions of
    /// the original system to stationary solutions of the returned one:
    ///
    /// ```text
    /// λ' = λ/D,  μ' = μ·d/D²,  k_i' = k_i/D,  ω_i' = ω_i/d,
    /// μ_i' = μ_i/d,  β' = β/d,  a' = a.
    /// ```
    ///
    /// Predator profiles are unchanged; prey profiles scale by
    /// [`ModelParams::prey_scale`].
    pub fn reduce_parameters(&self) -> Result<ModelParams> {
        self.validate()?;
        let d0 = self.d[0];
        if self.d.iter().any(|&di| di != d0) {
            return Err(Error::param("reduction requires equal predator diffusivities"));
        }
        let dd = self.dprey;
        let reduced = ModelParams {
            lambda: self.lambda / dd,
            mu: self.mu * d0 / (dd * dd),
            n_predators: self.n_predators,
            omega: self.omega.iter().map(|&o| o / d0).collect(),
            kpred: self.kpred.iter().map(|&k| k / dd).collect(),
            mu_self: self.mu_self.iter().map(|&m| m / d0).collect(),
            d: vec![1.0; self.n_predators],
            dprey: 1.0,
            beta: self.beta / d0,
            a: self.a.clone(),
        };
        reduced.validate()?;
        Ok(reduced)
    }

    /// Prey rescale factor `s = D/d` for [`ModelParams::reduce_parameters`]:
    /// if `(w, u)` is stationary for `self`, then `(w, s·u)` is stationary
    /// for the reduced parameters.
    pub fn prey_scale(&self) -> f64 {
        self.dprey / self.d[0]
    }

    /// Largest diffusivity, `max(d_1, …, d_N, D)`.
    pub fn max_diffusivity(&self) -> f64 {
        self.d.iter().fold(self.dprey, |a, &v| a.max(v))
    }

    /// Smallest diffusivity, `min(d_1, …, d_N, D)`.
    pub fn min_diffusivity(&self) -> f64 {
        self.d.iter().fold(self.dprey, |a, &v| a.min(v))
    }
}

/// Sup of the Jacobian spectral norm over a product grid of sample axes.
fn sup_on_product_grid(params: &ModelParams, axes: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let ncomp = axes.len();
    let counts: Vec<usize> = axes.iter().map(|a| a.len()).collect();
    let total: usize = counts.iter().product();
    let eval = |flat: usize| -> (f64, usize) {
        let mut idx = flat;
        let mut state = vec![0.0; ncomp];
        for k in 0..ncomp {
            state[k] = axes[k][idx % counts[k]];
            idx /= counts[k];
        }
        let mut jac = DMatrix::zeros(ncomp, ncomp);
        params.reaction_jacobian(&state, &mut jac);
        (spectral_norm(&jac), flat)
    };
    let (sup, at) = (0..total)
        .into_par_iter()
        .map(eval)
        .reduce(|| (f64::NEG_INFINITY, 0), |a, b| if a.0 >= b.0 { a } else { b });
    let mut idx = at;
    let mut argmax = vec![0.0; ncomp];
    for k in 0..ncomp {
        argmax[k] = axes[k][idx % counts[k]];
        idx /= counts[k];
    }
    (sup, argmax)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    pub(crate) fn symmetric_pair() -> ModelParams {
        ModelParams {
            lambda: 1.0,
            mu: 0.05,
            n_predators: 2,
            omega: vec![1.0, 1.0],
            kpred: vec![1.0, 1.0],
            mu_self: vec![0.0, 0.0],
            d: vec![1.0, 1.0],
            dprey: 1.0,
            beta: 2.0,
            a: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        }
    }

    #[test]
    fn json_round_trip_and_unknown_key_rejection() {
        let p = symmetric_pair();
        let text = serde_json::to_string(&p).unwrap();
        let q = ModelParams::from_json(&text).unwrap();
        assert_eq!(p, q);

        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["extra_knob"] = serde_json::json!(1.0);
        let bad = serde_json::to_string(&v).unwrap();
        assert!(ModelParams::from_json(&bad).is_err());
    }

    #[test]
    fn validation_catches_structural_errors() {
        let mut p = symmetric_pair();
        p.omega = vec![1.0];
        assert!(p.validate().is_err());

        let mut p = symmetric_pair();
        p.a[0][0] = 0.5;
        assert!(p.validate().is_err());

        // μ = 0 (unsaturated prey) is structurally valid, but the absorbing
        // box and the constant catalog reject it; negative μ never validates.
        let mut p = symmetric_pair();
        p.mu = 0.0;
        assert!(p.validate().is_ok());
        assert!(p.invariant_box_upper().is_err());
        p.mu = -0.1;
        assert!(p.validate().is_err());

        let mut p = symmetric_pair();
        p.beta = -1.0;
        assert!(p.validate().is_err());

        let mut p = symmetric_pair();
        p.a[0][1] = -0.2;
        assert!(p.validate().is_err());
    }

    #[test]
    fn reaction_vanishes_at_coexistence() {
        let p = symmetric_pair();
        // Symmetric coexistence: w = (λk − μω)/(μ(μ_s + βa) + 2k²),
        // u = (2ωk + (μ_s + βa)λ)/(μ(μ_s + βa) + 2k²).
        let denom = p.mu * p.beta + 2.0;
        let w = (p.lambda - p.mu) / denom;
        let u = (2.0 + p.beta * p.lambda) / denom;
        let mut out = vec![0.0; 3];
        p.reaction(&[w, w, u], &mut out);
        for v in out {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = ModelParams {
            lambda: 1.3,
            mu: 0.07,
            n_predators: 3,
            omega: vec![1.0, 0.8, 1.1],
            kpred: vec![1.0, 1.2, 0.9],
            mu_self: vec![0.3, 0.2, 0.1],
            d: vec![1.0, 2.0, 0.5],
            dprey: 1.5,
            beta: 1.7,
            a: vec![vec![0.0, 1.0, 0.5], vec![0.7, 0.0, 1.0], vec![0.2, 0.9, 0.0]],
        };
        let state = vec![0.4, 0.8, 0.3, 5.0];
        let mut jac = DMatrix::zeros(4, 4);
        p.reaction_jacobian(&state, &mut jac);
        let mut fp = vec![0.0; 4];
        let mut fm = vec![0.0; 4];
        for j in 0..4 {
            let h = 1e-6 * (1.0 + state[j].abs());
            let mut sp = state.clone();
            sp[j] += h;
            let mut sm = state.clone();
            sm[j] -= h;
            p.reaction(&sp, &mut fp);
            p.reaction(&sm, &mut fm);
            for i in 0..4 {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!(
                    (jac[(i, j)] - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "entry ({i},{j}): analytic {} vs fd {}",
                    jac[(i, j)],
                    fd
                );
            }
        }
    }

    #[test]
    fn hypothesis_margins() {
        let mut p = symmetric_pair();
        p.omega[1] = 30.0; // λk − μω = 1 − 1.5 < 0
        let rep = p.check_hypotheses();
        assert!(rep.viable[0]);
        assert!(!rep.viable[1]);
        assert!(!rep.all_viable);
        assert_abs_diff_eq!(rep.margins[0], 0.95, epsilon = 1e-15);
        assert_abs_diff_eq!(rep.margins[1], -0.5, epsilon = 1e-15);
    }

    #[test]
    fn absorbing_box_values_and_mu_self_requirement() {
        let mut p = symmetric_pair();
        p.mu_self = vec![0.5, 0.25];
        let upper = p.invariant_box_upper().unwrap();
        assert_abs_diff_eq!(upper[0], 0.95 / (0.05 * 0.5), epsilon = 1e-12);
        assert_abs_diff_eq!(upper[1], 0.95 / (0.05 * 0.25), epsilon = 1e-12);
        assert_abs_diff_eq!(upper[2], 20.0, epsilon = 1e-12);

        let p0 = symmetric_pair(); // mu_self = 0
        assert!(p0.invariant_box_upper().is_err());
    }

    #[test]
    fn jacobian_sup_attained_at_a_vertex() {
        // The reaction Jacobian is affine in the state, so the spectral norm
        // is convex and its max over the box sits at a vertex; the sampling
        // grid contains all vertices, making the sampled sup exact.
        let mut p = symmetric_pair();
        p.mu_self = vec![0.4, 0.4];
        let upper = p.invariant_box_upper().unwrap();
        let (sup, _, _) = p.sup_jacobian_norm_on_box(&upper);
        let mut vertex_max: f64 = 0.0;
        let mut jac = DMatrix::zeros(3, 3);
        for mask in 0..8usize {
            let state: Vec<f64> =
                (0..3).map(|k| if mask >> k & 1 == 1 { upper[k] } else { 0.0 }).collect();
            p.reaction_jacobian(&state, &mut jac);
            vertex_max = vertex_max.max(spectral_norm(&jac));
        }
        assert_abs_diff_eq!(sup, vertex_max, epsilon = 1e-12 * (1.0 + vertex_max));
    }

    #[test]
    fn reduction_rescales_to_unit_diffusivities() {
        let p = ModelParams {
            lambda: 1.0,
            mu: 0.05,
            n_predators: 2,
            omega: vec![1.0, 0.9],
            kpred: vec![1.0, 1.1],
            mu_self: vec![0.2, 0.3],
            d: vec![2.0, 2.0],
            dprey: 4.0,
            beta: 3.0,
            a: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        };
        let r = p.reduce_parameters().unwrap();
        assert_eq!(r.d, vec![1.0, 1.0]);
        assert_eq!(r.dprey, 1.0);
        assert_abs_diff_eq!(r.lambda, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(r.mu, 0.05 * 2.0 / 16.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.kpred[1], 1.1 / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.omega[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.beta, 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.prey_scale(), 2.0, epsilon = 1e-15);

        // Already-unit parameters are a fixed point of the reduction.
        let unit = symmetric_pair();
        assert_eq!(unit.reduce_parameters().unwrap(), unit);

        // Unequal predator diffusivities cannot be reduced.
        let mut bad = p;
        bad.d = vec![2.0, 1.0];
        assert!(bad.reduce_parameters().is_err());
    }

    #[test]
    fn reduction_preserves_stationary_states_pointwise() {
        // For constant states the stationary system is just reaction = 0;
        // check the substitution (w, u) → (w, s·u) maps roots to roots.
        let p = ModelParams {
            lambda: 1.0,
            mu: 0.05,
            n_predators: 1,
            omega: vec![1.0],
            kpred: vec![1.0],
            mu_self: vec![0.4],
            d: vec![2.0],
            dprey: 4.0,
            beta: 0.0,
            a: vec![vec![0.0]],
        };
        // Single-predator coexistence of the original parameters.
        let denom = p.kpred[0] * p.kpred[0] + p.mu * p.mu_self[0];
        let w = (p.lambda * p.kpred[0] - p.mu * p.omega[0]) / denom;
        let u = (p.lambda * p.mu_self[0] + p.omega[0] * p.kpred[0]) / denom;
        let mut out = vec![0.0; 2];
        p.reaction(&[w, u], &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-14));

        let r = p.reduce_parameters().unwrap();
        let s = p.prey_scale();
        r.reaction(&[w, s * u], &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-14), "reduced residual {out:?}");
    }
}
