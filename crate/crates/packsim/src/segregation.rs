//! Strong-competition segregation diagnostics for the β → ∞ limit.
//!
//! As the interspecies strength β grows along a bifurcation branch, the
//! two-predator system faces a dichotomy: either the predators **segregate**
//! — densities stay bounded away from zero in amplitude while their supports
//! disentangle, so the overlap
//!
//! ```text
//! O(β) = ∫_Ω w₁ w₂ dx → small,
//! ```
//!
//! with sup norms comparable (`‖w₁‖∞/‖w₂‖∞` and its inverse bounded by a
//! constant M) and uniformly bounded Lipschitz seminorms — or the branch
//! **collapses**: amplitudes shrink like 1/β with the renormalized products
//! `β·‖w_i‖∞` approaching the finite limit `(λk − μω)/μ` while the prey
//! relaxes to its logistic cap `λ/μ`. The symmetric constant family realizes
//! the collapsing alternative exactly:
//!
//! ```text
//! β·w(β) = β(λk − μω)/(2k² + μβ)  →  (λk − μω)/μ,
//! |β·w(β) − (λk − μω)/μ| = 2k²(λk − μω)/(μ(2k² + μβ)).
//! ```
//!
//! This module post-processes continuation output ([`Branch`]) into a
//! [`SegregationReport`]: per-β overlaps, sup-norm ratios, maximal discrete
//! gradients, collapse products, and free-boundary cell sets, plus a tail
//! classification. Free boundaries are extracted two ways: the cell band
//! where the total predator density falls below a relative threshold, and
//! (1D) interface abscissae interpolated from sign changes of `w₁ − w₂`.
//!
//! An energy check accompanies the report: testing the stationary predator
//! equation against `w_i` itself and dropping the nonnegative diffusion and
//! self-limitation terms yields
//!
//! ```text
//! β Σ_{j≠i} a_ij ∫ w_i² w_j ≤ ∫ (k_i u − ω_i) w_i²,
//! ```
//!
//! so the slack returned by [`energy_slack`] must be nonnegative (up to
//! quadrature and solver noise) at every genuine branch point.

use serde::Serialize;

use crate::continuation::Branch;
use crate::error::{Error, Result};
use crate::evolve::SystemState;
use crate::grid::{inner_product, Field, Grid};
use crate::linalg::fit_line;
use crate::model::ModelParams;

/// Default relative band width for free-boundary extraction: cells with
/// `Σw_i ≤ 1e−3·max(Σw_i)` count as (numerically) empty. The exact zero set
/// has measure zero, so a band is unavoidable; its width is reported.
pub const FREE_BOUNDARY_THRESHOLD: f64 = 1e-3;

/// Tail/head overlap ratio below which (together with the amplitude floor)
/// a branch tail counts as segregating.
pub const OVERLAP_RATIO_CUTOFF: f64 = 0.2;

/// Fraction of the head predator amplitude the tail must retain to count as
/// segregating.
pub const SEGREGATING_AMPLITUDE_FLOOR: f64 = 0.1;

/// Tail/head amplitude ratio below which the tail counts as collapsing.
pub const COLLAPSING_AMPLITUDE_CUTOFF: f64 = 0.05;

/// Absolute tolerance on the energy-identity slack: quadrature plus solver
/// noise on O(1) integrals.
pub const ENERGY_SLACK_TOL: f64 = 1e-8;

/// Maximum admissible tail slope of `ln(max gradient)` against `ln β`; a
/// genuinely segregating branch has uniformly bounded Lipschitz constants,
/// so the trend must be flat or decaying.
pub const GRADIENT_TREND_LIMIT: f64 = 0.05;

/// Relative cutoff below which nodal values of `w₁ − w₂` are treated as
/// zero when locating interfaces (matches the branch zero-count filter).
const INTERFACE_CUTOFF: f64 = 1e-8;

/// Tail classification of a β sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TailClass {
    /// Amplitudes stay bounded below while the overlap decays.
    Segregating,
    /// Amplitudes vanish; `β‖w_i‖∞` approaches a finite limit.
    Collapsing,
    /// Neither separator fired; the sweep is inconclusive.
    Unclassified,
}

impl std::fmt::Display for TailClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TailClass::Segregating => "SEGREGATING",
            TailClass::Collapsing => "COLLAPSING",
            TailClass::Unclassified => "UNCLASSIFIED",
        };
        f.write_str(s)
    }
}

/// Renormalized amplitudes at one β: the products `β·‖w_i‖∞` and the gap
/// `sup|u − λ/μ|` to the logistic prey cap.
#[derive(Debug, Clone, Serialize)]
pub struct CollapseProduct {
    /// `β·‖w_i‖∞` per predator.
    pub beta_w_sup: Vec<f64>,
    /// `sup|u − λ/μ|`.
    pub u_gap: f64,
}

/// Per-β segregation diagnostics along a branch, sorted by ascending β.
#[derive(Debug, Clone, Serialize)]
pub struct SegregationReport {
    /// Sweep values, ascending.
    pub betas: Vec<f64>,
    /// `∫ w₁w₂` per β (nonnegative for physical states).
    pub overlaps: Vec<f64>,
    /// `‖w₁‖∞ / ‖w₂‖∞` per β.
    pub sup_ratio: Vec<f64>,
    /// Maximal discrete gradient magnitude over the predators per β.
    pub lip_estimate: Vec<f64>,
    /// Renormalized amplitudes per β.
    pub collapse_products: Vec<CollapseProduct>,
    /// Node sets where `Σw_i` falls below the reporting band per β.
    pub free_boundary_cells: Vec<Vec<usize>>,
    /// Relative band width used for `free_boundary_cells`.
    pub threshold: f64,
    /// Tail classification.
    pub classification: TailClass,
}

/// Norm-comparability estimate: the constant M with
/// `1/M ≤ ‖w₁‖∞/‖w₂‖∞ ≤ M` over the sweep tail, and where it is attained.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ComparabilityEstimate {
    /// `max(r, 1/r)` maximized over the tail.
    pub m: f64,
    /// The β attaining the maximum.
    pub at_beta: f64,
}

/// Free-boundary extraction: the numerically empty band and, in 1D, the
/// interpolated interface abscissae.
#[derive(Debug, Clone, Serialize)]
pub struct FreeBoundary {
    /// Node indices with `Σw_i ≤ band`.
    pub cells: Vec<usize>,
    /// Absolute band height `threshold·max(Σw_i)`.
    pub band: f64,
    /// Cell count × cell volume.
    pub measure: f64,
    /// 1D two-predator interfaces: zeros of `w₁ − w₂` by linear
    /// interpolation between adjacent nodes (empty otherwise).
    pub interfaces: Vec<f64>,
}

fn require_two_predators(state: &SystemState) -> Result<()> {
    if state.fields.len() != 3 {
        return Err(Error::param(format!(
            "segregation diagnostics need two predators and one prey, got {} components",
            state.fields.len()
        )));
    }
    Ok(())
}

fn require_same_grid(grid: &Grid, state: &SystemState) -> Result<()> {
    if state.grid.node_count() != grid.node_count()
        || state.grid.n_cells() != grid.n_cells()
        || state.grid.extents() != grid.extents()
    {
        return Err(Error::ShapeMismatch { expected: grid.node_count(), got: state.grid.node_count() });
    }
    Ok(())
}

/// Overlap `∫_Ω w₁ w₂` by midpoint quadrature.
pub fn overlap(grid: &Grid, state: &SystemState) -> Result<f64> {
    require_two_predators(state)?;
    require_same_grid(grid, state)?;
    Ok(inner_product(grid, &state.fields[0], &state.fields[1]))
}

/// Maximal discrete gradient magnitude of `f`: the largest per-axis face
/// difference `|f_q − f_p|/h` over the grid (a finite-difference surrogate
/// for the Lipschitz seminorm).
pub fn max_gradient(grid: &Grid, f: &Field) -> f64 {
    let v = f.as_slice();
    let mut best = 0.0_f64;
    match grid.dim() {
        1 => {
            let ih = 1.0 / grid.spacing()[0];
            for i in 1..grid.n_cells()[0] {
                best = best.max((v[i] - v[i - 1]).abs() * ih);
            }
        }
        _ => {
            let nx = grid.n_cells()[0];
            let ny = grid.n_cells()[1];
            let ihx = 1.0 / grid.spacing()[0];
            let ihy = 1.0 / grid.spacing()[1];
            for iy in 0..ny {
                for ix in 0..nx {
                    let c = iy * nx + ix;
                    if ix + 1 < nx {
                        best = best.max((v[c + 1] - v[c]).abs() * ihx);
                    }
                    if iy + 1 < ny {
                        best = best.max((v[c + nx] - v[c]).abs() * ihy);
                    }
                }
            }
        }
    }
    best
}

/// Per-β maximal predator gradient along a branch, sorted by ascending β.
pub fn lipschitz_profile(branch: &Branch) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = branch
        .points
        .iter()
        .map(|pt| {
            let npred = pt.state.fields.len().saturating_sub(1);
            let g = pt.state.fields[..npred]
                .iter()
                .map(|f| max_gradient(&pt.state.grid, f))
                .fold(0.0_f64, f64::max);
            (pt.beta, g)
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Tail slope of `ln(gradient)` against `ln β` over the last half of the
/// profile. Nonpositive values certify a bounded Lipschitz trend; entries
/// with zero gradient carry no information and are skipped. Returns 0 when
/// fewer than two usable tail points remain.
pub fn gradient_trend(profile: &[(f64, f64)]) -> f64 {
    let tail = &profile[profile.len() / 2..];
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &(beta, g) in tail {
        if beta > 0.0 && g > 0.0 {
            xs.push(beta.ln());
            ys.push(g.ln());
        }
    }
    match fit_line(&xs, &ys) {
        Ok((slope, _)) => slope,
        Err(_) => 0.0,
    }
}

/// Cells where the total predator density `Σw_i` falls below
/// `threshold·max(Σw_i)`, with the band height, a measure estimate (cell
/// count × cell volume), and — in 1D with two predators — the interface
/// abscissae interpolated from sign changes of `w₁ − w₂`.
pub fn free_boundary(grid: &Grid, state: &SystemState, threshold: f64) -> Result<FreeBoundary> {
    require_same_grid(grid, state)?;
    if !(threshold >= 0.0) {
        return Err(Error::param(format!("free-boundary threshold must be ≥ 0, got {threshold}")));
    }
    let npred = state.fields.len().saturating_sub(1);
    let n = grid.node_count();
    let mut total = vec![0.0; n];
    for f in &state.fields[..npred] {
        for (t, &v) in total.iter_mut().zip(f.as_slice()) {
            *t += v;
        }
    }
    let max_total = total.iter().fold(0.0_f64, |m, &v| m.max(v));
    let band = threshold * max_total;
    let cells: Vec<usize> =
        (0..n).filter(|&i| total[i] <= band).collect();
    let measure = cells.len() as f64 * grid.cell_volume();

    let mut interfaces = Vec::new();
    if grid.dim() == 1 && npred == 2 {
        let w1 = state.fields[0].as_slice();
        let w2 = state.fields[1].as_slice();
        let v: Vec<f64> = w1.iter().zip(w2).map(|(&a, &b)| a - b).collect();
        let vmax = v.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
        let cut = INTERFACE_CUTOFF * vmax;
        let h = grid.spacing()[0];
        let mut last: Option<(usize, f64)> = None;
        for (i, &x) in v.iter().enumerate() {
            if x.abs() <= cut {
                continue;
            }
            if let Some((j, prev)) = last {
                if prev * x < 0.0 {
                    // Interpolate between the flanking significant nodes.
                    let xa = grid.coord(0, j);
                    let xb = grid.coord(0, i);
                    let frac = prev / (prev - x);
                    interfaces.push(xa + frac * (xb - xa));
                    let _ = h;
                }
            }
            last = Some((i, x));
        }
    }

    Ok(FreeBoundary { cells, band, measure, interfaces })
}

/// Per-predator slack of the stationary energy inequality
/// `∫(k_i u − ω_i)w_i² − β Σ_{j≠i} a_ij ∫ w_i² w_j`, which equals
/// `d_i∫|∇w_i|² + μ_i∫w_i³ ≥ 0` at exact steady states.
pub fn energy_slack(params: &ModelParams, beta: f64, state: &SystemState) -> Result<Vec<f64>> {
    let npred = params.n_predators;
    if state.fields.len() != npred + 1 {
        return Err(Error::ShapeMismatch { expected: npred + 1, got: state.fields.len() });
    }
    let vol = state.grid.cell_volume();
    let u = state.fields[npred].as_slice();
    let mut out = Vec::with_capacity(npred);
    for i in 0..npred {
        let wi = state.fields[i].as_slice();
        let mut gain = 0.0;
        let mut paid = 0.0;
        for (node, (&w, &uu)) in wi.iter().zip(u).enumerate() {
            let w2 = w * w;
            gain += (params.kpred[i] * uu - params.omega[i]) * w2;
            let mut comp = 0.0;
            for (j, aij) in params.a[i].iter().enumerate() {
                if j != i {
                    comp += aij * state.fields[j].as_slice()[node];
                }
            }
            paid += beta * comp * w2;
        }
        out.push((gain - paid) * vol);
    }
    Ok(out)
}

/// Assemble the segregation report for a continued branch: per-β overlap,
/// sup-norm ratio, maximal gradient, collapse products, and free-boundary
/// cells (at [`FREE_BOUNDARY_THRESHOLD`]), classified by comparing the
/// sweep tail against its head.
pub fn beta_sweep(params: &ModelParams, branch: &Branch) -> Result<SegregationReport> {
    if branch.points.len() < 5 {
        return Err(Error::InsufficientData { needed: 5, got: branch.points.len() });
    }
    let mut order: Vec<usize> = (0..branch.points.len()).collect();
    order.sort_by(|&a, &b| branch.points[a].beta.total_cmp(&branch.points[b].beta));

    let cap = params.lambda / params.mu;
    let mut betas = Vec::with_capacity(order.len());
    let mut overlaps = Vec::with_capacity(order.len());
    let mut sup_ratio = Vec::with_capacity(order.len());
    let mut lip_estimate = Vec::with_capacity(order.len());
    let mut collapse_products = Vec::with_capacity(order.len());
    let mut free_boundary_cells = Vec::with_capacity(order.len());
    let mut amplitudes = Vec::with_capacity(order.len());

    for &idx in &order {
        let pt = &branch.points[idx];
        let state = &pt.state;
        require_two_predators(state)?;
        let grid = &state.grid;
        let w1 = &state.fields[0];
        let w2 = &state.fields[1];
        let u = &state.fields[2];

        betas.push(pt.beta);
        overlaps.push(overlap(grid, state)?);
        sup_ratio.push(w1.sup_norm() / w2.sup_norm());
        lip_estimate.push(max_gradient(grid, w1).max(max_gradient(grid, w2)));
        let beta_w_sup = vec![pt.beta * w1.sup_norm(), pt.beta * w2.sup_norm()];
        let u_gap = u.as_slice().iter().fold(0.0_f64, |m, &v| m.max((v - cap).abs()));
        collapse_products.push(CollapseProduct { beta_w_sup, u_gap });
        free_boundary_cells.push(free_boundary(grid, state, FREE_BOUNDARY_THRESHOLD)?.cells);
        amplitudes.push(w1.sup_norm().max(w2.sup_norm()));
    }

    let amp_head = amplitudes[0];
    let amp_tail = *amplitudes.last().expect("nonempty");
    let amp_ratio = if amp_head > 0.0 { amp_tail / amp_head } else { 0.0 };
    let overlap_ratio = if overlaps[0] > 0.0 { overlaps.last().expect("nonempty") / overlaps[0] } else { 0.0 };
    let classification = if amp_ratio < COLLAPSING_AMPLITUDE_CUTOFF {
        TailClass::Collapsing
    } else if amp_ratio > SEGREGATING_AMPLITUDE_FLOOR && overlap_ratio < OVERLAP_RATIO_CUTOFF {
        TailClass::Segregating
    } else {
        TailClass::Unclassified
    };

    Ok(SegregationReport {
        betas,
        overlaps,
        sup_ratio,
        lip_estimate,
        collapse_products,
        free_boundary_cells,
        threshold: FREE_BOUNDARY_THRESHOLD,
        classification,
    })
}

/// Norm-comparability constant over the tail (last half) of the sweep:
/// `M = max(r, 1/r)` maximized over tail β, with the attaining β. Returns
/// NaNs for an empty report.
pub fn comparability(report: &SegregationReport) -> ComparabilityEstimate {
    let n = report.betas.len();
    let tail = n / 2..n;
    let mut best = ComparabilityEstimate { m: f64::NAN, at_beta: f64::NAN };
    for i in tail {
        let r = report.sup_ratio[i];
        let m = r.max(1.0 / r);
        if best.m.is_nan() || m > best.m {
            best = ComparabilityEstimate { m, at_beta: report.betas[i] };
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuation::{
        bifurcation_points, branch_switch, continue_branch, BifurcationPoint, BranchPoint,
        ContinuationConfig, Termination,
    };
    use crate::equilibria::{coexist_symmetric_point, steady_newton, NewtonConfig};
    use crate::grid::{build_grid, neumann_spectrum, SpectrumMethod};
    use crate::model::StatePoint;
    use approx::assert_abs_diff_eq;

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

    fn mode_one_branch(n: usize, beta_max: f64) -> (ModelParams, Branch) {
        let p = reference_pair(0.0);
        let g = pi_grid(n);
        let spec = neumann_spectrum(&g, 6, SpectrumMethod::Analytic).unwrap();
        let bp = bifurcation_points(&p, &spec).unwrap()[0].clone();
        let seed = branch_switch(&p, &g, &bp, 1e-2 * 0.45).unwrap();
        let config = ContinuationConfig { beta_max, ..ContinuationConfig::default() };
        let branch = continue_branch(&p, &bp, &seed, 1.0, &config).unwrap();
        assert_eq!(branch.termination, Termination::UnboundedInBeta);
        (p, branch)
    }

    #[test]
    fn overlap_matches_closed_forms() {
        let g = pi_grid(64);
        // Disjoint supports: product vanishes identically.
        let mid = std::f64::consts::PI / 2.0;
        let fields = vec![
            Field::from_fn(&g, |x| if x[0] < mid { 1.0 } else { 0.0 }),
            Field::from_fn(&g, |x| if x[0] >= mid { 2.0 } else { 0.0 }),
            Field::constant(&g, 1.0),
        ];
        let st = SystemState::from_fields(0.0, &g, fields).unwrap();
        assert_eq!(overlap(&g, &st).unwrap(), 0.0);

        // Constants integrate exactly under the midpoint rule.
        let st = SystemState::constant(&g, &StatePoint { w: vec![0.45, 0.45], u: 2.0 });
        assert_abs_diff_eq!(
            overlap(&g, &st).unwrap(),
            0.45 * 0.45 * std::f64::consts::PI,
            epsilon = 1e-12
        );

        // Grid mismatch and wrong component count are rejected.
        let other = pi_grid(32);
        assert!(matches!(overlap(&other, &st), Err(Error::ShapeMismatch { .. })));
        let single = SystemState::constant(&g, &StatePoint { w: vec![1.0], u: 1.0 });
        assert!(matches!(overlap(&g, &single), Err(Error::Param { .. })));
    }

    #[test]
    fn symmetric_family_collapses_with_calibrated_products() {
        // β·w − (λk−μω)/μ obeys the closed-form gap exactly.
        for beta in [5.0, 50.0, 500.0] {
            let p = reference_pair(beta);
            let pt = coexist_symmetric_point(&p).unwrap();
            let m = p.lambda * p.kpred[0] - p.mu * p.omega[0];
            let gap = (beta * pt.w[0] - m / p.mu).abs();
            let closed = 2.0 * m / (p.mu * (2.0 + p.mu * beta));
            assert_abs_diff_eq!(gap, closed, epsilon = 1e-10);
            assert!(gap <= 2.0 * m / (p.mu * p.mu * beta) + 1e-12);
        }

        // Sampling the family in β classifies as collapsing with
        // β·w → (λk−μω)/μ = 19.
        let g = pi_grid(32);
        let p0 = reference_pair(0.0);
        let betas = [4.444444444444445, 10.0, 50.0, 200.0, 500.0, 1000.0];
        let points: Vec<BranchPoint> = betas
            .iter()
            .map(|&beta| {
                let mut p = p0.clone();
                p.beta = beta;
                let cp = coexist_symmetric_point(&p).unwrap();
                let state = SystemState::constant(&g, &cp);
                BranchPoint { beta, state, residual: 0.0, zero_count: 0, amplitude: 0.0 }
            })
            .collect();
        let branch = Branch {
            origin: BifurcationPoint {
                n: 0,
                gamma_n: 0.0,
                beta_n: betas[0],
                multiplicity: 1,
                odd: true,
            },
            points,
            termination: Termination::StepLimit,
        };
        let report = beta_sweep(&p0, &branch).unwrap();
        assert_eq!(report.classification, TailClass::Collapsing);
        let last = report.collapse_products.last().unwrap();
        let m = 0.95;
        let bound = 2.0 * m / (p0.mu * p0.mu * 1000.0);
        for bw in &last.beta_w_sup {
            assert!((bw - 19.0).abs() <= bound + 1e-12, "β·w = {bw}");
        }
        // Constants carry zero gradient.
        assert!(report.lip_estimate.iter().all(|&gk| gk == 0.0));
    }

    #[test]
    fn artificial_reciprocal_sequence_collapses() {
        let g = pi_grid(16);
        let p = reference_pair(0.0);
        let c = 3.0;
        let cap = p.lambda / p.mu;
        let betas = [10.0, 30.0, 100.0, 300.0, 1000.0];
        let points: Vec<BranchPoint> = betas
            .iter()
            .map(|&beta| {
                let state = SystemState::constant(
                    &g,
                    &StatePoint { w: vec![c / beta, c / beta], u: cap - 1.0 / beta },
                );
                BranchPoint { beta, state, residual: 0.0, zero_count: 0, amplitude: 0.0 }
            })
            .collect();
        let branch = Branch {
            origin: BifurcationPoint { n: 0, gamma_n: 0.0, beta_n: 10.0, multiplicity: 1, odd: true },
            points,
            termination: Termination::StepLimit,
        };
        let report = beta_sweep(&p, &branch).unwrap();
        assert_eq!(report.classification, TailClass::Collapsing);
        for cpd in &report.collapse_products {
            for bw in &cpd.beta_w_sup {
                assert_abs_diff_eq!(*bw, c, epsilon = 1e-12);
            }
        }
        assert!(report.collapse_products.last().unwrap().u_gap < 1e-2);

        // Fewer than five points is not a sweep.
        let short = Branch {
            origin: branch.origin.clone(),
            points: branch.points[..4].to_vec(),
            termination: Termination::StepLimit,
        };
        assert!(matches!(
            beta_sweep(&p, &short),
            Err(Error::InsufficientData { needed: 5, got: 4 })
        ));
    }

    #[test]
    fn continued_branch_segregates_with_decaying_overlap() {
        let (p, branch) = mode_one_branch(64, 500.0);
        let report = beta_sweep(&p, &branch).unwrap();
        assert_eq!(report.classification, TailClass::Segregating);

        // Overlap decays: tail below 0.2× (and the β=200 point below 0.1×)
        // of the value near twice the critical strength.
        let beta1 = branch.origin.beta_n;
        let at = |target: f64| -> usize {
            (0..report.betas.len())
                .min_by(|&a, &b| {
                    (report.betas[a] - target).abs().total_cmp(&(report.betas[b] - target).abs())
                })
                .unwrap()
        };
        let head = at(2.0 * beta1);
        let o_head = report.overlaps[head];
        let o_tail = *report.overlaps.last().unwrap();
        assert!(o_tail < OVERLAP_RATIO_CUTOFF * o_head, "tail {o_tail} vs head {o_head}");
        let o_200 = report.overlaps[at(200.0)];
        assert!(o_200 < 0.1 * o_head, "overlap {o_200} at β=200 vs {o_head}");

        // Mirror symmetry forces equal sup norms: M = 1 ± 1e−6, and the
        // mirrored branch reports the identical constant.
        let m = comparability(&report);
        assert_abs_diff_eq!(m.m, 1.0, epsilon = 1e-6);
        let mirrored = Branch {
            origin: branch.origin.clone(),
            points: branch
                .points
                .iter()
                .map(|pt| {
                    let mut st = pt.state.clone();
                    st.fields.swap(0, 1);
                    BranchPoint { state: st, ..pt.clone() }
                })
                .collect(),
            termination: branch.termination,
        };
        let mirror_report = beta_sweep(&p, &mirrored).unwrap();
        let mm = comparability(&mirror_report);
        assert_abs_diff_eq!(m.m, mm.m, epsilon = 1e-12);

        // Uniform bounds along the whole sweep: prey under its logistic
        // cap, total density under the invariant-region bound.
        let cap = p.lambda / p.mu;
        let total_cap = (p.lambda + p.omega[0]) * p.lambda / (p.mu * p.omega[0]);
        for pt in &branch.points {
            let u = pt.state.fields[2].as_slice();
            let w1 = pt.state.fields[0].as_slice();
            let w2 = pt.state.fields[1].as_slice();
            for n in 0..u.len() {
                assert!(u[n] >= -1e-10 && u[n] <= cap + 1e-8);
                assert!(u[n] + w1[n] + w2[n] <= total_cap + 1e-8);
            }
        }

        // Energy inequality holds with nonnegative slack at every point.
        for pt in &branch.points {
            for s in energy_slack(&p, pt.beta, &pt.state).unwrap() {
                assert!(s >= -ENERGY_SLACK_TOL, "slack {s} at β = {}", pt.beta);
            }
        }
    }

    #[test]
    fn gradients_stay_bounded_along_the_tail() {
        // The Lipschitz bound is asymptotic — the interface gradient still
        // creeps up ~5% per decade at β = 500 — so sweep deep enough for
        // the trend to flatten below the growth separator.
        let (_p, branch) = mode_one_branch(64, 2000.0);
        let profile = lipschitz_profile(&branch);
        let beta_max = profile.last().unwrap().0;
        let decade: Vec<&(f64, f64)> =
            profile.iter().filter(|(b, _)| *b >= beta_max / 10.0).collect();
        let gmin = decade.iter().map(|(_, g)| *g).fold(f64::INFINITY, f64::min);
        let gmax = decade.iter().map(|(_, g)| *g).fold(0.0_f64, f64::max);
        assert!(gmax < 2.0 * gmin, "gradient varied {gmin}..{gmax} across the tail decade");
        let slope = gradient_trend(&profile);
        assert!(slope <= GRADIENT_TREND_LIMIT, "log-log gradient trend {slope}");
    }

    #[test]
    fn gradient_estimate_survives_refinement() {
        let (p, branch) = mode_one_branch(64, 30.0);
        let pt = branch.points.last().unwrap();
        let coarse = max_gradient(&pt.state.grid, &pt.state.fields[0]);

        // Re-solve on a twice-finer grid seeded by linear interpolation.
        let fine = pi_grid(128);
        let cg = &pt.state.grid;
        let interp = |f: &Field| {
            let v = f.as_slice();
            Field::from_fn(&fine, |x| {
                let h = cg.spacing()[0];
                let s = (x[0] / h - 0.5).clamp(0.0, (v.len() - 1) as f64);
                let j = (s.floor() as usize).min(v.len() - 2);
                let frac = s - j as f64;
                v[j] * (1.0 - frac) + v[j + 1] * frac
            })
        };
        let guess = SystemState::from_fields(
            0.0,
            &fine,
            vec![interp(&pt.state.fields[0]), interp(&pt.state.fields[1]), interp(&pt.state.fields[2])],
        )
        .unwrap();
        let mut at = p.clone();
        at.beta = pt.beta;
        let res = steady_newton(&at, &guess, &NewtonConfig::default()).unwrap();
        assert!(res.converged);
        let refined = max_gradient(&fine, &res.state.fields[0]);
        assert!(
            (refined - coarse).abs() < 0.1 * coarse,
            "gradient moved {coarse} → {refined} under refinement"
        );
    }

    #[test]
    fn free_boundary_bands_shrink_with_threshold() {
        let (_p, branch) = mode_one_branch(64, 500.0);
        let pt = branch.points.last().unwrap();
        let grid = &pt.state.grid;

        // Single interface near the zero of w₁ − w₂, interpolated.
        let fb = free_boundary(grid, &pt.state, FREE_BOUNDARY_THRESHOLD).unwrap();
        assert_eq!(fb.interfaces.len(), 1);
        assert_eq!(fb.interfaces.len(), pt.zero_count);
        let mid = std::f64::consts::PI / 2.0;
        assert!((fb.interfaces[0] - mid).abs() < 0.2, "interface at {}", fb.interfaces[0]);

        // Band measure is monotone in the threshold.
        let mut measures = Vec::new();
        for t in [0.5, 0.2, 0.05, 0.0] {
            measures.push(free_boundary(grid, &pt.state, t).unwrap().measure);
        }
        for w in measures.windows(2) {
            assert!(w[1] <= w[0]);
        }
        // Exact zero set is generically empty on floating-point data.
        assert_eq!(*measures.last().unwrap(), 0.0);

        // Constant coexistence state: the whole domain is populated.
        let g = pi_grid(16);
        let st = SystemState::constant(&g, &StatePoint { w: vec![0.4, 0.4], u: 2.0 });
        let fb = free_boundary(&g, &st, FREE_BOUNDARY_THRESHOLD).unwrap();
        assert!(fb.cells.is_empty());
        assert_eq!(fb.measure, 0.0);
        assert!(fb.interfaces.is_empty());
    }
}
