//! Cell-centered finite-volume grids on rectangles, the homogeneous-Neumann
//! Laplacian, and its eigenstructure.
//!
//! Discretization choices (shared by every solver in the crate):
//!
//! * **Cell-centered uniform grids.** Axis `k` with extent `(a, b)` and `n`
//!   cells has spacing `h = (b − a)/n` and nodes `x_i = a + (i + 1/2)·h`.
//!   In two dimensions nodes are ordered row-major with the x index fastest:
//!   `idx = iy·nx + ix`.
//! * **Reflection ghosts.** The no-flux (homogeneous Neumann) condition is
//!   imposed by mirroring the first interior value across each wall, which
//!   keeps the 3-point stencil second-order accurate *and* keeps the
//!   assembled operator symmetric negative-semidefinite.
//! * **Midpoint quadrature.** Integrals are plain cell sums,
//!   `∫f ≈ (Πh_k)·Σf_i`; for trigonometric eigenfunctions below this
//!   quadrature is exact, so discrete mode orthonormality holds to rounding.
//!
//! The Neumann eigenstructure on a rectangle is fully explicit. On `(a, b)`
//! the continuum eigenpairs are `γ_p = (πp/(b−a))²` with
//! `ψ_p(x) = √(2/(b−a))·cos(πp(x−a)/(b−a))` (`ψ_0 = 1/√(b−a)`), and the
//! *same cosine nodal vectors* are exact eigenvectors of the assembled
//! discrete operator with eigenvalues `γ_p^h = (2/h²)(1 − cos(πph/(b−a)))`
//! — the boundary rows satisfy the eigenrelation identically thanks to the
//! reflection ghosts. [`neumann_spectrum`] therefore returns closed-form
//! eigenpairs for both the analytic and the discrete flavor; the discrete
//! flavor is validated against a dense eigensolver in the tests.

use serde::Serialize;

use crate::error::{Error, Result};

/// Maximum number of grid nodes accepted by [`build_grid`]. Keeps dense
/// trajectory buffers and mode materialization within sane memory.
pub const MAX_NODES: usize = 1 << 22;

/// Uniform cell-centered grid on an interval (1D) or axis-aligned rectangle
/// (2D).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    extents: Vec<(f64, f64)>,
    n_cells: Vec<usize>,
    spacing: Vec<f64>,
}

/// Build a grid from per-axis extents and cell counts.
///
/// Requires 1 or 2 axes, strictly increasing extents, and positive cell
/// counts; the total node count must stay below [`MAX_NODES`].
pub fn build_grid(extents: &[(f64, f64)], n_cells: &[usize]) -> Result<Grid> {
    if extents.len() != n_cells.len() {
        return Err(Error::grid(format!(
            "extents ({}) and cell counts ({}) must have the same dimension",
            extents.len(),
            n_cells.len()
        )));
    }
    let dim = extents.len();
    if dim == 0 || dim > 2 {
        return Err(Error::grid(format!("dimension must be 1 or 2, got {dim}")));
    }
    let mut spacing = Vec::with_capacity(dim);
    let mut total: usize = 1;
    for (k, (&(a, b), &n)) in extents.iter().zip(n_cells).enumerate() {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::grid(format!("axis {k}: extent ({a}, {b}) is not an increasing finite interval")));
        }
        if n == 0 {
            return Err(Error::grid(format!("axis {k}: cell count must be positive")));
        }
        total = total.checked_mul(n).ok_or_else(|| Error::grid("node count overflow".to_string()))?;
        spacing.push((b - a) / n as f64);
    }
    if total > MAX_NODES {
        return Err(Error::grid(format!("total node count {total} exceeds limit {MAX_NODES}")));
    }
    Ok(Grid { dim, extents: extents.to_vec(), n_cells: n_cells.to_vec(), spacing })
}

impl Grid {
    /// Space dimension (1 or 2).
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Per-axis extents `(a, b)`.
    pub fn extents(&self) -> &[(f64, f64)] {
        &self.extents
    }

    /// Per-axis cell counts.
    pub fn n_cells(&self) -> &[usize] {
        &self.n_cells
    }

    /// Per-axis spacings.
    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Axis length `b − a`.
    pub fn len_axis(&self, axis: usize) -> f64 {
        let (a, b) = self.extents[axis];
        b - a
    }

    /// Total number of nodes.
    pub fn node_count(&self) -> usize {
        self.n_cells.iter().product()
    }

    /// Domain measure (length or area).
    pub fn measure(&self) -> f64 {
        self.extents.iter().map(|&(a, b)| b - a).product()
    }

    /// Volume of a single cell, `Π h_k`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Coordinate of node `i` along `axis`: `a + (i + 1/2)·h`.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        let (a, _) = self.extents[axis];
        a + (i as f64 + 0.5) * self.spacing[axis]
    }

    /// Full coordinate vector of the node with flat index `idx`.
    pub fn node_coord(&self, idx: usize) -> Vec<f64> {
        match self.dim {
            1 => vec![self.coord(0, idx)],
            _ => {
                let nx = self.n_cells[0];
                vec![self.coord(0, idx % nx), self.coord(1, idx / nx)]
            }
        }
    }

    /// Flat index of the 2D node `(ix, iy)`.
    pub fn index2(&self, ix: usize, iy: usize) -> usize {
        iy * self.n_cells[0] + ix
    }
}

/// Nodal scalar field on a [`Grid`].
///
/// A `Field` is a plain value vector; all geometric operations take the grid
/// explicitly so fields stay cheap to clone and slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    /// Constant field.
    pub fn constant(grid: &Grid, v: f64) -> Field {
        Field { values: vec![v; grid.node_count()] }
    }

    /// Field sampled from a closure of the node coordinates.
    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Field {
        let n = grid.node_count();
        let mut values = Vec::with_capacity(n);
        let mut xy = [0.0f64; 2];
        match grid.dim() {
            1 => {
                for i in 0..n {
                    xy[0] = grid.coord(0, i);
                    values.push(f(&xy[..1]));
                }
            }
            _ => {
                let nx = grid.n_cells()[0];
                let ny = grid.n_cells()[1];
                for iy in 0..ny {
                    xy[1] = grid.coord(1, iy);
                    for ix in 0..nx {
                        xy[0] = grid.coord(0, ix);
                        values.push(f(&xy[..2]));
                    }
                }
            }
        }
        Field { values }
    }

    /// Wrap an existing value vector, checking its length against the grid.
    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.node_count() {
            return Err(Error::ShapeMismatch { expected: grid.node_count(), got: values.len() });
        }
        Ok(Field { values })
    }

    /// Number of nodal values.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True when the field has no values (never the case on a valid grid).
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Nodal values.
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Mutable nodal values.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Sup norm `max|f|`.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
    }

    /// Minimum nodal value.
    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |a, &v| a.min(v))
    }

    /// Maximum nodal value.
    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v))
    }

    /// Oscillation `max f − min f`.
    pub fn osc(&self) -> f64 {
        self.max_value() - self.min_value()
    }
}

/// Apply the homogeneous-Neumann Laplacian (3/5-point stencil with
/// reflection ghosts).
pub fn apply_laplacian(grid: &Grid, f: &Field) -> Field {
    debug_assert_eq!(f.len(), grid.node_count());
    let v = f.as_slice();
    let mut out = vec![0.0; v.len()];
    match grid.dim() {
        1 => {
            let n = grid.n_cells()[0];
            let ih2 = 1.0 / (grid.spacing()[0] * grid.spacing()[0]);
            for i in 0..n {
                let left = if i > 0 { v[i - 1] } else { v[i] };
                let right = if i + 1 < n { v[i + 1] } else { v[i] };
                out[i] = (left - 2.0 * v[i] + right) * ih2;
            }
        }
        _ => {
            let nx = grid.n_cells()[0];
            let ny = grid.n_cells()[1];
            let ihx2 = 1.0 / (grid.spacing()[0] * grid.spacing()[0]);
            let ihy2 = 1.0 / (grid.spacing()[1] * grid.spacing()[1]);
            for iy in 0..ny {
                for ix in 0..nx {
                    let c = iy * nx + ix;
                    let l = if ix > 0 { v[c - 1] } else { v[c] };
                    let r = if ix + 1 < nx { v[c + 1] } else { v[c] };
                    let d = if iy > 0 { v[c - nx] } else { v[c] };
                    let u = if iy + 1 < ny { v[c + nx] } else { v[c] };
                    out[c] = (l - 2.0 * v[c] + r) * ihx2 + (d - 2.0 * v[c] + u) * ihy2;
                }
            }
        }
    }
    Field { values: out }
}

/// Midpoint-rule integral `∫_Ω f`.
pub fn integrate(grid: &Grid, f: &Field) -> f64 {
    grid.cell_volume() * f.as_slice().iter().sum::<f64>()
}

/// Midpoint-rule inner product `∫_Ω f·g`.
pub fn inner_product(grid: &Grid, f: &Field, g: &Field) -> f64 {
    debug_assert_eq!(f.len(), g.len());
    grid.cell_volume() * f.as_slice().iter().zip(g.as_slice()).map(|(&a, &b)| a * b).sum::<f64>()
}

/// L² norm `‖f‖ = √∫f²`.
pub fn norm_l2(grid: &Grid, f: &Field) -> f64 {
    inner_product(grid, f, f).max(0.0).sqrt()
}

/// Discrete gradient L² norm, `‖∇f‖² = Σ_faces ((f_q − f_p)/h)²·|cell|`.
///
/// This face-difference sum equals `−∫ f·Δ_h f` exactly (summation by parts
/// with reflection ghosts), so it is the natural energy seminorm of the
/// discrete operator.
pub fn grad_norm_l2(grid: &Grid, f: &Field) -> f64 {
    let v = f.as_slice();
    let vol = grid.cell_volume();
    let mut acc = 0.0;
    match grid.dim() {
        1 => {
            let n = grid.n_cells()[0];
            let ih = 1.0 / grid.spacing()[0];
            for i in 0..n.saturating_sub(1) {
                let d = (v[i + 1] - v[i]) * ih;
                acc += d * d;
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
                        let d = (v[c + 1] - v[c]) * ihx;
                        acc += d * d;
                    }
                    if iy + 1 < ny {
                        let d = (v[c + nx] - v[c]) * ihy;
                        acc += d * d;
                    }
                }
            }
        }
    }
    (acc * vol).sqrt()
}

/// How Neumann eigenvalues are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumMethod {
    /// Continuum eigenvalues `(πp/Λ)²` (summed per axis in 2D).
    Analytic,
    /// Exact eigenvalues of the assembled discrete operator,
    /// `(2/h²)(1 − cos(πph/Λ))` per axis.
    Discrete,
}

/// Leading eigenpairs of `−Δ` with homogeneous Neumann conditions, sorted
/// ascending. Index 0 is always the zero eigenvalue with constant mode.
#[derive(Debug, Clone)]
pub struct Spectrum {
    method: SpectrumMethod,
    eigenvalues: Vec<f64>,
    /// Per-axis mode indices of each eigenpair (second entry 0 in 1D).
    mode_indices: Vec<(usize, usize)>,
    modes: Vec<Field>,
}

/// One row of the serialized spectrum: eigenvalues grouped by multiplicity.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumGroup {
    /// 0-based position of the first group member in the ascending list.
    pub index: usize,
    /// Representative eigenvalue (first member of the group).
    pub eigenvalue: f64,
    /// Number of eigenvalues in the group.
    pub multiplicity: usize,
}

/// Relative tolerance used to merge eigenvalues into multiplicity groups.
const MULTIPLICITY_TOL: f64 = 1e-9;

impl Spectrum {
    /// Method used to evaluate the eigenvalues.
    pub fn method(&self) -> SpectrumMethod {
        self.method
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Number of eigenpairs.
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    /// True when no eigenpairs were requested.
    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// L²-normalized eigenfunction of the `i`-th eigenvalue.
    pub fn mode(&self, i: usize) -> &Field {
        &self.modes[i]
    }

    /// Per-axis cosine indices `(p, q)` of the `i`-th eigenpair (`q = 0` in
    /// one dimension).
    pub fn mode_indices(&self, i: usize) -> (usize, usize) {
        self.mode_indices[i]
    }

    /// Eigenvalues grouped by multiplicity (relative merge tolerance
    /// `1e-9`). This is the serialized spectrum format.
    pub fn grouped(&self) -> Vec<SpectrumGroup> {
        let mut out: Vec<SpectrumGroup> = Vec::new();
        for (i, &ev) in self.eigenvalues.iter().enumerate() {
            match out.last_mut() {
                Some(g) if (ev - g.eigenvalue).abs() <= MULTIPLICITY_TOL * (1.0 + ev.abs()) => {
                    g.multiplicity += 1;
                }
                _ => out.push(SpectrumGroup { index: i, eigenvalue: ev, multiplicity: 1 }),
            }
        }
        out
    }
}

/// Per-axis Neumann eigenvalue of cosine index `p`.
fn axis_eigenvalue(method: SpectrumMethod, p: usize, len: f64, h: f64) -> f64 {
    let theta = std::f64::consts::PI * p as f64 / len;
    match method {
        SpectrumMethod::Analytic => theta * theta,
        SpectrumMethod::Discrete => 2.0 / (h * h) * (1.0 - (theta * h).cos()),
    }
}

/// Nodal values of the L²-normalized axis cosine mode `p` on `n` cells.
fn axis_mode(p: usize, n: usize, len: f64, h: f64) -> Vec<f64> {
    let norm = if p == 0 { (1.0 / len).sqrt() } else { (2.0 / len).sqrt() };
    (0..n)
        .map(|i| {
            let x = (i as f64 + 0.5) * h;
            norm * (std::f64::consts::PI * p as f64 * x / len).cos()
        })
        .collect()
}

/// Leading `m` Neumann eigenpairs on `grid`, ascending.
///
/// Cosine indices are restricted to `p < n_cells` per axis; in that range
/// the nodal cosine vectors are exact eigenvectors of the assembled
/// discrete operator *and* exactly orthonormal under midpoint quadrature,
/// so both [`SpectrumMethod`] flavors share the same mode fields. Requesting
/// more modes than the grid resolves (`m > Π n_cells`) is a
/// [`Error::Spectrum`].
pub fn neumann_spectrum(grid: &Grid, m: usize, method: SpectrumMethod) -> Result<Spectrum> {
    if m == 0 {
        return Err(Error::Spectrum { message: "requested zero eigenpairs".into() });
    }
    let max_modes = grid.node_count();
    if m > max_modes {
        return Err(Error::Spectrum {
            message: format!("requested {m} eigenpairs but the grid resolves only {max_modes}"),
        });
    }
    // Enumerate per-axis eigenvalues and take the m smallest tensor sums.
    let mut pairs: Vec<(f64, (usize, usize))> = Vec::new();
    match grid.dim() {
        1 => {
            let n = grid.n_cells()[0];
            let len = grid.len_axis(0);
            let h = grid.spacing()[0];
            for p in 0..n {
                pairs.push((axis_eigenvalue(method, p, len, h), (p, 0)));
            }
        }
        _ => {
            let (nx, ny) = (grid.n_cells()[0], grid.n_cells()[1]);
            let (lx, ly) = (grid.len_axis(0), grid.len_axis(1));
            let (hx, hy) = (grid.spacing()[0], grid.spacing()[1]);
            let gx: Vec<f64> = (0..nx).map(|p| axis_eigenvalue(method, p, lx, hx)).collect();
            let gy: Vec<f64> = (0..ny).map(|q| axis_eigenvalue(method, q, ly, hy)).collect();
            // Keep the candidate set small: any eigenvalue beyond the m-th
            // smallest per axis cannot enter the m smallest sums.
            for (p, &gxp) in gx.iter().enumerate().take(m.min(nx)) {
                for (q, &gyq) in gy.iter().enumerate().take(m.min(ny)) {
                    pairs.push((gxp + gyq, (p, q)));
                }
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.truncate(m);

    let mut eigenvalues = Vec::with_capacity(m);
    let mut mode_indices = Vec::with_capacity(m);
    let mut modes = Vec::with_capacity(m);
    match grid.dim() {
        1 => {
            let n = grid.n_cells()[0];
            let len = grid.len_axis(0);
            let h = grid.spacing()[0];
            for (ev, (p, _)) in pairs {
                eigenvalues.push(ev);
                mode_indices.push((p, 0));
                modes.push(Field { values: axis_mode(p, n, len, h) });
            }
        }
        _ => {
            let (nx, ny) = (grid.n_cells()[0], grid.n_cells()[1]);
            let (lx, ly) = (grid.len_axis(0), grid.len_axis(1));
            let (hx, hy) = (grid.spacing()[0], grid.spacing()[1]);
            for (ev, (p, q)) in pairs {
                eigenvalues.push(ev);
                mode_indices.push((p, q));
                let mx = axis_mode(p, nx, lx, hx);
                let my = axis_mode(q, ny, ly, hy);
                let mut values = Vec::with_capacity(nx * ny);
                for vy in &my {
                    for vx in &mx {
                        values.push(vx * vy);
                    }
                }
                modes.push(Field { values });
            }
        }
    }
    Ok(Spectrum { method, eigenvalues, mode_indices, modes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn nodes_are_cell_centers() {
        let g = build_grid(&[(0.0, 1.0)], &[4]).unwrap();
        let xs: Vec<f64> = (0..4).map(|i| g.coord(0, i)).collect();
        assert_eq!(xs, vec![0.125, 0.375, 0.625, 0.875]);
        assert_abs_diff_eq!(g.cell_volume(), 0.25);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(build_grid(&[(1.0, 0.0)], &[4]).is_err());
        assert!(build_grid(&[(0.0, 1.0)], &[0]).is_err());
        assert!(build_grid(&[], &[]).is_err());
        assert!(build_grid(&[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)], &[2, 2, 2]).is_err());
        assert!(build_grid(&[(0.0, 1.0)], &[4, 4]).is_err());
    }

    #[test]
    fn midpoint_rule_is_exact_for_linear() {
        let g = build_grid(&[(0.0, 2.0), (1.0, 3.0)], &[7, 5]).unwrap();
        let f = Field::from_fn(&g, |x| 3.0 * x[0] - 2.0 * x[1] + 1.0);
        // ∫(3x − 2y + 1) over (0,2)×(1,3) = 12 − 16 + 4 = 0.
        assert_abs_diff_eq!(integrate(&g, &f), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn laplacian_annihilates_constants_and_is_symmetric() {
        let g = build_grid(&[(0.0, 1.0), (0.0, 0.5)], &[6, 4]).unwrap();
        let c = Field::constant(&g, 3.7);
        assert_eq!(apply_laplacian(&g, &c).sup_norm(), 0.0);

        let f = Field::from_fn(&g, |x| (x[0] * 5.0).sin() + x[1]);
        let h = Field::from_fn(&g, |x| x[0] * x[1] - (x[1] * 3.0).cos());
        let a = inner_product(&g, &f, &apply_laplacian(&g, &h));
        let b = inner_product(&g, &h, &apply_laplacian(&g, &f));
        assert_abs_diff_eq!(a, b, epsilon = 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn gradient_norm_matches_energy_identity() {
        let g = build_grid(&[(0.0, 2.0)], &[50]).unwrap();
        let f = Field::from_fn(&g, |x| (x[0] * 2.0).cos() + 0.3 * x[0]);
        let lhs = grad_norm_l2(&g, &f).powi(2);
        let rhs = -inner_product(&g, &f, &apply_laplacian(&g, &f));
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn discrete_modes_are_exact_eigenvectors() {
        let g = build_grid(&[(0.0, std::f64::consts::PI)], &[17]).unwrap();
        let s = neumann_spectrum(&g, 17, SpectrumMethod::Discrete).unwrap();
        for i in 0..s.len() {
            let lap = apply_laplacian(&g, s.mode(i));
            let ev = s.eigenvalues()[i];
            for (l, m) in lap.as_slice().iter().zip(s.mode(i).as_slice()) {
                assert!(
                    (l + ev * m).abs() <= 1e-9 * (1.0 + ev.abs()),
                    "mode {i}: residual {} at eigenvalue {ev}",
                    (l + ev * m).abs()
                );
            }
        }
    }

    #[test]
    fn discrete_eigenvalues_match_dense_solver() {
        let g = build_grid(&[(0.0, 1.3)], &[24]).unwrap();
        let s = neumann_spectrum(&g, 24, SpectrumMethod::Discrete).unwrap();
        // Assemble −Δ densely and eigendecompose with nalgebra as oracle.
        let n = 24;
        let ih2 = 1.0 / (g.spacing()[0] * g.spacing()[0]);
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            let mut diag = 0.0;
            if i > 0 {
                m[(i, i - 1)] = -ih2;
                diag += ih2;
            }
            if i + 1 < n {
                m[(i, i + 1)] = -ih2;
                diag += ih2;
            }
            m[(i, i)] = diag;
        }
        let mut oracle: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        oracle.sort_by(|a, b| a.total_cmp(b));
        for (a, b) in s.eigenvalues().iter().zip(&oracle) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn modes_are_orthonormal_under_quadrature() {
        let g = build_grid(&[(0.0, 1.0), (0.0, 2.0)], &[8, 6]).unwrap();
        let s = neumann_spectrum(&g, 12, SpectrumMethod::Analytic).unwrap();
        for i in 0..s.len() {
            for j in 0..s.len() {
                let ip = inner_product(&g, s.mode(i), s.mode(j));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(ip, expect, epsilon = 1e-12);
            }
        }
        // Zero mode is the normalized constant.
        assert_abs_diff_eq!(s.eigenvalues()[0], 0.0, epsilon = 1e-300);
        assert_abs_diff_eq!(s.mode(0).as_slice()[0], (1.0 / g.measure()).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn analytic_eigenvalues_on_pi_interval() {
        let g = build_grid(&[(0.0, std::f64::consts::PI)], &[64]).unwrap();
        let s = neumann_spectrum(&g, 5, SpectrumMethod::Analytic).unwrap();
        for (p, &ev) in s.eigenvalues().iter().enumerate() {
            assert_abs_diff_eq!(ev, (p * p) as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn multiplicity_grouping_on_square() {
        let g = build_grid(&[(0.0, 1.0), (0.0, 1.0)], &[16, 16]).unwrap();
        let s = neumann_spectrum(&g, 4, SpectrumMethod::Analytic).unwrap();
        let groups = s.grouped();
        // On the unit square: 0, π², π² (double), then 2π².
        assert_eq!(groups[0].multiplicity, 1);
        assert_eq!(groups[1].multiplicity, 2);
        assert_eq!(groups[1].index, 1);
    }

    #[test]
    fn spectrum_request_limits() {
        let g = build_grid(&[(0.0, 1.0)], &[8]).unwrap();
        assert!(neumann_spectrum(&g, 9, SpectrumMethod::Analytic).is_err());
        assert!(neumann_spectrum(&g, 0, SpectrumMethod::Analytic).is_err());
    }
}
