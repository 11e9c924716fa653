//! Small dense/banded linear-algebra kernels shared by the solvers.
//!
//! The implicit diffusion step and the Newton/continuation linearizations all
//! produce *banded* systems once the unknowns are ordered node-major
//! (components interleaved at each grid node): couplings reach at most one
//! grid node away, so the half-bandwidth is `ncomp` in one dimension and
//! `ncomp * nx` in two. [`BandedMatrix`] implements LU factorization with
//! partial pivoting confined to the band — O(n·b²) instead of O(n³) — which
//! is what keeps 512-node Newton solves and long arclength continuations
//! cheap. Factorizations are checked against a pivot-ratio condition
//! estimate so near-singular linearizations surface as
//! [`Error::SingularJacobian`] instead of garbage updates.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// General banded matrix with lower bandwidth `kl` and upper bandwidth `ku`.
///
/// Storage is row-major windows of width `2·kl + ku + 1`; the extra `kl`
/// super-diagonals hold fill-in produced by row interchanges during
/// factorization (the classical bound for banded Gaussian elimination with
/// partial pivoting).
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// Stored window width per row: `2*kl + ku + 1`.
    width: usize,
    /// `data[i * width + (j - i + kl)]` holds entry `(i, j)`.
    data: Vec<f64>,
}

impl BandedMatrix {
    /// Zero matrix of size `n` with bandwidths `(kl, ku)`.
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandedMatrix { n, kl, ku, width, data: vec![0.0; n * width] }
    }

    /// Matrix dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Lower bandwidth.
    pub fn kl(&self) -> usize {
        self.kl
    }

    /// Upper bandwidth (excluding pivoting fill).
    pub fn ku(&self) -> usize {
        self.ku
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> Option<usize> {
        let d = j as isize - i as isize + self.kl as isize;
        if d < 0 || d >= self.width as isize || j >= self.n {
            None
        } else {
            Some(i * self.width + d as usize)
        }
    }

    /// Entry `(i, j)`; zero outside the stored band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.offset(i, j) {
            Some(o) => self.data[o],
            None => 0.0,
        }
    }

    /// Set entry `(i, j)`. Panics if `(i, j)` lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let o = self
            .offset(i, j)
            .unwrap_or_else(|| panic!("banded entry ({i}, {j}) outside band kl={} ku={}", self.kl, self.ku));
        self.data[o] = v;
    }

    /// Add `v` to entry `(i, j)`. Panics if `(i, j)` lies outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let o = self
            .offset(i, j)
            .unwrap_or_else(|| panic!("banded entry ({i}, {j}) outside band kl={} ku={}", self.kl, self.ku));
        self.data[o] += v;
    }

    /// Dense copy (for tests and small oracles).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.kl + self.ku).min(self.n.saturating_sub(1));
            for j in lo..=hi {
                m[(i, j)] = self.get(i, j);
            }
        }
        m
    }

    /// Matrix–vector product `A x` (band-limited).
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "mul_vec length mismatch");
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let mut s = 0.0;
            for j in lo..=hi {
                s += self.get(i, j) * x[j];
            }
            y[i] = s;
        }
        y
    }

    /// LU-factorize in place with partial pivoting confined to the band.
    ///
    /// Fails with [`Error::SingularJacobian`] on an exactly zero pivot;
    /// near-singularity is reported through
    /// [`FactoredBanded::condition_estimate`], which callers compare against
    /// their own limits.
    pub fn factor(mut self) -> Result<FactoredBanded> {
        let n = self.n;
        let kl = self.kl;
        let ku = self.ku;
        let mut ipiv = vec![0usize; n];
        for k in 0..n {
            let rmax = (k + kl).min(n - 1);
            // Partial pivoting: the largest magnitude in column k among the
            // rows that still hold a nonzero there.
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for r in (k + 1)..=rmax {
                let v = self.get(r, k).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 {
                return Err(Error::SingularJacobian { condition: f64::INFINITY });
            }
            ipiv[k] = p;
            let jmax = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let a = self.get(k, j);
                    let b = self.get(p, j);
                    // Both offsets are in range: see the fill bound in the
                    // struct docs.
                    self.set(k, j, b);
                    self.set(p, j, a);
                }
            }
            let pivot = self.get(k, k);
            for r in (k + 1)..=rmax {
                let m = self.get(r, k) / pivot;
                self.set(r, k, m); // store the multiplier in place
                if m != 0.0 {
                    for j in (k + 1)..=jmax {
                        let v = self.get(r, j) - m * self.get(k, j);
                        self.set(r, j, v);
                    }
                }
            }
        }
        Ok(FactoredBanded { mat: self, ipiv })
    }
}

/// LU factorization of a [`BandedMatrix`] with its pivot sequence.
#[derive(Debug, Clone)]
pub struct FactoredBanded {
    mat: BandedMatrix,
    ipiv: Vec<usize>,
}

impl FactoredBanded {
    /// Matrix dimension.
    pub fn n(&self) -> usize {
        self.mat.n
    }

    /// Cheap condition estimate: ratio of the largest to smallest pivot
    /// magnitude on the U diagonal. An overestimate of 1 is possible but it
    /// reliably flags the (near-)singular linearizations this crate meets —
    /// Jacobians at bifurcation points and folds.
    pub fn condition_estimate(&self) -> f64 {
        let mut dmin = f64::INFINITY;
        let mut dmax: f64 = 0.0;
        for k in 0..self.mat.n {
            let d = self.mat.get(k, k).abs();
            dmin = dmin.min(d);
            dmax = dmax.max(d);
        }
        if dmin == 0.0 {
            f64::INFINITY
        } else {
            dmax / dmin
        }
    }

    /// Solve `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.mat.n;
        assert_eq!(b.len(), n, "solve length mismatch");
        let kl = self.mat.kl;
        let ku = self.mat.ku;
        // Forward: replay row interchanges and apply the stored multipliers.
        for k in 0..n {
            let p = self.ipiv[k];
            if p != k {
                b.swap(k, p);
            }
            let rmax = (k + kl).min(n - 1);
            let bk = b[k];
            for r in (k + 1)..=rmax {
                b[r] -= self.mat.get(r, k) * bk;
            }
        }
        // Back substitution within the (filled) band.
        for k in (0..n).rev() {
            let jmax = (k + kl + ku).min(n - 1);
            let mut s = b[k];
            for j in (k + 1)..=jmax {
                s -= self.mat.get(k, j) * b[j];
            }
            b[k] = s / self.mat.get(k, k);
        }
    }

    /// Solve `A x = b`, returning a fresh vector.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Spectral norm (largest singular value) of a dense matrix, computed from
/// the symmetric eigendecomposition of `MᵀM`.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let mtm = m.transpose() * m;
    let eig = mtm.symmetric_eigen();
    eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v)).max(0.0).sqrt()
}

/// Least-squares straight line `y ≈ slope·x + intercept`.
///
/// Fails with [`Error::InsufficientData`] for fewer than two points and
/// [`Error::Fit`] when the abscissae are (numerically) all equal.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::Fit { message: format!("mismatched lengths {} vs {}", xs.len(), ys.len()) });
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: xs.len() });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let scale = xs.iter().fold(0.0f64, |a, &x| a.max(x.abs())).max(1.0);
    if sxx <= 1e-300 * scale * scale {
        return Err(Error::Fit { message: "degenerate abscissae in line fit".into() });
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_banded(rng: &mut StdRng, n: usize, kl: usize, ku: usize) -> BandedMatrix {
        let mut a = BandedMatrix::zeros(n, kl, ku);
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let hi = (i + ku).min(n - 1);
            for j in lo..=hi {
                a.set(i, j, rng.gen_range(-1.0..1.0));
            }
            // Keep the test matrices comfortably nonsingular.
            a.add(i, i, 4.0);
        }
        a
    }

    #[test]
    fn banded_lu_matches_dense_lu() {
        let mut rng = StdRng::seed_from_u64(7);
        for &(n, kl, ku) in &[(1usize, 0usize, 0usize), (5, 1, 1), (40, 3, 2), (60, 5, 9), (33, 7, 0)] {
            let a = random_banded(&mut rng, n, kl, ku);
            let dense = a.to_dense();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = a.clone().factor().unwrap().solve(&b);
            let xb = nalgebra::DVector::from_column_slice(&b);
            let xd = dense.lu().solve(&xb).unwrap();
            for i in 0..n {
                assert!(
                    (x[i] - xd[i]).abs() <= 1e-10 * (1.0 + xd[i].abs()),
                    "n={n} kl={kl} ku={ku} entry {i}: {} vs {}",
                    x[i],
                    xd[i]
                );
            }
            // The solution actually satisfies the system.
            let ax = a.mul_vec(&x);
            for i in 0..n {
                assert!((ax[i] - b[i]).abs() <= 1e-10 * (1.0 + b[i].abs()));
            }
        }
    }

    #[test]
    fn banded_lu_pivots_rows() {
        // Leading zero forces an interchange immediately.
        let mut a = BandedMatrix::zeros(3, 1, 1);
        a.set(0, 0, 0.0);
        a.set(0, 1, 2.0);
        a.set(1, 0, 1.0);
        a.set(1, 1, 1.0);
        a.set(1, 2, 1.0);
        a.set(2, 1, 3.0);
        a.set(2, 2, 1.0);
        let dense = a.to_dense();
        let f = a.factor().unwrap();
        let b = vec![1.0, 2.0, 3.0];
        let x = f.solve(&b);
        let xd = dense.lu().solve(&nalgebra::DVector::from_column_slice(&b)).unwrap();
        for i in 0..3 {
            assert!((x[i] - xd[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_matrix_reports_singular() {
        let a = BandedMatrix::zeros(4, 1, 1);
        match a.factor() {
            Err(Error::SingularJacobian { condition }) => assert!(condition.is_infinite()),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-3.0, 2.0, 0.5]));
        assert!((spectral_norm(&m) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn line_fit_recovers_coefficients() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.25).collect();
        let (s, c) = fit_line(&xs, &ys).unwrap();
        assert!((s - 2.5).abs() < 1e-12);
        assert!((c + 1.25).abs() < 1e-12);
    }
}
