//! Pivoted dense LU factorization and solves.
//!
//! The weakly-supervised KRR systems are indefinite whenever the mixture
//! coefficient leaves [0, 1], so a PSD-only factorization is not an option.
//! The factorization is right-looking and blocked: panels are eliminated with
//! partial pivoting, then the trailing submatrix is updated with a single
//! matrix multiply, which keeps the large solves compute-bound.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2};

use crate::error::{Error, Result};

const BLOCK: usize = 64;

/// LU factors of a square matrix with row pivoting, reusable across many
/// right-hand sides.
#[derive(Debug, Clone)]
pub struct LuFactors {
    lu: Array2<f64>,
    perm: Vec<usize>,
}

impl LuFactors {
    /// Factor `a` as `P A = L U`. Fails with [`Error::SingularSystem`] when a
    /// pivot falls below `1e-12 * max|a_ij|`.
    pub fn factor(a: &Array2<f64>) -> Result<Self> {
        let (nr, nc) = a.dim();
        if nr != nc {
            return Err(Error::DimensionMismatch(format!(
                "LU requires a square matrix, got {nr}x{nc}"
            )));
        }
        let n = nr;
        let mut lu = a.clone();
        let scale = lu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !scale.is_finite() {
            return Err(Error::DimensionMismatch("non-finite matrix entries".into()));
        }
        let tol = 1e-12 * scale;
        let mut perm: Vec<usize> = (0..n).collect();

        let mut j = 0;
        while j < n {
            let kb = BLOCK.min(n - j);
            {
                let buf = lu.as_slice_mut().expect("standard layout");
                factor_panel(buf, n, j, kb, tol, &mut perm)?;
                if j + kb < n {
                    trsm_unit_lower(buf, n, j, kb);
                }
            }
            let jb = j;
            j += kb;
            if j < n {
                // Trailing update A22 -= L21 * U12.
                let (l21, u12, mut a22) = lu.multi_slice_mut((
                    s![jb + kb.., jb..jb + kb],
                    s![jb..jb + kb, jb + kb..],
                    s![jb + kb.., jb + kb..],
                ));
                general_mat_mul(-1.0, &l21.view(), &u12.view(), 1.0, &mut a22);
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn order(&self) -> usize {
        self.lu.nrows()
    }

    /// Solve `A x = b` for a single right-hand side.
    pub fn solve(&self, b: &[f64]) -> Result<Array1<f64>> {
        let n = self.order();
        if b.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "rhs length {} does not match order {n}",
                b.len()
            )));
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        let lu = self.lu.as_slice().expect("standard layout");
        // Forward substitution with unit lower triangle.
        for i in 1..n {
            let mut acc = x[i];
            let row = &lu[i * n..i * n + i];
            for (k, &l) in row.iter().enumerate() {
                acc -= l * x[k];
            }
            x[i] = acc;
        }
        // Back substitution with U.
        for i in (0..n).rev() {
            let row = &lu[i * n..(i + 1) * n];
            let mut acc = x[i];
            for k in (i + 1)..n {
                acc -= row[k] * x[k];
            }
            x[i] = acc / row[i];
        }
        Ok(Array1::from(x))
    }

    /// Solve for every column of `b` with the same factorization.
    pub fn solve_multi(&self, b: &Array2<f64>) -> Result<Array2<f64>> {
        let n = self.order();
        if b.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "rhs has {} rows, expected {n}",
                b.nrows()
            )));
        }
        let mut out = Array2::zeros((n, b.ncols()));
        for (j, col) in b.columns().into_iter().enumerate() {
            let rhs: Vec<f64> = col.iter().copied().collect();
            let x = self.solve(&rhs)?;
            out.column_mut(j).assign(&x);
        }
        Ok(out)
    }
}

/// Unblocked elimination of panel columns `[j, j+kb)` over rows `[j, n)`,
/// swapping full rows for pivoting.
fn factor_panel(
    buf: &mut [f64],
    n: usize,
    j: usize,
    kb: usize,
    tol: f64,
    perm: &mut [usize],
) -> Result<()> {
    for jj in j..j + kb {
        // Partial pivot over the remaining rows of column jj.
        let mut p = jj;
        let mut best = buf[jj * n + jj].abs();
        for r in (jj + 1)..n {
            let v = buf[r * n + jj].abs();
            if v > best {
                best = v;
                p = r;
            }
        }
        if best <= tol {
            return Err(Error::SingularSystem);
        }
        if p != jj {
            perm.swap(p, jj);
            let (lo, hi) = buf.split_at_mut(p * n);
            lo[jj * n..jj * n + n].swap_with_slice(&mut hi[..n]);
        }
        let piv = buf[jj * n + jj];
        let panel_end = j + kb;
        for r in (jj + 1)..n {
            let l = buf[r * n + jj] / piv;
            buf[r * n + jj] = l;
            if l != 0.0 {
                let (pivot_row, row) = disjoint_rows(buf, n, jj, r);
                for (dst, src) in row[jj + 1..panel_end]
                    .iter_mut()
                    .zip(&pivot_row[jj + 1..panel_end])
                {
                    *dst -= l * src;
                }
            }
        }
    }
    Ok(())
}

/// U12 = L11^{-1} A12 by forward substitution with the unit-lower panel.
fn trsm_unit_lower(buf: &mut [f64], n: usize, j: usize, kb: usize) {
    for r in 1..kb {
        for s in 0..r {
            let l = buf[(j + r) * n + j + s];
            if l != 0.0 {
                let (src_row, dst_row) = disjoint_rows(buf, n, j + s, j + r);
                for (dst, src) in dst_row[j + kb..n].iter_mut().zip(&src_row[j + kb..n]) {
                    *dst -= l * src;
                }
            }
        }
    }
}

/// Mutable access to two distinct rows of a row-major buffer.
fn disjoint_rows(buf: &mut [f64], n: usize, r1: usize, r2: usize) -> (&[f64], &mut [f64]) {
    debug_assert_ne!(r1, r2);
    if r1 < r2 {
        let (lo, hi) = buf.split_at_mut(r2 * n);
        (&lo[r1 * n..r1 * n + n], &mut hi[..n])
    } else {
        let (lo, hi) = buf.split_at_mut(r1 * n);
        let row1 = &mut hi[..n];
        (&*&lo[r2 * n..r2 * n + n], row1)
    }
}

/// Solve `A x = b`; `A` may be indefinite.
pub fn solve_linear(a: &Array2<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let f = LuFactors::factor(a)?;
    Ok(f.solve(b)?.to_vec())
}

/// Solve `A X = B` column-wise with one factorization.
pub fn solve_linear_multi(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    let f = LuFactors::factor(a)?;
    f.solve_multi(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_solve() {
        let a = Array2::eye(2);
        let x = solve_linear(&a, &[1.0, 2.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
    }

    #[test]
    fn indefinite_swap_solve() {
        let a = ndarray::array![[0.0, 1.0], [1.0, 0.0]];
        let x = solve_linear(&a, &[3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(x[0], 4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(x[1], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn singular_detected() {
        let a = ndarray::array![[1.0, 2.0], [2.0, 4.0]];
        assert!(matches!(
            solve_linear(&a, &[1.0, 1.0]),
            Err(Error::SingularSystem)
        ));
    }

    #[test]
    fn random_residual() {
        // Residual oracle: ||Ax - b|| <= 1e-8 (||A|| ||x|| + ||b||).
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [5usize, 50, 130] {
            let a = Array2::from_shape_fn((n, n), |_| rng.random::<f64>() - 0.5)
                + Array2::<f64>::eye(n) * 2.0;
            let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let x = solve_linear(&a, &b).unwrap();
            let ax = a.dot(&Array1::from(x.clone()));
            let resid: f64 = ax
                .iter()
                .zip(&b)
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f64>()
                .sqrt();
            let norm_a = a.iter().fold(0.0f64, |m, v| m.max(v.abs())) * n as f64;
            let norm_x = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let norm_b = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(resid <= 1e-8 * (norm_a * norm_x + norm_b));
        }
    }

    #[test]
    fn multi_rhs_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 20;
        let a = Array2::from_shape_fn((n, n), |_| rng.random::<f64>() - 0.5)
            + Array2::<f64>::eye(n) * 3.0;
        let b = Array2::from_shape_fn((n, 3), |_| rng.random::<f64>() - 0.5);
        let f = LuFactors::factor(&a).unwrap();
        let xs = f.solve_multi(&b).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = b.column(j).iter().copied().collect();
            let x = f.solve(&col).unwrap();
            for i in 0..n {
                assert_abs_diff_eq!(xs[[i, j]], x[i], epsilon = 1e-13);
            }
        }
    }
}
