//! Deterministic scalar and dense-matrix primitives.
//!
//! Everything here is pure: same inputs, same bits out, regardless of thread
//! count. The estimators and kernel tests are built entirely on these
//! routines, so their numerical contracts (stable quadratic roots, pivoted
//! solves for indefinite systems, a reproducible eigendecomposition) are the
//! foundation the rest of the crate assumes.

mod eigen;
mod gamma;
mod lu;

pub use eigen::sym_eigen_topk;
pub use gamma::{gamma_upper_tail, ln_gamma, regularized_gamma_p};
pub use lu::{solve_linear, solve_linear_multi, LuFactors};

use ndarray::Array2;

use crate::error::{Error, Result};

/// Dense symmetric matrix with validated symmetry and finite entries.
#[derive(Debug, Clone)]
pub struct SymMatrix {
    data: Array2<f64>,
}

impl SymMatrix {
    /// Wrap a square matrix, checking symmetry to 1e-12 relative and
    /// finiteness of every entry.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (r, c) = data.dim();
        if r != c {
            return Err(Error::DimensionMismatch(format!(
                "symmetric matrix must be square, got {r}x{c}"
            )));
        }
        let scale = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !scale.is_finite() {
            return Err(Error::DimensionMismatch(
                "non-finite entries in symmetric matrix".into(),
            ));
        }
        let tol = 1e-12 * scale.max(1.0);
        for i in 0..r {
            for j in (i + 1)..r {
                if (data[[i, j]] - data[[j, i]]).abs() > tol {
                    return Err(Error::DimensionMismatch(format!(
                        "asymmetry at ({i},{j}) exceeds 1e-12 relative"
                    )));
                }
            }
        }
        Ok(Self { data })
    }

    /// Build from the upper triangle of `f`, enforcing symmetry by
    /// construction.
    pub fn from_fn(order: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Array2::zeros((order, order));
        for i in 0..order {
            for j in i..order {
                let v = f(i, j);
                data[[i, j]] = v;
                data[[j, i]] = v;
            }
        }
        Self { data }
    }

    /// Trusted constructor for matrices symmetric by construction.
    pub(crate) fn from_symmetric_unchecked(data: Array2<f64>) -> Self {
        Self { data }
    }

    pub fn order(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }
}

/// Top eigenpairs of a symmetric matrix, eigenvalues in descending order,
/// eigenvectors as orthonormal columns.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Array2<f64>,
}

/// All real roots of `a x^2 + b x + c = 0`, ascending. `eps` is the relative
/// degeneracy threshold on `|a|`: below it the equation is treated as linear.
///
/// The larger-magnitude root is computed as `-(b + sign(b) sqrt(disc)) / 2a`
/// and the other as `c / (a r)`, which avoids cancellation when `b^2 >> ac`.
pub fn solve_quadratic(a: f64, b: f64, c: f64, eps: f64) -> Result<Vec<f64>> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return Err(Error::IdenticallyZeroPolynomial);
    }
    if a.abs() < eps * scale {
        // Linear fallback b x + c = 0; with b also degenerate there is no root.
        if b.abs() < eps * scale {
            return Ok(vec![]);
        }
        return Ok(vec![-c / b]);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Ok(vec![]);
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    let mut roots = if q == 0.0 {
        // b == 0 and disc == 0: double root at zero.
        vec![0.0]
    } else {
        let r1 = q / a;
        let r2 = c / q;
        if (r1 - r2).abs() <= 1e-14 * (r1.abs() + r2.abs()) {
            vec![r1]
        } else {
            vec![r1, r2]
        }
    };
    roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(roots)
}

const INV_GOLDEN: f64 = 0.618_033_988_749_894_9; // 1/phi

/// Golden-section minimization of `f` on `[lo, hi]`.
///
/// Assumes unimodality on the bracket; callers that cannot guarantee it must
/// pre-scan. Terminates when the bracket width drops below `tol` and returns
/// `(argmin, f(argmin))`.
pub fn golden_section_min(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    assert!(lo < hi, "golden_section_min requires lo < hi");
    assert!(tol > 0.0, "golden_section_min requires tol > 0");
    let eval = |f: &mut dyn FnMut(f64) -> f64, x: f64| -> Result<f64> {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteEvaluation(x))
        }
    };
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_GOLDEN * (b - a);
    let mut x2 = a + INV_GOLDEN * (b - a);
    let mut f1 = eval(&mut f, x1)?;
    let mut f2 = eval(&mut f, x2)?;
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_GOLDEN * (b - a);
            f1 = eval(&mut f, x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_GOLDEN * (b - a);
            f2 = eval(&mut f, x2)?;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

/// Coefficients (constant term first) of the degree-`xs.len()-1` polynomial
/// interpolating `(xs, ys)`, via a Vandermonde solve. Callers should center
/// and scale the abscissae; the quartic fits used for the plug-in tests pass
/// nodes in [-0.5, 0.5] where this is well conditioned.
pub fn fit_polynomial(xs: &[f64], ys: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(xs.len(), ys.len());
    let m = xs.len();
    let mut v = Array2::zeros((m, m));
    for (i, &x) in xs.iter().enumerate() {
        let mut p = 1.0;
        for j in 0..m {
            v[[i, j]] = p;
            p *= x;
        }
    }
    let coeffs = solve_linear(&v, ys)?;
    Ok(coeffs)
}

/// Evaluate a polynomial given coefficients in ascending-degree order.
pub fn polyval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Exact order-invariant summation through a fixed-point superaccumulator.
///
/// Every finite f64 is an integer multiple of 2^-1074, so the running sum is
/// held exactly in 32-bit limbs spanning the full exponent range. Integer
/// addition commutes exactly, which makes the reductions of the estimators
/// and statistics bit-identical under block permutations and parallel
/// schedules; it also sidesteps cancellation entirely until the final
/// rounding to f64.
#[derive(Clone)]
pub struct ExactSum {
    limbs: [i64; Self::LIMBS],
}

impl ExactSum {
    const LIMBS: usize = 67;

    pub fn new() -> Self {
        Self {
            limbs: [0; Self::LIMBS],
        }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        debug_assert!(x.is_finite());
        let bits = x.to_bits();
        let exp_raw = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mantissa, e2) = if exp_raw == 0 {
            if frac == 0 {
                return;
            }
            (frac, -1074i64)
        } else {
            (frac | (1u64 << 52), exp_raw - 1075)
        };
        // Bit offset of the mantissa in the fixed-point frame.
        let p = (e2 + 1074) as u64;
        let k = (p >> 5) as usize;
        let r = p & 31;
        let v = (mantissa as u128) << r;
        let negative = bits >> 63 == 1;
        let p0 = (v & 0xffff_ffff) as i64;
        let p1 = ((v >> 32) & 0xffff_ffff) as i64;
        let p2 = (v >> 64) as i64;
        if negative {
            self.limbs[k] -= p0;
            self.limbs[k + 1] -= p1;
            self.limbs[k + 2] -= p2;
        } else {
            self.limbs[k] += p0;
            self.limbs[k + 1] += p1;
            self.limbs[k + 2] += p2;
        }
    }

    pub fn value(&self) -> f64 {
        let mut limbs = self.limbs;
        let radix = 1i64 << 32;
        for k in 0..Self::LIMBS - 1 {
            let q = limbs[k].div_euclid(radix);
            limbs[k] -= q << 32;
            limbs[k + 1] += q;
        }
        let mut sign = 1.0;
        if limbs[Self::LIMBS - 1] < 0 {
            sign = -1.0;
            for l in limbs.iter_mut() {
                *l = -*l;
            }
            for k in 0..Self::LIMBS - 1 {
                let q = limbs[k].div_euclid(radix);
                limbs[k] -= q << 32;
                limbs[k + 1] += q;
            }
        }
        let h = match (0..Self::LIMBS).rev().find(|&k| limbs[k] != 0) {
            Some(h) => h,
            None => return 0.0,
        };
        // A 96-bit window below the leading limb captures the sum to well
        // under one ulp of the result.
        let lo = h.saturating_sub(2);
        let mut acc: u128 = 0;
        for k in (lo..=h).rev() {
            acc = (acc << 32) | limbs[k] as u128;
        }
        let base = 32 * lo as i32 - 1074;
        let half = base / 2;
        sign * (acc as f64) * 2f64.powi(half) * 2f64.powi(base - half)
    }
}

impl Default for ExactSum {
    fn default() -> Self {
        Self::new()
    }
}

/// Exact order-invariant sum of a slice (see [`ExactSum`]).
pub fn stable_sum(buf: &[f64]) -> f64 {
    let mut acc = ExactSum::new();
    for &x in buf {
        acc.add(x);
    }
    acc.value()
}

/// Exact order-invariant arithmetic mean.
pub fn stable_mean(buf: &[f64]) -> f64 {
    if buf.is_empty() {
        return 0.0;
    }
    stable_sum(buf) / buf.len() as f64
}
