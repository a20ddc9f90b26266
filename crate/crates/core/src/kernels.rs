//! Gaussian kernels, Gram machinery, and weakly-supervised kernel ridge
//! regression.
//!
//! All Gram-level operations take the pooled M = n + n' rows, U block first,
//! and work with the signed block weights: the centering matrix is
//! `H = I - 1 w^T` and KRR solves `(D_a K + lambda I) w = D_a g`, the
//! sufficient system of the first-order condition of the weighted MSE. For
//! mixture coefficients outside [0, 1] that system is indefinite, which is
//! why everything routes through the pivoted LU.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::mixture::{FeatureRoles, SignedWeights, TwoSampleData};
use crate::numerics::{sym_eigen_topk, LuFactors, SymMatrix};

/// Gaussian kernel k(x, y) = exp(-||x - y||^2 / (2 sigma^2)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::Config(format!("bad kernel bandwidth {bandwidth}")));
        }
        Ok(Self { bandwidth })
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut d2 = 0.0;
        for (a, b) in x.iter().zip(y) {
            let d = a - b;
            d2 += d * d;
        }
        (-d2 / (2.0 * self.bandwidth * self.bandwidth)).exp()
    }
}

/// Gram matrix of `rows` under `spec`; symmetric by construction with unit
/// diagonal.
pub fn gram(rows: ArrayView2<'_, f64>, spec: KernelSpec) -> SymMatrix {
    let m = rows.nrows();
    let mut k = Array2::zeros((m, m));
    for i in 0..m {
        k[[i, i]] = 1.0;
        let ri = rows.row(i);
        for j in (i + 1)..m {
            let v = spec.eval(ri.as_slice().unwrap(), rows.row(j).as_slice().unwrap());
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    SymMatrix::from_symmetric_unchecked(k)
}

/// The Gram matrices of the three feature blocks over the pooled rows.
#[derive(Debug, Clone)]
pub struct GramBundle {
    pub k1: SymMatrix,
    pub k2: SymMatrix,
    pub ks: Option<SymMatrix>,
}

impl GramBundle {
    pub fn build(
        data: &TwoSampleData,
        roles: &FeatureRoles,
        spec1: KernelSpec,
        spec2: KernelSpec,
        spec_s: Option<KernelSpec>,
    ) -> Result<Self> {
        roles.validate_against(data.dim())?;
        let k1 = gram(data.pooled_columns(&roles.idx1).view(), spec1);
        let k2 = gram(data.pooled_columns(&roles.idx2).view(), spec2);
        let ks = match spec_s {
            Some(s) => {
                if roles.idx_s.is_empty() {
                    return Err(Error::Config("xs role columns required".into()));
                }
                Some(gram(data.pooled_columns(&roles.idx_s).view(), s))
            }
            None => None,
        };
        Ok(Self { k1, k2, ks })
    }
}

/// `H K H^T` with `H = I - 1 w^T`, computed as
/// `K - 1 (w^T K) - (K w) 1^T + (w^T K w) 1 1^T` without materializing H.
pub fn weighted_center(k: &SymMatrix, w: &SignedWeights) -> SymMatrix {
    let m = k.order();
    assert_eq!(m, w.len(), "weight length must match Gram order");
    let ka = k.as_array();
    // Row sums and the grand sum accumulate order-insensitively so that
    // permuting rows within a block leaves the centered entries bit-identical.
    let mut scratch = vec![0.0; m];
    let kw = Array1::from_iter((0..m).map(|i| {
        for (t, (&kij, &wj)) in ka.row(i).iter().zip(w.as_slice()).enumerate() {
            scratch[t] = kij * wj;
        }
        crate::numerics::stable_sum(&mut scratch)
    }));
    for (t, (&kwi, &wi)) in kw.iter().zip(w.as_slice()).enumerate() {
        scratch[t] = kwi * wi;
    }
    let s = crate::numerics::stable_sum(&mut scratch);
    let mut out = ka.clone();
    for i in 0..m {
        let kwi = kw[i];
        let row = out.row_mut(i);
        let row = row.into_slice().unwrap();
        for (j, r) in row.iter_mut().enumerate() {
            *r += s - kwi - kw[j];
        }
    }
    SymMatrix::from_symmetric_unchecked(out)
}

/// Weakly-supervised KRR: solve `(D_a K + lambda I) W = D_a G` for every
/// column of `targets` with a single factorization. At `alpha` in {0, 1} the
/// system reduces to standard KRR on one block; outside [0, 1] it is
/// indefinite but generically nonsingular.
pub fn ws_krr_fit(
    ks: &SymMatrix,
    targets: &Array2<f64>,
    w: &SignedWeights,
    lambda: f64,
) -> Result<Array2<f64>> {
    assert!(lambda > 0.0, "ridge parameter must be positive");
    let m = ks.order();
    if targets.nrows() != m || w.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "KRR size mismatch: gram {m}, targets {}, weights {}",
            targets.nrows(),
            w.len()
        )));
    }
    let mut a = Array2::zeros((m, m));
    for (i, &wi) in w.as_slice().iter().enumerate() {
        let src = ks.as_array().row(i);
        let mut dst = a.row_mut(i);
        dst.assign(&src);
        dst *= wi;
        dst[i] += lambda;
    }
    let mut rhs = targets.clone();
    for (i, &wi) in w.as_slice().iter().enumerate() {
        rhs.row_mut(i).mapv_inplace(|v| v * wi);
    }
    let f = LuFactors::factor(&a).map_err(|e| match e {
        Error::SingularSystem => Error::KrrSingular,
        other => other,
    })?;
    f.solve_multi(&rhs)
}

/// Empirical kernel map from the top-k eigenpairs: `Phi = V Lambda^{1/2}`.
/// Negative eigenvalues (round-off) are clipped to zero; the count of clips
/// larger than 1e-8 in magnitude is returned alongside.
pub fn empirical_kernel_map_topk(k: &SymMatrix, top: usize) -> Result<(Array2<f64>, usize)> {
    let pairs = sym_eigen_topk(k, top)?;
    let mut phi = pairs.vectors;
    let mut clipped = 0usize;
    for (c, &lam) in pairs.values.iter().enumerate() {
        let lam_clipped = if lam < 0.0 {
            if lam < -1e-8 {
                clipped += 1;
            }
            0.0
        } else {
            lam
        };
        let scale = lam_clipped.sqrt();
        phi.column_mut(c).mapv_inplace(|v| v * scale);
    }
    Ok((phi, clipped))
}

/// Residualize each column of `phi` against its weakly-supervised KRR fit on
/// `ks`: column j becomes `phi_j - K_S w_j`. Returns the residual map and its
/// Gram `Ktilde = Phi~ Phi~^T`.
pub fn residualize_map(
    phi: &Array2<f64>,
    ks: &SymMatrix,
    w: &SignedWeights,
    lambda: f64,
) -> Result<(Array2<f64>, SymMatrix)> {
    let coeffs = ws_krr_fit(ks, phi, w, lambda)?;
    let mut fitted = Array2::zeros(phi.dim());
    general_mat_mul(1.0, ks.as_array(), &coeffs, 0.0, &mut fitted);
    let resid = phi - &fitted;
    let ktilde = outer_gram(&resid);
    Ok((resid, ktilde))
}

/// `A A^T`, symmetrized exactly by mirroring the upper triangle.
pub fn outer_gram(a: &Array2<f64>) -> SymMatrix {
    let m = a.nrows();
    let mut g = Array2::zeros((m, m));
    general_mat_mul(1.0, a, &a.t().to_owned(), 0.0, &mut g);
    for i in 0..m {
        for j in (i + 1)..m {
            let v = g[[i, j]];
            g[[j, i]] = v;
        }
    }
    SymMatrix::from_symmetric_unchecked(g)
}
