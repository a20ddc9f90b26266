//! Weakly-supervised kernel CI and MCI tests with known mixture proportion.
//!
//! The CI statistic is the squared RKHS norm of the signed cross-covariance
//! embedding, computed in matrix form as `w^T (K~1 . K~2) w` over the pooled
//! Grams; the MCI statistic residualizes empirical kernel maps against K_S
//! by weakly-supervised KRR before taking the Hadamard product with K_S. The
//! null mean and variance estimators reduce the V-statistic moment formulas
//! to block row means of the product Gram, and a two-moment gamma fit turns
//! the scaled statistic into a p-value.

use ndarray::{s, Array2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{
    empirical_kernel_map_topk, outer_gram, GramBundle, KernelSpec,
};
use crate::mixture::{signed_weights, FeatureRoles, TwoSampleData};
use crate::numerics::{gamma_upper_tail, stable_mean, stable_sum, SymMatrix};

/// Which conditional-independence statistic a test uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestKind {
    Ci,
    Mci,
}

/// Kernel hyperparameters for the statistics. The defaults follow the
/// synthetic-experiment settings: CI tests use bandwidth 2.5; the MCI
/// statistic with known proportions uses 3.5 everywhere with ridge 5e-4; the
/// plug-in MCI statistic uses 2.5 with ridge 5e-6.
#[derive(Debug, Clone, Copy)]
pub struct StatConfig {
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma_s: f64,
    pub lambda: f64,
    pub k_top: usize,
}

impl StatConfig {
    pub fn ci_default() -> Self {
        Self {
            sigma1: 2.5,
            sigma2: 2.5,
            sigma_s: 2.5,
            lambda: 5e-4,
            k_top: 5,
        }
    }

    pub fn mci_known_default() -> Self {
        Self {
            sigma1: 3.5,
            sigma2: 3.5,
            sigma_s: 3.5,
            lambda: 5e-4,
            k_top: 5,
        }
    }

    pub fn mci_plugin_default() -> Self {
        Self {
            sigma1: 2.5,
            sigma2: 2.5,
            sigma_s: 2.5,
            lambda: 5e-6,
            k_top: 5,
        }
    }
}

/// Centralized product Gram: entries are inner products of the centered
/// feature maps over the pooled rows, with block structure (UU, UV, VV).
#[derive(Debug, Clone)]
pub struct ProductGram {
    g: Array2<f64>,
    n: usize,
    nprime: usize,
}

impl ProductGram {
    pub fn new(g: Array2<f64>, n: usize, nprime: usize) -> Self {
        debug_assert_eq!(g.nrows(), n + nprime);
        Self { g, n, nprime }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nprime(&self) -> usize {
        self.nprime
    }

    pub fn m(&self) -> usize {
        self.n + self.nprime
    }
}

/// CI statistic evaluator with the Grams fixed; the mixture coefficient may
/// vary, which the plug-in test exploits.
///
/// The centering weight vector is affine in alpha, so each Gram carries two
/// precomputed row-sum vectors and evaluating the statistic at a new alpha
/// costs one fused pass over the Gram entries.
pub struct CiStatEvaluator {
    bundle: GramBundle,
    // K u and K v with w_alpha = alpha u + v (u, v block-constant).
    ku1: Vec<f64>,
    kv1: Vec<f64>,
    ku2: Vec<f64>,
    kv2: Vec<f64>,
    n: usize,
    nprime: usize,
}

/// Row sums of `K u` and `K v` for the affine decomposition of the signed
/// weights, accumulated order-insensitively.
fn centering_vectors(k: &SymMatrix, n: usize, nprime: usize) -> (Vec<f64>, Vec<f64>) {
    let m = k.order();
    let uw = 1.0 / n as f64;
    let vw = if nprime > 0 { 1.0 / nprime as f64 } else { 0.0 };
    let mut ku = Vec::with_capacity(m);
    let mut kv = Vec::with_capacity(m);
    let mut bu = vec![0.0; m];
    let mut bv = vec![0.0; m];
    for i in 0..m {
        let row = k.as_array().row(i);
        let row = row.as_slice().unwrap();
        for (t, &kij) in row.iter().enumerate() {
            if t < n {
                bu[t] = kij * uw;
                bv[t] = 0.0;
            } else {
                bu[t] = -kij * vw;
                bv[t] = kij * vw;
            }
        }
        ku.push(stable_sum(&mut bu));
        kv.push(stable_sum(&mut bv));
    }
    (ku, kv)
}

impl CiStatEvaluator {
    pub fn new(data: &TwoSampleData, roles: &FeatureRoles, cfg: &StatConfig) -> Result<Self> {
        let bundle = GramBundle::build(
            data,
            roles,
            KernelSpec::new(cfg.sigma1)?,
            KernelSpec::new(cfg.sigma2)?,
            None,
        )?;
        let (n, nprime) = (data.n(), data.nprime());
        let (ku1, kv1) = centering_vectors(&bundle.k1, n, nprime);
        let (ku2, kv2) = centering_vectors(&bundle.k2, n, nprime);
        Ok(Self {
            bundle,
            ku1,
            kv1,
            ku2,
            kv2,
            n,
            nprime,
        })
    }

    fn eval(&self, alpha: f64, materialize: bool) -> Result<(f64, Option<ProductGram>)> {
        let w = signed_weights(self.n, self.nprime, alpha)?;
        let ws = w.as_slice();
        let m = self.n + self.nprime;
        // kw = alpha K u + K v; s = w^T kw via an order-insensitive sum.
        let kw1: Vec<f64> = (0..m).map(|i| alpha * self.ku1[i] + self.kv1[i]).collect();
        let kw2: Vec<f64> = (0..m).map(|i| alpha * self.ku2[i] + self.kv2[i]).collect();
        let mut buf = vec![0.0; m];
        for (t, (&kwi, &wi)) in kw1.iter().zip(ws).enumerate() {
            buf[t] = kwi * wi;
        }
        let s1 = stable_sum(&mut buf);
        for (t, (&kwi, &wi)) in kw2.iter().zip(ws).enumerate() {
            buf[t] = kwi * wi;
        }
        let s2 = stable_sum(&mut buf);

        let k1 = self.bundle.k1.as_array();
        let k2 = self.bundle.k2.as_array();
        let mut gram = materialize.then(|| Array2::zeros((m, m)));
        let mut outer = Vec::with_capacity(m);
        for i in 0..m {
            let row1 = k1.row(i);
            let row1 = row1.as_slice().unwrap();
            let row2 = k2.row(i);
            let row2 = row2.as_slice().unwrap();
            let (c1, c2) = (s1 - kw1[i], s2 - kw2[i]);
            for j in 0..m {
                let e1 = row1[j] - kw1[j] + c1;
                let e2 = row2[j] - kw2[j] + c2;
                let gij = e1 * e2;
                buf[j] = gij * ws[j];
                if let Some(ga) = gram.as_mut() {
                    ga[[i, j]] = gij;
                }
            }
            outer.push(ws[i] * stable_sum(&mut buf));
        }
        let t = stable_sum(&mut outer);
        Ok((
            m as f64 * t,
            gram.map(|g| ProductGram::new(g, self.n, self.nprime)),
        ))
    }

    /// `M T_alpha` without materializing the product Gram.
    pub fn statistic_only(&self, alpha: f64) -> Result<f64> {
        self.eval(alpha, false).map(|(t, _)| t)
    }

    /// `(M T_alpha, product Gram at alpha)`.
    pub fn statistic(&self, alpha: f64) -> Result<(f64, ProductGram)> {
        let (t, gram) = self.eval(alpha, true)?;
        Ok((t, gram.expect("materialized")))
    }
}

/// MCI statistic evaluator: Grams and empirical kernel maps are computed
/// once; each alpha needs only one KRR factorization for the residual maps.
pub struct MciStatEvaluator {
    ks: SymMatrix,
    phi: Array2<f64>,
    k_top: usize,
    lambda: f64,
    n: usize,
    nprime: usize,
    pub clipped_eigenvalues: usize,
}

impl MciStatEvaluator {
    pub fn new(data: &TwoSampleData, roles: &FeatureRoles, cfg: &StatConfig) -> Result<Self> {
        if roles.idx_s.is_empty() {
            return Err(Error::Config("MCI test requires xs role columns".into()));
        }
        let bundle = GramBundle::build(
            data,
            roles,
            KernelSpec::new(cfg.sigma1)?,
            KernelSpec::new(cfg.sigma2)?,
            Some(KernelSpec::new(cfg.sigma_s)?),
        )?;
        let (phi1, c1) = empirical_kernel_map_topk(&bundle.k1, cfg.k_top)?;
        let (phi2, c2) = empirical_kernel_map_topk(&bundle.k2, cfg.k_top)?;
        let m = data.m();
        let mut phi = Array2::zeros((m, 2 * cfg.k_top));
        phi.slice_mut(s![.., ..cfg.k_top]).assign(&phi1);
        phi.slice_mut(s![.., cfg.k_top..]).assign(&phi2);
        Ok(Self {
            ks: bundle.ks.expect("built with spec_s"),
            phi,
            k_top: cfg.k_top,
            lambda: cfg.lambda,
            n: data.n(),
            nprime: data.nprime(),
            clipped_eigenvalues: c1 + c2,
        })
    }

    fn eval(&self, alpha: f64, materialize: bool) -> Result<(f64, Option<ProductGram>)> {
        let w = signed_weights(self.n, self.nprime, alpha)?;
        let ws = w.as_slice();
        let (resid, _) = crate::kernels::residualize_map(&self.phi, &self.ks, &w, self.lambda)?;
        let r1 = resid.slice(s![.., ..self.k_top]).to_owned();
        let r2 = resid.slice(s![.., self.k_top..]).to_owned();
        let k1s = outer_gram(&r1);
        let k2s = outer_gram(&r2);
        let m = self.n + self.nprime;
        let mut gram = materialize.then(|| Array2::zeros((m, m)));
        let mut buf = vec![0.0; m];
        let mut outer = Vec::with_capacity(m);
        let (a1, ks, a2) = (k1s.as_array(), self.ks.as_array(), k2s.as_array());
        for i in 0..m {
            let row1 = a1.row(i);
            let row1 = row1.as_slice().unwrap();
            let rows = ks.row(i);
            let rows = rows.as_slice().unwrap();
            let row2 = a2.row(i);
            let row2 = row2.as_slice().unwrap();
            for j in 0..m {
                let gij = row1[j] * rows[j] * row2[j];
                buf[j] = gij * ws[j];
                if let Some(ga) = gram.as_mut() {
                    ga[[i, j]] = gij;
                }
            }
            outer.push(ws[i] * stable_sum(&mut buf));
        }
        let t = stable_sum(&mut outer);
        Ok((
            m as f64 * t,
            gram.map(|g| ProductGram::new(g, self.n, self.nprime)),
        ))
    }

    /// `M T_alpha` without materializing the product Gram.
    pub fn statistic_only(&self, alpha: f64) -> Result<f64> {
        self.eval(alpha, false).map(|(t, _)| t)
    }

    pub fn statistic(&self, alpha: f64) -> Result<(f64, ProductGram)> {
        let (t, gram) = self.eval(alpha, true)?;
        Ok((t, gram.expect("materialized")))
    }
}

/// One-shot CI statistic `(M T, product Gram)`.
pub fn t_ci(
    data: &TwoSampleData,
    roles: &FeatureRoles,
    alpha: f64,
    cfg: &StatConfig,
) -> Result<(f64, ProductGram)> {
    CiStatEvaluator::new(data, roles, cfg)?.statistic(alpha)
}

/// One-shot MCI statistic `(M T, product Gram)`.
pub fn t_mci(
    data: &TwoSampleData,
    roles: &FeatureRoles,
    alpha: f64,
    cfg: &StatConfig,
) -> Result<(f64, ProductGram)> {
    MciStatEvaluator::new(data, roles, cfg)?.statistic(alpha)
}

/// Row means and grand means of the product-Gram blocks; the V-statistic
/// moment reductions are all built from these seven aggregates.
pub(crate) struct BlockMeans {
    pub ruu: Vec<f64>,
    pub rvv: Vec<f64>,
    pub ruv: Vec<f64>,
    pub rvu: Vec<f64>,
    pub muu: f64,
    pub mvv: f64,
    pub muv: f64,
    pub duu: f64,
    pub dvv: f64,
}

impl BlockMeans {
    pub fn compute(g: &ProductGram) -> Self {
        let (n, np) = (g.n, g.nprime);
        let a = &g.g;
        let mut buf = vec![0.0; n.max(np).max(1)];
        let row_mean = |a: &Array2<f64>, i: usize, lo: usize, hi: usize, buf: &mut Vec<f64>| {
            buf.clear();
            buf.extend(a.row(i).slice(s![lo..hi]).iter());
            stable_mean(buf)
        };
        let mut ruu = Vec::with_capacity(n);
        let mut ruv = Vec::with_capacity(n);
        for i in 0..n {
            ruu.push(row_mean(a, i, 0, n, &mut buf));
            ruv.push(if np > 0 {
                row_mean(a, i, n, n + np, &mut buf)
            } else {
                0.0
            });
        }
        let mut rvv = Vec::with_capacity(np);
        let mut rvu = Vec::with_capacity(np);
        for q in 0..np {
            rvv.push(row_mean(a, n + q, n, n + np, &mut buf));
            rvu.push(row_mean(a, n + q, 0, n, &mut buf));
        }
        let muu = stable_mean(&ruu);
        let mvv = stable_mean(&rvv);
        let muv = stable_mean(&ruv);
        let diag_u: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
        let duu = stable_mean(&diag_u);
        let diag_v: Vec<f64> = (0..np).map(|q| a[[n + q, n + q]]).collect();
        let dvv = stable_mean(&diag_v);
        Self {
            ruu,
            rvv,
            ruv,
            rvu,
            muu,
            mvv,
            muv,
            duu,
            dvv,
        }
    }
}

/// Estimated null mean and variance of the scaled statistic from the product
/// Gram, per the asymptotic two-sample V-statistic moments.
pub fn product_gram_null_moments(g: &ProductGram, alpha: f64) -> (f64, f64) {
    let (n, np) = (g.n, g.nprime);
    let m = (n + np) as f64;
    let nu = m / n as f64;
    let a = alpha;
    let b = 1.0 - alpha;
    let bm = BlockMeans::compute(g);
    let mut mean = nu * a * a * (bm.duu - bm.muu);
    let mut var;
    // sigma^2_{2,0}: inner expectation over (q1, q2) as a function of
    // (i1, i2), then mean of squares.
    let ga = &g.g;
    {
        let mut rows = Vec::with_capacity(n);
        let mut buf = vec![0.0; n];
        for i1 in 0..n {
            for i2 in 0..n {
                let inner = a * a * ga[[i1, i2]]
                    + a * b * (bm.ruv[i1] + bm.ruv[i2])
                    + b * b * bm.mvv;
                buf[i2] = inner * inner;
            }
            rows.push(stable_mean(&mut buf));
        }
        let s20 = stable_mean(&mut rows);
        var = 2.0 * nu * nu * s20;
    }
    if np > 0 {
        let nup = m / np as f64;
        mean += nup * b * b * (bm.dvv - bm.mvv);
        {
            let mut rows = Vec::with_capacity(np);
            let mut buf = vec![0.0; np];
            for q1 in 0..np {
                for q2 in 0..np {
                    let inner = a * a * bm.muu
                        + a * b * (bm.rvu[q1] + bm.rvu[q2])
                        + b * b * ga[[n + q1, n + q2]];
                    buf[q2] = inner * inner;
                }
                rows.push(stable_mean(&mut buf));
            }
            let s02 = stable_mean(&mut rows);
            var += 2.0 * nup * nup * s02;
        }
        {
            let mut rows = Vec::with_capacity(n);
            let mut buf = vec![0.0; np];
            for i1 in 0..n {
                for q2 in 0..np {
                    let inner = a * a * bm.ruu[i1]
                        + a * b * ga[[i1, n + q2]]
                        + a * b * bm.muv
                        + b * b * bm.rvv[q2];
                    buf[q2] = inner * inner;
                }
                rows.push(stable_mean(&mut buf));
            }
            let s11 = stable_mean(&mut rows);
            let nup = m / np as f64;
            var += 4.0 * nu * nup * s11;
        }
    }
    (mean, var)
}

/// Moment-matched gamma fit; `None` marks the degenerate case of
/// non-positive mean or variance.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GammaFit {
    pub shape: f64,
    pub scale: f64,
    pub source_mean: f64,
    pub source_var: f64,
}

pub fn gamma_fit(mean: f64, var: f64) -> Option<GammaFit> {
    if mean > 0.0 && var > 0.0 && mean.is_finite() && var.is_finite() {
        Some(GammaFit {
            shape: mean * mean / var,
            scale: var / mean,
            source_mean: mean,
            source_var: var,
        })
    } else {
        None
    }
}

/// Outcome of a kernel test, serializable as a structured JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct TestReport {
    pub statistic: f64,
    pub null_mean: f64,
    pub null_var: f64,
    pub gamma_shape: Option<f64>,
    pub gamma_scale: Option<f64>,
    pub p_value: f64,
    pub reject: bool,
    pub level: f64,
    pub mode: String,
    pub alpha_used: f64,
    pub diagnostics: serde_json::Map<String, serde_json::Value>,
}

impl TestReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}

pub(crate) fn assemble_report(
    statistic: f64,
    mean: f64,
    var: f64,
    level: f64,
    mode: String,
    alpha_used: f64,
    mut diagnostics: serde_json::Map<String, serde_json::Value>,
) -> TestReport {
    let fit = gamma_fit(mean, var);
    let (p_value, shape, scale) = match fit {
        Some(f) => (
            gamma_upper_tail(statistic.max(0.0), f.shape, f.scale),
            Some(f.shape),
            Some(f.scale),
        ),
        None => {
            diagnostics.insert("gamma-degenerate".into(), serde_json::Value::Bool(true));
            (1.0, None, None)
        }
    };
    TestReport {
        statistic,
        null_mean: mean,
        null_var: var,
        gamma_shape: shape,
        gamma_scale: scale,
        p_value,
        reject: p_value < level,
        level,
        mode,
        alpha_used,
        diagnostics,
    }
}

/// Run a CI or MCI test at a known mixture proportion.
pub fn run_test_known(
    data: &TwoSampleData,
    roles: &FeatureRoles,
    alpha: f64,
    kind: TestKind,
    level: f64,
    cfg: &StatConfig,
) -> Result<TestReport> {
    let (stat, gram) = match kind {
        TestKind::Ci => t_ci(data, roles, alpha, cfg)?,
        TestKind::Mci => t_mci(data, roles, alpha, cfg)?,
    };
    let (mean, var) = product_gram_null_moments(&gram, alpha);
    let mode = match kind {
        TestKind::Ci => "CI-known",
        TestKind::Mci => "MCI-known",
    };
    Ok(assemble_report(
        stat,
        mean,
        var,
        level,
        mode.into(),
        alpha,
        serde_json::Map::new(),
    ))
}
