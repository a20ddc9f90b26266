//! Mixture proportion estimators.
//!
//! The CI estimator exploits the fact that the empirical moment function
//! m(alpha) = E_{F^alpha}[g12] - E_{F^alpha}[g1].E_{F^alpha}[g2] is an exact
//! quadratic in alpha, so roots come from the closed-form coefficients. The
//! MCI estimator replaces marginal means with weakly-supervised KRR
//! conditional means, which makes the objective non-polynomial; it is
//! minimized by a coarse scan plus golden-section refinement. Both report
//! solver diagnostics and a plug-in asymptotic variance.

use std::sync::Arc;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::kernels::{gram, ws_krr_fit, KernelSpec};
use crate::mixture::{signed_weights, weighted_mean, FeatureRoles, TwoSampleData};
use crate::numerics::{golden_section_min, solve_quadratic, stable_mean, stable_sum};

type BlockFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// The pair of feature maps (g1, g2) whose dot product forms the moment
/// function. Defaults to identity maps on the raw feature blocks.
#[derive(Clone)]
pub struct MomentFunctions {
    g1: BlockFn,
    g2: BlockFn,
}

impl std::fmt::Debug for MomentFunctions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("MomentFunctions {..}")
    }
}

impl MomentFunctions {
    pub fn identity() -> Self {
        let id: BlockFn = Arc::new(|x: &[f64]| x.to_vec());
        Self {
            g1: id.clone(),
            g2: id,
        }
    }

    pub fn from_fns(
        g1: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        g2: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            g1: Arc::new(g1),
            g2: Arc::new(g2),
        }
    }

    /// Apply to the pooled rows; outputs must be finite and equal-dimensional.
    pub fn eval(&self, data: &TwoSampleData, roles: &FeatureRoles) -> Result<GValues> {
        roles.validate_against(data.dim())?;
        let x1 = data.pooled_columns(&roles.idx1);
        let x2 = data.pooled_columns(&roles.idx2);
        let m = data.m();
        let probe1 = (self.g1)(x1.row(0).as_slice().unwrap());
        let probe2 = (self.g2)(x2.row(0).as_slice().unwrap());
        if probe1.len() != probe2.len() || probe1.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "g1 and g2 must map to the same dimension, got {} and {}",
                probe1.len(),
                probe2.len()
            )));
        }
        let d = probe1.len();
        let mut g1 = Array2::zeros((m, d));
        let mut g2 = Array2::zeros((m, d));
        let mut g12 = vec![0.0; m];
        for i in 0..m {
            let v1 = (self.g1)(x1.row(i).as_slice().unwrap());
            let v2 = (self.g2)(x2.row(i).as_slice().unwrap());
            if v1.len() != d || v2.len() != d {
                return Err(Error::DimensionMismatch("ragged moment function".into()));
            }
            let mut dot = 0.0;
            for j in 0..d {
                if !(v1[j].is_finite() && v2[j].is_finite()) {
                    return Err(Error::NonFiniteEvaluation(v1[j]));
                }
                g1[[i, j]] = v1[j];
                g2[[i, j]] = v2[j];
                dot += v1[j] * v2[j];
            }
            g12[i] = dot;
        }
        Ok(GValues {
            g1,
            g2,
            g12,
            n: data.n(),
        })
    }
}

/// Per-row values of g1, g2 over the pooled sample, plus the dot products.
#[derive(Debug, Clone)]
pub struct GValues {
    pub g1: Array2<f64>,
    pub g2: Array2<f64>,
    pub g12: Vec<f64>,
    pub n: usize,
}

impl GValues {
    fn dim(&self) -> usize {
        self.g1.ncols()
    }

    fn block_mean(&self, values: &Array2<f64>, uprime: bool) -> Vec<f64> {
        let (lo, hi) = if uprime {
            (self.n, values.nrows())
        } else {
            (0, self.n)
        };
        let mut out = Vec::with_capacity(values.ncols());
        let mut buf = vec![0.0; hi - lo];
        for j in 0..values.ncols() {
            for (t, i) in (lo..hi).enumerate() {
                buf[t] = values[[i, j]];
            }
            out.push(stable_mean(&mut buf));
        }
        out
    }

    fn g12_block_mean(&self, uprime: bool) -> f64 {
        let (lo, hi) = if uprime {
            (self.n, self.g12.len())
        } else {
            (0, self.n)
        };
        let mut buf = self.g12[lo..hi].to_vec();
        stable_mean(&mut buf)
    }
}

/// Coefficients of the empirical CI moment quadratic m(alpha) = a a^2 + ...
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentQuadratic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl MomentQuadratic {
    pub fn eval(&self, alpha: f64) -> f64 {
        (self.a * alpha + self.b) * alpha + self.c
    }

    pub fn derivative(&self, alpha: f64) -> f64 {
        2.0 * self.a * alpha + self.b
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut buf: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    stable_sum(&mut buf)
}

/// Empirical coefficients of the CI moment quadratic from the six block
/// moments.
pub fn ci_moment_coeffs(
    data: &TwoSampleData,
    roles: &FeatureRoles,
    g: &MomentFunctions,
) -> Result<MomentQuadratic> {
    if data.nprime() < 1 {
        return Err(Error::DegenerateMixture);
    }
    let values = g.eval(data, roles)?;
    Ok(ci_moment_coeffs_from_values(&values))
}

fn ci_moment_coeffs_from_values(values: &GValues) -> MomentQuadratic {
    let g1u = values.block_mean(&values.g1, false);
    let g1v = values.block_mean(&values.g1, true);
    let g2u = values.block_mean(&values.g2, false);
    let g2v = values.block_mean(&values.g2, true);
    let m12u = values.g12_block_mean(false);
    let m12v = values.g12_block_mean(true);
    let a = dot(&g1u, &g2v) + dot(&g1v, &g2u) - dot(&g1u, &g2u) - dot(&g1v, &g2v);
    let b = m12u - m12v + 2.0 * dot(&g1v, &g2v) - dot(&g1u, &g2v) - dot(&g1v, &g2u);
    let c = m12v - dot(&g1v, &g2v);
    MomentQuadratic { a, b, c }
}

/// Direct signed-expectation evaluation of the CI moment at one alpha;
/// algebraically identical to the quadratic but computed without the
/// coefficient reduction, so it serves as the V-statistic oracle.
pub fn ci_moment_direct(
    data: &TwoSampleData,
    roles: &FeatureRoles,
    g: &MomentFunctions,
    alpha: f64,
) -> Result<f64> {
    let values = g.eval(data, roles)?;
    let w = signed_weights(data.n(), data.nprime(), alpha)?;
    let m1 = weighted_mean(values.g1.view(), &w)?;
    let m2 = weighted_mean(values.g2.view(), &w)?;
    let g12 = Array2::from_shape_vec((values.g12.len(), 1), values.g12.clone())
        .expect("length matches");
    let e12 = weighted_mean(g12.view(), &w)?[0];
    Ok(e12 - m1.dot(&m2))
}

/// Which estimator produced an [`AlphaEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpeMethod {
    Ci,
    Mci,
    Fixed,
}

/// Estimated mixture proportion with solver diagnostics.
#[derive(Debug, Clone)]
pub struct AlphaEstimate {
    pub alpha_hat: f64,
    pub search_range: (f64, f64),
    pub objective_at_hat: f64,
    pub roots_found: Vec<f64>,
    pub asymp_variance: Option<f64>,
    pub method: MpeMethod,
    pub flags: Vec<String>,
    /// Coarse profile of the squared moment over the range (MCI only).
    pub grid_profile: Option<Vec<(f64, f64)>>,
    /// Empirical quadratic (CI only), for downstream derivative use.
    pub quadratic: Option<MomentQuadratic>,
}

/// Configuration of the CI estimator.
#[derive(Debug, Clone)]
pub struct CiConfig {
    pub range: (f64, f64),
    pub quad_eps: f64,
    pub fallback_grid: usize,
}

impl Default for CiConfig {
    fn default() -> Self {
        Self {
            range: (1.0, 50.0),
            quad_eps: 1e-10,
            fallback_grid: 2000,
        }
    }
}

impl CiConfig {
    pub fn with_range(lo: f64, hi: f64) -> Self {
        Self {
            range: (lo, hi),
            ..Self::default()
        }
    }
}

/// CI estimator: roots of the empirical quadratic restricted to the search
/// range, with a dense-grid argmin fallback when no root lands inside.
pub fn estimate_alpha_ci(
    data: &TwoSampleData,
    roles: &FeatureRoles,
    g: &MomentFunctions,
    cfg: &CiConfig,
    g_alt: Option<&MomentFunctions>,
) -> Result<AlphaEstimate> {
    let (lo, hi) = cfg.range;
    if !(lo < hi) {
        return Err(Error::Config(format!("empty search range [{lo}, {hi}]")));
    }
    let values = g.eval(data, roles)?;
    if data.nprime() < 1 {
        return Err(Error::DegenerateMixture);
    }
    let quad = ci_moment_coeffs_from_values(&values);
    let roots = match solve_quadratic(quad.a, quad.b, quad.c, cfg.quad_eps) {
        Ok(r) => r,
        Err(Error::IdenticallyZeroPolynomial) => vec![],
        Err(e) => return Err(e),
    };
    let in_range: Vec<f64> = roots
        .iter()
        .copied()
        .filter(|&r| r >= lo && r <= hi)
        .collect();
    let mut flags = Vec::new();
    let alpha_hat = match in_range.len() {
        1 => in_range[0],
        2 => {
            if let Some(alt) = g_alt {
                let alt_quad = ci_moment_coeffs(data, roles, alt)?;
                flags.push("disambiguated-with-alternate-g".into());
                let (r0, r1) = (in_range[0], in_range[1]);
                if alt_quad.eval(r0).powi(2) <= alt_quad.eval(r1).powi(2) {
                    r0
                } else {
                    r1
                }
            } else {
                flags.push("two-roots-in-range-no-alternate-g".into());
                let (r0, r1) = (in_range[0], in_range[1]);
                if quad.eval(r0).powi(2) <= quad.eval(r1).powi(2) {
                    r0
                } else {
                    r1
                }
            }
        }
        _ => {
            flags.push("grid-fallback".into());
            let obj = |a: f64| quad.eval(a).powi(2);
            let steps = cfg.fallback_grid;
            let mut best = (lo, obj(lo));
            let mut best_idx = 0usize;
            for i in 0..=steps {
                let x = lo + (hi - lo) * i as f64 / steps as f64;
                let v = obj(x);
                if v < best.1 {
                    best = (x, v);
                    best_idx = i;
                }
            }
            let blo = lo + (hi - lo) * best_idx.saturating_sub(1) as f64 / steps as f64;
            let bhi = lo + (hi - lo) * (best_idx + 1).min(steps) as f64 / steps as f64;
            if blo < bhi {
                let (x, _) = golden_section_min(obj, blo, bhi, 1e-8 * (hi - lo))?;
                x
            } else {
                best.0
            }
        }
    };

    let objective_at_hat = quad.eval(alpha_hat).powi(2);
    let d0 = quad.derivative(alpha_hat);
    let (gt_u, gt_v) = centered_product_values(&values, data, alpha_hat)?;
    let asymp_variance = match asymptotic_variance(
        &gt_u,
        &gt_v,
        alpha_hat,
        d0,
        data.m(),
        data.n(),
        data.nprime(),
    ) {
        Ok(v) => Some(v),
        Err(Error::VanishingMomentDerivative) => {
            flags.push("variance-skipped-vanishing-d0".into());
            None
        }
        Err(e) => return Err(e),
    };
    Ok(AlphaEstimate {
        alpha_hat,
        search_range: (lo, hi),
        objective_at_hat,
        roots_found: roots,
        asymp_variance,
        method: MpeMethod::Ci,
        flags,
        grid_profile: None,
        quadratic: Some(quad),
    })
}

/// Centered products (g1 - mean)(g2 - mean) per row, split into the two
/// blocks, with the marginal means taken under the signed measure at `alpha`.
pub fn centered_product_values(
    values: &GValues,
    data: &TwoSampleData,
    alpha: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let w = signed_weights(data.n(), data.nprime(), alpha)?;
    let m1 = weighted_mean(values.g1.view(), &w)?;
    let m2 = weighted_mean(values.g2.view(), &w)?;
    let m = data.m();
    let d = values.dim();
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let mut acc = 0.0;
        for j in 0..d {
            acc += (values.g1[[i, j]] - m1[j]) * (values.g2[[i, j]] - m2[j]);
        }
        out.push(acc);
    }
    let v = out.split_off(data.n());
    Ok((out, v))
}

/// Plug-in estimate of Var(alpha_hat): the theorem variance divided by M.
pub fn asymptotic_variance(
    gtilde_u: &[f64],
    gtilde_v: &[f64],
    alpha_hat: f64,
    d0_hat: f64,
    m: usize,
    n: usize,
    nprime: usize,
) -> Result<f64> {
    if d0_hat.abs() < 1e-10 {
        return Err(Error::VanishingMomentDerivative);
    }
    let nu = m as f64 / n as f64;
    let mut num = nu * alpha_hat * alpha_hat * population_variance(gtilde_u);
    if nprime > 0 {
        let nup = m as f64 / nprime as f64;
        num += nup * (1.0 - alpha_hat) * (1.0 - alpha_hat) * population_variance(gtilde_v);
    }
    Ok(num / (d0_hat * d0_hat) / m as f64)
}

fn population_variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mean = stable_mean(xs);
    let sq: Vec<f64> = xs.iter().map(|&x| (x - mean) * (x - mean)).collect();
    stable_mean(&sq)
}

/// Configuration of the MCI estimator.
#[derive(Debug, Clone)]
pub struct MciConfig {
    pub range: (f64, f64),
    pub lambda: f64,
    pub sigma_s: f64,
    pub coarse_grid: usize,
    pub tol: f64,
}

impl Default for MciConfig {
    fn default() -> Self {
        Self {
            range: (1.1, 1.5),
            lambda: 5e-4,
            sigma_s: 3.5,
            coarse_grid: 25,
            tol: 1e-4,
        }
    }
}

impl MciConfig {
    pub fn with_range(lo: f64, hi: f64) -> Self {
        Self {
            range: (lo, hi),
            ..Self::default()
        }
    }
}

/// Shared state for repeated MCI moment evaluations across alphas: the K_S
/// Gram and the scalar g values are fixed, only the weights change.
pub struct MciMomentEvaluator {
    ks: crate::numerics::SymMatrix,
    targets: Array2<f64>,
    n: usize,
    nprime: usize,
}

impl MciMomentEvaluator {
    pub fn new(
        data: &TwoSampleData,
        roles: &FeatureRoles,
        g: &MomentFunctions,
        lambda_check: f64,
        sigma_s: f64,
    ) -> Result<Self> {
        if roles.idx_s.is_empty() {
            return Err(Error::Config("MCI requires non-empty xs role".into()));
        }
        if lambda_check <= 0.0 {
            return Err(Error::Config("lambda must be positive".into()));
        }
        let values = g.eval(data, roles)?;
        if values.dim() != 1 {
            return Err(Error::Config(
                "MCI moment requires scalar-valued g1, g2".into(),
            ));
        }
        let xs = data.pooled_columns(&roles.idx_s);
        let ks = gram(xs.view(), KernelSpec::new(sigma_s)?);
        let m = data.m();
        let mut targets = Array2::zeros((m, 2));
        targets.column_mut(0).assign(&values.g1.column(0));
        targets.column_mut(1).assign(&values.g2.column(0));
        Ok(Self {
            ks,
            targets,
            n: data.n(),
            nprime: data.nprime(),
        })
    }

    /// Residual pairs (g1 - mu1, g2 - mu2) at `alpha`.
    pub fn residuals(&self, alpha: f64, lambda: f64) -> Result<(Array1<f64>, Array1<f64>)> {
        let w = signed_weights(self.n, self.nprime, alpha)?;
        let coeffs = ws_krr_fit(&self.ks, &self.targets, &w, lambda)?;
        let fitted = self.ks.as_array().dot(&coeffs);
        let r1 = &self.targets.column(0) - &fitted.column(0);
        let r2 = &self.targets.column(1) - &fitted.column(1);
        Ok((r1, r2))
    }

    /// The empirical MCI moment at `alpha`.
    pub fn moment(&self, alpha: f64, lambda: f64) -> Result<f64> {
        let (r1, r2) = self.residuals(alpha, lambda)?;
        let w = signed_weights(self.n, self.nprime, alpha)?;
        let mut buf: Vec<f64> = (0..r1.len())
            .map(|i| w.as_slice()[i] * r1[i] * r2[i])
            .collect();
        Ok(stable_sum(&mut buf))
    }
}

/// One-shot MCI moment evaluation.
pub fn mci_moment(
    data: &TwoSampleData,
    roles: &FeatureRoles,
    alpha: f64,
    lambda: f64,
    ks_spec: KernelSpec,
    g: &MomentFunctions,
) -> Result<f64> {
    let ev = MciMomentEvaluator::new(data, roles, g, lambda, ks_spec.bandwidth)?;
    ev.moment(alpha, lambda)
}

/// MCI estimator: coarse scan of the squared moment over the range, then
/// golden-section refinement inside the best bracket.
pub fn estimate_alpha_mci(
    data: &TwoSampleData,
    roles: &FeatureRoles,
    g: &MomentFunctions,
    cfg: &MciConfig,
) -> Result<AlphaEstimate> {
    let (lo, hi) = cfg.range;
    if !(lo < hi) {
        return Err(Error::Config(format!("empty search range [{lo}, {hi}]")));
    }
    let ev = MciMomentEvaluator::new(data, roles, g, cfg.lambda, cfg.sigma_s)?;
    let steps = cfg.coarse_grid.max(2) - 1;
    let mut profile = Vec::with_capacity(steps + 1);
    let mut best_idx = 0usize;
    for i in 0..=steps {
        let x = lo + (hi - lo) * i as f64 / steps as f64;
        let m = ev.moment(x, cfg.lambda)?;
        profile.push((x, m * m));
        if profile[i].1 < profile[best_idx].1 {
            best_idx = i;
        }
    }
    let blo = profile[best_idx.saturating_sub(1)].0;
    let bhi = profile[(best_idx + 1).min(steps)].0;
    let mut flags = Vec::new();
    let alpha_hat = if blo < bhi {
        let mut failure: Option<Error> = None;
        let (x, _) = golden_section_min(
            |a| match ev.moment(a, cfg.lambda) {
                Ok(m) => m * m,
                Err(e) => {
                    failure = Some(e);
                    f64::NAN
                }
            },
            blo,
            bhi,
            cfg.tol,
        )
        .map_err(|e| failure.take().unwrap_or(e))?;
        x
    } else {
        flags.push("degenerate-bracket".into());
        profile[best_idx].0
    };

    let m_hat = ev.moment(alpha_hat, cfg.lambda)?;
    let (r1, r2) = ev.residuals(alpha_hat, cfg.lambda)?;
    let gt: Vec<f64> = (0..r1.len()).map(|i| r1[i] * r2[i]).collect();
    let (gt_u, gt_v) = gt.split_at(data.n());
    let d0 = mci_d0_hat(gt_u, gt_v);
    let asymp_variance = match asymptotic_variance(
        gt_u,
        gt_v,
        alpha_hat,
        d0,
        data.m(),
        data.n(),
        data.nprime(),
    ) {
        Ok(v) => Some(v),
        Err(Error::VanishingMomentDerivative) => {
            flags.push("variance-skipped-vanishing-d0".into());
            None
        }
        Err(e) => return Err(e),
    };
    Ok(AlphaEstimate {
        alpha_hat,
        search_range: (lo, hi),
        objective_at_hat: m_hat * m_hat,
        roots_found: vec![],
        asymp_variance,
        method: MpeMethod::Mci,
        flags,
        grid_profile: Some(profile),
        quadratic: None,
    })
}

/// d0 for the MCI side: difference of the block means of the centered
/// products.
pub fn mci_d0_hat(gtilde_u: &[f64], gtilde_v: &[f64]) -> f64 {
    let mut bu = gtilde_u.to_vec();
    let mut bv = gtilde_v.to_vec();
    stable_mean(&mut bu) - stable_mean(&mut bv)
}

/// Which estimator to run for one of the two proportions.
#[derive(Debug, Clone)]
pub enum SideEstimator {
    Ci(CiConfig),
    Mci(MciConfig),
    /// Known proportion (PU mode fixes alpha+ at 1).
    Fixed(f64),
}

/// Result of the two-proportion pipeline.
#[derive(Debug, Clone)]
pub struct PriorsEstimate {
    pub theta: f64,
    pub theta_prime: f64,
    pub alpha_plus: AlphaEstimate,
    pub alpha_minus: AlphaEstimate,
    pub clamped: bool,
}

fn run_side(
    data: &TwoSampleData,
    roles: &FeatureRoles,
    g: &MomentFunctions,
    side: &SideEstimator,
) -> Result<AlphaEstimate> {
    match side {
        SideEstimator::Ci(cfg) => estimate_alpha_ci(data, roles, g, cfg, None),
        SideEstimator::Mci(cfg) => estimate_alpha_mci(data, roles, g, cfg),
        SideEstimator::Fixed(alpha) => Ok(AlphaEstimate {
            alpha_hat: *alpha,
            search_range: (*alpha, *alpha),
            objective_at_hat: 0.0,
            roots_found: vec![],
            asymp_variance: Some(0.0),
            method: MpeMethod::Fixed,
            flags: vec!["fixed".into()],
            grid_profile: None,
            quadratic: None,
        }),
    }
}

/// Estimate both proportions (possibly with different feature roles per
/// side), convert to class priors, and clamp them into [0, 1] with a flag.
pub fn estimate_class_priors(
    data: &TwoSampleData,
    roles_plus: &FeatureRoles,
    roles_minus: &FeatureRoles,
    g: &MomentFunctions,
    plus: &SideEstimator,
    minus: &SideEstimator,
) -> Result<PriorsEstimate> {
    let alpha_plus = run_side(data, roles_plus, g, plus)?;
    let alpha_minus = run_side(data, roles_minus, g, minus)?;
    if alpha_plus.alpha_hat == alpha_minus.alpha_hat {
        return Err(Error::NonIdentifiable);
    }
    let denom = alpha_plus.alpha_hat - alpha_minus.alpha_hat;
    let theta_raw = (1.0 - alpha_minus.alpha_hat) / denom;
    let theta_prime_raw = -alpha_minus.alpha_hat / denom;
    let theta = theta_raw.clamp(0.0, 1.0);
    let theta_prime = theta_prime_raw.clamp(0.0, 1.0);
    let clamped = theta != theta_raw || theta_prime != theta_prime_raw;
    Ok(PriorsEstimate {
        theta,
        theta_prime,
        alpha_plus,
        alpha_minus,
        clamped,
    })
}
