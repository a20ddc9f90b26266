//! CI and MCI tests without known mixture proportions.
//!
//! The statistic plugs the estimated proportion into T_alpha; its null mean
//! and variance then pick up Taylor correction terms driven by the
//! linearization S of the estimator, its moment derivative d0, and the
//! curvature c0 of T at the plug-in point. Every correction term is an
//! empirical block average over the product Gram and the centered moment
//! values, reduced to row means so the whole assembly is O(M^2). The cross
//! term of V[T-check] is implemented exactly as printed (prefactor 16 with
//! the symmetrized half inside the conditional mean); the equivalent
//! known-proportion form is surfaced in the diagnostics for comparison.

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::ktest::{
    assemble_report, product_gram_null_moments, CiStatEvaluator, MciStatEvaluator, ProductGram,
    StatConfig, TestKind, TestReport,
};
use crate::mixture::{FeatureRoles, TwoSampleData};
use crate::mpe::{
    centered_product_values, estimate_alpha_ci, estimate_alpha_mci, mci_d0_hat, AlphaEstimate,
    CiConfig, MciConfig, MciMomentEvaluator, MomentFunctions,
};
use crate::numerics::{fit_polynomial, stable_mean, stable_sum};

/// Configuration of a plug-in test: statistic kernels plus the embedded
/// mixture proportion estimator.
#[derive(Debug, Clone)]
pub struct PluginConfig {
    pub stat: StatConfig,
    pub ci_mpe: CiConfig,
    pub mci_mpe: MciConfig,
    /// Step for the quartic-fit curvature of the CI statistic.
    pub quartic_h: f64,
    /// Step for the central finite difference on the MCI statistic.
    pub fd_step: f64,
}

impl PluginConfig {
    pub fn ci_default() -> Self {
        Self {
            stat: StatConfig::ci_default(),
            ci_mpe: CiConfig::with_range(1.0, 50.0),
            mci_mpe: MciConfig::default(),
            quartic_h: 0.25,
            fd_step: 0.01,
        }
    }

    pub fn mci_default() -> Self {
        Self {
            stat: StatConfig::mci_plugin_default(),
            ci_mpe: CiConfig::with_range(1.0, 50.0),
            // The embedded MPE runs with its own kernel settings.
            mci_mpe: MciConfig {
                range: (1.1, 1.5),
                lambda: 1e-2,
                sigma_s: 3.0,
                coarse_grid: 25,
                tol: 1e-4,
            },
            quartic_h: 0.25,
            fd_step: 0.01,
        }
    }
}

/// Exact second derivative of the quartic interpolant of `f` at `center`,
/// from five symmetric nodes. T_CI is a degree-4 polynomial of the mixture
/// coefficient, so this is its exact curvature up to round-off.
pub fn quartic_second_derivative(
    mut f: impl FnMut(f64) -> Result<f64>,
    center: f64,
    h: f64,
) -> Result<f64> {
    let offsets = [-2.0 * h, -h, 0.0, h, 2.0 * h];
    let mut ys = [0.0; 5];
    for (y, off) in ys.iter_mut().zip(offsets) {
        *y = f(center + off)?;
        if !y.is_finite() {
            return Err(Error::NonFiniteEvaluation(center + off));
        }
    }
    let coeffs = fit_polynomial(&offsets, &ys)?;
    Ok(2.0 * coeffs[2])
}

/// Central finite difference for the MCI curvature (the KRR solve makes
/// T_MCI non-polynomial in alpha).
pub fn central_second_difference(
    mut f: impl FnMut(f64) -> Result<f64>,
    center: f64,
    t0: f64,
    h: f64,
) -> Result<f64> {
    let tp = f(center + h)?;
    let tm = f(center - h)?;
    let c0 = (tp - 2.0 * t0 + tm) / (h * h);
    if !c0.is_finite() {
        return Err(Error::NonFiniteEvaluation(center));
    }
    Ok(c0)
}

/// The named components of the corrected mean and variance.
#[derive(Debug, Clone, Copy)]
pub struct PluginTerms {
    pub c1: f64,
    pub mean_s_tprime: f64,
    pub mean_s2: f64,
    pub var_t: f64,
    /// The known-proportion (Theorem-style) variance of the same Gram, for
    /// diagnostics; algebraically equal to `var_t`.
    pub var_t_known_form: f64,
    pub var_s_tprime: f64,
    pub var_s2: f64,
    pub cov_t_stprime: f64,
    pub cov_t_s2: f64,
    pub cov_stprime_s2: f64,
    pub d0: f64,
    pub c0: f64,
}

impl PluginTerms {
    pub fn to_json(&self) -> Value {
        json!({
            "c1": self.c1,
            "mean_s_tprime": self.mean_s_tprime,
            "mean_s2": self.mean_s2,
            "var_t": self.var_t,
            "var_t_known_form": self.var_t_known_form,
            "var_s_tprime": self.var_s_tprime,
            "var_s2": self.var_s2,
            "cov_t_stprime": self.cov_t_stprime,
            "cov_t_s2": self.cov_t_s2,
            "cov_stprime_s2": self.cov_stprime_s2,
            "d0": self.d0,
            "c0": self.c0,
        })
    }
}

/// Corrected null mean and variance of the plug-in statistic.
///
/// `gtilde_u` / `gtilde_v` are the centered moment products on the two
/// blocks (marginal centering for CI, estimated conditional means for MCI),
/// all evaluated at the same plug-in alpha as the product Gram.
pub fn plugin_mean_var(
    g: &ProductGram,
    gtilde_u: &[f64],
    gtilde_v: &[f64],
    alpha_hat: f64,
    d0: f64,
    c0: f64,
) -> Result<(f64, f64, PluginTerms)> {
    if d0.abs() < 1e-10 {
        return Err(Error::VanishingMomentDerivative);
    }
    let n = g.n();
    let np = g.nprime();
    if gtilde_u.len() != n || gtilde_v.len() != np || np == 0 {
        return Err(Error::DimensionMismatch(
            "centered values must match the Gram blocks".into(),
        ));
    }
    let m = (n + np) as f64;
    let nu = m / n as f64;
    let nup = m / np as f64;
    let a = alpha_hat;
    let b = 1.0 - alpha_hat;
    let ga = g.matrix();
    let bm = crate::ktest::BlockMeans::compute(g);

    // l_{i,q} = u_i + v_q decomposition and its conditional means.
    let u: Vec<f64> = gtilde_u.iter().map(|&x| -(a / d0) * x).collect();
    let v: Vec<f64> = gtilde_v.iter().map(|&x| -(b / d0) * x).collect();
    let u_bar = stable_mean(&u);
    let v_bar = stable_mean(&v);
    let lm_u: Vec<f64> = u.iter().map(|&x| x + v_bar).collect();
    let lm_v: Vec<f64> = v.iter().map(|&x| u_bar + x).collect();

    // Conditional means of h'-check from the printed closed forms.
    let hp_u: Vec<f64> = bm.ruv.iter().map(|&r| bm.muv - r).collect();
    let hp_v: Vec<f64> = bm.rvu.iter().map(|&r| r - bm.muv).collect();

    let mean_of = |xs: &[f64]| stable_mean(xs);
    let mean_prod = |xs: &[f64], ys: &[f64]| {
        let buf: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| x * y).collect();
        stable_mean(&buf)
    };

    let c1 = nu * a * a * (bm.duu - bm.muu) + nup * b * b * (bm.dvv - bm.mvv);
    let mean_s_tprime = -(2.0 / d0)
        * (nu * a * mean_prod(gtilde_u, &hp_u) + nup * b * mean_prod(gtilde_v, &hp_v));
    let var_u = {
        let mu = mean_of(gtilde_u);
        let mut buf: Vec<f64> = gtilde_u.iter().map(|&x| (x - mu) * (x - mu)).collect();
        stable_mean(&mut buf)
    };
    let var_v = {
        let mv = mean_of(gtilde_v);
        let mut buf: Vec<f64> = gtilde_v.iter().map(|&x| (x - mv) * (x - mv)).collect();
        stable_mean(&mut buf)
    };
    let mean_s2 = (nu * a * a * var_u + nup * b * b * var_v) / (d0 * d0);
    let mean = c1 + mean_s_tprime + (c0 / 2.0) * mean_s2;

    // One pass per block pair accumulating the squared conditional means and
    // the bilinear covariance reductions.
    let mut sq_a_rows = Vec::with_capacity(n);
    let mut t_st_a_rows = Vec::with_capacity(n);
    let mut t_s2_a_rows = Vec::with_capacity(n);
    let mut buf = vec![0.0; n.max(np)];
    let mut buf2 = vec![0.0; n.max(np)];
    let mut buf3 = vec![0.0; n.max(np)];
    for i1 in 0..n {
        for i2 in 0..n {
            let a_uu = a * a * ga[[i1, i2]] + a * b * (bm.ruv[i1] + bm.ruv[i2]) + b * b * bm.mvv;
            buf[i2] = a_uu * a_uu;
            buf2[i2] = a_uu * hp_u[i1] * lm_u[i2];
            buf3[i2] = a_uu * lm_u[i1] * lm_u[i2];
        }
        sq_a_rows.push(stable_sum(&mut buf[..n]));
        t_st_a_rows.push(stable_sum(&mut buf2[..n]));
        t_s2_a_rows.push(stable_sum(&mut buf3[..n]));
    }
    let meansq_a = stable_sum(&mut sq_a_rows) / (n * n) as f64;
    let t_st_a = stable_sum(&mut t_st_a_rows) / (n * n) as f64;
    let t_s2_a = stable_sum(&mut t_s2_a_rows) / (n * n) as f64;

    let mut sq_b_rows = Vec::with_capacity(np);
    let mut t_st_b_rows = Vec::with_capacity(np);
    let mut t_s2_b_rows = Vec::with_capacity(np);
    for q1 in 0..np {
        for q2 in 0..np {
            let b_vv =
                a * a * bm.muu + a * b * (bm.rvu[q1] + bm.rvu[q2]) + b * b * ga[[n + q1, n + q2]];
            buf[q2] = b_vv * b_vv;
            buf2[q2] = b_vv * hp_v[q1] * lm_v[q2];
            buf3[q2] = b_vv * lm_v[q1] * lm_v[q2];
        }
        sq_b_rows.push(stable_sum(&mut buf[..np]));
        t_st_b_rows.push(stable_sum(&mut buf2[..np]));
        t_s2_b_rows.push(stable_sum(&mut buf3[..np]));
    }
    let meansq_b = stable_sum(&mut sq_b_rows) / (np * np) as f64;
    let t_st_b = stable_sum(&mut t_st_b_rows) / (np * np) as f64;
    let t_s2_b = stable_sum(&mut t_s2_b_rows) / (np * np) as f64;

    let mut sq_c_rows = Vec::with_capacity(n);
    let mut t_st_c1_rows = Vec::with_capacity(n);
    let mut t_st_c2_rows = Vec::with_capacity(n);
    let mut t_s2_c_rows = Vec::with_capacity(n);
    for i1 in 0..n {
        for q1 in 0..np {
            let c_uv = 0.5
                * (a * a * bm.ruu[i1] + a * b * ga[[i1, n + q1]] + a * b * bm.muv
                    + b * b * bm.rvv[q1]);
            buf[q1] = c_uv * c_uv;
            buf2[q1] = c_uv * hp_u[i1] * lm_v[q1];
            buf3[q1] = c_uv * hp_v[q1] * lm_u[i1];
        }
        sq_c_rows.push(stable_sum(&mut buf[..np]));
        t_st_c1_rows.push(stable_sum(&mut buf2[..np]));
        t_st_c2_rows.push(stable_sum(&mut buf3[..np]));
        for q1 in 0..np {
            let c_uv = 0.5
                * (a * a * bm.ruu[i1] + a * b * ga[[i1, n + q1]] + a * b * bm.muv
                    + b * b * bm.rvv[q1]);
            buf[q1] = c_uv * lm_u[i1] * lm_v[q1];
        }
        t_s2_c_rows.push(stable_sum(&mut buf[..np]));
    }
    let meansq_c = stable_sum(&mut sq_c_rows) / (n * np) as f64;
    let t_st_c1 = stable_sum(&mut t_st_c1_rows) / (n * np) as f64;
    let t_st_c2 = stable_sum(&mut t_st_c2_rows) / (n * np) as f64;
    let t_s2_c = stable_sum(&mut t_s2_c_rows) / (n * np) as f64;

    let var_t = 2.0 * nu * nu * meansq_a
        + 2.0 * nup * nup * meansq_b
        + 16.0 * nu * nup * meansq_c;
    let (_, var_t_known_form) = product_gram_null_moments(g, alpha_hat);

    let lu2 = nu * mean_prod(&lm_u, &lm_u) + nup * mean_prod(&lm_v, &lm_v);
    let hp2 = nu * mean_prod(&hp_u, &hp_u) + nup * mean_prod(&hp_v, &hp_v);
    let lh = nu * mean_prod(&lm_u, &hp_u) + nup * mean_prod(&lm_v, &hp_v);

    let var_s_tprime = 4.0 * lu2 * hp2 + 8.0 * lh * lh - mean_s_tprime * mean_s_tprime;
    let var_s2 = 3.0 * lu2 * lu2 - mean_s2 * mean_s2;
    let cov_t_stprime = 4.0 * nu * nu * t_st_a
        + 8.0 * nu * nup * t_st_c1
        + 8.0 * nu * nup * t_st_c2
        + 4.0 * nup * nup * t_st_b;
    let cov_t_s2 = 2.0 * nu * nu * t_s2_a + 8.0 * nu * nup * t_s2_c + 2.0 * nup * nup * t_s2_b;
    let cov_stprime_s2 = 6.0 * lh * lu2 - mean_s_tprime * mean_s2;

    let var = var_t
        + var_s_tprime
        + (c0 * c0 / 4.0) * var_s2
        + 2.0 * (cov_t_stprime + (c0 / 2.0) * cov_t_s2 + (c0 / 2.0) * cov_stprime_s2);

    let terms = PluginTerms {
        c1,
        mean_s_tprime,
        mean_s2,
        var_t,
        var_t_known_form,
        var_s_tprime,
        var_s2,
        cov_t_stprime,
        cov_t_s2,
        cov_stprime_s2,
        d0,
        c0,
    };
    Ok((mean, var, terms))
}

/// Curvature of the statistic at the plug-in point: exact quartic fit for
/// CI, central finite difference for MCI.
pub fn t_second_derivative(
    data: &TwoSampleData,
    roles: &FeatureRoles,
    kind: TestKind,
    alpha_hat: f64,
    cfg: &PluginConfig,
) -> Result<f64> {
    match kind {
        TestKind::Ci => {
            let ev = CiStatEvaluator::new(data, roles, &cfg.stat)?;
            let m = data.m() as f64;
            let t0 = ev.statistic_only(alpha_hat)? / m;
            ci_curvature(&ev, alpha_hat, t0, m, cfg.quartic_h)
        }
        TestKind::Mci => {
            let ev = MciStatEvaluator::new(data, roles, &cfg.stat)?;
            let m = data.m() as f64;
            let t0 = ev.statistic_only(alpha_hat)? / m;
            mci_curvature(&ev, alpha_hat, t0, m, cfg.fd_step)
        }
    }
}

fn ci_curvature(
    ev: &CiStatEvaluator,
    alpha_hat: f64,
    t0: f64,
    m: f64,
    h: f64,
) -> Result<f64> {
    quartic_second_derivative(
        |alpha| {
            if alpha == alpha_hat {
                Ok(t0)
            } else {
                ev.statistic_only(alpha).map(|mt| mt / m)
            }
        },
        alpha_hat,
        h,
    )
}

fn mci_curvature(
    ev: &MciStatEvaluator,
    alpha_hat: f64,
    t0: f64,
    m: f64,
    h: f64,
) -> Result<f64> {
    central_second_difference(
        |alpha| ev.statistic_only(alpha).map(|mt| mt / m),
        alpha_hat,
        t0,
        h,
    )
}

fn is_numerical(e: &Error) -> bool {
    matches!(
        e,
        Error::SingularSystem
            | Error::KrrSingular
            | Error::EigenNoConvergence { .. }
            | Error::NonFiniteEvaluation(_)
            | Error::VanishingMomentDerivative
            | Error::IdenticallyZeroPolynomial
    )
}

/// Run a plug-in CI or MCI test: estimate alpha, evaluate the statistic at
/// the estimate, and apply the Taylor-corrected gamma approximation.
/// Numerical failures surface in the diagnostics with the test defaulting to
/// non-rejection.
pub fn run_test_plugin(
    data: &TwoSampleData,
    roles: &FeatureRoles,
    kind: TestKind,
    level: f64,
    cfg: &PluginConfig,
) -> Result<TestReport> {
    let mode = match kind {
        TestKind::Ci => "CI-plugin",
        TestKind::Mci => "MCI-plugin",
    };
    match run_test_plugin_inner(data, roles, kind, level, cfg) {
        Ok(r) => Ok(r),
        Err(e) if is_numerical(&e) => {
            let mut diagnostics = Map::new();
            diagnostics.insert("error".into(), Value::String(e.to_string()));
            diagnostics.insert("fail-safe".into(), Value::Bool(true));
            Ok(TestReport {
                statistic: f64::NAN,
                null_mean: f64::NAN,
                null_var: f64::NAN,
                gamma_shape: None,
                gamma_scale: None,
                p_value: 1.0,
                reject: false,
                level,
                mode: mode.into(),
                alpha_used: f64::NAN,
                diagnostics,
            })
        }
        Err(e) => Err(e),
    }
}

fn run_test_plugin_inner(
    data: &TwoSampleData,
    roles: &FeatureRoles,
    kind: TestKind,
    level: f64,
    cfg: &PluginConfig,
) -> Result<TestReport> {
    let g = MomentFunctions::identity();
    let (estimate, stat, gram, gt_u, gt_v, d0, c0): (
        AlphaEstimate,
        f64,
        ProductGram,
        Vec<f64>,
        Vec<f64>,
        f64,
        f64,
    ) = match kind {
        TestKind::Ci => {
            let est = estimate_alpha_ci(data, roles, &g, &cfg.ci_mpe, None)?;
            let ev = CiStatEvaluator::new(data, roles, &cfg.stat)?;
            let (mt, gram) = ev.statistic(est.alpha_hat)?;
            let values = g.eval(data, roles)?;
            let (gt_u, gt_v) = centered_product_values(&values, data, est.alpha_hat)?;
            let d0 = est
                .quadratic
                .expect("CI estimate carries its quadratic")
                .derivative(est.alpha_hat);
            let m = data.m() as f64;
            let c0 = ci_curvature(&ev, est.alpha_hat, mt / m, m, cfg.quartic_h)?;
            (est, mt, gram, gt_u, gt_v, d0, c0)
        }
        TestKind::Mci => {
            let est = estimate_alpha_mci(data, roles, &g, &cfg.mci_mpe)?;
            let ev = MciStatEvaluator::new(data, roles, &cfg.stat)?;
            let (mt, gram) = ev.statistic(est.alpha_hat)?;
            // The correction terms use the estimator-side conditional means.
            let mpe_ev =
                MciMomentEvaluator::new(data, roles, &g, cfg.mci_mpe.lambda, cfg.mci_mpe.sigma_s)?;
            let (r1, r2) = mpe_ev.residuals(est.alpha_hat, cfg.mci_mpe.lambda)?;
            let gt: Vec<f64> = (0..r1.len()).map(|i| r1[i] * r2[i]).collect();
            let (gt_u, gt_v) = gt.split_at(data.n());
            let d0 = mci_d0_hat(gt_u, gt_v);
            let m = data.m() as f64;
            let c0 = mci_curvature(&ev, est.alpha_hat, mt / m, m, cfg.fd_step)?;
            (est, mt, gram, gt_u.to_vec(), gt_v.to_vec(), d0, c0)
        }
    };
    let alpha_hat = estimate.alpha_hat;
    let (mean, var, terms) = plugin_mean_var(&gram, &gt_u, &gt_v, alpha_hat, d0, c0)?;
    let mut diagnostics = Map::new();
    diagnostics.insert("alpha_hat".into(), json!(alpha_hat));
    diagnostics.insert("d0_hat".into(), json!(d0));
    diagnostics.insert("c0_hat".into(), json!(c0));
    diagnostics.insert("correction_terms".into(), terms.to_json());
    diagnostics.insert(
        "mpe_objective_at_hat".into(),
        json!(estimate.objective_at_hat),
    );
    if !estimate.flags.is_empty() {
        diagnostics.insert("mpe_flags".into(), json!(estimate.flags));
    }
    let mode = match kind {
        TestKind::Ci => "CI-plugin",
        TestKind::Mci => "MCI-plugin",
    };
    Ok(assemble_report(
        stat,
        mean,
        var,
        level,
        mode.into(),
        alpha_hat,
        diagnostics,
    ))
}
