//! Data model for the two unlabeled samples and the signed mixture.
//!
//! A dataset is two blocks of rows: `n` draws from U and `n'` draws from U'.
//! Class labels, when present (synthetic generation, labeled screening), are
//! stored separately from the feature matrices and are never consumed by the
//! estimators or tests; only the generator tools and evaluation code may look
//! at them.

mod csv;
mod generate;

pub use csv::{load_matrix_csv, save_matrix_csv};
pub use generate::{break_irreducibility_and_cify, gen_gaussian, GaussianSpec, ResampleMode};

use ndarray::{s, Array1, Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Deterministic stream for a given seed. ChaCha8 is specified by its keyed
/// counter construction, so streams are identical across platforms.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Per-trial seed derivation: `seed XOR trial`.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    seed ^ trial
}

/// The two unlabeled samples with optional per-row class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSampleData {
    rows_u: Array2<f64>,
    rows_uprime: Array2<f64>,
    feature_names: Vec<String>,
    labels_u: Option<Vec<i8>>,
    labels_uprime: Option<Vec<i8>>,
}

impl TwoSampleData {
    pub fn new(
        rows_u: Array2<f64>,
        rows_uprime: Array2<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        Self::with_labels(rows_u, rows_uprime, feature_names, None, None)
    }

    pub fn with_labels(
        rows_u: Array2<f64>,
        rows_uprime: Array2<f64>,
        feature_names: Vec<String>,
        labels_u: Option<Vec<i8>>,
        labels_uprime: Option<Vec<i8>>,
    ) -> Result<Self> {
        if rows_u.nrows() == 0 {
            return Err(Error::DimensionMismatch("U block must be non-empty".into()));
        }
        if rows_u.ncols() != rows_uprime.ncols() && rows_uprime.nrows() > 0 {
            return Err(Error::DimensionMismatch(format!(
                "U has {} columns, U' has {}",
                rows_u.ncols(),
                rows_uprime.ncols()
            )));
        }
        if feature_names.len() != rows_u.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                rows_u.ncols()
            )));
        }
        for v in rows_u.iter().chain(rows_uprime.iter()) {
            if !v.is_finite() {
                return Err(Error::DimensionMismatch("non-finite feature entry".into()));
            }
        }
        if let Some(l) = &labels_u {
            if l.len() != rows_u.nrows() {
                return Err(Error::DimensionMismatch("label count mismatch on U".into()));
            }
        }
        if let Some(l) = &labels_uprime {
            if l.len() != rows_uprime.nrows() {
                return Err(Error::DimensionMismatch("label count mismatch on U'".into()));
            }
        }
        Ok(Self {
            rows_u,
            rows_uprime,
            feature_names,
            labels_u,
            labels_uprime,
        })
    }

    pub fn n(&self) -> usize {
        self.rows_u.nrows()
    }

    pub fn nprime(&self) -> usize {
        self.rows_uprime.nrows()
    }

    /// Pooled sample count M = n + n'.
    pub fn m(&self) -> usize {
        self.n() + self.nprime()
    }

    pub fn dim(&self) -> usize {
        self.rows_u.ncols()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn features_u(&self) -> ArrayView2<'_, f64> {
        self.rows_u.view()
    }

    pub fn features_uprime(&self) -> ArrayView2<'_, f64> {
        self.rows_uprime.view()
    }

    /// M x |idx| matrix of the selected columns over the pooled rows,
    /// U block first.
    pub fn pooled_columns(&self, idx: &[usize]) -> Array2<f64> {
        let m = self.m();
        let mut out = Array2::zeros((m, idx.len()));
        for (j, &c) in idx.iter().enumerate() {
            out.slice_mut(s![..self.n(), j]).assign(&self.rows_u.column(c));
            if self.nprime() > 0 {
                out.slice_mut(s![self.n().., j])
                    .assign(&self.rows_uprime.column(c));
            }
        }
        out
    }

    /// Labels are exposed only for generation provenance and evaluation.
    pub fn labels(&self) -> (Option<&[i8]>, Option<&[i8]>) {
        (self.labels_u.as_deref(), self.labels_uprime.as_deref())
    }

    /// Write `<stem>.u.csv` and `<stem>.uprime.csv`.
    pub fn save(&self, stem: &str) -> Result<()> {
        save_matrix_csv(
            &format!("{stem}.u.csv"),
            &self.feature_names,
            &self.rows_u,
            self.labels_u.as_deref(),
        )?;
        save_matrix_csv(
            &format!("{stem}.uprime.csv"),
            &self.feature_names,
            &self.rows_uprime,
            self.labels_uprime.as_deref(),
        )?;
        Ok(())
    }

    pub fn load(u_path: &str, uprime_path: &str) -> Result<Self> {
        let (names_u, rows_u, labels_u) = load_matrix_csv(u_path)?;
        let (names_v, rows_uprime, labels_uprime) = load_matrix_csv(uprime_path)?;
        if names_u != names_v {
            return Err(Error::Config(format!(
                "feature headers differ between {u_path} and {uprime_path}"
            )));
        }
        Self::with_labels(rows_u, rows_uprime, names_u, labels_u, labels_uprime)
    }
}

/// Column-index assignment of the feature blocks X1, X2 and X_S.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureRoles {
    pub idx1: Vec<usize>,
    pub idx2: Vec<usize>,
    pub idx_s: Vec<usize>,
}

impl FeatureRoles {
    pub fn new(idx1: Vec<usize>, idx2: Vec<usize>, idx_s: Vec<usize>) -> Result<Self> {
        if idx1.is_empty() || idx2.is_empty() {
            return Err(Error::Config("x1 and x2 roles must be non-empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for &i in idx1.iter().chain(&idx2).chain(&idx_s) {
            if !seen.insert(i) {
                return Err(Error::Config(format!("column {i} assigned to two roles")));
            }
        }
        Ok(Self { idx1, idx2, idx_s })
    }

    /// Parse a spec like `x1=0;x2=1;xs=2` with comma-separated index lists.
    pub fn parse(spec: &str) -> Result<Self> {
        let (mut idx1, mut idx2, mut idx_s) = (vec![], vec![], vec![]);
        for part in spec.split(';').filter(|p| !p.trim().is_empty()) {
            let (key, list) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad roles fragment {part:?}")))?;
            let idxs: Vec<usize> = list
                .split(',')
                .filter(|t| !t.trim().is_empty())
                .map(|t| {
                    t.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("bad column index {t:?}")))
                })
                .collect::<Result<_>>()?;
            match key.trim() {
                "x1" => idx1 = idxs,
                "x2" => idx2 = idxs,
                "xs" => idx_s = idxs,
                other => return Err(Error::Config(format!("unknown role {other:?}"))),
            }
        }
        Self::new(idx1, idx2, idx_s)
    }

    pub fn validate_against(&self, dim: usize) -> Result<()> {
        for &i in self.idx1.iter().chain(&self.idx2).chain(&self.idx_s) {
            if i >= dim {
                return Err(Error::Config(format!(
                    "role column {i} out of range for {dim} features"
                )));
            }
        }
        Ok(())
    }
}

/// Per-row weights realizing the signed measure alpha*U + (1-alpha)*U':
/// `alpha/n` on the U block and `(1-alpha)/n'` on the U' block.
#[derive(Debug, Clone)]
pub struct SignedWeights {
    pub alpha: f64,
    pub n: usize,
    pub nprime: usize,
    weights: Vec<f64>,
}

impl SignedWeights {
    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn u_weight(&self) -> f64 {
        self.weights[0]
    }

    pub fn uprime_weight(&self) -> f64 {
        if self.nprime > 0 {
            self.weights[self.n]
        } else {
            0.0
        }
    }
}

/// Block-constant signed weights. `nprime = 0` is the labeled-screening mode
/// and requires `alpha == 1` exactly.
pub fn signed_weights(n: usize, nprime: usize, alpha: f64) -> Result<SignedWeights> {
    assert!(n >= 1, "U block must be non-empty");
    if nprime == 0 && alpha != 1.0 {
        return Err(Error::DegenerateMixture);
    }
    let mut weights = Vec::with_capacity(n + nprime);
    weights.resize(n, alpha / n as f64);
    if nprime > 0 {
        weights.resize(n + nprime, (1.0 - alpha) / nprime as f64);
    }
    Ok(SignedWeights {
        alpha,
        n,
        nprime,
        weights,
    })
}

/// `w^T values`: expectation of each column under the signed measure.
pub fn weighted_mean(values: ArrayView2<'_, f64>, w: &SignedWeights) -> Result<Array1<f64>> {
    if values.nrows() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows vs {} weights",
            values.nrows(),
            w.len()
        )));
    }
    let mut out = Array1::zeros(values.ncols());
    let mut scratch = vec![0.0; values.nrows()];
    for (j, col) in values.columns().into_iter().enumerate() {
        for (t, (&v, &wi)) in col.iter().zip(w.as_slice()).enumerate() {
            scratch[t] = v * wi;
        }
        out[j] = crate::numerics::stable_sum(&mut scratch);
    }
    Ok(out)
}

/// Class priors of the two unlabeled mixtures, with the convention
/// theta > theta'.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassPriors {
    pub theta: f64,
    pub theta_prime: f64,
}

impl ClassPriors {
    pub fn new(theta: f64, theta_prime: f64) -> Result<Self> {
        if !(theta.is_finite() && theta_prime.is_finite()) || theta <= theta_prime {
            return Err(Error::Config(format!(
                "class priors require theta > theta', got ({theta}, {theta_prime})"
            )));
        }
        Ok(Self { theta, theta_prime })
    }
}

/// Mixture coefficients expressing P and N in terms of U and U'.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaPair {
    pub plus: f64,
    pub minus: f64,
}

/// (theta, theta') from (alpha+, alpha-): the inverse of
/// [`alphas_from_thetas`], exact in closed form.
pub fn thetas_from_alphas(a: &AlphaPair) -> Result<ClassPriors> {
    let denom = a.plus - a.minus;
    if denom == 0.0 {
        return Err(Error::NonIdentifiable);
    }
    Ok(ClassPriors {
        theta: (1.0 - a.minus) / denom,
        theta_prime: -a.minus / denom,
    })
}

/// alpha+ = (1 - theta')/(theta - theta'), alpha- = -theta'/(theta - theta').
pub fn alphas_from_thetas(p: &ClassPriors) -> AlphaPair {
    let d = p.theta - p.theta_prime;
    AlphaPair {
        plus: (1.0 - p.theta_prime) / d,
        minus: -p.theta_prime / d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn signed_weights_uniform() {
        let w = signed_weights(2, 2, 0.5).unwrap();
        assert_eq!(w.as_slice(), &[0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn signed_weights_signed_case() {
        let w = signed_weights(1, 1, 4.0 / 3.0).unwrap();
        assert_abs_diff_eq!(w.as_slice()[0], 4.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w.as_slice()[1], -1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn signed_weights_screening_mode() {
        let w = signed_weights(3, 0, 1.0).unwrap();
        assert_eq!(w.as_slice(), &[1.0 / 3.0; 3]);
        assert!(matches!(
            signed_weights(3, 0, 0.9),
            Err(Error::DegenerateMixture)
        ));
    }

    #[test]
    fn weighted_mean_cases() {
        let w = signed_weights(1, 1, 0.5).unwrap();
        let m = weighted_mean(array![[1.0], [3.0]].view(), &w).unwrap();
        assert_abs_diff_eq!(m[0], 2.0, epsilon = 1e-15);

        let w = signed_weights(1, 1, 4.0 / 3.0).unwrap();
        let m = weighted_mean(array![[0.0], [3.0]].view(), &w).unwrap();
        assert_abs_diff_eq!(m[0], -1.0, epsilon = 1e-14);

        let m = weighted_mean(array![[1.0], [1.0]].view(), &w).unwrap();
        assert_abs_diff_eq!(m[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn prior_alpha_conversions() {
        let p = ClassPriors::new(0.8, 0.2).unwrap();
        let a = alphas_from_thetas(&p);
        assert_abs_diff_eq!(a.plus, 4.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a.minus, -1.0 / 3.0, epsilon = 1e-15);

        let p = thetas_from_alphas(&AlphaPair {
            plus: 4.0 / 3.0,
            minus: -1.0 / 3.0,
        })
        .unwrap();
        assert_abs_diff_eq!(p.theta, 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(p.theta_prime, 0.2, epsilon = 1e-15);

        let p = thetas_from_alphas(&AlphaPair {
            plus: 1.0,
            minus: 0.0,
        })
        .unwrap();
        assert_eq!((p.theta, p.theta_prime), (1.0, 0.0));

        let p = thetas_from_alphas(&AlphaPair {
            plus: 2.0,
            minus: -1.0,
        })
        .unwrap();
        assert_abs_diff_eq!(p.theta, 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.theta_prime, 1.0 / 3.0, epsilon = 1e-15);

        let a = alphas_from_thetas(&ClassPriors::new(1.0, 0.2).unwrap());
        assert_abs_diff_eq!(a.plus, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a.minus, -0.25, epsilon = 1e-15);

        assert!(matches!(
            thetas_from_alphas(&AlphaPair {
                plus: 0.7,
                minus: 0.7
            }),
            Err(Error::NonIdentifiable)
        ));
    }

    #[test]
    fn roles_parse() {
        let r = FeatureRoles::parse("x1=0;x2=1;xs=2").unwrap();
        assert_eq!(r.idx1, vec![0]);
        assert_eq!(r.idx2, vec![1]);
        assert_eq!(r.idx_s, vec![2]);
        let r = FeatureRoles::parse("x1=0,3;x2=1,2").unwrap();
        assert_eq!(r.idx1, vec![0, 3]);
        assert!(r.idx_s.is_empty());
        assert!(FeatureRoles::parse("x1=0;x2=0").is_err());
    }

    proptest! {
        #[test]
        fn alpha_theta_roundtrip(plus in 1.0f64..20.0, minus in -20.0f64..0.0) {
            let pair = AlphaPair { plus, minus };
            let p = thetas_from_alphas(&pair).unwrap();
            let back = alphas_from_thetas(&p);
            prop_assert!((back.plus - plus).abs() <= 1e-12 * plus.abs().max(1.0));
            prop_assert!((back.minus - minus).abs() <= 1e-12 * minus.abs().max(1.0));
        }

        #[test]
        fn signed_weights_sum_to_one(n in 1usize..200, np in 1usize..200, alpha in -3.0f64..4.0) {
            let w = signed_weights(n, np, alpha).unwrap();
            let sum: f64 = w.as_slice().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
        }
    }
}
