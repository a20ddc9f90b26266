//! Synthetic Gaussian generators and the labeled-data transform that breaks
//! irreducibility while imposing class-conditional independence.

use ndarray::Array2;
use rand::prelude::*;
use rand_distr::StandardNormal;

use super::{seeded_rng, ClassPriors, FeatureRoles, TwoSampleData};
use crate::error::{Error, Result};

/// Class-conditional Gaussian data. Each row draws its class from the block's
/// prior; the positive class has covariance `sigma12` between X1 and X2, the
/// negative class is isotropic. With `with_xs`, a shared X_S ~ N(0.5, 1) is
/// added to both coordinates and emitted as a third feature.
#[derive(Debug, Clone)]
pub struct GaussianSpec {
    pub n: usize,
    pub nprime: usize,
    pub priors: ClassPriors,
    pub sigma12: f64,
    pub with_xs: bool,
    pub seed: u64,
}

pub fn gen_gaussian(spec: &GaussianSpec) -> Result<TwoSampleData> {
    if spec.sigma12.abs() >= 1.0 {
        return Err(Error::Config(format!(
            "|sigma12| must be < 1, got {}",
            spec.sigma12
        )));
    }
    if spec.n < 1 || spec.nprime < 1 {
        return Err(Error::Config("need n >= 1 and nprime >= 1".into()));
    }
    for t in [spec.priors.theta, spec.priors.theta_prime] {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Config(format!("prior {t} outside [0,1]")));
        }
    }
    let d = if spec.with_xs { 3 } else { 2 };
    let mut rng = seeded_rng(spec.seed);
    let block = |count: usize, theta: f64, rng: &mut rand_chacha::ChaCha8Rng| {
        let mut rows = Array2::zeros((count, d));
        let mut labels = Vec::with_capacity(count);
        let rho = spec.sigma12;
        let comp = (1.0 - rho * rho).sqrt();
        for i in 0..count {
            let y: i8 = if rng.random::<f64>() < theta { 1 } else { -1 };
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let (e1, e2) = if y == 1 {
                (z1, rho * z1 + comp * z2)
            } else {
                (z1, z2)
            };
            let mut x1 = y as f64 + e1;
            let mut x2 = y as f64 + e2;
            if spec.with_xs {
                let xs = 0.5 + rng.sample::<f64, _>(StandardNormal);
                x1 += xs;
                x2 += xs;
                rows[[i, 2]] = xs;
            }
            rows[[i, 0]] = x1;
            rows[[i, 1]] = x2;
            labels.push(y);
        }
        (rows, labels)
    };
    let (rows_u, labels_u) = block(spec.n, spec.priors.theta, &mut rng);
    let (rows_up, labels_up) = block(spec.nprime, spec.priors.theta_prime, &mut rng);
    let mut names = vec!["x1".to_string(), "x2".to_string()];
    if spec.with_xs {
        names.push("xs".to_string());
    }
    TwoSampleData::with_labels(rows_u, rows_up, names, Some(labels_u), Some(labels_up))
}

/// How the within-class block resampling draws rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleMode {
    /// Draw block rows independently with replacement (default reading).
    Bootstrap,
    /// Independent permutations of the block rows.
    Permutation,
    /// Leave features untouched; only the label transfer applies.
    Off,
}

/// Break irreducibility by relabeling a random `fraction` of the positives as
/// negatives, then impose class-conditional independence between the X1 and
/// X2 blocks by resampling each block independently within every class.
pub fn break_irreducibility_and_cify(
    rows: &Array2<f64>,
    labels: &[i8],
    fraction: f64,
    roles: &FeatureRoles,
    mode: ResampleMode,
    seed: u64,
) -> Result<(Array2<f64>, Vec<i8>)> {
    if labels.len() != rows.nrows() {
        return Err(Error::DimensionMismatch("label count mismatch".into()));
    }
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Config(format!("fraction {fraction} outside [0,1)")));
    }
    roles.validate_against(rows.ncols())?;
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == -1).collect();
    if pos.is_empty() {
        return Err(Error::ClassAbsent(1));
    }
    if neg.is_empty() {
        return Err(Error::ClassAbsent(-1));
    }
    let mut rng = seeded_rng(seed);
    let mut new_labels = labels.to_vec();
    let transfer = (fraction * pos.len() as f64).floor() as usize;
    let mut shuffled = pos.clone();
    // Partial Fisher-Yates: the first `transfer` entries are the moved rows.
    for i in 0..transfer {
        let j = rng.random_range(i..shuffled.len());
        shuffled.swap(i, j);
        new_labels[shuffled[i]] = -1;
    }
    let mut out = rows.clone();
    if !matches!(mode, ResampleMode::Off) {
        for class in [1i8, -1] {
            let members: Vec<usize> = (0..new_labels.len())
                .filter(|&i| new_labels[i] == class)
                .collect();
            if members.is_empty() {
                continue;
            }
            for block in [&roles.idx1, &roles.idx2] {
                let sources: Vec<usize> = match mode {
                    ResampleMode::Bootstrap => (0..members.len())
                        .map(|_| members[rng.random_range(0..members.len())])
                        .collect(),
                    ResampleMode::Permutation => {
                        let mut p = members.clone();
                        for i in (1..p.len()).rev() {
                            let j = rng.random_range(0..=i);
                            p.swap(i, j);
                        }
                        p
                    }
                    ResampleMode::Off => unreachable!(),
                };
                for (&dst, &src) in members.iter().zip(&sources) {
                    for &c in block.iter() {
                        out[[dst, c]] = rows[[src, c]];
                    }
                }
            }
        }
    }
    Ok((out, new_labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::signed_weights;

    fn priors(theta: f64, tp: f64) -> ClassPriors {
        ClassPriors::new(theta, tp).unwrap()
    }

    #[test]
    fn pu_block_mean_is_one() {
        let data = gen_gaussian(&GaussianSpec {
            n: 50_000,
            nprime: 50_000,
            priors: priors(1.0, 0.0),
            sigma12: 0.0,
            with_xs: false,
            seed: 3,
        })
        .unwrap();
        let mean = data.features_u().column(0).mean().unwrap();
        assert!((mean - 1.0).abs() <= 0.02, "mean {mean}");
    }

    #[test]
    fn positive_rows_have_target_correlation() {
        let data = gen_gaussian(&GaussianSpec {
            n: 50_000,
            nprime: 50_000,
            priors: priors(0.8, 0.2),
            sigma12: 0.5,
            with_xs: false,
            seed: 4,
        })
        .unwrap();
        let (labels_u, _) = data.labels();
        let labels_u = labels_u.unwrap();
        let rows = data.features_u();
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy, mut cnt) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (i, &l) in labels_u.iter().enumerate() {
            if l == 1 {
                let (x, y) = (rows[[i, 0]], rows[[i, 1]]);
                sx += x;
                sy += y;
                sxx += x * x;
                syy += y * y;
                sxy += x * y;
                cnt += 1.0;
            }
        }
        let cov = sxy / cnt - sx / cnt * (sy / cnt);
        let vx = sxx / cnt - (sx / cnt) * (sx / cnt);
        let vy = syy / cnt - (sy / cnt) * (sy / cnt);
        let corr = cov / (vx * vy).sqrt();
        assert!((corr - 0.5).abs() <= 0.02, "corr {corr}");
    }

    #[test]
    fn shared_xs_induces_covariance() {
        let data = gen_gaussian(&GaussianSpec {
            n: 50_000,
            nprime: 1,
            priors: priors(1.0, 0.0),
            sigma12: 0.0,
            with_xs: true,
            seed: 5,
        })
        .unwrap();
        let rows = data.features_u();
        let n = rows.nrows() as f64;
        let mx = rows.column(0).sum() / n;
        let my = rows.column(1).sum() / n;
        let cov = rows
            .rows()
            .into_iter()
            .map(|r| (r[0] - mx) * (r[1] - my))
            .sum::<f64>()
            / n;
        assert!((cov - 1.0).abs() <= 0.05, "cov {cov}");
    }

    #[test]
    fn generator_is_deterministic() {
        let spec = GaussianSpec {
            n: 200,
            nprime: 150,
            priors: priors(0.8, 0.2),
            sigma12: 0.3,
            with_xs: true,
            seed: 99,
        };
        assert_eq!(gen_gaussian(&spec).unwrap(), gen_gaussian(&spec).unwrap());
    }

    #[test]
    fn binomial_concentration_of_labels() {
        let theta = 0.8;
        let n = 40_000;
        let data = gen_gaussian(&GaussianSpec {
            n,
            nprime: 1,
            priors: priors(theta, 0.2),
            sigma12: 0.0,
            with_xs: false,
            seed: 11,
        })
        .unwrap();
        let (labels_u, _) = data.labels();
        let frac = labels_u.unwrap().iter().filter(|&&l| l == 1).count() as f64 / n as f64;
        let sigma = (theta * (1.0 - theta) / n as f64).sqrt();
        assert!((frac - theta).abs() <= 4.0 * sigma);
    }

    #[test]
    fn weighted_mean_of_ones_is_one() {
        let w = signed_weights(5, 7, -0.4).unwrap();
        let ones = Array2::from_elem((12, 1), 1.0);
        let m = crate::mixture::weighted_mean(ones.view(), &w).unwrap();
        assert!((m[0] - 1.0).abs() <= 1e-12);
    }

    fn labeled_pool(seed: u64, npos: usize, nneg: usize) -> (Array2<f64>, Vec<i8>) {
        let mut rng = seeded_rng(seed);
        let mut rows = Array2::zeros((npos + nneg, 4));
        let mut labels = Vec::new();
        for i in 0..npos + nneg {
            let y: i8 = if i < npos { 1 } else { -1 };
            for j in 0..4 {
                rows[[i, j]] = y as f64 + rng.sample::<f64, _>(StandardNormal) + 0.3 * j as f64;
            }
            labels.push(y);
        }
        (rows, labels)
    }

    #[test]
    fn transfer_counts() {
        let (rows, labels) = labeled_pool(1, 100, 100);
        let roles = FeatureRoles::new(vec![0, 1], vec![2, 3], vec![]).unwrap();
        let (_, new_labels) =
            break_irreducibility_and_cify(&rows, &labels, 0.2, &roles, ResampleMode::Off, 7)
                .unwrap();
        let pos = new_labels.iter().filter(|&&l| l == 1).count();
        let neg = new_labels.iter().filter(|&&l| l == -1).count();
        assert_eq!((pos, neg), (80, 120));
    }

    #[test]
    fn zero_fraction_no_resample_is_identity() {
        let (rows, labels) = labeled_pool(2, 50, 50);
        let roles = FeatureRoles::new(vec![0, 1], vec![2, 3], vec![]).unwrap();
        let (out, new_labels) =
            break_irreducibility_and_cify(&rows, &labels, 0.0, &roles, ResampleMode::Off, 7)
                .unwrap();
        assert_eq!(out, rows);
        assert_eq!(new_labels, labels);
    }

    #[test]
    fn resampling_kills_cross_block_dependence() {
        // Build strongly cross-correlated blocks, then check the within-class
        // cross-covariance of block means is ~0 after the transform.
        let m = 4000usize;
        let mut rng = seeded_rng(13);
        let mut rows = Array2::zeros((m, 2));
        let mut labels = Vec::new();
        for i in 0..m {
            let y: i8 = if i % 2 == 0 { 1 } else { -1 };
            let shared: f64 = rng.sample(StandardNormal);
            rows[[i, 0]] = y as f64 + shared;
            rows[[i, 1]] = y as f64 + shared; // perfectly dependent blocks
            labels.push(y);
        }
        let roles = FeatureRoles::new(vec![0], vec![1], vec![]).unwrap();
        let (out, new_labels) = break_irreducibility_and_cify(
            &rows,
            &labels,
            0.2,
            &roles,
            ResampleMode::Bootstrap,
            21,
        )
        .unwrap();
        for class in [1i8, -1] {
            let idx: Vec<usize> = (0..m).filter(|&i| new_labels[i] == class).collect();
            let k = idx.len() as f64;
            let mx = idx.iter().map(|&i| out[[i, 0]]).sum::<f64>() / k;
            let my = idx.iter().map(|&i| out[[i, 1]]).sum::<f64>() / k;
            let cov = idx
                .iter()
                .map(|&i| (out[[i, 0]] - mx) * (out[[i, 1]] - my))
                .sum::<f64>()
                / k;
            assert!(cov.abs() <= 3.0 / k.sqrt(), "class {class} cov {cov}");
        }
    }

    #[test]
    fn class_absent_errors() {
        let (rows, mut labels) = labeled_pool(3, 10, 10);
        for l in labels.iter_mut() {
            *l = 1;
        }
        let roles = FeatureRoles::new(vec![0, 1], vec![2, 3], vec![]).unwrap();
        assert!(matches!(
            break_irreducibility_and_cify(&rows, &labels, 0.1, &roles, ResampleMode::Off, 7),
            Err(Error::ClassAbsent(-1))
        ));
    }
}
