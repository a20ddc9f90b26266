use mixprop_core::ktest::{run_test_known, StatConfig, TestKind};
use mixprop_core::mixture::{gen_gaussian, trial_seed, ClassPriors, FeatureRoles, GaussianSpec};
use rayon::prelude::*;
use std::time::Instant;

fn main() {
    let roles = FeatureRoles::new(vec![0], vec![1], vec![]).unwrap();
    let roles_s = FeatureRoles::new(vec![0], vec![1], vec![2]).unwrap();
    let alpha = 4.0 / 3.0;
    for (kind, with_xs, cfg, trials, n) in [
        (TestKind::Ci, false, StatConfig::ci_default(), 400usize, 500usize),
        (TestKind::Mci, true, StatConfig::mci_known_default(), 100, 500),
    ] {
        for sigma12 in [0.0, 0.2, 0.5] {
            let t0 = Instant::now();
            let rejects: usize = (0..trials as u64)
                .into_par_iter()
                .map(|t| {
                    let data = gen_gaussian(&GaussianSpec {
                        n,
                        nprime: n,
                        priors: ClassPriors::new(0.8, 0.2).unwrap(),
                        sigma12,
                        with_xs,
                        seed: trial_seed(2024, t),
                    })
                    .unwrap();
                    let r = if with_xs {
                        run_test_known(&data, &roles_s, alpha, kind, 0.05, &cfg)
                    } else {
                        run_test_known(&data, &roles, alpha, kind, 0.05, &cfg)
                    }
                    .unwrap();
                    usize::from(r.reject)
                })
                .sum();
            println!(
                "{kind:?} sigma12={sigma12}: rate {:.3} over {trials} trials ({:.1}s)",
                rejects as f64 / trials as f64,
                t0.elapsed().as_secs_f64()
            );
        }
    }
}
