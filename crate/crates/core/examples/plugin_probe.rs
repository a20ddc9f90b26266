use mixprop_core::harness::rejection_rate;
use mixprop_core::ktest::TestKind;
use mixprop_core::mixture::{gen_gaussian, trial_seed, ClassPriors, FeatureRoles, GaussianSpec};
use mixprop_core::plugin::{run_test_plugin, PluginConfig};
use rayon::prelude::*;
use std::time::Instant;

fn main() {
    let roles = FeatureRoles::new(vec![0], vec![1], vec![]).unwrap();
    // Plug-in CI: type-I and power probes at reduced trials.
    for (s12, trials) in [(0.0, 200usize), (0.2, 200), (0.5, 120)] {
        let t0 = Instant::now();
        let (r, f) = rejection_rate(TestKind::Ci, true, 500, s12, trials, 500 + (s12*10.0) as u64, 0.05).unwrap();
        println!("CI-plugin n=500 s12={s12}: rate {r:.3} over {trials} ({f} failures, {:.0}s)", t0.elapsed().as_secs_f64());
    }
    // Monte-Carlo vs corrected moments under H0 (reduced 200 trials).
    let trials = 200u64;
    let reports: Vec<(f64, f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let data = gen_gaussian(&GaussianSpec {
                n: 500, nprime: 500,
                priors: ClassPriors::new(0.8, 0.2).unwrap(),
                sigma12: 0.0, with_xs: false,
                seed: trial_seed(92, t),
            }).unwrap();
            let r = run_test_plugin(&data, &roles, TestKind::Ci, 0.05, &PluginConfig::ci_default()).unwrap();
            (r.statistic, r.null_mean, r.null_var)
        })
        .collect();
    let mc_mean = reports.iter().map(|r| r.0).sum::<f64>() / trials as f64;
    let mc_var = reports.iter().map(|r| (r.0 - mc_mean) * (r.0 - mc_mean)).sum::<f64>() / (trials - 1) as f64;
    let est_mean = reports.iter().map(|r| r.1).sum::<f64>() / trials as f64;
    let est_var = reports.iter().map(|r| r.2).sum::<f64>() / trials as f64;
    println!("H0 CI-plugin: MC mean {mc_mean:.4} vs est {est_mean:.4} (rel {:.3}); MC var {mc_var:.5} vs est {est_var:.5} (rel {:.3})",
        (est_mean-mc_mean).abs()/mc_mean.abs(), (est_var-mc_var).abs()/mc_var.abs());
    // MCI plugin at n=1000, few trials, timing.
    for (s12, trials) in [(0.0, 20usize), (0.5, 20)] {
        let t0 = Instant::now();
        let (r, f) = rejection_rate(TestKind::Mci, true, 1000, s12, trials, 600 + (s12*10.0) as u64, 0.05).unwrap();
        println!("MCI-plugin n=1000 s12={s12}: rate {r:.3} over {trials} ({f} failures, {:.1}s/trial)", t0.elapsed().as_secs_f64() / trials as f64);
    }
}
