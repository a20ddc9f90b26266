use mixprop_core::harness::rejection_rate;
use mixprop_core::ktest::TestKind;
use std::time::Instant;

fn main() {
    for (kind, plugin, n, trials) in [
        (TestKind::Ci, false, 500usize, 100usize),
        (TestKind::Ci, true, 500, 50),
        (TestKind::Mci, false, 500, 20),
        (TestKind::Mci, true, 1000, 6),
    ] {
        let t0 = Instant::now();
        let (r, _) = rejection_rate(kind, plugin, n, 0.0, trials, 9090, 0.05).unwrap();
        let dt = t0.elapsed().as_secs_f64();
        println!(
            "{kind:?} plugin={plugin} n={n}: {:.2} s/trial wall (rate {r:.3}, {trials} trials)",
            dt / trials as f64
        );
    }
}
