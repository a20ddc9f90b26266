use mixprop_core::numerics::{sym_eigen_topk, LuFactors, SymMatrix};
use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [1000usize, 2000, 4000] {
        let a = Array2::from_shape_fn((n, n), |_| rng.random::<f64>() - 0.5)
            + Array2::<f64>::eye(n) * 3.0;
        let t = Instant::now();
        let f = LuFactors::factor(&a).unwrap();
        let dt = t.elapsed().as_secs_f64();
        let flops = 2.0 / 3.0 * (n as f64).powi(3);
        println!("LU n={n}: {dt:.3}s ({:.2} GFLOPS)", flops / dt / 1e9);
        let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let t = Instant::now();
        let _ = f.solve(&b).unwrap();
        println!("  solve: {:.4}s", t.elapsed().as_secs_f64());
    }
    for n in [1000usize, 2000] {
        let b = Array2::from_shape_fn((n, 40), |_| rng.random::<f64>() - 0.5);
        let g = SymMatrix::new(b.dot(&b.t()) + Array2::<f64>::eye(n)).unwrap();
        let t = Instant::now();
        let p = sym_eigen_topk(&g, 5).unwrap();
        let dt = t.elapsed().as_secs_f64();
        println!("eigen top5 n={n}: {dt:.3}s (lam1={:.3})", p.values[0]);
    }
}
