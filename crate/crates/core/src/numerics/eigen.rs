//! Symmetric eigendecomposition with a deterministic sign convention.
//!
//! Small matrices go through cyclic Jacobi. Larger ones are reduced to
//! tridiagonal form by Householder reflections; eigenvalues come from
//! implicit-shift QL on the tridiagonal and the requested top-k eigenvectors
//! from inverse iteration with cluster reorthogonalization, back-transformed
//! through the stored reflectors. The empirical kernel maps only ever need a
//! handful of leading pairs, so the O(n^3) eigenvector accumulation of a full
//! QL pass is avoided.

use ndarray::Array2;

use super::{EigenPairs, SymMatrix};
use crate::error::{Error, Result};

const JACOBI_CUTOFF: usize = 128;
const EPS: f64 = f64::EPSILON;

/// Top-`k` eigenpairs of `a` by algebraic value, descending. The
/// largest-magnitude component of each returned eigenvector is positive, so
/// repeated runs agree bit for bit.
pub fn sym_eigen_topk(a: &SymMatrix, k: usize) -> Result<EigenPairs> {
    let n = a.order();
    assert!(k <= n, "requested {k} eigenpairs from order-{n} matrix");
    let (values, mut vectors) = if n <= JACOBI_CUTOFF {
        jacobi_full(a, k)?
    } else {
        tridiag_topk(a, k)?
    };
    for mut col in vectors.columns_mut() {
        let mut idx = 0;
        let mut best = 0.0;
        for (i, &v) in col.iter().enumerate() {
            if v.abs() > best {
                best = v.abs();
                idx = i;
            }
        }
        if col[idx] < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
    Ok(EigenPairs { values, vectors })
}

/// Cyclic Jacobi on a dense copy; returns the leading `k` pairs.
fn jacobi_full(a: &SymMatrix, k: usize) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = a.order();
    let mut m = a.as_array().clone();
    let mut v: Array2<f64> = Array2::eye(n);
    if n <= 1 {
        let values: Vec<f64> = (0..k).map(|_| m[[0, 0]]).collect();
        return Ok((values, v.slice(ndarray::s![.., ..k]).to_owned()));
    }
    let fro: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let sweep_budget = 100 * n;
    let mut converged = false;
    for _sweep in 0..sweep_budget {
        let off: f64 = {
            let mut s = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    s += m[[i, j]] * m[[i, j]];
                }
            }
            (2.0 * s).sqrt()
        };
        if off <= n as f64 * EPS * fro.max(EPS) {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= EPS * fro.max(EPS) * 1e-2 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = m[[i, p]];
                    let aiq = m[[i, q]];
                    m[[i, p]] = c * aip - s * aiq;
                    m[[i, q]] = s * aip + c * aiq;
                }
                for j in 0..n {
                    let apj = m[[p, j]];
                    let aqj = m[[q, j]];
                    m[[p, j]] = c * apj - s * aqj;
                    m[[q, j]] = s * apj + c * aqj;
                }
                for i in 0..n {
                    let vip = v[[i, p]];
                    let viq = v[[i, q]];
                    v[[i, p]] = c * vip - s * viq;
                    v[[i, q]] = s * vip + c * viq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::EigenNoConvergence {
            iterations: sweep_budget,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());
    let values: Vec<f64> = order.iter().take(k).map(|&i| m[[i, i]]).collect();
    let mut vectors = Array2::zeros((n, k));
    for (out, &src) in order.iter().take(k).enumerate() {
        vectors.column_mut(out).assign(&v.column(src));
    }
    Ok((values, vectors))
}

struct Householder {
    col: usize,
    v: Vec<f64>,
    beta: f64,
}

/// Householder reduction to tridiagonal form, keeping the reflectors for the
/// later back-transform. Returns (diagonal, subdiagonal, reflectors).
fn tridiagonalize(a: &SymMatrix) -> (Vec<f64>, Vec<f64>, Vec<Householder>) {
    let n = a.order();
    let mut m = a.as_array().clone();
    let mut e = vec![0.0; n.saturating_sub(1)];
    let mut hhs = Vec::with_capacity(n.saturating_sub(2));
    let buf = m.as_slice_mut().expect("standard layout");
    for kcol in 0..n.saturating_sub(2) {
        let len = n - kcol - 1;
        let x0 = buf[(kcol + 1) * n + kcol];
        let mut sigma = 0.0;
        for i in 2..=len {
            let xi = buf[(kcol + i) * n + kcol];
            sigma += xi * xi;
        }
        let norm = (x0 * x0 + sigma).sqrt();
        if norm == 0.0 || sigma == 0.0 {
            e[kcol] = x0;
            continue;
        }
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let v0 = x0 - alpha;
        let mut v = vec![0.0; len];
        v[0] = v0;
        for i in 1..len {
            v[i] = buf[(kcol + 1 + i) * n + kcol];
        }
        let vtv = v0 * v0 + sigma;
        let beta = 2.0 / vtv;
        e[kcol] = alpha;

        // p = beta * A22 * v over the trailing block.
        let base = kcol + 1;
        let mut p = vec![0.0; len];
        for i in 0..len {
            let row = &buf[(base + i) * n + base..(base + i) * n + n];
            let mut acc = 0.0;
            for (rv, vv) in row.iter().zip(&v) {
                acc += rv * vv;
            }
            p[i] = beta * acc;
        }
        let vtp: f64 = v.iter().zip(&p).map(|(a, b)| a * b).sum();
        let half = 0.5 * beta * vtp;
        let w: Vec<f64> = p.iter().zip(&v).map(|(pi, vi)| pi - half * vi).collect();
        // Symmetric rank-2 update A22 -= v w^T + w v^T.
        for i in 0..len {
            let vi = v[i];
            let wi = w[i];
            let row = &mut buf[(base + i) * n + base..(base + i) * n + n];
            for ((r, &wj), &vj) in row.iter_mut().zip(&w).zip(&v) {
                *r -= vi * wj + wi * vj;
            }
        }
        hhs.push(Householder {
            col: kcol,
            v,
            beta,
        });
    }
    if n >= 2 {
        e[n - 2] = buf[(n - 1) * n + (n - 2)];
    }
    let d: Vec<f64> = (0..n).map(|i| buf[i * n + i]).collect();
    (d, e, hhs)
}

/// Implicit-shift QL eigenvalues of a tridiagonal matrix. Destroys `d`/`e`;
/// returns eigenvalues unsorted in `d`.
fn ql_eigenvalues(d: &mut [f64], e: &mut Vec<f64>, budget: usize) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    e.push(0.0);
    let mut total_iters = 0usize;
    for l in 0..n {
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= EPS * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            total_iters += 1;
            if total_iters > budget {
                return Err(Error::EigenNoConvergence {
                    iterations: total_iters,
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p = 0.0;
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    e.pop();
    Ok(())
}

/// Solve (T - lambda I) x = b for tridiagonal T given by (d, e), using
/// two-band elimination with partial pivoting and a floored pivot, as inverse
/// iteration wants.
fn tridiag_shifted_solve(d: &[f64], e: &[f64], lambda: f64, b: &[f64], scale: f64) -> Vec<f64> {
    let n = d.len();
    if n == 1 {
        let piv = floored(d[0] - lambda, scale);
        return vec![b[0] / piv];
    }
    // Band storage: diag, upper1, upper2 (fill-in from row swaps).
    let mut diag: Vec<f64> = d.iter().map(|&x| x - lambda).collect();
    let mut up1: Vec<f64> = e.to_vec();
    let mut up2 = vec![0.0; n];
    let mut rhs = b.to_vec();
    for i in 0..n - 1 {
        let sub = e[i];
        if sub.abs() > diag[i].abs() {
            // Swap row i with row i+1.
            let (a1, a2, a3) = (diag[i], up1[i], up2[i]);
            diag[i] = sub;
            up1[i] = diag[i + 1];
            up2[i] = if i + 2 < n { up1[i + 1] } else { 0.0 };
            diag[i + 1] = a2;
            up1[i + 1] = a3;
            // a3 was zero before any elimination touched row i, so the swap
            // keeps the bandwidth at two superdiagonals.
            let _ = a1;
            rhs.swap(i, i + 1);
            let l = a1 / floored(diag[i], scale);
            diag[i + 1] -= l * up1[i];
            if i + 2 < n {
                up1[i + 1] -= l * up2[i];
            }
            rhs[i + 1] -= l * rhs[i];
        } else {
            let piv = floored(diag[i], scale);
            diag[i] = piv;
            let l = sub / piv;
            diag[i + 1] -= l * up1[i];
            if i + 2 < n {
                // up2[i] is zero in the no-swap branch.
            }
            rhs[i + 1] -= l * rhs[i];
        }
    }
    let mut x = vec![0.0; n];
    x[n - 1] = rhs[n - 1] / floored(diag[n - 1], scale);
    if n >= 2 {
        x[n - 2] = (rhs[n - 2] - up1[n - 2] * x[n - 1]) / floored(diag[n - 2], scale);
    }
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (rhs[i] - up1[i] * x[i + 1] - up2[i] * x[i + 2]) / floored(diag[i], scale);
    }
    x
}

fn floored(p: f64, scale: f64) -> f64 {
    let floor = EPS * scale.max(EPS);
    if p.abs() < floor {
        floor.copysign(if p == 0.0 { 1.0 } else { p })
    } else {
        p
    }
}

/// Deterministic start vector for inverse iteration.
fn start_vector(n: usize, salt: u64) -> Vec<f64> {
    let mut state = salt.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
        .collect()
}

fn tridiag_topk(a: &SymMatrix, k: usize) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = a.order();
    let (d, e, hhs) = tridiagonalize(a);
    let mut dv = d.clone();
    let mut ev = e.clone();
    ql_eigenvalues(&mut dv, &mut ev, 100 * n)?;
    dv.sort_by(|x, y| y.partial_cmp(x).unwrap());
    let values: Vec<f64> = dv.iter().take(k).copied().collect();

    let scale = d
        .iter()
        .map(|x| x.abs())
        .chain(e.iter().map(|x| 2.0 * x.abs()))
        .fold(0.0f64, f64::max);
    let ortol = 1e-3 * scale.max(EPS);

    let mut tri_vecs: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut shifts: Vec<f64> = Vec::with_capacity(k);
    for (idx, &lambda) in values.iter().enumerate() {
        // Distinct shifts inside clusters keep the solves well posed.
        let mut shift = lambda;
        if idx > 0 && (shifts[idx - 1] - lambda).abs() <= 10.0 * EPS * scale.max(EPS) {
            shift = shifts[idx - 1] - 10.0 * EPS * scale.max(EPS);
        }
        shifts.push(shift);
        let mut x = start_vector(n, idx as u64 + 1);
        normalize(&mut x);
        let mut converged = false;
        for attempt in 0..3 {
            for _ in 0..5 {
                let mut y = tridiag_shifted_solve(&d, &e, shift, &x, scale);
                for (j, other) in tri_vecs.iter().enumerate() {
                    if (values[j] - lambda).abs() <= ortol {
                        let dot: f64 = other.iter().zip(&y).map(|(u, v)| u * v).sum();
                        for (yi, oi) in y.iter_mut().zip(other) {
                            *yi -= dot * oi;
                        }
                    }
                }
                let norm = norm2(&y);
                if norm <= 1e-300 {
                    break;
                }
                for v in &mut y {
                    *v /= norm;
                }
                let resid = tridiag_residual(&d, &e, lambda, &y);
                x = y;
                if resid <= 1e-10 * scale.max(EPS) {
                    converged = true;
                    break;
                }
            }
            if converged {
                break;
            }
            x = start_vector(n, (idx as u64 + 1) * 977 + attempt as u64 + 7);
            normalize(&mut x);
        }
        if !converged {
            let resid = tridiag_residual(&d, &e, lambda, &x);
            if resid > 1e-8 * scale.max(EPS) {
                return Err(Error::EigenNoConvergence { iterations: 15 });
            }
        }
        tri_vecs.push(x);
    }

    // Back-transform through the stored reflectors (last to first).
    let mut vectors = Array2::zeros((n, k));
    for (c, tv) in tri_vecs.iter().enumerate() {
        let mut z = tv.clone();
        for hh in hhs.iter().rev() {
            let base = hh.col + 1;
            let dot: f64 = hh.v.iter().zip(&z[base..]).map(|(a, b)| a * b).sum();
            let f = hh.beta * dot;
            for (zi, vi) in z[base..].iter_mut().zip(&hh.v) {
                *zi -= f * vi;
            }
        }
        for (i, &v) in z.iter().enumerate() {
            vectors[[i, c]] = v;
        }
    }
    Ok((values, vectors))
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn normalize(x: &mut [f64]) {
    let n = norm2(x);
    if n > 0.0 {
        for v in x {
            *v /= n;
        }
    }
}

fn tridiag_residual(d: &[f64], e: &[f64], lambda: f64, x: &[f64]) -> f64 {
    let n = d.len();
    let mut s = 0.0;
    for i in 0..n {
        let mut t = (d[i] - lambda) * x[i];
        if i > 0 {
            t += e[i - 1] * x[i - 1];
        }
        if i + 1 < n {
            t += e[i] * x[i + 1];
        }
        s += t * t;
    }
    s.sqrt()
}
