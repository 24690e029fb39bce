//! Shared test helpers: an independent dual solver and random SVM instances.
#![allow(dead_code)]

use kerr_readout::learner::{rbf_kernel, SvcModel};
use kerr_readout::signal::FeatureMatrix;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Projected-gradient (accelerated, with restarts) solution of
/// `min ½αᵀQα - Σα` over `0 ≤ α ≤ C`, `yᵀα = 0`.
pub fn projected_gradient_dual(k: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let n = y.len();
    let qm = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k[i * n + j]);
    let l = SymmetricEigen::new(qm.clone()).eigenvalues.max().max(1e-12);
    let q: Vec<f64> = (0..n * n).map(|t| qm[(t / n, t % n)]).collect();
    let step = 1.0 / l;
    let grad = |a: &[f64]| -> Vec<f64> {
        q.chunks_exact(n)
            .map(|row| row.iter().zip(a).map(|(qij, aj)| qij * aj).sum::<f64>() - 1.0)
            .collect()
    };
    let objective = |a: &[f64]| -> f64 {
        let g = grad(a);
        0.5 * a.iter().zip(&g).map(|(ai, gi)| ai * (gi - 1.0)).sum::<f64>()
    };

    let mut x = vec![0.0; n];
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut f_prev = objective(&x);
    for _ in 0..200_000 {
        let g = grad(&z);
        let v: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - step * gi).collect();
        let next = project(&v, y, c);
        let f_next = objective(&next);
        let moved = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if f_next > f_prev {
            // restart momentum
            t = 1.0;
            z = x.clone();
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = next
            .iter()
            .zip(&x)
            .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
            .collect();
        x = next;
        t = t_next;
        f_prev = f_next;
        if moved < 1e-12 {
            break;
        }
    }
    x
}

/// Euclidean projection onto the box intersected with `yᵀα = 0`, by
/// bisection on the multiplier of the equality constraint.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lam: f64| -> Vec<f64> { v.iter().zip(y).map(|(vi, yi)| (vi - lam * yi).clamp(0.0, c)).collect() };
    let h = |lam: f64| -> f64 { at(lam).iter().zip(y).map(|(a, yi)| a * yi).sum() };
    let bound = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

pub fn dual_objective(k: &[f64], y: &[f64], a: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += a[i] * a[j] * y[i] * y[j] * k[i * n + j];
        }
    }
    0.5 * quad - a.iter().sum::<f64>()
}

/// Offset from margin vectors, or the midpoint of the feasible range.
pub fn oracle_bias(k: &[f64], y: &[f64], a: &[f64], c: f64) -> f64 {
    let n = y.len();
    let f0 = |i: usize| (0..n).map(|j| a[j] * y[j] * k[i * n + j]).sum::<f64>();
    let eps = 1e-7 * c;
    let free: Vec<usize> = (0..n).filter(|&i| a[i] > eps && a[i] < c - eps).collect();
    if !free.is_empty() {
        return free.iter().map(|&i| y[i] - f0(i)).sum::<f64>() / free.len() as f64;
    }
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..n {
        let r = y[i] - f0(i);
        let at_upper = a[i] >= c - eps;
        // y f ≥ 1 at α = 0, y f ≤ 1 at α = C
        if (y[i] > 0.0) != at_upper {
            lo = lo.max(r);
        } else {
            hi = hi.min(r);
        }
    }
    0.5 * (lo + hi)
}

/// Standardized rows and the RBF Gram matrix the model was trained with.
pub fn training_kernel(model: &SvcModel, data: &FeatureMatrix) -> (Vec<Vec<f64>>, Vec<f64>) {
    let z: Vec<Vec<f64>> = (0..data.n_samples()).map(|i| model.standardization.apply(data.row(i))).collect();
    let n = z.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] = rbf_kernel(&z[i], &z[j], model.gamma_kernel).unwrap();
        }
    }
    (z, k)
}

/// Full `α` vector of a trained model.
pub fn model_alpha(model: &SvcModel, n: usize) -> Vec<f64> {
    let mut a = vec![0.0; n];
    for (&i, coef) in model.support.iter().zip(&model.dual_coefs) {
        a[i] = coef.abs();
    }
    a
}

pub fn signed(labels: &[u8]) -> Vec<f64> {
    labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect()
}

/// Random instance with `n ≤ 20` points, `f ≤ 5` features and both classes.
pub fn random_instance(seed: u64) -> (FeatureMatrix, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(4..=20);
    let f = rng.random_range(1..=5);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..f).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let w: Vec<f64> = (0..f).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut labels: Vec<u8> = rows
        .iter()
        .map(|r| {
            let s: f64 = r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + rng.random_range(-0.5..0.5);
            u8::from(s > 0.0)
        })
        .collect();
    labels[0] = 0;
    labels[1] = 1;
    let c = 10f64.powf(rng.random_range(-1.0..1.0));
    let gamma = 10f64.powf(rng.random_range(-1.0..0.5));
    (FeatureMatrix::from_rows(&rows, labels).unwrap(), c, gamma)
}
