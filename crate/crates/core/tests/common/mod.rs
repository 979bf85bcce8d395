//! Brute-force reference implementations used as test oracles.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_unit(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..k).map(|_| gaussian(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Cyclic Jacobi eigen-decomposition of a symmetric row-major `k × k` matrix.
/// Returns eigenvalues and column eigenvectors (`vecs[i * k + j]` is component
/// `i` of eigenvector `j`), unsorted.
pub fn jacobi_eigen(matrix: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; k * k];
    for i in 0..k {
        v[i * k + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..k)
            .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * k + j].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..k {
            for q in p + 1..k {
                let apq = a[p * k + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * k + q] - a[p * k + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..k {
                    let arp = a[r * k + p];
                    let arq = a[r * k + q];
                    a[r * k + p] = c * arp - s * arq;
                    a[r * k + q] = s * arp + c * arq;
                }
                for r in 0..k {
                    let apr = a[p * k + r];
                    let aqr = a[q * k + r];
                    a[p * k + r] = c * apr - s * aqr;
                    a[q * k + r] = s * apr + c * aqr;
                }
                for r in 0..k {
                    let vrp = v[r * k + p];
                    let vrq = v[r * k + q];
                    v[r * k + p] = c * vrp - s * vrq;
                    v[r * k + q] = s * vrp + c * vrq;
                }
            }
        }
    }
    ((0..k).map(|i| a[i * k + i]).collect(), v)
}

/// Leading eigenpair from [`jacobi_eigen`].
pub fn jacobi_top(matrix: &[f64], k: usize) -> (f64, Vec<f64>) {
    let (vals, vecs) = jacobi_eigen(matrix, k);
    let j = (0..k).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    (vals[j], (0..k).map(|i| vecs[i * k + j]).collect())
}

/// Triple-loop `Σ_t x_t x_tᵀ`.
pub fn naive_scatter(frames: &[Vec<f64>]) -> Vec<f64> {
    let k = frames[0].len();
    let mut m = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            for f in frames {
                m[i * k + j] += f[i] * f[j];
            }
        }
    }
    m
}

/// `Σ_j x(j) s(j − z)` with `s` zero outside its indices.
pub fn naive_correlation(x: &[f64], s: &[f64], z: i64) -> f64 {
    let mut acc = 0.0;
    for (j, xj) in x.iter().enumerate() {
        let idx = j as i64 - z;
        if idx >= 0 && (idx as usize) < s.len() {
            acc += xj * s[idx as usize];
        }
    }
    acc
}

/// Exhaustive scan returning every `(z, |corr|)` for `z ∈ [-tau_max, tau_max]`.
pub fn naive_scan(x: &[f64], s: &[f64], tau_max: i64) -> Vec<(i64, f64)> {
    (-tau_max..=tau_max)
        .map(|z| (z, naive_correlation(x, s, z).abs()))
        .collect()
}

/// Scalar Gaussian mean-shift CUSUM written out longhand.
pub fn scalar_cusum(xs: &[f64], mu: f64, sigma2: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut s = 0.0f64;
    for x in xs {
        let llr = (mu / sigma2) * (x - mu / 2.0);
        s = if s > 0.0 { s } else { 0.0 };
        s += llr;
        out.push(s);
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}
