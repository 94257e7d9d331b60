//! Independent reference implementations used as test oracles. Nothing here
//! calls into the model's own kernels.
#![allow(dead_code)]

use cpd_core::model::{EncoderLayerParams, ModelConfig};
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-scale..scale))
}

/// `R[tau] = 1/(l d) sum_c sum_t q[(t + tau) mod l][c] k[t][c]` by direct summation.
pub fn brute_force_correlation(q: &Array2<f64>, k: &Array2<f64>) -> Vec<f64> {
    let (l, d) = q.dim();
    (0..l)
        .map(|tau| {
            let mut acc = 0.0;
            for c in 0..d {
                for t in 0..l {
                    acc += q[[(t + tau) % l, c]] * k[[t, c]];
                }
            }
            acc / (l * d) as f64
        })
        .collect()
}

fn matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (n, m) = a.dim();
    let p = b.ncols();
    let mut out = Array2::zeros((n, p));
    for i in 0..n {
        for j in 0..p {
            let mut s = 0.0;
            for x in 0..m {
                s += a[[i, x]] * b[[x, j]];
            }
            out[[i, j]] = s;
        }
    }
    out
}

/// Straight-line multi-head autocorrelation attention with residual.
pub fn brute_force_attention(x: &Array2<f64>, layer: &EncoderLayerParams, config: &ModelConfig) -> Array2<f64> {
    let (l, n) = x.dim();
    let h = config.num_heads;
    let d = n / h;
    let k = config.top_k();
    let q = matmul(x, &layer.w_q);
    let kk = matmul(x, &layer.w_k);
    let v = matmul(x, &layer.w_v);
    let mut concat = Array2::zeros((l, n));
    for head in 0..h {
        let mut scores = vec![0.0; l];
        for (tau, score) in scores.iter_mut().enumerate() {
            let mut acc = 0.0;
            for c in head * d..(head + 1) * d {
                for t in 0..l {
                    acc += q[[(t + tau) % l, c]] * kk[[t, c]];
                }
            }
            *score = acc / (l * d) as f64;
        }
        // repeated argmax with strict comparison keeps the smaller lag on ties
        let mut chosen: Vec<usize> = Vec::new();
        for _ in 0..k {
            let mut best: Option<usize> = None;
            for tau in 0..l {
                if chosen.contains(&tau) {
                    continue;
                }
                if best.is_none_or(|b| scores[tau] > scores[b]) {
                    best = Some(tau);
                }
            }
            chosen.push(best.unwrap());
        }
        let max = chosen.iter().map(|&t| scores[t]).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = chosen.iter().map(|&t| (scores[t] - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for (i, &tau) in chosen.iter().enumerate() {
            let w = exps[i] / total;
            for t in 0..l {
                for c in head * d..(head + 1) * d {
                    concat[[t, c]] += w * v[[(t + tau) % l, c]];
                }
            }
        }
    }
    let mixed = matmul(&concat, &layer.w_out);
    x + &mixed
}

/// Central difference of `f` along every coordinate of `x`.
pub fn finite_difference(x: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut buf = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = buf[i];
            buf[i] = orig + step;
            let plus = f(&buf);
            buf[i] = orig - step;
            let minus = f(&buf);
            buf[i] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`; the floor keeps near-zero gradients
/// from turning rounding noise into large relative errors.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| relative_error(*a, *b))
        .fold(0.0, f64::max)
}

pub fn tiny_config(num_classes: usize) -> ModelConfig {
    let mut c = ModelConfig::new(16, 8, num_classes);
    c.num_layers = 1;
    c.num_heads = 2;
    c.decomp_kernel = 5;
    // floor(1.2 * ln 16) = 3
    c.top_k_factor = 1.2;
    c
}
