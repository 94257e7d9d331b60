use ndarray::{s, Array2, ArrayView2};

use super::ops::{cross_correlation_fft, softmax, top_k};
use super::{EncoderLayerParams, ModelConfig};

/// Lags chosen by one head and their softmax weights.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadSelection {
    pub scores: Vec<f64>,
    pub lags: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Values the backward pass needs from the forward pass.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub x: Array2<f64>,
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    pub heads: Vec<HeadSelection>,
    pub aggregated: Array2<f64>,
}

/// Multi-head autocorrelation attention with a residual connection.
///
/// Each head scores every lag by the FFT cross-correlation of its query and
/// key columns, keeps the `k` best lags, and mixes the value columns rolled
/// by those lags with softmax weights. Head outputs are concatenated in
/// column order and mixed by `w_out`.
pub fn autocorrelation_attention(
    x: ArrayView2<f64>,
    layer: &EncoderLayerParams,
    config: &ModelConfig,
) -> (Array2<f64>, AttentionCache) {
    let (l, _) = x.dim();
    let d = config.head_dim();
    let k = config.top_k();
    let q = x.dot(&layer.w_q);
    let kk = x.dot(&layer.w_k);
    let v = x.dot(&layer.w_v);
    let mut aggregated = Array2::zeros(x.dim());
    let mut heads = Vec::with_capacity(config.num_heads);
    for h in 0..config.num_heads {
        let cols = s![.., h * d..(h + 1) * d];
        let scores = cross_correlation_fft(q.slice(cols), kk.slice(cols));
        let lags = top_k(&scores, k);
        let selected: Vec<f64> = lags.iter().map(|&t| scores[t]).collect();
        let weights = softmax(&selected);
        let vh = v.slice(cols);
        let mut out = aggregated.slice_mut(cols);
        for (&tau, &w) in lags.iter().zip(&weights) {
            for t in 0..l {
                out.row_mut(t).scaled_add(w, &vh.row((t + tau) % l));
            }
        }
        heads.push(HeadSelection { scores, lags, weights });
    }
    let out = &x + &aggregated.dot(&layer.w_out);
    let cache = AttentionCache {
        x: x.to_owned(),
        q,
        k: kk,
        v,
        heads,
        aggregated,
    };
    (out, cache)
}

pub struct AttentionGrads {
    pub dx: Array2<f64>,
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub w_out: Array2<f64>,
}

/// Backward pass. Lag selection is held fixed; gradients reach the queries
/// and keys through the softmax over the selected scores.
pub fn attention_backward(
    dout: ArrayView2<f64>,
    cache: &AttentionCache,
    layer: &EncoderLayerParams,
    config: &ModelConfig,
) -> AttentionGrads {
    let (l, _) = dout.dim();
    let d = config.head_dim();
    let norm = 1.0 / (l as f64 * d as f64);
    let w_out = cache.aggregated.t().dot(&dout);
    let da = dout.dot(&layer.w_out.t());
    let mut dq = Array2::zeros(cache.q.dim());
    let mut dk = Array2::zeros(cache.k.dim());
    let mut dv = Array2::zeros(cache.v.dim());
    for (h, sel) in cache.heads.iter().enumerate() {
        let lo = h * d;
        // d(loss)/d(weight_j) and the rolled-value adjoint
        let mut dw = vec![0.0; sel.lags.len()];
        for (j, (&tau, &w)) in sel.lags.iter().zip(&sel.weights).enumerate() {
            for t in 0..l {
                let src = (t + tau) % l;
                for c in lo..lo + d {
                    let g = da[[t, c]];
                    dw[j] += g * cache.v[[src, c]];
                    dv[[src, c]] += w * g;
                }
            }
        }
        let mean: f64 = sel.weights.iter().zip(&dw).map(|(w, g)| w * g).sum();
        for (j, &tau) in sel.lags.iter().enumerate() {
            let dr = sel.weights[j] * (dw[j] - mean) * norm;
            if dr == 0.0 {
                continue;
            }
            for t in 0..l {
                let shifted = (t + tau) % l;
                for c in lo..lo + d {
                    dq[[shifted, c]] += dr * cache.k[[t, c]];
                    dk[[t, c]] += dr * cache.q[[shifted, c]];
                }
            }
        }
    }
    let x = &cache.x;
    let mut dx = dout.to_owned();
    dx += &dq.dot(&layer.w_q.t());
    dx += &dk.dot(&layer.w_k.t());
    dx += &dv.dot(&layer.w_v.t());
    AttentionGrads {
        dx,
        w_q: x.t().dot(&dq),
        w_k: x.t().dot(&dk),
        w_v: x.t().dot(&dv),
        w_out,
    }
}
