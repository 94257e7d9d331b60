use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::attention::{attention_backward, autocorrelation_attention, AttentionCache};
use super::ops::{
    col2im3, gelu, gelu_grad, im2col3, mean_rows, moving_average_adjoint, positional_encoding, seasonal_adjoint,
    series_decompose, softmax,
};
use super::{DenseParams, EncoderLayerParams, ModelConfig, ModelParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct FfnCache {
    cols_in: Array2<f64>,
    pre1: Array2<f64>,
    cols_hidden: Array2<f64>,
    pre2: Array2<f64>,
}

/// Two kernel-3 convolutions along the lag axis, each followed by GELU, plus
/// the residual input.
pub fn feed_forward(x: ArrayView2<f64>, layer: &EncoderLayerParams) -> (Array2<f64>, FfnCache) {
    let cols_in = im2col3(x);
    let pre1 = cols_in.dot(&layer.ffn1_w) + &layer.ffn1_b;
    let hidden = pre1.mapv(gelu);
    let cols_hidden = im2col3(hidden.view());
    let pre2 = cols_hidden.dot(&layer.ffn2_w) + &layer.ffn2_b;
    let out = &x + &pre2.mapv(gelu);
    (
        out,
        FfnCache {
            cols_in,
            pre1,
            cols_hidden,
            pre2,
        },
    )
}

pub struct FfnGrads {
    pub dx: Array2<f64>,
    pub ffn1_w: Array2<f64>,
    pub ffn1_b: Array1<f64>,
    pub ffn2_w: Array2<f64>,
    pub ffn2_b: Array1<f64>,
}

/// Backward pass of [`feed_forward`], including the residual path.
pub fn feed_forward_backward(dout: ArrayView2<f64>, cache: &FfnCache, layer: &EncoderLayerParams) -> FfnGrads {
    let dpre2 = &dout * &cache.pre2.mapv(gelu_grad);
    let dhidden = col2im3(dpre2.dot(&layer.ffn2_w.t()).view());
    let dpre1 = &dhidden * &cache.pre1.mapv(gelu_grad);
    FfnGrads {
        dx: &dout + &col2im3(dpre1.dot(&layer.ffn1_w.t()).view()),
        ffn1_w: cache.cols_in.t().dot(&dpre1),
        ffn1_b: dpre1.sum_axis(Axis(0)),
        ffn2_w: cache.cols_hidden.t().dot(&dpre2),
        ffn2_b: dpre2.sum_axis(Axis(0)),
    }
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    pub attention: AttentionCache,
    ffn: FfnCache,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub layers: Vec<LayerCache>,
    pub encoded: Array2<f64>,
    pub pooled: Array1<f64>,
    head_inputs: Vec<Array1<f64>>,
    head_pre: Vec<Array1<f64>>,
    pub logits: Vec<f64>,
}

/// Seasonal part of `x`; the trend is added to `trends` when decomposition
/// is on.
fn seasonal(x: Array2<f64>, trends: &mut Array2<f64>, config: &ModelConfig) -> Array2<f64> {
    if config.use_decomposition {
        let (s, t) = series_decompose(x.view(), config.decomp_kernel);
        *trends += &t;
        s
    } else {
        x
    }
}

fn check_finite(x: &Array2<f64>, site: impl FnOnce() -> String) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteActivation(site()))
    }
}

/// Runs the encoder stack. Attention and feed-forward blocks see only the
/// seasonal part; the trends removed along the way are summed and added
/// back to the last layer's output.
fn encode_layers(x: Array2<f64>, params: &ModelParams, config: &ModelConfig) -> Result<(Array2<f64>, Vec<LayerCache>)> {
    let mut x = x;
    let mut trends = Array2::zeros(x.raw_dim());
    let mut caches = Vec::with_capacity(params.encoder.len());
    for (i, layer) in params.encoder.iter().enumerate() {
        let (z1, attention) = autocorrelation_attention(x.view(), layer, config);
        let s1 = seasonal(z1, &mut trends, config);
        let (z2, ffn) = feed_forward(s1.view(), layer);
        x = seasonal(z2, &mut trends, config);
        check_finite(&x, || format!("encoder layer {i}"))?;
        caches.push(LayerCache { attention, ffn });
    }
    Ok((x + trends, caches))
}

/// Encoder stack followed by mean pooling over lags. `input` must already
/// include the positional encoding.
pub fn encoder_forward(input: ArrayView2<f64>, params: &ModelParams, config: &ModelConfig) -> Result<Array1<f64>> {
    check_shape(input, config)?;
    let (encoded, _) = encode_layers(input.to_owned(), params, config)?;
    Ok(mean_rows(encoded.view()))
}

/// ReLU after every layer but the last, which yields raw logits.
pub fn mlp_head(features: ArrayView1<f64>, head: &[DenseParams]) -> Vec<f64> {
    head_forward(features, head).0.to_vec()
}

/// Backward pass of the head given the cached layer inputs and
/// pre-activations; returns parameter gradients and the feature gradient.
fn head_backward(
    inputs: &[Array1<f64>],
    pre: &[Array1<f64>],
    dlogits: &[f64],
    head: &[DenseParams],
) -> (Vec<DenseParams>, Array1<f64>) {
    let mut grads = Vec::with_capacity(head.len());
    let mut dz = Array1::from(dlogits.to_vec());
    for i in (0..head.len()).rev() {
        let w = Array2::from_shape_fn((inputs[i].len(), dz.len()), |(r, c)| inputs[i][r] * dz[c]);
        grads.push(DenseParams { w, b: dz.clone() });
        let dinput = head[i].w.dot(&dz);
        dz = if i > 0 {
            let p = &pre[i - 1];
            Array1::from_shape_fn(dinput.len(), |j| if p[j] > 0.0 { dinput[j] } else { 0.0 })
        } else {
            dinput
        };
    }
    grads.reverse();
    (grads, dz)
}

/// Head logits together with the gradient of `dlogits . logits` with
/// respect to the head parameters and the input features.
pub fn mlp_head_backward(
    features: ArrayView1<f64>,
    head: &[DenseParams],
    dlogits: &[f64],
) -> (Vec<f64>, Vec<DenseParams>, Array1<f64>) {
    let (logits, inputs, pre) = head_forward(features, head);
    let (grads, dfeatures) = head_backward(&inputs, &pre, dlogits, head);
    (logits.to_vec(), grads, dfeatures)
}

fn head_forward(features: ArrayView1<f64>, head: &[DenseParams]) -> (Array1<f64>, Vec<Array1<f64>>, Vec<Array1<f64>>) {
    let mut inputs = Vec::with_capacity(head.len());
    let mut pre = Vec::with_capacity(head.len());
    let mut h = features.to_owned();
    for (i, d) in head.iter().enumerate() {
        let z = h.dot(&d.w) + &d.b;
        inputs.push(h);
        h = if i + 1 < head.len() {
            z.mapv(|v| v.max(0.0))
        } else {
            z.clone()
        };
        pre.push(z);
    }
    (h, inputs, pre)
}

fn check_shape(input: ArrayView2<f64>, config: &ModelConfig) -> Result<()> {
    if input.dim() != (config.lags, config.width) {
        return Err(Error::ShapeMismatch(format!(
            "input is {:?}, model expects ({}, {})",
            input.dim(),
            config.lags,
            config.width
        )));
    }
    Ok(())
}

/// Positional encoding, encoder, pooling and head, keeping every
/// intermediate needed for [`backward`].
pub fn forward(sample: ArrayView2<f64>, params: &ModelParams, config: &ModelConfig) -> Result<ForwardTrace> {
    check_shape(sample, config)?;
    let x = &sample + &positional_encoding(config.lags, config.width, config.pe_amplitude);
    let (encoded, layers) = encode_layers(x, params, config)?;
    let pooled = mean_rows(encoded.view());
    let (logits, head_inputs, head_pre) = head_forward(pooled.view(), &params.head);
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteActivation("head".into()));
    }
    Ok(ForwardTrace {
        layers,
        encoded,
        pooled,
        head_inputs,
        head_pre,
        logits: logits.to_vec(),
    })
}

pub fn class_probabilities(logits: &[f64]) -> Vec<f64> {
    softmax(logits)
}

pub fn predict_proba(sample: ArrayView2<f64>, params: &ModelParams, config: &ModelConfig) -> Result<Vec<f64>> {
    Ok(class_probabilities(&forward(sample, params, config)?.logits))
}

fn standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

/// Gradient of a scalar loss with respect to every parameter, given the
/// loss gradient at the logits.
pub(crate) fn backward(
    trace: &ForwardTrace,
    dlogits: &[f64],
    params: &ModelParams,
    config: &ModelConfig,
) -> ModelParams {
    let mut grads = params.zeros_like();

    let (head_grads, dpooled) = head_backward(&trace.head_inputs, &trace.head_pre, dlogits, &params.head);
    grads.head = head_grads;

    let l = config.lags;
    let dencoded = Array2::from_shape_fn((l, config.width), |(_, c)| dpooled[c] / l as f64);
    let dtrend = moving_average_adjoint(dencoded.view(), config.decomp_kernel);
    let mut dx = dencoded;
    for i in (0..params.encoder.len()).rev() {
        let layer = &params.encoder[i];
        let cache = &trace.layers[i];
        let g = &mut grads.encoder[i];

        let dz2 = if config.use_decomposition {
            seasonal_adjoint(dx.view(), config.decomp_kernel) + &dtrend
        } else {
            dx
        };
        let f = feed_forward_backward(dz2.view(), &cache.ffn, layer);
        g.ffn1_w = standard(f.ffn1_w);
        g.ffn1_b = f.ffn1_b;
        g.ffn2_w = standard(f.ffn2_w);
        g.ffn2_b = f.ffn2_b;
        let ds1 = f.dx;

        let dz1 = if config.use_decomposition {
            seasonal_adjoint(ds1.view(), config.decomp_kernel) + &dtrend
        } else {
            ds1
        };
        let a = attention_backward(dz1.view(), &cache.attention, layer, config);
        g.w_q = standard(a.w_q);
        g.w_k = standard(a.w_k);
        g.w_v = standard(a.w_v);
        g.w_out = standard(a.w_out);
        dx = a.dx;
    }
    grads
}
