//! Autocorrelation-attention encoder with an MLP classification head.

mod attention;
mod grad;
mod network;
mod ops;

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::seed::{self, Purpose};

pub use attention::{attention_backward, autocorrelation_attention, AttentionCache, AttentionGrads, HeadSelection};
pub use grad::{accumulate_gradients, batch_logits, model_gradients, GradientOutput, LossKind, LossSpec, Reduction};
pub use network::{
    class_probabilities, encoder_forward, feed_forward, feed_forward_backward, forward, mlp_head, mlp_head_backward,
    predict_proba, FfnCache, FfnGrads, ForwardTrace, LayerCache,
};
pub use ops::{
    cross_correlation_fft, gelu, gelu_grad, moving_average, position_code, positional_encoding, roll, seasonal_adjoint,
    series_decompose, softmax, top_k,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Rows of the input matrix (ACF lags).
    pub lags: usize,
    /// Columns of the input matrix (links x subcarriers).
    pub width: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    /// `k = max(1, floor(top_k_factor * ln(lags)))`.
    pub top_k_factor: f64,
    pub decomp_kernel: usize,
    pub ffn_hidden: usize,
    pub head_hidden: Vec<usize>,
    pub num_classes: usize,
    pub pe_amplitude: f64,
    /// Ablation switch; when off the decomposition blocks pass input through.
    pub use_decomposition: bool,
}

impl ModelConfig {
    pub fn new(lags: usize, width: usize, num_classes: usize) -> Self {
        ModelConfig {
            lags,
            width,
            num_layers: 2,
            num_heads: 8,
            top_k_factor: 2.0,
            decomp_kernel: 25,
            ffn_hidden: 2 * width,
            head_hidden: vec![128, 64],
            num_classes,
            pe_amplitude: 0.1,
            use_decomposition: true,
        }
    }

    pub fn top_k(&self) -> usize {
        let k = (self.top_k_factor * (self.lags as f64).ln()).floor() as usize;
        k.max(1).min(self.lags)
    }

    pub fn head_dim(&self) -> usize {
        self.width / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.lags < 2 || self.width == 0 || self.num_heads == 0 || self.num_classes < 2 {
            return bad("need at least 2 lags, 2 classes, one column and one head".into());
        }
        if !self.width.is_multiple_of(self.num_heads) {
            return bad(format!(
                "width {} is not divisible by {} heads",
                self.width, self.num_heads
            ));
        }
        if self.decomp_kernel.is_multiple_of(2) || self.decomp_kernel > self.lags {
            return bad(format!(
                "decomposition kernel {} must be odd and at most {}",
                self.decomp_kernel, self.lags
            ));
        }
        if self.ffn_hidden == 0 || self.head_hidden.contains(&0) {
            return bad("hidden sizes must be positive".into());
        }
        Ok(())
    }

    /// Encoder tensors are identical between configs that differ only in the
    /// head.
    pub fn same_encoder(&self, other: &ModelConfig) -> bool {
        self.lags == other.lags
            && self.width == other.width
            && self.num_layers == other.num_layers
            && self.ffn_hidden == other.ffn_hidden
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayerParams {
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub w_out: Array2<f64>,
    /// `(3 * width, ffn_hidden)` kernel-3 convolution.
    pub ffn1_w: Array2<f64>,
    pub ffn1_b: Array1<f64>,
    /// `(3 * ffn_hidden, width)`.
    pub ffn2_w: Array2<f64>,
    pub ffn2_b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// `(fan_in, fan_out)`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Every learnable tensor. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub encoder: Vec<EncoderLayerParams>,
    pub head: Vec<DenseParams>,
}

fn xavier(rng: &mut impl Rng, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-a..=a))
}

fn head_dims(config: &ModelConfig) -> Vec<usize> {
    let mut dims = vec![config.width];
    dims.extend(&config.head_hidden);
    dims.push(config.num_classes);
    dims
}

impl ModelParams {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed, Purpose::Init, 0);
        let encoder = (0..config.num_layers)
            .map(|_| Self::init_layer(config, &mut rng))
            .collect();
        let mut head_rng = seed::rng(seed, Purpose::Init, 1);
        let head = Self::init_head(config, &mut head_rng);
        Ok(ModelParams { encoder, head })
    }

    fn init_layer(config: &ModelConfig, rng: &mut impl Rng) -> EncoderLayerParams {
        let (n, f) = (config.width, config.ffn_hidden);
        EncoderLayerParams {
            w_q: xavier(rng, n, n, n, n),
            w_k: xavier(rng, n, n, n, n),
            w_v: xavier(rng, n, n, n, n),
            w_out: xavier(rng, n, n, n, n),
            ffn1_w: xavier(rng, 3 * n, f, 3 * n, 3 * f),
            ffn1_b: Array1::zeros(f),
            ffn2_w: xavier(rng, 3 * f, n, 3 * f, 3 * n),
            ffn2_b: Array1::zeros(n),
        }
    }

    fn init_head(config: &ModelConfig, rng: &mut impl Rng) -> Vec<DenseParams> {
        head_dims(config)
            .windows(2)
            .map(|d| DenseParams {
                w: xavier(rng, d[0], d[1], d[0], d[1]),
                b: Array1::zeros(d[1]),
            })
            .collect()
    }

    /// Replaces the head with a freshly initialized one for `config`,
    /// keeping the encoder.
    pub fn with_new_head(&self, config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed, Purpose::Init, 1);
        Ok(ModelParams {
            encoder: self.encoder.clone(),
            head: Self::init_head(config, &mut rng),
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|_, t| t.fill(0.0));
        z
    }

    /// Visits tensors in serialization order: encoder layers in order
    /// (`w_q, w_k, w_v, w_out, ffn1_w, ffn1_b, ffn2_w, ffn2_b`), then head
    /// layers (`weight, bias`).
    pub fn for_each(&self, mut f: impl FnMut(String, &[usize], &[f64])) {
        for (i, l) in self.encoder.iter().enumerate() {
            let p = format!("encoder.{i}");
            for (name, t) in [
                ("attn.w_q", &l.w_q),
                ("attn.w_k", &l.w_k),
                ("attn.w_v", &l.w_v),
                ("attn.w_out", &l.w_out),
            ] {
                f(format!("{p}.{name}"), t.shape(), t.as_slice().unwrap());
            }
            f(
                format!("{p}.ffn1.weight"),
                l.ffn1_w.shape(),
                l.ffn1_w.as_slice().unwrap(),
            );
            f(format!("{p}.ffn1.bias"), l.ffn1_b.shape(), l.ffn1_b.as_slice().unwrap());
            f(
                format!("{p}.ffn2.weight"),
                l.ffn2_w.shape(),
                l.ffn2_w.as_slice().unwrap(),
            );
            f(format!("{p}.ffn2.bias"), l.ffn2_b.shape(), l.ffn2_b.as_slice().unwrap());
        }
        for (i, d) in self.head.iter().enumerate() {
            f(format!("head.{i}.weight"), d.w.shape(), d.w.as_slice().unwrap());
            f(format!("head.{i}.bias"), d.b.shape(), d.b.as_slice().unwrap());
        }
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(String, &mut [f64])) {
        for (i, l) in self.encoder.iter_mut().enumerate() {
            let p = format!("encoder.{i}");
            f(format!("{p}.attn.w_q"), l.w_q.as_slice_mut().unwrap());
            f(format!("{p}.attn.w_k"), l.w_k.as_slice_mut().unwrap());
            f(format!("{p}.attn.w_v"), l.w_v.as_slice_mut().unwrap());
            f(format!("{p}.attn.w_out"), l.w_out.as_slice_mut().unwrap());
            f(format!("{p}.ffn1.weight"), l.ffn1_w.as_slice_mut().unwrap());
            f(format!("{p}.ffn1.bias"), l.ffn1_b.as_slice_mut().unwrap());
            f(format!("{p}.ffn2.weight"), l.ffn2_w.as_slice_mut().unwrap());
            f(format!("{p}.ffn2.bias"), l.ffn2_b.as_slice_mut().unwrap());
        }
        for (i, d) in self.head.iter_mut().enumerate() {
            f(format!("head.{i}.weight"), d.w.as_slice_mut().unwrap());
            f(format!("head.{i}.bias"), d.b.as_slice_mut().unwrap());
        }
    }

    pub fn len(&self) -> usize {
        let mut n = 0;
        self.for_each(|_, _, t| n += t.len());
        n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        self.for_each(|_, _, t| out.extend_from_slice(t));
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} parameters",
                flat.len(),
                self.len()
            )));
        }
        let mut offset = 0;
        self.for_each_mut(|_, t| {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        });
        Ok(())
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        let flat = other.to_flat();
        let mut offset = 0;
        self.for_each_mut(|_, t| {
            for (a, b) in t.iter_mut().zip(&flat[offset..]) {
                *a += scale * b;
            }
            offset += t.len();
        });
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.for_each(|_, _, t| ok &= t.iter().all(|v| v.is_finite()));
        ok
    }

    /// Name of the first tensor holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<String> {
        let mut bad = None;
        self.for_each(|name, _, t| {
            if bad.is_none() && !t.iter().all(|v| v.is_finite()) {
                bad = Some(name);
            }
        });
        bad
    }

    pub fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.for_each(|name, shape, _| out.push((name, shape.to_vec())));
        out
    }

    pub fn check_config(&self, config: &ModelConfig) -> Result<()> {
        let expected = ModelParams::init(config, 0)?.shapes();
        if expected != self.shapes() {
            return Err(Error::ShapeMismatch(
                "parameters do not match the model configuration".into(),
            ));
        }
        Ok(())
    }
}

const CHECKPOINT_FORMAT: &str = "cpd-checkpoint/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the payload, in values.
    pub offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

/// Model configuration plus parameters, stored as a JSON header with a
/// tensor table followed by little-endian `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors = Vec::new();
        let mut offset = 0;
        self.params.for_each(|name, shape, t| {
            tensors.push(TensorEntry {
                name,
                shape: shape.to_vec(),
                offset,
            });
            offset += t.len();
        });
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            config: self.config.clone(),
            tensors,
        };
        container::encode(&header, self.params.to_flat().into_iter().map(|v| v as f32))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, payload): (CheckpointHeader, Vec<f32>) = container::decode(bytes)?;
        if h.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!("not a checkpoint: {}", h.format)));
        }
        let mut params = ModelParams::init(&h.config, 0)?;
        let expected = params.shapes();
        if expected.len() != h.tensors.len() {
            return Err(Error::Format("tensor table does not match the configuration".into()));
        }
        let mut tables = std::collections::HashMap::new();
        for t in &h.tensors {
            tables.insert(t.name.clone(), t);
        }
        let mut err = None;
        params.for_each_mut(|name, dst| match tables.get(&name) {
            Some(t) if t.shape.iter().product::<usize>() == dst.len() && t.offset + dst.len() <= payload.len() => {
                for (d, s) in dst.iter_mut().zip(&payload[t.offset..]) {
                    *d = *s as f64;
                }
            }
            _ => err = Some(Error::Format(format!("missing or malformed tensor {name}"))),
        });
        if let Some(e) = err {
            return Err(e);
        }
        Ok(Checkpoint {
            config: h.config,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_top_k() {
        assert_eq!(ModelConfig::new(150, 232, 3).top_k(), 10);
        assert_eq!(ModelConfig::new(50, 32, 3).top_k(), 7);
    }

    #[test]
    fn config_invariants() {
        let mut c = ModelConfig::new(16, 8, 3);
        c.num_heads = 3;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::new(16, 8, 3);
        c.num_heads = 2;
        c.decomp_kernel = 4;
        assert!(c.validate().is_err());
        c.decomp_kernel = 17;
        assert!(c.validate().is_err());
        c.decomp_kernel = 5;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn xavier_bounds_and_zero_biases() {
        let mut c = ModelConfig::new(16, 8, 3);
        c.num_heads = 2;
        c.decomp_kernel = 5;
        let p = ModelParams::init(&c, 1).unwrap();
        let a = (6.0f64 / 16.0).sqrt();
        assert!(p.encoder[0].w_q.iter().all(|v| v.abs() <= a));
        assert!(p.head[0].b.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn checkpoint_roundtrip_and_head_swap() {
        let mut c = ModelConfig::new(16, 8, 2);
        c.num_heads = 2;
        c.decomp_kernel = 5;
        let p = ModelParams::init(&c, 3).unwrap();
        let ck = Checkpoint {
            config: c.clone(),
            params: p.clone(),
        };
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        let flat: Vec<f64> = p.to_flat().iter().map(|v| *v as f32 as f64).collect();
        assert_eq!(back.params.to_flat(), flat);

        let mut c3 = c.clone();
        c3.num_classes = 3;
        let swapped = back.params.with_new_head(&c3, 9).unwrap();
        assert_eq!(swapped.encoder, back.params.encoder);
        assert_eq!(swapped.head.last().unwrap().w.dim(), (64, 3));
        assert_eq!(back.params.head.last().unwrap().w.dim(), (64, 2));
        swapped.check_config(&c3).unwrap();
        assert!(swapped.check_config(&c).is_err());
    }
}
