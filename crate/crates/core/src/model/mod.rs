//! Transformer encoder with two per-token linear heads.
//!
//! Head A scores human vs. machine (2 logits), head B scores the four labels.
//! Both read the same final hidden vector after head dropout.

mod checkpoint;
mod encoder;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointMeta};
pub use encoder::{backward, forward, forward_traced, gelu, Batch, ForwardOutput, Trace};

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub n_attention_heads: usize,
    pub ffn_dim: usize,
    /// Positional capacity; also the longest chunk the model accepts.
    pub max_subwords: usize,
    /// Dropout inside the encoder layers (train mode only).
    pub dropout_p: f64,
    /// Dropout on the hidden vector shared by both heads (train mode only).
    pub head_dropout_p: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            vocab_size: 2,
            hidden_dim: 64,
            n_layers: 2,
            n_attention_heads: 4,
            ffn_dim: 256,
            max_subwords: 512,
            dropout_p: 0.1,
            head_dropout_p: 0.7,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("encoder config: {m}")));
        for (name, v) in [
            ("vocab_size", self.vocab_size),
            ("hidden_dim", self.hidden_dim),
            ("n_layers", self.n_layers),
            ("n_attention_heads", self.n_attention_heads),
            ("ffn_dim", self.ffn_dim),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.max_subwords < 2 {
            return bad(format!("max_subwords {} must be at least 2", self.max_subwords));
        }
        if !self.hidden_dim.is_multiple_of(self.n_attention_heads) {
            return bad(format!(
                "hidden_dim {} is not divisible by {} heads",
                self.hidden_dim, self.n_attention_heads
            ));
        }
        for (name, p) in [("dropout_p", self.dropout_p), ("head_dropout_p", self.head_dropout_p)] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("{name} {p} is outside [0, 1)"));
            }
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.n_attention_heads
    }
}

/// `y = x·weight + bias`, weight stored as fan_in × fan_out.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    fn init(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: uniform(rng, fan_in, fan_out, fan_in),
            bias: Array1::zeros(fan_out),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, f64>)>) {
        out.push((format!("{prefix}.weight"), self.weight.view().into_dyn()));
        out.push((format!("{prefix}.bias"), self.bias.view().into_dyn()));
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, ArrayViewMutD<'a, f64>)>) {
        out.push((format!("{prefix}.weight"), self.weight.view_mut().into_dyn()));
        out.push((format!("{prefix}.bias"), self.bias.view_mut().into_dyn()));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Array1<f64>,
    pub offset: Array1<f64>,
}

impl LayerNorm {
    fn new(dim: usize) -> Self {
        Self {
            gain: Array1::ones(dim),
            offset: Array1::zeros(dim),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            gain: Array1::zeros(self.gain.raw_dim()),
            offset: Array1::zeros(self.offset.raw_dim()),
        }
    }

    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, f64>)>) {
        out.push((format!("{prefix}.gain"), self.gain.view().into_dyn()));
        out.push((format!("{prefix}.offset"), self.offset.view().into_dyn()));
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, ArrayViewMutD<'a, f64>)>) {
        out.push((format!("{prefix}.gain"), self.gain.view_mut().into_dyn()));
        out.push((format!("{prefix}.offset"), self.offset.view_mut().into_dyn()));
    }
}

/// Post-norm encoder block: attention, add & norm, feed-forward, add & norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub attn_out: Linear,
    pub attn_norm: LayerNorm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
    pub ffn_norm: LayerNorm,
}

impl EncoderLayer {
    fn init(rng: &mut ChaCha8Rng, hidden: usize, ffn: usize) -> Self {
        Self {
            query: Linear::init(rng, hidden, hidden),
            key: Linear::init(rng, hidden, hidden),
            value: Linear::init(rng, hidden, hidden),
            attn_out: Linear::init(rng, hidden, hidden),
            attn_norm: LayerNorm::new(hidden),
            ffn_in: Linear::init(rng, hidden, ffn),
            ffn_out: Linear::init(rng, ffn, hidden),
            ffn_norm: LayerNorm::new(hidden),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            query: self.query.zeros_like(),
            key: self.key.zeros_like(),
            value: self.value.zeros_like(),
            attn_out: self.attn_out.zeros_like(),
            attn_norm: self.attn_norm.zeros_like(),
            ffn_in: self.ffn_in.zeros_like(),
            ffn_out: self.ffn_out.zeros_like(),
            ffn_norm: self.ffn_norm.zeros_like(),
        }
    }

    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, f64>)>) {
        self.query.tensors(&format!("{prefix}.query"), out);
        self.key.tensors(&format!("{prefix}.key"), out);
        self.value.tensors(&format!("{prefix}.value"), out);
        self.attn_out.tensors(&format!("{prefix}.attn_out"), out);
        self.attn_norm.tensors(&format!("{prefix}.attn_norm"), out);
        self.ffn_in.tensors(&format!("{prefix}.ffn_in"), out);
        self.ffn_out.tensors(&format!("{prefix}.ffn_out"), out);
        self.ffn_norm.tensors(&format!("{prefix}.ffn_norm"), out);
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, ArrayViewMutD<'a, f64>)>) {
        self.query.tensors_mut(&format!("{prefix}.query"), out);
        self.key.tensors_mut(&format!("{prefix}.key"), out);
        self.value.tensors_mut(&format!("{prefix}.value"), out);
        self.attn_out.tensors_mut(&format!("{prefix}.attn_out"), out);
        self.attn_norm.tensors_mut(&format!("{prefix}.attn_norm"), out);
        self.ffn_in.tensors_mut(&format!("{prefix}.ffn_in"), out);
        self.ffn_out.tensors_mut(&format!("{prefix}.ffn_out"), out);
        self.ffn_norm.tensors_mut(&format!("{prefix}.ffn_norm"), out);
    }
}

/// All trainable tensors. Gradients and optimizer moments use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct DualHeadParams {
    pub config: EncoderConfig,
    pub token_embedding: Array2<f64>,
    pub position_embedding: Array2<f64>,
    pub layers: Vec<EncoderLayer>,
    /// Binary human/machine head (H × 2).
    pub head_a: Linear,
    /// Four-class head (H × 4).
    pub head_b: Linear,
}

/// Draws every weight from U(-1/√fan_in, 1/√fan_in). Biases and layer-norm
/// offsets start at 0, layer-norm gains at 1.
pub fn init_params(config: &EncoderConfig, seed: u64) -> Result<DualHeadParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = config.hidden_dim;
    let token_embedding = uniform(&mut rng, config.vocab_size, h, h);
    let position_embedding = uniform(&mut rng, config.max_subwords, h, h);
    let layers = (0..config.n_layers)
        .map(|_| EncoderLayer::init(&mut rng, h, config.ffn_dim))
        .collect();
    Ok(DualHeadParams {
        config: config.clone(),
        token_embedding,
        position_embedding,
        layers,
        head_a: Linear::init(&mut rng, h, 2),
        head_b: Linear::init(&mut rng, h, 4),
    })
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound))
}

impl DualHeadParams {
    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            token_embedding: Array2::zeros(self.token_embedding.raw_dim()),
            position_embedding: Array2::zeros(self.position_embedding.raw_dim()),
            layers: self.layers.iter().map(EncoderLayer::zeros_like).collect(),
            head_a: self.head_a.zeros_like(),
            head_b: self.head_b.zeros_like(),
        }
    }

    /// Named views of every tensor in a fixed order.
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = vec![
            ("token_embedding".to_string(), self.token_embedding.view().into_dyn()),
            (
                "position_embedding".to_string(),
                self.position_embedding.view().into_dyn(),
            ),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            layer.tensors(&format!("layers.{i}"), &mut out);
        }
        self.head_a.tensors("head_a", &mut out);
        self.head_b.tensors("head_b", &mut out);
        out
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut out = vec![
            (
                "token_embedding".to_string(),
                self.token_embedding.view_mut().into_dyn(),
            ),
            (
                "position_embedding".to_string(),
                self.position_embedding.view_mut().into_dyn(),
            ),
        ];
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.tensors_mut(&format!("layers.{i}"), &mut out);
        }
        self.head_a.tensors_mut("head_a", &mut out);
        self.head_b.tensors_mut("head_b", &mut out);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}
