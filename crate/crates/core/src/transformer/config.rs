use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// How the encoder consumes its input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    /// Real-valued frames of `input_dim` values.
    Features,
    /// Token ids below `input_dim`.
    Tokens,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Layers per stack.
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub d_ff: usize,
    pub warmup_steps: u64,
    pub dropout_rate: f64,
    pub input_kind: InputKind,
    /// Frame dimension for features, vocabulary size for tokens.
    pub input_dim: usize,
    pub output_vocab_size: usize,
}

/// The two published model sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// N 6, d_model 512, h 8, d_k = d_v = 64, warmup 4000.
    D512H8,
    /// N 6, d_model 1024, h 16, d_k = d_v = 64, warmup 12000.
    D1024H16,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::D512H8 => "D512-H8",
            Preset::D1024H16 => "D1024-H16",
        }
    }

    pub fn config(&self, input_kind: InputKind, input_dim: usize, output_vocab_size: usize) -> ModelConfig {
        let (d_model, n_heads, warmup_steps) = match self {
            Preset::D512H8 => (512, 8, 4000),
            Preset::D1024H16 => (1024, 16, 12000),
        };
        ModelConfig {
            n_layers: 6,
            d_model,
            n_heads,
            d_k: 64,
            d_v: 64,
            d_ff: 4 * d_model,
            warmup_steps,
            dropout_rate: 0.1,
            input_kind,
            input_dim,
            output_vocab_size,
        }
    }
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "D512-H8" => Ok(Preset::D512H8),
            "D1024-H16" => Ok(Preset::D1024H16),
            other => Err(format!("unknown preset `{other}` (expected D512-H8 or D1024-H16)")),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl ModelConfig {
    /// A custom size with `d_k = d_v = d_model / n_heads` and `d_ff = 4·d_model`.
    pub fn small(n_layers: usize, d_model: usize, n_heads: usize, input_kind: InputKind, input_dim: usize, output_vocab_size: usize) -> Self {
        ModelConfig {
            n_layers,
            d_model,
            n_heads,
            d_k: d_model / n_heads.max(1),
            d_v: d_model / n_heads.max(1),
            d_ff: 4 * d_model,
            warmup_steps: 4000,
            dropout_rate: 0.1,
            input_kind,
            input_dim,
            output_vocab_size,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.n_layers == 0 || self.n_heads == 0 || self.d_k == 0 || self.d_v == 0 || self.d_ff == 0 {
            return fail("layer, head and width counts must be positive".into());
        }
        if self.n_heads * self.d_v != self.d_model {
            return fail(format!("h·d_v = {}·{} must equal d_model = {}", self.n_heads, self.d_v, self.d_model));
        }
        if self.d_model % 2 != 0 {
            return fail(format!("d_model {} must be even for sinusoidal encodings", self.d_model));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.input_dim == 0 || self.output_vocab_size < 5 {
            return fail("input_dim must be positive and the output vocabulary must hold the specials plus a unit".into());
        }
        Ok(())
    }
}
