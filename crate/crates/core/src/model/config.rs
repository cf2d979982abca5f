use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};

/// How sensor identity enters the encoder input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionalMode {
    None,
    Fixed,
    Learnable,
}

impl PositionalMode {
    pub const ALL: [PositionalMode; 3] = [
        PositionalMode::None,
        PositionalMode::Fixed,
        PositionalMode::Learnable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PositionalMode::None => "none",
            PositionalMode::Fixed => "fixed",
            PositionalMode::Learnable => "learnable",
        }
    }
}

impl fmt::Display for PositionalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PositionalMode {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PositionalMode::None),
            "fixed" => Ok(PositionalMode::Fixed),
            "learnable" => Ok(PositionalMode::Learnable),
            other => Err(TensorError::Config(format!(
                "unknown positional mode {other:?} (expected none, fixed or learnable)"
            ))),
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_positional() -> PositionalMode {
    PositionalMode::Learnable
}

/// Shape and switches of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Sensor count N (sequence length).
    pub n_sensors: usize,
    /// Input steps T (token width).
    pub input_steps: usize,
    /// Forecast steps K.
    pub horizon: usize,
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    #[serde(default = "default_true")]
    pub time_embedding: bool,
    #[serde(default = "default_positional")]
    pub positional: PositionalMode,
    /// Dropout after each sublayer; 0 disables it.
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(
        n_sensors: usize,
        input_steps: usize,
        horizon: usize,
        d_model: usize,
        heads: usize,
        layers: usize,
    ) -> Self {
        ModelConfig {
            n_sensors,
            input_steps,
            horizon,
            d_model,
            heads,
            layers,
            time_embedding: true,
            positional: PositionalMode::Learnable,
            dropout: 0.0,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_embeddings(mut self, time_embedding: bool, positional: PositionalMode) -> Self {
        self.time_embedding = time_embedding;
        self.positional = positional;
        self
    }

    /// Width of one time-feature row, `3T`.
    pub fn time_feature_width(&self) -> usize {
        3 * self.input_steps
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    /// `layers == 0` is accepted here; it is only meant for tests.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(TensorError::Config(m));
        for (name, v) in [
            ("n_sensors", self.n_sensors),
            ("input_steps", self.input_steps),
            ("horizon", self.horizon),
            ("d_model", self.d_model),
            ("heads", self.heads),
        ] {
            if v == 0 {
                return err(format!("{name} must be at least 1"));
            }
        }
        if self.d_model % self.heads != 0 {
            return err(format!(
                "d_model {} is not divisible by heads {}",
                self.d_model, self.heads
            ));
        }
        if self.d_model <= self.input_steps {
            return err(format!(
                "d_model {} must exceed input_steps {}",
                self.d_model, self.input_steps
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Number of trainable scalars implied by the parameter shapes.
    pub fn parameter_count(&self) -> usize {
        let (n, t, k, d, l) = (
            self.n_sensors,
            self.input_steps,
            self.horizon,
            self.d_model,
            self.layers,
        );
        let traffic = t * d + d;
        let time = if self.time_embedding { 3 * t * d + d } else { 0 };
        let positional = if self.positional == PositionalMode::Learnable {
            n * d
        } else {
            0
        };
        // 4 d×d projections, FFN d→4d→d with biases, two (gamma, beta) pairs
        let per_layer = 4 * d * d + (d * 4 * d + 4 * d) + (4 * d * d + d) + 4 * d;
        traffic + time + positional + l * per_layer + d * k + k
    }
}
