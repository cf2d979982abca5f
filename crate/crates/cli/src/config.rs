//! The JSON run configuration shared by `train`, `sweep` and `ablation`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use fptn::data::{Format, SplitRatio};
use fptn::model::{ModelConfig, PositionalMode};
use fptn::training::{TrainConfig, DEFAULT_MAPE_THRESHOLD};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum FormatName {
    Csv,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum PositionalName {
    None,
    Fixed,
    Learnable,
}

impl From<PositionalName> for PositionalMode {
    fn from(p: PositionalName) -> Self {
        match p {
            PositionalName::None => PositionalMode::None,
            PositionalName::Fixed => PositionalMode::Fixed,
            PositionalName::Learnable => PositionalMode::Learnable,
        }
    }
}

impl From<FormatName> for Format {
    fn from(f: FormatName) -> Self {
        match f {
            FormatName::Csv => Format::Csv,
            FormatName::Binary => Format::Binary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// Relative paths resolve against the directory of the config file.
    pub path: PathBuf,
    /// Inferred from the extension when absent (`.csv` → csv, else binary).
    #[serde(default)]
    pub format: Option<FormatName>,
    /// `train:val:test`, e.g. `"6:2:2"`.
    #[serde(default = "default_split")]
    #[schemars(regex(pattern = r"^\s*[0-9.]+\s*:\s*[0-9.]+\s*:\s*[0-9.]+\s*$"))]
    pub split_ratio: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[schemars(range(min = 1))]
    pub d_model: usize,
    #[serde(rename = "h")]
    #[schemars(range(min = 1))]
    pub heads: usize,
    #[serde(rename = "L")]
    #[schemars(range(min = 1))]
    pub layers: usize,
    #[serde(rename = "T", default = "twelve")]
    #[schemars(range(min = 1))]
    pub input_steps: usize,
    #[serde(rename = "K", default = "twelve")]
    #[schemars(range(min = 1))]
    pub horizon: usize,
    #[serde(default = "yes")]
    pub time_embedding: bool,
    #[serde(default = "learnable")]
    pub positional_mode: PositionalName,
    #[serde(default)]
    #[schemars(range(min = 0.0, max = 0.99))]
    pub dropout: f64,
    /// Parameter initialization seed.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[schemars(range(min = 0.0))]
    pub lr: f64,
    #[serde(default = "sixty_four")]
    #[schemars(range(min = 1))]
    pub batch_size: usize,
    #[serde(default = "four_hundred")]
    #[schemars(range(min = 1))]
    pub epochs: usize,
    #[serde(default = "forty")]
    #[schemars(range(min = 1))]
    pub patience: usize,
    /// Shuffling seed.
    #[serde(default)]
    pub seed: u64,
    /// Global gradient-norm clip; off when absent.
    #[serde(default)]
    pub clip_grad_norm: Option<f64>,
    #[serde(default = "mape_threshold")]
    pub mape_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Run directory; relative paths resolve like `dataset.path`.
    pub dir: PathBuf,
}

fn default_split() -> String {
    "6:2:2".into()
}
fn twelve() -> usize {
    12
}
fn yes() -> bool {
    true
}
fn learnable() -> PositionalName {
    PositionalName::Learnable
}
fn sixty_four() -> usize {
    64
}
fn four_hundred() -> usize {
    400
}
fn forty() -> usize {
    40
}
fn mape_threshold() -> f64 {
    DEFAULT_MAPE_THRESHOLD
}

/// JSON Schema of [`RunConfig`], as published in `schema/run_config.schema.json`.
pub fn run_config_schema() -> String {
    let schema = schemars::schema_for!(RunConfig);
    serde_json::to_string_pretty(&schema).expect("schema serializes") + "\n"
}

impl RunConfig {
    /// Read, parse and validate; relative paths are resolved against the file's directory.
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.dataset.path = base.join(&cfg.dataset.path);
        cfg.output.dir = base.join(&cfg.output.dir);
        Ok(cfg)
    }

    pub fn parse(text: &str) -> anyhow::Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| anyhow!("schema violation: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that go beyond the schema's field types.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.split_ratio()?;
        let m = &self.model;
        if m.d_model % m.heads != 0 {
            bail!("model.d_model {} is not divisible by model.h {}", m.d_model, m.heads);
        }
        // N is only known once the dataset is read; 1 stands in for validation
        self.model_config(1).validate().map_err(|e| anyhow!("model: {e}"))?;
        self.train_config().validate().map_err(|e| anyhow!("train: {e}"))?;
        Ok(())
    }

    pub fn split_ratio(&self) -> anyhow::Result<SplitRatio> {
        self.dataset
            .split_ratio
            .parse()
            .map_err(|e| anyhow!("dataset.split_ratio: {e}"))
    }

    pub fn format(&self) -> Format {
        self.dataset
            .format
            .map(Format::from)
            .unwrap_or_else(|| Format::from_path(&self.dataset.path))
    }

    pub fn model_config(&self, n_sensors: usize) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            n_sensors,
            input_steps: m.input_steps,
            horizon: m.horizon,
            d_model: m.d_model,
            heads: m.heads,
            layers: m.layers,
            time_embedding: m.time_embedding,
            positional: m.positional_mode.into(),
            dropout: m.dropout,
            seed: m.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            patience: t.patience,
            seed: t.seed,
            clip_grad_norm: t.clip_grad_norm,
            mape_threshold: t.mape_threshold,
            shuffle: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "dataset": {"path": "d.fptn"},
        "model": {"d_model": 16, "h": 2, "L": 1},
        "train": {"lr": 0.001},
        "output": {"dir": "run"}
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!((c.model.input_steps, c.model.horizon), (12, 12));
        assert_eq!((c.train.batch_size, c.train.epochs, c.train.patience), (64, 400, 40));
        assert_eq!(c.dataset.split_ratio, "6:2:2");
    }

    #[test]
    fn unknown_keys_and_bad_pairs_rejected() {
        let extra = MINIMAL.replace("\"L\": 1", "\"L\": 1, \"depth\": 3");
        assert!(RunConfig::parse(&extra).unwrap_err().to_string().contains("schema"));
        let bad = MINIMAL.replace("\"h\": 2", "\"h\": 3");
        assert!(RunConfig::parse(&bad).unwrap_err().to_string().contains("divisible"));
        for ratio in ["6:4:0", "8:2"] {
            let text = MINIMAL.replace("\"d.fptn\"", &format!("\"d.fptn\", \"split_ratio\": \"{ratio}\""));
            assert!(RunConfig::parse(&text).is_err(), "{ratio}");
        }
    }

    #[test]
    fn published_schema_is_current() {
        let published = include_str!("../../../schema/run_config.schema.json");
        assert_eq!(published, run_config_schema());
    }
}
