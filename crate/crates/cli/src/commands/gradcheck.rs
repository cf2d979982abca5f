use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context};
use fptn::gradcheck::random_probe;
use fptn::model::ModelConfig;
use fptn::{Model, NormMode};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::config::PositionalName;
use crate::error::{input, runtime, CliError, CliResult};

const MAX_SENSORS: usize = 4;
const MAX_D_MODEL: usize = 16;

/// Tiny model and probe settings; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    #[serde(rename = "N")]
    pub n_sensors: usize,
    #[serde(rename = "T")]
    pub input_steps: usize,
    #[serde(rename = "K")]
    pub horizon: usize,
    pub d_model: usize,
    #[serde(rename = "h")]
    pub heads: usize,
    #[serde(rename = "L")]
    pub layers: usize,
    pub time_embedding: bool,
    pub positional_mode: PositionalName,
    pub batch: usize,
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            n_sensors: 3,
            input_steps: 4,
            horizon: 2,
            d_model: 8,
            heads: 2,
            layers: 1,
            time_embedding: true,
            positional_mode: PositionalName::Learnable,
            batch: 2,
            seed: 0,
            step: 1e-5,
            tolerance: 1e-4,
        }
    }
}

impl GradcheckConfig {
    fn model_config(&self) -> ModelConfig {
        ModelConfig::new(
            self.n_sensors,
            self.input_steps,
            self.horizon,
            self.d_model,
            self.heads,
            self.layers,
        )
        .with_embeddings(self.time_embedding, self.positional_mode.into())
        .with_seed(self.seed)
    }
}

pub fn run(config: Option<&Path>, corrupt: Option<&str>, out: &mut dyn Write) -> CliResult {
    let cfg = match config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(input)?;
            serde_json::from_str::<GradcheckConfig>(&text)
                .map_err(|e| input(anyhow!("schema violation in {}: {e}", path.display())))?
        }
        None => GradcheckConfig::default(),
    };
    if cfg.n_sensors > MAX_SENSORS || cfg.d_model > MAX_D_MODEL {
        return Err(input(anyhow!(
            "gradcheck is limited to N <= {MAX_SENSORS} and d_model <= {MAX_D_MODEL} (got N = {}, d_model = {})",
            cfg.n_sensors,
            cfg.d_model
        )));
    }
    let model_cfg = cfg.model_config();
    model_cfg.validate().map_err(input)?;
    let mut model = Model::new(model_cfg).map_err(input)?;
    let (x, tf, y) = random_probe(&mut model, cfg.batch, cfg.seed.wrapping_add(1));

    let mut failing = Vec::new();
    let mut worst = 0.0f64;
    for mode in [NormMode::Eval, NormMode::Train] {
        let mut probe = model.clone();
        let (_, mut analytic) = probe
            .loss_and_grads(&x, tf.as_ref(), &y, mode)
            .map_err(runtime)?;
        if let Some(group) = corrupt {
            let names: Vec<String> = model.params().named().into_iter().map(|(n, _)| n).collect();
            let i = names
                .iter()
                .position(|n| n == group)
                .ok_or_else(|| input(anyhow!("no parameter group named {group:?}")))?;
            for v in analytic[i].data_mut() {
                *v = *v * 1.5 + 1e-3;
            }
        }
        let report = model
            .check_gradients_against(&x, tf.as_ref(), &y, mode, &analytic, cfg.step, cfg.tolerance)
            .map_err(runtime)?;
        let label = match mode {
            NormMode::Eval => "eval",
            NormMode::Train => "train",
        };
        for g in &report.groups {
            let verdict = if g.max_rel_err < cfg.tolerance { "ok" } else { "FAIL" };
            writeln!(
                out,
                "{label:<5} {:<28} {:>5} coords  max rel err {:.3e}  {verdict}",
                g.name, g.coordinates, g.max_rel_err
            )?;
            if verdict == "FAIL" {
                failing.push(format!("{} ({label})", g.name));
            }
        }
        worst = worst.max(report.max_rel_err());
    }
    writeln!(out, "max relative error {worst:.3e} (tolerance {:.0e})", cfg.tolerance)?;
    if failing.is_empty() {
        writeln!(out, "PASS")?;
        Ok(())
    } else {
        writeln!(out, "FAIL")?;
        Err(CliError::Verification(format!(
            "gradient check failed for {}",
            failing.join(", ")
        )))
    }
}
