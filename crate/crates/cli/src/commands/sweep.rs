use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context};
use fptn::data::PreparedData;
use fptn::training::{grid_search, sweep_csv, GridSpec};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{load_series, write_file, RunLock};
use crate::config::RunConfig;
use crate::error::{input, runtime, CliResult};

/// Grid file: lists of candidate values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub d_model: Vec<usize>,
    #[serde(rename = "L")]
    pub layers: Vec<usize>,
    #[serde(rename = "h")]
    pub heads: Vec<usize>,
    pub lr: Vec<f64>,
}

impl From<GridFile> for GridSpec {
    fn from(g: GridFile) -> Self {
        GridSpec {
            d_model: g.d_model,
            layers: g.layers,
            heads: g.heads,
            lr: g.lr,
        }
    }
}

pub fn run(config: &Path, grid: &Path, out: &mut dyn Write) -> CliResult {
    let cfg = RunConfig::load(config).map_err(input)?;
    let text = fs::read_to_string(grid)
        .with_context(|| format!("reading {}", grid.display()))
        .map_err(input)?;
    let spec: GridSpec = serde_json::from_str::<GridFile>(&text)
        .map_err(|e| input(anyhow!("schema violation in {}: {e}", grid.display())))?
        .into();
    let series = load_series(&cfg.dataset.path, cfg.format())?;
    let base = cfg.model_config(series.sensors());
    let combos = spec.combinations();
    if combos.is_empty() {
        return Err(input(anyhow!("grid {} has an empty axis", grid.display())));
    }
    for &(d, l, h, lr) in &combos {
        let c = fptn::model::ModelConfig { d_model: d, layers: l, heads: h, ..base.clone() };
        c.validate()
            .map_err(|e| input(anyhow!("grid point d_model={d}, L={l}, h={h}, lr={lr}: {e}")))?;
        if !(lr > 0.0) {
            return Err(input(anyhow!("grid learning rate {lr} must be positive")));
        }
    }
    let data = PreparedData::new(&series, base.input_steps, base.horizon, cfg.split_ratio().map_err(input)?)
        .map_err(input)?;
    let _lock = RunLock::acquire(&cfg.output.dir)?;
    eprintln!("sweeping {} grid points", combos.len());
    let rows = grid_search::<f64>(&base, &spec, &data, &cfg.train_config()).map_err(runtime)?;
    let csv = sweep_csv(&rows);
    write_file(&cfg.output.dir.join("sweep.csv"), &csv)?;
    out.write_all(csv.as_bytes())?;
    Ok(())
}
