use std::io::Write;
use std::path::Path;

use anyhow::anyhow;
use fptn::training::evaluate_split;

use super::{load_checkpoint, load_series, parse_format, prepare_for_checkpoint};
use crate::error::{input, runtime, CliResult};

pub fn run(checkpoint: &Path, dataset: &Path, format: Option<&str>, split: &str, out: &mut dyn Write) -> CliResult {
    let ckpt = load_checkpoint(checkpoint)?;
    let series = load_series(dataset, parse_format(format, dataset)?)?;
    let data = prepare_for_checkpoint(&ckpt, &series)?;
    let set = data
        .split_named(split)
        .ok_or_else(|| input(anyhow!("unknown split {split:?} (expected train, val or test)")))?;
    let batch = ckpt.meta.batch_size.unwrap_or(64);
    let threshold = ckpt.meta.mape_threshold.unwrap_or(fptn::training::DEFAULT_MAPE_THRESHOLD);
    let report = evaluate_split(&ckpt.model, set, batch, threshold).map_err(runtime)?;
    writeln!(out, "{}", serde_json::to_string_pretty(&report).map_err(runtime)?)?;
    Ok(())
}
