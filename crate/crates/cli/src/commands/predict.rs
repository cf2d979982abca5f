use std::io::Write;
use std::path::PathBuf;

use anyhow::anyhow;
use fptn::training::for_each_prediction;

use super::{load_checkpoint, load_series, parse_format, prepare_for_checkpoint, write_file};
use crate::error::{input, runtime, CliResult};

#[derive(Debug, Clone)]
pub struct PredictArgs {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    pub format: Option<String>,
    pub sensor: usize,
    pub window: usize,
    pub start: usize,
    pub horizon: usize,
    pub split: String,
    pub output: Option<PathBuf>,
}

pub fn run(args: &PredictArgs, out: &mut dyn Write) -> CliResult {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let series = load_series(&args.dataset, parse_format(args.format.as_deref(), &args.dataset)?)?;
    let data = prepare_for_checkpoint(&ckpt, &series)?;
    let cfg = ckpt.model.config();
    if args.sensor >= cfg.n_sensors {
        return Err(input(anyhow!(
            "sensor {} out of range (dataset has {} sensors)",
            args.sensor,
            cfg.n_sensors
        )));
    }
    if args.horizon == 0 || args.horizon > cfg.horizon {
        return Err(input(anyhow!("horizon {} outside 1..={}", args.horizon, cfg.horizon)));
    }
    let set = data
        .split_named(&args.split)
        .ok_or_else(|| input(anyhow!("unknown split {:?}", args.split)))?;
    if args.window == 0 || args.start + args.window > set.len() {
        return Err(input(anyhow!(
            "windows {}..{} exceed the {} split ({} windows)",
            args.start,
            args.start + args.window,
            args.split,
            set.len()
        )));
    }
    let part = set.slice(args.start, args.window);
    let (n, k, t) = (cfg.n_sensors, cfg.horizon, cfg.input_steps);
    let offset = args.sensor * k + args.horizon - 1;
    let mut csv = String::from("timestamp,ground_truth,prediction\n");
    let batch = ckpt.meta.batch_size.unwrap_or(64);
    for_each_prediction(&ckpt.model, &part, batch, |b, yhat, _y| {
        for (row, &i) in b.indices.iter().enumerate() {
            let step = part.start_step(i) + t + args.horizon - 1;
            let at = row * n * k + offset;
            csv.push_str(&format!(
                "{},{},{}\n",
                series.timestamp(step).format("%Y-%m-%dT%H:%M:%S"),
                series.value(step, args.sensor),
                yhat[at]
            ));
        }
    })
    .map_err(runtime)?;
    match &args.output {
        Some(path) => write_file(path, &csv),
        None => Ok(out.write_all(csv.as_bytes())?),
    }
}
