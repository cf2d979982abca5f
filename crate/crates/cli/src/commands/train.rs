use std::io::Write;
use std::path::Path;

use anyhow::anyhow;
use fptn::data::PreparedData;
use fptn::model::{Checkpoint, CheckpointMeta};
use fptn::synthetic::last_value_metrics;
use fptn::training::{evaluate_split, reference_result, MetricsReport, StopReason, Trainer};
use fptn::Model;
use serde_json::json;

use super::{dataset_name, load_series, write_file, RunLock};
use crate::config::RunConfig;
use crate::error::{input, runtime, CliError, CliResult};

/// The published protocol: 400 epochs, batch 64, patience 40, 12 in / 12 out, 6:2:2.
fn apply_full_protocol(cfg: &mut RunConfig) {
    cfg.train.epochs = 400;
    cfg.train.batch_size = 64;
    cfg.train.patience = 40;
    cfg.model.input_steps = 12;
    cfg.model.horizon = 12;
    cfg.dataset.split_ratio = "6:2:2".into();
}

fn comparison(name: &str, report: &MetricsReport) -> serde_json::Value {
    match reference_result(name) {
        Some(r) => json!({
            "dataset": name,
            "reference": {"mae": r.mae, "rmse": r.rmse, "mape": r.mape},
            "measured": {"mae": report.mae, "rmse": report.rmse, "mape": report.mape},
            "delta": {
                "mae": report.mae - r.mae,
                "rmse": report.rmse - r.rmse,
                "mape": report.mape.map(|m| m - r.mape),
            },
        }),
        None => json!({"dataset": name, "reference": null}),
    }
}

pub fn run(config_path: &Path, full: bool, out: &mut dyn Write) -> CliResult {
    let mut cfg = RunConfig::load(config_path).map_err(input)?;
    if full {
        apply_full_protocol(&mut cfg);
        cfg.validate().map_err(input)?;
    }
    let series = load_series(&cfg.dataset.path, cfg.format())?;
    let ratio = cfg.split_ratio().map_err(input)?;
    let model_cfg = cfg.model_config(series.sensors());
    model_cfg.validate().map_err(input)?;
    let train_cfg = cfg.train_config();
    let data = PreparedData::new(&series, model_cfg.input_steps, model_cfg.horizon, ratio).map_err(input)?;
    let name = dataset_name(&series, &cfg.dataset.path);

    let _lock = RunLock::acquire(&cfg.output.dir)?;
    eprintln!(
        "{name}: {} sensors, {} / {} / {} windows, {} parameters",
        series.sensors(),
        data.train.len(),
        data.val.len(),
        data.test.len(),
        model_cfg.parameter_count()
    );

    let model = Model::new(model_cfg).map_err(input)?;
    let trainer = Trainer::new(model, train_cfg.clone()).map_err(input)?;
    let (batch, threshold) = (train_cfg.batch_size, train_cfg.mape_threshold);
    let outcome = trainer
        .fit_with(&data.train, |epoch, model| {
            let report = evaluate_split(model, &data.val, batch, threshold)?;
            eprintln!("epoch {epoch:>4}  val MAE {:.4}  RMSE {:.4}", report.mae, report.rmse);
            Ok(report)
        })
        .map_err(runtime)?;

    let dir = &cfg.output.dir;
    outcome
        .history
        .write_csv(&dir.join("history.csv"))
        .map_err(runtime)?;
    let meta = CheckpointMeta {
        zscore: Some(data.stats),
        split: Some(ratio),
        batch_size: Some(batch),
        dataset: Some(name.clone()),
        epoch: outcome.best_epoch,
        mape_threshold: Some(threshold),
    };
    Checkpoint::new(outcome.model.clone(), meta)
        .save(&dir.join("best.ckpt"))
        .map_err(runtime)?;
    eprintln!("stopped: {}", outcome.stop);
    if let StopReason::Diverged { .. } = outcome.stop {
        if outcome.best_epoch.is_none() {
            return Err(CliError::Runtime(anyhow!("training diverged before the first epoch finished")));
        }
    }

    let report = evaluate_split(&outcome.model, &data.test, batch, threshold).map_err(runtime)?;
    let baseline = last_value_metrics(&data.test, threshold);
    let mut summary = json!({
        "dataset": name,
        "best_epoch": outcome.best_epoch,
        "epochs_run": outcome.history.len(),
        "stop": outcome.stop,
        "test": report,
        "last_value_baseline": baseline,
    });
    if full {
        let cmp = comparison(&name, &report);
        eprintln!("reference comparison: {cmp}");
        summary["reference_comparison"] = cmp;
    }
    let report_json = serde_json::to_string_pretty(&report).map_err(runtime)?;
    write_file(&dir.join("metrics.json"), &(report_json.clone() + "\n"))?;
    write_file(
        &dir.join("summary.json"),
        &(serde_json::to_string_pretty(&summary).map_err(runtime)? + "\n"),
    )?;
    writeln!(out, "{report_json}")?;
    if let StopReason::Diverged { reason, .. } = &outcome.stop {
        return Err(CliError::Runtime(anyhow!("training diverged: {reason}")));
    }
    Ok(())
}
