use std::io::Write;
use std::path::Path;

use fptn::data::PreparedData;
use fptn::training::{run_ablation, AblationRow};

use super::{load_series, write_file, RunLock};
use crate::config::RunConfig;
use crate::error::{input, runtime, CliResult};

pub const ABLATION_HEADER: &str = "rank,time_embedding,positional_mode,seed,val_mae,test_mae,test_rmse,test_mape,\
reference_mae,reference_rmse,reference_mape";

/// Rows keep the fixed variant order; `rank` orders them by test MAE.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[a].test.mae.total_cmp(&rows[b].test.mae));
    let mut rank = vec![0; rows.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }
    let mut out = String::from(ABLATION_HEADER);
    out.push('\n');
    for (i, r) in rows.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            rank[i],
            if r.time_embedding { "on" } else { "off" },
            r.positional,
            r.seed,
            r.val_mae,
            r.test.mae,
            r.test.rmse,
            r.test.mape.map(|v| v.to_string()).unwrap_or_default(),
            r.reference.mae,
            r.reference.rmse,
            r.reference.mape
        ));
    }
    out
}

pub fn run(config: &Path, seeds: &[u64], out: &mut dyn Write) -> CliResult {
    let cfg = RunConfig::load(config).map_err(input)?;
    let series = load_series(&cfg.dataset.path, cfg.format())?;
    let base = cfg.model_config(series.sensors());
    base.validate().map_err(input)?;
    let data = PreparedData::new(&series, base.input_steps, base.horizon, cfg.split_ratio().map_err(input)?)
        .map_err(input)?;
    let seeds = if seeds.is_empty() { vec![base.seed] } else { seeds.to_vec() };
    let _lock = RunLock::acquire(&cfg.output.dir)?;
    eprintln!("ablation: 6 variants x {} seed(s)", seeds.len());
    let rows = run_ablation::<f64>(&base, &data, &cfg.train_config(), &seeds).map_err(runtime)?;
    let csv = ablation_csv(&rows);
    write_file(&cfg.output.dir.join("ablation.csv"), &csv)?;
    out.write_all(csv.as_bytes())?;
    Ok(())
}
