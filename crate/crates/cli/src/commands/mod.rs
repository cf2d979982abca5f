pub mod ablation;
pub mod evaluate;
pub mod gradcheck;
pub mod ingest;
pub mod predict;
pub mod sweep;
pub mod synth;
pub mod train;

use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use anyhow::Context;
use fptn::data::{load_raw, Format, PreparedData, RawSeries};
use fptn::model::Checkpoint;

use crate::error::{input, runtime, CliResult};

pub(crate) fn parse_format(flag: Option<&str>, path: &Path) -> CliResult<Format> {
    match flag {
        Some(f) => f.parse().map_err(input),
        None => Ok(Format::from_path(path)),
    }
}

pub(crate) fn load_series(path: &Path, format: Format) -> CliResult<RawSeries> {
    load_raw(path, format)
        .with_context(|| format!("loading dataset {}", path.display()))
        .map_err(input)
}

/// Dataset label: the metadata name, else the file stem.
pub(crate) fn dataset_name(series: &RawSeries, path: &Path) -> String {
    if !series.meta().name.is_empty() {
        return series.meta().name.clone();
    }
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub(crate) fn load_checkpoint(path: &Path) -> CliResult<Checkpoint<f64>> {
    Checkpoint::load(path)
        .with_context(|| format!("loading checkpoint {}", path.display()))
        .map_err(input)
}

/// Rebuild the checkpoint's windows and normalization over `series`.
pub(crate) fn prepare_for_checkpoint(ckpt: &Checkpoint<f64>, series: &RawSeries) -> CliResult<PreparedData> {
    let cfg = ckpt.model.config();
    if series.sensors() != cfg.n_sensors {
        return Err(input(anyhow::anyhow!(
            "dataset has N = {} sensors but the checkpoint was trained with N = {}",
            series.sensors(),
            cfg.n_sensors
        )));
    }
    let stats = ckpt
        .meta
        .zscore
        .ok_or_else(|| input(anyhow::anyhow!("checkpoint carries no normalization statistics")))?;
    let ratio = ckpt.meta.split.unwrap_or_default();
    PreparedData::with_stats(series, cfg.input_steps, cfg.horizon, ratio, stats).map_err(input)
}

/// Exclusive ownership of a run directory for the lifetime of the guard.
pub(crate) struct RunLock {
    path: PathBuf,
    _file: File,
}

impl RunLock {
    pub(crate) fn acquire(dir: &Path) -> CliResult<RunLock> {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating run directory {}", dir.display()))
            .map_err(input)?;
        let path = dir.join(".fptn.lock");
        let file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .with_context(|| {
                format!(
                    "run directory {} is in use (remove {} if no run is active)",
                    dir.display(),
                    path.display()
                )
            })
            .map_err(input)?;
        Ok(RunLock { path, _file: file })
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> CliResult {
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime)
}
