use std::io::Write;
use std::path::Path;

use anyhow::Context;
use fptn::data::{checksum, write_binary};
use fptn::training::REFERENCE_DATASETS;

use super::{load_series, parse_format};
use crate::error::{runtime, CliResult};

pub fn run(input: &Path, format: Option<&str>, output: &Path, out: &mut dyn Write) -> CliResult {
    let series = load_series(input, parse_format(format, input)?)?;
    write_binary(&series, output)
        .with_context(|| format!("writing {}", output.display()))
        .map_err(runtime)?;
    let (steps, sensors) = (series.steps(), series.sensors());
    writeln!(out, "{sensors} sensors, {steps} steps")?;
    writeln!(
        out,
        "from {} to {} every {} min",
        series.timestamp(0),
        series.timestamp(steps - 1),
        series.meta().step_minutes
    )?;
    writeln!(out, "checksum {:016x}", checksum(&series))?;
    if let Some((name, _, _)) = REFERENCE_DATASETS
        .iter()
        .find(|&&(_, n, t)| n == sensors && t == steps)
    {
        writeln!(out, "shape matches {name}")?;
    }
    Ok(())
}
