use std::io::Write;
use std::path::Path;

use anyhow::anyhow;
use fptn::data::{write_binary, write_csv, Format};
use fptn::synthetic::{generate, SyntheticSpec};

use super::parse_format;
use crate::error::{input, runtime, CliResult};

#[allow(clippy::too_many_arguments)]
pub fn run(
    preset: &str,
    sensors: usize,
    steps: usize,
    noise: f64,
    seed: u64,
    weekend_scale: Option<f64>,
    output: &Path,
    format: Option<&str>,
    out: &mut dyn Write,
) -> CliResult {
    let mut spec = match preset {
        "two-phase" => SyntheticSpec::two_phase(sensors, steps, noise, seed),
        "diverse" => SyntheticSpec::diverse(sensors, steps, noise, seed),
        other => return Err(input(anyhow!("unknown preset {other:?} (expected two-phase or diverse)"))),
    };
    if let Some(w) = weekend_scale {
        spec.weekend_scale = w;
    }
    let series = generate(&spec).map_err(input)?;
    match parse_format(format, output)? {
        Format::Csv => write_csv(&series, output),
        Format::Binary => write_binary(&series, output),
    }
    .map_err(runtime)?;
    writeln!(out, "{} sensors, {} steps -> {}", series.sensors(), series.steps(), output.display())?;
    Ok(())
}
