//! CSV (+ JSON sidecar) and binary dataset files.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! "FPTN" | version u16 | T_total u64 | N u64 | C u64 | T_total·N·C f64 values in (t, n, c) order
//!        | metadata length u64 | metadata JSON (UTF-8)
//! ```

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{DataError, RawSeries, Result, SeriesMeta};

pub const BINARY_MAGIC: &[u8; 4] = b"FPTN";
pub const BINARY_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Binary,
}

impl Format {
    /// `.csv` is CSV; anything else is read as binary.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Binary,
        }
    }
}

impl FromStr for Format {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "bin" | "binary" => Ok(Format::Binary),
            other => Err(DataError::Config(format!("unknown dataset format {other:?}"))),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// `data/pems04.csv` → `data/pems04.meta.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

pub fn load_raw(path: &Path, format: Format) -> Result<RawSeries> {
    match format {
        Format::Csv => read_csv(path),
        Format::Binary => read_binary(path),
    }
}

pub fn read_csv(path: &Path) -> Result<RawSeries> {
    let meta_path = sidecar_path(path);
    let meta_raw = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta: SeriesMeta = serde_json::from_str(&meta_raw)
        .map_err(|e| DataError::Metadata(format!("{}: {e}", meta_path.display())))?;
    let file = fs::File::open(path).map_err(io_err(path))?;
    parse_csv(file, meta)
}

/// Parse CSV content with header `sensor_0,…,sensor_{N−1}`, one row per step.
pub fn parse_csv(reader: impl Read, meta: SeriesMeta) -> Result<RawSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| DataError::Parse {
        line: 1,
        column: 0,
        message: e.to_string(),
    })?;
    let sensors = header.len();
    for (j, name) in header.iter().enumerate() {
        if name.trim() != format!("sensor_{j}") {
            return Err(DataError::Parse {
                line: 1,
                column: j + 1,
                message: format!("expected header sensor_{j}, found {name:?}"),
            });
        }
    }
    let mut values = Vec::new();
    let mut steps = 0usize;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| DataError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            column: 0,
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != sensors {
            return Err(DataError::Parse {
                line,
                column: rec.len().min(sensors) + 1,
                message: format!("row has {} cells, header declares {sensors} sensors", rec.len()),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            let cell = cell.trim();
            let v: f64 = cell.parse().map_err(|_| DataError::Parse {
                line,
                column: j + 1,
                message: format!("cell sensor_{j} is not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(DataError::Parse {
                    line,
                    column: j + 1,
                    message: format!("cell sensor_{j} is missing or non-finite: {cell:?}"),
                });
            }
            values.push(v);
        }
        steps += 1;
    }
    RawSeries::new(values, steps, sensors, meta)
}

/// Write the CSV and its sidecar metadata next to it.
pub fn write_csv(series: &RawSeries, path: &Path) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = (0..series.sensors()).map(|j| format!("sensor_{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for t in 0..series.steps() {
        let row: Vec<String> = series.row(t).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))?;
    let meta_path = sidecar_path(path);
    let meta = serde_json::to_string_pretty(series.meta()).expect("metadata serializes");
    fs::write(&meta_path, meta).map_err(io_err(&meta_path))
}

pub fn encode_binary(series: &RawSeries) -> Vec<u8> {
    let meta = serde_json::to_vec(series.meta()).expect("metadata serializes");
    let mut out = Vec::with_capacity(30 + series.values().len() * 8 + 8 + meta.len());
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    let (t, n, c) = series.shape();
    for d in [t, n, c] {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in series.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(DataError::Binary {
                offset: self.pos as u64,
                message: format!("truncated while reading {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_binary(buf: &[u8]) -> Result<RawSeries> {
    let mut cur = Cursor { buf, pos: 0 };
    if cur.take(4, "magic")? != BINARY_MAGIC {
        return Err(DataError::Binary {
            offset: 0,
            message: "missing FPTN magic bytes".into(),
        });
    }
    let version = u16::from_le_bytes(cur.take(2, "version")?.try_into().expect("2 bytes"));
    if version != BINARY_VERSION {
        return Err(DataError::Binary {
            offset: 4,
            message: format!("unsupported version {version}"),
        });
    }
    let steps = cur.u64("T_total")? as usize;
    let sensors = cur.u64("N")? as usize;
    let channels_at = cur.pos as u64;
    let channels = cur.u64("C")?;
    if channels != 1 {
        return Err(DataError::Binary {
            offset: channels_at,
            message: format!("only single-feature series are supported, C = {channels}"),
        });
    }
    let count = steps.checked_mul(sensors).ok_or_else(|| DataError::Binary {
        offset: 6,
        message: "T_total·N overflows".into(),
    })?;
    let body = cur.take(count.saturating_mul(8), "values")?;
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let meta_len = cur.u64("metadata length")? as usize;
    let meta_at = cur.pos as u64;
    let meta_bytes = cur.take(meta_len, "metadata")?;
    let meta: SeriesMeta = serde_json::from_slice(meta_bytes).map_err(|e| DataError::Binary {
        offset: meta_at,
        message: format!("metadata: {e}"),
    })?;
    if cur.pos != buf.len() {
        return Err(DataError::Binary {
            offset: cur.pos as u64,
            message: "trailing bytes after metadata".into(),
        });
    }
    RawSeries::new(values, steps, sensors, meta)
}

pub fn read_binary(path: &Path) -> Result<RawSeries> {
    let buf = fs::read(path).map_err(io_err(path))?;
    decode_binary(&buf)
}

pub fn write_binary(series: &RawSeries, path: &Path) -> Result<()> {
    fs::write(path, encode_binary(series)).map_err(io_err(path))
}

/// FNV-1a over the binary encoding.
pub fn checksum(series: &RawSeries) -> u64 {
    encode_binary(series)
        .iter()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
}
