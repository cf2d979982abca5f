//! Self-describing checkpoint container.
//!
//! Layout, integers little-endian:
//!
//! ```text
//! "FPTNCKPT" | version u16 | header length u64 | header JSON
//! | array count u32 | per array: name length u16, name, rank u8, extents u64 × rank, f64 values
//! ```
//!
//! The header carries the [`ModelConfig`], the scalar type tag and
//! [`CheckpointMeta`]. Arrays hold every parameter plus the batch-norm running
//! statistics that have been initialized. Values are widened to `f64`, so both
//! `f32` and `f64` models round-trip bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::ModelConfig;
use super::network::Fptn;
use crate::data::{NormStats, SplitRatio};
use crate::error::TensorError;
use crate::scalar::Scalar;
use crate::tape::{BatchNormState, RunningStats};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FPTNCKPT";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot access {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error(transparent)]
    Model(#[from] TensorError),
}

/// Pipeline settings needed to reproduce evaluation from a checkpoint alone.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    #[serde(default)]
    pub zscore: Option<NormStats>,
    #[serde(default)]
    pub split: Option<SplitRatio>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub dataset: Option<String>,
    #[serde(default)]
    pub epoch: Option<usize>,
    #[serde(default)]
    pub mape_threshold: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    scalar: String,
    config: ModelConfig,
    meta: CheckpointMeta,
}

#[derive(Debug, Clone)]
pub struct Checkpoint<S> {
    pub model: Fptn<S>,
    pub meta: CheckpointMeta,
}

fn norm_arrays<S: Scalar>(model: &Fptn<S>) -> Vec<(String, Vec<usize>, Vec<S>)> {
    let mut out = Vec::new();
    for (l, pair) in model.norms().iter().enumerate() {
        for (j, st) in pair.iter().enumerate() {
            if let Some(run) = &st.running {
                let d = run.mean.len();
                out.push((format!("layer{l}.norm{}.running_mean", j + 1), vec![d], run.mean.clone()));
                out.push((format!("layer{l}.norm{}.running_var", j + 1), vec![d], run.var.clone()));
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len().saturating_sub(self.pos) < n {
            return Err(CheckpointError::Format {
                offset: self.pos,
                message: "unexpected end of file".into(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, CheckpointError> {
        Err(CheckpointError::Format {
            offset: self.pos,
            message: message.into(),
        })
    }
}

impl<S: Scalar> Checkpoint<S> {
    pub fn new(model: Fptn<S>, meta: CheckpointMeta) -> Self {
        Checkpoint { model, meta }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            scalar: S::NAME.to_string(),
            config: self.model.config().clone(),
            meta: self.meta.clone(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut arrays: Vec<(String, Vec<usize>, Vec<S>)> = self
            .model
            .params()
            .named()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec(), t.data().to_vec()))
            .collect();
        arrays.extend(norm_arrays(&self.model));

        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
        for (name, shape, data) in arrays {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(shape.len() as u8);
            for d in shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in data {
                out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(CheckpointError::Format {
                offset: 0,
                message: "not a checkpoint (bad magic)".into(),
            });
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return r.fail(format!("unsupported checkpoint version {version}"));
        }
        let hlen = r.u64()? as usize;
        let hbytes = r.take(hlen)?;
        let header: Header = serde_json::from_slice(hbytes).map_err(|e| CheckpointError::Format {
            offset: 18,
            message: format!("header: {e}"),
        })?;
        if header.scalar != S::NAME {
            return r.fail(format!(
                "checkpoint holds {} parameters, loader expects {}",
                header.scalar,
                S::NAME
            ));
        }

        let mut model = Fptn::<S>::new(header.config.clone())?;
        let expected: Vec<(String, Vec<usize>)> = model
            .params()
            .named()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        let mut params: Vec<Option<Tensor<S>>> = vec![None; expected.len()];
        let layers = header.config.layers;
        let d = header.config.d_model;
        let mut norms: Vec<[BatchNormState<S>; 2]> = (0..layers)
            .map(|_| [BatchNormState::default(), BatchNormState::default()])
            .collect();
        let mut run_parts: Vec<[(Option<Vec<S>>, Option<Vec<S>>); 2]> =
            (0..layers).map(|_| [(None, None), (None, None)]).collect();

        let count = r.u32()?;
        for _ in 0..count {
            let nlen = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|_| CheckpointError::Format {
                    offset: r.pos,
                    message: "array name is not UTF-8".into(),
                })?
                .to_string();
            let rank = r.u8()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let len: usize = shape.iter().product();
            let raw = r.take(len.checked_mul(8).ok_or_else(|| CheckpointError::Format {
                offset: r.pos,
                message: "array too large".into(),
            })?)?;
            let data: Vec<S> = raw
                .chunks_exact(8)
                .map(|c| S::from_f64_lossy(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
                .collect();

            if let Some(i) = expected.iter().position(|(n, _)| *n == name) {
                if expected[i].1 != shape {
                    return r.fail(format!(
                        "array {name} has shape {shape:?}, config implies {:?}",
                        expected[i].1
                    ));
                }
                params[i] = Some(Tensor::new(&shape, data)?);
            } else if let Some((l, j, is_mean)) = parse_norm_name(&name) {
                if l >= layers || shape != [d] {
                    return r.fail(format!("unexpected normalization array {name} {shape:?}"));
                }
                let slot = &mut run_parts[l][j];
                if is_mean {
                    slot.0 = Some(data);
                } else {
                    slot.1 = Some(data);
                }
            } else {
                return r.fail(format!("unknown array {name}"));
            }
        }
        if r.pos != buf.len() {
            return r.fail("trailing bytes");
        }

        let mut values = Vec::with_capacity(params.len());
        for (p, (name, _)) in params.into_iter().zip(&expected) {
            values.push(p.ok_or_else(|| CheckpointError::Format {
                offset: buf.len(),
                message: format!("missing array {name}"),
            })?);
        }
        model.params_mut().assign(&values)?;
        for (pair, parts) in norms.iter_mut().zip(run_parts) {
            for (st, part) in pair.iter_mut().zip(parts) {
                match part {
                    (Some(mean), Some(var)) => st.running = Some(RunningStats { mean, var }),
                    (None, None) => {}
                    _ => {
                        return Err(CheckpointError::Format {
                            offset: buf.len(),
                            message: "running mean without variance (or the reverse)".into(),
                        })
                    }
                }
            }
        }
        let params = model.params().clone();
        let model = Fptn::from_parts(header.config, params, norms)?;
        Ok(Checkpoint {
            model,
            meta: header.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes()).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let buf = fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&buf)
    }
}

/// `layer{l}.norm{1|2}.running_{mean|var}` → `(l, 0|1, is_mean)`.
fn parse_norm_name(name: &str) -> Option<(usize, usize, bool)> {
    let rest = name.strip_prefix("layer")?;
    let (l, rest) = rest.split_once('.')?;
    let (norm, field) = rest.split_once('.')?;
    let j = match norm {
        "norm1" => 0,
        "norm2" => 1,
        _ => return None,
    };
    let is_mean = match field {
        "running_mean" => true,
        "running_var" => false,
        _ => return None,
    };
    Some((l.parse().ok()?, j, is_mean))
}
