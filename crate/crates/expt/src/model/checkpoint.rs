//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "EXPT"                      4-byte magic
//! u32 version                 currently 1
//! u32 tensor count
//! per tensor:
//!   u32 name length, then that many UTF-8 bytes
//!   u8  dtype tag             1 = f32, 2 = f64
//!   u32 ndim, then ndim u64 dims
//!   raw little-endian element data
//! u64 CRC-64/XZ of every preceding byte
//! ```
//!
//! Metadata rides along as zero-element tensors whose names carry the value,
//! e.g. `meta/step=500` or `meta/config_hash=ab12…`. Optimizer moments are
//! stored under `opt/m/<param>` and `opt/v/<param>`. Entry order is fixed
//! (parameters in registry order, then moments, then metadata), so saving
//! the same state twice produces byte-identical files.

use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::nncore::{OptimizerState, ParamRegistry, Real, Tensor};

const MAGIC: &[u8; 4] = b"EXPT";
const VERSION: u32 = 1;

/// Errors from reading or writing checkpoint files.
#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint file is truncated")]
    Truncated,
    #[error("bad checkpoint magic (expected \"EXPT\")")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("checkpoint CRC mismatch (stored {stored:#018x}, computed {computed:#018x})")]
    CrcMismatch { stored: u64, computed: u64 },
    #[error("unknown dtype tag {0}")]
    BadDtype(u8),
    #[error("unsupported tensor rank {0}")]
    BadRank(u32),
    #[error("tensor name is not valid UTF-8")]
    BadName,
    #[error("checkpoint is missing tensor {0:?}")]
    MissingTensor(String),
    #[error("tensor {name:?} has shape {got:?}, expected {want:?}")]
    ShapeMismatch {
        name: String,
        got: (usize, usize),
        want: (usize, usize),
    },
    #[error("tensor {name:?} is stored with dtype tag {got}, expected {want}")]
    DtypeMismatch { name: String, got: u8, want: u8 },
    #[error("checkpoint metadata {0:?} is missing or malformed")]
    BadMeta(String),
}

// CRC-64/XZ: reflected polynomial 0xC96C5795D7870F42, init and final xor all
// ones. Check value: crc64("123456789") = 0x995DC9BBDF1939FA.
const fn crc64_table() -> [u64; 256] {
    let mut table = [0u64; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = i as u64;
        let mut k = 0;
        while k < 8 {
            crc = if crc & 1 != 0 {
                (crc >> 1) ^ 0xC96C5795D7870F42
            } else {
                crc >> 1
            };
            k += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

static CRC64_TABLE: [u64; 256] = crc64_table();

/// CRC-64/XZ of `bytes`.
pub fn crc64(bytes: &[u8]) -> u64 {
    let mut crc = !0u64;
    for &b in bytes {
        crc = CRC64_TABLE[((crc ^ b as u64) & 0xFF) as usize] ^ (crc >> 8);
    }
    !crc
}

/// One named tensor in a checkpoint file.
#[derive(Clone, Debug)]
pub struct CheckpointEntry<T: Real> {
    pub name: String,
    pub value: Tensor<T>,
}

fn push_entry<T: Real>(buf: &mut Vec<u8>, name: &str, value: &Tensor<T>) {
    buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    buf.push(T::DTYPE);
    if value.len() == 0 {
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&0u64.to_le_bytes());
    } else {
        buf.extend_from_slice(&2u32.to_le_bytes());
        buf.extend_from_slice(&(value.rows() as u64).to_le_bytes());
        buf.extend_from_slice(&(value.cols() as u64).to_le_bytes());
    }
    for v in value.data() {
        v.write_le(buf);
    }
}

/// Serialize entries to `path`. The file is written to a sibling temp file
/// and renamed into place so a crash never leaves a half-written checkpoint.
pub fn save_entries<T: Real>(
    path: &Path,
    entries: &[CheckpointEntry<T>],
) -> Result<(), CheckpointError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for entry in entries {
        push_entry(&mut buf, &entry.name, &entry.value);
    }
    let crc = crc64(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());

    let tmp = path.with_extension("tmp");
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(&buf)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Truncated);
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Read and validate a checkpoint file, returning every entry. The stored
/// dtype of each tensor must match `T`.
pub fn load_entries<T: Real>(path: &Path) -> Result<Vec<CheckpointEntry<T>>, CheckpointError> {
    let bytes = fs::read(path)?;
    if bytes.len() < MAGIC.len() + 4 + 4 + 8 {
        return Err(CheckpointError::Truncated);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    let computed = crc64(body);
    if stored != computed {
        return Err(CheckpointError::CrcMismatch { stored, computed });
    }

    let mut cur = Cursor { bytes: body, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let count = cur.u32()? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| CheckpointError::BadName)?
            .to_owned();
        let dtype = cur.u8()?;
        if dtype != 1 && dtype != 2 {
            return Err(CheckpointError::BadDtype(dtype));
        }
        if dtype != T::DTYPE {
            return Err(CheckpointError::DtypeMismatch {
                name,
                got: dtype,
                want: T::DTYPE,
            });
        }
        let ndim = cur.u32()?;
        let (rows, cols) = match ndim {
            1 => {
                let n = cur.u64()? as usize;
                (usize::from(n > 0), n)
            }
            2 => {
                let r = cur.u64()? as usize;
                let c = cur.u64()? as usize;
                (r, c)
            }
            other => return Err(CheckpointError::BadRank(other)),
        };
        let raw = cur.take(rows * cols * T::BYTE_WIDTH)?;
        let data: Vec<T> = raw
            .chunks_exact(T::BYTE_WIDTH)
            .map(T::read_le)
            .collect();
        entries.push(CheckpointEntry {
            name,
            value: Tensor::from_vec(rows, cols, data),
        });
    }
    Ok(entries)
}

fn meta_entry<T: Real>(key: &str, value: &str) -> CheckpointEntry<T> {
    CheckpointEntry {
        name: format!("meta/{key}={value}"),
        value: Tensor::from_vec(0, 0, Vec::new()),
    }
}

/// Everything a model checkpoint carries besides the parameters themselves.
#[derive(Debug)]
pub struct LoadedCheckpoint<T: Real> {
    pub step: u64,
    pub model_kind: String,
    pub config_hash: String,
    pub optimizer: Option<OptimizerState<T>>,
}

/// Save the registry's parameters plus optimizer moments and metadata.
pub fn save_model_checkpoint<T: Real>(
    path: &Path,
    params: &ParamRegistry<T>,
    optimizer: Option<&OptimizerState<T>>,
    model_kind: &str,
    config_hash: &str,
    step: u64,
) -> Result<(), CheckpointError> {
    let mut entries: Vec<CheckpointEntry<T>> = params
        .iter()
        .map(|(_, name, value)| CheckpointEntry {
            name: name.to_owned(),
            value: value.clone(),
        })
        .collect();
    if let Some(state) = optimizer {
        let (m, v) = state.moments();
        for (prefix, moments) in [("opt/m/", m), ("opt/v/", v)] {
            for ((_, name, _), moment) in params.iter().zip(moments) {
                entries.push(CheckpointEntry {
                    name: format!("{prefix}{name}"),
                    value: moment.clone(),
                });
            }
        }
    }
    entries.push(meta_entry("config_hash", config_hash));
    entries.push(meta_entry("step", &step.to_string()));
    entries.push(meta_entry("model_kind", model_kind));
    save_entries(path, &entries)
}

/// Load a model checkpoint into `params`, which must already have the target
/// architecture registered (names and shapes are checked, values overwritten).
pub fn load_model_checkpoint<T: Real>(
    path: &Path,
    params: &mut ParamRegistry<T>,
) -> Result<LoadedCheckpoint<T>, CheckpointError> {
    let entries = load_entries::<T>(path)?;
    let mut tensors: HashMap<&str, &Tensor<T>> = HashMap::new();
    let mut meta: HashMap<&str, &str> = HashMap::new();
    for entry in &entries {
        if let Some(rest) = entry.name.strip_prefix("meta/") {
            if let Some((key, value)) = rest.split_once('=') {
                meta.insert(key, value);
            }
            continue;
        }
        tensors.insert(&entry.name, &entry.value);
    }

    let names: Vec<String> = params.iter().map(|(_, n, _)| n.to_owned()).collect();
    for (name, id) in names.iter().zip(params.ids().collect::<Vec<_>>()) {
        let stored = tensors
            .get(name.as_str())
            .ok_or_else(|| CheckpointError::MissingTensor(name.clone()))?;
        let slot = params.value_mut(id);
        if stored.shape() != slot.shape() {
            return Err(CheckpointError::ShapeMismatch {
                name: name.clone(),
                got: stored.shape(),
                want: slot.shape(),
            });
        }
        *slot = (*stored).clone();
    }

    let step: u64 = meta
        .get("step")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CheckpointError::BadMeta("step".into()))?;
    let model_kind = meta
        .get("model_kind")
        .ok_or_else(|| CheckpointError::BadMeta("model_kind".into()))?
        .to_string();
    let config_hash = meta
        .get("config_hash")
        .ok_or_else(|| CheckpointError::BadMeta("config_hash".into()))?
        .to_string();

    let has_moments = names
        .iter()
        .all(|n| tensors.contains_key(format!("opt/m/{n}").as_str()));
    let optimizer = if has_moments && !names.is_empty() {
        let grab = |prefix: &str| -> Result<Vec<Tensor<T>>, CheckpointError> {
            names
                .iter()
                .map(|n| {
                    let key = format!("{prefix}{n}");
                    tensors
                        .get(key.as_str())
                        .map(|t| (*t).clone())
                        .ok_or_else(|| CheckpointError::MissingTensor(key.clone()))
                })
                .collect()
        };
        Some(OptimizerState::from_parts(step, grab("opt/m/")?, grab("opt/v/")?))
    } else {
        None
    };

    Ok(LoadedCheckpoint {
        step,
        model_kind,
        config_hash,
        optimizer,
    })
}
