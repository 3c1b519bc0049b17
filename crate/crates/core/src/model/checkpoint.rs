//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "DMIDASCK"
//! version      u32
//! header_len   u64
//! header       header_len bytes of UTF-8 JSON {"model": ModelSpec, "meta": {...}}
//! n_tensors    u64
//! per tensor:  name_len u32, name (UTF-8), role u8 (0 weight, 1 bias),
//!              rows u64, cols u64, rows·cols f64 values (row-major)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelSpec;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, ParamRole, ParameterStore};

const MAGIC: &[u8; 8] = b"DMIDASCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub params: ParameterStore,
    /// Free-form metadata (normalization, seed, ...).
    pub meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelSpec,
    meta: serde_json::Value,
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let header = serde_json::to_vec(&Header {
        model: checkpoint.spec.clone(),
        meta: checkpoint.meta.clone(),
    })?;
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    buf.extend_from_slice(&(checkpoint.params.len() as u64).to_le_bytes());
    for (name, p) in checkpoint.params.iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(match p.role {
            ParamRole::Weight => 0,
            ParamRole::Bias => 1,
        });
        buf.extend_from_slice(&(p.value.rows() as u64).to_le_bytes());
        buf.extend_from_slice(&(p.value.cols() as u64).to_le_bytes());
        for v in p.value.as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("length overflow".into()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint(format!("{} is not a checkpoint", path.display())));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let header_len = r.len()?;
    let header: Header = serde_json::from_slice(r.take(header_len)?)?;
    let n = r.len()?;
    let mut params = ParameterStore::new();
    for _ in 0..n {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let role = match r.take(1)?[0] {
            0 => ParamRole::Weight,
            1 => ParamRole::Bias,
            other => return Err(Error::Checkpoint(format!("unknown role tag {other}"))),
        };
        let rows = r.len()?;
        let cols = r.len()?;
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Checkpoint("tensor size overflow".into()))?;
        let raw = r.take(count.checked_mul(8).ok_or_else(|| Error::Checkpoint("tensor size overflow".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.insert(name, role, Matrix::from_vec(rows, cols, data)?)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }
    Ok(Checkpoint {
        spec: header.model,
        params,
        meta: header.meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Model, ModelConfig};

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = ModelSpec::Stacked(ModelConfig::dmidas(24, 8, 2, 1, 0.5, &[6]));
        let (_, params) = Model::build(spec.clone(), 3).unwrap();
        let ckpt = Checkpoint {
            spec,
            params,
            meta: serde_json::json!({"normalization": "none"}),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("member_0");
        save_checkpoint(&path, &ckpt).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ckpt);

        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
    }
}
