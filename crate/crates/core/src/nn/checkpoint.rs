//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "NEATCKPT"                     8 bytes
//! version                        u32
//! metadata length                u64, then that many bytes of UTF-8
//!                                `key=value\n` lines, keys sorted
//! repeated until EOF:
//!   name length u64, name bytes, rank u64, dims u64 x rank,
//!   values f64 x product(dims)
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use super::param::Parameterized;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NEATCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint does not match model: {0}")]
    Mismatch(String),
    #[error("missing metadata key `{0}`")]
    MissingMetadata(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub metadata: BTreeMap<String, String>,
    pub params: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
}

impl Checkpoint {
    pub fn new() -> Checkpoint {
        Checkpoint::default()
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Checkpoint {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    pub fn meta(&self, key: &str) -> Result<&str, CheckpointError> {
        self.metadata
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| CheckpointError::MissingMetadata(key.to_string()))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CheckpointError> {
        self.meta(key)?
            .parse()
            .map_err(|_| CheckpointError::Corrupt(format!("metadata `{key}` does not parse")))
    }

    pub fn add_model<M: Parameterized + ?Sized>(&mut self, model: &M) {
        for p in model.params() {
            self.params.insert(p.name.clone(), (p.shape.clone(), p.value.clone()));
        }
    }

    /// Copies every model parameter's value out of the checkpoint; extra
    /// checkpoint entries are allowed (joint checkpoints hold several models).
    pub fn load_into<M: Parameterized + ?Sized>(&self, model: &mut M) -> Result<(), CheckpointError> {
        for p in model.params_mut() {
            let (shape, values) = self
                .params
                .get(&p.name)
                .ok_or_else(|| CheckpointError::Mismatch(format!("missing parameter `{}`", p.name)))?;
            if *shape != p.shape {
                return Err(CheckpointError::Mismatch(format!(
                    "parameter `{}` has shape {:?}, model expects {:?}",
                    p.name, shape, p.shape
                )));
            }
            p.value.copy_from_slice(values);
            p.zero_grad();
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let mut meta = String::new();
        for (k, v) in &self.metadata {
            debug_assert!(!k.contains('=') && !k.contains('\n') && !v.contains('\n'));
            meta.push_str(k);
            meta.push('=');
            meta.push_str(v);
            meta.push('\n');
        }
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        for (name, (shape, values)) in &self.params {
            out.extend_from_slice(&(name.len() as u64).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(shape.len() as u64).to_le_bytes());
            for &d in shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(CheckpointError::Corrupt("bad magic".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let meta_len = r.u64()? as usize;
        let meta = std::str::from_utf8(r.take(meta_len)?)
            .map_err(|_| CheckpointError::Corrupt("metadata is not UTF-8".into()))?;
        let mut metadata = BTreeMap::new();
        for line in meta.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CheckpointError::Corrupt(format!("bad metadata line `{line}`")))?;
            metadata.insert(k.to_string(), v.to_string());
        }
        let mut params = BTreeMap::new();
        while r.pos < bytes.len() {
            let name_len = r.u64()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| CheckpointError::Corrupt("parameter name is not UTF-8".into()))?
                .to_string();
            let rank = r.u64()? as usize;
            if rank > 8 {
                return Err(CheckpointError::Corrupt(format!("implausible rank {rank}")));
            }
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let count: usize = shape.iter().product();
            let raw = r.take(count.checked_mul(8).ok_or_else(|| CheckpointError::Corrupt("size overflow".into()))?)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            params.insert(name, (shape, values));
        }
        Ok(Checkpoint { metadata, params })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CheckpointError::Corrupt("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dense;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn save_load_save_is_byte_identical() {
        let d = Dense::new("layer", 4, 3, &mut ChaCha8Rng::seed_from_u64(1));
        let mut ck = Checkpoint::new().with_meta("dataset_id", "desk").with_meta("tau", 0.5);
        ck.add_model(&d);
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
        let mut e = Dense::new("layer", 4, 3, &mut ChaCha8Rng::seed_from_u64(2));
        back.load_into(&mut e).unwrap();
        assert_eq!(e, d);
    }

    #[test]
    fn rejects_corruption_and_versions() {
        let ck = Checkpoint::new().with_meta("a", 1);
        let mut bytes = ck.to_bytes();
        bytes[8] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(CheckpointError::VersionMismatch { found: 9, .. })
        ));
        assert!(matches!(Checkpoint::from_bytes(b"NOTACKPT"), Err(CheckpointError::Corrupt(_))));
        let mut d = Dense::new("x", 2, 2, &mut ChaCha8Rng::seed_from_u64(0));
        let mut ck = Checkpoint::new();
        ck.add_model(&d);
        let mut bytes = ck.to_bytes();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(CheckpointError::Corrupt(_))));
        let mut other = Dense::new("x", 3, 2, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(ck.load_into(&mut other), Err(CheckpointError::Mismatch(_))));
        assert!(ck.load_into(&mut d).is_ok());
    }
}
