//! Versioned binary checkpoint container: named f64 tensors plus the config
//! hash that produced them. Bit-exact round trip (little-endian f64 payload).
//!
//! Stage-2 checkpoints additionally record the SHA-256 of the frozen base
//! parameter section, so stale or mismatched base policies are refused.

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::NetError;

const MAGIC: &[u8; 4] = b"KTCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Tensors whose name starts with this prefix form the frozen-base section.
pub const BASE_PREFIX: &str = "base/";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointKind {
    Stage1,
    Stage2,
}

#[derive(Debug, Clone)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub config_hash: String,
    /// SHA-256 (hex) of the base section; empty for stage-1 checkpoints.
    pub base_sha: String,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new(kind: CheckpointKind, config_hash: &str) -> Self {
        Checkpoint { kind, config_hash: config_hash.to_string(), base_sha: String::new(), tensors: Vec::new() }
    }

    pub fn push(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len(), "{name}: shape/data mismatch");
        self.tensors.push(Tensor { name: name.to_string(), shape, data });
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, NetError> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| NetError::MissingTensor(name.to_string()))
    }

    pub fn scalar(&self, name: &str) -> Result<f64, NetError> {
        Ok(self.get(name)?.data[0])
    }

    /// SHA-256 over the serialized bytes of the base section, in tensor order.
    pub fn base_params_sha(&self) -> String {
        let mut hasher = Sha256::new();
        for t in self.tensors.iter().filter(|t| t.name.starts_with(BASE_PREFIX)) {
            hasher.update(t.name.as_bytes());
            for d in &t.shape {
                hasher.update((*d as u64).to_le_bytes());
            }
            for v in &t.data {
                hasher.update(v.to_le_bytes());
            }
        }
        hex(&hasher.finalize())
    }

    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.push(match self.kind {
            CheckpointKind::Stage1 => 1,
            CheckpointKind::Stage2 => 2,
        });
        write_str(&mut buf, &self.config_hash);
        write_str(&mut buf, &self.base_sha);
        buf.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            write_str(&mut buf, &t.name);
            buf.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for d in &t.shape {
                buf.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in &t.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut r = Reader { bytes: &bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(NetError::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(NetError::Format(format!("unsupported checkpoint version {version}")));
        }
        let kind = match r.u8()? {
            1 => CheckpointKind::Stage1,
            2 => CheckpointKind::Stage2,
            k => return Err(NetError::Format(format!("unknown checkpoint kind {k}"))),
        };
        let config_hash = r.string()?;
        let base_sha = r.string()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            let len: usize = shape.iter().product();
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                data.push(r.f64()?);
            }
            tensors.push(Tensor { name, shape, data });
        }
        Ok(Checkpoint { kind, config_hash, base_sha, tensors })
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        if self.pos + n > self.bytes.len() {
            return Err(NetError::Format(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NetError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NetError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, NetError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, NetError> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| NetError::Format("bad utf8".into()))
    }
}
