//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "SXF1" | version: u16 | config digest: [u8; 32] | count: u32
//! count × ( name_len: u32 | name: utf-8 | rank: u32 | extents: u32 × rank | values: f32 × Π extents )
//! ```
//!
//! Optimizer moments use the reserved `__adam__/` name prefix and model
//! metadata the `__config__/` prefix.

use std::path::Path;

use super::params::{Param, ParamStore};
use crate::tensor::AdamState;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SXF1";
pub const VERSION: u16 = 1;
pub const ADAM_PREFIX: &str = "__adam__/";
pub const CONFIG_PREFIX: &str = "__config__/";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub digest: [u8; 32],
    pub entries: Vec<Param>,
}

impl Checkpoint {
    pub fn new(digest: [u8; 32]) -> Self {
        Self { digest, entries: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<f32>) {
        self.entries.push(Param { name: name.into(), shape: shape.to_vec(), data });
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.iter().find(|p| p.name == name)
    }

    pub fn add_params(&mut self, prefix: &str, params: &ParamStore) {
        for p in params.params() {
            self.push(format!("{prefix}{}", p.name), &p.shape, p.data.clone());
        }
    }

    /// Parameters stored under `prefix`, in file order, with the prefix
    /// stripped.
    pub fn params_with_prefix(&self, prefix: &str) -> ParamStore {
        let mut store = ParamStore::default();
        for p in &self.entries {
            if let Some(rest) = p.name.strip_prefix(prefix) {
                if !rest.starts_with("__") {
                    store.push(rest, &p.shape, p.data.clone());
                }
            }
        }
        store
    }

    pub fn add_adam(&mut self, prefix: &str, names: &ParamStore, state: &AdamState) {
        for (i, p) in names.params().iter().enumerate() {
            self.push(format!("{ADAM_PREFIX}{prefix}m/{}", p.name), &p.shape, state.first_moment[i].clone());
            self.push(format!("{ADAM_PREFIX}{prefix}v/{}", p.name), &p.shape, state.second_moment[i].clone());
        }
        self.push(format!("{ADAM_PREFIX}{prefix}step"), &[1], vec![state.step_count as f32]);
        self.push(
            format!("{ADAM_PREFIX}{prefix}hyper"),
            &[4],
            vec![state.beta1, state.beta2, state.epsilon, state.learning_rate],
        );
    }

    pub fn adam(&self, prefix: &str, names: &ParamStore) -> Result<AdamState> {
        let missing = |what: &str| Error::Format { what: "checkpoint", msg: format!("missing Adam entry {what}") };
        let mut st = AdamState::new(names.sizes(), 0.0);
        for (i, p) in names.params().iter().enumerate() {
            let m = format!("{ADAM_PREFIX}{prefix}m/{}", p.name);
            let v = format!("{ADAM_PREFIX}{prefix}v/{}", p.name);
            st.first_moment[i] = self.get(&m).ok_or_else(|| missing(&m))?.data.clone();
            st.second_moment[i] = self.get(&v).ok_or_else(|| missing(&v))?.data.clone();
        }
        let step = format!("{ADAM_PREFIX}{prefix}step");
        st.step_count = self.get(&step).ok_or_else(|| missing(&step))?.data[0] as u64;
        let hyper = format!("{ADAM_PREFIX}{prefix}hyper");
        let h = &self.get(&hyper).ok_or_else(|| missing(&hyper))?.data;
        (st.beta1, st.beta2, st.epsilon, st.learning_rate) = (h[0], h[1], h[2], h[3]);
        Ok(st)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.digest);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
            for &d in &e.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &e.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let digest: [u8; 32] = r.take(32)?.try_into().unwrap();
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| bad("entry name is not utf-8"))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let raw = r.take(numel.checked_mul(4).ok_or_else(|| bad("entry too large"))?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            entries.push(Param { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { digest, entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::pipeline::write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn bad(msg: &str) -> Error {
    Error::Format { what: "checkpoint", msg: msg.to_string() }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| bad("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
