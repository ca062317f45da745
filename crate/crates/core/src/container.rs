//! Binary container for named `f32` arrays, used for checkpoints and for
//! external feature-extractor weights.
//!
//! All integers are little-endian:
//!
//! ```text
//! magic            4 bytes  "CIDN"
//! format version   u32      currently 1
//! header count     u32
//!   key length     u16
//!   key            UTF-8
//!   value          u64
//! array count      u32
//!   name length    u16
//!   name           UTF-8
//!   dtype          u8       0 = f32
//!   rank           u8
//!   dims           rank x u32
//!   data           numel x f32
//! ```
//!
//! Header entries and arrays are written in lexicographic key order, so the
//! same contents always serialize to the same bytes.

use std::collections::BTreeMap;
use std::path::Path;

use cidn_tensor::Tensor;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CIDN";
pub const FORMAT_VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub header: BTreeMap<String, u64>,
    pub arrays: BTreeMap<String, Tensor<f32>>,
}

impl Container {
    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: usize = self.arrays.values().map(|t| t.numel() * 4 + 64).sum();
        let mut out = Vec::with_capacity(payload + 1024);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.header.len() as u32).to_le_bytes());
        for (key, value) in &self.header {
            write_name(&mut out, key);
            out.extend_from_slice(&value.to_le_bytes());
        }
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for (name, t) in &self.arrays {
            write_name(&mut out, name);
            out.push(DTYPE_F32);
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint(
                "not a CIDN container (bad magic, expected \"CIDN\")".into(),
            ));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported container format version {version} (this build reads version {FORMAT_VERSION})"
            )));
        }
        let mut header = BTreeMap::new();
        for _ in 0..r.u32()? {
            let key = r.name()?;
            header.insert(key, r.u64()?);
        }
        let mut arrays = BTreeMap::new();
        for _ in 0..r.u32()? {
            let name = r.name()?;
            let dtype = r.u8()?;
            if dtype != DTYPE_F32 {
                return Err(Error::Checkpoint(format!(
                    "array `{name}` has unknown dtype tag {dtype}"
                )));
            }
            let rank = r.u8()? as usize;
            let dims = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel: usize = dims.iter().product();
            let raw = r.take(numel.checked_mul(4).ok_or_else(|| {
                Error::Checkpoint(format!("array `{name}` is implausibly large"))
            })?)?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            arrays.insert(name, Tensor::new(&dims, data));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after last array",
                bytes.len() - r.pos
            )));
        }
        Ok(Container { header, arrays })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn header_value(&self, key: &str) -> Result<u64> {
        self.header
            .get(key)
            .copied()
            .ok_or_else(|| Error::Checkpoint(format!("missing header field `{key}`")))
    }
}

fn write_name(out: &mut Vec<u8>, name: &str) {
    let len = u16::try_from(name.len()).expect("container names are short");
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(name.as_bytes());
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
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut a = [0u8; 8];
        a.copy_from_slice(self.take(8)?);
        Ok(u64::from_le_bytes(a))
    }

    fn name(&mut self) -> Result<String> {
        let b = self.take(2)?;
        let len = u16::from_le_bytes([b[0], b[1]]) as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Checkpoint("name is not valid UTF-8".into()))
    }
}
