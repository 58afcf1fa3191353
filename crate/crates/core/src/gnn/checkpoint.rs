//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "FXGRAPH\0"
//! version  u32
//! config   u64 length + UTF-8 JSON of the model configuration
//! count    u32 number of tensors
//! tensor   u32 name length + UTF-8 name, u32 rank, u64 per dimension,
//!          then f64 values in row-major order
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{GnnError, Mat, Model, ModelConfig};

const MAGIC: &[u8; 8] = b"FXGRAPH\0";
pub const FORMAT_VERSION: u32 = 1;

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let config = serde_json::to_vec(model.config()).expect("config serializes");
    out.extend_from_slice(&(config.len() as u64).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&(model.names().len() as u32).to_le_bytes());
    for (name, t) in model.names().iter().zip(model.tensors()) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&2u32.to_le_bytes());
        out.extend_from_slice(&(t.nrows() as u64).to_le_bytes());
        out.extend_from_slice(&(t.ncols() as u64).to_le_bytes());
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], GnnError> {
        if self.buf.len() - self.at < n {
            return Err(GnnError::Checkpoint(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, GnnError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, GnnError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn len(&mut self, what: &str) -> Result<usize, GnnError> {
        let n = self.u64(what)?;
        usize::try_from(n)
            .ok()
            .filter(|&n| n <= self.buf.len())
            .ok_or_else(|| GnnError::Checkpoint(format!("implausible {what} {n}")))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<Model, GnnError> {
    let mut c = Cursor { buf, at: 0 };
    if c.take(8, "magic")? != MAGIC {
        return Err(GnnError::Checkpoint("not a model checkpoint".into()));
    }
    let version = c.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(GnnError::Checkpoint(format!("unsupported format version {version}")));
    }
    let n = c.len("config length")?;
    let config: ModelConfig =
        serde_json::from_slice(c.take(n, "config")?).map_err(|e| GnnError::Checkpoint(format!("bad config: {e}")))?;
    let count = c.u32("tensor count")?;
    let mut named = Vec::new();
    for _ in 0..count {
        let n = c.u32("name length")? as usize;
        let name = std::str::from_utf8(c.take(n, "name")?)
            .map_err(|_| GnnError::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = c.u32("rank")?;
        if rank != 2 {
            return Err(GnnError::Checkpoint(format!("tensor `{name}` has rank {rank}")));
        }
        let rows = c.len("rows")?;
        let cols = c.len("cols")?;
        let size = rows.checked_mul(cols).filter(|&s| s.saturating_mul(8) <= buf.len());
        let size = size.ok_or_else(|| GnnError::Checkpoint(format!("tensor `{name}` is too large")))?;
        let raw = c.take(size * 8, "values")?;
        let values = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        named.push((name, Mat::from_shape_vec((rows, cols), values).expect("size checked")));
    }
    if c.at != buf.len() {
        return Err(GnnError::Checkpoint("trailing bytes".into()));
    }
    Model::from_tensors(config, named)
}

pub fn save(model: &Model, path: &Path) -> Result<(), GnnError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&to_bytes(model))?;
    f.sync_all()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Model, GnnError> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    from_bytes(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::Flavor;

    fn small(flavor: Flavor) -> Model {
        Model::new(ModelConfig {
            flavor,
            hidden: 4,
            buckets: 8,
            kind_dim: 3,
            label_dim: 2,
            annotation_dim: 2,
            seed: 5,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        for f in Flavor::ALL {
            let m = small(f);
            let bytes = to_bytes(&m);
            let back = from_bytes(&bytes).unwrap();
            assert_eq!(back, m);
            assert_eq!(to_bytes(&back), bytes);
        }
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let bytes = to_bytes(&small(Flavor::Gat));
        assert!(from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(from_bytes(b"nonsense").is_err());
        let mut wrong = bytes.clone();
        wrong[8] = 9;
        assert!(matches!(from_bytes(&wrong), Err(GnnError::Checkpoint(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
    }
}
