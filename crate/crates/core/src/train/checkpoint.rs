//! Binary checkpoints.
//!
//! ```text
//! "XSUMCKPT1"
//! u64 epoch, u64 root seed, u64 optimizer step
//! u64 field count, then that many u64 model-shape fields
//! u64 array count, then per array: u64 name length, name bytes,
//!     u64 rows, u64 cols, rows·cols f64
//! first moments, then second moments: u64 rows, u64 cols, f64 data each
//! ```
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::AdamState;
use crate::diffcore::Tensor2;
use crate::error::{Error, Result};
use crate::model::Model;

pub const CHECKPOINT_MAGIC: &[u8; 9] = b"XSUMCKPT1";

/// Sanity bound on any stored length.
const MAX_LEN: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub epoch: usize,
    pub seed: u64,
    pub shape: Vec<u64>,
    pub params: Vec<(String, Tensor2)>,
    pub adam: AdamState,
}

fn model_shape(model: &Model) -> Vec<u64> {
    let c = &model.config;
    vec![
        c.d as u64,
        c.stack.layers as u64,
        c.stack.heads as u64,
        c.stack.ffn_mult as u64,
        u64::from(c.positions),
        c.max_len as u64,
    ]
}

impl Checkpoint {
    pub fn capture(model: &Model, adam: &AdamState, epoch: usize) -> Self {
        Self {
            epoch,
            seed: model.seed,
            shape: model_shape(model),
            params: model.store.iter().map(|(_, n, t)| (n.to_string(), t.clone())).collect(),
            adam: adam.clone(),
        }
    }

    /// Loads the stored weights into `model`, which must have the same shape.
    pub fn apply(&self, model: &mut Model) -> Result<()> {
        let want = model_shape(model);
        if want != self.shape {
            return Err(Error::Version(format!(
                "checkpoint model shape {:?} does not match config {:?} (d, layers, heads, ffn_mult, positions, max_len)",
                self.shape, want
            )));
        }
        if self.adam.m.len() != self.params.len() || self.adam.v.len() != self.params.len() {
            return Err(Error::Version("optimizer state does not match parameter count".into()));
        }
        model.store.load_values(self.params.clone())?;
        model.seed = self.seed;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        for v in [self.epoch as u64, self.seed, self.adam.step, self.shape.len() as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.shape {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for (name, t) in &self.params {
            w.write_all(&(name.len() as u64).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            write_tensor(&mut w, t)?;
        }
        for t in self.adam.m.iter().chain(&self.adam.v) {
            write_tensor(&mut w, t)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 9];
        r.read_exact(&mut magic).map_err(|_| Error::Version("file too short for a checkpoint header".into()))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Version("not an XSUMCKPT1 checkpoint".into()));
        }
        let epoch = read_u64(&mut r)? as usize;
        let seed = read_u64(&mut r)?;
        let step = read_u64(&mut r)?;
        let fields = read_len(&mut r)?;
        let shape = (0..fields).map(|_| read_u64(&mut r)).collect::<Result<Vec<_>>>()?;
        let count = read_len(&mut r)?;
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let len = read_len(&mut r)?;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf).map_err(truncated)?;
            let name = String::from_utf8(buf).map_err(|_| Error::Version("parameter name is not UTF-8".into()))?;
            params.push((name, read_tensor(&mut r)?));
        }
        let m = (0..count).map(|_| read_tensor(&mut r)).collect::<Result<Vec<_>>>()?;
        let v = (0..count).map(|_| read_tensor(&mut r)).collect::<Result<Vec<_>>>()?;
        Ok(Self { epoch, seed, shape, params, adam: AdamState { step, m, v } })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::Path(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::Path(format!("{}: {e}", path.display())))?;
        Self::read_from(BufReader::new(f))
    }
}

fn truncated(_: std::io::Error) -> Error {
    Error::Version("checkpoint is truncated".into())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn read_len<R: Read>(r: &mut R) -> Result<usize> {
    let v = read_u64(r)?;
    if v > MAX_LEN {
        return Err(Error::Version(format!("implausible length {v} in checkpoint")));
    }
    Ok(v as usize)
}

fn write_tensor<W: Write>(w: &mut W, t: &Tensor2) -> Result<()> {
    w.write_all(&(t.rows() as u64).to_le_bytes())?;
    w.write_all(&(t.cols() as u64).to_le_bytes())?;
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor2> {
    let rows = read_len(r)?;
    let cols = read_len(r)?;
    let n = rows.checked_mul(cols).filter(|&n| n as u64 <= MAX_LEN).ok_or_else(|| Error::Version("tensor too large".into()))?;
    let mut data = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b).map_err(truncated)?;
        data.push(f64::from_le_bytes(b));
    }
    Tensor2::from_vec(rows, cols, data)
}
