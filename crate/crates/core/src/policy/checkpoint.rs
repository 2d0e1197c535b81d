//! Binary policy checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! b"COREPOL1"
//! u64                 number of layers L
//! L × (u64, u64)      (rows, cols) of each weight matrix
//! f64 ...             per layer: rows·cols weights (row-major), then rows biases
//! ```
//!
//! Head kinds are not stored; the reader supplies them from the design
//! space, and the output width is checked against them.

use std::io::{Read, Write};
use std::path::Path;

use super::PolicyParams;
use crate::action::HeadKind;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"COREPOL1";

impl PolicyParams {
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.shapes.len() as u64).to_le_bytes())?;
        for &(r, c) in &self.shapes {
            w.write_all(&(r as u64).to_le_bytes())?;
            w.write_all(&(c as u64).to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_checkpoint<R: Read>(mut r: R, heads: &[HeadKind]) -> Result<Self> {
        let bad = |e: std::io::Error| Error::Checkpoint(e.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(bad)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic header".into()));
        }
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut word).map_err(bad)?;
            Ok(u64::from_le_bytes(word))
        };
        let layers = next(&mut r)?;
        if layers == 0 || layers > 64 {
            return Err(Error::Checkpoint(format!("implausible layer count {layers}")));
        }
        let mut shapes = Vec::with_capacity(layers as usize);
        for _ in 0..layers {
            let rows = next(&mut r)? as usize;
            let cols = next(&mut r)? as usize;
            shapes.push((rows, cols));
        }
        let n: usize = shapes
            .iter()
            .try_fold(0usize, |acc, &(rr, c)| acc.checked_add(rr.checked_mul(c)?.checked_add(rr)?))
            .ok_or_else(|| Error::Checkpoint("layer shapes overflow".into()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(bad)?;
        if bytes.len() != n * 8 {
            return Err(Error::Checkpoint(format!("expected {} value bytes, found {}", n * 8, bytes.len())));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        PolicyParams::from_parts(shapes, data, heads.to_vec())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_checkpoint(std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, heads: &[HeadKind]) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_checkpoint(std::io::BufReader::new(f), heads)
    }
}
