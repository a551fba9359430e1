//! Field snapshot files.
//!
//! Layout (all little-endian):
//!
//! ```text
//! offset  size  content
//!      0     4  magic "DNSF"
//!      4     4  u32 dim (1..=3)
//!      8    12  u32 n[3]      nodes per axis, 1 for inactive axes
//!     20    24  f64 h[3]      spacing per axis, 0 for inactive axes
//!     44     8  f64 time
//!     52     4  u32 ncomp     number of stored components
//!     56     8  reserved, zero
//!     64     .  ncomp blocks of prod(n) f64 values, row-major node order
//! ```

use std::io::{Read, Write};

use super::Grid;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DNSF";
pub const HEADER_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub dim: usize,
    pub n: [usize; 3],
    pub h: [f64; 3],
    pub time: f64,
    pub comps: Vec<Vec<f64>>,
}

pub fn write_snapshot<W: Write>(mut w: W, grid: &Grid, time: f64, comps: &[&[f64]]) -> Result<()> {
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(MAGIC);
    header[4..8].copy_from_slice(&(grid.dim() as u32).to_le_bytes());
    for a in 0..3 {
        let (n, h) = if a < grid.dim() { (grid.n()[a], grid.h()[a]) } else { (1, 0.0) };
        header[8 + 4 * a..12 + 4 * a].copy_from_slice(&(n as u32).to_le_bytes());
        header[20 + 8 * a..28 + 8 * a].copy_from_slice(&h.to_le_bytes());
    }
    header[44..52].copy_from_slice(&time.to_le_bytes());
    header[52..56].copy_from_slice(&(comps.len() as u32).to_le_bytes());
    w.write_all(&header)?;
    for c in comps {
        if c.len() != grid.len() {
            return Err(Error::DimensionMismatch("snapshot component length".into()));
        }
        let mut buf = Vec::with_capacity(8 * c.len());
        for v in c.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<Snapshot> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    if &header[0..4] != MAGIC {
        return Err(Error::InvalidConfig("snapshot magic mismatch".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    let dim = u32_at(4);
    let n = [u32_at(8), u32_at(12), u32_at(16)];
    let h = [f64_at(20), f64_at(28), f64_at(36)];
    let time = f64_at(44);
    let ncomp = u32_at(52);
    let len: usize = n.iter().product();
    let mut comps = Vec::with_capacity(ncomp);
    let mut buf = vec![0u8; 8 * len];
    for _ in 0..ncomp {
        r.read_exact(&mut buf)?;
        comps.push(
            buf.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect(),
        );
    }
    Ok(Snapshot { dim, n, h, time, comps })
}
