//! PathSet persistence.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! magic "EHFP" | version u32 | n_paths u64 | n_steps u64 | s0 f64 | seed u64
//! prices: n_paths × (n_steps+1) f64, row-major
//! flag f64 (1.0 when variances follow, 0.0 otherwise)
//! variances: n_paths × (n_steps+1) f64 (only when flagged)
//! ```
//!
//! The step length is not part of the header; callers supply it on read.

use std::io::{Read, Write};

use super::PathSet;
use crate::error::{Error, Result};

pub const PATHSET_MAGIC: &[u8; 4] = b"EHFP";
pub const PATHSET_VERSION: u32 = 1;

pub fn write_pathset<W: Write>(paths: &PathSet, mut w: W) -> Result<()> {
    w.write_all(PATHSET_MAGIC)?;
    w.write_all(&PATHSET_VERSION.to_le_bytes())?;
    w.write_all(&(paths.n_paths() as u64).to_le_bytes())?;
    w.write_all(&(paths.n_steps() as u64).to_le_bytes())?;
    w.write_all(&paths.s0().to_le_bytes())?;
    w.write_all(&paths.seed().to_le_bytes())?;
    write_f64s(&mut w, paths.prices())?;
    match paths.variances() {
        Some(v) => {
            w.write_all(&1.0f64.to_le_bytes())?;
            write_f64s(&mut w, v)?;
        }
        None => w.write_all(&0.0f64.to_le_bytes())?,
    }
    w.flush()?;
    Ok(())
}

pub fn read_pathset<R: Read>(mut r: R, dt: f64) -> Result<PathSet> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != PATHSET_MAGIC {
        return Err(Error::format("not a path file (bad magic)"));
    }
    let version = read_u32(&mut r)?;
    if version != PATHSET_VERSION {
        return Err(Error::format(format!("unsupported path file version {version}")));
    }
    let n_paths = read_u64(&mut r)? as usize;
    let n_steps = read_u64(&mut r)? as usize;
    let s0 = read_f64(&mut r)?;
    let seed = read_u64(&mut r)?;
    let cells = n_paths.checked_mul(n_steps + 1).ok_or_else(|| Error::format("path file dimensions overflow"))?;
    let prices = read_f64s(&mut r, cells)?;
    let flag = read_f64(&mut r)?;
    let variances = if flag == 1.0 {
        Some(read_f64s(&mut r, cells)?)
    } else if flag == 0.0 {
        None
    } else {
        return Err(Error::format(format!("bad variance flag {flag}")));
    };
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::format("trailing bytes after path data"));
    }
    let ids = (0..n_paths as u64).collect();
    PathSet::from_parts(n_steps, s0, dt, seed, ids, prices, variances)
}

/// One row per path: `path_id,p0,p1,…`.
pub fn write_pathset_csv<W: Write>(paths: &PathSet, mut w: W) -> Result<()> {
    let header: Vec<String> = (0..=paths.n_steps()).map(|t| format!("p{t}")).collect();
    writeln!(w, "path_id,{}", header.join(","))?;
    for (id, row) in paths.ids().iter().zip(paths.paths()) {
        let cells: Vec<String> = row.iter().map(|p| p.to_string()).collect();
        writeln!(w, "{id},{}", cells.join(","))?;
    }
    Ok(())
}

fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(xs.len() * 8);
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf).map_err(|_| Error::format("path file truncated"))?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
