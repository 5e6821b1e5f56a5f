//! Binary snapshot format for lattice fields.
//!
//! Layout: a 32-byte header — magic `APHI`, format version `u32`, grid size
//! `M: u32`, side length `L: f64`, simulation time `f64`, 4 zero pad bytes —
//! followed by `M^2` little-endian `f64` site values in row-major order
//! (second coordinate fastest). Round trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{RealField, TorusGrid};

pub const MAGIC: &[u8; 4] = b"APHI";
pub const VERSION: u32 = 1;

/// Write a field with its metadata; bit-exact round trip with
/// [`read_snapshot`].
pub fn write_snapshot(field: &RealField, time: f64, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let grid = field.grid();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(grid.m() as u32).to_le_bytes())?;
    w.write_all(&grid.side_length().to_le_bytes())?;
    w.write_all(&time.to_le_bytes())?;
    w.write_all(&[0u8; 4])?;
    for &v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a snapshot back; returns the field and its recorded time.
pub fn read_snapshot(path: &Path) -> Result<(RealField, f64)> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut header = [0u8; 32];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format("snapshot shorter than its 32-byte header".into()))?;
    if &header[0..4] != MAGIC {
        return Err(Error::Format("bad snapshot magic".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported snapshot version {version}, expected {VERSION}"
        )));
    }
    let m = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let l = f64::from_le_bytes(header[12..20].try_into().unwrap());
    let time = f64::from_le_bytes(header[20..28].try_into().unwrap());
    let grid = TorusGrid::new(m, l)?;
    let mut values = vec![0.0f64; grid.sites()];
    let mut buf = [0u8; 8];
    for v in &mut values {
        r.read_exact(&mut buf)
            .map_err(|_| Error::Format("snapshot truncated before end of field data".into()))?;
        *v = f64::from_le_bytes(buf);
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after snapshot field data".into()));
    }
    Ok((RealField::new(grid, values)?, time))
}
