//! Native lossless volume format.
//!
//! ```text
//! offset  size  field
//! 0       6     magic "STGVOL"
//! 6       1     version (1)
//! 7       1     byte order of every following field (0 = little-endian)
//! 8       24    width, height, frames as u64
//! 32      24    origin x, y, t as i64
//! 56      8·N   samples as f64, x fastest, then y, then t
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::{Extent, Origin, Volume};

pub const VOLUME_MAGIC: &[u8; 6] = b"STGVOL";
const VERSION: u8 = 1;
const LITTLE_ENDIAN: u8 = 0;
const HEADER_LEN: usize = 56;

pub fn write_volume<W: Write>(mut out: W, volume: &Volume) -> Result<()> {
    let e = volume.extent();
    let o = volume.origin();
    out.write_all(VOLUME_MAGIC)?;
    out.write_all(&[VERSION, LITTLE_ENDIAN])?;
    for n in [e.width, e.height, e.frames] {
        out.write_all(&(n as u64).to_le_bytes())?;
    }
    for n in [o.x, o.y, o.t] {
        out.write_all(&n.to_le_bytes())?;
    }
    for v in volume.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_volume<R: Read>(mut input: R) -> Result<Volume> {
    let mut header = [0u8; HEADER_LEN];
    read_exact_or(&mut input, &mut header, "truncated volume header")?;
    if &header[..6] != VOLUME_MAGIC {
        return Err(Error::format("not a volume file (bad magic)"));
    }
    if header[6] != VERSION {
        return Err(Error::format(format!("unsupported volume version {}", header[6])));
    }
    if header[7] != LITTLE_ENDIAN {
        return Err(Error::format(format!("unsupported byte order flag {}", header[7])));
    }
    let word = |i: usize| -> [u8; 8] { header[8 + 8 * i..16 + 8 * i].try_into().expect("8 bytes") };
    let dims = [0, 1, 2].map(|i| u64::from_le_bytes(word(i)));
    let origin = [3, 4, 5].map(|i| i64::from_le_bytes(word(i)));
    if dims.contains(&0) {
        return Err(Error::InvalidExtent(format!(
            "volume header declares extent {}x{}x{}",
            dims[0], dims[1], dims[2]
        )));
    }
    let voxels = dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d))
        .and_then(|n| usize::try_from(n).ok())
        .filter(|n| n.checked_mul(8).is_some())
        .ok_or_else(|| Error::format("volume extent overflows"))?;

    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() != voxels * 8 {
        return Err(Error::format(format!(
            "expected {} sample bytes, found {}",
            voxels * 8,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let extent = Extent::new(dims[0] as usize, dims[1] as usize, dims[2] as usize);
    Volume::from_vec(extent, values, Origin::new(origin[0], origin[1], origin[2]))
}

fn read_exact_or<R: Read>(input: &mut R, buf: &mut [u8], msg: &str) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format(msg),
        _ => Error::Io(e),
    })
}

pub fn save_volume(volume: &Volume, path: impl AsRef<Path>) -> Result<()> {
    write_volume(BufWriter::new(File::create(path)?), volume)
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    read_volume(BufReader::new(File::open(path)?))
}
