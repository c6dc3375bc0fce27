//! Raw feature matrices: frame-major little-endian 32-bit floats. For the
//! default 81-dim layout, F0 occupies column 0 and the 80 mel bands follow.

use crate::array::Array;
use crate::error::{Error, Result};
use std::fs;
use std::io::Write;
use std::path::Path;

pub fn read_features(path: &Path, dims: usize) -> Result<Array<f32>> {
    let bytes = fs::read(path)?;
    if dims == 0 {
        return Err(Error::Config("feature dims must be >= 1".into()));
    }
    if bytes.len() % (4 * dims) != 0 {
        return Err(Error::Format(format!(
            "{}: {} bytes is not a multiple of 4 x {dims}",
            path.display(),
            bytes.len()
        )));
    }
    let frames = bytes.len() / (4 * dims);
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array::from_vec(frames, dims, data)
}

pub fn write_features(feat: &Array<f32>, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    let mut buf = Vec::with_capacity(feat.len() * 4);
    for &v in feat.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    f.write_all(&buf)?;
    Ok(())
}
