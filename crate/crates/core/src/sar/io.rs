//! Raster stack files: a text header (`name.hdr`) next to a raw
//! little-endian `f32` payload (`name.bin`), band-sequential and row-major.
//!
//! ```text
//! width=128
//! height=128
//! bands=3
//! times=0,12,24
//! dtype=f32le
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use super::RasterStack;
use crate::error::{Error, Result};
use crate::kv::KvMap;

fn payload_path(header: &Path) -> PathBuf {
    header.with_extension("bin")
}

fn bad(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: msg.into(),
    }
}

/// Writes `<stem>.hdr` and `<stem>.bin`; `header` is the `.hdr` path.
pub fn write_raster(stack: &RasterStack, header: impl AsRef<Path>) -> Result<()> {
    let header = header.as_ref();
    let times: Vec<String> = stack.times().iter().map(|t| t.to_string()).collect();
    let text = format!(
        "width={}\nheight={}\nbands={}\ntimes={}\ndtype=f32le\n",
        stack.width(),
        stack.height(),
        stack.bands(),
        times.join(",")
    );
    fs::write(header, text)?;
    let bytes: Vec<u8> = stack.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(payload_path(header), bytes)?;
    Ok(())
}

pub fn read_raster(header: impl AsRef<Path>) -> Result<RasterStack> {
    let header = header.as_ref();
    let kv = KvMap::parse(&fs::read_to_string(header)?).map_err(|e| bad(header, e.to_string()))?;
    let field = |key: &str| -> Result<usize> { kv.require::<usize>(key).map_err(|e| bad(header, e.to_string())) };
    let width = field("width")?;
    let height = field("height")?;
    let bands = field("bands")?;
    match kv.get_str("dtype") {
        Some("f32le") => {}
        other => return Err(bad(header, format!("unsupported dtype {other:?}"))),
    }
    let times: Vec<f64> = kv
        .get_str("times")
        .ok_or_else(|| bad(header, "missing times"))?
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad(header, "unparseable times"))?;
    if times.len() != bands {
        return Err(bad(header, format!("bands={bands} but {} times", times.len())));
    }
    let payload = payload_path(header);
    let bytes = fs::read(&payload)?;
    let expected = width * height * bands * 4;
    if bytes.len() != expected {
        return Err(bad(
            &payload,
            format!("payload has {} bytes, header implies {expected}", bytes.len()),
        ));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    RasterStack::new(width, height, times, data)
}
