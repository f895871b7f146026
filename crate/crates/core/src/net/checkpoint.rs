//! Binary checkpoint container. All integers and floats little-endian.
//!
//! ```text
//! magic      8 bytes   "LAIMPNET"
//! version    u32       1
//! arch       u8        0 = lstm, 1 = bilstm
//! input      u32
//! hidden     u32
//! dense      u32
//! output     u32
//! dropout_p  f64
//! has_stats  u8        0 or 1
//! stats      4 × f64   lai.mean, lai.std, vhvv.mean, vhvv.std (only if has_stats = 1)
//! n_blocks   u32
//! repeated n_blocks times:
//!   name_len u16, name (utf-8), rows u32, cols u32, rows*cols × f64 (row-major)
//! ```
//!
//! Blocks appear in layout order; on load each block's name and shape must
//! match the layout implied by the header.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Arch, Dims, NetworkParams, ParamBlock};
use crate::error::{Error, Result};
use crate::series::{ChannelStats, NormStats};

const MAGIC: &[u8; 8] = b"LAIMPNET";
const VERSION: u32 = 1;

/// Trained parameters plus the normalization they expect.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams,
    pub stats: Option<NormStats>,
}

pub fn write_checkpoint(ckpt: &Checkpoint, mut w: impl Write) -> Result<()> {
    let p = &ckpt.params;
    let d = p.dims();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[match p.arch() {
        Arch::Lstm => 0u8,
        Arch::BiLstm => 1u8,
    }])?;
    for v in [d.input, d.hidden, d.dense, d.output] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&p.dropout_p().to_le_bytes())?;
    match &ckpt.stats {
        Some(s) => {
            w.write_all(&[1u8])?;
            for v in [s.lai.mean, s.lai.std, s.vhvv.mean, s.vhvv.std] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        None => w.write_all(&[0u8])?,
    }
    let blocks = p.layout().blocks();
    w.write_all(&(blocks.len() as u32).to_le_bytes())?;
    for (block, range) in blocks {
        let name = block.name().as_bytes();
        let (rows, cols) = block.shape(p.arch(), d);
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(rows as u32).to_le_bytes())?;
        w.write_all(&(cols as u32).to_le_bytes())?;
        for v in &p.values()[range.clone()] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<R> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Checkpoint("truncated file".into()),
            _ => Error::Io(e),
        })?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

pub fn read_checkpoint(r: impl Read) -> Result<Checkpoint> {
    let mut c = Cursor { inner: r };
    if &c.bytes::<8>()? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let arch = match c.u8()? {
        0 => Arch::Lstm,
        1 => Arch::BiLstm,
        other => return Err(Error::Checkpoint(format!("unknown arch tag {other}"))),
    };
    let dims = Dims::new(
        c.u32()? as usize,
        c.u32()? as usize,
        c.u32()? as usize,
        c.u32()? as usize,
    );
    let dropout_p = c.f64()?;
    let stats = match c.u8()? {
        0 => None,
        1 => Some(NormStats {
            lai: ChannelStats {
                mean: c.f64()?,
                std: c.f64()?,
            },
            vhvv: ChannelStats {
                mean: c.f64()?,
                std: c.f64()?,
            },
        }),
        other => return Err(Error::Checkpoint(format!("bad stats flag {other}"))),
    };
    let mut params = NetworkParams::zeros(arch, dims, dropout_p)?;
    let n_blocks = c.u32()? as usize;
    let expected: Vec<_> = params.layout().blocks().to_vec();
    if n_blocks != expected.len() {
        return Err(Error::Checkpoint(format!(
            "{n_blocks} blocks, layout has {}",
            expected.len()
        )));
    }
    for (block, range) in expected {
        let len = c.u16()? as usize;
        let mut name = vec![0u8; len];
        c.inner.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("block name not utf-8".into()))?;
        if ParamBlock::from_name(&name) != Some(block) {
            return Err(Error::Checkpoint(format!(
                "expected block {}, found {name}",
                block.name()
            )));
        }
        let shape = (c.u32()? as usize, c.u32()? as usize);
        if shape != block.shape(arch, dims) {
            return Err(Error::Checkpoint(format!("block {name} has shape {shape:?}")));
        }
        for i in range {
            params.values_mut()[i] = c.f64()?;
        }
    }
    let mut rest = [0u8; 1];
    if c.inner.read(&mut rest)? != 0 {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(Checkpoint { params, stats })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(ckpt, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init_params;

    #[test]
    fn round_trip_is_bit_exact() {
        for arch in [Arch::Lstm, Arch::BiLstm] {
            let params = init_params(5, arch, Dims::new(4, 6, 5, 1), 0.5).unwrap();
            let stats = NormStats {
                lai: ChannelStats { mean: 2.1, std: 1.7 },
                vhvv: ChannelStats { mean: -9.3, std: 1.1 },
            };
            for stats in [None, Some(stats)] {
                let ckpt = Checkpoint {
                    params: params.clone(),
                    stats,
                };
                let mut buf = Vec::new();
                write_checkpoint(&ckpt, &mut buf).unwrap();
                let back = read_checkpoint(buf.as_slice()).unwrap();
                assert_eq!(back, ckpt);
                let bits = |p: &NetworkParams| p.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                assert_eq!(bits(&back.params), bits(&ckpt.params));
            }
        }
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let ckpt = Checkpoint {
            params: init_params(1, Arch::Lstm, Dims::new(2, 3, 2, 1), 0.5).unwrap(),
            stats: None,
        };
        let mut buf = Vec::new();
        write_checkpoint(&ckpt, &mut buf).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(bad.as_slice()).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(read_checkpoint(long.as_slice()).is_err());
    }
}
