//! On-disk formats: the `TPC3` binary tensor file and the JSON sidecar that
//! carries the ground truth of a generated instance.
//!
//! Layout of a `TPC3` file, all little-endian:
//!
//! | offset | size      | field                         |
//! |--------|-----------|-------------------------------|
//! | 0      | 4         | magic `b"TPC3"`               |
//! | 4      | 4         | `u32` version, currently 1    |
//! | 8      | 8         | `u64` dimension `n`           |
//! | 16     | `8 * n^3` | `f64` entries, `k` fastest    |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

pub const MAGIC: [u8; 4] = *b"TPC3";
pub const VERSION: u32 = 1;
const HEADER_LEN: u64 = 16;

pub fn write_tensor<W: Write>(mut w: W, t: &Tensor3) -> std::io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(t.dim() as u64).to_le_bytes())?;
    for v in t.entries() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

/// Parses a complete `TPC3` byte image. `total_len`, when known, must equal
/// the header length plus `8 n^3`.
pub fn read_tensor<R: Read>(mut r: R, total_len: Option<u64>) -> Result<Tensor3> {
    let mut header = [0u8; HEADER_LEN as usize];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format("file shorter than the 16-byte header".into()))?;
    if header[0..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &header[0..4])));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n64 = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let n = usize::try_from(n64)
        .ok()
        .filter(|&n| n > 0 && n <= crate::tensor::max_dim())
        .ok_or_else(|| Error::Format(format!("dimension {n64} out of range")))?;
    let count = n * n * n;
    let expected = HEADER_LEN + 8 * count as u64;
    if let Some(len) = total_len {
        if len != expected {
            return Err(Error::Format(format!(
                "length {len} does not match n = {n} (expected {expected} bytes)"
            )));
        }
    }
    let mut bytes = vec![0u8; 8 * count];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::Format(format!("truncated payload (expected {expected} bytes)")))?;
    if total_len.is_none() {
        let mut extra = [0u8; 1];
        if r.read(&mut extra).map(|k| k > 0).unwrap_or(false) {
            return Err(Error::Format("trailing bytes after payload".into()));
        }
    }
    let entries = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor3::from_entries(n, entries)
}

pub fn save_tensor(path: impl AsRef<Path>, t: &Tensor3) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_tensor(BufWriter::new(file), t).map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor3> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    read_tensor(BufReader::new(file), Some(len))
}

/// Ground truth written next to a generated tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub n: usize,
    pub tau: f64,
    pub sigma: f64,
    pub seed: u64,
    pub v: Vec<f64>,
}

pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSeed;

    fn image(t: &Tensor3) -> Vec<u8> {
        let mut buf = Vec::new();
        write_tensor(&mut buf, t).unwrap();
        buf
    }

    #[test]
    fn header_layout() {
        let t = Tensor3::sample_gaussian(2, 1.0, RngSeed::new(5)).unwrap();
        let buf = image(&t);
        assert_eq!(buf.len(), 16 + 8 * 8);
        assert_eq!(&buf[0..4], b"TPC3");
        assert_eq!(&buf[4..8], &[1, 0, 0, 0]);
        assert_eq!(&buf[8..16], &[2, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&buf[16..24], &t.get(0, 0, 0).to_le_bytes());
        assert_eq!(&buf[24..32], &t.get(0, 0, 1).to_le_bytes());
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let t = Tensor3::sample_gaussian(3, 2.0, RngSeed::new(6)).unwrap();
        let buf = image(&t);
        let back = read_tensor(&buf[..], Some(buf.len() as u64)).unwrap();
        assert_eq!(back, t);
        let back = read_tensor(&buf[..], None).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn rejects_corrupt_files() {
        let t = Tensor3::sample_gaussian(2, 1.0, RngSeed::new(5)).unwrap();
        let good = image(&t);

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(read_tensor(&bad_magic[..], None), Err(Error::Format(_))));

        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert!(matches!(read_tensor(&bad_version[..], None), Err(Error::Format(_))));

        let short = &good[..good.len() - 1];
        assert!(read_tensor(short, Some(short.len() as u64)).is_err());
        assert!(read_tensor(short, None).is_err());

        let mut long = good.clone();
        long.push(0);
        assert!(read_tensor(&long[..], Some(long.len() as u64)).is_err());
        assert!(read_tensor(&long[..], None).is_err());

        assert!(read_tensor(&good[..10], None).is_err());
    }
}
