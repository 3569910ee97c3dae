//! Binary parameter checkpoints.
//!
//! Layout: `MAGIC`, one version byte, a `u32` record count, then per record a
//! `u32` name length, UTF-8 name, `u32` rank, `u64` dimensions and the raw
//! little-endian `f64` values. All integers are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ParamStore, Result, Tensor, TensorError};

pub const MAGIC: &[u8; 8] = b"LEVIAMR\0";
pub const VERSION: u8 = 1;

pub fn write_to<W: Write>(store: &ParamStore, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (_, p) in store.iter() {
        w.write_all(&(p.name.len() as u32).to_le_bytes())?;
        w.write_all(p.name.as_bytes())?;
        let shape = p.tensor.shape();
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &d in shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in p.tensor.values() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| TensorError::Checkpoint(format!("truncated file: {e}")))?;
    Ok(buf)
}

pub fn read_from<R: Read>(mut r: R) -> Result<ParamStore> {
    if &read_array::<8, _>(&mut r)? != MAGIC {
        return Err(TensorError::Checkpoint("bad magic header".into()));
    }
    let [version] = read_array::<1, _>(&mut r)?;
    if version != VERSION {
        return Err(TensorError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let count = u32::from_le_bytes(read_array(&mut r)?);
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|e| TensorError::Checkpoint(format!("truncated file: {e}")))?;
        let name = String::from_utf8(name)
            .map_err(|_| TensorError::Checkpoint("parameter name is not UTF-8".into()))?;
        let rank = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let shape = (0..rank)
            .map(|_| Ok(u64::from_le_bytes(read_array(&mut r)?) as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let values = (0..n)
            .map(|_| Ok(f64::from_le_bytes(read_array(&mut r)?)))
            .collect::<Result<Vec<_>>>()?;
        store.add(name, Tensor::new(shape, values)?)?;
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(TensorError::Checkpoint("trailing bytes".into()));
    }
    Ok(store)
}

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    write_to(store, BufWriter::new(File::create(path)?))
}

pub fn load(path: &Path) -> Result<ParamStore> {
    read_from(BufReader::new(File::open(path)?))
}
