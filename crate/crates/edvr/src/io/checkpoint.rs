//! Binary checkpoints.
//!
//! Layout: `EDVR` magic, format version (u32), parameter count (u32), then
//! per parameter: name length (u32) + UTF-8 name + rank (u32) + dims (u32
//! each) + little-endian f32 payload. A CRC32 of everything before it closes
//! the file. All integers little-endian. Parameters keep store order, so the
//! same store always produces the same bytes.

use std::path::Path;

use crate::error::{EdvrError, Result};
use crate::tensor::{Elem, ParamStore, Parameter, Tensor};

const MAGIC: &[u8; 4] = b"EDVR";
const VERSION: u32 = 1;

fn err(msg: impl Into<String>) -> EdvrError {
    EdvrError::Checkpoint(msg.into())
}

pub fn serialize<T: Elem>(store: &ParamStore<T>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let count: u32 = store
        .len()
        .try_into()
        .map_err(|_| err(format!("{} parameters do not fit the format", store.len())))?;
    buf.extend_from_slice(&count.to_le_bytes());
    for p in store.iter() {
        let name = p.name.as_bytes();
        let name_len: u32 = name
            .len()
            .try_into()
            .map_err(|_| err(format!("parameter name `{}` too long", p.name)))?;
        buf.extend_from_slice(&name_len.to_le_bytes());
        buf.extend_from_slice(name);
        let dims = p.value.dims();
        buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            let d: u32 = d
                .try_into()
                .map_err(|_| err(format!("dimension {d} of `{}` too large", p.name)))?;
            buf.extend_from_slice(&d.to_le_bytes());
        }
        for &v in p.value.data() {
            buf.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(err("unexpected end of checkpoint"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn deserialize(bytes: &[u8]) -> Result<ParamStore<f32>> {
    if bytes.len() < MAGIC.len() + 12 {
        return Err(err("file too short to be a checkpoint"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored_crc = u32::from_le_bytes(tail.try_into().unwrap());
    let actual_crc = crc32fast::hash(body);
    if stored_crc != actual_crc {
        return Err(err(format!("CRC mismatch: stored {stored_crc:08x}, computed {actual_crc:08x} (file truncated or corrupted)")));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(err("bad magic bytes; not a checkpoint file"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(err(format!("unsupported checkpoint version {version} (expected {VERSION})")));
    }
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| err("parameter name is not UTF-8"))?
            .to_string();
        let rank = r.u32()? as usize;
        if rank != 4 {
            return Err(err(format!("parameter `{name}` has rank {rank}, expected 4")));
        }
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let numel: usize = dims.iter().product();
        let raw = r.take(numel * 4)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let value = Tensor::new(dims, data)?;
        store.insert(Parameter::new(name, value))?;
    }
    if r.pos != body.len() {
        return Err(err(format!("{} trailing byte(s) after the last parameter", body.len() - r.pos)));
    }
    Ok(store)
}

pub fn save_checkpoint<T: Elem>(path: &Path, store: &ParamStore<T>) -> Result<()> {
    std::fs::write(path, serialize(store)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore<f32>> {
    let bytes =
        std::fs::read(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
    deserialize(&bytes).map_err(|e| err(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_store() -> ParamStore<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        for (name, dims) in [
            ("conv_first.weight", [4usize, 3, 3, 3]),
            ("conv_first.bias", [1, 4, 1, 1]),
            ("pcd.l1.dcn.weight", [4, 4, 3, 3]),
        ] {
            let n: usize = dims.iter().product();
            let data: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            store.insert(Parameter::new(name, Tensor::new(dims, data).unwrap())).unwrap();
        }
        store
    }

    #[test]
    fn round_trip_is_bit_exact_and_byte_stable() {
        let store = sample_store();
        let bytes = serialize(&store).unwrap();
        let loaded = deserialize(&bytes).unwrap();
        assert_eq!(loaded.names(), store.names());
        for (a, b) in loaded.iter().zip(store.iter()) {
            assert_eq!(a.value.dims(), b.value.dims());
            assert_eq!(a.value.data(), b.value.data());
        }
        let again = serialize(&loaded).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn truncation_is_a_crc_failure() {
        let bytes = serialize(&sample_store()).unwrap();
        for cut in [bytes.len() - 1, bytes.len() - 7, 20] {
            let e = deserialize(&bytes[..cut]).unwrap_err().to_string();
            assert!(e.contains("CRC") || e.contains("short"), "{e}");
        }
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = serialize(&sample_store()).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(deserialize(&bytes).unwrap_err().to_string().contains("CRC"));
    }

    #[test]
    fn bad_magic_and_version_are_rejected() {
        let store = sample_store();
        let mut bytes = serialize(&store).unwrap();
        bytes[0] = b'X';
        let body_len = bytes.len() - 4;
        let crc = crc32fast::hash(&bytes[..body_len]);
        bytes[body_len..].copy_from_slice(&crc.to_le_bytes());
        assert!(deserialize(&bytes).unwrap_err().to_string().contains("magic"));

        let mut bytes = serialize(&store).unwrap();
        bytes[4] = 9;
        let crc = crc32fast::hash(&bytes[..body_len]);
        bytes[body_len..].copy_from_slice(&crc.to_le_bytes());
        assert!(deserialize(&bytes).unwrap_err().to_string().contains("version"));
    }
}
