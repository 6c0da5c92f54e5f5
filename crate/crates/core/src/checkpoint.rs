//! Flat binary checkpoint format for parameter stores.
//!
//! Layout: magic `SDCK`, version u32, parameter count u64, then one record
//! per parameter in registry order: name length u32, name bytes, shape rank
//! u32, extents u64 each, raw doubles little-endian. Round-trips are
//! bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::autodiff::{ParamStore, Tensor};
use crate::error::{CoreError, CoreResult};

const MAGIC: &[u8; 4] = b"SDCK";
const VERSION: u32 = 1;

pub fn save_params(store: &ParamStore, path: &Path) -> CoreResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(store.params.len() as u64).to_le_bytes())?;
    for (name, tensor) in &store.params {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(tensor.shape.len() as u32).to_le_bytes())?;
        for &e in &tensor.shape {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for &v in &tensor.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> CoreResult<()> {
    r.read_exact(buf)
        .map_err(|_| CoreError::CorruptCheckpoint("unexpected end of file".into()))
}

fn read_u32(r: &mut impl Read) -> CoreResult<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> CoreResult<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn load_params(path: &Path) -> CoreResult<ParamStore> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(CoreError::CorruptCheckpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CoreError::SchemaVersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let count = read_u64(&mut r)? as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        if name_len > 1 << 16 {
            return Err(CoreError::CorruptCheckpoint("absurd name length".into()));
        }
        let mut name_bytes = vec![0u8; name_len];
        read_exact(&mut r, &mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| CoreError::CorruptCheckpoint("non-utf8 name".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(&mut r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = vec![0.0f64; numel];
        for v in &mut data {
            let mut b = [0u8; 8];
            read_exact(&mut r, &mut b)?;
            *v = f64::from_le_bytes(b);
        }
        if store.params.insert(name.clone(), Tensor::new(shape, data)).is_some() {
            return Err(CoreError::CorruptCheckpoint(format!(
                "duplicate parameter {name}"
            )));
        }
    }
    // anything left over means the writer and reader disagree on the format
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(CoreError::CorruptCheckpoint("trailing bytes".into()));
    }
    Ok(store)
}

/// Hex sha256 of a file (used for checkpoint and manifest identity).
pub fn sha256_file(path: &Path) -> CoreResult<String> {
    let mut f = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Hex sha256 of an in-memory string (vocab manifests).
pub fn sha256_str(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        store.insert("a.w", Tensor::randn(&[3, 4], 1.0, &mut rng));
        store.insert("a.b", Tensor::randn(&[4], 1.0, &mut rng));
        store.insert("emb", Tensor::randn(&[10, 7], 0.02, &mut rng));
        // include awkward values
        store.insert(
            "edge",
            Tensor::new(
                vec![5],
                vec![0.0, -0.0, f64::MIN_POSITIVE, 1e300, -1e-300],
            ),
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_params(&store, &path).unwrap();
        let loaded = load_params(&path).unwrap();
        assert_eq!(store.params.len(), loaded.params.len());
        for (name, t) in &store.params {
            let l = loaded.get(name).unwrap();
            assert_eq!(t.shape, l.shape);
            for (a, b) in t.data.iter().zip(&l.data) {
                assert_eq!(a.to_bits(), b.to_bits(), "{name} mismatch");
            }
        }
        // registry order preserved
        let names_a: Vec<&String> = store.params.keys().collect();
        let names_b: Vec<&String> = loaded.params.keys().collect();
        assert_eq!(names_a, names_b);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::filled(&[8, 8], 0.5));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_params(&store, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 11]).unwrap();
        assert!(matches!(
            load_params(&path),
            Err(CoreError::CorruptCheckpoint(_))
        ));
    }

    #[test]
    fn wrong_magic_and_version_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00").unwrap();
        assert!(matches!(
            load_params(&path),
            Err(CoreError::CorruptCheckpoint(_))
        ));
        let mut store = ParamStore::new();
        store.insert("w", Tensor::filled(&[2], 1.0));
        save_params(&store, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 9; // version
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_params(&path),
            Err(CoreError::SchemaVersionMismatch { found: 9, .. })
        ));
    }
}
