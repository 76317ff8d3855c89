//! Checkpoint files: fixed binary header plus row-major f64 weights,
//! little-endian throughout. Round trips are bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ParameterSet;

const MAGIC: &[u8; 8] = b"GCFCKPT1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointMeta {
    pub layers: u64,
    pub l2_coeff: f64,
    pub seed: u64,
}

pub fn save_checkpoint(path: &Path, params: &ParameterSet, meta: &CheckpointMeta) -> Result<()> {
    let mut buf =
        Vec::with_capacity(8 + 5 * 8 + params.data().len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(params.num_rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(params.dim() as u64).to_le_bytes());
    buf.extend_from_slice(&meta.layers.to_le_bytes());
    buf.extend_from_slice(&meta.l2_coeff.to_le_bytes());
    buf.extend_from_slice(&meta.seed.to_le_bytes());
    for v in params.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ParameterSet, CheckpointMeta)> {
    let bytes = fs::read(path)?;
    let fail = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));
    if bytes.len() < 8 + 5 * 8 {
        return Err(fail("truncated header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(fail("bad magic"));
    }
    let u64_at = |off: usize| u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    let num_rows = u64_at(8) as usize;
    let dim = u64_at(16) as usize;
    let layers = u64_at(24);
    let l2_coeff = f64::from_le_bytes(bytes[32..40].try_into().unwrap());
    let seed = u64_at(40);
    let body = &bytes[48..];
    if body.len() != num_rows * dim * 8 {
        return Err(fail("weight payload length mismatch"));
    }
    let data: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((ParameterSet::from_data(num_rows, dim, data), CheckpointMeta { layers, l2_coeff, seed }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let params = ParameterSet::init_normal(7, 3, 99);
        let meta = CheckpointMeta { layers: 3, l2_coeff: 1e-4, seed: 99 };
        save_checkpoint(&path, &params, &meta).unwrap();
        let (loaded, lmeta) = load_checkpoint(&path).unwrap();
        assert_eq!(lmeta, meta);
        assert_eq!(loaded.num_rows(), 7);
        assert_eq!(loaded.dim(), 3);
        for (a, b) in params.data().iter().zip(loaded.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn corrupt_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
    }
}
