//! Binary checkpoint format.
//!
//! ```text
//! magic        8 bytes  "MNVAE001"
//! config       6 × u32  input_dim, enc_hidden, dec_hidden, latent_dim, num_nodes, context_dim
//! has_adam     u32      0 or 1
//! n_params     u64
//! params       n_params × f32, in ParamLayout order
//! [adam step   u64
//!  adam m      n_params × f32
//!  adam v      n_params × f32]   only when has_adam = 1
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::adam::AdamState;
use crate::error::{Error, Result};
use crate::vae::{ModelConfig, ParamLayout, VaeModel};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MNVAE001";

pub fn encode_checkpoint(model: &VaeModel, state: Option<&AdamState>) -> Vec<u8> {
    let cfg = model.config();
    let n = model.num_params();
    let mut out = Vec::with_capacity(48 + n * 4 * if state.is_some() { 3 } else { 1 });
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [
        cfg.input_dim,
        cfg.enc_hidden,
        cfg.dec_hidden,
        cfg.latent_dim,
        cfg.num_nodes,
        cfg.context_dim,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&u32::from(state.is_some()).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    push_f32s(&mut out, model.params());
    if let Some(s) = state {
        out.extend_from_slice(&s.step.to_le_bytes());
        push_f32s(&mut out, &s.m);
        push_f32s(&mut out, &s.v);
    }
    out
}

fn push_f32s(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

/// Writes to a sibling temporary file and renames it into place.
pub fn save_checkpoint(model: &VaeModel, state: Option<&AdamState>, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_checkpoint(model, state))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Option<Vec<f64>> {
        let raw = self.take(n.checked_mul(4)?)?;
        Some(
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
        )
    }
}

/// Decodes a checkpoint. When `expected` is given, the stored architecture
/// must match it exactly.
pub fn decode_checkpoint(
    bytes: &[u8],
    expected: Option<&ModelConfig>,
    path: &Path,
) -> Result<(VaeModel, Option<AdamState>)> {
    let corrupt = |reason: &str| Error::CorruptCheckpoint {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8) != Some(&CHECKPOINT_MAGIC[..]) {
        return Err(corrupt("bad magic"));
    }
    let mut dims = [0usize; 6];
    for d in dims.iter_mut() {
        *d = r.u32().ok_or_else(|| corrupt("truncated config block"))? as usize;
    }
    let config = ModelConfig {
        input_dim: dims[0],
        enc_hidden: dims[1],
        dec_hidden: dims[2],
        latent_dim: dims[3],
        num_nodes: dims[4],
        context_dim: dims[5],
    };
    config.validate().map_err(|_| corrupt("invalid config block"))?;
    if let Some(want) = expected {
        if *want != config {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint holds {config:?}, expected {want:?}"
            )));
        }
    }
    let has_adam = match r.u32() {
        Some(0) => false,
        Some(1) => true,
        _ => return Err(corrupt("bad optimizer flag")),
    };
    let n = r.u64().ok_or_else(|| corrupt("truncated header"))? as usize;
    if n != ParamLayout::new(&config).total() {
        return Err(corrupt("parameter count does not match config"));
    }
    let params = r.f32s(n).ok_or_else(|| corrupt("truncated parameters"))?;
    let state = if has_adam {
        let step = r.u64().ok_or_else(|| corrupt("truncated optimizer state"))?;
        let m = r.f32s(n).ok_or_else(|| corrupt("truncated optimizer state"))?;
        let v = r.f32s(n).ok_or_else(|| corrupt("truncated optimizer state"))?;
        Some(AdamState { m, v, step })
    } else {
        None
    };
    if r.pos != bytes.len() {
        return Err(corrupt("trailing bytes"));
    }
    let model = VaeModel::from_params(config, params).map_err(|_| corrupt("non-finite parameters"))?;
    Ok((model, state))
}

pub fn load_checkpoint(
    path: impl AsRef<Path>,
    expected: Option<&ModelConfig>,
) -> Result<(VaeModel, Option<AdamState>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, expected, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vae::Gradients;
    use crate::train::adam::{adam_step, AdamParams};
    use tempfile::tempdir;

    fn cfg(k: usize) -> ModelConfig {
        ModelConfig {
            input_dim: 6,
            enc_hidden: 4,
            dec_hidden: 3,
            latent_dim: 2,
            num_nodes: k,
            context_dim: 2,
        }
    }

    #[test]
    fn round_trip_at_stored_precision() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let mut model = VaeModel::new(cfg(3), 1).unwrap();
        let mut state = AdamState::for_model(&model);
        let grads = Gradients(model.params().iter().map(|p| p * 0.3 + 0.01).collect());
        adam_step(&mut model, &grads, &mut state, AdamParams::default()).unwrap();

        save_checkpoint(&model, Some(&state), &path).unwrap();
        let (loaded, loaded_state) = load_checkpoint(&path, Some(&cfg(3))).unwrap();
        let loaded_state = loaded_state.unwrap();
        for (a, b) in model.params().iter().zip(loaded.params()) {
            assert_eq!((*a as f32) as f64, *b);
        }
        assert_eq!(loaded_state.step, 1);
        // Re-saving what was loaded is byte-identical.
        assert_eq!(
            encode_checkpoint(&loaded, Some(&loaded_state)),
            std::fs::read(&path).unwrap()
        );
        assert!(!dir.path().join("a.ckpt.tmp").exists());
    }

    #[test]
    fn truncated_and_mismatched_files() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("k3.ckpt");
        let model = VaeModel::new(cfg(3), 2).unwrap();
        save_checkpoint(&model, None, &path).unwrap();

        assert!(matches!(
            load_checkpoint(&path, Some(&cfg(2))),
            Err(Error::ShapeMismatch(_))
        ));

        let bytes = std::fs::read(&path).unwrap();
        for cut in [0, 7, 20, bytes.len() - 1] {
            let p = dir.path().join(format!("cut{cut}.ckpt"));
            std::fs::write(&p, &bytes[..cut]).unwrap();
            assert!(matches!(
                load_checkpoint(&p, None),
                Err(Error::CorruptCheckpoint { .. })
            ));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad, None, &path).is_err());
        assert!(load_checkpoint(dir.path().join("missing"), None).is_err());
    }
}
