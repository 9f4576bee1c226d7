//! Checkpoints: a scene JSON file plus a raw parameter blob.
//!
//! Blob layout: `u64` little-endian count `n`, then `n` little-endian `f64`.

use crate::error::{Error, Result};
use crate::scene::Scene;
use std::path::Path;

pub fn theta_to_bytes(theta: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * theta.len());
    out.extend_from_slice(&(theta.len() as u64).to_le_bytes());
    for v in theta {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn theta_from_bytes(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() < 8 {
        return Err(Error::config("parameter blob is shorter than its header"));
    }
    let n = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let body = &bytes[8..];
    if body.len() != n.checked_mul(8).ok_or_else(|| Error::config("parameter blob length overflows"))? {
        return Err(Error::config(format!(
            "parameter blob declares {n} values but holds {} bytes",
            body.len()
        )));
    }
    Ok(body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

pub fn write_theta(path: impl AsRef<Path>, theta: &[f64]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, theta_to_bytes(theta)).map_err(|e| Error::io(path, e))
}

pub fn read_theta(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    theta_from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Write `<stem>.json` (scene with `theta` applied) and `<stem>.theta`.
pub fn write_checkpoint(dir: impl AsRef<Path>, stem: &str, scene: &Scene, theta: &[f64]) -> Result<()> {
    let dir = dir.as_ref();
    let mut s = scene.clone();
    s.params.set_values(theta)?;
    s.save(dir.join(format!("{stem}.json")))?;
    write_theta(dir.join(format!("{stem}.theta")), theta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_round_trip_and_length_check() {
        let th = vec![1.5, -0.0, f64::MIN_POSITIVE, 3e300];
        let b = theta_to_bytes(&th);
        assert_eq!(b.len(), 8 + 32);
        assert_eq!(&b[..8], &4u64.to_le_bytes());
        assert_eq!(theta_from_bytes(&b).unwrap(), th);
        assert!(theta_from_bytes(&b[..b.len() - 1]).is_err());
        assert!(theta_from_bytes(&b[..4]).is_err());
    }
}
