//! Checkpoint format:
//!
//! ```text
//! D3FL1\n
//! <H> <I> <O>\n
//! <param_count little-endian f64 values, flat layout order>
//! ```

use std::fs;
use std::path::Path;

use super::{ModelParams, ModelShape};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "D3FL1";

impl ModelParams {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let s = self.shape();
        let mut out = format!("{CHECKPOINT_MAGIC}\n{} {} {}\n", s.hidden, s.input, s.output).into_bytes();
        out.reserve(self.len() * 8);
        for v in self.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<ModelParams> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let magic = CHECKPOINT_MAGIC.as_bytes();
        if bytes.len() < magic.len() + 1 || &bytes[..magic.len()] != magic || bytes[magic.len()] != b'\n' {
            return Err(bad("missing D3FL1 magic"));
        }
        let rest = &bytes[magic.len() + 1..];
        let nl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated header"))?;
        let header = std::str::from_utf8(&rest[..nl]).map_err(|_| bad("header is not text"))?;
        let dims: Vec<usize> = header
            .split(' ')
            .map(|t| t.parse().map_err(|_| bad("dimensions must be decimal integers")))
            .collect::<Result<_>>()?;
        if dims.len() != 3 {
            return Err(bad("header must hold H I O"));
        }
        let shape = ModelShape::new(dims[0], dims[1], dims[2])?;
        let body = &rest[nl + 1..];
        if body.len() != shape.param_count() * 8 {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter bytes, found {}",
                shape.param_count() * 8,
                body.len()
            )));
        }
        let flat = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        ModelParams::unflatten(shape, flat)
    }
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    fs::write(path, params.to_checkpoint_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    ModelParams::from_checkpoint_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn header_layout() {
        let p = ModelParams::zeros(ModelShape::new(3, 1, 2).unwrap());
        let bytes = p.to_checkpoint_bytes();
        assert!(bytes.starts_with(b"D3FL1\n3 1 2\n"));
        assert_eq!(bytes.len(), 12 + p.len() * 8);
    }

    #[test]
    fn round_trip_is_bitwise() {
        let p = ModelParams::init(ModelShape::new(7, 1, 2).unwrap(), &mut RngStream::new(1, "c"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.d3fl");
        save_checkpoint(&p, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), p);
    }

    #[test]
    fn rejects_corruption() {
        let p = ModelParams::zeros(ModelShape::new(2, 1, 1).unwrap());
        let mut bytes = p.to_checkpoint_bytes();
        bytes.pop();
        assert!(ModelParams::from_checkpoint_bytes(&bytes).is_err());
        assert!(ModelParams::from_checkpoint_bytes(b"D3FL2\n1 1 1\n").is_err());
        assert!(ModelParams::from_checkpoint_bytes(b"D3FL1\n1 x 1\n").is_err());
    }
}
