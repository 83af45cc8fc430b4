//! "MLPW" parameter container.
//!
//! ```text
//! magic "MLPW" | version u32 = 1 | depth L u32
//! hidden activation code u32 | hidden slope f32 | output activation code u32
//! layer sizes (L + 1) x u32
//! provenance length u32 | provenance bytes (UTF-8 JSON, may be empty)
//! per layer: weight out x in f32 row-major, then bias out x f32
//! ```
//! All integers and floats little-endian.

use std::fs;
use std::path::Path;

use super::{Activation, MlpParams, MlpSpec};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MLPW";
const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(params: &MlpParams, provenance: &str) -> Result<Vec<u8>> {
    params.validate()?;
    let spec = &params.spec;
    let mut buf = Vec::new();
    let put_u32 = |buf: &mut Vec<u8>, v: usize| -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::validation("checkpoint field exceeds u32"))?;
        buf.extend_from_slice(&v.to_le_bytes());
        Ok(())
    };
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    put_u32(&mut buf, spec.depth())?;
    let (hc, hp) = spec.hidden_activation.code();
    let (oc, _) = spec.output_activation.code();
    buf.extend_from_slice(&hc.to_le_bytes());
    buf.extend_from_slice(&hp.to_le_bytes());
    buf.extend_from_slice(&oc.to_le_bytes());
    for &s in &spec.layer_sizes {
        put_u32(&mut buf, s)?;
    }
    put_u32(&mut buf, provenance.len())?;
    buf.extend_from_slice(provenance.as_bytes());
    for v in params.values() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.origin,
                format!(
                    "truncated checkpoint: need {} bytes at offset {}, file has {}",
                    n,
                    self.pos,
                    self.bytes.len()
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self) -> Result<f32> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Returns the parameters and the provenance string.
pub fn decode_checkpoint(bytes: &[u8], origin: &Path) -> Result<(MlpParams, String)> {
    let mut r = Reader { bytes, pos: 0, origin };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::format(origin, "bad magic, expected \"MLPW\""));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(origin, format!("unsupported checkpoint version {version}")));
    }
    let depth = r.u32()? as usize;
    if depth == 0 || depth > 64 {
        return Err(Error::format(origin, format!("implausible layer count {depth}")));
    }
    let (hc, hp, oc) = (r.u32()?, r.f32()?, r.u32()?);
    let bad_act = || Error::format(origin, "unknown activation code");
    let hidden = Activation::from_code(hc, hp).ok_or_else(bad_act)?;
    let output = Activation::from_code(oc, 0.0).ok_or_else(bad_act)?;
    let sizes = (0..=depth).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let prov_len = r.u32()? as usize;
    let provenance = String::from_utf8(r.take(prov_len)?.to_vec())
        .map_err(|_| Error::format(origin, "provenance is not UTF-8"))?;
    let spec = MlpSpec::new(sizes, hidden, output);
    let mut params = MlpParams::zeros(&spec).map_err(|e| Error::format(origin, e.to_string()))?;
    let expected = params.param_count() * 4;
    if r.bytes.len() - r.pos != expected {
        return Err(Error::format(
            origin,
            format!(
                "payload size mismatch: expected {expected} bytes, found {}",
                r.bytes.len() - r.pos
            ),
        ));
    }
    for v in params.values_mut() {
        *v = f64::from(r.f32()?);
    }
    params.validate().map_err(|e| Error::format(origin, e.to_string()))?;
    Ok((params, provenance))
}

pub fn write_checkpoint(params: &MlpParams, provenance: &str, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(params, provenance)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<(MlpParams, String)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
