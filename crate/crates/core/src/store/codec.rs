//! Binary snippet-feature container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size   field
//! 0       4      magic "SNPF"
//! 4       4      version (u32) = 1
//! 8       4      feature dimension d (u32)
//! 12      4      snippet count T (u32)
//! 16      4*T*d  f32 payload, row-major
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"SNPF";
pub const FEATURE_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;
pub const DEFAULT_SNIPPET_LEN: usize = 16;

/// Per-video matrix of snippet feature vectors, one row per snippet.
#[derive(Debug, Clone, PartialEq)]
pub struct SnippetMatrix {
    values: Array2<f32>,
    snippet_len: usize,
}

impl SnippetMatrix {
    pub fn new(values: Array2<f32>, snippet_len: usize) -> Result<Self> {
        let m = SnippetMatrix {
            values,
            snippet_len,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn from_rows(rows: usize, dim: usize, data: Vec<f32>, snippet_len: usize) -> Result<Self> {
        let values = Array2::from_shape_vec((rows, dim), data)
            .map_err(|e| Error::validation(format!("snippet matrix shape: {e}")))?;
        Self::new(values, snippet_len)
    }

    /// Converts a 64-bit matrix to storage precision.
    pub fn from_f64(values: &Array2<f64>, snippet_len: usize) -> Result<Self> {
        Self::new(values.mapv(|v| v as f32), snippet_len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.nrows() == 0 || self.values.ncols() == 0 {
            return Err(Error::validation(format!(
                "snippet matrix must be non-empty, got {}x{}",
                self.values.nrows(),
                self.values.ncols()
            )));
        }
        if self.snippet_len == 0 {
            return Err(Error::validation("snippet_len must be at least 1"));
        }
        if let Some(pos) = self.values.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos / self.dim(), pos % self.dim());
            return Err(Error::validation(format!(
                "non-finite feature value at snippet {r}, dimension {c}"
            )));
        }
        Ok(())
    }

    pub fn snippets(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn snippet_len(&self) -> usize {
        self.snippet_len
    }

    pub fn values(&self) -> &Array2<f32> {
        &self.values
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.values.mapv(f64::from)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let (t, d) = self.values.dim();
        let mut buf = Vec::with_capacity(HEADER_LEN + 4 * t * d);
        buf.extend_from_slice(FEATURE_MAGIC);
        buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        buf.extend_from_slice(&u32_len(d)?.to_le_bytes());
        buf.extend_from_slice(&u32_len(t)?.to_le_bytes());
        for v in self.values.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        Ok(buf)
    }

    /// Decodes a payload; `origin` only labels errors.
    pub fn decode(bytes: &[u8], snippet_len: usize, origin: &Path) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format(
                origin,
                format!(
                    "truncated header: expected {HEADER_LEN} bytes, found {}",
                    bytes.len()
                ),
            ));
        }
        if &bytes[0..4] != FEATURE_MAGIC {
            return Err(Error::format(
                origin,
                format!("bad magic {:?}, expected \"SNPF\"", String::from_utf8_lossy(&bytes[0..4])),
            ));
        }
        let version = read_u32(bytes, 4);
        if version != FEATURE_VERSION {
            return Err(Error::format(
                origin,
                format!("unsupported version {version}, expected {FEATURE_VERSION}"),
            ));
        }
        let d = read_u32(bytes, 8) as usize;
        let t = read_u32(bytes, 12) as usize;
        let expected = HEADER_LEN + 4 * t * d;
        if bytes.len() != expected {
            return Err(Error::format(
                origin,
                format!(
                    "payload size mismatch: expected {expected} bytes for T={t}, d={d}, found {}",
                    bytes.len()
                ),
            ));
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::from_rows(t, d, data, snippet_len)
    }
}

pub fn write_feature_file(matrix: &SnippetMatrix, path: &Path) -> Result<()> {
    let bytes = matrix.encode()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_feature_file(path: &Path) -> Result<SnippetMatrix> {
    read_feature_file_with(path, DEFAULT_SNIPPET_LEN)
}

pub fn read_feature_file_with(path: &Path, snippet_len: usize) -> Result<SnippetMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    SnippetMatrix::decode(&bytes, snippet_len, path)
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn u32_len(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::validation(format!("dimension {n} exceeds u32")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn smallest_layout_is_header_plus_payload() {
        let m = SnippetMatrix::new(array![[0.0f32, 0.0]], 16).unwrap();
        let bytes = m.encode().unwrap();
        assert_eq!(bytes.len(), 24);
        assert_eq!(&bytes[..4], b"SNPF");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[1, 0, 0, 0]);
        assert!(bytes[16..].iter().all(|&b| b == 0));
    }

    #[test]
    fn non_finite_is_rejected() {
        let err = SnippetMatrix::new(array![[1.0f32, f32::NAN]], 16).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        let err = SnippetMatrix::new(array![[f32::INFINITY]], 16).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn bad_magic_and_version() {
        let m = SnippetMatrix::new(array![[1.0f32, 2.0]], 16).unwrap();
        let mut bytes = m.encode().unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        let err = SnippetMatrix::decode(&bytes, 16, Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");

        let mut bytes = m.encode().unwrap();
        bytes[4] = 2;
        let err = SnippetMatrix::decode(&bytes, 16, Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn truncation_names_expected_and_actual() {
        let m = SnippetMatrix::new(Array2::from_elem((3, 4), 0.5f32), 16).unwrap();
        let bytes = m.encode().unwrap();
        let cut = &bytes[..bytes.len() - 5];
        let err = SnippetMatrix::decode(cut, 16, Path::new("cut.snpf")).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Format { .. }));
        assert!(msg.contains("expected 64"), "{msg}");
        assert!(msg.contains("found 59"), "{msg}");
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(t in 1usize..=32, d in 1usize..=64, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f32> = (0..t * d).map(|_| rng.random_range(-1e6f32..1e6)).collect();
            let m = SnippetMatrix::from_rows(t, d, data, 16).unwrap();
            let back = SnippetMatrix::decode(&m.encode().unwrap(), 16, Path::new("p")).unwrap();
            let same = m.values().iter().zip(back.values().iter()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
            prop_assert_eq!(back.values().dim(), (t, d));
        }
    }
}
