use super::CodecError;
use crate::numeric::Matrix;

pub const DIVT_MAGIC: [u8; 4] = *b"DIVT";
pub const DIVT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

/// Row-major `f32` matrix as stored in a DIVT file:
/// `"DIVT" | version u32 LE | rows u64 LE | cols u64 LE | rows·cols f32 LE`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl TensorFile {
    pub fn new(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self, CodecError> {
        if rows == 0 || cols == 0 {
            return Err(CodecError::EmptyTensor {
                rows: rows as u64,
                cols: cols as u64,
            });
        }
        let expected = rows.checked_mul(cols).ok_or_else(|| CodecError::DimOverflow {
            dims: vec![rows as u64, cols as u64],
        })?;
        if values.len() != expected {
            return Err(CodecError::InvalidShape(format!(
                "{rows}x{cols} tensor needs {expected} values, got {}",
                values.len()
            )));
        }
        check_finite(&values)?;
        Ok(Self { rows, cols, values })
    }

    /// Narrows a matrix to `f32`; values that overflow `f32` are rejected.
    pub fn from_matrix(m: &Matrix) -> Result<Self, CodecError> {
        Self::new(m.rows(), m.cols(), m.as_slice().iter().map(|&v| v as f32).collect())
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::new(
            self.rows,
            self.cols,
            self.values.iter().map(|&v| f64::from(v)).collect(),
        )
        .expect("shape checked at construction")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

fn check_finite(values: &[f32]) -> Result<(), CodecError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(CodecError::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

pub fn decode_tensor(bytes: &[u8]) -> Result<TensorFile, CodecError> {
    if bytes.len() < 4 {
        return Err(CodecError::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    if bytes[..4] != DIVT_MAGIC {
        return Err(CodecError::BadMagic {
            expected: DIVT_MAGIC.to_vec(),
            found: bytes[..4].to_vec(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(CodecError::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != DIVT_VERSION {
        return Err(CodecError::BadVersion(version));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    if rows == 0 || cols == 0 {
        return Err(CodecError::EmptyTensor { rows, cols });
    }
    let payload_len = usize::try_from(rows)
        .ok()
        .zip(usize::try_from(cols).ok())
        .and_then(|(r, c)| r.checked_mul(c))
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or(CodecError::DimOverflow {
            dims: vec![rows, cols],
        })?;
    if bytes.len() < payload_len {
        return Err(CodecError::Truncated {
            needed: payload_len,
            available: bytes.len(),
        });
    }
    if bytes.len() > payload_len {
        return Err(CodecError::TrailingBytes {
            extra: bytes.len() - payload_len,
        });
    }
    let values: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    TensorFile::new(rows as usize, cols as usize, values)
}

pub fn encode_tensor(t: &TensorFile) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * t.values.len());
    out.extend_from_slice(&DIVT_MAGIC);
    out.extend_from_slice(&DIVT_VERSION.to_le_bytes());
    out.extend_from_slice(&(t.rows as u64).to_le_bytes());
    out.extend_from_slice(&(t.cols as u64).to_le_bytes());
    for v in &t.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}
