//! Embedding files.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! b"EMB1" | count: u32 | dim: u32 | count * dim f32, row-major | ids?
//! ```
//!
//! The optional trailer holds one UTF-8 id per vector, each terminated by
//! `\n`; an empty line means the vector has no id. The text alternative is
//! one JSON object per line, `{"id": "...", "values": [...]}`. Readers
//! detect the format from the magic bytes.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EmbedError, EmbeddingVector};

pub const MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Error)]
pub enum EmbeddingFileError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("file is truncated: need {needed} bytes of float data, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("id trailer has {found} lines for {count} vectors")]
    IdCount { count: usize, found: usize },
    #[error("id trailer is not valid UTF-8")]
    IdEncoding,
    #[error("id `{0}` contains a line break")]
    IdLineBreak(String),
    #[error("value {value} of vector {row} does not fit in f32")]
    Unrepresentable { row: usize, value: f64 },
    #[error("line {line}: {message}")]
    Text { line: usize, message: String },
    #[error("vector {row}: {source}")]
    Invalid {
        row: usize,
        #[source]
        source: EmbedError,
    },
    #[error("too many vectors or dimensions for the binary header")]
    TooLarge,
}

fn uniform_dim(vectors: &[EmbeddingVector]) -> Result<usize, EmbeddingFileError> {
    let dim = vectors.first().map_or(0, EmbeddingVector::dim);
    for (row, v) in vectors.iter().enumerate() {
        if v.dim() != dim {
            return Err(EmbeddingFileError::Invalid {
                row,
                source: EmbedError::DimensionMismatch {
                    expected: dim,
                    got: v.dim(),
                },
            });
        }
    }
    Ok(dim)
}

/// Writes the binary format and returns the byte count. Values are narrowed
/// to `f32`.
pub fn write_binary<W: Write>(
    vectors: &[EmbeddingVector],
    mut sink: W,
) -> Result<usize, EmbeddingFileError> {
    let dim = uniform_dim(vectors)?;
    let count = u32::try_from(vectors.len()).map_err(|_| EmbeddingFileError::TooLarge)?;
    let dim32 = u32::try_from(dim).map_err(|_| EmbeddingFileError::TooLarge)?;

    let mut buf = Vec::with_capacity(12 + vectors.len() * dim * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&count.to_le_bytes());
    buf.extend_from_slice(&dim32.to_le_bytes());
    for (row, v) in vectors.iter().enumerate() {
        for &x in v.values() {
            let narrow = x as f32;
            if !narrow.is_finite() {
                return Err(EmbeddingFileError::Unrepresentable { row, value: x });
            }
            buf.extend_from_slice(&narrow.to_le_bytes());
        }
    }
    if vectors.iter().any(|v| v.id.is_some()) {
        for v in vectors {
            let id = v.id.as_deref().unwrap_or("");
            if id.contains(['\n', '\r']) {
                return Err(EmbeddingFileError::IdLineBreak(id.to_owned()));
            }
            buf.extend_from_slice(id.as_bytes());
            buf.push(b'\n');
        }
    }
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok(buf.len())
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32, EmbeddingFileError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4-byte slice")))
        .ok_or(EmbeddingFileError::Truncated {
            needed: at + 4,
            found: bytes.len(),
        })
}

fn decode_binary(bytes: &[u8]) -> Result<Vec<EmbeddingVector>, EmbeddingFileError> {
    let count = read_u32(bytes, 4)? as usize;
    let dim = read_u32(bytes, 8)? as usize;
    let body = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or(EmbeddingFileError::TooLarge)?;
    let data = &bytes[12..];
    if data.len() < body {
        return Err(EmbeddingFileError::Truncated {
            needed: body,
            found: data.len(),
        });
    }
    let (floats, trailer) = data.split_at(body);

    let ids: Option<Vec<&str>> = if trailer.is_empty() {
        None
    } else {
        let text = std::str::from_utf8(trailer).map_err(|_| EmbeddingFileError::IdEncoding)?;
        let text = text.strip_suffix('\n').unwrap_or(text);
        let lines: Vec<&str> = text.split('\n').collect();
        if lines.len() != count {
            return Err(EmbeddingFileError::IdCount {
                count,
                found: lines.len(),
            });
        }
        Some(lines)
    };

    let mut out = Vec::with_capacity(count);
    for row in 0..count {
        let values = floats[row * dim * 4..(row + 1) * dim * 4]
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4-byte chunk"))))
            .collect();
        let mut v = EmbeddingVector::new(values)
            .map_err(|source| EmbeddingFileError::Invalid { row, source })?;
        if let Some(ids) = &ids {
            if !ids[row].is_empty() {
                v.id = Some(ids[row].to_owned());
            }
        }
        out.push(v);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct TextRow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    values: Vec<f64>,
}

pub fn write_text<W: Write>(
    vectors: &[EmbeddingVector],
    mut sink: W,
) -> Result<usize, EmbeddingFileError> {
    let mut written = 0;
    for v in vectors {
        let row = TextRow {
            id: v.id.clone(),
            values: v.values().to_vec(),
        };
        let mut line = serde_json::to_vec(&row).map_err(io::Error::other)?;
        line.push(b'\n');
        sink.write_all(&line)?;
        written += line.len();
    }
    sink.flush()?;
    Ok(written)
}

fn decode_text(bytes: &[u8]) -> Result<Vec<EmbeddingVector>, EmbeddingFileError> {
    let text = std::str::from_utf8(bytes).map_err(|e| EmbeddingFileError::Text {
        line: 0,
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: TextRow = serde_json::from_str(line).map_err(|e| EmbeddingFileError::Text {
            line: i + 1,
            message: e.to_string(),
        })?;
        let mut v =
            EmbeddingVector::new(row.values).map_err(|source| EmbeddingFileError::Invalid {
                row: out.len(),
                source,
            })?;
        v.id = row.id;
        out.push(v);
    }
    uniform_dim(&out)?;
    Ok(out)
}

/// Decodes either format, picked by the leading magic bytes.
pub fn decode(bytes: &[u8]) -> Result<Vec<EmbeddingVector>, EmbeddingFileError> {
    if bytes.starts_with(MAGIC) {
        decode_binary(bytes)
    } else {
        decode_text(bytes)
    }
}

pub fn read<R: Read>(mut input: R) -> Result<Vec<EmbeddingVector>, EmbeddingFileError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    decode(&bytes)
}
