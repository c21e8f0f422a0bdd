//! Precomputed embedding vectors.
//!
//! Binary layout (`BPC1`), all little-endian:
//!
//! ```text
//! "BPC1" | count: u32 | dim: u32 | count * dim f32, row-major
//! ```
//!
//! Row `i` gets id `"i"`. The file length must be exactly
//! `12 + 4 * count * dim`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::ItemVector;

pub const BINARY_MAGIC: &[u8; 4] = b"BPC1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingFormat {
    Csv,
    Binary,
}

pub fn load_embeddings(path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<Vec<ItemVector>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let tag = |e: Error| match e {
        Error::InvalidInput(m) => Error::InvalidInput(format!("{}: {m}", path.display())),
        other => other,
    };
    match format {
        EmbeddingFormat::Binary => parse_binary(&bytes).map_err(tag),
        EmbeddingFormat::Csv => parse_csv(&bytes).map_err(tag),
    }
}

pub fn parse_binary(bytes: &[u8]) -> Result<Vec<ItemVector>> {
    if bytes.len() < 12 {
        return Err(Error::InvalidInput(format!(
            "binary embeddings need a 12-byte header, file has {} bytes",
            bytes.len()
        )));
    }
    if &bytes[..4] != BINARY_MAGIC {
        return Err(Error::UnsupportedFormat(format!(
            "magic {:?}, expected \"BPC1\"",
            String::from_utf8_lossy(&bytes[..4])
        )));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 12 + 4 * count as u64 * dim as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::InvalidInput(format!(
            "binary embeddings with count={count} dim={dim} need {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let payload = &bytes[12..];
    (0..count)
        .map(|row| {
            let values = payload[row * dim * 4..(row + 1) * dim * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            ItemVector::embedding(row.to_string(), values)
                .map_err(|e| Error::InvalidInput(format!("row {row}: {e}")))
        })
        .collect()
}

pub fn parse_csv(bytes: &[u8]) -> Result<Vec<ItemVector>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut out = Vec::new();
    let mut arity = None;
    for record in reader.records() {
        let record = record.map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "line {line}: expected an id followed by at least one value"
            )));
        }
        match arity {
            None => arity = Some(record.len()),
            Some(a) if a != record.len() => {
                return Err(Error::InvalidInput(format!(
                    "line {line}: {} columns, expected {a}",
                    record.len()
                )))
            }
            _ => {}
        }
        let values = record
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<f32>()
                    .map_err(|_| Error::InvalidInput(format!("line {line}: bad number {f:?}")))
            })
            .collect::<Result<Vec<f32>>>()?;
        out.push(
            ItemVector::embedding(&record[0], values)
                .map_err(|e| Error::InvalidInput(format!("line {line}: {e}")))?,
        );
    }
    Ok(out)
}

/// Writes vectors in the `BPC1` layout; ids are not stored.
pub fn encode_binary(items: &[ItemVector]) -> Result<Vec<u8>> {
    let dim = items.first().map_or(0, ItemVector::dim);
    if let Some(bad) = items.iter().find(|i| i.dim() != dim) {
        return Err(Error::invalid(format!(
            "item {} has dim {}, expected {dim}",
            bad.id(),
            bad.dim()
        )));
    }
    let mut out = Vec::with_capacity(12 + 4 * items.len() * dim);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(items.len() as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for item in items {
        for v in item.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_binary(path: impl AsRef<Path>, items: &[ItemVector]) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_binary(items)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_csv(path: impl AsRef<Path>, items: &[ItemVector]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for item in items {
        let mut line = item.id().to_owned();
        for v in item.values() {
            line.push(',');
            line.push_str(&v.to_string());
        }
        line.push('\n');
        w.write_all(line.as_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
