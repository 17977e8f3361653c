//! On-disk formats for ingestion: the binary feature matrix and the
//! item/class CSV.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

pub const FEATURES_MAGIC: &[u8; 8] = b"FMAT0001";

/// Writes `n`, `d` as u64 and the entries as f32, all little-endian.
pub fn write_features<W: Write>(x: &DenseMatrix, mut w: W) -> Result<()> {
    w.write_all(FEATURES_MAGIC)?;
    w.write_all(&(x.rows() as u64).to_le_bytes())?;
    w.write_all(&(x.cols() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(x.values().len() * 4);
    for &v in x.values() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_features<R: Read>(mut r: R) -> Result<DenseMatrix> {
    let mut header = [0u8; 24];
    r.read_exact(&mut header)
        .map_err(|_| Error::format("features", "truncated header"))?;
    if &header[..8] != FEATURES_MAGIC {
        return Err(Error::format("features", "bad magic header"));
    }
    let n = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes")) as usize;
    let d = u64::from_le_bytes(header[16..24].try_into().expect("8 bytes")) as usize;
    let len = n
        .checked_mul(d)
        .and_then(|m| m.checked_mul(4))
        .ok_or_else(|| Error::format("features", format!("{n} x {d} overflows")))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != len {
        return Err(Error::format(
            "features",
            format!(
                "expected {len} payload bytes for {n} x {d}, found {}",
                bytes.len()
            ),
        ));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    DenseMatrix::new(n, d, values).map_err(|e| Error::format("features", e.to_string()))
}

/// One row of the item/class mapping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: String,
    pub class_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thumbnail: Option<String>,
}

/// Reads `item_id,class_id[,thumbnail]` rows in file order. Row `i`
/// describes feature row `i`.
pub fn read_classes<R: Read>(r: R) -> Result<Vec<ItemRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = reader
        .headers()
        .map_err(|e| Error::format("classes", e.to_string()))?
        .clone();
    if headers.get(0) != Some("item_id") || headers.get(1) != Some("class_id") {
        return Err(Error::format(
            "classes",
            "header must start with item_id,class_id",
        ));
    }
    let mut out = Vec::new();
    for (line, row) in reader.deserialize::<ItemRecord>().enumerate() {
        let mut rec =
            row.map_err(|e| Error::format("classes", format!("row {}: {e}", line + 1)))?;
        if rec.item_id.is_empty() || rec.class_id.is_empty() {
            return Err(Error::format(
                "classes",
                format!("row {}: empty id", line + 1),
            ));
        }
        if rec.thumbnail.as_deref() == Some("") {
            rec.thumbnail = None;
        }
        out.push(rec);
    }
    if out.is_empty() {
        return Err(Error::format("classes", "no items"));
    }
    Ok(out)
}

pub fn write_classes<W: Write>(items: &[ItemRecord], w: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    let with_thumbs = items.iter().any(|i| i.thumbnail.is_some());
    let io_err = |e: csv::Error| Error::format("classes", e.to_string());
    if with_thumbs {
        writer
            .write_record(["item_id", "class_id", "thumbnail"])
            .map_err(io_err)?;
    } else {
        writer
            .write_record(["item_id", "class_id"])
            .map_err(io_err)?;
    }
    for it in items {
        if with_thumbs {
            let thumb = it.thumbnail.as_deref().unwrap_or("");
            writer
                .write_record([it.item_id.as_str(), it.class_id.as_str(), thumb])
                .map_err(io_err)?;
        } else {
            writer
                .write_record([it.item_id.as_str(), it.class_id.as_str()])
                .map_err(io_err)?;
        }
    }
    writer.flush()?;
    Ok(())
}
