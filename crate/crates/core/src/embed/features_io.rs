//! Feature files.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! | bytes | content |
//! |---|---|
//! | 4 | magic `HARF` |
//! | 1 | version (1) |
//! | 4 | record count, u32 |
//! | 4 | dimension, u32 (2048) |
//!
//! then per record: id length (u16), id (UTF-8), label index (u8, walk=0,
//! run=1, bike_low=2, bike_high=3), `dimension` f32 values.
//!
//! The CSV alternative has a header `id,label,f0,...,f2047` and one row per
//! record with the label written by name.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{FeatureVector, FEATURE_DIM};
use crate::error::{HarError, Result};
use crate::label::ActivityLabel;

pub const FEATURE_FILE_MAGIC: &[u8; 4] = b"HARF";
pub const FEATURE_FILE_VERSION: u8 = 1;

pub fn write_features_binary(vectors: &[FeatureVector], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_binary(vectors, &mut w)?;
    w.flush()?;
    Ok(())
}

pub(crate) fn encode_binary<W: Write>(vectors: &[FeatureVector], w: &mut W) -> Result<()> {
    w.write_all(FEATURE_FILE_MAGIC)?;
    w.write_u8(FEATURE_FILE_VERSION)?;
    w.write_u32::<LittleEndian>(vectors.len() as u32)?;
    w.write_u32::<LittleEndian>(FEATURE_DIM as u32)?;
    for v in vectors {
        let id = v.source.as_bytes();
        let len = u16::try_from(id.len())
            .map_err(|_| HarError::Format(format!("image id '{}' is too long", v.source)))?;
        w.write_u16::<LittleEndian>(len)?;
        w.write_all(id)?;
        w.write_u8(v.label.index() as u8)?;
        for &x in &v.values {
            w.write_f32::<LittleEndian>(x)?;
        }
    }
    Ok(())
}

pub fn read_features_binary(path: &Path) -> Result<Vec<FeatureVector>> {
    decode_binary(&mut BufReader::new(File::open(path)?))
}

pub(crate) fn decode_binary<R: Read>(r: &mut R) -> Result<Vec<FeatureVector>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FEATURE_FILE_MAGIC {
        return Err(HarError::Format("not a feature file (bad magic)".into()));
    }
    let version = r.read_u8()?;
    if version != FEATURE_FILE_VERSION {
        return Err(HarError::Format(format!("unsupported feature file version {version}")));
    }
    let count = r.read_u32::<LittleEndian>()? as usize;
    let dim = r.read_u32::<LittleEndian>()? as usize;
    if dim != FEATURE_DIM {
        return Err(HarError::Format(format!("feature dimension {dim}, expected {FEATURE_DIM}")));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.read_u16::<LittleEndian>()? as usize;
        let mut id = vec![0u8; len];
        r.read_exact(&mut id)?;
        let id = String::from_utf8(id).map_err(|_| HarError::Format("image id is not UTF-8".into()))?;
        let label_idx = r.read_u8()? as usize;
        let label = ActivityLabel::from_index(label_idx)
            .ok_or_else(|| HarError::Format(format!("bad label index {label_idx}")))?;
        let mut values = vec![0.0f32; dim];
        r.read_f32_into::<LittleEndian>(&mut values)?;
        out.push(FeatureVector::new(values, label, id)?);
    }
    Ok(out)
}

pub fn write_features_csv(vectors: &[FeatureVector], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "id,label")?;
    for k in 0..FEATURE_DIM {
        write!(w, ",f{k}")?;
    }
    writeln!(w)?;
    for v in vectors {
        if v.source.contains(',') || v.source.contains('\n') {
            return Err(HarError::Format(format!("image id '{}' cannot be written to CSV", v.source)));
        }
        write!(w, "{},{}", v.source, v.label)?;
        for x in &v.values {
            write!(w, ",{x}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features_csv(path: &Path) -> Result<Vec<FeatureVector>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.starts_with("id,label") => {}
        _ => return Err(HarError::Parse { line: 1, message: "missing feature CSV header".into() }),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| HarError::Parse { line: i + 1, message };
        let mut fields = line.split(',');
        let id = fields.next().ok_or_else(|| err("missing id".into()))?.to_string();
        let label: ActivityLabel = fields
            .next()
            .ok_or_else(|| err("missing label".into()))?
            .parse()
            .map_err(|e: HarError| err(e.to_string()))?;
        let values = fields
            .map(|f| f.parse::<f32>().map_err(|_| err(format!("'{f}' is not a number"))))
            .collect::<Result<Vec<f32>>>()?;
        out.push(FeatureVector::new(values, label, id).map_err(|e| err(e.to_string()))?);
    }
    Ok(out)
}

/// Writes CSV when the path ends in `.csv`, the binary layout otherwise.
pub fn write_features(vectors: &[FeatureVector], path: &Path) -> Result<()> {
    if is_csv(path) {
        write_features_csv(vectors, path)
    } else {
        write_features_binary(vectors, path)
    }
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureVector>> {
    if is_csv(path) {
        read_features_csv(path)
    } else {
        read_features_binary(path)
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}
