//! Two on-disk layouts for an index.
//!
//! * Pair: `<name>.meta.json` holds the header and per-record metadata;
//!   `<name>.f32` holds every record's values, record-major, as little-endian
//!   `f32` with no framing.
//! * JSON lines: a header line followed by one record per line, values as
//!   base64 of the same little-endian `f32` bytes.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{IndexError, IndexRecord, RetrievalIndex};
use crate::descriptor::{ExtractionConfig, PyramidFeature, Variant};
use crate::gabor::RegionFeatureBlock;
use crate::pyramid::{RegionLayout, Scheme};

pub const INDEX_FORMAT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "partpyr-index";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    scheme: Scheme,
    variant: Variant,
    fingerprint: String,
    total_len: usize,
    record_count: usize,
    config: ExtractionConfig,
    layout: RegionLayout,
}

#[derive(Serialize, Deserialize)]
struct RecordMeta {
    model_id: String,
    view_id: u32,
    category: String,
    reliability: Vec<f64>,
    empty_flags: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct MetaFile {
    #[serde(flatten)]
    header: Header,
    records: Vec<RecordMeta>,
}

#[derive(Serialize, Deserialize)]
struct JsonlRecord {
    #[serde(flatten)]
    meta: RecordMeta,
    values_b64: String,
}

fn header(index: &RetrievalIndex) -> Header {
    Header {
        format: FORMAT_TAG.to_string(),
        version: INDEX_FORMAT_VERSION,
        scheme: index.layout.scheme.clone(),
        variant: index.variant,
        fingerprint: index.fingerprint.clone(),
        total_len: index.total_len(),
        record_count: index.records.len(),
        config: index.config.clone(),
        layout: index.layout.clone(),
    }
}

fn check_header(h: &Header) -> Result<(), IndexError> {
    if h.format != FORMAT_TAG {
        return Err(IndexError::Format(format!("unexpected format tag `{}`", h.format)));
    }
    if h.version != INDEX_FORMAT_VERSION {
        return Err(IndexError::Format(format!("unsupported version {}", h.version)));
    }
    let expected = crate::descriptor::feature_len(&h.layout, h.config.gabor.orientations.len());
    if expected != h.total_len {
        return Err(IndexError::Format(format!("total_len {} does not match layout ({expected})", h.total_len)));
    }
    Ok(())
}

fn meta(r: &IndexRecord) -> RecordMeta {
    RecordMeta {
        model_id: r.model_id.clone(),
        view_id: r.view_id,
        category: r.category.clone(),
        reliability: r.feature.reliability.clone(),
        empty_flags: r.feature.empty_flags.clone(),
    }
}

fn value_bytes(feature: &PyramidFeature) -> Vec<u8> {
    feature.values().flat_map(f32::to_le_bytes).collect()
}

fn decode_values(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

fn rebuild(h: &Header, m: RecordMeta, values: &[f32]) -> Result<IndexRecord, IndexError> {
    let regions = h.layout.regions.len();
    if m.reliability.len() != regions || m.empty_flags.len() != regions {
        return Err(IndexError::Format(format!(
            "record ({}, {}) has {} reliabilities for {regions} regions",
            m.model_id,
            m.view_id,
            m.reliability.len()
        )));
    }
    let orientations = h.config.gabor.orientations.len();
    let mut offset = 0;
    let mut blocks = Vec::with_capacity(regions);
    for r in &h.layout.regions {
        let n = r.grid * r.grid * orientations;
        blocks.push(RegionFeatureBlock {
            grid: r.grid,
            values: values[offset..offset + n].to_vec(),
        });
        offset += n;
    }
    Ok(IndexRecord {
        model_id: m.model_id,
        view_id: m.view_id,
        category: m.category,
        feature: PyramidFeature {
            scheme: h.layout.scheme.clone(),
            blocks,
            reliability: m.reliability,
            empty_flags: m.empty_flags,
            importance: h.layout.importances(),
        },
    })
}

/// Writes the metadata JSON and the raw `f32` payload.
pub fn write_index_pair<M: Write, P: Write>(index: &RetrievalIndex, meta_out: M, payload_out: P) -> Result<(), IndexError> {
    let file = MetaFile {
        header: header(index),
        records: index.records.iter().map(meta).collect(),
    };
    let mut meta_out = BufWriter::new(meta_out);
    serde_json::to_writer(&mut meta_out, &file).map_err(|e| IndexError::Format(e.to_string()))?;
    meta_out.write_all(b"\n")?;
    meta_out.flush()?;
    let mut payload = BufWriter::new(payload_out);
    for r in &index.records {
        payload.write_all(&value_bytes(&r.feature))?;
    }
    payload.flush()?;
    Ok(())
}

pub fn read_index_pair<M: Read, P: Read>(meta_in: M, mut payload_in: P) -> Result<RetrievalIndex, IndexError> {
    let file: MetaFile =
        serde_json::from_reader(BufReader::new(meta_in)).map_err(|e| IndexError::Format(e.to_string()))?;
    let h = file.header;
    check_header(&h)?;
    if file.records.len() != h.record_count {
        return Err(IndexError::Format("record_count does not match records".into()));
    }
    let mut bytes = Vec::new();
    payload_in.read_to_end(&mut bytes)?;
    if bytes.len() != h.total_len * h.record_count * 4 {
        return Err(IndexError::Format(format!(
            "payload has {} bytes, expected {}",
            bytes.len(),
            h.total_len * h.record_count * 4
        )));
    }
    let values = decode_values(&bytes);
    let records = file
        .records
        .into_iter()
        .zip(values.chunks_exact(h.total_len.max(1)))
        .map(|(m, v)| rebuild(&h, m, v))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RetrievalIndex {
        layout: h.layout,
        variant: h.variant,
        config: h.config,
        fingerprint: h.fingerprint,
        records,
    })
}

pub fn write_index_jsonl<W: Write>(index: &RetrievalIndex, out: W) -> Result<(), IndexError> {
    let mut out = BufWriter::new(out);
    let fmt = |e: serde_json::Error| IndexError::Format(e.to_string());
    serde_json::to_writer(&mut out, &header(index)).map_err(fmt)?;
    out.write_all(b"\n")?;
    for r in &index.records {
        let line = JsonlRecord {
            meta: meta(r),
            values_b64: B64.encode(value_bytes(&r.feature)),
        };
        serde_json::to_writer(&mut out, &line).map_err(fmt)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_index_jsonl<R: Read>(input: R) -> Result<RetrievalIndex, IndexError> {
    let fmt = |e: serde_json::Error| IndexError::Format(e.to_string());
    let mut lines = BufReader::new(input).lines();
    let first = lines.next().ok_or_else(|| IndexError::Format("empty file".into()))??;
    let h: Header = serde_json::from_str(&first).map_err(fmt)?;
    check_header(&h)?;
    let mut records = Vec::with_capacity(h.record_count);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlRecord = serde_json::from_str(&line).map_err(fmt)?;
        let bytes = B64
            .decode(rec.values_b64.as_bytes())
            .map_err(|e| IndexError::Format(e.to_string()))?;
        if bytes.len() != h.total_len * 4 {
            return Err(IndexError::Format("record payload length mismatch".into()));
        }
        records.push(rebuild(&h, rec.meta, &decode_values(&bytes))?);
    }
    if records.len() != h.record_count {
        return Err(IndexError::Format("record_count does not match records".into()));
    }
    Ok(RetrievalIndex {
        layout: h.layout,
        variant: h.variant,
        config: h.config,
        fingerprint: h.fingerprint,
        records,
    })
}

/// `(<dir>/<name>.meta.json, <dir>/<name>.f32)`.
pub fn index_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{name}.meta.json")), dir.join(format!("{name}.f32")))
}

pub fn save_index(index: &RetrievalIndex, dir: &Path, name: &str) -> Result<(PathBuf, PathBuf), IndexError> {
    fs::create_dir_all(dir)?;
    let (meta, payload) = index_paths(dir, name);
    write_index_pair(index, fs::File::create(&meta)?, fs::File::create(&payload)?)?;
    Ok((meta, payload))
}

/// Loads either layout. `path` may be a `.jsonl` file, a `.meta.json` file,
/// or the shared `<dir>/<name>` prefix of a pair.
pub fn load_index(path: &Path) -> Result<RetrievalIndex, IndexError> {
    let s = path.to_string_lossy();
    if s.ends_with(".jsonl") {
        return read_index_jsonl(fs::File::open(path)?);
    }
    let prefix = s
        .strip_suffix(".meta.json")
        .or_else(|| s.strip_suffix(".f32"))
        .unwrap_or(&s)
        .to_string();
    let meta = PathBuf::from(format!("{prefix}.meta.json"));
    let payload = PathBuf::from(format!("{prefix}.f32"));
    read_index_pair(fs::File::open(meta)?, fs::File::open(payload)?)
}
