//! Retrieval index construction, persistence, and synthetic datasets.
//!
//! Model views arrive as part-labeled polyline documents (the same format as
//! query sketches). They are normalized, described, and stored together with
//! the fingerprint of the extraction parameters so that queries built with
//! different parameters are rejected.

mod persist;
pub mod synth;

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::descriptor::{DescriptorError, ExtractionConfig, Extractor, PyramidFeature, Variant};
use crate::pyramid::RegionLayout;
use crate::sketch_model::{normalize, MatchMode, SegmentedSketch};

pub use persist::{
    index_paths, load_index, read_index_jsonl, read_index_pair, save_index, write_index_jsonl, write_index_pair,
    INDEX_FORMAT_VERSION,
};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("duplicate record (model {0}, view {1})")]
    DuplicateRecord(String, u32),
    #[error("view document {0} lacks a {1}")]
    MissingLabel(usize, &'static str),
    #[error("view document {index} has canvas {found}, expected {expected}")]
    CanvasMismatch { index: usize, found: f64, expected: f64 },
    #[error("variant {0} cannot be indexed")]
    UnsupportedVariant(Variant),
    #[error("parameter fingerprint mismatch: index {index}, query {query}")]
    FingerprintMismatch { index: String, query: String },
    #[error("view document {index}: {source}")]
    Extraction {
        index: usize,
        #[source]
        source: DescriptorError,
    },
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Format(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndexRecord {
    pub model_id: String,
    pub view_id: u32,
    pub category: String,
    pub feature: PyramidFeature,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalIndex {
    pub layout: RegionLayout,
    pub variant: Variant,
    pub config: ExtractionConfig,
    pub fingerprint: String,
    pub records: Vec<IndexRecord>,
}

impl RetrievalIndex {
    pub fn total_len(&self) -> usize {
        crate::descriptor::feature_len(&self.layout, self.config.gabor.orientations.len())
    }

    /// Distinct model ids.
    pub fn models(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.model_id.as_str()).collect()
    }

    /// Number of distinct models per category label.
    pub fn models_in_category(&self, category: &str) -> usize {
        self.records
            .iter()
            .filter(|r| r.category == category)
            .map(|r| r.model_id.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub fn category_of(&self, model_id: &str) -> Option<&str> {
        self.records
            .iter()
            .find(|r| r.model_id == model_id)
            .map(|r| r.category.as_str())
    }

    /// Rejects queries extracted with other parameters.
    pub fn check_fingerprint(&self, query_fingerprint: &str) -> Result<(), IndexError> {
        if self.fingerprint != query_fingerprint {
            return Err(IndexError::FingerprintMismatch {
                index: self.fingerprint.clone(),
                query: query_fingerprint.to_string(),
            });
        }
        Ok(())
    }

    /// Extractor matching the parameters the index was built with.
    pub fn extractor(&self) -> Result<Extractor, IndexError> {
        Ok(Extractor::with_layout(self.config.clone(), self.layout.clone())?)
    }
}

/// Normalizes every view document, extracts `variant`, and collects records
/// in input order.
pub fn build_index(
    view_docs: &[SegmentedSketch],
    extractor: &Extractor,
    variant: Variant,
) -> Result<RetrievalIndex, IndexError> {
    if variant == Variant::Stk {
        return Err(IndexError::UnsupportedVariant(variant));
    }
    let canvas = extractor.layout().canvas_side;
    let mut seen = BTreeSet::new();
    for (i, doc) in view_docs.iter().enumerate() {
        let model = doc.model_id.as_ref().ok_or(IndexError::MissingLabel(i, "model_id"))?;
        let view = doc.view_id.ok_or(IndexError::MissingLabel(i, "view_id"))?;
        if doc.category.is_none() {
            return Err(IndexError::MissingLabel(i, "category"));
        }
        if doc.canvas_side() != canvas {
            return Err(IndexError::CanvasMismatch {
                index: i,
                found: doc.canvas_side(),
                expected: canvas,
            });
        }
        if !seen.insert((model.clone(), view)) {
            return Err(IndexError::DuplicateRecord(model.clone(), view));
        }
    }
    let records = view_docs
        .par_iter()
        .enumerate()
        .map(|(i, doc)| {
            let normalized = normalize(doc, MatchMode::Full, None)
                .map_err(|e| IndexError::Extraction { index: i, source: e.into() })?;
            let feature = extractor
                .extract(&normalized, variant)
                .map_err(|source| IndexError::Extraction { index: i, source })?;
            Ok(IndexRecord {
                model_id: doc.model_id.clone().unwrap_or_default(),
                view_id: doc.view_id.unwrap_or_default(),
                category: doc.category.clone().unwrap_or_default(),
                feature,
            })
        })
        .collect::<Result<Vec<_>, IndexError>>()?;
    Ok(RetrievalIndex {
        layout: extractor.layout().clone(),
        variant,
        config: extractor.config().clone(),
        fingerprint: extractor.fingerprint(variant),
        records,
    })
}

/// Reads documents from a JSON array file or a JSON-lines file.
pub fn read_documents<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IndexError> {
    let text = fs::read_to_string(path)?;
    let fmt = |line: usize, e: serde_json::Error| IndexError::Format(format!("{}:{line}: {e}", path.display()));
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text).map_err(|e| fmt(1, e));
    }
    let mut out = Vec::new();
    for (i, line) in BufReader::new(text.as_bytes()).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| fmt(i + 1, e))?);
    }
    Ok(out)
}

/// Writes one JSON document per line.
pub fn write_documents<T: Serialize>(path: &Path, docs: &[T]) -> Result<(), IndexError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    for d in docs {
        serde_json::to_writer(&mut out, d).map_err(|e| IndexError::Format(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
