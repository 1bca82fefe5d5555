//! Query handling shared by the command line and the HTTP service.
//!
//! A request carries raw strokes and optionally zones, a placement box, or a
//! ready-made part segmentation. With zones the strokes are grouped by
//! zone; with explicit parts they are used as given; otherwise every stroke
//! becomes its own part.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptor::{DescriptorError, Extractor, Variant};
use crate::geometry::{Point, Rect};
use crate::index_store::{IndexError, RetrievalIndex};
use crate::matching::{knn, DistanceOptions, MatchError, RankedResult, DEFAULT_K};
use crate::pyramid::Scheme;
use crate::sketch_model::{
    normalize, strokes_as_parts, zones_to_parts, MatchMode, PartDocument, RawInput, SegmentedSketch, SketchDocument,
    SketchError, Stroke, DEFAULT_CANVAS_SIDE,
};

fn default_canvas() -> f64 {
    DEFAULT_CANVAS_SIDE
}

fn default_k() -> usize {
    DEFAULT_K
}

/// Query as sent by a client. A sketch document (with `parts`) and a raw
/// document (with `strokes`) both parse as a request.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryRequest {
    #[serde(default = "default_canvas")]
    pub canvas: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub strokes: Vec<Vec<Point>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub zones: Vec<Vec<Point>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parts: Option<Vec<PartDocument>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<Rect>,
    #[serde(default)]
    pub mode: MatchMode,
    /// Defaults to `FULL` when zones or parts are given, `STK` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Incomplete mode without a box: take the strokes as placed on the
    /// canvas.
    #[serde(default)]
    pub assume_full_canvas: bool,
    /// Rejected with a mismatch if it differs from the index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
}

/// Strokes of one inferred part, as indices into the request's strokes
/// (or into the flattened strokes of `parts`, in order).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryPart {
    pub id: u32,
    pub strokes: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub scheme: Scheme,
    pub variant: Variant,
    pub mode: MatchMode,
    pub results: Vec<RankedResult>,
    pub parts: Vec<QueryPart>,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("mismatch: {0}")]
    Mismatch(String),
    #[error("query has nothing to compare: {0}")]
    EmptyQuery(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("internal: {0}")]
    Internal(String),
}

impl EngineError {
    /// HTTP status for the error.
    pub fn status(&self) -> u16 {
        match self {
            EngineError::InvalidRequest(_) => 400,
            EngineError::NotFound(_) => 404,
            EngineError::Mismatch(_) => 409,
            EngineError::EmptyQuery(_) => 422,
            EngineError::Internal(_) => 500,
        }
    }

    fn from_sketch(e: SketchError, mode: MatchMode) -> Self {
        match (e, mode) {
            (SketchError::EmptyInput, MatchMode::Incomplete) => EngineError::EmptyQuery("no strokes on the canvas".into()),
            (e, _) => EngineError::InvalidRequest(e.to_string()),
        }
    }

    fn from_descriptor(e: DescriptorError, mode: MatchMode) -> Self {
        match e {
            DescriptorError::Sketch(e) => EngineError::from_sketch(e, mode),
            DescriptorError::NeedsRawInput(_) => EngineError::InvalidRequest(e.to_string()),
            e => EngineError::Internal(e.to_string()),
        }
    }

    fn from_match(e: MatchError) -> Self {
        match e {
            MatchError::EmptyQuery => EngineError::EmptyQuery(e.to_string()),
            MatchError::SchemeMismatch(..) => EngineError::Mismatch(e.to_string()),
            MatchError::InvalidK => EngineError::InvalidRequest(e.to_string()),
            MatchError::EmptyIndex => EngineError::Internal(e.to_string()),
        }
    }
}

/// Immutable index plus the extractor rebuilt from its parameters, and
/// optionally the view documents for rendering.
#[derive(Debug)]
pub struct QueryEngine {
    index: RetrievalIndex,
    extractor: Extractor,
    views: BTreeMap<String, BTreeMap<u32, SketchDocument>>,
}

impl QueryEngine {
    pub fn new(index: RetrievalIndex) -> Result<Self, IndexError> {
        let extractor = index.extractor()?;
        Ok(Self {
            index,
            extractor,
            views: BTreeMap::new(),
        })
    }

    /// Attaches view documents served by [`QueryEngine::view`].
    pub fn with_views(mut self, docs: Vec<SketchDocument>) -> Self {
        for d in docs {
            if let (Some(m), Some(v)) = (d.model_id.clone(), d.view_id) {
                self.views.entry(m).or_default().insert(v, d);
            }
        }
        self
    }

    pub fn index(&self) -> &RetrievalIndex {
        &self.index
    }

    pub fn query(&self, req: &QueryRequest) -> Result<QueryResponse, EngineError> {
        if let Some(s) = &req.scheme {
            if s != &self.index.layout.scheme {
                return Err(EngineError::Mismatch(format!(
                    "request scheme {s}, index scheme {}",
                    self.index.layout.scheme
                )));
            }
        }
        if req.k == 0 {
            return Err(EngineError::InvalidRequest("k must be at least 1".into()));
        }
        let mode = req.mode;
        if mode == MatchMode::Incomplete && req.bbox.is_none() && !req.assume_full_canvas {
            return Err(EngineError::InvalidRequest(
                "incomplete mode needs a bbox or assume_full_canvas".into(),
            ));
        }
        if req.parts.is_some() && !(req.strokes.is_empty() && req.zones.is_empty()) {
            return Err(EngineError::InvalidRequest("give either parts or strokes with zones, not both".into()));
        }
        let segmented = req.parts.is_some() || !req.zones.is_empty();
        let variant = req.variant.unwrap_or(if segmented { Variant::Full } else { Variant::Stk });
        let fingerprint = self.extractor.fingerprint(variant);
        self.index
            .check_fingerprint(&fingerprint)
            .map_err(|e| EngineError::Mismatch(format!("{e}; index variant {}", self.index.variant)))?;

        let raw = self.raw_input(req).map_err(|e| EngineError::from_sketch(e, mode))?;
        let sketch = match (&req.parts, variant) {
            (_, Variant::Stk) => strokes_as_parts(&raw),
            (Some(parts), _) => segmented_from_parts(req.canvas, parts),
            (None, _) if !req.zones.is_empty() => zones_to_parts(&raw),
            // pixel regions ignore the grouping
            (None, Variant::Pix) => strokes_as_parts(&raw),
            (None, _) => Err(SketchError::DegenerateInput(format!(
                "variant {variant} needs zones or parts"
            ))),
        }
        .map_err(|e| EngineError::from_sketch(e, mode))?;
        let parts = sketch
            .parts()
            .iter()
            .map(|p| QueryPart {
                id: p.id(),
                strokes: p.strokes().iter().map(Stroke::id).collect(),
            })
            .collect();

        let bbox = if mode == MatchMode::Incomplete { req.bbox } else { None };
        let normalized = normalize(&sketch, mode, bbox).map_err(|e| EngineError::from_sketch(e, mode))?;
        let extract_variant = if variant == Variant::Stk { Variant::Full } else { variant };
        let feature = self
            .extractor
            .extract(&normalized, extract_variant)
            .map_err(|e| EngineError::from_descriptor(e, mode))?;
        let results =
            knn(&feature, &self.index, req.k, &DistanceOptions::new(mode)).map_err(EngineError::from_match)?;
        Ok(QueryResponse {
            scheme: self.index.layout.scheme.clone(),
            variant,
            mode,
            results,
            parts,
        })
    }

    /// All strokes of the request, in order, with ids equal to their index.
    fn raw_input(&self, req: &QueryRequest) -> Result<RawInput, SketchError> {
        if !(req.canvas.is_finite() && req.canvas > 0.0) {
            return Err(SketchError::InvalidCanvas(req.canvas));
        }
        if req.canvas != self.index.layout.canvas_side {
            return Err(SketchError::DegenerateInput(format!(
                "canvas {} differs from the index canvas {}",
                req.canvas, self.index.layout.canvas_side
            )));
        }
        let mut lists: Vec<&Vec<Point>> = req.strokes.iter().collect();
        if let Some(parts) = &req.parts {
            lists.extend(parts.iter().flat_map(|p| p.strokes.iter()));
        }
        let strokes = |lists: &[&Vec<Point>]| {
            lists
                .iter()
                .enumerate()
                .map(|(i, pts)| Stroke::new(i as u32, pts.iter().copied()))
                .collect::<Result<Vec<_>, _>>()
        };
        let zones: Vec<&Vec<Point>> = req.zones.iter().collect();
        Ok(RawInput {
            canvas_side: req.canvas,
            sketch_strokes: strokes(&lists)?,
            zone_strokes: strokes(&zones)?,
            bbox: req.bbox,
            category: None,
        })
    }

    pub fn view(&self, model_id: &str, view_id: u32) -> Result<&SketchDocument, EngineError> {
        if self.index.category_of(model_id).is_none() {
            return Err(EngineError::NotFound(format!("model {model_id}")));
        }
        self.views
            .get(model_id)
            .and_then(|v| v.get(&view_id))
            .ok_or_else(|| EngineError::NotFound(format!("view {view_id} of model {model_id}")))
    }
}

fn segmented_from_parts(canvas: f64, parts: &[PartDocument]) -> Result<SegmentedSketch, SketchError> {
    let doc = SketchDocument {
        canvas,
        category: None,
        model_id: None,
        view_id: None,
        parts: parts.to_vec(),
    };
    SegmentedSketch::try_from(&doc)
}
