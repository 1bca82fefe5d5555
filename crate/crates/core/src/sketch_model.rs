//! Strokes, semantic parts, and segmented sketches on a square canvas.
//!
//! Both query sketches and model-view contours use these types. Raw user
//! input (sketch strokes plus closed zone strokes and an optional bounding
//! box) is turned into parts by [`zones_to_parts`] or, without segmentation,
//! by [`strokes_as_parts`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{polyline_length, polyline_length_in_rect, Point, Polygon, Rect};

pub const DEFAULT_CANVAS_SIDE: f64 = 320.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SketchError {
    #[error("empty input")]
    EmptyInput,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid stroke {id}: {reason}")]
    InvalidStroke { id: u32, reason: String },
    #[error("zone {0} is degenerate or self-intersecting")]
    InvalidZone(usize),
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: u32 },
    #[error("invalid canvas side {0}")]
    InvalidCanvas(f64),
}

/// How a sketch is mapped onto the canvas and how it is later compared.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// The sketch's own bounding square is the canvas.
    #[default]
    Full,
    /// A user-supplied box (or the canvas itself) fixes the placement, and
    /// regions left empty by the query are skipped during matching.
    Incomplete,
}

impl std::str::FromStr for MatchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(MatchMode::Full),
            "incomplete" => Ok(MatchMode::Incomplete),
            other => Err(format!("unknown match mode `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    #[default]
    Query,
    ModelView,
}

/// An ordered polyline with at least two distinct points.
#[derive(Clone, Debug, PartialEq)]
pub struct Stroke {
    id: u32,
    points: Vec<Point>,
    length: f64,
}

impl Stroke {
    /// Collapses consecutive duplicate points; rejects strokes that end up
    /// with fewer than two points or non-finite coordinates.
    pub fn new(id: u32, points: impl IntoIterator<Item = Point>) -> Result<Self, SketchError> {
        let mut pts: Vec<Point> = Vec::new();
        for p in points {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(SketchError::InvalidStroke {
                    id,
                    reason: "non-finite coordinate".into(),
                });
            }
            if pts.last() != Some(&p) {
                pts.push(p);
            }
        }
        if pts.len() < 2 {
            return Err(SketchError::InvalidStroke {
                id,
                reason: "fewer than two distinct points".into(),
            });
        }
        let length = polyline_length(&pts);
        Ok(Self {
            id,
            points: pts,
            length,
        })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn bbox(&self) -> Rect {
        Rect::bounding(self.points.iter().copied()).expect("stroke has points")
    }

    fn map(&self, f: impl Fn(Point) -> Point) -> Option<Stroke> {
        Stroke::new(self.id, self.points.iter().map(|&p| f(p))).ok()
    }
}

/// Arc length of `stroke` inside `rect`.
pub fn clip_length(stroke: &Stroke, rect: &Rect) -> f64 {
    polyline_length_in_rect(stroke.points(), rect).clamp(0.0, stroke.length())
}

/// A non-empty group of strokes forming one meaningful component.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticPart {
    id: u32,
    strokes: Vec<Stroke>,
    bbox: Rect,
    length: f64,
}

impl SemanticPart {
    pub fn new(id: u32, strokes: Vec<Stroke>) -> Result<Self, SketchError> {
        let bbox = strokes
            .iter()
            .map(Stroke::bbox)
            .reduce(|a, b| a.union(&b))
            .ok_or(SketchError::EmptyInput)?;
        let length = strokes.iter().map(Stroke::length).sum();
        Ok(Self {
            id,
            strokes,
            bbox,
            length,
        })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn strokes(&self) -> &[Stroke] {
        &self.strokes
    }

    pub fn bbox(&self) -> Rect {
        self.bbox
    }

    /// Longer side of the bounding box.
    pub fn size(&self) -> f64 {
        self.bbox.longer_side()
    }

    /// Total stroke length.
    pub fn length(&self) -> f64 {
        self.length
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentedSketch {
    canvas_side: f64,
    parts: Vec<SemanticPart>,
    pub category: Option<String>,
    pub model_id: Option<String>,
    pub view_id: Option<u32>,
    pub provenance: Provenance,
}

impl SegmentedSketch {
    /// Validates that part ids and stroke ids are unique.
    pub fn new(canvas_side: f64, parts: Vec<SemanticPart>) -> Result<Self, SketchError> {
        if !(canvas_side.is_finite() && canvas_side > 0.0) {
            return Err(SketchError::InvalidCanvas(canvas_side));
        }
        let mut part_ids = std::collections::BTreeSet::new();
        let mut stroke_ids = std::collections::BTreeSet::new();
        for part in &parts {
            if !part_ids.insert(part.id) {
                return Err(SketchError::DuplicateId {
                    kind: "part",
                    id: part.id,
                });
            }
            for s in &part.strokes {
                if !stroke_ids.insert(s.id) {
                    return Err(SketchError::DuplicateId {
                        kind: "stroke",
                        id: s.id,
                    });
                }
            }
        }
        Ok(Self {
            canvas_side,
            parts,
            category: None,
            model_id: None,
            view_id: None,
            provenance: Provenance::Query,
        })
    }

    pub fn with_labels(
        mut self,
        category: Option<String>,
        model_id: Option<String>,
        view_id: Option<u32>,
    ) -> Self {
        self.provenance = if model_id.is_some() {
            Provenance::ModelView
        } else {
            Provenance::Query
        };
        self.category = category;
        self.model_id = model_id;
        self.view_id = view_id;
        self
    }

    pub fn canvas_side(&self) -> f64 {
        self.canvas_side
    }

    pub fn parts(&self) -> &[SemanticPart] {
        &self.parts
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn strokes(&self) -> impl Iterator<Item = &Stroke> {
        self.parts.iter().flat_map(|p| p.strokes.iter())
    }

    pub fn bbox(&self) -> Option<Rect> {
        self.parts.iter().map(|p| p.bbox).reduce(|a, b| a.union(&b))
    }

    pub fn total_length(&self) -> f64 {
        self.parts.iter().map(SemanticPart::length).sum()
    }

    /// Applies `f` to every point. Strokes that collapse are dropped, and so
    /// are parts left without strokes.
    pub fn map_points(&self, f: impl Fn(Point) -> Point) -> SegmentedSketch {
        let parts = self
            .parts
            .iter()
            .filter_map(|part| {
                let strokes: Vec<Stroke> = part.strokes.iter().filter_map(|s| s.map(&f)).collect();
                SemanticPart::new(part.id, strokes).ok()
            })
            .collect();
        SegmentedSketch {
            parts,
            ..self.clone_labels()
        }
    }

    /// Keeps only parts for which `keep` returns true.
    pub fn retain_parts(&self, keep: impl Fn(&SemanticPart) -> bool) -> SegmentedSketch {
        SegmentedSketch {
            parts: self.parts.iter().filter(|p| keep(p)).cloned().collect(),
            ..self.clone_labels()
        }
    }

    fn clone_labels(&self) -> SegmentedSketch {
        SegmentedSketch {
            canvas_side: self.canvas_side,
            parts: Vec::new(),
            category: self.category.clone(),
            model_id: self.model_id.clone(),
            view_id: self.view_id,
            provenance: self.provenance,
        }
    }
}

/// Unsegmented user input: sketch strokes, closed zone strokes, and an
/// optional bounding box used for incomplete matching.
#[derive(Clone, Debug, PartialEq)]
pub struct RawInput {
    pub canvas_side: f64,
    pub sketch_strokes: Vec<Stroke>,
    pub zone_strokes: Vec<Stroke>,
    pub bbox: Option<Rect>,
    pub category: Option<String>,
}

impl RawInput {
    pub fn new(sketch_strokes: Vec<Stroke>) -> Self {
        Self {
            canvas_side: DEFAULT_CANVAS_SIDE,
            sketch_strokes,
            zone_strokes: Vec::new(),
            bbox: None,
            category: None,
        }
    }
}

/// Uniform scale plus translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Similarity {
    pub fn apply(&self, p: Point) -> Point {
        Point::new(p.x * self.scale + self.tx, p.y * self.scale + self.ty)
    }

    /// Map that sends `rect`'s longer side onto `[0, side]` and centers the
    /// shorter one.
    pub fn fit_square(rect: &Rect, side: f64) -> Similarity {
        let scale = side / rect.longer_side();
        let tx = 0.5 * (side - rect.width() * scale) - rect.x0 * scale;
        let ty = 0.5 * (side - rect.height() * scale) - rect.y0 * scale;
        Similarity { scale, tx, ty }
    }

    fn is_identity(&self, side: f64) -> bool {
        let tol = 1e-9;
        (self.scale - 1.0).abs() <= tol && self.tx.abs() <= tol * side && self.ty.abs() <= tol * side
    }
}

/// Maps the sketch onto its canvas.
///
/// In full mode the sketch's bounding square becomes the canvas. In incomplete
/// mode `user_bbox` is mapped instead, or the sketch is taken to be drawn on
/// the canvas already when no box is given; points outside the canvas are
/// clamped to it.
pub fn normalize(
    sketch: &SegmentedSketch,
    mode: MatchMode,
    user_bbox: Option<Rect>,
) -> Result<SegmentedSketch, SketchError> {
    let bbox = sketch.bbox().ok_or(SketchError::EmptyInput)?;
    let side = sketch.canvas_side;
    let map = match (mode, user_bbox) {
        (MatchMode::Full, _) => {
            if bbox.longer_side() <= 0.0 {
                return Err(SketchError::DegenerateInput("sketch bounding box is a point".into()));
            }
            Similarity::fit_square(&bbox, side)
        }
        (MatchMode::Incomplete, Some(user)) => {
            if user.area().is_nan() || user.area() <= 0.0 {
                return Err(SketchError::DegenerateInput("user bounding box has zero area".into()));
            }
            Similarity::fit_square(&user, side)
        }
        (MatchMode::Incomplete, None) => Similarity {
            scale: 1.0,
            tx: 0.0,
            ty: 0.0,
        },
    };
    let inside = Rect::new(0.0, 0.0, side, side).contains_rect(&bbox);
    if map.is_identity(side) && inside {
        return Ok(sketch.clone());
    }
    let out = sketch.map_points(|p| {
        let q = map.apply(p);
        Point::new(q.x.clamp(0.0, side), q.y.clamp(0.0, side))
    });
    if out.is_empty() {
        return Err(SketchError::EmptyInput);
    }
    Ok(out)
}

/// Assigns each sketch stroke to the smallest zone holding strictly more
/// than half of its arc length; the rest form a background part.
pub fn zones_to_parts(input: &RawInput) -> Result<SegmentedSketch, SketchError> {
    if input.sketch_strokes.is_empty() {
        return Err(SketchError::EmptyInput);
    }
    let zones: Vec<Polygon> = input
        .zone_strokes
        .iter()
        .map(|z| Polygon::new(z.points()))
        .collect();
    for (i, z) in zones.iter().enumerate() {
        if z.is_degenerate_or_self_intersecting() {
            return Err(SketchError::InvalidZone(i));
        }
    }
    let areas: Vec<f64> = zones.iter().map(Polygon::area).collect();

    let background = zones.len();
    let mut groups: Vec<Vec<Stroke>> = vec![Vec::new(); zones.len() + 1];
    for stroke in &input.sketch_strokes {
        let mut best: Option<usize> = None;
        for (zi, zone) in zones.iter().enumerate() {
            let fraction = zone.polyline_length_inside(stroke.points()) / stroke.length();
            if fraction > 0.5 && best.is_none_or(|b| areas[zi] < areas[b]) {
                best = Some(zi);
            }
        }
        groups[best.unwrap_or(background)].push(stroke.clone());
    }
    let parts = groups
        .into_iter()
        .filter(|g| !g.is_empty())
        .enumerate()
        .map(|(id, strokes)| SemanticPart::new(id as u32, strokes))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SegmentedSketch::new(input.canvas_side, parts)?.with_labels(input.category.clone(), None, None))
}

/// One part per stroke, in drawing order.
pub fn strokes_as_parts(input: &RawInput) -> Result<SegmentedSketch, SketchError> {
    if input.sketch_strokes.is_empty() {
        return Err(SketchError::EmptyInput);
    }
    let parts = input
        .sketch_strokes
        .iter()
        .enumerate()
        .map(|(id, s)| SemanticPart::new(id as u32, vec![s.clone()]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SegmentedSketch::new(input.canvas_side, parts)?.with_labels(input.category.clone(), None, None))
}

// ---------------------------------------------------------------------------
// Document formats

fn default_canvas() -> f64 {
    DEFAULT_CANVAS_SIDE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartDocument {
    pub id: u32,
    pub strokes: Vec<Vec<Point>>,
}

/// JSON sketch document, shared by queries and model views.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SketchDocument {
    #[serde(default = "default_canvas")]
    pub canvas: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view_id: Option<u32>,
    pub parts: Vec<PartDocument>,
}

/// JSON raw-input document: sketch strokes plus optional zones and box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawDocument {
    #[serde(default = "default_canvas")]
    pub canvas: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub strokes: Vec<Vec<Point>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub zones: Vec<Vec<Point>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<Rect>,
}

impl TryFrom<&SketchDocument> for SegmentedSketch {
    type Error = SketchError;

    fn try_from(doc: &SketchDocument) -> Result<Self, Self::Error> {
        let mut next_stroke = 0u32;
        let mut parts = Vec::with_capacity(doc.parts.len());
        for part in &doc.parts {
            let mut strokes = Vec::with_capacity(part.strokes.len());
            for pts in &part.strokes {
                strokes.push(Stroke::new(next_stroke, pts.iter().copied())?);
                next_stroke += 1;
            }
            parts.push(SemanticPart::new(part.id, strokes)?);
        }
        Ok(SegmentedSketch::new(doc.canvas, parts)?.with_labels(
            doc.category.clone(),
            doc.model_id.clone(),
            doc.view_id,
        ))
    }
}

impl From<&SegmentedSketch> for SketchDocument {
    fn from(s: &SegmentedSketch) -> Self {
        SketchDocument {
            canvas: s.canvas_side,
            category: s.category.clone(),
            model_id: s.model_id.clone(),
            view_id: s.view_id,
            parts: s
                .parts
                .iter()
                .map(|p| PartDocument {
                    id: p.id,
                    strokes: p.strokes.iter().map(|s| s.points().to_vec()).collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<&RawDocument> for RawInput {
    type Error = SketchError;

    fn try_from(doc: &RawDocument) -> Result<Self, Self::Error> {
        let strokes = |lists: &[Vec<Point>]| {
            lists
                .iter()
                .enumerate()
                .map(|(i, pts)| Stroke::new(i as u32, pts.iter().copied()))
                .collect::<Result<Vec<_>, _>>()
        };
        Ok(RawInput {
            canvas_side: doc.canvas,
            sketch_strokes: strokes(&doc.strokes)?,
            zone_strokes: strokes(&doc.zones)?,
            bbox: doc.bbox,
            category: doc.category.clone(),
        })
    }
}
