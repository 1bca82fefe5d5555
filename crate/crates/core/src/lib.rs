//! Part-level pyramid descriptors for sketch-based 3D shape retrieval.
//!
//! Query sketches and rendered model views share one representation: strokes
//! grouped into semantic parts on a square canvas. Parts are assigned to the
//! overlapping regions of a multi-level layout ([`pyramid`]), each region's
//! group is rasterized and described by pooled Gabor responses ([`gabor`]),
//! and the per-region blocks are concatenated into a [`descriptor::PyramidFeature`].
//! Features are compared with a reliability-weighted distance ([`matching`]),
//! optionally skipping the empty regions of a partial query.
//!
//! The remaining modules cover ingestion and persistence ([`index_store`]),
//! the global-Gabor and bag-of-words comparison methods ([`baselines`]),
//! retrieval metrics and the experiment harness ([`eval`]), and the query
//! engine shared by the command line and the HTTP service ([`engine`]).

pub mod baselines;
pub mod descriptor;
pub mod engine;
pub mod eval;
pub mod gabor;
pub mod geometry;
pub mod index_store;
pub mod matching;
pub mod pyramid;
pub mod sketch_model;

pub use descriptor::{ExtractionConfig, Extractor, PyramidFeature, Variant};
pub use geometry::{Point, Rect};
pub use index_store::RetrievalIndex;
pub use matching::{MatchMode, RankedResult};
pub use pyramid::{RegionLayout, Scheme};
pub use sketch_model::{RawInput, SegmentedSketch, SemanticPart, Stroke};
