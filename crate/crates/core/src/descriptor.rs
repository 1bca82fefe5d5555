//! Pyramid feature assembly and its ablation variants.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gabor::{
    bounding_square, rasterize_group, rasterize_window, region_feature, FilterBank, GaborError, GaborParams,
    RasterOptions, RegionFeatureBlock,
};
use crate::geometry::Rect;
use crate::pyramid::{
    assign, assign_single, build_layout_with, AssignParams, LayoutError, LayoutOptions, PartPyramid, RegionLayout,
    Scheme,
};
use crate::sketch_model::{
    normalize, strokes_as_parts, MatchMode, RawInput, SegmentedSketch, SemanticPart, SketchError,
};

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Gabor(#[from] GaborError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("variant {0} cannot be extracted from a segmented sketch; use the raw-input path")]
    NeedsRawInput(Variant),
}

/// Feature variants: the full method and its ablations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Parts grouped into every region they pass the threshold for.
    #[default]
    #[serde(rename = "FULL")]
    Full,
    /// Each part placed only in its highest-likelihood region.
    #[serde(rename = "NOG")]
    Nog,
    /// Segmentation discarded; each region's image patch is its group.
    #[serde(rename = "PIX")]
    Pix,
    /// Every query stroke treated as its own part, then as `Full`.
    #[serde(rename = "STK")]
    Stk,
}

impl Variant {
    /// Variant used on the database side when queries use `self`.
    pub fn index_variant(self) -> Variant {
        match self {
            Variant::Stk => Variant::Full,
            v => v,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "FULL",
            Variant::Nog => "NOG",
            Variant::Pix => "PIX",
            Variant::Stk => "STK",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().trim_start_matches("OUR-") {
            "FULL" => Ok(Variant::Full),
            "NOG" => Ok(Variant::Nog),
            "PIX" => Ok(Variant::Pix),
            "STK" => Ok(Variant::Stk),
            other => Err(format!("unknown variant `{other}`")),
        }
    }
}

/// Every parameter that influences extracted features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    pub scheme: Scheme,
    pub canvas_side: f64,
    pub layout: LayoutOptions,
    pub gabor: GaborParams,
    pub raster: RasterOptions,
    pub assign: AssignParams,
    /// Reliability given to regions with no parts.
    pub empty_reliability: f64,
    /// L2-normalize each non-empty block.
    pub normalize_blocks: bool,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::default(),
            canvas_side: crate::sketch_model::DEFAULT_CANVAS_SIDE,
            layout: LayoutOptions::default(),
            gabor: GaborParams::default(),
            raster: RasterOptions::default(),
            assign: AssignParams::default(),
            empty_reliability: 1.0,
            normalize_blocks: true,
        }
    }
}

impl ExtractionConfig {
    /// Hex SHA-256 of the canonical JSON of the config and the index-side
    /// variant.
    pub fn fingerprint(&self, variant: Variant) -> String {
        let json = serde_json::to_string(&(self, variant.index_variant())).expect("config serializes");
        hex_digest(json.as_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Concatenated per-region blocks with per-region reliability.
#[derive(Clone, Debug, PartialEq)]
pub struct PyramidFeature {
    pub scheme: Scheme,
    pub blocks: Vec<RegionFeatureBlock>,
    pub reliability: Vec<f64>,
    pub empty_flags: Vec<bool>,
    /// Region importances of the layout the feature was built with.
    pub importance: Vec<f64>,
}

impl PyramidFeature {
    pub fn total_len(&self) -> usize {
        self.blocks.iter().map(RegionFeatureBlock::len).sum()
    }

    pub fn regions(&self) -> usize {
        self.blocks.len()
    }

    pub fn non_empty_regions(&self) -> usize {
        self.empty_flags.iter().filter(|&&e| !e).count()
    }

    /// All block values in region order.
    pub fn values(&self) -> impl Iterator<Item = f32> + '_ {
        self.blocks.iter().flat_map(|b| b.values.iter().copied())
    }
}

/// Expected feature length for a layout and orientation count.
pub fn feature_len(layout: &RegionLayout, orientations: usize) -> usize {
    layout.regions.iter().map(|r| r.grid * r.grid * orientations).sum()
}

/// Feature extractor: a layout plus a filter bank sized to the group raster.
#[derive(Debug)]
pub struct Extractor {
    config: ExtractionConfig,
    layout: RegionLayout,
    bank: FilterBank,
}

impl Extractor {
    pub fn new(config: ExtractionConfig) -> Result<Self, DescriptorError> {
        let layout = build_layout_with(&config.scheme, config.canvas_side, &config.layout)?;
        Self::with_layout(config, layout)
    }

    /// Uses an explicit layout, e.g. a custom one.
    pub fn with_layout(mut config: ExtractionConfig, layout: RegionLayout) -> Result<Self, DescriptorError> {
        let bank = FilterBank::new(&config.gabor, config.raster.raster_side)?;
        config.scheme = layout.scheme.clone();
        config.canvas_side = layout.canvas_side;
        Ok(Self { config, layout, bank })
    }

    pub fn config(&self) -> &ExtractionConfig {
        &self.config
    }

    pub fn layout(&self) -> &RegionLayout {
        &self.layout
    }

    pub fn bank(&self) -> &FilterBank {
        &self.bank
    }

    pub fn fingerprint(&self, variant: Variant) -> String {
        self.config.fingerprint(variant)
    }

    pub fn feature_len(&self) -> usize {
        feature_len(&self.layout, self.bank.orientations())
    }

    /// Dispatches on a variant for an already normalized sketch. `Stk` needs
    /// [`Extractor::extract_stk`].
    pub fn extract(&self, sketch: &SegmentedSketch, variant: Variant) -> Result<PyramidFeature, DescriptorError> {
        match variant {
            Variant::Full => self.extract_full(sketch),
            Variant::Nog => self.extract_nog(sketch),
            Variant::Pix => self.extract_pix(sketch),
            Variant::Stk => Err(DescriptorError::NeedsRawInput(Variant::Stk)),
        }
    }

    pub fn extract_full(&self, sketch: &SegmentedSketch) -> Result<PyramidFeature, DescriptorError> {
        let pyramid = assign(sketch, &self.layout, &self.config.assign);
        self.from_pyramid(sketch, &pyramid)
    }

    pub fn extract_nog(&self, sketch: &SegmentedSketch) -> Result<PyramidFeature, DescriptorError> {
        let pyramid = assign_single(sketch, &self.layout, &self.config.assign);
        self.from_pyramid(sketch, &pyramid)
    }

    /// Strokes as parts, normalized with `mode` and the input's box, then
    /// extracted as `Full`.
    pub fn extract_stk(&self, raw: &RawInput, mode: MatchMode) -> Result<PyramidFeature, DescriptorError> {
        let sketch = strokes_as_parts(raw)?;
        let sketch = normalize(&sketch, mode, raw.bbox)?;
        self.extract_full(&sketch)
    }

    pub fn extract_pix(&self, sketch: &SegmentedSketch) -> Result<PyramidFeature, DescriptorError> {
        let results: Vec<Result<RegionFeatureBlock, GaborError>> = self
            .layout
            .regions
            .par_iter()
            .map(|region| {
                let window = bounding_square(&region.rect);
                let strokes = sketch.strokes().map(|s| s.points());
                let img = rasterize_window(strokes, &window, &region.rect, &self.config.raster)?;
                region_feature(Some(&img), &self.bank, region.grid, self.config.normalize_blocks)
            })
            .collect();
        let blocks = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        let reliability = vec![1.0; blocks.len()];
        Ok(self.finish(blocks, reliability))
    }

    /// Rasterizes each region's group and pools it with that region's grid.
    pub fn from_pyramid(
        &self,
        sketch: &SegmentedSketch,
        pyramid: &PartPyramid,
    ) -> Result<PyramidFeature, DescriptorError> {
        let parts = sketch.parts();
        let results: Vec<Result<RegionFeatureBlock, GaborError>> = self
            .layout
            .regions
            .par_iter()
            .map(|region| {
                let group: Vec<&SemanticPart> =
                    pyramid.assignments[region.id].iter().map(|a| &parts[a.part]).collect();
                if group.is_empty() {
                    return Ok(RegionFeatureBlock::zeros(region.grid, self.bank.orientations()));
                }
                let img = rasterize_group(&group, &self.config.raster)?;
                region_feature(Some(&img), &self.bank, region.grid, self.config.normalize_blocks)
            })
            .collect();
        let blocks = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        let reliability = pyramid
            .reliability
            .iter()
            .map(|c| c.unwrap_or(self.config.empty_reliability))
            .collect();
        Ok(self.finish(blocks, reliability))
    }

    fn finish(&self, blocks: Vec<RegionFeatureBlock>, mut reliability: Vec<f64>) -> PyramidFeature {
        let empty_flags: Vec<bool> = blocks.iter().map(RegionFeatureBlock::is_zero).collect();
        for (c, &empty) in reliability.iter_mut().zip(&empty_flags) {
            if empty {
                *c = self.config.empty_reliability;
            }
        }
        PyramidFeature {
            scheme: self.layout.scheme.clone(),
            blocks,
            reliability,
            empty_flags,
            importance: self.layout.importances(),
        }
    }

    /// Normalizes with `mode`/`bbox` and extracts `variant` (not `Stk`).
    pub fn prepare(
        &self,
        sketch: &SegmentedSketch,
        mode: MatchMode,
        bbox: Option<Rect>,
        variant: Variant,
    ) -> Result<PyramidFeature, DescriptorError> {
        let normalized = normalize(sketch, mode, bbox)?;
        self.extract(&normalized, variant)
    }
}
