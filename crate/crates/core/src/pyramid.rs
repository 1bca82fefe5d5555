//! Region layouts and the assignment of semantic parts to regions.
//!
//! A layout is a set of overlapping canvas rectangles arranged in levels,
//! finest first and the full canvas last. A part joins a region when the
//! product of a size penalty and its inclusion ratio reaches 0.5; each
//! region's reliability is the length-weighted mean of its members' scores.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Rect;
use crate::sketch_model::{clip_length, SegmentedSketch, SemanticPart};

/// Assignment threshold on the part likelihood.
pub const ASSIGN_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("unknown scheme `{0}`")]
    UnknownScheme(String),
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "4R_NO")]
    FourNonOverlapping,
    #[serde(rename = "4R_O")]
    FourOverlapping,
    #[default]
    #[serde(rename = "6R_O")]
    SixOverlapping,
    #[serde(rename = "4LV")]
    FourLevels,
    #[serde(rename = "2LV")]
    TwoLevels,
    #[serde(rename = "custom")]
    Custom(String),
}

impl Scheme {
    pub const STANDARD: [Scheme; 5] = [
        Scheme::FourNonOverlapping,
        Scheme::FourOverlapping,
        Scheme::SixOverlapping,
        Scheme::FourLevels,
        Scheme::TwoLevels,
    ];

    pub fn name(&self) -> &str {
        match self {
            Scheme::FourNonOverlapping => "4R_NO",
            Scheme::FourOverlapping => "4R_O",
            Scheme::SixOverlapping => "6R_O",
            Scheme::FourLevels => "4LV",
            Scheme::TwoLevels => "2LV",
            Scheme::Custom(name) => name,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = LayoutError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "4R_NO" => Ok(Scheme::FourNonOverlapping),
            "4R_O" => Ok(Scheme::FourOverlapping),
            "6R_O" => Ok(Scheme::SixOverlapping),
            "4LV" => Ok(Scheme::FourLevels),
            "2LV" => Ok(Scheme::TwoLevels),
            _ => Err(LayoutError::UnknownScheme(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: usize,
    /// Ordinal level, 1 = finest.
    pub level: u8,
    pub rect: Rect,
    /// Importance weight, `area / L²` with `L = canvas_side / 3`.
    pub m: f64,
    /// Side of the pooling grid.
    pub grid: usize,
}

impl Region {
    /// Longer side of the rectangle.
    pub fn size(&self) -> f64 {
        self.rect.longer_side()
    }
}

/// Placement of the two extra level-2 regions of `6R_O`, in units of `L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutOptions {
    pub six_r_extra_offsets: [(f64, f64); 2],
}

impl Default for LayoutOptions {
    fn default() -> Self {
        Self {
            six_r_extra_offsets: [(0.0, 0.5), (1.0, 0.5)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionLayout {
    pub scheme: Scheme,
    pub canvas_side: f64,
    pub regions: Vec<Region>,
    top: usize,
}

impl RegionLayout {
    /// Wraps an arbitrary region list. Ids are reassigned in order; exactly
    /// one region must cover the whole canvas.
    pub fn custom(name: &str, canvas_side: f64, mut regions: Vec<Region>) -> Result<Self, LayoutError> {
        let canvas = Rect::new(0.0, 0.0, canvas_side, canvas_side);
        let mut top = None;
        for (i, r) in regions.iter_mut().enumerate() {
            r.id = i;
            if !canvas.contains_rect(&r.rect) || r.rect.area() <= 0.0 {
                return Err(LayoutError::InvalidLayout(format!("region {i} outside canvas or empty")));
            }
            if r.grid == 0 || r.m.is_nan() || r.m <= 0.0 {
                return Err(LayoutError::InvalidLayout(format!("region {i} has grid 0 or m <= 0")));
            }
            if r.rect == canvas {
                if top.is_some() {
                    return Err(LayoutError::InvalidLayout("more than one full-canvas region".into()));
                }
                top = Some(i);
            }
        }
        let top = top.ok_or_else(|| LayoutError::InvalidLayout("no full-canvas region".into()))?;
        Ok(Self {
            scheme: Scheme::Custom(name.to_string()),
            canvas_side,
            regions,
            top,
        })
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Index of the full-canvas region.
    pub fn top_index(&self) -> usize {
        self.top
    }

    pub fn importances(&self) -> Vec<f64> {
        self.regions.iter().map(|r| r.m).collect()
    }
}

pub fn build_layout(scheme: &Scheme, canvas_side: f64) -> Result<RegionLayout, LayoutError> {
    build_layout_with(scheme, canvas_side, &LayoutOptions::default())
}

pub fn build_layout_with(
    scheme: &Scheme,
    canvas_side: f64,
    opts: &LayoutOptions,
) -> Result<RegionLayout, LayoutError> {
    if let Scheme::Custom(name) = scheme {
        return Err(LayoutError::UnknownScheme(name.clone()));
    }
    let l = canvas_side / 3.0;
    // (level, x, y, width, height, grid) in units of L
    let mut rects: Vec<(u8, f64, f64, f64, f64, usize)> = Vec::new();

    for j in 0..3 {
        for i in 0..3 {
            rects.push((1, i as f64, j as f64, 1.0, 1.0, 2));
        }
    }
    let mut level = 2;
    match scheme {
        Scheme::FourOverlapping | Scheme::SixOverlapping => {
            for oy in [0.0, 1.0] {
                for ox in [0.0, 1.0] {
                    rects.push((level, ox, oy, 2.0, 2.0, 4));
                }
            }
            if *scheme == Scheme::SixOverlapping {
                for (ox, oy) in opts.six_r_extra_offsets {
                    rects.push((level, ox, oy, 2.0, 2.0, 4));
                }
            }
            level += 1;
        }
        Scheme::FourNonOverlapping | Scheme::FourLevels => {
            for oy in [0.0, 1.5] {
                for ox in [0.0, 1.5] {
                    rects.push((level, ox, oy, 1.5, 1.5, 4));
                }
            }
            level += 1;
            if *scheme == Scheme::FourLevels {
                for oy in [0.0, 1.0] {
                    rects.push((level, 0.0, oy, 3.0, 2.0, 5));
                }
                for ox in [0.0, 1.0] {
                    rects.push((level, ox, 0.0, 2.0, 3.0, 5));
                }
                level += 1;
            }
        }
        Scheme::TwoLevels => {}
        Scheme::Custom(_) => unreachable!(),
    }
    rects.push((level, 0.0, 0.0, 3.0, 3.0, 6));

    let top = rects.len() - 1;
    let at = |u: f64| if u == 3.0 { canvas_side } else { u * l };
    let regions = rects
        .into_iter()
        .enumerate()
        .map(|(id, (level, x, y, w, h, grid))| Region {
            id,
            level,
            rect: Rect::new(at(x), at(y), at(x + w), at(y + h)),
            m: w * h,
            grid,
        })
        .collect();
    Ok(RegionLayout {
        scheme: scheme.clone(),
        canvas_side,
        regions,
        top,
    })
}

/// Size penalty `W_s`: 1 up to `beta * region_size`, then a clamped
/// Gaussian falloff.
pub fn size_penalty(part_size: f64, region_size: f64, beta: f64, sigma: f64) -> f64 {
    let knee = beta * region_size;
    if part_size <= knee {
        return 1.0;
    }
    let d = part_size - knee;
    (1.1 * (-(d * d) / (sigma * sigma)).exp() - 0.1).clamp(0.0, 1.0)
}

/// Inclusion ratio `W_l`: fraction of the part's stroke length inside `rect`.
pub fn inclusion_weight(part: &SemanticPart, rect: &Rect) -> f64 {
    let inside: f64 = part.strokes().iter().map(|s| clip_length(s, rect)).sum();
    (inside / part.length()).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignParams {
    pub beta: f64,
    /// `sigma = sigma_fraction * region_size` in the size penalty.
    pub sigma_fraction: f64,
}

impl Default for AssignParams {
    fn default() -> Self {
        Self {
            beta: 0.85,
            sigma_fraction: 0.3,
        }
    }
}

/// Likelihood that `part` belongs to `region`.
pub fn part_likelihood(part: &SemanticPart, region: &Region, params: &AssignParams) -> f64 {
    let l = region.size();
    size_penalty(part.size(), l, params.beta, params.sigma_fraction * l) * inclusion_weight(part, &region.rect)
}

/// `p[region][part]` for every pair.
pub fn likelihood_matrix(sketch: &SegmentedSketch, layout: &RegionLayout, params: &AssignParams) -> Vec<Vec<f64>> {
    layout
        .regions
        .iter()
        .map(|r| sketch.parts().iter().map(|p| part_likelihood(p, r, params)).collect())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Index into the sketch's part list.
    pub part: usize,
    pub p: f64,
    /// Set when the part passed the threshold nowhere and was placed in the
    /// top region regardless.
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartPyramid {
    pub assignments: Vec<Vec<Assignment>>,
    /// `c(R)` per region; `None` for empty regions.
    pub reliability: Vec<Option<f64>>,
}

impl PartPyramid {
    /// Builds the per-region reliabilities from a finished assignment table.
    pub fn from_assignments(sketch: &SegmentedSketch, assignments: Vec<Vec<Assignment>>) -> Self {
        let reliability = assignments
            .iter()
            .map(|group| reliability(sketch, group))
            .collect();
        Self {
            assignments,
            reliability,
        }
    }

    pub fn is_empty_region(&self, region: usize) -> bool {
        self.assignments[region].is_empty()
    }
}

/// Length-weighted mean likelihood of a region's group.
pub fn reliability(sketch: &SegmentedSketch, group: &[Assignment]) -> Option<f64> {
    if group.is_empty() {
        return None;
    }
    let parts = sketch.parts();
    let total: f64 = group.iter().map(|a| parts[a.part].length()).sum();
    let c: f64 = group.iter().map(|a| parts[a.part].length() / total * a.p).sum();
    Some(c.clamp(0.0, 1.0))
}

pub fn assign(sketch: &SegmentedSketch, layout: &RegionLayout, params: &AssignParams) -> PartPyramid {
    let p = likelihood_matrix(sketch, layout, params);
    let mut assignments: Vec<Vec<Assignment>> = p
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|&(_, &v)| v >= ASSIGN_THRESHOLD)
                .map(|(part, &p)| Assignment {
                    part,
                    p,
                    fallback: false,
                })
                .collect()
        })
        .collect();
    let top = layout.top_index();
    for part in 0..sketch.parts().len() {
        let placed = assignments.iter().any(|g| g.iter().any(|a| a.part == part));
        if !placed {
            assignments[top].push(Assignment {
                part,
                p: p[top][part],
                fallback: true,
            });
        }
    }
    for g in &mut assignments {
        g.sort_by_key(|a| a.part);
    }
    PartPyramid::from_assignments(sketch, assignments)
}

/// Places each part only in its highest-likelihood region; ties go to the
/// lower level, then the smaller region id.
pub fn assign_single(sketch: &SegmentedSketch, layout: &RegionLayout, params: &AssignParams) -> PartPyramid {
    let p = likelihood_matrix(sketch, layout, params);
    let mut assignments: Vec<Vec<Assignment>> = vec![Vec::new(); layout.len()];
    for part in 0..sketch.parts().len() {
        let mut best = 0usize;
        for r in 1..layout.len() {
            let (pr, pb) = (p[r][part], p[best][part]);
            let better = pr > pb
                || (pr == pb
                    && (layout.regions[r].level, r) < (layout.regions[best].level, best));
            if better {
                best = r;
            }
        }
        assignments[best].push(Assignment {
            part,
            p: p[best][part],
            fallback: p[best][part] < ASSIGN_THRESHOLD,
        });
    }
    PartPyramid::from_assignments(sketch, assignments)
}
