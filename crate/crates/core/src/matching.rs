//! Reliability-weighted pyramid distance and K-nearest-neighbor ranking.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptor::PyramidFeature;
use crate::index_store::RetrievalIndex;
pub use crate::sketch_model::MatchMode;

pub const DEFAULT_K: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("scheme mismatch: {0} vs {1}")]
    SchemeMismatch(String, String),
    #[error("query has no non-empty region to compare")]
    EmptyQuery,
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
}

/// Whose reliability enters the region weight.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReliabilityRule {
    /// `sqrt(c_x * c_y)`.
    #[default]
    GeometricMean,
    QueryOnly,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceOptions {
    pub mode: MatchMode,
    pub reliability: ReliabilityRule,
}

impl DistanceOptions {
    pub fn new(mode: MatchMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }
}

fn check_compatible(x: &PyramidFeature, y: &PyramidFeature) -> Result<(), MatchError> {
    let same_shape = x.regions() == y.regions()
        && x.blocks.iter().zip(&y.blocks).all(|(a, b)| a.len() == b.len());
    if x.scheme != y.scheme || !same_shape {
        return Err(MatchError::SchemeMismatch(x.scheme.to_string(), y.scheme.to_string()));
    }
    Ok(())
}

/// Normalized region weights; excluded regions get weight 0.
pub fn region_weights(x: &PyramidFeature, y: &PyramidFeature, opts: &DistanceOptions) -> Result<Vec<f64>, MatchError> {
    check_compatible(x, y)?;
    let raw: Vec<f64> = (0..x.regions())
        .map(|i| {
            if opts.mode == MatchMode::Incomplete && x.empty_flags[i] {
                return 0.0;
            }
            let c = match opts.reliability {
                ReliabilityRule::GeometricMean => (x.reliability[i] * y.reliability[i]).sqrt(),
                ReliabilityRule::QueryOnly => x.reliability[i],
            };
            x.importance[i] * c
        })
        .collect();
    if opts.mode == MatchMode::Incomplete && x.empty_flags.iter().all(|&e| e) {
        return Err(MatchError::EmptyQuery);
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        // every included region has zero reliability: fall back to importance only
        let imp: f64 = (0..x.regions())
            .filter(|&i| !(opts.mode == MatchMode::Incomplete && x.empty_flags[i]))
            .map(|i| x.importance[i])
            .sum();
        return Ok((0..x.regions())
            .map(|i| {
                if opts.mode == MatchMode::Incomplete && x.empty_flags[i] {
                    0.0
                } else {
                    x.importance[i] / imp
                }
            })
            .collect());
    }
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// `D(x, y) = Σ w_i ‖x_i − y_i‖` with `x` the query.
pub fn distance(x: &PyramidFeature, y: &PyramidFeature, opts: &DistanceOptions) -> Result<f64, MatchError> {
    let w = region_weights(x, y, opts)?;
    Ok(x.blocks
        .iter()
        .zip(&y.blocks)
        .zip(&w)
        .filter(|(_, &w)| w > 0.0)
        .map(|((a, b), &w)| w * a.distance(b))
        .sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub model_id: String,
    pub best_view_id: u32,
    pub distance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_view_distances: Option<Vec<(u32, f64)>>,
}

/// Collapses `(model, view, distance)` triples to one entry per model (its
/// closest view, ties to the smaller view id) and sorts ascending by
/// distance, ties by model id.
pub fn aggregate_models<'a>(
    scored: impl IntoIterator<Item = (&'a str, u32, f64)>,
    keep_views: bool,
) -> Vec<RankedResult> {
    let mut per_model: BTreeMap<&str, RankedResult> = BTreeMap::new();
    for (model, view, d) in scored {
        let entry = per_model.entry(model).or_insert_with(|| RankedResult {
            model_id: model.to_string(),
            best_view_id: view,
            distance: d,
            per_view_distances: keep_views.then(Vec::new),
        });
        if d < entry.distance || (d == entry.distance && view < entry.best_view_id) {
            entry.distance = d;
            entry.best_view_id = view;
        }
        if let Some(v) = entry.per_view_distances.as_mut() {
            v.push((view, d));
        }
    }
    let mut out: Vec<RankedResult> = per_model.into_values().collect();
    for r in &mut out {
        if let Some(v) = r.per_view_distances.as_mut() {
            v.sort_by_key(|&(view, _)| view);
        }
    }
    out.sort_by(|a, b| {
        a.distance
            .partial_cmp(&b.distance)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.model_id.cmp(&b.model_id))
    });
    out
}

/// Distance from `query` to every record, in record order.
pub fn score_all(query: &PyramidFeature, index: &RetrievalIndex, opts: &DistanceOptions) -> Result<Vec<f64>, MatchError> {
    index
        .records
        .par_iter()
        .map(|r| distance(query, &r.feature, opts))
        .collect()
}

/// Exhaustive scan with per-model min-over-views aggregation.
pub fn knn(
    query: &PyramidFeature,
    index: &RetrievalIndex,
    k: usize,
    opts: &DistanceOptions,
) -> Result<Vec<RankedResult>, MatchError> {
    if index.records.is_empty() {
        return Err(MatchError::EmptyIndex);
    }
    if k == 0 {
        return Err(MatchError::InvalidK);
    }
    let scores = score_all(query, index, opts)?;
    let mut ranked = aggregate_models(
        index
            .records
            .iter()
            .zip(&scores)
            .map(|(r, &d)| (r.model_id.as_str(), r.view_id, d)),
        false,
    );
    ranked.truncate(k);
    Ok(ranked)
}

/// Ranking as CSV: `rank,model_id,best_view_id,distance`.
pub fn write_ranking_csv<W: Write>(results: &[RankedResult], mut w: W) -> std::io::Result<()> {
    writeln!(w, "rank,model_id,best_view_id,distance")?;
    for (i, r) in results.iter().enumerate() {
        writeln!(w, "{},{},{},{}", i + 1, r.model_id, r.best_view_id, r.distance)?;
    }
    Ok(())
}
