//! Shared oracles and acceptance checks for the integration tests.
#![allow(dead_code)]

pub mod checks;

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use partpyr_core::descriptor::PyramidFeature;
use partpyr_core::gabor::{Kernel, RegionFeatureBlock};
use partpyr_core::geometry::{Point, Rect};
use partpyr_core::matching::MatchMode;
use partpyr_core::pyramid::Scheme;
use partpyr_core::sketch_model::{SegmentedSketch, SemanticPart, Stroke};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_polyline(rng: &mut ChaCha8Rng, lo: f64, hi: f64, max_vertices: usize) -> Vec<Point> {
    let n = rng.gen_range(2..=max_vertices);
    (0..n)
        .map(|_| Point::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi)))
        .collect()
}

pub fn polyline_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Clip length estimated from `n` samples, one uniform draw per equal
/// arc-length stratum.
pub fn mc_clip_length(points: &[Point], rect: &Rect, n: usize, rng: &mut ChaCha8Rng) -> f64 {
    let total = polyline_length(points);
    if total == 0.0 {
        return 0.0;
    }
    let mut cumulative = vec![0.0];
    for w in points.windows(2) {
        let last = *cumulative.last().unwrap();
        cumulative.push(last + w[0].distance(w[1]));
    }
    let step = total / n as f64;
    let mut inside = 0usize;
    let mut seg = 0usize;
    for i in 0..n {
        let s = (i as f64 + rng.gen::<f64>()) * step;
        while seg + 2 < cumulative.len() && cumulative[seg + 1] < s {
            seg += 1;
        }
        let (a, b) = (points[seg], points[seg + 1]);
        let len = cumulative[seg + 1] - cumulative[seg];
        let t = if len > 0.0 { ((s - cumulative[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        let p = Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
        if p.x >= rect.x0 && p.x <= rect.x1 && p.y >= rect.y0 && p.y <= rect.y1 {
            inside += 1;
        }
    }
    inside as f64 * step
}

/// Zero-padded spatial convolution magnitude, summed over lit pixels only.
pub fn direct_response(values: &[f64], side: usize, kernel: &Kernel) -> Vec<f64> {
    let h = kernel.half as i64;
    let n = side as i64;
    let mut out = vec![0.0; side * side];
    for py in 0..n {
        for px in 0..n {
            let v = values[(py * n + px) as usize];
            if v == 0.0 {
                continue;
            }
            for y in (py - h).max(0)..=(py + h).min(n - 1) {
                for x in (px - h).max(0)..=(px + h).min(n - 1) {
                    out[(y * n + x) as usize] += v * kernel.at(x - px, y - py);
                }
            }
        }
    }
    out.iter_mut().for_each(|v| *v = v.abs());
    out
}

/// Distance computed straight from the weighting formula.
pub fn oracle_distance(x: &PyramidFeature, y: &PyramidFeature, mode: MatchMode) -> f64 {
    let regions = x.blocks.len();
    let included: Vec<bool> = (0..regions)
        .map(|i| !(mode == MatchMode::Incomplete && x.empty_flags[i]))
        .collect();
    let raw: Vec<f64> = (0..regions)
        .map(|i| {
            if included[i] {
                x.importance[i] * (x.reliability[i] * y.reliability[i]).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    (0..regions)
        .filter(|&i| included[i])
        .map(|i| {
            let d: f64 = x.blocks[i]
                .values
                .iter()
                .zip(&y.blocks[i].values)
                .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            raw[i] / total * d
        })
        .sum()
}

/// Model ids and best-view distances by exhaustive search, ordered by
/// distance then id; each model's best view is its closest, ties to the
/// smaller view id.
pub fn oracle_knn(
    query: &PyramidFeature,
    records: &[(String, u32, PyramidFeature)],
    k: usize,
    mode: MatchMode,
) -> Vec<(String, u32, f64)> {
    let mut best: BTreeMap<&str, (u32, f64)> = BTreeMap::new();
    for (model, view, feature) in records {
        let d = oracle_distance(query, feature, mode);
        let e = best.entry(model.as_str()).or_insert((*view, d));
        if d < e.1 || (d == e.1 && *view < e.0) {
            *e = (*view, d);
        }
    }
    let mut all: Vec<(String, u32, f64)> = best.into_iter().map(|(m, (v, d))| (m.to_string(), v, d)).collect();
    all.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap().then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Feature with random blocks over `importance.len()` regions, some empty.
pub fn random_feature(rng: &mut ChaCha8Rng, importance: &[f64], block_len: usize) -> PyramidFeature {
    let mut blocks = Vec::new();
    let mut reliability = Vec::new();
    let mut empty = Vec::new();
    for i in 0..importance.len() {
        let is_empty = i + 1 != importance.len() && rng.gen_bool(0.3);
        let values: Vec<f32> = if is_empty {
            vec![0.0; block_len]
        } else {
            (0..block_len).map(|_| rng.gen_range(0.0f32..1.0)).collect()
        };
        blocks.push(RegionFeatureBlock { grid: 1, values });
        reliability.push(if is_empty { 1.0 } else { rng.gen_range(0.5..=1.0) });
        empty.push(is_empty);
    }
    PyramidFeature {
        scheme: Scheme::TwoLevels,
        blocks,
        reliability,
        empty_flags: empty,
        importance: importance.to_vec(),
    }
}

/// Precision at each relevant rank, summed and divided by `n`.
pub fn oracle_ap(rel: &[bool], n: usize) -> f64 {
    let mut sum = 0.0;
    for k in 0..rel.len() {
        if rel[k] {
            let hits = rel[..=k].iter().filter(|&&r| r).count();
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    sum / n as f64
}

pub fn oracle_ft(rel: &[bool], n: usize) -> f64 {
    rel.iter().take(n).filter(|&&r| r).count() as f64 / n as f64
}

pub fn part(id: u32, strokes: Vec<Vec<Point>>) -> SemanticPart {
    let strokes = strokes
        .into_iter()
        .enumerate()
        .map(|(i, pts)| Stroke::new(id * 100 + i as u32, pts).unwrap())
        .collect();
    SemanticPart::new(id, strokes).unwrap()
}

pub fn sketch(canvas: f64, parts: Vec<SemanticPart>) -> SegmentedSketch {
    SegmentedSketch::new(canvas, parts).unwrap()
}
