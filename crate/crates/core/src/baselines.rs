//! Comparison methods: a single global Gabor feature (GF) and a bag of
//! visual words over local Gabor descriptors (BOW).
//!
//! Both use a filter bank built from the same [`GaborParams`] as the pyramid
//! descriptor. BOW draws the whole canvas once at a finer raster, filters it
//! once, and pools every local window from the shared response maps.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptor::hex_digest;
use crate::gabor::{
    rasterize_group, rasterize_window, region_feature, FilterBank, GaborError, GaborParams,
    RasterOptions,
};
use crate::geometry::{Point, Rect};
use crate::matching::{aggregate_models, RankedResult};
use crate::sketch_model::{SegmentedSketch, SemanticPart};

pub const GF_GRID: usize = 6;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("empty sketch")]
    EmptyInput,
    #[error("no trained vocabulary")]
    VocabMissing,
    #[error("need at least {needed} distinct samples, found {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("local feature length {found} does not match vocabulary dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Gabor(#[from] GaborError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Format(String),
}

/// Global feature of the whole sketch as one group, pooled on a 6×6 grid.
/// Segmentation is ignored.
pub fn extract_gf(
    sketch: &SegmentedSketch,
    bank: &FilterBank,
    raster: &RasterOptions,
    normalize: bool,
) -> Result<Vec<f32>, BaselineError> {
    if sketch.is_empty() {
        return Err(BaselineError::EmptyInput);
    }
    let parts: Vec<&SemanticPart> = sketch.parts().iter().collect();
    let img = rasterize_group(&parts, raster)?;
    Ok(region_feature(Some(&img), bank, GF_GRID, normalize)?.values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BowParams {
    pub k: usize,
    pub n_samples: usize,
    /// Local window side as a fraction of the canvas side.
    pub window_fraction: f64,
    pub grid: usize,
    /// Raster used for the whole-canvas response maps.
    pub raster_side: usize,
    pub stroke_width: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Upper bound on local features fed to k-means.
    pub max_training_samples: usize,
}

impl Default for BowParams {
    fn default() -> Self {
        Self {
            k: 50,
            n_samples: 500,
            window_fraction: 0.25,
            grid: 4,
            raster_side: 256,
            stroke_width: 2.0,
            max_iterations: 100,
            tolerance: 1e-4,
            max_training_samples: 10_000,
        }
    }
}

/// Points at `n` equal arc-length steps over all strokes, taken at the
/// middle of each step.
pub fn sample_arc_length(sketch: &SegmentedSketch, n: usize) -> Vec<Point> {
    let total = sketch.total_length();
    if n == 0 || total <= 0.0 {
        return Vec::new();
    }
    let step = total / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut target = 0.5 * step;
    let mut walked = 0.0;
    for stroke in sketch.strokes() {
        for seg in stroke.points().windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let len = a.distance(b);
            while out.len() < n && target <= walked + len {
                let t = if len > 0.0 { (target - walked) / len } else { 0.0 };
                out.push(Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
                target += step;
            }
            walked += len;
        }
    }
    // rounding can leave the last sample unplaced
    if out.len() < n {
        if let Some(last) = sketch.strokes().last().and_then(|s| s.points().last()) {
            out.resize(n, *last);
        }
    }
    out
}

/// Summed-area table of one map, `(side+1)²`.
struct Integral {
    side: usize,
    sums: Vec<f64>,
}

impl Integral {
    fn new(map: &[f64], side: usize) -> Self {
        let w = side + 1;
        let mut sums = vec![0.0; w * w];
        for y in 0..side {
            let mut row = 0.0;
            for x in 0..side {
                row += map[y * side + x];
                sums[(y + 1) * w + x + 1] = sums[y * w + x + 1] + row;
            }
        }
        Self { side, sums }
    }

    /// Sum over `[x0, x1) × [y0, y1)`, clipped to the map (zero outside).
    fn sum(&self, x0: i64, y0: i64, x1: i64, y1: i64) -> f64 {
        let c = |v: i64| v.clamp(0, self.side as i64) as usize;
        let (x0, y0, x1, y1) = (c(x0), c(y0), c(x1), c(y1));
        if x1 <= x0 || y1 <= y0 {
            return 0.0;
        }
        let w = self.side + 1;
        self.sums[y1 * w + x1] - self.sums[y0 * w + x1] - self.sums[y1 * w + x0] + self.sums[y0 * w + x0]
    }
}

/// Local descriptors and histograms for the BOW baseline.
pub struct BowExtractor {
    params: BowParams,
    bank: FilterBank,
    vocab: Option<BowVocabulary>,
}

impl std::fmt::Debug for BowExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BowExtractor")
            .field("params", &self.params)
            .field("vocab", &self.vocab.as_ref().map(|v| v.k))
            .finish()
    }
}

impl BowExtractor {
    pub fn new(params: BowParams, gabor: &GaborParams) -> Result<Self, BaselineError> {
        let bank = FilterBank::new(gabor, params.raster_side)?;
        Ok(Self {
            params,
            bank,
            vocab: None,
        })
    }

    pub fn params(&self) -> &BowParams {
        &self.params
    }

    pub fn local_dim(&self) -> usize {
        self.params.grid * self.params.grid * self.bank.orientations()
    }

    pub fn with_vocab(mut self, vocab: BowVocabulary) -> Result<Self, BaselineError> {
        if vocab.dim != self.local_dim() {
            return Err(BaselineError::DimensionMismatch {
                expected: vocab.dim,
                found: self.local_dim(),
            });
        }
        self.vocab = Some(vocab);
        Ok(self)
    }

    pub fn vocab(&self) -> Option<&BowVocabulary> {
        self.vocab.as_ref()
    }

    /// One L2-normalized `grid² × orientations` descriptor per sample point.
    pub fn local_features(&self, sketch: &SegmentedSketch) -> Result<Vec<Vec<f32>>, BaselineError> {
        if sketch.is_empty() {
            return Err(BaselineError::EmptyInput);
        }
        let canvas_side = sketch.canvas_side();
        let canvas = Rect::new(0.0, 0.0, canvas_side, canvas_side);
        let raster = RasterOptions {
            raster_side: self.params.raster_side,
            stroke_width: self.params.stroke_width,
            margin: 0.0,
        };
        let img = rasterize_window(sketch.strokes().map(|s| s.points()), &canvas, &canvas, &raster)?;
        let maps = self.bank.image_responses(&img)?;
        let side = img.side();
        let integrals: Vec<Integral> = maps.iter().map(|m| Integral::new(m, side)).collect();
        let px = side as f64 / canvas_side;
        let window = self.params.window_fraction * canvas_side * px;
        let g = self.params.grid;
        let cell = window / g as f64;
        let points = sample_arc_length(sketch, self.params.n_samples);
        Ok(points
            .iter()
            .map(|p| {
                let x0 = p.x * px - 0.5 * window;
                let y0 = p.y * px - 0.5 * window;
                let mut v = Vec::with_capacity(self.local_dim());
                for integral in &integrals {
                    for gy in 0..g {
                        for gx in 0..g {
                            let cx0 = (x0 + gx as f64 * cell).round() as i64;
                            let cx1 = (x0 + (gx + 1) as f64 * cell).round() as i64;
                            let cy0 = (y0 + gy as f64 * cell).round() as i64;
                            let cy1 = (y0 + (gy + 1) as f64 * cell).round() as i64;
                            let area = ((cx1 - cx0) * (cy1 - cy0)).max(1) as f64;
                            v.push(integral.sum(cx0, cy0, cx1, cy1) / area);
                        }
                    }
                }
                crate::gabor::l2_normalize(&mut v);
                v.into_iter().map(|x| x as f32).collect()
            })
            .collect())
    }

    /// L1-normalized word histogram of length `k`.
    pub fn histogram(&self, sketch: &SegmentedSketch) -> Result<Vec<f64>, BaselineError> {
        let vocab = self.vocab.as_ref().ok_or(BaselineError::VocabMissing)?;
        let features = self.local_features(sketch)?;
        let mut hist = vec![0.0f64; vocab.k];
        for f in &features {
            hist[vocab.nearest(f)] += 1.0;
        }
        let total: f64 = hist.iter().sum();
        if total > 0.0 {
            for h in &mut hist {
                *h /= total;
            }
        }
        Ok(hist)
    }
}

/// Histogram of `sketch` under `bow`'s vocabulary.
pub fn extract_bow(sketch: &SegmentedSketch, bow: &BowExtractor) -> Result<Vec<f64>, BaselineError> {
    bow.histogram(sketch)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BowVocabulary {
    pub k: usize,
    pub dim: usize,
    /// `k × dim`, row-major.
    #[serde(skip)]
    pub centroids: Vec<f32>,
    pub fingerprint: String,
}

impl BowVocabulary {
    pub fn centroid(&self, i: usize) -> &[f32] {
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }

    /// Closest centroid under L2, ties to the smaller index.
    pub fn nearest(&self, x: &[f32]) -> usize {
        let mut best = (0, f64::INFINITY);
        for i in 0..self.k {
            let d = sq_dist_f32(x, self.centroid(i));
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }
}

fn sq_dist_f32(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

fn sq_dist(a: &[f32], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y;
            d * d
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    /// `k × dim`, row-major.
    pub centroids: Vec<f64>,
    pub dim: usize,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

fn assign_all(samples: &[Vec<f32>], centroids: &[f64], dim: usize) -> Vec<(usize, f64)> {
    samples
        .par_iter()
        .map(|s| {
            let mut best = (0, f64::INFINITY);
            for (i, c) in centroids.chunks_exact(dim).enumerate() {
                let d = sq_dist(s, c);
                if d < best.1 {
                    best = (i, d);
                }
            }
            best
        })
        .collect()
}

/// Lloyd's algorithm with k-means++ seeding. Stops after `max_iterations`
/// assignment steps or when inertia changes by less than `tolerance`
/// relative. Empty clusters keep their previous centroid.
pub fn kmeans(
    samples: &[Vec<f32>],
    k: usize,
    seed: u64,
    max_iterations: usize,
    tolerance: f64,
) -> Result<KMeans, BaselineError> {
    if k < 2 || samples.len() < k {
        return Err(BaselineError::InsufficientData {
            needed: k.max(2),
            found: samples.len(),
        });
    }
    let dim = samples[0].len();
    if let Some(bad) = samples.iter().find(|s| s.len() != dim) {
        return Err(BaselineError::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<f64> = Vec::with_capacity(k * dim);
    let first = rng.gen_range(0..samples.len());
    centroids.extend(samples[first].iter().map(|&v| v as f64));
    let mut d2: Vec<f64> = samples.iter().map(|s| sq_dist(s, &centroids[..dim])).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            return Err(BaselineError::InsufficientData { needed: k, found: c });
        }
        let mut target = rng.gen::<f64>() * total;
        let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        let new: Vec<f64> = samples[pick].iter().map(|&v| v as f64).collect();
        for (d, s) in d2.iter_mut().zip(samples) {
            *d = d.min(sq_dist(s, &new));
        }
        centroids.extend(new);
    }

    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let labels = assign_all(samples, &centroids, dim);
        let inertia: f64 = labels.iter().map(|&(_, d)| d).sum();
        history.push(inertia);
        iterations += 1;
        let converged = history.len() >= 2 && {
            let prev = history[history.len() - 2];
            prev <= 0.0 || (prev - inertia).abs() / prev < tolerance
        };
        if converged || iterations >= max_iterations || inertia == 0.0 {
            break;
        }
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (s, &(l, _)) in samples.iter().zip(&labels) {
            counts[l] += 1;
            for (acc, &v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(s) {
                *acc += v as f64;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..dim {
                    centroids[c * dim + j] = sums[c * dim + j] / counts[c] as f64;
                }
            }
        }
    }
    Ok(KMeans {
        centroids,
        dim,
        inertia_history: history,
        iterations,
    })
}

/// Clusters local features into a `k`-word vocabulary.
pub fn train_vocab(samples: &[Vec<f32>], k: usize, seed: u64, params: &BowParams) -> Result<BowVocabulary, BaselineError> {
    let km = kmeans(samples, k, seed, params.max_iterations, params.tolerance)?;
    let centroids: Vec<f32> = km.centroids.iter().map(|&v| v as f32).collect();
    let mut bytes = serde_json::to_vec(&(params, k, seed, samples.len())).expect("params serialize");
    for s in samples {
        bytes.extend(s.iter().flat_map(|v| v.to_le_bytes()));
    }
    Ok(BowVocabulary {
        k,
        dim: km.dim,
        centroids,
        fingerprint: hex_digest(&bytes),
    })
}

/// Deterministic subsample of local features from a corpus, for training.
pub fn training_samples(
    bow: &BowExtractor,
    corpus: &[SegmentedSketch],
    seed: u64,
) -> Result<Vec<Vec<f32>>, BaselineError> {
    let per_sketch: Vec<Vec<Vec<f32>>> = corpus
        .par_iter()
        .filter(|s| !s.is_empty())
        .map(|s| bow.local_features(s))
        .collect::<Result<_, _>>()?;
    let mut all: Vec<Vec<f32>> = per_sketch.into_iter().flatten().collect();
    let cap = bow.params.max_training_samples;
    if all.len() > cap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // partial Fisher–Yates
        for i in 0..cap {
            let j = rng.gen_range(i..all.len());
            all.swap(i, j);
        }
        all.truncate(cap);
    }
    Ok(all)
}

const VOCAB_TAG: &str = "partpyr-vocab";

#[derive(Serialize, Deserialize)]
struct VocabHeader {
    format: String,
    version: u32,
    #[serde(flatten)]
    vocab: BowVocabulary,
    params: BowParams,
}

/// `(<dir>/<name>.vocab.json, <dir>/<name>.vocab.f32)`.
pub fn vocab_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{name}.vocab.json")), dir.join(format!("{name}.vocab.f32")))
}

pub fn write_vocab<M: Write, P: Write>(
    vocab: &BowVocabulary,
    params: &BowParams,
    meta: M,
    payload: P,
) -> Result<(), BaselineError> {
    let header = VocabHeader {
        format: VOCAB_TAG.into(),
        version: 1,
        vocab: vocab.clone(),
        params: params.clone(),
    };
    let mut meta = BufWriter::new(meta);
    serde_json::to_writer(&mut meta, &header).map_err(|e| BaselineError::Format(e.to_string()))?;
    meta.write_all(b"\n")?;
    meta.flush()?;
    let mut payload = BufWriter::new(payload);
    for v in &vocab.centroids {
        payload.write_all(&v.to_le_bytes())?;
    }
    payload.flush()?;
    Ok(())
}

pub fn read_vocab<M: Read, P: Read>(meta: M, mut payload: P) -> Result<(BowVocabulary, BowParams), BaselineError> {
    let header: VocabHeader =
        serde_json::from_reader(BufReader::new(meta)).map_err(|e| BaselineError::Format(e.to_string()))?;
    if header.format != VOCAB_TAG || header.version != 1 {
        return Err(BaselineError::Format("not a vocabulary header".into()));
    }
    let mut bytes = Vec::new();
    payload.read_to_end(&mut bytes)?;
    let mut vocab = header.vocab;
    if bytes.len() != vocab.k * vocab.dim * 4 {
        return Err(BaselineError::Format("centroid payload length mismatch".into()));
    }
    vocab.centroids = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((vocab, header.params))
}

pub fn save_vocab(vocab: &BowVocabulary, params: &BowParams, dir: &Path, name: &str) -> Result<(), BaselineError> {
    fs::create_dir_all(dir)?;
    let (m, p) = vocab_paths(dir, name);
    write_vocab(vocab, params, fs::File::create(m)?, fs::File::create(p)?)
}

pub fn load_vocab(dir: &Path, name: &str) -> Result<(BowVocabulary, BowParams), BaselineError> {
    let (m, p) = vocab_paths(dir, name);
    read_vocab(fs::File::open(m)?, fs::File::open(p)?)
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Plain vectors keyed by view, compared by L2 distance.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlatIndex {
    pub records: Vec<FlatRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlatRecord {
    pub model_id: String,
    pub view_id: u32,
    pub category: String,
    pub values: Vec<f64>,
}

impl FlatIndex {
    /// Per-model best view, ascending distance, ties by model id.
    pub fn rank(&self, query: &[f64]) -> Vec<RankedResult> {
        let scores: Vec<f64> = self.records.par_iter().map(|r| euclidean(query, &r.values)).collect();
        aggregate_models(
            self.records
                .iter()
                .zip(&scores)
                .map(|(r, &d)| (r.model_id.as_str(), r.view_id, d)),
            false,
        )
    }
}
