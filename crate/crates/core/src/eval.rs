//! Retrieval metrics and the experiment harness.
//!
//! A query's relevant models are the indexed models sharing its category.
//! Models are the retrieval unit: each is ranked by its closest view. A query
//! that was itself taken from an indexed model does not see that model.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{
    extract_gf, train_vocab, training_samples, BaselineError, BowExtractor, BowParams, FlatIndex, FlatRecord,
};
use crate::descriptor::{hex_digest, DescriptorError, ExtractionConfig, Extractor, Variant};
use crate::gabor::{FilterBank, GaborError};
use crate::geometry::Rect;
use crate::index_store::synth::{generate_synthetic, make_partial, SynthSpec};
use crate::index_store::{build_index, read_documents, IndexError};
use crate::matching::{knn, DistanceOptions, MatchError, RankedResult};
use crate::pyramid::Scheme;
use crate::sketch_model::{normalize, MatchMode, RawInput, SegmentedSketch, SketchDocument, SketchError};

/// Points on the recall axis of the averaged precision/recall curve.
pub const PR_GRID: usize = 101;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no relevant model for query category `{0}`")]
    MissingCategory(String),
    #[error("no queries to evaluate")]
    NoQueries,
    #[error("query {index}: {source}")]
    Query {
        index: usize,
        #[source]
        source: Box<EvalError>,
    },
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Gabor(#[from] GaborError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Ranked categories of one query's results.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryRanking {
    pub category: String,
    pub ranked: Vec<String>,
    /// The query's own model was removed from the ranking.
    pub excluded_self: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub to: f64,
    pub ft: f64,
    pub map: f64,
    pub queries: usize,
    /// `(recall, precision)` on an evenly spaced recall grid.
    pub pr_curve: Vec<(f64, f64)>,
}

/// Mean precision at each relevant hit, divided by `n_relevant`.
pub fn average_precision(relevant: &[bool], n_relevant: usize) -> f64 {
    if n_relevant == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &r) in relevant.iter().enumerate() {
        if r {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    sum / n_relevant as f64
}

/// Fraction of the relevant models found in the first `n_relevant` ranks.
pub fn first_tier(relevant: &[bool], n_relevant: usize) -> f64 {
    if n_relevant == 0 {
        return 0.0;
    }
    relevant.iter().take(n_relevant).filter(|&&r| r).count() as f64 / n_relevant as f64
}

/// Interpolated precision (best precision at any recall at or above `r`) at
/// `points` evenly spaced recall levels in `[0, 1]`.
pub fn interpolated_precision(relevant: &[bool], n_relevant: usize, points: usize) -> Vec<f64> {
    let mut pr = Vec::with_capacity(relevant.len());
    let mut hits = 0usize;
    for (rank, &r) in relevant.iter().enumerate() {
        if r {
            hits += 1;
        }
        pr.push((hits as f64 / n_relevant.max(1) as f64, hits as f64 / (rank + 1) as f64));
    }
    // running max from the tail
    let mut best = vec![0.0f64; pr.len() + 1];
    for i in (0..pr.len()).rev() {
        best[i] = best[i + 1].max(pr[i].1);
    }
    (0..points)
        .map(|g| {
            let r = g as f64 / (points - 1).max(1) as f64;
            let first = pr.iter().position(|&(rec, _)| rec >= r - 1e-12);
            first.map_or(0.0, |i| best[i])
        })
        .collect()
}

/// TO, FT, mAP and the averaged PR curve. `relevant_models` counts indexed
/// models per category.
pub fn metrics(rankings: &[QueryRanking], relevant_models: &BTreeMap<String, usize>) -> Result<Metrics, EvalError> {
    if rankings.is_empty() {
        return Err(EvalError::NoQueries);
    }
    let mut to = 0.0;
    let mut ft = 0.0;
    let mut map = 0.0;
    let mut curve = vec![0.0; PR_GRID];
    for q in rankings {
        let total = relevant_models.get(&q.category).copied().unwrap_or(0);
        let n = total.saturating_sub(q.excluded_self as usize);
        if n == 0 {
            return Err(EvalError::MissingCategory(q.category.clone()));
        }
        let rel: Vec<bool> = q.ranked.iter().map(|c| *c == q.category).collect();
        to += rel.first().copied().unwrap_or(false) as u8 as f64;
        ft += first_tier(&rel, n);
        map += average_precision(&rel, n);
        for (acc, p) in curve.iter_mut().zip(interpolated_precision(&rel, n, PR_GRID)) {
            *acc += p;
        }
    }
    let nq = rankings.len() as f64;
    Ok(Metrics {
        to: to / nq,
        ft: ft / nq,
        map: map / nq,
        queries: rankings.len(),
        pr_curve: curve
            .into_iter()
            .enumerate()
            .map(|(g, p)| (g as f64 / (PR_GRID - 1) as f64, p / nq))
            .collect(),
    })
}

/// Compared retrieval methods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "OUR-FULL")]
    Full,
    #[serde(rename = "OUR-NOG")]
    Nog,
    #[serde(rename = "OUR-PIX")]
    Pix,
    #[serde(rename = "OUR-STK")]
    Stk,
    #[serde(rename = "GF")]
    Gf,
    #[serde(rename = "BOW")]
    Bow,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Full => "OUR-FULL",
            Method::Nog => "OUR-NOG",
            Method::Pix => "OUR-PIX",
            Method::Stk => "OUR-STK",
            Method::Gf => "GF",
            Method::Bow => "BOW",
        }
    }

    /// Pyramid variant, or `None` for the baselines.
    pub fn variant(self) -> Option<Variant> {
        match self {
            Method::Full => Some(Variant::Full),
            Method::Nog => Some(Variant::Nog),
            Method::Pix => Some(Variant::Pix),
            Method::Stk => Some(Variant::Stk),
            Method::Gf | Method::Bow => None,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .or_else(|_| serde_json::from_value(serde_json::Value::String(format!("OUR-{s}"))))
            .map_err(|_| format!("unknown method `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic(SynthSpec),
    /// View and query documents, JSON array or JSON lines.
    Files { views: std::path::PathBuf, queries: std::path::PathBuf },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic(SynthSpec::default())
    }
}

/// Random part deletion applied to every query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialSpec {
    pub drop_fraction: (f64, f64),
    pub seed: u64,
}

impl Default for PartialSpec {
    fn default() -> Self {
        Self {
            drop_fraction: (0.3, 0.6),
            seed: 11,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub methods: Vec<Method>,
    pub schemes: Vec<Scheme>,
    pub mode: MatchMode,
    pub dataset: DatasetSource,
    pub partial: Option<PartialSpec>,
    pub extraction: ExtractionConfig,
    pub bow: BowParams,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            methods: vec![Method::Full],
            schemes: vec![Scheme::default()],
            mode: MatchMode::Full,
            dataset: DatasetSource::default(),
            partial: None,
            extraction: ExtractionConfig::default(),
            bow: BowParams::default(),
            seed: 1,
        }
    }
}

impl ExperimentConfig {
    /// Region schemes compared under the full descriptor.
    pub fn exp1(dataset: DatasetSource) -> Self {
        Self {
            name: "exp1-schemes".into(),
            schemes: Scheme::STANDARD.to_vec(),
            dataset,
            ..Self::default()
        }
    }

    /// Full descriptor against both baselines.
    pub fn exp2(dataset: DatasetSource) -> Self {
        Self {
            name: "exp2-baselines".into(),
            methods: vec![Method::Full, Method::Gf, Method::Bow],
            dataset,
            ..Self::default()
        }
    }

    /// Strokes used as parts, with the segmented and baseline methods.
    pub fn exp3(dataset: DatasetSource) -> Self {
        Self {
            name: "exp3-strokes".into(),
            methods: vec![Method::Full, Method::Stk, Method::Gf, Method::Bow],
            dataset,
            ..Self::default()
        }
    }

    /// Partial queries in incomplete mode.
    pub fn exp4(dataset: DatasetSource) -> Self {
        Self {
            name: "exp4-incomplete".into(),
            methods: vec![Method::Full, Method::Gf, Method::Bow],
            mode: MatchMode::Incomplete,
            partial: Some(PartialSpec::default()),
            dataset,
            ..Self::default()
        }
    }

    /// Ablations of the part grouping and segmentation.
    pub fn ablations(dataset: DatasetSource) -> Self {
        Self {
            name: "ablations".into(),
            methods: vec![Method::Full, Method::Nog, Method::Pix],
            dataset,
            ..Self::default()
        }
    }
}

/// Query sketch with an optional placement box for incomplete matching.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryDocument {
    #[serde(flatten)]
    pub sketch: SketchDocument,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<Rect>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalQuery {
    pub sketch: SegmentedSketch,
    pub bbox: Option<Rect>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalDataset {
    pub views: Vec<SegmentedSketch>,
    pub queries: Vec<EvalQuery>,
}

impl EvalDataset {
    /// `model_id → category` over the views.
    pub fn model_categories(&self) -> BTreeMap<String, String> {
        self.views
            .iter()
            .filter_map(|v| Some((v.model_id.clone()?, v.category.clone()?)))
            .collect()
    }

    /// Distinct models per category.
    pub fn relevant_counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for cat in self.model_categories().into_values() {
            *out.entry(cat).or_insert(0) += 1;
        }
        out
    }

    /// SHA-256 over the serialized views and queries.
    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::new();
        for v in &self.views {
            bytes.extend(serde_json::to_vec(&SketchDocument::from(v)).expect("document serializes"));
        }
        for q in &self.queries {
            let doc = QueryDocument {
                sketch: SketchDocument::from(&q.sketch),
                bbox: q.bbox,
            };
            bytes.extend(serde_json::to_vec(&doc).expect("document serializes"));
        }
        hex_digest(&bytes)
    }

    /// Replaces every query by a copy with parts deleted; queries with fewer
    /// than two parts are dropped.
    pub fn with_partial_queries(&self, spec: &PartialSpec) -> EvalDataset {
        let queries = self
            .queries
            .iter()
            .enumerate()
            .filter_map(|(i, q)| {
                let (sketch, bbox) = make_partial(&q.sketch, spec.drop_fraction, spec.seed.wrapping_add(i as u64))?;
                Some(EvalQuery {
                    sketch,
                    bbox: Some(q.bbox.unwrap_or(bbox)),
                })
            })
            .collect();
        EvalDataset {
            views: self.views.clone(),
            queries,
        }
    }
}

pub fn load_dataset(source: &DatasetSource) -> Result<EvalDataset, EvalError> {
    match source {
        DatasetSource::Synthetic(spec) => {
            let d = generate_synthetic(spec);
            Ok(EvalDataset {
                views: d.views,
                queries: d
                    .queries
                    .into_iter()
                    .map(|sketch| EvalQuery { sketch, bbox: None })
                    .collect(),
            })
        }
        DatasetSource::Files { views, queries } => {
            let views: Vec<SketchDocument> = read_documents(views)?;
            let queries: Vec<QueryDocument> = read_documents(queries)?;
            Ok(EvalDataset {
                views: views.iter().map(SegmentedSketch::try_from).collect::<Result<_, _>>()?,
                queries: queries
                    .iter()
                    .map(|q| {
                        Ok(EvalQuery {
                            sketch: SegmentedSketch::try_from(&q.sketch)?,
                            bbox: q.bbox,
                        })
                    })
                    .collect::<Result<_, SketchError>>()?,
            })
        }
    }
}

/// Ranking of one query, with its own model removed.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryOutcome {
    pub category: String,
    pub excluded: Option<String>,
    pub ranking: Vec<RankedResult>,
}

impl QueryOutcome {
    pub fn to_ranking(&self, categories: &BTreeMap<String, String>) -> QueryRanking {
        QueryRanking {
            category: self.category.clone(),
            ranked: self
                .ranking
                .iter()
                .map(|r| categories.get(&r.model_id).cloned().unwrap_or_default())
                .collect(),
            excluded_self: self
                .excluded
                .as_ref()
                .is_some_and(|m| categories.contains_key(m)),
        }
    }
}

fn finish_outcome(query: &EvalQuery, mut ranking: Vec<RankedResult>) -> QueryOutcome {
    let excluded = query.sketch.model_id.clone();
    if let Some(own) = &excluded {
        ranking.retain(|r| &r.model_id != own);
    }
    QueryOutcome {
        category: query.sketch.category.clone().unwrap_or_default(),
        excluded,
        ranking,
    }
}

fn with_index<T: Send>(
    queries: &[EvalQuery],
    f: impl Fn(&EvalQuery) -> Result<T, EvalError> + Sync + Send,
) -> Result<Vec<T>, EvalError> {
    queries
        .par_iter()
        .enumerate()
        .map(|(i, q)| {
            f(q).map_err(|e| EvalError::Query {
                index: i,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Ranks every query of `dataset` with one method and scheme.
pub fn rank_queries(
    method: Method,
    scheme: &Scheme,
    config: &ExperimentConfig,
    dataset: &EvalDataset,
) -> Result<Vec<QueryOutcome>, EvalError> {
    let mode = config.mode;
    let n_models = dataset.model_categories().len().max(1);
    let bbox_for = |q: &EvalQuery| if mode == MatchMode::Incomplete { q.bbox } else { None };
    match method.variant() {
        Some(variant) => {
            let extraction = ExtractionConfig {
                scheme: scheme.clone(),
                ..config.extraction.clone()
            };
            let ex = Extractor::new(extraction)?;
            let index = build_index(&dataset.views, &ex, variant.index_variant())?;
            let opts = DistanceOptions::new(mode);
            with_index(&dataset.queries, |q| {
                let feature = if variant == Variant::Stk {
                    let raw = RawInput {
                        canvas_side: q.sketch.canvas_side(),
                        sketch_strokes: q.sketch.strokes().cloned().collect(),
                        zone_strokes: Vec::new(),
                        bbox: bbox_for(q),
                        category: q.sketch.category.clone(),
                    };
                    ex.extract_stk(&raw, mode)?
                } else {
                    ex.prepare(&q.sketch, mode, bbox_for(q), variant)?
                };
                Ok(finish_outcome(q, knn(&feature, &index, n_models, &opts)?))
            })
        }
        None if method == Method::Gf => {
            let ex = &config.extraction;
            let bank = FilterBank::new(&ex.gabor, ex.raster.raster_side)?;
            let records = flat_records(&dataset.views, |v| {
                let v = normalize(v, MatchMode::Full, None)?;
                let f = extract_gf(&v, &bank, &ex.raster, ex.normalize_blocks)?;
                Ok(f.into_iter().map(f64::from).collect())
            })?;
            with_index(&dataset.queries, |q| {
                let s = normalize(&q.sketch, mode, bbox_for(q))?;
                let f: Vec<f64> = extract_gf(&s, &bank, &ex.raster, ex.normalize_blocks)?
                    .into_iter()
                    .map(f64::from)
                    .collect();
                Ok(finish_outcome(q, records.rank(&f)))
            })
        }
        None => {
            let bow = BowExtractor::new(config.bow.clone(), &config.extraction.gabor)?;
            let normalized: Vec<SegmentedSketch> = dataset
                .views
                .par_iter()
                .map(|v| normalize(v, MatchMode::Full, None))
                .collect::<Result<_, _>>()?;
            let samples = training_samples(&bow, &normalized, config.seed)?;
            let vocab = train_vocab(&samples, config.bow.k, config.seed, &config.bow)?;
            let bow = bow.with_vocab(vocab)?;
            let records = flat_records(&normalized, |v| Ok(bow.histogram(v)?))?;
            with_index(&dataset.queries, |q| {
                let s = normalize(&q.sketch, mode, bbox_for(q))?;
                Ok(finish_outcome(q, records.rank(&bow.histogram(&s)?)))
            })
        }
    }
}

fn flat_records(
    views: &[SegmentedSketch],
    f: impl Fn(&SegmentedSketch) -> Result<Vec<f64>, EvalError> + Sync + Send,
) -> Result<FlatIndex, EvalError> {
    let records = views
        .par_iter()
        .map(|v| {
            Ok(FlatRecord {
                model_id: v.model_id.clone().unwrap_or_default(),
                view_id: v.view_id.unwrap_or_default(),
                category: v.category.clone().unwrap_or_default(),
                values: f(v)?,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(FlatIndex { records })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    /// Unique label, used in file names.
    pub label: String,
    pub method: Method,
    /// `None` for methods that do not use a region layout.
    pub scheme: Option<Scheme>,
    pub mode: MatchMode,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub dataset_fingerprint: String,
    pub config: ExperimentConfig,
    pub methods: Vec<MethodReport>,
}

#[derive(Clone, Debug)]
pub struct ExperimentRun {
    pub report: EvalReport,
    /// Per-label query outcomes, in report order.
    pub outcomes: Vec<(String, Vec<QueryOutcome>)>,
}

/// Expands methods × schemes (baselines run once) and evaluates each on the
/// configured dataset.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRun, EvalError> {
    let dataset = load_dataset(&config.dataset)?;
    run_experiment_on(config, &dataset)
}

/// As [`run_experiment`] with an already loaded dataset; `config.partial`
/// is still applied.
pub fn run_experiment_on(config: &ExperimentConfig, dataset: &EvalDataset) -> Result<ExperimentRun, EvalError> {
    let partial;
    let dataset = match &config.partial {
        Some(spec) => {
            partial = dataset.with_partial_queries(spec);
            &partial
        }
        None => dataset,
    };
    if dataset.queries.is_empty() {
        return Err(EvalError::NoQueries);
    }
    let categories = dataset.model_categories();
    let relevant = dataset.relevant_counts();
    let mut reports = Vec::new();
    let mut outcomes = Vec::new();
    for &method in &config.methods {
        let schemes: Vec<Option<&Scheme>> = match method.variant() {
            Some(_) => config.schemes.iter().map(Some).collect(),
            None => vec![None],
        };
        for scheme in schemes {
            let label = match scheme {
                Some(s) if config.schemes.len() > 1 => format!("{}_{}", method.name(), s),
                _ => method.name().to_string(),
            };
            let run_scheme = scheme.cloned().unwrap_or_else(|| config.extraction.scheme.clone());
            let out = rank_queries(method, &run_scheme, config, dataset)?;
            let rankings: Vec<QueryRanking> = out.iter().map(|o| o.to_ranking(&categories)).collect();
            reports.push(MethodReport {
                label: label.clone(),
                method,
                scheme: scheme.cloned(),
                mode: config.mode,
                metrics: metrics(&rankings, &relevant)?,
            });
            outcomes.push((label, out));
        }
    }
    Ok(ExperimentRun {
        report: EvalReport {
            name: config.name.clone(),
            dataset_fingerprint: dataset.fingerprint(),
            config: config.clone(),
            methods: reports,
        },
        outcomes,
    })
}

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// `report.json`, `pr_curve_<label>.csv` per method and `summary.csv`.
pub fn write_reports(report: &EvalReport, out_dir: &Path) -> Result<(), EvalError> {
    fs::create_dir_all(out_dir)?;
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(out_dir.join("report.json"), json + "\n")?;
    let mut summary = fs::File::create(out_dir.join("summary.csv"))?;
    writeln!(summary, "method,TO,FT,mAP")?;
    for m in &report.methods {
        writeln!(summary, "{},{},{},{}", m.label, m.metrics.to, m.metrics.ft, m.metrics.map)?;
        let mut pr = fs::File::create(out_dir.join(format!("pr_curve_{}.csv", file_label(&m.label))))?;
        writeln!(pr, "recall,precision")?;
        for (r, p) in &m.metrics.pr_curve {
            writeln!(pr, "{r},{p}")?;
        }
    }
    Ok(())
}
