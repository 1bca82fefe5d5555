//! `partpyr`: dataset generation, indexing, querying, evaluation and the
//! HTTP query service.

pub mod serve;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use partpyr_core::descriptor::{feature_len, ExtractionConfig, Extractor, Variant};
use partpyr_core::engine::{QueryEngine, QueryRequest};
use partpyr_core::eval::{self, DatasetSource, ExperimentConfig, QueryDocument};
use partpyr_core::geometry::Rect;
use partpyr_core::index_store::synth::{generate_synthetic, make_partial, SynthSpec};
use partpyr_core::index_store::{build_index, load_index, read_documents, save_index, write_documents, write_index_jsonl};
use partpyr_core::matching::write_ranking_csv;
use partpyr_core::pyramid::{build_layout_with, RegionLayout, Scheme};
use partpyr_core::sketch_model::{MatchMode, SegmentedSketch, SketchDocument};

#[derive(Parser, Debug)]
#[command(name = "partpyr", version, about = "Part-pyramid sketch-based shape retrieval")]
pub struct Cli {
    /// Region scheme: 4R_NO, 4R_O, 6R_O, 4LV or 2LV.
    #[arg(long, global = true)]
    pub scheme: Option<String>,
    /// Configuration file: extraction parameters, or the experiment for `eval run`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for synthetic data and vocabulary training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Indented JSON output.
    #[arg(long, global = true)]
    pub pretty: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthetic datasets.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Index construction.
    #[command(subcommand)]
    Index(IndexCmd),
    /// Rank indexed models for one query sketch.
    Query(QueryArgs),
    /// Experiments.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Region layouts.
    #[command(subcommand)]
    Layout(LayoutCmd),
    /// HTTP query service.
    Serve(ServeArgs),
}

#[derive(Subcommand, Debug)]
pub enum DatasetCmd {
    /// Writes views.jsonl, queries.jsonl, partial_queries.jsonl and manifest.json.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Generator parameters as JSON; flags below override it.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub categories: Option<usize>,
    #[arg(long)]
    pub models: Option<usize>,
    #[arg(long)]
    pub views: Option<usize>,
    #[arg(long)]
    pub queries: Option<usize>,
    #[arg(long)]
    pub no_distractors: bool,
}

#[derive(Subcommand, Debug)]
pub enum IndexCmd {
    /// Builds an index from view documents.
    Build(BuildArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum IndexFormat {
    Pair,
    Jsonl,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    /// View documents, JSON array or JSON lines.
    #[arg(long)]
    pub views: PathBuf,
    /// Output prefix (`<out>.meta.json` + `<out>.f32`) or `.jsonl` file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "FULL")]
    pub variant: String,
    #[arg(long, value_enum, default_value = "pair")]
    pub format: IndexFormat,
}

#[derive(Args, Debug)]
pub struct QueryArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Query request, sketch document or raw stroke document.
    #[arg(long)]
    pub sketch: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub mode: Option<String>,
    /// Placement box `x0,y0,x1,y1` for incomplete mode.
    #[arg(long)]
    pub bbox: Option<String>,
    #[arg(long)]
    pub variant: Option<String>,
    /// Incomplete mode without a box: strokes are already placed on the canvas.
    #[arg(long)]
    pub full_canvas: bool,
    /// Ranking as CSV instead of JSON.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Subcommand, Debug)]
pub enum EvalCmd {
    /// Runs an experiment and writes report.json, summary.csv and PR curves.
    Run(EvalArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Preset {
    Exp1,
    Exp2,
    Exp3,
    Exp4,
    Ablations,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Built-in experiment on the default synthetic dataset, used when no
    /// `--config` is given.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
}

#[derive(Subcommand, Debug)]
pub enum LayoutCmd {
    /// Prints the regions of a scheme.
    Describe,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// View documents to serve for rendering.
    #[arg(long)]
    pub views: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Allowed browser origins; any origin when omitted.
    #[arg(long = "cors-origin")]
    pub cors_origins: Vec<String>,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn emit<T: Serialize>(value: &T, pretty: bool) -> Result<()> {
    let text = if pretty {
        serde_json::to_string_pretty(value)?
    } else {
        serde_json::to_string(value)?
    };
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}")?;
    Ok(())
}

fn parse_scheme(s: &str) -> Result<Scheme> {
    Scheme::from_str(s).map_err(|e| anyhow::anyhow!("{e}"))
}

fn extraction_config(cli: &Cli) -> Result<ExtractionConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExtractionConfig::default(),
    };
    if let Some(s) = &cli.scheme {
        config.scheme = parse_scheme(s)?;
    }
    Ok(config)
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Dataset(DatasetCmd::Synth(args)) => synth(cli, args),
        Command::Index(IndexCmd::Build(args)) => index_build(cli, args),
        Command::Query(args) => query(cli, args),
        Command::Eval(EvalCmd::Run(args)) => eval_run(cli, args),
        Command::Layout(LayoutCmd::Describe) => layout_describe(cli),
        Command::Serve(args) => serve::serve_blocking(args),
    }
}

#[derive(Serialize)]
struct SynthSummary {
    dir: PathBuf,
    views: usize,
    queries: usize,
    partial_queries: usize,
    distractors: Vec<(String, String)>,
}

fn synth(cli: &Cli, args: &SynthArgs) -> Result<()> {
    let mut spec: SynthSpec = match &args.spec {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => SynthSpec::default(),
    };
    if let Some(v) = args.categories {
        spec.n_categories = v;
    }
    if let Some(v) = args.models {
        spec.models_per_category = v;
    }
    if let Some(v) = args.views {
        spec.views_per_model = v;
    }
    if let Some(v) = args.queries {
        spec.queries_per_category = v;
    }
    if args.no_distractors {
        spec.scrambled_distractors = false;
    }
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    let data = generate_synthetic(&spec);
    let views: Vec<SketchDocument> = data.views.iter().map(SketchDocument::from).collect();
    let queries: Vec<QueryDocument> = data
        .queries
        .iter()
        .map(|q| QueryDocument {
            sketch: SketchDocument::from(q),
            bbox: None,
        })
        .collect();
    let partial_spec = eval::PartialSpec::default();
    let partial: Vec<QueryDocument> = data
        .queries
        .iter()
        .enumerate()
        .filter_map(|(i, q)| {
            let (s, bbox) = make_partial(q, partial_spec.drop_fraction, partial_spec.seed.wrapping_add(i as u64))?;
            Some(QueryDocument {
                sketch: SketchDocument::from(&s),
                bbox: Some(bbox),
            })
        })
        .collect();
    fs::create_dir_all(&args.out)?;
    write_documents(&args.out.join("views.jsonl"), &views)?;
    write_documents(&args.out.join("queries.jsonl"), &queries)?;
    write_documents(&args.out.join("partial_queries.jsonl"), &partial)?;
    let manifest = serde_json::json!({ "spec": spec, "distractors": data.distractors });
    fs::write(args.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    emit(
        &SynthSummary {
            dir: args.out.clone(),
            views: views.len(),
            queries: queries.len(),
            partial_queries: partial.len(),
            distractors: data.distractors,
        },
        cli.pretty,
    )
}

#[derive(Serialize)]
struct BuildSummary {
    records: usize,
    models: usize,
    scheme: Scheme,
    variant: Variant,
    fingerprint: String,
    files: Vec<PathBuf>,
}

fn index_build(cli: &Cli, args: &BuildArgs) -> Result<()> {
    let variant = Variant::from_str(&args.variant).map_err(|e| anyhow::anyhow!("{e}"))?;
    let config = extraction_config(cli)?;
    let extractor = Extractor::new(config)?;
    let docs: Vec<SketchDocument> = read_documents(&args.views)?;
    let views = docs
        .iter()
        .enumerate()
        .map(|(i, d)| SegmentedSketch::try_from(d).with_context(|| format!("view document {i}")))
        .collect::<Result<Vec<_>>>()?;
    let index = build_index(&views, &extractor, variant)?;
    let files = match args.format {
        IndexFormat::Pair => {
            let dir = args.out.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            let name = args
                .out
                .file_name()
                .context("output prefix has no file name")?
                .to_string_lossy()
                .to_string();
            let (m, p) = save_index(&index, dir, &name)?;
            vec![m, p]
        }
        IndexFormat::Jsonl => {
            if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            write_index_jsonl(&index, fs::File::create(&args.out)?)?;
            vec![args.out.clone()]
        }
    };
    emit(
        &BuildSummary {
            records: index.records.len(),
            models: index.models().len(),
            scheme: index.layout.scheme.clone(),
            variant: index.variant,
            fingerprint: index.fingerprint.clone(),
            files,
        },
        cli.pretty,
    )
}

fn parse_bbox(s: &str) -> Result<Rect> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("bbox `{s}`"))?;
    if v.len() != 4 {
        bail!("bbox needs four numbers x0,y0,x1,y1");
    }
    Ok(Rect::new(v[0], v[1], v[2], v[3]))
}

/// Reads the query file and applies command-line overrides.
pub fn query_request(args: &QueryArgs, scheme: Option<&str>) -> Result<QueryRequest> {
    let text = fs::read_to_string(&args.sketch).with_context(|| format!("reading {}", args.sketch.display()))?;
    let mut req: QueryRequest =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.sketch.display()))?;
    if let Some(k) = args.k {
        req.k = k;
    }
    if let Some(m) = &args.mode {
        req.mode = MatchMode::from_str(m).map_err(|e| anyhow::anyhow!("{e}"))?;
    }
    if let Some(b) = &args.bbox {
        req.bbox = Some(parse_bbox(b)?);
    }
    if let Some(v) = &args.variant {
        req.variant = Some(Variant::from_str(v).map_err(|e| anyhow::anyhow!("{e}"))?);
    }
    if args.full_canvas {
        req.assume_full_canvas = true;
    }
    if let Some(s) = scheme {
        req.scheme = Some(parse_scheme(s)?);
    }
    Ok(req)
}

fn query(cli: &Cli, args: &QueryArgs) -> Result<()> {
    let index = load_index(&args.index).with_context(|| format!("loading index {}", args.index.display()))?;
    let engine = QueryEngine::new(index)?;
    let req = query_request(args, cli.scheme.as_deref())?;
    let resp = engine.query(&req)?;
    if args.csv {
        write_ranking_csv(&resp.results, std::io::stdout().lock())?;
        return Ok(());
    }
    emit(&resp, cli.pretty)
}

fn eval_run(cli: &Cli, args: &EvalArgs) -> Result<()> {
    let mut config: ExperimentConfig = match (&cli.config, args.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(p)) => {
            let ds = DatasetSource::default();
            match p {
                Preset::Exp1 => ExperimentConfig::exp1(ds),
                Preset::Exp2 => ExperimentConfig::exp2(ds),
                Preset::Exp3 => ExperimentConfig::exp3(ds),
                Preset::Exp4 => ExperimentConfig::exp4(ds),
                Preset::Ablations => ExperimentConfig::ablations(ds),
            }
        }
        (None, None) => bail!("eval run needs --config or --preset"),
    };
    if let Some(s) = &cli.scheme {
        config.schemes = vec![parse_scheme(s)?];
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
        if let DatasetSource::Synthetic(spec) = &mut config.dataset {
            spec.seed = seed;
        }
    }
    let run = eval::run_experiment(&config)?;
    eval::write_reports(&run.report, &args.out)?;
    #[derive(Serialize)]
    struct Row<'a> {
        method: &'a str,
        to: f64,
        ft: f64,
        map: f64,
    }
    let rows: Vec<Row> = run
        .report
        .methods
        .iter()
        .map(|m| Row {
            method: &m.label,
            to: m.metrics.to,
            ft: m.metrics.ft,
            map: m.metrics.map,
        })
        .collect();
    emit(&rows, cli.pretty)
}

#[derive(Serialize)]
pub struct LayoutDescription {
    #[serde(flatten)]
    pub layout: RegionLayout,
    pub region_count: usize,
    pub feature_len: usize,
}

pub fn describe_layout(config: &ExtractionConfig) -> Result<LayoutDescription> {
    let layout = build_layout_with(&config.scheme, config.canvas_side, &config.layout)?;
    Ok(LayoutDescription {
        region_count: layout.len(),
        feature_len: feature_len(&layout, config.gabor.orientations.len()),
        layout,
    })
}

fn layout_describe(cli: &Cli) -> Result<()> {
    emit(&describe_layout(&extraction_config(cli)?)?, cli.pretty)
}
