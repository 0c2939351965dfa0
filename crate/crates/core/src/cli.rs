//! Command-line front end.
//!
//! Exit codes: 0 success, 2 input/format error, 3 data-contract error,
//! 4 parameter error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::alignkit::{self, AlignmentResult, LayerCurve};
use crate::embedding_store::{
    self, first_mismatch, load_container_with_meta, EmbeddingSet, ItemMeta, LayerStack, ScoreRange,
};
use crate::error::{Error, ErrorClass, Result};
use crate::simkit::{self, MetricKind, SimilaritySummary, Subsample, DEFAULT_MAX_PAIRS};
use crate::stats::{self, Alternative, PermutationTest, RngSeed, TestReport, RNG_ALGORITHM};
use crate::strata::{bucketize, Stratum, StratumLabels, Thresholds};
use crate::synth::{self, StratumNoise, SynthKind, SynthSpec};

pub const TOOL_NAME: &str = "repalign";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_PARAM: i32 = 4;

const LONG_VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (report schema 1)");

#[derive(Debug, Parser)]
#[command(name = TOOL_NAME, version = LONG_VERSION, about = "Representational self-similarity and mutual-kNN alignment of embedding sets")]
pub struct Cli {
    /// Worker threads for the numeric kernels (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert an `id,score,e0,...` CSV into a RALN container plus sidecar.
    Convert(ConvertArgs),
    /// Within-stratum self-similarity: Aesthetic minus Unaesthetic.
    Intra(IntraArgs),
    /// Mutual-kNN alignment between two embedding sets over the same items.
    Align(AlignArgs),
    /// Alignment of every layer in a directory against a reference set.
    Layers(LayersArgs),
    /// Write a synthetic fixture.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StrataArgs {
    /// Scores below this are Unaesthetic.
    #[arg(long, default_value_t = Thresholds::default().lo)]
    pub lo: f64,
    /// Scores above this are Aesthetic.
    #[arg(long, default_value_t = Thresholds::default().hi)]
    pub hi: f64,
    #[arg(long, default_value_t = ScoreRange::default().min)]
    pub score_min: f64,
    #[arg(long, default_value_t = ScoreRange::default().max)]
    pub score_max: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ConvertArgs {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to the CSV file stem.
    #[arg(long)]
    pub source_tag: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct IntraArgs {
    #[arg(long)]
    pub emb: PathBuf,
    /// Metadata JSON; defaults to the container's sidecar.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[arg(long, value_parser = parse_metric, default_value = "cosine")]
    pub metric: MetricKind,
    #[command(flatten)]
    pub strata: StrataArgs,
    /// Pair budget per stratum before switching to seeded pair sampling.
    #[arg(long, default_value_t = DEFAULT_MAX_PAIRS)]
    pub max_pairs: u64,
    /// Required whenever a stratum exceeds the pair budget.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Bootstrap resamples for intervals over sampled pairs.
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AlignArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Metadata JSON; defaults to the sidecar of `--a`.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    /// Neighbourhood size.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, value_parser = parse_metric, default_value = "cosine")]
    pub metric_a: MetricKind,
    #[arg(long, value_parser = parse_metric, default_value = "euclidean")]
    pub metric_b: MetricKind,
    #[command(flatten)]
    pub strata: StrataArgs,
    #[arg(long, default_value_t = 999)]
    pub resamples: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, value_parser = parse_alternative, default_value = "greater")]
    pub alternative: Alternative,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct LayersArgs {
    /// Directory of `.raln` layers, read in lexicographic file-name order.
    #[arg(long)]
    pub stack_dir: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Metadata JSON; defaults to the reference sidecar, if any.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, value_parser = parse_metric, default_value = "cosine")]
    pub metric_stack: MetricKind,
    #[arg(long, value_parser = parse_metric, default_value = "euclidean")]
    pub metric_ref: MetricKind,
    #[command(flatten)]
    pub strata: StrataArgs,
    /// JSON report.
    #[arg(long)]
    pub out: PathBuf,
    /// Curve CSV; defaults to the report path with a `.csv` extension.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_parser = parse_kind)]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 600)]
    pub n: usize,
    #[arg(long, default_value_t = 32)]
    pub d: usize,
    /// Noise level for noise-pair fixtures.
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long, default_value_t = StratumNoise::default().aesthetic)]
    pub noise_aesthetic: f64,
    #[arg(long, default_value_t = StratumNoise::default().ambiguous)]
    pub noise_ambiguous: f64,
    #[arg(long, default_value_t = StratumNoise::default().unaesthetic)]
    pub noise_unaesthetic: f64,
    #[arg(long, default_value_t = 0.0)]
    pub center_norm: f64,
    /// Comma-separated per-layer noise levels for layer-sweep fixtures.
    #[arg(long, value_delimiter = ',', default_value = "1.5,1.0,0.3,1.0,1.5")]
    pub schedule: Vec<f64>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn parse_metric(s: &str) -> std::result::Result<MetricKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_kind(s: &str) -> std::result::Result<SynthKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_alternative(s: &str) -> std::result::Result<Alternative, String> {
    match s {
        "greater" => Ok(Alternative::Greater),
        "less" => Ok(Alternative::Less),
        "two-sided" => Ok(Alternative::TwoSided),
        _ => Err(format!("unknown alternative {s:?} (greater, less, two-sided)")),
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err.class() {
        ErrorClass::Input => EXIT_INPUT,
        ErrorClass::DataContract => EXIT_DATA,
        ErrorClass::Parameter => EXIT_PARAM,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_PARAM,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.threads {
        Some(threads) => {
            if threads == 0 {
                return Err(Error::InvalidParameter("--threads must be at least 1".into()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            pool.install(|| dispatch(cli.command))
        }
        None => dispatch(cli.command),
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Convert(args) => cmd_convert(&args),
        Command::Intra(args) => cmd_intra(&args),
        Command::Align(args) => cmd_align(&args),
        Command::Layers(args) => cmd_layers(&args),
        Command::Synth(args) => cmd_synth(&args),
    }
}

#[derive(Serialize)]
struct Report<'a, P: Serialize, R: Serialize> {
    schema_version: u32,
    tool: &'static str,
    tool_version: &'static str,
    command: &'static str,
    params: &'a P,
    rng_algorithm: &'static str,
    results: R,
}

fn write_report<P: Serialize, R: Serialize>(
    path: &Path,
    command: &'static str,
    params: &P,
    results: R,
) -> Result<()> {
    let report = Report {
        schema_version: REPORT_SCHEMA_VERSION,
        tool: TOOL_NAME,
        tool_version: TOOL_VERSION,
        command,
        params,
        rng_algorithm: RNG_ALGORITHM,
        results,
    };
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

fn labels_from(metas: &[ItemMeta], set: &EmbeddingSet, strata: &StrataArgs) -> Result<StratumLabels> {
    if metas.len() != set.len() {
        return Err(Error::MetadataLengthMismatch {
            items: metas.len(),
            rows: set.len(),
        });
    }
    let ids: Vec<String> = metas.iter().map(|m| m.id.clone()).collect();
    if let Some(position) = first_mismatch(&ids, set.items()) {
        return Err(Error::ItemMismatch { position });
    }
    ScoreRange {
        min: strata.score_min,
        max: strata.score_max,
    }
    .validate(metas)?;
    bucketize(metas, strata.lo, strata.hi)
}

/// Explicit metadata file, else the sidecar that came with the container.
fn resolve_metas(explicit: Option<&Path>, sidecar: Option<Vec<ItemMeta>>) -> Result<Option<Vec<ItemMeta>>> {
    match explicit {
        Some(path) => embedding_store::load_meta(path).map(Some),
        None => Ok(sidecar),
    }
}

pub fn cmd_convert(args: &ConvertArgs) -> Result<()> {
    let (set, metas) = embedding_store::load_csv(&args.csv)?;
    let set = match &args.source_tag {
        Some(tag) => EmbeddingSet::new(set.items().to_vec(), set.dim(), set.data().to_vec(), tag.clone())?,
        None => set,
    };
    embedding_store::save_container_with_meta(&set, &metas, &args.out)?;
    eprintln!("wrote {} ({} x {})", args.out.display(), set.len(), set.dim());
    Ok(())
}

#[derive(Serialize)]
struct IntervalBlock {
    level: f64,
    n_resamples: usize,
    aesthetic: Option<(f64, f64)>,
    unaesthetic: Option<(f64, f64)>,
    delta: (f64, f64),
}

#[derive(Serialize)]
struct IntraResults {
    thresholds: Thresholds,
    stratum_sizes: BTreeMap<Stratum, usize>,
    summary: SimilaritySummary,
    total_pairs: (u64, u64),
    pair_sampling: &'static str,
    intervals: Option<IntervalBlock>,
}

fn stratum_sizes(labels: &StratumLabels) -> BTreeMap<Stratum, usize> {
    Stratum::ALL.into_iter().map(|s| (s, labels.count(s))).collect()
}

pub fn cmd_intra(args: &IntraArgs) -> Result<()> {
    let (set, sidecar) = load_container_with_meta(&args.emb)?;
    let metas = resolve_metas(args.meta.as_deref(), sidecar)?.ok_or_else(|| Error::Metadata {
        path: embedding_store::sidecar_path(&args.emb),
        message: "no metadata: pass --meta or provide a sidecar".into(),
    })?;
    let labels = labels_from(&metas, &set, &args.strata)?;

    let pairs = |s: Stratum| {
        let m = labels.count(s) as u64;
        m * m.saturating_sub(1) / 2
    };
    let needs_sampling = pairs(Stratum::Aesthetic).max(pairs(Stratum::Unaesthetic)) > args.max_pairs;
    if args.max_pairs == 0 {
        return Err(Error::InvalidParameter("--max-pairs must be positive".into()));
    }
    let subsample = match (args.seed, needs_sampling) {
        (Some(seed), _) => Some(Subsample {
            max_pairs: args.max_pairs,
            seed: RngSeed(seed),
        }),
        (None, false) => None,
        (None, true) => {
            return Err(Error::InvalidParameter(format!(
                "a stratum exceeds --max-pairs {}; pair sampling requires --seed",
                args.max_pairs
            )))
        }
    };

    let (summary, samples) = simkit::stratum_delta_with_pairs(&set, &labels, args.metric, subsample)?;
    let intervals = match subsample {
        Some(sub) if samples.aesthetic.sampled || samples.unaesthetic.sampled => {
            let ci = |sample: &simkit::PairSample| -> Result<Option<(f64, f64)>> {
                if sample.sampled {
                    stats::bootstrap_ci(&sample.values, args.resamples, sub.seed, args.level).map(Some)
                } else {
                    Ok(None)
                }
            };
            Some(IntervalBlock {
                level: args.level,
                n_resamples: args.resamples,
                aesthetic: ci(&samples.aesthetic)?,
                unaesthetic: ci(&samples.unaesthetic)?,
                delta: stats::bootstrap_diff_ci(
                    &samples.aesthetic.values,
                    &samples.unaesthetic.values,
                    args.resamples,
                    sub.seed,
                    args.level,
                )?,
            })
        }
        _ => None,
    };
    let results = IntraResults {
        thresholds: labels.thresholds(),
        stratum_sizes: stratum_sizes(&labels),
        total_pairs: (samples.aesthetic.total_pairs, samples.unaesthetic.total_pairs),
        pair_sampling: if intervals.is_some() {
            "uniform without replacement"
        } else {
            "exhaustive"
        },
        summary,
        intervals,
    };
    write_report(&args.out, "intra", args, results)
}

#[derive(Serialize)]
struct StratumBlock {
    count: usize,
    mean: f64,
    ci: (f64, f64),
}

#[derive(Serialize)]
struct AlignResults {
    thresholds: Thresholds,
    neighbor_graph: &'static str,
    bootstrap: &'static str,
    n_items: usize,
    null_baseline: f64,
    ci_level: f64,
    strata: BTreeMap<Stratum, StratumBlock>,
    aesthetic_vs_unaesthetic: Option<TestReport>,
    alignment: AlignmentResult,
}

pub fn cmd_align(args: &AlignArgs) -> Result<()> {
    let (a, sidecar) = load_container_with_meta(&args.a)?;
    let b = embedding_store::load_container(&args.b)?;
    if let Some(position) = a.first_item_mismatch(&b) {
        return Err(Error::ItemMismatch { position });
    }
    alignkit::check_k(args.k, a.len())?;
    let labels = match resolve_metas(args.meta.as_deref(), sidecar)? {
        Some(metas) => labels_from(&metas, &a, &args.strata)?,
        None => StratumLabels::from_labels(
            vec![Stratum::Unscored; a.len()],
            Thresholds::new(args.strata.lo, args.strata.hi)?,
        ),
    };
    let seed = RngSeed(args.seed);

    let raw = alignkit::mutual_knn_alignment(&a, &b, args.k, args.metric_a, args.metric_b)?;
    let mut alignment = alignkit::stratified_alignment(&raw, &labels)?;
    alignment.ci = Some(stats::bootstrap_ci(&alignment.per_item, args.resamples, seed, args.level)?);

    let mut strata = BTreeMap::new();
    for (&stratum, &mean) in &alignment.per_stratum_mean {
        let values: Vec<f64> = labels.indices(stratum).iter().map(|&i| alignment.per_item[i]).collect();
        strata.insert(
            stratum,
            StratumBlock {
                count: values.len(),
                mean,
                ci: stats::bootstrap_ci(&values, args.resamples, seed, args.level)?,
            },
        );
    }
    let test = if labels.count(Stratum::Aesthetic) > 0 && labels.count(Stratum::Unaesthetic) > 0 {
        Some(
            PermutationTest::new(args.resamples, seed)
                .with_alternative(args.alternative)
                .with_ci_level(args.level)
                .run(&alignment.per_item, &labels, Stratum::Aesthetic, Stratum::Unaesthetic)?,
        )
    } else {
        None
    };
    alignment.p_value = test.map(|t| t.p_value);

    let results = AlignResults {
        thresholds: labels.thresholds(),
        neighbor_graph: "pooled",
        bootstrap: "score-level",
        n_items: a.len(),
        null_baseline: stats::expected_null_alignment(a.len(), args.k)?,
        ci_level: args.level,
        strata,
        aesthetic_vs_unaesthetic: test,
        alignment,
    };
    write_report(&args.out, "align", args, results)
}

/// `.raln` files in `dir`, sorted by file name.
pub fn list_layer_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "raln"))
        .collect();
    files.sort_by(|x, y| x.file_name().cmp(&y.file_name()));
    if files.is_empty() {
        return Err(Error::Shape(format!("no .raln layers in {}", dir.display())));
    }
    Ok(files)
}

pub fn curve_csv(curve: &LayerCurve) -> String {
    let mut out = String::from("layer_name,depth_fraction,stratum,alignment\n");
    for p in &curve.points {
        let _ = writeln!(out, "{},{},all,{}", p.layer_name, p.depth_fraction, p.overall);
        for (stratum, value) in &p.per_stratum {
            let _ = writeln!(out, "{},{},{},{}", p.layer_name, p.depth_fraction, stratum, value);
        }
    }
    out
}

#[derive(Serialize)]
struct LayersResults<'a> {
    thresholds: Option<Thresholds>,
    neighbor_graph: &'static str,
    layer_files: Vec<String>,
    curve: &'a LayerCurve,
    argmax_layer: &'a str,
}

pub fn cmd_layers(args: &LayersArgs) -> Result<()> {
    let files = list_layer_files(&args.stack_dir)?;
    let mut layers = Vec::with_capacity(files.len());
    let mut names = Vec::with_capacity(files.len());
    for path in &files {
        layers.push(embedding_store::load_container(path)?);
        names.push(path.file_stem().unwrap_or_default().to_string_lossy().into_owned());
    }
    let stack = LayerStack::new(layers, names)?;
    let (reference, sidecar) = load_container_with_meta(&args.reference)?;
    if let Some(position) = reference.first_item_mismatch(&stack.layers()[0]) {
        return Err(Error::ItemMismatch { position });
    }
    alignkit::check_k(args.k, reference.len())?;
    let labels = resolve_metas(args.meta.as_deref(), sidecar)?
        .map(|metas| labels_from(&metas, &reference, &args.strata))
        .transpose()?;
    let curve = alignkit::layer_alignment_curve(
        &stack,
        &reference,
        args.k,
        args.metric_stack,
        args.metric_ref,
        labels.as_ref(),
    )?;

    let csv_path = args.csv.clone().unwrap_or_else(|| args.out.with_extension("csv"));
    fs::write(&csv_path, curve_csv(&curve)).map_err(|e| Error::io(&csv_path, e))?;
    let results = LayersResults {
        thresholds: labels.as_ref().map(StratumLabels::thresholds),
        neighbor_graph: "pooled",
        layer_files: files
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect(),
        argmax_layer: &curve.points[curve.argmax()].layer_name,
        curve: &curve,
    };
    write_report(&args.out, "layers", args, results)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec = SynthSpec::new(args.kind, args.n, args.d, args.seed)
        .with_noise(args.noise)
        .with_strata_noise(StratumNoise {
            aesthetic: args.noise_aesthetic,
            ambiguous: args.noise_ambiguous,
            unaesthetic: args.noise_unaesthetic,
        })
        .with_center_norm(args.center_norm)
        .with_layer_schedule(args.schedule.clone());
    let output = synth::generate(&spec)?;
    let written = synth::write_fixture(&output, &args.out_dir)?;
    let spec_path = args.out_dir.join("spec.json");
    let mut json = serde_json::to_string_pretty(&spec).expect("spec serializes");
    json.push('\n');
    fs::write(&spec_path, json).map_err(|e| Error::io(&spec_path, e))?;
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}
