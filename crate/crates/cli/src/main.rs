//! `semfilter` command-line front end.

mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use semfilter::codec::{encode, resolve_codec};
use semfilter::embed::SharedBackend;
use semfilter::eval::{
    bd_rate_with, bench_latency, ingest_accuracy, read_curves_csv, render_svg, run_benchmark, BdInterpolation,
    BenchOptions, DatasetManifest, Mode, RateQualityCurve, RateQualityPoint,
};
use semfilter::{load_image, Error, ErrorKind, Prefilter, Result, StubBackend};

use config::{BackendChoice, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "semfilter", version, about = "Prompt-guided image prefiltering and rate-quality evaluation")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Prefilter one image and write it as PNG.
    Filter(FilterArgs),
    /// Prefilter (optionally) and encode one image; prints rate as JSON.
    Encode(EncodeArgs),
    /// Run a benchmark over a manifest.
    Bench(BenchArgs),
    /// BD-rate between two curve CSVs with columns `bpp,quality`.
    Bdrate(BdrateArgs),
    /// Time the prefiltering stage over a manifest.
    Latency(LatencyArgs),
    /// Render SVG charts from a benchmark `curves.csv`.
    Plot(PlotArgs),
    /// Convert a checkpoint into a model assets directory (needs the Python exporter).
    ExportAssets(ExportArgs),
}

/// Options shared by every command that runs the pipeline.
#[derive(Args, Debug, Clone, Default)]
struct PipelineArgs {
    /// TOML or JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["stub", "neural"])]
    backend: Option<String>,
    /// Model assets directory (defaults to $SEMFILTER_MODEL_DIR).
    #[arg(long)]
    model_dir: Option<PathBuf>,
    #[arg(long)]
    tile_num: Option<usize>,
    #[arg(long)]
    logit_scale: Option<f64>,
    #[arg(long)]
    sigma_one: Option<f64>,
    #[arg(long)]
    sigma_max: Option<f64>,
    #[arg(long)]
    kernel_size: Option<usize>,
    #[arg(long)]
    context_window: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Uniform scores everywhere: every block gets σ_1.
    #[arg(long)]
    no_scoring: bool,
    /// Pin the stride to the tile size.
    #[arg(long)]
    no_overlap: bool,
    /// Send the raw prompt to the text encoder.
    #[arg(long)]
    no_preprocess: bool,
    /// Instruction-phrase blacklist, one phrase per line.
    #[arg(long)]
    blacklist: Option<PathBuf>,
    #[arg(long)]
    stop_words: Option<PathBuf>,
    #[arg(long)]
    lemmas: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FilterArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value = "")]
    prompt: String,
    #[arg(long)]
    out: PathBuf,
    /// Write the score grid to <STEM>.png and <STEM>.json.
    #[arg(long, value_name = "STEM")]
    dump_scores: Option<PathBuf>,
    /// Write the σ grid to <STEM>.png and <STEM>.json.
    #[arg(long, value_name = "STEM")]
    dump_sigma: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value = "")]
    prompt: String,
    #[arg(long, default_value = "jpeg")]
    codec: String,
    #[arg(long)]
    q: i32,
    /// Bitstream output path.
    #[arg(long)]
    out: PathBuf,
    /// Also write the decoded image as PNG.
    #[arg(long)]
    recon: Option<PathBuf>,
    /// Encode the resized input without prefiltering.
    #[arg(long)]
    no_prefilter: bool,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated codec names.
    #[arg(long, value_delimiter = ',')]
    codecs: Option<Vec<String>>,
    /// Comma-separated quality parameters, or `codec=q1,q2;codec=...`.
    #[arg(long)]
    qualities: Option<String>,
    /// Comma-separated modes: none, prefilter, gaussian:<σ>, downsample:<ratio>.
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<String>>,
    #[arg(long)]
    anchor: Option<String>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    keep_bitstreams: bool,
    /// `label,accuracy` CSV replacing the fidelity proxy.
    #[arg(long)]
    accuracy: Option<PathBuf>,
    #[arg(long, value_parser = ["pchip", "cubic"])]
    interpolation: Option<String>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct BdrateArgs {
    #[arg(long)]
    anchor: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value = "pchip", value_parser = ["pchip", "cubic"])]
    interpolation: String,
}

#[derive(Args, Debug)]
struct LatencyArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[arg(long)]
    curves: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "quality")]
    y_label: String,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    out: PathBuf,
    /// Exporter script (defaults to $SEMFILTER_EXPORT_SCRIPT).
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long, default_value = "python3")]
    python: String,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Io => 3,
        ErrorKind::Backend => 4,
        ErrorKind::Codec => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Filter(a) => cmd_filter(a),
        Command::Encode(a) => cmd_encode(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Bdrate(a) => cmd_bdrate(a),
        Command::Latency(a) => cmd_latency(a),
        Command::Plot(a) => cmd_plot(a),
        Command::ExportAssets(a) => cmd_export(a),
    }
}

/// Loads the config file and applies flag overrides, then validates.
fn resolve(args: &PipelineArgs) -> Result<RunConfig> {
    let mut rc = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let p = &mut rc.pipeline;
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = args.$f { p.$f = v; } )* };
    }
    set!(tile_num, logit_scale, sigma_one, sigma_max, kernel_size, context_window, batch_size);
    if args.no_scoring {
        p.flags.use_scoring = false;
    }
    if args.no_overlap {
        p.flags.allow_overlap = false;
    }
    if args.no_preprocess {
        p.flags.preprocess_prompt = false;
    }
    if let Some(b) = &args.backend {
        rc.backend = b.parse()?;
    }
    if args.model_dir.is_some() {
        rc.model_dir = args.model_dir.clone();
    }
    let pr = &mut rc.prompt;
    for (dst, src) in [
        (&mut pr.blacklist, &args.blacklist),
        (&mut pr.stop_words, &args.stop_words),
        (&mut pr.lemmas, &args.lemmas),
        (&mut pr.lexicon, &args.lexicon),
    ] {
        if src.is_some() {
            dst.clone_from(src);
        }
    }
    rc.pipeline.validate()?;
    Ok(rc)
}

fn backend_for(rc: &RunConfig) -> Result<SharedBackend> {
    let model_dir = rc
        .model_dir
        .clone()
        .or_else(|| std::env::var_os("SEMFILTER_MODEL_DIR").map(PathBuf::from));
    let want_neural = match rc.backend {
        BackendChoice::Stub => false,
        BackendChoice::Neural => true,
        BackendChoice::Auto => cfg!(feature = "neural") && model_dir.is_some(),
    };
    if !want_neural {
        log::info!("using the stub embedding backend");
        let side = rc.pipeline.tile_size;
        return Ok(Arc::new(StubBackend::new(64, side, rc.pipeline.context_window)));
    }
    neural_backend(model_dir)
}

#[cfg(feature = "neural")]
fn neural_backend(dir: Option<PathBuf>) -> Result<SharedBackend> {
    use semfilter::embed::NeuralBackend;
    let dir = dir.ok_or_else(|| {
        Error::Backend("neural backend needs --model-dir or SEMFILTER_MODEL_DIR".into())
    })?;
    Ok(Arc::new(NeuralBackend::load(dir)?))
}

#[cfg(not(feature = "neural"))]
fn neural_backend(_dir: Option<PathBuf>) -> Result<SharedBackend> {
    Err(Error::Backend("this build has no neural backend; rebuild with --features neural".into()))
}

fn prefilter_for(rc: &RunConfig) -> Result<Prefilter> {
    let backend = backend_for(rc)?;
    Ok(Prefilter::new(rc.pipeline.clone(), backend)?.with_preprocessor(rc.prompt.preprocessor()?))
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json value"));
}

fn cmd_filter(a: FilterArgs) -> Result<()> {
    let rc = resolve(&a.pipeline)?;
    let img = load_image(&a.image)?;
    let pf = prefilter_for(&rc)?;
    let out = pf.run(&img, &a.prompt)?;
    out.filtered.save_png(&a.out)?;
    if let Some(stem) = &a.dump_scores {
        out.scores.dump(stem)?;
    }
    if let Some(stem) = &a.dump_sigma {
        out.sigmas.dump_range(stem, 0.0, rc.pipeline.sigma_max)?;
    }
    print_json(&json!({
        "out": a.out,
        "width": out.filtered.width(),
        "height": out.filtered.height(),
        "stride": out.grid.stride(),
        "tiles": out.grid.count(),
        "text": out.text,
    }));
    Ok(())
}

fn cmd_encode(a: EncodeArgs) -> Result<()> {
    let rc = resolve(&a.pipeline)?;
    let codec = resolve_codec(&a.codec, &rc.codecs)?;
    let img = load_image(&a.image)?;
    let source = if a.no_prefilter {
        semfilter::tiler::resize_to_tile_multiple(&img, rc.pipeline.tile_size)?
    } else {
        prefilter_for(&rc)?.run(&img, &a.prompt)?.filtered
    };
    let res = encode(codec.as_ref(), &source, a.q)?;
    std::fs::write(&a.out, &res.bitstream).map_err(|e| io_err(&a.out, e))?;
    if let Some(p) = &a.recon {
        res.reconstructed.save_png(p)?;
    }
    print_json(&json!({
        "codec": codec.name(),
        "quality_param": res.quality_param,
        "bpp": res.bpp,
        "bytes": res.bitstream.len(),
        "width": source.width(),
        "height": source.height(),
        "prefiltered": !a.no_prefilter,
    }));
    Ok(())
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_owned(),
        source: e,
    }
}

fn parse_qualities(spec: &str) -> Result<(Vec<i32>, BTreeMap<String, Vec<i32>>)> {
    let bad = |reason: String| Error::Config { field: "qualities", reason };
    let list = |s: &str| {
        s.split(',')
            .map(|q| q.trim().parse::<i32>().map_err(|_| bad(format!("bad quality {q:?}"))))
            .collect::<Result<Vec<_>>>()
    };
    if !spec.contains('=') {
        return Ok((list(spec)?, BTreeMap::new()));
    }
    let mut per = BTreeMap::new();
    for part in spec.split(';').filter(|p| !p.trim().is_empty()) {
        let (codec, qs) = part.split_once('=').ok_or_else(|| bad(format!("expected codec=q1,q2 in {part:?}")))?;
        per.insert(codec.trim().to_owned(), list(qs)?);
    }
    Ok((Vec::new(), per))
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let rc = resolve(&a.pipeline)?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    if manifest.is_empty() {
        return Err(Error::Config {
            field: "manifest",
            reason: format!("{} has no entries", a.manifest.display()),
        });
    }
    let mut opts = BenchOptions::new(&a.out_dir);
    let b = &rc.bench;
    opts.codecs = a.codecs.clone().or_else(|| b.codecs.clone()).unwrap_or(opts.codecs);
    if let Some(spec) = a.qualities.as_deref().or(b.qualities.as_deref()) {
        (opts.qualities, opts.per_codec_qualities) = parse_qualities(spec)?;
    }
    if let Some(modes) = a.modes.clone().or_else(|| b.modes.clone()) {
        opts.modes = modes.iter().map(|m| m.parse()).collect::<Result<Vec<Mode>>>()?;
    }
    if let Some(anchor) = a.anchor.as_deref().or(b.anchor.as_deref()) {
        opts.anchor = anchor.parse()?;
    }
    if !opts.modes.contains(&opts.anchor) {
        return Err(Error::Config {
            field: "anchor",
            reason: format!("anchor mode {} is not among the benchmark modes", opts.anchor),
        });
    }
    opts.workers = a.workers.or(b.workers).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    opts.keep_bitstreams = a.keep_bitstreams || b.keep_bitstreams;
    if let Some(m) = a.interpolation.as_deref().or(b.interpolation.as_deref()) {
        opts.interpolation = m.parse()?;
    }
    if let Some(p) = a.accuracy.as_ref().or(b.accuracy.as_ref()) {
        opts.accuracy = Some(ingest_accuracy(p)?);
    }
    opts.templates = rc.codecs.clone();
    let pf = prefilter_for(&rc)?;
    let report = run_benchmark(&manifest, &pf, &opts)?;
    print_json(&json!({
        "out_dir": a.out_dir,
        "records": report.summary.records,
        "failed_records": report.summary.failed_records,
        "quality_source": report.summary.quality_source,
        "bd_rates": report.summary.bd_rates,
    }));
    Ok(())
}

fn read_curve(path: &Path) -> Result<RateQualityCurve> {
    let bad = |reason: String| Error::Parse {
        what: path.display().to_string(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut points = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (n == 0 && line.starts_with("bpp")) {
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let mut num = || {
            cols.next()
                .and_then(|c| c.parse::<f64>().ok())
                .ok_or_else(|| bad(format!("line {}: expected bpp,quality", n + 1)))
        };
        points.push(RateQualityPoint {
            bpp: num()?,
            quality: num()?,
        });
    }
    let label = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    RateQualityCurve::new(label, points)
}

fn cmd_bdrate(a: BdrateArgs) -> Result<()> {
    let method: BdInterpolation = a.interpolation.parse()?;
    let anchor = read_curve(&a.anchor)?;
    let test = read_curve(&a.test)?;
    let value = bd_rate_with(&anchor, &test, method)?;
    print_json(&json!({
        "anchor": anchor.label,
        "test": test.label,
        "interpolation": method,
        "bd_rate_percent": value,
    }));
    Ok(())
}

fn cmd_latency(a: LatencyArgs) -> Result<()> {
    let rc = resolve(&a.pipeline)?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    let inputs = manifest
        .entries
        .iter()
        .map(|e| Ok((load_image(&e.image)?, e.prompt.clone())))
        .collect::<Result<Vec<_>>>()?;
    let pf = prefilter_for(&rc)?;
    let stats = bench_latency(&pf, &inputs)?;
    print_json(&serde_json::to_value(stats).expect("stats serialize"));
    Ok(())
}

fn cmd_plot(a: PlotArgs) -> Result<()> {
    let curves = read_curves_csv(&a.curves)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| io_err(&a.out_dir, e))?;
    let mut written = Vec::new();
    for (codec, cs) in &curves {
        let path = a.out_dir.join(format!("rate_quality_{codec}.svg"));
        std::fs::write(&path, render_svg(codec, &a.y_label, cs)).map_err(|e| io_err(&path, e))?;
        written.push(path);
    }
    print_json(&json!({ "written": written }));
    Ok(())
}

fn cmd_export(a: ExportArgs) -> Result<()> {
    let script = a
        .script
        .or_else(|| std::env::var_os("SEMFILTER_EXPORT_SCRIPT").map(PathBuf::from))
        .ok_or_else(|| Error::Config {
            field: "script",
            reason: "no exporter script; pass --script or set SEMFILTER_EXPORT_SCRIPT".into(),
        })?;
    if !script.is_file() {
        return Err(io_err(&script, std::io::Error::new(std::io::ErrorKind::NotFound, "exporter script not found")));
    }
    let status = std::process::Command::new(&a.python)
        .arg(&script)
        .args(["export", "--model", &a.model, "--out"])
        .arg(&a.out)
        .status()
        .map_err(|e| Error::Backend(format!("cannot run {}: {e}", a.python)))?;
    if !status.success() {
        return Err(Error::Backend(format!("exporter exited with {status}")));
    }
    let meta = a.out.join("metadata.json");
    if !meta.is_file() {
        return Err(Error::Backend(format!("exporter wrote no {}", meta.display())));
    }
    print_json(&json!({ "assets": a.out }));
    Ok(())
}
