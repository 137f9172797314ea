//! Benchmark harness: entries x codecs x qualities x modes, rate-quality
//! curves per codec and mode, and BD-rates against an anchor mode.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bdrate::{bd_rate_with, BdInterpolation};
use super::curve::{RateQualityCurve, RateQualityPoint};
use super::fidelity::fidelity_proxy;
use super::manifest::{unmatched_labels, DatasetManifest, ManifestEntry};
use super::plot::render_svg;
use crate::codec::{encode, resolve_codec, Codec, CodecTemplate};
use crate::error::{Error, Result};
use crate::image::{load_image, Image};
use crate::pipeline::Prefilter;
use crate::prefilter::gaussian_blur;
use crate::tiler::resize_to_tile_multiple;

/// What happens to the tile-multiple raster before encoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Encode as is.
    None,
    /// Prompt-guided prefiltering.
    Prefilter,
    /// Whole-image Gaussian with a fixed σ.
    Gaussian(f64),
    /// Bilinear downscale by a ratio in (0, 1]; upscaled back after decoding.
    Downsample(f64),
}

fn short(v: f64) -> String {
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_owned()
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::None => f.write_str("none"),
            Mode::Prefilter => f.write_str("prefilter"),
            Mode::Gaussian(s) => write!(f, "gaussian-{}", short(*s)),
            Mode::Downsample(r) => write!(f, "downsample-{}", short(*r)),
        }
    }
}

fn parse_number(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((a, b)) => Some(a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?),
        None => s.trim().parse().ok(),
    }
}

impl FromStr for Mode {
    type Err = Error;

    /// Accepts `none`, `prefilter`, `gaussian:<σ>`, `downsample:<ratio>`,
    /// the call forms `gaussian(<σ>)` / `global_gaussian(<σ>)`, and the
    /// display labels. Ratios may be fractions such as `1/3`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: String| Error::Config { field: "modes", reason };
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "none" => return Ok(Mode::None),
            "prefilter" => return Ok(Mode::Prefilter),
            _ => {}
        }
        let (name, arg) = if let Some(inner) = t.strip_suffix(')') {
            inner.split_once('(').ok_or_else(|| bad(format!("cannot parse mode {s:?}")))?
        } else {
            t.split_once([':', '-', '='])
                .ok_or_else(|| bad(format!("unknown mode {s:?}")))?
        };
        let v = parse_number(arg).ok_or_else(|| bad(format!("bad number in mode {s:?}")))?;
        match name {
            "gaussian" | "global_gaussian" => {
                if v >= 0.0 && v.is_finite() {
                    Ok(Mode::Gaussian(v))
                } else {
                    Err(bad(format!("σ must be >= 0 in {s:?}")))
                }
            }
            "downsample" => {
                if v > 0.0 && v <= 1.0 {
                    Ok(Mode::Downsample(v))
                } else {
                    Err(bad(format!("ratio must be in (0, 1] in {s:?}")))
                }
            }
            _ => Err(bad(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub codecs: Vec<String>,
    /// Parameters used for codecs without an entry in `per_codec_qualities`.
    pub qualities: Vec<i32>,
    pub per_codec_qualities: BTreeMap<String, Vec<i32>>,
    pub modes: Vec<Mode>,
    pub anchor: Mode,
    pub workers: usize,
    pub out_dir: PathBuf,
    pub keep_bitstreams: bool,
    pub interpolation: BdInterpolation,
    /// External accuracies keyed by run label; replaces the fidelity proxy.
    pub accuracy: Option<BTreeMap<String, f64>>,
    pub templates: Vec<CodecTemplate>,
}

impl BenchOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            codecs: vec!["jpeg".into()],
            qualities: vec![10, 30, 50, 70, 90],
            per_codec_qualities: BTreeMap::new(),
            modes: vec![Mode::None, Mode::Prefilter],
            anchor: Mode::None,
            workers: 1,
            out_dir: out_dir.into(),
            keep_bitstreams: false,
            interpolation: BdInterpolation::Pchip,
            accuracy: None,
            templates: Vec::new(),
        }
    }

    fn qualities_for(&self, codec: &str) -> &[i32] {
        self.per_codec_qualities.get(codec).unwrap_or(&self.qualities)
    }
}

/// Label joining a run to an external accuracy table: `codec/mode/q<param>`.
pub fn run_label(codec: &str, mode: &Mode, quality: i32) -> String {
    format!("{codec}/{mode}/q{quality}")
}

/// One (entry, codec, mode, quality) measurement or its failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub id: String,
    pub codec: String,
    pub mode: String,
    pub quality_param: i32,
    pub label: String,
    pub bpp: Option<f64>,
    pub fidelity: Option<f64>,
    pub prefilter_ms: Option<f64>,
    pub encoded_width: Option<usize>,
    pub encoded_height: Option<usize>,
    pub error: Option<String>,
}

impl BenchRecord {
    fn sort_key(&self) -> (&str, &str, &str, i32) {
        (&self.id, &self.codec, &self.mode, self.quality_param)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePointSummary {
    pub quality_param: i32,
    pub bpp: f64,
    pub quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub codec: String,
    pub mode: String,
    pub points: Vec<CurvePointSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdRow {
    pub codec: String,
    pub mode: String,
    pub anchor: String,
    pub bd_rate: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub entries: usize,
    pub records: usize,
    pub failed_records: usize,
    /// `fidelity_proxy` or `accuracy`.
    pub quality_source: String,
    pub interpolation: BdInterpolation,
    pub anchor: String,
    pub mean_prefilter_ms: BTreeMap<String, f64>,
    pub curves: Vec<CurveSummary>,
    pub bd_rates: Vec<BdRow>,
    pub unmatched_accuracy_labels: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    pub summary: BenchSummary,
}

struct Appender {
    file: Mutex<std::io::BufWriter<std::fs::File>>,
    path: PathBuf,
}

impl Appender {
    fn create(path: PathBuf) -> Result<Self> {
        let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            file: Mutex::new(std::io::BufWriter::new(f)),
            path,
        })
    }

    fn append(&self, recs: &[BenchRecord]) -> Result<()> {
        let mut f = self.file.lock().expect("appender poisoned");
        for r in recs {
            let line = serde_json::to_string(r).expect("record serializes");
            writeln!(f, "{line}").map_err(|e| Error::io(&self.path, e))?;
        }
        f.flush().map_err(|e| Error::io(&self.path, e))
    }
}

struct Job<'a> {
    prefilter: &'a Prefilter,
    codecs: &'a [(String, Box<dyn Codec>)],
    opts: &'a BenchOptions,
}

impl Job<'_> {
    fn failed(&self, entry: &ManifestEntry, codec: &str, mode: &Mode, q: i32, err: &Error) -> BenchRecord {
        BenchRecord {
            id: entry.id.clone(),
            codec: codec.to_owned(),
            mode: mode.to_string(),
            quality_param: q,
            label: run_label(codec, mode, q),
            bpp: None,
            fidelity: None,
            prefilter_ms: None,
            encoded_width: None,
            encoded_height: None,
            error: Some(err.to_string()),
        }
    }

    fn all_failed(&self, entry: &ManifestEntry, modes: &[Mode], err: &Error) -> Vec<BenchRecord> {
        let mut out = Vec::new();
        for (name, _) in self.codecs {
            for mode in modes {
                for &q in self.opts.qualities_for(name) {
                    out.push(self.failed(entry, name, mode, q, err));
                }
            }
        }
        out
    }

    fn source_for(&self, original: &Image, raster: &Image, mode: &Mode, prompt: &str) -> Result<(Image, Option<f64>)> {
        let ks = self.prefilter.config().kernel_size;
        let t0 = Instant::now();
        let img = match *mode {
            Mode::None => return Ok((raster.clone(), None)),
            Mode::Prefilter => self.prefilter.run(original, prompt)?.filtered,
            Mode::Gaussian(s) => gaussian_blur(raster, s, ks)?,
            Mode::Downsample(r) => {
                let w = ((raster.width() as f64 * r).round() as usize).max(1);
                let h = ((raster.height() as f64 * r).round() as usize).max(1);
                raster.resize_bilinear(w, h)?
            }
        };
        Ok((img, Some(t0.elapsed().as_secs_f64() * 1e3)))
    }

    fn keep(&self, entry: &ManifestEntry, codec: &dyn Codec, mode: &Mode, q: i32, bytes: &[u8]) -> Result<()> {
        let dir = self.opts.out_dir.join("bitstreams");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let safe: String = entry
            .id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        let path = dir.join(format!("{safe}_{}_{mode}_q{q}.{}", codec.name(), codec.bitstream_ext()));
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }

    fn run_entry(&self, entry: &ManifestEntry) -> Vec<BenchRecord> {
        let modes = &self.opts.modes;
        let tile = self.prefilter.config().tile_size;
        let loaded = load_image(&entry.image).and_then(|img| {
            let raster = resize_to_tile_multiple(&img, tile)?;
            Ok((img, raster))
        });
        let (original, raster) = match loaded {
            Ok(v) => v,
            Err(e) => return self.all_failed(entry, modes, &e),
        };
        let backend = self.prefilter.backend().as_ref();
        let mut out = Vec::new();
        for mode in modes {
            let (source, ms) = match self.source_for(&original, &raster, mode, &entry.prompt) {
                Ok(v) => v,
                Err(e) => {
                    out.extend(self.all_failed(entry, std::slice::from_ref(mode), &e));
                    continue;
                }
            };
            for (name, codec) in self.codecs {
                for &q in self.opts.qualities_for(name) {
                    let measured = encode(codec.as_ref(), &source, q).and_then(|res| {
                        if self.opts.keep_bitstreams {
                            self.keep(entry, codec.as_ref(), mode, q, &res.bitstream)?;
                        }
                        let recon = if res.reconstructed.dims() == raster.dims() {
                            res.reconstructed
                        } else {
                            res.reconstructed.resize_bilinear(raster.width(), raster.height())?
                        };
                        let fid = fidelity_proxy(backend, &raster, &recon)?;
                        Ok((res.bpp, fid))
                    });
                    out.push(match measured {
                        Ok((bpp, fid)) => BenchRecord {
                            id: entry.id.clone(),
                            codec: name.clone(),
                            mode: mode.to_string(),
                            quality_param: q,
                            label: run_label(name, mode, q),
                            bpp: Some(bpp),
                            fidelity: Some(fid),
                            prefilter_ms: ms,
                            encoded_width: Some(source.width()),
                            encoded_height: Some(source.height()),
                            error: None,
                        },
                        Err(e) => self.failed(entry, name, mode, q, &e),
                    });
                }
            }
        }
        out
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(value).expect("serializable");
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Runs the benchmark and writes `records.jsonl`, `summary.json`,
/// `curves.csv` and one `rate_quality_<codec>.svg` per codec to
/// `opts.out_dir`.
pub fn run_benchmark(manifest: &DatasetManifest, prefilter: &Prefilter, opts: &BenchOptions) -> Result<BenchReport> {
    if manifest.is_empty() {
        return Err(Error::Config {
            field: "manifest",
            reason: "manifest has no entries".into(),
        });
    }
    if opts.codecs.is_empty() || opts.modes.is_empty() {
        return Err(Error::Config {
            field: "codecs/modes",
            reason: "need at least one codec and one mode".into(),
        });
    }
    let mut codecs = Vec::new();
    for name in &opts.codecs {
        if opts.qualities_for(name).is_empty() {
            return Err(Error::Config {
                field: "qualities",
                reason: format!("no quality parameters for codec {name}"),
            });
        }
        codecs.push((name.clone(), resolve_codec(name, &opts.templates)?));
    }
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| Error::io(&opts.out_dir, e))?;
    let jsonl = opts.out_dir.join("records.jsonl");
    let appender = Appender::create(jsonl.clone())?;
    let job = Job {
        prefilter,
        codecs: &codecs,
        opts,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::Eval(format!("worker pool: {e}")))?;
    let mut records: Vec<BenchRecord> = pool.install(|| {
        manifest
            .entries
            .par_iter()
            .map(|entry| {
                let recs = job.run_entry(entry);
                appender.append(&recs)?;
                for r in recs.iter().filter(|r| r.error.is_some()) {
                    log::warn!("{} {}: {}", r.id, r.label, r.error.as_deref().unwrap_or_default());
                }
                Ok(recs)
            })
            .collect::<Result<Vec<_>>>()
    })?
    .into_iter()
    .flatten()
    .collect();
    drop(appender);

    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let mut body = String::new();
    for r in &records {
        body.push_str(&serde_json::to_string(r).expect("record serializes"));
        body.push('\n');
    }
    std::fs::write(&jsonl, body).map_err(|e| Error::io(&jsonl, e))?;

    let summary = summarize(manifest, &records, opts)?;
    write_json(&opts.out_dir.join("summary.json"), &summary)?;
    write_curves_csv(&opts.out_dir.join("curves.csv"), &summary.curves)?;
    let y_label = if opts.accuracy.is_some() { "accuracy" } else { "fidelity proxy" };
    for (name, _) in &codecs {
        let curves: Vec<RateQualityCurve> = summary
            .curves
            .iter()
            .filter(|c| &c.codec == name)
            .filter_map(|c| curve_from_summary(c).ok())
            .collect();
        let path = opts.out_dir.join(format!("rate_quality_{name}.svg"));
        std::fs::write(&path, render_svg(name, y_label, &curves)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(BenchReport { records, summary })
}

fn curve_from_summary(c: &CurveSummary) -> Result<RateQualityCurve> {
    RateQualityCurve::new(
        c.mode.clone(),
        c.points
            .iter()
            .map(|p| RateQualityPoint {
                bpp: p.bpp,
                quality: p.quality,
            })
            .collect(),
    )
}

/// Averages records into per-(codec, mode) curves and BD-rates. Records
/// are reduced in sorted order so the result does not depend on worker
/// scheduling.
pub fn summarize(manifest: &DatasetManifest, records: &[BenchRecord], opts: &BenchOptions) -> Result<BenchSummary> {
    let mut sorted: Vec<&BenchRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let n_entries = manifest.len();
    let mut curves = Vec::new();
    let mut ms_acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in &sorted {
        if let Some(ms) = r.prefilter_ms {
            let e = ms_acc.entry(r.mode.clone()).or_default();
            e.0 += ms;
            e.1 += 1;
        }
    }
    for codec in &opts.codecs {
        for mode in &opts.modes {
            let mode_s = mode.to_string();
            let mut points = Vec::new();
            for &q in opts.qualities_for(codec) {
                let ok: Vec<&&BenchRecord> = sorted
                    .iter()
                    .filter(|r| &r.codec == codec && r.mode == mode_s && r.quality_param == q && r.error.is_none())
                    .collect();
                if ok.len() != n_entries {
                    log::warn!("{}: {} of {n_entries} entries succeeded; point dropped", run_label(codec, mode, q), ok.len());
                    continue;
                }
                let bpp = ok.iter().filter_map(|r| r.bpp).sum::<f64>() / n_entries as f64;
                let quality = match &opts.accuracy {
                    Some(acc) => match acc.get(&run_label(codec, mode, q)) {
                        Some(&a) => a,
                        None => {
                            log::warn!("no accuracy for {}; point dropped", run_label(codec, mode, q));
                            continue;
                        }
                    },
                    None => ok.iter().filter_map(|r| r.fidelity).sum::<f64>() / n_entries as f64,
                };
                points.push(CurvePointSummary {
                    quality_param: q,
                    bpp,
                    quality,
                });
            }
            points.sort_by(|a, b| a.bpp.total_cmp(&b.bpp));
            curves.push(CurveSummary {
                codec: codec.clone(),
                mode: mode_s,
                points,
            });
        }
    }
    let anchor_s = opts.anchor.to_string();
    let mut bd_rates = Vec::new();
    for codec in &opts.codecs {
        let find = |m: &str| curves.iter().find(|c| &c.codec == codec && c.mode == m);
        let anchor_curve = find(&anchor_s).map(curve_from_summary);
        for c in curves.iter().filter(|c| &c.codec == codec && c.mode != anchor_s) {
            let value = match &anchor_curve {
                None => Err(Error::Eval(format!("anchor mode {anchor_s} was not run"))),
                Some(Err(e)) => Err(Error::Eval(format!("anchor curve: {e}"))),
                Some(Ok(a)) => curve_from_summary(c).and_then(|t| bd_rate_with(a, &t, opts.interpolation)),
            };
            bd_rates.push(BdRow {
                codec: codec.clone(),
                mode: c.mode.clone(),
                anchor: anchor_s.clone(),
                bd_rate: value.as_ref().ok().copied(),
                error: value.err().map(|e| e.to_string()),
            });
        }
    }
    let unmatched = match &opts.accuracy {
        Some(acc) => {
            let labels: HashSet<String> = records.iter().map(|r| r.label.clone()).collect();
            let u: Vec<String> = unmatched_labels(acc, &labels).into_iter().map(str::to_owned).collect();
            if !u.is_empty() {
                log::warn!("accuracy labels without a matching run: {}", u.join(", "));
            }
            u
        }
        None => Vec::new(),
    };
    Ok(BenchSummary {
        entries: n_entries,
        records: records.len(),
        failed_records: records.iter().filter(|r| r.error.is_some()).count(),
        quality_source: if opts.accuracy.is_some() { "accuracy" } else { "fidelity_proxy" }.into(),
        interpolation: opts.interpolation,
        anchor: anchor_s,
        mean_prefilter_ms: ms_acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect(),
        curves,
        bd_rates,
        unmatched_accuracy_labels: unmatched,
    })
}

fn write_curves_csv(path: &Path, curves: &[CurveSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Eval(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| Error::Eval(format!("{}: {e}", path.display()));
    w.write_record(["codec", "mode", "quality_param", "bpp", "quality"]).map_err(io)?;
    for c in curves {
        for p in &c.points {
            w.write_record([
                c.codec.clone(),
                c.mode.clone(),
                p.quality_param.to_string(),
                p.bpp.to_string(),
                p.quality.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `curves.csv` back into labeled curves, grouped by codec.
pub fn read_curves_csv(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<RateQualityCurve>>> {
    let path = path.as_ref();
    let bad = |reason: String| Error::Parse {
        what: path.display().to_string(),
        reason,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let mut grouped: BTreeMap<(String, String), Vec<RateQualityPoint>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() < 5 {
            return Err(bad(format!("short row {rec:?}")));
        }
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(format!("bad number {:?}", &rec[i])));
        grouped
            .entry((rec[0].to_owned(), rec[1].to_owned()))
            .or_default()
            .push(RateQualityPoint {
                bpp: num(3)?,
                quality: num(4)?,
            });
    }
    let mut out: BTreeMap<String, Vec<RateQualityCurve>> = BTreeMap::new();
    for ((codec, mode), pts) in grouped {
        out.entry(codec).or_default().push(RateQualityCurve::new(mode, pts)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_parsing_and_labels() {
        assert_eq!("none".parse::<Mode>().unwrap(), Mode::None);
        assert_eq!("Prefilter".parse::<Mode>().unwrap(), Mode::Prefilter);
        assert_eq!("gaussian:0.2".parse::<Mode>().unwrap(), Mode::Gaussian(0.2));
        assert_eq!("global_gaussian(3)".parse::<Mode>().unwrap(), Mode::Gaussian(3.0));
        assert_eq!("downsample:1/2".parse::<Mode>().unwrap(), Mode::Downsample(0.5));
        assert_eq!(Mode::Downsample(1.0 / 3.0).to_string(), "downsample-0.3333");
        assert_eq!(Mode::Gaussian(0.2).to_string(), "gaussian-0.2");
        assert_eq!("gaussian-0.2".parse::<Mode>().unwrap(), Mode::Gaussian(0.2));
        assert!("downsample:2".parse::<Mode>().is_err());
        assert!("sharpen:1".parse::<Mode>().is_err());
        assert_eq!(run_label("jpeg", &Mode::Prefilter, 50), "jpeg/prefilter/q50");
    }
}
