//! Codec adapters: a built-in baseline JPEG and command-template driven
//! external encoders (HEVC, VVC, or anything with a CLI).

use std::path::{Path, PathBuf};
use std::process::Command;

use jpeg_encoder::{ChromaSubsamplingMethod, ColorType, Encoder as JpegEncoder, SamplingFactor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

pub const HEVC_BIN_ENV: &str = "SEMFILTER_HEVC_BIN";
pub const VVC_BIN_ENV: &str = "SEMFILTER_VVC_BIN";
pub const VVC_DEC_BIN_ENV: &str = "SEMFILTER_VVC_DEC_BIN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvocationMode {
    Builtin,
    ExternalProcess,
}

#[derive(Debug, Clone)]
pub struct EncodeResult {
    pub bitstream: Vec<u8>,
    /// Bits per pixel of the encoded raster.
    pub bpp: f64,
    pub quality_param: i32,
    pub reconstructed: Image,
}

/// `8 * bytes / (width * height)`.
pub fn bits_per_pixel(bytes: usize, width: usize, height: usize) -> f64 {
    8.0 * bytes as f64 / (width * height) as f64
}

pub trait Codec: Send + Sync {
    fn name(&self) -> &str;

    /// Inclusive range of the quality parameter.
    fn quality_range(&self) -> (i32, i32);

    /// True for quality factors (JPEG), false for quantization parameters.
    fn higher_is_better(&self) -> bool;

    fn mode(&self) -> InvocationMode;

    /// File extension for persisted bitstreams.
    fn bitstream_ext(&self) -> &str {
        "bin"
    }

    fn encode(&self, img: &Image, quality: i32) -> Result<EncodeResult>;
}

fn check_quality(codec: &dyn Codec, quality: i32) -> Result<()> {
    let (lo, hi) = codec.quality_range();
    if (lo..=hi).contains(&quality) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{} quality parameter {quality} outside {lo}..={hi}",
            codec.name()
        )))
    }
}

pub fn encode(codec: &dyn Codec, img: &Image, quality: i32) -> Result<EncodeResult> {
    check_quality(codec, quality)?;
    let res = codec.encode(img, quality)?;
    if res.reconstructed.dims() != img.dims() {
        return Err(Error::codec(
            codec.name(),
            format!(
                "decoded {}x{} from a {}x{} input",
                res.reconstructed.width(),
                res.reconstructed.height(),
                img.width(),
                img.height()
            ),
        ));
    }
    Ok(res)
}

/// Encodes at each parameter, preserving order.
pub fn measure_sweep(codec: &dyn Codec, img: &Image, params: &[i32]) -> Result<Vec<EncodeResult>> {
    if params.is_empty() {
        return Err(Error::InvalidInput("empty quality parameter list".into()));
    }
    params.iter().map(|&q| encode(codec, img, q)).collect()
}

/// Baseline JPEG, 4:2:0 with box-averaged chroma and the standard Huffman
/// tables.
#[derive(Debug, Clone, Copy, Default)]
pub struct JpegCodec;

impl Codec for JpegCodec {
    fn name(&self) -> &str {
        "jpeg"
    }

    fn quality_range(&self) -> (i32, i32) {
        (1, 100)
    }

    fn higher_is_better(&self) -> bool {
        true
    }

    fn mode(&self) -> InvocationMode {
        InvocationMode::Builtin
    }

    fn bitstream_ext(&self) -> &str {
        "jpg"
    }

    fn encode(&self, img: &Image, quality: i32) -> Result<EncodeResult> {
        check_quality(self, quality)?;
        let (w, h) = (u16::try_from(img.width()), u16::try_from(img.height()));
        let (Ok(w), Ok(h)) = (w, h) else {
            return Err(Error::codec("jpeg", "dimensions exceed 65535"));
        };
        let mut bitstream = Vec::new();
        let mut enc = JpegEncoder::new(&mut bitstream, quality as u8);
        enc.set_sampling_factor(SamplingFactor::R_4_2_0);
        enc.set_chroma_subsampling_method(ChromaSubsamplingMethod::Average);
        enc.encode(img.data(), w, h, ColorType::Rgb)
            .map_err(|e| Error::codec("jpeg", e.to_string()))?;
        let reconstructed = Image::decode(&bitstream).map_err(|e| Error::codec("jpeg", format!("decode: {e}")))?;
        Ok(EncodeResult {
            bpp: bits_per_pixel(bitstream.len(), img.width(), img.height()),
            bitstream,
            quality_param: quality,
            reconstructed,
        })
    }
}

/// Raster handed to / read back from an external tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RasterFormat {
    Png,
    /// Planar 8-bit 4:2:0, BT.601 limited range.
    Yuv420,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandTemplate {
    pub cmd: String,
    #[serde(default)]
    pub args: Vec<String>,
}

/// Config-file description of an external codec. Arguments may use the
/// placeholders `{bin}`, `{decoder_bin}`, `{input}`, `{output}`, `{qp}`,
/// `{width}` and `{height}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecTemplate {
    pub name: String,
    /// Explicit encoder binary; overrides `bin_env`.
    #[serde(default)]
    pub bin: Option<String>,
    #[serde(default)]
    pub bin_env: Option<String>,
    #[serde(default)]
    pub decoder_bin: Option<String>,
    #[serde(default)]
    pub decoder_bin_env: Option<String>,
    pub quality_min: i32,
    pub quality_max: i32,
    #[serde(default)]
    pub higher_is_better: bool,
    #[serde(default = "default_raster")]
    pub raster: RasterFormat,
    #[serde(default = "default_ext")]
    pub bitstream_ext: String,
    pub encode: CommandTemplate,
    pub decode: CommandTemplate,
}

fn default_raster() -> RasterFormat {
    RasterFormat::Yuv420
}

fn default_ext() -> String {
    "bin".into()
}

impl CodecTemplate {
    /// HEVC through an ffmpeg build with libx265; `SEMFILTER_HEVC_BIN`
    /// names the ffmpeg binary.
    pub fn hevc() -> Self {
        let s = |v: &[&str]| v.iter().map(|a| a.to_string()).collect::<Vec<_>>();
        Self {
            name: "hevc".into(),
            bin: None,
            bin_env: Some(HEVC_BIN_ENV.into()),
            decoder_bin: None,
            decoder_bin_env: None,
            quality_min: 0,
            quality_max: 51,
            higher_is_better: false,
            raster: RasterFormat::Yuv420,
            bitstream_ext: "hevc".into(),
            encode: CommandTemplate {
                cmd: "{bin}".into(),
                args: s(&[
                    "-y", "-loglevel", "error", "-f", "rawvideo", "-pix_fmt", "yuv420p", "-s", "{width}x{height}",
                    "-i", "{input}", "-c:v", "libx265", "-preset", "medium", "-x265-params",
                    "qp={qp}:log-level=error", "-frames:v", "1", "-f", "hevc", "{output}",
                ]),
            },
            decode: CommandTemplate {
                cmd: "{bin}".into(),
                args: s(&["-y", "-loglevel", "error", "-i", "{input}", "-f", "rawvideo", "-pix_fmt", "yuv420p", "{output}"]),
            },
        }
    }

    /// VVC through `vvencapp` / `vvdecapp`.
    pub fn vvc() -> Self {
        let s = |v: &[&str]| v.iter().map(|a| a.to_string()).collect::<Vec<_>>();
        Self {
            name: "vvc".into(),
            bin: None,
            bin_env: Some(VVC_BIN_ENV.into()),
            decoder_bin: None,
            decoder_bin_env: Some(VVC_DEC_BIN_ENV.into()),
            quality_min: 0,
            quality_max: 63,
            higher_is_better: false,
            raster: RasterFormat::Yuv420,
            bitstream_ext: "266".into(),
            encode: CommandTemplate {
                cmd: "{bin}".into(),
                args: s(&[
                    "-i", "{input}", "-s", "{width}x{height}", "-c", "yuv420", "-r", "1", "-f", "1", "--preset",
                    "medium", "-q", "{qp}", "-o", "{output}",
                ]),
            },
            decode: CommandTemplate {
                cmd: "{decoder_bin}".into(),
                args: s(&["-b", "{input}", "-d", "8", "-o", "{output}"]),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExternalCodec {
    template: CodecTemplate,
}

impl ExternalCodec {
    pub fn new(template: CodecTemplate) -> Result<Self> {
        if template.quality_min > template.quality_max {
            return Err(Error::Config {
                field: "codec.quality_min",
                reason: format!("{} > {}", template.quality_min, template.quality_max),
            });
        }
        Ok(Self { template })
    }

    pub fn template(&self) -> &CodecTemplate {
        &self.template
    }

    fn resolve(&self, explicit: &Option<String>, env: &Option<String>, role: &str) -> Result<String> {
        if let Some(b) = explicit {
            return Ok(b.clone());
        }
        match env {
            Some(var) => std::env::var(var).map_err(|_| {
                Error::codec(
                    &self.template.name,
                    format!("{role} binary not configured; set {var} to its path"),
                )
            }),
            None => Err(Error::codec(
                &self.template.name,
                format!("no {role} binary: template sets neither a path nor an env var"),
            )),
        }
    }

    fn hint(&self) -> String {
        self.template
            .bin_env
            .as_ref()
            .map(|v| format!(" (check {v})"))
            .unwrap_or_default()
    }

    fn run(&self, tpl: &CommandTemplate, vars: &[(&str, String)]) -> Result<()> {
        let expand = |s: &str| vars.iter().fold(s.to_owned(), |acc, (k, v)| acc.replace(&format!("{{{k}}}"), v));
        let program = expand(&tpl.cmd);
        let args: Vec<String> = tpl.args.iter().map(|a| expand(a)).collect();
        log::debug!("{}: {program} {}", self.template.name, args.join(" "));
        let out = Command::new(&program).args(&args).output().map_err(|e| {
            Error::codec(
                &self.template.name,
                format!("cannot run {program}: {e}{}", self.hint()),
            )
        })?;
        if !out.status.success() {
            return Err(Error::codec(
                &self.template.name,
                format!(
                    "{program} exited with {}: {}",
                    out.status,
                    String::from_utf8_lossy(&out.stderr).trim()
                ),
            ));
        }
        Ok(())
    }
}

impl Codec for ExternalCodec {
    fn name(&self) -> &str {
        &self.template.name
    }

    fn quality_range(&self) -> (i32, i32) {
        (self.template.quality_min, self.template.quality_max)
    }

    fn higher_is_better(&self) -> bool {
        self.template.higher_is_better
    }

    fn mode(&self) -> InvocationMode {
        InvocationMode::ExternalProcess
    }

    fn bitstream_ext(&self) -> &str {
        &self.template.bitstream_ext
    }

    fn encode(&self, img: &Image, quality: i32) -> Result<EncodeResult> {
        check_quality(self, quality)?;
        let t = &self.template;
        let bin = self.resolve(&t.bin, &t.bin_env, "encoder")?;
        let decoder_bin = if t.decode.cmd.contains("{decoder_bin}") || t.decode.args.iter().any(|a| a.contains("{decoder_bin}")) {
            self.resolve(&t.decoder_bin, &t.decoder_bin_env, "decoder")?
        } else {
            bin.clone()
        };
        if !bin.contains('/') || Path::new(&bin).exists() {
            // bare names are looked up on PATH by the OS
        } else {
            return Err(Error::codec(&t.name, format!("encoder binary {bin} does not exist{}", self.hint())));
        }
        let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let ext = match t.raster {
            RasterFormat::Png => "png",
            RasterFormat::Yuv420 => "yuv",
        };
        let input = dir.path().join(format!("input.{ext}"));
        let stream = dir.path().join(format!("stream.{}", t.bitstream_ext));
        let decoded = dir.path().join(format!("decoded.{ext}"));
        match t.raster {
            RasterFormat::Png => img.save_png(&input)?,
            RasterFormat::Yuv420 => write_file(&input, &rgb_to_yuv420(img))?,
        }
        let path_str = |p: &PathBuf| p.to_string_lossy().into_owned();
        let common = |i: &PathBuf, o: &PathBuf| {
            vec![
                ("bin", bin.clone()),
                ("decoder_bin", decoder_bin.clone()),
                ("input", path_str(i)),
                ("output", path_str(o)),
                ("qp", quality.to_string()),
                ("width", img.width().to_string()),
                ("height", img.height().to_string()),
            ]
        };
        self.run(&t.encode, &common(&input, &stream))?;
        let bitstream = std::fs::read(&stream).map_err(|e| Error::codec(&t.name, format!("no bitstream at {}: {e}", stream.display())))?;
        if bitstream.is_empty() {
            return Err(Error::codec(&t.name, "encoder produced an empty bitstream"));
        }
        self.run(&t.decode, &common(&stream, &decoded))?;
        let raw = std::fs::read(&decoded).map_err(|e| Error::codec(&t.name, format!("no decoder output: {e}")))?;
        let reconstructed = match t.raster {
            RasterFormat::Png => Image::decode(&raw).map_err(|e| Error::codec(&t.name, format!("decoder output: {e}")))?,
            RasterFormat::Yuv420 => yuv420_to_rgb(&raw, img.width(), img.height())
                .map_err(|e| Error::codec(&t.name, format!("decoder output: {e}")))?,
        };
        if reconstructed.dims() != img.dims() {
            return Err(Error::codec(&t.name, "decoded dimensions differ from the input"));
        }
        Ok(EncodeResult {
            bpp: bits_per_pixel(bitstream.len(), img.width(), img.height()),
            bitstream,
            quality_param: quality,
            reconstructed,
        })
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Looks a codec up by name: `jpeg`, `hevc`, `vvc`, or a user template.
/// User templates shadow the built-in names.
pub fn resolve_codec(name: &str, templates: &[CodecTemplate]) -> Result<Box<dyn Codec>> {
    if let Some(t) = templates.iter().find(|t| t.name == name) {
        return Ok(Box::new(ExternalCodec::new(t.clone())?));
    }
    match name {
        "jpeg" => Ok(Box::new(JpegCodec)),
        "hevc" => Ok(Box::new(ExternalCodec::new(CodecTemplate::hevc())?)),
        "vvc" => Ok(Box::new(ExternalCodec::new(CodecTemplate::vvc())?)),
        other => Err(Error::Config {
            field: "codec",
            reason: format!("unknown codec {other:?}"),
        }),
    }
}

fn chroma_dims(w: usize, h: usize) -> (usize, usize) {
    (w.div_ceil(2), h.div_ceil(2))
}

/// BT.601 limited-range RGB to planar 4:2:0, chroma averaged over 2x2.
pub fn rgb_to_yuv420(img: &Image) -> Vec<u8> {
    let (w, h) = img.dims();
    let (cw, ch) = chroma_dims(w, h);
    let mut out = vec![0u8; w * h + 2 * cw * ch];
    let (y_plane, uv) = out.split_at_mut(w * h);
    let (u_plane, v_plane) = uv.split_at_mut(cw * ch);
    let mut u_acc = vec![0.0f64; cw * ch];
    let mut v_acc = vec![0.0f64; cw * ch];
    let mut n = vec![0u32; cw * ch];
    for yy in 0..h {
        for xx in 0..w {
            let [r, g, b] = img.pixel(xx, yy).map(|v| v as f64);
            y_plane[yy * w + xx] = clamp_u8(16.0 + 0.256_788 * r + 0.504_129 * g + 0.097_906 * b);
            let ci = (yy / 2) * cw + xx / 2;
            u_acc[ci] += 128.0 - 0.148_223 * r - 0.290_993 * g + 0.439_216 * b;
            v_acc[ci] += 128.0 + 0.439_216 * r - 0.367_788 * g - 0.071_427 * b;
            n[ci] += 1;
        }
    }
    for i in 0..cw * ch {
        u_plane[i] = clamp_u8(u_acc[i] / n[i] as f64);
        v_plane[i] = clamp_u8(v_acc[i] / n[i] as f64);
    }
    out
}

/// Inverse of [`rgb_to_yuv420`] with nearest-neighbor chroma upsampling.
pub fn yuv420_to_rgb(raw: &[u8], w: usize, h: usize) -> Result<Image> {
    let (cw, ch) = chroma_dims(w, h);
    let need = w * h + 2 * cw * ch;
    if raw.len() < need {
        return Err(Error::Dimension(format!("yuv420 {w}x{h} needs {need} bytes, got {}", raw.len())));
    }
    let (y_plane, rest) = raw.split_at(w * h);
    let (u_plane, v_plane) = rest.split_at(cw * ch);
    Image::from_fn(w, h, |x, y| {
        let ci = (y / 2) * cw + x / 2;
        let yv = 1.164_383 * (y_plane[y * w + x] as f64 - 16.0);
        let u = u_plane[ci] as f64 - 128.0;
        let v = v_plane[ci] as f64 - 128.0;
        [
            clamp_u8(yv + 1.596_027 * v),
            clamp_u8(yv - 0.391_762 * u - 0.812_968 * v),
            clamp_u8(yv + 2.017_232 * u),
        ]
    })
}

#[inline]
fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    fn photo_like(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| {
            let fx = x as f64 / w as f64;
            let fy = y as f64 / h as f64;
            let r = 128.0 + 100.0 * (fx * 9.0).sin() * (fy * 4.0).cos();
            let g = 90.0 + 80.0 * fy + 20.0 * ((x * y) as f64 * 0.01).sin();
            let b = 60.0 + 120.0 * fx;
            [r as u8, g as u8, b as u8]
        })
        .unwrap()
    }

    #[test]
    fn jpeg_rate_grows_with_quality() {
        let img = photo_like(224, 224);
        let hi = encode(&JpegCodec, &img, 95).unwrap();
        let lo = encode(&JpegCodec, &img, 10).unwrap();
        assert!(hi.bpp > lo.bpp);
        assert_eq!(hi.reconstructed.dims(), img.dims());
        assert_eq!(hi.bpp, bits_per_pixel(hi.bitstream.len(), 224, 224));
    }

    #[test]
    fn flat_image_is_cheap() {
        // recorded: 1412 bytes (0.2251 bpp), nearly all of it headers and
        // per-block DC/EOB codes of the standard Huffman tables
        let img = Image::filled(224, 224, [90, 120, 200]).unwrap();
        let r = encode(&JpegCodec, &img, 50).unwrap();
        assert!(r.bpp < 0.23, "bpp {}", r.bpp);
        let busy = encode(&JpegCodec, &photo_like(224, 224), 50).unwrap();
        assert!(r.bpp * 2.0 < busy.bpp, "{} vs {}", r.bpp, busy.bpp);
    }

    #[test]
    fn quality_out_of_range() {
        let img = Image::filled(8, 8, [0, 0, 0]).unwrap();
        assert!(encode(&JpegCodec, &img, 0).is_err());
        assert!(encode(&JpegCodec, &img, 101).is_err());
    }

    #[test]
    fn sweep_preserves_order() {
        let img = photo_like(128, 96);
        let r = measure_sweep(&JpegCodec, &img, &[10, 50, 90]).unwrap();
        let q: Vec<i32> = r.iter().map(|e| e.quality_param).collect();
        assert_eq!(q, vec![10, 50, 90]);
        assert!(r[0].bpp < r[1].bpp && r[1].bpp < r[2].bpp);
        assert!(measure_sweep(&JpegCodec, &img, &[]).is_err());
    }

    #[test]
    fn missing_hevc_binary_names_env_var() {
        std::env::remove_var(HEVC_BIN_ENV);
        let codec = resolve_codec("hevc", &[]).unwrap();
        let img = Image::filled(16, 16, [0, 0, 0]).unwrap();
        let err = encode(codec.as_ref(), &img, 30).unwrap_err().to_string();
        assert!(err.contains(HEVC_BIN_ENV), "{err}");
    }

    #[test]
    fn unknown_codec_is_config_error() {
        let err = resolve_codec("webp2000", &[]).err().unwrap();
        assert_eq!(err.kind(), crate::error::ErrorKind::Config);
    }

    #[test]
    fn yuv_roundtrip_is_close() {
        let img = photo_like(33, 17);
        let raw = rgb_to_yuv420(&img);
        assert_eq!(raw.len(), 33 * 17 + 2 * 17 * 9);
        let back = yuv420_to_rgb(&raw, 33, 17).unwrap();
        let gray = Image::filled(10, 10, [77, 77, 77]).unwrap();
        let g = yuv420_to_rgb(&rgb_to_yuv420(&gray), 10, 10).unwrap();
        assert!(g.data().iter().all(|&v| v.abs_diff(77) <= 1));
        let mean_err: f64 = img
            .data()
            .iter()
            .zip(back.data())
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .sum::<f64>()
            / img.data().len() as f64;
        assert!(mean_err < 12.0, "{mean_err}");
    }
}
