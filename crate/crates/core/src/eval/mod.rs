//! Rate-quality evaluation: curves, BD-rate, fidelity proxy, benchmark
//! harness, latency measurement and plots.

pub mod bdrate;
pub mod bench;
pub mod curve;
pub mod fidelity;
pub mod latency;
pub mod manifest;
pub mod plot;

pub use bdrate::{bd_rate, bd_rate_with, BdInterpolation, Pchip};
pub use bench::{read_curves_csv, run_benchmark, run_label, BenchOptions, BenchRecord, BenchReport, BenchSummary, Mode};
pub use curve::{RateQualityCurve, RateQualityPoint};
pub use fidelity::fidelity_proxy;
pub use latency::{bench_latency, LatencyStats, MIN_LATENCY_SAMPLES};
pub use manifest::{ingest_accuracy, parse_accuracy, unmatched_labels, DatasetManifest, ManifestEntry};
pub use plot::render_svg;
