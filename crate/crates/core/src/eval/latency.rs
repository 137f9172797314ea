use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::pipeline::Prefilter;

pub const MIN_LATENCY_SAMPLES: usize = 30;

/// Mean and normal-approximation 95% interval of per-image latency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyStats {
    pub n: usize,
    pub mean_ms: f64,
    pub sd_ms: f64,
    pub ci_low_ms: f64,
    pub ci_high_ms: f64,
}

impl LatencyStats {
    pub fn from_samples(samples_ms: &[f64]) -> Result<Self> {
        let n = samples_ms.len();
        if n < 2 {
            return Err(Error::Eval("need at least two latency samples".into()));
        }
        let mean = samples_ms.iter().sum::<f64>() / n as f64;
        let var = samples_ms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        let half = 1.96 * sd / (n as f64).sqrt();
        Ok(Self {
            n,
            mean_ms: mean,
            sd_ms: sd,
            ci_low_ms: mean - half,
            ci_high_ms: mean + half,
        })
    }

    pub fn half_width_ms(&self) -> f64 {
        (self.ci_high_ms - self.ci_low_ms) / 2.0
    }
}

/// Times the prefiltering stage (tile, embed, score, filter) per image.
/// One untimed warm-up run precedes the measurement.
pub fn bench_latency(prefilter: &Prefilter, inputs: &[(Image, String)]) -> Result<LatencyStats> {
    if inputs.len() < MIN_LATENCY_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "latency benchmark needs >= {MIN_LATENCY_SAMPLES} images, got {}",
            inputs.len()
        )));
    }
    prefilter.run(&inputs[0].0, &inputs[0].1)?;
    let mut samples = Vec::with_capacity(inputs.len());
    for (img, prompt) in inputs {
        let t0 = Instant::now();
        let out = prefilter.run(img, prompt)?;
        samples.push(t0.elapsed().as_secs_f64() * 1e3);
        drop(out);
    }
    LatencyStats::from_samples(&samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_known_values() {
        let s = LatencyStats::from_samples(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean_ms, 2.5);
        assert!((s.sd_ms - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((s.half_width_ms() - 1.96 * s.sd_ms / 2.0).abs() < 1e-12);
        assert!(s.ci_low_ms < s.mean_ms && s.mean_ms < s.ci_high_ms);
    }
}
