use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One operating point: rate in bits per pixel and a task-quality value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateQualityPoint {
    pub bpp: f64,
    pub quality: f64,
}

impl RateQualityPoint {
    pub fn new(bpp: f64, quality: f64) -> Result<Self> {
        if !(bpp > 0.0 && bpp.is_finite()) {
            return Err(Error::Eval(format!("bpp must be positive and finite, got {bpp}")));
        }
        if !quality.is_finite() {
            return Err(Error::Eval(format!("quality must be finite, got {quality}")));
        }
        Ok(Self { bpp, quality })
    }
}

/// Labeled rate-quality curve with strictly increasing bpp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateQualityCurve {
    pub label: String,
    points: Vec<RateQualityPoint>,
}

impl RateQualityCurve {
    /// Validates and orders by bpp. Duplicate rates are rejected.
    pub fn new(label: impl Into<String>, points: Vec<RateQualityPoint>) -> Result<Self> {
        let label = label.into();
        if points.len() < 2 {
            return Err(Error::Eval(format!("curve {label:?} needs >= 2 points, has {}", points.len())));
        }
        let mut points = points
            .into_iter()
            .map(|p| RateQualityPoint::new(p.bpp, p.quality))
            .collect::<Result<Vec<_>>>()?;
        points.sort_by(|a, b| a.bpp.total_cmp(&b.bpp));
        if let Some(w) = points.windows(2).find(|w| w[0].bpp >= w[1].bpp) {
            return Err(Error::Eval(format!("curve {label:?} repeats bpp {}", w[0].bpp)));
        }
        Ok(Self { label, points })
    }

    pub fn from_pairs(label: impl Into<String>, pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(label, pairs.iter().map(|&(bpp, quality)| RateQualityPoint { bpp, quality }).collect())
    }

    pub fn points(&self) -> &[RateQualityPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn quality_range(&self) -> (f64, f64) {
        let lo = self.points.iter().map(|p| p.quality).fold(f64::INFINITY, f64::min);
        let hi = self.points.iter().map(|p| p.quality).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// True when quality strictly increases with rate.
    pub fn is_monotone(&self) -> bool {
        self.points.windows(2).all(|w| w[1].quality > w[0].quality)
    }
}
