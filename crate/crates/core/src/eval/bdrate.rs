//! Bjøntegaard-Delta rate between two rate-quality curves.
//!
//! Each curve is turned into log10(bpp) as a function of quality, the
//! difference is integrated over the shared quality interval, and the mean
//! log difference is reported as a percentage rate change. Negative values
//! mean the test curve needs fewer bits for the same quality.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::curve::RateQualityCurve;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BdInterpolation {
    /// Monotone piecewise cubic Hermite (Fritsch-Carlson slopes).
    #[default]
    Pchip,
    /// Least-squares cubic polynomial, the original formulation.
    Cubic,
}

impl std::str::FromStr for BdInterpolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pchip" => Ok(Self::Pchip),
            "cubic" => Ok(Self::Cubic),
            other => Err(Error::Config {
                field: "interpolation",
                reason: format!("expected pchip or cubic, got {other:?}"),
            }),
        }
    }
}

/// Piecewise cubic Hermite interpolant with PCHIP slopes.
#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    /// `x` must be strictly increasing, with at least two knots.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(Error::Eval("pchip needs >= 2 matching knots".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Eval("pchip knots must be strictly increasing".into()));
        }
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let m: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = m[0];
            d[1] = m[0];
        } else {
            for k in 1..n - 1 {
                if m[k - 1] * m[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / m[k - 1] + w2 / m[k]);
                }
            }
            d[0] = edge_slope(h[0], h[1], m[0], m[1]);
            d[n - 1] = edge_slope(h[n - 2], h[n - 3], m[n - 2], m[n - 3]);
        }
        Ok(Self { x, y, d })
    }

    fn segment(&self, t: f64) -> usize {
        match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            i => (i - 1).min(self.x.len() - 2),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = self.segment(t);
        let h = self.x[k + 1] - self.x[k];
        let u = (t - self.x[k]) / h;
        let (u2, u3) = (u * u, u * u * u);
        self.y[k] * (2.0 * u3 - 3.0 * u2 + 1.0)
            + h * self.d[k] * (u3 - 2.0 * u2 + u)
            + self.y[k + 1] * (-2.0 * u3 + 3.0 * u2)
            + h * self.d[k + 1] * (u3 - u2)
    }

    /// Exact integral over `[a, b]` within the knot span.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        let n = self.x.len();
        let mut total = 0.0;
        for k in 0..n - 1 {
            let (x0, x1) = (self.x[k], self.x[k + 1]);
            let lo = a.max(x0);
            let hi = b.min(x1);
            if hi <= lo {
                continue;
            }
            let h = x1 - x0;
            let prim = |u: f64| {
                let (u2, u3, u4) = (u * u, u * u * u, u * u * u * u);
                self.y[k] * (u4 / 2.0 - u3 + u)
                    + h * self.d[k] * (u4 / 4.0 - 2.0 * u3 / 3.0 + u2 / 2.0)
                    + self.y[k + 1] * (-u4 / 2.0 + u3)
                    + h * self.d[k + 1] * (u4 / 4.0 - u3 / 3.0)
            };
            total += h * (prim((hi - x0) / h) - prim((lo - x0) / h));
        }
        total
    }
}

/// Three-point one-sided end slope, limited to keep the shape monotone.
fn edge_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() || m0 == 0.0 {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

/// Integral of the least-squares cubic through `(x, y)` over `[a, b]`.
/// The abscissa is centered and scaled before fitting to keep the
/// Vandermonde system well conditioned.
fn cubic_integral(x: &[f64], y: &[f64], a: f64, b: f64) -> Result<f64> {
    if x.len() < 4 {
        return Err(Error::Eval(format!("cubic fit needs >= 4 points, got {}", x.len())));
    }
    let c = x.iter().sum::<f64>() / x.len() as f64;
    let s = x.iter().map(|v| (v - c).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let design = DMatrix::from_fn(x.len(), 4, |r, k| ((x[r] - c) / s).powi(k as i32));
    let rhs = DVector::from_column_slice(y);
    let coef = design
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::Eval(format!("cubic fit failed: {e}")))?;
    let prim = |q: f64| {
        let t = (q - c) / s;
        (0..4).map(|p| coef[p] * t.powi(p as i32 + 1) / (p + 1) as f64).sum::<f64>()
    };
    Ok(s * (prim(b) - prim(a)))
}

fn log_rate_samples(curve: &RateQualityCurve) -> Result<(Vec<f64>, Vec<f64>)> {
    if !curve.is_monotone() {
        return Err(Error::Eval(format!(
            "curve {:?}: quality is not strictly increasing in rate",
            curve.label
        )));
    }
    Ok(curve.points().iter().map(|p| (p.quality, p.bpp.log10())).unzip())
}

/// BD-rate of `test` against `anchor` in percent.
pub fn bd_rate(anchor: &RateQualityCurve, test: &RateQualityCurve) -> Result<f64> {
    bd_rate_with(anchor, test, BdInterpolation::Pchip)
}

pub fn bd_rate_with(anchor: &RateQualityCurve, test: &RateQualityCurve, method: BdInterpolation) -> Result<f64> {
    let (qa, ra) = log_rate_samples(anchor)?;
    let (qt, rt) = log_rate_samples(test)?;
    let (alo, ahi) = anchor.quality_range();
    let (tlo, thi) = test.quality_range();
    let lo = alo.max(tlo);
    let hi = ahi.min(thi);
    if hi <= lo {
        return Err(Error::Eval(format!(
            "quality ranges of {:?} and {:?} do not overlap",
            anchor.label, test.label
        )));
    }
    for (label, q) in [(&anchor.label, &qa), (&test.label, &qt)] {
        let inside = q.iter().filter(|&&v| v >= lo && v <= hi).count();
        if inside < 2 {
            return Err(Error::Eval(format!(
                "curve {label:?} has {inside} point(s) in the shared quality range [{lo}, {hi}]"
            )));
        }
    }
    let (ia, it) = match method {
        BdInterpolation::Pchip => (
            Pchip::new(qa, ra)?.integrate(lo, hi),
            Pchip::new(qt, rt)?.integrate(lo, hi),
        ),
        BdInterpolation::Cubic => (cubic_integral(&qa, &ra, lo, hi)?, cubic_integral(&qt, &rt, lo, hi)?),
    };
    let mean_diff = (it - ia) / (hi - lo);
    Ok((10f64.powf(mean_diff) - 1.0) * 100.0)
}
