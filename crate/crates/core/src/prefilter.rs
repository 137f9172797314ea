//! Score-to-σ mapping and per-block Gaussian smoothing.
//!
//! Each stride x stride block is smoothed on its own: it is padded by
//! mirroring its own border (edge sample not repeated) and convolved rows
//! first, then columns, with a truncated Gaussian of the block's σ. All
//! arithmetic is f64; rounding to 8 bits happens once at the end.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::score::{CellGrid, ScoreGrid};

/// σ per cell, on the same lattice as the score grid.
pub type SigmaGrid = CellGrid;

/// Below this σ the kernel collapses to a delta.
pub const DELTA_SIGMA: f64 = 1e-3;

/// σ = σ₁ · (σ_max / σ₁)^(1 − score), evaluated as σ_max^(1−score) · σ₁^score
/// so both endpoints come out exact.
#[inline]
pub fn sigma_for_score(score: f64, sigma_one: f64, sigma_max: f64) -> f64 {
    sigma_max.powf(1.0 - score) * sigma_one.powf(score)
}

pub fn sigma_map(scores: &ScoreGrid, sigma_one: f64, sigma_max: f64) -> Result<SigmaGrid> {
    if !(sigma_one > 0.0 && sigma_one < sigma_max && sigma_max.is_finite()) {
        return Err(Error::Config {
            field: "sigma_one/sigma_max",
            reason: format!("need 0 < sigma_one < sigma_max, got {sigma_one}, {sigma_max}"),
        });
    }
    Ok(scores.map(|s| sigma_for_score(s, sigma_one, sigma_max)))
}

/// Normalized, symmetric 1-D Gaussian taps.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    weights: Vec<f64>,
}

impl GaussianKernel {
    pub fn new(sigma: f64, size: usize) -> Result<Self> {
        if size < 3 || size % 2 == 0 {
            return Err(Error::InvalidInput(format!("kernel size {size} must be odd and >= 3")));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidInput(format!("sigma {sigma} must be finite and >= 0")));
        }
        let c = (size - 1) / 2;
        if sigma < DELTA_SIGMA {
            let mut weights = vec![0.0; size];
            weights[c] = 1.0;
            return Ok(Self { weights });
        }
        let raw: Vec<f64> = (0..size)
            .map(|i| {
                let d = i as f64 - c as f64;
                (-(d * d) / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        Ok(Self {
            weights: raw.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn size(&self) -> usize {
        self.weights.len()
    }

    pub fn radius(&self) -> usize {
        (self.weights.len() - 1) / 2
    }

    pub fn is_delta(&self) -> bool {
        self.weights[self.radius()] == 1.0
    }
}

pub fn make_kernel(sigma: f64, size: usize) -> Result<GaussianKernel> {
    GaussianKernel::new(sigma, size)
}

/// Mirror index into `0..n` without repeating the edge sample.
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    debug_assert!((0..n).contains(&r), "reflection out of range");
    r as usize
}

/// Smooths the `w` x `h` window at `(x0, y0)` using only pixels inside it.
/// Returns the window's interleaved RGB bytes.
fn smooth_window(src: &Image, x0: usize, y0: usize, w: usize, h: usize, kernel: &GaussianKernel) -> Vec<u8> {
    let mut out = vec![0u8; w * h * 3];
    if kernel.is_delta() {
        for y in 0..h {
            let s = ((y0 + y) * src.width() + x0) * 3;
            out[y * w * 3..(y + 1) * w * 3].copy_from_slice(&src.data()[s..s + w * 3]);
        }
        return out;
    }
    let r = kernel.radius() as isize;
    let taps = kernel.weights();
    let data = src.data();
    let stride = src.width() * 3;
    let padded_h = h + 2 * r as usize;
    let mut rows = vec![0.0f64; padded_h * w];
    for c in 0..3 {
        // horizontal pass over every padded row
        for py in 0..padded_h {
            let sy = y0 + reflect(py as isize - r, h);
            let line = &data[sy * stride..];
            for x in 0..w {
                let mut acc = 0.0;
                for (k, &wt) in taps.iter().enumerate() {
                    let sx = x0 + reflect(x as isize + k as isize - r, w);
                    acc += wt * line[sx * 3 + c] as f64;
                }
                rows[py * w + x] = acc;
            }
        }
        // vertical pass
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, &wt) in taps.iter().enumerate() {
                    acc += wt * rows[(y + k) * w + x];
                }
                out[(y * w + x) * 3 + c] = quantize(acc);
            }
        }
    }
    out
}

#[inline]
pub fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Filters every stride x stride block with the Gaussian of its cell's σ.
pub fn filter_blocks(img: &Image, sigmas: &SigmaGrid, kernel_size: usize) -> Result<Image> {
    let s = sigmas.stride;
    if img.dims() != sigmas.pixel_dims() {
        return Err(Error::Dimension(format!(
            "image {}x{} does not match {}x{} cells of {s} px",
            img.width(),
            img.height(),
            sigmas.cells_x,
            sigmas.cells_y
        )));
    }
    let radius = kernel_size.saturating_sub(1) / 2;
    if s < radius + 1 {
        return Err(Error::InvalidInput(format!(
            "stride {s} too small for kernel radius {radius}; reflection needs stride > radius"
        )));
    }
    let kernels = sigmas
        .values
        .iter()
        .map(|&sigma| GaussianKernel::new(sigma, kernel_size))
        .collect::<Result<Vec<_>>>()?;
    let w = img.width();
    let mut out = vec![0u8; img.data().len()];
    out.par_chunks_mut(s * w * 3).enumerate().for_each(|(cy, band)| {
        for cx in 0..sigmas.cells_x {
            let block = smooth_window(img, cx * s, cy * s, s, s, &kernels[cy * sigmas.cells_x + cx]);
            for y in 0..s {
                let dst = (y * w + cx * s) * 3;
                band[dst..dst + s * 3].copy_from_slice(&block[y * s * 3..(y + 1) * s * 3]);
            }
        }
    });
    Image::new(img.width(), img.height(), out)
}

/// Whole-image Gaussian with reflection at the image border.
pub fn gaussian_blur(img: &Image, sigma: f64, kernel_size: usize) -> Result<Image> {
    let kernel = GaussianKernel::new(sigma, kernel_size)?;
    if img.width() <= kernel.radius() || img.height() <= kernel.radius() {
        return Err(Error::InvalidInput(format!(
            "{}x{} image too small for kernel radius {}",
            img.width(),
            img.height(),
            kernel.radius()
        )));
    }
    let data = smooth_window(img, 0, 0, img.width(), img.height(), &kernel);
    Image::new(img.width(), img.height(), data)
}
