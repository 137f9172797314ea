//! Tile relevance scores and their aggregation onto the stride grid.

use std::path::Path;

use serde::Serialize;

use crate::embed::Embedding;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::tiler::TileGrid;

/// One value per `stride` x `stride` cell, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellGrid {
    pub cells_x: usize,
    pub cells_y: usize,
    pub stride: usize,
    pub values: Vec<f64>,
}

/// Aggregated relevance per cell. Mean 1 over a partition of tiles.
pub type ScoreGrid = CellGrid;

impl CellGrid {
    pub fn new(cells_x: usize, cells_y: usize, stride: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != cells_x * cells_y {
            return Err(Error::Dimension(format!(
                "{cells_x}x{cells_y} grid needs {} values, got {}",
                cells_x * cells_y,
                values.len()
            )));
        }
        Ok(Self {
            cells_x,
            cells_y,
            stride,
            values,
        })
    }

    pub fn filled(grid: &TileGrid, value: f64) -> Self {
        Self {
            cells_x: grid.cells_x(),
            cells_y: grid.cells_y(),
            stride: grid.stride(),
            values: vec![value; grid.cells_x() * grid.cells_y()],
        }
    }

    #[inline]
    pub fn get(&self, cx: usize, cy: usize) -> f64 {
        self.values[cy * self.cells_x + cx]
    }

    pub fn pixel_dims(&self) -> (usize, usize) {
        (self.cells_x * self.stride, self.cells_y * self.stride)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.cells_x).map(<[f64]>::to_vec).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// Gray heatmap at full raster resolution, `lo` mapped to black and
    /// `hi` to white.
    pub fn heatmap(&self, lo: f64, hi: f64) -> Result<Image> {
        let (w, h) = self.pixel_dims();
        let span = if hi > lo { hi - lo } else { 1.0 };
        Image::from_fn(w, h, |x, y| {
            let v = self.get(x / self.stride, y / self.stride);
            let g = ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8;
            [g, g, g]
        })
    }

    /// Writes `<stem>.png` (heatmap scaled to the grid's own range) and
    /// `<stem>.json` (row-major matrix).
    pub fn dump(&self, stem: &Path) -> Result<()> {
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.dump_range(stem, lo, hi)
    }

    /// Like [`CellGrid::dump`] with a fixed `lo..hi` gray mapping.
    pub fn dump_range(&self, stem: &Path, lo: f64, hi: f64) -> Result<()> {
        self.heatmap(lo, hi)?.save_png(stem.with_extension("png"))?;
        let json = serde_json::json!({
            "cells_x": self.cells_x,
            "cells_y": self.cells_y,
            "stride": self.stride,
            "values": self.rows(),
        });
        let path = stem.with_extension("json");
        std::fs::write(&path, serde_json::to_vec_pretty(&json).expect("plain json"))
            .map_err(|e| Error::io(&path, e))
    }
}

/// Scores `k` tiles against a text: softmax of `logit_scale` times the
/// cosine similarities, multiplied by `k` so the scores sum to `k`.
pub fn score_tiles(text: &Embedding, tiles: &[Embedding], logit_scale: f64) -> Result<Vec<f64>> {
    if tiles.is_empty() {
        return Err(Error::InvalidInput("cannot score zero tiles".into()));
    }
    let logits = tiles
        .iter()
        .map(|t| text.dot(t).map(|c| logit_scale * c))
        .collect::<Result<Vec<f64>>>()?;
    Ok(scaled_softmax(&logits))
}

/// `softmax(logits) * len`, with max-subtraction.
pub fn scaled_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let k = logits.len() as f64;
    exps.into_iter().map(|e| e / total * k).collect()
}

/// Averages tile scores onto the stride grid: each cell receives the mean
/// score of every tile whose footprint contains it.
pub fn aggregate(grid: &TileGrid, scores: &[f64]) -> Result<ScoreGrid> {
    if scores.len() != grid.count() {
        return Err(Error::Dimension(format!(
            "{} scores for {} tiles",
            scores.len(),
            grid.count()
        )));
    }
    let span = grid.tile_size() / grid.stride();
    let (tx, ty) = (grid.tiles_x(), grid.tiles_y());
    let (cx_n, cy_n) = (grid.cells_x(), grid.cells_y());
    // tiles with origin index o cover cells o..o + span
    let covering = |c: usize, tiles: usize| (c + 1).saturating_sub(span)..(c + 1).min(tiles);
    let mut values = Vec::with_capacity(cx_n * cy_n);
    for cy in 0..cy_n {
        for cx in 0..cx_n {
            let mut sum = 0.0;
            let mut n = 0usize;
            for oy in covering(cy, ty) {
                for ox in covering(cx, tx) {
                    sum += scores[oy * tx + ox];
                    n += 1;
                }
            }
            values.push(sum / n as f64);
        }
    }
    CellGrid::new(cx_n, cy_n, grid.stride(), values)
}

/// Score 1 everywhere: the scoring-disabled ablation.
pub fn uniform_scores(grid: &TileGrid) -> ScoreGrid {
    CellGrid::filled(grid, 1.0)
}
